//! Training/evaluation arenas and the two trajectory metrics.
//!
//! Scenario files are JSON documents:
//!
//! ```json
//! {
//!   "name": "circle8-r3",
//!   "params": { "r": 0.1, "d_r": 6.0, "rho": 10.0, "v": 0.5, "dt": 0.1, "d_m": 10.0, "f_in_threshold": 1.0 },
//!   "robots": [ { "start": { "x": 3.0, "y": 0.0 }, "goal": { "x": -3.0, "y": 0.0 } } ],
//!   "obstacles": [
//!     { "kind": "circle", "center": { "x": 1.0, "y": 1.0 }, "radius": 0.5 },
//!     { "kind": "rect", "min": { "x": 0.0, "y": 0.0 }, "max": { "x": 12.0, "y": 12.0 } }
//!   ]
//! }
//! ```
//!
//! `params` may be partial; missing fields take their defaults.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Obstacle, Vec2, WorldParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub start: Vec2,
    pub goal: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub params: WorldParams,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl Scenario {
    /// Starts pairwise at least `2r` apart; starts and goals in free space.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        for o in &self.obstacles {
            o.validate()?;
        }
        let r = self.params.r;
        for (k, a) in self.robots.iter().enumerate() {
            for b in &self.robots[k + 1..] {
                if a.start.distance(b.start) < 2.0 * r {
                    return Err(Error::InvalidParams(format!(
                        "{}: starts {:?} and {:?} closer than 2r",
                        self.name, a.start, b.start
                    )));
                }
            }
            for p in [a.start, a.goal] {
                if self.obstacles.iter().any(|o| o.surface(p).distance < r) {
                    return Err(Error::InvalidParams(format!("{}: {p:?} inside an obstacle", self.name)));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: Scenario = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Side length of the cluttered arena (m).
pub const CLUTTER_ARENA_SIZE: f64 = 12.0;
/// Obstacle lattice: `CLUTTER_GRID x CLUTTER_GRID` circles at this pitch.
pub const CLUTTER_GRID: usize = 6;
pub const CLUTTER_PITCH: f64 = 2.0;
/// Clearance from obstacles required of sampled starts and goals (m).
const CLUTTER_CLEARANCE: f64 = 0.3;
/// Minimum spacing between sampled starts, and between sampled goals (m).
const CLUTTER_SPACING: f64 = 1.0;
/// Minimum start-goal distance (m).
const CLUTTER_MIN_TRIP: f64 = 4.0;
const MAX_SAMPLING_TRIES: usize = 10_000;

/// Fixed circle lattice inside solid arena walls.
pub fn clutter_obstacles(obstacle_radius: f64) -> Vec<Obstacle> {
    let offset = 0.5 * (CLUTTER_ARENA_SIZE - CLUTTER_PITCH * (CLUTTER_GRID - 1) as f64);
    let mut obstacles: Vec<Obstacle> = (0..CLUTTER_GRID)
        .flat_map(|i| {
            (0..CLUTTER_GRID).map(move |j| {
                Obstacle::circle(
                    Vec2::new(offset + CLUTTER_PITCH * i as f64, offset + CLUTTER_PITCH * j as f64),
                    obstacle_radius,
                )
            })
        })
        .collect();
    obstacles.push(Obstacle::rect(
        Vec2::ZERO,
        Vec2::new(CLUTTER_ARENA_SIZE, CLUTTER_ARENA_SIZE),
    ));
    obstacles
}

/// Random starts and goals among the obstacle lattice.
pub fn gen_cluttered<R: Rng + ?Sized>(rng: &mut R, n_robots: usize, obstacle_radius: f64) -> Result<Scenario> {
    let obstacles = clutter_obstacles(obstacle_radius);
    let mut tries = 0;
    let mut sample_free = |rng: &mut R, taken: &[Vec2]| -> Result<Vec2> {
        loop {
            tries += 1;
            if tries > MAX_SAMPLING_TRIES {
                return Err(Error::SamplingExhausted(MAX_SAMPLING_TRIES));
            }
            let p = Vec2::new(
                rng.gen_range(0.0..CLUTTER_ARENA_SIZE),
                rng.gen_range(0.0..CLUTTER_ARENA_SIZE),
            );
            let clear = obstacles.iter().all(|o| o.surface(p).distance >= CLUTTER_CLEARANCE);
            let spaced = taken.iter().all(|q| q.distance(p) >= CLUTTER_SPACING);
            if clear && spaced {
                return Ok(p);
            }
        }
    };
    let mut starts = Vec::with_capacity(n_robots);
    let mut goals = Vec::with_capacity(n_robots);
    for _ in 0..n_robots {
        let s = sample_free(rng, &starts)?;
        starts.push(s);
    }
    for &s in &starts {
        let g = loop {
            let g = sample_free(rng, &goals)?;
            if g.distance(s) >= CLUTTER_MIN_TRIP {
                break g;
            }
        };
        goals.push(g);
    }
    let scenario = Scenario {
        name: format!("cluttered{n_robots}"),
        params: WorldParams::default(),
        robots: starts
            .into_iter()
            .zip(goals)
            .map(|(start, goal)| RobotSpec { start, goal })
            .collect(),
        obstacles,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Fraction of the angular spacing used as the maximum start jitter.
pub const SWAP_JITTER_FRACTION: f64 = 0.1;

/// Robots evenly spaced on a circle about the origin, each heading for its
/// antipode. With `rng`, every start angle is jittered by up to
/// [`SWAP_JITTER_FRACTION`] of the spacing; goals stay exact antipodes.
pub fn gen_circle_swap<R: Rng + ?Sized>(n_robots: usize, radius: f64, rng: Option<&mut R>) -> Result<Scenario> {
    if n_robots < 2 || !(radius > 0.0) {
        return Err(Error::InvalidParams(format!(
            "circle swap with n={n_robots}, radius={radius}"
        )));
    }
    let spacing = TAU / n_robots as f64;
    let jitter: Vec<f64> = match rng {
        Some(rng) => {
            let amp = SWAP_JITTER_FRACTION * spacing;
            (0..n_robots).map(|_| rng.gen_range(-amp..=amp)).collect()
        }
        None => vec![0.0; n_robots],
    };
    let robots = (0..n_robots)
        .map(|k| {
            let start = Vec2::from_angle(spacing * k as f64 + jitter[k]) * radius;
            RobotSpec { start, goal: -start }
        })
        .collect();
    let scenario = Scenario {
        name: format!("circle{n_robots}-r{radius}"),
        params: WorldParams::default(),
        robots,
        obstacles: Vec::new(),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Per-robot metric values and their mean.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_robot: Vec<f64>,
    pub mean: f64,
}

impl MetricReport {
    fn from_values(per_robot: Vec<f64>) -> Self {
        let mean = if per_robot.is_empty() {
            0.0
        } else {
            per_robot.iter().sum::<f64>() / per_robot.len() as f64
        };
        Self { per_robot, mean }
    }
}

/// Total path length `sum_t |v(t)| dt` of each trail, i.e. the sum of its
/// step displacements.
pub fn traveling_distance(trails: &[Vec<Vec2>]) -> MetricReport {
    MetricReport::from_values(
        trails
            .iter()
            .map(|t| t.windows(2).map(|w| w[0].distance(w[1])).sum())
            .collect(),
    )
}

/// `(sum_t |v(t+1) - v(t)| / |v(t)|) / T` per trail, `T` being the number
/// of steps taken. Trails with fewer than two steps score zero.
pub fn motion_smoothness(trails: &[Vec<Vec2>]) -> MetricReport {
    MetricReport::from_values(
        trails
            .iter()
            .map(|t| {
                let v: Vec<Vec2> = t.windows(2).map(|w| w[1] - w[0]).collect();
                if v.len() < 2 {
                    return 0.0;
                }
                let total: f64 = v
                    .windows(2)
                    .filter(|w| w[0].norm() > 0.0)
                    .map(|w| (w[1] - w[0]).norm() / w[0].norm())
                    .sum();
                total / v.len() as f64
            })
            .collect(),
    )
}
