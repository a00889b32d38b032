//! Synchronous multi-robot stepping under heading-only, constant-speed
//! kinematics, plus episode runners and trajectory export.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::apf::{compute_forces, ApfParams, ForceBreakdown};
use crate::error::{Error, Result};
use crate::geometry::{
    collision_check, nearest_obstacle_point, visible_neighbors, CollisionEvent, Obstacle, RobotState, Status, Vec2,
    WorldParams, EPS,
};
use crate::observation::{build_observation, NormalizedObservation};
use crate::ppo::PolicyBundle;
use crate::reward::{
    goal_reward, obstacle_proximity_penalty, progress_reward, robot_collision_penalty, smoothness_penalty,
    RewardBreakdown,
};
use crate::scenario::{motion_smoothness, traveling_distance, MetricReport, Scenario};
use crate::wall_following::{plan_direction, tangent_pair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Policy-tuned potential field with soft wall-following.
    Rpf,
    /// Fixed-scale potential field.
    VanillaApf,
    /// Policy steers the heading directly.
    VanillaPpo,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rpf" => Ok(Mode::Rpf),
            "vanilla_apf" | "apf" => Ok(Mode::VanillaApf),
            "vanilla_ppo" | "ppo" => Ok(Mode::VanillaPpo),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Rpf => "rpf",
            Mode::VanillaApf => "vanilla_apf",
            Mode::VanillaPpo => "vanilla_ppo",
        })
    }
}

/// What a robot does this step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decision {
    /// Potential field with the given scales.
    Field(ApfParams),
    /// Lateral steering gain applied to the current heading.
    Steer(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub world: WorldParams,
    pub seed: u64,
    pub max_steps: usize,
    pub mode: Mode,
    /// Field scales for [`Mode::VanillaApf`].
    pub apf: ApfParams,
    /// Disabling leaves the raw resultant as the heading.
    pub wall_following: bool,
    /// Use the policy mean instead of sampling.
    pub deterministic: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            world: WorldParams::default(),
            seed: 0,
            max_steps: 1000,
            mode: Mode::VanillaApf,
            apf: ApfParams::VANILLA,
            wall_following: true,
            deterministic: true,
        }
    }
}

/// Heading-only steering: `normalize(v + a * perp(v))`.
pub fn vanilla_ppo_direction(v_current: Vec2, a_t: f64) -> Vec2 {
    let v = v_current.unit().unwrap_or(Vec2::new(1.0, 0.0));
    (v + v.perp() * a_t).unit().unwrap_or(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotStepRecord {
    pub robot_id: usize,
    pub position: Vec2,
    pub heading: f64,
    pub status: Status,
    /// Raw action values when the robot acted: `(eta, lambda)` or the steering gain.
    pub action: Option<Vec<f64>>,
    pub forces: Option<ForceBreakdown>,
    pub reward: Option<RewardBreakdown>,
    /// Robot arrived during this step.
    pub arrived: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub robots: Vec<RobotStepRecord>,
    pub events: Vec<CollisionEvent>,
}

/// Mutable world state advanced by [`World::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub params: WorldParams,
    pub obstacles: Vec<Obstacle>,
    pub robots: Vec<RobotState>,
    pub steps: usize,
    /// Straight start-goal distances.
    pub straight: Vec<f64>,
    /// Path length travelled so far.
    pub travelled: Vec<f64>,
    pub returns: Vec<f64>,
}

impl World {
    /// Robots already within `r` of their goal are marked arrived at once.
    pub fn new(params: WorldParams, obstacles: Vec<Obstacle>, starts_goals: &[(Vec2, Vec2)]) -> Result<Self> {
        params.validate()?;
        for o in &obstacles {
            o.validate()?;
        }
        let robots: Vec<RobotState> = starts_goals
            .iter()
            .enumerate()
            .map(|(k, &(s, g))| RobotState::new(k, s, g))
            .collect();
        let n = robots.len();
        let mut world = Self {
            straight: starts_goals.iter().map(|(s, g)| s.distance(*g)).collect(),
            travelled: vec![0.0; n],
            returns: vec![0.0; n],
            params,
            obstacles,
            robots,
            steps: 0,
        };
        for i in 0..n {
            if world.robots[i].goal_distance() < params.r {
                world.robots[i].status = Status::Arrived;
                world.returns[i] += world.arrival_bonus(i);
            }
        }
        Ok(world)
    }

    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        let pairs: Vec<(Vec2, Vec2)> = scenario.robots.iter().map(|r| (r.start, r.goal)).collect();
        Self::new(scenario.params, scenario.obstacles.clone(), &pairs)
    }

    fn arrival_bonus(&self, i: usize) -> f64 {
        let d_s = self.straight[i];
        if self.travelled[i] == 0.0 {
            // started on the goal; d_s may be zero
            goal_reward(0.0, 1.0, true)
        } else {
            goal_reward(self.travelled[i], d_s.max(EPS), true)
        }
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.robots.iter().filter(|r| r.is_active()).map(|r| r.id)
    }

    pub fn is_done(&self) -> bool {
        self.robots.iter().all(|r| !r.is_active())
    }

    /// Normalised observation of robot `i` on the current snapshot.
    pub fn observe(&self, i: usize) -> Result<NormalizedObservation> {
        let (local, neighbors) = build_observation(i, &self.robots, &self.obstacles, &self.params)?;
        Ok(NormalizedObservation::new(&local, &neighbors, &self.params))
    }

    /// Heading robot `i` would take under `decision` on the current snapshot.
    pub fn direction(
        &self,
        i: usize,
        decision: Decision,
        wall_following: bool,
    ) -> Result<(Vec2, Option<ForceBreakdown>)> {
        let robot = &self.robots[i];
        match decision {
            Decision::Steer(a) => Ok((vanilla_ppo_direction(robot.heading_vec(), a), None)),
            Decision::Field(apf) => {
                let nearest = nearest_obstacle_point(robot.position, &self.obstacles, self.params.d_r)?;
                let neighbors = visible_neighbors(i, &self.robots, self.params.d_r);
                let forces = compute_forces(i, &self.robots, nearest, &neighbors, apf, self.params.rho)?;
                let dir = if wall_following {
                    let tangents = match nearest {
                        Some(hit) => Some(tangent_pair(robot.position, hit.point)?),
                        None => None,
                    };
                    plan_direction(&forces, tangents, robot.heading_vec(), self.params.f_in_threshold)
                } else {
                    forces.f_total.unit().unwrap_or(robot.heading_vec())
                };
                Ok((dir, Some(forces)))
            }
        }
    }

    /// Advances one step. `decisions[i]` is consulted for every active robot;
    /// active robots with no decision hold still. All headings are computed
    /// on the pre-step snapshot before anyone moves.
    pub fn step(&mut self, decisions: &[Option<Decision>], wall_following: bool) -> StepRecord {
        let n = self.robots.len();
        let acting: Vec<bool> = self.robots.iter().map(|r| r.is_active()).collect();
        let mut plans: Vec<Option<(Vec2, Option<ForceBreakdown>)>> = vec![None; n];
        let mut penetrated = vec![false; n];
        for i in 0..n {
            if !acting[i] {
                continue;
            }
            if let Some(decision) = decisions.get(i).copied().flatten() {
                match self.direction(i, decision, wall_following) {
                    Ok(plan) => plans[i] = Some(plan),
                    Err(_) => penetrated[i] = true,
                }
            }
        }

        let step_len = self.params.step_length();
        let prev_heading: Vec<f64> = self.robots.iter().map(|r| r.heading).collect();
        for i in 0..n {
            if let Some((dir, _)) = plans[i] {
                let robot = &mut self.robots[i];
                robot.position += dir * step_len;
                robot.heading = dir.angle();
                robot.trail.push(robot.position);
                self.travelled[i] += step_len;
            }
        }

        let events: Vec<CollisionEvent> = collision_check(&self.robots, &self.obstacles, self.params.r)
            .into_iter()
            .filter(|e| match *e {
                CollisionEvent::RobotObstacle { robot, .. } => acting[robot],
                CollisionEvent::RobotRobot { a, b, .. } => acting[a] || acting[b],
            })
            .collect();

        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            let mut arrived = false;
            let mut reward = None;
            if acting[i] {
                let collided = penetrated[i] || events.iter().any(|e| e.involves(i));
                if collided {
                    self.robots[i].status = Status::Collided;
                } else if self.robots[i].goal_distance() < self.params.r {
                    self.robots[i].status = Status::Arrived;
                    arrived = true;
                }
                let d_o = self
                    .obstacles
                    .iter()
                    .map(|o| o.surface(self.robots[i].position).distance)
                    .fold(f64::INFINITY, f64::min);
                let r = RewardBreakdown::new(
                    if arrived { self.arrival_bonus(i) } else { 0.0 },
                    smoothness_penalty(prev_heading[i], self.robots[i].heading),
                    robot_collision_penalty(i, &events),
                    obstacle_proximity_penalty(d_o, self.params.r),
                    progress_reward(self.robots[i].goal_distance(), self.params.d_m),
                );
                self.returns[i] += r.total;
                reward = Some(r);
            }
            let robot = &self.robots[i];
            records.push(RobotStepRecord {
                robot_id: i,
                position: robot.position,
                heading: robot.heading,
                status: robot.status,
                action: plans[i].and(decisions.get(i).copied().flatten()).map(|d| match d {
                    Decision::Field(p) => vec![p.eta, p.lambda],
                    Decision::Steer(a) => vec![a],
                }),
                forces: plans[i].and_then(|p| p.1),
                reward,
                arrived,
            });
        }
        self.steps += 1;
        StepRecord {
            step: self.steps,
            robots: records,
            events,
        }
    }
}

/// Maps a sampled action to a decision for the given mode.
pub fn decision_from_action(mode: Mode, action: &[f64]) -> Decision {
    match mode {
        Mode::VanillaPpo => Decision::Steer(action[0]),
        _ => Decision::Field(ApfParams {
            eta: action[0],
            lambda: action[1],
        }),
    }
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub steps: usize,
    pub trails: Vec<Vec<Vec2>>,
    pub statuses: Vec<Status>,
    pub returns: Vec<f64>,
    pub robot_collisions: usize,
    pub obstacle_collisions: usize,
    pub arrivals: usize,
    pub collided: usize,
    /// Travelled length over non-collided robots.
    pub traveling_distance: MetricReport,
    /// Oscillation metric over non-collided robots.
    pub smoothness: MetricReport,
    pub records: Vec<StepRecord>,
}

impl EpisodeSummary {
    pub fn all_arrived(&self) -> bool {
        self.statuses.iter().all(|s| *s == Status::Arrived)
    }
}

/// Runs one episode. `policy` is required in the learned modes.
pub fn run_episode(config: &SimConfig, scenario: &Scenario, policy: Option<&PolicyBundle>) -> Result<EpisodeSummary> {
    if config.max_steps == 0 {
        return Err(Error::InvalidParams("max_steps must be at least 1".into()));
    }
    let needs_policy = matches!(config.mode, Mode::Rpf | Mode::VanillaPpo);
    if needs_policy && policy.is_none() {
        return Err(Error::InvalidParams(format!(
            "mode {} needs a policy checkpoint",
            config.mode
        )));
    }
    if let (Some(p), true) = (policy, needs_policy) {
        let expected = if config.mode == Mode::Rpf { 2 } else { 1 };
        if p.action_dim() != expected {
            return Err(Error::InvalidParams(format!(
                "checkpoint has {} action dims, mode {} needs {expected}",
                p.action_dim(),
                config.mode
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scenario = scenario.clone();
    scenario.params = config.world;
    let mut world = World::from_scenario(&scenario)?;
    let mut records = vec![initial_record(&world)];
    let (mut robot_collisions, mut obstacle_collisions) = (0, 0);
    while !world.is_done() && world.steps < config.max_steps {
        let mut decisions = vec![None; world.robots.len()];
        for i in world.active().collect::<Vec<_>>() {
            decisions[i] = Some(match (config.mode, policy) {
                (Mode::VanillaApf, _) => Decision::Field(config.apf),
                (mode, Some(p)) => {
                    let obs = world.observe(i)?;
                    let sample = p.sample_action(&obs, &mut rng, config.deterministic);
                    decision_from_action(mode, &sample.action)
                }
                (_, None) => unreachable!("checked above"),
            });
        }
        let record = world.step(&decisions, config.wall_following);
        for e in &record.events {
            match e {
                CollisionEvent::RobotRobot { .. } => robot_collisions += 1,
                CollisionEvent::RobotObstacle { .. } => obstacle_collisions += 1,
            }
        }
        records.push(record);
    }
    Ok(summarize(&world, records, robot_collisions, obstacle_collisions))
}

fn initial_record(world: &World) -> StepRecord {
    StepRecord {
        step: 0,
        robots: world
            .robots
            .iter()
            .map(|r| RobotStepRecord {
                robot_id: r.id,
                position: r.position,
                heading: r.heading,
                status: r.status,
                action: None,
                forces: None,
                reward: None,
                arrived: r.status == Status::Arrived,
            })
            .collect(),
        events: Vec::new(),
    }
}

pub(crate) fn summarize(
    world: &World,
    records: Vec<StepRecord>,
    robot_collisions: usize,
    obstacle_collisions: usize,
) -> EpisodeSummary {
    let trails: Vec<Vec<Vec2>> = world.robots.iter().map(|r| r.trail.clone()).collect();
    let statuses: Vec<Status> = world.robots.iter().map(|r| r.status).collect();
    let kept: Vec<Vec<Vec2>> = trails
        .iter()
        .zip(&statuses)
        .filter(|(_, s)| **s != Status::Collided)
        .map(|(t, _)| t.clone())
        .collect();
    EpisodeSummary {
        steps: world.steps,
        arrivals: statuses.iter().filter(|s| **s == Status::Arrived).count(),
        collided: statuses.iter().filter(|s| **s == Status::Collided).count(),
        traveling_distance: traveling_distance(&kept),
        smoothness: motion_smoothness(&kept),
        trails,
        statuses,
        returns: world.returns.clone(),
        robot_collisions,
        obstacle_collisions,
        records,
    }
}

/// One row of the trajectory export.
///
/// Columns, in order: `step, robot_id, x, y, heading, eta, lambda,
/// reward_total, event_flags`. `eta`/`lambda` are empty unless the robot
/// acted under a field decision; `reward_total` is empty when it did not
/// act. `event_flags` concatenates `C` (robot-robot collision), `O`
/// (obstacle collision) and `A` (arrived this step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub robot_id: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub reward_total: Option<f64>,
    pub event_flags: String,
}

pub fn trajectory_rows(records: &[StepRecord]) -> Vec<TrajectoryRow> {
    let mut rows = Vec::new();
    for rec in records {
        for r in &rec.robots {
            let mut flags = String::new();
            let hit_robot = rec
                .events
                .iter()
                .any(|e| matches!(e, CollisionEvent::RobotRobot { .. }) && e.involves(r.robot_id));
            let hit_obstacle = rec
                .events
                .iter()
                .any(|e| matches!(e, CollisionEvent::RobotObstacle { .. }) && e.involves(r.robot_id));
            if hit_robot {
                flags.push('C');
            }
            if hit_obstacle {
                flags.push('O');
            }
            if r.arrived {
                flags.push('A');
            }
            let field = r.action.as_ref().filter(|a| a.len() == 2);
            rows.push(TrajectoryRow {
                step: rec.step,
                robot_id: r.robot_id,
                x: r.position.x,
                y: r.position.y,
                heading: r.heading,
                eta: field.map(|a| a[0]),
                lambda: field.map(|a| a[1]),
                reward_total: r.reward.map(|b| b.total),
                event_flags: flags,
            });
        }
    }
    rows
}

/// Writes rows as UTF-8 CSV with a header line and LF line endings.
pub fn write_trajectory<W: Write>(rows: &[TrajectoryRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
