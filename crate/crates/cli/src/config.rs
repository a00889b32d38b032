//! Run settings: built-in defaults, then an optional JSON file, then
//! command-line overrides.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rpf_core::apf::ApfParams;
use rpf_core::ppo::PpoConfig;
use rpf_core::scenario::{gen_circle_swap, gen_cluttered, RobotSpec, Scenario};
use rpf_core::sim::{Mode, SimConfig};
use rpf_core::training::{Arena, TrainConfig};
use rpf_core::{Obstacle, Vec2, WorldParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Everything a run can be configured with. Missing fields take the
/// built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub mode: Mode,
    pub world: WorldParams,
    pub ppo: PpoConfig,
    /// Field scales of the fixed-parameter baseline.
    pub apf: ApfParams,
    /// Training arenas, cycled per episode. Empty means the default mix for
    /// the mode.
    pub arenas: Vec<Arena>,
    pub wall_following: bool,
    /// Evaluate the policy mean instead of sampling.
    pub deterministic: bool,
    pub max_steps: usize,
    /// Write an intermediate checkpoint every this many episodes (0 = never).
    pub checkpoint_every: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            mode: Mode::Rpf,
            world: train.world,
            ppo: train.ppo,
            apf: ApfParams::VANILLA,
            arenas: Vec::new(),
            wall_following: true,
            deterministic: true,
            max_steps: 1000,
            checkpoint_every: 100,
        }
    }
}

impl Settings {
    /// Layers `file` and then `overrides` (`path.to.field=value`) over the
    /// defaults.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(Settings::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let layer: Value =
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            merge(&mut tree, layer);
        }
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let settings: Settings = serde_json::from_value(tree).context("invalid settings")?;
        settings.world.validate()?;
        settings.ppo.validate()?;
        Ok(settings)
    }

    pub fn train_config(&self) -> TrainConfig {
        let arenas = if self.arenas.is_empty() {
            default_arenas(self.mode)
        } else {
            self.arenas.clone()
        };
        TrainConfig {
            mode: self.mode,
            ppo: self.ppo.clone(),
            world: self.world,
            arenas,
            wall_following: self.wall_following,
        }
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            world: self.world,
            seed,
            max_steps: self.max_steps,
            mode: self.mode,
            apf: self.apf,
            wall_following: self.wall_following,
            deterministic: self.deterministic,
        }
    }
}

/// Cluttered arena alternating with the six-robot swap; the steering
/// baseline trains among smaller obstacles.
pub fn default_arenas(mode: Mode) -> Vec<Arena> {
    let obstacle_radius = if mode == Mode::VanillaPpo { 0.1 } else { 0.5 };
    vec![
        Arena::Cluttered {
            n_robots: 6,
            obstacle_radius,
        },
        Arena::CircleSwap {
            n_robots: 6,
            radius: 2.0,
        },
    ]
}

fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(tree: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form key=value"))?;
    // bare words such as `rpf` are taken as strings
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    for key in path.split('.') {
        node = node
            .as_object_mut()
            .and_then(|o| o.get_mut(key))
            .ok_or_else(|| anyhow!("unknown setting `{path}`"))?;
    }
    *node = value;
    Ok(())
}

/// Training arena for a scenario name.
pub fn arena_by_name(name: &str) -> Result<Vec<Arena>> {
    Ok(match name {
        "mixed" => Vec::new(),
        "cluttered" => vec![Arena::Cluttered {
            n_robots: 6,
            obstacle_radius: 0.5,
        }],
        "cluttered-small" => vec![Arena::Cluttered {
            n_robots: 6,
            obstacle_radius: 0.1,
        }],
        other => {
            let (n, radius) = parse_circle(other)?;
            vec![Arena::CircleSwap { n_robots: n, radius }]
        }
    })
}

/// `circle<N>` (radius 2 m) or `circle<N>-r<R>`.
fn parse_circle(name: &str) -> Result<(usize, f64)> {
    let rest = name
        .strip_prefix("circle")
        .ok_or_else(|| anyhow!("unknown scenario `{name}`"))?;
    let (n, radius) = match rest.split_once("-r") {
        Some((n, r)) => (n, r.parse::<f64>().with_context(|| format!("radius in `{name}`"))?),
        None => (rest, 2.0),
    };
    let n = n.parse().with_context(|| format!("robot count in `{name}`"))?;
    Ok((n, radius))
}

/// Resolves a scenario name or JSON path. Generated layouts draw their
/// randomness (swap jitter, cluttered starts) from `seed`.
pub fn scenario_by_name(name: &str, seed: u64) -> Result<Scenario> {
    if name.ends_with(".json") {
        return Ok(Scenario::load(Path::new(name))?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenario = match name {
        "cluttered" => gen_cluttered(&mut rng, 6, 0.5)?,
        "cluttered-small" => gen_cluttered(&mut rng, 6, 0.1)?,
        "local-minimum" => Scenario {
            name: name.into(),
            params: WorldParams::default(),
            robots: vec![RobotSpec {
                start: Vec2::new(-3.0, 0.0),
                goal: Vec2::new(3.0, 0.0),
            }],
            obstacles: vec![Obstacle::circle(Vec2::ZERO, 0.5)],
        },
        "mixed" => bail!("`mixed` is a training mix, not a single scenario"),
        other => {
            let (n, radius) = parse_circle(other)?;
            gen_circle_swap(n, radius, Some(&mut rng))?
        }
    };
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_beats_file_beats_default() {
        let dir = std::env::temp_dir().join(format!("rpf-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("c.json");
        std::fs::write(&file, r#"{"ppo": {"gamma": 0.95, "z": 50}, "world": {"d_r": 4.0}}"#).unwrap();
        let s = Settings::resolve(Some(&file), &["ppo.z=20".into(), "mode=vanilla_ppo".into()]).unwrap();
        assert_eq!(s.ppo.gamma, 0.95);
        assert_eq!(s.ppo.z, 20);
        assert_eq!(s.world.d_r, 4.0);
        assert_eq!(s.world.rho, 10.0);
        assert_eq!(s.mode, Mode::VanillaPpo);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn bad_overrides_are_rejected() {
        assert!(Settings::resolve(None, &["ppo.nope=1".into()]).is_err());
        assert!(Settings::resolve(None, &["ppo.gamma".into()]).is_err());
        assert!(Settings::resolve(None, &["ppo.gamma=2.0".into()]).is_err());
    }

    #[test]
    fn scenario_names() {
        assert_eq!(parse_circle("circle6").unwrap(), (6, 2.0));
        assert_eq!(parse_circle("circle8-r3").unwrap(), (8, 3.0));
        assert!(parse_circle("square").is_err());
        assert_eq!(scenario_by_name("circle8-r8", 1).unwrap().robots.len(), 8);
        assert_eq!(
            scenario_by_name("cluttered", 3).unwrap(),
            scenario_by_name("cluttered", 3).unwrap()
        );
        assert!(scenario_by_name("mixed", 0).is_err());
        assert!(arena_by_name("mixed").unwrap().is_empty());
    }
}
