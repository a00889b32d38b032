//! Shared-policy training loop: every robot acts from one policy, all
//! transitions are pooled, and the policy is updated every `z` simulation
//! steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CollisionEvent, Status, WorldParams};
use crate::ppo::{
    compute_advantages, lr_schedule, normalize_advantages, ActionBox, PolicyBundle, PpoConfig, PreparedSample,
    RolloutBuffer, Transition, UpdateStats,
};
use crate::scenario::{gen_circle_swap, gen_cluttered, Scenario};
use crate::sim::{decision_from_action, Mode, World};

/// Arena families used for training episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arena {
    CircleSwap { n_robots: usize, radius: f64 },
    Cluttered { n_robots: usize, obstacle_radius: f64 },
}

impl Arena {
    pub fn generate(&self, rng: &mut ChaCha8Rng, params: WorldParams) -> Result<Scenario> {
        let mut s = match *self {
            Arena::CircleSwap { n_robots, radius } => gen_circle_swap(n_robots, radius, Some(rng))?,
            Arena::Cluttered {
                n_robots,
                obstacle_radius,
            } => gen_cluttered(rng, n_robots, obstacle_radius)?,
        };
        s.params = params;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub ppo: PpoConfig,
    pub world: WorldParams,
    /// Episodes cycle through these arenas in order.
    pub arenas: Vec<Arena>,
    pub wall_following: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Rpf,
            ppo: PpoConfig::default(),
            world: WorldParams::default(),
            arenas: vec![
                Arena::Cluttered {
                    n_robots: 6,
                    obstacle_radius: 0.5,
                },
                Arena::CircleSwap {
                    n_robots: 6,
                    radius: 2.0,
                },
            ],
            wall_following: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        self.world.validate()?;
        if self.arenas.is_empty() {
            return Err(Error::InvalidParams("no training arenas".into()));
        }
        if self.mode == Mode::VanillaApf {
            return Err(Error::InvalidParams("vanilla_apf has nothing to train".into()));
        }
        Ok(())
    }

    pub fn action_box(&self) -> ActionBox {
        match self.mode {
            Mode::VanillaPpo => ActionBox::steering(),
            _ => ActionBox::apf_scales(),
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub arena: String,
    pub steps: usize,
    pub return_mean: f64,
    pub return_min: f64,
    pub return_max: f64,
    pub arrivals: usize,
    pub collisions: usize,
    pub lr: f64,
    pub updates: usize,
    pub policy_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub entropy: Option<f64>,
    pub aborted_updates: usize,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub policy: PolicyBundle,
    rng: ChaCha8Rng,
    buffer: RolloutBuffer,
    global_step: usize,
    episode: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = PolicyBundle::new(config.action_box(), &mut rng);
        Ok(Self::with_policy(config, policy, rng))
    }

    /// Continues from an existing policy.
    pub fn resume(config: TrainConfig, policy: PolicyBundle, seed: u64, episode: usize) -> Result<Self> {
        config.validate()?;
        if policy.action_box != config.action_box() {
            return Err(Error::InvalidParams(
                "checkpoint action space does not match mode".into(),
            ));
        }
        let mut t = Self::with_policy(config, policy, ChaCha8Rng::seed_from_u64(seed));
        t.episode = episode;
        Ok(t)
    }

    fn with_policy(config: TrainConfig, policy: PolicyBundle, rng: ChaCha8Rng) -> Self {
        Self {
            config,
            policy,
            rng,
            buffer: RolloutBuffer::new(),
            global_step: 0,
            episode: 0,
        }
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Plays one training episode, updating the policy every `z` steps.
    pub fn run_episode(&mut self) -> Result<EpisodeLog> {
        let arena = self.config.arenas[self.episode % self.config.arenas.len()];
        let scenario = arena.generate(&mut self.rng, self.config.world)?;
        let mut world = World::from_scenario(&scenario)?;
        let lr = lr_schedule(self.config.ppo.alpha0, self.config.ppo.beta, self.episode);
        let mode = self.config.mode;
        let mut collisions = 0;
        let mut stats: Vec<UpdateStats> = Vec::new();
        let mut aborted = 0;

        while !world.is_done() && world.steps < self.config.ppo.steps_per_episode {
            let step = world.steps;
            let mut decisions = vec![None; world.robots.len()];
            let mut pending = Vec::new();
            for i in world.active().collect::<Vec<_>>() {
                let obs = world.observe(i)?;
                let sample = self.policy.sample_action(&obs, &mut self.rng, false);
                decisions[i] = Some(decision_from_action(mode, &sample.action));
                pending.push((i, obs, sample));
            }
            let record = world.step(&decisions, self.config.wall_following);
            collisions += record
                .events
                .iter()
                .filter(|e| {
                    matches!(
                        e,
                        CollisionEvent::RobotRobot { .. } | CollisionEvent::RobotObstacle { .. }
                    )
                })
                .count();
            for (i, obs, sample) in pending {
                let r = &record.robots[i];
                self.buffer.push(Transition {
                    obs,
                    action: sample.action,
                    raw_action: sample.raw,
                    log_prob: sample.log_prob,
                    reward: r.reward.map_or(0.0, |b| b.total) * self.config.ppo.reward_scale,
                    value: sample.value,
                    done: r.status != Status::Active,
                    robot_id: i,
                    episode: self.episode,
                    step,
                });
            }
            self.global_step += 1;
            if self.global_step.is_multiple_of(self.config.ppo.z) {
                self.bootstrap_open(&world)?;
                match self.update(lr) {
                    Ok(s) => stats.push(s),
                    Err(Error::NonFiniteLoss) => aborted += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        // truncated streams bootstrap from the final state
        self.bootstrap_open(&world)?;

        let returns = &world.returns;
        let n = returns.len().max(1) as f64;
        let mean_of = |f: fn(&UpdateStats) -> f64| {
            (!stats.is_empty()).then(|| stats.iter().map(f).sum::<f64>() / stats.len() as f64)
        };
        let log = EpisodeLog {
            episode: self.episode,
            arena: scenario.name.clone(),
            steps: world.steps,
            return_mean: returns.iter().sum::<f64>() / n,
            return_min: returns.iter().copied().fold(f64::INFINITY, f64::min),
            return_max: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            arrivals: world.robots.iter().filter(|r| r.status == Status::Arrived).count(),
            collisions,
            lr,
            updates: stats.len(),
            policy_loss: mean_of(|s| s.policy_loss),
            value_loss: mean_of(|s| s.value_loss),
            entropy: mean_of(|s| s.entropy),
            aborted_updates: aborted,
        };
        self.episode += 1;
        Ok(log)
    }

    fn bootstrap_open(&mut self, world: &World) -> Result<()> {
        for (episode, robot) in self.buffer.open_streams() {
            if episode == self.episode {
                let value = self.policy.value(&world.observe(robot)?);
                self.buffer.set_bootstrap(episode, robot, value);
            }
        }
        Ok(())
    }

    fn update(&mut self, lr: f64) -> Result<UpdateStats> {
        self.buffer.sort();
        let estimates = compute_advantages(&self.buffer, self.config.ppo.gamma, self.config.ppo.tau);
        let mut adv: Vec<f64> = estimates.iter().map(|e| e.0).collect();
        normalize_advantages(&mut adv);
        let samples: Vec<PreparedSample<'_>> = self
            .buffer
            .transitions()
            .zip(adv.iter().zip(&estimates))
            .map(|(t, (&a, &(_, target)))| PreparedSample {
                obs: &t.obs,
                raw_action: &t.raw_action,
                old_log_prob: t.log_prob,
                advantage: a,
                target,
            })
            .collect();
        let result = self.policy.update(&samples, &self.config.ppo, lr, &mut self.rng);
        self.buffer.clear();
        result
    }
}
