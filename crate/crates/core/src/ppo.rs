//! Shared-policy PPO: squashed Gaussian actor, critic, rollout buffer, GAE
//! and the clipped-surrogate update.
//!
//! Every robot queries and trains the same [`PolicyBundle`]. Transitions are
//! kept in per-(episode, robot) streams so advantage recursions never cross
//! robot boundaries.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Activation, Adam, DenseNet, Gradients};
use crate::observation::{MeanEmbedding, NormalizedObservation};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const HIDDEN_WIDTH: usize = 256;

/// Box the squashed actions are mapped into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBox {
    /// `(eta, lambda)` in `[0, 0.1] x [0, 5]`.
    pub fn apf_scales() -> Self {
        Self {
            low: vec![0.0, 0.0],
            high: vec![0.1, 5.0],
        }
    }

    /// Lateral steering gain in `[-2.5, 2.5]`.
    pub fn steering() -> Self {
        Self {
            low: vec![-2.5],
            high: vec![2.5],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    fn half_width(&self, d: usize) -> f64 {
        0.5 * (self.high[d] - self.low[d])
    }

    /// Maps an unbounded sample into the box through `tanh`.
    pub fn squash(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(d, &u)| {
                let a = 0.5 * (self.low[d] + self.high[d]) + self.half_width(d) * u.tanh();
                a.clamp(self.low[d], self.high[d])
            })
            .collect()
    }

    /// `log |da/du|` summed over dimensions.
    fn log_jacobian(&self, raw: &[f64]) -> f64 {
        raw.iter()
            .enumerate()
            .map(|(d, &u)| {
                let t = u.tanh();
                (self.half_width(d) * (1.0 - t * t) + 1e-12).ln()
            })
            .sum()
    }

    pub fn contains(&self, action: &[f64]) -> bool {
        action.len() == self.dim()
            && action
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(a, (l, h))| (*l..=*h).contains(a))
    }
}

/// Learner hyperparameters, including the minibatch, gradient-clip and
/// reward-scale settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Initial learning rate.
    pub alpha0: f64,
    /// Per-episode learning-rate decay.
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// GAE mixing factor.
    pub tau: f64,
    /// Value-loss coefficient.
    pub c1: f64,
    /// Entropy-bonus coefficient.
    pub c2: f64,
    /// Simulation steps between updates.
    pub z: usize,
    /// Epochs per update.
    pub k: usize,
    pub steps_per_episode: usize,
    pub episodes: usize,
    pub minibatch_size: usize,
    pub max_grad_norm: f64,
    /// Multiplies rewards before they reach the learner, keeping value
    /// targets near unit scale. Reported returns are unaffected.
    pub reward_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            alpha0: 3e-4,
            beta: 0.999,
            gamma: 0.999,
            epsilon: 0.2,
            tau: 0.9,
            c1: 0.5,
            c2: 0.001,
            z: 100,
            k: 1,
            steps_per_episode: 1000,
            episodes: 1000,
            minibatch_size: 64,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        let ok = self.alpha0 > 0.0
            && unit(self.beta)
            && unit(self.gamma)
            && unit(self.epsilon)
            && unit(self.tau)
            && self.c1 > 0.0
            && self.c2 > 0.0
            && self.z > 0
            && self.k > 0
            && self.steps_per_episode > 0
            && self.minibatch_size > 0
            && self.max_grad_norm > 0.0
            && self.reward_scale > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{self:?}")))
        }
    }
}

/// Learning rate after `episode` decays.
pub fn lr_schedule(alpha0: f64, beta: f64, episode: usize) -> f64 {
    alpha0 * beta.powi(episode as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    /// Action inside the box.
    pub action: Vec<f64>,
    /// Pre-squash Gaussian sample.
    pub raw: Vec<f64>,
    /// Log-density of `action`, including the squash correction.
    pub log_prob: f64,
    pub value: f64,
}

/// Encoder, actor, critic and their optimizer state. One instance is shared
/// by every robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub version: u32,
    pub action_box: ActionBox,
    pub encoder: MeanEmbedding,
    pub actor: DenseNet,
    pub critic: DenseNet,
    pub log_std: Vec<f64>,
    pub encoder_opt: Adam,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub log_std_opt: Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub samples: usize,
}

/// One training sample after advantage estimation.
#[derive(Debug, Clone)]
pub struct PreparedSample<'a> {
    pub obs: &'a NormalizedObservation,
    pub raw_action: &'a [f64],
    pub old_log_prob: f64,
    pub advantage: f64,
    pub target: f64,
}

/// Clipped surrogate for one sample: `min(ratio A, clip(ratio) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to the ratio.
fn surrogate_ratio_grad(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    if ratio * advantage <= clipped * advantage {
        advantage
    } else {
        0.0
    }
}

impl PolicyBundle {
    pub fn new<R: Rng + ?Sized>(action_box: ActionBox, rng: &mut R) -> Self {
        let encoder = MeanEmbedding::new(rng);
        let input = encoder.output_dim();
        let dims_actor = [input, HIDDEN_WIDTH, HIDDEN_WIDTH, action_box.dim()];
        let dims_critic = [input, HIDDEN_WIDTH, HIDDEN_WIDTH, 1];
        let acts = [Activation::Tanh, Activation::Tanh, Activation::Identity];
        let actor = DenseNet::glorot(&dims_actor, &acts, rng).expect("actor dims");
        let critic = DenseNet::glorot(&dims_critic, &acts, rng).expect("critic dims");
        Self::from_parts(action_box, encoder, actor, critic)
    }

    /// Assembles a bundle with fresh optimizer state. The log-std starts at
    /// zero (unit standard deviation in the pre-squash space).
    pub fn from_parts(action_box: ActionBox, encoder: MeanEmbedding, actor: DenseNet, critic: DenseNet) -> Self {
        let dim = action_box.dim();
        Self {
            version: CHECKPOINT_VERSION,
            encoder_opt: Adam::new(encoder.net.num_params()),
            actor_opt: Adam::new(actor.num_params()),
            critic_opt: Adam::new(critic.num_params()),
            log_std_opt: Adam::new(dim),
            log_std: vec![0.0; dim],
            action_box,
            encoder,
            actor,
            critic,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_box.dim()
    }

    /// Gaussian log-density of `raw` under mean `mean`, without squash term.
    fn gaussian_log_prob(&self, mean: &[f64], raw: &[f64]) -> f64 {
        mean.iter()
            .zip(raw)
            .zip(&self.log_std)
            .map(|((m, u), ls)| {
                let z = (u - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    /// Log-density of the squashed action produced by `raw`.
    pub fn log_prob(&self, mean: &[f64], raw: &[f64]) -> f64 {
        self.gaussian_log_prob(mean, raw) - self.action_box.log_jacobian(raw)
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (1.0 + (2.0 * PI).ln())).sum()
    }

    pub fn value(&self, obs: &NormalizedObservation) -> f64 {
        let x = self.encoder.embed(obs);
        self.critic.forward(&x).expect("critic input")[0]
    }

    /// Draws an action, or returns the squashed mean when `deterministic`.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        obs: &NormalizedObservation,
        rng: &mut R,
        deterministic: bool,
    ) -> ActionSample {
        let x = self.encoder.embed(obs);
        let mean = self.actor.forward(&x).expect("actor input");
        let value = self.critic.forward(&x).expect("critic input")[0];
        let raw: Vec<f64> = if deterministic {
            mean.clone()
        } else {
            mean.iter()
                .zip(&self.log_std)
                .map(|(m, ls)| {
                    let n: f64 = rng.sample(StandardNormal);
                    m + ls.exp() * n
                })
                .collect()
        };
        ActionSample {
            action: self.action_box.squash(&raw),
            log_prob: self.log_prob(&mean, &raw),
            raw,
            value,
        }
    }

    /// One PPO pass over `samples`: `k` epochs of shuffled minibatches,
    /// minimising `-L_clip + c1 * value_mse - c2 * entropy`.
    ///
    /// A non-finite loss or gradient leaves every parameter untouched.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        samples: &[PreparedSample<'_>],
        config: &PpoConfig,
        lr: f64,
        rng: &mut R,
    ) -> Result<UpdateStats> {
        let snapshot = self.clone();
        let result = self.update_inner(samples, config, lr, rng);
        if result.is_err() {
            *self = snapshot;
        }
        result
    }

    fn update_inner<R: Rng + ?Sized>(
        &mut self,
        samples: &[PreparedSample<'_>],
        config: &PpoConfig,
        lr: f64,
        rng: &mut R,
    ) -> Result<UpdateStats> {
        let mut stats = UpdateStats::default();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut batches = 0usize;
        for _ in 0..config.k {
            order.shuffle(rng);
            for chunk in order.chunks(config.minibatch_size) {
                let batch: Vec<&PreparedSample<'_>> = chunk.iter().map(|&i| &samples[i]).collect();
                let (grads, s) = self.loss_gradients(&batch, config)?;
                self.apply(grads, config, lr)?;
                stats.policy_loss += s.policy_loss;
                stats.value_loss += s.value_loss;
                stats.entropy += s.entropy;
                stats.approx_kl += s.approx_kl;
                stats.clip_fraction += s.clip_fraction;
                batches += 1;
            }
        }
        if batches > 0 {
            let n = batches as f64;
            stats.policy_loss /= n;
            stats.value_loss /= n;
            stats.entropy /= n;
            stats.approx_kl /= n;
            stats.clip_fraction /= n;
        }
        stats.samples = samples.len();
        Ok(stats)
    }

    /// Loss gradients for one minibatch, in (encoder, actor, critic, log_std) order.
    pub fn loss_gradients(
        &self,
        batch: &[&PreparedSample<'_>],
        config: &PpoConfig,
    ) -> Result<(LossGradients, UpdateStats)> {
        let m = batch.len() as f64;
        let mut g = LossGradients {
            encoder: Gradients::zeros_like(&self.encoder.net),
            actor: Gradients::zeros_like(&self.actor),
            critic: Gradients::zeros_like(&self.critic),
            log_std: vec![0.0; self.action_dim()],
        };
        let mut stats = UpdateStats::default();
        let stds: Vec<f64> = self.log_std.iter().map(|ls| ls.exp()).collect();
        for s in batch {
            let (x, embed_cache) = self.encoder.embed_cached(s.obs);
            let actor_cache = self.actor.forward_cached(&x)?;
            let critic_cache = self.critic.forward_cached(&x)?;
            let mean = actor_cache.output();
            let value = critic_cache.output()[0];

            let log_prob = self.log_prob(mean, s.raw_action);
            let log_ratio = log_prob - s.old_log_prob;
            let ratio = log_ratio.exp();
            let surrogate = clipped_surrogate(ratio, s.advantage, config.epsilon);
            stats.policy_loss -= surrogate / m;
            stats.value_loss += (value - s.target).powi(2) / m;
            stats.approx_kl += ((ratio - 1.0) - log_ratio) / m;
            if (ratio - 1.0).abs() > config.epsilon {
                stats.clip_fraction += 1.0 / m;
            }

            // d(-surrogate)/d(log_prob) = -ratio * dsurr/dratio
            let d_logp = -ratio * surrogate_ratio_grad(ratio, s.advantage, config.epsilon) / m;
            let mut d_mean = vec![0.0; mean.len()];
            for d in 0..mean.len() {
                let z = (s.raw_action[d] - mean[d]) / stds[d];
                d_mean[d] = d_logp * z / stds[d];
                g.log_std[d] += d_logp * (z * z - 1.0);
            }
            let d_value = 2.0 * config.c1 * (value - s.target) / m;

            let mut d_x = self.actor.backward(&actor_cache, &d_mean, &mut g.actor);
            let d_x_critic = self.critic.backward(&critic_cache, &[d_value], &mut g.critic);
            d_x.iter_mut().zip(&d_x_critic).for_each(|(a, b)| *a += b);
            self.encoder.backward(&embed_cache, &d_x, &mut g.encoder);
        }
        stats.entropy = self.entropy();
        // entropy bonus: d(-c2 H)/d(log_std) = -c2
        g.log_std.iter_mut().for_each(|gl| *gl -= config.c2);

        let loss = stats.policy_loss + config.c1 * stats.value_loss - config.c2 * stats.entropy;
        if !loss.is_finite() || !g.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok((g, stats))
    }

    fn apply(&mut self, mut g: LossGradients, config: &PpoConfig, lr: f64) -> Result<()> {
        let norm = g.norm();
        if norm > config.max_grad_norm {
            g.scale(config.max_grad_norm / norm);
        }
        self.encoder_opt.step(self.encoder.net.params_mut(), &g.encoder.0, lr)?;
        self.actor_opt.step(self.actor.params_mut(), &g.actor.0, lr)?;
        self.critic_opt.step(self.critic.params_mut(), &g.critic.0, lr)?;
        self.log_std_opt.step(&mut self.log_std, &g.log_std, lr)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let bundle: PolicyBundle = serde_json::from_str(&text)?;
        if bundle.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion(bundle.version));
        }
        Ok(bundle)
    }
}

#[derive(Debug, Clone)]
pub struct LossGradients {
    pub encoder: Gradients,
    pub actor: Gradients,
    pub critic: Gradients,
    pub log_std: Vec<f64>,
}

impl LossGradients {
    fn is_finite(&self) -> bool {
        self.encoder.is_finite()
            && self.actor.is_finite()
            && self.critic.is_finite()
            && self.log_std.iter().all(|g| g.is_finite())
    }

    fn norm(&self) -> f64 {
        (self.encoder.norm_sq()
            + self.actor.norm_sq()
            + self.critic.norm_sq()
            + self.log_std.iter().map(|g| g * g).sum::<f64>())
        .sqrt()
    }

    fn scale(&mut self, s: f64) {
        self.encoder.scale(s);
        self.actor.scale(s);
        self.critic.scale(s);
        self.log_std.iter_mut().for_each(|g| *g *= s);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: NormalizedObservation,
    pub action: Vec<f64>,
    pub raw_action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
    pub robot_id: usize,
    pub episode: usize,
    pub step: usize,
}

#[derive(Debug, Clone, Default)]
struct Stream {
    transitions: Vec<Transition>,
    bootstrap: f64,
}

/// Transitions grouped by (episode, robot) in time order.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    streams: BTreeMap<(usize, usize), Stream>,
    len: usize,
}

impl RolloutBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Transition) {
        let stream = self.streams.entry((t.episode, t.robot_id)).or_default();
        stream.transitions.push(t);
        self.len += 1;
    }

    /// Value of the state following the last stored transition of a stream
    /// that was cut before it terminated.
    pub fn set_bootstrap(&mut self, episode: usize, robot_id: usize, value: f64) {
        if let Some(s) = self.streams.get_mut(&(episode, robot_id)) {
            s.bootstrap = value;
        }
    }

    /// Streams whose last transition is not terminal.
    pub fn open_streams(&self) -> Vec<(usize, usize)> {
        self.streams
            .iter()
            .filter(|(_, s)| s.transitions.last().is_some_and(|t| !t.done))
            .map(|(k, _)| *k)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn clear(&mut self) {
        self.streams.clear();
        self.len = 0;
    }

    /// Transitions in stream order, matching [`compute_advantages`].
    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.streams.values().flat_map(|s| s.transitions.iter())
    }

    /// Sorts every stream by step so concurrent appends replay deterministically.
    pub fn sort(&mut self) {
        for s in self.streams.values_mut() {
            s.transitions.sort_by_key(|t| t.step);
        }
    }
}

/// Generalised advantage estimates and return targets, per transition in
/// [`RolloutBuffer::transitions`] order. Not normalised.
pub fn compute_advantages(buffer: &RolloutBuffer, gamma: f64, tau: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(buffer.len());
    for stream in buffer.streams.values() {
        let ts = &stream.transitions;
        let mut adv = vec![0.0; ts.len()];
        let mut gae = 0.0;
        for t in (0..ts.len()).rev() {
            let next_value = if t + 1 < ts.len() {
                ts[t + 1].value
            } else {
                stream.bootstrap
            };
            let live = if ts[t].done { 0.0 } else { 1.0 };
            let delta = ts[t].reward + gamma * next_value * live - ts[t].value;
            gae = delta + gamma * tau * live * gae;
            adv[t] = gae;
        }
        out.extend(adv.into_iter().zip(ts).map(|(a, t)| (a, a + t.value)));
    }
    out
}

/// Zero-mean, unit-variance rescaling in place.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}
