//! Body-frame observations and the permutation-invariant neighbour embedding.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{nearest_obstacle_point, visible_neighbors, wrap_angle, Obstacle, RobotState, Vec2, WorldParams};
use crate::neural::{Activation, DenseNet, ForwardCache, Gradients};

/// Width of the per-neighbour encoding.
pub const EMBED_WIDTH: usize = 64;
pub const LOCAL_WIDTH: usize = 4;
pub const NEIGHBOR_WIDTH: usize = 3;

/// Nearest obstacle and goal, as range and body-frame bearing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalBlock {
    pub d_o: f64,
    pub phi_o: f64,
    pub d_g: f64,
    pub phi_g: f64,
}

/// One sensed neighbour: range, bearing and relative heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborBlock {
    pub d_j: f64,
    pub phi_j: f64,
    pub psi_j: f64,
}

/// Bearing of `target` seen from `robot`, zero straight ahead.
fn bearing(robot: &RobotState, target: Vec2) -> f64 {
    wrap_angle((target - robot.position).angle() - robot.heading)
}

/// Senses robot `i`'s surroundings. Without an obstacle in range the
/// obstacle block reads `(d_r, 0)`.
pub fn build_observation(
    i: usize,
    robots: &[RobotState],
    obstacles: &[Obstacle],
    params: &WorldParams,
) -> Result<(LocalBlock, Vec<NeighborBlock>)> {
    let robot = &robots[i];
    let (d_o, phi_o) = match nearest_obstacle_point(robot.position, obstacles, params.d_r)? {
        Some(hit) => (hit.distance, bearing(robot, hit.point)),
        None => (params.d_r, 0.0),
    };
    let d_g = robot.goal_distance();
    let phi_g = if d_g > 0.0 { bearing(robot, robot.goal) } else { 0.0 };
    let neighbors = visible_neighbors(i, robots, params.d_r)
        .into_iter()
        .map(|j| {
            let other = &robots[j];
            NeighborBlock {
                d_j: robot.position.distance(other.position),
                phi_j: bearing(robot, other.position),
                psi_j: wrap_angle(other.heading - robot.heading),
            }
        })
        .collect();
    Ok((LocalBlock { d_o, phi_o, d_g, phi_g }, neighbors))
}

/// Network-ready observation: ranges scaled by the sensing range (goal range
/// by the progress range, capped at 1) and angles by π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedObservation {
    pub local: [f64; LOCAL_WIDTH],
    pub neighbors: Vec<[f64; NEIGHBOR_WIDTH]>,
}

impl NormalizedObservation {
    pub fn new(local: &LocalBlock, neighbors: &[NeighborBlock], params: &WorldParams) -> Self {
        Self {
            local: [
                local.d_o / params.d_r,
                local.phi_o / PI,
                (local.d_g / params.d_m).min(1.0),
                local.phi_g / PI,
            ],
            neighbors: neighbors
                .iter()
                .map(|n| [n.d_j / params.d_r, n.phi_j / PI, n.psi_j / PI])
                .collect(),
        }
    }
}

/// One-layer ReLU encoder applied to `[o_loc; w_j]` for every neighbour,
/// averaged, and appended to `o_loc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEmbedding {
    pub net: DenseNet,
}

/// Forward state needed to push gradients back through the encoder.
#[derive(Debug, Clone)]
pub struct EmbedCache {
    caches: Vec<ForwardCache>,
}

impl MeanEmbedding {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::with_width(EMBED_WIDTH, rng)
    }

    pub fn with_width<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        let net = DenseNet::glorot(&[LOCAL_WIDTH + NEIGHBOR_WIDTH, width], &[Activation::Relu], rng)
            .expect("valid encoder dims");
        Self { net }
    }

    pub fn width(&self) -> usize {
        self.net.output_dim()
    }

    pub fn output_dim(&self) -> usize {
        LOCAL_WIDTH + self.width()
    }

    pub fn embed(&self, obs: &NormalizedObservation) -> Vec<f64> {
        self.embed_cached(obs).0
    }

    pub fn embed_cached(&self, obs: &NormalizedObservation) -> (Vec<f64>, EmbedCache) {
        // fixed reduction order keeps the mean bit-identical under permutation
        let mut blocks = obs.neighbors.clone();
        blocks.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let width = self.width();
        let mut mean = vec![0.0; width];
        let mut caches = Vec::with_capacity(blocks.len());
        for w in &blocks {
            let mut input = [0.0; LOCAL_WIDTH + NEIGHBOR_WIDTH];
            input[..LOCAL_WIDTH].copy_from_slice(&obs.local);
            input[LOCAL_WIDTH..].copy_from_slice(w);
            let cache = self.net.forward_cached(&input).expect("encoder input width");
            mean.iter_mut().zip(cache.output()).for_each(|(m, e)| *m += e);
            caches.push(cache);
        }
        if !blocks.is_empty() {
            let n = blocks.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
        }
        let mut out = Vec::with_capacity(LOCAL_WIDTH + width);
        out.extend_from_slice(&obs.local);
        out.extend_from_slice(&mean);
        (out, EmbedCache { caches })
    }

    /// Accumulates encoder gradients given the gradient at the embedding output.
    pub fn backward(&self, cache: &EmbedCache, grad_out: &[f64], grads: &mut Gradients) {
        if cache.caches.is_empty() {
            return;
        }
        let n = cache.caches.len() as f64;
        let grad_c: Vec<f64> = grad_out[LOCAL_WIDTH..].iter().map(|g| g / n).collect();
        for c in &cache.caches {
            self.net.backward(c, &grad_c, grads);
        }
    }
}
