//! Reverse-mode gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpf_core::neural::{Activation, DenseNet, Gradients};
use rpf_core::observation::{MeanEmbedding, NormalizedObservation};
use rpf_core::ppo::{ActionBox, PolicyBundle, PpoConfig, PreparedSample};

const H: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn random_net(rng: &mut ChaCha8Rng) -> DenseNet {
    let depth = rng.gen_range(1..=3);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..=6)).collect();
    let acts: Vec<Activation> = (0..depth)
        .map(|k| match (k + 1 == depth, rng.gen_range(0..3)) {
            (true, _) => Activation::Identity,
            (_, 0) => Activation::Relu,
            (_, 1) => Activation::Tanh,
            _ => Activation::Identity,
        })
        .collect();
    DenseNet::glorot(&dims, &acts, rng).unwrap()
}

/// Scalar probe `w . net(x)` so every output contributes.
fn probe(net: &DenseNet, x: &[f64], w: &[f64]) -> f64 {
    net.forward(x).unwrap().iter().zip(w).map(|(a, b)| a * b).sum()
}

#[test]
fn dense_net_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut net = random_net(&mut rng);
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..net.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cache = net.forward_cached(&x).unwrap();
        let mut grads = Gradients::zeros_like(&net);
        let dx = net.backward(&cache, &w, &mut grads);

        for p in 0..net.num_params() {
            let orig = net.params()[p];
            net.params_mut()[p] = orig + H;
            let up = probe(&net, &x, &w);
            net.params_mut()[p] = orig - H;
            let down = probe(&net, &x, &w);
            net.params_mut()[p] = orig;
            worst = worst.max(rel_err(grads.0[p], (up - down) / (2.0 * H)));
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += H;
            let mut xm = x.clone();
            xm[i] -= H;
            let numeric = (probe(&net, &xp, &w) - probe(&net, &xm, &w)) / (2.0 * H);
            worst = worst.max(rel_err(dx[i], numeric));
        }
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

fn random_obs(rng: &mut ChaCha8Rng) -> NormalizedObservation {
    let n = rng.gen_range(0..4);
    NormalizedObservation {
        local: [0; 4].map(|_| rng.gen_range(-1.0..1.0)),
        neighbors: (0..n).map(|_| [0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect(),
    }
}

#[test]
fn mean_embedding_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut enc = MeanEmbedding::with_width(5, &mut rng);
    let obs = random_obs(&mut rng);
    let obs = NormalizedObservation {
        neighbors: if obs.neighbors.is_empty() {
            vec![[0.3, -0.2, 0.9]]
        } else {
            obs.neighbors
        },
        ..obs
    };
    let w: Vec<f64> = (0..enc.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = |e: &MeanEmbedding| -> f64 { e.embed(&obs).iter().zip(&w).map(|(a, b)| a * b).sum() };
    let (_, cache) = enc.embed_cached(&obs);
    let mut grads = Gradients::zeros_like(&enc.net);
    enc.backward(&cache, &w, &mut grads);
    for p in 0..enc.net.num_params() {
        let orig = enc.net.params()[p];
        enc.net.params_mut()[p] = orig + H;
        let up = f(&enc);
        enc.net.params_mut()[p] = orig - H;
        let down = f(&enc);
        enc.net.params_mut()[p] = orig;
        let e = rel_err(grads.0[p], (up - down) / (2.0 * H));
        assert!(e < 1e-4, "param {p}: {e:e}");
    }
}

fn actor_params(p: &mut PolicyBundle) -> &mut [f64] {
    p.actor.params_mut()
}
fn critic_params(p: &mut PolicyBundle) -> &mut [f64] {
    p.critic.params_mut()
}
fn encoder_params(p: &mut PolicyBundle) -> &mut [f64] {
    p.encoder.net.params_mut()
}
fn log_std_params(p: &mut PolicyBundle) -> &mut [f64] {
    &mut p.log_std
}

#[test]
fn ppo_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut policy = PolicyBundle::new(ActionBox::apf_scales(), &mut rng);
    let config = PpoConfig::default();
    let obs: Vec<NormalizedObservation> = (0..6).map(|_| random_obs(&mut rng)).collect();
    let raws: Vec<Vec<f64>> = obs
        .iter()
        .map(|o| policy.sample_action(o, &mut rng, false).raw)
        .collect();
    // old log-probs near the current ones keep most ratios inside the clip band
    let olds: Vec<f64> = obs
        .iter()
        .zip(&raws)
        .map(|(o, r)| {
            let mean = policy.actor.forward(&policy.encoder.embed(o)).unwrap();
            policy.log_prob(&mean, r) + rng.gen_range(-0.1..0.1)
        })
        .collect();
    let samples: Vec<PreparedSample<'_>> = (0..obs.len())
        .map(|i| PreparedSample {
            obs: &obs[i],
            raw_action: &raws[i],
            old_log_prob: olds[i],
            advantage: rng.gen_range(-1.0..1.0),
            target: rng.gen_range(-1.0..1.0),
        })
        .collect();
    let batch: Vec<&PreparedSample<'_>> = samples.iter().collect();
    let loss = |p: &PolicyBundle| {
        let (_, s) = p.loss_gradients(&batch, &config).unwrap();
        s.policy_loss + config.c1 * s.value_loss - config.c2 * s.entropy
    };
    let (g, _) = policy.loss_gradients(&batch, &config).unwrap();

    let mut worst: f64 = 0.0;
    macro_rules! check {
        ($params:expr, $grad:expr, $idx:expr) => {{
            let i = $idx;
            let orig = $params(&mut policy)[i];
            $params(&mut policy)[i] = orig + H;
            let up = loss(&policy);
            $params(&mut policy)[i] = orig - H;
            let down = loss(&policy);
            $params(&mut policy)[i] = orig;
            worst = worst.max(rel_err($grad[i], (up - down) / (2.0 * H)));
        }};
    }
    for _ in 0..15 {
        let i = rng.gen_range(0..g.actor.0.len());
        check!(actor_params, g.actor.0, i);
        let i = rng.gen_range(0..g.critic.0.len());
        check!(critic_params, g.critic.0, i);
        let i = rng.gen_range(0..g.encoder.0.len());
        check!(encoder_params, g.encoder.0, i);
    }
    for i in 0..g.log_std.len() {
        check!(log_std_params, g.log_std, i);
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}
