//! Seeded random networks and datasets for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::ActivationKind;
use crate::linalg::{Matrix, Vector};
use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Sign-uniform first-layer columns, non-negative later weights.
    Qualifying,
    /// Weights uniform in [−1, 1], with at least one negative weight after
    /// the first layer when there is one.
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetGenConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_labels: usize,
    pub activation: ActivationKind,
    pub mode: WeightMode,
    pub seed: u64,
}

pub fn random_network(cfg: &NetGenConfig) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dims = vec![cfg.input_dim];
    dims.extend(&cfg.hidden);
    dims.push(cfg.num_labels);
    let n_layers = dims.len() - 1;

    let col_signs: Vec<f64> = (0..cfg.input_dim)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let mut layers = Vec::with_capacity(n_layers);
    for t in 0..n_layers {
        let (n_in, n_out) = (dims[t], dims[t + 1]);
        let mut w = Vec::with_capacity(n_in * n_out);
        for _ in 0..n_out {
            for c in 0..n_in {
                let v = match cfg.mode {
                    WeightMode::Qualifying if t == 0 => col_signs[c] * rng.gen_range(0.0..1.0),
                    WeightMode::Qualifying => rng.gen_range(0.0..1.0),
                    WeightMode::Mixed => rng.gen_range(-1.0..1.0),
                };
                w.push(v);
            }
        }
        if cfg.mode == WeightMode::Mixed && t > 0 && !w.iter().any(|&v| v < 0.0) {
            let i = rng.gen_range(0..w.len());
            w[i] = -w[i].abs().max(0.1);
        }
        let b: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let act = if t + 1 == n_layers { ActivationKind::Identity } else { cfg.activation };
        layers.push((Matrix::from_raw(n_out, n_in, w), Vector::from_raw(b), act));
    }
    Network::from_dense(layers).expect("generated shapes are consistent")
}

/// `n` points uniform in `[lo, hi]^d`, labelled with the network's own
/// prediction so that every sample is correctly classified.
pub fn random_dataset(net: &Network, n: usize, range: (f64, f64), seed: u64) -> Vec<(usize, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(range.0..=range.1)).collect();
            let label = net.predict_label(&x).expect("dimension matches");
            (label, x)
        })
        .collect()
}
