//! Symbolic bound propagation.
//!
//! For every layer `t` the engine keeps two affine forms over the network
//! input, `A_L·x + B_L ≤ φ^t(x) ≤ A_U·x + B_U`, valid on the input box.
//! Concrete pre-activation intervals come from extremising those forms over
//! the box; the per-neuron relaxation of layer `t` is then pushed through
//! `W^{t+1}` with the weight matrix split by sign, so that positive weights
//! pick up the lower line for the lower form and negative weights the upper
//! one.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg::{axpy, box_extreme, AffineForm, Direction, Matrix, Vector};
use crate::network::{InputSpec, Layer, Network};
use crate::strategy::{relax, LinearBoundPair, StrategyId};

/// Input-linear lower and upper forms of one layer's pre-activations.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicBounds {
    pub lower: AffineForm,
    pub upper: AffineForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerInterval {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LayerInterval {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

/// Concrete pre-activation intervals of every layer, output layer included.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalTrace {
    pub layers: Vec<LayerInterval>,
}

impl IntervalTrace {
    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(LayerInterval::len).sum()
    }

    /// `layer,index,lower,upper` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "layer,index,lower,upper")?;
        for (t, layer) in self.layers.iter().enumerate() {
            for (r, (l, u)) in layer.lower.iter().zip(&layer.upper).enumerate() {
                writeln!(out, "{t},{r},{l:.12e},{u:.12e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub output: SymbolicBounds,
    pub trace: IntervalTrace,
    /// One pair per neuron of every hidden layer.
    pub pairs: Vec<Vec<LinearBoundPair>>,
    /// `(layer, neuron)` positions where the strategy used its fallback rule.
    pub fallbacks: Vec<(usize, usize)>,
}

/// Where the per-neuron relaxations come from.
#[derive(Debug, Clone, Copy)]
pub enum Relaxations<'a> {
    Strategy(StrategyId),
    /// Caller-supplied pairs, one vector per hidden layer. They must be sound
    /// on the intervals this propagation produces.
    Fixed(&'a [Vec<LinearBoundPair>]),
}

impl From<StrategyId> for Relaxations<'_> {
    fn from(s: StrategyId) -> Self {
        Relaxations::Strategy(s)
    }
}

/// Propagate with a strategy, sequentially.
pub fn propagate(net: &Network, spec: &InputSpec, strategy: StrategyId) -> Result<PropagationResult> {
    propagate_with(net, spec, Relaxations::Strategy(strategy), Execution::Sequential)
}

pub fn propagate_with(
    net: &Network,
    spec: &InputSpec,
    relaxations: Relaxations<'_>,
    mode: Execution,
) -> Result<PropagationResult> {
    spec.check(net)?;
    let (lo, hi) = spec.bounds();
    let layers = net.dense_layers();
    if let Relaxations::Fixed(p) = relaxations {
        if p.len() != layers.len() - 1 {
            return Err(Error::dim("fixed relaxations (hidden layers)", layers.len() - 1, p.len()));
        }
    }

    let first = &layers[0];
    let mut bounds = SymbolicBounds {
        lower: AffineForm {
            a: first.w.clone(),
            b: first.b.clone(),
        },
        upper: AffineForm {
            a: first.w.clone(),
            b: first.b.clone(),
        },
    };
    let mut trace = IntervalTrace::default();
    let mut pairs: Vec<Vec<LinearBoundPair>> = Vec::with_capacity(layers.len() - 1);
    let mut fallbacks = Vec::new();

    for t in 0..layers.len() {
        if t > 0 {
            bounds = push_through(&bounds, &pairs[t - 1], &layers[t].w, &layers[t].b, mode);
        }
        let interval = concrete_interval(&bounds, &lo, &hi, mode);
        if t + 1 < layers.len() {
            let kind = layers[t].activation;
            let layer_pairs: Vec<LinearBoundPair> = match relaxations {
                Relaxations::Strategy(strategy) => {
                    let relaxed = exec::map_range(mode, interval.len(), |r| {
                        relax(strategy, kind, interval.lower[r], interval.upper[r]).map_err(|e| e.at_neuron(t, r))
                    });
                    let mut out = Vec::with_capacity(relaxed.len());
                    for (r, res) in relaxed.into_iter().enumerate() {
                        let rel = res?;
                        if rel.fallback {
                            fallbacks.push((t, r));
                        }
                        out.push(rel.pair);
                    }
                    out
                }
                Relaxations::Fixed(p) => {
                    if p[t].len() != interval.len() {
                        return Err(Error::dim("fixed relaxations (neurons)", interval.len(), p[t].len()));
                    }
                    p[t].clone()
                }
            };
            pairs.push(layer_pairs);
        }
        trace.layers.push(interval);
    }
    Ok(PropagationResult {
        output: bounds,
        trace,
        pairs,
        fallbacks,
    })
}

fn concrete_interval(bounds: &SymbolicBounds, lo: &[f64], hi: &[f64], mode: Execution) -> LayerInterval {
    let n = bounds.lower.b.len();
    let pairs = exec::map_range(mode, n, |r| {
        let l = box_extreme(bounds.lower.a.row(r), bounds.lower.b[r], lo, hi, Direction::Min);
        let u = box_extreme(bounds.upper.a.row(r), bounds.upper.b[r], lo, hi, Direction::Max);
        // On a collapsed box the two forms agree up to rounding.
        (l.min(u), u.max(l))
    });
    let (lower, upper) = pairs.into_iter().unzip();
    LayerInterval { lower, upper }
}

/// One recurrence step: relax the current layer with `pairs` and apply
/// the next layer's weights.
fn push_through(bounds: &SymbolicBounds, pairs: &[LinearBoundPair], w: &Matrix, b: &Vector, mode: Execution) -> SymbolicBounds {
    let n_in = bounds.lower.a.cols();
    let prev = pairs.len();
    // α ⊙ A and α ⊙ B + β for both lines.
    let mut scaled_lower = Vec::with_capacity(prev * n_in);
    let mut scaled_upper = Vec::with_capacity(prev * n_in);
    let mut off_lower = Vec::with_capacity(prev);
    let mut off_upper = Vec::with_capacity(prev);
    for (j, p) in pairs.iter().enumerate() {
        scaled_lower.extend(bounds.lower.a.row(j).iter().map(|v| p.alpha_l * v));
        scaled_upper.extend(bounds.upper.a.row(j).iter().map(|v| p.alpha_u * v));
        off_lower.push(p.alpha_l * bounds.lower.b[j] + p.beta_l);
        off_upper.push(p.alpha_u * bounds.upper.b[j] + p.beta_u);
    }
    let rows = exec::map_range(mode, w.rows(), |r| {
        let mut lo_row = vec![0.0; n_in];
        let mut up_row = vec![0.0; n_in];
        let mut lo_off = b[r];
        let mut up_off = b[r];
        for (j, &wj) in w.row(r).iter().enumerate() {
            let sl = &scaled_lower[j * n_in..(j + 1) * n_in];
            let su = &scaled_upper[j * n_in..(j + 1) * n_in];
            if wj > 0.0 {
                axpy(wj, sl, &mut lo_row);
                axpy(wj, su, &mut up_row);
                lo_off += wj * off_lower[j];
                up_off += wj * off_upper[j];
            } else if wj < 0.0 {
                axpy(wj, su, &mut lo_row);
                axpy(wj, sl, &mut up_row);
                lo_off += wj * off_upper[j];
                up_off += wj * off_lower[j];
            }
        }
        (lo_row, up_row, lo_off, up_off)
    });
    let mut la = Vec::with_capacity(w.rows() * n_in);
    let mut ua = Vec::with_capacity(w.rows() * n_in);
    let mut lb = Vec::with_capacity(w.rows());
    let mut ub = Vec::with_capacity(w.rows());
    for (lr, ur, lo, up) in rows {
        la.extend(lr);
        ua.extend(ur);
        lb.push(lo);
        ub.push(up);
    }
    SymbolicBounds {
        lower: AffineForm {
            a: Matrix::from_raw(w.rows(), n_in, la),
            b: Vector::from_raw(lb),
        },
        upper: AffineForm {
            a: Matrix::from_raw(w.rows(), n_in, ua),
            b: Vector::from_raw(ub),
        },
    }
}

/// Concrete `[min f_L, max f_U]` for every output over the input box.
pub fn concrete_output_range(result: &PropagationResult, spec: &InputSpec) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = spec.bounds();
    let out = &result.output;
    (0..out.lower.b.len())
        .map(|s| {
            (
                box_extreme(out.lower.a.row(s), out.lower.b[s], &lo, &hi, Direction::Min),
                box_extreme(out.upper.a.row(s), out.upper.b[s], &lo, &hi, Direction::Max),
            )
        })
        .unzip()
}

/// The network extended by one identity output computing `f_{s0} − f_s`.
pub fn build_margin_network(net: &Network, s0: usize, s: usize) -> Result<Network> {
    let m = net.num_labels();
    for label in [s0, s] {
        if label >= m {
            return Err(Error::Label { label, num_labels: m });
        }
    }
    if s0 == s {
        return Err(Error::Domain(format!("margin needs two distinct labels, got {s0} twice")));
    }
    let mut row = vec![0.0; m];
    row[s0] = 1.0;
    row[s] = -1.0;
    let mut layers = net.layers().to_vec();
    layers.push(Layer::affine(
        Matrix::new(1, m, row)?,
        Vector::zeros(1),
        crate::activation::ActivationKind::Identity,
    ));
    Network::new(layers, net.input_dim(), 1)
}

/// Relative interval change of one neuron between two traces. `None`
/// marks a ratio whose denominator is within 1e-12 of zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceMetric {
    /// `((u − l) − (u′ − l′)) / (u′ − l′)`
    pub width: Option<f64>,
    /// `(l − l′) / l′`
    pub lower: Option<f64>,
    /// `(u − u′) / u′`
    pub upper: Option<f64>,
}

const RATIO_FLOOR: f64 = 1e-12;

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den.abs() > RATIO_FLOOR).then(|| num / den)
}

/// Per-neuron metrics of `a` relative to the reference trace `b`.
pub fn compare_traces(a: &IntervalTrace, b: &IntervalTrace) -> Result<Vec<Vec<TraceMetric>>> {
    if a.layers.len() != b.layers.len() {
        return Err(Error::dim("trace layers", b.layers.len(), a.layers.len()));
    }
    a.layers
        .iter()
        .zip(&b.layers)
        .map(|(la, lb)| {
            if la.len() != lb.len() {
                return Err(Error::dim("trace layer width", lb.len(), la.len()));
            }
            Ok((0..la.len())
                .map(|r| {
                    let (l, u) = (la.lower[r], la.upper[r]);
                    let (lp, up) = (lb.lower[r], lb.upper[r]);
                    TraceMetric {
                        width: ratio((u - l) - (up - lp), up - lp),
                        lower: ratio(l - lp, lp),
                        upper: ratio(u - up, up),
                    }
                })
                .collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::generate::{random_network, NetGenConfig, WeightMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, spec: &InputSpec) -> Vec<f64> {
        let (lo, hi) = spec.bounds();
        lo.iter().zip(&hi).map(|(a, b)| if a < b { rng.gen_range(*a..=*b) } else { *a }).collect()
    }

    fn gen(seed: u64, dims: &[usize], act: ActivationKind, mode: WeightMode) -> Network {
        random_network(&NetGenConfig {
            input_dim: dims[0],
            hidden: dims[1..dims.len() - 1].to_vec(),
            num_labels: dims[dims.len() - 1],
            activation: act,
            mode,
            seed,
        })
    }

    #[test]
    fn zero_radius_collapses_everything() {
        let net = gen(3, &[3, 5, 4, 2], ActivationKind::Sigmoid, WeightMode::Mixed);
        let spec = InputSpec::new(vec![0.2, -0.4, 0.9], 0.0).unwrap();
        let exact = net.pre_activations(&spec.x0).unwrap();
        for strategy in StrategyId::ALL {
            let res = propagate(&net, &spec, strategy).unwrap();
            for (layer, ex) in res.trace.layers.iter().zip(&exact) {
                for r in 0..layer.len() {
                    assert!((layer.upper[r] - layer.lower[r]).abs() <= 1e-12);
                    assert!((layer.lower[r] - ex[r]).abs() <= 1e-12);
                }
            }
            let (lo, hi) = concrete_output_range(&res, &spec);
            let f = net.forward(&spec.x0).unwrap();
            for s in 0..2 {
                assert!((lo[s] - f[s]).abs() <= 1e-12 && (hi[s] - f[s]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn single_affine_layer_is_exact() {
        let w = mat(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let b = Vector::new(vec![0.1, -0.2]).unwrap();
        let net = Network::from_dense(vec![(w.clone(), b.clone(), ActivationKind::Identity)]).unwrap();
        let res = propagate(&net, &InputSpec::new(vec![0.0, 0.0], 0.5).unwrap(), StrategyId::NeuronWiseTightest).unwrap();
        assert_eq!(res.output.lower.a, w);
        assert_eq!(res.output.upper.a, w);
        assert_eq!(res.output.lower.b, b);
        assert_eq!(res.output.upper.b, b);
        assert!(res.pairs.is_empty());
    }

    #[test]
    fn small_net_encloses_monte_carlo_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w1: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let w2: Vec<Vec<f64>> = vec![(0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()];
        let net = Network::from_dense(vec![
            (Matrix::from_rows(&w1).unwrap(), Vector::new(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).unwrap(), ActivationKind::Sigmoid),
            (Matrix::from_rows(&w2).unwrap(), Vector::new(vec![rng.gen_range(-1.0..1.0)]).unwrap(), ActivationKind::Identity),
        ])
        .unwrap();
        let spec = InputSpec::new(vec![0.3, -0.2], 0.1).unwrap();
        let (mut mc_lo, mut mc_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..100_000 {
            let x = random_point(&mut rng, &spec);
            let y = net.forward(&x).unwrap()[0];
            mc_lo = mc_lo.min(y);
            mc_hi = mc_hi.max(y);
        }
        for strategy in StrategyId::ALL {
            let res = propagate(&net, &spec, strategy).unwrap();
            let (lo, hi) = concrete_output_range(&res, &spec);
            assert!(lo[0] <= mc_lo && mc_hi <= hi[0], "{strategy}: [{}, {}] vs [{mc_lo}, {mc_hi}]", lo[0], hi[0]);
        }
    }

    #[test]
    fn symbolic_bounds_hold_at_every_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (seed, act) in [(1, ActivationKind::Sigmoid), (2, ActivationKind::Tanh), (3, ActivationKind::Arctan), (4, ActivationKind::ReLU)] {
            let net = gen(seed, &[4, 6, 5, 3], act, WeightMode::Mixed);
            let x0: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let spec = InputSpec::new(x0, 0.05).unwrap();
            for strategy in StrategyId::ALL {
                // Capture the per-layer forms by propagating truncated views.
                let res = propagate(&net, &spec, strategy).unwrap();
                for _ in 0..1000 {
                    let x = random_point(&mut rng, &spec);
                    let pre = net.pre_activations(&x).unwrap();
                    for (layer, z) in res.trace.layers.iter().zip(&pre) {
                        for r in 0..z.len() {
                            assert!(layer.lower[r] <= z[r] + 1e-9 && z[r] <= layer.upper[r] + 1e-9);
                        }
                    }
                    let lower = res.output.lower.eval(&x).unwrap();
                    let upper = res.output.upper.eval(&x).unwrap();
                    let out = pre.last().unwrap();
                    for s in 0..out.len() {
                        assert!(lower[s] <= out[s] + 1e-9 && out[s] <= upper[s] + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn intervals_nest_with_radius() {
        let net = gen(11, &[3, 8, 8, 3], ActivationKind::Tanh, WeightMode::Mixed);
        let x0 = vec![0.4, 0.1, 0.7];
        for strategy in StrategyId::ALL {
            let small = propagate(&net, &InputSpec::new(x0.clone(), 0.01).unwrap(), strategy).unwrap();
            let large = propagate(&net, &InputSpec::new(x0.clone(), 0.03).unwrap(), strategy).unwrap();
            for (s, l) in small.trace.layers.iter().zip(&large.trace.layers) {
                for r in 0..s.len() {
                    assert!(l.lower[r] <= s.lower[r] + 1e-12 && s.upper[r] <= l.upper[r] + 1e-12, "{strategy}");
                }
            }
        }
    }

    #[test]
    fn newise_is_exact_on_qualifying_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (seed, act) in [(21, ActivationKind::Sigmoid), (22, ActivationKind::Tanh), (23, ActivationKind::Arctan)] {
            let net = gen(seed, &[4, 7, 6, 3], act, WeightMode::Qualifying);
            let signs = crate::network::first_layer_column_signs(&net);
            let x0: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let spec = InputSpec::new(x0.clone(), 0.08).unwrap();
            let res = propagate(&net, &spec, StrategyId::NeuronWiseTightest).unwrap();
            let low_corner: Vec<f64> = x0.iter().zip(&signs).map(|(c, s)| c - spec.eps * s).collect();
            let high_corner: Vec<f64> = x0.iter().zip(&signs).map(|(c, s)| c + spec.eps * s).collect();
            let pre_lo = net.pre_activations(&low_corner).unwrap();
            let pre_hi = net.pre_activations(&high_corner).unwrap();
            for (t, layer) in res.trace.layers.iter().enumerate() {
                for r in 0..layer.len() {
                    assert!((layer.lower[r] - pre_lo[t][r]).abs() <= 1e-9, "{act} layer {t}");
                    assert!((layer.upper[r] - pre_hi[t][r]).abs() <= 1e-9, "{act} layer {t}");
                }
            }
        }
    }

    #[test]
    fn fixed_relaxations_reproduce_strategy() {
        let net = gen(5, &[3, 4, 2], ActivationKind::Sigmoid, WeightMode::Mixed);
        let spec = InputSpec::new(vec![0.1, 0.2, 0.3], 0.1).unwrap();
        let res = propagate(&net, &spec, StrategyId::MinimalArea).unwrap();
        let again = propagate_with(&net, &spec, Relaxations::Fixed(&res.pairs), Execution::Sequential).unwrap();
        assert_eq!(res.output, again.output);
        let bad = vec![vec![LinearBoundPair::IDENTITY; 3]];
        assert!(propagate_with(&net, &spec, Relaxations::Fixed(&bad), Execution::Sequential).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let net = gen(9, &[5, 12, 9, 4], ActivationKind::Sigmoid, WeightMode::Mixed);
        let spec = InputSpec::new(vec![0.5; 5], 0.02).unwrap();
        let a = propagate_with(&net, &spec, StrategyId::TaylorMidpoint.into(), Execution::Sequential).unwrap();
        let b = propagate_with(&net, &spec, StrategyId::TaylorMidpoint.into(), Execution::Parallel).unwrap();
        assert_eq!(a.output, b.output);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn parallel_fallbacks_are_recorded() {
        let net = gen(4, &[3, 10, 2], ActivationKind::Sigmoid, WeightMode::Mixed);
        let spec = InputSpec::new(vec![0.0, 0.0, 0.0], 3.0).unwrap();
        let res = propagate(&net, &spec, StrategyId::ParallelTangent).unwrap();
        assert!(!res.fallbacks.is_empty());
        for &(t, r) in &res.fallbacks {
            let l = res.trace.layers[t].lower[r];
            let u = res.trace.layers[t].upper[r];
            assert!(l < 0.0 && u > 0.0);
        }
    }

    #[test]
    fn margin_network_examples() {
        let net = gen(6, &[3, 5, 2], ActivationKind::Sigmoid, WeightMode::Mixed);
        let margin = build_margin_network(&net, 0, 1).unwrap();
        let last = margin.dense_layers().last().unwrap();
        assert_eq!(last.w.row(0), &[1.0, -1.0]);
        assert_eq!(last.b.as_slice(), &[0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = net.forward(&x).unwrap();
            let g = margin.forward(&x).unwrap();
            assert!((g[0] - (f[0] - f[1])).abs() <= 1e-15);
        }
        assert!(matches!(build_margin_network(&net, 0, 2), Err(Error::Label { .. })));
        assert!(build_margin_network(&net, 1, 1).is_err());
    }

    #[test]
    fn example_two_topology_certifies_through_margin() {
        // x3 = σ(x1 + x2), x4 = σ(x1 − x2) on [−1, 1]²; x5, x6 non-negative
        // combinations; the auxiliary x7 = x5 − x6.
        let net = Network::from_dense(vec![
            (mat(&[&[1.0, 1.0], &[1.0, -1.0]]), Vector::zeros(2), ActivationKind::Sigmoid),
            (mat(&[&[4.0, 4.0], &[0.0, 1.0]]), Vector::new(vec![0.0, 0.0]).unwrap(), ActivationKind::Identity),
        ])
        .unwrap();
        let spec = InputSpec::new(vec![0.0, 0.0], 1.0).unwrap();
        let margin = build_margin_network(&net, 0, 1).unwrap();
        let res = propagate(&margin, &spec, StrategyId::NeuronWiseTightest).unwrap();
        let (lo, _) = concrete_output_range(&res, &spec);
        assert!(lo[0] > 0.0);
        // hidden intervals are [−2, 2] for both neurons
        assert_eq!(res.trace.layers[0].lower, vec![-2.0, -2.0]);
        assert_eq!(res.trace.layers[0].upper, vec![2.0, 2.0]);
    }

    #[test]
    fn trace_metric_examples() {
        let net = gen(31, &[3, 6, 5, 2], ActivationKind::Sigmoid, WeightMode::Qualifying);
        let spec = InputSpec::new(vec![0.3, 0.6, 0.2], 0.05).unwrap();
        let a = propagate(&net, &spec, StrategyId::NeuronWiseTightest).unwrap().trace;
        let same = compare_traces(&a, &a).unwrap();
        for m in same.iter().flatten() {
            for v in [m.width, m.lower, m.upper].into_iter().flatten() {
                assert_eq!(v, 0.0);
            }
        }
        let b = propagate(&net, &spec, StrategyId::TaylorMidpoint).unwrap().trace;
        for m in compare_traces(&a, &b).unwrap().iter().flatten() {
            if let Some(w) = m.width {
                assert!(w <= 1e-9);
            }
        }
        let inner = IntervalTrace {
            layers: vec![LayerInterval { lower: vec![0.5, -1.0], upper: vec![1.0, 1.0] }],
        };
        let outer = IntervalTrace {
            layers: vec![LayerInterval { lower: vec![0.25, -2.0], upper: vec![2.0, 1.5] }],
        };
        let m = compare_traces(&inner, &outer).unwrap();
        assert!(m[0].iter().all(|t| t.width.unwrap() < 0.0));
        let zero = IntervalTrace {
            layers: vec![LayerInterval { lower: vec![0.0, 1.0], upper: vec![0.0, 1.0] }],
        };
        let m = compare_traces(&zero, &zero).unwrap();
        assert_eq!(m[0][0].width, None);
        assert_eq!(m[0][0].lower, None);
        assert_eq!(m[0][1].lower, Some(0.0));
        assert!(compare_traces(&zero, &a).is_err());
    }

    #[test]
    fn trace_csv_has_row_per_neuron() {
        let net = gen(1, &[2, 3, 4, 2], ActivationKind::Tanh, WeightMode::Mixed);
        let res = propagate(&net, &InputSpec::new(vec![0.0, 0.0], 0.1).unwrap(), StrategyId::MinimalArea).unwrap();
        let mut buf = Vec::new();
        res.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 + 4 + 2);
        assert!(text.starts_with("layer,index,lower,upper\n0,0,"));
    }
}
