//! Tangent-point search for networks with one hidden layer.
//!
//! For a single output row `c` (and constant `c0`) the lower bound of
//! `c·σ(W¹x + b¹) + c0` over the input box is
//!
//! ```text
//! G(d) = min_x Σ_r c_r (α_r(d_r)·z_r(x) + β_r(d_r)) + c0
//! ```
//!
//! where neuron `r` contributes its lower line when `c_r > 0` and its upper
//! line when `c_r < 0`. Each optimisable line is the tangent at a cut-off
//! `d_r`, so `α = σ′(d)` and `β = σ(d) − d·σ′(d)`, and
//! `∂G/∂d_r = c_r·σ″(d_r)·(z_r(x̂) − d_r)` at the minimising corner `x̂`.
//! Upper bounds are handled as `max(c·y) = −min(−c·y)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{act_second_deriv, tangent_with_slope, ActivationKind, Branch, TangentSolution};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg::{box_extreme, Direction, Matrix, Vector};
use crate::network::{InputSpec, Network};
use crate::strategy::{lower_tangent_range, relax, upper_tangent_range, LinearBoundPair, StrategyId, DEGENERATE_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Gradient rounds per candidate.
    pub rounds: usize,
    /// Initial step on the cut-off abscissa.
    pub step_size: f64,
    /// Random starting points in addition to the strategy warm starts.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            step_size: 0.05,
            restarts: 3,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Domain(format!("step size must be positive, got {}", self.step_size)));
        }
        Ok(())
    }
}

/// Which lines of a neuron are not tangents and so not optimisable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedSide {
    None,
    Upper,
    Lower,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronParam {
    pub neuron: usize,
    pub l: f64,
    pub u: f64,
    pub lower_range: Option<(f64, f64)>,
    pub upper_range: Option<(f64, f64)>,
    pub lower_cutoff: Option<f64>,
    pub upper_cutoff: Option<f64>,
    /// Neuron-wise tightest pair; supplies any line without a cut-off.
    pub fixed: LinearBoundPair,
}

impl NeuronParam {
    pub fn fixed_side(&self) -> FixedSide {
        match (self.upper_range.is_some(), self.lower_range.is_some()) {
            (true, true) => FixedSide::None,
            (false, true) => FixedSide::Upper,
            (true, false) => FixedSide::Lower,
            (false, false) => FixedSide::Both,
        }
    }

    /// Lines at the current cut-offs.
    pub fn pair(&self, kind: ActivationKind) -> LinearBoundPair {
        let mut p = self.fixed;
        if let Some(d) = self.upper_cutoff {
            let t = TangentSolution::at(kind, d);
            p.alpha_u = t.slope;
            p.beta_u = t.intercept;
        }
        if let Some(d) = self.lower_cutoff {
            let t = TangentSolution::at(kind, d);
            p.alpha_l = t.slope;
            p.beta_l = t.intercept;
        }
        p
    }
}

struct Problem<'a> {
    kind: ActivationKind,
    w1: &'a Matrix,
    b1: &'a Vector,
    w2: &'a Matrix,
    b2: &'a Vector,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Cut-offs unset.
    params: Vec<NeuronParam>,
}

impl<'a> Problem<'a> {
    fn new(net: &'a Network, spec: &InputSpec) -> Result<Self> {
        if net.hidden_layers() != 1 {
            return Err(Error::Structure(format!(
                "tangent-point search needs exactly one hidden layer, network has {}",
                net.hidden_layers()
            )));
        }
        spec.check(net)?;
        let layers = net.dense_layers();
        let (hidden, out) = (&layers[0], &layers[1]);
        let (lo, hi) = spec.bounds();
        let kind = hidden.activation;
        let params = (0..hidden.w.rows())
            .map(|r| {
                let row = hidden.w.row(r);
                let l = box_extreme(row, hidden.b[r], &lo, &hi, Direction::Min);
                let u = box_extreme(row, hidden.b[r], &lo, &hi, Direction::Max);
                let (l, u) = (l.min(u), u.max(l));
                neuron_param(kind, r, l, u).map_err(|e| e.at_neuron(0, r))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            w1: &hidden.w,
            b1: &hidden.b,
            w2: &out.w,
            b2: &out.b,
            lo,
            hi,
            params,
        })
    }

    fn n_hidden(&self) -> usize {
        self.params.len()
    }

    /// Lower bound of `c·y + c0` under `pairs`, accumulated in the same
    /// order as the propagation engine so that equal lines give equal
    /// values bit for bit.
    fn assemble(&self, c: &[f64], c0: f64, pairs: &[LinearBoundPair]) -> (Vec<f64>, f64) {
        let mut a = vec![0.0; self.w1.cols()];
        let mut b = c0;
        for (j, &cj) in c.iter().enumerate() {
            let p = &pairs[j];
            let (alpha, beta) = if cj > 0.0 {
                (p.alpha_l, p.beta_l)
            } else if cj < 0.0 {
                (p.alpha_u, p.beta_u)
            } else {
                continue;
            };
            for (ai, wi) in a.iter_mut().zip(self.w1.row(j)) {
                *ai += cj * (alpha * wi);
            }
            b += cj * (alpha * self.b1[j] + beta);
        }
        (a, b)
    }

    fn lower_value(&self, c: &[f64], c0: f64, pairs: &[LinearBoundPair]) -> f64 {
        let (a, b) = self.assemble(c, c0, pairs);
        box_extreme(&a, b, &self.lo, &self.hi, Direction::Min)
    }

    /// Minimising corner; coordinates with a zero coefficient sit at the
    /// box centre (zero subgradient).
    fn argmin_corner(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&ai, (&l, &h))| {
                if ai > 0.0 {
                    l
                } else if ai < 0.0 {
                    h
                } else {
                    0.5 * (l + h)
                }
            })
            .collect()
    }

    /// Objective for row `c` restricted to the optimisable coordinates.
    fn row(&self, c: Vec<f64>, c0: f64) -> RowObjective<'_, 'a> {
        let mut vars = Vec::new();
        for (r, p) in self.params.iter().enumerate() {
            let (range, side) = if c[r] > 0.0 {
                (p.lower_range, Side::Lower)
            } else if c[r] < 0.0 {
                (p.upper_range, Side::Upper)
            } else {
                continue;
            };
            if let Some(range) = range {
                vars.push(Var { neuron: r, side, range });
            }
        }
        RowObjective { problem: self, c, c0, vars }
    }

    fn base_pairs(&self) -> Vec<LinearBoundPair> {
        self.params.iter().map(|p| p.fixed).collect()
    }
}

fn neuron_param(kind: ActivationKind, neuron: usize, l: f64, u: f64) -> Result<NeuronParam> {
    let fixed = relax(StrategyId::NeuronWiseTightest, kind, l, u)?.pair;
    let (lower_range, upper_range) = if kind.is_s_shaped() && u - l > DEGENERATE_WIDTH {
        (lower_tangent_range(kind, l, u)?, upper_tangent_range(kind, l, u)?)
    } else {
        (None, None)
    };
    Ok(NeuronParam {
        neuron,
        l,
        u,
        lower_range,
        upper_range,
        lower_cutoff: None,
        upper_cutoff: None,
        fixed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy)]
struct Var {
    neuron: usize,
    side: Side,
    range: (f64, f64),
}

struct RowObjective<'p, 'a> {
    problem: &'p Problem<'a>,
    c: Vec<f64>,
    c0: f64,
    vars: Vec<Var>,
}

impl RowObjective<'_, '_> {
    fn pairs_at(&self, d: &[f64]) -> Vec<LinearBoundPair> {
        let kind = self.problem.kind;
        let mut pairs = self.problem.base_pairs();
        for (v, &dv) in self.vars.iter().zip(d) {
            let t = TangentSolution::at(kind, dv);
            let p = &mut pairs[v.neuron];
            match v.side {
                Side::Lower => {
                    p.alpha_l = t.slope;
                    p.beta_l = t.intercept;
                }
                Side::Upper => {
                    p.alpha_u = t.slope;
                    p.beta_u = t.intercept;
                }
            }
        }
        pairs
    }

    fn value_and_grad(&self, d: &[f64]) -> (f64, Vec<f64>) {
        let p = self.problem;
        let pairs = self.pairs_at(d);
        let (a, b) = p.assemble(&self.c, self.c0, &pairs);
        let value = box_extreme(&a, b, &p.lo, &p.hi, Direction::Min);
        let x = p.argmin_corner(&a);
        let grad = self
            .vars
            .iter()
            .zip(d)
            .map(|(v, &dv)| {
                let z = crate::linalg::dot(p.w1.row(v.neuron), &x) + p.b1[v.neuron];
                self.c[v.neuron] * act_second_deriv(p.kind, dv) * (z - dv)
            })
            .collect();
        (value, grad)
    }

    fn clamp(&self, d: &mut [f64]) {
        for (v, dv) in self.vars.iter().zip(d.iter_mut()) {
            *dv = dv.clamp(v.range.0, v.range.1);
        }
    }

    /// Cut-offs reproducing a pair's slopes where possible, clamped into
    /// the admissible ranges.
    fn warm_start(&self, pairs: &[LinearBoundPair]) -> Vec<f64> {
        let kind = self.problem.kind;
        let mut d: Vec<f64> = self
            .vars
            .iter()
            .map(|v| {
                let (slope, branch) = match v.side {
                    Side::Lower => (pairs[v.neuron].alpha_l, Branch::Left),
                    Side::Upper => (pairs[v.neuron].alpha_u, Branch::Right),
                };
                tangent_with_slope(kind, slope, branch)
                    .map(|t| t.point)
                    .unwrap_or(0.5 * (v.range.0 + v.range.1))
            })
            .collect();
        self.clamp(&mut d);
        d
    }

    /// Sign-based ascent with per-coordinate step sizes: a step grows while
    /// its gradient sign holds and halves when it flips; a rejected move
    /// halves every step. Only improving moves are accepted.
    fn ascend(&self, mut d: Vec<f64>, cfg: &OptimizerConfig) -> (Vec<f64>, f64, Vec<f64>) {
        let (mut value, mut grad) = self.value_and_grad(&d);
        let mut history = vec![value];
        let mut steps = vec![cfg.step_size; d.len()];
        let mut last_sign = vec![0.0; d.len()];
        for _ in 0..cfg.rounds {
            if grad.iter().all(|g| *g == 0.0) {
                break;
            }
            let mut trial = d.clone();
            for i in 0..d.len() {
                let s = sign(grad[i]);
                if s * last_sign[i] > 0.0 {
                    steps[i] *= 1.2;
                } else if s * last_sign[i] < 0.0 {
                    steps[i] *= 0.5;
                }
                last_sign[i] = s;
                trial[i] += s * steps[i];
            }
            self.clamp(&mut trial);
            let (v, g) = self.value_and_grad(&trial);
            if v > value {
                d = trial;
                value = v;
                grad = g;
                history.push(value);
            } else {
                for s in steps.iter_mut() {
                    *s *= 0.5;
                }
                last_sign.fill(0.0);
            }
        }
        (d, value, history)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-neuron intervals, admissible ranges and seeded random cut-offs.
pub fn init_params(net: &Network, spec: &InputSpec, seed: u64) -> Result<Vec<NeuronParam>> {
    let problem = Problem::new(net, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = problem.params;
    for p in params.iter_mut() {
        p.upper_cutoff = p.upper_range.map(|(a, b)| uniform(&mut rng, a, b));
        p.lower_cutoff = p.lower_range.map(|(a, b)| uniform(&mut rng, a, b));
    }
    Ok(params)
}

fn uniform(rng: &mut ChaCha8Rng, a: f64, b: f64) -> f64 {
    if a < b {
        rng.gen_range(a..=b)
    } else {
        a
    }
}

fn check_label(net: &Network, s: usize) -> Result<()> {
    if s >= net.num_labels() {
        return Err(Error::Label {
            label: s,
            num_labels: net.num_labels(),
        });
    }
    Ok(())
}

fn check_params(problem: &Problem<'_>, params: &[NeuronParam]) -> Result<()> {
    if params.len() != problem.n_hidden() {
        return Err(Error::dim("neuron parameters", problem.n_hidden(), params.len()));
    }
    Ok(())
}

/// `min f_{L,s}` over the box with the lines at the given cut-offs.
pub fn objective_lower(params: &[NeuronParam], net: &Network, spec: &InputSpec, s: usize) -> Result<f64> {
    check_label(net, s)?;
    let problem = Problem::new(net, spec)?;
    check_params(&problem, params)?;
    let pairs: Vec<_> = params.iter().map(|p| p.pair(problem.kind)).collect();
    Ok(problem.lower_value(problem.w2.row(s), problem.b2[s], &pairs))
}

/// `max f_{U,s}` over the box with the lines at the given cut-offs.
pub fn objective_upper(params: &[NeuronParam], net: &Network, spec: &InputSpec, s: usize) -> Result<f64> {
    check_label(net, s)?;
    let problem = Problem::new(net, spec)?;
    check_params(&problem, params)?;
    let pairs: Vec<_> = params.iter().map(|p| p.pair(problem.kind)).collect();
    let c: Vec<f64> = problem.w2.row(s).iter().map(|v| -v).collect();
    Ok(-problem.lower_value(&c, -problem.b2[s], &pairs))
}

/// Analytic gradient of [`objective_lower`] (or of [`objective_upper`] when
/// `upper` is set) with respect to each neuron's cut-off on the side that
/// objective uses. Neurons whose side is fixed or unused get 0.
pub fn objective_gradient(params: &[NeuronParam], net: &Network, spec: &InputSpec, s: usize, upper: bool) -> Result<Vec<f64>> {
    check_label(net, s)?;
    let mut problem = Problem::new(net, spec)?;
    check_params(&problem, params)?;
    problem.params = params.to_vec();
    let sgn = if upper { -1.0 } else { 1.0 };
    let c: Vec<f64> = problem.w2.row(s).iter().map(|v| sgn * v).collect();
    let row = problem.row(c, sgn * problem.b2[s]);
    let d: Vec<f64> = row
        .vars
        .iter()
        .map(|v| {
            let p = &params[v.neuron];
            match v.side {
                Side::Lower => p.lower_cutoff,
                Side::Upper => p.upper_cutoff,
            }
            .expect("cut-off set for every admissible range")
        })
        .collect();
    let (_, g) = row.value_and_grad(&d);
    let mut out = vec![0.0; params.len()];
    for (v, gi) in row.vars.iter().zip(g) {
        // d(−G)/dd for the upper objective
        out[v.neuron] = sgn * gi;
    }
    Ok(out)
}

/// What a single optimised bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `min f_{L,s}`
    Lower(usize),
    /// `max f_{U,s}`
    Upper(usize),
    /// `min (f_{s0} − f_s)_L` with the margin row folded into the output layer.
    Margin { s0: usize, s: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    pub target: Target,
    pub value: f64,
    pub pairs: Vec<LinearBoundPair>,
    /// Strategy name for a raw strategy candidate, otherwise `warm:<name>`
    /// or `random:<i>`.
    pub source: String,
    /// Objective after each accepted step of the winning candidate.
    pub history: Vec<f64>,
}

fn optimize_row(problem: &Problem<'_>, target: Target, c: Vec<f64>, c0: f64, cfg: &OptimizerConfig) -> Result<BoundResult> {
    let row = problem.row(c, c0);
    let mut best: Option<BoundResult> = None;
    let mut consider = |value: f64, pairs: Vec<LinearBoundPair>, source: String, history: Vec<f64>| {
        let better = match &best {
            None => true,
            Some(b) => value > b.value + 1e-12 * b.value.abs().max(1.0),
        };
        if better {
            best = Some(BoundResult {
                target,
                value,
                pairs,
                source,
                history,
            });
        }
    };

    let mut raw = Vec::with_capacity(StrategyId::ALL.len());
    for strategy in StrategyId::ALL {
        let pairs = problem
            .params
            .iter()
            .map(|p| relax(strategy, problem.kind, p.l, p.u).map(|r| r.pair).map_err(|e| e.at_neuron(0, p.neuron)))
            .collect::<Result<Vec<_>>>()?;
        let v = problem.lower_value(&row.c, row.c0, &pairs);
        consider(v, pairs.clone(), strategy.name().to_string(), vec![v]);
        raw.push((strategy, pairs));
    }

    if !row.vars.is_empty() {
        let mut starts: Vec<(String, Vec<f64>)> = raw
            .iter()
            .map(|(s, pairs)| (format!("warm:{}", s.name()), row.warm_start(pairs)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for i in 0..cfg.restarts {
            let d = row.vars.iter().map(|v| uniform(&mut rng, v.range.0, v.range.1)).collect();
            starts.push((format!("random:{i}"), d));
        }
        for (source, d0) in starts {
            let (d, value, history) = row.ascend(d0, cfg);
            consider(value, row.pairs_at(&d), source, history);
        }
    }
    Ok(best.expect("at least one candidate"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub s0: usize,
    /// Lower bound for `s0` followed by upper bounds for each competitor,
    /// or one margin bound per competitor in joint mode.
    pub bounds: Vec<BoundResult>,
    /// Worst certified margin over the competitors.
    pub margin_lo: f64,
    /// First competitor whose margin is not positive.
    pub failing_label: Option<usize>,
}

/// Best bounds for the separated robustness check of label `s0`:
/// maximise `min f_{L,s0}` and minimise `max f_{U,s}` for every `s ≠ s0`.
pub fn optimize(net: &Network, spec: &InputSpec, s0: usize, cfg: &OptimizerConfig) -> Result<OptimizeResult> {
    optimize_with(net, spec, s0, cfg, false, Execution::Sequential)
}

/// [`optimize`] with a choice of joint margin objectives and execution mode.
pub fn optimize_with(
    net: &Network,
    spec: &InputSpec,
    s0: usize,
    cfg: &OptimizerConfig,
    joint: bool,
    mode: Execution,
) -> Result<OptimizeResult> {
    cfg.validate()?;
    check_label(net, s0)?;
    let problem = Problem::new(net, spec)?;
    let m = net.num_labels();
    let others: Vec<usize> = (0..m).filter(|&s| s != s0).collect();

    if joint {
        let bounds = exec::map_slice(mode, &others, |&s| {
            let c: Vec<f64> = problem.w2.row(s0).iter().zip(problem.w2.row(s)).map(|(a, b)| a - b).collect();
            optimize_row(&problem, Target::Margin { s0, s }, c, problem.b2[s0] - problem.b2[s], cfg)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let (margin_lo, failing_label) = summarise(others.iter().zip(bounds.iter().map(|b| b.value)));
        return Ok(OptimizeResult {
            s0,
            bounds,
            margin_lo,
            failing_label,
        });
    }

    let mut targets = vec![Target::Lower(s0)];
    targets.extend(others.iter().map(|&s| Target::Upper(s)));
    let mut bounds = exec::map_slice(mode, &targets, |&t| match t {
        Target::Lower(s) => optimize_row(&problem, t, problem.w2.row(s).to_vec(), problem.b2[s], cfg),
        Target::Upper(s) => {
            let c = problem.w2.row(s).iter().map(|v| -v).collect();
            optimize_row(&problem, t, c, -problem.b2[s], cfg)
        }
        Target::Margin { .. } => unreachable!(),
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    // Upper objectives were maximised as −min(−c·y).
    for b in bounds.iter_mut().skip(1) {
        b.value = -b.value;
        for h in b.history.iter_mut() {
            *h = -*h;
        }
    }
    let lower = bounds[0].value;
    let (margin_lo, failing_label) = summarise(others.iter().zip(bounds[1..].iter().map(|b| lower - b.value)));
    Ok(OptimizeResult {
        s0,
        bounds,
        margin_lo,
        failing_label,
    })
}

fn summarise<'a>(margins: impl Iterator<Item = (&'a usize, f64)>) -> (f64, Option<usize>) {
    let mut worst = f64::INFINITY;
    let mut failing = None;
    for (&s, m) in margins {
        if !(m > 0.0) && failing.is_none() {
            failing = Some(s);
        }
        worst = worst.min(m);
    }
    (worst, failing)
}
