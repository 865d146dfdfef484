//! Per-neuron linear relaxations of activations on an input interval.
//!
//! Every strategy maps `(activation, [l, u])` to a pair of lines
//! `h_L(x) = α_L·x + β_L ≤ σ(x) ≤ α_U·x + β_U = h_U(x)` valid on `[l, u]`.
//! Four strategies are provided for S-shaped activations:
//!
//! * [`StrategyId::NeuronWiseTightest`]: lines anchored at the interval's
//!   extreme outputs, `h_U(u) = σ(u)` and `h_L(l) = σ(l)`.
//! * [`StrategyId::MinimalArea`]: lines minimising the enclosed area.
//! * [`StrategyId::ParallelTangent`]: chord plus the parallel tangent.
//! * [`StrategyId::TaylorMidpoint`]: first-order expansion at the midpoint
//!   with offsets widened until sound.
//!
//! ReLU and identity neurons get their exact or standard relaxation no
//! matter which strategy is selected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activation::{
    act_antiderivative, act_deriv, act_eval, tangency_residual, tangent_through_point, tangent_with_slope,
    ActivationKind, Branch, TangentSolution,
};
use crate::error::{Error, Result};

/// Intervals narrower than this are treated as a single point.
pub const DEGENERATE_WIDTH: f64 = 1e-9;

const CASE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearBoundPair {
    pub alpha_u: f64,
    pub beta_u: f64,
    pub alpha_l: f64,
    pub beta_l: f64,
}

impl LinearBoundPair {
    pub const IDENTITY: Self = Self {
        alpha_u: 1.0,
        beta_u: 0.0,
        alpha_l: 1.0,
        beta_l: 0.0,
    };

    pub fn new(upper: (f64, f64), lower: (f64, f64)) -> Self {
        Self {
            alpha_u: upper.0,
            beta_u: upper.1,
            alpha_l: lower.0,
            beta_l: lower.1,
        }
    }

    fn from_lines(upper: TangentSolution, lower: TangentSolution) -> Self {
        Self::new((upper.slope, upper.intercept), (lower.slope, lower.intercept))
    }

    pub fn upper(&self, x: f64) -> f64 {
        self.alpha_u * x + self.beta_u
    }

    pub fn lower(&self, x: f64) -> f64 {
        self.alpha_l * x + self.beta_l
    }

    /// Pair for the point reflection `x ↦ −x, y ↦ −y`: slopes kept,
    /// intercepts negated, upper and lower exchanged.
    pub fn reflected(&self) -> Self {
        Self {
            alpha_u: self.alpha_l,
            beta_u: -self.beta_l,
            alpha_l: self.alpha_u,
            beta_l: -self.beta_u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    /// `σ′(l) < k < σ′(u)`: the chord is an upper bound.
    Case1,
    /// `σ′(u) < k < σ′(l)`: the chord is a lower bound.
    Case2,
    /// `σ′(l) < k` and `σ′(u) < k`: the chord bounds neither side.
    Case3,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyId {
    NeuronWiseTightest,
    MinimalArea,
    ParallelTangent,
    TaylorMidpoint,
}

impl StrategyId {
    pub const ALL: [StrategyId; 4] = [
        StrategyId::NeuronWiseTightest,
        StrategyId::MinimalArea,
        StrategyId::ParallelTangent,
        StrategyId::TaylorMidpoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::NeuronWiseTightest => "newise",
            Self::MinimalArea => "minarea",
            Self::ParallelTangent => "parallel",
            Self::TaylorMidpoint => "taylor",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Domain(format!("unknown strategy `{s}`")))
    }
}

/// Output of a strategy on one neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    pub pair: LinearBoundPair,
    /// Set when the strategy had no rule for the interval and returned the
    /// neuron-wise tightest pair instead.
    pub fallback: bool,
}

/// `σ(u) − σ(l)` without cancellation when both ends saturate.
fn act_diff(kind: ActivationKind, l: f64, u: f64) -> f64 {
    use ActivationKind::*;
    match kind {
        Sigmoid if l >= 0.0 => act_eval(Sigmoid, -l) - act_eval(Sigmoid, -u),
        Tanh if l >= 0.0 => 2.0 * (act_eval(Sigmoid, -2.0 * l) - act_eval(Sigmoid, -2.0 * u)),
        Tanh if u <= 0.0 => act_diff(Tanh, -u, -l),
        Arctan if l * u > -1.0 => ((u - l) / (1.0 + u * l)).atan(),
        _ => act_eval(kind, u) - act_eval(kind, l),
    }
}

/// Slope of the chord through `(l, σ(l))` and `(u, σ(u))`.
pub fn chord_slope(kind: ActivationKind, l: f64, u: f64) -> f64 {
    act_diff(kind, l, u) / (u - l)
}

fn check_interval(l: f64, u: f64) -> Result<()> {
    if !(l <= u) || !l.is_finite() || !u.is_finite() {
        return Err(Error::Domain(format!("invalid interval [{l}, {u}]")));
    }
    Ok(())
}

/// Relation of the endpoint slopes to the chord slope.
///
/// A zero-tolerance tie `σ′(l) = k` means the chord is tangent at `l` and
/// the curve bends above it, so it is grouped with [`CaseKind::Case2`];
/// `σ′(u) = k` likewise goes to [`CaseKind::Case1`].
pub fn classify_case(kind: ActivationKind, l: f64, u: f64) -> Result<CaseKind> {
    check_interval(l, u)?;
    if !kind.is_s_shaped() {
        return Err(Error::Domain(format!("case analysis needs an S-shaped activation, got {kind}")));
    }
    if u - l <= DEGENERATE_WIDTH {
        return Ok(CaseKind::Degenerate);
    }
    let k = chord_slope(kind, l, u);
    // Every S-shaped kind here inflects at 0. On one side the case follows
    // from convexity; comparing slopes there only adds rounding noise on
    // narrow intervals. Saturated chords keep the slope test below.
    if k > 0.0 && k.is_normal() {
        if u <= 0.0 {
            return Ok(CaseKind::Case1);
        }
        if l >= 0.0 {
            return Ok(CaseKind::Case2);
        }
    }
    let tol = CASE_TOL * k.abs().max(f64::MIN_POSITIVE);
    let dl = act_deriv(kind, l) - k;
    let du = act_deriv(kind, u) - k;
    let l_below = dl < -tol;
    let u_below = du < -tol;
    match (l_below, u_below) {
        (true, true) => Ok(CaseKind::Case3),
        (true, false) => Ok(CaseKind::Case1),
        (false, true) => Ok(CaseKind::Case2),
        (false, false) => Err(Error::Domain(format!(
            "both endpoint slopes of {kind} on [{l}, {u}] reach the chord slope {k}"
        ))),
    }
}

fn chord_through_l(kind: ActivationKind, l: f64, u: f64) -> (f64, f64) {
    let k = chord_slope(kind, l, u);
    (k, act_eval(kind, l) - k * l)
}

fn chord_through_u(kind: ActivationKind, l: f64, u: f64) -> (f64, f64) {
    let k = chord_slope(kind, l, u);
    (k, act_eval(kind, u) - k * u)
}

fn tangent_pair(kind: ActivationKind, d: f64) -> LinearBoundPair {
    let t = TangentSolution::at(kind, d);
    LinearBoundPair::from_lines(t, t)
}

/// Horizontal bounds `σ(l) ≤ σ(x) ≤ σ(u)`. Used when the chord slope
/// underflows, where every other rule loses its meaning.
fn flat_pair(kind: ActivationKind, l: f64, u: f64) -> LinearBoundPair {
    LinearBoundPair::new((0.0, act_eval(kind, u)), (0.0, act_eval(kind, l)))
}

/// Cases that need no strategy-specific rule: non-S-shaped activations,
/// points, and saturated intervals.
fn common_cases(kind: ActivationKind, l: f64, u: f64) -> Result<Option<LinearBoundPair>> {
    check_interval(l, u)?;
    match kind {
        ActivationKind::Identity => return Ok(Some(LinearBoundPair::IDENTITY)),
        ActivationKind::ReLU => return Ok(Some(relu_bounds(l, u)?)),
        _ => {}
    }
    if u - l <= DEGENERATE_WIDTH {
        return Ok(Some(tangent_pair(kind, l)));
    }
    if !(chord_slope(kind, l, u) > 0.0) {
        return Ok(Some(flat_pair(kind, l, u)));
    }
    Ok(None)
}

/// Range of tangent points `d ∈ [l, u]` whose tangent is an upper bound of
/// `σ` on `[l, u]`; `None` when no tangent point qualifies.
pub fn upper_tangent_range(kind: ActivationKind, l: f64, u: f64) -> Result<Option<(f64, f64)>> {
    check_interval(l, u)?;
    if u < 0.0 {
        return Ok(None);
    }
    if l >= 0.0 {
        return Ok(Some((l, u)));
    }
    if tangency_residual(kind, l, u) < 0.0 {
        return Ok(None);
    }
    let z = tangent_through_point(kind, l, (0.0, u))?;
    Ok(Some((z.point, u)))
}

/// Range of tangent points `d ∈ [l, u]` whose tangent is a lower bound of
/// `σ` on `[l, u]`.
pub fn lower_tangent_range(kind: ActivationKind, l: f64, u: f64) -> Result<Option<(f64, f64)>> {
    check_interval(l, u)?;
    if l > 0.0 {
        return Ok(None);
    }
    if u <= 0.0 {
        return Ok(Some((l, u)));
    }
    if tangency_residual(kind, u, l) > 0.0 {
        return Ok(None);
    }
    let z = tangent_through_point(kind, u, (l, 0.0))?;
    Ok(Some((l, z.point)))
}

/// Neuron-wise tightest bounds.
pub fn newise_bounds(kind: ActivationKind, l: f64, u: f64) -> Result<LinearBoundPair> {
    if let Some(pair) = common_cases(kind, l, u)? {
        return Ok(pair);
    }
    let at_l = TangentSolution::at(kind, l);
    let at_u = TangentSolution::at(kind, u);
    Ok(match classify_case(kind, l, u) {
        Ok(CaseKind::Case1) => LinearBoundPair::new(chord_through_l(kind, l, u), (at_l.slope, at_l.intercept)),
        Ok(CaseKind::Case2) => LinearBoundPair::new((at_u.slope, at_u.intercept), chord_through_u(kind, l, u)),
        Ok(CaseKind::Case3) => LinearBoundPair::from_lines(at_u, at_l),
        Ok(CaseKind::Degenerate) => tangent_pair(kind, l),
        Err(_) => flat_pair(kind, l, u),
    })
}

/// Area between the tangent at `d` and `σ` over `[l, u]` (unsigned).
pub fn tangent_area(kind: ActivationKind, d: f64, l: f64, u: f64) -> f64 {
    let t = TangentSolution::at(kind, d);
    let line = (u - l) * t.value(0.5 * (l + u));
    let curve = act_antiderivative(kind, u) - act_antiderivative(kind, l);
    (line - curve).abs()
}

/// Enclosed area `∫(h_U − σ) + ∫(σ − h_L) = ∫(h_U − h_L)` of a pair over `[l, u]`.
pub fn enclosed_area(pair: &LinearBoundPair, l: f64, u: f64) -> f64 {
    let m = 0.5 * (l + u);
    (u - l) * (pair.upper(m) - pair.lower(m))
}

/// Tangent point minimising the enclosed area within an admissible range.
///
/// The area of the tangent at `d` has derivative `(u − l)·σ″(d)·(m − d)`
/// with `m` the midpoint. Upper tangents live where `σ″ ≤ 0` and lower
/// tangents where `σ″ ≥ 0`, so on either admissible range the area is
/// unimodal with its minimum at `m` clamped into the range.
fn min_area_point(range: (f64, f64), l: f64, u: f64) -> f64 {
    (0.5 * (l + u)).clamp(range.0, range.1)
}

/// Bounds minimising the enclosed area subject to soundness.
pub fn minimal_area_bounds(kind: ActivationKind, l: f64, u: f64) -> Result<LinearBoundPair> {
    if let Some(pair) = common_cases(kind, l, u)? {
        return Ok(pair);
    }
    let case = match classify_case(kind, l, u) {
        Ok(c) => c,
        Err(_) => return Ok(flat_pair(kind, l, u)),
    };
    let upper = |kind| -> Result<(f64, f64)> {
        // An empty range only arises from rounding on narrow intervals.
        let d = upper_tangent_range(kind, l, u)?.map_or(u, |r| min_area_point(r, l, u));
        let t = TangentSolution::at(kind, d);
        Ok((t.slope, t.intercept))
    };
    let lower = |kind| -> Result<(f64, f64)> {
        let d = lower_tangent_range(kind, l, u)?.map_or(l, |r| min_area_point(r, l, u));
        let t = TangentSolution::at(kind, d);
        Ok((t.slope, t.intercept))
    };
    Ok(match case {
        CaseKind::Case1 => LinearBoundPair::new(chord_through_l(kind, l, u), lower(kind)?),
        CaseKind::Case2 => LinearBoundPair::new(upper(kind)?, chord_through_u(kind, l, u)),
        CaseKind::Case3 => LinearBoundPair::new(upper(kind)?, lower(kind)?),
        CaseKind::Degenerate => tangent_pair(kind, l),
    })
}

/// Chord on its sound side and the parallel tangent on the other. Falls
/// back to [`newise_bounds`] when the chord bounds neither side; the flag
/// in the returned [`Relaxation`] records that.
pub fn parallel_tangent_relaxation(kind: ActivationKind, l: f64, u: f64) -> Result<Relaxation> {
    let plain = |pair| Relaxation { pair, fallback: false };
    if let Some(pair) = common_cases(kind, l, u)? {
        return Ok(plain(pair));
    }
    let k = chord_slope(kind, l, u).min(kind.max_slope());
    let parallel = |branch| -> Result<(f64, f64)> {
        let t = tangent_with_slope(kind, k, branch)?;
        Ok((k, act_eval(kind, t.point) - k * t.point))
    };
    match classify_case(kind, l, u) {
        Ok(CaseKind::Case1) => Ok(plain(LinearBoundPair::new(chord_through_l(kind, l, u), parallel(Branch::Left)?))),
        Ok(CaseKind::Case2) => Ok(plain(LinearBoundPair::new(parallel(Branch::Right)?, chord_through_u(kind, l, u)))),
        Ok(CaseKind::Degenerate) => Ok(plain(tangent_pair(kind, l))),
        Ok(CaseKind::Case3) => Ok(Relaxation {
            pair: newise_bounds(kind, l, u)?,
            fallback: true,
        }),
        Err(_) => Ok(plain(flat_pair(kind, l, u))),
    }
}

pub fn parallel_tangent_bounds(kind: ActivationKind, l: f64, u: f64) -> Result<LinearBoundPair> {
    parallel_tangent_relaxation(kind, l, u).map(|r| r.pair)
}

/// Lines of slope `σ′(m)` (midpoint `m`) shifted to the extremes of
/// `σ(x) − σ′(m)·x` on `[l, u]`.
pub fn taylor_midpoint_bounds(kind: ActivationKind, l: f64, u: f64) -> Result<LinearBoundPair> {
    if let Some(pair) = common_cases(kind, l, u)? {
        return Ok(pair);
    }
    let m = 0.5 * (l + u);
    let slope = act_deriv(kind, m);
    let g = |x: f64| act_eval(kind, x) - slope * x;
    // σ′ is even, so the stationary points of g are ±m.
    let mut lo = g(l).min(g(u)).min(g(m));
    let mut hi = g(l).max(g(u)).max(g(m));
    if -m >= l && -m <= u {
        lo = lo.min(g(-m));
        hi = hi.max(g(-m));
    }
    Ok(LinearBoundPair::new((slope, hi), (slope, lo)))
}

/// Standard ReLU relaxation: exact outside the kink, triangle-style upper
/// line and zero lower line across it.
pub fn relu_bounds(l: f64, u: f64) -> Result<LinearBoundPair> {
    check_interval(l, u)?;
    Ok(if l >= 0.0 {
        LinearBoundPair::IDENTITY
    } else if u <= 0.0 {
        LinearBoundPair::new((0.0, 0.0), (0.0, 0.0))
    } else {
        let s = u / (u - l);
        LinearBoundPair::new((s, -s * l), (0.0, 0.0))
    })
}

/// Apply a strategy to one neuron.
pub fn relax(strategy: StrategyId, kind: ActivationKind, l: f64, u: f64) -> Result<Relaxation> {
    let plain = |pair| Relaxation { pair, fallback: false };
    match strategy {
        StrategyId::NeuronWiseTightest => newise_bounds(kind, l, u).map(plain),
        StrategyId::MinimalArea => minimal_area_bounds(kind, l, u).map(plain),
        StrategyId::ParallelTangent => parallel_tangent_relaxation(kind, l, u),
        StrategyId::TaylorMidpoint => taylor_midpoint_bounds(kind, l, u).map(plain),
    }
}

/// Largest violation of `h_L ≤ σ ≤ h_U` on an even grid over `[l, u]`;
/// non-positive means sound on the grid.
pub fn validate_soundness(pair: &LinearBoundPair, kind: ActivationKind, l: f64, u: f64, grid_points: usize) -> f64 {
    let n = grid_points.max(2);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let x = if i + 1 == n { u } else { l + (u - l) * (i as f64) / ((n - 1) as f64) };
        let y = act_eval(kind, x);
        worst = worst.max(y - pair.upper(x)).max(pair.lower(x) - y);
    }
    worst
}
