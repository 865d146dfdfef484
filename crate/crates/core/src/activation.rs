//! Scalar activations, their derivatives, and tangent-line solvers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Arctan,
    #[serde(rename = "relu")]
    ReLU,
    Identity,
}

impl ActivationKind {
    /// Sigmoid, Tanh and Arctan: smooth, increasing, convex left of 0 and
    /// concave right of 0, with an even derivative peaking at 0.
    pub fn is_s_shaped(self) -> bool {
        matches!(self, Self::Sigmoid | Self::Tanh | Self::Arctan)
    }

    pub fn eval(self, x: f64) -> f64 {
        act_eval(self, x)
    }

    pub fn deriv(self, x: f64) -> f64 {
        act_deriv(self, x)
    }

    /// Supremum of the derivative (attained at 0 for S-shaped kinds).
    pub fn max_slope(self) -> f64 {
        match self {
            Self::Sigmoid => 0.25,
            Self::Tanh | Self::Arctan | Self::ReLU | Self::Identity => 1.0,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
            Self::Arctan => "arctan",
            Self::ReLU => "relu",
            Self::Identity => "identity",
        })
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Self::Sigmoid),
            "tanh" => Ok(Self::Tanh),
            "arctan" | "atan" => Ok(Self::Arctan),
            "relu" => Ok(Self::ReLU),
            "identity" | "linear" => Ok(Self::Identity),
            other => Err(Error::Domain(format!("unknown activation `{other}`"))),
        }
    }
}

pub fn act_eval(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Sigmoid => {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        }
        ActivationKind::Tanh => x.tanh(),
        ActivationKind::Arctan => x.atan(),
        ActivationKind::ReLU => x.max(0.0),
        ActivationKind::Identity => x,
    }
}

/// First derivative. The ReLU derivative at 0 is taken as 1.
pub fn act_deriv(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Sigmoid => {
            let e = (-x.abs()).exp();
            e / ((1.0 + e) * (1.0 + e))
        }
        ActivationKind::Tanh => {
            let c = x.cosh();
            1.0 / (c * c)
        }
        ActivationKind::Arctan => 1.0 / (1.0 + x * x),
        ActivationKind::ReLU => {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::Identity => 1.0,
    }
}

pub fn act_second_deriv(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Sigmoid => {
            let s = act_eval(kind, x);
            act_deriv(kind, x) * (1.0 - 2.0 * s)
        }
        ActivationKind::Tanh => -2.0 * x.tanh() * act_deriv(kind, x),
        ActivationKind::Arctan => {
            let d = 1.0 + x * x;
            -2.0 * x / (d * d)
        }
        ActivationKind::ReLU | ActivationKind::Identity => 0.0,
    }
}

/// An antiderivative of the activation, used for enclosed-area computations.
pub fn act_antiderivative(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        // ln(1 + eˣ)
        ActivationKind::Sigmoid => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        // ln cosh x
        ActivationKind::Tanh => x.abs() + (-2.0 * x.abs()).exp().ln_1p() - std::f64::consts::LN_2,
        ActivationKind::Arctan => x * x.atan() - 0.5 * (x * x).ln_1p(),
        ActivationKind::ReLU => 0.5 * x.max(0.0).powi(2),
        ActivationKind::Identity => 0.5 * x * x,
    }
}

/// Side of the derivative peak on which a slope-matching tangent is sought.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentSolution {
    pub point: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl TangentSolution {
    pub fn at(kind: ActivationKind, d: f64) -> Self {
        let slope = act_deriv(kind, d);
        Self {
            point: d,
            slope,
            intercept: act_eval(kind, d) - d * slope,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

const BISECT_MAX_ITER: usize = 200;
const BISECT_TOL: f64 = 1e-12;

/// Bisection on a continuous `f` with `f(a)` and `f(b)` of opposite sign.
/// Stops when the bracket is narrower than 1e-12 or the midpoint is an exact
/// root.
fn bisect(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..BISECT_MAX_ITER {
        if (b - a).abs() <= BISECT_TOL {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Tangent point `d` with `σ′(d) = target_slope` on the requested branch.
pub fn tangent_with_slope(kind: ActivationKind, target_slope: f64, branch: Branch) -> Result<TangentSolution> {
    if !kind.is_s_shaped() {
        return Err(Error::Domain(format!("slope-matching tangent undefined for {kind}")));
    }
    if !(target_slope > 0.0) {
        return Err(Error::Domain(format!("target slope must be positive, got {target_slope}")));
    }
    let peak = kind.max_slope();
    if target_slope > peak {
        return Err(Error::NoSolution(format!(
            "slope {target_slope} exceeds the maximum slope {peak} of {kind}"
        )));
    }
    let magnitude = match kind {
        ActivationKind::Sigmoid => {
            // σ(1−σ) = k  ⇒  σ = (1 + r)/2 with r = √(1 − 4k), d = ln(σ/(1−σ)).
            let r = (1.0 - 4.0 * target_slope).max(0.0).sqrt();
            2.0 * r.ln_1p() - (4.0 * target_slope).ln()
        }
        _ => {
            let mut hi = 1.0;
            while act_deriv(kind, hi) > target_slope {
                hi *= 2.0;
                if hi > 1e300 {
                    return Err(Error::NoSolution(format!("slope {target_slope} too small for {kind}")));
                }
            }
            bisect(0.0, hi, |d| act_deriv(kind, d) - target_slope)
        }
    };
    let d = match branch {
        Branch::Left => -magnitude.max(0.0),
        Branch::Right => magnitude.max(0.0),
    };
    Ok(TangentSolution {
        point: d,
        slope: target_slope,
        intercept: act_eval(kind, d) - d * target_slope,
    })
}

/// Residual of "the tangent at `d` passes through `(anchor, σ(anchor))`".
pub fn tangency_residual(kind: ActivationKind, anchor: f64, d: f64) -> f64 {
    act_deriv(kind, d) * (anchor - d) + act_eval(kind, d) - act_eval(kind, anchor)
}

/// Tangent point in `[a, b]` whose tangent line crosses `(anchor, σ(anchor))`.
pub fn tangent_through_point(kind: ActivationKind, anchor: f64, search: (f64, f64)) -> Result<TangentSolution> {
    let (a, b) = search;
    if !(a < b) {
        return Err(Error::Domain(format!("empty search interval [{a}, {b}]")));
    }
    let f = |d| tangency_residual(kind, anchor, d);
    let (fa, fb) = (f(a), f(b));
    if fa.abs() <= 1e-15 {
        return Ok(TangentSolution::at(kind, a));
    }
    if fb.abs() <= 1e-15 {
        return Ok(TangentSolution::at(kind, b));
    }
    if (fa < 0.0) == (fb < 0.0) {
        return Err(Error::NoSolution(format!(
            "no tangent of {kind} through x = {anchor} touches [{a}, {b}]"
        )));
    }
    Ok(TangentSolution::at(kind, bisect(a, b, f)))
}
