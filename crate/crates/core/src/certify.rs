//! Robustness at a fixed radius, certified-radius search and batch runs.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::network::{InputSpec, Network};
use crate::optimizer::{optimize_with, OptimizerConfig};
use crate::propagate::{build_margin_network, concrete_output_range, propagate_with, Relaxations};
use crate::strategy::StrategyId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifyStatus {
    Robust,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOutcome {
    pub status: VerifyStatus,
    pub label: usize,
    pub failing_label: Option<usize>,
    /// Worst certified margin over the competitor labels.
    pub margin_lo: f64,
}

/// How the label condition is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MarginMode {
    /// `min f_{L,s0} > max f_{U,s}` for every `s ≠ s0`, from one
    /// propagation of the original network.
    #[default]
    Separated,
    /// `min (f_{s0} − f_s)_L > 0` on the network extended by the margin row,
    /// one propagation per competitor.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Strategy(StrategyId),
    /// Tangent-point search; one hidden layer only.
    Optimized(OptimizerConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Strategy(s) => s.name(),
            Method::Optimized(_) => "alg1",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("alg1") {
            return Ok(Method::Optimized(OptimizerConfig::default()));
        }
        s.parse().map(Method::Strategy)
    }
}

impl From<StrategyId> for Method {
    fn from(s: StrategyId) -> Self {
        Method::Strategy(s)
    }
}

/// Decide robustness of `net` around `spec.x0` at radius `spec.eps` for the
/// label the network predicts at the centre.
pub fn verify_at_epsilon(net: &Network, spec: &InputSpec, method: &Method, margin: MarginMode, mode: Execution) -> Result<VerifyOutcome> {
    spec.check(net)?;
    let s0 = net.predict_label(&spec.x0)?;
    let others: Vec<usize> = (0..net.num_labels()).filter(|&s| s != s0).collect();
    let margins: Vec<f64> = match (method, margin) {
        (Method::Strategy(strategy), MarginMode::Separated) => {
            let res = propagate_with(net, spec, Relaxations::Strategy(*strategy), mode)?;
            let (lo, hi) = concrete_output_range(&res, spec);
            others.iter().map(|&s| lo[s0] - hi[s]).collect()
        }
        (Method::Strategy(strategy), MarginMode::Joint) => exec::map_slice(mode, &others, |&s| {
            let margin_net = build_margin_network(net, s0, s)?;
            let res = propagate_with(&margin_net, spec, Relaxations::Strategy(*strategy), Execution::Sequential)?;
            Ok(concrete_output_range(&res, spec).0[0])
        })
        .into_iter()
        .collect::<Result<_>>()?,
        (Method::Optimized(cfg), margin) => {
            let res = optimize_with(net, spec, s0, cfg, margin == MarginMode::Joint, mode)?;
            if margin == MarginMode::Joint {
                res.bounds.iter().map(|b| b.value).collect()
            } else {
                let lower = res.bounds[0].value;
                res.bounds[1..].iter().map(|b| lower - b.value).collect()
            }
        }
    };
    let failing_label = others.iter().zip(&margins).find(|(_, m)| !(**m > 0.0)).map(|(s, _)| *s);
    let margin_lo = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(VerifyOutcome {
        status: if failing_label.is_none() {
            VerifyStatus::Robust
        } else {
            VerifyStatus::Unknown
        },
        label: s0,
        failing_label,
        margin_lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub max_iter: usize,
    /// Stop once `eps_hi − eps_lo ≤ tol·eps_hi`.
    pub tol: f64,
    /// Global input range intersected with every ball.
    pub clip: Option<(f64, f64)>,
    pub margin: MarginMode,
    /// Parallelism inside one certification.
    pub execution: Execution,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            eps_lo: 0.0,
            eps_hi: 1.0,
            max_iter: 20,
            tol: 1e-4,
            clip: None,
            margin: MarginMode::Separated,
            execution: Execution::Sequential,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_lo >= 0.0 && self.eps_hi > self.eps_lo && self.eps_hi.is_finite()) {
            return Err(Error::Domain(format!(
                "search range must satisfy 0 ≤ lo < hi, got [{}, {}]",
                self.eps_lo, self.eps_hi
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Domain(format!("tolerance must be non-negative, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub eps: f64,
    pub status: VerifyStatus,
    pub margin_lo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBound {
    pub label: usize,
    pub epsilon: f64,
    /// Bisection steps after the end-point checks.
    pub iterations: usize,
    pub method: String,
    pub wall_time: f64,
    /// The search ceiling itself verified.
    pub at_ceiling: bool,
    pub probes: Vec<Probe>,
}

/// Largest radius found by bisection at which `method` certifies the label
/// `label` around `x0`.
pub fn certified_lower_bound(net: &Network, x0: &[f64], label: usize, method: &Method, search: &SearchParams) -> Result<CertifiedBound> {
    search.validate()?;
    let start = Instant::now();
    let predicted = net.predict_label(x0)?;
    if predicted != label {
        return Err(Error::Misclassified { predicted, expected: label });
    }
    let mut base = InputSpec::new(x0.to_vec(), 0.0)?;
    if let Some((a, b)) = search.clip {
        base = base.with_clip(a, b);
    }
    let mut probes = Vec::new();
    let mut check = |eps: f64| -> Result<bool> {
        let out = verify_at_epsilon(net, &base.with_eps(eps), method, search.margin, search.execution)?;
        probes.push(Probe {
            eps,
            status: out.status,
            margin_lo: out.margin_lo,
        });
        Ok(out.status == VerifyStatus::Robust)
    };

    if !check(0.0)? {
        // A tie at the centre: no radius can be certified.
        return Err(Error::Misclassified { predicted, expected: label });
    }
    let (mut lo, mut hi) = (search.eps_lo, search.eps_hi);
    let mut at_ceiling = false;
    let mut iterations = 0;
    if lo > 0.0 && !check(lo)? {
        hi = lo;
        lo = 0.0;
    } else if check(hi)? {
        lo = hi;
        at_ceiling = true;
    }
    if !at_ceiling {
        while iterations < search.max_iter && hi - lo > search.tol * hi {
            let mid = 0.5 * (lo + hi);
            if check(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
        }
    }
    Ok(CertifiedBound {
        label,
        epsilon: lo,
        iterations,
        method: method.name().to_string(),
        wall_time: start.elapsed().as_secs_f64(),
        at_ceiling,
        probes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub index: usize,
    pub label: usize,
    pub bound: Option<CertifiedBound>,
    pub misclassified: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub method: String,
    pub records: Vec<BatchRecord>,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub mean_time: f64,
    pub skipped_misclassified: usize,
    pub failed: usize,
}

impl BatchReport {
    pub fn bounds(&self) -> impl Iterator<Item = &CertifiedBound> {
        self.records.iter().filter_map(|r| r.bound.as_ref())
    }
}

/// Population mean and standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Certify every `(label, x)` sample; inputs the network misclassifies are
/// skipped and counted. Samples run on the pool selected by `workers`.
pub fn batch_certify(net: &Network, data: &[(usize, Vec<f64>)], method: &Method, search: &SearchParams, workers: Execution) -> BatchReport {
    let indexed: Vec<(usize, &(usize, Vec<f64>))> = data.iter().enumerate().collect();
    let records = exec::map_slice(workers, &indexed, |&(index, (label, x))| {
        let mut rec = BatchRecord {
            index,
            label: *label,
            bound: None,
            misclassified: false,
            error: None,
        };
        match certified_lower_bound(net, x, *label, method, search) {
            Ok(b) => rec.bound = Some(b),
            Err(Error::Misclassified { .. }) => rec.misclassified = true,
            Err(e) => rec.error = Some(e.to_string()),
        }
        rec
    });
    let eps: Vec<f64> = records.iter().filter_map(|r| r.bound.as_ref().map(|b| b.epsilon)).collect();
    let times: Vec<f64> = records.iter().filter_map(|r| r.bound.as_ref().map(|b| b.wall_time)).collect();
    let (mean, std_dev) = mean_std(&eps);
    let (mean_time, _) = mean_std(&times);
    BatchReport {
        method: method.name().to_string(),
        count: eps.len(),
        mean,
        std_dev,
        mean_time,
        skipped_misclassified: records.iter().filter(|r| r.misclassified).count(),
        failed: records.iter().filter(|r| r.error.is_some()).count(),
        records,
    }
}
