//! Ground truth for testing: adversarial search inside the ball, grid
//! enclosures of tiny networks, and an empirical robust radius.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::network::{argmax, InputSpec, Network, Scratch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub predicted: usize,
    pub original: usize,
    /// `‖x − x0‖∞`
    pub distance: f64,
}

const CHUNK: usize = 1024;
const FD_STEP: f64 = 1e-4;

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct Search<'a> {
    net: &'a Network,
    x0: &'a [f64],
    lo: Vec<f64>,
    hi: Vec<f64>,
    original: usize,
}

impl Search<'_> {
    fn check(&self, x: Vec<f64>, scratch: &mut Scratch) -> Option<Counterexample> {
        let predicted = argmax(self.net.forward_with(&x, scratch));
        (predicted != self.original).then(|| Counterexample {
            distance: linf(&x, self.x0),
            x,
            predicted,
            original: self.original,
        })
    }

    fn corner(&self, signs: impl Iterator<Item = bool>) -> Vec<f64> {
        signs.zip(self.lo.iter().zip(&self.hi)).map(|(up, (&l, &h))| if up { h } else { l }).collect()
    }

    /// Corner opposite to the finite-difference gradient of `f_{s0} − f_s`.
    fn gradient_corner(&self, s: usize, scratch: &mut Scratch) -> Vec<f64> {
        let n = self.x0.len();
        let mut x = self.x0.to_vec();
        let mut signs = Vec::with_capacity(n);
        for i in 0..n {
            x[i] = self.x0[i] + FD_STEP;
            let fp = self.net.forward_with(&x, scratch);
            let gp = fp[self.original] - fp[s];
            x[i] = self.x0[i] - FD_STEP;
            let fm = self.net.forward_with(&x, scratch);
            let gm = fm[self.original] - fm[s];
            x[i] = self.x0[i];
            // step against the margin gradient
            signs.push(gp < gm);
        }
        self.corner(signs.into_iter())
    }
}

/// Look for a point of the (clipped) ball that the network labels
/// differently from `spec.x0`. Tries, in order: gradient-sign corners for
/// each competitor label, every corner when the input has at most 12
/// coordinates, then seeded random corners with one in ten draws an
/// interior point. `budget` caps the total number of forward passes.
pub fn falsify(net: &Network, spec: &InputSpec, budget: usize, seed: u64, mode: Execution) -> Result<Option<Counterexample>> {
    spec.check(net)?;
    let (lo, hi) = spec.bounds();
    let original = net.predict_label(&spec.x0)?;
    let search = Search {
        net,
        x0: &spec.x0,
        lo,
        hi,
        original,
    };
    let n = net.input_dim();
    let mut used = 0;
    let mut scratch = Scratch::default();

    if let Some(found) = search.check(spec.x0.to_vec(), &mut scratch) {
        return Ok(Some(found));
    }
    used += 1;
    for s in (0..net.num_labels()).filter(|&s| s != original) {
        if used + 2 * n + 1 > budget {
            break;
        }
        let x = search.gradient_corner(s, &mut scratch);
        used += 2 * n + 1;
        if let Some(found) = search.check(x, &mut scratch) {
            return Ok(Some(found));
        }
    }

    if n <= 12 {
        let corners = (1usize << n).min(budget.saturating_sub(used));
        let hit = exec::find_first(mode, corners.div_ceil(CHUNK), |chunk| {
            let mut scratch = Scratch::default();
            (chunk * CHUNK..((chunk + 1) * CHUNK).min(corners))
                .find_map(|mask| search.check(search.corner((0..n).map(|i| mask >> i & 1 == 1)), &mut scratch))
        });
        if let Some((_, found)) = hit {
            return Ok(Some(found));
        }
        used += corners;
    }

    let remaining = budget.saturating_sub(used);
    let hit = exec::find_first(mode, remaining.div_ceil(CHUNK), |chunk| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        let mut scratch = Scratch::default();
        let count = CHUNK.min(remaining - chunk * CHUNK);
        (0..count).find_map(|_| {
            let x: Vec<f64> = if rng.gen_range(0..10) == 0 {
                search
                    .lo
                    .iter()
                    .zip(&search.hi)
                    .map(|(&l, &h)| if l < h { rng.gen_range(l..=h) } else { l })
                    .collect()
            } else {
                let signs: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
                search.corner(signs.into_iter())
            };
            search.check(x, &mut scratch)
        })
    });
    Ok(hit.map(|(_, found)| found))
}

/// Output range of `net` over a regular grid with `resolution` points per
/// input coordinate. An inner approximation of the true range.
pub fn exhaustive_output_range(net: &Network, spec: &InputSpec, resolution: usize, mode: Execution) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.check(net)?;
    let n = net.input_dim();
    if n > 3 {
        return Err(Error::Domain(format!("grid enclosure supports at most 3 inputs, network has {n}")));
    }
    if resolution == 0 || resolution > 2001 {
        return Err(Error::Domain(format!("grid resolution must be in 1..=2001, got {resolution}")));
    }
    let (lo, hi) = spec.bounds();
    let axis = |i: usize, k: usize| {
        if resolution == 1 {
            spec.x0[i].clamp(lo[i], hi[i])
        } else {
            lo[i] + (hi[i] - lo[i]) * k as f64 / (resolution - 1) as f64
        }
    };
    let m = net.num_labels();
    // One task per value of the first coordinate.
    let partial = exec::map_range(mode, resolution, |k0| {
        let mut scratch = Scratch::default();
        let mut out_lo = vec![f64::INFINITY; m];
        let mut out_hi = vec![f64::NEG_INFINITY; m];
        let rest = resolution.pow(n as u32 - 1);
        let mut x = vec![0.0; n];
        x[0] = axis(0, k0);
        for idx in 0..rest {
            let mut r = idx;
            for (i, xi) in x.iter_mut().enumerate().skip(1) {
                *xi = axis(i, r % resolution);
                r /= resolution;
            }
            let y = net.forward_with(&x, &mut scratch);
            for s in 0..m {
                out_lo[s] = out_lo[s].min(y[s]);
                out_hi[s] = out_hi[s].max(y[s]);
            }
        }
        (out_lo, out_hi)
    });
    let mut lo_all = vec![f64::INFINITY; m];
    let mut hi_all = vec![f64::NEG_INFINITY; m];
    for (l, h) in partial {
        for s in 0..m {
            lo_all[s] = lo_all[s].min(l[s]);
            hi_all[s] = hi_all[s].max(h[s]);
        }
    }
    Ok((lo_all, hi_all))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusSearch {
    pub eps_hi: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub budget: usize,
    pub seed: u64,
}

impl Default for RadiusSearch {
    fn default() -> Self {
        Self {
            eps_hi: 1.0,
            max_iter: 20,
            tol: 1e-4,
            budget: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRadius {
    /// Largest radius tested without finding a counterexample.
    pub radius: f64,
    /// Smallest radius at which a counterexample was found; `None` when the
    /// search ceiling held, in which case `radius` is the ceiling.
    pub attacked: Option<f64>,
    pub at_ceiling: bool,
    pub counterexample: Option<Counterexample>,
}

/// Bisection on the outcome of [`falsify`].
pub fn empirical_radius(net: &Network, x0: &[f64], label: usize, search: &RadiusSearch, mode: Execution) -> Result<EmpiricalRadius> {
    let predicted = net.predict_label(x0)?;
    if predicted != label {
        return Err(Error::Misclassified { predicted, expected: label });
    }
    let base = InputSpec::new(x0.to_vec(), 0.0)?;
    let attack = |eps: f64| falsify(net, &base.with_eps(eps), search.budget, search.seed, mode);
    let Some(mut best) = attack(search.eps_hi)? else {
        return Ok(EmpiricalRadius {
            radius: search.eps_hi,
            attacked: None,
            at_ceiling: true,
            counterexample: None,
        });
    };
    let (mut lo, mut hi) = (0.0, search.eps_hi);
    for _ in 0..search.max_iter {
        if hi - lo <= search.tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match attack(mid)? {
            Some(c) => {
                hi = mid;
                best = c;
            }
            None => lo = mid,
        }
    }
    Ok(EmpiricalRadius {
        radius: lo,
        attacked: Some(hi),
        at_ceiling: false,
        counterexample: Some(best),
    })
}
