//! Acceptance checks, one test per criterion. Each test writes a single
//! `PASS`/`FAIL` line to stderr (bypassing the test harness capture) and
//! then asserts on the outcome.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tightcert::certify::mean_std;
use tightcert::generate::{random_dataset, random_network, NetGenConfig, WeightMode};
use tightcert::optimizer::{init_params, objective_gradient, objective_lower, objective_upper, optimize, OptimizerConfig, Target};
use tightcert::oracle::{exhaustive_output_range, falsify};
use tightcert::propagate::concrete_output_range;
use tightcert::report::{format_pct, improvement_pct};
use tightcert::strategy::{newise_bounds, relax, validate_soundness};
use tightcert::{
    certified_lower_bound, propagate, ActivationKind, Execution, InputSpec, Method, Network, SearchParams, StrategyId,
};

const S_SHAPED: [ActivationKind; 3] = [ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::Arctan];

fn report(n: u32, ok: bool, detail: &str) {
    let line = format!("{} criterion {n}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn finish(n: u32, ok: bool, detail: String) {
    report(n, ok, &detail);
    assert!(ok, "criterion {n}: {detail}");
}

fn net(input_dim: usize, hidden: Vec<usize>, num_labels: usize, activation: ActivationKind, mode: WeightMode, seed: u64) -> Network {
    random_network(&NetGenConfig {
        input_dim,
        hidden,
        num_labels,
        activation,
        mode,
        seed,
    })
}

fn search() -> SearchParams {
    SearchParams::default()
}

/// No counterexample exists inside any certified ball.
#[test]
fn criterion_1_soundness_against_falsifier() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checked, mut violations, mut balls) = (0usize, Vec::new(), 0usize);
    for i in 0..200u64 {
        let depth = 1 + (i as usize % 5);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(3..=8)).collect();
        let act = S_SHAPED[i as usize % 3];
        let mode = if i % 2 == 0 { WeightMode::Mixed } else { WeightMode::Qualifying };
        let n = rng.gen_range(2..=5);
        let net = net(n, hidden, rng.gen_range(2..=4), act, mode, 1000 + i);
        let mut methods: Vec<Method> = StrategyId::ALL.into_iter().map(Method::from).collect();
        if depth == 1 {
            methods.push(Method::Optimized(OptimizerConfig::default()));
        }
        for (j, (label, x0)) in random_dataset(&net, 10, (0.0, 1.0), i).into_iter().enumerate() {
            let eps: Vec<(String, f64)> = methods
                .iter()
                .map(|m| {
                    let b = certified_lower_bound(&net, &x0, label, m, &search()).unwrap();
                    (m.name().to_string(), b.epsilon)
                })
                .collect();
            let widest = eps.iter().map(|e| e.1).fold(0.0, f64::max);
            checked += eps.len();
            if widest <= 0.0 {
                continue;
            }
            balls += 1;
            let seed = i * 100 + j as u64;
            let spec = InputSpec::new(x0.clone(), widest).unwrap();
            if falsify(&net, &spec, 100_000, seed, Execution::Parallel).unwrap().is_none() {
                continue;
            }
            // Something lies inside the widest ball: attack each method's own ball.
            for (name, e) in &eps {
                let spec = InputSpec::new(x0.clone(), *e).unwrap();
                if *e > 0.0 && falsify(&net, &spec, 100_000, seed, Execution::Parallel).unwrap().is_some() {
                    violations.push(format!("net {i} input {j} {name} eps {e}"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = violations.is_empty() && checked >= 8000 && elapsed <= Duration::from_secs(600);
    finish(
        1,
        ok,
        format!(
            "{checked} certified bounds on 200 nets, {balls} balls attacked with 1e5 samples, {} violations {:?}, {:.1}s",
            violations.len(),
            violations.iter().take(3).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
}

/// On qualifying networks the tightest per-neuron bounds certify at least
/// the radius of every other constant-time strategy.
#[test]
fn criterion_2_newise_dominates_on_qualifying_nets() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut compared, mut worst, mut bad) = (0usize, f64::INFINITY, Vec::new());
    for act in S_SHAPED {
        for i in 0..50u64 {
            let depth = 1 + (i as usize % 3);
            let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(4..=20)).collect();
            let net = net(rng.gen_range(2..=6), hidden, rng.gen_range(2..=4), act, WeightMode::Qualifying, 2000 + i);
            for (j, (label, x0)) in random_dataset(&net, 20, (0.0, 1.0), i).into_iter().enumerate() {
                let eps = |s: StrategyId| certified_lower_bound(&net, &x0, label, &s.into(), &search()).unwrap().epsilon;
                let ours = eps(StrategyId::NeuronWiseTightest);
                for other in &StrategyId::ALL[1..] {
                    let theirs = eps(*other);
                    compared += 1;
                    worst = worst.min(ours - theirs);
                    if ours < theirs - 1e-9 {
                        bad.push(format!("{act} net {i} input {j}: newise {ours} < {other} {theirs}"));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = bad.is_empty() && elapsed <= Duration::from_secs(300);
    finish(
        2,
        ok,
        format!(
            "{compared} comparisons on 150 qualifying nets, min(newise - other) = {worst:.3e}, {} below -1e-9 {:?}, {:.1}s",
            bad.len(),
            bad.iter().take(3).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
}

fn random_interval(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let l = rng.gen_range(-10.0..10.0);
    let w = 10f64.powf(rng.gen_range(-8.0..1.3));
    (l, l + w)
}

/// The upper line touches the activation at `u` and the lower line at `l`.
#[test]
fn criterion_3_newise_lines_touch_interval_ends() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for act in S_SHAPED {
        for _ in 0..10_000 {
            let (l, u) = random_interval(&mut rng);
            let p = newise_bounds(act, l, u).unwrap();
            worst = worst.max((p.upper(u) - act.eval(u)).abs()).max((p.lower(l) - act.eval(l)).abs());
        }
    }
    finish(3, worst <= 1e-12, format!("3 x 10000 intervals, max |h_U(u) - s(u)|, |h_L(l) - s(l)| = {worst:.3e}"));
}

/// Every strategy's lines enclose the activation on a fine grid.
#[test]
fn criterion_4_strategies_are_sound_on_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::NEG_INFINITY;
    let mut at = String::new();
    for act in S_SHAPED {
        for strategy in StrategyId::ALL {
            for _ in 0..1000 {
                let (l, u) = random_interval(&mut rng);
                let r = relax(strategy, act, l, u).unwrap();
                let v = validate_soundness(&r.pair, act, l, u, 10_000);
                if v > worst {
                    worst = v;
                    at = format!("{strategy} {act} [{l}, {u}]");
                }
            }
        }
    }
    finish(4, worst <= 1e-9, format!("12 x 1000 intervals on 1e4-point grids, max violation {worst:.3e} at {at}"));
}

/// Symbolic output bounds contain the output range sampled on a 2001² grid.
#[test]
fn criterion_5_bounds_enclose_grid_range() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut min_slack = f64::INFINITY;
    for i in 0..100u64 {
        let depth = 1 + (i as usize % 2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=4)).collect();
        let mode = if i % 2 == 0 { WeightMode::Mixed } else { WeightMode::Qualifying };
        let net = net(2, hidden, 2, S_SHAPED[i as usize % 3], mode, 5000 + i);
        let x0 = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let spec = InputSpec::new(x0, rng.gen_range(0.01..0.5)).unwrap();
        let (glo, ghi) = exhaustive_output_range(&net, &spec, 2001, Execution::Parallel).unwrap();
        for strategy in StrategyId::ALL {
            let res = propagate(&net, &spec, strategy).unwrap();
            let (lo, hi) = concrete_output_range(&res, &spec);
            for s in 0..2 {
                min_slack = min_slack.min(glo[s] - lo[s]).min(hi[s] - ghi[s]);
            }
        }
    }
    finish(
        5,
        min_slack >= -1e-9,
        format!("100 nets x 4 strategies, min slack {min_slack:.3e}, {:.1}s", start.elapsed().as_secs_f64()),
    );
}

/// The tangent-point search certifies at least what the best constant-time
/// strategy certifies, and its analytic gradient matches finite differences.
#[test]
fn criterion_6_optimizer_dominates_and_gradient_checks() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let alg1 = Method::Optimized(OptimizerConfig::default());
    let (mut bad, mut gains) = (Vec::new(), Vec::new());
    let mut nets = Vec::new();
    for i in 0..30u64 {
        let act = S_SHAPED[i as usize % 3];
        let net = net(rng.gen_range(2..=5), vec![rng.gen_range(5..=12)], rng.gen_range(2..=3), act, WeightMode::Mixed, 6000 + i);
        for (j, (label, x0)) in random_dataset(&net, 10, (0.0, 1.0), i).into_iter().enumerate() {
            let best = StrategyId::ALL
                .into_iter()
                .map(|s| certified_lower_bound(&net, &x0, label, &s.into(), &search()).unwrap().epsilon)
                .fold(0.0, f64::max);
            let ours = certified_lower_bound(&net, &x0, label, &alg1, &search()).unwrap().epsilon;
            if ours < best - 1e-9 {
                bad.push(format!("net {i} input {j}: alg1 {ours} < {best}"));
            }
            if best > 0.0 {
                gains.push(100.0 * (ours - best) / best);
            }
        }
        nets.push(net);
    }

    // Gradient check at 100 interior cut-off points.
    let h = 1e-6;
    let (mut points, mut worst_err) = (0usize, 0.0f64);
    'outer: for trial in 0..1000u64 {
        let net = &nets[trial as usize % nets.len()];
        let x0: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let spec = InputSpec::new(x0, rng.gen_range(0.1..0.6)).unwrap();
        let params = init_params(net, &spec, trial).unwrap();
        let s = rng.gen_range(0..net.num_labels());
        let upper = rng.gen_bool(0.5);
        let f = |p: &[_]| {
            if upper {
                objective_upper(p, net, &spec, s).unwrap()
            } else {
                objective_lower(p, net, &spec, s).unwrap()
            }
        };
        let g = objective_gradient(&params, net, &spec, s, upper).unwrap();
        let r = rng.gen_range(0..params.len());
        let c = net.dense_layers()[1].w.get(s, r);
        let uses_lower = (c > 0.0) != upper;
        let (range, cut) = if uses_lower {
            (params[r].lower_range, params[r].lower_cutoff)
        } else {
            (params[r].upper_range, params[r].upper_cutoff)
        };
        let (Some((a, b)), Some(d)) = (range, cut) else { continue };
        if d - h < a || d + h > b || c == 0.0 {
            continue;
        }
        let shifted = |delta: f64| {
            let mut p = params.clone();
            if uses_lower {
                p[r].lower_cutoff = Some(d + delta);
            } else {
                p[r].upper_cutoff = Some(d + delta);
            }
            f(&p)
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        worst_err = worst_err.max((fd - g[r]).abs() / g[r].abs().max(1e-6));
        points += 1;
        if points == 100 {
            break 'outer;
        }
    }
    let (mean_gain, _) = mean_std(&gains);
    let elapsed = start.elapsed();
    let ok = bad.is_empty() && points == 100 && worst_err <= 1e-4 && elapsed <= Duration::from_secs(600);
    finish(
        6,
        ok,
        format!(
            "300 inputs, {} below best strategy {:?}, mean gain {mean_gain:.2}%; gradient at {points} points, max rel err {worst_err:.2e}, {:.1}s",
            bad.len(),
            bad.iter().take(3).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
}

/// On qualifying one-hidden-layer networks the search ends on the tightest
/// per-neuron lines.
#[test]
fn criterion_7_optimizer_recovers_newise_on_qualifying_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut compared, mut worst) = (0usize, 0.0f64);
    for act in S_SHAPED {
        for i in 0..20u64 {
            let net = net(rng.gen_range(2..=5), vec![rng.gen_range(3..=10)], rng.gen_range(2..=3), act, WeightMode::Qualifying, 7000 + i);
            let x0: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let spec = InputSpec::new(x0, [0.05, 0.2, 0.5][i as usize % 3]).unwrap();
            let s0 = net.predict_label(&spec.x0).unwrap();
            let res = optimize(&net, &spec, s0, &OptimizerConfig::default()).unwrap();
            let params = init_params(&net, &spec, 0).unwrap();
            for b in &res.bounds {
                for (p, pair) in params.iter().zip(&b.pairs) {
                    let nw = newise_bounds(act, p.l, p.u).unwrap();
                    let d = match b.target {
                        Target::Lower(_) => (pair.alpha_l - nw.alpha_l).abs().max((pair.beta_l - nw.beta_l).abs()),
                        _ => (pair.alpha_u - nw.alpha_u).abs().max((pair.beta_u - nw.beta_u).abs()),
                    };
                    worst = worst.max(d);
                    compared += 1;
                }
            }
        }
    }
    finish(7, worst <= 1e-6, format!("{compared} neuron lines on 60 nets, max coefficient difference {worst:.3e}"));
}

/// Reported improvements for two reference value pairs.
#[test]
fn criterion_8_improvement_spot_values() {
    let cases = [(0.0091, 0.0071, "28.15"), (0.0326, 0.0263, "24.02")];
    let got: Vec<String> = cases.iter().map(|&(a, b, _)| format_pct(improvement_pct(a, b))).collect();
    let ok = cases.iter().zip(&got).all(|(c, g)| c.2 == g);
    finish(
        8,
        ok,
        format!(
            "(0.0091, 0.0071) -> {} (expected 28.15), (0.0326, 0.0263) -> {} (expected 24.02)",
            got[0], got[1]
        ),
    );
}

/// Two runs of `bench` with the same seed on one worker write identical bytes.
#[test]
fn criterion_9_bench_is_deterministic() {
    let bin = env!("CARGO_BIN_EXE_tightcert");
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("net.json");
    let data = dir.path().join("data.csv");
    let status = Command::new(bin)
        .args(["gen-net", "--inputs", "3", "--hidden", "8", "--labels", "3", "--mixed", "--seed", "9", "--samples", "8"])
        .arg("--out")
        .arg(&model)
        .arg("--data-out")
        .arg(&data)
        .status()
        .unwrap();
    assert!(status.success());
    let run = |format: &str| {
        let out = Command::new(bin)
            .args(["bench", "--strategy", "alg1,newise,minarea,parallel,taylor", "--workers", "1", "--seed", "3", "--no-timing"])
            .args(["--format", format])
            .arg("--model")
            .arg(&model)
            .arg("--data")
            .arg(&data)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let mut same = true;
    let mut bytes = 0;
    for format in ["table", "records"] {
        let (a, b) = (run(format), run(format));
        bytes += a.len();
        same &= a == b && !a.is_empty();
    }
    finish(9, same, format!("table and records output of two runs compared, {bytes} bytes, identical: {same}"));
}
