use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tightcert::certify::{BatchReport, Method};
use tightcert::format::{load_dataset, load_network, save_dataset, save_network};
use tightcert::generate::{random_dataset, random_network, NetGenConfig, WeightMode};
use tightcert::network::check_monotonic_conditions;
use tightcert::optimizer::OptimizerConfig;
use tightcert::oracle::falsify;
use tightcert::propagate::{compare_traces, propagate_with};
use tightcert::report::{render_records, render_table, render_trace_metrics, ReportOptions};
use tightcert::{
    batch_certify, certified_lower_bound, verify_at_epsilon, ActivationKind, Error, Execution, InputSpec, MarginMode,
    Network, SearchParams, StrategyId, VerifyStatus,
};

#[derive(Parser)]
#[command(name = "tightcert", version, about = "Certified l-infinity robustness bounds for feed-forward networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify one input: the largest certified radius, or a verdict at --eps.
    Verify(VerifyArgs),
    /// Certify a dataset with several methods and compare them.
    Bench(BenchArgs),
    /// Dump per-layer intervals of two strategies and their relative change.
    Trace(TraceArgs),
    /// Search the ball for an input with a different label.
    Falsify(FalsifyArgs),
    /// Write a random network (and optionally a dataset it classifies).
    GenNet(GenNetArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Dataset file (CSV: label, then the input values).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Row of --data to use.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Comma-separated input point instead of --data.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "data")]
    input: Option<Vec<f64>>,
    /// Expected label for --input; defaults to the network's prediction.
    #[arg(long)]
    label: Option<usize>,
}

#[derive(Args)]
struct SearchArgs {
    /// Upper end of the radius search.
    #[arg(long, default_value_t = 1.0)]
    eps_max: f64,
    /// Relative stopping tolerance of the bisection.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    /// Intersect every ball with [lo, hi], e.g. --clip 0,1.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
    clip: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = MarginArg::Separated)]
    margin: MarginArg,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Seed for randomised parts (tangent-point restarts).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MarginArg {
    Separated,
    Joint,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Records,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    input: InputArgs,
    /// newise | minarea | parallel | taylor | alg1 (repeatable or comma-separated).
    #[arg(long = "strategy", default_value = "newise", value_delimiter = ',')]
    strategies: Vec<String>,
    /// Check this radius only.
    #[arg(long)]
    eps: Option<f64>,
    #[command(flatten)]
    search: SearchArgs,
    /// Omit wall times from the output.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Methods to compare; improvements are relative to the first.
    #[arg(long = "strategy", required = true, value_delimiter = ',')]
    strategies: Vec<String>,
    /// Use only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit wall times so that repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Exactly two strategies; metrics are relative to the second.
    #[arg(long = "strategy", num_args = 1, required = true)]
    strategies: Vec<String>,
    #[arg(long)]
    eps: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct FalsifyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    eps: f64,
    /// Maximum number of forward passes.
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct GenNetArgs {
    #[arg(long, default_value_t = 2)]
    inputs: usize,
    /// Hidden layer widths, e.g. --hidden 10,10.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    labels: usize,
    #[arg(long, default_value = "sigmoid")]
    activation: ActivationKind,
    /// Sign-uniform first-layer columns and non-negative later weights (default).
    #[arg(long, conflicts_with = "mixed")]
    qualifying: bool,
    /// Weights uniform in [-1, 1].
    #[arg(long)]
    mixed: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write a dataset of points labelled by the network.
    #[arg(long)]
    data_out: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    samples: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Io { .. } | Error::Parse { .. } => 2,
                Error::Misclassified { .. } => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Trace(a) => cmd_trace(a),
        Command::Falsify(a) => cmd_falsify(a),
        Command::GenNet(a) => cmd_gen_net(a),
    }
}

fn configure_workers(workers: usize) -> Result<Execution> {
    if workers == 0 {
        bail!("--workers must be at least 1");
    }
    // The global pool can only be built once per process; later calls keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    Ok(Execution::for_workers(workers))
}

fn parse_methods(names: &[String], seed: u64) -> Result<Vec<Method>> {
    names
        .iter()
        .map(|n| {
            let mut m: Method = n.parse()?;
            if let Method::Optimized(cfg) = &mut m {
                *cfg = OptimizerConfig { seed, ..*cfg };
            }
            Ok(m)
        })
        .collect()
}

fn search_params(a: &SearchArgs, execution: Execution) -> Result<SearchParams> {
    let clip = match a.clip.as_deref() {
        None => None,
        Some([lo, hi]) if lo <= hi => Some((*lo, *hi)),
        Some(v) => bail!("--clip needs lo,hi with lo <= hi, got {v:?}"),
    };
    let p = SearchParams {
        eps_lo: 0.0,
        eps_hi: a.eps_max,
        max_iter: a.max_iter,
        tol: a.tol,
        clip,
        margin: match a.margin {
            MarginArg::Separated => MarginMode::Separated,
            MarginArg::Joint => MarginMode::Joint,
        },
        execution,
    };
    p.validate()?;
    Ok(p)
}

/// The network and one labelled input point.
fn load_input(a: &InputArgs) -> Result<(Network, Vec<f64>, usize)> {
    let net = load_network(&a.model)?;
    let (x, label) = match (&a.input, &a.data) {
        (Some(x), _) => {
            if x.len() != net.input_dim() {
                bail!("--input has {} values, model expects {}", x.len(), net.input_dim());
            }
            let label = match a.label {
                Some(l) => l,
                None => net.predict_label(x)?,
            };
            (x.clone(), label)
        }
        (None, Some(path)) => {
            let data = load_dataset(path, Some(net.input_dim()))?;
            let Some((label, x)) = data.get(a.index).cloned() else {
                bail!("--index {} out of range: {} has {} samples", a.index, path.display(), data.len());
            };
            (x, label)
        }
        (None, None) => bail!("one of --input or --data is required"),
    };
    if label >= net.num_labels() {
        return Err(Error::Label {
            label,
            num_labels: net.num_labels(),
        }
        .into());
    }
    Ok((net, x, label))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let execution = configure_workers(a.search.workers)?;
    let (net, x, label) = load_input(&a.input)?;
    let methods = parse_methods(&a.strategies, a.search.seed)?;
    let search = search_params(&a.search, execution)?;
    let predicted = net.predict_label(&x)?;
    if predicted != label {
        return Err(Error::Misclassified { predicted, expected: label }.into());
    }
    for method in &methods {
        if let Some(eps) = a.eps {
            let mut spec = InputSpec::new(x.clone(), eps)?;
            if let Some((lo, hi)) = search.clip {
                spec = spec.with_clip(lo, hi);
            }
            let out = verify_at_epsilon(&net, &spec, method, search.margin, execution)?;
            let status = match out.status {
                VerifyStatus::Robust => "robust",
                VerifyStatus::Unknown => "unknown",
            };
            let failing = out.failing_label.map_or("-".to_string(), |s| s.to_string());
            println!("method={method} label={label} eps={eps} status={status} margin={:.6e} failing={failing}", out.margin_lo);
        } else {
            let b = certified_lower_bound(&net, &x, label, method, &search)?;
            let time = if a.no_timing { String::new() } else { format!(" time={:.4}s", b.wall_time) };
            let ceiling = if b.at_ceiling { " (search ceiling)" } else { "" };
            println!(
                "method={method} label={label} bound={:.6}{ceiling} iterations={}{time}",
                b.epsilon, b.iterations
            );
        }
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let execution = configure_workers(a.search.workers)?;
    let net = load_network(&a.model)?;
    let mut data = load_dataset(&a.data, Some(net.input_dim()))?;
    if let Some(n) = a.limit {
        data.truncate(n);
    }
    let methods = parse_methods(&a.strategies, a.search.seed)?;
    // Inputs run on the pool; each certification stays on its worker.
    let search = search_params(&a.search, Execution::Sequential)?;
    let reports: Vec<BatchReport> = methods
        .iter()
        .map(|m| batch_certify(&net, &data, m, &search, execution))
        .collect();
    for r in &reports {
        if let Some(rec) = r.records.iter().find(|rec| rec.error.is_some()) {
            bail!("{} failed on sample {}: {}", r.method, rec.index, rec.error.as_deref().unwrap_or(""));
        }
    }
    let opts = ReportOptions { timing: !a.no_timing };
    let text = match a.format {
        FormatArg::Table => render_table(&reports, opts),
        FormatArg::Records => render_records(&reports, opts),
    };
    write_output(a.out.as_deref(), &text)
}

fn cmd_trace(a: TraceArgs) -> Result<()> {
    let execution = configure_workers(a.workers)?;
    let [first, second] = a.strategies.as_slice() else {
        bail!("trace needs exactly two --strategy values, got {}", a.strategies.len());
    };
    let (first, second): (StrategyId, StrategyId) = (first.parse()?, second.parse()?);
    let (net, x, _) = load_input(&a.input)?;
    let spec = InputSpec::new(x, a.eps)?;
    let ta = propagate_with(&net, &spec, first.into(), execution)?.trace;
    let tb = propagate_with(&net, &spec, second.into(), execution)?.trace;
    fs::create_dir_all(&a.out).map_err(|source| Error::Io {
        path: a.out.clone(),
        source,
    })?;
    for (name, trace) in [(first, &ta), (second, &tb)] {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        write_output(Some(&a.out.join(format!("trace_{name}.csv"))), std::str::from_utf8(&buf)?)?;
    }
    let metrics = compare_traces(&ta, &tb)?;
    write_output(Some(&a.out.join("metrics.csv")), &render_trace_metrics(&metrics))?;
    println!("wrote {} neuron rows to {}", ta.neuron_count(), a.out.display());
    Ok(())
}

fn cmd_falsify(a: FalsifyArgs) -> Result<()> {
    let execution = configure_workers(a.workers)?;
    let (net, x, label) = load_input(&a.input)?;
    let predicted = net.predict_label(&x)?;
    if predicted != label {
        return Err(Error::Misclassified { predicted, expected: label }.into());
    }
    let spec = InputSpec::new(x, a.eps)?;
    match falsify(&net, &spec, a.budget, a.seed, execution)? {
        Some(c) => {
            let x: Vec<String> = c.x.iter().map(|v| v.to_string()).collect();
            println!(
                "counterexample label={} original={} distance={} x={}",
                c.predicted,
                c.original,
                c.distance,
                x.join(",")
            );
        }
        None => println!("none found (budget {})", a.budget),
    }
    Ok(())
}

fn cmd_gen_net(a: GenNetArgs) -> Result<()> {
    if a.inputs == 0 || a.labels < 2 || a.hidden.contains(&0) {
        bail!("need at least 1 input, 2 labels and non-empty hidden layers");
    }
    let mode = if a.mixed { WeightMode::Mixed } else { WeightMode::Qualifying };
    let net = random_network(&NetGenConfig {
        input_dim: a.inputs,
        hidden: a.hidden.clone(),
        num_labels: a.labels,
        activation: a.activation,
        mode,
        seed: a.seed,
    });
    let report = check_monotonic_conditions(&net);
    match mode {
        WeightMode::Qualifying => anyhow::ensure!(report.qualifies, "generated network does not qualify"),
        WeightMode::Mixed if a.hidden.is_empty() => {}
        WeightMode::Mixed => anyhow::ensure!(!report.condition2_ok, "generated network unexpectedly qualifies"),
    }
    save_network(&net, &a.out).with_context(|| "writing model")?;
    if let Some(path) = &a.data_out {
        let data = random_dataset(&net, a.samples, (0.0, 1.0), a.seed.wrapping_add(1));
        save_dataset(path, &data)?;
    }
    println!(
        "wrote {} ({} hidden layers, {} neurons, qualifies={})",
        a.out.display(),
        net.hidden_layers(),
        net.neuron_count(),
        report.qualifies
    );
    Ok(())
}
