//! Text reports for batch comparisons and trace diagnostics.

use std::fmt::Write;

use crate::certify::BatchReport;
use crate::propagate::TraceMetric;

/// `100·(better − base)/base`; `None` when `base` is zero or either value
/// is not finite.
pub fn improvement_pct(better: f64, base: f64) -> Option<f64> {
    let v = 100.0 * (better - base) / base;
    (base != 0.0 && v.is_finite()).then_some(v)
}

/// Round half away from zero to `decimals` places. A relative nudge of
/// 1e-12 keeps values such as 28.165 (stored as 28.16499…) on the side their
/// decimal spelling suggests.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x.abs() * scale;
    x.signum() * (scaled * (1.0 + 1e-12) + 0.5).floor() / scale
}

pub fn format_pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}", round_half_up(v, 2)),
        None => "-".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    /// Print wall times; off for byte-reproducible output.
    pub timing: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { timing: true }
    }
}

fn time_cell(t: f64, opts: ReportOptions) -> String {
    if opts.timing {
        format!("{t:.4}")
    } else {
        "-".to_string()
    }
}

fn num4(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "-".to_string()
    }
}

/// One row per method: mean bound, standard deviation, mean time and the
/// improvement of the first method over this one.
pub fn render_table(reports: &[BatchReport], opts: ReportOptions) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>12}",
        "method", "mean", "std", "time(s)", "count", "skipped", "improve(%)"
    );
    let first = reports.first().map(|r| r.mean);
    for (i, r) in reports.iter().enumerate() {
        let imp = if i == 0 { None } else { first.and_then(|f| improvement_pct(f, r.mean)) };
        let _ = writeln!(
            out,
            "{:<10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>12}",
            r.method,
            num4(r.mean),
            num4(r.std_dev),
            time_cell(r.mean_time, opts),
            r.count,
            r.skipped_misclassified,
            if i == 0 { "-".to_string() } else { format_pct(imp) }
        );
    }
    out
}

/// CSV records, one per (input, method), followed by a summary block.
/// Bounds are written with full precision so the summary can be re-derived.
pub fn render_records(reports: &[BatchReport], opts: ReportOptions) -> String {
    let mut out = String::from("index,label,method,bound,iterations,time,improvement_pct\n");
    let first = reports.first();
    for r in reports {
        for rec in &r.records {
            let Some(b) = &rec.bound else { continue };
            let imp = first
                .and_then(|f| f.records.get(rec.index))
                .and_then(|f| f.bound.as_ref())
                .and_then(|f| improvement_pct(f.epsilon, b.epsilon));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                rec.index,
                rec.label,
                r.method,
                b.epsilon,
                b.iterations,
                if opts.timing { b.wall_time.to_string() } else { "-".to_string() },
                format_pct(imp)
            );
        }
    }
    out.push_str("\n# summary\nmethod,count,mean,std,mean_time,skipped,failed,improvement_pct\n");
    let first_mean = first.map(|f| f.mean);
    for (i, r) in reports.iter().enumerate() {
        let imp = if i == 0 { None } else { first_mean.and_then(|f| improvement_pct(f, r.mean)) };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.count,
            r.mean,
            r.std_dev,
            if opts.timing { r.mean_time.to_string() } else { "-".to_string() },
            r.skipped_misclassified,
            r.failed,
            format_pct(imp)
        );
    }
    out
}

/// `layer,index,red,blue,green`: relative change of interval width, lower
/// end and upper end. Undefined ratios are left empty.
pub fn render_trace_metrics(metrics: &[Vec<TraceMetric>]) -> String {
    // `+ 0.0` turns −0 into 0
    let cell = |v: Option<f64>| v.map_or(String::new(), |v| format!("{:.6e}", v + 0.0));
    let mut out = String::from("layer,index,red,blue,green\n");
    for (t, layer) in metrics.iter().enumerate() {
        for (r, m) in layer.iter().enumerate() {
            let _ = writeln!(out, "{t},{r},{},{},{}", cell(m.width), cell(m.lower), cell(m.upper));
        }
    }
    out
}
