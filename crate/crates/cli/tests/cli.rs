use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tightcert"))
}

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn run(args: &[&str]) -> Output {
    let m = models();
    let args: Vec<String> = args.iter().map(|a| a.replace("@models", m.to_str().unwrap())).collect();
    bin().args(&args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_example_certifies_and_optimizer_is_not_worse() {
    let o = run(&[
        "verify", "--model", "@models/example-2-2-2.json", "--data", "@models/example-2-2-2.csv",
        "--strategy", "newise,minarea,alg1", "--no-timing",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let bound = |m: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("method={m} "))).unwrap();
        line.split_whitespace().find_map(|f| f.strip_prefix("bound=")).unwrap().parse().unwrap()
    };
    assert!(bound("newise") > 0.0);
    assert!(bound("alg1") >= bound("newise") && bound("alg1") >= bound("minarea"));
}

#[test]
fn fixed_radius_reports_status() {
    let o = run(&["verify", "--model", "@models/example-2-2-2.json", "--input", "0.5,0.2", "--eps", "0.01"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("status=robust"));
}

#[test]
fn exit_codes() {
    let misclassified = run(&[
        "verify", "--model", "@models/example-2-2-2.json", "--data", "@models/example-2-2-2.csv", "--index", "2",
    ]);
    assert_eq!(misclassified.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&misclassified.stderr).contains("misclassified"));

    let missing = run(&["verify", "--model", "/nonexistent/model.json", "--input", "0,0"]);
    assert_eq!(missing.status.code(), Some(2));

    let usage = run(&["verify", "--bogus"]);
    assert_eq!(usage.status.code(), Some(1));

    let unknown = run(&["verify", "--model", "@models/example-2-2-2.json", "--input", "0,0", "--strategy", "nope"]);
    assert_eq!(unknown.status.code(), Some(1));

    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn gen_net_bench_and_trace_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let gen = |out: &str| {
        run(&[
            "gen-net", "--inputs", "3", "--hidden", "6,5", "--labels", "3", "--activation", "tanh", "--seed", "4",
            "--out", out, "--data-out", &p("d.csv"), "--samples", "5",
        ])
    };
    assert!(gen(&p("a.json")).status.success());
    assert!(gen(&p("b.json")).status.success());
    assert_eq!(std::fs::read(p("a.json")).unwrap(), std::fs::read(p("b.json")).unwrap());

    let o = run(&[
        "bench", "--model", &p("a.json"), "--data", &p("d.csv"), "--strategy", "newise,taylor", "--no-timing",
        "--out", &p("report.txt"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(p("report.txt")).unwrap();
    let taylor = report.lines().find(|l| l.starts_with("taylor")).unwrap();
    let imp: f64 = taylor.split_whitespace().last().unwrap().parse().unwrap();
    assert!(imp >= 0.0, "{report}");

    let o = run(&[
        "trace", "--model", &p("a.json"), "--data", &p("d.csv"), "--eps", "0.05", "--strategy", "newise",
        "--strategy", "taylor", "--out", &p("trace"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(dir.path().join("trace/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("layer,index,red,blue,green"));
    assert_eq!(metrics.lines().count(), 1 + 6 + 5 + 3);
    for line in metrics.lines().skip(1) {
        let red = line.split(',').nth(2).unwrap();
        if !red.is_empty() {
            assert!(red.parse::<f64>().unwrap() <= 1e-12, "{line}");
        }
    }
}

#[test]
fn falsify_on_an_attackable_net() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let model = model.to_str().unwrap();
    assert!(run(&["gen-net", "--inputs", "2", "--hidden", "8", "--mixed", "--seed", "1", "--out", model]).status.success());
    let found = run(&["falsify", "--model", model, "--input", "0.3,0.6", "--eps", "5"]);
    assert_eq!(found.status.code(), Some(0));
    assert!(stdout(&found).starts_with("counterexample label=0 original=1"), "{}", stdout(&found));
    let none = run(&["falsify", "--model", model, "--input", "0.3,0.6", "--eps", "0"]);
    assert!(stdout(&none).starts_with("none found"));
}
