use std::path::{Path, PathBuf};
use std::process::Command;

use chaosdual_cli::config::ReportFormat;
use chaosdual_cli::run::{parse_report, read_report, render_report};
use chaosdual_cli::{run_bench, run_oracle, run_price, CliError, Overrides, RunConfig};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn small_config(extra: &str) -> RunConfig {
    RunConfig::from_toml(&format!(
        r#"
[model]
kind = "black_scholes"
assets = 2
spot = 100.0
vol = 0.2
rate = 0.05

[payoff]
kind = "basket_put"

[contract]
maturity = 1.0
strike = 100.0
n = 3

[method]
p = 2
m = 2000
{extra}
"#
    ))
    .unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn report_round_trips_in_both_formats() {
    let run = run_price(&small_config("")).unwrap();
    for format in [ReportFormat::Toml, ReportFormat::Json] {
        let text = render_report(&run.result, format).unwrap();
        assert_eq!(parse_report(&text, format).unwrap(), run.result);
    }
}

#[test]
fn writes_report_and_trace() {
    let mut cfg = small_config("");
    cfg.output.report = Some(tmp("report.json"));
    cfg.output.format = ReportFormat::Json;
    cfg.output.trace = Some(tmp("trace.csv"));
    let run = run_price(&cfg).unwrap();
    let back = read_report(cfg.output.report.as_ref().unwrap(), ReportFormat::Json).unwrap();
    assert_eq!(back, run.result);
    let trace = std::fs::read_to_string(cfg.output.trace.as_ref().unwrap()).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration,value,step,gamma,grad_norm"));
    assert_eq!(lines.count(), run.trace.accepted.len());
}

#[test]
fn same_config_same_report() {
    let cfg = small_config("seed = 11");
    let a = run_price(&cfg).unwrap().result;
    let b = run_price(&cfg).unwrap().result;
    assert!(a.same_outcome(&b));
    assert_eq!(a.price.to_bits(), b.price.to_bits());
    assert_eq!(a.seed, 11);
}

#[test]
fn overrides_take_precedence() {
    let mut cfg = small_config("");
    cfg.apply(&Overrides {
        p: Some(1),
        m: Some(512),
        seed: Some(3),
        ..Overrides::default()
    });
    let r = run_price(&cfg).unwrap().result;
    assert_eq!((r.degree, r.paths, r.seed), (1, 512, 3));
    assert_eq!(r.basis_size, 6);
}

#[test]
fn benchmark_configs_describe_one_row_and_validate() {
    let mut count = 0;
    for entry in std::fs::read_dir(configs().join("benchmarks")).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("benchmark =").count(), 1, "{}", path.display());
        let cfg = RunConfig::load(&path).unwrap();
        assert!(cfg.benchmark.as_deref().is_some_and(|b| !b.is_empty()));
        cfg.validate().unwrap();
        count += 1;
    }
    assert_eq!(count, 14);
    RunConfig::load(&configs().join("heston_put.toml"))
        .unwrap()
        .validate()
        .unwrap();
}

#[test]
fn oracle_needs_a_reducible_payoff() {
    let err = run_oracle(&small_config("")).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert!(err.to_string().contains("reduction undefined"), "{err}");

    let cfg = RunConfig::load(&configs().join("benchmarks/geometric_put_d2_p3.toml")).unwrap();
    let r = run_oracle(&cfg).unwrap();
    assert!(r.european <= r.bermudan && r.bermudan <= r.american);
    assert!((r.american - 4.20).abs() <= 0.02);
}

#[test]
fn bench_rows() {
    let rows = run_bench(&small_config(""), &[1]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].efficiency, 1.0);

    let mut cfg = small_config("");
    cfg.method.m = 5000;
    let rows = run_bench(&cfg, &[1, 2, 4]).unwrap();
    assert!(rows
        .windows(2)
        .all(|w| w[0].price.to_bits() == w[1].price.to_bits()));
    assert!(run_bench(&small_config(""), &[]).is_err());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chaosdual"))
}

#[test]
fn zero_paths_exit_code_two() {
    let base = configs().join("benchmarks/basket_put_d5_p2_n3_s100.toml");
    let out = bin()
        .args(["price", base.to_str().unwrap(), "--m", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("method.m must be ≥ 1"), "{stderr}");
}

#[test]
fn binary_prices_and_reports() {
    let base = configs().join("benchmarks/basket_put_d5_p2_n3_s100.toml");
    let out = bin()
        .args([
            "price",
            base.to_str().unwrap(),
            "--m",
            "1000",
            "--threads",
            "1",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = parse_report(&String::from_utf8_lossy(&out.stdout), ReportFormat::Toml).unwrap();
    assert_eq!((report.paths, report.threads), (1000, 1));
    assert!(report.benchmark.is_some());

    let out = bin()
        .args(["oracle", base.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reduction undefined"));

    let out = bin().args(["price", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
