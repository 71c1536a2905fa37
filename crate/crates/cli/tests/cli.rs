use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use signstorm::diagnostics::CheckStatus;
use signstorm::harness::{
    Cell, ConstantsSummary, ExperimentReport, ParamMode, QuantilePoint, RateFitEntry, ReportConfig,
};
use signstorm::harness::fit_rate;
use signstorm::Method;
use signstorm_cli::{cmd_check, cmd_report, cmd_run, ChartKind, CliError};

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn quadratic_config(extra: &str, optimizers: &str, t_grid: &str, n_seeds: usize) -> String {
    format!(
        r#"{{
  "problem": {{"name": "noisy_quadratic", "dim": 4, "h": 1.0, "sigma": 0.5, "x_init": {{"from": 0.5, "to": 1.5}}}},
  "optimizers": {optimizers},
  "param_mode": {{"mode": "theorem"}},
  "t_grid": {t_grid},
  "n_seeds": {n_seeds},
  "master_seed": 3,
  "output_dir": "out"{extra}
}}"#
    )
}

fn small_check() -> &'static str {
    r#",
  "check": {"horizon": 200, "seeds": 8, "representation_seeds": 2, "lemma1_trials": 200, "lemma1_horizon": 100, "assumption_probes": 200}"#
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_signstorm"))
}

#[test]
fn minimal_run_writes_one_cell_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &quadratic_config("", r#"["signstorm"]"#, "[50]", 2));
    let out = cmd_run(&cfg, 2).unwrap();
    assert!(out.report.starts_with(dir.path().join("out")));
    let report: ExperimentReport =
        serde_json::from_str(&fs::read_to_string(&out.report).unwrap()).unwrap();
    assert_eq!(report.cells.len(), 1);
    assert_eq!(report.cells[0].n_ok, 2);
    for p in out.traces.iter().chain(&out.charts) {
        assert!(p.starts_with(dir.path().join("out")), "{}", p.display());
        assert!(p.exists());
    }
    let csv = fs::read_to_string(&out.traces[0]).unwrap();
    assert!(csv.starts_with("t,loss,grad_l1,grad_l2,eps_l1,step_l2\n"));
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn rerun_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &quadratic_config("", r#"["signstorm", "generalized_signsgd"]"#, "[20, 40, 80]", 5),
    );
    let out = bin().arg("run").arg(&cfg).env("SIGNSTORM_THREADS", "1").output().unwrap();
    assert!(out.status.success());
    let first = fs::read(dir.path().join("out/report.json")).unwrap();
    let out = bin().arg("run").arg(&cfg).env("SIGNSTORM_THREADS", "6").output().unwrap();
    assert!(out.status.success());
    assert_eq!(first, fs::read(dir.path().join("out/report.json")).unwrap());
}

#[test]
fn missing_field_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = quadratic_config("", r#"["signstorm"]"#, "[50]", 2).replace("\"n_seeds\": 2,", "");
    let cfg = write_config(dir.path(), &text);
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("n_seeds"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn unreadable_config_exits_with_io_error() {
    let out = bin().arg("run").arg("/nonexistent/config.json").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn default_suite_passes_on_noisy_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &quadratic_config("", r#"["signstorm"]"#, "[50]", 2));
    let report = cmd_check(&cfg, 4).unwrap();
    assert!(!report.deterministic_failure());
    for name in ["assumptions", "storm_decomposition", "representation", "movement_bound"] {
        assert_eq!(report.verdict(name).unwrap().status, CheckStatus::Pass, "{name}");
    }
    assert!(dir.path().join("out/check.json").exists());
}

#[test]
fn eps_guard_skips_movement_bound() {
    let dir = tempfile::tempdir().unwrap();
    let text = quadratic_config(small_check(), r#"["signstorm"]"#, "[50]", 2)
        .replace(r#"{"mode": "theorem"}"#, r#"{"mode": "theorem", "eps_guard": 1e-8}"#);
    let cfg = write_config(dir.path(), &text);
    let out = bin().arg("check").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let movement = json["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|v| v["checker"] == "movement_bound")
        .unwrap();
    assert_eq!(movement["status"], "skipped");
}

#[test]
fn halved_smoothness_fails_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let extra = format!("{},\n  \"fault\": {{\"l_scale\": 0.5}}", small_check());
    let cfg = write_config(dir.path(), &quadratic_config(&extra, r#"["signstorm"]"#, "[50]", 2));
    let out = bin().arg("check").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("assumptions"));
    assert!(matches!(cmd_check(&cfg, 2), Err(CliError::CheckFailed(_))));
}

fn synthetic_report(cells: Vec<Cell>, methods: &[Method]) -> ExperimentReport {
    let rate_fits = methods
        .iter()
        .map(|m| {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.optimizer == *m)
                .filter_map(|c| c.median().map(|v| (c.horizon as f64, v)))
                .collect();
            RateFitEntry {
                optimizer: *m,
                fit: fit_rate(&pts).ok(),
                note: None,
            }
        })
        .collect();
    ExperimentReport {
        config: ReportConfig {
            fingerprint: String::new(),
            problem: serde_json::json!({"name": "synthetic"}),
            constants: ConstantsSummary { dim: 1, delta: 1.0, l1_norm: 1.0, sigma_l1: 1.0 },
            optimizers: Vec::new(),
            param_mode: ParamMode::Fixed { eta: 0.1, beta1: 0.0, beta2: 0.0, eps_guard: 0.0 },
            t_grid: vec![1000, 10000, 100000],
            n_seeds: 1,
            delta: 0.05,
            quantile_levels: vec![0.5, 0.9, 0.95],
            seed_rule: String::new(),
        },
        master_seed: 0,
        cells,
        rate_fits,
        violations: Vec::new(),
    }
}

fn power_cells(method: Method, exponent: f64) -> Vec<Cell> {
    [1000usize, 10000, 100000]
        .iter()
        .map(|&t| {
            let m = (t as f64).powf(exponent);
            Cell {
                optimizer: method,
                horizon: t,
                params: None,
                quantiles: [0.5, 0.9, 0.95]
                    .iter()
                    .map(|&level| QuantilePoint { level, value: m * (1.0 + level) })
                    .collect(),
                n_ok: 1,
                n_fail: 0,
                error: None,
            }
        })
        .collect()
}

fn render_via_cli(report: &ExperimentReport, kind: ChartKind) -> String {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    fs::write(&path, serde_json::to_string(report).unwrap()).unwrap();
    let svg = cmd_report(&path, kind, None).unwrap();
    fs::read_to_string(svg).unwrap()
}

#[test]
fn two_optimizers_give_two_bands_and_legend_entries() {
    let mut cells = power_cells(Method::SignStorm, -1.0 / 3.0);
    cells.extend(power_cells(Method::GeneralizedSignSgd, -0.25));
    let report = synthetic_report(cells, &[Method::SignStorm, Method::GeneralizedSignSgd]);
    let svg = render_via_cli(&report, ChartKind::ConvergenceBands);
    assert_eq!(svg.matches(r#"class="band""#).count(), 2);
    assert_eq!(svg.matches(r#"class="legend-entry""#).count(), 2);
    assert!(svg.contains("signstorm (slope"));
    assert!(svg.contains("generalized_signsgd (slope"));
    assert!(svg.contains("horizon T"));
}

#[test]
fn rate_fit_chart_annotates_exact_slope() {
    let report = synthetic_report(power_cells(Method::SignStorm, -1.0 / 3.0), &[Method::SignStorm]);
    let svg = render_via_cli(&report, ChartKind::RateFit);
    assert!(svg.contains("\u{2212}0.333"), "{svg}");
}

#[test]
fn empty_cells_render_no_data() {
    let dir = tempfile::tempdir().unwrap();
    let report = synthetic_report(Vec::new(), &[]);
    let path = dir.path().join("report.json");
    fs::write(&path, serde_json::to_string(&report).unwrap()).unwrap();
    let out = bin()
        .args(["report", path.to_str().unwrap(), "--chart", "rate-fit"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let svg = fs::read_to_string(dir.path().join("rate_fit.svg")).unwrap();
    assert!(svg.contains("no data"));
}

#[test]
fn malformed_report_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    fs::write(&path, "{\"cells\": 3}").unwrap();
    let out = bin()
        .args(["report", path.to_str().unwrap(), "--chart", "convergence-bands"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn params_prints_reference_values() {
    let out = bin()
        .args(["params", "--delta", "1", "--l1", "1", "--sigma-l1", "1", "--horizon", "1000"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["beta1"], 0.99);
    assert_eq!(json["eta"], 0.01);
    assert_eq!(json["c_rho"], 0.5);
}
