//! Acceptance criteria, one line per criterion:
//! `[PASS] C<n> <summary> (<measurements>)` or `[FAIL] ...`.
//!
//! Runs without the libtest harness so the lines are always printed; the process
//! exits nonzero if any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use signstorm::diagnostics::{
    representation_check, run_diagnostic_suite, CheckStatus, FrequencyReport, SuiteSettings,
};
use signstorm::harness::{
    derive_trial_seed, drive, run_experiment, ExperimentReport, ExperimentSpec, OptimizerSpec,
    ParamMode,
};
use signstorm::problems::{
    bounded_nonconvex, noisy_quadratic, scale_declared_smoothness, synthetic_logistic,
    verify_assumptions,
};
use signstorm::theory::{c_rho, g_rho, locate_crossover, theorem_params, TheoremInputs};
use signstorm::{HyperParams, Method, SharedProblem, StochasticProblem, Vector};

struct Outcome {
    passed: bool,
    detail: String,
}

fn ramp(d: usize) -> Vector<f64> {
    Vector::from_fn(d, |j| 0.5 + j as f64 / (d - 1) as f64)
}

fn quadratic(d: usize, sigma: f64) -> SharedProblem<f64> {
    Arc::new(noisy_quadratic(Vector::filled(d, 1.0), Vector::filled(d, sigma), ramp(d)).unwrap())
}

/// Plain least squares of ln(m) on ln(T), written out independently of the library.
fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn medians(report: &ExperimentReport, method: Method) -> Vec<(f64, f64)> {
    report
        .cells
        .iter()
        .filter(|c| c.optimizer == method)
        .map(|c| (c.horizon as f64, c.median().expect("cell has completed trials")))
        .collect()
}

fn c1_identities() -> Outcome {
    let (d, horizon, seeds) = (10, 1000, 20u64);
    let p = quadratic(d, 0.5);
    let runs: Vec<(f64, f64, bool)> = [0.0, 0.9, 0.99]
        .iter()
        .flat_map(|&b1| (0..seeds).map(move |s| (b1, s)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(b1, seed)| {
            let hp = HyperParams::new(0.01, b1, 0.0).unwrap();
            let mut split_err = 0.0f64;
            let (mut xi, mut z, mut eps) = (Vec::new(), Vec::new(), Vec::new());
            let mut trace = signstorm::diagnostics::EpsilonTrace::with_capacity(horizon);
            drive(p.as_ref(), Method::SignStorm, &hp, horizon, seed, &mut |v| {
                trace.record(v);
                let g = &v.grads;
                for j in 0..d {
                    if v.t > 1 {
                        let part_i = b1 * v.m_prev[j] + (1.0 - b1) * g.curr[j];
                        let part_ii = b1 * (g.curr[j] - g.prev[j]);
                        let scale = 1f64.max(part_i.abs() + part_ii.abs());
                        split_err = split_err.max((part_i + part_ii - v.m[j]).abs() / scale);
                    }
                }
                xi.push((0..d).map(|j| g.curr[j] - v.grad_exact[j]).collect::<Vec<f64>>());
                eps.push((0..d).map(|j| v.m[j] - v.grad_exact[j]).collect::<Vec<f64>>());
                z.push(if v.t == 1 {
                    vec![0.0; d]
                } else {
                    (0..d)
                        .map(|j| g.curr[j] - g.prev[j] + v.grad_exact_prev[j] - v.grad_exact[j])
                        .collect()
                });
            })
            .unwrap();
            // Direct summation with a table of explicit powers.
            let pow: Vec<f64> = (0..=horizon).map(|k| b1.powi(k as i32)).collect();
            let max_eps = eps.iter().flatten().fold(0.0f64, |a, e| a.max(e.abs()));
            let mut repr_err = 0.0f64;
            for t in 1..=horizon {
                for j in 0..d {
                    let mut rhs = pow[t] * xi[0][j];
                    for s in 1..=t {
                        let w = pow[t - s];
                        rhs += b1 * w * z[s - 1][j] + (1.0 - b1) * w * xi[s - 1][j];
                    }
                    repr_err = repr_err.max((eps[t - 1][j] - rhs).abs());
                }
            }
            let library_ok = representation_check(&trace, b1).passed;
            (split_err, repr_err / (1.0 + max_eps), library_ok)
        })
        .collect();
    let split = runs.iter().map(|r| r.0).fold(0.0, f64::max);
    let repr = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    let library = runs.iter().all(|r| r.2);
    Outcome {
        passed: split <= 1e-12 && repr <= 1e-6 && library,
        detail: format!(
            "{} runs; split err {split:.2e} <= 1e-12, representation err {repr:.2e} <= 1e-6, library checker agrees: {library}",
            runs.len()
        ),
    }
}

fn c2_movement() -> Outcome {
    let (d, horizon) = (10, 10_000);
    let p = quadratic(d, 0.5);
    let worst: Vec<(f64, f64)> = [0.0, 0.5, 0.85]
        .iter()
        .flat_map(|&b2| (0..100u64).map(move |s| (b2, s)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(b2, seed)| {
            let hp = HyperParams::new(0.01, 0.95, b2).unwrap();
            let bound = 0.01 * (d as f64 / (1.0 - b2)).sqrt();
            let mut w = 0.0f64;
            drive(p.as_ref(), Method::SignStorm, &hp, horizon, seed, &mut |v| {
                let step = (0..d).map(|j| (v.next_x[j] - v.x[j]).powi(2)).sum::<f64>().sqrt();
                w = w.max(step / bound);
            })
            .unwrap();
            (b2, w)
        })
        .collect();
    let violations = worst.iter().filter(|(_, w)| *w > 1.0 + 1e-9).count();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    Outcome {
        passed: violations == 0,
        detail: format!("300 runs x 1e4 steps; worst ratio {max:.12}, runs with violations {violations}"),
    }
}

fn c3_sign_degeneracy() -> Outcome {
    let d = 10;
    let p = quadratic(d, 0.5);
    let eta = 0.0123;
    let mut bad_updates = 0usize;
    let mut bad_ratios = 0usize;
    let mut active = 0usize;
    for (b1, seed) in [(0.0, 1u64), (0.9, 2), (0.99, 3)] {
        let hp = HyperParams::new(eta, b1, 0.0).unwrap();
        drive(p.as_ref(), Method::SignStorm, &hp, 2000, seed, &mut |v| {
            for j in 0..d {
                if v.update[j] != 0.0 {
                    active += 1;
                    if v.update[j].abs().to_bits() != eta.to_bits() {
                        bad_updates += 1;
                    }
                }
                if v.m[j] != 0.0 && (v.m[j].abs() / v.v[j].sqrt()).to_bits() != 1f64.to_bits() {
                    bad_ratios += 1;
                }
            }
        })
        .unwrap();
    }
    Outcome {
        passed: bad_updates == 0 && bad_ratios == 0 && active > 0,
        detail: format!(
            "{active} nonzero displacements, {bad_updates} differ from eta in bits, {bad_ratios} ratios != 1"
        ),
    }
}

fn c4_c_rho() -> Outcome {
    let at_half = g_rho(0.5f64).unwrap();
    let right = 6.0 * (0.5f64 * 0.5).sqrt();
    let continuous = at_half == 3.0 && right == 3.0;
    let found = locate_crossover(1e-12);
    let closed = (6.0 + 35f64.sqrt()) / 12.0;
    let plateau = c_rho(found - 1e-6).unwrap() == 0.5 && c_rho(found + 1e-6).unwrap() < 0.5;
    Outcome {
        passed: continuous && (found - 0.993007).abs() <= 1e-5 && (found - closed).abs() <= 1e-9 && plateau,
        detail: format!(
            "g(0.5) = {at_half}, 6*sqrt(0.25) = {right}; crossover {found:.9} (closed form {closed:.9})"
        ),
    }
}

fn c5_theorem_arithmetic() -> Outcome {
    let mut inp = TheoremInputs {
        delta: 1.0f64,
        l1_norm: 1.0,
        sigma_l1: 1.0,
        horizon: 1000,
        beta2: 0.0,
        confidence: 0.05,
        dim: 1,
        delta_floor: None,
    };
    let hp = theorem_params(&inp).unwrap().params;
    let eta = hp.eta_at(1);
    inp.sigma_l1 = 0.0;
    let noiseless = theorem_params(&inp).unwrap().params.beta1;
    Outcome {
        passed: hp.beta1 == 0.99 && eta == 0.01 && noiseless == 0.0,
        detail: format!("beta1 = {:?}, eta = {eta:?}; sigma = 0 gives beta1 = {noiseless:?}", hp.beta1),
    }
}

fn rate_spec(sigma: f64, methods: &[Method]) -> ExperimentSpec {
    ExperimentSpec {
        problem: quadratic(20, sigma),
        problem_description: serde_json::json!({"name": "noisy_quadratic", "dim": 20, "h": 1.0, "sigma": sigma}),
        optimizers: methods.iter().map(|&method| OptimizerSpec { method, params: None }).collect(),
        param_mode: ParamMode::Theorem { beta2: 0.0, eps_guard: 0.0, delta_floor: None },
        t_grid: vec![1000, 3162, 10_000, 31_623, 100_000],
        n_seeds: 50,
        delta: 0.05,
        master_seed: 20_240_601,
        collect_diagnostics: false,
        trace_seeds: 0,
    }
}

fn c6_rate_separation() -> Outcome {
    let spec = rate_spec(0.5, &[Method::SignStorm, Method::GeneralizedSignSgd]);
    let report = run_experiment(&spec, available()).unwrap().report;
    let storm = ols_slope(&medians(&report, Method::SignStorm));
    let sign = ols_slope(&medians(&report, Method::GeneralizedSignSgd));
    let lib_storm = report.rate_fit(Method::SignStorm).map(|f| f.slope).unwrap_or(f64::NAN);
    let fails: usize = report.cells.iter().map(|c| c.n_fail).sum();
    Outcome {
        passed: (-0.45..=-0.22).contains(&storm)
            && (-0.35..=-0.15).contains(&sign)
            && sign - storm >= 0.05
            && (lib_storm - storm).abs() < 1e-9
            && fails == 0,
        detail: format!(
            "slopes: signstorm {storm:.3} in [-0.45, -0.22], generalized_signsgd {sign:.3} in [-0.35, -0.15], gap {:.3} >= 0.05",
            sign - storm
        ),
    }
}

fn c7_noiseless() -> Outcome {
    let spec = rate_spec(0.0, &[Method::SignStorm]);
    let report = run_experiment(&spec, available()).unwrap().report;
    let slope = ols_slope(&medians(&report, Method::SignStorm));
    Outcome {
        passed: (-0.65..=-0.35).contains(&slope),
        detail: format!("signstorm slope {slope:.3} in [-0.65, -0.35]"),
    }
}

fn frequency_line(name: &str, v: &serde_json::Value) -> (bool, String) {
    match serde_json::from_value::<FrequencyReport>(v.clone()) {
        Ok(r) => (
            r.passed,
            format!(
                "{name} {:.4} <= {:.2} + {:.4}",
                r.fraction, r.allowed, r.margin
            ),
        ),
        Err(_) => (false, format!("{name} missing")),
    }
}

fn c8_frequencies() -> Outcome {
    let p = quadratic(10, 0.5);
    let inp = TheoremInputs {
        delta: p.constants().delta_upper,
        l1_norm: p.constants().l1_norm(),
        sigma_l1: p.constants().sigma_l1(),
        horizon: 1000,
        beta2: 0.0,
        confidence: 0.05,
        dim: 10,
        delta_floor: None,
    };
    let hp = theorem_params(&inp).unwrap().params;
    let settings = SuiteSettings {
        horizon: 1000,
        seeds: 200,
        confidence: 0.05,
        representation_seeds: 0,
        lemma1_trials: 10_000,
        lemma1_horizon: 1000,
        assumption_probes: 200,
        master_seed: 8,
    };
    let suite = run_diagnostic_suite(p.as_ref(), &hp, &settings, available()).unwrap();
    let mut passed = true;
    let mut parts = Vec::new();
    for name in [
        "epsilon_bound_frequency",
        "sign_dichotomy_frequency",
        "lemma1_rademacher",
        "lemma1_bounded_uniform",
    ] {
        let v = suite.verdict(name).expect("verdict present");
        let (ok, line) = frequency_line(name, &v.detail);
        passed &= ok && v.status == CheckStatus::Pass;
        parts.push(line);
    }
    Outcome {
        passed,
        detail: parts.join("; "),
    }
}

fn c9_oracles() -> Outcome {
    let d = 8;
    let p = quadratic(d, 0.5);
    let hp = HyperParams::new(0.01, 0.0, 0.0).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut a = Vec::new();
        let mut b = Vec::new();
        drive(p.as_ref(), Method::SignStorm, &hp, 1000, seed, &mut |v| a.push(v.next_x.clone())).unwrap();
        drive(p.as_ref(), Method::GeneralizedSignSgd, &hp, 1000, seed, &mut |v| b.push(v.next_x.clone()))
            .unwrap();
        for (x, y) in a.iter().zip(&b) {
            for j in 0..d {
                worst = worst.max((x[j] - y[j]).abs());
            }
        }
    }

    let problems: Vec<(&str, SharedProblem<f64>)> = vec![
        ("noisy_quadratic", quadratic(10, 0.5)),
        (
            "bounded_nonconvex",
            Arc::new(bounded_nonconvex(Vector::filled(10, 1.5), Vector::filled(10, 0.3), ramp(10)).unwrap()),
        ),
        (
            "synthetic_logistic",
            Arc::new(synthetic_logistic(200, 1.0, Vector::zeros(10), 5).unwrap()),
        ),
    ];
    let mut verifier = Vec::new();
    let mut all_pass = true;
    for (i, (name, prob)) in problems.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_trial_seed(9, i, 0, 0));
        let ok = verify_assumptions(prob.as_ref(), 2000, &mut rng).unwrap().all_passed();
        all_pass &= ok;
        verifier.push(format!("{name} {}", if ok { "passes" } else { "fails" }));
    }
    let halved = scale_declared_smoothness(quadratic(10, 0.5), 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let fault = verify_assumptions(&halved as &dyn StochasticProblem<f64>, 2000, &mut rng).unwrap();
    Outcome {
        passed: worst <= 1e-12 && all_pass && !fault.smoothness.passed,
        detail: format!(
            "beta1 = 0 traces differ by {worst:.1e}; {}; halved L_vec rejected: {} (ratio {:.3})",
            verifier.join(", "),
            !fault.smoothness.passed,
            fault.smoothness.worst_ratio
        ),
    }
}

fn c10_reproducibility() -> Outcome {
    let spec = ExperimentSpec {
        problem: quadratic(6, 0.5),
        problem_description: serde_json::json!({"name": "noisy_quadratic"}),
        optimizers: vec![
            OptimizerSpec { method: Method::SignStorm, params: None },
            OptimizerSpec { method: Method::GeneralizedSignSgd, params: None },
            OptimizerSpec { method: Method::Adam, params: None },
            OptimizerSpec {
                method: Method::Storm,
                params: Some(ParamMode::Fixed { eta: 0.01, beta1: 0.9, beta2: 0.0, eps_guard: 0.0 }),
            },
        ],
        param_mode: ParamMode::Theorem { beta2: 0.0, eps_guard: 0.0, delta_floor: None },
        t_grid: vec![100, 300, 1000],
        n_seeds: 20,
        delta: 0.05,
        master_seed: 77,
        collect_diagnostics: true,
        trace_seeds: 0,
    };
    let a = run_experiment(&spec, 1).unwrap().report.to_json().unwrap();
    let b = run_experiment(&spec, 8).unwrap().report.to_json().unwrap();
    Outcome {
        passed: a.as_bytes() == b.as_bytes(),
        detail: format!("{} bytes, workers 1 vs 8 identical: {}", a.len(), a == b),
    }
}

type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

fn available() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("C1", "algebraic identities", Duration::from_secs(10), c1_identities),
        ("C2", "movement bound", Duration::from_secs(60), c2_movement),
        ("C3", "beta2 = 0 sign degeneracy", Duration::from_secs(60), c3_sign_degeneracy),
        ("C4", "c(rho) continuity and crossover", Duration::from_secs(60), c4_c_rho),
        ("C5", "theorem parameter arithmetic", Duration::from_secs(60), c5_theorem_arithmetic),
        ("C6", "rate separation", Duration::from_secs(900), c6_rate_separation),
        ("C7", "noiseless adaptivity", Duration::from_secs(900), c7_noiseless),
        ("C8", "high-probability frequencies", Duration::from_secs(300), c8_frequencies),
        ("C9", "oracle equivalences and verifier", Duration::from_secs(60), c9_oracles),
        ("C10", "reproducibility across workers", Duration::from_secs(60), c10_reproducibility),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        let ok = out.passed && elapsed <= budget;
        if !ok {
            failed += 1;
        }
        println!(
            "[{}] {id} {name}: {} ({:.2}s, budget {}s)",
            if ok { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
