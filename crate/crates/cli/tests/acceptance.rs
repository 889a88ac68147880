//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line before asserting.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use picard_cli::config::DEFAULT_SEED;
use picard_core::analytic::{
    eval_grad_v, eval_v, origin_gap, pde_residual, IterateEvaluator, LinearExampleSpec,
};
use picard_core::bounds::{a10_lower, a10_min_n, a21_min_n, a21_sandwich, b20_bound, l01_error, linear_example_problem};
use picard_core::special::{hermite_eval, hermite_sequence};
use picard_core::stochastic::{estimate_error_series, nested_picard, Budget, ErrorSeries, MarkovianBsde};
use tempfile::TempDir;

fn report(id: u32, name: &str, ok: bool, elapsed: Duration, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("{verdict} criterion {id} ({name}) in {:.2}s: {detail}", elapsed.as_secs_f64());
}

fn lab(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_picard-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn criterion_1_exact_series_values() {
    let tmp = TempDir::new().unwrap();
    let start = Instant::now();
    let run = lab(tmp.path(), &["series", "--b-norm-sq", "4"]);
    let elapsed = start.elapsed();
    assert!(run.status.success());
    let (h, body) = csv_rows(&tmp.path().join("series.csv"));
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let row = body.iter().find(|r| r[col("n")] == "5").unwrap();
    let v5: f64 = row[col("v_n")].parse().unwrap();
    let vinf: f64 = row[col("v_inf")].parse().unwrap();
    let gap: f64 = row[col("gap_abs")].parse().unwrap();
    let ok = (vinf - (-1.0f64).exp()).abs() <= 1e-14
        && (v5 - 0.5).abs() <= 1e-14
        && (gap - 0.1321205588).abs() < 1e-10
        && elapsed < Duration::from_secs(1);
    report(1, "exact series values", ok, elapsed, &format!("v_inf={vinf:.16e} v_5={v5} gap={gap:.12}"));
    assert!(ok);
}

#[test]
fn criterion_2_sandwich() {
    let start = Instant::now();
    let mut checked = 0;
    let mut violations = Vec::new();
    for b2 in [1.0, 4.0, 9.0] {
        let spec = LinearExampleSpec::isotropic(1, b2).unwrap();
        for eps in [0.25, 0.5] {
            for n in a21_min_n(&spec, eps)..=40 {
                let s = a21_sandwich(&spec, n, eps).unwrap();
                let gap = origin_gap(&spec, n).unwrap().abs();
                checked += 1;
                if !s.contains(gap) {
                    violations.push((b2, eps, n));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = violations.is_empty() && checked > 0 && elapsed < Duration::from_secs(1);
    report(2, "a21 sandwich", ok, elapsed, &format!("{checked} cells, violations {violations:?}"));
    assert!(ok);
}

struct McRun {
    spec: LinearExampleSpec,
    series: ErrorSeries,
    elapsed: Duration,
}

/// The Monte-Carlo run shared by criteria 3 and 4.
fn mc_run() -> &'static McRun {
    static RUN: OnceLock<McRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let spec = LinearExampleSpec::isotropic(1, 4.0).unwrap();
        let ks: Vec<u32> = (1..=8).collect();
        let start = Instant::now();
        let series = estimate_error_series(&spec, &ks, 128, 10_000, DEFAULT_SEED).unwrap();
        McRun { spec, series, elapsed: start.elapsed() }
    })
}

#[test]
fn criterion_3_lower_bound_chain() {
    let start = Instant::now();
    let mut failures = Vec::new();
    for b2 in [1.0, 4.0] {
        let spec = LinearExampleSpec::isotropic(1, b2).unwrap();
        for n in a10_min_n(&spec)..=40 {
            let lower = a10_lower(&spec, n).unwrap();
            if lower > origin_gap(&spec, n).unwrap().abs() {
                failures.push(format!("analytic b2={b2} n={n}"));
            }
        }
    }
    let run = mc_run();
    let mut mc_checked = 0;
    for e in &run.series.entries {
        if let Ok(lower) = a10_lower(&run.spec, e.k) {
            mc_checked += 1;
            if e.estimate < lower - e.half_width {
                failures.push(format!("mc k={} e={} lower={lower} hw={}", e.k, e.estimate, e.half_width));
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && mc_checked > 0 && run.elapsed < Duration::from_secs(60);
    report(
        3,
        "lower-bound chain",
        ok,
        elapsed,
        &format!("MC run {:.2}s, {mc_checked} MC cells, failures {failures:?}", run.elapsed.as_secs_f64()),
    );
    assert!(ok);
}

#[test]
fn criterion_4_upper_bound_chain() {
    let start = Instant::now();
    let run = mc_run();
    let problem = linear_example_problem(&run.spec);
    let mut failures = Vec::new();
    for e in &run.series.entries {
        let upper = (0.5 * b20_bound(&problem, e.k).unwrap()).exp();
        if e.estimate - e.half_width > upper {
            failures.push(format!("k={} e={} upper={upper}", e.k, e.estimate));
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && run.series.entries.len() == 8 && run.elapsed < Duration::from_secs(60);
    report(4, "upper-bound chain", ok, elapsed, &format!("failures {failures:?}"));
    assert!(ok);
}

#[test]
fn criterion_5_phase_transition() {
    let tmp = TempDir::new().unwrap();
    let start = Instant::now();
    let run = lab(tmp.path(), &["phase-transition"]);
    let elapsed = start.elapsed();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v = json(&tmp.path().join("phase-transition.json"));
    let series = v["series"].as_array().unwrap();
    let mut detail = Vec::new();
    let mut ok = elapsed < Duration::from_secs(5);
    for name in ["z-dependent-gap", "ode"] {
        let s = series.iter().find(|s| s["name"] == name).unwrap();
        let correct = s["expected_mode"].as_str().unwrap();
        let wrong = if correct == "factorial" { "sqrt-factorial" } else { "factorial" };
        let key = |m: &str| m.replace('-', "_");
        let rc = s[key(correct)]["residual"].as_f64().unwrap();
        let rw = s[key(wrong)]["residual"].as_f64().unwrap();
        ok &= rc <= 0.1 * rw;
        detail.push(format!("{name}: correct {rc:.4} wrong {rw:.4} ratio {:.2}", rw / rc));
    }
    report(5, "phase transition", ok, elapsed, &detail.join("; "));
    assert!(ok, "residual(correct) <= 0.1 residual(wrong) not met: {detail:?}");
}

#[test]
fn criterion_6_ode_factorial_rate() {
    let start = Instant::now();
    let e = l01_error(1.0, 3).unwrap();
    let elapsed = start.elapsed();
    let target = std::f64::consts::E - 8.0 / 3.0;
    let ok = (e.exact - target).abs() <= 1e-10 && e.exact >= 1.0 / 24.0 && elapsed < Duration::from_secs(1);
    report(6, "ODE factorial rate", ok, elapsed, &format!("sup-error {:.12} vs {target:.12}", e.exact));
    assert!(ok);
}

#[test]
fn criterion_7_apriori() {
    let tmp = TempDir::new().unwrap();
    let start = Instant::now();
    let run = lab(tmp.path(), &["apriori"]);
    let elapsed = start.elapsed();
    assert!(run.status.success());
    let v = json(&tmp.path().join("apriori.json"));
    let entries = v["entries"].as_array().unwrap();
    let failed = entries.iter().filter(|e| e["pass"] != true).count();
    let ok = v["all_pass"] == true
        && failed == 0
        && v["paths"] == 10_000
        && !entries.is_empty()
        && elapsed < Duration::from_secs(120);
    report(7, "a priori inequalities", ok, elapsed, &format!("{} cells, {failed} failed", entries.len()));
    assert!(ok);
}

#[test]
fn criterion_8_nested_mc_consistency() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("mc.cfg");
    fs::write(&cfg, "experiment = picard-mc\ndriver = linear-z\nn_max = 3\nbudget = 200\nrepetitions = 20\n").unwrap();
    let out = tmp.path().join("out");
    let start = Instant::now();
    let run = lab(&out, &["picard-mc", "--config", cfg.to_str().unwrap()]);
    let elapsed = start.elapsed();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v = json(&out.join("picard-mc.json"));
    let passing = v["passing_repetitions"].as_u64().unwrap();
    let ok = passing >= 18 && v["repetitions"] == 20 && elapsed < Duration::from_secs(300);
    report(8, "nested-MC consistency", ok, elapsed, &format!("{passing}/20 repetitions within 4 sigma"));
    assert!(ok);
}

#[test]
fn criterion_9_property_spot_checks() {
    let start = Instant::now();
    let mut failures = Vec::new();

    // Hermite: recurrence against the explicit low orders, and H_k' = k H_{k-1}.
    for &x in &[-2.5, -0.3, 0.0, 0.7, 3.1] {
        let h = hermite_sequence(6, x);
        let explicit = [1.0, x, x * x - 1.0, x.powi(3) - 3.0 * x, x.powi(4) - 6.0 * x * x + 3.0];
        for (k, e) in explicit.iter().enumerate() {
            if (h[k] - e).abs() > 1e-12 * (1.0 + e.abs()) {
                failures.push(format!("hermite k={k} x={x}"));
            }
        }
        for k in 1..=6u32 {
            let d = 1e-5;
            let fd = (hermite_eval(k, x + d).unwrap() - hermite_eval(k, x - d).unwrap()) / (2.0 * d);
            if (fd - f64::from(k) * h[k as usize - 1]).abs() > 1e-5 * (1.0 + fd.abs()) {
                failures.push(format!("hermite derivative k={k} x={x}"));
            }
        }
    }

    // Backward PDE residual of the solution.
    let spec = LinearExampleSpec::new(vec![0.8, -0.6]).unwrap();
    for (t, x) in [(0.3, [0.1, -0.4]), (0.6, [0.9, 0.2])] {
        let r = pde_residual(&spec, t, &x, 1e-3).unwrap();
        if r.abs() >= 1e-5 {
            failures.push(format!("pde residual {r} at t={t}"));
        }
    }

    // Gradient against central differences.
    let ev = IterateEvaluator::finite(&spec, 4);
    let x = [0.3, -0.2];
    let g = eval_grad_v(&ev, 0.2, &x).unwrap();
    for j in 0..2 {
        let h = 1e-5;
        let mut up = x;
        let mut down = x;
        up[j] += h;
        down[j] -= h;
        let fd = (eval_v(&ev, 0.2, &up).unwrap() - eval_v(&ev, 0.2, &down).unwrap()) / (2.0 * h);
        if (fd - g[j]).abs() > 1e-6 {
            failures.push(format!("gradient j={j}: {fd} vs {}", g[j]));
        }
    }

    // Fixed-point residual of the Monte-Carlo iterate at 4 sigma.
    let spec1 = LinearExampleSpec::isotropic(1, 1.0).unwrap();
    let problem = MarkovianBsde::linear_example(&spec1);
    let budget = Budget::uniform(2, 400);
    let est = nested_picard(&problem, 2, 0.0, &[0.0], &budget, 11).unwrap();
    let oracle = eval_v(&IterateEvaluator::finite(&spec1, 2), 0.0, &[0.0]).unwrap();
    if (est.y[0] - oracle).abs() > 4.0 * est.y_std_error[0] {
        failures.push(format!("nested y {} vs {oracle} (se {})", est.y[0], est.y_std_error[0]));
    }

    // Bit-exact determinism across thread counts.
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_error_series(&spec1, &[1, 2, 3], 32, 2_000, 5).unwrap())
    };
    let one = run(1);
    let many = run(8);
    for (a, b) in one.entries.iter().zip(&many.entries) {
        if a.estimate.to_bits() != b.estimate.to_bits() || a.half_width.to_bits() != b.half_width.to_bits() {
            failures.push(format!("thread determinism k={}", a.k));
        }
    }

    let elapsed = start.elapsed();
    let ok = failures.is_empty();
    report(9, "property spot checks", ok, elapsed, &format!("failures {failures:?}"));
    assert!(ok);
}
