use std::path::PathBuf;

use picard_core::analytic::{eval_grad_v, eval_v, origin_gap, v_origin_series, IterateEvaluator, LinearExampleSpec};
use picard_core::bounds::{
    a10_lower, a21_sandwich, b20_bound, compare_modes_from, exp_partial_sum, l01_error, linear_example_problem,
    log_a10_formula, ode_error_series, origin_gap_series, r01_bound, r02_bound, BsdeProblem, ModeComparison, RateFit,
};
use picard_core::stochastic::{
    apriori_sweep, estimate_error_series, nested_cost, nested_picard, AprioriReport, AprioriSetup, Budget,
    LinearYDriver, MarkovianBsde, ZeroDriver,
};
use serde::Serialize;

use crate::config::{DriverKind, Experiment, ExperimentConfig};
use crate::output::{Cell, OutputDir, Table};
use crate::CliError;

#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Runs a validated configuration.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match cfg.experiment {
        Experiment::Series => series(cfg),
        Experiment::PhaseTransition => phase_transition(cfg),
        Experiment::DimensionSweep => dimension_sweep(cfg),
        Experiment::Apriori => apriori(cfg),
        Experiment::PicardMc => picard_mc(cfg),
    }
}

fn example(cfg: &ExperimentConfig) -> Result<LinearExampleSpec, CliError> {
    Ok(LinearExampleSpec::new(cfg.drift())?)
}

fn solution_at_origin(spec: &LinearExampleSpec) -> Result<f64, CliError> {
    Ok(eval_v(&IterateEvaluator::solution(spec), 0.0, &vec![0.0; spec.dim()])?)
}

pub fn series(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = example(cfg)?;
    let v_inf = solution_at_origin(&spec)?;
    let mut table = Table::new(["n", "v_n", "v_inf", "gap_abs", "a21_lower", "a21_upper", "a10_lower"]);
    for n in cfg.k_min..=cfg.k_max {
        let sandwich = a21_sandwich(&spec, n, cfg.eps).ok();
        table.push(vec![
            n.into(),
            v_origin_series(&spec, n)?.into(),
            v_inf.into(),
            origin_gap(&spec, n)?.abs().into(),
            Cell::opt(sandwich.map(|s| s.lower)),
            Cell::opt(sandwich.map(|s| s.upper)),
            Cell::opt(a10_lower(&spec, n).ok()),
        ]);
    }
    let out = OutputDir::create(&cfg.out)?;
    let file = out.write_csv("series.csv", &table, cfg)?;
    Ok(Outcome {
        files: vec![file],
        summary: format!("series: {} rows, v_inf(0,0) = {v_inf:.16e}", table.rows.len()),
    })
}

#[derive(Debug, Serialize)]
struct FitSummary {
    log_c: f64,
    residual: f64,
    points: usize,
}

impl From<&RateFit> for FitSummary {
    fn from(f: &RateFit) -> Self {
        Self { log_c: f.log_c, residual: f.residual, points: f.points }
    }
}

#[derive(Debug, Serialize)]
struct SeriesFit {
    name: &'static str,
    description: &'static str,
    expected_mode: &'static str,
    sqrt_factorial: Option<FitSummary>,
    factorial: Option<FitSummary>,
    /// Mode with the strictly smaller residual; `None` on a tie or failed fit.
    winner: Option<&'static str>,
    tie: bool,
    residual_ratio: Option<f64>,
    error: Option<String>,
}

fn summarize_fit(
    name: &'static str,
    description: &'static str,
    expected_mode: &'static str,
    cmp: Result<ModeComparison, picard_core::Error>,
) -> SeriesFit {
    match cmp {
        Ok(c) => SeriesFit {
            name,
            description,
            expected_mode,
            sqrt_factorial: Some((&c.sqrt_factorial).into()),
            factorial: Some((&c.factorial).into()),
            winner: c.winner.map(|m| m.name()),
            tie: c.winner.is_none(),
            residual_ratio: Some(c.ratio),
            error: None,
        },
        Err(e) => SeriesFit {
            name,
            description,
            expected_mode,
            sqrt_factorial: None,
            factorial: None,
            winner: None,
            tie: false,
            residual_ratio: None,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Serialize)]
struct PhaseSummary {
    experiment: &'static str,
    config_sha256: String,
    seed: u64,
    fit_k_range: [u32; 2],
    series: Vec<SeriesFit>,
    /// Both canonical series are won by their expected mode.
    expected_modes_win: bool,
    /// Both canonical series are won with residual ratio at least 10.
    ratio_at_least_10: bool,
}

pub fn phase_transition(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = example(cfg)?;
    let problem = linear_example_problem(&spec);
    let ks: Vec<u32> = (cfg.k_min..=cfg.k_max).collect();
    let cost = cfg.paths as f64 * (f64::from(cfg.steps) + 1.0) * ks.len() as f64;
    if cost > cfg.budget_ceiling {
        return Err(picard_core::Error::Budget { estimated: cost, ceiling: cfg.budget_ceiling }.into());
    }

    let gaps = origin_gap_series(&spec, ks.iter().copied())?;
    let ode = ode_error_series(cfg.horizon, ks.iter().copied())?;
    let mc = estimate_error_series(&spec, &ks, cfg.steps as usize, cfg.paths, cfg.seed)?;
    let mc_pairs: Vec<(u32, f64)> = mc.entries.iter().map(|e| (e.k, e.estimate)).collect();

    let fit_min = *cfg.fit_range().start();
    let gap_cmp = compare_modes_from(&gaps, fit_min);
    let ode_cmp = compare_modes_from(&ode, fit_min);
    let mc_cmp = compare_modes_from(&mc_pairs, fit_min);

    let fit_cells = |c: &Result<ModeComparison, picard_core::Error>| -> Vec<Cell> {
        match c {
            Ok(c) => vec![
                c.sqrt_factorial.log_c.into(),
                c.sqrt_factorial.residual.into(),
                c.factorial.log_c.into(),
                c.factorial.residual.into(),
            ],
            Err(_) => vec![Cell::NotApplicable; 4],
        }
    };
    let mut table = Table::new([
        "k",
        "e_hat",
        "half_width",
        "gap_abs",
        "ode_exact",
        "ode_lower",
        "a10_lower",
        "a21_lower",
        "a21_upper",
        "b20_envelope",
        "r01_envelope",
        "r02_envelope",
        "gap_log_c_sqrt_factorial",
        "gap_residual_sqrt_factorial",
        "gap_log_c_factorial",
        "gap_residual_factorial",
        "ode_log_c_sqrt_factorial",
        "ode_residual_sqrt_factorial",
        "ode_log_c_factorial",
        "ode_residual_factorial",
    ]);
    for (i, &k) in ks.iter().enumerate() {
        let e = &mc.entries[i];
        let ode_err = l01_error(cfg.horizon, k)?;
        let sandwich = a21_sandwich(&spec, k, cfg.eps).ok();
        let mut row = vec![
            k.into(),
            e.estimate.into(),
            e.half_width.into(),
            gaps[i].1.into(),
            ode_err.exact.into(),
            ode_err.lower.into(),
            Cell::opt(a10_lower(&spec, k).ok()),
            Cell::opt(sandwich.map(|s| s.lower)),
            Cell::opt(sandwich.map(|s| s.upper)),
            (0.5 * b20_bound(&problem, k)?).exp().into(),
            (0.5 * r01_bound(&problem, k)?).exp().into(),
            Cell::opt(r02_bound(&problem, k).ok().map(|v| (0.5 * v).exp())),
        ];
        row.extend(fit_cells(&gap_cmp));
        row.extend(fit_cells(&ode_cmp));
        table.push(row);
    }

    let series = vec![
        summarize_fit("z-dependent-gap", "|v^inf(0,0) - v^k(0,0)| of the linear example", "sqrt-factorial", gap_cmp),
        summarize_fit("ode", "sup-error of the ODE Picard iterates", "factorial", ode_cmp),
        summarize_fit("z-dependent-mc", "Monte-Carlo e_k of the linear example", "sqrt-factorial", mc_cmp),
    ];
    let canonical = &series[..2];
    let summary = PhaseSummary {
        experiment: "phase-transition",
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        fit_k_range: [fit_min, cfg.k_max],
        expected_modes_win: canonical.iter().all(|s| s.winner == Some(s.expected_mode)),
        ratio_at_least_10: canonical
            .iter()
            .all(|s| s.winner == Some(s.expected_mode) && s.residual_ratio.is_some_and(|r| r >= 10.0)),
        series,
    };
    let out = OutputDir::create(&cfg.out)?;
    let csv = out.write_csv("phase-transition.csv", &table, cfg)?;
    let json = out.write_json("phase-transition.json", &summary)?;
    let lines: Vec<String> = summary
        .series
        .iter()
        .map(|s| {
            format!(
                "{}: winner {} (expected {}), residual ratio {}",
                s.name,
                s.winner.unwrap_or("none"),
                s.expected_mode,
                s.residual_ratio.map_or("n/a".into(), |r| format!("{r:.3}"))
            )
        })
        .collect();
    Ok(Outcome { files: vec![csv, json], summary: lines.join("\n") })
}

pub fn dimension_sweep(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut table = Table::new([
        "m",
        "k",
        "l_z",
        "b_norm_sq",
        "log_r01_rate",
        "log_r01_envelope",
        "a10_lower",
        "log_a10_lower",
        "a10_admissible",
    ]);
    for &m in &cfg.dims {
        let lz = (m as f64).powf(cfg.growth_exponent);
        let b_norm_sq = lz * lz;
        let spec = LinearExampleSpec::isotropic(m, b_norm_sq)?;
        let problem = linear_example_problem(&spec);
        let unit = BsdeProblem { xi_second_moment: 1.0, driver_norm_integral: 0.0, ..problem.clone() };
        for &k in &cfg.sweep_ks {
            let log_lower = log_a10_formula(b_norm_sq, k);
            table.push(vec![
                Cell::Int(m as i64),
                k.into(),
                lz.into(),
                b_norm_sq.into(),
                (0.5 * r01_bound(&unit, k)?).into(),
                (0.5 * r01_bound(&problem, k)?).into(),
                log_lower.exp().into(),
                log_lower.into(),
                Cell::Bool(a10_lower(&spec, k).is_ok()),
            ]);
        }
    }
    let out = OutputDir::create(&cfg.out)?;
    let file = out.write_csv("dimension-sweep.csv", &table, cfg)?;
    Ok(Outcome { files: vec![file], summary: format!("dimension-sweep: {} rows", table.rows.len()) })
}

#[derive(Debug, Serialize)]
struct AprioriSummary {
    experiment: &'static str,
    config_sha256: String,
    seed: u64,
    paths: u64,
    steps: u32,
    cells: usize,
    all_pass: bool,
    entries: Vec<AprioriReport>,
}

pub fn apriori(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = example(cfg)?;
    let mut entries = Vec::new();
    for &k in &cfg.apriori_ks {
        let mut lambdas: Vec<f64> = Vec::new();
        for l in &cfg.lambdas {
            let v = l.resolve(k);
            if !lambdas.contains(&v) {
                lambdas.push(v);
            }
        }
        let setup = AprioriSetup { spec: spec.clone(), k, paths: cfg.paths, steps: cfg.steps as usize, seed: cfg.seed };
        entries.extend(apriori_sweep(&setup, &lambdas, &cfg.alphas, &cfg.variants, cfg.s)?);
    }
    let summary = AprioriSummary {
        experiment: "apriori",
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        paths: cfg.paths,
        steps: cfg.steps,
        cells: entries.len(),
        all_pass: entries.iter().all(|e| e.pass),
        entries,
    };
    let out = OutputDir::create(&cfg.out)?;
    let file = out.write_json("apriori.json", &summary)?;
    let failed = summary.entries.iter().filter(|e| !e.pass).count();
    Ok(Outcome { files: vec![file], summary: format!("apriori: {} cells, {failed} failed", summary.cells) })
}

#[derive(Debug, Serialize)]
struct PicardSummary {
    experiment: &'static str,
    config_sha256: String,
    seed: u64,
    driver: &'static str,
    n_max: u32,
    budget: u64,
    repetitions: u32,
    /// Repetitions whose every level and component is within 4 standard errors.
    passing_repetitions: u32,
    max_deviation_sigma: Vec<f64>,
}

fn deviation(est: f64, se: f64, exact: f64) -> f64 {
    let diff = (est - exact).abs();
    if diff <= 1e-12 * exact.abs().max(1.0) {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        f64::INFINITY
    }
}

pub fn picard_mc(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = example(cfg)?;
    let m = spec.dim();
    let budget = Budget::uniform(cfg.n_max, cfg.budget).with_ceiling(cfg.budget_ceiling);
    let per_run: f64 = (1..=cfg.n_max).map(|n| nested_cost(&budget, n)).sum();
    let total = per_run * f64::from(cfg.repetitions);
    if total > cfg.budget_ceiling {
        return Err(picard_core::Error::Budget { estimated: total, ceiling: cfg.budget_ceiling }.into());
    }

    let (problem, horizon) = match cfg.driver {
        DriverKind::LinearZ => (MarkovianBsde::linear_example(&spec), 1.0),
        DriverKind::LinearY => (
            MarkovianBsde::new(cfg.horizon, m, |_x, out| out[0] = 1.0, LinearYDriver { rate: cfg.rate, y_dim: 1 })?,
            cfg.horizon,
        ),
        DriverKind::Zero => {
            let sp = spec.clone();
            (MarkovianBsde::new(1.0, m, move |x, out| out[0] = sp.terminal(x), ZeroDriver { y_dim: 1 })?, 1.0)
        }
    };
    let origin = vec![0.0; m];
    let oracle = |n: u32| -> Result<(f64, Vec<f64>), CliError> {
        if n == 0 {
            return Ok((0.0, vec![0.0; m]));
        }
        Ok(match cfg.driver {
            DriverKind::LinearZ => {
                let ev = IterateEvaluator::finite(&spec, n);
                (eval_v(&ev, 0.0, &origin)?, eval_grad_v(&ev, 0.0, &origin)?)
            }
            DriverKind::LinearY => (exp_partial_sum(cfg.rate * horizon, n - 1), vec![0.0; m]),
            // E[2^{d/2} e^{-‖W_1‖²/2}] = 1 and the gradient vanishes by symmetry.
            DriverKind::Zero => (1.0, vec![0.0; m]),
        })
    };

    let mut columns = vec!["repetition".to_string(), "seed".into(), "n".into()];
    columns.extend(["y", "y_std_error", "y_oracle", "y_deviation_sigma"].map(String::from));
    for j in 0..m {
        columns.extend([format!("z{j}"), format!("z{j}_std_error"), format!("z{j}_oracle"), format!("z{j}_deviation_sigma")]);
    }
    columns.extend(["z_cutoff_bias", "cost"].map(String::from));
    let mut table = Table::new(columns);

    let mut passing = 0;
    let mut max_dev = Vec::new();
    for rep in 0..cfg.repetitions {
        let seed = cfg.seed.wrapping_add(u64::from(rep));
        let mut worst: f64 = 0.0;
        for n in 0..=cfg.n_max {
            let est = nested_picard(&problem, n, 0.0, &origin, &budget, seed)?;
            let (oy, oz) = oracle(n)?;
            let dy = deviation(est.y[0], est.y_std_error[0], oy);
            worst = worst.max(dy);
            let mut row = vec![Cell::Int(rep.into()), Cell::Int(seed as i64), n.into()];
            row.extend([est.y[0].into(), est.y_std_error[0].into(), oy.into(), dy.into()]);
            for j in 0..m {
                let dz = deviation(est.z[j], est.z_std_error[j], oz[j]);
                worst = worst.max(dz);
                row.extend([est.z[j].into(), est.z_std_error[j].into(), oz[j].into(), dz.into()]);
            }
            row.extend([est.z_cutoff_bias.into(), est.cost.into()]);
            table.push(row);
        }
        if worst <= 4.0 {
            passing += 1;
        }
        max_dev.push(worst);
    }
    let summary = PicardSummary {
        experiment: "picard-mc",
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        driver: cfg.driver.name(),
        n_max: cfg.n_max,
        budget: cfg.budget,
        repetitions: cfg.repetitions,
        passing_repetitions: passing,
        max_deviation_sigma: max_dev,
    };
    let out = OutputDir::create(&cfg.out)?;
    let csv = out.write_csv("picard-mc.csv", &table, cfg)?;
    let json = out.write_json("picard-mc.json", &summary)?;
    Ok(Outcome {
        files: vec![csv, json],
        summary: format!("picard-mc: {passing}/{} repetitions within 4 sigma", cfg.repetitions),
    })
}
