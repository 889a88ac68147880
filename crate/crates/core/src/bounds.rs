//! Convergence envelopes for Picard iterations, evaluated in log-space.
//!
//! Upper bounds are for the squared error `e_k²` of a generic Lipschitz BSDE.
//! Lower bounds and exact gaps concern the linear example and the ODE
//! `Y_s = 1 + ∫_s^T Y_r dr`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analytic::{origin_gap, LinearExampleSpec};
use crate::numeric::log_sum_exp;
use crate::special::log_factorial;
use crate::{Error, Result};

const LN_35: f64 = 3.555_348_061_489_413_7;

/// A Lipschitz BSDE reduced to the quantities the upper bounds depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsdeProblem {
    pub horizon: f64,
    pub y_dim: usize,
    pub w_dim: usize,
    pub lipschitz_y: f64,
    pub lipschitz_z: f64,
    /// `E‖ξ‖²`.
    pub xi_second_moment: f64,
    /// `∫_0^T E‖f(t, Y^∞_t, Z^∞_t)‖² dt`.
    pub driver_norm_integral: f64,
}

impl BsdeProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("horizon", format!("must be finite and > 0, got {}", self.horizon)));
        }
        if self.y_dim == 0 || self.w_dim == 0 {
            return Err(Error::invalid("y_dim/w_dim", "dimensions must be positive"));
        }
        let fields = [
            ("lipschitz_y", self.lipschitz_y),
            ("lipschitz_z", self.lipschitz_z),
            ("xi_second_moment", self.xi_second_moment),
            ("driver_norm_integral", self.driver_norm_integral),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `log(E‖ξ‖² + (T/k) ∫ E‖f‖² dt)`.
    fn log_moment_factor(&self, k: u32) -> f64 {
        (self.xi_second_moment + self.horizon / f64::from(k) * self.driver_norm_integral).ln()
    }
}

/// The linear example as a BSDE: `f(t,y,z) = ⟨b,z⟩`, so `L_y = 0` and `L_z = ‖b‖`.
pub fn linear_example_problem(spec: &LinearExampleSpec) -> BsdeProblem {
    BsdeProblem {
        horizon: 1.0,
        y_dim: 1,
        w_dim: spec.dim(),
        lipschitz_y: 0.0,
        lipschitz_z: spec.b_norm_sq().sqrt(),
        xi_second_moment: spec.terminal_second_moment(),
        driver_norm_integral: spec.driver_norm_integral(),
    }
}

fn check_k(k: u32) -> Result<()> {
    if k == 0 {
        Err(Error::invalid("k", "iteration index must be at least 1"))
    } else {
        Ok(())
    }
}

/// `p · log x` with `0^0 = 1`.
fn log_pow(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * x.ln()
    }
}

/// Log of the explicit squared-error bound
/// `35 (Te/k)^k S(k)² (E‖ξ‖² + (T/k)∫E‖f‖²)` with
/// `S(k) = Σ_l k! L_y^l L_z^{k-l} T^{l/2} / (l!(k-l)! √(l!))`.
pub fn b20_bound(problem: &BsdeProblem, k: u32) -> Result<f64> {
    problem.validate()?;
    check_k(k)?;
    let t = problem.horizon;
    let kf = f64::from(k);
    let log_kfact = log_factorial(u64::from(k));
    let terms: Vec<f64> = (0..=k)
        .map(|l| {
            let lf = f64::from(l);
            let log_lfact = log_factorial(u64::from(l));
            log_kfact - log_lfact - log_factorial(u64::from(k - l))
                + log_pow(problem.lipschitz_y, lf)
                + log_pow(problem.lipschitz_z, kf - lf)
                + 0.5 * lf * t.ln()
                - 0.5 * log_lfact
        })
        .collect();
    let log_s = log_sum_exp(&terms);
    Ok(LN_35 + kf * (t.ln() + 1.0 - kf.ln()) + 2.0 * log_s + problem.log_moment_factor(k))
}

/// Log of `35 (4 max{T²,1} e max{L_y², L_z²})^k / k! · (moment factor)`.
pub fn r01_bound(problem: &BsdeProblem, k: u32) -> Result<f64> {
    problem.validate()?;
    check_k(k)?;
    let t = problem.horizon;
    let l = problem.lipschitz_y.max(problem.lipschitz_z);
    let base = 4.0 * (t * t).max(1.0) * std::f64::consts::E * l * l;
    Ok(LN_35 + log_pow(base, f64::from(k)) - log_factorial(u64::from(k)) + problem.log_moment_factor(k))
}

/// Log of `35 (T² e L_y²)^k / (k!)² · (moment factor)`; requires `L_z = 0`.
pub fn r02_bound(problem: &BsdeProblem, k: u32) -> Result<f64> {
    problem.validate()?;
    check_k(k)?;
    if problem.lipschitz_z != 0.0 {
        return Err(Error::Precondition(format!(
            "the factorial envelope needs a z-independent driver, got L_z = {}",
            problem.lipschitz_z
        )));
    }
    let t = problem.horizon;
    let base = t * t * std::f64::consts::E * problem.lipschitz_y * problem.lipschitz_y;
    Ok(LN_35 + log_pow(base, f64::from(k)) - 2.0 * log_factorial(u64::from(k)) + problem.log_moment_factor(k))
}

/// Two-sided envelope of `|v^∞(0,0) - v^n(0,0)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lower: f64,
    pub upper: f64,
}

impl Sandwich {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// `(‖b‖²/4)^j (1-ε)/j! ≤ |gap_n| ≤ (‖b‖²/4)^j / (j!(1-ε))`, `j = ⌊(n+1)/2⌋`,
/// valid for `n ≥ ‖b‖²/(2ε) - 1`.
pub fn a21_sandwich(spec: &LinearExampleSpec, n: u32, eps: f64) -> Result<Sandwich> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps", format!("must lie in (0, 1), got {eps}")));
    }
    check_k(n)?;
    let threshold = spec.b_norm_sq() / (2.0 * eps) - 1.0;
    if f64::from(n) < threshold {
        return Err(Error::Precondition(format!(
            "sandwich needs n >= ‖b‖²/(2ε) - 1 = {threshold}; smallest admissible n is {}",
            a21_min_n(spec, eps)
        )));
    }
    let j = n.div_ceil(2);
    let core = log_pow(spec.b_norm_sq() / 4.0, f64::from(j)) - log_factorial(u64::from(j));
    let core = core.exp();
    Ok(Sandwich {
        lower: core * (1.0 - eps),
        upper: core / (1.0 - eps),
    })
}

/// Smallest `n ≥ 1` admitted by [`a21_sandwich`].
pub fn a21_min_n(spec: &LinearExampleSpec, eps: f64) -> u32 {
    (spec.b_norm_sq() / (2.0 * eps) - 1.0).ceil().max(1.0) as u32
}

/// Smallest `n ≥ 1` admitted by [`a10_lower`].
pub fn a10_min_n(spec: &LinearExampleSpec) -> u32 {
    (spec.b_norm_sq() - 1.0).ceil().max(1.0) as u32
}

/// `½ (‖b‖²/4)^{⌊(n+1)/2⌋} / √(n!)`, a lower bound on `|Y^∞_0 - Y^n_0|` for
/// `n ≥ ‖b‖² - 1`.
pub fn a10_lower(spec: &LinearExampleSpec, n: u32) -> Result<f64> {
    check_k(n)?;
    if f64::from(n) < spec.b_norm_sq() - 1.0 {
        return Err(Error::Precondition(format!(
            "lower bound needs n >= ‖b‖² - 1 = {}; smallest admissible n is {}",
            spec.b_norm_sq() - 1.0,
            a10_min_n(spec)
        )));
    }
    Ok(log_a10_formula(spec.b_norm_sq(), n).exp())
}

/// Log of the lower-bound formula without the admissibility check.
pub fn log_a10_formula(b_norm_sq: f64, n: u32) -> f64 {
    let j = n.div_ceil(2);
    -std::f64::consts::LN_2 + log_pow(b_norm_sq / 4.0, f64::from(j)) - 0.5 * log_factorial(u64::from(n))
}

/// Picard iterate of `Y_s = 1 + ∫_s^T Y_r dr` started at `Y^0 = 1`:
/// `Y^n_s = Σ_{k=0}^n (T-s)^k/k!`, and `e^{T-s}` for `n = ∞`.
pub fn l01_iterate(horizon: f64, n: crate::analytic::Iteration, s: f64) -> Result<f64> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("horizon", format!("must be finite and > 0, got {horizon}")));
    }
    if !(0.0..=horizon).contains(&s) {
        return Err(Error::invalid("s", format!("must lie in [0, {horizon}], got {s}")));
    }
    let tau = horizon - s;
    Ok(match n {
        crate::analytic::Iteration::Infinite => tau.exp(),
        crate::analytic::Iteration::Finite(n) => exp_partial_sum(tau, n),
    })
}

/// `Σ_{k=0}^n x^k/k!`.
pub fn exp_partial_sum(x: f64, n: u32) -> f64 {
    let mut term = 1.0;
    let mut acc = crate::numeric::CompensatedSum::new();
    acc.add(term);
    for k in 1..=n {
        term *= x / f64::from(k);
        acc.add(term);
    }
    acc.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeError {
    /// `sup_s |Y^∞_s - Y^n_s| = Σ_{k>n} T^k/k!`.
    pub exact: f64,
    /// `T^{n+1}/(n+1)!`.
    pub lower: f64,
}

/// Exact sup-error of the ODE Picard iterate and its leading-term lower bound.
pub fn l01_error(horizon: f64, n: u32) -> Result<OdeError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("horizon", format!("must be finite and > 0, got {horizon}")));
    }
    let first = u64::from(n) + 1;
    let log_term = |k: u64| k as f64 * horizon.ln() - log_factorial(k);
    // Terms decrease once k > T; stop when they no longer register.
    let mut logs = Vec::new();
    let mut k = first;
    loop {
        let lt = log_term(k);
        logs.push(lt);
        let head = log_sum_exp(&logs);
        if (k as f64) > horizon && lt < head - 40.0 {
            break;
        }
        k += 1;
    }
    Ok(OdeError {
        exact: log_sum_exp(&logs).exp(),
        lower: log_term(first).exp(),
    })
}

/// Which normalization the rate fit removes before the linear regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMode {
    /// `log e_k + ½ log k!`, linear in `k` when `e_k ≍ c^k/√k!`.
    SqrtFactorial,
    /// `log e_k + log k!`, linear in `k` when `e_k ≍ c^k/k!`.
    Factorial,
}

impl RateMode {
    pub const ALL: [RateMode; 2] = [RateMode::SqrtFactorial, RateMode::Factorial];

    pub fn name(&self) -> &'static str {
        match self {
            RateMode::SqrtFactorial => "sqrt-factorial",
            RateMode::Factorial => "factorial",
        }
    }

    fn factorial_power(&self) -> f64 {
        match self {
            RateMode::SqrtFactorial => 0.5,
            RateMode::Factorial => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub mode: RateMode,
    pub log_c: f64,
    pub intercept: f64,
    /// RMS of the regression residuals.
    pub residual: f64,
    pub points: usize,
}

/// Default smallest `k` kept by [`fit_rate`].
pub const FIT_MIN_K: u32 = 4;

/// Least-squares fit of `log e_k + p log k! ≈ k log c + const`.
///
/// Points with `k < FIT_MIN_K`, zero or non-finite errors are dropped.
pub fn fit_rate(errors: &[(u32, f64)], mode: RateMode) -> Result<RateFit> {
    fit_rate_from(errors, mode, FIT_MIN_K)
}

pub fn fit_rate_from(errors: &[(u32, f64)], mode: RateMode, min_k: u32) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .filter(|&&(k, e)| k >= min_k && e.is_finite() && e > 0.0)
        .map(|&(k, e)| (f64::from(k), e.ln() + mode.factorial_power() * log_factorial(u64::from(k))))
        .collect();
    if errors.iter().all(|&(_, e)| e == 0.0) {
        return Err(Error::DegenerateFit("every error is zero".into()));
    }
    if pts.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 positive finite errors with k >= {min_k}, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(RateFit {
        mode,
        log_c: slope,
        intercept,
        residual: (rss / n).sqrt(),
        points: pts.len(),
    })
}

/// Outcome of fitting a series in both modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub sqrt_factorial: RateFit,
    pub factorial: RateFit,
    /// Mode with the strictly smaller residual; `None` on a tie within 1e-12.
    pub winner: Option<RateMode>,
    /// `residual(loser) / residual(winner)`.
    pub ratio: f64,
}

pub fn compare_modes(errors: &[(u32, f64)]) -> Result<ModeComparison> {
    compare_modes_from(errors, FIT_MIN_K)
}

pub fn compare_modes_from(errors: &[(u32, f64)], min_k: u32) -> Result<ModeComparison> {
    let s = fit_rate_from(errors, RateMode::SqrtFactorial, min_k)?;
    let f = fit_rate_from(errors, RateMode::Factorial, min_k)?;
    let winner = if (s.residual - f.residual).abs() <= 1e-12 {
        None
    } else if s.residual < f.residual {
        Some(RateMode::SqrtFactorial)
    } else {
        Some(RateMode::Factorial)
    };
    let (lo, hi) = if s.residual < f.residual {
        (s.residual, f.residual)
    } else {
        (f.residual, s.residual)
    };
    Ok(ModeComparison {
        sqrt_factorial: s,
        factorial: f,
        winner,
        ratio: hi / lo,
    })
}

/// Envelope families that can be tabulated as a [`BoundCurve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    B20Exact,
    R01,
    R02,
    Thm1Lower,
    A21Lower,
    A21Upper,
    A10Lower,
    L01Lower,
    L01Exact,
}

/// An envelope evaluated over a range of `k`, stored as natural logs.
///
/// Squared-error bounds (`B20Exact`, `R01`, `R02`) are stored as
/// `½ log(bound)` so that every curve is on the scale of `e_k` itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub values: BTreeMap<u32, f64>,
}

/// Everything needed to evaluate any [`BoundKind`].
#[derive(Debug, Clone)]
pub struct CurveContext<'a> {
    pub problem: &'a BsdeProblem,
    pub example: &'a LinearExampleSpec,
    pub eps: f64,
    pub ode_horizon: f64,
}

impl BoundCurve {
    /// Evaluates `kind` for every `k` in `ks`, skipping inadmissible `k`.
    pub fn evaluate(kind: BoundKind, ctx: &CurveContext<'_>, ks: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for k in ks {
            let v = match kind {
                BoundKind::B20Exact => Some(0.5 * b20_bound(ctx.problem, k)?),
                BoundKind::R01 => Some(0.5 * r01_bound(ctx.problem, k)?),
                BoundKind::R02 => Some(0.5 * r02_bound(ctx.problem, k)?),
                BoundKind::Thm1Lower | BoundKind::A10Lower => a10_lower(ctx.example, k).ok().map(f64::ln),
                BoundKind::A21Lower => a21_sandwich(ctx.example, k, ctx.eps).ok().map(|s| s.lower.ln()),
                BoundKind::A21Upper => a21_sandwich(ctx.example, k, ctx.eps).ok().map(|s| s.upper.ln()),
                BoundKind::L01Lower => Some(l01_error(ctx.ode_horizon, k)?.lower.ln()),
                BoundKind::L01Exact => Some(l01_error(ctx.ode_horizon, k)?.exact.ln()),
            };
            if let Some(v) = v {
                values.insert(k, v);
            }
        }
        Ok(Self { kind, values })
    }
}

/// `|v^∞(0,0) - v^n(0,0)|` for `n` in `ks`, as `(n, gap)` pairs.
pub fn origin_gap_series(spec: &LinearExampleSpec, ks: impl IntoIterator<Item = u32>) -> Result<Vec<(u32, f64)>> {
    ks.into_iter().map(|n| Ok((n, origin_gap(spec, n)?.abs()))).collect()
}

/// Exact ODE sup-errors for `n` in `ks`.
pub fn ode_error_series(horizon: f64, ks: impl IntoIterator<Item = u32>) -> Result<Vec<(u32, f64)>> {
    ks.into_iter().map(|n| Ok((n, l01_error(horizon, n)?.exact))).collect()
}
