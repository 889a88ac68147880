//! Closed-form Picard iterates of the linear example.
//!
//! The example PDE on `[0,1] × R^d` is
//! `∂_t v + ½Δv + ⟨b, ∇v⟩ = 0`, `v(1,x) = 2^{d/2} e^{-‖x‖²/2}`,
//! and its Picard iterates are
//!
//! ```text
//! v^n(t,x) = Σ_{k<n} (1-t)^k Σ_{|α|=k} (b^α/α!) 2^{d/2} Π_l ∂^{α_l} g_t(x_l),
//! g_t(y)   = E[exp(-(y+Z)²/2)],  Z ~ N(0, 1-t),
//!          = (2-t)^{-1/2} exp(-y²/(2(2-t))).
//! ```
//!
//! Every term factorizes over coordinates, so the sum over `|α| ≤ n-1` is the
//! truncated product of one power series per coordinate. That costs
//! `O(d n²)` per point rather than one term per multi-index.

use serde::{Deserialize, Serialize};

use crate::numeric::{sum_by_magnitude, CompensatedSum};
use crate::special::hermite_sequence;
use crate::{Error, Result};

/// Parameters of the linear example: dimension `d = b.len()` and drift `b`.
/// The horizon is fixed to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearExampleSpec {
    b: Vec<f64>,
    b_norm_sq: f64,
}

impl LinearExampleSpec {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::invalid("b", "dimension must be at least 1"));
        }
        if let Some(v) = b.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid("b", format!("entries must be finite, got {v}")));
        }
        let b_norm_sq = b.iter().map(|v| v * v).sum();
        Ok(Self { b, b_norm_sq })
    }

    /// `b = √(‖b‖²/d) · (1, …, 1)`.
    pub fn isotropic(d: usize, b_norm_sq: f64) -> Result<Self> {
        if !(b_norm_sq.is_finite() && b_norm_sq >= 0.0) {
            return Err(Error::invalid("b_norm_sq", format!("must be finite and >= 0, got {b_norm_sq}")));
        }
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be at least 1"));
        }
        let c = (b_norm_sq / d as f64).sqrt();
        Self::new(vec![c; d])
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn b_norm_sq(&self) -> f64 {
        self.b_norm_sq
    }

    /// `2^{d/2} e^{-‖x‖²/2}`.
    pub fn terminal(&self, x: &[f64]) -> f64 {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        (self.dim() as f64 * 0.5 * std::f64::consts::LN_2 - sq / 2.0).exp()
    }

    /// `E[ξ²] = E[2^d e^{-‖W_1‖²}] = (2/√3)^d`.
    pub fn terminal_second_moment(&self) -> f64 {
        (2.0 / 3f64.sqrt()).powi(self.dim() as i32)
    }

    /// `∫_0^1 E[⟨b, ∇v^∞(t, W_t)⟩²] dt`, i.e. the driver norm along the solution.
    ///
    /// With `y = W_t + b(1-t) ~ N(b(1-t), tI)` and `a = 1/(2-t)` one has
    /// `⟨b,∇v^∞⟩ = -a⟨b,y⟩ v^∞`, and the Gaussian expectation is closed form
    /// after tilting by `e^{-a‖y‖²}`. The time integral uses Simpson's rule.
    pub fn driver_norm_integral(&self) -> f64 {
        let d = self.dim() as f64;
        let bb = self.b_norm_sq;
        if bb == 0.0 {
            return 0.0;
        }
        let integrand = |t: f64| {
            let a = 1.0 / (2.0 - t);
            let r = 1.0 + 2.0 * a * t;
            let log_pref = d * std::f64::consts::LN_2 + d * a.ln() + 2.0 * a.ln() - 0.5 * d * r.ln()
                - a * bb * (1.0 - t) * (1.0 - t) / r;
            let mean_part = bb * (1.0 - t) / r;
            log_pref.exp() * (mean_part * mean_part + t / r * bb)
        };
        crate::numeric::simpson(integrand, 0.0, 1.0, 2000)
    }
}

/// Picard iteration index: finite `n` or the limit `∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Iteration {
    Finite(u32),
    Infinite,
}

impl std::fmt::Display for Iteration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Iteration::Finite(n) => write!(f, "{n}"),
            Iteration::Infinite => write!(f, "inf"),
        }
    }
}

/// `∂^k/∂x^k g_t(x)` where `g_t(x) = E[exp(-(x+Z)²/2)]`, `Z ~ N(0, 1-t)`.
///
/// `∂^k g_t(x) = (2-t)^{-(k+1)/2} (-1)^k H_k(x/√(2-t)) exp(-x²/(2(2-t)))`.
pub fn smoothed_gaussian_deriv(t: f64, x: f64, k: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::invalid("t", format!("must lie in [0, 1), got {t}")));
    }
    if !x.is_finite() {
        return Err(Error::invalid("x", format!("must be finite, got {x}")));
    }
    Ok(*smoothed_gaussian_derivs(t, x, k).last().expect("non-empty"))
}

/// `[∂^0 g_t(x), …, ∂^k g_t(x)]`.
pub(crate) fn smoothed_gaussian_derivs(t: f64, x: f64, k: u32) -> Vec<f64> {
    let s = (2.0 - t).sqrt();
    let u = x / s;
    let env = (-u * u / 2.0).exp();
    let mut scale = env / s;
    hermite_sequence(k, u)
        .into_iter()
        .map(|h| {
            let v = scale * h;
            scale = -scale / s;
            v
        })
        .collect()
}

/// Evaluator for `v^n` and `∇v^n` at arbitrary `(t, x)`. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateEvaluator {
    spec: LinearExampleSpec,
    n: Iteration,
}

impl IterateEvaluator {
    pub fn new(spec: LinearExampleSpec, n: Iteration) -> Self {
        Self { spec, n }
    }

    pub fn finite(spec: &LinearExampleSpec, n: u32) -> Self {
        Self::new(spec.clone(), Iteration::Finite(n))
    }

    pub fn solution(spec: &LinearExampleSpec) -> Self {
        Self::new(spec.clone(), Iteration::Infinite)
    }

    pub fn spec(&self) -> &LinearExampleSpec {
        &self.spec
    }

    pub fn iteration(&self) -> Iteration {
        self.n
    }

    fn check_point(&self, t: f64, x: &[f64], t_max_inclusive: bool) -> Result<()> {
        let ok_t = if t_max_inclusive {
            (0.0..=1.0).contains(&t)
        } else {
            (0.0..1.0).contains(&t)
        };
        if !ok_t {
            let range = if t_max_inclusive { "[0, 1]" } else { "[0, 1)" };
            return Err(Error::invalid("t", format!("must lie in {range}, got {t}")));
        }
        if x.len() != self.spec.dim() {
            return Err(Error::invalid(
                "x",
                format!("expected length {}, got {}", self.spec.dim(), x.len()),
            ));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid("x", format!("entries must be finite, got {v}")));
        }
        Ok(())
    }

    /// `v^n(t, x)`; `v^0 ≡ 0`, and `t = 1` returns the terminal condition for
    /// `n ≥ 1` and `n = ∞`.
    pub fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check_point(t, x, true)?;
        Ok(self.value_unchecked(t, x))
    }

    /// `∇_x v^n(t, x)` for `t ∈ [0, 1)`.
    pub fn gradient(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(t, x, false)?;
        let mut out = vec![0.0; x.len()];
        self.gradient_into(t, x, &mut out);
        Ok(out)
    }

    pub(crate) fn value_unchecked(&self, t: f64, x: &[f64]) -> f64 {
        match self.n {
            Iteration::Finite(0) => 0.0,
            _ if t >= 1.0 => self.spec.terminal(x),
            Iteration::Infinite => {
                let factor = self.norm_factor();
                let one_minus_t = 1.0 - t;
                factor
                    * x.iter()
                        .zip(self.spec.b())
                        .map(|(&xl, &bl)| smoothed_gaussian_derivs(t, xl + bl * one_minus_t, 0)[0])
                        .product::<f64>()
            }
            Iteration::Finite(n) => {
                let series: Vec<Vec<f64>> = (0..x.len()).map(|l| self.coordinate_series(t, x[l], l, n, 0)).collect();
                self.norm_factor() * truncated_product_sum(&series, n as usize - 1)
            }
        }
    }

    pub(crate) fn gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        match self.n {
            Iteration::Finite(0) => out.iter_mut().for_each(|o| *o = 0.0),
            Iteration::Infinite => {
                let one_minus_t = 1.0 - t;
                let derivs: Vec<[f64; 2]> = x
                    .iter()
                    .zip(self.spec.b())
                    .map(|(&xl, &bl)| {
                        let v = smoothed_gaussian_derivs(t, xl + bl * one_minus_t, 1);
                        [v[0], v[1]]
                    })
                    .collect();
                let factor = self.norm_factor();
                for j in 0..d {
                    let mut p = factor * derivs[j][1];
                    for (l, dl) in derivs.iter().enumerate() {
                        if l != j {
                            p *= dl[0];
                        }
                    }
                    out[j] = p;
                }
            }
            Iteration::Finite(n) => {
                let plain: Vec<Vec<f64>> = (0..d).map(|l| self.coordinate_series(t, x[l], l, n, 0)).collect();
                let factor = self.norm_factor();
                for j in 0..d {
                    let mut series = plain.clone();
                    series[j] = self.coordinate_series(t, x[j], j, n, 1);
                    out[j] = factor * truncated_product_sum(&series, n as usize - 1);
                }
            }
        }
    }

    fn norm_factor(&self) -> f64 {
        (self.spec.dim() as f64 * 0.5 * std::f64::consts::LN_2).exp()
    }

    /// `c[a] = ((1-t) b_l)^a / a! · ∂^{a+shift} g_t(x_l)` for `a < n`.
    fn coordinate_series(&self, t: f64, xl: f64, l: usize, n: u32, shift: u32) -> Vec<f64> {
        let derivs = smoothed_gaussian_derivs(t, xl, n - 1 + shift);
        let rate = (1.0 - t) * self.spec.b()[l];
        let mut weight = 1.0;
        (0..n as usize)
            .map(|a| {
                if a > 0 {
                    weight *= rate / a as f64;
                }
                weight * derivs[a + shift as usize]
            })
            .collect()
    }
}

/// Sum of all coefficients of degree `≤ max_degree` in `Π_l (Σ_a series[l][a] z^a)`.
///
/// Each degree coefficient is accumulated with compensation; the degree sums
/// are then added in descending magnitude.
fn truncated_product_sum(series: &[Vec<f64>], max_degree: usize) -> f64 {
    let mut poly = vec![0.0; max_degree + 1];
    poly[0] = 1.0;
    for s in series {
        let mut next = vec![0.0; max_degree + 1];
        for (deg, slot) in next.iter_mut().enumerate() {
            let mut acc = CompensatedSum::new();
            for a in 0..=deg.min(s.len() - 1) {
                acc.add(poly[deg - a] * s[a]);
            }
            *slot = acc.value();
        }
        poly = next;
    }
    sum_by_magnitude(&mut poly)
}

/// `v^n(t, x)`.
pub fn eval_v(evaluator: &IterateEvaluator, t: f64, x: &[f64]) -> Result<f64> {
    evaluator.value(t, x)
}

/// `∇_x v^n(t, x)`.
pub fn eval_grad_v(evaluator: &IterateEvaluator, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    evaluator.gradient(t, x)
}

fn check_positive_n(n: u32) -> Result<()> {
    if n == 0 {
        Err(Error::invalid("n", "iteration index must be at least 1"))
    } else {
        Ok(())
    }
}

/// `v^n(0,0) = Σ_{i=0}^{⌊(n-1)/2⌋} (-1)^i ‖b‖^{2i} / (4^i i!)`.
pub fn v_origin_series(spec: &LinearExampleSpec, n: u32) -> Result<f64> {
    check_positive_n(n)?;
    let q = spec.b_norm_sq() / 4.0;
    let mut term = 1.0;
    let mut acc = CompensatedSum::new();
    acc.add(term);
    for i in 1..=(n - 1) / 2 {
        term *= -q / f64::from(i);
        acc.add(term);
    }
    Ok(acc.value())
}

/// `v^∞(0,0) - v^n(0,0)`, signed.
///
/// When the tail `Σ_{i≥j} (-1)^i q^i / i!` (`j = ⌊(n+1)/2⌋`, `q = ‖b‖²/4`) has
/// decreasing terms it is summed directly, which keeps full relative accuracy
/// for gaps far below `e^{-q}`; otherwise the difference is taken.
pub fn origin_gap(spec: &LinearExampleSpec, n: u32) -> Result<f64> {
    check_positive_n(n)?;
    let q = spec.b_norm_sq() / 4.0;
    if q == 0.0 {
        return Ok(0.0);
    }
    let j = n.div_ceil(2);
    if q >= f64::from(j + 1) {
        return Ok((-q).exp() - v_origin_series(spec, n)?);
    }
    let log_first = f64::from(j) * q.ln() - crate::special::log_factorial(u64::from(j));
    let mut term = log_first.exp();
    let mut acc = CompensatedSum::new();
    let mut i = j;
    loop {
        acc.add(if i % 2 == 0 { term } else { -term });
        i += 1;
        term *= q / f64::from(i);
        if term <= f64::EPSILON * 1e-3 * acc.value().abs() || term == 0.0 {
            break;
        }
    }
    Ok(acc.value())
}

/// Central-difference residual of `∂_t v^∞ + ½Δv^∞ + ⟨b, ∇v^∞⟩` at `(t, x)`.
pub fn pde_residual(spec: &LinearExampleSpec, t: f64, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0 && t - h > 0.0 && t + h < 1.0) {
        return Err(Error::Precondition(format!(
            "need 0 < t-h and t+h < 1, got t={t}, h={h}"
        )));
    }
    let v = IterateEvaluator::solution(spec);
    let dt = (v.value(t + h, x)? - v.value(t - h, x)?) / (2.0 * h);
    let centre = v.value(t, x)?;
    let mut lap = 0.0;
    let mut drift = 0.0;
    let mut probe = x.to_vec();
    for (j, &bj) in spec.b().iter().enumerate() {
        probe[j] = x[j] + h;
        let up = v.value(t, &probe)?;
        probe[j] = x[j] - h;
        let down = v.value(t, &probe)?;
        probe[j] = x[j];
        lap += (up - 2.0 * centre + down) / (h * h);
        drift += bj * (up - down) / (2.0 * h);
    }
    Ok(dt + 0.5 * lap + drift)
}
