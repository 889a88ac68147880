use serde::{Deserialize, Serialize};

use super::paths::PathGrid;
use super::{par_map, Z95};
use crate::analytic::{IterateEvaluator, LinearExampleSpec};
use crate::numeric::Moments;
use crate::{Error, Result};

/// Which of the three a priori inequalities to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AprioriVariant {
    /// `E[e^{λs}‖Y_s‖² + ∫_s^T e^{λt}‖Z_t‖²dt] ≤ E[e^{λT}‖Y_T‖² + ∫_s^T e^{λt}‖A_t‖²/λ dt]`.
    I,
    /// Supremum over `t ∈ [s, T]` inside the expectation, right side times 34.
    II,
    /// Gamma-weighted time integrals over `[0, T]`.
    III,
}

impl AprioriVariant {
    pub const ALL: [AprioriVariant; 3] = [AprioriVariant::I, AprioriVariant::II, AprioriVariant::III];

    pub fn name(&self) -> &'static str {
        match self {
            AprioriVariant::I => "i",
            AprioriVariant::II => "ii",
            AprioriVariant::III => "iii",
        }
    }
}

impl std::str::FromStr for AprioriVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" => Ok(AprioriVariant::I),
            "ii" => Ok(AprioriVariant::II),
            "iii" => Ok(AprioriVariant::III),
            other => Err(Error::invalid("variant", format!("expected i, ii or iii, got {other:?}"))),
        }
    }
}

/// The backward Itô process built from the linear example:
/// `Y = v^k - v^∞`, `Z = ∇v^k - ∇v^∞`, `A = ⟨b, ∇v^{k-1} - ∇v^∞⟩` along
/// Brownian paths, with `Y_T = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AprioriSetup {
    pub spec: LinearExampleSpec,
    pub k: u32,
    pub paths: u64,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub k: u32,
    pub variant: AprioriVariant,
    pub lambda: f64,
    pub alpha: Option<f64>,
    /// Grid time actually used for `s` (first grid point at or after the request).
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_half_width: f64,
    pub rhs_half_width: f64,
    /// `rhs - lhs`.
    pub margin: f64,
    /// Standard error of the paired per-path difference.
    pub diff_std_error: f64,
    /// `lhs ≤ rhs + 4 · diff_std_error`.
    pub pass: bool,
}

/// Squared norms of `Y`, `Z`, `A` on the grid, one row per path.
struct Samples {
    steps: usize,
    dt: f64,
    /// `(steps + 1)` entries per path.
    y2: Vec<Vec<f64>>,
    /// `steps` entries per path (left endpoints).
    z2: Vec<Vec<f64>>,
    a2: Vec<Vec<f64>>,
}

fn validate_setup(setup: &AprioriSetup) -> Result<()> {
    if setup.k == 0 {
        return Err(Error::invalid("k", "must be at least 1 so that the terminal difference vanishes"));
    }
    if setup.paths < 2 {
        return Err(Error::invalid("paths", format!("need at least 2, got {}", setup.paths)));
    }
    if setup.steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    Ok(())
}

fn sample(setup: &AprioriSetup) -> Samples {
    let d = setup.spec.dim();
    let steps = setup.steps;
    let cur = IterateEvaluator::finite(&setup.spec, setup.k);
    let prev = IterateEvaluator::finite(&setup.spec, setup.k - 1);
    let sol = IterateEvaluator::solution(&setup.spec);
    let b = setup.spec.b();
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = par_map(setup.paths as usize, |p| {
        let path = PathGrid::generate(1.0, d, steps, setup.seed, p as u64).expect("validated");
        let pos = path.positions();
        let (mut gc, mut gp, mut gs) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut y2 = Vec::with_capacity(steps + 1);
        let mut z2 = Vec::with_capacity(steps);
        let mut a2 = Vec::with_capacity(steps);
        for i in 0..=steps {
            let t = path.time(i);
            let x = &pos[i * d..(i + 1) * d];
            y2.push((cur.value_unchecked(t, x) - sol.value_unchecked(t, x)).powi(2));
            if i < steps {
                cur.gradient_into(t, x, &mut gc);
                prev.gradient_into(t, x, &mut gp);
                sol.gradient_into(t, x, &mut gs);
                z2.push(gc.iter().zip(&gs).map(|(a, b)| (a - b).powi(2)).sum());
                let a: f64 = b.iter().zip(gp.iter().zip(&gs)).map(|(b, (p, s))| b * (p - s)).sum();
                a2.push(a * a);
            }
        }
        (y2, z2, a2)
    });
    let mut out = Samples { steps, dt: 1.0 / steps as f64, y2: vec![], z2: vec![], a2: vec![] };
    for (y, z, a) in rows {
        out.y2.push(y);
        out.z2.push(z);
        out.a2.push(a);
    }
    out
}

fn check_params(variant: AprioriVariant, lambda: f64, s: f64, alpha: Option<f64>) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("must be finite and > 0, got {lambda}")));
    }
    if !(0.0..1.0).contains(&s) {
        return Err(Error::invalid("s", format!("must lie in [0, 1), got {s}")));
    }
    if variant == AprioriVariant::III {
        match alpha {
            Some(a) if a.is_finite() && a > 0.0 => {}
            other => return Err(Error::invalid("alpha", format!("variant iii needs alpha > 0, got {other:?}"))),
        }
    }
    Ok(())
}

fn evaluate(
    samples: &Samples,
    k: u32,
    variant: AprioriVariant,
    lambda: f64,
    s: f64,
    alpha: Option<f64>,
) -> AprioriReport {
    let n = samples.steps;
    let dt = samples.dt;
    let i_s = ((s / dt).ceil() as usize).min(n - 1);
    let s_grid = i_s as f64 * dt;
    let mid = |i: usize| (i as f64 + 0.5) * dt;
    let big_t = 1.0;

    let (mut lhs, mut rhs, mut diff) = (Moments::default(), Moments::default(), Moments::default());
    for p in 0..samples.y2.len() {
        let (y2, z2, a2) = (&samples.y2[p], &samples.z2[p], &samples.a2[p]);
        let (l, r) = match variant {
            AprioriVariant::I | AprioriVariant::II => {
                let drift: f64 = (i_s..n).map(|i| dt * (lambda * mid(i)).exp() / lambda * a2[i]).sum();
                let r = (lambda * big_t).exp() * y2[n] + drift;
                if variant == AprioriVariant::I {
                    let zint: f64 = (i_s..n).map(|i| dt * (lambda * mid(i)).exp() * z2[i]).sum();
                    ((lambda * s_grid).exp() * y2[i_s] + zint, r)
                } else {
                    // Walk backwards accumulating ∫_t^T e^{λu}‖Z_u‖² du.
                    let mut tail = 0.0;
                    let mut sup = (lambda * big_t).exp() * y2[n];
                    for i in (i_s..n).rev() {
                        tail += dt * (lambda * mid(i)).exp() * z2[i];
                        sup = sup.max((lambda * i as f64 * dt).exp() * y2[i] + tail);
                    }
                    (sup, 34.0 * r)
                }
            }
            AprioriVariant::III => {
                let a = alpha.expect("checked");
                let g_a = libm::tgamma(a);
                let g_a1 = libm::tgamma(a + 1.0);
                let mut l = 0.0;
                let mut r = (lambda * big_t).exp() * big_t.powf(a) * y2[n] / g_a1;
                for i in 0..n {
                    let t = mid(i);
                    let e = (lambda * t).exp();
                    l += dt * (t.powf(a - 1.0) * e * y2[i] / g_a + t.powf(a) * e * z2[i] / g_a1);
                    r += dt * e * t.powf(a) * a2[i] / (lambda * g_a1);
                }
                (l, r)
            }
        };
        lhs.push(l);
        rhs.push(r);
        diff.push(r - l);
    }
    let margin = rhs.mean() - lhs.mean();
    AprioriReport {
        k,
        variant,
        lambda,
        alpha: if variant == AprioriVariant::III { alpha } else { None },
        s: if variant == AprioriVariant::III { 0.0 } else { s_grid },
        lhs: lhs.mean(),
        rhs: rhs.mean(),
        lhs_half_width: Z95 * lhs.std_error(),
        rhs_half_width: Z95 * rhs.std_error(),
        margin,
        diff_std_error: diff.std_error(),
        pass: margin >= -4.0 * diff.std_error(),
    }
}

/// Monte-Carlo estimate of both sides of one a priori inequality.
///
/// Integrals use left-endpoint process values with weights at cell
/// midpoints, which keeps `t^{α-1}` finite for `α < 1`. Conditional
/// expectations are replaced by unconditional ones.
pub fn apriori_check(
    setup: &AprioriSetup,
    lambda: f64,
    s: f64,
    variant: AprioriVariant,
    alpha: Option<f64>,
) -> Result<AprioriReport> {
    validate_setup(setup)?;
    check_params(variant, lambda, s, alpha)?;
    Ok(evaluate(&sample(setup), setup.k, variant, lambda, s, alpha))
}

/// Every `(λ, variant)` cell, with variant iii repeated per `α`, from one
/// set of paths.
pub fn apriori_sweep(
    setup: &AprioriSetup,
    lambdas: &[f64],
    alphas: &[f64],
    variants: &[AprioriVariant],
    s: f64,
) -> Result<Vec<AprioriReport>> {
    validate_setup(setup)?;
    for &lambda in lambdas {
        for &v in variants {
            if v == AprioriVariant::III {
                if alphas.is_empty() {
                    return Err(Error::invalid("alpha", "variant iii needs at least one alpha"));
                }
                for &a in alphas {
                    check_params(v, lambda, s, Some(a))?;
                }
            } else {
                check_params(v, lambda, s, None)?;
            }
        }
    }
    let samples = sample(setup);
    let mut out = Vec::new();
    for &lambda in lambdas {
        for &v in variants {
            if v == AprioriVariant::III {
                out.extend(alphas.iter().map(|&a| evaluate(&samples, setup.k, v, lambda, s, Some(a))));
            } else {
                out.push(evaluate(&samples, setup.k, v, lambda, s, None));
            }
        }
    }
    Ok(out)
}
