use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::par_map;
use super::rng::{normal, substream, Domain};
use crate::analytic::LinearExampleSpec;
use crate::numeric::Moments;
use crate::{Error, Result};

/// A driver `f(t, y, z)` with `y ∈ R^d`, `z ∈ R^{d×m}` (row-major).
pub trait Driver: Send + Sync {
    fn y_dim(&self) -> usize;
    fn lipschitz_y(&self) -> f64;
    fn lipschitz_z(&self) -> f64;
    fn eval(&self, t: f64, y: &[f64], z: &[f64], out: &mut [f64]);

    fn z_dependent(&self) -> bool {
        self.lipschitz_z() > 0.0
    }
}

/// `f(t, y, z) = ⟨b, z⟩` for scalar `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearZDriver {
    pub b: Vec<f64>,
}

impl Driver for LinearZDriver {
    fn y_dim(&self) -> usize {
        1
    }

    fn lipschitz_y(&self) -> f64 {
        0.0
    }

    fn lipschitz_z(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn eval(&self, _t: f64, _y: &[f64], z: &[f64], out: &mut [f64]) {
        out[0] = self.b.iter().zip(z).map(|(b, z)| b * z).sum();
    }
}

/// `f(t, y, z) = L y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearYDriver {
    pub rate: f64,
    pub y_dim: usize,
}

impl Driver for LinearYDriver {
    fn y_dim(&self) -> usize {
        self.y_dim
    }

    fn lipschitz_y(&self) -> f64 {
        self.rate.abs()
    }

    fn lipschitz_z(&self) -> f64 {
        0.0
    }

    fn eval(&self, _t: f64, y: &[f64], _z: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().zip(y) {
            *o = self.rate * y;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroDriver {
    pub y_dim: usize,
}

impl Driver for ZeroDriver {
    fn y_dim(&self) -> usize {
        self.y_dim
    }

    fn lipschitz_y(&self) -> f64 {
        0.0
    }

    fn lipschitz_z(&self) -> f64 {
        0.0
    }

    fn eval(&self, _t: f64, _y: &[f64], _z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// Probes `f` on random pairs and checks the declared Lipschitz constants.
///
/// Returns the largest observed `‖Δf‖ - L_y‖Δy‖ - L_z‖Δz‖_F`.
pub fn check_lipschitz(driver: &dyn Driver, w_dim: usize, probes: usize, seed: u64) -> Result<f64> {
    let d = driver.y_dim();
    let mut rng = substream(seed, Domain::Probes, 0);
    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| 2.0 * normal(rng)).collect()
    };
    let (mut f1, mut f2) = (vec![0.0; d], vec![0.0; d]);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..probes {
        let t: f64 = rng.random();
        let (y1, y2) = (draw(d, &mut rng), draw(d, &mut rng));
        let (z1, z2) = (draw(d * w_dim, &mut rng), draw(d * w_dim, &mut rng));
        driver.eval(t, &y1, &z1, &mut f1);
        driver.eval(t, &y2, &z2, &mut f2);
        let norm = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let excess = norm(&f1, &f2) - driver.lipschitz_y() * norm(&y1, &y2) - driver.lipschitz_z() * norm(&z1, &z2);
        worst = worst.max(excess);
    }
    if worst > 1e-12 {
        return Err(Error::Precondition(format!(
            "driver violates its declared Lipschitz constants by {worst:e}"
        )));
    }
    Ok(worst)
}

type Terminal = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A Markovian BSDE `Y_t = g(W_T) + ∫_t^T f(s, Y_s, Z_s) ds - ∫_t^T Z_s dW_s`.
pub struct MarkovianBsde {
    pub horizon: f64,
    pub w_dim: usize,
    terminal: Box<Terminal>,
    driver: Box<dyn Driver>,
}

impl std::fmt::Debug for MarkovianBsde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarkovianBsde")
            .field("horizon", &self.horizon)
            .field("w_dim", &self.w_dim)
            .field("y_dim", &self.driver.y_dim())
            .finish_non_exhaustive()
    }
}

impl MarkovianBsde {
    pub fn new(
        horizon: f64,
        w_dim: usize,
        terminal: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        driver: impl Driver + 'static,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("horizon", format!("must be finite and > 0, got {horizon}")));
        }
        if w_dim == 0 || driver.y_dim() == 0 {
            return Err(Error::invalid("w_dim", "dimensions must be positive"));
        }
        Ok(Self { horizon, w_dim, terminal: Box::new(terminal), driver: Box::new(driver) })
    }

    /// Terminal `2^{d/2} e^{-‖x‖²/2}`, driver `⟨b, z⟩`, horizon 1.
    pub fn linear_example(spec: &LinearExampleSpec) -> Self {
        let sp = spec.clone();
        Self::new(1.0, spec.dim(), move |x, out| out[0] = sp.terminal(x), LinearZDriver { b: spec.b().to_vec() })
            .expect("valid example")
    }

    pub fn y_dim(&self) -> usize {
        self.driver.y_dim()
    }

    pub fn driver(&self) -> &dyn Driver {
        self.driver.as_ref()
    }
}

/// Samples per recursion level: level `ℓ` (`1 ≤ ℓ ≤ n`) uses `per_level[ℓ - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub per_level: Vec<u64>,
    /// Largest admissible [`nested_cost`].
    pub ceiling: f64,
}

impl Budget {
    pub const DEFAULT_CEILING: f64 = 5e9;

    pub fn uniform(levels: u32, samples: u64) -> Self {
        Self { per_level: vec![samples; levels as usize], ceiling: Self::DEFAULT_CEILING }
    }

    pub fn with_ceiling(mut self, ceiling: f64) -> Self {
        self.ceiling = ceiling;
        self
    }

    pub fn scaled(&self, factor: u64) -> Self {
        Self { per_level: self.per_level.iter().map(|m| m * factor).collect(), ceiling: self.ceiling }
    }
}

/// Number of terminal plus driver evaluations of an `n`-level run:
/// `C(0) = 0`, `C(ℓ) = M_ℓ (2 + C(ℓ-1))`.
pub fn nested_cost(budget: &Budget, n: u32) -> f64 {
    (1..=n as usize).fold(0.0, |c, l| budget.per_level.get(l - 1).copied().unwrap_or(0) as f64 * (2.0 + c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedEstimate {
    pub y: Vec<f64>,
    /// Row-major `d × m`.
    pub z: Vec<f64>,
    pub y_std_error: Vec<f64>,
    pub z_std_error: Vec<f64>,
    pub cost: f64,
    /// Heuristic size of the bias from dropping gradient weights for `s < t + δ`.
    pub z_cutoff_bias: f64,
}

/// Fraction of `(t, T)` excluded from the gradient weight.
const CUTOFF_FRACTION: f64 = 1e-3;

struct Scratch {
    dw: Vec<f64>,
    x: Vec<f64>,
    g: Vec<f64>,
    f: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    driver_z: Vec<f64>,
}

impl Scratch {
    fn new(d: usize, m: usize) -> Self {
        Self {
            dw: vec![0.0; m],
            x: vec![0.0; m],
            g: vec![0.0; d],
            f: vec![0.0; d],
            y: vec![0.0; d],
            z: vec![0.0; d * m],
            driver_z: vec![0.0; d * m],
        }
    }
}

/// One outer sample of the level-`level` estimator at `(t, x)`, written to
/// `s.y`, `s.z`; `s.driver_z` receives the driver part of `z`.
fn single_sample(
    p: &MarkovianBsde,
    level: u32,
    t: f64,
    x: &[f64],
    g_at_x: &[f64],
    budget: &Budget,
    rng: &mut ChaCha8Rng,
    s: &mut Scratch,
) {
    let m = p.w_dim;
    let d = p.y_dim();
    let tau = p.horizon - t;

    let sd = tau.sqrt();
    for j in 0..m {
        s.dw[j] = sd * normal(rng);
        s.x[j] = x[j] + s.dw[j];
    }
    (p.terminal)(&s.x, &mut s.g);
    for r in 0..d {
        s.y[r] = s.g[r];
        for j in 0..m {
            s.z[r * m + j] = (s.g[r] - g_at_x[r]) * s.dw[j] / tau;
        }
    }

    let u: f64 = rng.random();
    let dt = tau * u;
    let time = t + dt;
    let sd = dt.sqrt();
    for j in 0..m {
        s.dw[j] = sd * normal(rng);
        s.x[j] = x[j] + s.dw[j];
    }
    let (yi, zi) = if level > 1 {
        let inner = level_estimate(p, level - 1, time, &s.x, budget, rng);
        (inner.0, inner.1)
    } else {
        (vec![0.0; d], vec![0.0; d * m])
    };
    p.driver.eval(time, &yi, &zi, &mut s.f);
    let keep_z = dt >= CUTOFF_FRACTION * tau;
    for r in 0..d {
        s.y[r] += tau * s.f[r];
        for j in 0..m {
            let w = if keep_z { tau * s.f[r] * s.dw[j] / dt } else { 0.0 };
            s.driver_z[r * m + j] = w;
            s.z[r * m + j] += w;
        }
    }
}

/// Plain average of `M_level` single samples, sequential on `rng`.
fn level_estimate(
    p: &MarkovianBsde,
    level: u32,
    t: f64,
    x: &[f64],
    budget: &Budget,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let d = p.y_dim();
    let m = p.w_dim;
    let mut g_at_x = vec![0.0; d];
    (p.terminal)(x, &mut g_at_x);
    let samples = budget.per_level[level as usize - 1];
    let mut s = Scratch::new(d, m);
    let mut y = vec![0.0; d];
    let mut z = vec![0.0; d * m];
    for _ in 0..samples {
        single_sample(p, level, t, x, &g_at_x, budget, rng, &mut s);
        y.iter_mut().zip(&s.y).for_each(|(a, b)| *a += b);
        z.iter_mut().zip(&s.z).for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / samples as f64;
    y.iter_mut().for_each(|v| *v *= inv);
    z.iter_mut().for_each(|v| *v *= inv);
    (y, z)
}

/// Nested Monte-Carlo estimate of `(v^n(t, x), ∇v^n(t, x))` for the Picard
/// iterates started at `Y^0 = 0, Z^0 = 0`.
///
/// Each sample averages a terminal draw and a single uniformly placed driver
/// evaluation whose arguments come from an independent level-`(n-1)`
/// estimate. Gradients use the Brownian weight `ΔW/Δt`; the terminal part
/// subtracts `g(x)` as a control variate and the driver part drops the
/// weight for `s - t < (T - t)/1000`.
pub fn nested_picard(
    problem: &MarkovianBsde,
    n: u32,
    t: f64,
    x: &[f64],
    budget: &Budget,
    seed: u64,
) -> Result<NestedEstimate> {
    let d = problem.y_dim();
    let m = problem.w_dim;
    if !(0.0..problem.horizon).contains(&t) {
        return Err(Error::invalid("t", format!("must lie in [0, {}), got {t}", problem.horizon)));
    }
    if x.len() != m || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x", format!("expected {m} finite entries")));
    }
    if n == 0 {
        return Ok(NestedEstimate {
            y: vec![0.0; d],
            z: vec![0.0; d * m],
            y_std_error: vec![0.0; d],
            z_std_error: vec![0.0; d * m],
            cost: 0.0,
            z_cutoff_bias: 0.0,
        });
    }
    if budget.per_level.len() < n as usize {
        return Err(Error::invalid(
            "budget",
            format!("needs sample counts for {n} levels, got {}", budget.per_level.len()),
        ));
    }
    if budget.per_level[..n as usize].contains(&0) || budget.per_level[n as usize - 1] < 2 {
        return Err(Error::invalid("budget", "every level needs samples and the top level at least 2"));
    }
    let cost = nested_cost(budget, n);
    if cost > budget.ceiling {
        return Err(Error::Budget { estimated: cost, ceiling: budget.ceiling });
    }

    let mut g_at_x = vec![0.0; d];
    (problem.terminal)(x, &mut g_at_x);
    let top = budget.per_level[n as usize - 1];
    let rows: Vec<Vec<f64>> = par_map(top as usize, |i| {
        let mut rng = substream(seed, Domain::Nested, i as u64);
        let mut s = Scratch::new(d, m);
        single_sample(problem, n, t, x, &g_at_x, budget, &mut rng, &mut s);
        let mut row = s.y.clone();
        row.extend_from_slice(&s.z);
        row.extend_from_slice(&s.driver_z);
        row
    });

    let width = d + 2 * d * m;
    let stats: Vec<Moments> = (0..width)
        .map(|c| {
            let mut mo = Moments::default();
            rows.iter().for_each(|r| mo.push(r[c]));
            mo
        })
        .collect();
    let driver_z_norm = stats[d + d * m..].iter().map(|s| s.mean().powi(2)).sum::<f64>().sqrt();
    Ok(NestedEstimate {
        y: stats[..d].iter().map(Moments::mean).collect(),
        z: stats[d..d + d * m].iter().map(Moments::mean).collect(),
        y_std_error: stats[..d].iter().map(Moments::std_error).collect(),
        z_std_error: stats[d..d + d * m].iter().map(Moments::std_error).collect(),
        cost,
        z_cutoff_bias: driver_z_norm * CUTOFF_FRACTION / (1.0 - CUTOFF_FRACTION),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{eval_grad_v, eval_v, IterateEvaluator, Iteration};
    use crate::bounds::l01_iterate;

    fn within(est: f64, se: f64, exact: f64, sigmas: f64) -> bool {
        (est - exact).abs() <= sigmas * se + 1e-12
    }

    #[test]
    fn level_zero_is_exactly_zero() {
        let sp = LinearExampleSpec::new(vec![1.0, 0.5]).unwrap();
        let p = MarkovianBsde::linear_example(&sp);
        let e = nested_picard(&p, 0, 0.3, &[0.1, 0.2], &Budget::uniform(0, 0), 1).unwrap();
        assert_eq!(e.y, vec![0.0]);
        assert_eq!(e.z, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_example_matches_analytic_iterates() {
        let sp = LinearExampleSpec::new(vec![1.0]).unwrap();
        let p = MarkovianBsde::linear_example(&sp);
        for n in 1..=3u32 {
            let e = nested_picard(&p, n, 0.0, &[0.0], &Budget::uniform(n, 150), 100 + u64::from(n)).unwrap();
            let ev = IterateEvaluator::finite(&sp, n);
            let v = eval_v(&ev, 0.0, &[0.0]).unwrap();
            let g = eval_grad_v(&ev, 0.0, &[0.0]).unwrap();
            assert!(within(e.y[0], e.y_std_error[0], v, 4.0), "n={n}: {e:?} vs {v}");
            assert!(within(e.z[0], e.z_std_error[0], g[0], 4.0), "n={n}: {e:?} vs {g:?}");
        }
    }

    #[test]
    fn linear_example_off_origin() {
        let sp = LinearExampleSpec::new(vec![0.8, -0.6]).unwrap();
        let p = MarkovianBsde::linear_example(&sp);
        let (t, x) = (0.25, [0.3, -0.4]);
        let e = nested_picard(&p, 2, t, &x, &Budget::uniform(2, 400), 9).unwrap();
        let ev = IterateEvaluator::finite(&sp, 2);
        assert!(within(e.y[0], e.y_std_error[0], eval_v(&ev, t, &x).unwrap(), 4.0));
        let g = eval_grad_v(&ev, t, &x).unwrap();
        for j in 0..2 {
            assert!(within(e.z[j], e.z_std_error[j], g[j], 4.0), "{e:?} vs {g:?}");
        }
    }

    #[test]
    fn linear_y_driver_reproduces_exponential_partial_sums() {
        let p = MarkovianBsde::new(1.0, 1, |_x, out| out[0] = 1.0, LinearYDriver { rate: 1.0, y_dim: 1 }).unwrap();
        for n in 1..=4u32 {
            for t in [0.0, 0.5] {
                let e = nested_picard(&p, n, t, &[0.0], &Budget::uniform(n, 60), 3).unwrap();
                // Started at Y^0 = 0, the n-th iterate is the (n-1)-th partial sum.
                let exact = l01_iterate(1.0, Iteration::Finite(n - 1), t).unwrap();
                assert!(within(e.y[0], e.y_std_error[0], exact, 4.0), "n={n} t={t}: {e:?} vs {exact}");
                assert!(within(e.z[0], e.z_std_error[0], 0.0, 4.0), "n={n}: {e:?}");
            }
        }
    }

    #[test]
    fn zero_driver_averages_the_terminal() {
        let sp = LinearExampleSpec::new(vec![0.0, 0.0]).unwrap();
        let p = MarkovianBsde::new(
            1.0,
            2,
            move |x, out| out[0] = sp.terminal(x),
            ZeroDriver { y_dim: 1 },
        )
        .unwrap();
        let e = nested_picard(&p, 1, 0.0, &[0.0, 0.0], &Budget::uniform(1, 20_000), 4).unwrap();
        // E[2^{d/2} e^{-‖W_1‖²/2}] = 2^{d/2} 2^{-d/2} = 1.
        assert!(within(e.y[0], e.y_std_error[0], 1.0, 4.0), "{e:?}");
    }

    #[test]
    fn budget_is_checked_before_running() {
        let sp = LinearExampleSpec::new(vec![1.0]).unwrap();
        let p = MarkovianBsde::linear_example(&sp);
        let budget = Budget::uniform(6, 1000).with_ceiling(1e9);
        match nested_picard(&p, 6, 0.0, &[0.0], &budget, 0) {
            Err(Error::Budget { estimated, .. }) => assert!(estimated > 1e17),
            other => panic!("{other:?}"),
        }
        assert!(nested_picard(&p, 3, 0.0, &[0.0], &Budget::uniform(2, 10), 0).is_err());
        assert_eq!(nested_cost(&Budget::uniform(2, 10), 2), 10.0 * (2.0 + 20.0));
    }

    #[test]
    fn declared_lipschitz_constants_hold() {
        let drivers: Vec<Box<dyn Driver>> = vec![
            Box::new(LinearZDriver { b: vec![1.0, -2.0, 0.5] }),
            Box::new(LinearYDriver { rate: -1.5, y_dim: 1 }),
            Box::new(ZeroDriver { y_dim: 1 }),
        ];
        for drv in &drivers {
            assert!(check_lipschitz(drv.as_ref(), 3, 2000, 7).unwrap() <= 1e-12);
        }
        assert!(LinearZDriver { b: vec![1.0] }.z_dependent());
        assert!(!LinearYDriver { rate: 1.0, y_dim: 1 }.z_dependent());
    }

    #[test]
    fn understated_lipschitz_constant_is_caught() {
        struct Liar;
        impl Driver for Liar {
            fn y_dim(&self) -> usize {
                1
            }
            fn lipschitz_y(&self) -> f64 {
                0.5
            }
            fn lipschitz_z(&self) -> f64 {
                0.0
            }
            fn eval(&self, _t: f64, y: &[f64], _z: &[f64], out: &mut [f64]) {
                out[0] = y[0];
            }
        }
        assert!(matches!(check_lipschitz(&Liar, 1, 100, 1), Err(Error::Precondition(_))));
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn identical_across_thread_counts() {
        let sp = LinearExampleSpec::new(vec![1.0, 0.5]).unwrap();
        let p = MarkovianBsde::linear_example(&sp);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| nested_picard(&p, 2, 0.0, &[0.0, 0.0], &Budget::uniform(2, 64), 77).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, run(16));
    }
}
