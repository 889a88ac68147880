//! Hermite polynomials and overflow-aware combinatorics.
//!
//! Factorials and multinomials are exact in 128-bit integers up to
//! [`EXACT_FACTORIAL_MAX`] and fall back to log-gamma beyond. All functions are
//! pure; `0^0 = 1` throughout.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest `n` for which `n!` is computed in exact integer arithmetic.
pub const EXACT_FACTORIAL_MAX: u64 = 33;

/// Probabilists' Hermite polynomial `H_k(x)` via the three-term recurrence
/// `H_{k+1}(x) = x H_k(x) - k H_{k-1}(x)`.
///
/// Fails with [`Error::Overflow`] when the value is not representable as a
/// finite `f64`.
pub fn hermite_eval(k: u32, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid("x", format!("must be finite, got {x}")));
    }
    let value = *hermite_sequence(k, x).last().expect("sequence is never empty");
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow(format!("H_{k}({x}) exceeds f64 range")))
    }
}

/// `[H_0(x), H_1(x), …, H_k(x)]` from the recurrence. No overflow checking.
pub fn hermite_sequence(k: u32, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k as usize + 1);
    out.push(1.0);
    if k >= 1 {
        out.push(x);
    }
    for j in 1..k as usize {
        let next = x * out[j] - j as f64 * out[j - 1];
        out.push(next);
    }
    out
}

/// Monomial coefficients of `H_k`, index `p` holding the coefficient of `x^p`.
///
/// The coefficient of `x^{k-2l}` is `k!(-1)^l / (l!(k-2l)! 2^l)`. Computed by
/// the recurrence on coefficient vectors, so the values are exact integers
/// while they fit in the `f64` mantissa.
pub fn hermite_coefficients(k: u32) -> Vec<f64> {
    let mut prev = vec![1.0];
    if k == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for j in 1..k as usize {
        let mut next = vec![0.0; j + 2];
        for (p, &c) in cur.iter().enumerate() {
            next[p + 1] += c;
        }
        for (p, &c) in prev.iter().enumerate() {
            next[p] -= j as f64 * c;
        }
        prev = std::mem::replace(&mut cur, next);
    }
    cur
}

/// `E[√2 · exp(-W²/2) · H_k(W)]` for a standard normal `W`.
///
/// Zero for odd `k`; for even `k` equals `k! (-1)^{k/2} / (4^{k/2} (k/2)!)`,
/// evaluated as a log-space magnitude with an explicit sign.
pub fn gaussian_hermite_expectation(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let half = u64::from(k / 2);
    let log_mag = log_factorial(u64::from(k)) - (k as f64) * std::f64::consts::LN_2 - log_factorial(half);
    let sign = if half % 2 == 0 { 1.0 } else { -1.0 };
    sign * log_mag.exp()
}

/// `n!!` for `n ≥ -1`, with `(-1)!! = 0!! = 1`.
pub fn double_factorial(n: i64) -> Result<u128> {
    if n < -1 {
        return Err(Error::invalid("n", format!("double factorial needs n >= -1, got {n}")));
    }
    let mut acc: u128 = 1;
    let mut m = n;
    while m > 1 {
        acc = acc
            .checked_mul(m as u128)
            .ok_or_else(|| Error::Overflow(format!("{n}!! exceeds 128-bit range")))?;
        m -= 2;
    }
    Ok(acc)
}

/// Exact `n!` for `n ≤ EXACT_FACTORIAL_MAX`.
pub fn factorial_exact(n: u64) -> Result<u128> {
    if n > EXACT_FACTORIAL_MAX {
        return Err(Error::Overflow(format!(
            "{n}! is outside the exact range (n <= {EXACT_FACTORIAL_MAX})"
        )));
    }
    Ok((1..=n as u128).product())
}

/// `log n!`: exact integer arithmetic for small `n`, log-gamma otherwise.
pub fn log_factorial(n: u64) -> f64 {
    if n <= EXACT_FACTORIAL_MAX {
        (factorial_exact(n).expect("within exact range") as f64).ln()
    } else {
        libm::lgamma(n as f64 + 1.0)
    }
}

/// `binom(n, k)` in exact arithmetic, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// A multi-index `α = (α_1, …, α_d)` of non-negative integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        Self(entries)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|α| = Σ α_l`.
    pub fn order(&self) -> u64 {
        self.0.iter().map(|&a| u64::from(a)).sum()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Every `α ∈ N_0^d` with `|α| = k`, in lexicographic order.
///
/// The count is `binom(k+d-1, d-1)`; enumeration is refused when that count
/// does not fit in memory-addressable size.
pub fn multi_indices(d: usize, k: u32) -> Result<Vec<MultiIndex>> {
    if d == 0 {
        return Err(Error::invalid("d", "dimension must be positive"));
    }
    let count = binomial(u64::from(k) + d as u64 - 1, d as u64 - 1)
        .filter(|&c| c <= usize::MAX as u128 / 2)
        .ok_or_else(|| Error::Overflow(format!("number of multi-indices for d={d}, k={k}")))?;
    let mut out = Vec::with_capacity(count as usize);
    let mut current = vec![0u32; d];
    fill_lex(&mut current, 0, k, &mut out);
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

fn fill_lex(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for a in 0..=remaining {
        current[pos] = a;
        fill_lex(current, pos + 1, remaining - a, out);
    }
}

/// `log(k! / (α_1! ⋯ α_d!))`.
pub fn log_multinomial(k: u32, alpha: &MultiIndex) -> Result<f64> {
    if alpha.order() != u64::from(k) {
        return Err(Error::Precondition(format!(
            "multi-index {alpha} has order {} but k = {k}",
            alpha.order()
        )));
    }
    if u64::from(k) <= EXACT_FACTORIAL_MAX {
        let num = factorial_exact(u64::from(k))?;
        let den: u128 = alpha
            .entries()
            .iter()
            .map(|&a| factorial_exact(u64::from(a)))
            .product::<Result<u128>>()?;
        return Ok(((num / den) as f64).ln());
    }
    let den: f64 = alpha.entries().iter().map(|&a| log_factorial(u64::from(a))).sum();
    Ok(log_factorial(u64::from(k)) - den)
}

/// `x^p` with `0^0 = 1`.
pub fn powi0(x: f64, p: u32) -> f64 {
    if p == 0 {
        1.0
    } else {
        x.powi(p as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Explicit sum `Σ_l k!(-1)^l/(l!(k-2l)!) x^{k-2l}/2^l`, evaluated in
    /// log-magnitude form per term. Oracle only.
    fn hermite_explicit(k: u32, x: f64) -> f64 {
        let mut terms: Vec<f64> = (0..=k / 2)
            .map(|l| {
                let p = k - 2 * l;
                let log_c = log_factorial(u64::from(k))
                    - log_factorial(u64::from(l))
                    - log_factorial(u64::from(p))
                    - f64::from(l) * std::f64::consts::LN_2;
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                if p > 0 && x == 0.0 {
                    0.0
                } else {
                    let xs = if p == 0 { 1.0 } else { x.signum().powi(p as i32) };
                    let log_x = if p == 0 { 0.0 } else { f64::from(p) * x.abs().ln() };
                    sign * xs * (log_c + log_x).exp()
                }
            })
            .collect();
        crate::numeric::sum_by_magnitude(&mut terms)
    }

    #[test]
    fn hermite_examples() {
        assert_eq!(hermite_eval(0, 3.7).unwrap(), 1.0);
        assert_eq!(hermite_eval(2, 1.0).unwrap(), 0.0);
        assert_eq!(hermite_eval(3, 2.0).unwrap(), 2.0);
    }

    #[test]
    fn hermite_recurrence_matches_explicit_sum() {
        for k in 0..=25u32 {
            for &x in &[-3.0, -1.0, 0.0, 0.5, 2.0] {
                let rec = hermite_eval(k, x).unwrap();
                let exp = hermite_explicit(k, x);
                let scale = rec.abs().max(exp.abs()).max(1.0);
                assert!(
                    (rec - exp).abs() <= 1e-10 * scale,
                    "k={k} x={x}: recurrence {rec} vs explicit {exp}"
                );
            }
        }
    }

    #[test]
    fn hermite_coefficients_follow_closed_form() {
        for k in 0..=12u32 {
            let coeffs = hermite_coefficients(k);
            assert_eq!(coeffs.len(), k as usize + 1);
            for (p, &c) in coeffs.iter().enumerate() {
                let p = p as u32;
                let expected = if p <= k && (k - p) % 2 == 0 {
                    let l = (k - p) / 2;
                    let num = factorial_exact(u64::from(k)).unwrap() as f64;
                    let den = (factorial_exact(u64::from(l)).unwrap()
                        * factorial_exact(u64::from(p)).unwrap()
                        * (1u128 << l)) as f64;
                    if l % 2 == 0 { num / den } else { -num / den }
                } else {
                    0.0
                };
                assert_eq!(c, expected, "k={k} p={p}");
            }
        }
    }

    #[test]
    fn hermite_overflow_is_reported() {
        assert!(matches!(hermite_eval(400, 1e3), Err(Error::Overflow(_))));
        assert!(hermite_eval(2, f64::NAN).is_err());
    }

    #[test]
    fn gaussian_derivative_identity_carries_sign() {
        // d^k/dx^k e^{-x²/2} = (-1)^k H_k(x) e^{-x²/2}, checked by a Richardson
        // extrapolated k-th central difference.
        let phi = |x: f64| (-x * x / 2.0).exp();
        let central = |k: u32, x: f64, h: f64| -> f64 {
            let mut acc = 0.0;
            for j in 0..=k {
                let c = binomial(u64::from(k), u64::from(j)).unwrap() as f64;
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc += s * c * phi(x + (f64::from(k) / 2.0 - f64::from(j)) * h);
            }
            acc / h.powi(k as i32)
        };
        for k in 0..=8u32 {
            let h = 0.08;
            for i in 0..=16 {
                let x = -2.0 + 0.25 * f64::from(i);
                let fd = (4.0 * central(k, x, h / 2.0) - central(k, x, h)) / 3.0;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let exact = sign * hermite_eval(k, x).unwrap() * phi(x);
                assert!(
                    (fd - exact).abs() < 2e-3 * exact.abs().max(1.0),
                    "k={k} x={x}: fd {fd} vs {exact}"
                );
                // Without the sign the identity fails for odd k away from the zeros.
                if k % 2 == 1 && exact.abs() > 0.1 {
                    let unsigned = hermite_eval(k, x).unwrap() * phi(x);
                    assert!((fd - unsigned).abs() > 0.1);
                }
            }
        }
    }

    #[test]
    fn gaussian_hermite_expectation_examples() {
        assert_eq!(gaussian_hermite_expectation(0), 1.0);
        assert_eq!(gaussian_hermite_expectation(1), 0.0);
        assert!((gaussian_hermite_expectation(2) + 0.5).abs() < 1e-15);
        // k=4: 24 / (16 * 2) = 0.75
        assert!((gaussian_hermite_expectation(4) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gaussian_hermite_expectation_matches_monte_carlo() {
        let samples = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
        let draws: Vec<f64> = (0..samples).map(|_| StandardNormal.sample(&mut rng)).collect();
        for k in 0..=10u32 {
            let mut m = crate::numeric::Moments::default();
            for &w in &draws {
                let h = hermite_sequence(k, w)[k as usize];
                m.push(std::f64::consts::SQRT_2 * (-w * w / 2.0).exp() * h);
            }
            let exact = gaussian_hermite_expectation(k);
            assert!(
                (m.mean() - exact).abs() <= 4.0 * m.std_error(),
                "k={k}: mc {} ± {} vs {exact}",
                m.mean(),
                m.std_error()
            );
        }
    }

    #[test]
    fn double_factorial_examples() {
        assert_eq!(double_factorial(-1).unwrap(), 1);
        assert_eq!(double_factorial(0).unwrap(), 1);
        assert_eq!(double_factorial(5).unwrap(), 5 * 3);
        assert_eq!(double_factorial(6).unwrap(), 6 * 4 * 2);
        assert!(double_factorial(-2).is_err());
        assert!(matches!(double_factorial(200), Err(Error::Overflow(_))));
    }

    /// All of {0..=k}^d filtered by order, sorted. Oracle for the enumeration.
    fn brute_force_indices(d: usize, k: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let total = (k as usize + 1).pow(d as u32);
        for code in 0..total {
            let mut c = code;
            let mut e = vec![0u32; d];
            for slot in e.iter_mut().rev() {
                *slot = (c % (k as usize + 1)) as u32;
                c /= k as usize + 1;
            }
            let m = MultiIndex::new(e);
            if m.order() == u64::from(k) {
                out.push(m);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn multi_index_examples() {
        let one = multi_indices(1, 4).unwrap();
        assert_eq!(one, vec![MultiIndex::new(vec![4])]);
        let two = multi_indices(2, 2).unwrap();
        let expected: Vec<MultiIndex> =
            [[0, 2], [1, 1], [2, 0]].iter().map(|e| MultiIndex::new(e.to_vec())).collect();
        assert_eq!(two, expected);
        assert_eq!(multi_indices(3, 0).unwrap(), vec![MultiIndex::new(vec![0, 0, 0])]);
        assert!(multi_indices(0, 1).is_err());
    }

    #[test]
    fn multi_indices_match_brute_force() {
        for d in 1..=4 {
            for k in 0..=5 {
                let got = multi_indices(d, k).unwrap();
                assert_eq!(got, brute_force_indices(d, k), "d={d} k={k}");
                let count = binomial(u64::from(k) + d as u64 - 1, d as u64 - 1).unwrap();
                assert_eq!(got.len() as u128, count);
            }
        }
    }

    #[test]
    fn log_multinomial_examples() {
        let l = log_multinomial(2, &MultiIndex::new(vec![1, 1])).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_multinomial(3, &MultiIndex::new(vec![3, 0])).unwrap(), 0.0);
        let l = log_multinomial(4, &MultiIndex::new(vec![2, 2])).unwrap();
        assert!((l - 6f64.ln()).abs() < 1e-15);
        assert!(matches!(
            log_multinomial(3, &MultiIndex::new(vec![1, 1])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn log_multinomial_large_k_uses_lgamma() {
        // 40!/(20!20!) = binom(40, 20)
        let exact = (binomial(40, 20).unwrap() as f64).ln();
        let got = log_multinomial(40, &MultiIndex::new(vec![20, 20])).unwrap();
        assert!((got - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn multinomial_theorem_holds() {
        for d in 1..=3usize {
            let u: Vec<f64> = (1..=d).map(|i| i as f64).collect();
            for k in 0..=8u32 {
                let lhs: f64 = multi_indices(d, k)
                    .unwrap()
                    .iter()
                    .map(|a| {
                        let w = log_multinomial(k, a).unwrap().exp();
                        w * a.entries().iter().zip(&u).map(|(&e, &ul)| powi0(ul, e)).product::<f64>()
                    })
                    .sum();
                let rhs = u.iter().sum::<f64>().powi(k as i32);
                assert!((lhs - rhs).abs() <= 1e-9 * rhs, "d={d} k={k}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn log_factorial_is_continuous_at_switch() {
        let below = log_factorial(EXACT_FACTORIAL_MAX);
        let above = log_factorial(EXACT_FACTORIAL_MAX + 1);
        let step = above - below;
        assert!((step - ((EXACT_FACTORIAL_MAX + 1) as f64).ln()).abs() < 1e-10);
        assert!(log_factorial(170).is_finite() && log_factorial(1000).is_finite());
    }

    proptest! {
        #[test]
        fn hermite_parity(k in 0u32..30, x in -4.0f64..4.0) {
            let a = hermite_eval(k, -x).unwrap();
            let b = hermite_eval(k, x).unwrap();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert!((a - sign * b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn multi_index_order_is_sum(d in 1usize..5, k in 0u32..7) {
            for a in multi_indices(d, k).unwrap() {
                prop_assert_eq!(a.order(), u64::from(k));
                prop_assert_eq!(a.dim(), d);
            }
        }
    }
}
