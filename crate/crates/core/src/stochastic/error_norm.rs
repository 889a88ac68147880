use serde::{Deserialize, Serialize};

use super::paths::PathGrid;
use super::{par_map, Z95};
use crate::analytic::{IterateEvaluator, LinearExampleSpec};
use crate::numeric::Moments;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub k: u32,
    /// `ê_k`, the square root of the path average.
    pub estimate: f64,
    /// 95% half-width, propagated through the square root by the delta method.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub entries: Vec<ErrorEntry>,
    pub paths: u64,
    pub steps: usize,
    pub seed: u64,
}

impl ErrorSeries {
    pub fn get(&self, k: u32) -> Option<&ErrorEntry> {
        self.entries.iter().find(|e| e.k == k)
    }
}

/// Estimates `e_k` for the linear example for every `k` in `ks` from one set
/// of `paths` Brownian paths on an `steps`-cell grid over `[0, 1]`.
///
/// The supremum is replaced by the maximum over grid points and the `Z` gap
/// is integrated by the trapezoid rule, except for the last cell which uses
/// its left endpoint only.
pub fn estimate_error_series(
    spec: &LinearExampleSpec,
    ks: &[u32],
    steps: usize,
    paths: u64,
    seed: u64,
) -> Result<ErrorSeries> {
    if paths < 2 {
        return Err(Error::invalid("paths", format!("need at least 2 paths for a half-width, got {paths}")));
    }
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0) {
        return Err(Error::invalid("k", format!("iteration index must be at least 1, got {k}")));
    }
    let d = spec.dim();
    let solution = IterateEvaluator::solution(spec);
    let iterates: Vec<IterateEvaluator> = ks.iter().map(|&k| IterateEvaluator::finite(spec, k)).collect();

    let per_path: Vec<Vec<f64>> = par_map(paths as usize, |p| {
        let path = PathGrid::generate(1.0, d, steps, seed, p as u64).expect("validated");
        let pos = path.positions();
        let dt = path.dt();
        let mut sup = vec![0.0f64; ks.len()];
        let mut prev_z = vec![0.0f64; ks.len()];
        let mut integral = vec![0.0f64; ks.len()];
        let mut g_inf = vec![0.0; d];
        let mut g_k = vec![0.0; d];
        for i in 0..=steps {
            let t = path.time(i);
            let x = &pos[i * d..(i + 1) * d];
            let v_inf = solution.value_unchecked(t, x);
            if i < steps {
                solution.gradient_into(t, x, &mut g_inf);
            }
            for (j, it) in iterates.iter().enumerate() {
                let gap = it.value_unchecked(t, x) - v_inf;
                sup[j] = sup[j].max(gap * gap);
                if i < steps {
                    it.gradient_into(t, x, &mut g_k);
                    let z: f64 = g_k.iter().zip(&g_inf).map(|(a, b)| (a - b).powi(2)).sum();
                    if i > 0 {
                        integral[j] += 0.5 * dt * (prev_z[j] + z);
                    }
                    if i == steps - 1 {
                        integral[j] += dt * z;
                    }
                    prev_z[j] = z;
                }
            }
        }
        sup.iter().zip(&integral).map(|(s, z)| s + z).collect()
    });

    let entries = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let mut m = Moments::default();
            for row in &per_path {
                m.push(row[j]);
            }
            let estimate = m.mean().max(0.0).sqrt();
            let half_width = if estimate > 0.0 { Z95 * m.std_error() / (2.0 * estimate) } else { 0.0 };
            ErrorEntry { k, estimate, half_width }
        })
        .collect();
    Ok(ErrorSeries { entries, paths, steps, seed })
}

/// Single-`k` convenience wrapper around [`estimate_error_series`].
pub fn estimate_e_k(spec: &LinearExampleSpec, k: u32, steps: usize, paths: u64, seed: u64) -> Result<ErrorEntry> {
    Ok(estimate_error_series(spec, &[k], steps, paths, seed)?.entries[0])
}
