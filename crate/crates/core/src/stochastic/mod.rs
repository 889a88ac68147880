//! Monte-Carlo machinery: Brownian paths, the error norm `e_k` for the
//! linear example, nested Picard estimation for generic drivers and
//! statistical checks of the a priori estimates.
//!
//! Every estimator is a deterministic function of its seed and configuration.
//! Work is split into per-sample RNG substreams, results are collected in
//! index order and reduced sequentially, so the thread count never changes a
//! single bit of the output.

mod apriori;
mod error_norm;
mod nested;
mod paths;
mod rng;

pub use apriori::{apriori_check, apriori_sweep, AprioriReport, AprioriSetup, AprioriVariant};
pub use error_norm::{estimate_e_k, estimate_error_series, ErrorEntry, ErrorSeries};
pub use nested::{
    check_lipschitz, nested_cost, nested_picard, Budget, Driver, LinearYDriver, LinearZDriver, MarkovianBsde,
    NestedEstimate, ZeroDriver,
};
pub use paths::{simulate_paths, PathGrid};
pub use rng::{substream, Domain};

/// Maps `f` over `0..n` in parallel when the `parallel` feature is on.
/// Output order always follows the index.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
