//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment line, lists are
//! comma-separated. Keys and units:
//!
//! | key | unit / type | meaning |
//! |---|---|---|
//! | `experiment` | name | `series`, `phase-transition`, `dimension-sweep`, `apriori`, `picard-mc` |
//! | `d` | integer | dimension of the linear example (ignored when `b` is set) |
//! | `b` | list of reals | explicit drift vector; overrides `d` and `b_norm_sq` |
//! | `b_norm_sq` | real | `‖b‖²` of an isotropic drift |
//! | `horizon` | time | `T` of the ODE series and of the linear-y driver |
//! | `k_min`, `k_max` | integers | iteration range |
//! | `fit_k_min` | integer | smallest `k` used by rate fits |
//! | `eps` | real in (0,1) | sandwich parameter |
//! | `paths` | count | Brownian paths per estimate |
//! | `steps` | count | grid cells on `[0, T]` |
//! | `seed` | u64 | master seed |
//! | `budget` | count | nested-MC samples per recursion level |
//! | `budget_ceiling` | evaluations | largest admissible MC cost |
//! | `n_max` | integer | deepest nested Picard level |
//! | `repetitions` | count | independent nested-MC runs (seeds `seed`, `seed+1`, …) |
//! | `driver` | name | `linear-z`, `linear-y` or `zero` |
//! | `rate` | 1/time | `L` of the linear-y driver `f = L y` |
//! | `apriori_ks` | list of integers | iterates used to build the a priori process |
//! | `lambdas` | list | `λ` values; `k`, `2k`, `0.5k` scale with the iterate |
//! | `alphas` | list of reals | Gamma-weight exponents for variant iii |
//! | `variants` | list | subset of `i`, `ii`, `iii` |
//! | `s` | time | start time for variants i and ii |
//! | `dims` | list of integers | Brownian dimensions `m` of the sweep |
//! | `growth_exponent` | real | `α` in `L_z,m = m^α` |
//! | `sweep_ks` | list of integers | iterations tabulated by the sweep |
//! | `out` | path | output directory |
//! | `threads` | count | worker threads, 0 for all cores |

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use picard_core::stochastic::AprioriVariant;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 271_828;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Series,
    PhaseTransition,
    DimensionSweep,
    Apriori,
    PicardMc,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Series,
        Experiment::PhaseTransition,
        Experiment::DimensionSweep,
        Experiment::Apriori,
        Experiment::PicardMc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Series => "series",
            Experiment::PhaseTransition => "phase-transition",
            Experiment::DimensionSweep => "dimension-sweep",
            Experiment::Apriori => "apriori",
            Experiment::PicardMc => "picard-mc",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| format!("unknown experiment {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverKind {
    LinearZ,
    LinearY,
    Zero,
}

impl DriverKind {
    pub fn name(&self) -> &'static str {
        match self {
            DriverKind::LinearZ => "linear-z",
            DriverKind::LinearY => "linear-y",
            DriverKind::Zero => "zero",
        }
    }
}

impl FromStr for DriverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear-z" => Ok(DriverKind::LinearZ),
            "linear-y" => Ok(DriverKind::LinearY),
            "zero" => Ok(DriverKind::Zero),
            _ => Err(format!("expected linear-z, linear-y or zero, got {s:?}")),
        }
    }
}

/// A `λ` value, either fixed or a multiple of the iterate index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Lambda {
    Fixed(f64),
    TimesK(f64),
}

impl Lambda {
    pub fn resolve(&self, k: u32) -> f64 {
        match *self {
            Lambda::Fixed(v) => v,
            Lambda::TimesK(c) => c * f64::from(k),
        }
    }

    fn coefficient(&self) -> f64 {
        match *self {
            Lambda::Fixed(v) | Lambda::TimesK(v) => v,
        }
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Fixed(v) => write!(f, "{v}"),
            Lambda::TimesK(c) if *c == 1.0 => write!(f, "k"),
            Lambda::TimesK(c) => write!(f, "{c}k"),
        }
    }
}

impl FromStr for Lambda {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = |_| format!("expected a number or a multiple of k, got {s:?}");
        match s.strip_suffix('k') {
            Some("") => Ok(Lambda::TimesK(1.0)),
            Some(c) => c.parse().map(Lambda::TimesK).map_err(bad),
            None => s.parse().map(Lambda::Fixed).map_err(bad),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub d: usize,
    pub b: Option<Vec<f64>>,
    pub b_norm_sq: f64,
    pub horizon: f64,
    pub k_min: u32,
    pub k_max: u32,
    pub fit_k_min: u32,
    pub eps: f64,
    pub paths: u64,
    pub steps: u32,
    pub seed: u64,
    pub budget: u64,
    pub budget_ceiling: f64,
    pub n_max: u32,
    pub repetitions: u32,
    pub driver: DriverKind,
    pub rate: f64,
    pub apriori_ks: Vec<u32>,
    pub lambdas: Vec<Lambda>,
    pub alphas: Vec<f64>,
    #[serde(serialize_with = "variant_names")]
    pub variants: Vec<AprioriVariant>,
    pub s: f64,
    pub dims: Vec<usize>,
    pub growth_exponent: f64,
    pub sweep_ks: Vec<u32>,
    pub out: PathBuf,
    pub threads: u32,
}

fn variant_names<S: serde::Serializer>(v: &[AprioriVariant], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|v| v.name()))
}

impl ExperimentConfig {
    /// Defaults for `experiment`; Monte-Carlo sizes differ per experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let (paths, steps) = match experiment {
            Experiment::PhaseTransition => (2_000, 64),
            Experiment::Apriori => (10_000, 64),
            _ => (10_000, 128),
        };
        Self {
            experiment,
            d: 1,
            b: None,
            b_norm_sq: 4.0,
            horizon: 1.0,
            k_min: 1,
            k_max: 20,
            fit_k_min: 4,
            eps: 0.5,
            paths,
            steps,
            seed: DEFAULT_SEED,
            budget: 200,
            budget_ceiling: 5e9,
            n_max: 3,
            repetitions: 1,
            driver: DriverKind::LinearZ,
            rate: 1.0,
            apriori_ks: vec![1, 2, 3],
            lambdas: vec![Lambda::Fixed(0.5), Lambda::Fixed(1.0), Lambda::TimesK(1.0), Lambda::TimesK(2.0)],
            alphas: vec![1.0, 2.0],
            variants: AprioriVariant::ALL.to_vec(),
            s: 0.0,
            dims: vec![1, 2, 4, 8, 16],
            growth_exponent: 1.0,
            sweep_ks: vec![6],
            out: PathBuf::from("out"),
            threads: 0,
        }
    }

    /// Parses a config file on top of the defaults of the experiment it names
    /// (or of `fallback` when it names none).
    pub fn parse(text: &str, fallback: Experiment) -> Result<Self, CliError> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Config {
                field: "config".into(),
                reason: format!("line {}: expected `key = value`", lineno + 1),
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let experiment = match pairs.iter().rev().find(|(k, _)| k == "experiment") {
            Some((_, v)) => v.parse().map_err(|reason| CliError::config("experiment", reason))?,
            None => fallback,
        };
        let mut cfg = Self::defaults(experiment);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>().map_err(|e| CliError::config(key, format!("cannot parse {v:?}: {e}")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError>
        where
            T::Err: fmt::Display,
        {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|item| p(key, item.trim())).collect()
        }
        match key {
            "experiment" => self.experiment = p(key, value)?,
            "d" => self.d = p(key, value)?,
            "b" => self.b = if value == "none" { None } else { Some(list(key, value)?) },
            "b_norm_sq" => self.b_norm_sq = p(key, value)?,
            "horizon" => self.horizon = p(key, value)?,
            "k_min" => self.k_min = p(key, value)?,
            "k_max" => self.k_max = p(key, value)?,
            "fit_k_min" => self.fit_k_min = p(key, value)?,
            "eps" => self.eps = p(key, value)?,
            "paths" => self.paths = p(key, value)?,
            "steps" => self.steps = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "budget" => self.budget = p(key, value)?,
            "budget_ceiling" => self.budget_ceiling = p(key, value)?,
            "n_max" => self.n_max = p(key, value)?,
            "repetitions" => self.repetitions = p(key, value)?,
            "driver" => self.driver = p(key, value)?,
            "rate" => self.rate = p(key, value)?,
            "apriori_ks" => self.apriori_ks = list(key, value)?,
            "lambdas" => self.lambdas = list(key, value)?,
            "alphas" => self.alphas = list(key, value)?,
            "variants" => {
                self.variants = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse().map_err(|e: picard_core::Error| CliError::config(key, e.to_string())))
                    .collect::<Result<_, _>>()?
            }
            "s" => self.s = p(key, value)?,
            "dims" => self.dims = list(key, value)?,
            "growth_exponent" => self.growth_exponent = p(key, value)?,
            "sweep_ks" => self.sweep_ks = list(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "threads" => self.threads = p(key, value)?,
            other => return Err(CliError::config(other, "unknown configuration key")),
        }
        Ok(())
    }

    /// Every key in a fixed order; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut s = self.experiment_text();
        s.push_str(&format!("out = {}\nthreads = {}\n", self.out.display(), self.threads));
        s
    }

    /// The settings that determine the results (everything except `out` and
    /// `threads`).
    fn experiment_text(&self) -> String {
        fn join<T: fmt::Display>(v: &[T]) -> String {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
        let b = match &self.b {
            Some(b) => join(b),
            None => "none".into(),
        };
        let variants: Vec<&str> = self.variants.iter().map(|v| v.name()).collect();
        [
            ("experiment", self.experiment.name().to_string()),
            ("d", self.d.to_string()),
            ("b", b),
            ("b_norm_sq", self.b_norm_sq.to_string()),
            ("horizon", self.horizon.to_string()),
            ("k_min", self.k_min.to_string()),
            ("k_max", self.k_max.to_string()),
            ("fit_k_min", self.fit_k_min.to_string()),
            ("eps", self.eps.to_string()),
            ("paths", self.paths.to_string()),
            ("steps", self.steps.to_string()),
            ("seed", self.seed.to_string()),
            ("budget", self.budget.to_string()),
            ("budget_ceiling", self.budget_ceiling.to_string()),
            ("n_max", self.n_max.to_string()),
            ("repetitions", self.repetitions.to_string()),
            ("driver", self.driver.name().to_string()),
            ("rate", self.rate.to_string()),
            ("apriori_ks", join(&self.apriori_ks)),
            ("lambdas", join(&self.lambdas)),
            ("alphas", join(&self.alphas)),
            ("variants", variants.join(",")),
            ("s", self.s.to_string()),
            ("dims", join(&self.dims)),
            ("growth_exponent", self.growth_exponent.to_string()),
            ("sweep_ks", join(&self.sweep_ks)),
        ]
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
    }

    /// SHA-256 of the result-determining settings, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.experiment_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Drift vector of the linear example.
    pub fn drift(&self) -> Vec<f64> {
        match &self.b {
            Some(b) => b.clone(),
            None => {
                let c = (self.b_norm_sq / self.d as f64).sqrt();
                vec![c; self.d]
            }
        }
    }

    pub fn effective_b_norm_sq(&self) -> f64 {
        self.drift().iter().map(|v| v * v).sum()
    }

    /// Iterations used by rate fits.
    pub fn fit_range(&self) -> std::ops::RangeInclusive<u32> {
        self.k_min.max(self.fit_k_min)..=self.k_max
    }

    /// Checks every field against the preconditions of the operations the
    /// experiment will call. Runs before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(CliError::config(name, format!("must be finite and >= 0, got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CliError::config(name, format!("must be finite and > 0, got {v}")))
            }
        };
        if self.d == 0 {
            return Err(CliError::config("d", "must be at least 1"));
        }
        if let Some(b) = &self.b {
            if b.is_empty() || b.iter().any(|v| !v.is_finite()) {
                return Err(CliError::config("b", "must be a non-empty list of finite reals"));
            }
        }
        finite_nonneg("b_norm_sq", self.b_norm_sq)?;
        positive("horizon", self.horizon)?;
        if self.k_min == 0 {
            return Err(CliError::config("k_min", "must be at least 1"));
        }
        if self.k_max < self.k_min {
            return Err(CliError::config("k_max", format!("must be >= k_min = {}", self.k_min)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(CliError::config("eps", format!("must lie in (0, 1), got {}", self.eps)));
        }
        if self.paths < 2 {
            return Err(CliError::config("paths", "must be at least 2"));
        }
        if self.steps == 0 {
            return Err(CliError::config("steps", "must be at least 1"));
        }
        positive("budget_ceiling", self.budget_ceiling)?;
        match self.experiment {
            Experiment::Series => {}
            Experiment::PhaseTransition => {
                let n = self.fit_range().count();
                if n < 3 {
                    return Err(CliError::config(
                        "k_max",
                        format!("k range {}..={} leaves {n} points for the rate fits, need 3", self.fit_range().start(), self.k_max),
                    ));
                }
            }
            Experiment::DimensionSweep => {
                if self.dims.is_empty() || self.dims.contains(&0) {
                    return Err(CliError::config("dims", "must be a non-empty list of positive integers"));
                }
                if !self.growth_exponent.is_finite() {
                    return Err(CliError::config("growth_exponent", "must be finite"));
                }
                if self.sweep_ks.is_empty() || self.sweep_ks.contains(&0) {
                    return Err(CliError::config("sweep_ks", "must be a non-empty list of positive integers"));
                }
            }
            Experiment::Apriori => {
                if self.apriori_ks.is_empty() || self.apriori_ks.contains(&0) {
                    return Err(CliError::config("apriori_ks", "must be a non-empty list of positive integers"));
                }
                if self.lambdas.is_empty() {
                    return Err(CliError::config("lambdas", "must not be empty"));
                }
                for l in &self.lambdas {
                    positive("lambdas", l.coefficient())?;
                }
                if self.variants.is_empty() {
                    return Err(CliError::config("variants", "must not be empty"));
                }
                if self.variants.contains(&AprioriVariant::III) {
                    if self.alphas.is_empty() {
                        return Err(CliError::config("alphas", "variant iii needs at least one alpha"));
                    }
                    for &a in &self.alphas {
                        positive("alphas", a)?;
                    }
                }
                if !(0.0..1.0).contains(&self.s) {
                    return Err(CliError::config("s", format!("must lie in [0, 1), got {}", self.s)));
                }
            }
            Experiment::PicardMc => {
                if self.budget < 2 {
                    return Err(CliError::config("budget", "must be at least 2"));
                }
                if self.repetitions == 0 {
                    return Err(CliError::config("repetitions", "must be at least 1"));
                }
                if !self.rate.is_finite() {
                    return Err(CliError::config("rate", "must be finite"));
                }
            }
        }
        Ok(())
    }
}
