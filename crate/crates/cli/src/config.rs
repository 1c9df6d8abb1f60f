//! The JSON run configuration shared by every verb.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use robust_bo::bench::{BenchSpec, Method};
use robust_bo::{BoConfig, Bounds, Direction, KernelFamily, Schedule};

pub const SCHEMA_VERSION: &str = "robust-bo/1";

/// Every field except `version` may be omitted and takes the default below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Must equal [`SCHEMA_VERSION`].
    pub version: String,
    pub dimension: usize,
    /// Search box; the unit cube when omitted.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub budget: usize,
    pub n_init: usize,
    pub seed: u64,
    pub robust: bool,
    pub schedule: Schedule,
    pub direction: Direction,
    /// Surrogate kernel for `run` and `suggest`.
    pub model_kernel: KernelFamily,
    pub dof: f64,
    pub learn_dof: bool,
    pub exact_restarts: usize,
    pub laplace_restarts: usize,
    pub candidates: Option<usize>,
    pub refinements: usize,

    /// Benchmark: kernel the objectives are drawn from.
    pub kernel: KernelFamily,
    pub lengthscale: f64,
    pub alpha: f64,
    pub outlier_rate: f64,
    pub trials: usize,
    pub methods: Vec<Method>,

    /// `run`: shell command evaluated once per point.
    pub command: Option<String>,
    /// `run`: extra attempts after a failed evaluation.
    pub retries: usize,
    /// `run`: value recorded for failed evaluations; worst + one sample
    /// standard deviation of the successful values when omitted.
    pub penalty: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = BenchSpec::default();
        let bo = BoConfig::<f64>::new(Bounds::unit(1), bench.budget);
        Self {
            version: String::new(),
            dimension: bench.dimension,
            lower: None,
            upper: None,
            budget: bench.budget,
            n_init: bench.n_init,
            seed: bench.seed,
            robust: true,
            schedule: bench.schedule,
            direction: bo.direction,
            model_kernel: bo.kernel,
            dof: bench.dof,
            learn_dof: bo.learn_dof,
            exact_restarts: bo.exact_restarts,
            laplace_restarts: bo.laplace_restarts,
            candidates: bo.candidates,
            refinements: bo.refinements,
            kernel: bench.kernel,
            lengthscale: bench.lengthscale,
            alpha: bench.alpha,
            outlier_rate: bench.outlier_rate,
            trials: bench.trials,
            methods: bench.methods,
            command: None,
            retries: 1,
            penalty: None,
        }
    }
}

impl RunConfig {
    /// A default configuration carrying the current schema version.
    pub fn current() -> Self {
        Self { version: SCHEMA_VERSION.to_string(), ..Self::default() }
    }

    /// Parses and checks the version. Errors name the offending field.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("field `{path}`: {}", e.into_inner())
        })?;
        if config.version != SCHEMA_VERSION {
            bail!("field `version`: expected \"{SCHEMA_VERSION}\", got {:?}", config.version);
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn bounds(&self) -> anyhow::Result<Bounds<f64>> {
        match (&self.lower, &self.upper) {
            (None, None) => Ok(Bounds::unit(self.dimension)),
            (Some(lo), Some(hi)) => {
                if lo.len() != self.dimension || hi.len() != self.dimension {
                    bail!("field `lower`/`upper`: expected {} entries each", self.dimension);
                }
                Ok(Bounds::new(lo.clone(), hi.clone())?)
            }
            _ => bail!("field `lower`/`upper`: give both or neither"),
        }
    }

    pub fn bo_config(&self) -> anyhow::Result<BoConfig<f64>> {
        let config = BoConfig {
            n_init: self.n_init,
            schedule: self.schedule,
            robust_enabled: self.robust,
            direction: self.direction,
            kernel: self.model_kernel,
            dof: self.dof,
            learn_dof: self.learn_dof,
            exact_restarts: self.exact_restarts,
            laplace_restarts: self.laplace_restarts,
            candidates: self.candidates,
            refinements: self.refinements,
            seed: self.seed,
            ..BoConfig::new(self.bounds()?, self.budget)
        };
        config.validate()?;
        Ok(config)
    }

    /// Benchmark settings. With `robust` off the robust variant is dropped.
    pub fn bench_spec(&self) -> anyhow::Result<BenchSpec> {
        let methods = self.methods.iter().copied().filter(|m| self.robust || *m != Method::Robust).collect();
        let spec = BenchSpec {
            dimension: self.dimension,
            kernel: self.kernel,
            lengthscale: self.lengthscale,
            alpha: self.alpha,
            outlier_rate: self.outlier_rate,
            trials: self.trials,
            budget: self.budget,
            n_init: self.n_init,
            methods,
            seed: self.seed,
            schedule: self.schedule,
            dof: self.dof,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub robust: Option<bool>,
    pub quantile: Option<f64>,
    pub warmup: Option<f64>,
    pub period: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.robust {
            config.robust = v;
        }
        if let Some(v) = self.quantile {
            config.schedule.quantile = v;
        }
        if let Some(v) = self.warmup {
            config.schedule.warmup_fraction = v;
        }
        if let Some(v) = self.period {
            config.schedule.period = v;
        }
    }
}
