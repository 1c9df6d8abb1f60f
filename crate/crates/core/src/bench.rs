//! Synthetic benchmark harness: random objectives drawn from GP priors,
//! uniform outlier injection, coupled method variants, and aggregation.

use std::collections::{BTreeMap, HashMap};
use std::sync::mpsc;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bo_loop::{BoConfig, BoState};
use crate::design::Bounds;
use crate::error::{invalid, numerical, Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::linalg::dot;
use crate::rng::{self, derive_seed, Rng};
use crate::robust::Schedule;

const TAG_TRIAL: u64 = 101;
const TAG_DRAW: u64 = 102;
const TAG_INJECT: u64 = 103;
const TAG_BOOTSTRAP: u64 = 104;

/// Nugget added to the prior variance when conditioning a draw.
const DRAW_NUGGET: f64 = 1e-10;

/// A sample path of a zero-mean GP, realized lazily by sequential exact
/// conditioning on every previously queried point.
#[derive(Debug, Clone)]
pub struct GpFunctionDraw {
    spec: KernelSpec<f64>,
    rng: Rng,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// Rows of the lower Cholesky factor of the cached covariance.
    chol_rows: Vec<Vec<f64>>,
    /// `L⁻¹ values`.
    whitened: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
}

impl GpFunctionDraw {
    /// Requires unit signal variance so that draws share a common scale.
    pub fn new(spec: KernelSpec<f64>, seed: u64) -> Result<Self> {
        if spec.signal_variance() != 1.0 {
            return Err(invalid("benchmark draws require unit signal variance"));
        }
        Ok(Self {
            spec,
            rng: rng::stream(seed, &[TAG_DRAW]),
            points: Vec::new(),
            values: Vec::new(),
            chol_rows: Vec::new(),
            whitened: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn spec(&self) -> &KernelSpec<f64> {
        &self.spec
    }

    /// Number of distinct points realized so far.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cached(&self, x: &[f64]) -> Option<f64> {
        self.index.get(&key(x)).map(|&i| self.values[i])
    }

    pub fn eval(&mut self, x: &[f64]) -> Result<f64> {
        if x.len() != self.spec.dim() {
            return Err(invalid(format!("query has dimension {}, draw expects {}", x.len(), self.spec.dim())));
        }
        if let Some(v) = self.cached(x) {
            return Ok(v);
        }
        let k: Vec<f64> = self.points.iter().map(|p| self.spec.value_unchecked(x, p)).collect();
        let mut l = k;
        for i in 0..l.len() {
            let row = &self.chol_rows[i];
            let s = l[i] - dot(&row[..i], &l[..i]);
            l[i] = s / row[i];
        }
        let mean = dot(&l, &self.whitened);
        let mut var = 1.0 + DRAW_NUGGET - dot(&l, &l);
        if !var.is_finite() || var < -1e-6 {
            return Err(numerical(format!("conditional variance {var} at a new query point")));
        }
        var = var.max(DRAW_NUGGET);
        let diag = var.sqrt();
        let u: f64 = self.rng.sample(StandardNormal);
        let value = mean + diag * u;
        l.push(diag);
        self.chol_rows.push(l);
        self.whitened.push(u);
        self.index.insert(key(x), self.points.len());
        self.points.push(x.to_vec());
        self.values.push(value);
        Ok(value)
    }
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Replaces `y_true` by `u ~ U(1, 2)` with probability `rate`. Two uniforms
/// are consumed per call whatever the outcome.
pub fn inject_outliers(y_true: f64, rate: f64, rng: &mut Rng) -> (f64, bool) {
    let coin: f64 = rng.random();
    let u: f64 = 1.0 + rng.random::<f64>();
    if coin < rate { (u, true) } else { (y_true, false) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain GP optimization on corrupted observations.
    Vanilla,
    /// Student-t outlier detection with clean-GP refits.
    Robust,
    /// Plain GP optimization without any injected outliers.
    Clean,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Robust => "robust",
            Method::Clean => "clean",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Method::Vanilla),
            "robust" => Ok(Method::Robust),
            "clean" => Ok(Method::Clean),
            other => Err(invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSpec {
    pub dimension: usize,
    /// Kernel the objectives are drawn from.
    pub kernel: KernelFamily,
    pub lengthscale: f64,
    /// Rational quadratic shape.
    pub alpha: f64,
    pub outlier_rate: f64,
    pub trials: usize,
    pub budget: usize,
    pub n_init: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub schedule: Schedule,
    pub dof: f64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            dimension: 8,
            kernel: KernelFamily::Matern52,
            lengthscale: 0.1,
            alpha: 2.0,
            outlier_rate: 0.2,
            trials: 20,
            budget: 60,
            n_init: 5,
            methods: vec![Method::Vanilla, Method::Robust, Method::Clean],
            seed: 0,
            schedule: Schedule::default(),
            dof: 4.0,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(invalid(format!("outlier_rate must lie in [0, 1], got {}", self.outlier_rate)));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be positive"));
        }
        if self.methods.is_empty() {
            return Err(invalid("at least one method is required"));
        }
        self.generator()?;
        for m in &self.methods {
            self.bo_config(*m, 0).validate()?;
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<KernelSpec<f64>> {
        KernelSpec::new(self.kernel, vec![self.lengthscale; self.dimension], 1.0, self.alpha)
    }

    /// Optimizer settings for one method; the modeling kernel is always Matérn-5/2.
    pub fn bo_config(&self, method: Method, trial_seed: u64) -> BoConfig<f64> {
        BoConfig {
            n_init: self.n_init,
            schedule: self.schedule,
            robust_enabled: method == Method::Robust,
            dof: self.dof,
            seed: trial_seed,
            ..BoConfig::new(Bounds::unit(self.dimension), self.budget)
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, &[TAG_TRIAL, trial as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: Method,
    pub iter: usize,
    pub x: Vec<f64>,
    pub y_true: f64,
    pub y_obs: f64,
    pub injected: bool,
    /// Flag state at the end of the run.
    pub flagged: bool,
    /// Best true value among observations active at this iteration.
    pub incumbent_true: f64,
    pub ms: f64,
}

/// Runs every method on one trial's shared function draw. Returns the
/// records and the draw, whose cache holds every point any method queried.
pub fn run_trial_with_draw(spec: &BenchSpec, trial: usize) -> Result<(Vec<TrialRecord>, GpFunctionDraw)> {
    let trial_seed = spec.trial_seed(trial);
    let mut draw = GpFunctionDraw::new(spec.generator()?, derive_seed(trial_seed, &[TAG_DRAW]))?;
    let mut records = Vec::with_capacity(spec.methods.len() * spec.budget);
    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();
    for method in methods {
        let config = spec.bo_config(method, trial_seed);
        let mut state = BoState::new(&config)?;
        let mut inject_rng = rng::stream(trial_seed, &[TAG_INJECT]);
        let mut y_true_all = Vec::with_capacity(spec.budget);
        let start = records.len();
        for iter in 0..spec.budget {
            let clock = Instant::now();
            let proposal = state.suggest(&config)?;
            let y_true = draw.eval(&proposal.point)?;
            let (y_obs, injected) = match inject_outliers(y_true, spec.outlier_rate, &mut inject_rng) {
                _ if method == Method::Clean => (y_true, false),
                outcome => outcome,
            };
            state.tell(proposal.point.clone(), y_obs)?;
            y_true_all.push(y_true);
            let incumbent_true = state
                .flags()
                .iter()
                .zip(&y_true_all)
                .filter(|(f, _)| !**f)
                .map(|(_, &v)| v)
                .fold(f64::INFINITY, f64::min);
            records.push(TrialRecord {
                trial,
                method,
                iter,
                x: proposal.point,
                y_true,
                y_obs,
                injected,
                flagged: false,
                incumbent_true,
                ms: clock.elapsed().as_secs_f64() * 1e3,
            });
        }
        for (r, f) in records[start..].iter_mut().zip(state.flags()) {
            r.flagged = f;
        }
    }
    Ok((records, draw))
}

pub fn run_trial(spec: &BenchSpec, trial: usize) -> Result<Vec<TrialRecord>> {
    run_trial_with_draw(spec, trial).map(|(r, _)| r)
}

/// Runs all trials on up to `parallelism` threads and hands each trial's
/// outcome to `sink` in trial order.
pub fn run_trials_streaming<F>(spec: &BenchSpec, parallelism: usize, mut sink: F) -> Result<()>
where
    F: FnMut(usize, Result<Vec<TrialRecord>>),
{
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let (tx, rx) = mpsc::channel();
    let trials = spec.trials;
    std::thread::scope(|scope| {
        scope.spawn(|| {
            pool.scope(|s| {
                for trial in 0..trials {
                    let tx = tx.clone();
                    s.spawn(move |_| {
                        let _ = tx.send((trial, run_trial(spec, trial)));
                    });
                }
            });
            drop(tx);
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (trial, outcome) in rx {
            pending.insert(trial, outcome);
            while let Some(outcome) = pending.remove(&next) {
                sink(next, outcome);
                next += 1;
            }
        }
    });
    Ok(())
}

#[derive(Debug, Default)]
pub struct TrialsOutcome {
    pub records: Vec<TrialRecord>,
    pub failures: Vec<(usize, Error)>,
}

/// Runs every trial; failed trials are reported and skipped. Records are
/// ordered by trial, method and iteration.
pub fn run_trials(spec: &BenchSpec, parallelism: usize) -> Result<TrialsOutcome> {
    let mut out = TrialsOutcome::default();
    run_trials_streaming(spec, parallelism, |trial, r| match r {
        Ok(mut recs) => out.records.append(&mut recs),
        Err(e) => out.failures.push((trial, e)),
    })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub iter: usize,
    pub mean: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 0.5)
}

/// Per method and iteration: mean and median of `incumbent_true` across
/// trials, with a seeded percentile-bootstrap 95% band for the mean.
pub fn aggregate(records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(Method, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method, r.iter)).or_default().insert(r.trial, r.incumbent_true);
    }
    let trials: std::collections::BTreeSet<usize> = records.iter().map(|r| r.trial).collect();
    if trials.len() < 2 {
        return Err(invalid(format!("aggregation needs records from at least 2 trials, got {}", trials.len())));
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((method, iter), by_trial) in groups {
        let values: Vec<f64> = by_trial.into_values().collect();
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut rng = rng::stream(0, &[TAG_BOOTSTRAP, method as u64, iter as u64]);
        let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
            .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
            .collect();
        boot.sort_by(f64::total_cmp);
        rows.push(SummaryRow {
            method,
            iter,
            mean,
            median: median_of(&values),
            lo95: percentile(&boot, 0.025),
            hi95: percentile(&boot, 0.975),
        });
    }
    Ok(rows)
}
