//! Outlier classification from a fitted Student-t GP and the schedule that
//! decides when classification runs.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid, Result};
use crate::gp_laplace::LaplaceGp;
use crate::scalar::Scalar;
use crate::special::{student_t_cdf, student_t_sf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    /// Fraction of the budget to wait before the first classification.
    pub warmup_fraction: f64,
    /// Classify once every `period` iterations after warmup.
    pub period: usize,
    /// Tail probability below which a point is an outlier.
    pub quantile: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { warmup_fraction: 0.25, period: 5, quantile: 0.05 }
    }
}

impl Schedule {
    pub fn new(warmup_fraction: f64, period: usize, quantile: f64) -> Result<Self> {
        let s = Self { warmup_fraction, period, quantile };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(invalid(format!("warmup fraction must lie in [0, 1], got {}", self.warmup_fraction)));
        }
        if self.period == 0 {
            return Err(invalid("detection period must be positive"));
        }
        if !(self.quantile > 0.0 && self.quantile <= 0.5) {
            return Err(invalid(format!("quantile must lie in (0, 0.5], got {}", self.quantile)));
        }
        Ok(())
    }

    /// First iteration at which detection may run.
    pub fn warmup_iterations(&self, budget: usize) -> usize {
        (self.warmup_fraction * budget as f64).ceil() as usize
    }
}

/// True iff `iteration ≥ ⌈warmup·budget⌉` and the offset from there is a
/// multiple of the period.
pub fn should_run_detection(iteration: usize, budget: usize, schedule: &Schedule) -> bool {
    let start = schedule.warmup_iterations(budget);
    iteration >= start && (iteration - start).is_multiple_of(schedule.period)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Unusually large values are outliers (false negatives when minimizing).
    #[default]
    HighIsOutlier,
    LowIsOutlier,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierFlags<T> {
    pub flags: Vec<bool>,
    /// Tail probability of each standardized residual.
    pub scores: Vec<T>,
    pub warning: Option<String>,
}

impl<T> OutlierFlags<T> {
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Tail probability of a standardized residual under Student-t(ν).
pub fn tail_score<T: Scalar>(t: T, dof: T, direction: Direction) -> T {
    match direction {
        Direction::HighIsOutlier => student_t_sf(t, dof),
        Direction::LowIsOutlier => student_t_cdf(t, dof),
        Direction::Both => (T::c(2.0) * student_t_sf(t.abs(), dof)).min(T::one()),
    }
}

/// Reclassifies every observation from scratch.
///
/// The residual `yᵢ − f̂ᵢ` is standardized by `√(σ² + Σᵢᵢ)`, where `Σᵢᵢ` is
/// the Laplace posterior variance of the latent value at that point.
pub fn classify_outliers<T: Scalar>(
    dataset: &Dataset<T>,
    model: &LaplaceGp<T>,
    quantile: T,
    direction: Direction,
) -> Result<OutlierFlags<T>> {
    let y = dataset.values();
    if y.len() != model.targets().len() {
        return Err(invalid(format!(
            "model was fitted on {} observations but the dataset has {}",
            model.targets().len(),
            y.len()
        )));
    }
    if !(quantile > T::zero() && quantile <= T::c(0.5)) {
        return Err(invalid(format!("quantile must lie in (0, 0.5], got {quantile}")));
    }
    let f_hat = model.f_hat();
    let post_var = model.posterior_variances();
    let s2 = model.lik().scale() * model.lik().scale();
    let dof = model.lik().dof();
    let scores: Vec<T> = y
        .iter()
        .zip(&f_hat)
        .zip(&post_var)
        .map(|((&yi, &fi), &vi)| tail_score((yi - fi) / (s2 + vi).sqrt(), dof, direction))
        .collect();
    let flags = scores.iter().map(|&s| s < quantile).collect();
    let warning = (!model.converged())
        .then(|| "Student-t model did not converge; classification may be unreliable".to_string());
    Ok(OutlierFlags { flags, scores, warning })
}

/// The non-flagged observations, in their original order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSubset<T> {
    pub indices: Vec<usize>,
    pub points: Vec<Vec<T>>,
    pub values: Vec<T>,
    /// Set when every observation was flagged and the full dataset is returned instead.
    pub warning: Option<String>,
}

pub fn active_subset<T: Scalar>(dataset: &Dataset<T>, flags: &[bool]) -> Result<ActiveSubset<T>> {
    if flags.len() != dataset.len() {
        return Err(invalid(format!("{} flags for {} observations", flags.len(), dataset.len())));
    }
    let mut indices: Vec<usize> = (0..flags.len()).filter(|&i| !flags[i]).collect();
    let mut warning = None;
    if indices.is_empty() && !flags.is_empty() {
        indices = (0..flags.len()).collect();
        warning = Some("every observation was flagged; using the full dataset".to_string());
    }
    let obs = dataset.observations();
    Ok(ActiveSubset {
        points: indices.iter().map(|&i| obs[i].x.clone()).collect(),
        values: indices.iter().map(|&i| obs[i].y).collect(),
        indices,
        warning,
    })
}
