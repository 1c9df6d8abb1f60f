//! Expected improvement for minimization and its maximization over a box.

use crate::design::{latin_hypercube, Bounds};
use crate::error::{invalid, Result};
use crate::gp_exact::GaussianGp;
use crate::optim::{minimize_nelder_mead_box, NelderMeadOptions};
use crate::rng;
use crate::scalar::Scalar;
use crate::special::{norm_cdf, norm_pdf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionEval<T> {
    pub mean: T,
    pub stdev: T,
    pub z: T,
    pub ei: T,
}

/// `EI = (y* − μ)Φ(z) + σφ(z)` with `z = (y* − μ)/σ`; `max(y* − μ, 0)` when `σ = 0`.
pub fn expected_improvement<T: Scalar>(mean: T, stdev: T, incumbent: T) -> AcquisitionEval<T> {
    let gain = incumbent - mean;
    if !(stdev > T::zero()) {
        let z = if gain > T::zero() {
            T::infinity()
        } else if gain < T::zero() {
            T::neg_infinity()
        } else {
            T::zero()
        };
        return AcquisitionEval { mean, stdev: T::zero(), z, ei: gain.max(T::zero()) };
    }
    let z = gain / stdev;
    let ei = (gain * norm_cdf(z) + stdev * norm_pdf(z)).max(T::zero());
    AcquisitionEval { mean, stdev, z, ei }
}

pub fn ei_at<T: Scalar>(model: &GaussianGp<T>, x: &[T], incumbent: T) -> Result<AcquisitionEval<T>> {
    let p = model.predict(x)?;
    Ok(expected_improvement(p.mean, p.stdev(), incumbent))
}

#[derive(Debug, Clone, Copy)]
pub struct AcquisitionOptions {
    /// Raw candidates; `None` means `500·d` capped at 5000.
    pub candidates: Option<usize>,
    pub refinements: usize,
    pub seed: u64,
    pub polish_evals: usize,
}

impl Default for AcquisitionOptions {
    fn default() -> Self {
        Self { candidates: None, refinements: 5, seed: 0, polish_evals: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion<T> {
    pub point: Vec<T>,
    pub eval: AcquisitionEval<T>,
}

/// Scores a stratified candidate set, polishes the best few with a bounded
/// simplex search, and returns the highest-EI point. Ties go to the lowest
/// candidate index.
pub fn maximize_acquisition<T: Scalar>(
    model: &GaussianGp<T>,
    bounds: &Bounds<T>,
    incumbent: T,
    opts: &AcquisitionOptions,
) -> Result<Suggestion<T>> {
    let d = bounds.dim();
    if d != model.dim() {
        return Err(invalid(format!("bounds have dimension {d} but the model has {}", model.dim())));
    }
    let count = opts.candidates.unwrap_or_else(|| (500 * d).min(5000)).max(1);
    let mut rng = rng::stream(opts.seed, &[rng::TAG_ACQ]);
    let candidates = latin_hypercube(count, bounds, &mut rng);
    let mut scored: Vec<(usize, AcquisitionEval<T>)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| ei_at(model, c, incumbent).map(|e| (i, e)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.ei.partial_cmp(&a.1.ei).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));

    let (first, first_eval) = scored[0];
    let mut best = Suggestion { point: candidates[first].clone(), eval: first_eval };
    let nm = NelderMeadOptions { max_evals: opts.polish_evals, initial_step: 0.05, ftol: 1e-12, xtol: 1e-10 };
    for &(idx, _) in scored.iter().take(opts.refinements) {
        let neg_ei = |x: &[T]| ei_at(model, x, incumbent).map_or(T::infinity(), |e| -e.ei);
        let m = minimize_nelder_mead_box(neg_ei, &candidates[idx], bounds.lower(), bounds.upper(), nm);
        let mut x = m.x;
        bounds.clamp(&mut x);
        let eval = ei_at(model, &x, incumbent)?;
        if eval.ei > best.eval.ei {
            best = Suggestion { point: x, eval };
        }
    }
    Ok(best)
}
