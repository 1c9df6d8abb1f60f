//! Sequential robust Bayesian optimization (minimization).
//!
//! Each suggestion after the initial Latin hypercube design goes through:
//! optional Student-t fit and reclassification of every observation, an
//! exact-GP fit on the non-flagged points, and expected-improvement
//! maximization against the non-flagged incumbent.
//!
//! Every random choice is drawn from a stream keyed by `(seed, iteration)`,
//! so the state is a pure function of the configuration and the observations.

use std::fmt::Display;

use crate::acquisition::{maximize_acquisition, AcquisitionOptions};
use crate::dataset::Dataset;
use crate::design::{latin_hypercube, Bounds};
use crate::error::{invalid, Error, Result};
use crate::gp_exact::{fit_exact, ExactFitOptions, GaussianGp, HyperBounds};
use crate::gp_laplace::{default_laplace_bounds, fit_laplace, LaplaceFitOptions, LaplaceGp};
use crate::kernels::KernelFamily;
use crate::rng::{self, derive_seed};
use crate::robust::{active_subset, classify_outliers, should_run_detection, Direction, Schedule};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig<T> {
    pub bounds: Bounds<T>,
    pub budget: usize,
    pub n_init: usize,
    pub schedule: Schedule,
    pub robust_enabled: bool,
    pub direction: Direction,
    pub kernel: KernelFamily,
    /// Student-t degrees of freedom (fixed unless `learn_dof`).
    pub dof: f64,
    pub learn_dof: bool,
    pub exact_restarts: usize,
    pub laplace_restarts: usize,
    pub candidates: Option<usize>,
    pub refinements: usize,
    pub seed: u64,
}

impl<T: Scalar> BoConfig<T> {
    pub fn new(bounds: Bounds<T>, budget: usize) -> Self {
        Self {
            bounds,
            budget,
            n_init: 5,
            schedule: Schedule::default(),
            robust_enabled: true,
            direction: Direction::HighIsOutlier,
            kernel: KernelFamily::Matern52,
            dof: 4.0,
            learn_dof: false,
            exact_restarts: 5,
            laplace_restarts: 3,
            candidates: None,
            refinements: 5,
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_init < 2 {
            return Err(invalid(format!("initial design needs at least 2 points, got {}", self.n_init)));
        }
        if self.budget <= self.n_init {
            return Err(invalid(format!("budget {} must exceed the initial design size {}", self.budget, self.n_init)));
        }
        if self.bounds.lower().iter().zip(self.bounds.upper()).any(|(l, u)| !(l < u)) {
            return Err(invalid("search bounds need lower < upper on every axis"));
        }
        self.schedule.validate()?;
        if self.robust_enabled && self.schedule.warmup_fraction * (self.budget as f64) < 2.0 {
            return Err(invalid("warmup_fraction·budget must be at least 2 when outlier detection is enabled"));
        }
        if !(self.dof >= 1.0) {
            return Err(invalid("degrees of freedom must be at least 1"));
        }
        Ok(())
    }
}

/// Initial design: `n` Latin hypercube points derived from the run seed.
pub fn latin_hypercube_design<T: Scalar>(n: usize, bounds: &Bounds<T>, seed: u64) -> Vec<Vec<T>> {
    latin_hypercube(n, bounds, &mut rng::stream(seed, &[rng::TAG_LHS]))
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoEvent {
    Detection { iteration: usize, flagged: usize, warning: Option<String> },
    DetectionFailed { iteration: usize, error: String },
    Fallback { iteration: usize, error: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal<T> {
    pub point: Vec<T>,
    /// Expected improvement at the point; `None` for design or fallback points.
    pub ei: Option<T>,
    pub detection_ran: bool,
}

#[derive(Debug, Clone)]
pub struct BoState<T> {
    dataset: Dataset<T>,
    design: Vec<Vec<T>>,
    exact: Option<GaussianGp<T>>,
    laplace: Option<LaplaceGp<T>>,
    detected_at: Option<usize>,
    events: Vec<BoEvent>,
}

impl<T: Scalar> BoState<T> {
    pub fn new(config: &BoConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            dataset: Dataset::new(config.bounds.clone()),
            design: latin_hypercube_design(config.n_init, &config.bounds, config.seed),
            exact: None,
            laplace: None,
            detected_at: None,
            events: Vec::new(),
        })
    }

    /// Rebuilds the state a sequential run reaches after observing
    /// `observations` in order, rerunning every detection round that run
    /// would have performed along the way.
    pub fn replay<I>(config: &BoConfig<T>, observations: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<T>, T)>,
    {
        let mut state = Self::new(config)?;
        for (x, y) in observations {
            state.maybe_detect(config);
            state.tell(x, y)?;
        }
        Ok(state)
    }

    pub fn dataset(&self) -> &Dataset<T> {
        &self.dataset
    }

    pub fn iteration(&self) -> usize {
        self.dataset.len()
    }

    pub fn flags(&self) -> Vec<bool> {
        self.dataset.flags()
    }

    pub fn events(&self) -> &[BoEvent] {
        &self.events
    }

    pub fn exact_model(&self) -> Option<&GaussianGp<T>> {
        self.exact.as_ref()
    }

    pub fn laplace_model(&self) -> Option<&LaplaceGp<T>> {
        self.laplace.as_ref()
    }

    pub fn initial_design(&self) -> &[Vec<T>] {
        &self.design
    }

    /// Best non-flagged observation.
    pub fn incumbent(&self) -> Option<(&[T], T)> {
        self.dataset.incumbent_index().map(|i| {
            let o = &self.dataset.observations()[i];
            (o.x.as_slice(), o.y)
        })
    }

    /// Runs outlier detection if the schedule fires at the current iteration.
    /// Returns whether it ran.
    fn maybe_detect(&mut self, config: &BoConfig<T>) -> bool {
        let t = self.iteration();
        if !config.robust_enabled
            || t < config.n_init.max(4)
            || !should_run_detection(t, config.budget, &config.schedule)
        {
            return false;
        }
        if self.detected_at == Some(t) {
            return true;
        }
        self.detected_at = Some(t);
        let points = self.dataset.points();
        let values = self.dataset.values();
        let opts = LaplaceFitOptions {
            family: config.kernel,
            restarts: config.laplace_restarts,
            seed: derive_seed(config.seed, &[rng::TAG_FIT_LAPLACE, t as u64]),
            dof: config.dof,
            learn_dof: config.learn_dof,
            ..LaplaceFitOptions::default()
        };
        let bounds = default_laplace_bounds(&config.bounds.widths(), &values);
        let outcome = fit_laplace(&points, &values, &bounds, &opts).and_then(|model| {
            let flags = classify_outliers(&self.dataset, &model, T::c(config.schedule.quantile), config.direction)?;
            Ok((model, flags))
        });
        match outcome {
            Ok((model, flags)) => {
                self.dataset.set_flags(&flags.flags).expect("one flag per observation");
                self.events.push(BoEvent::Detection { iteration: t, flagged: flags.count(), warning: flags.warning });
                self.laplace = Some(model);
            }
            Err(e) => self.events.push(BoEvent::DetectionFailed { iteration: t, error: e.to_string() }),
        }
        true
    }

    /// Next point to evaluate.
    pub fn suggest(&mut self, config: &BoConfig<T>) -> Result<Proposal<T>> {
        let t = self.iteration();
        if t < config.n_init {
            return Ok(Proposal { point: self.design[t].clone(), ei: None, detection_ran: false });
        }
        let detection_ran = self.maybe_detect(config);
        match self.model_suggestion(config) {
            Ok((point, ei)) => Ok(Proposal { point, ei: Some(ei), detection_ran }),
            Err(e) => {
                let mut rng = rng::stream(config.seed, &[rng::TAG_FALLBACK, t as u64]);
                let point = config.bounds.sample_uniform(&mut rng);
                self.events.push(BoEvent::Fallback { iteration: t, error: e.to_string() });
                Ok(Proposal { point, ei: None, detection_ran })
            }
        }
    }

    fn model_suggestion(&mut self, config: &BoConfig<T>) -> Result<(Vec<T>, T)> {
        let t = self.iteration() as u64;
        let active = active_subset(&self.dataset, &self.dataset.flags())?;
        let fit_opts = ExactFitOptions {
            family: config.kernel,
            restarts: config.exact_restarts,
            seed: derive_seed(config.seed, &[rng::TAG_FIT_EXACT, t]),
            ..ExactFitOptions::default()
        };
        let bounds = HyperBounds::for_domain(&config.bounds, &active.values);
        let model = fit_exact(&active.points, &active.values, &bounds, &fit_opts)?;
        let incumbent = active.values.iter().copied().fold(T::infinity(), T::min);
        let acq = AcquisitionOptions {
            candidates: config.candidates,
            refinements: config.refinements,
            seed: derive_seed(config.seed, &[rng::TAG_ACQ, t]),
            ..AcquisitionOptions::default()
        };
        let s = maximize_acquisition(&model, &config.bounds, incumbent, &acq)?;
        self.exact = Some(model);
        Ok((s.point, s.eval.ei))
    }

    /// Records an evaluated point. New observations start unflagged.
    pub fn tell(&mut self, point: Vec<T>, value: T) -> Result<()> {
        self.dataset.push(point, value)
    }
}

/// One evaluated iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub x: Vec<T>,
    pub y: T,
    pub ei: Option<T>,
    pub detection_ran: bool,
    /// Best non-flagged value after this observation was added.
    pub incumbent: T,
    /// Flags of all observations after this iteration.
    pub flags: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct BoResult<T> {
    pub history: Vec<IterationRecord<T>>,
    pub best_x: Vec<T>,
    pub best_y: T,
    pub flags: Vec<bool>,
    pub events: Vec<BoEvent>,
    pub state: BoState<T>,
}

/// Runs `budget` evaluations: the initial design, then suggest/tell rounds.
pub fn run_bo<T, E, F>(mut objective: F, config: &BoConfig<T>) -> Result<BoResult<T>>
where
    T: Scalar,
    E: Display,
    F: FnMut(&[T]) -> std::result::Result<T, E>,
{
    let mut state = BoState::new(config)?;
    let mut history = Vec::with_capacity(config.budget);
    for iteration in 0..config.budget {
        let proposal = state.suggest(config)?;
        let y = objective(&proposal.point)
            .map_err(|e| Error::Objective { iteration, message: e.to_string() })?;
        if !y.is_finite() {
            return Err(Error::Objective { iteration, message: format!("objective returned non-finite value {y}") });
        }
        state.tell(proposal.point.clone(), y)?;
        let incumbent = state.incumbent().map_or(y, |(_, v)| v);
        history.push(IterationRecord {
            iteration,
            x: proposal.point,
            y,
            ei: proposal.ei,
            detection_ran: proposal.detection_ran,
            incumbent,
            flags: state.flags(),
        });
    }
    let (best_x, best_y) = state.incumbent().map(|(x, y)| (x.to_vec(), y)).expect("budget is positive");
    Ok(BoResult { history, best_x, best_y, flags: state.flags(), events: state.events.clone(), state })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(budget: usize) -> BoConfig<f64> {
        BoConfig { seed: 4, ..BoConfig::new(Bounds::unit(1), budget) }
    }

    #[test]
    fn config_validation() {
        let mut c = config(20);
        assert!(c.validate().is_ok());
        c.n_init = 1;
        assert!(c.validate().is_err());
        let mut c = config(5);
        assert!(c.validate().is_err());
        c.budget = 6;
        // warmup 0.25·6 < 2
        assert!(c.validate().is_err());
        c.robust_enabled = false;
        assert!(c.validate().is_ok());
        let c = BoConfig { bounds: Bounds::new(vec![0.0], vec![0.0]).unwrap(), ..config(20) };
        assert!(c.validate().is_err());
    }

    #[test]
    fn initial_phase_returns_design_points() {
        let c = config(20);
        let mut s = BoState::new(&c).unwrap();
        let design = latin_hypercube_design(5, &c.bounds, c.seed);
        for (i, p) in design.iter().enumerate() {
            let prop = s.suggest(&c).unwrap();
            assert_eq!(&prop.point, p);
            assert!(prop.ei.is_none());
            s.tell(prop.point, i as f64).unwrap();
        }
    }

    #[test]
    fn tell_updates_incumbent() {
        let c = config(20);
        let mut s = BoState::new(&c).unwrap();
        s.tell(vec![0.1], 2.0).unwrap();
        assert_eq!(s.incumbent().unwrap().1, 2.0);
        s.tell(vec![0.2], 1.0).unwrap();
        assert_eq!(s.incumbent().unwrap().1, 1.0);
        s.tell(vec![0.3], 5.0).unwrap();
        assert_eq!(s.incumbent().unwrap().1, 1.0);
        assert_eq!(s.iteration(), 3);
        assert!(s.tell(vec![0.4], f64::INFINITY).is_err());
    }

    #[test]
    fn suggest_twice_is_identical() {
        let c = BoConfig { schedule: Schedule::new(0.25, 1, 0.05).unwrap(), ..config(20) };
        let mut s = BoState::new(&c).unwrap();
        for i in 0..8 {
            let p = s.suggest(&c).unwrap();
            let x = p.point[0];
            s.tell(p.point, (x - 0.3).powi(2) + if i == 6 { 3.0 } else { 0.0 }).unwrap();
        }
        let a = s.suggest(&c).unwrap();
        let b = s.suggest(&c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn objective_error_carries_iteration() {
        let c = config(10);
        let r = run_bo(|x: &[f64]| if x[0] >= 0.0 { Err("boom") } else { Ok(0.0) }, &c);
        match r {
            Err(Error::Objective { iteration, message }) => {
                assert_eq!(iteration, 0);
                assert_eq!(message, "boom");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
