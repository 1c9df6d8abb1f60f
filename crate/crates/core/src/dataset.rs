use crate::design::Bounds;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub x: Vec<T>,
    pub y: T,
    /// Currently classified as an outlier.
    pub flagged: bool,
}

/// Ordered observations inside a search box. Observations are never removed;
/// outliers are only flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    bounds: Bounds<T>,
    observations: Vec<Observation<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(bounds: Bounds<T>) -> Self {
        Self { bounds, observations: Vec::new() }
    }

    pub fn bounds(&self) -> &Bounds<T> {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation<T>] {
        &self.observations
    }

    pub fn push(&mut self, x: Vec<T>, y: T) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!("point has dimension {}, expected {}", x.len(), self.dim())));
        }
        if !y.is_finite() {
            return Err(invalid(format!("observed value must be finite, got {y}")));
        }
        if !self.bounds.contains(&x) {
            return Err(invalid("point lies outside the search bounds"));
        }
        self.observations.push(Observation { x, y, flagged: false });
        Ok(())
    }

    pub fn points(&self) -> Vec<Vec<T>> {
        self.observations.iter().map(|o| o.x.clone()).collect()
    }

    pub fn values(&self) -> Vec<T> {
        self.observations.iter().map(|o| o.y).collect()
    }

    pub fn flags(&self) -> Vec<bool> {
        self.observations.iter().map(|o| o.flagged).collect()
    }

    pub fn set_flags(&mut self, flags: &[bool]) -> Result<()> {
        if flags.len() != self.len() {
            return Err(invalid(format!("{} flags for {} observations", flags.len(), self.len())));
        }
        for (o, &f) in self.observations.iter_mut().zip(flags) {
            o.flagged = f;
        }
        Ok(())
    }

    /// Index of the smallest value among non-flagged observations.
    pub fn incumbent_index(&self) -> Option<usize> {
        self.observations
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.flagged)
            .fold(None, |best: Option<(usize, T)>, (i, o)| match best {
                Some((_, v)) if v <= o.y => best,
                _ => Some((i, o.y)),
            })
            .map(|(i, _)| i)
    }
}
