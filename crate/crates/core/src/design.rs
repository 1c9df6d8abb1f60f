//! Search boxes and Latin hypercube designs.

use rand::Rng as _;
use rand::seq::SliceRandom;

use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> Bounds<T> {
    /// Accepts degenerate axes (`lower == upper`).
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(invalid("bounds need matching, non-empty lower and upper vectors"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(invalid(format!("bad bounds on axis {i}: [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(d: usize) -> Self {
        Self { lower: vec![T::zero(); d], upper: vec![T::one(); d] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<T> {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| u - l).collect()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((&v, &l), &u)| v >= l && v <= u)
    }

    pub fn clamp(&self, x: &mut [T]) {
        for ((v, &l), &u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.max(l).min(u);
        }
    }

    pub fn sample_uniform(&self, rng: &mut Rng) -> Vec<T> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| l + (u - l) * T::c(rng.random::<f64>()))
            .collect()
    }
}

/// `n` points with one point per equal-width stratum on every axis, jittered
/// uniformly inside its stratum.
pub fn latin_hypercube<T: Scalar>(n: usize, bounds: &Bounds<T>, rng: &mut Rng) -> Vec<Vec<T>> {
    let d = bounds.dim();
    let mut points = vec![vec![T::zero(); d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for axis in 0..d {
        strata.shuffle(rng);
        let (lo, hi) = (bounds.lower[axis], bounds.upper[axis]);
        for (p, &s) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            let frac = (s as f64 + u) / n as f64;
            // Guard against rounding onto the next stratum's edge.
            let frac = frac.min((s as f64 + 1.0) / n as f64 * (1.0 - f64::EPSILON));
            p[axis] = (lo + (hi - lo) * T::c(frac)).min(hi);
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn one_point_per_stratum() {
        for (n, d) in [(5usize, 1usize), (5, 8), (17, 3)] {
            let b = Bounds::<f64>::unit(d);
            let pts = latin_hypercube(n, &b, &mut stream(3, &[n as u64]));
            assert_eq!(pts.len(), n);
            for axis in 0..d {
                let mut seen = vec![false; n];
                for p in &pts {
                    let s = (p[axis] * n as f64).floor() as usize;
                    assert!(s < n && !seen[s], "axis {axis} stratum {s} repeated");
                    seen[s] = true;
                }
            }
        }
    }

    #[test]
    fn single_point_lies_in_box() {
        let b = Bounds::new(vec![-2.0, 5.0], vec![-1.0, 6.0]).unwrap();
        let pts = latin_hypercube(1, &b, &mut stream(9, &[]));
        assert!(b.contains(&pts[0]));
    }

    #[test]
    fn scaled_box_and_determinism() {
        let b = Bounds::new(vec![10.0], vec![20.0]).unwrap();
        let a = latin_hypercube(4, &b, &mut stream(1, &[]));
        let c = latin_hypercube(4, &b, &mut stream(1, &[]));
        assert_eq!(a, c);
        assert!(a.iter().all(|p| b.contains(p)));
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(Bounds::new(vec![1.0], vec![0.0]).is_err());
        assert!(Bounds::<f64>::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(Bounds::new(vec![0.5], vec![0.5]).is_ok());
    }
}
