//! Stationary ARD covariance functions and Gram-matrix assembly.
//!
//! The Matérn-5/2 form is `σ_f²·(1 + r + r²/3)·exp(−r)` with
//! `r = sqrt(Σ_i ((x_i − x'_i)/ℓ_i)²)`. The conventional `√5` factor is not
//! applied; it is absorbed into the lengthscales. The rational quadratic form
//! is `σ_f²·(1 + r²/(2α))^(−α)` over the same distance.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Matern52,
    RationalQuadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec<T> {
    family: KernelFamily,
    lengthscales: Vec<T>,
    signal_variance: T,
    alpha: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(family: KernelFamily, lengthscales: Vec<T>, signal_variance: T, alpha: T) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(invalid("kernel needs at least one lengthscale"));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(**l > T::zero()) || !l.is_finite()) {
            return Err(invalid(format!("lengthscale must be positive and finite, got {l}")));
        }
        if !(signal_variance > T::zero()) || !signal_variance.is_finite() {
            return Err(invalid(format!("signal variance must be positive, got {signal_variance}")));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { family, lengthscales, signal_variance, alpha })
    }

    pub fn matern52(lengthscales: Vec<T>, signal_variance: T) -> Result<Self> {
        Self::new(KernelFamily::Matern52, lengthscales, signal_variance, T::one())
    }

    pub fn rational_quadratic(lengthscales: Vec<T>, signal_variance: T, alpha: T) -> Result<Self> {
        Self::new(KernelFamily::RationalQuadratic, lengthscales, signal_variance, alpha)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscales(&self) -> &[T] {
        &self.lengthscales
    }

    pub fn signal_variance(&self) -> T {
        self.signal_variance
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Same family and α with new amplitude and lengthscales.
    pub fn with_hyperparameters(&self, lengthscales: Vec<T>, signal_variance: T) -> Result<Self> {
        Self::new(self.family, lengthscales, signal_variance, self.alpha)
    }

    fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!(
                "point has dimension {} but kernel expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn sq_dist_unchecked(&self, x: &[T], y: &[T]) -> T {
        x.iter()
            .zip(y)
            .zip(&self.lengthscales)
            .fold(T::zero(), |acc, ((&a, &b), &l)| {
                let u = (a - b) / l;
                acc + u * u
            })
    }

    /// Unit-amplitude correlation as a function of the squared scaled distance.
    #[inline]
    fn correlation(&self, r2: T) -> T {
        match self.family {
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                (T::one() + r + r2 / T::c(3.0)) * (-r).exp()
            }
            KernelFamily::RationalQuadratic => {
                (T::one() + r2 / (T::c(2.0) * self.alpha)).powf(-self.alpha)
            }
        }
    }

    /// `∂k/∂(log ℓ_k) = σ_f² · factor(r²) · (Δ_k/ℓ_k)²`; returns `factor`.
    #[inline]
    fn log_lengthscale_factor(&self, r2: T) -> T {
        match self.family {
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                (T::one() + r) * (-r).exp() / T::c(3.0)
            }
            KernelFamily::RationalQuadratic => {
                (T::one() + r2 / (T::c(2.0) * self.alpha)).powf(-self.alpha - T::one())
            }
        }
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, x: &[T], y: &[T]) -> T {
        self.signal_variance * self.correlation(self.sq_dist_unchecked(x, y))
    }
}

pub fn scaled_distance<T: Scalar>(x: &[T], y: &[T], spec: &KernelSpec<T>) -> Result<T> {
    spec.check(x)?;
    spec.check(y)?;
    Ok(spec.sq_dist_unchecked(x, y).sqrt())
}

pub fn kernel_value<T: Scalar>(x: &[T], y: &[T], spec: &KernelSpec<T>) -> Result<T> {
    spec.check(x)?;
    spec.check(y)?;
    Ok(spec.value_unchecked(x, y))
}

pub(crate) fn check_points<T: Scalar>(points: &[Vec<T>], spec: &KernelSpec<T>) -> Result<()> {
    points.iter().try_for_each(|p| spec.check(p))
}

/// `K[i][j] = k(x_i, x_j) + σ_n²·[i = j]`.
pub fn gram<T: Scalar>(points: &[Vec<T>], spec: &KernelSpec<T>, noise_variance: T) -> Result<Matrix<T>> {
    if points.is_empty() {
        return Err(invalid("gram matrix needs at least one point"));
    }
    if noise_variance < T::zero() {
        return Err(invalid("noise variance must be non-negative"));
    }
    check_points(points, spec)?;
    let n = points.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = spec.signal_variance + noise_variance;
        for j in 0..i {
            let v = spec.value_unchecked(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Covariances between a query and each training point.
pub fn cross_covariance<T: Scalar>(query: &[T], points: &[Vec<T>], spec: &KernelSpec<T>) -> Result<Vec<T>> {
    spec.check(query)?;
    Ok(points.iter().map(|p| spec.value_unchecked(query, p)).collect())
}

/// Derivatives of the noise-free Gram matrix with respect to each log-lengthscale.
pub(crate) fn gram_grad_log_lengthscales<T: Scalar>(points: &[Vec<T>], spec: &KernelSpec<T>) -> Vec<Matrix<T>> {
    let n = points.len();
    let d = spec.dim();
    let mut grads = vec![Matrix::zeros(n, n); d];
    for i in 0..n {
        for j in 0..i {
            let r2 = spec.sq_dist_unchecked(&points[i], &points[j]);
            let common = spec.signal_variance * spec.log_lengthscale_factor(r2);
            for (k, g) in grads.iter_mut().enumerate() {
                let u = (points[i][k] - points[j][k]) / spec.lengthscales[k];
                let v = common * u * u;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
    }
    grads
}
