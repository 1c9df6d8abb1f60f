//! Exact Gaussian-process regression with a Gaussian likelihood.

use crate::design::{latin_hypercube, Bounds};
use crate::error::{invalid, numerical, Result};
use crate::kernels::{check_points, cross_covariance, gram, gram_grad_log_lengthscales, KernelFamily, KernelSpec};
use crate::linalg::{cholesky_jittered, dot, Cholesky};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: Scalar> Prediction<T> {
    pub fn stdev(&self) -> T {
        self.variance.sqrt()
    }
}

/// Conditioned GP posterior: Cholesky factor of `K` and weights `K⁻¹(y − offset)`.
#[derive(Debug, Clone)]
pub struct GaussianGp<T> {
    spec: KernelSpec<T>,
    noise_variance: T,
    points: Vec<Vec<T>>,
    targets: Vec<T>,
    offset: T,
    chol: Cholesky<T>,
    weights: Vec<T>,
    jitter_used: T,
}

impl<T: Scalar> GaussianGp<T> {
    /// Conditions the prior `GP(offset, k)` on `(points, y)` with fixed hyperparameters.
    pub fn condition(points: &[Vec<T>], y: &[T], spec: KernelSpec<T>, noise_variance: T, offset: T) -> Result<Self> {
        if points.len() != y.len() {
            return Err(invalid(format!("{} points but {} targets", points.len(), y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("targets must be finite"));
        }
        let k = gram(points, &spec, noise_variance)?;
        let (chol, jitter_used) = cholesky_jittered(&k)?;
        let targets: Vec<T> = y.iter().map(|&v| v - offset).collect();
        let weights = chol.solve(&targets);
        Ok(Self { spec, noise_variance, points: points.to_vec(), targets, offset, chol, weights, jitter_used })
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn noise_variance(&self) -> T {
        self.noise_variance
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn jitter_used(&self) -> T {
        self.jitter_used
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    /// Centered targets `y − offset`.
    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn cholesky(&self) -> &Cholesky<T> {
        &self.chol
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn predict(&self, query: &[T]) -> Result<Prediction<T>> {
        let kq = cross_covariance(query, &self.points, &self.spec)?;
        let mean = self.offset + dot(&kq, &self.weights);
        let v = self.chol.solve_lower(&kq);
        let variance = (self.spec.signal_variance() - dot(&v, &v)).max(T::zero());
        Ok(Prediction { mean, variance })
    }
}

/// Log-space box for `(ℓ_1..ℓ_d, σ_f², σ_n²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperBounds<T> {
    pub log_lengthscales: Vec<(T, T)>,
    pub log_signal_variance: (T, T),
    pub log_noise_variance: (T, T),
}

impl<T: Scalar> HyperBounds<T> {
    /// `ℓ ∈ [1e-2, 1e2]·width`, `σ_f² ∈ [1e-3, 1e3]·var(y)`, `σ_n² ∈ [1e-6, 1]·var(y)`.
    pub fn default_for(domain_widths: &[T], y_variance: T) -> Self {
        let v = positive_or_one(y_variance);
        let log_lengthscales = domain_widths
            .iter()
            .map(|&w| {
                let w = positive_or_one(w);
                ((T::c(1e-2) * w).ln(), (T::c(1e2) * w).ln())
            })
            .collect();
        Self {
            log_lengthscales,
            log_signal_variance: ((T::c(1e-3) * v).ln(), (T::c(1e3) * v).ln()),
            log_noise_variance: ((T::c(1e-6) * v).ln(), v.ln()),
        }
    }

    /// Defaults using the data's own coordinate ranges as domain widths.
    pub fn from_data(points: &[Vec<T>], y: &[T]) -> Self {
        let d = points.first().map_or(0, Vec::len);
        let widths: Vec<T> = (0..d)
            .map(|k| {
                let (lo, hi) = points
                    .iter()
                    .fold((T::infinity(), T::neg_infinity()), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])));
                hi - lo
            })
            .collect();
        Self::default_for(&widths, variance(y))
    }

    pub fn for_domain(bounds: &Bounds<T>, y: &[T]) -> Self {
        Self::default_for(&bounds.widths(), variance(y))
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }
}

pub(crate) fn positive_or_one<T: Scalar>(v: T) -> T {
    if v > T::zero() && v.is_finite() { v } else { T::one() }
}

pub fn mean<T: Scalar>(y: &[T]) -> T {
    y.iter().copied().sum::<T>() / T::from_usize_lossy(y.len().max(1))
}

/// Population variance.
pub fn variance<T: Scalar>(y: &[T]) -> T {
    let m = mean(y);
    y.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_usize_lossy(y.len().max(1))
}

/// Negative log marginal likelihood and its gradient with respect to
/// `(log ℓ_1..log ℓ_d, log σ_f², log σ_n²)`. Targets are used as given.
pub fn nlml<T: Scalar>(points: &[Vec<T>], y: &[T], spec: &KernelSpec<T>, noise_variance: T) -> Result<(T, Vec<T>)> {
    if points.len() != y.len() {
        return Err(invalid("points and targets differ in length"));
    }
    let n = y.len();
    let k = gram(points, spec, noise_variance)?;
    let (chol, _) = cholesky_jittered(&k)?;
    let alpha = chol.solve(y);
    let half = T::c(0.5);
    let value = half * dot(y, &alpha)
        + half * chol.log_det()
        + half * T::from_usize_lossy(n) * (T::c(2.0) * T::PI()).ln();

    // M = K⁻¹ − ααᵀ; ∂/∂θ = ½ tr(M ∂K/∂θ)
    let mut m = chol.inverse();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = m[(i, j)] - alpha[i] * alpha[j];
        }
    }
    let d = spec.dim();
    let mut grad = Vec::with_capacity(d + 2);
    for dk in gram_grad_log_lengthscales(points, spec) {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..i {
                s = s + m[(i, j)] * dk[(i, j)];
            }
        }
        // Off-diagonal only, symmetric: ½·2·Σ_{i>j}.
        grad.push(s);
    }
    let sf2 = spec.signal_variance();
    let mut s = T::zero();
    for i in 0..n {
        s = s + half * m[(i, i)] * sf2;
        for j in 0..i {
            s = s + m[(i, j)] * (k[(i, j)]);
        }
    }
    grad.push(s);
    grad.push(half * noise_variance * m.trace());
    Ok((value, grad))
}

#[derive(Debug, Clone, Copy)]
pub struct ExactFitOptions {
    pub family: KernelFamily,
    /// Shape α for the rational quadratic family.
    pub alpha: f64,
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for ExactFitOptions {
    fn default() -> Self {
        Self { family: KernelFamily::Matern52, alpha: 2.0, restarts: 5, seed: 0, max_iters: 200 }
    }
}

/// Noise variance never drops below this fraction of `var(y)`.
pub const NOISE_FLOOR: f64 = 1e-8;

/// Maximum-likelihood fit: multistart projected BFGS in log space, targets
/// centered on their empirical mean.
pub fn fit_exact<T: Scalar>(
    points: &[Vec<T>],
    y: &[T],
    bounds: &HyperBounds<T>,
    opts: &ExactFitOptions,
) -> Result<GaussianGp<T>> {
    let n = points.len();
    if n < 2 {
        return Err(invalid(format!("exact GP fit needs at least 2 observations, got {n}")));
    }
    if n != y.len() {
        return Err(invalid("points and targets differ in length"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("targets must be finite"));
    }
    let d = bounds.dim();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(invalid("hyperparameter bounds do not match the point dimension"));
    }
    let offset = mean(y);
    let centered: Vec<T> = y.iter().map(|&v| v - offset).collect();
    let floor = (T::c(NOISE_FLOOR) * positive_or_one(variance(y))).ln();

    let mut lower: Vec<T> = bounds.log_lengthscales.iter().map(|b| b.0).collect();
    let mut upper: Vec<T> = bounds.log_lengthscales.iter().map(|b| b.1).collect();
    lower.push(bounds.log_signal_variance.0);
    upper.push(bounds.log_signal_variance.1);
    lower.push(bounds.log_noise_variance.0.max(floor));
    upper.push(bounds.log_noise_variance.1.max(floor));

    let alpha = T::c(opts.alpha);
    let unpack = |theta: &[T]| -> Result<(KernelSpec<T>, T)> {
        let ls = theta[..d].iter().map(|v| v.exp()).collect();
        let spec = KernelSpec::new(opts.family, ls, theta[d].exp(), alpha)?;
        Ok((spec, theta[d + 1].exp()))
    };
    let objective = |theta: &[T]| -> Option<(T, Vec<T>)> {
        let (spec, noise) = unpack(theta).ok()?;
        nlml(points, &centered, &spec, noise).ok().filter(|(v, _)| v.is_finite())
    };

    let log_box = Bounds::new(lower.clone(), upper.clone())?;
    let mut rng = rng::stream(opts.seed, &[rng::TAG_FIT_EXACT]);
    let starts = latin_hypercube(opts.restarts.max(1), &log_box, &mut rng);
    let mut best: Option<(T, Vec<T>)> = None;
    for start in &starts {
        if let Some(m) = crate::optim::minimize_bfgs_box(objective, start, &lower, &upper, opts.max_iters) {
            if best.as_ref().is_none_or(|(v, _)| m.value < *v) {
                best = Some((m.value, m.x));
            }
        }
    }
    let (_, theta) = best.ok_or_else(|| numerical("marginal likelihood undefined at every restart"))?;
    let (spec, noise) = unpack(&theta)?;
    GaussianGp::condition(points, y, spec, noise, offset)
}

/// Conditions with fixed hyperparameters after validating the dimension.
pub fn condition_checked<T: Scalar>(
    points: &[Vec<T>],
    y: &[T],
    spec: KernelSpec<T>,
    noise_variance: T,
    offset: T,
) -> Result<GaussianGp<T>> {
    check_points(points, &spec)?;
    GaussianGp::condition(points, y, spec, noise_variance, offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn unit_matern() -> KernelSpec<f64> {
        KernelSpec::matern52(vec![1.0], 1.0).unwrap()
    }

    #[test]
    fn interpolates_single_point() {
        let gp = GaussianGp::condition(&[vec![0.0]], &[1.0], unit_matern(), 0.0, 0.0).unwrap();
        let p = gp.predict(&[0.0]).unwrap();
        assert!((p.mean - 1.0).abs() < 1e-9);
        assert!(p.variance < 1e-9);
        let p = gp.predict(&[1.0]).unwrap();
        let k = 7.0 / 3.0 * (-1f64).exp();
        assert!((p.mean - k).abs() < 1e-9);
        assert!((p.variance - (1.0 - k * k)).abs() < 1e-9);
        assert!((p.mean - 0.85839).abs() < 1e-5 && (p.variance - 0.26317).abs() < 1e-5);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let gp = GaussianGp::condition(&[vec![0.0], vec![0.5]], &[3.0, 4.0], unit_matern(), 0.01, 2.0).unwrap();
        let p = gp.predict(&[1e4]).unwrap();
        assert!((p.mean - 2.0).abs() < 1e-12);
        assert!((p.variance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let gp = GaussianGp::condition(&[vec![0.0]], &[1.0], unit_matern(), 0.0, 0.0).unwrap();
        assert!(matches!(gp.predict(&[0.0, 1.0]), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn nlml_scalar_closed_form() {
        let (v, _) = nlml(&[vec![0.0]], &[1.0], &unit_matern(), 0.0).unwrap();
        let expected = 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5;
        assert!((v - expected).abs() < 1e-8);
        assert!((v - 1.41894).abs() < 1e-5);
    }

    #[test]
    fn nlml_zero_targets_is_log_det_term() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.3]).collect();
        let spec = unit_matern();
        let (v, _) = nlml(&pts, &[0.0; 6], &spec, 0.1).unwrap();
        let k = gram(&pts, &spec, 0.1).unwrap();
        let (ch, _) = cholesky_jittered(&k).unwrap();
        let expected = 0.5 * ch.log_det() + 3.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_data_predicts_constant() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0, (i * i) as f64 / 25.0]).collect();
        let y = vec![3.25; 6];
        let gp = fit_exact(&pts, &y, &HyperBounds::from_data(&pts, &y), &ExactFitOptions::default()).unwrap();
        assert_eq!(gp.offset(), 3.25);
        for q in [[0.1, 0.9], [0.5, 0.5], [5.0, -3.0]] {
            assert!((gp.predict(&q).unwrap().mean - 3.25).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_rejects_too_few_points() {
        let r = fit_exact(&[vec![0.0]], &[1.0], &HyperBounds::default_for(&[1.0], 1.0), &ExactFitOptions::default());
        assert!(matches!(r, Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = stream(11, &[]);
        let pts: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<f64> = pts.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        let b = HyperBounds::default_for(&[1.0, 1.0], variance(&y));
        let opts = ExactFitOptions { seed: 5, ..Default::default() };
        let a = fit_exact(&pts, &y, &b, &opts).unwrap();
        let c = fit_exact(&pts, &y, &b, &opts).unwrap();
        assert_eq!(a.spec(), c.spec());
        assert_eq!(a.noise_variance(), c.noise_variance());
    }

    #[test]
    fn noise_floor_applies() {
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let y: Vec<f64> = pts.iter().map(|p| (4.0 * p[0]).sin()).collect();
        let mut b = HyperBounds::default_for(&[1.0], variance(&y));
        b.log_noise_variance = (-60.0, -50.0);
        let gp = fit_exact(&pts, &y, &b, &ExactFitOptions::default()).unwrap();
        assert!(gp.noise_variance() >= NOISE_FLOOR * variance(&y) * (1.0 - 1e-12));
    }

    #[test]
    fn cholesky_reconstructs_gram() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.05]).collect();
        let y: Vec<f64> = pts.iter().map(|p| p[0].cos()).collect();
        let spec = KernelSpec::matern52(vec![0.5], 1.3).unwrap();
        let gp = GaussianGp::condition(&pts, &y, spec.clone(), 1e-6, 0.0).unwrap();
        let mut k = gram(&pts, &spec, 1e-6 + gp.jitter_used()).unwrap();
        let r = gp.cholesky().reconstruct();
        let norm = k.frobenius_norm();
        for i in 0..10 {
            for j in 0..10 {
                k[(i, j)] = k[(i, j)] - r[(i, j)];
            }
        }
        assert!(k.frobenius_norm() / norm < 1e-8);
        let kw = gram(&pts, &spec, 1e-6 + gp.jitter_used()).unwrap().mul_vec(gp.weights());
        let res: f64 = kw.iter().zip(gp.targets()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ny: f64 = gp.targets().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res / ny < 1e-6);
    }

    fn dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..5, 2usize..20).prop_flat_map(|(d, n)| {
            (
                prop::collection::vec(prop::collection::vec(0.0..1.0f64, d), n),
                prop::collection::vec(-2.0..2.0f64, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn nlml_gradient_matches_finite_differences(
            (pts, y) in dataset(),
            log_ls in -1.5..1.0f64,
            log_sf in -1.0..1.0f64,
            log_sn in -4.0..-0.5f64,
            rq in any::<bool>(),
        ) {
            let d = pts[0].len();
            let family = if rq { KernelFamily::RationalQuadratic } else { KernelFamily::Matern52 };
            let mut theta: Vec<f64> = (0..d).map(|k| log_ls + 0.2 * k as f64).collect();
            theta.push(log_sf);
            theta.push(log_sn);
            let eval = |t: &[f64]| {
                let spec = KernelSpec::new(family, t[..d].iter().map(|v| v.exp()).collect(), t[d].exp(), 2.0).unwrap();
                nlml(&pts, &y, &spec, t[d + 1].exp()).unwrap()
            };
            let (_, g) = eval(&theta);
            let h = 1e-5;
            for k in 0..theta.len() {
                let mut up = theta.clone();
                up[k] += h;
                let mut dn = theta.clone();
                dn[k] -= h;
                let fd = (eval(&up).0 - eval(&dn).0) / (2.0 * h);
                let scale = fd.abs().max(g[k].abs()).max(1e-2);
                prop_assert!((fd - g[k]).abs() / scale <= 1e-5, "coord {} fd {} analytic {}", k, fd, g[k]);
            }
        }

        #[test]
        fn variance_is_bounded((pts, y) in dataset(), q in prop::collection::vec(-1.0..2.0f64, 4), noise in 1e-6..0.5f64) {
            let d = pts[0].len();
            let spec = KernelSpec::matern52(vec![0.4; d], 1.5).unwrap();
            let gp = GaussianGp::condition(&pts, &y, spec, noise, 0.0).unwrap();
            let p = gp.predict(&q[..d]).unwrap();
            prop_assert!(p.variance >= 0.0 && p.variance <= 1.5 + noise);
        }

        #[test]
        fn interpolates_when_noise_free(n in 2usize..12, seed in 0u64..1000) {
            let mut rng = stream(seed, &[]);
            let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 + rng.random::<f64>()) / n as f64]).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let spec = KernelSpec::matern52(vec![0.05], 1.0).unwrap();
            let gp = GaussianGp::condition(&pts, &y, spec, 0.0, 0.0).unwrap();
            prop_assert!(gp.jitter_used() <= 1e-10);
            for (p, &t) in pts.iter().zip(&y) {
                prop_assert!((gp.predict(p).unwrap().mean - t).abs() <= 1e-6);
            }
        }

        #[test]
        fn duplicate_point_never_increases_variance((pts, y) in dataset(), pick in 0usize..20, q in prop::collection::vec(0.0..1.0f64, 4)) {
            let d = pts[0].len();
            let spec = KernelSpec::matern52(vec![0.3; d], 1.0).unwrap();
            let gp = GaussianGp::condition(&pts, &y, spec.clone(), 0.05, 0.0).unwrap();
            let i = pick % pts.len();
            let mut pts2 = pts.clone();
            pts2.push(pts[i].clone());
            let mut y2 = y.clone();
            y2.push(y[i]);
            let gp2 = GaussianGp::condition(&pts2, &y2, spec, 0.05, 0.0).unwrap();
            let a = gp.predict(&q[..d]).unwrap().variance;
            let b = gp2.predict(&q[..d]).unwrap().variance;
            prop_assert!(b <= a + 1e-9);
        }
    }
}
