//! Gaussian process with a Student-t observation model.
//!
//! The latent posterior is approximated by a Gaussian centered at the mode
//! `f̂` of `log p(y|f) − ½ fᵀK⁻¹f`, with precision `K⁻¹ + W` where
//! `W = −∇²_f log p(y|f)` at the mode. The Student-t likelihood is not
//! log-concave, so negative entries of `W` are clamped to zero; this keeps
//! `B = I + W^½ K W^½` positive definite.
//!
//! The mode is found by damped Newton iterations in the `a = K⁻¹f`
//! parameterization, which never forms `K⁻¹`.

use crate::design::{latin_hypercube, Bounds};
use crate::error::{invalid, numerical, Result};
use crate::gp_exact::{positive_or_one, variance, HyperBounds};
use crate::kernels::{cross_covariance, gram, KernelFamily, KernelSpec};
use crate::linalg::{cholesky_jittered, dot, Cholesky, Matrix, JITTER_START};
use crate::optim::{minimize_nelder_mead_box, NelderMeadOptions};
use crate::rng;
use crate::scalar::Scalar;
use crate::special::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentTLik<T> {
    dof: T,
    scale: T,
}

impl<T: Scalar> StudentTLik<T> {
    /// Requires `dof ≥ 1` and `scale > 0`.
    pub fn new(dof: T, scale: T) -> Result<Self> {
        if !(dof >= T::one()) || !dof.is_finite() {
            return Err(invalid(format!("degrees of freedom must be ≥ 1, got {dof}")));
        }
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(invalid(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { dof, scale })
    }

    pub fn dof(&self) -> T {
        self.dof
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    fn log_norm(&self) -> T {
        let half = T::c(0.5);
        let nu = self.dof;
        ln_gamma(half * (nu + T::one())) - ln_gamma(half * nu) - half * (nu * T::PI()).ln() - self.scale.ln()
    }
}

/// Log-density of `y` under a Student-t centered at `f`, with its first and
/// second derivatives in `f`.
pub fn t_logpdf<T: Scalar>(y: T, f: T, lik: &StudentTLik<T>) -> (T, T, T) {
    t_logpdf_with_norm(y, f, lik, lik.log_norm())
}

#[inline]
fn t_logpdf_with_norm<T: Scalar>(y: T, f: T, lik: &StudentTLik<T>, log_norm: T) -> (T, T, T) {
    let nu = lik.dof;
    let s2 = lik.scale * lik.scale;
    let r = y - f;
    let r2 = r * r;
    let denom = nu * s2 + r2;
    let np1 = nu + T::one();
    let logp = log_norm - T::c(0.5) * np1 * (r2 / (nu * s2)).ln_1p();
    let d1 = np1 * r / denom;
    let d2 = np1 * (r2 - nu * s2) / (denom * denom);
    (logp, d1, d2)
}

#[derive(Debug, Clone, Copy)]
pub struct LaplaceOptions<T> {
    /// Constant prior mean of the latent function.
    pub prior_mean: T,
    pub max_iters: usize,
    /// Convergence when `‖∇ log posterior‖_∞ ≤ tol·(1 + ‖y‖_∞)`.
    pub tol: T,
}

impl<T: Scalar> Default for LaplaceOptions<T> {
    fn default() -> Self {
        Self { prior_mean: T::zero(), max_iters: 100, tol: T::c(1e-6) }
    }
}

/// Laplace-approximated Student-t GP posterior.
#[derive(Debug, Clone)]
pub struct LaplaceGp<T> {
    spec: KernelSpec<T>,
    lik: StudentTLik<T>,
    points: Vec<Vec<T>>,
    y: Vec<T>,
    prior_mean: T,
    gram: Matrix<T>,
    f_hat: Vec<T>,
    latent_weights: Vec<T>,
    grad_loglik: Vec<T>,
    w: Vec<T>,
    sqrt_w: Vec<T>,
    b_chol: Cholesky<T>,
    converged: bool,
    newton_iters: usize,
    objective_trace: Vec<T>,
    log_evidence: T,
}

impl<T: Scalar> LaplaceGp<T> {
    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn lik(&self) -> &StudentTLik<T> {
        &self.lik
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn targets(&self) -> &[T] {
        &self.y
    }

    pub fn prior_mean(&self) -> T {
        self.prior_mean
    }

    /// Latent mode at the training inputs, in the units of `y`.
    pub fn f_hat(&self) -> Vec<T> {
        self.f_hat.iter().map(|&f| f + self.prior_mean).collect()
    }

    /// Clamped `W` diagonal at the mode.
    pub fn w(&self) -> &[T] {
        &self.w
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn newton_iters(&self) -> usize {
        self.newton_iters
    }

    /// Log-posterior objective after each accepted Newton step.
    pub fn objective_trace(&self) -> &[T] {
        &self.objective_trace
    }

    /// Laplace approximation of `log p(y | X, θ)`.
    pub fn log_evidence(&self) -> T {
        self.log_evidence
    }

    /// Largest absolute entry of `∇ log p(y|f̂) − K⁻¹f̂`.
    pub fn gradient_norm(&self) -> T {
        self.grad_loglik
            .iter()
            .zip(&self.latent_weights)
            .fold(T::zero(), |m, (&g, &a)| m.max((g - a).abs()))
    }

    /// Diagonal of the approximate posterior covariance `(K⁻¹ + W)⁻¹` at the training inputs.
    pub fn posterior_variances(&self) -> Vec<T> {
        let n = self.f_hat.len();
        (0..n)
            .map(|i| {
                let col: Vec<T> = (0..n).map(|j| self.sqrt_w[j] * self.gram[(j, i)]).collect();
                let v = self.b_chol.solve_lower(&col);
                (self.gram[(i, i)] - dot(&v, &v)).max(T::zero())
            })
            .collect()
    }

    /// Latent predictive mean and variance at a query point.
    pub fn predict_latent(&self, query: &[T]) -> Result<(T, T)> {
        if !self.converged {
            log::warn!("predicting from a Laplace model whose Newton iterations did not converge");
        }
        let kq = cross_covariance(query, &self.points, &self.spec)?;
        let mean = self.prior_mean + dot(&kq, &self.grad_loglik);
        let scaled: Vec<T> = kq.iter().zip(&self.sqrt_w).map(|(&k, &s)| k * s).collect();
        let v = self.b_chol.solve_lower(&scaled);
        let var = (self.spec.signal_variance() - dot(&v, &v)).max(T::zero());
        Ok((mean, var))
    }
}

fn factor_b<T: Scalar>(k: &Matrix<T>, sqrt_w: &[T]) -> Result<Cholesky<T>> {
    let n = sqrt_w.len();
    let b = Matrix::from_fn(n, n, |i, j| {
        let v = sqrt_w[i] * k[(i, j)] * sqrt_w[j];
        if i == j { T::one() + v } else { v }
    });
    match Cholesky::new(&b) {
        Some(ch) => Ok(ch),
        None => cholesky_jittered(&b).map(|(ch, _)| ch),
    }
}

/// Finds the posterior mode and builds the Laplace approximation.
pub fn laplace_mode<T: Scalar>(
    points: &[Vec<T>],
    y: &[T],
    spec: &KernelSpec<T>,
    lik: &StudentTLik<T>,
    opts: &LaplaceOptions<T>,
) -> Result<LaplaceGp<T>> {
    let n = points.len();
    if n == 0 {
        return Err(invalid("Laplace approximation needs at least one observation"));
    }
    if n != y.len() {
        return Err(invalid("points and targets differ in length"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("targets must be finite"));
    }
    let mut k = gram(points, spec, T::zero())?;
    k.add_diagonal(T::c(JITTER_START) * spec.signal_variance());

    let yc: Vec<T> = y.iter().map(|&v| v - opts.prior_mean).collect();
    let y_inf = yc.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = opts.tol * (T::one() + y_inf);
    let log_norm = lik.log_norm();
    let half = T::c(0.5);

    let derivs = |f: &[T]| -> (T, Vec<T>, Vec<T>) {
        let mut lp = T::zero();
        let mut g = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for (&yi, &fi) in yc.iter().zip(f) {
            let (l, d1, d2) = t_logpdf_with_norm(yi, fi, lik, log_norm);
            lp = lp + l;
            g.push(d1);
            w.push((-d2).max(T::zero()));
        }
        (lp, g, w)
    };

    // Newton direction in the weight parameterization for curvature `wd`.
    let direction = |f: &[T], g: &[T], a: &[T], wd: &[T]| -> Result<Vec<T>> {
        let sqrt_w: Vec<T> = wd.iter().map(|v| v.sqrt()).collect();
        let b_chol = factor_b(&k, &sqrt_w)?;
        let b: Vec<T> = (0..n).map(|i| wd[i] * f[i] + g[i]).collect();
        let kb = k.mul_vec(&b);
        let rhs: Vec<T> = sqrt_w.iter().zip(&kb).map(|(&s, &v)| s * v).collect();
        let c = b_chol.solve(&rhs);
        Ok((0..n).map(|i| b[i] - sqrt_w[i] * c[i] - a[i]).collect())
    };
    // Expected information of the likelihood, positive everywhere.
    let nu = lik.dof();
    let s2 = lik.scale() * lik.scale();
    let fisher = (nu + T::one()) / ((nu + T::c(3.0)) * s2);

    let mut a = vec![T::zero(); n];
    let mut f = vec![T::zero(); n];
    let (mut loglik, mut g, mut w) = derivs(&f);
    let mut psi = loglik;
    // Start from the mode of the Gaussian with matching curvature at zero
    // residual when that beats the prior mean.
    {
        let w0 = vec![(nu + T::one()) / (nu * s2); n];
        let g0 = yc.iter().map(|&v| v * w0[0]).collect::<Vec<_>>();
        let a0 = direction(&f, &g0, &a, &w0)?;
        let f0 = k.mul_vec(&a0);
        let (lp0, g1, w1) = derivs(&f0);
        let psi0 = lp0 - half * dot(&a0, &f0);
        if psi0.is_finite() && psi0 > psi {
            a = a0;
            f = f0;
            loglik = lp0;
            g = g1;
            w = w1;
            psi = psi0;
        }
    }
    let mut trace = vec![psi];
    let mut converged = false;
    let mut iters = 0;

    while iters < opts.max_iters {
        let grad_inf = g.iter().zip(&a).fold(T::zero(), |m, (&gi, &ai)| m.max((gi - ai).abs()));
        if grad_inf <= tol {
            converged = true;
            break;
        }
        iters += 1;
        let mut accepted = false;
        let mut last_da = Vec::new();
        // Full Newton first, then Fisher scoring where curvature is negative.
        for scoring in [false, true] {
            let wd: Vec<T> = if scoring { w.iter().map(|&v| v.max(fisher)).collect() } else { w.clone() };
            let da = direction(&f, &g, &a, &wd)?;
            let mut step = T::one();
            for _ in 0..=20 {
                let a_t: Vec<T> = a.iter().zip(&da).map(|(&u, &v)| u + step * v).collect();
                let f_t = k.mul_vec(&a_t);
                let (lp_t, g_t, w_t) = derivs(&f_t);
                let psi_t = lp_t - half * dot(&a_t, &f_t);
                if psi_t.is_finite() && psi_t >= psi {
                    a = a_t;
                    f = f_t;
                    loglik = lp_t;
                    g = g_t;
                    w = w_t;
                    psi = psi_t;
                    accepted = true;
                    break;
                }
                step = step * half;
            }
            if accepted {
                break;
            }
            last_da = da;
        }
        if !accepted {
            // No representable ascent left: stationary to working precision
            // if the full step barely moves the latent values, measured
            // against the likelihood scale.
            let df = k.mul_vec(&last_da);
            let f_inf = f.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let df_inf = df.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let limit = (T::c(1e-8) * (T::one() + f_inf)).max(T::c(1e-3) * lik.scale());
            converged = df_inf <= limit;
            break;
        }
        trace.push(psi);
    }
    if !converged {
        let grad_inf = g.iter().zip(&a).fold(T::zero(), |m, (&gi, &ai)| m.max((gi - ai).abs()));
        converged = grad_inf <= tol;
    }

    let sqrt_w: Vec<T> = w.iter().map(|v| v.sqrt()).collect();
    let b_chol = factor_b(&k, &sqrt_w)?;
    let half_log_det_b = half * b_chol.log_det();
    let log_evidence = loglik - half * dot(&a, &f) - half_log_det_b;
    if !log_evidence.is_finite() {
        return Err(numerical("Laplace evidence is not finite"));
    }
    Ok(LaplaceGp {
        spec: spec.clone(),
        lik: *lik,
        points: points.to_vec(),
        y: y.to_vec(),
        prior_mean: opts.prior_mean,
        gram: k,
        f_hat: f,
        latent_weights: a,
        grad_loglik: g,
        w,
        sqrt_w,
        b_chol,
        converged,
        newton_iters: iters,
        objective_trace: trace,
        log_evidence,
    })
}

/// Laplace approximation of the log marginal likelihood.
pub fn laplace_evidence<T: Scalar>(
    points: &[Vec<T>],
    y: &[T],
    spec: &KernelSpec<T>,
    lik: &StudentTLik<T>,
    opts: &LaplaceOptions<T>,
) -> Result<T> {
    Ok(laplace_mode(points, y, spec, lik, opts)?.log_evidence())
}

#[derive(Debug, Clone, Copy)]
pub struct LaplaceFitOptions {
    pub family: KernelFamily,
    pub alpha: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Fixed degrees of freedom, or the starting value when `learn_dof` is set.
    pub dof: f64,
    pub learn_dof: bool,
    pub dof_bounds: (f64, f64),
    /// Evidence evaluations per restart.
    pub max_evals: usize,
}

impl Default for LaplaceFitOptions {
    fn default() -> Self {
        Self {
            family: KernelFamily::Matern52,
            alpha: 2.0,
            restarts: 3,
            seed: 0,
            dof: 4.0,
            learn_dof: false,
            dof_bounds: (2.0, 100.0),
            max_evals: 250,
        }
    }
}

pub(crate) fn median<T: Scalar>(y: &[T]) -> T {
    let mut v = y.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite targets"));
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) * T::c(0.5) }
}

/// Maximizes the Laplace evidence over kernel hyperparameters and the
/// likelihood scale (and optionally ν) by multistart Nelder–Mead in log space.
///
/// The noise box in `bounds` is read as a box on `log σ²`. The latent prior
/// mean is the median of `y`.
pub fn fit_laplace<T: Scalar>(
    points: &[Vec<T>],
    y: &[T],
    bounds: &HyperBounds<T>,
    opts: &LaplaceFitOptions,
) -> Result<LaplaceGp<T>> {
    let n = points.len();
    if n < 4 {
        return Err(invalid(format!("Student-t GP fit needs at least 4 observations, got {n}")));
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
    let laplace_opts = LaplaceOptions { prior_mean: median(y), ..LaplaceOptions::default() };
    let half = T::c(0.5);

    let mut lower: Vec<T> = bounds.log_lengthscales.iter().map(|b| b.0).collect();
    let mut upper: Vec<T> = bounds.log_lengthscales.iter().map(|b| b.1).collect();
    lower.push(bounds.log_signal_variance.0);
    upper.push(bounds.log_signal_variance.1);
    lower.push(half * bounds.log_noise_variance.0);
    upper.push(half * bounds.log_noise_variance.1);
    if opts.learn_dof {
        lower.push(T::c(opts.dof_bounds.0.ln()));
        upper.push(T::c(opts.dof_bounds.1.ln()));
    }

    let alpha = T::c(opts.alpha);
    let unpack = |theta: &[T]| -> Result<(KernelSpec<T>, StudentTLik<T>)> {
        let ls = theta[..d].iter().map(|v| v.exp()).collect();
        let spec = KernelSpec::new(opts.family, ls, theta[d].exp(), alpha)?;
        let dof = if opts.learn_dof { theta[d + 2].exp() } else { T::c(opts.dof) };
        Ok((spec, StudentTLik::new(dof, theta[d + 1].exp())?))
    };
    let objective = |theta: &[T]| -> T {
        unpack(theta)
            .and_then(|(spec, lik)| laplace_evidence(points, y, &spec, &lik, &laplace_opts))
            .map_or(T::infinity(), |e| -e)
    };

    let log_box = Bounds::new(lower.clone(), upper.clone())?;
    let mut rng = rng::stream(opts.seed, &[rng::TAG_FIT_LAPLACE]);
    let mut starts = latin_hypercube(opts.restarts.max(1), &log_box, &mut rng);
    if opts.learn_dof {
        let start_dof = T::c(opts.dof.ln()).max(lower[d + 2]).min(upper[d + 2]);
        starts.iter_mut().for_each(|s| s[d + 2] = start_dof);
    }
    let nm = NelderMeadOptions { max_evals: opts.max_evals, initial_step: 0.15, ftol: 1e-8, xtol: 1e-4 };
    let best = starts
        .iter()
        .map(|s| minimize_nelder_mead_box(objective, s, &lower, &upper, nm))
        .filter(|m| m.value.is_finite())
        .min_by(|a, b| a.value.partial_cmp(&b.value).expect("finite"))
        .ok_or_else(|| numerical("Laplace evidence undefined at every restart"))?;
    let (spec, lik) = unpack(&best.x)?;
    laplace_mode(points, y, &spec, &lik, &laplace_opts)
}

/// Default Laplace hyperparameter box, matching the exact-GP defaults.
pub fn default_laplace_bounds<T: Scalar>(domain_widths: &[T], y: &[T]) -> HyperBounds<T> {
    HyperBounds::default_for(domain_widths, positive_or_one(variance(y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logpdf_reference_values() {
        let lik = StudentTLik::new(4.0f64, 1.0).unwrap();
        let (lp, d1, d2) = t_logpdf(0.0, 0.0, &lik);
        assert!((lp.exp() - 0.375).abs() < 1e-12);
        assert!((lp - 0.375f64.ln()).abs() < 1e-12);
        assert!((lp + 0.98083).abs() < 1e-5);
        assert_eq!(d1, 0.0);
        assert!((d2 + 1.25).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_has_zero_slope() {
        for (nu, s, y) in [(1.0, 0.3, 5.0), (7.5, 2.0, -1.0), (100.0, 0.01, 0.0)] {
            let lik = StudentTLik::new(nu, s).unwrap();
            assert_eq!(t_logpdf(y, y, &lik).1, 0.0);
        }
    }

    #[test]
    fn lik_validation() {
        assert!(StudentTLik::new(0.5, 1.0).is_err());
        assert!(StudentTLik::new(4.0, 0.0).is_err());
        assert!(StudentTLik::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn single_zero_observation_has_zero_mode() {
        let spec = KernelSpec::matern52(vec![1.0], 1.0).unwrap();
        let lik = StudentTLik::new(4.0, 0.5).unwrap();
        let m = laplace_mode(&[vec![0.2]], &[0.0], &spec, &lik, &LaplaceOptions::default()).unwrap();
        assert!(m.converged());
        assert_eq!(m.f_hat(), vec![0.0]);
    }

    #[test]
    fn evidence_of_pinned_latent_is_likelihood_at_prior_mean() {
        let spec = KernelSpec::matern52(vec![1.0f64], 1e-12).unwrap();
        let lik = StudentTLik::new(4.0, 0.7).unwrap();
        let e = laplace_evidence(&[vec![0.0]], &[0.0], &spec, &lik, &LaplaceOptions::default()).unwrap();
        let expected = t_logpdf(0.0, 0.0, &lik).0;
        assert!((e - expected).abs() < 1e-9, "{e} vs {expected}");
    }

    #[test]
    fn far_prediction_reverts_to_prior() {
        let spec = KernelSpec::matern52(vec![0.2f64], 2.0).unwrap();
        let lik = StudentTLik::new(4.0, 0.1).unwrap();
        let pts = vec![vec![0.0], vec![0.1], vec![0.3]];
        let opts = LaplaceOptions { prior_mean: 1.5, ..Default::default() };
        let m = laplace_mode(&pts, &[1.0, 2.0, 3.0], &spec, &lik, &opts).unwrap();
        let (mu, var) = m.predict_latent(&[1e3]).unwrap();
        assert!((mu - 1.5).abs() < 1e-12);
        assert!((var - 2.0).abs() < 1e-12);
        assert!(m.predict_latent(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn isolated_point_shrinks_toward_prior() {
        let spec = KernelSpec::matern52(vec![0.1], 1.0).unwrap();
        let lik = StudentTLik::new(4.0, 0.5).unwrap();
        let pts = vec![vec![0.0], vec![10.0]];
        let m = laplace_mode(&pts, &[0.4, 0.0], &spec, &lik, &LaplaceOptions::default()).unwrap();
        let (mu, _) = m.predict_latent(&[0.0]).unwrap();
        assert!(mu > 0.0 && mu < 0.4, "{mu}");
    }

    #[test]
    fn fit_needs_four_points() {
        let pts = vec![vec![0.0], vec![0.5], vec![1.0]];
        let r = fit_laplace(&pts, &[0.0, 1.0, 0.0], &HyperBounds::default_for(&[1.0], 1.0), &LaplaceFitOptions::default());
        assert!(matches!(r, Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(
            y in -20.0..20.0f64,
            f in -20.0..20.0f64,
            nu in 2.0..50.0f64,
            s in 0.1..10.0f64,
        ) {
            let lik = StudentTLik::new(nu, s).unwrap();
            let h = 1e-6;
            let (_, d1, d2) = t_logpdf(y, f, &lik);
            let (lp_up, d1_up, _) = t_logpdf(y, f + h, &lik);
            let (lp_dn, d1_dn, _) = t_logpdf(y, f - h, &lik);
            let fd1 = (lp_up - lp_dn) / (2.0 * h);
            let fd2 = (d1_up - d1_dn) / (2.0 * h);
            // Relative error, floored at 1% of the derivative's natural magnitude.
            let s1 = d1.abs().max(1e-2 * (nu + 1.0) / (nu * s));
            let s2 = d2.abs().max(1e-2 * (nu + 1.0) / (nu * s * s));
            prop_assert!((fd1 - d1).abs() / s1 <= 1e-5, "d1 {} fd {}", d1, fd1);
            prop_assert!((fd2 - d2).abs() / s2 <= 1e-5, "d2 {} fd {}", d2, fd2);
        }
    }
}
