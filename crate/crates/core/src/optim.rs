//! Box-constrained local optimizers used for hyperparameter fitting and
//! acquisition polishing.

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evaluations: usize,
}

fn clamp_into<T: Scalar>(x: &mut [T], lower: &[T], upper: &[T]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.max(lo).min(hi);
    }
}

/// Projected quasi-Newton (BFGS inverse-Hessian) minimization in a box.
///
/// `f` returns `None` where the objective is undefined; such points are
/// treated as infinitely bad by the line search.
pub fn minimize_bfgs_box<T, F>(
    mut f: F,
    x0: &[T],
    lower: &[T],
    upper: &[T],
    max_iters: usize,
) -> Option<Minimum<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Option<(T, Vec<T>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    clamp_into(&mut x, lower, upper);
    let mut evals = 1;
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let mut h = identity(n);
    let gtol = T::c(1e-6);
    let ftol = T::c(1e-10);
    let c1 = T::c(1e-4);
    let mut stalls = 0;

    for _ in 0..max_iters {
        let at_lower = |i: usize, x: &[T]| x[i] <= lower[i];
        let at_upper = |i: usize, x: &[T]| x[i] >= upper[i];
        let pg: Vec<T> = (0..n)
            .map(|i| {
                if (at_lower(i, &x) && g[i] > T::zero()) || (at_upper(i, &x) && g[i] < T::zero()) {
                    T::zero()
                } else {
                    g[i]
                }
            })
            .collect();
        if pg.iter().all(|v| v.abs() <= gtol) {
            break;
        }

        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                h = identity(n);
            }
            let mut d: Vec<T> = (0..n)
                .map(|i| -(0..n).fold(T::zero(), |acc, j| acc + h[i * n + j] * pg[j]))
                .collect();
            for i in 0..n {
                if (at_lower(i, &x) && d[i] < T::zero()) || (at_upper(i, &x) && d[i] > T::zero()) {
                    d[i] = T::zero();
                }
            }
            let slope: T = d.iter().zip(&g).map(|(&a, &b)| a * b).sum();
            if !(slope < T::zero()) {
                continue;
            }
            let mut step = T::one();
            for _ in 0..40 {
                let mut trial: Vec<T> = x.iter().zip(&d).map(|(&a, &b)| a + step * b).collect();
                clamp_into(&mut trial, lower, upper);
                let moved: T = trial.iter().zip(&x).zip(&g).map(|((&t, &a), &gi)| (t - a) * gi).sum();
                evals += 1;
                if let Some((ft, gt)) = f(&trial) {
                    if ft.is_finite() && ft <= fx + c1 * moved.min(T::zero()) {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                step = step * T::c(0.5);
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some((x_new, f_new, g_new)) = accepted else { break };
        let s: Vec<T> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let yv: Vec<T> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy: T = s.iter().zip(&yv).map(|(&a, &b)| a * b).sum();
        if sy > T::c(1e-12) {
            bfgs_update(&mut h, &s, &yv, sy);
        }
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        if improvement <= ftol * (T::one() + fx.abs()) {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Some(Minimum { x, value: fx, evaluations: evals })
}

fn identity<T: Scalar>(n: usize) -> Vec<T> {
    let mut h = vec![T::zero(); n * n];
    for i in 0..n {
        h[i * n + i] = T::one();
    }
    h
}

fn bfgs_update<T: Scalar>(h: &mut [T], s: &[T], y: &[T], sy: T) {
    let n = s.len();
    let rho = T::one() / sy;
    let hy: Vec<T> = (0..n)
        .map(|i| (0..n).fold(T::zero(), |acc, j| acc + h[i * n + j] * y[j]))
        .collect();
    let yhy: T = y.iter().zip(&hy).map(|(&a, &b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] = h[i * n + j] - rho * (hy[i] * s[j] + s[i] * hy[j])
                + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Initial simplex edge as a fraction of the box width.
    pub initial_step: f64,
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 400, initial_step: 0.1, ftol: 1e-9, xtol: 1e-9 }
    }
}

/// Nelder–Mead simplex search with vertices clamped into a box.
pub fn minimize_nelder_mead_box<T, F>(
    mut f: F,
    x0: &[T],
    lower: &[T],
    upper: &[T],
    opts: NelderMeadOptions,
) -> Minimum<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() { T::infinity() } else { v }
    };
    let mut start = x0.to_vec();
    clamp_into(&mut start, lower, upper);

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let width = upper[i] - lower[i];
        let mut v = start.clone();
        let step = T::c(opts.initial_step) * width;
        v[i] = if v[i] + step <= upper[i] { v[i] + step } else { v[i] - step };
        clamp_into(&mut v, lower, upper);
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }
    if n == 0 {
        return Minimum { x: start, value: f0, evaluations: evals };
    }

    let half = T::c(0.5);
    let two = T::c(2.0);
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let fspread = (worst - best).abs();
        let xspread = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(&a, &b)| (a - b).abs()))
            .fold(T::zero(), T::max);
        if fspread <= T::c(opts.ftol) * (T::one() + best.abs()) && xspread <= T::c(opts.xtol) {
            break;
        }
        if xspread == T::zero() {
            break;
        }

        let mut centroid = vec![T::zero(); n];
        for (v, _) in &simplex[..n] {
            for (c, &vi) in centroid.iter_mut().zip(v) {
                *c = *c + vi;
            }
        }
        let nt = T::from_usize_lossy(n);
        centroid.iter_mut().for_each(|c| *c = *c / nt);

        let along = |t: T, from: &[T]| -> Vec<T> {
            let mut p: Vec<T> = centroid.iter().zip(from).map(|(&c, &w)| c + t * (c - w)).collect();
            clamp_into(&mut p, lower, upper);
            p
        };
        let worst_x = simplex[n].0.clone();
        let xr = along(T::one(), &worst_x);
        let fr = eval(&xr, &mut evals);
        if fr < best {
            let xe = along(two, &worst_x);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = along(half, &worst_x);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-half, &worst_x);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < worst.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let anchor = simplex[0].0.clone();
                for k in 1..=n {
                    let v: Vec<T> =
                        anchor.iter().zip(&simplex[k].0).map(|(&a, &b)| a + half * (b - a)).collect();
                    let fv = eval(&v, &mut evals);
                    simplex[k] = (v, fv);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evaluations: evals }
}
