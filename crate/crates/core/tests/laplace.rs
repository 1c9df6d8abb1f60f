mod common;

use common::*;
use robust_bo::gp_exact::variance;
use robust_bo::{
    fit_exact, fit_laplace, laplace_evidence, laplace_mode, nlml, ExactFitOptions, GaussianGp, HyperBounds,
    KernelSpec, LaplaceFitOptions, LaplaceOptions, StudentTLik,
};

/// Student-t scale whose curvature at zero residual matches Gaussian noise `σ_n²`.
fn matched_lik(noise_variance: f64, dof: f64) -> StudentTLik<f64> {
    StudentTLik::new(dof, (noise_variance * (dof + 1.0) / dof).sqrt()).unwrap()
}

fn noisy_dataset(seed: u64, n: usize, d: usize, noise_sd: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let pts = uniform_points(&mut r, n, d);
    let y = pts.iter().map(|p| smooth(p) + noise_sd * normal(&mut r)).collect();
    (pts, y)
}

#[test]
fn near_gaussian_limit_mode_matches_exact_posterior_mean() {
    let spec = KernelSpec::matern52(vec![0.3], 1.0).unwrap();
    for seed in 0..10 {
        let (pts, y) = noisy_dataset(seed, 20, 1, 0.1);
        let exact = GaussianGp::condition(&pts, &y, spec.clone(), 0.01, 0.0).unwrap();
        let lap = laplace_mode(&pts, &y, &spec, &matched_lik(0.01, 1000.0), &LaplaceOptions::default()).unwrap();
        assert!(lap.converged(), "seed {seed}: iters {} grad {}", lap.newton_iters(), lap.gradient_norm());
        let means: Vec<f64> = pts.iter().map(|p| exact.predict(p).unwrap().mean).collect();
        let rel = rms(lap.f_hat().iter().zip(&means).map(|(f, m)| f - m)) / rms(means.iter().copied());
        assert!(rel <= 1e-3, "seed {seed}: relative RMS {rel}");
    }
}

#[test]
fn near_gaussian_limit_evidence_matches_exact() {
    let spec = KernelSpec::matern52(vec![0.4, 0.4], 1.0).unwrap();
    for seed in 0..10 {
        let (pts, y) = noisy_dataset(100 + seed, 15, 2, 0.1);
        let (exact_nlml, _) = nlml(&pts, &y, &spec, 0.01).unwrap();
        let ev = laplace_evidence(&pts, &y, &spec, &matched_lik(0.01, 1000.0), &LaplaceOptions::default()).unwrap();
        assert!((ev + exact_nlml).abs() <= 1e-2, "seed {seed}: {ev} vs {}", -exact_nlml);
    }
}

#[test]
fn near_gaussian_limit_latent_prediction() {
    let spec = KernelSpec::matern52(vec![0.3, 0.5], 1.2).unwrap();
    let (pts, y) = noisy_dataset(7, 20, 2, 0.1);
    let opts = LaplaceOptions { prior_mean: 0.3, ..LaplaceOptions::default() };
    let exact = GaussianGp::condition(&pts, &y, spec.clone(), 0.01, 0.3).unwrap();
    let lap = laplace_mode(&pts, &y, &spec, &matched_lik(0.01, 1000.0), &opts).unwrap();
    let mut r = rng(8);
    for q in uniform_points(&mut r, 30, 2) {
        let (m, v) = lap.predict_latent(&q).unwrap();
        let p = exact.predict(&q).unwrap();
        assert!((m - p.mean).abs() <= 1e-3 * p.mean.abs().max(0.1));
        assert!((v - p.variance).abs() <= 1e-2 * p.variance.max(1e-3));
    }
}

/// m clean points near zero interleaved with m points at `level`, all inside
/// a short interval so that a single smooth latent must explain both groups.
fn ohagan(level: f64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<usize>) {
    let m = 5;
    let mut pts = Vec::new();
    let mut y = Vec::new();
    let mut clean = Vec::new();
    for i in 0..2 * m {
        pts.push(vec![0.05 * i as f64]);
        if i % 2 == 0 {
            clean.push(i);
            y.push(0.05 * ((i as f64) * 1.3).sin());
        } else {
            y.push(level);
        }
    }
    (pts, y, clean)
}

#[test]
fn student_t_rejects_half_of_the_points() {
    let spec = KernelSpec::matern52(vec![1.0], 1.0).unwrap();
    let lik = StudentTLik::new(4.0, 0.1).unwrap();
    let noise = 0.01;
    let (pts, y50, clean) = ohagan(50.0);
    let (_, y500, _) = ohagan(500.0);
    let clean_pts: Vec<Vec<f64>> = clean.iter().map(|&i| pts[i].clone()).collect();
    let clean_y: Vec<f64> = clean.iter().map(|&i| y50[i]).collect();
    let clean_gp = GaussianGp::condition(&clean_pts, &clean_y, spec.clone(), noise, 0.0).unwrap();

    let shift = |y: &[f64]| {
        let gp = GaussianGp::condition(&pts, y, spec.clone(), noise, 0.0).unwrap();
        clean.iter().map(|&i| (gp.predict(&pts[i]).unwrap().mean - clean_gp.predict(&pts[i]).unwrap().mean).abs()).fold(0.0, f64::max)
    };
    let gauss50 = shift(&y50);
    let gauss500 = shift(&y500);
    assert!(gauss500 > 9.0 * gauss50);

    let lap50 = laplace_mode(&pts, &y50, &spec, &lik, &LaplaceOptions::default()).unwrap();
    let lap500 = laplace_mode(&pts, &y500, &spec, &lik, &LaplaceOptions::default()).unwrap();
    assert!(lap50.converged() && lap500.converged());
    let f50 = lap50.f_hat();
    let f500 = lap500.f_hat();
    let lap_shift = clean
        .iter()
        .map(|&i| (f50[i] - clean_gp.predict(&pts[i]).unwrap().mean).abs())
        .fold(0.0, f64::max);
    assert!(lap_shift <= 0.2 * gauss50, "{lap_shift} vs gaussian {gauss50}");
    let saturation = clean.iter().map(|&i| (f50[i] - f500[i]).abs()).fold(0.0, f64::max);
    assert!(saturation <= 1e-2, "{saturation}");
}

#[test]
fn newton_objective_never_decreases() {
    let spec = KernelSpec::matern52(vec![0.2, 0.2], 1.0).unwrap();
    let lik = StudentTLik::new(3.0, 0.05).unwrap();
    for seed in 0..20 {
        let (pts, mut y) = noisy_dataset(200 + seed, 25, 2, 0.05);
        for i in (0..25).step_by(4) {
            y[i] += 3.0;
        }
        let m = laplace_mode(&pts, &y, &spec, &lik, &LaplaceOptions::default()).unwrap();
        assert!(m.objective_trace().windows(2).all(|w| w[1] >= w[0]));
        assert!(m.converged());
        assert!(m.gradient_norm() <= 1e-6 * (1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()))));
        assert!(m.w().iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn permutation_equivariance() {
    let spec = KernelSpec::matern52(vec![0.3, 0.3], 1.0).unwrap();
    let lik = StudentTLik::new(4.0, 0.1).unwrap();
    let (pts, mut y) = noisy_dataset(31, 15, 2, 0.1);
    y[3] += 4.0;
    let perm: Vec<usize> = (0..15).map(|i| (i * 7 + 3) % 15).collect();
    let pts_p: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
    let y_p: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    let a = laplace_mode(&pts, &y, &spec, &lik, &LaplaceOptions::default()).unwrap();
    let b = laplace_mode(&pts_p, &y_p, &spec, &lik, &LaplaceOptions::default()).unwrap();
    let fa = a.f_hat();
    let fb = b.f_hat();
    for (k, &i) in perm.iter().enumerate() {
        assert!((fa[i] - fb[k]).abs() < 1e-8);
    }
    assert!((a.log_evidence() - b.log_evidence()).abs() < 1e-8);
}

#[test]
fn fit_laplace_tracks_exact_gp_on_clean_data() {
    let mut errs = Vec::new();
    for seed in 0..20 {
        let (pts, y) = noisy_dataset(300 + seed, 30, 1, 0.1);
        let hb = HyperBounds::from_data(&pts, &y);
        let exact = fit_exact(&pts, &y, &hb, &ExactFitOptions { seed, ..Default::default() }).unwrap();
        let lap = fit_laplace(&pts, &y, &hb, &LaplaceFitOptions { seed, ..Default::default() }).unwrap();
        let grid: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let e = rms(grid.iter().map(|&x| lap.predict_latent(&[x]).unwrap().0 - exact.predict(&[x]).unwrap().mean));
        errs.push(e / variance(&y).sqrt());
    }
    let med = median(&mut errs);
    assert!(med <= 0.05, "median normalized RMS {med}");
}

#[test]
fn fit_laplace_is_deterministic() {
    let (pts, y) = noisy_dataset(5, 12, 2, 0.1);
    let hb = HyperBounds::from_data(&pts, &y);
    let opts = LaplaceFitOptions { seed: 3, ..Default::default() };
    let a = fit_laplace(&pts, &y, &hb, &opts).unwrap();
    let b = fit_laplace(&pts, &y, &hb, &opts).unwrap();
    assert_eq!(a.spec(), b.spec());
    assert_eq!(a.lik(), b.lik());
    assert_eq!(a.f_hat(), b.f_hat());
}

#[test]
fn heavy_tail_scale_is_smaller_than_gaussian_noise_with_outliers() {
    let mut wins = 0;
    for seed in 0..20 {
        let (pts, mut y) = noisy_dataset(400 + seed, 30, 1, 0.1);
        let sd = variance(&y).sqrt();
        let mut r = rng(500 + seed);
        for v in y.iter_mut() {
            if rand::Rng::random::<f64>(&mut r) < 0.2 {
                *v += 5.0 * sd;
            }
        }
        let hb = HyperBounds::from_data(&pts, &y);
        let exact = fit_exact(&pts, &y, &hb, &ExactFitOptions { seed, ..Default::default() }).unwrap();
        let lap = fit_laplace(&pts, &y, &hb, &LaplaceFitOptions { seed, ..Default::default() }).unwrap();
        if lap.lik().scale() < exact.noise_variance().sqrt() {
            wins += 1;
        }
    }
    assert!(wins >= 16, "{wins}/20");
}

#[test]
fn learned_dof_stays_in_range() {
    let (pts, mut y) = noisy_dataset(9, 20, 1, 0.1);
    y[4] += 3.0;
    let hb = HyperBounds::from_data(&pts, &y);
    let opts = LaplaceFitOptions { learn_dof: true, ..Default::default() };
    let m = fit_laplace(&pts, &y, &hb, &opts).unwrap();
    assert!((2.0..=100.0).contains(&m.lik().dof()));
}
