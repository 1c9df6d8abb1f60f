#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::StandardNormal;
use robust_bo::rng::{stream, Rng};

pub fn rng(seed: u64) -> Rng {
    stream(seed, &[0xC0FFEE])
}

pub fn uniform_points(rng: &mut Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

pub fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn smooth(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(k, v)| ((k as f64 + 2.0) * v).sin()).sum::<f64>()
}

pub fn rms(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n as f64).sqrt()
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}
