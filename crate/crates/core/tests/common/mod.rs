#![allow(dead_code)]

use causa::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// Simplex projection by bisection on the threshold of `max(y − θ, 0)`.
pub fn bisect_simplex(y: &[f64]) -> Vec<f64> {
    let mass = |t: f64| y.iter().map(|v| (v - t).max(0.0)).sum::<f64>();
    let mut lo = y.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    y.iter().map(|v| (v - t).max(0.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Views of `n` samples with a class signal on the first rows of each view.
pub fn small_dataset(dims: &[usize], n: usize, classes: usize, seed: u64) -> causa::MultiViewDataset {
    let mut r = rng(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let views = dims
        .iter()
        .map(|&d| {
            let mut x = gaussian(d, n, &mut r);
            for i in 0..n {
                for k in 0..d.min(3) {
                    x[(k, i)] += 3.0 * ((labels[i] + k) % classes) as f64;
                }
            }
            x
        })
        .collect();
    causa::MultiViewDataset::new(views, Some(labels)).unwrap()
}
