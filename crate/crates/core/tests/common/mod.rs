//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use lacsh::data::Dataset;
use lacsh::spatial::LatLon;
use lacsh::stats::RngStream;
use nalgebra::{DMatrix, DVector};

/// Small standardized dataset with a loose one-factor structure in Y.
pub fn small_dataset(n: usize, p: usize, k: usize, q: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed, 99);
    let coords: Vec<LatLon> =
        (0..n).map(|_| LatLon::new(-60.0 + 120.0 * rng.uniform(), -180.0 + 360.0 * rng.uniform()).unwrap()).collect();
    let xstar = DMatrix::from_fn(n, k, |_, _| rng.normal());
    let ystar = DMatrix::from_fn(n, q, |_, _| rng.normal());
    let t = DVector::from_fn(n, |i, _| 0.5 * xstar.row(i).sum() + rng.normal());
    let mut h = DVector::from_fn(n, |i, _| 0.4 * t[i] + rng.normal());
    let anchor = 0;
    h[anchor] = -h[anchor].abs() - 0.5;
    let a = DVector::from_fn(p, |j, _| 1.0 + 0.2 * j as f64);
    let y = DMatrix::from_fn(n, p, |i, j| a[j] * h[i] + 0.5 * rng.normal());
    Dataset::from_matrices(y, xstar, ystar, t, coords, anchor).unwrap()
}

/// Total variation between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Mean and batch-means standard error.
pub fn mean_and_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let m = xs.iter().sum::<f64>() / n as f64;
    let b = n / batches;
    let bm: Vec<f64> = (0..batches).map(|k| xs[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64).collect();
    let var = bm.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (m, (var / batches as f64).sqrt())
}
