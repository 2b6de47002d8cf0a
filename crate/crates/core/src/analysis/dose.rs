use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;

use super::AnalysisError;
use crate::data::Dataset;
use crate::model::{gps_density, outcome_row, ModelVariant, ParameterState};
use crate::sampler::ChainStore;
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, PartialEq)]
pub struct DoseResponseCurve {
    pub t_grid: Vec<f64>,
    /// Pointwise posterior median over all draws.
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Evenly thinned subset of per-draw curves, one row per curve.
    pub curves: DMatrix<f64>,
    pub curve_scans: Vec<u64>,
    /// Some grid point lies outside the observed treatment range.
    pub extrapolated: bool,
}

/// `points` equally spaced values spanning the observed treatment range.
pub fn default_t_grid(data: &Dataset, points: usize) -> Vec<f64> {
    let lo = data.t.min();
    let hi = data.t.max();
    match points {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..points)
            .map(|k| if k + 1 == points { hi } else { lo + (hi - lo) * k as f64 / (points - 1) as f64 })
            .collect(),
    }
}

/// `μ̂(t) = (1/N) Σ_i β·(1, t, t², r_i, r_i², t r_i)` with `r_i = r(t, Z*_i)`
/// under one draw.
fn curve(draw: &ParameterState, zstar: &DMatrix<f64>, grid: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let n = zstar.nrows();
    let beta = draw.beta.as_slice();
    let gamma = draw.gamma.as_slice();
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        let mut acc = 0.0;
        for i in 0..n {
            let z: Vec<f64> = zstar.row(i).iter().copied().collect();
            let r = gps_density(t, &z, gamma, draw.sigma2_t)?;
            acc += outcome_row(t, r).iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();
        }
        out.push(acc / n as f64);
    }
    Ok(out)
}

/// Per-draw dose-response curves on `t_grid`, summarized pointwise, plus
/// `thin_to` evenly spaced curves for plotting.
pub fn dose_response(
    chain: &ChainStore,
    data: &Dataset,
    t_grid: &[f64],
    thin_to: usize,
) -> Result<DoseResponseCurve, AnalysisError> {
    if t_grid.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    if chain.is_empty() {
        return Err(AnalysisError::EmptyChain);
    }
    if chain.config.model.variant != ModelVariant::Lacsh {
        return Err(AnalysisError::Unsupported("dose-response needs the lacsh variant".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(AnalysisError::Unsupported("dose-response grid must be strictly increasing".into()));
    }
    let (lo, hi) = (data.t.min(), data.t.max());
    let extrapolated = t_grid[0] < lo || t_grid[t_grid.len() - 1] > hi;
    if extrapolated {
        warn!(
            "dose-response grid [{}, {}] extends beyond observed treatment range [{lo}, {hi}]",
            t_grid[0],
            t_grid[t_grid.len() - 1]
        );
    }
    let zstar = data.zstar();
    let curves: Vec<Vec<f64>> =
        chain.draws.par_iter().map(|d| curve(d, &zstar, t_grid)).collect::<Result<Vec<_>, _>>()?;
    let s = curves.len();
    let g = t_grid.len();
    let mut median = Vec::with_capacity(g);
    let mut lower = Vec::with_capacity(g);
    let mut upper = Vec::with_capacity(g);
    for k in 0..g {
        let mut col: Vec<f64> = curves.iter().map(|c| c[k]).collect();
        col.sort_by(f64::total_cmp);
        median.push(quantile_sorted(&col, 0.5));
        lower.push(quantile_sorted(&col, 0.05));
        upper.push(quantile_sorted(&col, 0.95));
    }
    let m = thin_to.min(s);
    let picks: Vec<usize> = (0..m).map(|j| j * s / m).collect();
    let thinned = DMatrix::from_fn(m, g, |r, k| curves[picks[r]][k]);
    Ok(DoseResponseCurve {
        t_grid: t_grid.to_vec(),
        median,
        lower,
        upper,
        curves: thinned,
        curve_scans: picks.iter().map(|&p| chain.scan_index[p]).collect(),
        extrapolated,
    })
}

pub fn is_strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::McmcConfig;
    use crate::spatial::LatLon;
    use crate::stats::RngStream;
    use nalgebra::DVector;

    fn data(n: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed, 0);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.normal());
        let t = DVector::from_fn(n, |i, _| x[(i, 0)] + rng.normal());
        let coords = (0..n).map(|i| LatLon::new(i as f64, 0.0).unwrap()).collect();
        Dataset::from_matrices(DMatrix::from_fn(n, 1, |_, _| rng.normal()), x, DMatrix::zeros(n, 0), t, coords, 0)
            .unwrap()
    }

    fn chain(betas: &[[f64; 6]], k: usize, seed: u64) -> ChainStore {
        let mut rng = RngStream::new(seed, 1);
        let draws: Vec<ParameterState> = betas
            .iter()
            .map(|b| ParameterState {
                a: DVector::from_element(1, 1.0),
                h: DVector::from_element(1, -1.0),
                sigma_y: DMatrix::identity(1, 1),
                beta: DVector::from_row_slice(b),
                gamma: DVector::from_fn(1 + k, |_, _| rng.normal()),
                sigma2_t: 0.5 + rng.uniform(),
                sigma2_h: 1.0,
                phi: 1.0,
                zeta: DVector::zeros(2 + k),
            })
            .collect();
        ChainStore {
            scan_index: (1..=draws.len() as u64).collect(),
            accepted: vec![true; draws.len()],
            draws,
            acceptance_count: 0,
            proposals: 0,
            proposal_covariance: DMatrix::zeros(0, 0),
            config: McmcConfig::default(),
            anchor_index: 0,
        }
    }

    #[test]
    fn single_draw_single_unit_matches_direct_evaluation() {
        let d = data(1, 2);
        let c = chain(&[[0.3, -0.2, 0.1, 1.5, -0.7, 0.4]], 2, 3);
        let grid = [-1.0, 0.0, 0.5, 2.0];
        let out = dose_response(&c, &d, &grid, 100).unwrap();
        let draw = &c.draws[0];
        for (k, &t) in grid.iter().enumerate() {
            let z: Vec<f64> = d.zstar().row(0).iter().copied().collect();
            let r = gps_density(t, &z, draw.gamma.as_slice(), draw.sigma2_t).unwrap();
            let direct = 0.3 - 0.2 * t + 0.1 * t * t + 1.5 * r - 0.7 * r * r + 0.4 * t * r;
            assert!((out.median[k] - direct).abs() < 1e-14);
        }
        assert_eq!(out.curves.nrows(), 1);
    }

    #[test]
    fn gps_free_draws_give_the_quadratic() {
        let d = data(30, 5);
        let betas: Vec<[f64; 6]> = (0..50).map(|s| [0.1 * s as f64, 1.0, -0.3, 0.0, 0.0, 0.0]).collect();
        let c = chain(&betas, 2, 6);
        let grid = default_t_grid(&d, 200);
        let out = dose_response(&c, &d, &grid, 100).unwrap();
        assert_eq!(out.curves.nrows(), 50);
        for (r, s) in out.curve_scans.iter().enumerate() {
            let b = betas[(*s - 1) as usize];
            for (k, &t) in grid.iter().enumerate() {
                assert!((out.curves[(r, k)] - (b[0] + b[1] * t + b[2] * t * t)).abs() < 1e-10);
            }
        }
        assert!(!out.extrapolated);
        assert!(out.lower.iter().zip(&out.median).zip(&out.upper).all(|((l, m), u)| l <= m && m <= u));
    }

    #[test]
    fn grid_errors_and_extrapolation_flag() {
        let d = data(5, 1);
        let c = chain(&[[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]], 2, 1);
        assert!(matches!(dose_response(&c, &d, &[], 10), Err(AnalysisError::EmptyGrid)));
        assert!(dose_response(&c, &d, &[1.0, 1.0], 10).is_err());
        let out = dose_response(&c, &d, &[d.t.max() + 1.0, d.t.max() + 2.0], 10).unwrap();
        assert!(out.extrapolated);
        assert!(is_strictly_increasing(&out.median));
    }
}
