//! Brute-force grid posteriors for low-dimensional targets.

use super::ValidationError;

/// Largest grid evaluated, in cells.
pub const MAX_GRID_CELLS: usize = 10_000_000;

/// `cells` equal-width cells on `[lo, hi]`, evaluated at their midpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self, ValidationError> {
        if !(hi > lo) || cells == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(ValidationError::InvalidSpec(format!("grid axis [{lo}, {hi}] with {cells} cells")));
        }
        Ok(GridAxis { lo, hi, cells })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }

    /// Cell holding `x`, or `None` outside the axis.
    pub fn cell(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        Some((((x - self.lo) / self.width()) as usize).min(self.cells - 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    pub axes: Vec<GridAxis>,
    /// Normalized per-axis marginal cell probabilities.
    pub marginals: Vec<Vec<f64>>,
    /// `log Σ exp(log density) · cell volume`.
    pub log_normalizer: f64,
}

/// Evaluate `log_density` at every cell midpoint of the product grid and
/// return normalized marginals. Cells with `−∞` density carry no mass.
pub fn grid_posterior_oracle<F>(axes: &[GridAxis], log_density: F) -> Result<GridPosterior, ValidationError>
where
    F: Fn(&[f64]) -> f64,
{
    if axes.is_empty() {
        return Err(ValidationError::InvalidSpec("grid needs at least one axis".into()));
    }
    let cells = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.cells));
    let cells = match cells {
        Some(c) if c <= MAX_GRID_CELLS => c,
        _ => return Err(ValidationError::GridTooLarge { cells: cells.unwrap_or(usize::MAX), max: MAX_GRID_CELLS }),
    };
    let d = axes.len();
    let mut logs = Vec::with_capacity(cells);
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    for _ in 0..cells {
        for (j, a) in axes.iter().enumerate() {
            point[j] = a.midpoint(idx[j]);
        }
        let l = log_density(&point);
        if l.is_nan() || l == f64::INFINITY {
            return Err(ValidationError::InvalidSpec(format!("log density {l} at {point:?}")));
        }
        logs.push(l);
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < axes[j].cells {
                break;
            }
            idx[j] = 0;
        }
    }
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(ValidationError::InvalidSpec("density is zero on the whole grid".into()));
    }
    let mut marginals: Vec<Vec<f64>> = axes.iter().map(|a| vec![0.0; a.cells]).collect();
    let mut total = 0.0;
    idx.iter_mut().for_each(|i| *i = 0);
    for l in &logs {
        let w = (l - m).exp();
        total += w;
        for j in 0..d {
            marginals[j][idx[j]] += w;
        }
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < axes[j].cells {
                break;
            }
            idx[j] = 0;
        }
    }
    for mg in &mut marginals {
        mg.iter_mut().for_each(|p| *p /= total);
    }
    let volume: f64 = axes.iter().map(GridAxis::width).product();
    Ok(GridPosterior { axes: axes.to_vec(), marginals, log_normalizer: m + total.ln() + volume.ln() })
}

/// Fraction of `samples` per cell of `axis`; values outside it are dropped
/// from the numerator but kept in the denominator.
pub fn histogram(samples: &[f64], axis: &GridAxis) -> Vec<f64> {
    let mut out = vec![0.0; axis.cells];
    for &x in samples {
        if let Some(k) = axis.cell(x) {
            out[k] += 1.0;
        }
    }
    let n = samples.len().max(1) as f64;
    out.iter_mut().for_each(|c| *c /= n);
    out
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Base-variant toy with one unit and one metric, μ and σ²_H fixed:
/// `p(H, a | y) ∝ N(H; μ, σ²_H) 1{H < 0} N(a; m_a, v_a) N(y; aH, σ²_Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyPosterior {
    pub y: f64,
    pub mu: f64,
    pub sigma2_h: f64,
    pub sigma2_y: f64,
    pub a_mean: f64,
    pub a_var: f64,
}

impl ToyPosterior {
    pub fn log_density(&self, h: f64, a: f64) -> f64 {
        if h >= 0.0 {
            return f64::NEG_INFINITY;
        }
        -(h - self.mu).powi(2) / (2.0 * self.sigma2_h)
            - (a - self.a_mean).powi(2) / (2.0 * self.a_var)
            - (self.y - a * h).powi(2) / (2.0 * self.sigma2_y)
    }

    /// Grid marginals of H and a over `h_axis × a_axis`.
    pub fn grid(&self, h_axis: GridAxis, a_axis: GridAxis) -> Result<GridPosterior, ValidationError> {
        grid_posterior_oracle(&[h_axis, a_axis], |x| self.log_density(x[0], x[1]))
    }
}
