use nalgebra::DMatrix;

use super::AnalysisError;
use crate::data::Dataset;
use crate::model::y_log_likelihood;
use crate::sampler::ChainStore;

#[derive(Debug, Clone, PartialEq)]
pub struct LpmlResult {
    pub lpml: f64,
    /// `log CPO_i` per unit.
    pub log_cpo: Vec<f64>,
}

/// Harmonic-mean CPO from an S×N matrix of `log f(y_i | θ_s)`:
/// `log CPO_i = log S − logsumexp_s(−ℓ_is)`.
pub fn lpml_from_log_likelihood(loglik: &DMatrix<f64>) -> Result<LpmlResult, AnalysisError> {
    let (s, n) = loglik.shape();
    if s == 0 {
        return Err(AnalysisError::EmptyChain);
    }
    let mut log_cpo = Vec::with_capacity(n);
    let mut bad = Vec::new();
    for i in 0..n {
        let col = loglik.column(i);
        if col.iter().any(|l| !l.is_finite()) {
            bad.push(i);
            log_cpo.push(f64::NAN);
            continue;
        }
        let m = col.iter().map(|l| -l).fold(f64::NEG_INFINITY, f64::max);
        let lse = m + col.iter().map(|l| (-l - m).exp()).sum::<f64>().ln();
        log_cpo.push((s as f64).ln() - lse);
    }
    if !bad.is_empty() {
        return Err(AnalysisError::DegenerateCpo { units: bad });
    }
    Ok(LpmlResult { lpml: log_cpo.iter().sum(), log_cpo })
}

/// LPML of the Y-level likelihood over the retained draws.
pub fn lpml(chain: &ChainStore, data: &Dataset) -> Result<LpmlResult, AnalysisError> {
    if chain.is_empty() {
        return Err(AnalysisError::EmptyChain);
    }
    let mut ll = DMatrix::zeros(chain.len(), data.n());
    for (s, d) in chain.draws.iter().enumerate() {
        let row = y_log_likelihood(d, &data.y)?;
        ll.set_row(s, &row.transpose());
    }
    lpml_from_log_likelihood(&ll)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_draw_hand_computation() {
        let ll = DMatrix::from_column_slice(2, 1, &[0.2f64.ln(), 0.4f64.ln()]);
        let r = lpml_from_log_likelihood(&ll).unwrap();
        let expected = (1.0f64 / (0.5 * (5.0 + 2.5))).ln();
        assert!((r.lpml - expected).abs() < 1e-12);
        assert!((r.lpml.exp() - 0.266_666_666_666_666_7).abs() < 1e-12);
    }

    #[test]
    fn single_draw_reduces_to_log_likelihood() {
        let ll = DMatrix::from_row_slice(1, 3, &[-1.5, -0.25, -7.0]);
        assert!((lpml_from_log_likelihood(&ll).unwrap().lpml - (-8.75)).abs() < 1e-14);
    }

    #[test]
    fn extreme_values_stay_finite_and_degenerate_units_are_named() {
        let ll = DMatrix::from_row_slice(2, 2, &[-2000.0, -1.0, -2001.0, -1.0]);
        let r = lpml_from_log_likelihood(&ll).unwrap();
        assert!(r.log_cpo[0].is_finite() && r.log_cpo[0] < -2000.0);
        let bad = DMatrix::from_row_slice(2, 2, &[f64::NEG_INFINITY, -1.0, -1.0, f64::NAN]);
        match lpml_from_log_likelihood(&bad) {
            Err(AnalysisError::DegenerateCpo { units }) => assert_eq!(units, vec![0, 1]),
            other => panic!("{other:?}"),
        }
    }
}
