use nalgebra::{DMatrix, DVector};

use super::StatsError;

#[derive(Debug, Clone)]
pub struct PrincipalComponent {
    pub scores: DVector<f64>,
    pub loadings: DVector<f64>,
    /// Sample variance (denominator n − 1) of the scores.
    pub variance: f64,
}

/// First principal component of the column-centered matrix, computed from
/// its thin SVD. The loading with the largest magnitude is made positive.
pub fn first_principal_component(x: &DMatrix<f64>) -> Result<PrincipalComponent, StatsError> {
    let (n, k) = x.shape();
    if n < 2 || k == 0 {
        return Err(StatsError::DegenerateInput(format!("{n}x{k} matrix")));
    }
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    if centered.amax() == 0.0 {
        return Err(StatsError::DegenerateInput("all columns have zero variance".into()));
    }
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (lead, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, &s)| if s > best.1 { (i, s) } else { best });
    let mut loadings: DVector<f64> = v_t.row(lead).transpose();
    let pivot = loadings.iamax();
    if loadings[pivot] < 0.0 {
        loadings = -loadings;
    }
    let scores = &centered * &loadings;
    let s = svd.singular_values[lead];
    Ok(PrincipalComponent { scores, loadings, variance: s * s / (n as f64 - 1.0) })
}
