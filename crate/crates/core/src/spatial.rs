//! Great-circle distances and the exponential spatial correlation kernel.
//!
//! Distances are in megameters on a sphere of mean Earth radius 6.371 Mm.
//! Correlation between units `n`, `m` is `exp(-d_nm / phi)`.

use std::io::Write;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::stats::{CholeskyFactor, StatsError};

pub const EARTH_RADIUS_MM: f64 = 6.371;

/// Relative diagonal jitter applied once when factoring Σ_H fails.
pub const COVARIANCE_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("invalid coordinate (lat {lat}, lon {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("inverse decay parameter phi must be positive, got {0}")]
    NonpositivePhi(f64),
    #[error("spatial variance must be positive, got {0}")]
    NonpositiveVariance(f64),
    #[error("spatial covariance could not be factored after jitter: {0}")]
    Factorization(StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self, SpatialError> {
        let c = LatLon { lat, lon };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SpatialError> {
        let ok = self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && self.lon > -180.0
            && self.lon <= 180.0;
        if ok {
            Ok(())
        } else {
            Err(SpatialError::InvalidCoordinate { lat: self.lat, lon: self.lon })
        }
    }
}

/// Haversine distance between two points, in the units of `radius`.
pub fn great_circle_distance(a: LatLon, b: LatLon, radius: f64) -> Result<f64, SpatialError> {
    a.validate()?;
    b.validate()?;
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    Ok(2.0 * radius * h.sqrt().asin())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub d: DMatrix<f64>,
    pub earth_radius: f64,
}

impl DistanceMatrix {
    pub fn from_coords(coords: &[LatLon], radius: f64) -> Result<Self, SpatialError> {
        let n = coords.len();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = great_circle_distance(coords[i], coords[j], radius)?;
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        Ok(DistanceMatrix { d, earth_radius: radius })
    }

    pub fn len(&self) -> usize {
        self.d.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.d.nrows() == 0
    }

    /// Square CSV with a header of unit labels.
    pub fn write_csv<W: Write>(&self, labels: &[String], mut out: W) -> std::io::Result<()> {
        write!(out, "unit_id")?;
        for l in labels {
            write!(out, ",{l}")?;
        }
        writeln!(out)?;
        for i in 0..self.len() {
            write!(out, "{}", labels[i])?;
            for j in 0..self.len() {
                write!(out, ",{}", self.d[(i, j)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SpatialCorrelation {
    pub omega: DMatrix<f64>,
    pub phi: f64,
}

pub fn correlation(d: f64, phi: f64) -> f64 {
    (-d / phi).exp()
}

pub fn correlation_matrix(dist: &DistanceMatrix, phi: f64) -> Result<SpatialCorrelation, SpatialError> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(SpatialError::NonpositivePhi(phi));
    }
    let n = dist.len();
    let omega = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { correlation(dist.d[(i, j)], phi) });
    Ok(SpatialCorrelation { omega, phi })
}

pub fn h_covariance(sigma2_h: f64, omega: &SpatialCorrelation) -> Result<DMatrix<f64>, SpatialError> {
    if !(sigma2_h > 0.0) {
        return Err(SpatialError::NonpositiveVariance(sigma2_h));
    }
    Ok(&omega.omega * sigma2_h)
}

/// Factor Ω, retrying once with `COVARIANCE_JITTER` added to the diagonal.
/// Scaling by σ²_H commutes with this, so the jitter is relative to σ²_H.
pub fn factor_correlation(omega: &SpatialCorrelation) -> Result<CholeskyFactor, SpatialError> {
    CholeskyFactor::with_jitter(&omega.omega, COVARIANCE_JITTER).map_err(SpatialError::Factorization)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{min_eigenvalue, RngStream};

    fn ll(lat: f64, lon: f64) -> LatLon {
        LatLon::new(lat, lon).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(great_circle_distance(ll(0.0, 0.0), ll(0.0, 0.0), EARTH_RADIUS_MM).unwrap(), 0.0);
        let q = great_circle_distance(ll(0.0, 0.0), ll(0.0, 90.0), EARTH_RADIUS_MM).unwrap();
        assert!((q - 10.00754).abs() < 1e-5, "{q}");
        let a = great_circle_distance(ll(0.0, 0.0), ll(0.0, 180.0), EARTH_RADIUS_MM).unwrap();
        assert!((a - 20.01508).abs() < 1e-5, "{a}");
    }

    #[test]
    fn invalid_coordinates() {
        assert!(LatLon::new(91.0, 0.0).is_err());
        assert!(LatLon::new(0.0, -180.0).is_err());
        assert!(LatLon::new(0.0, 180.0).is_ok());
        assert!(LatLon::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn kernel_values() {
        assert_eq!(correlation(0.0, 2.0), 1.0);
        assert!((correlation(3.0, 3.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((correlation(10.74, 5.37) - 0.135_335_283_236_612_7).abs() < 1e-12);
    }

    #[test]
    fn covariance_two_units() {
        let phi = 1.7;
        let dist = DistanceMatrix { d: DMatrix::from_row_slice(2, 2, &[0.0, phi, phi, 0.0]), earth_radius: 1.0 };
        let omega = correlation_matrix(&dist, phi).unwrap();
        assert_eq!(h_covariance(1.0, &omega).unwrap(), omega.omega);
        let s = h_covariance(4.0, &omega).unwrap();
        let e = 4.0 * (-1.0f64).exp();
        assert!((s[(0, 0)] - 4.0).abs() < 1e-15 && (s[(0, 1)] - e).abs() < 1e-15 && (s[(1, 0)] - e).abs() < 1e-15);
        assert!(matches!(h_covariance(0.0, &omega), Err(SpatialError::NonpositiveVariance(_))));
        assert!(matches!(correlation_matrix(&dist, -1.0), Err(SpatialError::NonpositivePhi(_))));
    }

    #[test]
    fn random_five_units_positive_definite() {
        let mut rng = RngStream::new(40, 0);
        let coords: Vec<LatLon> = (0..5)
            .map(|_| ll((2.0 * rng.uniform() - 1.0).asin().to_degrees(), 360.0 * rng.uniform() - 180.0 + 1e-9))
            .collect();
        let dist = DistanceMatrix::from_coords(&coords, EARTH_RADIUS_MM).unwrap();
        let omega = correlation_matrix(&dist, 3.0).unwrap();
        let s = h_covariance(2.0, &omega).unwrap();
        assert!(min_eigenvalue(&s) > 0.0);
    }

    #[test]
    fn distance_matrix_invariants() {
        let coords = [ll(10.0, 20.0), ll(-45.0, 170.0), ll(60.0, -100.0)];
        let dist = DistanceMatrix::from_coords(&coords, EARTH_RADIUS_MM).unwrap();
        let max = std::f64::consts::PI * EARTH_RADIUS_MM;
        for i in 0..3 {
            assert_eq!(dist.d[(i, i)], 0.0);
            for j in 0..3 {
                assert_eq!(dist.d[(i, j)], dist.d[(j, i)]);
                assert!(dist.d[(i, j)] >= 0.0 && dist.d[(i, j)] <= max);
            }
        }
    }
}
