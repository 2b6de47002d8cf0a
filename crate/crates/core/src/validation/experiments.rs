//! Repeated-simulation checks: interval coverage, balance calibration and
//! power, and LPML model comparison.

use std::io::Write;

use log::info;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::synthetic::{generate_synthetic_stream, SyntheticSpec};
use super::ValidationError;
use crate::analysis::{covariate_balance, lpml, BalanceOptions};
use crate::data::Dataset;
use crate::model::OutcomeTerms;
use crate::sampler::{run_chain, ChainStore, McmcConfig};
use crate::spatial::LatLon;
use crate::stats::{quantiles, RngStream};

/// Synthetic data for replicate `r` uses this stream offset; chains use
/// streams `2r` and `2r + 1`, so the two never collide.
const DATA_STREAM_BASE: u64 = 1 << 32;

/// Fewest replicates a coverage experiment accepts.
pub const MIN_COVERAGE_REPLICATES: usize = 10;

#[derive(Debug, Clone)]
pub struct CoverageSpec {
    pub synthetic: SyntheticSpec,
    pub mcmc: McmcConfig,
    pub replicates: usize,
    /// Central interval probability, e.g. 0.9.
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub parameter: String,
    pub covered: usize,
    pub evaluated: usize,
}

impl CoverageRow {
    pub fn rate(&self) -> f64 {
        self.covered as f64 / self.evaluated as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    /// Replicates whose generation or chain failed, with the reason.
    pub failed: Vec<(usize, String)>,
    pub replicates: usize,
}

impl CoverageReport {
    pub fn row(&self, parameter: &str) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.parameter == parameter)
    }
}

fn tracked(chain: &ChainStore, truth: &crate::model::ParameterState) -> Vec<(String, Vec<f64>, f64)> {
    let mut out = vec![
        ("beta_1".to_string(), chain.draws.iter().map(|d| d.beta[1]).collect::<Vec<_>>(), truth.beta[1]),
        ("sigma2_H".to_string(), chain.draws.iter().map(|d| d.sigma2_h).collect(), truth.sigma2_h),
        ("phi".to_string(), chain.draws.iter().map(|d| d.phi).collect(), truth.phi),
    ];
    for j in 0..truth.a.len() {
        out.push((format!("a_{j}"), chain.draws.iter().map(|d| d.a[j]).collect(), truth.a[j]));
    }
    out
}

/// Per-replicate hits, or the failure message.
type ReplicateOutcome = Result<Vec<(String, bool)>, String>;

fn coverage_replicate(spec: &CoverageSpec, r: usize) -> ReplicateOutcome {
    let truth = generate_synthetic_stream(&spec.synthetic, spec.seed, DATA_STREAM_BASE + r as u64)
        .map_err(|e| e.to_string())?;
    let cfg = McmcConfig { seed: spec.seed, chain_id: r as u64, model: spec.synthetic.model, ..spec.mcmc.clone() };
    let chain = run_chain(&cfg, &truth.dataset).map_err(|e| e.to_string())?;
    let tail = (1.0 - spec.level) / 2.0;
    Ok(tracked(&chain, &truth.state)
        .into_iter()
        .map(|(name, xs, t)| {
            let q = quantiles(&xs, &[tail, 1.0 - tail]);
            (name, q[0] <= t && t <= q[1])
        })
        .collect())
}

/// Fit `replicates` synthetic datasets in parallel and count how often the
/// central `level` interval contains the truth.
pub fn coverage_experiment(spec: &CoverageSpec) -> Result<CoverageReport, ValidationError> {
    if spec.replicates == 0 {
        return Err(ValidationError::NoReplicates);
    }
    if spec.replicates < MIN_COVERAGE_REPLICATES {
        return Err(ValidationError::InvalidSpec(format!(
            "{} replicates; coverage needs at least {MIN_COVERAGE_REPLICATES}",
            spec.replicates
        )));
    }
    if !(spec.level > 0.0 && spec.level < 1.0) {
        return Err(ValidationError::InvalidSpec(format!("interval level {} outside (0, 1)", spec.level)));
    }
    let outcomes: Vec<ReplicateOutcome> =
        (0..spec.replicates).into_par_iter().map(|r| coverage_replicate(spec, r)).collect();
    let mut rows: Vec<CoverageRow> = Vec::new();
    let mut failed = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(hits) => {
                for (name, hit) in hits {
                    let pos = match rows.iter().position(|row| row.parameter == name) {
                        Some(p) => p,
                        None => {
                            rows.push(CoverageRow { parameter: name, covered: 0, evaluated: 0 });
                            rows.len() - 1
                        }
                    };
                    rows[pos].evaluated += 1;
                    rows[pos].covered += usize::from(hit);
                }
            }
            Err(msg) => {
                info!("coverage replicate {r} failed: {msg}");
                failed.push((r, msg));
            }
        }
    }
    Ok(CoverageReport { rows, failed, replicates: spec.replicates })
}

/// How treatment relates to the covariates in a balance experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BalanceDesign {
    /// X i.i.d. standard normal, T independent standard normal.
    Null { n: usize, k: usize },
    /// X shares one common factor (loading 1, unit noise) and
    /// `T = strength · x₁ + noise_sd · ε`.
    Confounded { n: usize, k: usize, strength: f64, noise_sd: f64 },
}

impl BalanceDesign {
    fn generate(&self, rng: &mut RngStream) -> Result<Dataset, ValidationError> {
        let (n, k) = match *self {
            BalanceDesign::Null { n, k } | BalanceDesign::Confounded { n, k, .. } => (n, k),
        };
        let (x, t) = match *self {
            BalanceDesign::Null { .. } => {
                let x = DMatrix::from_fn(n, k, |_, _| rng.normal());
                (x, DVector::from_fn(n, |_, _| rng.normal()))
            }
            BalanceDesign::Confounded { strength, noise_sd, .. } => {
                let f: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
                let x = DMatrix::from_fn(n, k, |i, _| f[i] + rng.normal());
                let t = DVector::from_fn(n, |i, _| strength * x[(i, 0)] + noise_sd * rng.normal());
                (x, t)
            }
        };
        let coords =
            (0..n).map(|i| LatLon::new(0.0, -180.0 + 360.0 * (i as f64 + 0.5) / n as f64).expect("in range")).collect();
        let y = DMatrix::from_fn(n, 1, |_, _| rng.normal());
        Ok(Dataset::from_matrices(y, x, DMatrix::zeros(n, 0), t, coords, 0)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceExperimentReport {
    /// Flagged fraction in each replicate.
    pub fractions: Vec<f64>,
    pub mean: f64,
    pub threshold: f64,
}

/// Mean fraction of determinate blocks flagged at `1 − p > threshold`.
pub fn balance_experiment(
    design: BalanceDesign,
    opts: &BalanceOptions,
    replicates: usize,
    threshold: f64,
    seed: u64,
) -> Result<BalanceExperimentReport, ValidationError> {
    if replicates == 0 {
        return Err(ValidationError::NoReplicates);
    }
    let fractions = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, DATA_STREAM_BASE + r as u64);
            let d = design.generate(&mut rng)?;
            Ok(covariate_balance(&d, opts)?.flagged_fraction(threshold))
        })
        .collect::<Result<Vec<f64>, ValidationError>>()?;
    let finite: Vec<f64> = fractions.iter().copied().filter(|f| f.is_finite()).collect();
    if finite.is_empty() {
        return Err(ValidationError::InvalidSpec("every block was indeterminate".into()));
    }
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    Ok(BalanceExperimentReport { fractions, mean, threshold })
}

#[derive(Debug, Clone)]
pub struct LpmlComparisonSpec {
    /// Its `model.outcome_terms` is ignored: both fits see the same data.
    pub synthetic: SyntheticSpec,
    pub mcmc: McmcConfig,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpmlPair {
    pub seed: u64,
    pub full: f64,
    pub linear_only: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpmlComparison {
    pub pairs: Vec<LpmlPair>,
}

impl LpmlComparison {
    /// Seeds where the full outcome model has the higher LPML.
    pub fn full_wins(&self) -> usize {
        self.pairs.iter().filter(|p| p.full > p.linear_only).count()
    }
}

/// Fit the full and the linear-only outcome model to the same synthetic
/// data for every seed and record both LPMLs.
pub fn lpml_comparison(spec: &LpmlComparisonSpec) -> Result<LpmlComparison, ValidationError> {
    if spec.seeds.is_empty() {
        return Err(ValidationError::NoReplicates);
    }
    let mut synth = spec.synthetic.clone();
    synth.model.outcome_terms = OutcomeTerms::Full;
    let pairs = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let truth = generate_synthetic_stream(&synth, seed, DATA_STREAM_BASE)?;
            let fit = |terms: OutcomeTerms| -> Result<f64, ValidationError> {
                let mut cfg = McmcConfig { seed, ..spec.mcmc.clone() };
                cfg.model.outcome_terms = terms;
                let chain = run_chain(&cfg, &truth.dataset)?;
                Ok(lpml(&chain, &truth.dataset)?.lpml)
            };
            Ok(LpmlPair { seed, full: fit(OutcomeTerms::Full)?, linear_only: fit(OutcomeTerms::LinearOnly)? })
        })
        .collect::<Result<Vec<_>, ValidationError>>()?;
    Ok(LpmlComparison { pairs })
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

impl CoverageReport {
    /// `parameter,covered,evaluated,rate`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv_writer(out);
        w.write_record(["parameter", "covered", "evaluated", "rate"])?;
        for r in &self.rows {
            w.write_record([
                r.parameter.clone(),
                r.covered.to_string(),
                r.evaluated.to_string(),
                r.rate().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_text(&self, level: f64) -> String {
        let mut s = format!("coverage of {}% intervals over {} replicates", level * 100.0, self.replicates);
        if !self.failed.is_empty() {
            s.push_str(&format!(" ({} failed and excluded)", self.failed.len()));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("  {:<10} {}/{}\n", r.parameter, r.covered, r.evaluated));
        }
        s
    }
}

impl BalanceExperimentReport {
    /// `replicate,flagged_fraction`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv_writer(out);
        w.write_record(["replicate", "flagged_fraction"])?;
        for (r, f) in self.fractions.iter().enumerate() {
            w.write_record([r.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl LpmlComparison {
    /// `seed,lpml_full,lpml_linear_only`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv_writer(out);
        w.write_record(["seed", "lpml_full", "lpml_linear_only"])?;
        for p in &self.pairs {
            w.write_record([p.seed.to_string(), p.full.to_string(), p.linear_only.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
