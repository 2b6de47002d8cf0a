use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::{load_config, output_dir, write_file, CliError, CommonArgs, Config};
use crate::analysis::{
    covariate_balance, default_t_grid, dose_response, lpml, pairwise_superiority, rank_health, residuals,
    spatial_correlation_curve, summarize, write_balance_csv, write_dose_response_csv, write_ranking_csv,
    write_residuals_csv, write_rho_curve_csv, write_summary_csv, AnalysisError, BalanceOptions, DEFAULT_QUANTILES,
};
use crate::data::Dataset;
use crate::model::ModelVariant;
use crate::sampler::{read_chain_csv, ChainMetadata, ChainStore};
use crate::spatial::{DistanceMatrix, EARTH_RADIUS_MM};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifact {
    Summary,
    Ranking,
    DoseResponse,
    Balance,
    Rho,
    Residuals,
    Lpml,
}

impl Artifact {
    pub const ALL: [Artifact; 7] = [
        Artifact::Summary,
        Artifact::Ranking,
        Artifact::DoseResponse,
        Artifact::Balance,
        Artifact::Rho,
        Artifact::Residuals,
        Artifact::Lpml,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Artifact::Summary => "summary",
            Artifact::Ranking => "ranking",
            Artifact::DoseResponse => "dose-response",
            Artifact::Balance => "balance",
            Artifact::Rho => "rho",
            Artifact::Residuals => "residuals",
            Artifact::Lpml => "lpml",
        }
    }

    /// Comma-separated names, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<Artifact>, CliError> {
        if s.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|a| a.name() == x)
                    .ok_or_else(|| CliError::Config(format!("unknown analysis artifact {x:?}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeRequest {
    pub common: CommonArgs,
    pub chain: PathBuf,
    pub meta: Option<PathBuf>,
    pub data: PathBuf,
    pub artifacts: Vec<Artifact>,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))
}

fn analysis_error(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::Mismatch(_) => CliError::Mismatch(e.to_string()),
        AnalysisError::Unsupported(_) | AnalysisError::InvalidBlocks(_) | AnalysisError::EmptyGrid => {
            CliError::Config(e.to_string())
        }
        e => CliError::Data(e.to_string()),
    }
}

fn check_consistent(meta: &ChainMetadata, ds: &Dataset) -> Result<(), CliError> {
    let chain = (meta.n, meta.p, meta.k, meta.q);
    let data = (ds.n(), ds.p(), ds.k(), ds.q());
    if chain != data {
        return Err(CliError::Mismatch(format!("chain has (N, P, K, Q) = {chain:?} but the dataset has {data:?}")));
    }
    if meta.anchor_index != ds.anchor_index {
        return Err(CliError::Mismatch(format!(
            "chain anchor index {} differs from dataset anchor index {}",
            meta.anchor_index, ds.anchor_index
        )));
    }
    Ok(())
}

/// Load the chain (with metadata) and dataset snapshot and check that
/// they describe the same units.
pub(crate) fn load_inputs(req: &AnalyzeRequest) -> Result<(ChainStore, Dataset), CliError> {
    let meta_path = req.meta.clone().unwrap_or_else(|| req.chain.with_extension("meta"));
    let meta = ChainMetadata::read(open(&meta_path)?)
        .map_err(|e| CliError::Mismatch(format!("{}: {e}", meta_path.display())))?;
    let ds = Dataset::read_snapshot(open(&req.data)?)?;
    check_consistent(&meta, &ds)?;
    let chain = read_chain_csv(open(&req.chain)?, &meta)
        .map_err(|e| CliError::Mismatch(format!("{}: {e}", req.chain.display())))?;
    Ok((chain, ds))
}

/// `count` distances from 0 to the largest pairwise distance.
fn rho_grid(cfg: &Config, ds: &Dataset) -> Result<Vec<f64>, CliError> {
    let points: usize = cfg.get_or("analyze.rho.points", 50)?;
    let max = match cfg.get::<f64>("analyze.rho.max_distance")? {
        Some(m) => m,
        None => {
            let d =
                DistanceMatrix::from_coords(&ds.coords, EARTH_RADIUS_MM).map_err(|e| CliError::Data(e.to_string()))?;
            d.d.max()
        }
    };
    if points < 2 || !(max > 0.0) {
        return Err(CliError::Config("rho grid needs at least 2 points and a positive range".into()));
    }
    Ok((0..points).map(|k| max * k as f64 / (points - 1) as f64).collect())
}

fn write_lpml(dir: &Path, ds: &Dataset, chain: &ChainStore) -> Result<(), CliError> {
    let r = lpml(chain, ds).map_err(analysis_error)?;
    write_file(dir, "lpml.csv", |w| -> std::io::Result<()> {
        writeln!(w, "unit_id,log_cpo")?;
        for (id, c) in ds.unit_ids.iter().zip(&r.log_cpo) {
            writeln!(w, "{id},{c}")?;
        }
        writeln!(w, "LPML,{}", r.lpml)
    })?;
    info!("LPML {}", r.lpml);
    Ok(())
}

/// Pairs `A:B` of unit ids from `analyze.superiority`.
fn write_superiority(dir: &Path, cfg: &Config, ds: &Dataset, chain: &ChainStore) -> Result<(), CliError> {
    let pairs = cfg.list("analyze.superiority");
    if pairs.is_empty() {
        return Ok(());
    }
    let index = |id: &str| {
        ds.unit_ids.iter().position(|u| u == id).ok_or_else(|| CliError::Config(format!("unknown unit {id}")))
    };
    let mut rows = Vec::new();
    for p in &pairs {
        let (a, b) = p.split_once(':').ok_or_else(|| CliError::Config(format!("superiority pair {p:?} is not A:B")))?;
        let (i, j) = (index(a.trim())?, index(b.trim())?);
        let prob = pairwise_superiority(chain, i, j).map_err(analysis_error)?;
        rows.push((a.trim().to_string(), b.trim().to_string(), prob));
    }
    write_file(dir, "superiority.csv", |w| -> std::io::Result<()> {
        writeln!(w, "unit_a,unit_b,prob_a_healthier")?;
        for (a, b, p) in &rows {
            writeln!(w, "{a},{b},{p}")?;
        }
        Ok(())
    })
}

/// Write the requested artifacts. Keys: `analyze.quantiles`,
/// `analyze.dose.points`, `analyze.dose.curves`, `analyze.balance.*`,
/// `analyze.rho.*`, `analyze.superiority`.
pub fn cmd_analyze(req: &AnalyzeRequest) -> Result<(), CliError> {
    let cfg = load_config(&req.common)?;
    let probs = cfg.parsed_list::<f64>("analyze.quantiles")?.unwrap_or_else(|| DEFAULT_QUANTILES.to_vec());
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(CliError::Config("analyze.quantiles must lie in [0, 1]".into()));
    }
    let dose_points: usize = cfg.get_or("analyze.dose.points", 100)?;
    let dose_curves: usize = cfg.get_or("analyze.dose.curves", 100)?;
    let d = BalanceOptions::default();
    let balance = BalanceOptions {
        block_size: cfg.get_or("analyze.balance.block_size", d.block_size)?,
        overlap: cfg.get_or("analyze.balance.overlap", d.overlap)?,
        include_gps: cfg.get_or("analyze.balance.include_gps", d.include_gps)?,
    };
    let dir = output_dir(&req.common, &cfg)?;
    let (chain, ds) = load_inputs(req)?;
    let rho = rho_grid(&cfg, &ds)?;
    write_superiority(&dir, &cfg, &ds, &chain)?;
    cfg.reject_unused()?;
    let explicit = req.artifacts.len() < Artifact::ALL.len();

    for &a in &req.artifacts {
        match a {
            Artifact::Summary => {
                let t = summarize(&chain, &probs).map_err(analysis_error)?;
                write_file(&dir, "summary.csv", |w| write_summary_csv(&t, w))?;
            }
            Artifact::Ranking => {
                let r = rank_health(&chain, &ds).map_err(analysis_error)?;
                write_file(&dir, "ranking.csv", |w| write_ranking_csv(&r, w))?;
            }
            Artifact::DoseResponse => {
                if chain.config.model.variant != ModelVariant::Lacsh && !explicit {
                    warn!("skipping dose-response: the base variant has no treatment model");
                    continue;
                }
                let grid = default_t_grid(&ds, dose_points);
                let c = dose_response(&chain, &ds, &grid, dose_curves).map_err(analysis_error)?;
                write_file(&dir, "dose_response.csv", |w| write_dose_response_csv(&c, w))?;
            }
            Artifact::Balance => {
                let r = match covariate_balance(&ds, &balance) {
                    Err(AnalysisError::InvalidBlocks(m)) if !explicit => {
                        warn!("skipping balance: {m}");
                        continue;
                    }
                    r => r.map_err(analysis_error)?,
                };
                info!("balance: {} blocks, flagged fraction {:.3} at 0.9", r.blocks.len(), r.flagged_fraction(0.9));
                write_file(&dir, "balance.csv", |w| write_balance_csv(&r, w))?;
            }
            Artifact::Rho => {
                let pts = spatial_correlation_curve(&chain, &rho).map_err(analysis_error)?;
                write_file(&dir, "rho_curve.csv", |w| write_rho_curve_csv(&pts, w))?;
            }
            Artifact::Residuals => {
                let r = residuals(&chain, &ds).map_err(analysis_error)?;
                write_file(&dir, "residuals.csv", |w| write_residuals_csv(&r, w))?;
            }
            Artifact::Lpml => write_lpml(&dir, &ds, &chain)?,
        }
    }
    Ok(())
}
