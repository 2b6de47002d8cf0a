use std::path::Path;

use log::info;
use rayon::prelude::*;

use super::settings::{master_seed, mcmc_config};
use super::{load_config, output_dir, write_file, CliError, CommonArgs, Config};
use crate::data::{build_dataset, load_panel, load_units, Dataset, DatasetSpec, PanelSchema, TransformSpec};
use crate::sampler::{write_chain_csv, ChainMetadata, McmcConfig, Sampler, SamplerError};

/// `start:end` or a single year.
fn year_range(cfg: &Config, key: &str) -> Result<std::ops::RangeInclusive<i32>, CliError> {
    let v = cfg.require(key)?;
    let bad = || CliError::Config(format!("{key} must be YEAR or START:END, got {v:?}"));
    let (a, b) = match v.split_once(':') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let y = v.parse().map_err(|_| bad())?;
            (y, y)
        }
    };
    if a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

/// Entries `variable:transform` with an optional trailing `:reversed`.
fn transforms(cfg: &Config) -> Result<Vec<TransformSpec>, CliError> {
    cfg.list("data.transforms")
        .iter()
        .map(|item| {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            let bad = || CliError::Config(format!("bad data.transforms entry {item:?}"));
            let (var, tr, rev) = match parts.as_slice() {
                [v, t] => (*v, *t, false),
                [v, t, "reversed"] => (*v, *t, true),
                _ => return Err(bad()),
            };
            let transform = tr.parse().map_err(|e: String| CliError::Config(format!("{item:?}: {e}")))?;
            Ok(TransformSpec::new(var, transform, rev))
        })
        .collect()
}

pub(crate) fn dataset_spec(cfg: &Config) -> Result<DatasetSpec, CliError> {
    let metrics = cfg.list("data.metrics");
    if metrics.is_empty() {
        return Err(CliError::Config("data.metrics lists no variables".into()));
    }
    Ok(DatasetSpec {
        metrics,
        covariates: cfg.list("data.covariates"),
        lagged_metrics: cfg.list("data.lagged_metrics"),
        treatment: cfg.require("data.treatment")?.to_string(),
        anchor: cfg.require("data.anchor")?.to_string(),
        current_year: cfg.require_parsed("data.current_year")?,
        treatment_year: cfg.require_parsed("data.treatment_year")?,
        lag_years: year_range(cfg, "data.lag_years")?,
        prune_threshold: cfg.get_or("data.prune_threshold", 0.8)?,
        transforms: transforms(cfg)?,
    })
}

/// Read the panel and units named in `cfg` and assemble the dataset.
pub(crate) fn ingest(cfg: &Config) -> Result<Dataset, CliError> {
    let spec = dataset_spec(cfg)?;
    let units_path = cfg.require_path("data.units")?;
    let panel_path = cfg.require_path("data.panel")?;
    let units = load_units(&units_path)?;
    if !units.iter().any(|u| u.unit_id == spec.anchor) {
        return Err(CliError::Config(format!("anchor unit {} is not in {}", spec.anchor, units_path.display())));
    }
    let panel = load_panel(&panel_path, &PanelSchema::default())?;
    let ds = build_dataset(&panel, &units, &spec)?;
    ds.validate()?;
    Ok(ds)
}

/// File stem of chain `c` out of `chains`.
fn stem(c: u64, chains: u64) -> String {
    if chains == 1 {
        "chain".into()
    } else {
        format!("chain_{c}")
    }
}

fn write_dataset_reports(dir: &Path, ds: &Dataset) -> Result<(), CliError> {
    write_file(dir, "dataset.csv", |w| ds.write_snapshot(w))?;
    write_file(dir, "standardization.csv", |w| ds.write_standardization_report(w))?;
    write_file(dir, "pruning.csv", |w| ds.write_pruning_report(w))?;
    write_file(dir, "dropped.csv", |w| ds.write_drop_report(w))
}

fn run_one(dir: &Path, ds: &Dataset, cfg: McmcConfig, name: &str) -> Result<(), CliError> {
    let mut sampler = Sampler::new(cfg, ds)?;
    let store = match sampler.run(ds) {
        Ok(s) => s,
        Err(SamplerError::ChainFailed { scan, message, checkpoint }) => {
            write_file(dir, &format!("{name}.failed.ckpt"), |w| checkpoint.write(w))?;
            return Err(CliError::Sampler(format!(
                "{name} failed at scan {scan}: {message}; state saved to {name}.failed.ckpt"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let meta = ChainMetadata::from_store(&store, ds.n(), ds.p(), ds.k(), ds.q());
    write_file(dir, &format!("{name}.csv"), |w| write_chain_csv(&store, &meta, w))?;
    write_file(dir, &format!("{name}.meta"), |w| meta.write(w))?;
    write_file(dir, &format!("{name}.ckpt"), |w| sampler.checkpoint().write(w))?;
    info!("{name}: {} draws, Metropolis acceptance {:.3}", store.len(), store.acceptance_rate());
    Ok(())
}

/// Ingest, fit `mcmc.n_chains` chains (streams split by chain id) and write
/// `dataset.csv`, the data reports and `chain[_c].{csv,meta,ckpt}`.
pub fn cmd_fit(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    if args.config.is_none() {
        return Err(CliError::Config("fit needs --config".into()));
    }
    let seed = master_seed(&cfg, args.seed)?;
    let mcmc = mcmc_config(&cfg, "mcmc.", seed, &McmcConfig::default())?;
    let chains: u64 = cfg.get_or("mcmc.n_chains", 1)?;
    if chains == 0 {
        return Err(CliError::Config("mcmc.n_chains must be at least 1".into()));
    }
    let dir = output_dir(args, &cfg)?;
    let ds = ingest(&cfg)?;
    cfg.reject_unused()?;
    mcmc.validate(ds.p())?;
    info!("dataset: N={} P={} K={} Q={}; anchor {}", ds.n(), ds.p(), ds.k(), ds.q(), ds.unit_ids[ds.anchor_index]);
    write_dataset_reports(&dir, &ds)?;
    (0..chains).into_par_iter().try_for_each(|c| {
        let cfg = McmcConfig { chain_id: c, ..mcmc.clone() };
        run_one(&dir, &ds, cfg, &stem(c, chains))
    })
}
