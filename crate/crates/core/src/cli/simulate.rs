use std::io::Write;
use std::path::Path;

use log::info;

use super::settings::{master_seed, mcmc_config, synthetic_spec};
use super::{load_config, output_dir, write_file, CliError, CommonArgs, Config};
use crate::sampler::{ChainMetadata, McmcConfig};
use crate::validation::{generate_synthetic_stream, SyntheticTruth};

const CURRENT_YEAR: i32 = 2010;
const TREATMENT_YEAR: i32 = 2009;
const LAG_YEAR: i32 = 2008;

/// Data are drawn from this stream of the master seed, clear of the chain
/// streams `2c` and `2c + 1` that `fit` uses with the same seed.
const DATA_STREAM: u64 = 1 << 40;

/// Long panel: metrics at the current year, treatment a year earlier, and
/// covariates plus the first Q metrics at the lag year (their lagged
/// averages).
fn write_panel<W: Write>(g: &SyntheticTruth, w: &mut W) -> std::io::Result<()> {
    let d = &g.dataset;
    writeln!(w, "unit_id,year,variable,value")?;
    for i in 0..d.n() {
        let id = &d.unit_ids[i];
        for j in 0..d.p() {
            writeln!(w, "{id},{CURRENT_YEAR},y{},{}", j + 1, d.y[(i, j)])?;
        }
        writeln!(w, "{id},{TREATMENT_YEAR},t,{}", d.t[i])?;
        for k in 0..d.k() {
            writeln!(w, "{id},{LAG_YEAR},x{},{}", k + 1, d.xstar[(i, k)])?;
        }
        for q in 0..d.q() {
            writeln!(w, "{id},{LAG_YEAR},y{},{}", q + 1, d.ystar[(i, q)])?;
        }
    }
    Ok(())
}

fn write_units<W: Write>(g: &SyntheticTruth, w: &mut W) -> std::io::Result<()> {
    let d = &g.dataset;
    writeln!(w, "unit_id,name,income_group,lat,lon")?;
    for i in 0..d.n() {
        writeln!(
            w,
            "{},{},{},{},{}",
            d.unit_ids[i], d.unit_names[i], d.income_group[i], d.coords[i].lat, d.coords[i].lon
        )?;
    }
    Ok(())
}

/// Every generated parameter, named as in the chain file.
fn write_truth<W: Write>(g: &SyntheticTruth, meta: &ChainMetadata, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "parameter,value")?;
    for (name, v) in meta.parameter_names().iter().zip(meta.parameter_values(&g.state)) {
        writeln!(w, "{name},{v}")?;
    }
    writeln!(w, "anchor_index,{}", g.dataset.anchor_index)?;
    writeln!(w, "seed,{}", g.seed)
}

/// A `fit` config that re-ingests the simulated files, carrying over the
/// sampler, model and prior keys of the simulate config.
fn write_fit_config<W: Write>(g: &SyntheticTruth, cfg: &Config, seed: u64, w: &mut W) -> std::io::Result<()> {
    let d = &g.dataset;
    let names = |prefix: &str, m: usize| (1..=m).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>().join(",");
    writeln!(w, "# fit configuration for the simulated data in this directory")?;
    writeln!(w, "seed = {seed}")?;
    writeln!(w, "data.panel = panel.csv")?;
    writeln!(w, "data.units = units.csv")?;
    writeln!(w, "data.metrics = {}", names("y", d.p()))?;
    writeln!(w, "data.covariates = {}", names("x", d.k()))?;
    writeln!(w, "data.lagged_metrics = {}", names("y", d.q()))?;
    writeln!(w, "data.treatment = t")?;
    writeln!(w, "data.anchor = {}", d.unit_ids[d.anchor_index])?;
    writeln!(w, "data.current_year = {CURRENT_YEAR}")?;
    writeln!(w, "data.treatment_year = {TREATMENT_YEAR}")?;
    writeln!(w, "data.lag_years = {LAG_YEAR}")?;
    writeln!(w, "data.prune_threshold = {}", cfg.get_or("simulate.prune_threshold", 0.8).unwrap_or(0.8))?;
    for (k, v) in cfg.entries_with_prefix(&["mcmc.", "model.", "prior."]) {
        writeln!(w, "{k} = {v}")?;
    }
    Ok(())
}

/// Draw a synthetic dataset and write `panel.csv`, `units.csv`,
/// `truth.csv` and `fit.conf` (see the settings module for keys).
pub fn cmd_simulate(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let seed = master_seed(&cfg, args.seed)?;
    let spec = synthetic_spec(&cfg, "simulate.", (30, 3, 2, 1))?;
    let mcmc = mcmc_config(&cfg, "mcmc.", seed, &McmcConfig::default())?;
    let _: Option<u64> = cfg.get("mcmc.n_chains")?;
    let _: Option<f64> = cfg.get("simulate.prune_threshold")?;
    let dir = output_dir(args, &cfg)?;
    cfg.reject_unused()?;
    let g = generate_synthetic_stream(&spec, seed, DATA_STREAM)?;
    let d = &g.dataset;
    info!("simulated N={} P={} K={} Q={}, anchor acceptance {:.3}", d.n(), d.p(), d.k(), d.q(), g.anchor_acceptance);
    let meta = ChainMetadata {
        config: mcmc,
        n: d.n(),
        p: d.p(),
        k: d.k(),
        q: d.q(),
        anchor_index: d.anchor_index,
        draws: 0,
        acceptance_count: 0,
        proposals: 0,
    };
    write_outputs(&dir, &g, &meta, &cfg, seed)
}

fn write_outputs(
    dir: &Path,
    g: &SyntheticTruth,
    meta: &ChainMetadata,
    cfg: &Config,
    seed: u64,
) -> Result<(), CliError> {
    write_file(dir, "panel.csv", |w| write_panel(g, w))?;
    write_file(dir, "units.csv", |w| write_units(g, w))?;
    write_file(dir, "truth.csv", |w| write_truth(g, meta, w))?;
    write_file(dir, "fit.conf", |w| write_fit_config(g, cfg, seed, w))
}
