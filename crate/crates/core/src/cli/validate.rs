use log::info;
use nalgebra::DVector;

use super::settings::{master_seed, mcmc_config, synthetic_spec};
use super::{load_config, output_dir, write_file, CliError, CommonArgs, Config};
use crate::analysis::BalanceOptions;
use crate::sampler::McmcConfig;
use crate::validation::{
    balance_experiment, coverage_experiment, lpml_comparison, BalanceDesign, CoverageSpec, LpmlComparisonSpec,
    TruthSpec,
};

/// Desk-scale chain used by the experiments unless overridden.
fn experiment_chain() -> McmcConfig {
    McmcConfig { n_scans: 6000, burn_in: 1000, thin: 1, ..McmcConfig::default() }
}

/// Outcome coefficients with strong curvature and interaction, used by the
/// LPML comparison unless `validate.lpml.truth.beta` is given.
const LPML_BETA: [f64; 6] = [-1.0, 0.5, 0.8, 0.5, 0.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Experiment {
    Coverage,
    Balance,
    Lpml,
}

fn experiments(cfg: &Config) -> Result<Vec<Experiment>, CliError> {
    let names = cfg.list("validate.experiments");
    if names.is_empty() {
        return Ok(vec![Experiment::Coverage, Experiment::Balance, Experiment::Lpml]);
    }
    names
        .iter()
        .map(|n| match n.as_str() {
            "coverage" => Ok(Experiment::Coverage),
            "balance" => Ok(Experiment::Balance),
            "lpml" => Ok(Experiment::Lpml),
            other => Err(CliError::Config(format!("unknown experiment {other:?}"))),
        })
        .collect()
}

/// Run the selected experiments (`validate.experiments`, default all) and
/// write their CSV reports plus `validation_summary.txt`.
pub fn cmd_validate(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let seed = master_seed(&cfg, args.seed)?;
    let which = experiments(&cfg)?;

    let coverage = CoverageSpec {
        synthetic: synthetic_spec(&cfg, "validate.coverage.", (30, 3, 2, 0))?,
        mcmc: mcmc_config(&cfg, "validate.coverage.mcmc.", seed, &experiment_chain())?,
        replicates: cfg.get_or("validate.coverage.replicates", 20)?,
        level: cfg.get_or("validate.coverage.level", 0.9)?,
        seed,
    };
    let n_bal: usize = cfg.get_or("validate.balance.n", 200)?;
    let k_bal: usize = cfg.get_or("validate.balance.k", 3)?;
    let bal_reps: usize = cfg.get_or("validate.balance.replicates", 50)?;
    let threshold: f64 = cfg.get_or("validate.balance.threshold", 0.9)?;
    let strength: f64 = cfg.get_or("validate.balance.strength", 2.0)?;
    let noise_sd: f64 = cfg.get_or("validate.balance.noise_sd", 0.1)?;

    let custom_beta = cfg.raw("validate.lpml.truth.beta").is_some();
    let mut lpml_synth = synthetic_spec(&cfg, "validate.lpml.", (30, 3, 2, 0))?;
    if let TruthSpec::Given(s) = &mut lpml_synth.truth {
        if !custom_beta {
            s.beta = DVector::from_row_slice(&LPML_BETA);
        }
        if cfg.raw("validate.lpml.truth.sigma2_h").is_none() {
            s.sigma2_h = 0.05;
        }
        if cfg.raw("validate.lpml.truth.sigma2_t").is_none() {
            s.sigma2_t = 0.25;
        }
    }
    let lpml_seeds: u64 = cfg.get_or("validate.lpml.seeds", 10)?;
    let lpml_spec = LpmlComparisonSpec {
        synthetic: lpml_synth,
        mcmc: mcmc_config(&cfg, "validate.lpml.mcmc.", seed, &experiment_chain())?,
        seeds: (0..lpml_seeds).map(|s| seed.wrapping_add(s)).collect(),
    };
    let dir = output_dir(args, &cfg)?;
    cfg.reject_unused()?;

    let mut summary = String::new();
    for e in which {
        match e {
            Experiment::Coverage => {
                let r = coverage_experiment(&coverage)?;
                write_file(&dir, "coverage.csv", |w| r.write_csv(w))?;
                summary.push_str(&r.summary_text(coverage.level));
            }
            Experiment::Balance => {
                let opts = BalanceOptions::default();
                let null =
                    balance_experiment(BalanceDesign::Null { n: n_bal, k: k_bal }, &opts, bal_reps, threshold, seed)?;
                let power_opts = BalanceOptions { include_gps: false, ..opts };
                let design = BalanceDesign::Confounded { n: n_bal, k: k_bal, strength, noise_sd };
                let power = balance_experiment(design, &power_opts, bal_reps, threshold, seed)?;
                write_file(&dir, "balance_calibration.csv", |w| null.write_csv(w))?;
                write_file(&dir, "balance_power.csv", |w| power.write_csv(w))?;
                summary.push_str(&format!(
                    "balance: mean flagged fraction at {threshold} is {:.4} under randomized treatment and {:.4} \
                     under confounding without the GPS term ({bal_reps} replicates, N={n_bal})\n",
                    null.mean, power.mean
                ));
            }
            Experiment::Lpml => {
                let r = lpml_comparison(&lpml_spec)?;
                write_file(&dir, "lpml_comparison.csv", |w| r.write_csv(w))?;
                summary.push_str(&format!(
                    "lpml: full outcome model preferred in {}/{} seeds\n",
                    r.full_wins(),
                    r.pairs.len()
                ));
            }
        }
    }
    info!("{}", summary.trim_end());
    write_file(&dir, "validation_summary.txt", |w| std::io::Write::write_all(w, summary.as_bytes()))
}
