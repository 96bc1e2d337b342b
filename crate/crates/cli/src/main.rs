//! `spatcens`: batch front end for censored spatial models.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.

mod commands;
mod config;
mod error;
mod io;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spatcens::predict::Method;

use crate::config::*;
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "spatcens",
    version,
    about = "Censored spatial linear models: SAEM fitting, prediction and influence diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving the outputs.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Seed for every random stream of the command.
    #[arg(long)]
    seed: Option<u64>,
    /// Run single-threaded.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a censored Gaussian field: data.csv, truth.csv and manifest.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of estimation sites.
        #[arg(long)]
        n: Option<usize>,
        /// Number of held-out prediction sites written to truth.csv.
        #[arg(long)]
        n_pred: Option<usize>,
        /// Share of the estimation block censored at the detection limit.
        #[arg(long)]
        cens_level: Option<f64>,
        /// Comma-separated row indices that receive an outlier.
        #[arg(long, value_delimiter = ',')]
        outliers: Option<Vec<usize>>,
        /// Outlier size in standard deviations of the response.
        #[arg(long, default_value_t = 5.0)]
        outlier_sd: f64,
    },
    /// Fit by SAEM: fit.json and fit_summary.txt.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV with columns x,y,value,cens,lower,upper and optional covariates.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        saem: SaemArgs,
    },
    /// Predict at new sites: predictions.csv, predict.json and plots.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV with columns x,y,value,cens,lower,upper and optional covariates.
        #[arg(long)]
        data: PathBuf,
        /// Targets as x,y[,covariates…]; an optional value column is scored.
        #[arg(long)]
        sites: PathBuf,
        /// Saved SAEM fit (saem method only); skips refitting.
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Prediction method: naive1, naive2, seminaive or saem.
        #[arg(long)]
        method: Option<Method>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        saem: SaemArgs,
    },
    /// K-fold hold-out MSPE comparison: mspe.csv and crossval.json.
    Crossval {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV with columns x,y,value,cens,lower,upper and optional covariates.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated methods (naive1, naive2, seminaive, saem).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Number of hold-out folds.
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        saem: SaemArgs,
    },
    /// Local influence of a saved fit: influence.json and three M(0) index plots.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// fit.json written by `fit` for the same dataset.
        #[arg(long)]
        fit: PathBuf,
        /// Dataset CSV with columns x,y,value,cens,lower,upper and optional covariates.
        #[arg(long)]
        data: PathBuf,
        /// Benchmark constant.
        #[arg(long)]
        c_star: Option<f64>,
    },
    /// Empirical semivariogram of the uncensored rows: variogram.csv, .json and .svg.
    Variogram {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV with columns x,y,value,cens,lower,upper and optional covariates.
        #[arg(long)]
        data: PathBuf,
        /// Number of distance bins.
        #[arg(long)]
        bins: Option<usize>,
        /// Largest lag considered; defaults to half the largest distance.
        #[arg(long)]
        max_dist: Option<f64>,
        /// Also fit the model given by the model flags by weighted least squares.
        #[arg(long)]
        fit_model: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            common,
            n,
            n_pred,
            cens_level,
            outliers,
            outlier_sd,
        } => {
            let mut cfg: SimulateConfig = load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.design.seed = s;
            }
            if let Some(v) = n {
                cfg.design.n_est = v;
            }
            if let Some(v) = n_pred {
                cfg.design.n_pred = v;
            }
            if let Some(v) = cens_level {
                cfg.design.cens_level = v;
            }
            if let Some(idx) = outliers {
                cfg.outliers = Some(OutlierSpec {
                    indices: idx,
                    magnitude_sd: outlier_sd,
                });
            }
            commands::simulate(&cfg, &common.out_dir)
        }
        Command::Fit {
            common,
            data,
            model,
            saem,
        } => {
            let mut cfg: FitConfig = load(common.config.as_deref())?;
            model.apply(&mut cfg.model);
            saem.apply(&mut cfg.saem, &cfg.model);
            if let Some(s) = common.seed {
                cfg.saem.seed = s;
            }
            if common.sequential {
                cfg.saem.execution = execution(true);
            }
            commands::fit(&data, cfg, &common.out_dir)
        }
        Command::Predict {
            common,
            data,
            sites,
            fit,
            method,
            model,
            saem,
        } => {
            let mut cfg: PredictConfig = load(common.config.as_deref())?;
            if let Some(m) = method {
                cfg.method = m;
            }
            model.apply(&mut cfg.model);
            saem.apply(&mut cfg.saem, &cfg.model);
            saem.apply_plug_in(&mut cfg.plug_in, &cfg.model);
            if let Some(s) = common.seed {
                cfg.saem.seed = s;
                cfg.plug_in.seed = s;
            }
            if common.sequential {
                cfg.saem.execution = execution(true);
                cfg.plug_in.execution = execution(true);
            }
            let inputs = commands::PredictInputs {
                data: &data,
                sites: &sites,
                fit: fit.as_deref(),
            };
            commands::predict(inputs, cfg, &common.out_dir)
        }
        Command::Crossval {
            common,
            data,
            methods,
            folds,
            model,
            saem,
        } => {
            let mut cfg: CrossValRunConfig = load(common.config.as_deref())?;
            if let Some(m) = methods {
                cfg.methods = m;
            }
            if let Some(f) = folds {
                cfg.folds = f;
            }
            model.apply(&mut cfg.model);
            saem.apply(&mut cfg.saem, &cfg.model);
            saem.apply_plug_in(&mut cfg.plug_in, &cfg.model);
            if let Some(s) = common.seed {
                cfg.seed = s;
                cfg.saem.seed = s;
                cfg.plug_in.seed = s;
            }
            if common.sequential {
                cfg.saem.execution = execution(true);
                cfg.plug_in.execution = execution(true);
            }
            commands::crossval(&data, cfg, &common.out_dir)
        }
        Command::Diagnose {
            common,
            fit,
            data,
            c_star,
        } => {
            let mut cfg: DiagnoseConfig = load(common.config.as_deref())?;
            if let Some(c) = c_star {
                cfg.c_star = c;
            }
            commands::diagnose(&fit, &data, cfg, &common.out_dir)
        }
        Command::Variogram {
            common,
            data,
            bins,
            max_dist,
            fit_model,
            model,
        } => {
            let mut cfg: VariogramConfig = load(common.config.as_deref())?;
            if let Some(b) = bins {
                cfg.bins = b;
            }
            if max_dist.is_some() {
                cfg.max_dist = max_dist;
            }
            if fit_model || cfg.fit.is_some() {
                let mut m = cfg.fit.clone().unwrap_or_default();
                model.apply(&mut m);
                cfg.fit = Some(m);
            }
            commands::variogram(&data, cfg, &common.out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
