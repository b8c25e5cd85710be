use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dynabo_core::config::RunConfig;
use dynabo_core::forest::ForestModel;
use dynabo_core::gp::{BaseKernel, GpRow, PriorMean, ZeroPrior};
use dynabo_core::pipeline::{read_gp_csv, write_gp_csv};
use dynabo_core::plant::{generate_corpus, load_corpus, save_corpus};
use dynabo_core::prior::PriorTable;
use dynabo_core::replay::{self, KernelSpec, Method, ReplayModels};
use dynabo_core::rpnn::{write_training_log, Rpnn};
use dynabo_core::service::{self, CreateSession, ServiceContext, Session, SessionStore};
use dynabo_core::workflow::{self, Layout};
use dynabo_core::{Error, Result};

#[derive(Parser)]
#[command(name = "dynabo", version, about = "ECH profile optimization against a drifting synthetic tokamak")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use the reduced single-core settings as the base configuration.
    #[arg(long, global = true)]
    desk: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a shot corpus.
    GenerateCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        campaigns: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the GP dataset and feature map from a corpus.
    Pipeline {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the dynamics model and the tearing-mode classifier.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the prior mean from trained models.
    BuildPrior {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory with the trained models; the table goes to `<artifacts>/prior`.
        #[arg(long)]
        artifacts: PathBuf,
    },
    /// Every stage from corpus to prior table.
    Reference {
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay one method over a GP dataset.
    Replay {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "dynabo")]
        method: Method,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        steps: Option<usize>,
        /// Curve CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// All kernels x methods x seeds.
    Suite {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated seeds; the configured list when omitted.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// UCB vs Thompson vs EI under the prior-mean GP.
    CompareAcq {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Propose the next ECH profile for a target pressure.
    Propose {
        /// GP dataset CSV; an empty dataset when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long)]
        target_beta_n: f64,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Run the HTTP shot service.
    Serve {
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Directory of `<name>.csv` datasets.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// GP dataset CSV.
    #[arg(long)]
    dataset: PathBuf,
    /// Prior table directory; required by the prior-mean methods.
    #[arg(long)]
    prior: Option<PathBuf>,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value = "se")]
    kernel: String,
    #[arg(long, default_value_t = 0.3)]
    lengthscale: f64,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec> {
        let base = match self.kernel.as_str() {
            "se" | "rbf" => BaseKernel::SquaredExponential,
            "matern32" => BaseKernel::Matern32,
            "matern52" => BaseKernel::Matern52,
            "linear" => BaseKernel::Linear,
            other => return Err(Error::Config(format!("unknown kernel `{other}`"))),
        };
        Ok(KernelSpec::new(base, self.lengthscale))
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None if cli.desk => Ok(RunConfig::desk()),
        None => Ok(RunConfig::default()),
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_rows(path: &Path) -> Result<Vec<GpRow>> {
    Ok(read_gp_csv(path)?.iter().map(GpRow::from).collect())
}

fn models(prior: Option<&Path>) -> Result<ReplayModels> {
    match prior {
        Some(dir) => {
            let table = PriorTable::load(dir)?;
            let grid = Some(table.grid.clone());
            Ok(ReplayModels { prior: Arc::new(table), grid })
        }
        None => Ok(ReplayModels { prior: Arc::new(ZeroPrior) as Arc<dyn PriorMean>, grid: None }),
    }
}

fn needs_prior(methods: &[Method], prior: &Option<PathBuf>) -> Result<()> {
    let uses = methods.iter().any(|m| matches!(m, Method::Dynabo | Method::DynaboTime | Method::RpnnOnly));
    if uses && prior.is_none() {
        return Err(Error::Config("--prior is required for the prior-mean methods".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::GenerateCorpus { out, shots, campaigns, seed } => {
            let n = shots.unwrap_or(cfg.corpus.n_shots);
            let k = campaigns.unwrap_or(cfg.corpus.campaigns);
            let s = seed.unwrap_or(cfg.corpus.seed);
            let set = generate_corpus(&cfg.plant, n, k, s)?;
            print_json(&save_corpus(&out, &set, &cfg.plant, s, k)?)
        }
        Cmd::Pipeline { corpus, out } => {
            let set = load_corpus(&corpus)?;
            let p = workflow::prepare(&set, &cfg)?;
            let layout = Layout(out);
            std::fs::create_dir_all(&layout.0)?;
            write_gp_csv(&layout.gp_dataset(), &p.dataset)?;
            std::fs::write(layout.features(), serde_json::to_vec_pretty(&p.features)?)?;
            print_json(&serde_json::json!({
                "rows": p.dataset.len(),
                "sequences": p.sequences.len(),
                "state_dim": p.features.state_dim(),
            }))
        }
        Cmd::Train { corpus, out } => {
            let set = load_corpus(&corpus)?;
            let p = workflow::prepare(&set, &cfg)?;
            let layout = Layout(out);
            std::fs::create_dir_all(&layout.0)?;
            std::fs::write(layout.features(), serde_json::to_vec_pretty(&p.features)?)?;
            write_gp_csv(&layout.gp_dataset(), &p.dataset)?;
            let dynamics = workflow::train_dynamics(&p.sequences, p.features.state_dim(), &cfg)?;
            dynamics.model.save(&layout.rpnn())?;
            write_training_log(&layout.training_log(), &dynamics.log)?;
            let forest = workflow::train_classifier(&p.sequences, &p.features, &cfg)?;
            forest.save(&layout.forest())?;
            print_json(&serde_json::json!({
                "best_epoch": dynamics.best_epoch,
                "epochs": dynamics.log.len(),
                "best_val_nll": dynamics.log.get(dynamics.best_epoch).map(|e| e.val_nll),
                "trees": forest.trees.len(),
            }))
        }
        Cmd::BuildPrior { corpus, artifacts } => {
            let set = load_corpus(&corpus)?;
            let layout = Layout(artifacts);
            let features = workflow::load_features(&layout.features())?;
            let sequences = features.sequences(&set)?;
            let dataset = read_gp_csv(&layout.gp_dataset())?;
            let prepared = workflow::Prepared { features, sequences, dataset };
            let rpnn = Rpnn::load(&layout.rpnn())?;
            let forest = ForestModel::load(&layout.forest())?;
            let build = workflow::build_prior(&prepared, &rpnn, &forest, &cfg)?;
            build.table.save(&layout.prior(), Some(&build.records))?;
            print_json(&serde_json::json!({ "cells": build.table.cells.len(), "rollouts": build.records.len() }))
        }
        Cmd::Reference { out } => {
            let r = workflow::run_reference(&cfg, Some(&out))?;
            std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
            print_json(&serde_json::json!({
                "rows": r.prepared.dataset.len(),
                "state_dim": r.prepared.features.state_dim(),
                "best_epoch": r.dynamics.best_epoch,
                "prior_cells": r.prior.table.cells.len(),
            }))
        }
        Cmd::Replay { data, method, kernel, seed, steps, out } => {
            needs_prior(&[method], &data.prior)?;
            let rows = load_rows(&data.dataset)?;
            let rc = replay::ReplayConfig { seed, steps: steps.unwrap_or(cfg.replay.config.steps), ..cfg.replay.config };
            let o = replay::run_replay(&rows, method, &kernel.spec()?, &rc, &models(data.prior.as_deref())?)?;
            replay::write_curves_csv(&out, std::slice::from_ref(&o.curve))?;
            print_json(&serde_json::json!({
                "final_regret": o.curve.final_regret(),
                "distinct_queries": o.curve.distinct_queries(),
            }))
        }
        Cmd::Suite { data, seeds, steps, out } => {
            needs_prior(&cfg.replay.methods, &data.prior)?;
            let rows = load_rows(&data.dataset)?;
            if let Some(n) = steps {
                cfg.replay.config.steps = n;
            }
            let seeds = if seeds.is_empty() { cfg.replay.seeds.clone() } else { seeds };
            let res = replay::run_baseline_suite(
                &rows,
                &cfg.replay.kernels,
                &cfg.replay.methods,
                &seeds,
                &cfg.replay.config,
                &models(data.prior.as_deref())?,
            )?;
            std::fs::create_dir_all(&out)?;
            replay::write_curves_csv(&out.join("curves.csv"), &res.curves)?;
            replay::write_table_csv(&out.join("summary.csv"), &res.cells)?;
            print_json(&res.cells)
        }
        Cmd::CompareAcq { data, seeds, steps, out } => {
            needs_prior(&[Method::Dynabo], &data.prior)?;
            let rows = load_rows(&data.dataset)?;
            cfg.replay.config.steps = steps;
            let seeds = if seeds.is_empty() { cfg.replay.seeds.clone() } else { seeds };
            let (table, curves) = replay::compare_acquisitions(
                &rows,
                &cfg.replay.kernels,
                &seeds,
                &cfg.replay.config,
                &models(data.prior.as_deref())?,
            )?;
            std::fs::create_dir_all(&out)?;
            replay::write_curves_csv(&out.join("acquisition_curves.csv"), &curves)?;
            replay::write_table_csv(&out.join("acquisition_table.csv"), &table)?;
            print_json(&table)
        }
        Cmd::Propose { dataset, prior, target_beta_n, alpha } => {
            let (data_dir, name) = match &dataset {
                Some(p) => (
                    p.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
                    Some(p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()),
                ),
                None => (PathBuf::from("."), None),
            };
            let ctx = ServiceContext::load(&cfg, prior.as_deref(), data_dir)?;
            let session = Session::create(&ctx, "cli".into(), CreateSession { dataset: name, ..Default::default() })?;
            print_json(&session.propose(&ctx, target_beta_n, alpha)?)
        }
        Cmd::Serve { prior, data_dir, bind, static_dir } => {
            let data_dir = data_dir.or(cfg.service.data_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
            let ctx = ServiceContext::load(&cfg, prior.as_deref(), data_dir)?;
            let store = Arc::new(SessionStore::new(ctx));
            let addr = bind.unwrap_or(cfg.service.bind);
            let static_dir = static_dir.or(cfg.service.static_dir.clone());
            tokio::runtime::Runtime::new()?.block_on(service::serve(store, addr, static_dir))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
