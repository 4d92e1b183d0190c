//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::formats::{self, sha256_hex, write_file};
use crate::pipeline::{self, SweepAxis};
use crate::CliError;

/// Environment variable naming the root under which run directories are created.
pub const RUN_ROOT_ENV: &str = "WNCS_RUN_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "wncs",
    version,
    about = "Deep-Koopman control over fading wireless links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to a directory under $WNCS_RUN_ROOT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Artifacts {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    coeffs: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a trajectory dataset from the plant.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a Koopman model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Collect prediction-error samples and fit the error surrogate.
    FitError {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run closed-loop episodes.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        artifacts: Artifacts,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        slots: Option<usize>,
    },
    /// Sweep one parameter and tabulate aggregate metrics.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        artifacts: Artifacts,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        slots: Option<usize>,
    },
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    episode_seeds: Vec<u64>,
    inputs: BTreeMap<String, Hashed>,
    outputs: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Hashed {
    path: String,
    sha256: String,
}

/// Collects outputs and writes them with a manifest.
struct RunDir {
    root: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    fn new(root: PathBuf, command: &str, cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let mut dir = Self {
            root,
            manifest: Manifest {
                command: command.into(),
                seed: cfg.seed,
                episode_seeds: Vec::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        };
        dir.write("config.snapshot", cfg.to_toml().as_bytes())?;
        Ok(dir)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_file(&self.root.join(rel), bytes)?;
        self.manifest.outputs.insert(rel.into(), sha256_hex(bytes));
        Ok(())
    }

    fn input(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        let bytes = formats::read_file(path)?;
        self.manifest.inputs.insert(
            name.into(),
            Hashed {
                path: path.display().to_string(),
                sha256: sha256_hex(&bytes),
            },
        );
        Ok(())
    }

    fn finish(self) -> Result<PathBuf, CliError> {
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        write_file(&self.root.join("manifest.json"), &json)?;
        Ok(self.root)
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_root(common: &Common, command: &str, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(out) = &common.out {
        return out.clone();
    }
    let base = std::env::var_os(RUN_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    let stem = common
        .config
        .file_stem()
        .map_or_else(|| "config".into(), |s| s.to_string_lossy().into_owned());
    base.join(format!("{command}-{stem}-seed{}", cfg.seed))
}

/// A flag path as given, otherwise the config path resolved against the
/// config file's directory.
fn artifact(flag: &Option<PathBuf>, configured: &Path, config_path: &Path) -> PathBuf {
    match flag {
        Some(p) => p.clone(),
        None if configured.is_absolute() => configured.to_path_buf(),
        None => config_path
            .parent()
            .unwrap_or(Path::new(""))
            .join(configured),
    }
}

fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("invalid sweep value '{s}'")))
        })
        .collect()
}

fn load_coeffs(path: &Path) -> Result<wncs_core::errmodel::ErrorPolyCoeffs, CliError> {
    let bytes = formats::read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Format {
        what: "error coefficients",
        detail: e.to_string(),
    })
}

fn dispatch(command: Command) -> Result<PathBuf, CliError> {
    match command {
        Command::GenData { common } => {
            let cfg = load_config(&common)?;
            let data = pipeline::gen_data(&cfg, cfg.seed)?;
            let mut dir = RunDir::new(run_root(&common, "gen-data", &cfg), "gen-data", &cfg)?;
            dir.write("dataset.bin", &formats::encode_dataset(&data))?;
            dir.write("dataset.csv", &formats::dataset_csv(&data))?;
            dir.finish()
        }
        Command::Train {
            common,
            data,
            epochs,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            let data_path = artifact(&data, &cfg.artifacts.dataset, &common.config);
            let dataset = formats::load_dataset(&data_path)?;
            let (model, report) = pipeline::train(&cfg, &dataset)?;
            let mut dir = RunDir::new(run_root(&common, "train", &cfg), "train", &cfg)?;
            dir.input("dataset", &data_path)?;
            dir.write("model.bin", &formats::encode_model(&model))?;
            dir.write("model.json", &formats::model_json(&model))?;
            dir.write(
                "training.csv",
                &formats::training_csv(
                    report.initial_loss,
                    &report.epoch_losses,
                    report.final_loss,
                ),
            )?;
            dir.finish()
        }
        Command::FitError { common, model } => {
            let cfg = load_config(&common)?;
            let model_path = artifact(&model, &cfg.artifacts.model, &common.config);
            let ctrl = pipeline::controller(&cfg, formats::load_model(&model_path)?)?;
            let fit = pipeline::fit_error(&cfg, &ctrl, cfg.seed)?;
            let mut dir = RunDir::new(run_root(&common, "fit-error", &cfg), "fit-error", &cfg)?;
            dir.input("model", &model_path)?;
            dir.write(
                "error_samples.csv",
                &formats::error_samples_csv(&fit.samples.samples),
            )?;
            dir.write(
                "degree_table.csv",
                &formats::degree_table_csv(&fit.selection),
            )?;
            dir.write(
                "error_coeffs.json",
                &serde_json::to_vec_pretty(&fit.coeffs).expect("coefficients serialize"),
            )?;
            dir.write("lqr_gain.csv", &formats::matrix_csv(&ctrl.lqr.gain))?;
            dir.write("lqr_p.csv", &formats::matrix_csv(&ctrl.lqr.p))?;
            dir.write("lqr_summary.csv", &formats::lqr_summary_csv(&ctrl.lqr))?;
            dir.finish()
        }
        Command::Run {
            common,
            artifacts,
            episodes,
            slots,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = slots {
                cfg.episode.slots = s;
            }
            let count = episodes.unwrap_or(cfg.episode.episodes);
            cfg.episode.episodes = count;
            let model_path = artifact(&artifacts.model, &cfg.artifacts.model, &common.config);
            let coeffs_path = artifact(&artifacts.coeffs, &cfg.artifacts.coeffs, &common.config);
            let ctrl = pipeline::controller(&cfg, formats::load_model(&model_path)?)?;
            let coeffs = load_coeffs(&coeffs_path)?;
            let eps = pipeline::run_episodes(&cfg, &ctrl, &coeffs, count, cfg.seed)?;
            let (per, agg) = pipeline::summarize(&eps, cfg.scheduler.lambda)?;
            let mut dir = RunDir::new(run_root(&common, "run", &cfg), "run", &cfg)?;
            dir.input("model", &model_path)?;
            dir.input("coeffs", &coeffs_path)?;
            for (k, ep) in eps.iter().enumerate() {
                dir.write(&format!("episodes/ep_{k}.csv"), &formats::episode_csv(ep))?;
            }
            dir.manifest.episode_seeds = eps.iter().map(|e| e.seed).collect();
            dir.write("summary.csv", &formats::summary_csv(&per))?;
            dir.write("aggregate.csv", &formats::aggregate_csv(&agg))?;
            dir.finish()
        }
        Command::Sweep {
            common,
            artifacts,
            axis,
            values,
            episodes,
            slots,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = slots {
                cfg.episode.slots = s;
            }
            let count = episodes.unwrap_or(cfg.episode.episodes);
            cfg.episode.episodes = count;
            let values = parse_values(&values)?;
            let model_path = artifact(&artifacts.model, &cfg.artifacts.model, &common.config);
            let coeffs_path = artifact(&artifacts.coeffs, &cfg.artifacts.coeffs, &common.config);
            let mut dir = RunDir::new(run_root(&common, "sweep", &cfg), "sweep", &cfg)?;
            let rows = if values.is_empty() {
                Vec::new()
            } else {
                let ctrl = pipeline::controller(&cfg, formats::load_model(&model_path)?)?;
                let coeffs = load_coeffs(&coeffs_path)?;
                dir.input("model", &model_path)?;
                dir.input("coeffs", &coeffs_path)?;
                pipeline::run_sweep(&cfg, &ctrl, &coeffs, axis, &values, count, cfg.seed)?
            };
            let table: Vec<_> = rows
                .into_iter()
                .map(|r| (r.value, r.p_sc, r.metrics))
                .collect();
            dir.write(
                &format!("sweep_{}.csv", axis.name()),
                &formats::sweep_csv(axis.name(), &table),
            )?;
            dir.finish()
        }
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 on runtime failure, 2 on usage
/// errors or missing artifacts.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
