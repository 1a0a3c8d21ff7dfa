//! `sleepnet` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data
//! validation failure, 3 numeric failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use sleepnet::config::RunConfig;
use sleepnet::network::LayerKind;
use sleepnet::training::DEFAULT_FD_STEP;

#[derive(Parser, Debug)]
#[command(name = "sleepnet", version, about = "Sleep staging from heart rate and wrist actigraphy")]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override a configuration key; repeatable. Applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Random seed (same as `--set seed=N`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every recording of a data directory and print a report.
    Validate {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write per-recording low-level feature matrices as CSV.
    Extract {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the k-means dictionary on all recordings and write its centers.
    FitDict {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write it with its loss history.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// Loss-history CSV; defaults to the model path with `.history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score a model on recordings and write a metrics CSV.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated subject ids; all subjects when omitted.
        #[arg(long, value_delimiter = ',')]
        subjects: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subject-independent cross-validation; writes cv_report.csv and cv_summary.json.
    Cv {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic cohort.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        recordings: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        difficulty: Option<f64>,
        /// Emissions follow the previous epoch's stage.
        #[arg(long)]
        context_only: bool,
    },
    /// Compare analytic gradients with central differences on a random net.
    Gradcheck {
        #[arg(long = "type", default_value = "blstm")]
        kind: LayerKind,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long, default_value_t = 8)]
        units: usize,
        #[arg(long, default_value_t = 12)]
        steps: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 6)]
        inputs: usize,
        #[arg(long, default_value_t = DEFAULT_FD_STEP)]
        fd_step: f64,
    },
    /// Cross-validate every hidden type x layers x units combination of the config.
    Sweep {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure { code: 1, msg: msg.into() }
    }
}

impl From<sleepnet::Error> for Failure {
    fn from(e: sleepnet::Error) -> Self {
        let code = match &e {
            sleepnet::Error::Config(_) => 1,
            sleepnet::Error::Numeric(_) => 3,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    let data = |d: Option<PathBuf>| {
        d.or_else(|| cfg.data_dir.clone())
            .ok_or_else(|| Failure::usage("no data directory: pass --data or set data_dir"))
    };
    match cli.command {
        Command::Validate { data: d } => commands::validate(&data(d)?),
        Command::Extract { data: d, out } => {
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Failure::usage("no output directory: pass --out or set output_dir"))?;
            commands::extract(&cfg, &data(d)?, &out)
        }
        Command::FitDict { data: d, out } => commands::fit_dict(&cfg, &data(d)?, &out),
        Command::Train { data: d, model, history } => {
            let history = history.unwrap_or_else(|| model.with_extension("history.csv"));
            commands::train(&cfg, &data(d)?, &model, &history)
        }
        Command::Eval { data: d, model, subjects, out } => {
            commands::eval(&data(d)?, &model, &subjects, &out)
        }
        Command::Cv { data: d, out } => {
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Failure::usage("no output directory: pass --out or set output_dir"))?;
            commands::cv(&cfg, &data(d)?, &out)
        }
        Command::Synth { out, recordings, epochs, difficulty, context_only } => {
            commands::synth(&cfg, &out, recordings, epochs, difficulty, context_only)
        }
        Command::Gradcheck { kind, layers, units, steps, classes, inputs, fd_step } => {
            commands::gradcheck(&cfg, kind, layers, units, steps, classes, inputs, fd_step)
        }
        Command::Sweep { data: d, out } => commands::sweep(&cfg, &data(d)?, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("sleepnet: {}", line.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sleepnet: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
