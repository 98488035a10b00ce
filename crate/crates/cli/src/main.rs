use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fallsense::synth::ScenarioKind;
use fallsense_cli::commands::{self, DatasetSize, Generate, ModelChoice, ReplayPaths};
use fallsense_cli::config::{seed_from_env, RunConfig};
use fallsense_cli::CliError;
use log::LevelFilter;

#[derive(Parser)]
#[command(name = "fallsense", version, about = "Two-stage IMU + WiFi CSI fall detection")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for generation and training (overrides FALLSENSE_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Imu,
    Csi,
}

impl From<Kind> for ModelChoice {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Imu => ModelChoice::Imu,
            Kind::Csi => ModelChoice::Csi,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a labelled dataset or one scenario's IMU + CSI traces.
    Generate {
        /// `table1` or a per-class count.
        #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
        classes: Option<DatasetSize>,
        /// fall-static, fall-recover, throw, daily or static.
        #[arg(long, value_parser = parse_scenario)]
        scenario: Option<ScenarioKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the IMU (MLP) or CSI (CNN) model on a generated dataset.
    Train {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        dataset: PathBuf,
        /// Weight file to write; the report goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Score saved weights on a dataset's test split.
    Evaluate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Run recorded traces through the detector and log every tick.
    Replay {
        #[arg(long)]
        imu: Option<PathBuf>,
        #[arg(long)]
        csi: Option<PathBuf>,
        #[arg(long)]
        mlp: Option<PathBuf>,
        #[arg(long)]
        cnn: Option<PathBuf>,
        /// Verdict log to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional `t,lacc,gyr` series for plotting.
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        vote_threshold: Option<usize>,
    },
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    ScenarioKind::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown scenario `{s}` (expected one of {})", names.join(", "))
    })
}

fn need(path: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    path.ok_or_else(|| CliError::Usage(format!("missing {what} path (flag or paths.* config key)")))
}

fn effective_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(seed) = seed_from_env()? {
        cfg.seed = seed;
    }
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.quiet {
        cfg.log_level = LevelFilter::Error;
    } else if common.verbose > 0 {
        cfg.log_level = if common.verbose == 1 {
            LevelFilter::Info
        } else {
            LevelFilter::Debug
        };
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = effective_config(&cli.common)?;
    env_logger::Builder::new()
        .filter_level(cfg.log_level)
        .parse_default_env()
        .format_timestamp(None)
        .init();

    match cli.command {
        Command::Generate { classes, scenario, out } => {
            let what = match (classes, scenario) {
                (Some(size), None) => Generate::Dataset(size),
                (None, Some(kind)) => Generate::Scenario(kind),
                _ => return Err(CliError::Usage("give exactly one of --classes or --scenario".into())),
            };
            let out = need(out.or(cfg.paths.out.clone()), "output directory")?;
            let manifest = commands::cmd_generate(what, &out, &cfg)?;
            print!("{}", manifest.render());
        }
        Command::Train {
            kind,
            dataset,
            out,
            epochs,
            lr,
            batch,
        } => {
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.train.learning_rate = lr.unwrap_or(cfg.train.learning_rate);
            cfg.train.batch_size = batch.unwrap_or(cfg.train.batch_size);
            let out = need(out.or(cfg.paths.out.clone()), "weight file")?;
            let outcome = commands::cmd_train(kind.into(), &dataset, &out, &cfg)?;
            print!("{}", outcome.report.render());
        }
        Command::Evaluate { kind, dataset, weights } => {
            let (_, report) = commands::cmd_evaluate(kind.into(), &dataset, &weights, &cfg)?;
            print!("{}", report.render());
        }
        Command::Replay {
            imu,
            csi,
            mlp,
            cnn,
            out,
            series,
            vote_threshold,
        } => {
            if let Some(k) = vote_threshold {
                cfg.fusion.vote_threshold = k;
            }
            let p = cfg.paths.clone();
            let imu = need(imu.or(p.imu), "imu trace")?;
            let csi = need(csi.or(p.csi), "csi trace")?;
            let mlp = need(mlp.or(p.mlp), "mlp weights")?;
            let cnn = need(cnn.or(p.cnn), "cnn weights")?;
            let log = need(out.or(p.out), "verdict log")?;
            let paths = ReplayPaths {
                imu: &imu,
                csi: &csi,
                mlp: &mlp,
                cnn: &cnn,
                log: &log,
                series: series.as_deref(),
            };
            let outcome = commands::cmd_replay(&paths, &cfg)?;
            println!("{}", commands::summary_line(&outcome.counts));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fallsense: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
