mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RawConfig;

#[derive(Debug, Parser)]
#[command(name = "mmpath", version, about = "mmWave multipath positioning experiments")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Config file plus the flags that override it.
#[derive(Debug, Args)]
struct Overrides {
    /// Flat `key = value` run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    max_order: Option<usize>,
    #[arg(long, global = true)]
    n_trees: Option<usize>,
    /// sbr, los or both.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Range noise, metres.
    #[arg(long, global = true)]
    noise_sigma_range: Option<f64>,
    /// Angle noise, degrees.
    #[arg(long, global = true)]
    noise_sigma_angle: Option<f64>,
    /// RSS noise, dB.
    #[arg(long, global = true)]
    noise_sigma_rss: Option<f64>,
    /// RSS-threshold baseline window, dB.
    #[arg(long, global = true)]
    threshold_db: Option<f64>,
    /// Any other config key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a scene and a UE trajectory along its route.
    GenScene,
    /// Trace the trajectory and write the measurement dataset.
    GenDataset,
    /// Train the reflection-order classifier.
    Train,
    /// Score a saved model on a labeled dataset.
    EvalClassifier,
    /// Run the positioning pipeline and the baselines for gNB1 and gNB2.
    Position,
    /// Summarize fix files.
    Report {
        /// Fix CSV files written by `position`.
        #[arg(required = true)]
        fixes: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write one error CDF per fix file into this directory.
        #[arg(long)]
        cdf_dir: Option<PathBuf>,
        /// Compare the first file against each of the others on common fixes.
        #[arg(long)]
        compare: bool,
    },
}

impl Overrides {
    fn load(&self) -> mmpath::Result<config::RunConfig> {
        let mut raw = match &self.config {
            Some(p) => RawConfig::load(p)?,
            None => RawConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| mmpath::Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            raw.set(k, v.trim());
        }
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { raw.set(stringify!($field), v); })*
            };
        }
        apply!(
            seed,
            max_order,
            n_trees,
            mode,
            noise_sigma_range,
            noise_sigma_angle,
            noise_sigma_rss,
            threshold_db
        );
        raw.resolve()
    }
}

fn run(cli: Cli, out: &mut String) -> mmpath::Result<()> {
    if let Command::Report {
        fixes,
        csv,
        cdf_dir,
        compare,
    } = &cli.command
    {
        return commands::report(fixes, csv.as_deref(), cdf_dir.as_deref(), *compare, out);
    }
    let cfg = cli.overrides.load()?;
    match cli.command {
        Command::GenScene => commands::gen_scene(&cfg, out),
        Command::GenDataset => commands::gen_dataset(&cfg, out),
        Command::Train => commands::train(&cfg, out),
        Command::EvalClassifier => commands::eval_classifier(&cfg, out),
        Command::Position => commands::position(&cfg, out),
        Command::Report { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let mut out = String::new();
    let result = run(Cli::parse(), &mut out);
    // A reader that closed the pipe early is not an error.
    match std::io::stdout().lock().write_all(out.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            eprintln!("mmpath: stdout: {e}");
            return ExitCode::FAILURE;
        }
        _ => {}
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmpath: {e}");
            ExitCode::FAILURE
        }
    }
}
