use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hemq::io::{run, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "hemq",
    version,
    about = "Measure quantization with Huber-energy kernel distances"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Quantize a target (method from the config: shemq, de, flow, exact1d).
    Quantize(Overrides),
    /// Normalized gradient flow towards an isotropic Gaussian.
    Flow(Overrides),
    /// Exact 1D quantile quantizer.
    Exact1d(Overrides),
    /// Estimate the squared distance between a quantizer and the target.
    Estimate(Overrides),
    /// Compare a quantizer's nearest-point partition with dataset labels.
    Eval(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Flat TOML run description.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "Q")]
    q: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "label-col")]
    label_col: Option<usize>,
    #[arg(long)]
    standardize: bool,
}

impl Overrides {
    fn apply(self) -> hemq::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $( if self.$field.is_some() { cfg.$field = self.$field; } )* };
        }
        set!(kernel, r, a, sigma, lambda, q, batch, lr, iters, seed, out, label_col);
        if self.standardize {
            cfg.standardize = Some(true);
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, overrides) = match cli.command {
        Sub::Quantize(o) => (Command::Quantize, o),
        Sub::Flow(o) => (Command::Flow, o),
        Sub::Exact1d(o) => (Command::Exact1d, o),
        Sub::Estimate(o) => (Command::Estimate, o),
        Sub::Eval(o) => (Command::Eval, o),
    };
    let result = overrides.apply().and_then(|cfg| run(command, &cfg));
    match result {
        Ok(outcome) => {
            let text = match serde_json::to_string_pretty(&outcome.summary) {
                Ok(text) => text,
                Err(e) => {
                    eprintln!("hemq {}: {e}", command.as_str());
                    return ExitCode::FAILURE;
                }
            };
            // A closed pipe on stdout is not an error of the run.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hemq {}: {e}", command.as_str());
            ExitCode::FAILURE
        }
    }
}
