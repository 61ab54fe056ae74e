use std::path::PathBuf;
use std::process::ExitCode;

use cgad_core::pipeline::{
    cmd_build_graph, cmd_detect, cmd_evaluate, cmd_report, cmd_synth, cmd_train, PipelineConfig, OUT_DIR_ENV,
};
use cgad_core::Result;
use clap::{Args, Parser, Subcommand};

/// Causal-graph anomaly detection for multivariate time series.
#[derive(Parser)]
#[command(name = "cgad", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a coupled autoregressive train/test pair with injected anomalies.
    Synth(Common),
    /// Estimate the transfer-entropy graph from the training data.
    BuildGraph(Common),
    /// Train the graph forecaster.
    Train(Common),
    /// Score the test data and fit the alarm threshold.
    Detect(Common),
    /// Compare decisions with labels (F1, F1c, F1PA).
    Evaluate(Common),
    /// Render SVG views of scores and causal events.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for data generation, chunk sampling, initialization and shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (also settable through CGAD_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
            cfg.output_dir = PathBuf::from(dir);
        }
        if let Some(dir) = &self.out {
            cfg.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let cfg = c.resolve()?;
            let data = cmd_synth(&cfg)?;
            println!(
                "wrote {} train and {} test steps for {} sensors to {}",
                data.train.len(),
                data.test.len(),
                data.train.n_sensors(),
                cfg.output_dir.display()
            );
        }
        Command::BuildGraph(c) => {
            let cfg = c.resolve()?;
            let out = cmd_build_graph(&cfg)?;
            println!("{} edges among {} sensors -> {}", out.graph.edge_count(), out.graph.n_nodes(), cfg.graph_path().display());
        }
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let (model, history) = cmd_train(&cfg)?;
            println!(
                "{} parameters, best validation MSE {:.6e} at epoch {} -> {}",
                model.parameter_count(),
                history.val_mse[history.best_epoch],
                history.best_epoch + 1,
                cfg.model_path().display()
            );
        }
        Command::Detect(c) => {
            let cfg = c.resolve()?;
            let out = cmd_detect(&cfg)?;
            let alarms = out.scores.decisions.iter().filter(|&&d| d == 1).count();
            println!(
                "threshold {:.4} ({:?}), {alarms} of {} steps flagged -> {}",
                out.fit.threshold,
                out.fit.method,
                out.scores.decisions.len(),
                cfg.scores_path().display()
            );
        }
        Command::Evaluate(c) => {
            let cfg = c.resolve()?;
            print!("{}", cmd_evaluate(&cfg)?.to_text());
        }
        Command::Report(c) => {
            let cfg = c.resolve()?;
            for path in cmd_report(&cfg)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cgad: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
