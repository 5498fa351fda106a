//! Command-line experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aces::harness::{self, config::parse_config_file, plot, ExperimentConfig, Strategy};

#[derive(Parser)]
#[command(
    name = "aces",
    about = "Contextual Bayesian optimization on an analytic ball-throw task"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment and write CSV results.
    Run(RunArgs),
    /// Dump the ground-truth optimum table on a context grid.
    Oracle(OracleArgs),
    /// Render an SVG plot from experiment CSVs.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Query strategy: random | ucb | es | aces.
    #[arg(long)]
    strategy: Option<String>,
    /// Nearest-neighbor contexts for the aces strategy.
    #[arg(long)]
    nnn: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "eval-interval")]
    eval_interval: Option<usize>,
    /// Observation noise added to each rollout return.
    #[arg(long = "noise-std")]
    noise_std: Option<f64>,
    /// Output directory for the CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key-value config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Grid resolution per context dimension.
    #[arg(long, default_value_t = 16)]
    grid: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory holding the experiment CSVs.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// curve (learning curve) or scatter (selected contexts).
    #[arg(long, default_value = "curve")]
    kind: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(args: RunArgs) -> aces::Result<()> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => Default::default(),
    };
    let lookup = |key: &str| file.get(key).cloned();
    fn parse_from<T: std::str::FromStr>(key: &str, value: &str) -> aces::Result<T> {
        value
            .parse()
            .map_err(|_| aces::Error::Config(format!("bad value '{value}' for {key}")))
    }

    let strategy_name = args
        .strategy
        .or_else(|| lookup("strategy"))
        .unwrap_or_else(|| "aces".into());
    let nnn = match args.nnn {
        Some(n) => n,
        None => match lookup("nnn") {
            Some(v) => parse_from("nnn", &v)?,
            None => 20,
        },
    };
    let strategy = Strategy::parse(&strategy_name, nnn)?;

    let out = args
        .out
        .or_else(|| lookup("out").map(PathBuf::from))
        .ok_or_else(|| {
            aces::Error::Config("--out (or 'out' in the config file) is required".into())
        })?;

    let mut config = ExperimentConfig::new(strategy, out);
    macro_rules! layer {
        ($field:ident, $flag:expr, $key:literal) => {
            if let Some(v) = $flag {
                config.$field = v;
            } else if let Some(v) = lookup($key) {
                config.$field = parse_from($key, &v)?;
            }
        };
    }
    layer!(episodes, args.episodes, "episodes");
    layer!(runs, args.runs, "runs");
    layer!(seed, args.seed, "seed");
    layer!(eval_interval, args.eval_interval, "eval-interval");
    layer!(noise_std, args.noise_std, "noise-std");

    let output = harness::run_experiment(&config)?;
    if let Some(last) = output.summary.last() {
        println!(
            "{}: final mean offline performance {:.4} +- {:.4} over {} runs ({} episodes)",
            config.strategy.label(),
            last.mean,
            last.stderr,
            last.runs,
            config.episodes
        );
    }
    println!("results written to {}", config.output_dir.display());
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> aces::Result<()> {
    if args.grid == 0 {
        return Err(aces::Error::Config("--grid must be >= 1".into()));
    }
    harness::write_oracle_table(args.grid, &args.out)?;
    println!(
        "oracle table ({0}x{0}) written to {1}",
        args.grid,
        args.out.display()
    );
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> aces::Result<()> {
    let svg = match args.kind.as_str() {
        "curve" => {
            let rows = plot::read_summary_csv(&args.input.join("summary.csv"))?;
            plot::learning_curve_svg(&rows, "offline performance")
        }
        "scatter" => {
            let rows = plot::read_context_log_csv(&args.input.join("context_log.csv"))?;
            plot::context_scatter_svg(&rows, "selected contexts")
        }
        other => {
            return Err(aces::Error::Config(format!(
                "unknown plot kind '{other}' (expected curve or scatter)"
            )))
        }
    };
    std::fs::write(&args.out, svg)?;
    println!("plot written to {}", args.out.display());
    Ok(())
}
