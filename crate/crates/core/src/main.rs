use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use overlap_risk::io::{RunConfig, ScenarioChoice};
use overlap_risk::pipeline::run_pipeline;

/// Systemic-risk toolkit for overlapping bank portfolios: projects the
/// bank-asset network, scores DebtRank, computes a risk-efficient
/// reallocation, and stress-tests both networks with fire-sale cascades.
#[derive(Parser, Debug)]
#[command(name = "overlap-risk", version, about)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Override the RNG seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the market-depth scale parameter.
    #[arg(long)]
    c: Option<f64>,

    /// Fire-sale scenarios to run.
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,

    /// Skip the reallocation; run analytics and fire sales on the
    /// original network only.
    #[arg(long)]
    skip_optimize: bool,

    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Moderate,
    Extreme,
    Both,
}

impl From<ScenarioArg> for ScenarioChoice {
    fn from(value: ScenarioArg) -> Self {
        match value {
            ScenarioArg::Moderate => ScenarioChoice::Moderate,
            ScenarioArg::Extreme => ScenarioChoice::Extreme,
            ScenarioArg::Both => ScenarioChoice::Both,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let mut config = match RunConfig::from_file(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("[config] {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(seed) = cli.seed {
        config.rng_seed = seed;
    }
    if let Some(c) = cli.c {
        config.depth_scale = c;
    }
    if let Some(scenario) = cli.scenario {
        config.scenario = scenario.into();
    }
    if cli.skip_optimize {
        config.skip_optimize = true;
    }
    if let Some(out) = cli.out {
        config.output_dir = out;
    }

    let report = match run_pipeline(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.error.exit_code() as u8);
        }
    };

    for warning in &report.summary.warnings {
        eprintln!("warning: {warning}");
    }
    let s = &report.summary;
    println!(
        "market: {} banks x {} assets (c = {})",
        s.n_banks, s.n_assets, s.depth_scale
    );
    println!(
        "mean DebtRank: original {:.6}{}",
        s.debtrank.mean_original,
        match s.debtrank.mean_optimized {
            Some(opt) => format!(
                ", optimized {:.6}{}",
                opt,
                s.debtrank_reduction_factor
                    .map(|f| format!(" (reduction factor {:.2})", f))
                    .unwrap_or_default()
            ),
            None => String::new(),
        }
    );
    for c in &s.contagion {
        println!(
            "contagion ({}): original {:.1}%{}",
            c.scenario,
            100.0 * c.original,
            c.optimized
                .map(|p| format!(", optimized {:.1}%", 100.0 * p))
                .unwrap_or_default()
        );
    }
    println!("reports written to {}", config.output_dir.display());
    ExitCode::SUCCESS
}
