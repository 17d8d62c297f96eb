//! End-to-end pipeline: load, project, rank, optimize, simulate, report.
//!
//! Every run is deterministic for a fixed seed; `summary.json` carries a
//! `generated_at` timestamp that callers exclude from determinism checks.

use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::Serialize;

use crate::analytics::{
    bipartite_density, hhi, projection_stats, rank_correlation, sweep_depth_scale, NetworkStats,
    RankCorrelation, SweepPoint,
};
use crate::debtrank::{debtrank_all, DebtRankResult};
use crate::error::{Error, Result};
use crate::firesale::{contagion_probability, ContagionReport};
use crate::io::{load_market, write_holdings, RunConfig, ScenarioKind};
use crate::market::{project_overlap, BipartiteMarket};
use crate::optimizer::{apply_solution, build_qcqp, solve, SolveStatus};

/// Error tagged with the pipeline stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DebtRankSummary {
    pub mean_original: f64,
    pub max_original: f64,
    pub mean_optimized: Option<f64>,
    pub max_optimized: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub objective_baseline: f64,
    pub objective_optimized: f64,
    pub starts_used: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContagionSummary {
    pub scenario: String,
    pub original: f64,
    pub optimized: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HhiSummary {
    pub mean_original: f64,
    pub mean_optimized: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NetworkSummary {
    pub bipartite_density_original: f64,
    pub bipartite_density_optimized: Option<f64>,
    pub projection_original: NetworkStats,
    pub projection_optimized: Option<NetworkStats>,
}

/// Everything `summary.json` holds.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub generated_at: String,
    pub seed: u64,
    pub depth_scale: f64,
    pub n_banks: usize,
    pub n_assets: usize,
    pub debtrank: DebtRankSummary,
    /// Mean original DebtRank over mean optimized; absent when the
    /// optimizer was skipped or the optimized mean is zero.
    pub debtrank_reduction_factor: Option<f64>,
    pub solver: Option<SolverSummary>,
    pub contagion: Vec<ContagionSummary>,
    pub hhi: HhiSummary,
    pub rank_correlation: Option<RankCorrelation>,
    pub network: NetworkSummary,
    pub warnings: Vec<String>,
}

/// In-memory results of a pipeline run, before/apart from file emission.
pub struct PipelineReport {
    pub summary: Summary,
    pub debtrank_original: DebtRankResult,
    pub debtrank_optimized: Option<DebtRankResult>,
    pub original_market: BipartiteMarket,
    pub optimized_market: Option<BipartiteMarket>,
    pub contagion: Vec<(ScenarioKind, ContagionReport, Option<ContagionReport>)>,
    pub sweep_original: Vec<SweepPoint>,
    pub sweep_optimized: Option<Vec<SweepPoint>>,
    pub written_files: Vec<PathBuf>,
}

/// Runs the full pipeline and writes every report into the output
/// directory. Stages run strictly in order; the first failing stage
/// aborts the run with its tag.
pub fn run_pipeline(config: &RunConfig) -> std::result::Result<PipelineReport, StageError> {
    let loaded = load_market(
        &config.holdings,
        &config.banks,
        &config.assets,
        &config.returns,
        &config.covariance,
        config.depth_scale,
    )
    .stage("load")?;
    let market = loaded.market;
    let warnings = loaded.warnings;

    let network = project_overlap(&market).stage("project")?;
    let dr_original =
        debtrank_all(&network.impact, &network.economic_value, 1.0).stage("debtrank")?;

    let hhi_original = hhi(&market).stage("analytics")?;
    let stats_original = projection_stats(&network, None).stage("analytics")?;
    let bip_density_original = bipartite_density(&market, None).stage("analytics")?;

    let mut solver_summary = None;
    let mut optimized_market = None;
    let mut dr_optimized = None;

    if !config.skip_optimize {
        let mut optimizer_config = config.optimizer.clone();
        optimizer_config.rng_seed = config.rng_seed;
        let instance = build_qcqp(&market, &loaded.returns, &loaded.covariance, &market.equities())
            .stage("build-qcqp")?;
        let solution = solve(&instance, &optimizer_config).stage("solve")?;
        let rewired = apply_solution(&market, &solution.y).stage("apply")?;
        let net_opt = project_overlap(&rewired).stage("project")?;
        let dr = debtrank_all(&net_opt.impact, &net_opt.economic_value, 1.0).stage("debtrank")?;
        solver_summary = Some(SolverSummary {
            status: solution.status,
            objective_baseline: instance.objective(instance.baseline()),
            objective_optimized: solution.objective_value,
            starts_used: solution.starts_used,
            max_residual: solution.feasibility.max(),
        });
        optimized_market = Some(rewired);
        dr_optimized = Some(dr);
    }

    let (hhi_optimized, stats_optimized, bip_density_optimized) = match &optimized_market {
        Some(m) => {
            let net = project_overlap(m).stage("project")?;
            (
                Some(hhi(m).stage("analytics")?),
                Some(projection_stats(&net, None).stage("analytics")?),
                Some(bipartite_density(m, None).stage("analytics")?),
            )
        }
        None => (None, None, None),
    };

    let ranks = match &dr_optimized {
        Some(opt) => Some(
            rank_correlation(
                dr_original.per_bank.as_slice().unwrap(),
                opt.per_bank.as_slice().unwrap(),
            )
            .stage("analytics")?,
        ),
        None => None,
    };

    let mut contagion = Vec::new();
    for kind in config.scenario.kinds() {
        let fs_config = config.firesale.config(kind);
        let original = contagion_probability(&market, &fs_config).stage("firesale")?;
        let optimized = match &optimized_market {
            Some(m) => Some(contagion_probability(m, &fs_config).stage("firesale")?),
            None => None,
        };
        contagion.push((kind, original, optimized));
    }

    let sweep_original = sweep_depth_scale(&market, &config.sweep_c, 1.0).stage("sweep")?;
    let sweep_optimized = match &optimized_market {
        Some(m) => Some(sweep_depth_scale(m, &config.sweep_c, 1.0).stage("sweep")?),
        None => None,
    };

    let reduction = match &dr_optimized {
        Some(opt) if opt.mean > 0.0 => Some(dr_original.mean / opt.mean),
        _ => None,
    };

    let summary = Summary {
        generated_at: chrono::Utc::now().to_rfc3339(),
        seed: config.rng_seed,
        depth_scale: config.depth_scale,
        n_banks: market.n_banks(),
        n_assets: market.n_assets(),
        debtrank: DebtRankSummary {
            mean_original: dr_original.mean,
            max_original: dr_original.per_bank.iter().cloned().fold(0.0, f64::max),
            mean_optimized: dr_optimized.as_ref().map(|d| d.mean),
            max_optimized: dr_optimized
                .as_ref()
                .map(|d| d.per_bank.iter().cloned().fold(0.0, f64::max)),
        },
        debtrank_reduction_factor: reduction,
        solver: solver_summary,
        contagion: contagion
            .iter()
            .map(|(kind, orig, opt)| ContagionSummary {
                scenario: kind.name().to_string(),
                original: orig.probability,
                optimized: opt.as_ref().map(|r| r.probability),
            })
            .collect(),
        hhi: HhiSummary {
            mean_original: hhi_original.mean,
            mean_optimized: hhi_optimized.as_ref().map(|h| h.mean),
        },
        rank_correlation: ranks,
        network: NetworkSummary {
            bipartite_density_original: bip_density_original,
            bipartite_density_optimized: bip_density_optimized,
            projection_original: stats_original,
            projection_optimized: stats_optimized,
        },
        warnings,
    };

    let mut report = PipelineReport {
        summary,
        debtrank_original: dr_original,
        debtrank_optimized: dr_optimized,
        original_market: market,
        optimized_market,
        contagion,
        sweep_original,
        sweep_optimized,
        written_files: Vec::new(),
    };
    report.written_files = emit_reports(&report, &config.output_dir).stage("emit")?;
    Ok(report)
}

/// Writes `summary.json`, `debtrank.csv`, per-scenario fire-sale CSVs,
/// `sweep_c.csv`, and (when the optimizer ran) `holdings_optimized.csv`.
/// Column orders are fixed; floats use the shortest round-trip encoding.
pub fn emit_reports(report: &PipelineReport, output_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(output_dir).map_err(|source| Error::Io {
        path: output_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();

    let summary_path = output_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&report.summary)?;
    std::fs::write(&summary_path, json + "\n").map_err(|source| Error::Io {
        path: summary_path.display().to_string(),
        source,
    })?;
    written.push(summary_path);

    let dr_path = output_dir.join("debtrank.csv");
    {
        let mut w = csv_writer(&dr_path)?;
        w.write_record(["bank_id", "debtrank_original", "debtrank_optimized"])?;
        let banks = report.original_market.banks();
        for (i, bank) in banks.iter().enumerate() {
            let optimized = report
                .debtrank_optimized
                .as_ref()
                .map(|d| format!("{}", d.per_bank[i]))
                .unwrap_or_default();
            w.write_record([
                bank.id.as_str(),
                &format!("{}", report.debtrank_original.per_bank[i]),
                &optimized,
            ])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: dr_path.display().to_string(),
            source,
        })?;
    }
    written.push(dr_path);

    for (kind, original, optimized) in &report.contagion {
        let path = output_dir.join(format!("firesale_{}_original.csv", kind.name()));
        write_firesale_csv(&path, original, &report.original_market)?;
        written.push(path);
        if let (Some(opt_report), Some(opt_market)) = (optimized, &report.optimized_market) {
            let path = output_dir.join(format!("firesale_{}_optimized.csv", kind.name()));
            write_firesale_csv(&path, opt_report, opt_market)?;
            written.push(path);
        }
    }

    let sweep_path = output_dir.join("sweep_c.csv");
    {
        let mut w = csv_writer(&sweep_path)?;
        w.write_record(["c", "debtrank_mean_original", "debtrank_mean_optimized"])?;
        for (idx, point) in report.sweep_original.iter().enumerate() {
            let optimized = report
                .sweep_optimized
                .as_ref()
                .map(|s| format!("{}", s[idx].mean_debtrank))
                .unwrap_or_default();
            w.write_record([
                &format!("{}", point.c),
                &format!("{}", point.mean_debtrank),
                &optimized,
            ])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: sweep_path.display().to_string(),
            source,
        })?;
    }
    written.push(sweep_path);

    if let Some(market) = &report.optimized_market {
        let path = output_dir.join("holdings_optimized.csv");
        write_holdings(market, &path)?;
        written.push(path);
    }

    Ok(written)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.display().to_string(),
            source,
        },
        other => Error::Csv(csv::Error::new(other)),
    })
}

fn write_firesale_csv(
    path: &Path,
    report: &ContagionReport,
    market: &BipartiteMarket,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "bank_id",
        "induced_defaults",
        "induced_default_ids",
        "final_market_fraction",
        "equity_destroyed",
        "steps",
        "final_avg_leverage",
    ])?;
    let banks = market.banks();
    for scenario in &report.scenarios {
        let ids: Vec<&str> = scenario
            .induced_defaults
            .iter()
            .map(|&i| banks[i].id.as_str())
            .collect();
        let final_leverage = scenario
            .leverage_path
            .last()
            .and_then(|v| *v)
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        w.write_record([
            banks[scenario.initial_defaulter].id.as_str(),
            &format!("{}", scenario.induced_defaults.len()),
            &ids.join(";"),
            &format!("{}", scenario.final_market_fraction),
            &format!("{}", scenario.equity_destroyed),
            &format!("{}", scenario.steps),
            &final_leverage,
        ])?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Convenience used by tests and the CLI determinism check: reads
/// `summary.json` with the timestamp cleared.
pub fn summary_without_timestamp(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("generated_at");
    }
    Ok(value)
}

/// Vector helper for report consumers.
pub fn per_bank_vec(values: &Array1<f64>) -> Vec<f64> {
    values.to_vec()
}
