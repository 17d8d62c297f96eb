//! Data ingestion and run configuration.
//!
//! CSV schemas (headers mandatory, UTF-8, '.' decimal separator):
//!
//! - `holdings.csv`:   `bank_id,asset_id,value`
//! - `banks.csv`:      `bank_id,equity,other_assets`
//! - `assets.csv`:     `asset_id,adv,volatility[,depth]`
//! - `returns.csv`:    `asset_id,expected_return`
//! - `covariance.csv`: K x K matrix with an asset-id header row and an
//!   asset-id first column; row/column order may differ from `assets.csv`.
//!
//! Bank and asset indices follow the row order of `banks.csv` and
//! `assets.csv`. When a direct depth is given it wins over the value
//! derived from adv/volatility and a warning is recorded.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::firesale::{FireSaleConfig, LeverageCapMode};
use crate::market::{market_depth, Asset, Bank, BipartiteMarket};
use crate::optimizer::OptimizerConfig;

/// Market plus the optimizer inputs that travel with it.
#[derive(Debug, Clone)]
pub struct LoadedMarket {
    pub market: BipartiteMarket,
    pub returns: Array1<f64>,
    pub covariance: Array2<f64>,
    pub warnings: Vec<String>,
}

/// Which fire-sale scenarios the pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioChoice {
    Moderate,
    Extreme,
    #[default]
    Both,
}

/// Fire-sale parameters shared by both scenarios.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FireSaleSettings {
    pub epsilon: f64,
    /// Uniform cap of the moderate scenario; the extreme scenario always
    /// caps each bank at its initial leverage.
    pub moderate_cap: f64,
    pub max_steps: usize,
    pub stop_tol: f64,
}

impl Default for FireSaleSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.025,
            moderate_cap: 33.0,
            max_steps: 1000,
            stop_tol: 1e-12,
        }
    }
}

impl FireSaleSettings {
    pub fn config(&self, scenario: ScenarioKind) -> FireSaleConfig {
        let mode = match scenario {
            ScenarioKind::Moderate => LeverageCapMode::Fixed(self.moderate_cap),
            ScenarioKind::Extreme => LeverageCapMode::Initial,
        };
        FireSaleConfig {
            leverage_cap_mode: mode,
            epsilon: self.epsilon,
            max_steps: self.max_steps,
            stop_tol: self.stop_tol,
        }
    }
}

/// A concrete scenario to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Moderate,
    Extreme,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Moderate => "moderate",
            ScenarioKind::Extreme => "extreme",
        }
    }
}

impl ScenarioChoice {
    pub fn kinds(&self) -> Vec<ScenarioKind> {
        match self {
            ScenarioChoice::Moderate => vec![ScenarioKind::Moderate],
            ScenarioChoice::Extreme => vec![ScenarioKind::Extreme],
            ScenarioChoice::Both => vec![ScenarioKind::Moderate, ScenarioKind::Extreme],
        }
    }
}

/// Pipeline configuration, deserialized from a JSON file. CLI flags
/// override individual fields. Relative paths are resolved against the
/// config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub holdings: PathBuf,
    pub banks: PathBuf,
    pub assets: PathBuf,
    pub returns: PathBuf,
    pub covariance: PathBuf,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    #[serde(default)]
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub scenario: ScenarioChoice,
    #[serde(default)]
    pub skip_optimize: bool,
    #[serde(default)]
    pub sweep_c: Vec<f64>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub firesale: FireSaleSettings,
}

fn default_depth_scale() -> f64 {
    0.4
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            for p in [
                &mut config.holdings,
                &mut config.banks,
                &mut config.assets,
                &mut config.returns,
                &mut config.covariance,
                &mut config.output_dir,
            ] {
                if p.is_relative() {
                    *p = dir.join(&p);
                }
            }
        }
        if !(config.depth_scale > 0.0) {
            return Err(Error::Config(format!(
                "depth_scale must be > 0, got {}",
                config.depth_scale
            )));
        }
        Ok(config)
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field(file: &str, record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let raw = record.get(idx).ok_or_else(|| Error::Parse {
        file: file.to_string(),
        line: record_line(record),
        message: format!("missing column '{name}'"),
    })?;
    raw.parse::<f64>().map_err(|_| Error::Parse {
        file: file.to_string(),
        line: record_line(record),
        message: format!("cannot parse {name} value '{raw}'"),
    })
}

fn require_field<'a>(
    file: &str,
    record: &'a csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<&'a str> {
    match record.get(idx) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Parse {
            file: file.to_string(),
            line: record_line(record),
            message: format!("missing column '{name}'"),
        }),
    }
}

/// Loads and cross-validates the five input files into a market plus the
/// optimizer inputs, with asset/bank order taken from their files.
pub fn load_market(
    holdings_path: &Path,
    banks_path: &Path,
    assets_path: &Path,
    returns_path: &Path,
    covariance_path: &Path,
    depth_scale: f64,
) -> Result<LoadedMarket> {
    let mut warnings = Vec::new();

    // banks.csv
    let banks_file = file_name(banks_path);
    let mut banks = Vec::new();
    let mut bank_index: HashMap<String, usize> = HashMap::new();
    let mut reader = open_reader(banks_path)?;
    for record in reader.records() {
        let record = record?;
        let id = require_field(&banks_file, &record, 0, "bank_id")?.to_string();
        let equity = parse_field(&banks_file, &record, 1, "equity")?;
        let other_assets = parse_field(&banks_file, &record, 2, "other_assets")?;
        if bank_index.insert(id.clone(), banks.len()).is_some() {
            return Err(Error::DuplicateId {
                file: banks_file,
                kind: "bank",
                id,
            });
        }
        banks.push(Bank {
            id,
            equity,
            other_assets,
        });
    }
    if banks.is_empty() {
        return Err(Error::EmptyMarket(format!("{banks_file} has no rows")));
    }

    // assets.csv
    let assets_file = file_name(assets_path);
    let mut assets = Vec::new();
    let mut asset_index: HashMap<String, usize> = HashMap::new();
    let mut direct_depths = Vec::new();
    let mut reader = open_reader(assets_path)?;
    for record in reader.records() {
        let record = record?;
        let id = require_field(&assets_file, &record, 0, "asset_id")?.to_string();
        let adv = parse_field(&assets_file, &record, 1, "adv")?;
        let volatility = parse_field(&assets_file, &record, 2, "volatility")?;
        let direct = match record.get(3) {
            Some(v) if !v.is_empty() => Some(v.parse::<f64>().map_err(|_| Error::Parse {
                file: assets_file.clone(),
                line: record_line(&record),
                message: format!("cannot parse depth value '{v}'"),
            })?),
            _ => None,
        };
        let depth = match direct {
            Some(d) => {
                direct_depths.push(id.clone());
                d
            }
            None => market_depth(adv, volatility, depth_scale)?,
        };
        if asset_index.insert(id.clone(), assets.len()).is_some() {
            return Err(Error::DuplicateId {
                file: assets_file,
                kind: "asset",
                id,
            });
        }
        assets.push(Asset {
            id,
            adv,
            volatility,
            depth,
            expected_return: 0.0,
        });
    }
    if assets.is_empty() {
        return Err(Error::EmptyMarket(format!("{assets_file} has no rows")));
    }
    if !direct_depths.is_empty() {
        warnings.push(format!(
            "{assets_file}: direct depth overrides the adv/volatility derivation for {} asset(s): {}",
            direct_depths.len(),
            direct_depths.join(", ")
        ));
    }

    // returns.csv
    let returns_file = file_name(returns_path);
    let mut seen_returns = vec![false; assets.len()];
    let mut reader = open_reader(returns_path)?;
    for record in reader.records() {
        let record = record?;
        let id = require_field(&returns_file, &record, 0, "asset_id")?;
        let value = parse_field(&returns_file, &record, 1, "expected_return")?;
        let &idx = asset_index.get(id).ok_or_else(|| Error::DanglingId {
            file: returns_file.clone(),
            kind: "asset",
            id: id.to_string(),
        })?;
        assets[idx].expected_return = value;
        seen_returns[idx] = true;
    }
    if let Some(missing) = seen_returns.iter().position(|&seen| !seen) {
        return Err(Error::Config(format!(
            "{returns_file}: missing expected_return for asset '{}'",
            assets[missing].id
        )));
    }

    // covariance.csv
    let covariance = load_covariance(covariance_path, &asset_index, assets.len())?;

    // holdings.csv
    let holdings_file = file_name(holdings_path);
    let mut holdings = Array2::zeros((assets.len(), banks.len()));
    let mut filled = vec![false; assets.len() * banks.len()];
    let mut rows = 0usize;
    let mut reader = open_reader(holdings_path)?;
    for record in reader.records() {
        let record = record?;
        let bank_id = require_field(&holdings_file, &record, 0, "bank_id")?;
        let asset_id = require_field(&holdings_file, &record, 1, "asset_id")?;
        let value = parse_field(&holdings_file, &record, 2, "value")?;
        let &bank = bank_index.get(bank_id).ok_or_else(|| Error::DanglingId {
            file: holdings_file.clone(),
            kind: "bank",
            id: bank_id.to_string(),
        })?;
        let &asset = asset_index.get(asset_id).ok_or_else(|| Error::DanglingId {
            file: holdings_file.clone(),
            kind: "asset",
            id: asset_id.to_string(),
        })?;
        let cell = asset * banks.len() + bank;
        if filled[cell] {
            return Err(Error::Parse {
                file: holdings_file,
                line: record_line(&record),
                message: format!("duplicate holding for bank '{bank_id}', asset '{asset_id}'"),
            });
        }
        filled[cell] = true;
        holdings[[asset, bank]] = value;
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyMarket(format!("{holdings_file} has no rows")));
    }

    let market = BipartiteMarket::new(assets, banks, holdings, depth_scale)?;
    let returns = market.expected_returns();
    Ok(LoadedMarket {
        market,
        returns,
        covariance,
        warnings,
    })
}

fn load_covariance(
    path: &Path,
    asset_index: &HashMap<String, usize>,
    k_count: usize,
) -> Result<Array2<f64>> {
    let file = file_name(path);
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() != k_count + 1 {
        return Err(Error::Parse {
            file,
            line: 1,
            message: format!(
                "expected {} columns (asset_id + {k_count} assets), got {}",
                k_count + 1,
                headers.len()
            ),
        });
    }
    let mut col_map = Vec::with_capacity(k_count);
    for col in 1..headers.len() {
        let id = &headers[col];
        let &idx = asset_index.get(id).ok_or_else(|| Error::DanglingId {
            file: file.clone(),
            kind: "asset",
            id: id.to_string(),
        })?;
        col_map.push(idx);
    }
    let mut matrix = Array2::from_elem((k_count, k_count), f64::NAN);
    for record in reader.records() {
        let record = record?;
        let id = require_field(&file, &record, 0, "asset_id")?;
        let &row = asset_index.get(id).ok_or_else(|| Error::DanglingId {
            file: file.clone(),
            kind: "asset",
            id: id.to_string(),
        })?;
        for (col, &target) in col_map.iter().enumerate() {
            matrix[[row, target]] = parse_field(&file, &record, col + 1, "covariance")?;
        }
    }
    if let Some(((r, c), _)) = matrix.indexed_iter().find(|(_, v)| v.is_nan()) {
        return Err(Error::Config(format!(
            "{file}: missing covariance entry at matrix position ({r}, {c}); entries are never imputed"
        )));
    }
    Ok(matrix)
}

/// Writes a market back to the holdings schema, grouped by bank, skipping
/// exact-zero cells (absent links).
pub fn write_holdings(market: &BipartiteMarket, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.display().to_string(),
            source,
        },
        other => Error::Csv(csv::Error::new(other)),
    })?;
    writer.write_record(["bank_id", "asset_id", "value"])?;
    let holdings = market.holdings();
    for (i, bank) in market.banks().iter().enumerate() {
        for (k, asset) in market.assets().iter().enumerate() {
            let value = holdings[[k, i]];
            if value != 0.0 {
                writer.write_record([&bank.id, &asset.id, &format!("{value}")])?;
            }
        }
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    struct Fixture {
        dir: tempfile::TempDir,
    }

    impl Fixture {
        fn new() -> Self {
            Self {
                dir: tempfile::tempdir().unwrap(),
            }
        }

        fn write(&self, name: &str, content: &str) -> PathBuf {
            let path = self.dir.path().join(name);
            let mut f = std::fs::File::create(&path).unwrap();
            f.write_all(content.as_bytes()).unwrap();
            path
        }
    }

    fn standard_fixture(fx: &Fixture) -> (PathBuf, PathBuf, PathBuf, PathBuf, PathBuf) {
        let banks = fx.write(
            "banks.csv",
            "bank_id,equity,other_assets\nB1,10,5\nB2,20,0\nB3,15,2\n",
        );
        let assets = fx.write(
            "assets.csv",
            "asset_id,adv,volatility\nA1,1000000,0.01\nA2,500000,0.02\n",
        );
        let returns = fx.write(
            "returns.csv",
            "asset_id,expected_return\nA1,0.004\nA2,0.002\n",
        );
        let covariance = fx.write(
            "covariance.csv",
            "asset_id,A1,A2\nA1,0.0004,0.0001\nA2,0.0001,0.0002\n",
        );
        let holdings = fx.write(
            "holdings.csv",
            "bank_id,asset_id,value\nB1,A1,100\nB1,A2,50\nB2,A1,75\nB3,A2,25\n",
        );
        (holdings, banks, assets, returns, covariance)
    }

    #[test]
    fn loads_three_bank_two_asset_fixture() {
        let fx = Fixture::new();
        let (h, b, a, r, c) = standard_fixture(&fx);
        let loaded = load_market(&h, &b, &a, &r, &c, 0.4).unwrap();
        let market = &loaded.market;
        assert_eq!(market.n_assets(), 2);
        assert_eq!(market.n_banks(), 3);
        assert_eq!(market.bank_totals().to_vec(), vec![150.0, 75.0, 25.0]);
        assert_eq!(market.asset_totals().to_vec(), vec![175.0, 75.0]);
        // Depth derived via 0.4 * adv / volatility.
        assert_eq!(market.assets()[0].depth, 4e7);
        assert_eq!(market.assets()[1].depth, 1e7);
        assert_eq!(loaded.returns.to_vec(), vec![0.004, 0.002]);
        assert_eq!(loaded.covariance[[0, 1]], 0.0001);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn direct_depth_wins_with_warning() {
        let fx = Fixture::new();
        let (h, b, _, r, c) = standard_fixture(&fx);
        let a = fx.write(
            "assets.csv",
            "asset_id,adv,volatility,depth\nA1,1000000,0.01,9e9\nA2,500000,0.02,\n",
        );
        let loaded = load_market(&h, &b, &a, &r, &c, 0.4).unwrap();
        assert_eq!(loaded.market.assets()[0].depth, 9e9);
        assert_eq!(loaded.market.assets()[1].depth, 1e7);
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("A1"));
    }

    #[test]
    fn dangling_bank_id_is_reported() {
        let fx = Fixture::new();
        let (_, b, a, r, c) = standard_fixture(&fx);
        let h = fx.write("holdings.csv", "bank_id,asset_id,value\nB9,A1,100\n");
        let err = load_market(&h, &b, &a, &r, &c, 0.4).unwrap_err();
        match err {
            Error::DanglingId { kind, id, .. } => {
                assert_eq!(kind, "bank");
                assert_eq!(id, "B9");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_holdings_is_an_empty_market() {
        let fx = Fixture::new();
        let (_, b, a, r, c) = standard_fixture(&fx);
        let h = fx.write("holdings.csv", "bank_id,asset_id,value\n");
        assert!(matches!(
            load_market(&h, &b, &a, &r, &c, 0.4),
            Err(Error::EmptyMarket(_))
        ));
    }

    #[test]
    fn missing_covariance_entry_is_fatal() {
        let fx = Fixture::new();
        let (h, b, a, r, _) = standard_fixture(&fx);
        let c = fx.write("covariance.csv", "asset_id,A1,A2\nA1,0.0004,0.0001\n");
        let err = load_market(&h, &b, &a, &r, &c, 0.4).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn parse_error_carries_line_number() {
        let fx = Fixture::new();
        let (_, b, a, r, c) = standard_fixture(&fx);
        let h = fx.write(
            "holdings.csv",
            "bank_id,asset_id,value\nB1,A1,100\nB2,A1,not-a-number\n",
        );
        let err = load_market(&h, &b, &a, &r, &c, 0.4).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn holdings_round_trip_is_exact() {
        let fx = Fixture::new();
        let (h, b, a, r, c) = standard_fixture(&fx);
        let loaded = load_market(&h, &b, &a, &r, &c, 0.4).unwrap();
        let out = fx.dir.path().join("rewritten.csv");
        write_holdings(&loaded.market, &out).unwrap();
        let reloaded = load_market(&out, &b, &a, &r, &c, 0.4).unwrap();
        assert_eq!(loaded.market.holdings(), reloaded.market.holdings());
    }

    #[test]
    fn config_resolves_relative_paths_and_defaults() {
        let fx = Fixture::new();
        let cfg_path = fx.write(
            "run.json",
            r#"{
                "holdings": "holdings.csv",
                "banks": "banks.csv",
                "assets": "assets.csv",
                "returns": "returns.csv",
                "covariance": "covariance.csv",
                "output_dir": "out"
            }"#,
        );
        let config = RunConfig::from_file(&cfg_path).unwrap();
        assert_eq!(config.depth_scale, 0.4);
        assert_eq!(config.scenario, ScenarioChoice::Both);
        assert!(config.holdings.starts_with(fx.dir.path()));
        assert!(!config.skip_optimize);
    }

    #[test]
    fn config_missing_field_names_it() {
        let fx = Fixture::new();
        let cfg_path = fx.write(
            "run.json",
            r#"{"holdings": "h.csv", "banks": "b.csv", "assets": "a.csv", "returns": "r.csv", "output_dir": "out"}"#,
        );
        let err = RunConfig::from_file(&cfg_path).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("covariance"), "message was: {msg}");
    }
}
