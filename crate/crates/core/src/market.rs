//! Bipartite bank-asset market, linear price impact, and the
//! liquidity-adjusted one-mode projection onto banks.
//!
//! Holdings are carried as monetary values throughout: the matrix entry
//! `V[k, i]` is the value of bank `i`'s position in asset `k`, so unit
//! counts and per-unit prices never appear separately.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A tradable asset with its liquidity parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Asset {
    pub id: String,
    /// Average traded daily volume in monetary units.
    pub adv: f64,
    /// Daily log-return standard deviation.
    pub volatility: f64,
    /// Market depth in monetary units: selling `depth / 100` moves the
    /// price down by 1%.
    pub depth: f64,
    /// Expected return per period.
    pub expected_return: f64,
}

/// A bank's non-portfolio balance-sheet data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bank {
    pub id: String,
    /// Tier-1 equity in monetary units.
    pub equity: f64,
    /// Constant non-bond assets in monetary units.
    pub other_assets: f64,
}

/// Weighted bipartite bank-asset market.
///
/// Immutable after construction; all operations on it are pure functions.
#[derive(Debug, Clone)]
pub struct BipartiteMarket {
    assets: Vec<Asset>,
    banks: Vec<Bank>,
    /// K x N matrix of monetary holdings, `holdings[[k, i]] >= 0`.
    holdings: Array2<f64>,
    /// Depth scaling parameter c at which the stored depths are expressed.
    depth_scale: f64,
}

/// Liquidity-adjusted one-mode projection of a market onto its banks.
#[derive(Debug, Clone)]
pub struct OverlapNetwork {
    /// Symmetric N x N exposure matrix in monetary units, self-loops retained.
    pub exposure: Array2<f64>,
    /// N x N impact matrix, entry `[i, j]` is the capped equity-loss fraction
    /// bank `j` suffers if bank `i` liquidates, in [0, 1].
    pub impact: Array2<f64>,
    /// Relative economic values, non-negative and summing to one.
    pub economic_value: Array1<f64>,
}

/// Market depth from average daily volume, volatility, and the scale
/// parameter `c`: `D = c * adv / volatility`.
///
/// Calibrated so that selling `D / 100` of the asset moves its price
/// down by 1%.
pub fn market_depth(adv: f64, volatility: f64, c: f64) -> Result<f64> {
    check_positive("adv", adv)?;
    check_positive("volatility", volatility)?;
    check_positive("c", c)?;
    Ok(c * adv / volatility)
}

/// Fractional price change caused by trading `signed_volume` monetary units
/// against depth `depth`. Positive volume is a net buy, negative a net sell;
/// the magnitude is unbounded here, downstream callers floor prices at zero.
pub fn price_impact(signed_volume: f64, depth: f64) -> Result<f64> {
    check_positive("depth", depth)?;
    Ok(signed_volume / depth)
}

fn check_positive(field: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::InvalidScalar {
            field,
            requirement: "finite and > 0",
            value,
        });
    }
    Ok(())
}

impl BipartiteMarket {
    /// Builds a market and validates every structural invariant.
    pub fn new(
        assets: Vec<Asset>,
        banks: Vec<Bank>,
        holdings: Array2<f64>,
        depth_scale: f64,
    ) -> Result<Self> {
        let market = Self {
            assets,
            banks,
            holdings,
            depth_scale,
        };
        let report = market.validate();
        if !report.is_empty() {
            return Err(Error::InvalidMarket(report));
        }
        Ok(market)
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_banks(&self) -> usize {
        self.banks.len()
    }

    pub fn assets(&self) -> &[Asset] {
        &self.assets
    }

    pub fn banks(&self) -> &[Bank] {
        &self.banks
    }

    pub fn holdings(&self) -> &Array2<f64> {
        &self.holdings
    }

    pub fn depth_scale(&self) -> f64 {
        self.depth_scale
    }

    pub fn depths(&self) -> Array1<f64> {
        self.assets.iter().map(|a| a.depth).collect()
    }

    pub fn equities(&self) -> Array1<f64> {
        self.banks.iter().map(|b| b.equity).collect()
    }

    pub fn other_assets(&self) -> Array1<f64> {
        self.banks.iter().map(|b| b.other_assets).collect()
    }

    pub fn expected_returns(&self) -> Array1<f64> {
        self.assets.iter().map(|a| a.expected_return).collect()
    }

    /// Per-bank portfolio totals `V_i` (column sums).
    pub fn bank_totals(&self) -> Array1<f64> {
        let mut totals = Array1::zeros(self.n_banks());
        for k in 0..self.n_assets() {
            for i in 0..self.n_banks() {
                totals[i] += self.holdings[[k, i]];
            }
        }
        totals
    }

    /// Per-asset outstanding totals `S_k` (row sums).
    pub fn asset_totals(&self) -> Array1<f64> {
        let mut totals = Array1::zeros(self.n_assets());
        for k in 0..self.n_assets() {
            for i in 0..self.n_banks() {
                totals[k] += self.holdings[[k, i]];
            }
        }
        totals
    }

    pub fn total_value(&self) -> f64 {
        self.holdings.iter().sum()
    }

    /// Same market with every depth rescaled to the new scale parameter.
    ///
    /// Depth is linear in the scale parameter, so rescaling ingested depths
    /// proportionally and re-deriving them from `adv / volatility` coincide.
    pub fn with_depth_scale(&self, c: f64) -> Result<Self> {
        check_positive("depth_scale", c)?;
        let factor = c / self.depth_scale;
        let assets = self
            .assets
            .iter()
            .map(|a| Asset {
                depth: a.depth * factor,
                ..a.clone()
            })
            .collect();
        Self::new(assets, self.banks.clone(), self.holdings.clone(), c)
    }

    /// Same market with the holdings matrix replaced. Assets, banks, and
    /// the depth scale are kept.
    pub fn with_holdings(&self, holdings: Array2<f64>) -> Result<Self> {
        Self::new(self.assets.clone(), self.banks.clone(), holdings, self.depth_scale)
    }

    /// Enumerates every invariant violation; an empty report means the
    /// market is valid.
    pub fn validate(&self) -> ValidationReport {
        validate_market(self)
    }
}

/// Liquidity-adjusted projection `w = V^T D^-1 V` with self-loops retained,
/// the capped impact matrix, and relative economic values.
pub fn project_overlap(market: &BipartiteMarket) -> Result<OverlapNetwork> {
    let n = market.n_banks();
    let k_count = market.n_assets();
    let holdings = market.holdings();
    let depths = market.depths();

    for (j, bank) in market.banks().iter().enumerate() {
        if !(bank.equity > 0.0) {
            return Err(Error::InvalidScalar {
                field: "equity",
                requirement: "> 0 for every bank",
                value: market.banks()[j].equity,
            });
        }
    }

    // Upper triangle plus mirror keeps the exposure matrix exactly symmetric.
    let mut exposure = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let mut sum = 0.0;
            for k in 0..k_count {
                sum += holdings[[k, i]] * holdings[[k, j]] / depths[k];
            }
            exposure[[i, j]] = sum;
            exposure[[j, i]] = sum;
        }
    }

    let mut impact = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            impact[[i, j]] = (exposure[[i, j]] / market.banks()[j].equity).min(1.0);
        }
    }

    let economic_value = economic_values(market)?;

    Ok(OverlapNetwork {
        exposure,
        impact,
        economic_value,
    })
}

/// Relative economic values `v_i = V_i / total market value`.
pub fn economic_values(market: &BipartiteMarket) -> Result<Array1<f64>> {
    let total = market.total_value();
    if !(total > 0.0) {
        return Err(Error::InvalidScalar {
            field: "total market value",
            requirement: "> 0",
            value: total,
        });
    }
    Ok(market.bank_totals().mapv(|v| v / total))
}

/// A single invariant violation found by `validate_market`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub enum Violation {
    NegativeHolding { asset: usize, bank: usize, value: f64 },
    NonFiniteHolding { asset: usize, bank: usize },
    NonPositiveEquity { bank: usize, value: f64 },
    NegativeOtherAssets { bank: usize, value: f64 },
    NonPositiveDepth { asset: usize, value: f64 },
    NonPositiveAdv { asset: usize, value: f64 },
    NonPositiveVolatility { asset: usize, value: f64 },
    NonFiniteReturn { asset: usize },
    DuplicateAssetId { id: String },
    DuplicateBankId { id: String },
    HoldingsShape { rows: usize, cols: usize },
    NonPositiveDepthScale { value: f64 },
    EmptyAssets,
    EmptyBanks,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NegativeHolding { asset, bank, value } => {
                write!(f, "holding at (asset {asset}, bank {bank}) is negative: {value}")
            }
            Violation::NonFiniteHolding { asset, bank } => {
                write!(f, "holding at (asset {asset}, bank {bank}) is not finite")
            }
            Violation::NonPositiveEquity { bank, value } => {
                write!(f, "bank {bank} has non-positive equity: {value}")
            }
            Violation::NegativeOtherAssets { bank, value } => {
                write!(f, "bank {bank} has negative other assets: {value}")
            }
            Violation::NonPositiveDepth { asset, value } => {
                write!(f, "asset {asset} has non-positive depth: {value}")
            }
            Violation::NonPositiveAdv { asset, value } => {
                write!(f, "asset {asset} has non-positive adv: {value}")
            }
            Violation::NonPositiveVolatility { asset, value } => {
                write!(f, "asset {asset} has non-positive volatility: {value}")
            }
            Violation::NonFiniteReturn { asset } => {
                write!(f, "asset {asset} has a non-finite expected return")
            }
            Violation::DuplicateAssetId { id } => write!(f, "duplicate asset id '{id}'"),
            Violation::DuplicateBankId { id } => write!(f, "duplicate bank id '{id}'"),
            Violation::HoldingsShape { rows, cols } => {
                write!(f, "holdings matrix is {rows}x{cols}, inconsistent with asset/bank counts")
            }
            Violation::NonPositiveDepthScale { value } => {
                write!(f, "depth scale must be > 0, got {value}")
            }
            Violation::EmptyAssets => write!(f, "market has no assets"),
            Violation::EmptyBanks => write!(f, "market has no banks"),
        }
    }
}

/// All invariant violations of a market, in scan order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Scans a market for invariant violations without failing fast, so a
/// single pass reports every problem with its coordinates.
pub fn validate_market(market: &BipartiteMarket) -> ValidationReport {
    let mut violations = Vec::new();
    let k_count = market.assets.len();
    let n = market.banks.len();

    if k_count == 0 {
        violations.push(Violation::EmptyAssets);
    }
    if n == 0 {
        violations.push(Violation::EmptyBanks);
    }
    if market.holdings.nrows() != k_count || market.holdings.ncols() != n {
        violations.push(Violation::HoldingsShape {
            rows: market.holdings.nrows(),
            cols: market.holdings.ncols(),
        });
        return ValidationReport { violations };
    }
    if !(market.depth_scale > 0.0) || !market.depth_scale.is_finite() {
        violations.push(Violation::NonPositiveDepthScale {
            value: market.depth_scale,
        });
    }

    let mut asset_ids = std::collections::HashSet::new();
    for (k, asset) in market.assets.iter().enumerate() {
        if !asset_ids.insert(asset.id.as_str()) {
            violations.push(Violation::DuplicateAssetId { id: asset.id.clone() });
        }
        if !(asset.depth > 0.0) || !asset.depth.is_finite() {
            violations.push(Violation::NonPositiveDepth { asset: k, value: asset.depth });
        }
        if !(asset.adv > 0.0) || !asset.adv.is_finite() {
            violations.push(Violation::NonPositiveAdv { asset: k, value: asset.adv });
        }
        if !(asset.volatility > 0.0) || !asset.volatility.is_finite() {
            violations.push(Violation::NonPositiveVolatility { asset: k, value: asset.volatility });
        }
        if !asset.expected_return.is_finite() {
            violations.push(Violation::NonFiniteReturn { asset: k });
        }
    }

    let mut bank_ids = std::collections::HashSet::new();
    for (i, bank) in market.banks.iter().enumerate() {
        if !bank_ids.insert(bank.id.as_str()) {
            violations.push(Violation::DuplicateBankId { id: bank.id.clone() });
        }
        if !(bank.equity > 0.0) || !bank.equity.is_finite() {
            violations.push(Violation::NonPositiveEquity { bank: i, value: bank.equity });
        }
        if !(bank.other_assets >= 0.0) || !bank.other_assets.is_finite() {
            violations.push(Violation::NegativeOtherAssets { bank: i, value: bank.other_assets });
        }
    }

    for k in 0..k_count {
        for i in 0..n {
            let v = market.holdings[[k, i]];
            if !v.is_finite() {
                violations.push(Violation::NonFiniteHolding { asset: k, bank: i });
            } else if v < 0.0 {
                violations.push(Violation::NegativeHolding { asset: k, bank: i, value: v });
            }
        }
    }

    ValidationReport { violations }
}
