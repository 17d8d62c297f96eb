//! Leverage-constrained fire-sale cascades on a bipartite market.
//!
//! Banks above their leverage cap sell a fraction of every holding
//! (proportional selling); aggregate sales move prices linearly against
//! market depth, losses hit equity, and banks whose equity reaches zero
//! default. A defaulted bank's residual portfolio joins the next step's
//! aggregate sales at the prices of the step it defaulted in, then the
//! bank is excluded. Updates within a step are synchronous: every gamma
//! is computed against the same state, then applied together.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::BipartiteMarket;

/// Leverage cap regime for a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeverageCapMode {
    /// One cap for every bank (moderate scenario uses 33).
    Fixed(f64),
    /// Each bank is capped at its own initial leverage (extreme scenario).
    Initial,
}

#[derive(Debug, Clone)]
pub struct FireSaleConfig {
    pub leverage_cap_mode: LeverageCapMode,
    /// Headroom below the cap when deleveraging, guards against
    /// self-triggered price effects. The dynamics is insensitive to values
    /// in the 0.01..0.05 range.
    pub epsilon: f64,
    pub max_steps: usize,
    /// Stop once a step's total sold value falls below this fraction of
    /// the initial market value.
    pub stop_tol: f64,
}

impl FireSaleConfig {
    pub fn moderate() -> Self {
        Self {
            leverage_cap_mode: LeverageCapMode::Fixed(33.0),
            epsilon: 0.025,
            max_steps: 1000,
            stop_tol: 1e-12,
        }
    }

    pub fn extreme() -> Self {
        Self {
            leverage_cap_mode: LeverageCapMode::Initial,
            ..Self::moderate()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidScalar {
                field: "epsilon",
                requirement: "in [0, 1)",
                value: self.epsilon,
            });
        }
        if self.max_steps < 1 {
            return Err(Error::InvalidScalar {
                field: "max_steps",
                requirement: ">= 1",
                value: self.max_steps as f64,
            });
        }
        if let LeverageCapMode::Fixed(cap) = self.leverage_cap_mode {
            if !(cap > 0.0) {
                return Err(Error::InvalidScalar {
                    field: "leverage cap",
                    requirement: "> 0",
                    value: cap,
                });
            }
        }
        Ok(())
    }
}

/// Mutable per-step balance-sheet state of every bank.
#[derive(Debug, Clone)]
pub struct BalanceSheetState {
    /// Current monetary holdings, K x N.
    pub holdings: Array2<f64>,
    pub other_assets: Array1<f64>,
    pub equity: Array1<f64>,
    /// Cleared once a bank is excluded from the market.
    pub alive: Vec<bool>,
    /// Defaulted last step; the residual portfolio sells this step.
    pub pending_liquidation: Vec<bool>,
    /// Voluntarily sold everything once; gamma stays pinned at zero.
    pub fully_liquidated: Vec<bool>,
    /// Price relative to the start of the scenario, per asset, in [0, 1].
    pub price_factor: Array1<f64>,
    /// Per-bank leverage caps resolved from the config at scenario start.
    pub caps: Array1<f64>,
    depths: Array1<f64>,
}

impl BalanceSheetState {
    pub fn new(market: &BipartiteMarket, config: &FireSaleConfig) -> Result<Self> {
        config.validate()?;
        let report = market.validate();
        if !report.is_empty() {
            return Err(Error::InvalidMarket(report));
        }
        let n = market.n_banks();
        let bond_values = market.bank_totals();
        let other_assets = market.other_assets();
        let equity = market.equities();
        let caps = match config.leverage_cap_mode {
            LeverageCapMode::Fixed(cap) => Array1::from_elem(n, cap),
            LeverageCapMode::Initial => Array1::from_iter((0..n).map(|i| {
                (bond_values[i] + other_assets[i]) / equity[i]
            })),
        };
        Ok(Self {
            holdings: market.holdings().clone(),
            other_assets,
            equity,
            alive: vec![true; n],
            pending_liquidation: vec![false; n],
            fully_liquidated: vec![false; n],
            price_factor: Array1::from_elem(market.n_assets(), 1.0),
            caps,
            depths: market.depths(),
        })
    }

    pub fn bond_value(&self, bank: usize) -> f64 {
        self.holdings.column(bank).sum()
    }

    /// Current leverage of each live bank with positive equity.
    pub fn leverage_of(&self, bank: usize) -> Option<f64> {
        leverage(self.bond_value(bank), self.other_assets[bank], self.equity[bank])
    }
}

/// Leverage ratio `(V + O) / E`; `None` signals the caller to treat the
/// bank as defaulted rather than a numeric error.
pub fn leverage(bond_value: f64, other_assets: f64, equity: f64) -> Option<f64> {
    if equity > 0.0 {
        Some((bond_value + other_assets) / equity)
    } else {
        None
    }
}

/// Fraction of the portfolio a bank sells to return under its cap:
/// zero when the cap holds, otherwise the solution of the post-sale
/// leverage equation clipped to one.
pub fn sell_fraction(
    bond_value: f64,
    other_assets: f64,
    equity: f64,
    cap: f64,
    epsilon: f64,
) -> f64 {
    let Some(lev) = leverage(bond_value, other_assets, equity) else {
        return 0.0;
    };
    if lev <= cap {
        return 0.0;
    }
    if bond_value <= 0.0 {
        return 0.0;
    }
    ((bond_value + other_assets - (1.0 - epsilon) * cap * equity) / bond_value).min(1.0)
}

/// Flows produced by one synchronous step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub gamma: Array1<f64>,
    pub sold_per_asset: Array1<f64>,
    pub total_sold: f64,
    /// Banks over their cap with nothing left to sell.
    pub stranded: Vec<usize>,
    /// Banks whose equity reached zero this step.
    pub new_defaults: Vec<usize>,
}

/// Advances the state by one step and reports the flows.
pub fn step(state: &mut BalanceSheetState, config: &FireSaleConfig) -> StepRecord {
    step_impl(state, config, false)
}

fn step_impl(
    state: &mut BalanceSheetState,
    config: &FireSaleConfig,
    only_pending: bool,
) -> StepRecord {
    let (k_count, n) = state.holdings.dim();
    let mut gamma = Array1::zeros(n);
    let mut stranded = Vec::new();

    for i in 0..n {
        if !state.alive[i] {
            continue;
        }
        if state.pending_liquidation[i] {
            gamma[i] = 1.0;
            continue;
        }
        if only_pending || state.fully_liquidated[i] || state.equity[i] <= 0.0 {
            continue;
        }
        let bond_value = state.bond_value(i);
        let g = sell_fraction(
            bond_value,
            state.other_assets[i],
            state.equity[i],
            state.caps[i],
            config.epsilon,
        );
        if g == 0.0 && bond_value <= 0.0 {
            if let Some(lev) = state.leverage_of(i) {
                if lev > state.caps[i] {
                    stranded.push(i);
                }
            }
        }
        gamma[i] = g;
    }

    let mut sold = Array1::zeros(k_count);
    for k in 0..k_count {
        for i in 0..n {
            if gamma[i] > 0.0 {
                sold[k] += gamma[i] * state.holdings[[k, i]];
            }
        }
    }
    let total_sold = sold.sum();

    // One aggregate price application per step; floors keep prices and
    // holdings non-negative.
    let mut ratio = Array1::zeros(k_count);
    for k in 0..k_count {
        ratio[k] = (1.0 - sold[k] / state.depths[k]).max(0.0);
        state.price_factor[k] *= ratio[k];
    }

    // Losses are charged on pre-sale holdings: the sold part transacts at
    // the impacted price and the kept part is marked down with it.
    let mut losses = Array1::zeros(n);
    for i in 0..n {
        if !state.alive[i] {
            continue;
        }
        let mut c = 0.0;
        for k in 0..k_count {
            c += state.holdings[[k, i]] * (sold[k] / state.depths[k]);
        }
        losses[i] = c;
    }

    for i in 0..n {
        let keep = 1.0 - gamma[i];
        for k in 0..k_count {
            state.holdings[[k, i]] = keep * state.holdings[[k, i]] * ratio[k];
        }
    }

    let mut new_defaults = Vec::new();
    for i in 0..n {
        if !state.alive[i] {
            continue;
        }
        if state.pending_liquidation[i] {
            // Residual portfolio sold above; the bank leaves the market.
            state.pending_liquidation[i] = false;
            state.alive[i] = false;
            continue;
        }
        state.equity[i] = (state.equity[i] - losses[i]).max(0.0);
        if gamma[i] >= 1.0 {
            state.fully_liquidated[i] = true;
        }
        if state.equity[i] == 0.0 {
            state.pending_liquidation[i] = true;
            new_defaults.push(i);
        }
    }

    StepRecord {
        gamma,
        sold_per_asset: sold,
        total_sold,
        stranded,
        new_defaults,
    }
}

/// Outcome of one initial-defaulter scenario.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub initial_defaulter: usize,
    /// Banks that defaulted as a consequence (never the initial one).
    pub induced_defaults: Vec<usize>,
    /// Remaining bond value over initial bond value, both excluding the
    /// initial defaulter's portfolio.
    pub final_market_fraction: f64,
    /// Equity lost by all banks other than the initial defaulter.
    pub equity_destroyed: f64,
    /// Average leverage of surviving banks (excluding the initial
    /// defaulter), index 0 is the pre-shock value; `None` when no bank
    /// qualifies.
    pub leverage_path: Vec<Option<f64>>,
    pub steps: usize,
}

/// Declares one bank bankrupt, liquidates its entire portfolio in step
/// zero, then iterates the deleveraging dynamics until selling stops.
pub fn run_scenario(
    market: &BipartiteMarket,
    config: &FireSaleConfig,
    initial_defaulter: usize,
) -> Result<ScenarioResult> {
    let n = market.n_banks();
    if initial_defaulter >= n {
        return Err(Error::SeedOutOfRange {
            index: initial_defaulter,
            n_banks: n,
        });
    }
    let mut state = BalanceSheetState::new(market, config)?;
    let d = initial_defaulter;

    let initial_equity = state.equity.clone();
    let base_value: f64 = (0..n)
        .filter(|&i| i != d)
        .map(|i| state.bond_value(i))
        .sum();
    let initial_total = market.total_value();

    state.equity[d] = 0.0;
    state.pending_liquidation[d] = true;

    let mut leverage_path = vec![average_leverage(&state, d)];
    let mut induced_defaults = Vec::new();
    let mut steps = 0usize;

    // Step zero: only the exogenous default sells.
    let rec = step_impl(&mut state, config, true);
    steps += 1;
    induced_defaults.extend(rec.new_defaults.iter().copied());
    leverage_path.push(average_leverage(&state, d));

    while steps < config.max_steps {
        let rec = step(&mut state, config);
        steps += 1;
        induced_defaults.extend(rec.new_defaults.iter().copied());
        leverage_path.push(average_leverage(&state, d));
        if rec.total_sold < config.stop_tol * initial_total {
            break;
        }
    }

    let remaining: f64 = (0..n)
        .filter(|&i| i != d)
        .map(|i| state.bond_value(i))
        .sum();
    let final_market_fraction = if base_value > 0.0 {
        remaining / base_value
    } else {
        1.0
    };
    let equity_destroyed: f64 = (0..n)
        .filter(|&i| i != d)
        .map(|i| initial_equity[i] - state.equity[i])
        .sum();

    Ok(ScenarioResult {
        initial_defaulter: d,
        induced_defaults,
        final_market_fraction,
        equity_destroyed,
        leverage_path,
        steps,
    })
}

fn average_leverage(state: &BalanceSheetState, excluded: usize) -> Option<f64> {
    let n = state.equity.len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        if i == excluded || !state.alive[i] {
            continue;
        }
        if let Some(lev) = state.leverage_of(i) {
            sum += lev;
            count += 1;
        }
    }
    if count > 0 {
        Some(sum / count as f64)
    } else {
        None
    }
}

/// Contagion probability and the underlying per-defaulter scenarios.
#[derive(Debug, Clone)]
pub struct ContagionReport {
    /// Fraction of initial-defaulter scenarios with at least one induced
    /// default.
    pub probability: f64,
    pub scenarios: Vec<ScenarioResult>,
}

/// Runs one scenario per bank as the initial defaulter; scenarios are
/// independent and execute in parallel, collected in bank order.
pub fn contagion_probability(
    market: &BipartiteMarket,
    config: &FireSaleConfig,
) -> Result<ContagionReport> {
    let n = market.n_banks();
    let scenarios: Result<Vec<ScenarioResult>> = (0..n)
        .into_par_iter()
        .map(|d| run_scenario(market, config, d))
        .collect();
    let scenarios = scenarios?;
    let events = scenarios
        .iter()
        .filter(|s| !s.induced_defaults.is_empty())
        .count();
    Ok(ContagionReport {
        probability: events as f64 / n as f64,
        scenarios,
    })
}
