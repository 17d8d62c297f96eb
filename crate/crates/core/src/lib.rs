//! Systemic-risk analytics for overlapping bank portfolios.
//!
//! The toolkit models a market as a weighted bipartite bank-asset graph,
//! projects it onto banks with a liquidity-adjusted one-mode projection,
//! scores systemic relevance with DebtRank, rewires the allocation toward
//! lower market-wide risk under mean-variance constraints, and validates
//! the rewiring with a fire-sale cascade simulation.
//!
//! Modules follow that flow:
//!
//! - [`market`]: bipartite market, price impact, projection
//! - [`debtrank`]: feedback-centrality risk scores
//! - [`optimizer`]: the reallocation program and its solvers
//! - [`firesale`]: leverage-driven cascade simulation
//! - [`analytics`]: network statistics, concentration, rank correlations
//! - [`io`] / [`pipeline`]: ingestion, orchestration, report emission

pub mod analytics;
pub mod debtrank;
pub mod error;
pub mod firesale;
pub mod io;
pub mod market;
pub mod optimizer;
pub mod pipeline;

pub use error::{Error, Result};
