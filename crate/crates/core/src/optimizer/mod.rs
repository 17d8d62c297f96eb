//! Risk-efficient reallocation as a quadratically constrained quadratic
//! program over the vectorized holdings matrix.
//!
//! The decision vector is `y = vec(X)` in bank-major order: `y[i*K + k]`
//! is the investment of bank `i` in asset `k`. The objective penalizes
//! liquidity-weighted portfolio overlap; the constraints pin every bank's
//! portfolio total, every asset's outstanding total, and each bank's
//! mean-variance profile, with the allocation kept non-negative.

mod eigen;
mod oracle;
mod solve;

pub use eigen::repair_psd;
pub use oracle::brute_force_oracle;
pub use solve::{solve, OptimizerConfig, Solution, SolveStatus};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::market::{economic_values, BipartiteMarket};

const BASELINE_TOLERANCE: f64 = 1e-8;

/// Assembled problem data. Matrices are stored structurally and
/// materialized densely on demand.
#[derive(Debug, Clone)]
pub struct QcqpInstance {
    k: usize,
    n: usize,
    /// Asset depths `D_k`.
    depths: Array1<f64>,
    /// Per-bank objective weights `v_i / E_i`, frozen at the original market.
    impact_weight: Array1<f64>,
    /// PSD-repaired covariance matrix `Q`.
    covariance: Array2<f64>,
    /// Expected returns `r_k`.
    returns: Array1<f64>,
    /// Per-bank return floors `sum_k V_ki r_k` of the original allocation.
    return_floor: Array1<f64>,
    /// Per-bank variance caps of the original allocation.
    variance_cap: Array1<f64>,
    /// Asset totals `S_k`.
    asset_totals: Array1<f64>,
    /// Bank totals `V_i`.
    bank_totals: Array1<f64>,
    /// Vectorized original allocation `y0`.
    baseline: Array1<f64>,
}

/// Maximum relative violation per constraint family.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ResidualReport {
    /// Portfolio/outstanding total equalities, relative to the `c2` scale.
    pub equality: f64,
    /// One-sided return-floor violations.
    pub return_ineq: f64,
    /// One-sided variance-cap violations.
    pub variance_ineq: f64,
    /// Bound violations `max(0, -y)`.
    pub negativity: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.equality
            .max(self.return_ineq)
            .max(self.variance_ineq)
            .max(self.negativity)
    }

    pub fn within(&self, eq_tol: f64, ineq_tol: f64) -> bool {
        self.equality <= eq_tol
            && self.return_ineq <= ineq_tol
            && self.variance_ineq <= ineq_tol
            && self.negativity <= ineq_tol
    }

    fn worst_family(&self) -> (&'static str, f64) {
        let mut worst = ("equality", self.equality);
        for (name, v) in [
            ("return", self.return_ineq),
            ("variance", self.variance_ineq),
            ("negativity", self.negativity),
        ] {
            if v > worst.1 {
                worst = (name, v);
            }
        }
        worst
    }
}

/// Flattens a K x N holdings matrix into bank-major vector form.
pub fn vectorize(holdings: &Array2<f64>) -> Array1<f64> {
    let (k_count, n) = holdings.dim();
    let mut y = Array1::zeros(k_count * n);
    for i in 0..n {
        for k in 0..k_count {
            y[i * k_count + k] = holdings[[k, i]];
        }
    }
    y
}

/// Inverse of `vectorize`.
pub fn devectorize(y: &Array1<f64>, k_count: usize, n: usize) -> Array2<f64> {
    let mut holdings = Array2::zeros((k_count, n));
    for i in 0..n {
        for k in 0..k_count {
            holdings[[k, i]] = y[i * k_count + k];
        }
    }
    holdings
}

/// Assembles the program from a market, per-asset expected returns, and the
/// asset covariance matrix. The covariance is symmetrized and PSD-repaired;
/// per-bank return floors and variance caps are taken from the original
/// allocation, so the baseline is feasible by construction.
pub fn build_qcqp(
    market: &BipartiteMarket,
    returns: &Array1<f64>,
    covariance: &Array2<f64>,
    equities: &Array1<f64>,
) -> Result<QcqpInstance> {
    let k_count = market.n_assets();
    let n = market.n_banks();
    if returns.len() != k_count {
        return Err(Error::DimensionMismatch {
            context: "returns vector vs asset count",
            expected: k_count,
            actual: returns.len(),
        });
    }
    if covariance.nrows() != k_count || covariance.ncols() != k_count {
        return Err(Error::DimensionMismatch {
            context: "covariance matrix vs asset count",
            expected: k_count,
            actual: covariance.nrows().max(covariance.ncols()),
        });
    }
    if equities.len() != n {
        return Err(Error::DimensionMismatch {
            context: "equities vector vs bank count",
            expected: n,
            actual: equities.len(),
        });
    }
    let scale = covariance.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..k_count {
        for j in (i + 1)..k_count {
            let dev = (covariance[[i, j]] - covariance[[j, i]]).abs();
            if dev > 1e-9 * scale {
                return Err(Error::AsymmetricCovariance { row: i, col: j, deviation: dev });
            }
        }
    }
    for (i, &e) in equities.iter().enumerate() {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidScalar {
                field: "equity",
                requirement: "finite and > 0 for every bank",
                value: equities[i],
            });
        }
    }

    let q = repair_psd(covariance);
    let values = economic_values(market)?;
    let impact_weight = Array1::from_iter(values.iter().zip(equities.iter()).map(|(v, e)| v / e));

    let holdings = market.holdings();
    let mut return_floor = Array1::zeros(n);
    let mut variance_cap = Array1::zeros(n);
    for i in 0..n {
        let mut r_tilde = 0.0;
        for k in 0..k_count {
            r_tilde += holdings[[k, i]] * returns[k];
        }
        return_floor[i] = r_tilde;
        let mut var = 0.0;
        for k in 0..k_count {
            let mut qx = 0.0;
            for l in 0..k_count {
                qx += q[[k, l]] * holdings[[l, i]];
            }
            var += holdings[[k, i]] * qx;
        }
        variance_cap[i] = var;
    }

    let instance = QcqpInstance {
        k: k_count,
        n,
        depths: market.depths(),
        impact_weight,
        covariance: q,
        returns: returns.clone(),
        return_floor,
        variance_cap,
        asset_totals: market.asset_totals(),
        bank_totals: market.bank_totals(),
        baseline: vectorize(holdings),
    };

    let report = instance.residuals(&instance.baseline);
    if !report.within(BASELINE_TOLERANCE, BASELINE_TOLERANCE) {
        let (family, residual) = report.worst_family();
        return Err(Error::InfeasibleBaseline {
            family,
            residual,
            tolerance: BASELINE_TOLERANCE,
        });
    }
    Ok(instance)
}

impl QcqpInstance {
    pub fn n_assets(&self) -> usize {
        self.k
    }

    pub fn n_banks(&self) -> usize {
        self.n
    }

    pub fn n_vars(&self) -> usize {
        self.k * self.n
    }

    pub fn baseline(&self) -> &Array1<f64> {
        &self.baseline
    }

    pub fn depths(&self) -> &Array1<f64> {
        &self.depths
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn returns(&self) -> &Array1<f64> {
        &self.returns
    }

    pub fn return_floor(&self) -> &Array1<f64> {
        &self.return_floor
    }

    pub fn variance_cap(&self) -> &Array1<f64> {
        &self.variance_cap
    }

    pub fn asset_totals(&self) -> &Array1<f64> {
        &self.asset_totals
    }

    pub fn bank_totals(&self) -> &Array1<f64> {
        &self.bank_totals
    }

    pub fn impact_weight(&self) -> &Array1<f64> {
        &self.impact_weight
    }

    /// Objective `0.5 * y^T (P0^T + P0) y`, evaluated through the row
    /// structure of `P0` in O(KN):
    /// `sum_k (u_k / D_k) * sum_i g_i x_ki` with `u_k` the market-wide
    /// holding of asset `k` and `g_i = v_i / E_i`.
    pub fn objective(&self, y: &Array1<f64>) -> f64 {
        debug_assert_eq!(y.len(), self.n_vars());
        let mut total = 0.0;
        for k in 0..self.k {
            let mut u = 0.0;
            let mut weighted = 0.0;
            for i in 0..self.n {
                let x = y[i * self.k + k];
                u += x;
                weighted += self.impact_weight[i] * x;
            }
            total += u * weighted / self.depths[k];
        }
        total
    }

    /// Gradient of the objective, `(P0 + P0^T) y`.
    pub fn objective_gradient(&self, y: &Array1<f64>, grad: &mut Array1<f64>) {
        debug_assert_eq!(y.len(), self.n_vars());
        debug_assert_eq!(grad.len(), self.n_vars());
        for k in 0..self.k {
            let mut u = 0.0;
            let mut weighted = 0.0;
            for i in 0..self.n {
                let x = y[i * self.k + k];
                u += x;
                weighted += self.impact_weight[i] * x;
            }
            let inv_d = 1.0 / self.depths[k];
            for i in 0..self.n {
                grad[i * self.k + k] = (self.impact_weight[i] * u + weighted) * inv_d;
            }
        }
    }

    /// Raw equality residuals `A2 y + c2`: K asset rows then N bank rows.
    pub fn equality_residual_vec(&self, y: &Array1<f64>) -> Array1<f64> {
        let mut res = Array1::zeros(self.k + self.n);
        for k in 0..self.k {
            let mut sum = 0.0;
            for i in 0..self.n {
                sum += y[i * self.k + k];
            }
            res[k] = sum - self.asset_totals[k];
        }
        for i in 0..self.n {
            let mut sum = 0.0;
            for k in 0..self.k {
                sum += y[i * self.k + k];
            }
            res[self.k + i] = sum - self.bank_totals[i];
        }
        res
    }

    /// Raw return-constraint values `A1 y + c1` (non-positive when satisfied).
    pub fn return_residual_vec(&self, y: &Array1<f64>) -> Array1<f64> {
        let mut res = Array1::zeros(self.n);
        for i in 0..self.n {
            let mut achieved = 0.0;
            for k in 0..self.k {
                achieved += self.returns[k] * y[i * self.k + k];
            }
            res[i] = self.return_floor[i] - achieved;
        }
        res
    }

    /// Raw variance-constraint values `y^T P_i y - cap_i` per bank.
    pub fn variance_residual_vec(&self, y: &Array1<f64>) -> Array1<f64> {
        let mut res = Array1::zeros(self.n);
        for i in 0..self.n {
            res[i] = self.portfolio_variance(y, i) - self.variance_cap[i];
        }
        res
    }

    pub(crate) fn portfolio_variance(&self, y: &Array1<f64>, bank: usize) -> f64 {
        let base = bank * self.k;
        let mut var = 0.0;
        for k in 0..self.k {
            let mut qx = 0.0;
            for l in 0..self.k {
                qx += self.covariance[[k, l]] * y[base + l];
            }
            var += y[base + k] * qx;
        }
        var
    }

    pub(crate) fn equality_scales(&self) -> Array1<f64> {
        let mut scales = Array1::zeros(self.k + self.n);
        for k in 0..self.k {
            scales[k] = self.asset_totals[k].abs().max(1.0);
        }
        for i in 0..self.n {
            scales[self.k + i] = self.bank_totals[i].abs().max(1.0);
        }
        scales
    }

    pub(crate) fn bound_scale(&self) -> f64 {
        self.baseline.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0)
    }

    /// Maximum relative violation of each constraint family at `y`.
    pub fn residuals(&self, y: &Array1<f64>) -> ResidualReport {
        let eq = self.equality_residual_vec(y);
        let eq_scales = self.equality_scales();
        let equality = eq
            .iter()
            .zip(eq_scales.iter())
            .fold(0.0f64, |m, (r, s)| m.max(r.abs() / s));

        let ret = self.return_residual_vec(y);
        let return_ineq = ret
            .iter()
            .zip(self.return_floor.iter())
            .fold(0.0f64, |m, (r, f)| m.max(r.max(0.0) / f.abs().max(1.0)));

        let var = self.variance_residual_vec(y);
        let variance_ineq = var
            .iter()
            .zip(self.variance_cap.iter())
            .fold(0.0f64, |m, (r, c)| m.max(r.max(0.0) / c.abs().max(1.0)));

        let bound = self.bound_scale();
        let negativity = y.iter().fold(0.0f64, |m, v| m.max(-v)) / bound;

        ResidualReport {
            equality,
            return_ineq,
            variance_ineq,
            negativity,
        }
    }

    /// Dense `P0` per the row-interleaving pattern: row `i*K + k` carries
    /// `(1/D_k)(v_i/E_i)` at every column `j*K + k`.
    pub fn p0_dense(&self) -> Array2<f64> {
        let m = self.n_vars();
        let mut p0 = Array2::zeros((m, m));
        for i in 0..self.n {
            for k in 0..self.k {
                let coeff = self.impact_weight[i] / self.depths[k];
                let row = i * self.k + k;
                for j in 0..self.n {
                    p0[[row, j * self.k + k]] = coeff;
                }
            }
        }
        p0
    }

    /// Dense `P_i`: block diagonal with `Q` in block `i`.
    pub fn p_dense(&self, bank: usize) -> Array2<f64> {
        let m = self.n_vars();
        let mut p = Array2::zeros((m, m));
        let base = bank * self.k;
        for k in 0..self.k {
            for l in 0..self.k {
                p[[base + k, base + l]] = self.covariance[[k, l]];
            }
        }
        p
    }

    /// Dense `A1 = -blockdiag(r^T)`.
    pub fn a1_dense(&self) -> Array2<f64> {
        let mut a1 = Array2::zeros((self.n, self.n_vars()));
        for i in 0..self.n {
            for k in 0..self.k {
                a1[[i, i * self.k + k]] = -self.returns[k];
            }
        }
        a1
    }

    /// Dense `A2`: K rows of repeated identities over N rows of per-bank ones.
    pub fn a2_dense(&self) -> Array2<f64> {
        let mut a2 = Array2::zeros((self.k + self.n, self.n_vars()));
        for k in 0..self.k {
            for j in 0..self.n {
                a2[[k, j * self.k + k]] = 1.0;
            }
        }
        for i in 0..self.n {
            for k in 0..self.k {
                a2[[self.k + i, i * self.k + k]] = 1.0;
            }
        }
        a2
    }

    pub fn c1(&self) -> Array1<f64> {
        self.return_floor.clone()
    }

    /// `c2 = -(S_1, ..., S_K, V_1, ..., V_N)`.
    pub fn c2(&self) -> Array1<f64> {
        let mut c2 = Array1::zeros(self.k + self.n);
        for k in 0..self.k {
            c2[k] = -self.asset_totals[k];
        }
        for i in 0..self.n {
            c2[self.k + i] = -self.bank_totals[i];
        }
        c2
    }
}

/// Devectorizes a feasible allocation back into a market, preserving
/// assets, banks, depths, and the depth scale. Entries below the clamp
/// threshold become exact zeros so downstream link statistics see
/// structural absence instead of floating-point dust.
pub fn apply_solution(market: &BipartiteMarket, y: &Array1<f64>) -> Result<BipartiteMarket> {
    let k_count = market.n_assets();
    let n = market.n_banks();
    if y.len() != k_count * n {
        return Err(Error::DimensionMismatch {
            context: "allocation vector vs market size",
            expected: k_count * n,
            actual: y.len(),
        });
    }

    let asset_totals = market.asset_totals();
    let bank_totals = market.bank_totals();
    let bound_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);

    let neg = y.iter().fold(0.0f64, |m, v| m.max(-v)) / bound_scale;
    if neg > BASELINE_TOLERANCE {
        return Err(Error::InfeasibleAllocation {
            family: "negativity",
            residual: neg,
            tolerance: BASELINE_TOLERANCE,
        });
    }
    for k in 0..k_count {
        let mut sum = 0.0;
        for i in 0..n {
            sum += y[i * k_count + k];
        }
        let rel = (sum - asset_totals[k]).abs() / asset_totals[k].abs().max(1.0);
        if rel > BASELINE_TOLERANCE {
            return Err(Error::InfeasibleAllocation {
                family: "asset totals",
                residual: rel,
                tolerance: BASELINE_TOLERANCE,
            });
        }
    }
    for i in 0..n {
        let mut sum = 0.0;
        for k in 0..k_count {
            sum += y[i * k_count + k];
        }
        let rel = (sum - bank_totals[i]).abs() / bank_totals[i].abs().max(1.0);
        if rel > BASELINE_TOLERANCE {
            return Err(Error::InfeasibleAllocation {
                family: "bank totals",
                residual: rel,
                tolerance: BASELINE_TOLERANCE,
            });
        }
    }

    let clamp = 1e-12 * market.total_value() / (k_count * n) as f64;
    let mut holdings = devectorize(y, k_count, n);
    holdings.mapv_inplace(|v| if v < clamp { 0.0 } else { v });
    market.with_holdings(holdings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Asset, Bank};
    use ndarray::array;

    pub(super) fn market_2x2() -> BipartiteMarket {
        BipartiteMarket::new(
            vec![
                Asset {
                    id: "a1".into(),
                    adv: 250.0,
                    volatility: 0.01,
                    depth: 10.0,
                    expected_return: 0.004,
                },
                Asset {
                    id: "a2".into(),
                    adv: 500.0,
                    volatility: 0.01,
                    depth: 20.0,
                    expected_return: 0.002,
                },
            ],
            vec![
                Bank {
                    id: "b1".into(),
                    equity: 1.0,
                    other_assets: 0.0,
                },
                Bank {
                    id: "b2".into(),
                    equity: 2.0,
                    other_assets: 0.0,
                },
            ],
            array![[3.0, 3.0], [2.0, 2.0]],
            0.4,
        )
        .unwrap()
    }

    fn instance_2x2() -> QcqpInstance {
        let market = market_2x2();
        let returns = market.expected_returns();
        let cov = array![[4e-4, 1e-4], [1e-4, 2e-4]];
        build_qcqp(&market, &returns, &cov, &market.equities()).unwrap()
    }

    #[test]
    fn dimensions_match_block_layout() {
        let inst = instance_2x2();
        assert_eq!(inst.p0_dense().dim(), (4, 4));
        assert_eq!(inst.a1_dense().dim(), (2, 4));
        assert_eq!(inst.a2_dense().dim(), (4, 4));
        assert_eq!(inst.c2().len(), 4);
        assert_eq!(inst.p_dense(0).dim(), (4, 4));
    }

    #[test]
    fn p0_row_pattern() {
        // D = (10, 20), symmetric banks so v = (0.5, 0.5), E = (1, 2):
        // first row interleaves (1/10)(0.5/1) at the asset-1 columns.
        let inst = instance_2x2();
        let p0 = inst.p0_dense();
        let row0: Vec<f64> = (0..4).map(|c| p0[[0, c]]).collect();
        assert_eq!(row0, vec![0.05, 0.0, 0.05, 0.0]);
        let row1: Vec<f64> = (0..4).map(|c| p0[[1, c]]).collect();
        assert_eq!(row1, vec![0.0, 0.025, 0.0, 0.025]);
        // Bank-2 block rows use v_2/E_2 = 0.25.
        let row2: Vec<f64> = (0..4).map(|c| p0[[2, c]]).collect();
        assert_eq!(row2, vec![0.025, 0.0, 0.025, 0.0]);
    }

    #[test]
    fn baseline_satisfies_equalities() {
        let inst = instance_2x2();
        let res = inst.equality_residual_vec(inst.baseline());
        for r in res.iter() {
            assert!(r.abs() < 1e-12);
        }
        let report = inst.residuals(inst.baseline());
        assert!(report.max() < 1e-12);
    }

    #[test]
    fn objective_matches_quadratic_form_and_direct_sum() {
        let inst = instance_2x2();
        let y = array![1.0, 2.0, 0.5, 1.5];
        let structured = inst.objective(&y);

        let p0 = inst.p0_dense();
        let mut quad = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                quad += 0.5 * y[r] * (p0[[r, c]] + p0[[c, r]]) * y[c];
            }
        }
        assert!((structured - quad).abs() <= 1e-12 * quad.abs().max(1.0));

        // Direct double sum over bank pairs, including i = j.
        let g = inst.impact_weight();
        let mut direct = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    direct += g[j] * y[i * 2 + k] * y[j * 2 + k] / inst.depths()[k];
                }
            }
        }
        assert!((structured - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn zero_allocation_has_zero_objective() {
        let inst = instance_2x2();
        assert_eq!(inst.objective(&Array1::zeros(4)), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let inst = instance_2x2();
        let y = array![1.0, 2.0, 0.5, 1.5];
        let mut grad = Array1::zeros(4);
        inst.objective_gradient(&y, &mut grad);
        let h = 1e-6;
        for c in 0..4 {
            let mut yp = y.clone();
            yp[c] += h;
            let mut ym = y.clone();
            ym[c] -= h;
            let fd = (inst.objective(&yp) - inst.objective(&ym)) / (2.0 * h);
            assert!((grad[c] - fd).abs() < 1e-6, "coord {c}: {} vs {}", grad[c], fd);
        }
    }

    #[test]
    fn zero_allocation_violates_totals_at_full_scale() {
        let inst = instance_2x2();
        let res = inst.equality_residual_vec(&Array1::zeros(4));
        assert_eq!(res[0], -inst.asset_totals()[0]);
        assert_eq!(res[2], -inst.bank_totals()[0]);
    }

    #[test]
    fn perturbing_one_entry_hits_exactly_two_equality_rows() {
        let inst = instance_2x2();
        let mut y = inst.baseline().clone();
        let delta = 0.125;
        y[1 * 2 + 0] += delta; // bank 2, asset 1
        let res = inst.equality_residual_vec(&y);
        assert_eq!(res[0], delta); // asset-1 row
        assert_eq!(res[1], 0.0);
        assert_eq!(res[2], 0.0);
        assert_eq!(res[3], delta); // bank-2 row
    }

    #[test]
    fn rejects_asymmetric_covariance() {
        let market = market_2x2();
        let returns = market.expected_returns();
        let cov = array![[4e-4, 1e-4], [3e-4, 2e-4]];
        assert!(matches!(
            build_qcqp(&market, &returns, &cov, &market.equities()),
            Err(Error::AsymmetricCovariance { .. })
        ));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let market = market_2x2();
        let returns = array![0.001];
        let cov = array![[1e-4]];
        assert!(matches!(
            build_qcqp(&market, &returns, &cov, &market.equities()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn apply_baseline_is_identity() {
        let market = market_2x2();
        let inst = instance_2x2();
        let rebuilt = apply_solution(&market, inst.baseline()).unwrap();
        assert_eq!(rebuilt.holdings(), market.holdings());
    }

    #[test]
    fn apply_rejects_infeasible_vector() {
        let market = market_2x2();
        let y = array![1.0, 1.0, 1.0, 1.0];
        assert!(matches!(
            apply_solution(&market, &y),
            Err(Error::InfeasibleAllocation { .. })
        ));
    }

    #[test]
    fn vectorize_round_trip() {
        let h = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let y = vectorize(&h);
        assert_eq!(y, array![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(devectorize(&y, 2, 3), h);
    }
}
