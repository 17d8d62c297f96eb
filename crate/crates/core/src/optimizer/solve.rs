//! Multi-start local solver for the reallocation program.
//!
//! Each start runs an augmented-Lagrangian loop: equality constraints
//! carry multipliers, return/variance inequalities carry one-sided
//! penalties, and non-negativity is handled by projection inside the
//! spectral projected-gradient inner iteration. Iterates are then
//! repaired onto the equality polytope and polished with exact
//! pairwise-exchange moves, which keep every constraint family feasible
//! by construction. The first start is always the baseline allocation,
//! so the returned objective never exceeds the baseline objective.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{QcqpInstance, ResidualReport};
use crate::error::{Error, Result};

/// Tolerances, iteration budgets, and the penalty/step schedule.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Relative tolerance on the equality families.
    pub eq_tol: f64,
    /// Relative tolerance on the inequality families and bounds.
    pub ineq_tol: f64,
    /// Projected-gradient iterations per multiplier round.
    pub max_iterations: usize,
    /// Multiplier/penalty update rounds.
    pub outer_rounds: usize,
    /// Local starts; start 1 is the baseline allocation.
    pub n_starts: usize,
    pub rng_seed: u64,
    /// Initial quadratic penalty weight.
    pub initial_penalty: f64,
    /// Penalty growth factor applied when infeasibility stagnates.
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Exchange-polish sweep budget per start.
    pub polish_sweeps: usize,
    /// Relative strength of the random feasible start perturbations.
    pub perturbation: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eq_tol: 1e-8,
            ineq_tol: 1e-8,
            max_iterations: 400,
            outer_rounds: 30,
            n_starts: 8,
            rng_seed: 0,
            initial_penalty: 10.0,
            penalty_growth: 5.0,
            max_penalty: 1e10,
            polish_sweeps: 120,
            perturbation: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// A feasible allocation strictly better than the baseline was found.
    Improved,
    /// No feasible improvement was found; the baseline is returned as-is.
    BaselineReturned,
}

/// Best feasible point found by `solve` or the brute-force oracle.
#[derive(Debug, Clone)]
pub struct Solution {
    pub y: Array1<f64>,
    pub objective_value: f64,
    pub feasibility: ResidualReport,
    /// Local starts actually run (zero for the exhaustive oracle).
    pub starts_used: usize,
    pub status: SolveStatus,
}

/// Minimizes the instance objective over the constraint set.
///
/// Deterministic for a fixed `rng_seed`: starts are generated up front,
/// the independent local runs may execute concurrently, and the winner is
/// selected by (objective, start index).
pub fn solve(instance: &QcqpInstance, config: &OptimizerConfig) -> Result<Solution> {
    if config.n_starts < 1 {
        return Err(Error::InvalidScalar {
            field: "n_starts",
            requirement: ">= 1",
            value: config.n_starts as f64,
        });
    }
    if !(config.eq_tol > 0.0) || !(config.ineq_tol > 0.0) {
        return Err(Error::InvalidScalar {
            field: "tolerance",
            requirement: "> 0",
            value: config.eq_tol.min(config.ineq_tol),
        });
    }

    let baseline_report = instance.residuals(instance.baseline());
    if !baseline_report.within(config.eq_tol, config.ineq_tol) {
        let (family, residual) = baseline_report.worst_family();
        return Err(Error::InfeasibleBaseline {
            family,
            residual,
            tolerance: config.eq_tol.min(config.ineq_tol),
        });
    }
    let baseline_obj = instance.objective(instance.baseline());

    let mut starts: Vec<Array1<f64>> = Vec::with_capacity(config.n_starts + 1);
    starts.push(instance.baseline().clone());
    for s in 1..config.n_starts {
        let seed = config
            .rng_seed
            .wrapping_add((s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        starts.push(perturb_feasible(instance, &mut rng, config.perturbation));
    }
    // Polish-only pass over the baseline; costs one sweep budget and
    // anchors the candidate set when the AL phase wanders.
    starts.push(instance.baseline().clone());
    let polish_only_idx = starts.len() - 1;

    let candidates: Vec<Option<(f64, Array1<f64>, ResidualReport)>> = starts
        .par_iter()
        .enumerate()
        .map(|(idx, start)| {
            let mut y = start.clone();
            if idx != polish_only_idx {
                augmented_lagrangian(instance, &mut y, config);
            }
            finish_candidate(instance, y, config)
        })
        .collect();

    let improvement_margin = 1e-12 * baseline_obj.abs().max(1.0);
    let mut best: Option<(f64, usize)> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        if let Some((obj, _, _)) = cand {
            if obj.is_finite() && best.map_or(true, |(b, _)| *obj < b) {
                best = Some((*obj, idx));
            }
        }
    }

    match best {
        Some((obj, idx)) if obj < baseline_obj - improvement_margin => {
            let (_, y, report) = candidates[idx].clone().unwrap();
            Ok(Solution {
                y,
                objective_value: obj,
                feasibility: report,
                starts_used: config.n_starts,
                status: SolveStatus::Improved,
            })
        }
        _ => Ok(Solution {
            y: instance.baseline().clone(),
            objective_value: baseline_obj,
            feasibility: baseline_report,
            starts_used: config.n_starts,
            status: SolveStatus::BaselineReturned,
        }),
    }
}

/// Random feasible start: pairwise exchange moves keep the row/column
/// totals and non-negativity exact, so only the inequality families can
/// be violated (the AL phase pulls those back).
fn perturb_feasible(
    instance: &QcqpInstance,
    rng: &mut ChaCha8Rng,
    strength: f64,
) -> Array1<f64> {
    let k_count = instance.n_assets();
    let n = instance.n_banks();
    let mut y = instance.baseline().clone();
    if k_count < 2 || n < 2 {
        return y;
    }
    let moves = 4 * k_count * n;
    for _ in 0..moves {
        let k = rng.random_range(0..k_count);
        let mut l = rng.random_range(0..k_count - 1);
        if l >= k {
            l += 1;
        }
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        // Shift t from (k,j) and (l,i) into (k,i) and (l,j).
        let cap = y[j * k_count + k].min(y[i * k_count + l]);
        let t = rng.random::<f64>() * strength * cap;
        y[i * k_count + k] += t;
        y[j * k_count + l] += t;
        y[j * k_count + k] -= t;
        y[i * k_count + l] -= t;
    }
    y
}

/// Repair, polish, re-repair, then accept the point only if every family
/// is inside its tolerance.
fn finish_candidate(
    instance: &QcqpInstance,
    mut y: Array1<f64>,
    config: &OptimizerConfig,
) -> Option<(f64, Array1<f64>, ResidualReport)> {
    repair_onto_polytope(instance, &mut y, 2000);
    exchange_polish(instance, &mut y, config.polish_sweeps);
    repair_onto_polytope(instance, &mut y, 200);
    let report = instance.residuals(&y);
    if !report.within(config.eq_tol, config.ineq_tol) {
        return None;
    }
    let obj = instance.objective(&y);
    if !obj.is_finite() {
        return None;
    }
    Some((obj, y, report))
}

/// Alternating projection onto the total-preservation affine set and the
/// non-negative orthant. The affine projection is closed-form: the
/// minimum-norm correction with prescribed row and column sum changes is
/// `d[k,i] = rho_k/N + gamma_i/K - tau/(K*N)`.
fn repair_onto_polytope(instance: &QcqpInstance, y: &mut Array1<f64>, max_iter: usize) {
    let k_count = instance.n_assets();
    let n = instance.n_banks();
    let scale = instance
        .asset_totals()
        .iter()
        .chain(instance.bank_totals().iter())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-13 * scale;

    let mut row_gap = vec![0.0; k_count];
    let mut col_gap = vec![0.0; n];
    for _ in 0..max_iter {
        let mut worst = 0.0f64;
        for k in 0..k_count {
            let mut sum = 0.0;
            for i in 0..n {
                sum += y[i * k_count + k];
            }
            row_gap[k] = instance.asset_totals()[k] - sum;
            worst = worst.max(row_gap[k].abs());
        }
        for i in 0..n {
            let mut sum = 0.0;
            for k in 0..k_count {
                sum += y[i * k_count + k];
            }
            col_gap[i] = instance.bank_totals()[i] - sum;
            worst = worst.max(col_gap[i].abs());
        }
        let min_entry = y.iter().fold(0.0f64, |m, v| m.min(*v));
        if worst <= tol && min_entry >= -tol {
            break;
        }
        let tau = 0.5 * (row_gap.iter().sum::<f64>() + col_gap.iter().sum::<f64>());
        let shift = tau / (k_count * n) as f64;
        for i in 0..n {
            let col_term = col_gap[i] / k_count as f64 - shift;
            for k in 0..k_count {
                let c = i * k_count + k;
                let v = y[c] + row_gap[k] / n as f64 + col_term;
                y[c] = if v > 0.0 { v } else { 0.0 };
            }
        }
    }
}

/// Exact coordinate descent over pairwise exchange directions
/// `x[k,i] += t, x[l,j] += t, x[k,j] -= t, x[l,i] -= t`.
///
/// Such moves leave every asset total fixed, so the objective is exactly
/// linear along them; the feasible step interval follows in closed form
/// from the bounds, the linear return floors, and the per-bank variance
/// quadratics. Constraints already violated at entry are allowed to keep
/// their current violation but never to grow.
fn exchange_polish(instance: &QcqpInstance, y: &mut Array1<f64>, max_sweeps: usize) {
    let k_count = instance.n_assets();
    let n = instance.n_banks();
    if k_count < 2 || n < 2 {
        return;
    }
    let depths = instance.depths();
    let g = instance.impact_weight();
    let q = instance.covariance();
    let r = instance.returns();

    for _sweep in 0..max_sweeps {
        // Fresh caches each sweep to cap incremental drift.
        let mut u = vec![0.0f64; k_count];
        let mut rx = vec![0.0f64; n];
        let mut var = vec![0.0f64; n];
        let mut qx = vec![vec![0.0f64; k_count]; n];
        for i in 0..n {
            for k in 0..k_count {
                let x = y[i * k_count + k];
                u[k] += x;
                rx[i] += r[k] * x;
            }
            for k in 0..k_count {
                let mut s = 0.0;
                for l in 0..k_count {
                    s += q[[k, l]] * y[i * k_count + l];
                }
                qx[i][k] = s;
                var[i] += y[i * k_count + k] * s;
            }
        }
        let relax_ret: Vec<f64> = (0..n)
            .map(|i| (instance.return_floor()[i] - rx[i]).max(0.0))
            .collect();
        let relax_var: Vec<f64> = (0..n)
            .map(|i| (var[i] - instance.variance_cap()[i]).max(0.0))
            .collect();

        let f_now = instance.objective(y);
        let gain_floor = 1e-13 * f_now.abs().max(f64::MIN_POSITIVE);
        let mut accepted = 0usize;

        for i in 0..n {
            for j in (i + 1)..n {
                let dg = g[i] - g[j];
                if dg == 0.0 {
                    continue;
                }
                for k in 0..k_count {
                    for l in (k + 1)..k_count {
                        let slope = dg * (u[k] / depths[k] - u[l] / depths[l]);
                        if slope == 0.0 {
                            continue;
                        }
                        let (lo, hi) = move_interval(
                            instance, y, k_count, i, j, k, l, &rx, &var, &qx, q, r,
                            &relax_ret, &relax_var,
                        );
                        if lo > hi {
                            continue;
                        }
                        let t = if slope < 0.0 { hi } else { lo };
                        let gain = slope * t;
                        if gain >= -gain_floor {
                            continue;
                        }
                        apply_move(
                            y, k_count, i, j, k, l, t, &mut rx, &mut var, &mut qx, q, r, dg,
                        );
                        accepted += 1;
                    }
                }
            }
        }
        if accepted == 0 {
            break;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn move_interval(
    instance: &QcqpInstance,
    y: &Array1<f64>,
    k_count: usize,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    rx: &[f64],
    var: &[f64],
    qx: &[Vec<f64>],
    q: &ndarray::Array2<f64>,
    r: &Array1<f64>,
    relax_ret: &[f64],
    relax_var: &[f64],
) -> (f64, f64) {
    // Bounds on the four touched cells.
    let mut lo = -(y[i * k_count + k].min(y[j * k_count + l]));
    let mut hi = y[j * k_count + k].min(y[i * k_count + l]);

    // Return floors: rx_i moves by +t * dr, rx_j by -t * dr.
    let dr = r[k] - r[l];
    if dr != 0.0 {
        let slack_i = rx[i] - (instance.return_floor()[i] - relax_ret[i]);
        let slack_j = rx[j] - (instance.return_floor()[j] - relax_ret[j]);
        if dr > 0.0 {
            lo = lo.max(-slack_i / dr);
            hi = hi.min(slack_j / dr);
        } else {
            hi = hi.min(-slack_i / dr);
            lo = lo.max(slack_j / dr);
        }
    }

    // Variance caps: quadratics a t^2 + b t + c <= 0 with c <= 0,
    // so the feasible interval always contains zero.
    let a = (q[[k, k]] + q[[l, l]] - 2.0 * q[[k, l]]).max(0.0);
    for (bank, sign) in [(i, 1.0), (j, -1.0)] {
        let b = 2.0 * sign * (qx[bank][k] - qx[bank][l]);
        let c = var[bank] - instance.variance_cap()[bank] - relax_var[bank];
        if a > 0.0 {
            let disc = (b * b - 4.0 * a * c).max(0.0);
            let root = disc.sqrt();
            lo = lo.max((-b - root) / (2.0 * a));
            hi = hi.min((-b + root) / (2.0 * a));
        } else if b > 0.0 {
            hi = hi.min(-c / b);
        } else if b < 0.0 {
            lo = lo.max(-c / b);
        }
    }

    (lo.min(0.0), hi.max(0.0))
}

#[allow(clippy::too_many_arguments)]
fn apply_move(
    y: &mut Array1<f64>,
    k_count: usize,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    t: f64,
    rx: &mut [f64],
    var: &mut [f64],
    qx: &mut [Vec<f64>],
    q: &ndarray::Array2<f64>,
    r: &Array1<f64>,
    _dg: f64,
) {
    y[i * k_count + k] += t;
    y[j * k_count + l] += t;
    y[j * k_count + k] -= t;
    y[i * k_count + l] -= t;

    let dr = r[k] - r[l];
    rx[i] += t * dr;
    rx[j] -= t * dr;

    let a = q[[k, k]] + q[[l, l]] - 2.0 * q[[k, l]];
    var[i] += a * t * t + 2.0 * t * (qx[i][k] - qx[i][l]);
    var[j] += a * t * t - 2.0 * t * (qx[j][k] - qx[j][l]);
    for m in 0..k_count {
        let dq = t * (q[[m, k]] - q[[m, l]]);
        qx[i][m] += dq;
        qx[j][m] -= dq;
    }
}

/// One augmented-Lagrangian run: outer multiplier updates around a
/// projected-gradient inner loop with Armijo backtracking. Residuals are
/// pre-scaled per row, the objective is normalized by its baseline value,
/// and the variables by the largest baseline entry, which makes the
/// schedule insensitive to monetary units.
fn augmented_lagrangian(instance: &QcqpInstance, y: &mut Array1<f64>, config: &OptimizerConfig) {
    let nv = instance.n_vars();
    let k_count = instance.n_assets();
    let n = instance.n_banks();
    let y_scale = instance.bound_scale();
    let f_scale = instance.objective(instance.baseline()).abs().max(1e-12);
    let eq_scales = instance.equality_scales();
    let ret_scales: Vec<f64> = instance.return_floor().iter().map(|v| v.abs().max(1.0)).collect();
    let var_scales: Vec<f64> = instance.variance_cap().iter().map(|v| v.abs().max(1.0)).collect();

    let mut z: Array1<f64> = y.mapv(|v| (v / y_scale).max(0.0));
    let mut lambda = vec![0.0f64; k_count + n];
    let mut mu_ret = vec![0.0f64; n];
    let mut mu_var = vec![0.0f64; n];
    let mut rho = config.initial_penalty;
    let mut prev_viol = f64::INFINITY;
    let mut stall_rounds = 0usize;
    let mut prev_obj = f64::INFINITY;

    let mut y_buf = Array1::zeros(nv);
    let mut grad_y = Array1::zeros(nv);

    let eval = |z: &Array1<f64>, y_buf: &mut Array1<f64>, lambda: &[f64], mu_ret: &[f64], mu_var: &[f64], rho: f64| -> f64 {
        for c in 0..nv {
            y_buf[c] = z[c] * y_scale;
        }
        let mut val = instance.objective(y_buf) / f_scale;
        let eq = instance.equality_residual_vec(y_buf);
        for (r_idx, res) in eq.iter().enumerate() {
            let h = res / eq_scales[r_idx];
            val += lambda[r_idx] * h + 0.5 * rho * h * h;
        }
        let ret = instance.return_residual_vec(y_buf);
        for (i, res) in ret.iter().enumerate() {
            let gi = res / ret_scales[i];
            let m = (mu_ret[i] + rho * gi).max(0.0);
            val += (m * m - mu_ret[i] * mu_ret[i]) / (2.0 * rho);
        }
        let var = instance.variance_residual_vec(y_buf);
        for (i, res) in var.iter().enumerate() {
            let gi = res / var_scales[i];
            let m = (mu_var[i] + rho * gi).max(0.0);
            val += (m * m - mu_var[i] * mu_var[i]) / (2.0 * rho);
        }
        val
    };

    for _outer in 0..config.outer_rounds {
        let mut alpha = 1.0f64;
        for _inner in 0..config.max_iterations {
            // Gradient of the augmented Lagrangian at z.
            for c in 0..nv {
                y_buf[c] = z[c] * y_scale;
            }
            instance.objective_gradient(&y_buf, &mut grad_y);
            grad_y.mapv_inplace(|v| v / f_scale);

            let eq = instance.equality_residual_vec(&y_buf);
            let mut asset_coeff = vec![0.0f64; k_count];
            let mut bank_coeff = vec![0.0f64; n];
            for k in 0..k_count {
                let h = eq[k] / eq_scales[k];
                asset_coeff[k] = (lambda[k] + rho * h) / eq_scales[k];
            }
            for i in 0..n {
                let h = eq[k_count + i] / eq_scales[k_count + i];
                bank_coeff[i] = (lambda[k_count + i] + rho * h) / eq_scales[k_count + i];
            }
            let ret = instance.return_residual_vec(&y_buf);
            let var = instance.variance_residual_vec(&y_buf);
            for i in 0..n {
                let gi = ret[i] / ret_scales[i];
                let ret_coeff = (mu_ret[i] + rho * gi).max(0.0) / ret_scales[i];
                let gv = var[i] / var_scales[i];
                let var_coeff = (mu_var[i] + rho * gv).max(0.0) / var_scales[i];
                for k in 0..k_count {
                    let c = i * k_count + k;
                    let mut qx = 0.0;
                    if var_coeff != 0.0 {
                        for l in 0..k_count {
                            qx += instance.covariance()[[k, l]] * y_buf[i * k_count + l];
                        }
                    }
                    grad_y[c] += asset_coeff[k] + bank_coeff[i]
                        - ret_coeff * instance.returns()[k]
                        + var_coeff * 2.0 * qx;
                }
            }
            // d/dz = y_scale * d/dy.
            let grad_z = grad_y.mapv(|v| v * y_scale);

            let l_val = eval(&z, &mut y_buf, &lambda, &mu_ret, &mu_var, rho);
            let mut step = alpha;
            let mut accepted = None;
            for _bt in 0..60 {
                let z_try = Array1::from_iter(
                    z.iter().zip(grad_z.iter()).map(|(zi, gi)| (zi - step * gi).max(0.0)),
                );
                let pred: f64 = grad_z
                    .iter()
                    .zip(z_try.iter().zip(z.iter()))
                    .map(|(gi, (t, zi))| gi * (t - zi))
                    .sum();
                let l_try = eval(&z_try, &mut y_buf, &lambda, &mu_ret, &mu_var, rho);
                if l_try <= l_val + 1e-4 * pred {
                    accepted = Some((z_try, step));
                    break;
                }
                step *= 0.5;
            }
            let Some((z_next, used)) = accepted else {
                break;
            };
            let move_size = z_next
                .iter()
                .zip(z.iter())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            z = z_next;
            alpha = (used * 2.0).clamp(1e-16, 1e8);
            if move_size <= 1e-13 * z.iter().fold(1.0f64, |m, v| m.max(v.abs())) {
                break;
            }
        }

        // Multiplier updates on the scaled residuals.
        for c in 0..nv {
            y_buf[c] = z[c] * y_scale;
        }
        let eq = instance.equality_residual_vec(&y_buf);
        let ret = instance.return_residual_vec(&y_buf);
        let var = instance.variance_residual_vec(&y_buf);
        let mut viol = 0.0f64;
        for (r_idx, res) in eq.iter().enumerate() {
            let h = res / eq_scales[r_idx];
            lambda[r_idx] += rho * h;
            viol = viol.max(h.abs());
        }
        for (i, res) in ret.iter().enumerate() {
            let gi = res / ret_scales[i];
            mu_ret[i] = (mu_ret[i] + rho * gi).max(0.0);
            viol = viol.max(gi.max(0.0));
        }
        for (i, res) in var.iter().enumerate() {
            let gi = res / var_scales[i];
            mu_var[i] = (mu_var[i] + rho * gi).max(0.0);
            viol = viol.max(gi.max(0.0));
        }
        if viol > 0.25 * prev_viol && viol > 1e-12 {
            rho = (rho * config.penalty_growth).min(config.max_penalty);
        }
        prev_viol = viol;

        let obj = instance.objective(&y_buf) / f_scale;
        if viol <= 1e-10 && (prev_obj - obj).abs() <= 1e-13 {
            stall_rounds += 1;
            if stall_rounds >= 2 {
                break;
            }
        } else {
            stall_rounds = 0;
        }
        prev_obj = obj;
    }

    for c in 0..nv {
        y[c] = z[c] * y_scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Asset, Bank, BipartiteMarket};
    use crate::optimizer::build_qcqp;
    use ndarray::{array, Array2};

    fn asset(id: &str, depth: f64, ret: f64) -> Asset {
        Asset {
            id: id.into(),
            adv: depth * 0.025,
            volatility: 0.01,
            depth,
            expected_return: ret,
        }
    }

    fn bank(id: &str, equity: f64) -> Bank {
        Bank {
            id: id.into(),
            equity,
            other_assets: 0.0,
        }
    }

    /// Asymmetric 2x2 instance with one degree of freedom.
    fn instance_2x2() -> (BipartiteMarket, super::super::QcqpInstance) {
        let market = BipartiteMarket::new(
            vec![asset("a1", 10.0, 0.004), asset("a2", 40.0, 0.004)],
            vec![bank("b1", 0.5), bank("b2", 4.0)],
            array![[4.0, 1.0], [1.0, 4.0]],
            0.4,
        )
        .unwrap();
        let returns = market.expected_returns();
        let cov = Array2::eye(2) * 1e-4;
        let inst = build_qcqp(&market, &returns, &cov, &market.equities()).unwrap();
        (market, inst)
    }

    #[test]
    fn single_bank_market_is_pinned() {
        let market = BipartiteMarket::new(
            vec![asset("a1", 10.0, 0.001), asset("a2", 20.0, 0.002)],
            vec![bank("b1", 1.0)],
            array![[3.0], [4.0]],
            0.4,
        )
        .unwrap();
        let returns = market.expected_returns();
        let cov = Array2::eye(2) * 1e-4;
        let inst = build_qcqp(&market, &returns, &cov, &market.equities()).unwrap();
        let sol = solve(&inst, &OptimizerConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::BaselineReturned);
        assert_eq!(sol.y, *inst.baseline());
    }

    #[test]
    fn never_worse_and_feasible() {
        let (_, inst) = instance_2x2();
        let cfg = OptimizerConfig::default();
        let sol = solve(&inst, &cfg).unwrap();
        let base_obj = inst.objective(inst.baseline());
        assert!(sol.objective_value <= base_obj + 1e-12 * base_obj.abs());
        assert!(sol.feasibility.within(cfg.eq_tol, cfg.ineq_tol));
    }

    #[test]
    fn deterministic_across_runs() {
        let (_, inst) = instance_2x2();
        let cfg = OptimizerConfig {
            rng_seed: 7,
            ..OptimizerConfig::default()
        };
        let a = solve(&inst, &cfg).unwrap();
        let b = solve(&inst, &cfg).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.objective_value, b.objective_value);
    }

    #[test]
    fn repair_restores_totals_and_bounds() {
        let (_, inst) = instance_2x2();
        let mut y = inst.baseline().clone();
        y[0] += 0.7;
        y[3] -= 0.9;
        repair_onto_polytope(&inst, &mut y, 2000);
        let report = inst.residuals(&y);
        assert!(report.equality < 1e-12, "equality residual {}", report.equality);
        assert!(report.negativity == 0.0);
    }

    #[test]
    fn perturbed_starts_keep_equalities_exact() {
        let (_, inst) = instance_2x2();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = perturb_feasible(&inst, &mut rng, 0.9);
        let eq = inst.equality_residual_vec(&y);
        for r in eq.iter() {
            assert!(r.abs() < 1e-12);
        }
        assert!(y.iter().all(|&v| v >= 0.0));
    }
}
