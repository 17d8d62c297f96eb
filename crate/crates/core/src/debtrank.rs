//! DebtRank feedback centrality on an impact matrix.
//!
//! Distress propagates through a discrete three-state machine: every node
//! is Distressed for exactly one step (the step after it first receives
//! distress), propagates its accumulated distress level once, and then
//! goes Inactive. This caps reverberations at one per node and bounds the
//! run length at N + 1 steps.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};

const VALUE_SUM_TOLERANCE: f64 = 1e-9;

/// Node state in the propagation dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Undistressed,
    Distressed,
    Inactive,
}

/// Outcome of a single-seed run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    /// Induced distress: `sum_j h_j(T) v_j - sum_j h_j(1) v_j`.
    pub debtrank: f64,
    /// Steps until quiescence (no Distressed nodes remain).
    pub steps: usize,
    /// Per-step distress levels, `trajectory[t][i] = h_i(t+1)`.
    pub trajectory: Vec<Array1<f64>>,
}

/// Per-bank DebtRank and the market-level average.
#[derive(Debug, Clone)]
pub struct DebtRankResult {
    pub per_bank: Array1<f64>,
    pub mean: f64,
    pub trajectories: Option<Vec<SeedRun>>,
}

fn validate_inputs(impact: &Array2<f64>, value: &Array1<f64>, psi: f64) -> Result<usize> {
    let n = value.len();
    if impact.nrows() != n || impact.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "impact matrix vs value vector",
            expected: n,
            actual: impact.nrows().max(impact.ncols()),
        });
    }
    for ((i, j), &w) in impact.indexed_iter() {
        if !(0.0..=1.0).contains(&w) || !w.is_finite() {
            return Err(Error::ImpactOutOfRange { row: i, col: j, value: w });
        }
    }
    let sum: f64 = value.sum();
    if (sum - 1.0).abs() > VALUE_SUM_TOLERANCE || value.iter().any(|&v| v < 0.0) {
        return Err(Error::ValueNotNormalized {
            sum,
            tolerance: VALUE_SUM_TOLERANCE,
        });
    }
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::InvalidScalar {
            field: "psi",
            requirement: "in [0, 1]",
            value: psi,
        });
    }
    Ok(n)
}

/// DebtRank of a seed set: runs the distress dynamics to quiescence and
/// returns the induced distress beyond the initial shock `psi`.
///
/// The diagonal of the impact matrix is ignored during propagation; a
/// bank's own distress is already carried by its `h`.
pub fn debtrank_seed(
    impact: &Array2<f64>,
    value: &Array1<f64>,
    seeds: &[usize],
    psi: f64,
) -> Result<SeedRun> {
    let n = validate_inputs(impact, value, psi)?;
    if seeds.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    for &s in seeds {
        if s >= n {
            return Err(Error::SeedOutOfRange { index: s, n_banks: n });
        }
    }
    Ok(run_dynamics(impact, value, seeds, psi))
}

fn run_dynamics(
    impact: &Array2<f64>,
    value: &Array1<f64>,
    seeds: &[usize],
    psi: f64,
) -> SeedRun {
    let n = value.len();
    let mut h = Array1::<f64>::zeros(n);
    let mut state = vec![NodeState::Undistressed; n];
    for &s in seeds {
        h[s] = psi;
        state[s] = if psi > 0.0 {
            NodeState::Distressed
        } else {
            NodeState::Undistressed
        };
    }

    let initial_weighted: f64 = h.iter().zip(value.iter()).map(|(hi, vi)| hi * vi).sum();
    let mut trajectory = vec![h.clone()];
    let mut steps = 1usize;

    while state.iter().any(|&s| s == NodeState::Distressed) {
        let mut next_h = h.clone();
        for i in 0..n {
            let mut received = 0.0;
            for (j, &s) in state.iter().enumerate() {
                if s == NodeState::Distressed && j != i {
                    received += impact[[j, i]] * h[j];
                }
            }
            next_h[i] = (h[i] + received).min(1.0);
        }
        let mut next_state = state.clone();
        for i in 0..n {
            next_state[i] = match state[i] {
                NodeState::Distressed => NodeState::Inactive,
                NodeState::Undistressed if next_h[i] > 0.0 => NodeState::Distressed,
                other => other,
            };
        }
        h = next_h;
        state = next_state;
        steps += 1;
        trajectory.push(h.clone());
        debug_assert!(steps <= n + 1, "dynamics must quiesce within N + 1 steps");
    }

    let final_weighted: f64 = h.iter().zip(value.iter()).map(|(hi, vi)| hi * vi).sum();
    SeedRun {
        debtrank: final_weighted - initial_weighted,
        steps,
        trajectory,
    }
}

/// DebtRank of every bank (seeding each in turn with `psi`) and the
/// market-level mean. The per-seed runs are independent and execute in
/// parallel; results are assembled in index order.
pub fn debtrank_all(
    impact: &Array2<f64>,
    value: &Array1<f64>,
    psi: f64,
) -> Result<DebtRankResult> {
    let n = validate_inputs(impact, value, psi)?;
    if n == 0 {
        return Err(Error::EmptySeedSet);
    }
    let per_bank: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| run_dynamics(impact, value, &[i], psi).debtrank)
        .collect();
    let per_bank = Array1::from_vec(per_bank);
    let mean = per_bank.sum() / n as f64;
    Ok(DebtRankResult {
        per_bank,
        mean,
        trajectories: None,
    })
}

/// As `debtrank_all`, additionally recording every per-seed trajectory.
pub fn debtrank_all_traced(
    impact: &Array2<f64>,
    value: &Array1<f64>,
    psi: f64,
) -> Result<DebtRankResult> {
    let n = validate_inputs(impact, value, psi)?;
    if n == 0 {
        return Err(Error::EmptySeedSet);
    }
    let runs: Vec<SeedRun> = (0..n)
        .into_par_iter()
        .map(|i| run_dynamics(impact, value, &[i], psi))
        .collect();
    let per_bank: Array1<f64> = runs.iter().map(|r| r.debtrank).collect();
    let mean = per_bank.sum() / n as f64;
    Ok(DebtRankResult {
        per_bank,
        mean,
        trajectories: Some(runs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_bank_chain() {
        // Bank 0 impacts bank 1 by 0.5; seeding 0 yields
        // (1 * 0.5 + 0.5 * 0.5) - 0.5 = 0.25.
        let impact = array![[0.0, 0.5], [0.0, 0.0]];
        let value = array![0.5, 0.5];
        let run = debtrank_seed(&impact, &value, &[0], 1.0).unwrap();
        assert_eq!(run.debtrank, 0.25);
        assert!(run.steps <= 3);
    }

    #[test]
    fn zero_impact_matrix_gives_zero() {
        let impact = Array2::zeros((4, 4));
        let value = Array1::from_elem(4, 0.25);
        let run = debtrank_seed(&impact, &value, &[2], 1.0).unwrap();
        assert_eq!(run.debtrank, 0.0);
    }

    #[test]
    fn complete_graph_saturates() {
        let n = 3;
        let mut impact = Array2::from_elem((n, n), 1.0);
        for i in 0..n {
            impact[[i, i]] = 0.0;
        }
        let value = Array1::from_elem(n, 1.0 / 3.0);
        let run = debtrank_seed(&impact, &value, &[0], 1.0).unwrap();
        assert!((run.debtrank - (1.0 - 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn all_banks_and_mean() {
        let impact = array![[0.0, 0.5], [0.0, 0.0]];
        let value = array![0.5, 0.5];
        let result = debtrank_all(&impact, &value, 1.0).unwrap();
        assert_eq!(result.per_bank, array![0.25, 0.0]);
        assert_eq!(result.mean, 0.125);
    }

    #[test]
    fn zero_matrix_all_banks() {
        let impact = Array2::zeros((3, 3));
        let value = Array1::from_elem(3, 1.0 / 3.0);
        let result = debtrank_all(&impact, &value, 1.0).unwrap();
        assert!(result.per_bank.iter().all(|&r| r == 0.0));
        assert_eq!(result.mean, 0.0);
    }

    #[test]
    fn diagonal_is_ignored_in_propagation() {
        // Self-impact of 1 must not change anything: the seed is already
        // fully distressed.
        let impact = array![[1.0, 0.5], [0.0, 1.0]];
        let value = array![0.5, 0.5];
        let run = debtrank_seed(&impact, &value, &[0], 1.0).unwrap();
        assert_eq!(run.debtrank, 0.25);
    }

    #[test]
    fn partial_initial_distress() {
        let impact = array![[0.0, 0.5], [0.0, 0.0]];
        let value = array![0.5, 0.5];
        let run = debtrank_seed(&impact, &value, &[0], 0.5).unwrap();
        // h(T) = [0.5, 0.25]; R = (0.25 + 0.125) - 0.25.
        assert_eq!(run.debtrank, 0.125);
    }

    #[test]
    fn rejects_bad_inputs() {
        let value = array![0.5, 0.5];
        let bad_impact = array![[0.0, 1.5], [0.0, 0.0]];
        assert!(debtrank_seed(&bad_impact, &value, &[0], 1.0).is_err());

        let impact = Array2::zeros((2, 2));
        let bad_value = array![0.5, 0.6];
        assert!(debtrank_seed(&impact, &bad_value, &[0], 1.0).is_err());
        assert!(debtrank_seed(&impact, &value, &[], 1.0).is_err());
        assert!(debtrank_seed(&impact, &value, &[5], 1.0).is_err());
        assert!(debtrank_seed(&impact, &value, &[0], 1.5).is_err());
    }

    #[test]
    fn h_is_monotone_along_trajectory() {
        let impact = array![
            [0.0, 0.3, 0.0, 0.1],
            [0.2, 0.0, 0.4, 0.0],
            [0.0, 0.1, 0.0, 0.9],
            [0.05, 0.0, 0.2, 0.0]
        ];
        let value = Array1::from_elem(4, 0.25);
        let run = debtrank_seed(&impact, &value, &[1], 1.0).unwrap();
        for pair in run.trajectory.windows(2) {
            for i in 0..4 {
                assert!(pair[1][i] >= pair[0][i]);
            }
        }
    }
}
