//! Exhaustive grid oracle for instances whose equality system leaves at
//! most two degrees of freedom.
//!
//! The total-preservation equalities over a K x N allocation have rank
//! K + N - 1, so the feasible affine set has dimension (K-1)(N-1). For
//! one or two degrees of freedom it is parameterized with pairwise
//! exchange basis vectors, a nested grid over the bounding box is scanned,
//! points violating any constraint family are filtered out, and the grid
//! argmin is returned. Doubling the resolution refines the grid in place
//! (shared endpoints), so the reported minimum never increases.

use ndarray::Array1;

use super::solve::{Solution, SolveStatus};
use super::QcqpInstance;
use crate::error::{Error, Result};

const ORACLE_EQ_TOL: f64 = 1e-8;
const ORACLE_INEQ_TOL: f64 = 1e-8;

/// Exchange basis vector: +1 at (k,i) and (l,j), -1 at (k,j) and (l,i).
struct ExchangeDir {
    plus: [usize; 2],
    minus: [usize; 2],
}

impl ExchangeDir {
    fn new(k_count: usize, k: usize, l: usize, i: usize, j: usize) -> Self {
        Self {
            plus: [i * k_count + k, j * k_count + l],
            minus: [j * k_count + k, i * k_count + l],
        }
    }

    fn coeff(&self, cell: usize) -> f64 {
        if self.plus.contains(&cell) {
            1.0
        } else if self.minus.contains(&cell) {
            -1.0
        } else {
            0.0
        }
    }
}

pub fn brute_force_oracle(instance: &QcqpInstance, grid_resolution: usize) -> Result<Solution> {
    let k_count = instance.n_assets();
    let n = instance.n_banks();
    let dof = k_count.saturating_sub(1) * n.saturating_sub(1);
    if dof > 2 {
        return Err(Error::OracleTooLarge { dof });
    }
    if grid_resolution < 2 {
        return Err(Error::InvalidScalar {
            field: "grid_resolution",
            requirement: ">= 2",
            value: grid_resolution as f64,
        });
    }

    let baseline = instance.baseline().clone();
    let baseline_obj = instance.objective(&baseline);
    let baseline_report = instance.residuals(&baseline);

    if dof == 0 {
        return Ok(Solution {
            y: baseline,
            objective_value: baseline_obj,
            feasibility: baseline_report,
            starts_used: 0,
            status: SolveStatus::BaselineReturned,
        });
    }

    let dirs: Vec<ExchangeDir> = if dof == 1 {
        vec![ExchangeDir::new(k_count, 0, 1, 0, 1)]
    } else if k_count == 3 {
        vec![
            ExchangeDir::new(k_count, 0, 1, 0, 1),
            ExchangeDir::new(k_count, 1, 2, 0, 1),
        ]
    } else {
        vec![
            ExchangeDir::new(k_count, 0, 1, 0, 1),
            ExchangeDir::new(k_count, 0, 1, 1, 2),
        ]
    };

    let boxes: Vec<(f64, f64)> = dirs
        .iter()
        .enumerate()
        .map(|(axis, dir)| axis_box(instance, &dirs, axis, dir, &baseline))
        .collect();

    let atol = 1e-12 * instance.bound_scale();
    let mut best: Option<(f64, Array1<f64>)> = None;
    let mut consider = |y: Array1<f64>, obj: f64| {
        if let Some((b, _)) = &best {
            if obj >= *b {
                return;
            }
        }
        best = Some((obj, y));
    };

    // The baseline itself is always a candidate regardless of the grid.
    consider(baseline.clone(), baseline_obj);

    let mut probe = |ts: &[f64]| {
        let mut y = baseline.clone();
        for (dir, &t) in dirs.iter().zip(ts.iter()) {
            for &c in &dir.plus {
                y[c] += t;
            }
            for &c in &dir.minus {
                y[c] -= t;
            }
        }
        if y.iter().any(|&v| v < -atol) {
            return None;
        }
        let report = instance.residuals(&y);
        if !report.within(ORACLE_EQ_TOL, ORACLE_INEQ_TOL) {
            return None;
        }
        Some((instance.objective(&y), y))
    };

    if dof == 1 {
        let (lo, hi) = boxes[0];
        for idx in 0..=grid_resolution {
            let t = lo + (hi - lo) * idx as f64 / grid_resolution as f64;
            if let Some((obj, y)) = probe(&[t]) {
                consider(y, obj);
            }
        }
    } else {
        let (lo0, hi0) = boxes[0];
        let (lo1, hi1) = boxes[1];
        for idx0 in 0..=grid_resolution {
            let t0 = lo0 + (hi0 - lo0) * idx0 as f64 / grid_resolution as f64;
            for idx1 in 0..=grid_resolution {
                let t1 = lo1 + (hi1 - lo1) * idx1 as f64 / grid_resolution as f64;
                if let Some((obj, y)) = probe(&[t0, t1]) {
                    consider(y, obj);
                }
            }
        }
    }

    let (obj, y) = best.expect("baseline candidate always present");
    let margin = 1e-12 * baseline_obj.abs().max(1.0);
    if obj < baseline_obj - margin {
        let feasibility = instance.residuals(&y);
        Ok(Solution {
            y,
            objective_value: obj,
            feasibility,
            starts_used: 0,
            status: SolveStatus::Improved,
        })
    } else {
        Ok(Solution {
            y: baseline,
            objective_value: baseline_obj,
            feasibility: baseline_report,
            starts_used: 0,
            status: SolveStatus::BaselineReturned,
        })
    }
}

/// Bounding interval for one grid axis, from the cells touched by this
/// direction alone; cells shared with the other axis cut corners that the
/// per-point feasibility filter handles.
fn axis_box(
    instance: &QcqpInstance,
    dirs: &[ExchangeDir],
    axis: usize,
    dir: &ExchangeDir,
    baseline: &Array1<f64>,
) -> (f64, f64) {
    let mass: f64 = baseline.iter().sum();
    let mut lo = -mass;
    let mut hi = mass;
    for &c in dir.plus.iter() {
        let exclusive = dirs
            .iter()
            .enumerate()
            .all(|(a, d)| a == axis || d.coeff(c) == 0.0);
        if exclusive {
            lo = lo.max(-baseline[c]);
        }
    }
    for &c in dir.minus.iter() {
        let exclusive = dirs
            .iter()
            .enumerate()
            .all(|(a, d)| a == axis || d.coeff(c) == 0.0);
        if exclusive {
            hi = hi.min(baseline[c]);
        }
    }
    let _ = instance;
    (lo, hi)
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

    fn instance_2x2() -> QcqpInstance {
        let market = BipartiteMarket::new(
            vec![asset("a1", 10.0, 0.004), asset("a2", 40.0, 0.004)],
            vec![bank("b1", 0.5), bank("b2", 4.0)],
            array![[4.0, 1.0], [1.0, 4.0]],
            0.4,
        )
        .unwrap();
        let returns = market.expected_returns();
        let cov = Array2::eye(2) * 1e-4;
        build_qcqp(&market, &returns, &cov, &market.equities()).unwrap()
    }

    #[test]
    fn refuses_large_instances() {
        let market = BipartiteMarket::new(
            vec![
                asset("a1", 10.0, 0.001),
                asset("a2", 10.0, 0.001),
                asset("a3", 10.0, 0.001),
            ],
            vec![bank("b1", 1.0), bank("b2", 1.0), bank("b3", 1.0)],
            Array2::from_elem((3, 3), 2.0),
            0.4,
        )
        .unwrap();
        let returns = market.expected_returns();
        let cov = Array2::eye(3) * 1e-4;
        let inst = build_qcqp(&market, &returns, &cov, &market.equities()).unwrap();
        assert!(matches!(
            brute_force_oracle(&inst, 100),
            Err(Error::OracleTooLarge { dof: 4 })
        ));
    }

    #[test]
    fn pinned_instance_returns_baseline() {
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
        let sol = brute_force_oracle(&inst, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::BaselineReturned);
        assert_eq!(sol.y, *inst.baseline());
    }

    #[test]
    fn doubling_resolution_never_increases_minimum() {
        let inst = instance_2x2();
        let coarse = brute_force_oracle(&inst, 500).unwrap();
        let fine = brute_force_oracle(&inst, 1000).unwrap();
        assert!(fine.objective_value <= coarse.objective_value + 1e-15);
    }

    #[test]
    fn oracle_result_is_feasible_and_never_worse() {
        let inst = instance_2x2();
        let sol = brute_force_oracle(&inst, 2000).unwrap();
        assert!(sol.feasibility.within(1e-8, 1e-8));
        assert!(sol.objective_value <= inst.objective(inst.baseline()));
    }
}
