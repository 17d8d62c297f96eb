//! Cyclic Jacobi eigendecomposition for symmetric matrices, used to clip
//! negative eigenvalues out of near-PSD empirical covariance matrices.

use ndarray::{Array1, Array2};

/// Eigendecomposition of a symmetric matrix: returns `(eigenvalues, q)`
/// with eigenvectors in the columns of `q`, so `a = q * diag(vals) * q^T`.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let mut q = Array2::eye(n);
    if n < 2 {
        return (m.diag().to_owned(), q);
    }

    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = 1e-15 * frob.max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for r in (p + 1)..n {
                    s += m[[p, r]] * m[[p, r]];
                }
            }
            (2.0 * s).sqrt()
        };
        if off <= stop {
            break;
        }
        for p in 0..n - 1 {
            for r in p + 1..n {
                let apq = m[[p, r]];
                if apq.abs() <= stop / (n as f64) {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[r, r]];
                let theta = (aqq - app) / (2.0 * apq);
                // Smaller-root tangent keeps the rotation angle below pi/4.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for idx in 0..n {
                    let mip = m[[idx, p]];
                    let miq = m[[idx, r]];
                    m[[idx, p]] = c * mip - s * miq;
                    m[[idx, r]] = s * mip + c * miq;
                }
                for idx in 0..n {
                    let mpi = m[[p, idx]];
                    let mqi = m[[r, idx]];
                    m[[p, idx]] = c * mpi - s * mqi;
                    m[[r, idx]] = s * mpi + c * mqi;
                }
                for idx in 0..n {
                    let qip = q[[idx, p]];
                    let qiq = q[[idx, r]];
                    q[[idx, p]] = c * qip - s * qiq;
                    q[[idx, r]] = s * qip + c * qiq;
                }
            }
        }
    }

    (m.diag().to_owned(), q)
}

/// Symmetrizes a matrix and clips negative eigenvalues at zero.
///
/// Eigenvalues below `-1e-10 * trace` indicate a genuinely non-PSD input;
/// they are clipped like the rest. When the symmetrized matrix is already
/// PSD it is returned untouched to avoid reconstruction noise.
pub fn repair_psd(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut sym = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            sym[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let (vals, q) = symmetric_eigen(&sym);
    if vals.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clipped = vals.mapv(|l| l.max(0.0));
    let mut rebuilt = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for m in 0..n {
                s += q[[i, m]] * clipped[m] * q[[j, m]];
            }
            rebuilt[[i, j]] = s;
        }
    }
    // Exact symmetry despite reconstruction rounding.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (rebuilt[[i, j]] + rebuilt[[j, i]]);
            rebuilt[[i, j]] = v;
            rebuilt[[j, i]] = v;
        }
    }
    rebuilt
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonalizes_simple_matrix() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, q) = symmetric_eigen(&a);
        let mut sorted: Vec<f64> = vals.to_vec();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((sorted[0] - 1.0).abs() < 1e-12);
        assert!((sorted[1] - 3.0).abs() < 1e-12);
        // Reconstruction.
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for m in 0..2 {
                    s += q[[i, m]] * vals[m] * q[[j, m]];
                }
                assert!((s - a[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn repair_clips_negative_eigenvalue() {
        // Eigenvalues 3 and -1.
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        let fixed = repair_psd(&a);
        let (vals, _) = symmetric_eigen(&fixed);
        assert!(vals.iter().all(|&l| l >= -1e-12));
        // The positive eigenvalue survives.
        assert!(vals.iter().any(|&l| (l - 3.0).abs() < 1e-10));
    }

    #[test]
    fn psd_input_is_untouched() {
        let a = array![[2.0, 0.5], [0.5, 1.0]];
        let fixed = repair_psd(&a);
        assert_eq!(fixed, a);
    }
}
