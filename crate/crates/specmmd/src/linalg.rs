//! Small dense linear-algebra kernels used by the spectral module. All
//! routines are serial and deterministic: fixed sweep orders, fixed summation
//! orders, pseudo-random vectors from a counter, never from global RNG state.

use ndarray::Array2;

/// SplitMix64 step; used to derive start vectors from dimension hashes.
pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform in (-1, 1) from a SplitMix64 stream.
pub(crate) fn unit_uniform(state: &mut u64) -> f64 {
    let bits = splitmix64(state) >> 11; // 53 bits
    2.0 * (bits as f64 / (1u64 << 53) as f64) - 1.0
}

pub(crate) fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order with the matching eigenvector
/// columns. Ties keep the sweep's own ordering (stable sort), so the result
/// is deterministic for identical input.
pub(crate) fn jacobi_eigen_desc(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "jacobi_eigen_desc needs a square matrix");
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);

    let off = |m: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[[i, j]] * m[[i, j]];
            }
        }
        s
    };

    let scale = frobenius(a).max(f64::MIN_POSITIVE);
    let tol = (1e-15 * scale) * (1e-15 * scale);
    for _sweep in 0..64 {
        if off(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values: Vec<f64> = order.iter().map(|&i| m[[i, i]]).collect();
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[[k, dst]] = v[[k, src]];
        }
    }
    (values, vectors)
}

/// In-place modified Gram-Schmidt with re-orthogonalization. Columns that
/// collapse (rank deficiency) are replaced by deterministic pseudo-random
/// vectors drawn from `fill_state` and orthogonalized against the rest.
pub(crate) fn orthonormalize(b: &mut Array2<f64>, fill_state: &mut u64) {
    let (n, k) = b.dim();
    for col in 0..k {
        let mut attempts = 0;
        loop {
            // Two MGS passes against the already-orthonormal prefix.
            for _ in 0..2 {
                for prev in 0..col {
                    let mut dot = 0.0;
                    for r in 0..n {
                        dot += b[[r, prev]] * b[[r, col]];
                    }
                    for r in 0..n {
                        b[[r, col]] -= dot * b[[r, prev]];
                    }
                }
            }
            let norm = (0..n)
                .map(|r| b[[r, col]] * b[[r, col]])
                .sum::<f64>()
                .sqrt();
            if norm > 1e-12 {
                for r in 0..n {
                    b[[r, col]] /= norm;
                }
                break;
            }
            attempts += 1;
            assert!(
                attempts <= 64,
                "orthonormalize: could not repair a deficient column"
            );
            for r in 0..n {
                b[[r, col]] = unit_uniform(fill_state);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_two_by_two() {
        let a = array![[0.5, 0.3], [0.3, 0.5]];
        let (vals, vecs) = jacobi_eigen_desc(&a);
        assert!((vals[0] - 0.8).abs() < 1e-12);
        assert!((vals[1] - 0.2).abs() < 1e-12);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert!((vecs[[0, 0]].abs() - inv_sqrt2).abs() < 1e-12);
        assert!((vecs[[1, 0]].abs() - inv_sqrt2).abs() < 1e-12);
        // Second column is the (1,-1) direction.
        assert!((vecs[[0, 1]] + vecs[[1, 1]]).abs() < 1e-12);
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric() {
        let mut state = 123u64;
        let n = 12;
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = unit_uniform(&mut state);
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        let (vals, vecs) = jacobi_eigen_desc(&a);
        // A v_j = lambda_j v_j
        for j in 0..n {
            for i in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += a[[i, k]] * vecs[[k, j]];
                }
                assert!(
                    (acc - vals[j] * vecs[[i, j]]).abs() < 1e-9,
                    "residual at ({i},{j})"
                );
            }
        }
        // Orthonormal columns.
        for p in 0..n {
            for q in 0..n {
                let dot: f64 = (0..n).map(|r| vecs[[r, p]] * vecs[[r, q]]).sum();
                let target = if p == q { 1.0 } else { 0.0 };
                assert!((dot - target).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn orthonormalize_repairs_rank_deficiency() {
        let mut b = Array2::<f64>::zeros((5, 3));
        for r in 0..5 {
            b[[r, 0]] = 1.0;
            b[[r, 1]] = 2.0; // parallel to column 0
            b[[r, 2]] = (r as f64) - 2.0;
        }
        let mut state = 7u64;
        orthonormalize(&mut b, &mut state);
        for p in 0..3 {
            for q in 0..3 {
                let dot: f64 = (0..5).map(|r| b[[r, p]] * b[[r, q]]).sum();
                let target = if p == q { 1.0 } else { 0.0 };
                assert!((dot - target).abs() < 1e-10, "B^T B [{p}][{q}] = {dot}");
            }
        }
    }
}
