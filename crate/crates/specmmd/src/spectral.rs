//! Top-J eigendecomposition of the scaled Gram matrix, Nystrom eigenfunction
//! values at the sample points, and empirical directional components.
//!
//! The solver is a blocked subspace iteration with Rayleigh-Ritz extraction:
//! repeated multiplication by K improves an oversampled orthonormal basis,
//! and each sweep diagonalizes the projected matrix to read off Ritz pairs
//! and their residuals. Cost per sweep is O(N^2 k) with k = J plus a small
//! oversample, so only the leading part of the spectrum is ever touched.
//! Start vectors are derived from a hash of the matrix dimensions and every
//! reduction order is fixed, which makes repeated calls on the same matrix
//! bitwise identical.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, TwoSample};
use crate::linalg;

/// Relative gap below which adjacent eigenvalues count as numerically tied.
const TIE_REL_GAP: f64 = 1e-9;
/// Fraction of the leading eigenvalue below which a tied value is treated as
/// numerically zero; such directions contribute nothing to the statistic.
const ZERO_REL_FLOOR: f64 = 1e-12;
/// Residual target relative to ||K||_F.
const RESIDUAL_REL_TARGET: f64 = 1e-10;
/// Iteration budget per requested eigenpair.
const SWEEPS_PER_PAIR: usize = 300;

/// Top-J eigenpairs of a scaled Gram matrix: descending eigenvalues and
/// unit-norm eigenvector columns, plus the sample block boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    sigma_sq: Vec<f64>,
    u: Array2<f64>,
    m: usize,
}

impl SpectralBasis {
    /// Number of retained eigenpairs (>= the requested J when a tied group
    /// straddled the truncation boundary).
    pub fn j(&self) -> usize {
        self.sigma_sq.len()
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sigma_sq(&self) -> &[f64] {
        &self.sigma_sq
    }

    /// Eigenvector columns, unit Euclidean norm.
    pub fn u(&self) -> &Array2<f64> {
        &self.u
    }
}

/// The J algebraically largest eigenpairs of K.
///
/// If the truncation boundary falls inside a numerically tied group of
/// nonzero eigenvalues, the whole group is included and J grows accordingly.
/// Fails with a numeric error carrying the worst residual when the iteration
/// budget is exhausted.
pub fn top_eigenpairs(k: &GramMatrix, j: usize) -> Result<SpectralBasis> {
    let n = k.n();
    if j == 0 || j > n {
        return Err(Error::Parameter(format!(
            "truncation level must satisfy 1 <= J <= {n}, got {j}"
        )));
    }
    let mat = k.matrix();
    let frob = linalg::frobenius(mat);
    let tol = RESIDUAL_REL_TARGET * frob.max(f64::MIN_POSITIVE);
    let budget = SWEEPS_PER_PAIR * j;

    let mut k_dim = (j + 8.max(j)).min(n);
    let mut spent = 0usize;
    loop {
        let outcome = iterate(mat, j, k_dim, tol, budget - spent);
        spent += outcome.sweeps;
        match outcome.state {
            IterationState::Converged { theta, ritz } => {
                let keep = widened_count(&theta, j);
                // A tie running into the edge of the computed subspace means
                // the group may extend further; enlarge and re-run.
                if keep == k_dim && k_dim < n {
                    k_dim = (2 * k_dim).min(n);
                    continue;
                }
                let mut u = ritz.slice_move(ndarray::s![.., ..keep]);
                fix_signs(&mut u);
                return Ok(SpectralBasis {
                    sigma_sq: theta[..keep].to_vec(),
                    u,
                    m: k.m(),
                });
            }
            IterationState::Unconverged { worst_residual } => {
                if spent >= budget {
                    return Err(Error::numeric_with_residual(
                        format!(
                            "eigensolver did not reach residual {tol:e} within {budget} sweeps \
                             (worst residual {worst_residual:e})"
                        ),
                        worst_residual,
                    ));
                }
                // Stalled with budget to spare: widen the subspace.
                if k_dim == n {
                    return Err(Error::numeric_with_residual(
                        format!("eigensolver stalled at full subspace (worst residual {worst_residual:e})"),
                        worst_residual,
                    ));
                }
                k_dim = (2 * k_dim).min(n);
            }
        }
    }
}

enum IterationState {
    Converged { theta: Vec<f64>, ritz: Array2<f64> },
    Unconverged { worst_residual: f64 },
}

struct IterationOutcome {
    state: IterationState,
    sweeps: usize,
}

fn iterate(
    mat: &Array2<f64>,
    j: usize,
    k_dim: usize,
    tol: f64,
    max_sweeps: usize,
) -> IterationOutcome {
    let n = mat.nrows();
    let mut fill_state = 0x9e37_79b9u64 ^ ((n as u64) << 24) ^ (k_dim as u64);
    let mut basis = Array2::from_shape_fn((n, k_dim), |_| linalg::unit_uniform(&mut fill_state));
    linalg::orthonormalize(&mut basis, &mut fill_state);

    let mut worst = f64::INFINITY;
    let mut sweeps = 0usize;
    // Stall detection: give up early when the residual stops improving so the
    // caller can enlarge the subspace instead of burning the whole budget.
    let mut best = f64::INFINITY;
    let mut since_improvement = 0usize;

    while sweeps < max_sweeps {
        sweeps += 1;
        let image = mat.dot(&basis); // K B
        let mut projected = basis.t().dot(&image); // B^T K B
        for p in 0..k_dim {
            for q in (p + 1)..k_dim {
                let avg = 0.5 * (projected[[p, q]] + projected[[q, p]]);
                projected[[p, q]] = avg;
                projected[[q, p]] = avg;
            }
        }
        let (theta, s) = linalg::jacobi_eigen_desc(&projected);
        let need = widened_count(&theta, j).min(k_dim);
        let ritz = basis.dot(&s);
        let k_ritz = image.dot(&s);
        worst = 0.0;
        for col in 0..need {
            let mut linf = 0.0f64;
            for r in 0..n {
                linf = linf.max((k_ritz[[r, col]] - theta[col] * ritz[[r, col]]).abs());
            }
            worst = worst.max(linf);
        }
        if worst <= tol {
            return IterationOutcome {
                state: IterationState::Converged { theta, ritz },
                sweeps,
            };
        }
        if worst < 0.9 * best {
            best = worst;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= 15 {
                break;
            }
        }
        basis = image;
        linalg::orthonormalize(&mut basis, &mut fill_state);
    }
    IterationOutcome {
        state: IterationState::Unconverged {
            worst_residual: worst,
        },
        sweeps,
    }
}

/// Number of leading pairs to retain: at least `j`, extended across any
/// numerically tied group of nonzero eigenvalues straddling the boundary.
fn widened_count(theta: &[f64], j: usize) -> usize {
    let mut keep = j.min(theta.len());
    if keep == 0 {
        return 0;
    }
    let zero_floor = theta[0].max(0.0) * ZERO_REL_FLOOR;
    while keep < theta.len() {
        let prev = theta[keep - 1];
        let next = theta[keep];
        if next > zero_floor && prev - next <= TIE_REL_GAP * prev.abs().max(f64::MIN_POSITIVE) {
            keep += 1;
        } else {
            break;
        }
    }
    keep
}

/// Deterministic sign rule: the entry of largest magnitude in each column
/// (lowest index on exact ties) is made positive.
fn fix_signs(u: &mut Array2<f64>) {
    let (n, cols) = u.dim();
    for c in 0..cols {
        let mut pivot = 0usize;
        let mut best = -1.0f64;
        for r in 0..n {
            let mag = u[[r, c]].abs();
            if mag > best {
                best = mag;
                pivot = r;
            }
        }
        if u[[pivot, c]] < 0.0 {
            for r in 0..n {
                u[[r, c]] = -u[[r, c]];
            }
        }
    }
}

/// Nystrom eigenfunction values at the pooled sample points: column j is
/// sqrt(N) U_j, i.e. (phi_j(z_1), ..., phi_j(z_N)).
pub fn nystrom_values(basis: &SpectralBasis) -> Array2<f64> {
    let scale = (basis.n() as f64).sqrt();
    basis.u() * scale
}

/// Empirical directional components d_j = <l, sqrt(N) U_j> under the
/// 1/N-scaled inner product: mean of the X block minus mean of the Y block
/// of the Nystrom values.
pub fn directional_components(basis: &SpectralBasis, sample: &TwoSample) -> Result<Vec<f64>> {
    if basis.n() != sample.total() || basis.m() != sample.m() {
        return Err(Error::Shape(format!(
            "basis is over N={}, m={} but the sample has N={}, m={}",
            basis.n(),
            basis.m(),
            sample.total(),
            sample.m()
        )));
    }
    let scale = (basis.n() as f64).sqrt();
    let m = sample.m();
    let n_y = sample.n();
    let mut out = Vec::with_capacity(basis.j());
    for col in 0..basis.j() {
        let mut sum_x = 0.0;
        for r in 0..m {
            sum_x += basis.u()[[r, col]];
        }
        let mut sum_y = 0.0;
        for r in m..basis.n() {
            sum_y += basis.u()[[r, col]];
        }
        out.push(scale * (sum_x / m as f64 - sum_y / n_y as f64));
    }
    Ok(out)
}
