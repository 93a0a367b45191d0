//! Cross-checks of the iterative eigensolver against an independent dense
//! decomposition (nalgebra), plus the Nystrom eigen-equation identity and
//! the dense-oracle route for directional components.

use nalgebra::DMatrix;
use ndarray::{array, Array2};
use specmmd::kernel::{gram, KernelSpec, TwoSample};
use specmmd::spectral::{directional_components, nystrom_values, top_eigenpairs};
use specmmd::stream::{sample_matrix, DistSpec, StreamKey};

/// Dense symmetric eigendecomposition, eigenvalues descending.
fn dense_eigen_desc(k: &Array2<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = k.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| k[[i, j]]);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&c| (0..n).map(|r| eig.eigenvectors[(r, c)]).collect())
        .collect();
    (values, vectors)
}

fn random_sample(seed: u64, m: usize, n: usize, d: usize) -> TwoSample {
    let x = sample_matrix(&StreamKey::new(seed), &DistSpec::StdNormal, m, d).unwrap();
    let y = sample_matrix(&StreamKey::new(seed + 5555), &DistSpec::StdNormal, n, d).unwrap();
    TwoSample::new(x, y).unwrap()
}

#[test]
fn eigenpairs_match_dense_oracle() {
    for (seed, m, n, d, gamma, j) in [
        (1u64, 6usize, 6usize, 3usize, 1.0f64, 4usize),
        (2, 10, 14, 5, 2.0, 4),
        (3, 40, 24, 8, 4.0, 6),
        (4, 64, 64, 10, 6.0, 4),
    ] {
        let sample = random_sample(seed, m, n, d);
        let k = gram(&sample, &KernelSpec::new(gamma).unwrap()).unwrap();
        let basis = top_eigenpairs(&k, j).unwrap();
        let (dense_vals, dense_vecs) = dense_eigen_desc(k.matrix());
        let n_total = sample.total();

        for col in 0..j {
            assert!(
                (basis.sigma_sq()[col] - dense_vals[col]).abs() <= 1e-8,
                "seed {seed}: eigenvalue {col}: {} vs dense {}",
                basis.sigma_sq()[col],
                dense_vals[col]
            );
            // Span agreement; near-degenerate pairs are compared through the
            // group projector instead of individual vectors.
            let gap_prev = if col == 0 {
                f64::INFINITY
            } else {
                dense_vals[col - 1] - dense_vals[col]
            };
            let gap_next = if col + 1 < n_total {
                dense_vals[col] - dense_vals[col + 1]
            } else {
                f64::INFINITY
            };
            if gap_prev.min(gap_next) > 1e-7 {
                let dot: f64 = (0..n_total)
                    .map(|r| basis.u()[[r, col]] * dense_vecs[col][r])
                    .sum();
                assert!(
                    (dot.abs() - 1.0).abs() <= 1e-6,
                    "seed {seed}: eigenvector {col} misaligned, |dot| = {}",
                    dot.abs()
                );
            }
        }
    }
}

#[test]
fn nystrom_values_satisfy_eigen_equation_at_sample_points() {
    let sample = random_sample(9, 12, 10, 4);
    let spec = KernelSpec::new(3.0).unwrap();
    let k = gram(&sample, &spec).unwrap();
    let basis = top_eigenpairs(&k, 3).unwrap();
    let nys = nystrom_values(&basis);
    let n = sample.total();
    let frob = k.matrix().iter().map(|v| v * v).sum::<f64>().sqrt();

    // (1/N) sum_i k(z_l, z_i) phi_j(z_i) = sigma_j^2 phi_j(z_l): the left side
    // is the scaled-Gram action on the Nystrom column.
    for j in 0..basis.j() {
        for l in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += k.matrix()[[l, i]] * nys[[i, j]];
            }
            let rhs = basis.sigma_sq()[j] * nys[[l, j]];
            assert!(
                (acc - rhs).abs() <= 1e-8 * frob,
                "eigen-equation residual {} at point {l}, direction {j}",
                (acc - rhs).abs()
            );
        }
    }

    // Orthonormality under the 1/N-scaled inner product.
    for a in 0..basis.j() {
        for b in 0..basis.j() {
            let dot: f64 = (0..n).map(|r| nys[[r, a]] * nys[[r, b]]).sum::<f64>() / n as f64;
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((dot - target).abs() <= 1e-8);
        }
    }
}

#[test]
fn directional_component_four_point_dense_route() {
    // {0, 1 | 2, 4} in R^1, gamma = 1: d_1 from the production path equals
    // <l, sqrt(N) U_1>/N with U_1 taken from the dense decomposition.
    let sample = TwoSample::from_pooled(array![[0.0], [1.0], [2.0], [4.0]], 2).unwrap();
    let k = gram(&sample, &KernelSpec::new(1.0).unwrap()).unwrap();
    let basis = top_eigenpairs(&k, 1).unwrap();
    let d_hat = directional_components(&basis, &sample).unwrap()[0];

    let (_, dense_vecs) = dense_eigen_desc(k.matrix());
    let mut u1 = dense_vecs[0].clone();
    // Align the dense vector with the production sign rule: largest-magnitude
    // entry positive.
    let pivot = (0..4)
        .max_by(|&a, &b| u1[a].abs().total_cmp(&u1[b].abs()))
        .unwrap();
    if u1[pivot] < 0.0 {
        for v in u1.iter_mut() {
            *v = -*v;
        }
    }
    let l = sample.contrast();
    let sqrt_n = 2.0; // sqrt(4)
    let dense_d: f64 = (0..4).map(|i| l[i] * sqrt_n * u1[i]).sum::<f64>() / 4.0;
    assert!(
        (d_hat - dense_d).abs() <= 1e-10,
        "production {d_hat} vs dense oracle {dense_d}"
    );
}

#[test]
fn large_j_requests_track_dense_spectrum() {
    // J close to N exercises the full-subspace path.
    let sample = random_sample(12, 10, 8, 3);
    let k = gram(&sample, &KernelSpec::new(2.0).unwrap()).unwrap();
    let basis = top_eigenpairs(&k, sample.total()).unwrap();
    let (dense_vals, _) = dense_eigen_desc(k.matrix());
    for (a, b) in basis.sigma_sq().iter().zip(&dense_vals) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
    // A Gaussian Gram is positive semidefinite: the smallest eigenvalue may
    // only dip below zero by rounding (trace is 1 here).
    assert!(*basis.sigma_sq().last().unwrap() >= -1e-9);
}
