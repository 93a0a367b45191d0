//! Kernel evaluation, bandwidth heuristics, and scaled Gram-matrix assembly
//! for the pooled two-sample data.
//!
//! The Gram matrix carries the 1/N scaling throughout: entry (i,j) is
//! k(z_i, z_j)/N over the pooled ordering (X rows first, then Y rows).

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The paired data matrices X (m x d) and Y (n x d), stored pooled.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSample {
    pooled: Array2<f64>,
    m: usize,
}

impl TwoSample {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::Shape(format!(
                "column counts differ: X has {}, Y has {}",
                x.ncols(),
                y.ncols()
            )));
        }
        let m = x.nrows();
        let mut pooled = x;
        pooled
            .append(Axis(0), y.view())
            .expect("matching column counts");
        Self::from_pooled(pooled, m)
    }

    /// Pooled matrix with the first `m` rows forming X.
    pub fn from_pooled(pooled: Array2<f64>, m: usize) -> Result<Self> {
        let n = pooled.nrows().saturating_sub(m);
        if m < 2 || n < 2 {
            return Err(Error::Design(format!(
                "both groups need at least 2 rows, got m={m}, n={n}"
            )));
        }
        if let Some((idx, _)) = pooled.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at pooled row {}, column {}",
                idx.0 + 1,
                idx.1 + 1
            )));
        }
        Ok(Self { pooled, m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.pooled.nrows() - self.m
    }

    /// Total pooled size N = m + n.
    pub fn total(&self) -> usize {
        self.pooled.nrows()
    }

    pub fn dim(&self) -> usize {
        self.pooled.ncols()
    }

    /// p-hat = m / N.
    pub fn p_hat(&self) -> f64 {
        self.m as f64 / self.total() as f64
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.pooled.slice(s![..self.m, ..])
    }

    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.pooled.slice(s![self.m.., ..])
    }

    pub fn pooled(&self) -> &Array2<f64> {
        &self.pooled
    }

    /// Contrast vector l: first m entries N/m, last n entries -N/n.
    pub fn contrast(&self) -> Array1<f64> {
        let n_total = self.total() as f64;
        let mut l = Array1::zeros(self.total());
        for i in 0..self.m {
            l[i] = n_total / self.m as f64;
        }
        for i in self.m..self.total() {
            l[i] = -n_total / self.n() as f64;
        }
        l
    }
}

/// Gaussian kernel k(s,t) = exp(-||s-t||^2 / gamma).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma: f64,
}

impl KernelSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 {
            Ok(Self { gamma })
        } else {
            Err(Error::Parameter(format!(
                "kernel bandwidth must be positive, got {gamma}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    Single,
    Multi,
}

/// Ordered list of kernels derived from the pooled median heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    specs: Vec<KernelSpec>,
    mode: KernelMode,
    gamma_med: f64,
}

impl KernelBank {
    pub fn specs(&self) -> &[KernelSpec] {
        &self.specs
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn gamma_med(&self) -> f64 {
        self.gamma_med
    }

    /// Index of the plain median-heuristic kernel within the bank.
    pub fn median_index(&self) -> usize {
        match self.mode {
            KernelMode::Single => 0,
            KernelMode::Multi => 2,
        }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// 1/N-scaled Gram matrix over the pooled sample, with the block boundary m.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: Array2<f64>,
    m: usize,
}

impl GramMatrix {
    /// Wrap a precomputed scaled matrix; validates squareness, the block
    /// boundary, and symmetry within 1e-12.
    pub fn from_scaled_matrix(entries: Array2<f64>, m: usize) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::Shape(format!(
                "gram matrix must be square, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        if m < 2 || n < m + 2 {
            return Err(Error::Design(format!(
                "block boundary m={m} incompatible with N={n} (need m >= 2, n-m >= 2)"
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (entries[[i, j]] - entries[[j, i]]).abs() > 1e-12 {
                    return Err(Error::Data(format!(
                        "matrix not symmetric at ({i},{j}): {} vs {}",
                        entries[[i, j]],
                        entries[[j, i]]
                    )));
                }
            }
        }
        Ok(Self { entries, m })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.entries
    }
}

/// D[i][j] = ||z_i - z_j||^2 over the rows of Z.
///
/// Uses the expansion r_i + r_j - 2 z_i.z_j with one GEMM; negatives from
/// cancellation are clamped and the diagonal is pinned to zero.
pub fn pairwise_sq_dists(z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = z.nrows();
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 points, got {n}")));
    }
    let sq_norms: Vec<f64> = z.rows().into_iter().map(|r| r.dot(&r)).collect();
    let cross = z.dot(&z.t());
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (sq_norms[i] + sq_norms[j] - 2.0 * cross[[i, j]]).max(0.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

/// Median of the N(N-1)/2 strictly-upper-triangular squared distances; an
/// even count averages the two middle order statistics.
pub fn median_heuristic(z: ArrayView2<'_, f64>) -> Result<f64> {
    let d = pairwise_sq_dists(z)?;
    median_from_dists(&d)
}

/// Same as [`median_heuristic`] but reusing a precomputed distance matrix.
pub fn median_from_dists(d: &Array2<f64>) -> Result<f64> {
    let n = d.nrows();
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            upper.push(d[[i, j]]);
        }
    }
    upper.sort_unstable_by(f64::total_cmp);
    let len = upper.len();
    let median = if len % 2 == 1 {
        upper[len / 2]
    } else {
        0.5 * (upper[len / 2 - 1] + upper[len / 2])
    };
    if median <= 0.0 {
        return Err(Error::DegenerateSample(
            "median pairwise squared distance is zero; bandwidth undefined".into(),
        ));
    }
    Ok(median)
}

const MULTI_FACTORS: [f64; 4] = [0.5, std::f64::consts::FRAC_1_SQRT_2, 1.0, 2.0];

/// Kernel bank from the pooled sample: single mode keeps gamma_med, multi
/// mode scales it by {1/2, 1/sqrt(2), 1, 2} in that order.
pub fn build_bank(z: ArrayView2<'_, f64>, mode: KernelMode) -> Result<KernelBank> {
    let gamma_med = median_heuristic(z)?;
    Ok(bank_from_gamma(gamma_med, mode))
}

pub(crate) fn bank_from_gamma(gamma_med: f64, mode: KernelMode) -> KernelBank {
    let specs = match mode {
        KernelMode::Single => vec![KernelSpec { gamma: gamma_med }],
        KernelMode::Multi => MULTI_FACTORS
            .iter()
            .map(|f| KernelSpec {
                gamma: f * gamma_med,
            })
            .collect(),
    };
    KernelBank {
        specs,
        mode,
        gamma_med,
    }
}

/// 1/N-scaled Gram matrix of the pooled sample under `spec`.
pub fn gram(sample: &TwoSample, spec: &KernelSpec) -> Result<GramMatrix> {
    let d = pairwise_sq_dists(sample.pooled().view())?;
    Ok(gram_from_dists(&d, spec.gamma, sample.m()))
}

/// Gram assembly from a precomputed squared-distance matrix.
pub(crate) fn gram_from_dists(d: &Array2<f64>, gamma: f64, m: usize) -> GramMatrix {
    let n = d.nrows();
    let scale = 1.0 / n as f64;
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = scale;
        for j in (i + 1)..n {
            let v = (-d[[i, j]] / gamma).exp() * scale;
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    GramMatrix { entries: k, m }
}

/// Unscaled kernel matrix k(z_i, z_j); the permutation baseline evaluates
/// MMD by index lookups into this.
pub fn raw_kernel_matrix(sample: &TwoSample, spec: &KernelSpec) -> Result<Array2<f64>> {
    let d = pairwise_sq_dists(sample.pooled().view())?;
    Ok(raw_from_dists(&d, spec.gamma))
}

pub(crate) fn raw_from_dists(d: &Array2<f64>, gamma: f64) -> Array2<f64> {
    d.mapv(|v| (-v / gamma).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{sample_matrix, DistSpec, StreamKey};
    use ndarray::array;

    fn toy_sample() -> TwoSample {
        let x = array![[0.0], [1.0]];
        let y = array![[2.0], [4.0]];
        TwoSample::new(x, y).unwrap()
    }

    #[test]
    fn two_sample_contrast_sums_to_zero() {
        let s = toy_sample();
        assert_eq!(s.m(), 2);
        assert_eq!(s.n(), 2);
        assert_eq!(s.total(), 4);
        let l = s.contrast();
        assert!(l.sum().abs() <= 1e-9 * s.total() as f64);
        assert_eq!(l[0], 2.0);
        assert_eq!(l[3], -2.0);
    }

    #[test]
    fn two_sample_rejects_bad_input() {
        let x = array![[0.0], [1.0]];
        let y = array![[2.0]];
        assert!(matches!(
            TwoSample::new(x.clone(), y),
            Err(Error::Design(_))
        ));
        let y = array![[2.0, 3.0], [4.0, 5.0]];
        assert!(matches!(TwoSample::new(x.clone(), y), Err(Error::Shape(_))));
        let y = array![[f64::NAN], [4.0]];
        assert!(matches!(TwoSample::new(x, y), Err(Error::Data(_))));
    }

    #[test]
    fn pairwise_matches_enumeration() {
        let z = array![[0.0], [1.0], [3.0]];
        let d = pairwise_sq_dists(z.view()).unwrap();
        assert_eq!(d[[0, 1]], 1.0);
        assert_eq!(d[[0, 2]], 9.0);
        assert_eq!(d[[1, 2]], 4.0);
        for i in 0..3 {
            assert_eq!(d[[i, i]], 0.0);
        }
    }

    #[test]
    fn pairwise_matches_double_loop_oracle() {
        let z = sample_matrix(&StreamKey::new(3), &DistSpec::StdNormal, 20, 5).unwrap();
        let d = pairwise_sq_dists(z.view()).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let mut acc = 0.0;
                for k in 0..5 {
                    let diff = z[[i, k]] - z[[j, k]];
                    acc += diff * diff;
                }
                assert!((d[[i, j]] - acc).abs() < 1e-10, "mismatch at ({i},{j})");
            }
        }
    }

    #[test]
    fn median_heuristic_enumerated_cases() {
        let z = array![[0.0], [1.0], [3.0]];
        assert_eq!(median_heuristic(z.view()).unwrap(), 4.0);
        let z = array![[0.0], [1.0], [2.0], [4.0]];
        assert_eq!(median_heuristic(z.view()).unwrap(), 4.0);
    }

    #[test]
    fn median_heuristic_degenerate() {
        let z = array![[1.5], [1.5], [1.5]];
        assert!(matches!(
            median_heuristic(z.view()),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn median_heuristic_permutation_invariant() {
        let z = sample_matrix(&StreamKey::new(4), &DistSpec::StdNormal, 15, 3).unwrap();
        let med = median_heuristic(z.view()).unwrap();
        let order = [14, 3, 7, 0, 11, 1, 9, 13, 2, 8, 4, 12, 6, 10, 5];
        let mut permuted = Array2::zeros((15, 3));
        for (dst, &src) in order.iter().enumerate() {
            permuted.row_mut(dst).assign(&z.row(src));
        }
        let med_p = median_heuristic(permuted.view()).unwrap();
        assert_eq!(med.to_bits(), med_p.to_bits());
    }

    #[test]
    fn bank_gammas() {
        let bank = bank_from_gamma(4.0, KernelMode::Multi);
        let gammas: Vec<f64> = bank.specs().iter().map(|s| s.gamma).collect();
        assert_eq!(gammas[0], 2.0);
        assert!((gammas[1] - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(gammas[2], 4.0);
        assert_eq!(gammas[3], 8.0);
        assert_eq!(bank.median_index(), 2);

        let bank = bank_from_gamma(4.0, KernelMode::Single);
        assert_eq!(bank.specs().len(), 1);
        assert_eq!(bank.specs()[0].gamma, 4.0);
        assert_eq!(bank.median_index(), 0);
    }

    #[test]
    fn bank_propagates_degenerate_error() {
        let z = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        assert!(matches!(
            build_bank(z.view(), KernelMode::Multi),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn gram_two_point_values() {
        let s = TwoSample::from_pooled(array![[0.0], [0.0], [1.0], [1.0]], 2).unwrap();
        let g = gram(&s, &KernelSpec::new(1.0).unwrap()).unwrap();
        // N = 4; identical points share k = 1, distance-1 pairs share e^{-1}.
        assert_eq!(g.matrix()[[0, 0]], 0.25);
        assert_eq!(g.matrix()[[0, 1]], 0.25);
        let e1 = (-1.0f64).exp() / 4.0;
        assert!((g.matrix()[[0, 2]] - e1).abs() < 1e-15);
    }

    #[test]
    fn gram_matches_scalar_oracle_and_invariants() {
        let x = sample_matrix(&StreamKey::new(5), &DistSpec::StdNormal, 4, 3).unwrap();
        let y = sample_matrix(&StreamKey::new(6), &DistSpec::StdNormal, 4, 3).unwrap();
        let s = TwoSample::new(x, y).unwrap();
        let spec = KernelSpec::new(2.5).unwrap();
        let g = gram(&s, &spec).unwrap();
        let n = s.total();
        let mut trace = 0.0;
        for i in 0..n {
            trace += g.matrix()[[i, i]];
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..s.dim() {
                    let diff = s.pooled()[[i, k]] - s.pooled()[[j, k]];
                    acc += diff * diff;
                }
                let expected = (-acc / spec.gamma).exp() / n as f64;
                assert!((g.matrix()[[i, j]] - expected).abs() < 1e-12);
                assert!((g.matrix()[[i, j]] - g.matrix()[[j, i]]).abs() <= 1e-12);
            }
        }
        assert!(
            (trace - 1.0).abs() < 1e-12,
            "gaussian gram trace must be 1, got {trace}"
        );
    }

    #[test]
    fn isometry_invariance() {
        // Rotate all rows by an orthogonal transform; distances are unchanged.
        let z = sample_matrix(&StreamKey::new(7), &DistSpec::StdNormal, 10, 2).unwrap();
        let theta = 0.7f64;
        let q = array![[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let zq = z.dot(&q);
        let d = pairwise_sq_dists(z.view()).unwrap();
        let dq = pairwise_sq_dists(zq.view()).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert!((d[[i, j]] - dq[[i, j]]).abs() < 1e-9);
            }
        }
        let m = median_from_dists(&d).unwrap();
        let mq = median_from_dists(&dq).unwrap();
        assert!((m - mq).abs() < 1e-9);
    }
}
