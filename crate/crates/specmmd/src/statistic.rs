//! Truncated per-kernel statistics, multi-kernel aggregation, and the full
//! unbiased MMD baseline.
//!
//! Nothing here materializes the low-rank N K-tilde blocks: with
//! w_j = sqrt(N) U_j and per-block sums
//!   a_j = sum over X of w_j,   b_j = sum over Y of w_j,
//!   qx_j = sum over X of w_j^2, qy_j = sum over Y of w_j^2,
//! the truncated unbiased statistic is
//!   T = sum_j sigma_j^2 [ (a_j^2 - qx_j)/(m(m-1)) + (b_j^2 - qy_j)/(n(n-1))
//!                         - 2 a_j b_j/(m n) ],
//! and the biased version is sum_j sigma_j^2 (a_j/m - b_j/n)^2. Both are
//! O(N J) given the basis; the materialized form survives as a test oracle.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{raw_kernel_matrix, KernelSpec, TwoSample};
use crate::spectral::{directional_components, SpectralBasis};

/// Per-kernel statistic values plus spectral diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct KernelStat {
    pub gamma: f64,
    pub t_unbiased: f64,
    pub t_biased: f64,
    pub j_used: usize,
    pub sigma_sq: Vec<f64>,
    pub d_hat: Vec<f64>,
}

/// Multi-kernel aggregate: the sum of per-kernel unbiased statistics and its
/// N-scaled version handed to calibration.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateStat {
    pub t_total: f64,
    pub scaled: f64,
    pub per_kernel: Vec<KernelStat>,
}

pub(crate) struct BlockSums {
    pub a: f64,
    pub b: f64,
    pub qx: f64,
    pub qy: f64,
}

/// Block sums of sqrt(N) U_col over an arbitrary relabeling: `assignment`
/// lists the pooled indices whose first `m` entries play the X role.
pub(crate) fn block_sums_permuted(
    basis: &SpectralBasis,
    col: usize,
    assignment: &[usize],
    m: usize,
) -> BlockSums {
    let scale = (basis.n() as f64).sqrt();
    let u = basis.u();
    let mut a = 0.0;
    let mut qx = 0.0;
    for &idx in &assignment[..m] {
        let w = scale * u[[idx, col]];
        a += w;
        qx += w * w;
    }
    let mut b = 0.0;
    let mut qy = 0.0;
    for &idx in &assignment[m..] {
        let w = scale * u[[idx, col]];
        b += w;
        qy += w * w;
    }
    BlockSums { a, b, qx, qy }
}

fn block_sums(basis: &SpectralBasis, col: usize) -> BlockSums {
    let scale = (basis.n() as f64).sqrt();
    let u = basis.u();
    let m = basis.m();
    let mut a = 0.0;
    let mut qx = 0.0;
    for r in 0..m {
        let w = scale * u[[r, col]];
        a += w;
        qx += w * w;
    }
    let mut b = 0.0;
    let mut qy = 0.0;
    for r in m..basis.n() {
        let w = scale * u[[r, col]];
        b += w;
        qy += w * w;
    }
    BlockSums { a, b, qx, qy }
}

fn check_basis_sample(basis: &SpectralBasis, sample: &TwoSample) -> Result<()> {
    if basis.n() != sample.total() || basis.m() != sample.m() {
        return Err(Error::Shape(format!(
            "basis is over N={}, m={} but the sample has N={}, m={}",
            basis.n(),
            basis.m(),
            sample.total(),
            sample.m()
        )));
    }
    Ok(())
}

/// Truncated unbiased per-kernel statistic.
pub fn truncated_unbiased(basis: &SpectralBasis, sample: &TwoSample) -> Result<f64> {
    check_basis_sample(basis, sample)?;
    let m = sample.m() as f64;
    let n = sample.n() as f64;
    if sample.m() < 2 || sample.n() < 2 {
        return Err(Error::Design(
            "unbiased statistic needs m >= 2 and n >= 2".into(),
        ));
    }
    let mut total = 0.0;
    for col in 0..basis.j() {
        let s = block_sums(basis, col);
        let term = (s.a * s.a - s.qx) / (m * (m - 1.0)) + (s.b * s.b - s.qy) / (n * (n - 1.0))
            - 2.0 * s.a * s.b / (m * n);
        total += basis.sigma_sq()[col] * term;
    }
    Ok(total)
}

/// Truncated biased per-kernel statistic: sum_j sigma_j^2 d_j^2.
pub fn truncated_biased(basis: &SpectralBasis, sample: &TwoSample) -> Result<f64> {
    check_basis_sample(basis, sample)?;
    let m = sample.m() as f64;
    let n = sample.n() as f64;
    let mut total = 0.0;
    for col in 0..basis.j() {
        let s = block_sums(basis, col);
        let d = s.a / m - s.b / n;
        total += basis.sigma_sq()[col] * d * d;
    }
    Ok(total)
}

/// Assemble per-kernel diagnostics for one basis.
pub fn kernel_stat(basis: &SpectralBasis, sample: &TwoSample, gamma: f64) -> Result<KernelStat> {
    Ok(KernelStat {
        gamma,
        t_unbiased: truncated_unbiased(basis, sample)?,
        t_biased: truncated_biased(basis, sample)?,
        j_used: basis.j(),
        sigma_sq: basis.sigma_sq().to_vec(),
        d_hat: directional_components(basis, sample)?,
    })
}

/// Aggregate across kernels: t_total = sum of per-kernel unbiased values,
/// scaled = N * t_total.
pub fn aggregate(per_kernel: Vec<KernelStat>, n_total: usize) -> Result<AggregateStat> {
    if per_kernel.is_empty() {
        return Err(Error::Design("aggregate needs at least one kernel".into()));
    }
    let t_total: f64 = per_kernel.iter().map(|k| k.t_unbiased).sum();
    Ok(AggregateStat {
        t_total,
        scaled: n_total as f64 * t_total,
        per_kernel,
    })
}

/// Standard unbiased MMD^2 estimator from raw (unscaled) kernel sums.
pub fn mmd_u_full(sample: &TwoSample, spec: &KernelSpec) -> Result<f64> {
    let raw = raw_kernel_matrix(sample, spec)?;
    let identity: Vec<usize> = (0..sample.total()).collect();
    Ok(mmd_u_from_raw(&raw, sample.m(), &identity))
}

/// Unbiased MMD^2 over a relabeled pooled sample: the first `m` entries of
/// `assignment` are the X indices into the raw kernel matrix.
pub fn mmd_u_from_raw(raw: &Array2<f64>, m: usize, assignment: &[usize]) -> f64 {
    let n_total = assignment.len();
    let n = n_total - m;
    let (xs, ys) = assignment.split_at(m);
    let mut kxx = 0.0;
    for (p, &i) in xs.iter().enumerate() {
        for &j in &xs[p + 1..] {
            kxx += raw[[i, j]];
        }
    }
    let mut kyy = 0.0;
    for (p, &i) in ys.iter().enumerate() {
        for &j in &ys[p + 1..] {
            kyy += raw[[i, j]];
        }
    }
    let mut kxy = 0.0;
    for &i in xs {
        for &j in ys {
            kxy += raw[[i, j]];
        }
    }
    let m_f = m as f64;
    let n_f = n as f64;
    2.0 * kxx / (m_f * (m_f - 1.0)) + 2.0 * kyy / (n_f * (n_f - 1.0)) - 2.0 * kxy / (m_f * n_f)
}
