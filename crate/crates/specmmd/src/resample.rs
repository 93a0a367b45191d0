//! Calibration of critical values: multiplier bootstrap over the larger
//! block (mb1), the two-block multiplier bootstrap (mb2), permutation
//! calibration, and p-value computation.
//!
//! Both bootstraps work on centered spectral columns c_j = sigma_j (w_j -
//! mean(w_j)) with w_j the block restriction of sqrt(N) U_j, so a replicate
//! costs O(block * J * C) and never materializes a centered Gram matrix.
//! One multiplier vector is shared by all kernels within a replicate; that
//! coupling is what reproduces the cross-kernel covariance of the limit.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{raw_kernel_matrix, KernelSpec, TwoSample};
use crate::spectral::SpectralBasis;
use crate::statistic::{block_sums_permuted, mmd_u_from_raw};
use crate::stream::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibMethod {
    Mb1,
    Mb2,
    Permutation,
}

impl std::fmt::Display for CalibMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CalibMethod::Mb1 => write!(f, "mb1"),
            CalibMethod::Mb2 => write!(f, "mb2"),
            CalibMethod::Permutation => write!(f, "permutation"),
        }
    }
}

/// Calibration draws from one method; the observed statistic is compared
/// against these by [`p_value`].
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationDraws {
    pub method: CalibMethod,
    pub draws: Vec<f64>,
}

impl CalibrationDraws {
    pub fn b(&self) -> usize {
        self.draws.len()
    }
}

fn check_b(b: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::Parameter(
            "replicate count B must be at least 1".into(),
        ));
    }
    Ok(())
}

fn check_bases(bases: &[SpectralBasis], sample: &TwoSample) -> Result<()> {
    if bases.is_empty() {
        return Err(Error::Design(
            "calibration needs at least one spectral basis".into(),
        ));
    }
    for basis in bases {
        if basis.n() != sample.total() || basis.m() != sample.m() {
            return Err(Error::Shape(format!(
                "basis is over N={}, m={} but the sample has N={}, m={}",
                basis.n(),
                basis.m(),
                sample.total(),
                sample.m()
            )));
        }
    }
    Ok(())
}

/// Centered spectral columns restricted to one sample block, premultiplied
/// by sigma_j.
fn centered_columns(basis: &SpectralBasis, start: usize, len: usize) -> Vec<Vec<f64>> {
    let scale = (basis.n() as f64).sqrt();
    (0..basis.j())
        .map(|col| {
            let sigma = basis.sigma_sq()[col].max(0.0).sqrt();
            let mut c: Vec<f64> = (start..start + len)
                .map(|r| scale * basis.u()[[r, col]])
                .collect();
            let mean = c.iter().sum::<f64>() / len as f64;
            for v in c.iter_mut() {
                *v = sigma * (*v - mean);
            }
            c
        })
        .collect()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-sample multiplier bootstrap plan. Multipliers act on the larger
/// block; if n > m the roles are swapped internally (the procedure's
/// "without loss of generality m >= n").
pub struct Mb1Plan {
    columns: Vec<Vec<Vec<f64>>>, // per kernel, per eigencolumn
    trace_total: f64,
    scale: f64,
    block_len: usize,
    swapped: bool,
}

impl Mb1Plan {
    pub fn new(bases: &[SpectralBasis], sample: &TwoSample) -> Result<Self> {
        check_bases(bases, sample)?;
        let (start, block_len, swapped) = if sample.m() >= sample.n() {
            (0, sample.m(), false)
        } else {
            (sample.m(), sample.n(), true)
        };
        let columns: Vec<Vec<Vec<f64>>> = bases
            .iter()
            .map(|basis| centered_columns(basis, start, block_len))
            .collect();
        let trace_total = columns.iter().flatten().map(|c| sq_norm(c)).sum();
        let p = sample.p_hat();
        let scale = 1.0 / (block_len as f64 * p * (1.0 - p));
        Ok(Self {
            columns,
            trace_total,
            scale,
            block_len,
            swapped,
        })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn swapped(&self) -> bool {
        self.swapped
    }

    /// Replicate value for injected multipliers.
    pub fn replicate(&self, multipliers: &[f64]) -> Result<f64> {
        if multipliers.len() != self.block_len {
            return Err(Error::Shape(format!(
                "expected {} multipliers, got {}",
                self.block_len,
                multipliers.len()
            )));
        }
        let mut quad = 0.0;
        for kernel in &self.columns {
            for c in kernel {
                let proj = dot(multipliers, c);
                quad += proj * proj;
            }
        }
        Ok(self.scale * (quad - self.trace_total))
    }

    /// Closed-form value when the quadratic part vanishes (constant
    /// multipliers): -(sum of squared column norms) * scale.
    pub fn trace_only_value(&self) -> f64 {
        -self.scale * self.trace_total
    }
}

/// One-sample multiplier bootstrap draws; replicate b uses substream(key, b).
pub fn mb_one_sample(
    bases: &[SpectralBasis],
    sample: &TwoSample,
    b: usize,
    key: &StreamKey,
) -> Result<CalibrationDraws> {
    check_b(b)?;
    let plan = Mb1Plan::new(bases, sample)?;
    let mut v = vec![0.0; plan.block_len()];
    let mut draws = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = key.substream(rep as u64).rng();
        for slot in v.iter_mut() {
            *slot = rng.sample(StandardNormal);
        }
        draws.push(plan.replicate(&v)?);
    }
    Ok(CalibrationDraws {
        method: CalibMethod::Mb1,
        draws,
    })
}

/// Two-block multiplier bootstrap plan (both samples carry multipliers).
pub struct Mb2Plan {
    x_columns: Vec<Vec<Vec<f64>>>,
    y_columns: Vec<Vec<Vec<f64>>>,
    trace_x: f64,
    trace_y: f64,
    m: usize,
    n: usize,
    n_total: usize,
}

impl Mb2Plan {
    pub fn new(bases: &[SpectralBasis], sample: &TwoSample) -> Result<Self> {
        check_bases(bases, sample)?;
        let m = sample.m();
        let n = sample.n();
        let x_columns: Vec<Vec<Vec<f64>>> = bases
            .iter()
            .map(|basis| centered_columns(basis, 0, m))
            .collect();
        let y_columns: Vec<Vec<Vec<f64>>> = bases
            .iter()
            .map(|basis| centered_columns(basis, m, n))
            .collect();
        let trace_x = x_columns.iter().flatten().map(|c| sq_norm(c)).sum();
        let trace_y = y_columns.iter().flatten().map(|c| sq_norm(c)).sum();
        Ok(Self {
            x_columns,
            y_columns,
            trace_x,
            trace_y,
            m,
            n,
            n_total: sample.total(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Replicate value N (A + B - 2C) for injected multiplier vectors.
    pub fn replicate(&self, v: &[f64], r: &[f64]) -> Result<f64> {
        if v.len() != self.m || r.len() != self.n {
            return Err(Error::Shape(format!(
                "expected multiplier lengths ({}, {}), got ({}, {})",
                self.m,
                self.n,
                v.len(),
                r.len()
            )));
        }
        let m = self.m as f64;
        let n = self.n as f64;
        let mut quad_x = 0.0;
        let mut quad_y = 0.0;
        let mut cross = 0.0;
        for (kernel_x, kernel_y) in self.x_columns.iter().zip(&self.y_columns) {
            for (cx, cy) in kernel_x.iter().zip(kernel_y) {
                let px = dot(v, cx);
                let py = dot(r, cy);
                quad_x += px * px;
                quad_y += py * py;
                cross += px * py;
            }
        }
        let a_term = (quad_x - self.trace_x) / (m * (m - 1.0));
        let b_term = (quad_y - self.trace_y) / (n * (n - 1.0));
        let c_term = cross / (m * n);
        Ok(self.n_total as f64 * (a_term + b_term - 2.0 * c_term))
    }

    /// Closed-form value for constant multipliers (quadratics and the cross
    /// term vanish; only the trace subtraction remains).
    pub fn trace_only_value(&self) -> f64 {
        let m = self.m as f64;
        let n = self.n as f64;
        self.n_total as f64 * (-self.trace_x / (m * (m - 1.0)) - self.trace_y / (n * (n - 1.0)))
    }
}

/// Two-block multiplier bootstrap draws; replicate b uses substream(key, b),
/// drawing v then r from the same stream.
pub fn mb_two_sample(
    bases: &[SpectralBasis],
    sample: &TwoSample,
    b: usize,
    key: &StreamKey,
) -> Result<CalibrationDraws> {
    check_b(b)?;
    let plan = Mb2Plan::new(bases, sample)?;
    let mut v = vec![0.0; plan.m()];
    let mut r = vec![0.0; plan.n()];
    let mut draws = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = key.substream(rep as u64).rng();
        for slot in v.iter_mut() {
            *slot = rng.sample(StandardNormal);
        }
        for slot in r.iter_mut() {
            *slot = rng.sample(StandardNormal);
        }
        draws.push(plan.replicate(&v, &r)?);
    }
    Ok(CalibrationDraws {
        method: CalibMethod::Mb2,
        draws,
    })
}

/// Permutation calibration of the full unbiased MMD: the raw kernel matrix
/// is built once, each replicate relabels the pooled indices uniformly at
/// random and re-evaluates the statistic by lookups.
pub fn permutation_mmd(
    sample: &TwoSample,
    spec: &KernelSpec,
    b: usize,
    key: &StreamKey,
) -> Result<CalibrationDraws> {
    check_b(b)?;
    let raw = raw_kernel_matrix(sample, spec)?;
    Ok(permutation_mmd_from_raw(&raw, sample.m(), b, key))
}

pub(crate) fn permutation_mmd_from_raw(
    raw: &Array2<f64>,
    m: usize,
    b: usize,
    key: &StreamKey,
) -> CalibrationDraws {
    let n_total = raw.nrows();
    let mut assignment: Vec<usize> = (0..n_total).collect();
    let mut draws = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = key.substream(rep as u64).rng();
        assignment.shuffle(&mut rng);
        draws.push(mmd_u_from_raw(raw, m, &assignment));
    }
    CalibrationDraws {
        method: CalibMethod::Permutation,
        draws,
    }
}

/// Permutation calibration of the scaled truncated statistic (cross-check
/// variant). Relabeling permutes pooled coordinates, so the eigenbasis is
/// fixed and each replicate only recomputes block sums: exactly the value
/// full recomputation would give, at O(N J C) per replicate.
pub fn permutation_truncated(
    bases: &[SpectralBasis],
    sample: &TwoSample,
    b: usize,
    key: &StreamKey,
) -> Result<CalibrationDraws> {
    check_b(b)?;
    check_bases(bases, sample)?;
    let m = sample.m();
    let n_total = sample.total();
    let m_f = m as f64;
    let n_f = sample.n() as f64;
    let mut assignment: Vec<usize> = (0..n_total).collect();
    let mut draws = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = key.substream(rep as u64).rng();
        assignment.shuffle(&mut rng);
        let mut total = 0.0;
        for basis in bases {
            for col in 0..basis.j() {
                let s = block_sums_permuted(basis, col, &assignment, m);
                let term = (s.a * s.a - s.qx) / (m_f * (m_f - 1.0))
                    + (s.b * s.b - s.qy) / (n_f * (n_f - 1.0))
                    - 2.0 * s.a * s.b / (m_f * n_f);
                total += basis.sigma_sq()[col] * term;
            }
        }
        draws.push(n_total as f64 * total);
    }
    Ok(CalibrationDraws {
        method: CalibMethod::Permutation,
        draws,
    })
}

/// Add-one p-value: (1 + #{draws >= observed}) / (B + 1); ties count as >=.
pub fn p_value(observed: f64, draws: &CalibrationDraws) -> Result<f64> {
    if !observed.is_finite() {
        return Err(Error::numeric(format!(
            "observed statistic is not finite: {observed}"
        )));
    }
    if draws.draws.is_empty() {
        return Err(Error::Parameter(
            "p-value needs at least one calibration draw".into(),
        ));
    }
    let count = draws.draws.iter().filter(|&&d| d >= observed).count();
    Ok((1 + count) as f64 / (draws.b() + 1) as f64)
}
