//! End-to-end test runner: bandwidths -> Gram -> eigenpairs -> statistic ->
//! calibration -> p-value, with per-phase wall-clock timing and full
//! provenance.
//!
//! The observed statistic and the calibration draws always live on the same
//! scale: N * T_hat for the spectral statistic (both bootstraps are built on
//! that limit's scale), and N * MMD^2_u for the permutation baseline (a
//! common positive factor on both sides, so the p-value is unchanged).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    bank_from_gamma, gram_from_dists, median_from_dists, pairwise_sq_dists, raw_from_dists,
    KernelMode, TwoSample,
};
use crate::resample::{
    mb_one_sample, mb_two_sample, p_value, permutation_mmd_from_raw, permutation_truncated,
    CalibMethod, CalibrationDraws,
};
use crate::spectral::top_eigenpairs;
use crate::statistic::{aggregate, kernel_stat, mmd_u_from_raw, KernelStat};
use crate::stream::StreamKey;

/// Which statistic drives the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    /// Spectrally truncated multi/single-kernel statistic.
    Spectral,
    /// Full unbiased MMD with the median-heuristic kernel (baseline).
    Mmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub statistic: StatisticKind,
    pub kernels: KernelMode,
    pub calibration: CalibMethod,
    pub j: usize,
    pub b: usize,
    pub alpha: f64,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            statistic: StatisticKind::Spectral,
            kernels: KernelMode::Multi,
            calibration: CalibMethod::Mb1,
            j: 1,
            b: 500,
            alpha: 0.05,
        }
    }
}

impl TestOptions {
    fn validate(&self) -> Result<()> {
        if self.j == 0 {
            return Err(Error::Parameter(
                "truncation level J must be at least 1".into(),
            ));
        }
        if self.b == 0 {
            return Err(Error::Parameter(
                "calibration size B must be at least 1".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.statistic == StatisticKind::Mmd && self.calibration != CalibMethod::Permutation {
            return Err(Error::Parameter(
                "the MMD baseline is calibrated by permutation only; pass --calibration permutation".into(),
            ));
        }
        Ok(())
    }
}

/// Wall-clock seconds per pipeline phase.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhaseTimings {
    pub gram_s: f64,
    pub eigen_s: f64,
    pub calibrate_s: f64,
    pub total_s: f64,
}

/// Everything needed to reproduce a result.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub stream_path: Vec<u64>,
    pub statistic: StatisticKind,
    pub kernels: KernelMode,
    pub calibration: CalibMethod,
    pub gamma_med: f64,
    pub gammas: Vec<f64>,
    pub j_requested: usize,
    pub b: usize,
    pub m: usize,
    pub n: usize,
    pub d: usize,
    /// mb1 multiplies the larger block; true when that was Y.
    pub blocks_swapped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub statistic_scaled: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub per_kernel: Vec<KernelStat>,
    pub draws: CalibrationDraws,
    pub timing: PhaseTimings,
    pub provenance: Provenance,
}

/// Run one two-sample test. All randomness (multipliers, permutations)
/// derives from `key`.
pub fn run_test(sample: &TwoSample, opts: &TestOptions, key: &StreamKey) -> Result<TestResult> {
    opts.validate()?;
    let total_clock = Instant::now();

    let gram_clock = Instant::now();
    let dists = pairwise_sq_dists(sample.pooled().view())?;
    let gamma_med = median_from_dists(&dists)?;
    let n_total = sample.total();

    match opts.statistic {
        StatisticKind::Spectral => {
            let bank = bank_from_gamma(gamma_med, opts.kernels);
            let grams: Vec<_> = bank
                .specs()
                .iter()
                .map(|ks| gram_from_dists(&dists, ks.gamma, sample.m()))
                .collect();
            let gram_s = gram_clock.elapsed().as_secs_f64();

            let eigen_clock = Instant::now();
            let mut bases = Vec::with_capacity(grams.len());
            for gram in &grams {
                bases.push(top_eigenpairs(gram, opts.j)?);
            }
            let eigen_s = eigen_clock.elapsed().as_secs_f64();

            let mut per_kernel = Vec::with_capacity(bases.len());
            for (basis, ks) in bases.iter().zip(bank.specs()) {
                per_kernel.push(kernel_stat(basis, sample, ks.gamma)?);
            }
            let agg = aggregate(per_kernel, n_total)?;

            let calibrate_clock = Instant::now();
            let draws = match opts.calibration {
                CalibMethod::Mb1 => mb_one_sample(&bases, sample, opts.b, key)?,
                CalibMethod::Mb2 => mb_two_sample(&bases, sample, opts.b, key)?,
                CalibMethod::Permutation => permutation_truncated(&bases, sample, opts.b, key)?,
            };
            let calibrate_s = calibrate_clock.elapsed().as_secs_f64();

            let p = p_value(agg.scaled, &draws)?;
            Ok(TestResult {
                statistic_scaled: agg.scaled,
                p_value: p,
                alpha: opts.alpha,
                reject: p <= opts.alpha,
                per_kernel: agg.per_kernel,
                draws,
                timing: PhaseTimings {
                    gram_s,
                    eigen_s,
                    calibrate_s,
                    total_s: total_clock.elapsed().as_secs_f64(),
                },
                provenance: Provenance {
                    seed: key.root_seed(),
                    stream_path: key.path().to_vec(),
                    statistic: opts.statistic,
                    kernels: opts.kernels,
                    calibration: opts.calibration,
                    gamma_med,
                    gammas: bank.specs().iter().map(|k| k.gamma).collect(),
                    j_requested: opts.j,
                    b: opts.b,
                    m: sample.m(),
                    n: sample.n(),
                    d: sample.dim(),
                    blocks_swapped: opts.calibration == CalibMethod::Mb1 && sample.n() > sample.m(),
                },
            })
        }
        StatisticKind::Mmd => {
            let raw = raw_from_dists(&dists, gamma_med);
            let gram_s = gram_clock.elapsed().as_secs_f64();
            let identity: Vec<usize> = (0..n_total).collect();
            let observed = mmd_u_from_raw(&raw, sample.m(), &identity);

            let calibrate_clock = Instant::now();
            let mut draws = permutation_mmd_from_raw(&raw, sample.m(), opts.b, key);
            let calibrate_s = calibrate_clock.elapsed().as_secs_f64();

            // Common N factor on both sides to match the spectral scale.
            let scaled_observed = n_total as f64 * observed;
            for draw in draws.draws.iter_mut() {
                *draw *= n_total as f64;
            }
            let p = p_value(scaled_observed, &draws)?;
            Ok(TestResult {
                statistic_scaled: scaled_observed,
                p_value: p,
                alpha: opts.alpha,
                reject: p <= opts.alpha,
                per_kernel: Vec::new(),
                draws,
                timing: PhaseTimings {
                    gram_s,
                    eigen_s: 0.0,
                    calibrate_s,
                    total_s: total_clock.elapsed().as_secs_f64(),
                },
                provenance: Provenance {
                    seed: key.root_seed(),
                    stream_path: key.path().to_vec(),
                    statistic: opts.statistic,
                    kernels: KernelMode::Single,
                    calibration: CalibMethod::Permutation,
                    gamma_med,
                    gammas: vec![gamma_med],
                    j_requested: opts.j,
                    b: opts.b,
                    m: sample.m(),
                    n: sample.n(),
                    d: sample.dim(),
                    blocks_swapped: false,
                },
            })
        }
    }
}
