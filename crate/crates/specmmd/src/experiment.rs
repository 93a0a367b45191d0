//! Monte Carlo experiment runner: rejection-rate estimation over a DGP +
//! method grid, and deterministic CSV emission.
//!
//! Replication r derives everything from `substream(seed, r)`, so runs are
//! reproducible at any worker count: replications execute in parallel and
//! land in fixed slots, and all reductions happen in index order.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{generate, DgpSpec};
use crate::error::{Error, Result};
use crate::kernel::{
    bank_from_gamma, gram_from_dists, median_from_dists, pairwise_sq_dists, raw_from_dists,
    KernelMode,
};
use crate::resample::{
    mb_one_sample, mb_two_sample, p_value, permutation_mmd_from_raw, permutation_truncated,
};
use crate::spectral::{top_eigenpairs, SpectralBasis};
use crate::statistic::{mmd_u_from_raw, truncated_unbiased};
use crate::stream::StreamKey;

/// Test methods available to experiments. `multi`/`single` use the first
/// multiplier bootstrap; `_mb2` the two-block variant; `_permutation` the
/// permutation cross-check of the truncated statistic; `mmd_permutation` is
/// the full-MMD baseline with permutation critical values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Multi,
    Single,
    MmdPermutation,
    MultiMb2,
    SingleMb2,
    MultiPermutation,
    SinglePermutation,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Multi => "multi",
            Method::Single => "single",
            Method::MmdPermutation => "mmd_permutation",
            Method::MultiMb2 => "multi_mb2",
            Method::SingleMb2 => "single_mb2",
            Method::MultiPermutation => "multi_permutation",
            Method::SinglePermutation => "single_permutation",
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            Method::Multi => 1,
            Method::Single => 2,
            Method::MmdPermutation => 3,
            Method::MultiMb2 => 4,
            Method::SingleMb2 => 5,
            Method::MultiPermutation => 6,
            Method::SinglePermutation => 7,
        }
    }

    fn uses_multi_bank(self) -> bool {
        matches!(
            self,
            Method::Multi | Method::MultiMb2 | Method::MultiPermutation
        )
    }

    fn uses_single_bank(self) -> bool {
        matches!(
            self,
            Method::Single | Method::SingleMb2 | Method::SinglePermutation
        )
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_j() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.05
}

fn default_b() -> usize {
    500
}

/// One experiment: a DGP, the methods to run on it, and the Monte Carlo
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dgp: DgpSpec,
    pub methods: Vec<Method>,
    #[serde(default = "default_j")]
    pub j: usize,
    #[serde(default = "default_b")]
    pub b: usize,
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.methods.is_empty() {
            return Err(Error::Design("experiment needs at least one method".into()));
        }
        if self.replications == 0 {
            return Err(Error::Parameter("replications must be at least 1".into()));
        }
        if self.b == 0 {
            return Err(Error::Parameter(
                "calibration size B must be at least 1".into(),
            ));
        }
        if self.j == 0 {
            return Err(Error::Parameter(
                "truncation level J must be at least 1".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Rejection-rate estimate for one method.
#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub rejections: usize,
    pub replications: usize,
    pub rejection_rate: f64,
    /// Monte Carlo standard error sqrt(r (1-r) / reps).
    pub mc_se: f64,
    pub seconds: f64,
}

/// Per-experiment Monte Carlo result.
#[derive(Debug, Clone, Serialize)]
pub struct RejectionReport {
    pub per_method: Vec<MethodReport>,
    pub total_seconds: f64,
}

struct RepOutcome {
    rejects: Vec<bool>,
    method_seconds: Vec<f64>,
}

const TAG_DATA: u64 = 0;

/// Run the full Monte Carlo for one experiment.
pub fn estimate_rejection_rate(spec: &ExperimentSpec) -> Result<RejectionReport> {
    spec.validate()?;
    let started = Instant::now();
    let root = StreamKey::new(spec.seed);

    let outcomes: Vec<std::result::Result<RepOutcome, Error>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| run_replication(spec, &root.substream(rep as u64)))
        .collect();

    let methods = spec.methods.len();
    let mut rejections = vec![0usize; methods];
    let mut method_seconds = vec![0.0f64; methods];
    for (index, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome.map_err(|e| Error::Replication {
            index,
            source: Box::new(e),
        })?;
        for (i, reject) in outcome.rejects.iter().enumerate() {
            if *reject {
                rejections[i] += 1;
            }
        }
        for (i, s) in outcome.method_seconds.iter().enumerate() {
            method_seconds[i] += s;
        }
    }

    let reps = spec.replications as f64;
    let per_method = spec
        .methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let rate = rejections[i] as f64 / reps;
            MethodReport {
                method,
                rejections: rejections[i],
                replications: spec.replications,
                rejection_rate: rate,
                mc_se: (rate * (1.0 - rate) / reps).sqrt(),
                seconds: method_seconds[i],
            }
        })
        .collect();
    Ok(RejectionReport {
        per_method,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

fn run_replication(spec: &ExperimentSpec, rep_key: &StreamKey) -> Result<RepOutcome> {
    let sample = generate(&spec.dgp, &rep_key.substream(TAG_DATA))?;
    let dists = pairwise_sq_dists(sample.pooled().view())?;
    let gamma_med = median_from_dists(&dists)?;

    let wants_multi = spec.methods.iter().any(|m| m.uses_multi_bank());
    let wants_single = spec.methods.iter().any(|m| m.uses_single_bank());
    let wants_raw = spec
        .methods
        .iter()
        .any(|m| matches!(m, Method::MmdPermutation));

    // The single-kernel bank is the median kernel, which the multi bank
    // already contains at its median index; reuse the decomposition.
    let multi_bases: Option<Vec<SpectralBasis>> = if wants_multi {
        let bank = bank_from_gamma(gamma_med, KernelMode::Multi);
        let mut bases = Vec::with_capacity(bank.len());
        for ks in bank.specs() {
            let k = gram_from_dists(&dists, ks.gamma, sample.m());
            bases.push(top_eigenpairs(&k, spec.j)?);
        }
        Some(bases)
    } else {
        None
    };
    let single_basis: Option<SpectralBasis> = if wants_single {
        if let Some(bases) = &multi_bases {
            Some(bases[2].clone())
        } else {
            let k = gram_from_dists(&dists, gamma_med, sample.m());
            Some(top_eigenpairs(&k, spec.j)?)
        }
    } else {
        None
    };
    let raw_med = if wants_raw {
        Some(raw_from_dists(&dists, gamma_med))
    } else {
        None
    };

    let n_total = sample.total() as f64;
    let mut rejects = Vec::with_capacity(spec.methods.len());
    let mut method_seconds = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        let clock = Instant::now();
        let calib_key = rep_key.substream(1 + method.stream_tag());
        let p = match method {
            Method::Multi
            | Method::Single
            | Method::MultiMb2
            | Method::SingleMb2
            | Method::MultiPermutation
            | Method::SinglePermutation => {
                let bases: &[SpectralBasis] = if method.uses_multi_bank() {
                    multi_bases.as_deref().expect("multi bank prepared")
                } else {
                    std::slice::from_ref(single_basis.as_ref().expect("single bank prepared"))
                };
                let mut t_total = 0.0;
                for basis in bases {
                    t_total += truncated_unbiased(basis, &sample)?;
                }
                let observed = n_total * t_total;
                let draws = match method {
                    Method::Multi | Method::Single => {
                        mb_one_sample(bases, &sample, spec.b, &calib_key)?
                    }
                    Method::MultiMb2 | Method::SingleMb2 => {
                        mb_two_sample(bases, &sample, spec.b, &calib_key)?
                    }
                    _ => permutation_truncated(bases, &sample, spec.b, &calib_key)?,
                };
                p_value(observed, &draws)?
            }
            Method::MmdPermutation => {
                let raw = raw_med.as_ref().expect("raw kernel matrix prepared");
                let identity: Vec<usize> = (0..sample.total()).collect();
                let observed = mmd_u_from_raw(raw, sample.m(), &identity);
                let draws = permutation_mmd_from_raw(raw, sample.m(), spec.b, &calib_key);
                p_value(observed, &draws)?
            }
        };
        rejects.push(p <= spec.alpha);
        method_seconds.push(clock.elapsed().as_secs_f64());
    }
    Ok(RepOutcome {
        rejects,
        method_seconds,
    })
}

pub const GRID_CSV_HEADER: &str =
    "dgp_id,params,m,n,d,method,j,b,reps,alpha,rejection_rate,mc_se,seconds";

/// Run every experiment and write one CSV row per (experiment, method) in
/// grid order then method order. With `include_timing` off, the seconds
/// column is written as 0.000 so reruns are byte-identical.
pub fn run_grid(
    grid: &[ExperimentSpec],
    out: &mut dyn Write,
    include_timing: bool,
) -> Result<Vec<RejectionReport>> {
    if grid.is_empty() {
        return Err(Error::Design(
            "grid must contain at least one experiment".into(),
        ));
    }
    for spec in grid {
        spec.validate()?;
    }
    writeln!(out, "{GRID_CSV_HEADER}")?;
    let mut reports = Vec::with_capacity(grid.len());
    for spec in grid {
        let report = estimate_rejection_rate(spec)?;
        for row in &report.per_method {
            let seconds = if include_timing { row.seconds } else { 0.0 };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.3}",
                spec.dgp.kind.id(),
                spec.dgp.kind.params_string(),
                spec.dgp.m,
                spec.dgp.n,
                spec.dgp.d,
                row.method.name(),
                spec.j,
                spec.b,
                spec.replications,
                spec.alpha,
                row.rejection_rate,
                row.mc_se,
                seconds
            )?;
        }
        reports.push(report);
    }
    Ok(reports)
}
