//! Catalog of data-generating processes for the size and power studies.
//!
//! Null processes NULL01-04 draw X and Y i.i.d. entrywise from the same
//! scalar family; NULL_AR uses AR(1)-correlated Gaussian rows. The
//! alternatives deviate in 10% of the columns (DGP1/2/4), through row-level
//! convex combinations (DGP3), or through location/scale shifts of
//! correlated rows (S1-S3). DGP3 combines two random vectors
//! deterministically per row; S3 is a probabilistic 0.5/0.5 mixture.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::TwoSample;
use crate::stream::{
    cholesky_ar1, sample_matrix, sample_mv_normal, sample_mv_t, DistSpec, StreamKey,
};

const AR1_RHO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DgpKind {
    /// X, Y i.i.d. standard normal.
    Null01,
    /// X, Y i.i.d. t with 5 degrees of freedom.
    Null02,
    /// X, Y i.i.d. chi-square with 3 degrees of freedom.
    Null03,
    /// X, Y i.i.d. Poisson(1).
    Null04,
    /// X, Y rows multivariate normal with AR(1) covariance 0.5^|i-j|.
    NullAr,
    /// Location-scale deviation: first floor(0.1 d) columns of Y are N(mu, sigma2).
    Dgp1 { mu: f64, sigma2: f64 },
    /// t-distribution deviation: last floor(0.1 d) columns of X are t_df.
    Dgp2 { df: f64 },
    /// Row-level convex combination 0.8 * normal + 0.2 * t; Y shifts the
    /// normal part to N(a 1, b Sigma0) and uses t_3 instead of t_5.
    Dgp3 { a: f64, b: f64 },
    /// Scale-only deviation: DGP1 with mu = 0.
    Dgp4 { sigma2: f64 },
    /// X ~ N(0, Sigma0), Y ~ N(0.1 1, 1.15 Sigma0).
    S1,
    /// X ~ t10(0, Sigma0), Y ~ t10(0, 1.22 Sigma0) (scale-matrix convention).
    S2,
    /// Probabilistic mixture 0.5 N + 0.5 t10; Y scales both components by 1.22.
    S3,
}

impl DgpKind {
    pub fn id(&self) -> &'static str {
        match self {
            DgpKind::Null01 => "NULL01",
            DgpKind::Null02 => "NULL02",
            DgpKind::Null03 => "NULL03",
            DgpKind::Null04 => "NULL04",
            DgpKind::NullAr => "NULL_AR",
            DgpKind::Dgp1 { .. } => "DGP1",
            DgpKind::Dgp2 { .. } => "DGP2",
            DgpKind::Dgp3 { .. } => "DGP3",
            DgpKind::Dgp4 { .. } => "DGP4",
            DgpKind::S1 => "S1",
            DgpKind::S2 => "S2",
            DgpKind::S3 => "S3",
        }
    }

    /// Canonical `key=value;...` rendering of the parameters, `-` when none.
    pub fn params_string(&self) -> String {
        match self {
            DgpKind::Dgp1 { mu, sigma2 } => format!("mu={mu};sigma2={sigma2}"),
            DgpKind::Dgp2 { df } => format!("df={df}"),
            DgpKind::Dgp3 { a, b } => format!("a={a};b={b}"),
            DgpKind::Dgp4 { sigma2 } => format!("sigma2={sigma2}"),
            _ => "-".into(),
        }
    }
}

/// A DGP instance: the process plus the sample shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub kind: DgpKind,
    pub m: usize,
    pub n: usize,
    pub d: usize,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n < 2 {
            return Err(Error::Design(format!(
                "both groups need at least 2 rows, got m={}, n={}",
                self.m, self.n
            )));
        }
        if self.d == 0 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        match self.kind {
            DgpKind::Dgp1 { sigma2, .. } | DgpKind::Dgp4 { sigma2 } => {
                if !(sigma2.is_finite() && sigma2 > 0.0) {
                    return Err(Error::Parameter(format!(
                        "sigma2 must be positive, got {sigma2}"
                    )));
                }
                self.deviating_columns().map(|_| ())
            }
            DgpKind::Dgp2 { df } => {
                if !(df.is_finite() && df > 0.0) {
                    return Err(Error::Parameter(format!("df must be positive, got {df}")));
                }
                self.deviating_columns().map(|_| ())
            }
            DgpKind::Dgp3 { b, .. } => {
                if !(b.is_finite() && b > 0.0) {
                    return Err(Error::Parameter(format!(
                        "scale b must be positive, got {b}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// floor(0.1 d); zero deviating columns would silently reproduce the
    /// null, so that is rejected loudly.
    fn deviating_columns(&self) -> Result<usize> {
        let f = self.d / 10;
        if f == 0 {
            return Err(Error::Parameter(format!(
                "floor(0.1 d) = 0 at d={}; the alternative would equal the null",
                self.d
            )));
        }
        Ok(f)
    }
}

/// Draw one two-sample data set. X uses substream 0 of `key`, Y substream 1.
pub fn generate(spec: &DgpSpec, key: &StreamKey) -> Result<TwoSample> {
    spec.validate()?;
    let (m, n, d) = (spec.m, spec.n, spec.d);
    let key_x = key.substream(0);
    let key_y = key.substream(1);
    let (x, y) = match spec.kind {
        DgpKind::Null01 => (
            sample_matrix(&key_x, &DistSpec::StdNormal, m, d)?,
            sample_matrix(&key_y, &DistSpec::StdNormal, n, d)?,
        ),
        DgpKind::Null02 => {
            let t5 = DistSpec::StudentT { df: 5.0 };
            (
                sample_matrix(&key_x, &t5, m, d)?,
                sample_matrix(&key_y, &t5, n, d)?,
            )
        }
        DgpKind::Null03 => {
            let chi3 = DistSpec::ChiSquare { df: 3.0 };
            (
                sample_matrix(&key_x, &chi3, m, d)?,
                sample_matrix(&key_y, &chi3, n, d)?,
            )
        }
        DgpKind::Null04 => {
            let pois = DistSpec::Poisson { rate: 1.0 };
            (
                sample_matrix(&key_x, &pois, m, d)?,
                sample_matrix(&key_y, &pois, n, d)?,
            )
        }
        DgpKind::NullAr => {
            let chol = cholesky_ar1(AR1_RHO, d)?;
            let zeros = vec![0.0; d];
            (
                sample_mv_normal(&key_x, &zeros, &chol, m)?,
                sample_mv_normal(&key_y, &zeros, &chol, n)?,
            )
        }
        DgpKind::Dgp1 { mu, sigma2 } => {
            let f = spec.deviating_columns()?;
            let x = sample_matrix(&key_x, &DistSpec::StdNormal, m, d)?;
            let y = shifted_leading_columns(&key_y, n, d, f, mu, sigma2.sqrt())?;
            (x, y)
        }
        DgpKind::Dgp4 { sigma2 } => {
            let f = spec.deviating_columns()?;
            let x = sample_matrix(&key_x, &DistSpec::StdNormal, m, d)?;
            let y = shifted_leading_columns(&key_y, n, d, f, 0.0, sigma2.sqrt())?;
            (x, y)
        }
        DgpKind::Dgp2 { df } => {
            let f = spec.deviating_columns()?;
            // X = (X1, X2): standard-normal columns first, t_df columns last.
            let mut x = sample_matrix(&key_x.substream(0), &DistSpec::StdNormal, m, d - f)?;
            let x2 = sample_matrix(&key_x.substream(1), &DistSpec::StudentT { df }, m, f)?;
            x.append(Axis(1), x2.view()).expect("row counts match");
            let y = sample_matrix(&key_y, &DistSpec::StdNormal, n, d)?;
            (x, y)
        }
        DgpKind::Dgp3 { a, b } => {
            let chol = cholesky_ar1(AR1_RHO, d)?;
            let x = convex_combination_rows(&key_x, m, d, &chol, 0.0, 1.0, 5.0)?;
            let y = convex_combination_rows(&key_y, n, d, &chol, a, b, 3.0)?;
            (x, y)
        }
        DgpKind::S1 => {
            let chol = cholesky_ar1(AR1_RHO, d)?;
            let x = sample_mv_normal(&key_x, &vec![0.0; d], &chol, m)?;
            let y = sample_mv_normal(&key_y, &vec![0.1; d], &chol.scaled(1.15f64.sqrt()), n)?;
            (x, y)
        }
        DgpKind::S2 => {
            let chol = cholesky_ar1(AR1_RHO, d)?;
            let zeros = vec![0.0; d];
            let x = sample_mv_t(&key_x, 10.0, &zeros, &chol, m)?;
            let y = sample_mv_t(&key_y, 10.0, &zeros, &chol.scaled(1.22f64.sqrt()), n)?;
            (x, y)
        }
        DgpKind::S3 => {
            let chol = cholesky_ar1(AR1_RHO, d)?;
            let zeros = vec![0.0; d];
            let mix = |c: crate::stream::LowerTriangular| DistSpec::Mixture {
                weight: 0.5,
                a: Box::new(DistSpec::MvNormal {
                    mean: zeros.clone(),
                    chol: c.clone(),
                }),
                b: Box::new(DistSpec::MvT {
                    df: 10.0,
                    mean: zeros.clone(),
                    chol: c,
                }),
            };
            let x = sample_matrix(&key_x, &mix(chol.clone()), m, d)?;
            let y = sample_matrix(&key_y, &mix(chol.scaled(1.22f64.sqrt())), n, d)?;
            (x, y)
        }
    };
    TwoSample::new(x, y)
}

/// Standard-normal matrix whose first `f` columns are mu + sigma * z.
fn shifted_leading_columns(
    key: &StreamKey,
    rows: usize,
    d: usize,
    f: usize,
    mu: f64,
    sigma: f64,
) -> Result<Array2<f64>> {
    let mut out = sample_matrix(key, &DistSpec::StdNormal, rows, d)?;
    for r in 0..rows {
        for c in 0..f {
            out[[r, c]] = mu + sigma * out[[r, c]];
        }
    }
    Ok(out)
}

/// Rows 0.8 * (a 1 + sqrt(b) L z) + 0.2 * t_df with i.i.d. t coordinates.
fn convex_combination_rows(
    key: &StreamKey,
    rows: usize,
    d: usize,
    chol: &crate::stream::LowerTriangular,
    a: f64,
    b: f64,
    t_df: f64,
) -> Result<Array2<f64>> {
    let mut rng = key.rng();
    let t_dist = StudentT::new(t_df).map_err(|e| Error::Parameter(format!("t({t_df}): {e}")))?;
    let sqrt_b = b.sqrt();
    let mut out = Array2::zeros((rows, d));
    let mut z = vec![0.0; d];
    let mut lz = vec![0.0; d];
    let l = chol.matrix();
    for mut row in out.rows_mut() {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for (i, slot) in lz.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, zk) in z[..=i].iter().enumerate() {
                acc += l[[i, k]] * zk;
            }
            *slot = acc;
        }
        for (slot, lzi) in row.iter_mut().zip(&lz) {
            let t: f64 = t_dist.sample(&mut rng);
            *slot = 0.8 * (a + sqrt_b * lzi) + 0.2 * t;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: DgpKind, m: usize, n: usize, d: usize) -> DgpSpec {
        DgpSpec { kind, m, n, d }
    }

    #[test]
    fn shapes_and_determinism() {
        let s = spec(
            DgpKind::Dgp1 {
                mu: 0.05,
                sigma2: 0.5,
            },
            100,
            100,
            50,
        );
        let key = StreamKey::new(5);
        let a = generate(&s, &key).unwrap();
        assert_eq!(a.x().dim(), (100, 50));
        assert_eq!(a.y().dim(), (100, 50));
        let b = generate(&s, &key).unwrap();
        assert!(a
            .pooled()
            .iter()
            .zip(b.pooled().iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn dgp1_deviating_columns_have_target_variance() {
        let s = spec(
            DgpKind::Dgp1 {
                mu: 0.05,
                sigma2: 0.5,
            },
            100,
            100,
            50,
        );
        let root = StreamKey::new(9);
        let mut mean_var = 0.0;
        let reps = 200;
        for rep in 0..reps {
            let sample = generate(&s, &root.substream(rep)).unwrap();
            let y = sample.y();
            for c in 0..5 {
                let col = y.column(c);
                let mean = col.sum() / col.len() as f64;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (col.len() - 1) as f64;
                mean_var += var;
            }
        }
        mean_var /= (reps * 5) as f64;
        assert!((mean_var - 0.5).abs() < 0.15, "mean variance {mean_var}");
        // Non-deviating columns keep unit variance.
        let sample = generate(&s, &root.substream(0)).unwrap();
        let y = sample.y();
        let col = y.column(20);
        let mean = col.sum() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (col.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.6);
    }

    #[test]
    fn dgp2_places_t_block_last() {
        let s = spec(DgpKind::Dgp2 { df: 3.0 }, 400, 10, 20);
        let sample = generate(&s, &StreamKey::new(2)).unwrap();
        // t_3 has heavy tails: excess kurtosis shows up in the last 2 columns.
        let kurt = |col: ndarray::ArrayView1<f64>| {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let m2 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let m4 = col.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
            m4 / (m2 * m2)
        };
        let k_normal = kurt(sample.x().column(0));
        let k_t = kurt(sample.x().column(19));
        assert!(k_normal < 5.0, "normal column kurtosis {k_normal}");
        assert!(k_t > 4.0, "t column kurtosis {k_t}");
    }

    #[test]
    fn s1_mean_shift() {
        let s = spec(DgpKind::S1, 100, 100, 5);
        let root = StreamKey::new(77);
        let mut grand_mean = 0.0;
        for rep in 0..100 {
            let sample = generate(&s, &root.substream(rep)).unwrap();
            grand_mean += sample.y().sum() / (100.0 * 5.0);
        }
        grand_mean /= 100.0;
        assert!((grand_mean - 0.1).abs() < 0.05, "Y mean {grand_mean}");
    }

    #[test]
    fn null_ar_covariance() {
        let s = spec(DgpKind::NullAr, 2000, 2, 3);
        let sample = generate(&s, &StreamKey::new(4)).unwrap();
        let x = sample.x();
        let rows = x.nrows() as f64;
        for a in 0..3usize {
            for b in 0..3usize {
                let cov = (0..x.nrows()).map(|i| x[[i, a]] * x[[i, b]]).sum::<f64>() / rows;
                let target = AR1_RHO.powi((a as i32 - b as i32).abs());
                assert!(
                    (cov - target).abs() < 0.1,
                    "cov[{a}][{b}] = {cov}, want {target}"
                );
            }
        }
    }

    #[test]
    fn small_d_alternatives_rejected() {
        for kind in [
            DgpKind::Dgp1 {
                mu: 0.1,
                sigma2: 1.0,
            },
            DgpKind::Dgp2 { df: 5.0 },
            DgpKind::Dgp4 { sigma2: 0.5 },
        ] {
            let s = spec(kind, 10, 10, 9);
            assert!(
                matches!(generate(&s, &StreamKey::new(1)), Err(Error::Parameter(_))),
                "{kind:?}"
            );
        }
    }

    #[test]
    fn kind_ids_and_params() {
        assert_eq!(DgpKind::NullAr.id(), "NULL_AR");
        assert_eq!(
            DgpKind::Dgp3 { a: -0.05, b: 0.8 }.params_string(),
            "a=-0.05;b=0.8"
        );
        assert_eq!(DgpKind::S2.params_string(), "-");
    }

    #[test]
    fn serde_round_trip() {
        let s = spec(
            DgpKind::Dgp1 {
                mu: 0.05,
                sigma2: 0.5,
            },
            100,
            10,
            50,
        );
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"id\":\"DGP1\""), "{json}");
        let back: DgpSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
        let parsed: DgpSpec =
            serde_json::from_str(r#"{"id":"NULL_AR","m":100,"n":100,"d":50}"#).unwrap();
        assert_eq!(parsed.kind, DgpKind::NullAr);
    }

    #[test]
    fn every_kind_generates() {
        let kinds = [
            DgpKind::Null01,
            DgpKind::Null02,
            DgpKind::Null03,
            DgpKind::Null04,
            DgpKind::NullAr,
            DgpKind::Dgp1 {
                mu: 0.1,
                sigma2: 1.3,
            },
            DgpKind::Dgp2 { df: 10.0 },
            DgpKind::Dgp3 { a: 0.0, b: 1.1 },
            DgpKind::Dgp4 { sigma2: 0.8 },
            DgpKind::S1,
            DgpKind::S2,
            DgpKind::S3,
        ];
        for kind in kinds {
            let s = spec(kind, 12, 8, 10);
            let sample = generate(&s, &StreamKey::new(3)).unwrap();
            assert_eq!(sample.total(), 20);
            assert!(sample.pooled().iter().all(|v| v.is_finite()), "{kind:?}");
        }
    }
}
