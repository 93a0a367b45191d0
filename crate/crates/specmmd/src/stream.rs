//! Deterministic, splittable random-number streams and the distribution
//! samplers used by the DGP catalog, the multiplier bootstraps, and the
//! permutation calibrations.
//!
//! A [`StreamKey`] is a pure value: `(root_seed, path)`. Identical keys yield
//! identical sample sequences on any platform and under any parallel
//! schedule; distinct paths yield independent streams. Keys are mapped to
//! generator state by hashing the whole path with SHA-256 and seeding a
//! ChaCha stream cipher from the digest, so there is no shared mutable state
//! and no order dependence between siblings.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Poisson, StandardNormal, StudentT};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const KEY_DOMAIN: &[u8] = b"specmmd/stream/v1";

/// Address of one deterministic random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    root_seed: u64,
    path: Vec<u64>,
}

impl StreamKey {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            path: Vec::new(),
        }
    }

    /// Child key; its sequence is independent of the parent's and of every
    /// sibling's.
    pub fn substream(&self, label: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(label);
        Self {
            root_seed: self.root_seed,
            path,
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Generator for this key. Every call returns an identical, freshly
    /// positioned stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(KEY_DOMAIN);
        hasher.update(self.root_seed.to_le_bytes());
        hasher.update((self.path.len() as u64).to_le_bytes());
        for label in &self.path {
            hasher.update(label.to_le_bytes());
        }
        ChaCha8Rng::from_seed(hasher.finalize().into())
    }
}

/// Lower-triangular matrix, e.g. a Cholesky factor. Upper entries must be
/// exactly zero; a zero diagonal is tolerated here (degenerate factors are
/// useful in tests) and rejected by [`DistSpec::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(Array2<f64>);

impl LowerTriangular {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::Shape(format!(
                "lower-triangular factor must be square, got {r}x{c}"
            )));
        }
        for i in 0..r {
            for j in (i + 1)..c {
                if matrix[[i, j]] != 0.0 {
                    return Err(Error::Shape(format!(
                        "entry ({i},{j}) above the diagonal is {} (must be 0)",
                        matrix[[i, j]]
                    )));
                }
            }
        }
        Ok(Self(matrix))
    }

    pub fn identity(d: usize) -> Self {
        Self(Array2::eye(d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    /// Factor of `s^2 * Sigma` given the factor of `Sigma`.
    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    fn has_strictly_positive_diagonal(&self) -> bool {
        (0..self.dim()).all(|i| self.0[[i, i]] > 0.0)
    }

    /// y = L z without touching the zero upper triangle.
    fn apply(&self, z: &[f64], out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, zk) in z[..=i].iter().enumerate() {
                acc += self.0[[i, k]] * zk;
            }
            *slot = acc;
        }
    }
}

/// Distribution family for [`sample_matrix`].
///
/// Scalar families fill the matrix with i.i.d. entries; multivariate families
/// draw one d-dimensional row at a time; `Mixture` picks a component per row.
#[derive(Debug, Clone, PartialEq)]
pub enum DistSpec {
    StdNormal,
    StudentT {
        df: f64,
    },
    ChiSquare {
        df: f64,
    },
    Poisson {
        rate: f64,
    },
    Mixture {
        weight: f64,
        a: Box<DistSpec>,
        b: Box<DistSpec>,
    },
    MvNormal {
        mean: Vec<f64>,
        chol: LowerTriangular,
    },
    MvT {
        df: f64,
        mean: Vec<f64>,
        chol: LowerTriangular,
    },
}

impl DistSpec {
    /// Multivariate t where `chol` factors the *covariance* rather than the
    /// scale matrix: the factor is shrunk by sqrt((df-2)/df). Requires df > 2.
    pub fn mv_t_with_covariance(df: f64, mean: Vec<f64>, chol: LowerTriangular) -> Result<Self> {
        if !(df.is_finite() && df > 2.0) {
            return Err(Error::Parameter(format!(
                "covariance parameterization of the multivariate t requires df > 2, got {df}"
            )));
        }
        Ok(DistSpec::MvT {
            df,
            mean,
            chol: chol.scaled(((df - 2.0) / df).sqrt()),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistSpec::StdNormal => Ok(()),
            DistSpec::StudentT { df } | DistSpec::ChiSquare { df } => {
                if *df > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!(
                        "degrees of freedom must be positive, got {df}"
                    )))
                }
            }
            DistSpec::Poisson { rate } => {
                if *rate > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!(
                        "poisson rate must be positive, got {rate}"
                    )))
                }
            }
            DistSpec::Mixture { weight, a, b } => {
                if !(0.0..=1.0).contains(weight) {
                    return Err(Error::Parameter(format!(
                        "mixture weight must be in [0,1], got {weight}"
                    )));
                }
                a.validate()?;
                b.validate()
            }
            DistSpec::MvNormal { mean, chol } => {
                if mean.len() != chol.dim() {
                    return Err(Error::Shape(format!(
                        "mean has length {} but the factor is {}x{}",
                        mean.len(),
                        chol.dim(),
                        chol.dim()
                    )));
                }
                if !chol.has_strictly_positive_diagonal() {
                    return Err(Error::Parameter(
                        "cholesky factor must have a strictly positive diagonal".into(),
                    ));
                }
                Ok(())
            }
            DistSpec::MvT { df, mean, chol } => {
                if !(df.is_finite() && *df > 0.0) {
                    return Err(Error::Parameter(format!(
                        "degrees of freedom must be positive, got {df}"
                    )));
                }
                if mean.len() != chol.dim() {
                    return Err(Error::Shape(format!(
                        "mean has length {} but the factor is {}x{}",
                        mean.len(),
                        chol.dim(),
                        chol.dim()
                    )));
                }
                if !chol.has_strictly_positive_diagonal() {
                    return Err(Error::Parameter(
                        "cholesky factor must have a strictly positive diagonal".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Column count this spec can fill: multivariate families fix it.
    fn fixed_dim(&self) -> Option<usize> {
        match self {
            DistSpec::MvNormal { mean, .. } | DistSpec::MvT { mean, .. } => Some(mean.len()),
            DistSpec::Mixture { a, .. } => a.fixed_dim(),
            _ => None,
        }
    }

    fn fill_row<R: Rng>(&self, rng: &mut R, row: &mut [f64], scratch: &mut Vec<f64>) {
        match self {
            DistSpec::StdNormal => {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            DistSpec::StudentT { df } => {
                let dist = StudentT::new(*df).expect("validated df");
                for v in row.iter_mut() {
                    *v = dist.sample(rng);
                }
            }
            DistSpec::ChiSquare { df } => {
                let dist = ChiSquared::new(*df).expect("validated df");
                for v in row.iter_mut() {
                    *v = dist.sample(rng);
                }
            }
            DistSpec::Poisson { rate } => {
                let dist = Poisson::new(*rate).expect("validated rate");
                for v in row.iter_mut() {
                    *v = dist.sample(rng);
                }
            }
            DistSpec::Mixture { weight, a, b } => {
                let u: f64 = rng.random();
                if u < *weight {
                    a.fill_row(rng, row, scratch);
                } else {
                    b.fill_row(rng, row, scratch);
                }
            }
            DistSpec::MvNormal { mean, chol } => {
                scratch.clear();
                scratch.extend((0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
                chol.apply(scratch, row);
                for (v, mu) in row.iter_mut().zip(mean) {
                    *v += mu;
                }
            }
            DistSpec::MvT { df, mean, chol } => {
                scratch.clear();
                scratch.extend((0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
                chol.apply(scratch, row);
                let w: f64 = ChiSquared::new(*df).expect("validated df").sample(rng);
                let scale = 1.0 / (w / df).sqrt();
                for (v, mu) in row.iter_mut().zip(mean) {
                    *v = *v * scale + mu;
                }
            }
        }
    }
}

/// rows x cols matrix of draws from `dist` under the stream addressed by
/// `key`. Scalar families are i.i.d. entrywise, multivariate families i.i.d.
/// row-wise (cols must equal the family dimension).
pub fn sample_matrix(
    key: &StreamKey,
    dist: &DistSpec,
    rows: usize,
    cols: usize,
) -> Result<Array2<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter(format!(
            "matrix shape must be at least 1x1, got {rows}x{cols}"
        )));
    }
    dist.validate()?;
    if let Some(d) = dist.fixed_dim() {
        if d != cols {
            return Err(Error::Shape(format!(
                "requested {cols} columns but the distribution is {d}-dimensional"
            )));
        }
    }
    let mut rng = key.rng();
    let mut out = Array2::zeros((rows, cols));
    let mut scratch = Vec::with_capacity(cols);
    for mut row in out.rows_mut() {
        dist.fill_row(
            &mut rng,
            row.as_slice_mut().expect("row-major layout"),
            &mut scratch,
        );
    }
    Ok(out)
}

/// Cholesky factor of the AR(1) covariance Sigma0[i][j] = rho^|i-j|.
pub fn cholesky_ar1(rho: f64, d: usize) -> Result<LowerTriangular> {
    if !(rho.is_finite() && rho.abs() < 1.0) {
        return Err(Error::Parameter(format!(
            "ar(1) coefficient must satisfy |rho| < 1, got {rho}"
        )));
    }
    if d == 0 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    let sigma = Array2::from_shape_fn((d, d), |(i, j)| rho.powi((i as i32 - j as i32).abs()));
    cholesky(&sigma)
}

/// Dense Cholesky of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<LowerTriangular> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::Shape(format!(
            "cholesky needs a square matrix, got {}x{}",
            d,
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::numeric(format!(
                        "matrix is not positive definite (pivot {acc:e} at index {i})"
                    )));
                }
                l[[i, i]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    LowerTriangular::new(l)
}

/// rows draws of mean + L z with z standard normal.
pub fn sample_mv_normal(
    key: &StreamKey,
    mean: &[f64],
    chol: &LowerTriangular,
    rows: usize,
) -> Result<Array2<f64>> {
    if rows == 0 {
        return Err(Error::Parameter("row count must be at least 1".into()));
    }
    let d = chol.dim();
    if mean.len() != d {
        return Err(Error::Shape(format!(
            "mean has length {} but the factor is {d}x{d}",
            mean.len()
        )));
    }
    let mut rng = key.rng();
    let mut out = Array2::zeros((rows, d));
    let mut z = vec![0.0; d];
    for mut row in out.rows_mut() {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        chol.apply(&z, row.as_slice_mut().expect("row-major layout"));
        for (v, mu) in row.iter_mut().zip(mean) {
            *v += mu;
        }
    }
    Ok(out)
}

/// rows draws of mean + (L z) / sqrt(w/df), w ~ chi-square(df).
///
/// `chol` factors the scale matrix; the covariance is Sigma * df/(df-2) for
/// df > 2 (see [`DistSpec::mv_t_with_covariance`] for the other convention).
pub fn sample_mv_t(
    key: &StreamKey,
    df: f64,
    mean: &[f64],
    chol: &LowerTriangular,
    rows: usize,
) -> Result<Array2<f64>> {
    if !(df.is_finite() && df > 0.0) {
        return Err(Error::Parameter(format!(
            "degrees of freedom must be positive, got {df}"
        )));
    }
    if rows == 0 {
        return Err(Error::Parameter("row count must be at least 1".into()));
    }
    let d = chol.dim();
    if mean.len() != d {
        return Err(Error::Shape(format!(
            "mean has length {} but the factor is {d}x{d}",
            mean.len()
        )));
    }
    let chi = ChiSquared::new(df).expect("df > 0");
    let mut rng = key.rng();
    let mut out = Array2::zeros((rows, d));
    let mut z = vec![0.0; d];
    for mut row in out.rows_mut() {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        chol.apply(&z, row.as_slice_mut().expect("row-major layout"));
        let w: f64 = chi.sample(&mut rng);
        let scale = 1.0 / (w / df).sqrt();
        for (v, mu) in row.iter_mut().zip(mean) {
            *v = *v * scale + mu;
        }
    }
    Ok(out)
}
