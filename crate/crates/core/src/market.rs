//! Market parameters, return-data estimation and the feasible-set algebra.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_symmetric, cholesky_upper, matrix_from_rows, symmetrize};
use crate::serde_util;

/// A parameter pair: expected returns and a positive-definite covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct MarketParams {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(with = "serde_util::vector")]
    mu: DVector<f64>,
    #[serde(with = "serde_util::matrix")]
    sigma: DMatrix<f64>,
}

impl TryFrom<RawParams> for MarketParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        MarketParams::new(r.mu, r.sigma)
    }
}

impl From<MarketParams> for RawParams {
    fn from(p: MarketParams) -> Self {
        RawParams {
            mu: p.mu,
            sigma: p.sigma,
        }
    }
}

impl MarketParams {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::dims("covariance", mu.len(), sigma.nrows()));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mean vector has non-finite entries".into()));
        }
        check_symmetric(&sigma)?;
        cholesky_upper(&sigma)?;
        Ok(Self { mu, sigma })
    }

    pub fn from_slices(mu: &[f64], sigma_rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = sigma_rows.iter().map(|r| r.to_vec()).collect();
        Self::new(DVector::from_column_slice(mu), matrix_from_rows(&rows, Some(mu.len()))?)
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Upper Cholesky factor of the covariance.
    pub fn factor(&self) -> DMatrix<f64> {
        cholesky_upper(&self.sigma).expect("validated at construction")
    }

    pub fn with_mu(&self, mu: DVector<f64>) -> Result<Self> {
        Self::new(mu, self.sigma.clone())
    }

    /// `Σ wᵢ pᵢ` for nonnegative weights summing to one.
    pub fn convex_combination(points: &[&MarketParams], weights: &[f64]) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::InvalidInput("no points".into()))?;
        let n = first.n();
        let mut mu = DVector::zeros(n);
        let mut sigma = DMatrix::zeros(n, n);
        for (p, &w) in points.iter().zip(weights) {
            mu += &p.mu * w;
            sigma += &p.sigma * w;
        }
        Self::new(mu, symmetrize(&sigma))
    }
}

/// Per-period return observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsSample {
    pub labels: Vec<String>,
    pub data: DMatrix<f64>,
}

impl ReturnsSample {
    pub fn new(labels: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 return observations, got {}",
                data.nrows()
            )));
        }
        if labels.len() != data.ncols() {
            return Err(Error::dims("asset labels", data.ncols(), labels.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("returns contain non-finite values".into()));
        }
        Ok(Self { labels, data })
    }

    /// Header row of asset labels followed by one row of decimal returns per period.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let labels: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
        if labels.is_empty() || labels.iter().all(|l| l.is_empty()) {
            return Err(Error::Parse {
                line: Some(1),
                message: "missing header row".into(),
            });
        }
        let mut values = Vec::new();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map(|p| p.line());
            if rec.len() != labels.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", labels.len(), rec.len()),
                });
            }
            for field in rec.iter() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("not a number: {field:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-finite return {field:?}"),
                    });
                }
                values.push(v);
            }
            rows += 1;
        }
        let data = DMatrix::from_row_slice(rows, labels.len(), &values);
        Self::new(labels, data).map_err(|e| match e {
            Error::InvalidInput(message) => Error::Parse { line: None, message },
            other => other,
        })
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file =
            std::fs::File::open(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        line: e.position().map(|p| p.line()),
        message: e.to_string(),
    }
}

/// Sample mean and a covariance shrunk toward its diagonal.
///
/// The sample covariance uses the unbiased `T − 1` denominator.
pub fn estimate_params(sample: &ReturnsSample, shrinkage: f64) -> Result<MarketParams> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::InvalidInput(format!("shrinkage {shrinkage} outside [0, 1]")));
    }
    let t = sample.data.nrows();
    if t < 2 {
        return Err(Error::InvalidInput("need at least 2 observations".into()));
    }
    let mu = sample.data.row_mean().transpose();
    let mut centered = sample.data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let cov = symmetrize(&(centered.transpose() * &centered / (t as f64 - 1.0)));
    let diag = DMatrix::from_diagonal(&cov.diagonal());
    let sigma = cov * (1.0 - shrinkage) + diag * shrinkage;
    MarketParams::new(mu, sigma).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::DegenerateCovariance,
        other => other,
    })
}

/// `{x : F x = f, G x ≤ g}` with the parametrization `x = x_p + H w` of the equality set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pub f_mat: DMatrix<f64>,
    pub f_vec: DVector<f64>,
    pub g_mat: DMatrix<f64>,
    pub g_vec: DVector<f64>,
    /// Particular solution of `F x = f` (minimum norm).
    pub x_p: DVector<f64>,
    /// Orthonormal basis of the null space of `F`.
    pub h: DMatrix<f64>,
}

/// Tolerance for equality-system residuals.
pub const EQ_TOL: f64 = 1e-10;

impl FeasibleSet {
    /// Builds the set and its null-space parametrization.
    ///
    /// `f_mat` and `g_mat` must share the column count `n` (use `0×n` matrices for absent blocks).
    pub fn new(f_mat: DMatrix<f64>, f_vec: DVector<f64>, g_mat: DMatrix<f64>, g_vec: DVector<f64>) -> Result<Self> {
        let n = f_mat.ncols();
        if g_mat.ncols() != n {
            return Err(Error::dims("inequality matrix columns", n, g_mat.ncols()));
        }
        if f_vec.len() != f_mat.nrows() {
            return Err(Error::dims("equality right-hand side", f_mat.nrows(), f_vec.len()));
        }
        if g_vec.len() != g_mat.nrows() {
            return Err(Error::dims("inequality right-hand side", g_mat.nrows(), g_vec.len()));
        }
        if f_mat
            .iter()
            .chain(f_vec.iter())
            .chain(g_mat.iter())
            .chain(g_vec.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("constraint data has non-finite entries".into()));
        }
        let m_f = f_mat.nrows();
        if m_f > n {
            return Err(Self::rank_failure(&f_mat, &f_vec));
        }
        let (x_p, h) = if m_f == 0 {
            (DVector::zeros(n), DMatrix::identity(n, n))
        } else {
            // QR of [Fᵀ | I] yields the full orthogonal factor of Fᵀ.
            let mut aug = DMatrix::zeros(n, m_f + n);
            aug.view_mut((0, 0), (n, m_f)).copy_from(&f_mat.transpose());
            aug.view_mut((0, m_f), (n, n)).fill_with_identity();
            let qr = aug.qr();
            let q = qr.q();
            let r = qr.r();
            let scale = f_mat.amax().max(f64::MIN_POSITIVE);
            for i in 0..m_f {
                if r[(i, i)].abs() <= 1e-10 * scale {
                    return Err(Self::rank_failure(&f_mat, &f_vec));
                }
            }
            let q1 = q.columns(0, m_f).into_owned();
            let r1 = r.view((0, 0), (m_f, m_f)).into_owned();
            let y = r1
                .transpose()
                .solve_lower_triangular(&f_vec)
                .ok_or(Error::RankDeficient)?;
            (q1 * y, q.columns(m_f, n - m_f).into_owned())
        };
        Ok(Self {
            f_mat,
            f_vec,
            g_mat,
            g_vec,
            x_p,
            h,
        })
    }

    fn rank_failure(f_mat: &DMatrix<f64>, f_vec: &DVector<f64>) -> Error {
        let svd = f_mat.clone().svd(true, true);
        match svd.solve(f_vec, 1e-10 * f_mat.amax().max(1.0)) {
            Ok(x) if (f_mat * &x - f_vec).amax() <= 1e-8 * f_vec.amax().max(1.0) => Error::RankDeficient,
            _ => Error::Infeasible,
        }
    }

    /// Constructor from row lists, with `n` taken from the first nonempty block.
    pub fn from_rows(n: usize, f: &[Vec<f64>], fv: &[f64], g: &[Vec<f64>], gv: &[f64]) -> Result<Self> {
        Self::new(
            matrix_from_rows(f, Some(n))?,
            DVector::from_column_slice(fv),
            matrix_from_rows(g, Some(n))?,
            DVector::from_column_slice(gv),
        )
    }

    /// `{x : eᵀx = 1}`.
    pub fn budget(n: usize) -> Self {
        Self::new(
            DMatrix::from_element(1, n, 1.0),
            DVector::from_element(1, 1.0),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
        .expect("budget row has full rank")
    }

    /// `{x : eᵀx = 1, x ≥ 0}`.
    pub fn simplex(n: usize) -> Self {
        Self::new(
            DMatrix::from_element(1, n, 1.0),
            DVector::from_element(1, 1.0),
            -DMatrix::identity(n, n),
            DVector::zeros(n),
        )
        .expect("budget row has full rank")
    }

    /// `{x₀}`.
    pub fn singleton(x0: &DVector<f64>) -> Self {
        let n = x0.len();
        Self::new(
            DMatrix::identity(n, n),
            x0.clone(),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
        .expect("identity has full rank")
    }

    /// Same equalities with extra inequality rows `G' x ≤ g'` appended.
    pub fn with_inequalities(&self, g: &DMatrix<f64>, gv: &DVector<f64>) -> Result<Self> {
        let mut gm = DMatrix::zeros(self.m_g() + g.nrows(), self.n());
        gm.view_mut((0, 0), (self.m_g(), self.n())).copy_from(&self.g_mat);
        gm.view_mut((self.m_g(), 0), (g.nrows(), self.n())).copy_from(g);
        let mut gvv = DVector::zeros(self.m_g() + gv.len());
        gvv.rows_mut(0, self.m_g()).copy_from(&self.g_vec);
        gvv.rows_mut(self.m_g(), gv.len()).copy_from(gv);
        Self::new(self.f_mat.clone(), self.f_vec.clone(), gm, gvv)
    }

    pub fn n(&self) -> usize {
        self.f_mat.ncols()
    }

    pub fn m_f(&self) -> usize {
        self.f_mat.nrows()
    }

    pub fn m_g(&self) -> usize {
        self.g_mat.nrows()
    }

    /// Dimension of the null space, `n − m_f`.
    pub fn r(&self) -> usize {
        self.h.ncols()
    }

    pub fn point(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.x_p + &self.h * w
    }

    /// Largest violation of the defining constraints at `x`.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let eq = (&self.f_mat * x - &self.f_vec).amax();
        let ineq = (&self.g_mat * x - &self.g_vec).iter().fold(0.0f64, |a, v| a.max(*v));
        eq.max(ineq)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.n() && self.violation(x) <= tol
    }

    /// Whether some equality row forces `eᵀx = 1`.
    pub fn has_budget_row(&self) -> bool {
        (0..self.m_f()).any(|i| {
            let row = self.f_mat.row(i);
            let c = row[0];
            c != 0.0
                && row.iter().all(|v| (v - c).abs() <= 1e-12 * c.abs())
                && (self.f_vec[i] - c).abs() <= 1e-12 * c.abs()
        })
    }
}

/// JSON shape of a feasible set: `{"F": [[..]], "f": [..], "G": [[..]], "g": [..]}`.
///
/// Every key is optional; `n` is needed only when both matrices are absent.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FeasibleSetConfig {
    #[serde(rename = "F", default)]
    pub f_mat: Vec<Vec<f64>>,
    #[serde(rename = "f", default)]
    pub f_vec: Vec<f64>,
    #[serde(rename = "G", default)]
    pub g_mat: Vec<Vec<f64>>,
    #[serde(rename = "g", default)]
    pub g_vec: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl FeasibleSetConfig {
    pub fn build(&self) -> Result<FeasibleSet> {
        let n = self
            .f_mat
            .first()
            .or(self.g_mat.first())
            .map(Vec::len)
            .or(self.n)
            .ok_or_else(|| Error::InvalidInput("feasible set needs F, G or n".into()))?;
        if let Some(expected) = self.n {
            if expected != n {
                return Err(Error::dims("feasible set columns", expected, n));
            }
        }
        FeasibleSet::from_rows(n, &self.f_mat, &self.f_vec, &self.g_mat, &self.g_vec)
    }
}

impl From<&FeasibleSet> for FeasibleSetConfig {
    fn from(x: &FeasibleSet) -> Self {
        use crate::linalg::matrix_to_rows;
        Self {
            f_mat: matrix_to_rows(&x.f_mat),
            f_vec: x.f_vec.iter().copied().collect(),
            g_mat: matrix_to_rows(&x.g_mat),
            g_vec: x.g_vec.iter().copied().collect(),
            n: Some(x.n()),
        }
    }
}

impl Serialize for FeasibleSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FeasibleSetConfig::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeasibleSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        FeasibleSetConfig::deserialize(d)?
            .build()
            .map_err(serde::de::Error::custom)
    }
}
