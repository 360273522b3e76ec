//! Uncertainty sets over market parameters.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::quad_form;
use crate::market::MarketParams;
use crate::serde_util;

/// Largest dimension for which an interval box is expanded to its vertices.
pub const MAX_BOX_DIM: usize = 12;

/// Mean uncertainty `{μ̄ + M u : ‖u‖ ≤ 1}` with a fixed covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEllipsoid", into = "RawEllipsoid")]
pub struct EllipsoidalMu {
    nominal: MarketParams,
    m: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawEllipsoid {
    #[serde(with = "serde_util::vector")]
    mu_bar: DVector<f64>,
    #[serde(rename = "M", with = "serde_util::matrix")]
    m: DMatrix<f64>,
    #[serde(with = "serde_util::matrix")]
    sigma: DMatrix<f64>,
}

impl TryFrom<RawEllipsoid> for EllipsoidalMu {
    type Error = Error;
    fn try_from(r: RawEllipsoid) -> Result<Self> {
        EllipsoidalMu::new(r.mu_bar, r.m, r.sigma)
    }
}

impl From<EllipsoidalMu> for RawEllipsoid {
    fn from(e: EllipsoidalMu) -> Self {
        RawEllipsoid {
            mu_bar: e.nominal.mu().clone(),
            sigma: e.nominal.sigma().clone(),
            m: e.m,
        }
    }
}

impl EllipsoidalMu {
    /// `M` must be `n×k` with `1 ≤ k ≤ n` and full column rank. The all-zero
    /// matrix is also accepted and describes the degenerate set `{μ̄}`.
    pub fn new(mu_bar: DVector<f64>, m: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let nominal = MarketParams::new(mu_bar, sigma)?;
        let n = nominal.n();
        if m.nrows() != n {
            return Err(Error::dims("ellipsoid shape rows", n, m.nrows()));
        }
        if m.ncols() == 0 || m.ncols() > n {
            return Err(Error::InvalidInput(format!(
                "ellipsoid shape must have between 1 and {n} columns, got {}",
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("ellipsoid shape has non-finite entries".into()));
        }
        if m.amax() > 0.0 {
            let sv = m.singular_values();
            let smax = sv.max();
            if sv.min() <= 1e-12 * smax {
                return Err(Error::RankDeficient);
            }
        }
        Ok(Self { nominal, m })
    }

    pub fn n(&self) -> usize {
        self.nominal.n()
    }

    pub fn k(&self) -> usize {
        self.m.ncols()
    }

    pub fn mu_bar(&self) -> &DVector<f64> {
        self.nominal.mu()
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        self.nominal.sigma()
    }

    /// `(μ̄, Σ)`.
    pub fn nominal(&self) -> &MarketParams {
        &self.nominal
    }

    pub fn is_degenerate(&self) -> bool {
        self.m.amax() == 0.0
    }

    /// `μ̄ + M u`.
    pub fn point(&self, u: &DVector<f64>) -> DVector<f64> {
        self.mu_bar() + &self.m * u
    }

    pub fn params_at(&self, u: &DVector<f64>) -> MarketParams {
        self.nominal
            .with_mu(self.point(u))
            .expect("covariance already validated")
    }

    /// `μ̄ᵀx − ‖Mᵀx‖` and its minimizer.
    pub fn worst_case_mean(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let mtx = self.m.transpose() * x;
        let norm = mtx.norm();
        let value = self.mu_bar().dot(x) - norm;
        let witness = if norm > 0.0 {
            self.mu_bar() - &self.m * mtx / norm
        } else {
            self.mu_bar().clone()
        };
        (value, witness)
    }

    /// `count` boundary points `μ̄ + M u`, `‖u‖ = 1`, with `u` uniform on the sphere.
    ///
    /// The sequence for a seed is a prefix of the sequence for any larger count.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        sample_sphere(self.k(), count, seed)
            .iter()
            .map(|u| self.point(u))
            .collect()
    }
}

/// Uniform points on the unit sphere of `ℝᵏ`.
pub fn sample_sphere(k: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
        let norm: f64 = u.norm();
        if norm > 1e-12 {
            out.push(u / norm);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintySet {
    /// Finitely many joint scenarios.
    Finite(Vec<MarketParams>),
    /// Convex hull of the listed vertices.
    Polytopic(Vec<MarketParams>),
    #[serde(rename = "ellipsoidal")]
    EllipsoidalMu(EllipsoidalMu),
}

/// The mean component of an uncertainty set.
#[derive(Debug, Clone, PartialEq)]
pub enum MuProjection {
    Points(Vec<DVector<f64>>),
    Ellipsoid { mu_bar: DVector<f64>, shape: DMatrix<f64> },
}

impl UncertaintySet {
    pub fn finite(scenarios: Vec<MarketParams>) -> Result<Self> {
        check_scenarios(&scenarios)?;
        Ok(Self::Finite(scenarios))
    }

    pub fn polytopic(vertices: Vec<MarketParams>) -> Result<Self> {
        check_scenarios(&vertices)?;
        Ok(Self::Polytopic(vertices))
    }

    /// Box `lo ≤ μ ≤ hi` with a fixed covariance, stored by its vertices.
    pub fn interval_box(lo: &DVector<f64>, hi: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        let n = lo.len();
        if hi.len() != n {
            return Err(Error::dims("interval bounds", n, hi.len()));
        }
        if n > MAX_BOX_DIM {
            return Err(Error::Unsupported(format!(
                "interval sets are expanded to 2^n vertices and limited to n ≤ {MAX_BOX_DIM}"
            )));
        }
        if lo.iter().zip(hi.iter()).any(|(a, b)| a > b) {
            return Err(Error::InvalidInput("interval lower bound exceeds upper bound".into()));
        }
        let vertices = (0..1usize << n)
            .map(|mask| {
                let mu = DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] });
                MarketParams::new(mu, sigma.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::polytopic(vertices)
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Finite(s) | Self::Polytopic(s) => s[0].n(),
            Self::EllipsoidalMu(e) => e.n(),
        }
    }

    /// Scenarios or vertices; `None` for the ellipsoid.
    pub fn scenarios(&self) -> Option<&[MarketParams]> {
        match self {
            Self::Finite(s) | Self::Polytopic(s) => Some(s),
            Self::EllipsoidalMu(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Finite(s) | Self::Polytopic(s) => check_scenarios(s),
            Self::EllipsoidalMu(_) => Ok(()),
        }
    }

    pub fn project_mu(&self) -> MuProjection {
        match self {
            Self::Finite(s) | Self::Polytopic(s) => MuProjection::Points(s.iter().map(|p| p.mu().clone()).collect()),
            Self::EllipsoidalMu(e) => MuProjection::Ellipsoid {
                mu_bar: e.mu_bar().clone(),
                shape: e.shape().clone(),
            },
        }
    }

    pub fn project_sigma(&self) -> Vec<DMatrix<f64>> {
        match self {
            Self::Finite(s) | Self::Polytopic(s) => s.iter().map(|p| p.sigma().clone()).collect(),
            Self::EllipsoidalMu(e) => vec![e.sigma().clone()],
        }
    }

    /// The covariance shared by every member, if there is one.
    pub fn fixed_sigma(&self) -> Option<&DMatrix<f64>> {
        match self {
            Self::Finite(s) | Self::Polytopic(s) => {
                let first = s[0].sigma();
                s.iter().all(|p| p.sigma() == first).then_some(first)
            }
            Self::EllipsoidalMu(e) => Some(e.sigma()),
        }
    }

    /// Average of the scenarios, or the ellipsoid center.
    pub fn centroid(&self) -> MarketParams {
        match self {
            Self::Finite(s) | Self::Polytopic(s) => {
                let refs: Vec<&MarketParams> = s.iter().collect();
                let w = vec![1.0 / s.len() as f64; s.len()];
                MarketParams::convex_combination(&refs, &w).expect("average of valid scenarios")
            }
            Self::EllipsoidalMu(e) => e.nominal().clone(),
        }
    }

    /// `min_{μ ∈ U_μ} μᵀx` with a minimizer. Ties go to the lowest index.
    pub fn worst_case_mean(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        match self {
            Self::Finite(s) | Self::Polytopic(s) => {
                let i = argbest(s.iter().map(|p| p.mu().dot(x)), |a, b| a < b);
                (s[i].mu().dot(x), s[i].mu().clone())
            }
            Self::EllipsoidalMu(e) => e.worst_case_mean(x),
        }
    }

    /// `max_{Σ ∈ U_Σ} xᵀΣx` with a maximizer. Ties go to the lowest index.
    pub fn worst_case_variance(&self, x: &DVector<f64>) -> (f64, DMatrix<f64>) {
        match self {
            Self::Finite(s) | Self::Polytopic(s) => {
                let i = argbest(s.iter().map(|p| quad_form(p.sigma(), x)), |a, b| a > b);
                (quad_form(s[i].sigma(), x), s[i].sigma().clone())
            }
            Self::EllipsoidalMu(e) => (quad_form(e.sigma(), x), e.sigma().clone()),
        }
    }
}

fn argbest(values: impl Iterator<Item = f64>, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = (0, f64::NAN);
    for (i, v) in values.enumerate() {
        if i == 0 || better(v, best.1) {
            best = (i, v);
        }
    }
    best.0
}

fn check_scenarios(s: &[MarketParams]) -> Result<()> {
    let first = s
        .first()
        .ok_or_else(|| Error::InvalidInput("uncertainty set has no scenarios".into()))?;
    if let Some(bad) = s.iter().find(|p| p.n() != first.n()) {
        return Err(Error::dims("scenario dimension", first.n(), bad.n()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn params(mu: &[f64], sigma_scale: f64) -> MarketParams {
        let n = mu.len();
        MarketParams::new(DVector::from_row_slice(mu), DMatrix::identity(n, n) * sigma_scale).unwrap()
    }

    fn ball(n: usize) -> EllipsoidalMu {
        EllipsoidalMu::new(DVector::zeros(n), DMatrix::identity(n, n), DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn projections() {
        let one = UncertaintySet::finite(vec![params(&[0.1, 0.2], 1.0)]).unwrap();
        assert_eq!(
            one.project_mu(),
            MuProjection::Points(vec![DVector::from_vec(vec![0.1, 0.2])])
        );
        assert_eq!(one.project_sigma().len(), 1);

        let p = params(&[0.1, 0.2], 1.0);
        let poly = UncertaintySet::polytopic(vec![p.clone(), p.clone(), params(&[0.0, 0.0], 2.0)]).unwrap();
        match poly.project_mu() {
            MuProjection::Points(v) => assert_eq!(v.len(), 3),
            _ => unreachable!(),
        }
        assert_eq!(UncertaintySet::EllipsoidalMu(ball(2)).project_sigma().len(), 1);
    }

    #[test]
    fn worst_case_mean_cases() {
        let u = UncertaintySet::EllipsoidalMu(ball(3));
        let (v, _) = u.worst_case_mean(&DVector::zeros(3));
        assert_eq!(v, 0.0);
        let x = DVector::from_vec(vec![1.0, -2.0, 2.0]);
        let (v, w) = u.worst_case_mean(&x);
        assert!((v + 3.0).abs() < 1e-12);
        assert!((w.dot(&x) - v).abs() < 1e-12);

        let f = UncertaintySet::finite(vec![params(&[1.0, 0.0], 1.0), params(&[0.0, 1.0], 1.0)]).unwrap();
        let (v, w) = f.worst_case_mean(&DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(v, 1.0);
        assert_eq!(w.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn worst_case_variance_cases() {
        let x = DVector::from_vec(vec![0.3, -0.4]);
        let f = UncertaintySet::finite(vec![params(&[0.0, 0.0], 1.0), params(&[0.0, 0.0], 2.0)]).unwrap();
        let (v, s) = f.worst_case_variance(&x);
        assert!((v - 2.0 * x.norm_squared()).abs() < 1e-15);
        assert_eq!(s[(0, 0)], 2.0);
    }

    #[test]
    fn polytopic_variance_attained_at_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let verts: Vec<MarketParams> = (0..4)
            .map(|_| {
                let b = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
                MarketParams::new(DVector::zeros(3), &b * b.transpose() + DMatrix::identity(3, 3) * 0.1).unwrap()
            })
            .collect();
        let set = UncertaintySet::polytopic(verts.clone()).unwrap();
        let x = DVector::from_vec(vec![0.2, 0.5, 0.3]);
        let (vmax, _) = set.worst_case_variance(&x);
        for _ in 0..200 {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = w.iter().sum();
            let sig = verts
                .iter()
                .zip(&w)
                .fold(DMatrix::zeros(3, 3), |acc, (p, wi)| acc + p.sigma() * (wi / s));
            assert!(quad_form(&sig, &x) <= vmax + 1e-12);
        }
    }

    #[test]
    fn ellipsoid_sampling() {
        let mu_bar = DVector::from_vec(vec![0.05, 0.1, 0.02]);
        let m = DMatrix::from_row_slice(3, 2, &[0.01, 0.0, 0.005, 0.02, 0.0, 0.01]);
        let e = EllipsoidalMu::new(mu_bar.clone(), m.clone(), DMatrix::identity(3, 3)).unwrap();
        let a = e.sample(1, 42);
        assert_eq!(a, e.sample(1, 42));
        let pinv = m.clone().pseudo_inverse(1e-14).unwrap();
        let many = e.sample(10_000, 42);
        assert_eq!(many[0], a[0], "prefix property");
        for p in &many {
            let u = &pinv * (p - &mu_bar);
            assert!(u.norm() <= 1.0 + 1e-10);
            assert!((u.norm() - 1.0).abs() < 1e-9);
        }
        let mean = many.iter().fold(DVector::zeros(3), |acc, p| acc + p) / many.len() as f64;
        assert!((mean - &mu_bar).norm() <= 0.05 * m.norm());
    }

    #[test]
    fn ellipsoid_validation() {
        let sigma = DMatrix::identity(2, 2);
        let zero = EllipsoidalMu::new(DVector::zeros(2), DMatrix::zeros(2, 2), sigma.clone()).unwrap();
        assert!(zero.is_degenerate());
        let rank_one = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            EllipsoidalMu::new(DVector::zeros(2), rank_one, sigma.clone()),
            Err(Error::RankDeficient)
        );
        assert!(EllipsoidalMu::new(DVector::zeros(2), DMatrix::zeros(2, 3), sigma).is_err());
    }

    #[test]
    fn interval_box_vertices() {
        let lo = DVector::from_vec(vec![0.0, 0.1]);
        let hi = DVector::from_vec(vec![0.2, 0.3]);
        let set = UncertaintySet::interval_box(&lo, &hi, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(set.scenarios().unwrap().len(), 4);
        let big = DVector::zeros(13);
        assert!(matches!(
            UncertaintySet::interval_box(&big, &big, &DMatrix::identity(13, 13)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn json_shapes() {
        let f: UncertaintySet =
            serde_json::from_str(r#"{"finite": [{"mu": [0.1, 0.2], "sigma": [[1, 0], [0, 1]]}]}"#).unwrap();
        assert!(matches!(f, UncertaintySet::Finite(ref s) if s.len() == 1));
        let e: UncertaintySet = serde_json::from_str(
            r#"{"ellipsoidal": {"mu_bar": [0.1, 0.2], "M": [[0.1, 0], [0, 0.1]], "sigma": [[1, 0], [0, 1]]}}"#,
        )
        .unwrap();
        let back: UncertaintySet = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<UncertaintySet>(r#"{"polytopic": []}"#).is_ok_and(|u| u.validate().is_err()));
    }

    proptest! {
        #[test]
        fn ellipsoid_witness_attains_value(
            mu in proptest::collection::vec(-1.0f64..1.0, 3),
            mvals in proptest::collection::vec(-1.0f64..1.0, 9),
            x in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let m = DMatrix::from_row_slice(3, 3, &mvals) + DMatrix::identity(3, 3) * 3.0;
            let e = EllipsoidalMu::new(DVector::from_vec(mu), m, DMatrix::identity(3, 3)).unwrap();
            let x = DVector::from_vec(x);
            let (v, w) = e.worst_case_mean(&x);
            prop_assert!((w.dot(&x) - v).abs() <= 1e-10);
        }

        #[test]
        fn polytopic_mean_minimized_at_vertex(
            mus in proptest::collection::vec(-1.0f64..1.0, 12),
            weights in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 50),
            x in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let verts: Vec<MarketParams> = mus.chunks(3).map(|c| params(c, 1.0)).collect();
            let set = UncertaintySet::polytopic(verts.clone()).unwrap();
            let x = DVector::from_vec(x);
            let (vmin, _) = set.worst_case_mean(&x);
            for w in weights {
                let s: f64 = w.iter().sum::<f64>().max(1e-12);
                let mu = verts.iter().zip(&w).fold(DVector::zeros(3), |acc, (p, wi)| acc + p.mu() * (wi / s));
                prop_assert!(mu.dot(&x) >= vmin - 1e-9);
            }
        }
    }
}
