use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Censoring category, numbered as in the dataset files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CensoringCode {
    Left = 1,
    Interval = 2,
    Right = 3,
    Exact = 4,
}

impl CensoringCode {
    pub const ALL: [CensoringCode; 4] = [Self::Left, Self::Interval, Self::Right, Self::Exact];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            1 => Ok(Self::Left),
            2 => Ok(Self::Interval),
            3 => Ok(Self::Right),
            4 => Ok(Self::Exact),
            _ => Err(Error::Domain("censoring code must be 1, 2, 3 or 4")),
        }
    }
}

/// What is known about the log event time `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// `y < L`
    Left(f64),
    /// `L <= y <= R` with `L < R`
    Interval(f64, f64),
    /// `y > R`
    Right(f64),
    /// `y = L = R`
    Exact(f64),
}

impl Outcome {
    pub fn delta(&self) -> CensoringCode {
        match self {
            Outcome::Left(_) => CensoringCode::Left,
            Outcome::Interval(..) => CensoringCode::Interval,
            Outcome::Right(_) => CensoringCode::Right,
            Outcome::Exact(_) => CensoringCode::Exact,
        }
    }

    /// `(L, R)` as stored in a dataset file; the unused side is `None`.
    pub fn bounds(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            Outcome::Left(l) => (Some(l), None),
            Outcome::Interval(l, r) => (Some(l), Some(r)),
            Outcome::Right(r) => (None, Some(r)),
            Outcome::Exact(y) => (Some(y), Some(y)),
        }
    }

    /// Build from file columns. Left rows need `L`, right rows need `R`,
    /// interval rows need `L < R`, exact rows need `L == R`.
    pub fn from_bounds(left: Option<f64>, right: Option<f64>, delta: CensoringCode) -> Result<Self> {
        let out = match (delta, left, right) {
            (CensoringCode::Left, Some(l), _) => Outcome::Left(l),
            (CensoringCode::Right, _, Some(r)) => Outcome::Right(r),
            (CensoringCode::Interval, Some(l), Some(r)) => Outcome::Interval(l, r),
            (CensoringCode::Exact, Some(l), Some(r)) => {
                if l != r {
                    return Err(Error::InexactEvent { left: l, right: r });
                }
                Outcome::Exact(l)
            }
            _ => return Err(Error::Domain("missing censoring bound for this censoring code")),
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Outcome::Left(v) | Outcome::Right(v) if v.is_nan() => Err(Error::NonFinite("censoring bound")),
            Outcome::Interval(l, r) => {
                if l.is_nan() || r.is_nan() {
                    Err(Error::NonFinite("censoring bound"))
                } else if l >= r {
                    Err(Error::InvalidInterval { left: l, right: r })
                } else {
                    Ok(())
                }
            }
            Outcome::Exact(y) if !y.is_finite() => Err(Error::NonFinite("event time")),
            _ => Ok(()),
        }
    }
}

/// One subject: outcome, endogenous covariate `x`, confounders `z`,
/// instruments `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub outcome: Outcome,
    pub x: f64,
    pub z: Vec<f64>,
    pub g: Vec<f64>,
}

impl Observation {
    pub fn new(outcome: Outcome, x: f64, z: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let obs = Self { outcome, x, z, g };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        self.outcome.validate()?;
        if !self.x.is_finite() {
            return Err(Error::NonFinite("x"));
        }
        if !self.z.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("z"));
        }
        if !self.g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("g"));
        }
        Ok(())
    }

    pub fn delta(&self) -> CensoringCode {
        self.outcome.delta()
    }
}

/// A validated, dimension-consistent collection of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    p: usize,
    q: usize,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations.first().ok_or(Error::Empty("dataset"))?;
        let (p, q) = (first.z.len(), first.g.len());
        for obs in &observations {
            obs.validate()?;
            if obs.z.len() != p {
                return Err(Error::DimensionMismatch { expected: p, got: obs.z.len() });
            }
            if obs.g.len() != q {
                return Err(Error::DimensionMismatch { expected: q, got: obs.g.len() });
            }
        }
        Ok(Self { observations, p, q })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn into_observations(self) -> Vec<Observation> {
        self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of observed confounders.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of instruments.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn count_by_code(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for obs in &self.observations {
            counts[obs.delta().code() as usize - 1] += 1;
        }
        counts
    }
}

/// Structural coefficients. `beta1` is the causal effect.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionParams {
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub beta1: f64,
    pub beta2: Vec<f64>,
}

/// Which block a flattened coordinate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    Alpha1(usize),
    Alpha2(usize),
    Beta1,
    Beta2(usize),
}

impl RegressionParams {
    pub fn zeros(p: usize, q: usize) -> Self {
        Self { alpha1: vec![0.0; q], alpha2: vec![0.0; p], beta1: 0.0, beta2: vec![0.0; p] }
    }

    pub fn p(&self) -> usize {
        self.alpha2.len()
    }

    pub fn q(&self) -> usize {
        self.alpha1.len()
    }

    pub fn check_dims(&self, p: usize, q: usize) -> Result<()> {
        if self.alpha1.len() != q {
            return Err(Error::DimensionMismatch { expected: q, got: self.alpha1.len() });
        }
        for v in [&self.alpha2, &self.beta2] {
            if v.len() != p {
                return Err(Error::DimensionMismatch { expected: p, got: v.len() });
            }
        }
        Ok(())
    }

    /// Coordinates in update order: α1, α2, β1, β2.
    pub fn n_coords(&self) -> usize {
        self.alpha1.len() + 2 * self.alpha2.len() + 1
    }

    pub fn coord(&self, i: usize) -> Coord {
        let (q, p) = (self.alpha1.len(), self.alpha2.len());
        if i < q {
            Coord::Alpha1(i)
        } else if i < q + p {
            Coord::Alpha2(i - q)
        } else if i == q + p {
            Coord::Beta1
        } else {
            Coord::Beta2(i - q - p - 1)
        }
    }

    pub fn get(&self, c: Coord) -> f64 {
        match c {
            Coord::Alpha1(j) => self.alpha1[j],
            Coord::Alpha2(j) => self.alpha2[j],
            Coord::Beta1 => self.beta1,
            Coord::Beta2(j) => self.beta2[j],
        }
    }

    pub fn set(&mut self, c: Coord, v: f64) {
        match c {
            Coord::Alpha1(j) => self.alpha1[j] = v,
            Coord::Alpha2(j) => self.alpha2[j] = v,
            Coord::Beta1 => self.beta1 = v,
            Coord::Beta2(j) => self.beta2[j] = v,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        (0..self.n_coords()).map(|i| self.get(self.coord(i))).collect()
    }

    pub fn coord_name(&self, i: usize) -> String {
        match self.coord(i) {
            Coord::Alpha1(j) => format!("alpha1_{}", j + 1),
            Coord::Alpha2(j) => format!("alpha2_{}", j + 1),
            Coord::Beta1 => String::from("beta1"),
            Coord::Beta2(j) => format!("beta2_{}", j + 1),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// One bivariate-normal mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub rho: f64,
}

impl ClusterParams {
    pub fn new(mu1: f64, mu2: f64, sigma1_sq: f64, sigma2_sq: f64, rho: f64) -> Result<Self> {
        let theta = Self { mu1, mu2, sigma1_sq, sigma2_sq, rho };
        if !theta.is_valid() {
            return Err(Error::Domain("cluster parameters need finite means, positive variances and |rho| < 1"));
        }
        Ok(theta)
    }

    pub fn is_valid(&self) -> bool {
        self.mu1.is_finite()
            && self.mu2.is_finite()
            && self.sigma1_sq > 0.0
            && self.sigma1_sq.is_finite()
            && self.sigma2_sq > 0.0
            && self.sigma2_sq.is_finite()
            && self.rho > -1.0
            && self.rho < 1.0
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let c = self.rho * crate::math::sqrt(self.sigma1_sq * self.sigma2_sq);
        [[self.sigma1_sq, c], [c, self.sigma2_sq]]
    }
}

/// Base measure of the Dirichlet process: independent normal means,
/// inverse-gamma variances and a uniform correlation on `[-1, 1]`.
/// Also the prior for the parametric comparator's single component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H0Spec {
    pub mu1_mean: f64,
    pub mu1_var: f64,
    pub mu2_mean: f64,
    pub mu2_var: f64,
    pub var_shape: f64,
    pub var_scale: f64,
}

impl Default for H0Spec {
    fn default() -> Self {
        Self { mu1_mean: 0.0, mu1_var: 10.0, mu2_mean: 0.0, mu2_var: 10.0, var_shape: 0.1, var_scale: 0.001 }
    }
}

impl H0Spec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu1_mean.is_finite()
            && self.mu2_mean.is_finite()
            && self.mu1_var > 0.0
            && self.mu2_var > 0.0
            && self.var_shape > 0.0
            && self.var_scale > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(String::from("base measure needs positive variances, shape and scale")))
        }
    }

    /// Prior mean of a variance component when it exists (shape > 1),
    /// otherwise 1.
    pub fn variance_start(&self) -> f64 {
        if self.var_shape > 1.0 {
            self.var_scale / (self.var_shape - 1.0)
        } else {
            1.0
        }
    }
}
