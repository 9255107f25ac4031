//! Probability distributions over the Bloch ball and their transport under
//! the spin-boson flow: Monte Carlo pushforward, analytic Gaussian
//! propagation, pull-back densities and the boundary-flux continuity check.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::space::{from_coords, hermitian_basis, DensityMatrix, StateCoords};
use crate::trajectory::SpinBoson;
use crate::transport::{
    covariance_of, flux_balance, mean_of, pairwise_sum, Ball, FluxReport, FluxSettings, Gaussian,
    NormalStream,
};

/// Draws used to estimate the truncated mass of a [`TruncatedGaussian`].
pub const MASS_SAMPLES: usize = 200_000;
/// Seed of the mass estimate; fixed so the normalization is reproducible.
pub const MASS_SEED: u64 = 0x6d61_7373;
/// Sampling gives up once this many draws were tried at an acceptance
/// rate below [`MIN_ACCEPTANCE`].
pub const MIN_ATTEMPTS: u64 = 10_000;
pub const MIN_ACCEPTANCE: f64 = 1e-3;
/// Slack on `|c| <= 1` when validating propagated samples.
pub const BALL_TOL: f64 = 1e-10;

/// A real 3x3 linear map on Bloch coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMap3 {
    matrix: Matrix3<f64>,
}

impl LinearMap3 {
    pub fn new(matrix: Matrix3<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.matrix
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * v
    }

    pub fn compose(&self, inner: &LinearMap3) -> LinearMap3 {
        LinearMap3::new(self.matrix * inner.matrix)
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }
}

/// Rotation by `theta` about the z axis.
pub fn rotation_z(theta: f64) -> LinearMap3 {
    let (s, c) = theta.sin_cos();
    LinearMap3::new(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

/// `diag(nu)`.
pub fn scaling(nu: &Vector3<f64>) -> LinearMap3 {
    LinearMap3::new(Matrix3::from_diagonal(nu))
}

/// Where a distribution is allowed to be nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// All of R^3.
    Unbounded,
    /// `|diag(scale) c| <= 1`; `scale = [1, 1, 1]` is the Bloch ball.
    Ellipsoid(Vector3<f64>),
}

impl Support {
    pub fn unit_ball() -> Self {
        Support::Ellipsoid(Vector3::new(1.0, 1.0, 1.0))
    }

    pub fn contains(&self, c: &Vector3<f64>) -> bool {
        match self {
            Support::Unbounded => true,
            Support::Ellipsoid(scale) => c.component_mul(scale).norm() <= 1.0,
        }
    }

    fn rescaled(&self, nu: &Vector3<f64>) -> Self {
        match self {
            Support::Unbounded => Support::Unbounded,
            Support::Ellipsoid(scale) => Support::Ellipsoid(scale.component_mul(nu)),
        }
    }
}

/// `N(c; mean, covariance)` restricted to a support, normalized by the mass
/// of the Gaussian inside it.
#[derive(Debug, Clone)]
pub struct TruncatedGaussian {
    mean: Vector3<f64>,
    covariance: Matrix3<f64>,
    gaussian: Gaussian,
    support: Support,
    log_norm: f64,
}

impl TruncatedGaussian {
    /// `truncated` restricts the support to the Bloch ball and estimates
    /// the retained mass by Monte Carlo.
    pub fn new(mean: Vector3<f64>, covariance: Matrix3<f64>, truncated: bool) -> Result<Self> {
        let support = if truncated {
            Support::unit_ball()
        } else {
            Support::Unbounded
        };
        let mut dist = Self::with_log_norm(mean, covariance, support, 0.0)?;
        if truncated {
            dist.log_norm = dist.estimate_mass()?.ln();
        }
        Ok(dist)
    }

    pub fn untruncated(mean: Vector3<f64>, covariance: Matrix3<f64>) -> Result<Self> {
        Self::new(mean, covariance, false)
    }

    /// Explicit normalization, for distributions derived from a known parent.
    pub fn with_log_norm(
        mean: Vector3<f64>,
        covariance: Matrix3<f64>,
        support: Support,
        log_norm: f64,
    ) -> Result<Self> {
        if !mean.iter().all(|x| x.is_finite()) || !covariance.iter().all(|x| x.is_finite()) {
            return Err(Error::Validation("mean and covariance must be finite".into()));
        }
        let gaussian = Gaussian::new(to_dvector(&mean), to_dmatrix(&covariance))?;
        Ok(Self {
            mean,
            covariance,
            gaussian,
            support,
            log_norm,
        })
    }

    fn estimate_mass(&self) -> Result<f64> {
        let mut stream = NormalStream::new(MASS_SEED);
        let inside = (0..MASS_SAMPLES)
            .filter(|_| self.support.contains(&to_vector3(&self.gaussian.draw(&mut stream))))
            .count();
        if inside == 0 {
            return Err(Error::PathologicalTruncation {
                rate: 0.0,
                attempts: MASS_SAMPLES as u64,
            });
        }
        Ok(inside as f64 / MASS_SAMPLES as f64)
    }

    pub fn mean(&self) -> Vector3<f64> {
        self.mean
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        self.covariance
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn is_truncated(&self) -> bool {
        self.support != Support::Unbounded
    }

    /// Log of the Gaussian mass retained by the support.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// The Gaussian factor alone, ignoring support and normalization.
    pub fn kernel(&self, c: &Vector3<f64>) -> f64 {
        self.gaussian.pdf(&to_dvector(c))
    }

    pub fn log_density(&self, c: &Vector3<f64>) -> f64 {
        if !self.support.contains(c) {
            return f64::NEG_INFINITY;
        }
        self.gaussian.log_pdf(&to_dvector(c)) - self.log_norm
    }

    pub fn density(&self, c: &Vector3<f64>) -> f64 {
        self.log_density(c).exp()
    }
}

fn to_dvector(v: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

fn to_vector3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

/// Equally weighted Bloch vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEnsemble {
    points: Vec<Vector3<f64>>,
    seed: u64,
    acceptance_rate: f64,
}

impl SampleEnsemble {
    /// Validates every point against the Bloch ball.
    pub fn from_points(points: Vec<Vector3<f64>>, seed: u64) -> Result<Self> {
        if let Some(bad) = points.iter().find(|p| p.norm().is_nan() || p.norm() > 1.0 + BALL_TOL) {
            return Err(Error::Validation(format!(
                "ensemble point {bad:?} lies outside the Bloch ball"
            )));
        }
        Ok(Self {
            points,
            seed,
            acceptance_rate: 1.0,
        })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn states(&self) -> Vec<StateCoords> {
        self.points.iter().map(StateCoords::from_vector3).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.points.len() as f64
    }

    /// Accepted fraction of Gaussian draws when the ensemble was sampled.
    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_rate
    }
}

/// `n` i.i.d. draws from `dist`; draws outside the support are rejected.
///
/// Untruncated distributions can place points outside the Bloch ball; they
/// are kept, since the untruncated Gaussian is a test object for moment
/// transport rather than a physical ensemble.
pub fn sample(dist: &TruncatedGaussian, n: usize, seed: u64) -> Result<SampleEnsemble> {
    if n == 0 {
        return Err(Error::Domain("sample size must be >= 1".into()));
    }
    let mut stream = NormalStream::new(seed);
    let mut points = Vec::with_capacity(n);
    let mut attempts: u64 = 0;
    while points.len() < n {
        attempts += 1;
        let c = to_vector3(&dist.gaussian.draw(&mut stream));
        if dist.support.contains(&c) {
            points.push(c);
        }
        let rate = points.len() as f64 / attempts as f64;
        if attempts >= MIN_ATTEMPTS && rate < MIN_ACCEPTANCE {
            return Err(Error::PathologicalTruncation { rate, attempts });
        }
    }
    Ok(SampleEnsemble {
        acceptance_rate: n as f64 / attempts as f64,
        points,
        seed,
    })
}

/// Moves every sample along its trajectory: `c -> propagator(c, t)`.
pub fn pushforward<F>(ens: &SampleEnsemble, propagator: F, t: f64) -> Result<SampleEnsemble>
where
    F: Fn(&Vector3<f64>, f64) -> Vector3<f64> + Sync,
{
    if t == 0.0 {
        return Ok(ens.clone());
    }
    let points: Vec<Vector3<f64>> = ens.points.par_iter().map(|c| propagator(c, t)).collect();
    // Points that started outside the ball (untruncated ensembles) are
    // only required to stay finite.
    for (c0, c) in ens.points.iter().zip(&points) {
        let ok = c.iter().all(|x| x.is_finite())
            && (c0.norm() > 1.0 + BALL_TOL || c.norm() <= 1.0 + BALL_TOL);
        if !ok {
            return Err(Error::Propagation(format!(
                "sample {c0:?} mapped to invalid state {c:?} at t = {t}"
            )));
        }
    }
    Ok(SampleEnsemble {
        points,
        seed: ens.seed,
        acceptance_rate: ens.acceptance_rate,
    })
}

/// Analytic transport of `dist0` under the spin-boson flow: the mean follows
/// its trajectory, the covariance is conjugated by `S(nu) R_z(omega t)` and
/// the support becomes `|S(nu(t)) c| <= 1`.
pub fn propagate_gaussian(
    dist0: &TruncatedGaussian,
    model: &SpinBoson,
    t: f64,
) -> Result<TruncatedGaussian> {
    if t < 0.0 {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(dist0.clone());
    }
    let j = model.linear_map(t);
    let cov = j * dist0.covariance * j.transpose();
    let cov = (cov + cov.transpose()) * 0.5;
    TruncatedGaussian::with_log_norm(
        model.evolve(&dist0.mean, t),
        cov,
        dist0.support.rescaled(&model.nu(t)),
        dist0.log_norm,
    )
}

/// Density at `c` and time `t` obtained by pulling `c` back along its
/// trajectory: `P(c; t) = P(c0; 0) e^{kappa t}`.
pub fn density_at(dist0: &TruncatedGaussian, model: &SpinBoson, c: &Vector3<f64>, t: f64) -> f64 {
    log_density_at(dist0, model, c, t).exp()
}

pub fn log_density_at(
    dist0: &TruncatedGaussian,
    model: &SpinBoson,
    c: &Vector3<f64>,
    t: f64,
) -> f64 {
    dist0.log_density(&model.inverse(c, t)) + model.kappa() * t
}

/// Comparison of the analytically transformed support with the exact image
/// of the initial support under the flow.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SupportDiagnostic {
    pub checked: usize,
    /// Points inside the transformed support whose preimage is outside the
    /// initial support.
    pub spurious: usize,
    /// Points in the exact image that the transformed support excludes.
    pub missing: usize,
}

impl SupportDiagnostic {
    pub fn agrees(&self) -> bool {
        self.spurious == 0 && self.missing == 0
    }
}

pub fn support_diagnostic(
    dist0: &TruncatedGaussian,
    model: &SpinBoson,
    t: f64,
    points: &[Vector3<f64>],
) -> Result<SupportDiagnostic> {
    let dist_t = propagate_gaussian(dist0, model, t)?;
    let mut report = SupportDiagnostic {
        checked: points.len(),
        spurious: 0,
        missing: 0,
    };
    for c in points {
        let printed = dist_t.support.contains(c);
        let exact = dist0.support.contains(&model.inverse(c, t));
        match (printed, exact) {
            (true, false) => report.spurious += 1,
            (false, true) => report.missing += 1,
            _ => {}
        }
    }
    Ok(report)
}

fn as_dvectors(ens: &SampleEnsemble) -> Vec<DVector<f64>> {
    ens.points.iter().map(to_dvector).collect()
}

/// Arithmetic mean of the samples, pairwise-summed.
pub fn ensemble_mean(ens: &SampleEnsemble) -> Result<StateCoords> {
    if ens.is_empty() {
        return Err(Error::Domain("mean of an empty ensemble".into()));
    }
    let m = mean_of(&as_dvectors(ens))?;
    Ok(StateCoords::bloch(m[0], m[1], m[2]))
}

/// Unbiased sample covariance.
pub fn ensemble_covariance(ens: &SampleEnsemble) -> Result<Matrix3<f64>> {
    let c = covariance_of(&as_dvectors(ens))?;
    Ok(Matrix3::from_column_slice(c.as_slice()))
}

/// The ensemble's density matrix, i.e. the state of its mean.
pub fn ensemble_density_matrix(ens: &SampleEnsemble) -> Result<DensityMatrix> {
    let mean = ensemble_mean(ens)?;
    from_coords(&mean, &hermitian_basis(2)?)
}

/// Integral continuity check for `dist0` transported by `model` over the
/// ball `region`, using `n` samples drawn with `seed`.
pub fn boundary_flux_check(
    model: &SpinBoson,
    dist0: &TruncatedGaussian,
    region: &Ball,
    t: f64,
    n: usize,
    seed: u64,
    settings: FluxSettings,
) -> Result<FluxReport> {
    if region.center.len() != 3 {
        return Err(Error::Shape("region must be a ball in Bloch coordinates".into()));
    }
    if region.center.norm() + region.radius > 1.0 + BALL_TOL {
        return Err(Error::Domain("region must lie inside the Bloch ball".into()));
    }
    let ens = sample(dist0, n, seed)?;
    flux_balance(
        model,
        &as_dvectors(&ens),
        |x| dist0.density(&to_vector3(x)),
        region,
        t,
        settings,
    )
}

/// Sum of squared entries.
pub fn frobenius(m: &Matrix3<f64>) -> f64 {
    pairwise_sum(&m.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt()
}
