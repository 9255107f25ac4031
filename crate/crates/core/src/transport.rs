//! Distribution transport shared by the quantum and classical models:
//! Gaussian densities, a portable normal-variate stream, order-independent
//! reductions, and the integral-form continuity check.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::dynamics::LinearDynamics;
use crate::error::{Error, Result};

/// Standard normal variates from a seeded ChaCha20 stream via Box-Muller.
///
/// Each pair of uniforms `u1, u2` (53-bit, `[0, 1)`) yields
/// `r cos(2 pi u2)` then `r sin(2 pi u2)` with `r = sqrt(-2 ln(1 - u1))`.
pub struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1: f64 = self.rng.gen();
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn next_uniform(&mut self) -> f64 {
        self.rng.gen()
    }
}

/// Pairwise (cascade) summation; the result does not depend on how a parallel
/// caller chunked the work, only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Component-wise pairwise mean of equal-length vectors.
pub fn mean_of(points: &[DVector<f64>]) -> Result<DVector<f64>> {
    let first = points
        .first()
        .ok_or_else(|| Error::Domain("mean of an empty set".into()))?;
    let d = first.len();
    let n = points.len() as f64;
    let mut buf = vec![0.0; points.len()];
    Ok(DVector::from_fn(d, |k, _| {
        for (b, p) in buf.iter_mut().zip(points) {
            *b = p[k];
        }
        pairwise_sum(&buf) / n
    }))
}

/// Unbiased sample covariance, pairwise-summed.
pub fn covariance_of(points: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    if points.len() < 2 {
        return Err(Error::Domain("covariance needs at least two points".into()));
    }
    let mean = mean_of(points)?;
    let d = mean.len();
    let n = points.len() as f64;
    let mut buf = vec![0.0; points.len()];
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            for (b, p) in buf.iter_mut().zip(points) {
                *b = (p[i] - mean[i]) * (p[j] - mean[j]);
            }
            let v = pairwise_sum(&buf) / (n - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Multivariate normal density `N(x; mean, cov)`.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cholesky: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::Shape(format!(
                "covariance {:?} for a mean of length {d}",
                covariance.shape()
            )));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-12 * covariance.amax().max(1.0) {
            return Err(Error::Validation(format!(
                "covariance is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        let cholesky = Cholesky::new(covariance.clone()).ok_or_else(|| {
            Error::Validation("covariance is not positive definite".into())
        })?;
        let log_det = 2.0 * cholesky.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(Self {
            mean,
            covariance,
            cholesky,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Squared Mahalanobis distance from the mean.
    pub fn mahalanobis2(&self, x: &DVector<f64>) -> f64 {
        let dx = x - &self.mean;
        let y = self.cholesky.l().solve_lower_triangular(&dx).expect("nonsingular factor");
        y.norm_squared()
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        -0.5 * (self.mahalanobis2(x) + self.log_det + d * (std::f64::consts::TAU).ln())
    }

    pub fn pdf(&self, x: &DVector<f64>) -> f64 {
        self.log_pdf(x).exp()
    }

    /// `mean + L z` with `z` drawn from the stream.
    pub fn draw(&self, stream: &mut NormalStream) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| stream.next_normal());
        &self.mean + self.cholesky.l() * z
    }

    /// Image under `x -> M x + v`.
    pub fn transformed(&self, m: &DMatrix<f64>, v: &DVector<f64>) -> Result<Self> {
        let cov = m * &self.covariance * m.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        Self::new(m * &self.mean + v, cov)
    }
}

/// Closed ball `|x - center| <= radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(Error::Domain(format!("ball radius must be > 0, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (x - &self.center).norm() <= self.radius
    }

    /// Quadrature nodes (outward unit normals) and the equal weight per node.
    pub fn surface_nodes(&self, n: usize) -> Result<(Vec<DVector<f64>>, f64)> {
        let d = self.center.len();
        let normals = sphere_points(d, n)?;
        let area = match d {
            2 => std::f64::consts::TAU * self.radius,
            3 => 2.0 * std::f64::consts::TAU * self.radius * self.radius,
            _ => unreachable!("sphere_points rejects other dimensions"),
        };
        Ok((normals, area / n as f64))
    }
}

/// Evenly spread unit vectors: uniform angles on the circle, or the
/// Fibonacci lattice on the sphere.
pub fn sphere_points(dim: usize, n: usize) -> Result<Vec<DVector<f64>>> {
    if n == 0 {
        return Err(Error::Domain("need at least one quadrature node".into()));
    }
    match dim {
        2 => Ok((0..n)
            .map(|k| {
                let phi = std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
                DVector::from_column_slice(&[phi.cos(), phi.sin()])
            })
            .collect()),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            Ok((0..n)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    DVector::from_column_slice(&[r * phi.cos(), r * phi.sin(), z])
                })
                .collect())
        }
        _ => Err(Error::Domain(format!(
            "surface quadrature is implemented for dimensions 2 and 3, got {dim}"
        ))),
    }
}

/// Both sides of `dP_Omega/dt = -(surface integral of j . dA)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FluxReport {
    /// Finite difference of Monte Carlo occupancy of the region.
    pub dpdt_mc: f64,
    /// Standard error of `dpdt_mc`.
    pub dpdt_std_error: f64,
    /// Outward flux `integral P xdot . n dA`; conservation predicts `dpdt = -surface_flux`.
    pub surface_flux: f64,
    /// `|dpdt_mc + surface_flux|`.
    pub discrepancy: f64,
    /// `discrepancy / max(|dpdt_mc|, |surface_flux|)`, zero when both vanish.
    pub relative_discrepancy: f64,
    /// Fraction of samples inside the region at time `t`.
    pub occupancy: f64,
}

/// Settings for [`flux_balance`].
#[derive(Debug, Clone, Copy)]
pub struct FluxSettings {
    /// Half-width of the occupancy time difference.
    pub time_step: f64,
    /// Number of surface quadrature nodes.
    pub quadrature_nodes: usize,
}

impl Default for FluxSettings {
    fn default() -> Self {
        Self {
            time_step: 1e-2,
            quadrature_nodes: 2048,
        }
    }
}

/// Integral continuity check on a ball. `samples0` are draws from the
/// normalized initial density `density0`; the density at time `t` is the
/// pull-back `density0(x0) e^{kappa t}`.
pub fn flux_balance<D, F>(
    dynamics: &D,
    samples0: &[DVector<f64>],
    density0: F,
    region: &Ball,
    t: f64,
    settings: FluxSettings,
) -> Result<FluxReport>
where
    D: LinearDynamics + ?Sized,
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    if samples0.is_empty() {
        return Err(Error::Domain("flux check needs samples".into()));
    }
    if region.center.len() != dynamics.dimension() {
        return Err(Error::Shape("region and dynamics dimensions differ".into()));
    }
    let h = settings.time_step;
    let t_minus = (t - h).max(0.0);
    let t_plus = t_minus + 2.0 * h;

    let crossings: Vec<(f64, f64)> = samples0
        .par_iter()
        .map(|x0| {
            let before = region.contains(&dynamics.evolve(x0, t_minus)) as i32;
            let after = region.contains(&dynamics.evolve(x0, t_plus)) as i32;
            let now = region.contains(&dynamics.evolve(x0, t)) as i32;
            ((after - before) as f64, now as f64)
        })
        .collect();
    let n = samples0.len() as f64;
    let diffs: Vec<f64> = crossings.iter().map(|c| c.0).collect();
    let sq: Vec<f64> = diffs.iter().map(|d| d * d).collect();
    let inside: Vec<f64> = crossings.iter().map(|c| c.1).collect();
    let mean_diff = pairwise_sum(&diffs) / n;
    let var_diff = (pairwise_sum(&sq) / n - mean_diff * mean_diff).max(0.0);
    let span = t_plus - t_minus;
    let dpdt_mc = mean_diff / span;
    let dpdt_std_error = (var_diff / n).sqrt() / span;

    let (normals, weight) = region.surface_nodes(settings.quadrature_nodes)?;
    let growth = (dynamics.compressibility() * t).exp();
    let terms: Vec<f64> = normals
        .par_iter()
        .map(|nhat| {
            let x = &region.center + nhat * region.radius;
            let p = density0(&dynamics.pull_back(&x, t)) * growth;
            p * dynamics.velocity(&x).dot(nhat) * weight
        })
        .collect();
    let surface_flux = pairwise_sum(&terms);

    let discrepancy = (dpdt_mc + surface_flux).abs();
    let scale = dpdt_mc.abs().max(surface_flux.abs());
    Ok(FluxReport {
        dpdt_mc,
        dpdt_std_error,
        surface_flux,
        discrepancy,
        relative_discrepancy: if scale > 0.0 { discrepancy / scale } else { 0.0 },
        occupancy: pairwise_sum(&inside) / n,
    })
}
