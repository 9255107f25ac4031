//! Random operators for property tests and synthetic models.

use nalgebra::DVector;
use rand::Rng;

use crate::nonmarkovian::CompositeModel;
use crate::space::{hermitian_function, trace, CMatrix, DensityMatrix, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller, cosine branch only.
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn complex_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| C64::new(gaussian(rng), gaussian(rng)))
}

/// Hermitian matrix from the GUE-like ensemble `(A + A^dagger)/2`.
pub fn hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let a = complex_matrix(n, rng);
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn traceless_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let h = hermitian(n, rng);
    let shift = trace(&h) / C64::new(n as f64, 0.0);
    h - CMatrix::identity(n, n) * shift
}

/// Traceless operator of unit trace norm (not necessarily Hermitian).
pub fn traceless_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let a = complex_matrix(n, rng);
    let shift = trace(&a) / C64::new(n as f64, 0.0);
    let a = a - CMatrix::identity(n, n) * shift;
    let norm = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    a / C64::new(norm, 0.0)
}

/// Full-rank random state `A A^dagger / Tr(A A^dagger)`.
pub fn density_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
    let a = complex_matrix(n, rng);
    let m = &a * a.adjoint();
    let tr = trace(&m);
    DensityMatrix::new(m / tr).expect("A A^dagger is a valid state")
}

/// State strictly inside the state body: a mixture of a random state with the
/// maximally mixed state, `mix` in (0, 1].
pub fn interior_density<R: Rng + ?Sized>(n: usize, mix: f64, rng: &mut R) -> DensityMatrix {
    let sigma = density_matrix(n, rng);
    let id = CMatrix::identity(n, n) / C64::new(n as f64, 0.0);
    DensityMatrix::new(sigma.entries() * C64::new(mix, 0.0) + id * C64::new(1.0 - mix, 0.0))
        .expect("convex combination of states")
}

/// Point uniformly distributed in the ball of radius `r` in dimension `d`.
pub fn point_in_ball<R: Rng + ?Sized>(d: usize, r: f64, rng: &mut R) -> DVector<f64> {
    let v = DVector::from_fn(d, |_, _| gaussian(rng));
    let radius = r * rng.gen::<f64>().powf(1.0 / d as f64);
    v.normalize() * radius
}

/// Gibbs state `e^{-beta H} / Z`.
pub fn thermal_state(h: &CMatrix, beta: f64) -> DensityMatrix {
    let shift = h.clone().symmetric_eigenvalues().min();
    let w = hermitian_function(h, |e| C64::new((-beta * (e - shift)).exp(), 0.0));
    let z = trace(&w);
    DensityMatrix::new(w / z).expect("Gibbs state of a Hermitian matrix")
}

/// Composite with random Hermitian `H_S`, `H_B`, `V` and a thermal bath
/// state at inverse temperature `beta`.
pub fn composite_model<R: Rng + ?Sized>(
    n_sys: usize,
    n_bath: usize,
    beta: f64,
    rng: &mut R,
) -> CompositeModel {
    let h_s = hermitian(n_sys, rng);
    let h_b = hermitian(n_bath, rng);
    let v = hermitian(n_sys * n_bath, rng);
    let rho_b = thermal_state(&h_b, beta);
    CompositeModel::new(h_s, h_b, v, rho_b).expect("random composite is valid")
}
