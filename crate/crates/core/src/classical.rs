//! Classical phase-space analog: harmonic and linearly damped oscillators
//! as affine flows on `x = [q, p]`, with exact distribution transport.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{AffineField, LinearDynamics};
use crate::error::{Error, Result};
use crate::transport::Gaussian;

/// A phase-space point, in physical or symmetrized coordinates
/// (`q~ = q sqrt(m omega)`, `p~ = p / sqrt(m omega)`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    q: DVector<f64>,
    p: DVector<f64>,
    symmetrized: bool,
}

impl PhaseState {
    pub fn new(q: DVector<f64>, p: DVector<f64>, symmetrized: bool) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::Shape(format!(
                "q has {} components but p has {}",
                q.len(),
                p.len()
            )));
        }
        Ok(Self { q, p, symmetrized })
    }

    /// One degree of freedom, already symmetrized.
    pub fn scalar(q: f64, p: f64) -> Self {
        Self {
            q: DVector::from_element(1, q),
            p: DVector::from_element(1, p),
            symmetrized: true,
        }
    }

    /// Splits `[q, p]`.
    pub fn from_vector(x: &DVector<f64>, symmetrized: bool) -> Result<Self> {
        if !x.len().is_multiple_of(2) {
            return Err(Error::Shape(format!("phase vector of odd length {}", x.len())));
        }
        let n = x.len() / 2;
        Self::new(x.rows(0, n).into_owned(), x.rows(n, n).into_owned(), symmetrized)
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn p(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn is_symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.q.len();
        DVector::from_fn(2 * n, |k, _| if k < n { self.q[k] } else { self.p[k - n] })
    }

    pub fn symmetrize(&self, m: f64, omega: f64) -> Result<Self> {
        check_oscillator(m, omega)?;
        if self.symmetrized {
            return Ok(self.clone());
        }
        let s = (m * omega).sqrt();
        Ok(Self {
            q: &self.q * s,
            p: &self.p / s,
            symmetrized: true,
        })
    }

    pub fn desymmetrize(&self, m: f64, omega: f64) -> Result<Self> {
        check_oscillator(m, omega)?;
        if !self.symmetrized {
            return Ok(self.clone());
        }
        let s = (m * omega).sqrt();
        Ok(Self {
            q: &self.q / s,
            p: &self.p * s,
            symmetrized: false,
        })
    }
}

fn check_oscillator(m: f64, omega: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Validation(format!("mass must be positive, got {m}")));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Validation(format!("omega must be positive, got {omega}")));
    }
    Ok(())
}

/// `xdot = A x + b` on symmetrized phase coordinates of one oscillator.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalFlow {
    mass: f64,
    omega: f64,
    damping: DMatrix<f64>,
    field: AffineField,
}

impl ClassicalFlow {
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// The dissipative matrix subtracted from the Hamiltonian part.
    pub fn damping(&self) -> &DMatrix<f64> {
        &self.damping
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        self.field.linear()
    }

    pub fn offset(&self) -> &DVector<f64> {
        self.field.offset()
    }

    pub fn field(&self) -> &AffineField {
        &self.field
    }

    /// `kappa = -tr A = tr(damping)`.
    pub fn kappa(&self) -> f64 {
        self.field.kappa()
    }

    /// Velocity of a state given in either coordinate system, returned in
    /// the same system.
    pub fn velocity_of(&self, x: &PhaseState) -> Result<PhaseState> {
        let sym = x.symmetrize(self.mass, self.omega)?;
        let v = PhaseState::from_vector(&self.field.apply(&sym.to_vector()), true)?;
        if x.is_symmetrized() {
            Ok(v)
        } else {
            v.desymmetrize(self.mass, self.omega)
        }
    }

    /// Exact trajectory sampled at `times`.
    pub fn trajectory(&self, x0: &DVector<f64>, times: &[f64]) -> Vec<DVector<f64>> {
        times.iter().map(|&t| self.field.evolve(x0, t)).collect()
    }
}

impl LinearDynamics for ClassicalFlow {
    fn dimension(&self) -> usize {
        2
    }

    fn velocity(&self, x: &DVector<f64>) -> DVector<f64> {
        self.field.apply(x)
    }

    fn evolve(&self, x0: &DVector<f64>, t: f64) -> DVector<f64> {
        self.field.evolve(x0, t)
    }

    fn compressibility(&self) -> f64 {
        self.kappa()
    }
}

/// `[q~dot, p~dot] = [omega p~, -omega q~]`.
pub fn harmonic_flow(m: f64, omega: f64) -> Result<ClassicalFlow> {
    dissipative_flow(m, omega, DMatrix::zeros(2, 2))
}

/// Harmonic flow with momentum damping `gamma`.
pub fn damped_harmonic_flow(m: f64, omega: f64, gamma: f64) -> Result<ClassicalFlow> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Validation(format!("damping must be >= 0, got {gamma}")));
    }
    dissipative_flow(m, omega, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, gamma]))
}

/// `xdot = xdot_C - damping x` for a symmetric positive-semidefinite
/// `damping` in symmetrized coordinates.
pub fn dissipative_flow(m: f64, omega: f64, damping: DMatrix<f64>) -> Result<ClassicalFlow> {
    check_oscillator(m, omega)?;
    if damping.shape() != (2, 2) {
        return Err(Error::Shape(format!("damping matrix {:?}, expected 2x2", damping.shape())));
    }
    if !damping.iter().all(|x| x.is_finite())
        || (&damping - damping.transpose()).amax() > 1e-12 * damping.amax().max(1.0)
    {
        return Err(Error::Validation("damping matrix must be finite and symmetric".into()));
    }
    let min_eig = damping.clone().symmetric_eigenvalues().min();
    if min_eig < -1e-12 * damping.amax().max(1.0) {
        return Err(Error::Validation(format!(
            "damping matrix must be positive semidefinite, min eigenvalue {min_eig:.3e}"
        )));
    }
    let hamiltonian = DMatrix::from_row_slice(2, 2, &[0.0, omega, -omega, 0.0]);
    let field = AffineField::new(&hamiltonian - &damping, DVector::zeros(2))?;
    Ok(ClassicalFlow {
        mass: m,
        omega,
        damping,
        field,
    })
}

/// Every sample moved along its exact trajectory.
pub fn classical_pushforward(
    samples: &[DVector<f64>],
    flow: &ClassicalFlow,
    t: f64,
) -> Vec<DVector<f64>> {
    let (map, shift) = flow.field.flow_map(t);
    samples.par_iter().map(|x| &map * x + &shift).collect()
}

/// `P(x; t) = P(x0; 0) e^{kappa t}` with `x0` the pull-back of `x`.
pub fn classical_density_at(dist0: &Gaussian, flow: &ClassicalFlow, x: &DVector<f64>, t: f64) -> f64 {
    classical_log_density_at(dist0, flow, x, t).exp()
}

pub fn classical_log_density_at(
    dist0: &Gaussian,
    flow: &ClassicalFlow,
    x: &DVector<f64>,
    t: f64,
) -> f64 {
    dist0.log_pdf(&flow.pull_back(x, t)) + flow.kappa() * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::divergence_numeric;
    use crate::transport::NormalStream;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_column_slice(&[a, b])
    }

    /// Underdamped `q'' + gamma q' + omega^2 q = 0` with `p~ = q~' / omega`.
    fn damped_oracle(omega: f64, gamma: f64, x0: &DVector<f64>, t: f64) -> DVector<f64> {
        let big = (omega * omega - gamma * gamma / 4.0).sqrt();
        let a = x0[0];
        let b = (omega * x0[1] + 0.5 * gamma * x0[0]) / big;
        let e = (-0.5 * gamma * t).exp();
        let (s, c) = (big * t).sin_cos();
        let q = e * (a * c + b * s);
        let dq = e * (-0.5 * gamma * (a * c + b * s) + big * (-a * s + b * c));
        v2(q, dq / omega)
    }

    #[test]
    fn velocity_examples() {
        let w = 1.7;
        let h = harmonic_flow(2.0, w).unwrap();
        assert_eq!(h.velocity(&v2(1.0, 0.0)), v2(0.0, -w));
        let d = damped_harmonic_flow(2.0, w, w / 2.0).unwrap();
        assert_eq!(d.velocity(&v2(0.0, 1.0)), v2(w, -w / 2.0));
        assert_eq!(h.kappa(), 0.0);
        assert_eq!(d.kappa(), w / 2.0);
    }

    #[test]
    fn kappa_matches_numeric_divergence() {
        let w = 1.3;
        let d = damped_harmonic_flow(0.5, w, w / 2.0).unwrap();
        for x in [v2(0.3, -0.2), v2(-4.0, 2.5)] {
            let div = divergence_numeric(|y| d.velocity(y), &x, 1e-5);
            assert!((-div - w / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(harmonic_flow(0.0, 1.0), Err(Error::Validation(_))));
        assert!(matches!(harmonic_flow(1.0, -1.0), Err(Error::Validation(_))));
        assert!(matches!(damped_harmonic_flow(1.0, 1.0, -0.1), Err(Error::Validation(_))));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(dissipative_flow(1.0, 1.0, indefinite).is_err());
        assert!(dissipative_flow(1.0, 1.0, DMatrix::identity(3, 3)).is_err());
        assert!(PhaseState::new(DVector::zeros(1), DVector::zeros(2), true).is_err());
    }

    #[test]
    fn symmetrized_coordinates_round_trip_and_reproduce_hamilton() {
        let (m, w) = (3.0, 0.5);
        let x = PhaseState::new(DVector::from_element(1, 0.7), DVector::from_element(1, -1.1), false)
            .unwrap();
        let back = x.symmetrize(m, w).unwrap().desymmetrize(m, w).unwrap();
        assert!((back.to_vector() - x.to_vector()).amax() < 1e-15);
        let v = harmonic_flow(m, w).unwrap().velocity_of(&x).unwrap();
        assert!(!v.is_symmetrized());
        // qdot = p / m, pdot = -m w^2 q
        assert!((v.q()[0] - (-1.1 / m)).abs() < 1e-15);
        assert!((v.p()[0] - (-m * w * w * 0.7)).abs() < 1e-15);
    }

    #[test]
    fn harmonic_period_is_identity() {
        let w = 2.3;
        let h = harmonic_flow(1.0, w).unwrap();
        let x0 = v2(0.4, -1.2);
        assert!((h.evolve(&x0, 2.0 * PI / w) - &x0).amax() < 1e-13);
    }

    #[test]
    fn damped_flow_matches_closed_form_and_collapses() {
        let w = 1.0;
        let d = damped_harmonic_flow(1.0, w, w / 2.0).unwrap();
        let x0 = v2(1.0, 0.5);
        for t in [0.0, 0.3, 2.0, 7.5] {
            assert!((d.evolve(&x0, t) - damped_oracle(w, w / 2.0, &x0, t)).amax() < 1e-12);
        }
        assert!(d.evolve(&x0, 80.0).amax() < 1e-6);
        assert_eq!(d.velocity(&v2(0.0, 0.0)), v2(0.0, 0.0));
        let (map, _) = d.field().flow_map(3.0);
        assert!((map.determinant() - (-1.5f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn pushforward_is_exact_map() {
        let d = damped_harmonic_flow(1.0, 1.0, 0.5).unwrap();
        let mut s = NormalStream::new(3);
        let xs: Vec<_> = (0..100).map(|_| v2(s.next_normal(), s.next_normal())).collect();
        let moved = classical_pushforward(&xs, &d, 1.7);
        for (a, b) in xs.iter().zip(&moved) {
            assert!((damped_oracle(1.0, 0.5, a, 1.7) - b).amax() < 1e-12);
        }
    }

    #[test]
    fn damped_density_grows_as_exp_gamma_t_along_oracle_trajectory() {
        let (w, g) = (1.0, 0.5);
        let d = damped_harmonic_flow(1.0, w, g).unwrap();
        let dist = Gaussian::new(v2(1.0, 0.0), DMatrix::identity(2, 2) * 0.1).unwrap();
        let x0 = v2(0.8, 0.3);
        let p0 = classical_density_at(&dist, &d, &x0, 0.0);
        for t in [0.5, 1.0, 4.0] {
            let pt = classical_density_at(&dist, &d, &damped_oracle(w, g, &x0, t), t);
            assert!((pt / p0 / (g * t).exp() - 1.0).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn harmonic_density_is_constant_along_trajectories(
            w in 0.1f64..5.0, t in 0.0f64..20.0, q in -2.0f64..2.0, p in -2.0f64..2.0,
        ) {
            let h = harmonic_flow(1.0, w).unwrap();
            let dist = Gaussian::new(v2(0.5, -0.3), DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2])).unwrap();
            let x0 = v2(q, p);
            let a = classical_log_density_at(&dist, &h, &h.evolve(&x0, t), t);
            let b = classical_log_density_at(&dist, &h, &x0, 0.0);
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!(h.kappa().abs() <= 1e-12);
        }

        #[test]
        fn general_damping_sets_kappa_to_its_trace(a in 0.0f64..2.0, b in 0.0f64..2.0, c in -1.0f64..1.0) {
            let c = c * (a * b).sqrt();
            let f = dissipative_flow(1.0, 1.0, DMatrix::from_row_slice(2, 2, &[a, c, c, b])).unwrap();
            prop_assert!((f.kappa() - (a + b)).abs() < 1e-15);
        }
    }
}
