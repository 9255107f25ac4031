//! Single-state propagation: fixed-step RK4 along a flow field, and the
//! closed-form spin-boson solution.

use nalgebra::{DVector, Matrix3, Vector3};

use crate::dynamics::{rk4_step, LinearDynamics};
use crate::ensemble::{rotation_z, scaling};
use crate::error::{Error, Result};
use crate::flow::{check_rates, spin_boson_flow, Flow, FlowField};
use crate::space::{check_density, hermitian_basis, DensityMatrix, HermitianBasis, StateCoords};

/// Default step is `DEFAULT_DT_OMEGA / omega`.
pub const DEFAULT_DT_OMEGA: f64 = 1e-3;
/// Allowed drift out of the state body before integration is abandoned.
pub const DRIFT_TOL: f64 = 1e-6;

/// Integral curve of a flow field sampled on a uniform time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    field: FlowField,
    times: Vec<f64>,
    points: Vec<StateCoords>,
}

impl Trajectory {
    pub fn field(&self) -> &FlowField {
        &self.field
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[StateCoords] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &StateCoords {
        self.points.last().expect("trajectories hold at least the initial point")
    }
}

/// Classical RK4 on `cdot = A c + b` from `t = 0` to `t_end`. The step is
/// `t_end / ceil(t_end / dt)`, never larger than `dt`, so the last point lands
/// exactly on `t_end`.
pub fn integrate(field: &FlowField, c0: &StateCoords, t_end: f64, dt: f64) -> Result<Trajectory> {
    let (times, points) = integrate_flow(field, field.dim(), c0, t_end, dt)?;
    Ok(Trajectory {
        field: field.clone(),
        times,
        points,
    })
}

/// RK4 for any (possibly time-dependent) flow on coordinates of dimension `dim`.
pub fn integrate_flow<F: Flow + ?Sized>(
    flow: &F,
    dim: usize,
    c0: &StateCoords,
    t_end: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<StateCoords>)> {
    if !t_end.is_finite() || t_end < 0.0 {
        return Err(Error::Domain(format!("t_end must be >= 0, got {t_end}")));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    if c0.dim() != dim || flow.n_coords() != dim * dim - 1 {
        return Err(Error::Shape(format!(
            "initial state of dimension {} for a flow on {} coordinates",
            c0.dim(),
            flow.n_coords()
        )));
    }
    let checker = ValidityCheck::new(dim)?;
    if let Some(reason) = checker.violation(c0.coords(), 1e-8) {
        return Err(Error::Domain(format!("initial state is not valid: {reason}")));
    }

    let n_steps = (t_end / dt).ceil() as usize;
    let h = if n_steps == 0 { 0.0 } else { t_end / n_steps as f64 };
    let rhs = |t: f64, c: &DVector<f64>| flow.velocity_at(c, t);

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut points = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    points.push(c0.clone());
    let mut c = c0.coords().clone();
    for k in 0..n_steps {
        let t = k as f64 * h;
        c = rk4_step(&rhs, t, &c, h);
        let t_next = if k + 1 == n_steps { t_end } else { (k + 1) as f64 * h };
        if let Some(reason) = checker.violation(&c, DRIFT_TOL) {
            return Err(Error::IntegrationFailure {
                t: t_next,
                reason,
            });
        }
        times.push(t_next);
        points.push(StateCoords::new(dim, c.clone())?);
    }
    Ok((times, points))
}

struct ValidityCheck {
    basis: Option<HermitianBasis>,
}

impl ValidityCheck {
    fn new(dim: usize) -> Result<Self> {
        Ok(Self {
            basis: (dim > 2).then(|| hermitian_basis(dim)).transpose()?,
        })
    }

    fn violation(&self, c: &DVector<f64>, tol: f64) -> Option<String> {
        if c.iter().any(|x| !x.is_finite()) {
            return Some("non-finite coordinates".into());
        }
        match &self.basis {
            None => {
                let r = c.norm();
                (r > 1.0 + tol).then(|| format!("Bloch radius {r}"))
            }
            Some(basis) => {
                let m = basis.operator_from(c, 1.0).ok()?;
                let d = check_density(&m, tol);
                (!d.pass).then(|| format!("min eigenvalue {:.3e}", d.min_eigenvalue))
            }
        }
    }
}

/// Markovian spin-boson model: precession at `omega`, dephasing rate
/// `gamma_phi`, relaxation rate `gamma_relax` into the ground state `z = -1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinBoson {
    pub omega: f64,
    pub gamma_phi: f64,
    pub gamma_relax: f64,
}

impl SpinBoson {
    pub fn new(omega: f64, gamma_phi: f64, gamma_relax: f64) -> Result<Self> {
        if !omega.is_finite() {
            return Err(Error::Validation(format!("omega must be finite, got {omega}")));
        }
        check_rates(gamma_phi, gamma_relax)?;
        Ok(Self {
            omega,
            gamma_phi,
            gamma_relax,
        })
    }

    pub fn closed(omega: f64) -> Result<Self> {
        Self::new(omega, 0.0, 0.0)
    }

    pub fn flow(&self) -> FlowField {
        spin_boson_flow(self.omega, self.gamma_phi, self.gamma_relax)
            .expect("rates validated on construction")
    }

    /// Decay rate of the transverse components, `gamma_phi + Gamma/2`.
    pub fn transverse_rate(&self) -> f64 {
        self.gamma_phi + 0.5 * self.gamma_relax
    }

    /// `kappa = 2 (gamma_phi + Gamma)`.
    pub fn kappa(&self) -> f64 {
        2.0 * (self.gamma_phi + self.gamma_relax)
    }

    /// Axis scale factors `[e^{-(gamma_phi+Gamma/2)t}, same, e^{-Gamma t}]`.
    pub fn nu(&self, t: f64) -> Vector3<f64> {
        let a = (-self.transverse_rate() * t).exp();
        Vector3::new(a, a, (-self.gamma_relax * t).exp())
    }

    /// Linear part of the trajectory map, `S(nu(t)) R_z(omega t)`.
    pub fn linear_map(&self, t: f64) -> Matrix3<f64> {
        scaling(&self.nu(t)).matrix() * rotation_z(self.omega * t).matrix()
    }

    /// Closed-form trajectory point.
    pub fn evolve(&self, c0: &Vector3<f64>, t: f64) -> Vector3<f64> {
        let a = (-self.transverse_rate() * t).exp();
        let (s, c) = (self.omega * t).sin_cos();
        Vector3::new(
            a * (c0.x * c - c0.y * s),
            a * (c0.y * c + c0.x * s),
            (-self.gamma_relax * t).exp() * (1.0 + c0.z) - 1.0,
        )
    }

    /// Initial condition that reaches `c` after time `t`.
    pub fn inverse(&self, c: &Vector3<f64>, t: f64) -> Vector3<f64> {
        self.evolve(c, -t)
    }
}

impl LinearDynamics for SpinBoson {
    fn dimension(&self) -> usize {
        3
    }

    fn velocity(&self, x: &DVector<f64>) -> DVector<f64> {
        self.flow().velocity(x)
    }

    fn evolve(&self, x0: &DVector<f64>, t: f64) -> DVector<f64> {
        let v = SpinBoson::evolve(self, &Vector3::new(x0[0], x0[1], x0[2]), t);
        DVector::from_column_slice(v.as_slice())
    }

    fn compressibility(&self) -> f64 {
        self.kappa()
    }
}

/// Closed-form spin-boson state at time `t`.
pub fn spin_boson_analytic(
    c0: &StateCoords,
    omega: f64,
    gamma_phi: f64,
    gamma_relax: f64,
    t: f64,
) -> Result<StateCoords> {
    let v = c0
        .as_vector3()
        .ok_or_else(|| Error::Shape("spin-boson states are two-level".into()))?;
    if t < 0.0 {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    let model = SpinBoson::new(omega, gamma_phi, gamma_relax)?;
    Ok(StateCoords::from_vector3(&model.evolve(&v, t)))
}

/// `Tr(sigma^2)`.
pub fn purity(sigma: &DensityMatrix) -> f64 {
    sigma.entries().iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::closed_flow;
    use crate::random;
    use crate::space::{from_coords, projector, to_coords, CMatrix, C64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn closed_precession_is_periodic() {
        let omega = 1.0;
        let f = spin_boson_flow(omega, 0.0, 0.0).unwrap();
        let c0 = StateCoords::bloch(1.0, 0.0, 0.0);
        let tr = integrate(&f, &c0, 2.0 * PI / omega, 1e-3 / omega).unwrap();
        assert!((tr.last().coords() - c0.coords()).amax() < 1e-8);
        assert_eq!(tr.times()[0], 0.0);
        assert_eq!(*tr.times().last().unwrap(), 2.0 * PI);
        assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn spin_boson_relaxation_matches_closed_form() {
        let omega = 1.0;
        let g = omega / 3.0;
        let f = spin_boson_flow(omega, g, g).unwrap();
        let c0 = StateCoords::bloch(0.0, 0.0, 1.0);
        let t_end = 3.0 / g;
        let want_z = 2.0 * (-3.0f64).exp() - 1.0;
        assert!((want_z + 0.900426).abs() < 1e-6);
        let tr = integrate(&f, &c0, t_end, 1e-3 / omega).unwrap();
        assert!((tr.last().coords()[2] - want_z).abs() < 1e-10);
        let exact = spin_boson_analytic(&c0, omega, g, g, t_end).unwrap();
        assert!((exact.coords()[2] - want_z).abs() < 1e-14);
    }

    #[test]
    fn zero_field_keeps_state_fixed() {
        let f = spin_boson_flow(0.0, 0.0, 0.0).unwrap();
        let c0 = StateCoords::bloch(0.2, 0.3, -0.4);
        let tr = integrate(&f, &c0, 1.0, 0.1).unwrap();
        assert!(tr.points().iter().all(|p| p == &c0));
    }

    #[test]
    fn integrate_rejects_bad_arguments() {
        let f = spin_boson_flow(1.0, 0.0, 0.0).unwrap();
        let c0 = StateCoords::bloch(0.0, 0.0, 1.0);
        assert!(matches!(integrate(&f, &c0, -1.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(integrate(&f, &c0, 1.0, 0.0), Err(Error::Domain(_))));
        let outside = StateCoords::bloch(1.5, 0.0, 0.0);
        assert!(matches!(integrate(&f, &outside, 1.0, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn unphysical_flow_fails_integration() {
        // an expanding field pushes states out of the Bloch ball
        let f = FlowField::bloch(
            nalgebra::DMatrix::identity(3, 3),
            DVector::zeros(3),
        )
        .unwrap();
        let r = integrate(&f, &StateCoords::bloch(0.5, 0.0, 0.0), 2.0, 1e-2);
        assert!(matches!(r, Err(Error::IntegrationFailure { .. })));
    }

    #[test]
    fn analytic_examples() {
        let c = spin_boson_analytic(&StateCoords::bloch(1.0, 0.0, 0.0), 1.0, 0.0, 0.0, PI / 2.0)
            .unwrap();
        assert!((c.coords() - DVector::from_column_slice(&[0.0, 1.0, 0.0])).amax() < 1e-15);

        let ground = StateCoords::bloch(0.0, 0.0, -1.0);
        for &(w, gp, gr, t) in &[(1.0, 0.3, 0.2, 5.0), (2.0, 0.0, 1.0, 0.1)] {
            assert_eq!(spin_boson_analytic(&ground, w, gp, gr, t).unwrap(), ground);
        }

        let omega = 1.0;
        let t = 2.0 * PI / (3.0 * omega);
        let c = spin_boson_analytic(&StateCoords::bloch(1.0, 0.0, 0.0), omega, omega / 3.0, omega / 3.0, t)
            .unwrap();
        let v = c.coords();
        let radius = v[0].hypot(v[1]);
        assert!((radius - (-PI / 3.0).exp()).abs() < 1e-15);
        assert!((radius - 0.350920).abs() < 1e-6);
        assert!((v[1].atan2(v[0]) - 2.0 * PI / 3.0).abs() < 1e-14);
        let tr = integrate(&spin_boson_flow(omega, omega / 3.0, omega / 3.0).unwrap(),
            &StateCoords::bloch(1.0, 0.0, 0.0), t, 1e-3).unwrap();
        assert!((tr.last().coords() - v).amax() < 1e-10);
    }

    #[test]
    fn purity_examples() {
        let b = hermitian_basis(2).unwrap();
        assert!((purity(&DensityMatrix::new(projector(2, 0)).unwrap()) - 1.0).abs() < 1e-15);
        assert!((purity(&DensityMatrix::maximally_mixed(2)) - 0.5).abs() < 1e-15);

        let r = (-PI / 3.0).exp();
        let sigma = from_coords(&StateCoords::bloch(r, 0.0, 0.0), &b).unwrap();
        assert!((purity(&sigma) - 0.561572).abs() < 1e-6);

        // full state on the same trajectory, including its z component
        let c = spin_boson_analytic(&StateCoords::bloch(1.0, 0.0, 0.0), 1.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 * PI / 3.0)
            .unwrap();
        let sigma = from_coords(&c, &b).unwrap();
        assert!((purity(&sigma) - (1.0 + c.norm().powi(2)) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn endpoint_is_a_valid_state() {
        let omega = 1.0;
        let gamma = 0.4;
        let f = spin_boson_flow(omega, 0.2, gamma).unwrap();
        let tr = integrate(&f, &StateCoords::bloch(0.0, 0.0, 1.0), 10.0 / gamma, 1e-2).unwrap();
        let b = hermitian_basis(2).unwrap();
        let sigma = from_coords(tr.last(), &b).unwrap();
        assert!(check_density(sigma.entries(), 1e-10).pass);
    }

    #[test]
    fn closed_evolution_preserves_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = hermitian_basis(3).unwrap();
        let f = closed_flow(&random::hermitian(3, &mut rng), &b).unwrap();
        let sigma0 = random::density_matrix(3, &mut rng);
        let c0 = to_coords(&sigma0, &b).unwrap();
        let spectrum = |m: &CMatrix| {
            let mut e: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
            e.sort_by(f64::total_cmp);
            e
        };
        let e0 = spectrum(sigma0.entries());
        let tr = integrate(&f, &c0, 2.0, 1e-3).unwrap();
        for p in tr.points().iter().step_by(100) {
            let sigma = from_coords(p, &b).unwrap();
            let e = spectrum(sigma.entries());
            for (a, b) in e.iter().zip(&e0) {
                assert!((a - b).abs() < 1e-8);
            }
            assert!((purity(&sigma) - purity(&sigma0)).abs() < 1e-8);
        }
        // RK4 against the exact exponential map
        let exact = f.evolve_exact(&c0, 2.0).unwrap();
        assert!((exact.coords() - tr.last().coords()).amax() < 1e-10);
    }

    #[test]
    fn distance_to_ground_state_never_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let model = SpinBoson::new(1.0, rng.gen_range(0.0..1.0), rng.gen_range(0.01..1.0)).unwrap();
            let c0 = random::point_in_ball(3, 1.0, &mut rng);
            let c0 = Vector3::new(c0[0], c0[1], c0[2]);
            let ground = Vector3::new(0.0, 0.0, -1.0);
            let mut last = f64::INFINITY;
            for k in 0..200 {
                let d = (model.evolve(&c0, k as f64 * 0.05) - ground).norm();
                assert!(d <= last + 1e-15);
                last = d;
            }
        }
    }

    #[test]
    fn linear_map_and_inverse() {
        let model = SpinBoson::new(1.3, 0.2, 0.5).unwrap();
        let c0 = Vector3::new(0.1, -0.4, 0.3);
        let t = 0.9;
        let c = model.evolve(&c0, t);
        let offset = model.evolve(&Vector3::zeros(), t);
        assert!((model.linear_map(t) * c0 + offset - c).amax() < 1e-15);
        assert!((model.inverse(&c, t) - c0).amax() < 1e-14);
        let det = model.linear_map(t).determinant();
        assert!((det - (-model.kappa() * t).exp()).abs() < 1e-15);
    }

    #[test]
    fn time_dependent_flow_integrates() {
        use crate::flow::{spin_boson_hamiltonian, TimeDependentGksl};
        let b = hermitian_basis(2).unwrap();
        // constant H(t) reproduces the autonomous solution
        let flow = TimeDependentGksl::new(|_t| spin_boson_hamiltonian(1.0), vec![], b);
        let c0 = StateCoords::bloch(1.0, 0.0, 0.0);
        let (_, pts) = integrate_flow(&flow, 2, &c0, PI / 2.0, 1e-3).unwrap();
        let last = pts.last().unwrap();
        assert!((last.coords() - DVector::from_column_slice(&[0.0, 1.0, 0.0])).amax() < 1e-10);
        let _ = C64::new(0.0, 0.0);
    }
}
