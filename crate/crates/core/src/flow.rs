//! Dynamical flow fields of closed (Liouville-von Neumann) and open (GKSL)
//! quantum dynamics, expressed on state coordinates.
//!
//! Units: hbar = 1, energies are angular frequencies, rates are 1/time.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{divergence_numeric, AffineField, LinearDynamics};
use crate::error::{Error, Result};
use crate::space::{
    anticommutator, commutator, hermiticity_deviation, ket_bra, trace, CMatrix, HermitianBasis,
    StateCoords, Superoperator, C64, STATE_TOL,
};

/// One dissipation channel `gamma * D[L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladTerm {
    operator: CMatrix,
    rate: f64,
}

impl LindbladTerm {
    pub fn new(operator: CMatrix, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::Validation(format!(
                "Lindblad rate must be finite and non-negative, got {rate}"
            )));
        }
        if operator.nrows() != operator.ncols() {
            return Err(Error::Shape(format!(
                "Lindblad operator {:?} is not square",
                operator.shape()
            )));
        }
        Ok(Self { operator, rate })
    }

    pub fn operator(&self) -> &CMatrix {
        &self.operator
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Traceless with unit trace norm.
    pub fn is_canonical(&self, tol: f64) -> bool {
        let norm2: f64 = self.operator.iter().map(|z| z.norm_sqr()).sum();
        trace(&self.operator).norm() <= tol && (norm2 - 1.0).abs() <= tol
    }
}

/// A set of terms for which `kappa = N * sum(rates)` holds.
pub fn is_canonical_set(terms: &[LindbladTerm], tol: f64) -> bool {
    terms.iter().all(|t| t.is_canonical(tol))
}

/// `D[L] sigma = L sigma L^dagger - {L^dagger L, sigma}/2`.
pub fn dissipator(l: &CMatrix, sigma: &CMatrix) -> CMatrix {
    let ld = l.adjoint();
    let ldl = &ld * l;
    l * sigma * &ld - anticommutator(&ldl, sigma) * C64::new(0.5, 0.0)
}

/// GKSL generator `L sigma = -i[H, sigma] + sum_a gamma_a D[L_a] sigma`.
#[derive(Debug, Clone)]
pub struct Generator {
    hamiltonian: CMatrix,
    terms: Vec<LindbladTerm>,
}

impl Generator {
    pub fn new(hamiltonian: CMatrix, terms: Vec<LindbladTerm>) -> Result<Self> {
        let n = hamiltonian.nrows();
        if hamiltonian.ncols() != n {
            return Err(Error::Shape("Hamiltonian is not square".into()));
        }
        let dev = hermiticity_deviation(&hamiltonian);
        if dev > STATE_TOL {
            return Err(Error::Validation(format!(
                "Hamiltonian is not Hermitian (deviation {dev:.3e})"
            )));
        }
        if let Some(t) = terms.iter().find(|t| t.operator.nrows() != n) {
            return Err(Error::Shape(format!(
                "Lindblad operator of dimension {} with Hamiltonian of dimension {n}",
                t.operator.nrows()
            )));
        }
        Ok(Self { hamiltonian, terms })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn terms(&self) -> &[LindbladTerm] {
        &self.terms
    }

    pub fn apply(&self, sigma: &CMatrix) -> CMatrix {
        let mut out = commutator(&self.hamiltonian, sigma) * C64::new(0.0, -1.0);
        for term in &self.terms {
            if term.rate != 0.0 {
                out += dissipator(&term.operator, sigma) * C64::new(term.rate, 0.0);
            }
        }
        out
    }

    /// Assembled from Kronecker products, independently of [`apply`](Self::apply).
    pub fn superoperator(&self) -> Superoperator {
        let mut s = Superoperator::commutator(&self.hamiltonian).scale(C64::new(0.0, -1.0));
        for term in &self.terms {
            let l = &term.operator;
            let ldl = l.adjoint() * l;
            let d = &(&Superoperator::sandwich(l, &l.adjoint())
                - &(&Superoperator::left(&ldl) + &Superoperator::right(&ldl))
                    .scale(C64::new(0.5, 0.0)))
                .scale(C64::new(term.rate, 0.0));
            s = &s + d;
        }
        s
    }
}

/// Time-frozen flow field `cdot = A c + b` on state coordinates, with its
/// exact compressibility `kappa = -Tr(A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    dim: usize,
    field: AffineField,
}

impl FlowField {
    /// Projects a trace-preserving, Hermiticity-preserving linear map onto the
    /// coordinate chart: `A_kj = Tr(B_k L(B_j))`, `b_k = sqrt(N) Tr(B_k L(I/N))`.
    pub fn from_linear_map(basis: &HermitianBasis, map: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let n = basis.dim();
        let m = basis.n_coords();
        let inv_sqrt_n = 1.0 / (n as f64).sqrt();
        let mut linear = DMatrix::zeros(m, m);
        for (j, b) in basis.traceless().iter().enumerate() {
            let col = basis.coords_unchecked(&map(b)) * inv_sqrt_n;
            linear.set_column(j, &col);
        }
        let mixed = CMatrix::identity(n, n) / C64::new(n as f64, 0.0);
        let offset = basis.coords_unchecked(&map(&mixed));
        Self {
            dim: n,
            field: AffineField::new(linear, offset).expect("consistent shapes"),
        }
    }

    pub fn from_superoperator(sup: &Superoperator, basis: &HermitianBasis) -> Result<Self> {
        if sup.dim() != basis.dim() {
            return Err(Error::Shape(format!(
                "superoperator of dimension {} with basis of dimension {}",
                sup.dim(),
                basis.dim()
            )));
        }
        Ok(Self::from_linear_map(basis, |x| sup.apply(x)))
    }

    /// Two-level field from an explicit 3x3 linear part and offset.
    pub fn bloch(linear: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if linear.shape() != (3, 3) {
            return Err(Error::Shape("Bloch flow needs a 3x3 linear part".into()));
        }
        Ok(Self {
            dim: 2,
            field: AffineField::new(linear, offset)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_coords(&self) -> usize {
        self.field.dim()
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        self.field.linear()
    }

    pub fn offset(&self) -> &DVector<f64> {
        self.field.offset()
    }

    pub fn kappa(&self) -> f64 {
        self.field.kappa()
    }

    pub fn affine(&self) -> &AffineField {
        &self.field
    }

    pub fn velocity(&self, c: &DVector<f64>) -> DVector<f64> {
        self.field.apply(c)
    }

    pub fn apply(&self, c: &StateCoords) -> Result<StateCoords> {
        self.check(c)?;
        StateCoords::new(self.dim, self.field.apply(c.coords()))
    }

    /// Exact solution via the matrix exponential.
    pub fn evolve_exact(&self, c0: &StateCoords, t: f64) -> Result<StateCoords> {
        self.check(c0)?;
        StateCoords::new(self.dim, self.field.evolve(c0.coords(), t))
    }

    /// Central-difference compressibility at `c`.
    pub fn compressibility_numeric(&self, c: &StateCoords, h: f64) -> f64 {
        compressibility_numeric(|x| self.velocity(x), c, h)
    }

    fn check(&self, c: &StateCoords) -> Result<()> {
        if c.dim() != self.dim {
            return Err(Error::Shape(format!(
                "state of dimension {} in a flow of dimension {}",
                c.dim(),
                self.dim
            )));
        }
        Ok(())
    }
}

impl LinearDynamics for FlowField {
    fn dimension(&self) -> usize {
        self.n_coords()
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

/// Liouville-von Neumann flow `sigma_dot = -i[H, sigma]`.
pub fn closed_flow(h: &CMatrix, basis: &HermitianBasis) -> Result<FlowField> {
    gksl_flow(h, &[], basis)
}

/// GKSL flow. Trace preservation is built into the traceless chart.
pub fn gksl_flow(h: &CMatrix, terms: &[LindbladTerm], basis: &HermitianBasis) -> Result<FlowField> {
    if h.nrows() != basis.dim() {
        return Err(Error::Shape(format!(
            "Hamiltonian of dimension {} with basis of dimension {}",
            h.nrows(),
            basis.dim()
        )));
    }
    let generator = Generator::new(h.clone(), terms.to_vec())?;
    Ok(FlowField::from_linear_map(basis, |x| generator.apply(x)))
}

/// Hamiltonian whose precession matches the spin-boson trajectory
/// (counterclockwise in x-y): `-omega S_z / sqrt2`.
pub fn spin_boson_hamiltonian(omega: f64) -> CMatrix {
    // -omega/2 (|2><2| - |1><1|)
    let mut h = CMatrix::zeros(2, 2);
    h[(0, 0)] = C64::new(0.5 * omega, 0.0);
    h[(1, 1)] = C64::new(-0.5 * omega, 0.0);
    h
}

/// Relaxation `|1><2|` at rate `gamma_relax` and dephasing `S_z` at rate `gamma_phi`.
pub fn spin_boson_terms(gamma_phi: f64, gamma_relax: f64) -> Result<Vec<LindbladTerm>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sz = (ket_bra(2, 1, 1) - ket_bra(2, 0, 0)) * C64::new(s, 0.0);
    Ok(vec![
        LindbladTerm::new(ket_bra(2, 0, 1), gamma_relax)?,
        LindbladTerm::new(sz, gamma_phi)?,
    ])
}

/// Closed-form spin-boson flow:
///
/// ```text
/// xdot = -omega y - (gamma_phi + Gamma/2) x
/// ydot =  omega x - (gamma_phi + Gamma/2) y
/// zdot = -Gamma (1 + z)
/// ```
pub fn spin_boson_flow(omega: f64, gamma_phi: f64, gamma_relax: f64) -> Result<FlowField> {
    check_rates(gamma_phi, gamma_relax)?;
    let g = gamma_phi + 0.5 * gamma_relax;
    let linear = DMatrix::from_row_slice(
        3,
        3,
        &[-g, -omega, 0.0, omega, -g, 0.0, 0.0, 0.0, -gamma_relax],
    );
    FlowField::bloch(linear, DVector::from_column_slice(&[0.0, 0.0, -gamma_relax]))
}

pub(crate) fn check_rates(gamma_phi: f64, gamma_relax: f64) -> Result<()> {
    for (name, r) in [("gamma_phi", gamma_phi), ("gamma_relax", gamma_relax)] {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Validation(format!(
                "{name} must be finite and non-negative, got {r}"
            )));
        }
    }
    Ok(())
}

/// `-div(f)` at `c` by central differences with step `h`.
pub fn compressibility_numeric<F>(f: F, c: &StateCoords, h: f64) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    0.0 - divergence_numeric(f, c.coords(), h)
}

/// Black-box velocity `c -> coords(L(from_coords(c)))`, evaluated through
/// matrices rather than an assembled linear part.
pub fn generator_velocity<'a>(
    generator: &'a Generator,
    basis: &'a HermitianBasis,
) -> impl Fn(&DVector<f64>) -> DVector<f64> + 'a {
    move |c| {
        let sigma = basis.operator_from(c, 1.0).expect("coordinate length");
        basis.coords_unchecked(&generator.apply(&sigma))
    }
}

/// A flow that may depend on time.
pub trait Flow {
    fn n_coords(&self) -> usize;
    fn velocity_at(&self, c: &DVector<f64>, t: f64) -> DVector<f64>;
}

impl Flow for FlowField {
    fn n_coords(&self) -> usize {
        FlowField::n_coords(self)
    }

    fn velocity_at(&self, c: &DVector<f64>, _t: f64) -> DVector<f64> {
        self.velocity(c)
    }
}

/// GKSL dynamics with a time-dependent Hamiltonian `H(t)` and fixed terms.
pub struct TimeDependentGksl<F> {
    hamiltonian: F,
    terms: Vec<LindbladTerm>,
    basis: HermitianBasis,
}

impl<F: Fn(f64) -> CMatrix> TimeDependentGksl<F> {
    pub fn new(hamiltonian: F, terms: Vec<LindbladTerm>, basis: HermitianBasis) -> Self {
        Self {
            hamiltonian,
            terms,
            basis,
        }
    }

    /// Flow field with the Hamiltonian frozen at `t`.
    pub fn snapshot(&self, t: f64) -> Result<FlowField> {
        gksl_flow(&(self.hamiltonian)(t), &self.terms, &self.basis)
    }
}

impl<F: Fn(f64) -> CMatrix> Flow for TimeDependentGksl<F> {
    fn n_coords(&self) -> usize {
        self.basis.n_coords()
    }

    fn velocity_at(&self, c: &DVector<f64>, t: f64) -> DVector<f64> {
        let generator = Generator {
            hamiltonian: (self.hamiltonian)(t),
            terms: self.terms.clone(),
        };
        let velocity = generator_velocity(&generator, &self.basis);
        velocity(c)
    }
}
