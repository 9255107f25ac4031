//! Operator-space foundations.
//!
//! Density matrices live in the real vector space of Hermitian operators.
//! All calculus in this crate happens in *state coordinates*: the coefficients
//! of an operator on the traceless elements of an orthonormal Hermitian basis,
//! scaled by `sqrt(N)` so that for `N = 2` they are exactly the Bloch vector.
//!
//! ```text
//! sigma = I/N + (1/sqrt(N)) * sum_k c_k B_k        c_k = sqrt(N) Tr(B_k sigma)
//! ```
//!
//! Superoperators act on column-stacked operators: `vec(A)[r + N*c] = A[r, c]`,
//! so that `vec(X A Y) = (Y^T kron X) vec(A)`.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// `f(H)` for Hermitian `H`, through its eigendecomposition.
pub fn hermitian_function(h: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let d = CMatrix::from_diagonal(&DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| f(e)),
    ));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Tolerance for density-matrix validity.
pub const STATE_TOL: f64 = 1e-10;
/// Tolerance for algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-12;

#[cfg(test)]
const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Orthonormal Hermitian operator basis: normalized identity first, followed by
/// generalized Gell-Mann matrices.
#[derive(Debug, Clone)]
pub struct HermitianBasis {
    dim: usize,
    elements: Vec<CMatrix>,
}

impl HermitianBasis {
    /// Element order: `I/sqrt(N)`, symmetric pairs `(E_jk + E_kj)/sqrt2`,
    /// antisymmetric pairs `-i(E_jk - E_kj)/sqrt2` (both lexicographic in
    /// `j < k`), then diagonal generators `(l E_ll - sum_{m<l} E_mm)/sqrt(l(l+1))`.
    ///
    /// For `N = 2` this is `[I/sqrt2, S_x, S_y, S_z]` with
    /// `S_z = (|2><2| - |1><1|)/sqrt2`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!(
                "Hilbert dimension must be at least 2, got {n}"
            )));
        }
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut elements = Vec::with_capacity(n * n);
        elements.push(CMatrix::identity(n, n) / C64::from((n as f64).sqrt()));

        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
            .collect();
        for &(j, k) in &pairs {
            let mut m = CMatrix::zeros(n, n);
            m[(j, k)] = C64::from(s2);
            m[(k, j)] = C64::from(s2);
            elements.push(m);
        }
        for &(j, k) in &pairs {
            let mut m = CMatrix::zeros(n, n);
            m[(j, k)] = C64::new(0.0, -s2);
            m[(k, j)] = C64::new(0.0, s2);
            elements.push(m);
        }
        for l in 1..n {
            let norm = ((l * (l + 1)) as f64).sqrt();
            let mut m = CMatrix::zeros(n, n);
            for mm in 0..l {
                m[(mm, mm)] = C64::from(-1.0 / norm);
            }
            m[(l, l)] = C64::from(l as f64 / norm);
            elements.push(m);
        }
        Ok(Self { dim: n, elements })
    }

    /// Hilbert dimension `N`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of traceless coordinates, `N^2 - 1`.
    pub fn n_coords(&self) -> usize {
        self.dim * self.dim - 1
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    /// The traceless elements `B_1 .. B_{N^2-1}`.
    pub fn traceless(&self) -> &[CMatrix] {
        &self.elements[1..]
    }

    /// Matrix of `Tr(B_i^dagger B_j)`.
    pub fn gram(&self) -> CMatrix {
        let m = self.elements.len();
        CMatrix::from_fn(m, m, |i, j| inner_unchecked(&self.elements[i], &self.elements[j]))
    }

    /// `sqrt(N) Tr(B_k A)` for every traceless `B_k`; `A` must be Hermitian.
    pub fn coords_of(&self, a: &CMatrix) -> Result<DVector<f64>> {
        self.check_shape(a)?;
        let dev = hermiticity_deviation(a);
        if dev > STATE_TOL {
            return Err(Error::Validation(format!(
                "operator is not Hermitian (deviation {dev:.3e})"
            )));
        }
        Ok(self.coords_unchecked(a))
    }

    /// Same as [`coords_of`](Self::coords_of) without the Hermiticity check;
    /// imaginary parts of the projections are discarded.
    pub fn coords_unchecked(&self, a: &CMatrix) -> DVector<f64> {
        let scale = (self.dim as f64).sqrt();
        DVector::from_iterator(
            self.n_coords(),
            self.traceless()
                .iter()
                .map(|b| scale * inner_unchecked(b, a).re),
        )
    }

    /// Inverse of [`coords_unchecked`](Self::coords_unchecked) on Hermitian
    /// operators with trace `trace`.
    pub fn operator_from(&self, coords: &DVector<f64>, trace: f64) -> Result<CMatrix> {
        if coords.len() != self.n_coords() {
            return Err(Error::Shape(format!(
                "expected {} coordinates, got {}",
                self.n_coords(),
                coords.len()
            )));
        }
        let n = self.dim;
        let mut m = CMatrix::identity(n, n) * C64::from(trace / n as f64);
        let scale = 1.0 / (n as f64).sqrt();
        for (b, &c) in self.traceless().iter().zip(coords.iter()) {
            if c != 0.0 {
                m += b * C64::from(c * scale);
            }
        }
        Ok(m)
    }

    fn check_shape(&self, a: &CMatrix) -> Result<()> {
        if a.nrows() != self.dim || a.ncols() != self.dim {
            return Err(Error::Shape(format!(
                "expected {n}x{n} operator, got {}x{}",
                a.nrows(),
                a.ncols(),
                n = self.dim
            )));
        }
        Ok(())
    }
}

pub fn hermitian_basis(n: usize) -> Result<HermitianBasis> {
    HermitianBasis::new(n)
}

/// Trace inner product `Tr(A^dagger B) = sum_ij conj(A_ij) B_ij`.
pub fn trace_inner(a: &CMatrix, b: &CMatrix) -> Result<C64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "trace inner product of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(inner_unchecked(a, b))
}

fn inner_unchecked(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn dagger(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// `max_ij |A_ij - conj(A_ji)|`.
pub fn hermiticity_deviation(a: &CMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `|k><k|` in dimension `n` (zero-based `k`).
pub fn projector(n: usize, k: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(k, k)] = ONE;
    m
}

/// `|j><k|` in dimension `n` (zero-based).
pub fn ket_bra(n: usize, j: usize, k: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(j, k)] = ONE;
    m
}

/// Column-stacking vectorization.
pub fn vec(a: &CMatrix) -> DVector<C64> {
    // nalgebra stores matrices column-major.
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<C64>) -> Result<CMatrix> {
    let n = (v.len() as f64).sqrt().round() as usize;
    if n * n != v.len() {
        return Err(Error::Shape(format!(
            "length {} is not a perfect square",
            v.len()
        )));
    }
    Ok(CMatrix::from_column_slice(n, n, v.as_slice()))
}

/// A quantum state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    /// Validates at [`STATE_TOL`].
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Shape(format!("{:?} is not square", entries.shape())));
        }
        let diag = check_density(&entries, STATE_TOL);
        if !diag.pass {
            return Err(Error::Validation(format!(
                "not a density matrix: hermiticity {:.3e}, trace {:.3e}, min eigenvalue {:.3e}",
                diag.hermiticity_deviation, diag.trace_deviation, diag.min_eigenvalue
            )));
        }
        Ok(Self { entries })
    }

    /// Wraps a matrix without validation. Used for coordinates outside the
    /// state body, which still map to Hermitian unit-trace operators.
    pub fn new_unchecked(entries: CMatrix) -> Self {
        Self { entries }
    }

    /// Pure state `|psi><psi|` from a (not necessarily normalized) vector.
    pub fn pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::Domain("zero state vector".into()));
        }
        let psi = psi / C64::from(norm);
        Self::new(&psi * psi.adjoint())
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            entries: CMatrix::identity(n, n) / C64::from(n as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_inner(self) -> CMatrix {
        self.entries
    }

    pub fn diagnostics(&self, tol: f64) -> DensityDiagnostics {
        check_density(&self.entries, tol)
    }
}

/// Real coordinates of a state on the traceless basis elements.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCoords {
    dim: usize,
    coords: DVector<f64>,
}

impl StateCoords {
    pub fn new(dim: usize, coords: DVector<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(format!("dimension {dim}")));
        }
        if coords.len() != dim * dim - 1 {
            return Err(Error::Shape(format!(
                "dimension {dim} needs {} coordinates, got {}",
                dim * dim - 1,
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    /// Two-level state from its Bloch vector.
    pub fn bloch(x: f64, y: f64, z: f64) -> Self {
        Self {
            dim: 2,
            coords: DVector::from_column_slice(&[x, y, z]),
        }
    }

    pub fn from_vector3(v: &Vector3<f64>) -> Self {
        Self::bloch(v.x, v.y, v.z)
    }

    /// The maximally mixed state sits at the origin.
    pub fn origin(dim: usize) -> Self {
        Self {
            dim,
            coords: DVector::zeros(dim * dim - 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.coords
    }

    pub fn as_vector3(&self) -> Option<Vector3<f64>> {
        (self.dim == 2).then(|| Vector3::new(self.coords[0], self.coords[1], self.coords[2]))
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }
}

/// `c_k = sqrt(N) Tr(B_k sigma)` on the traceless basis elements.
pub fn to_coords(sigma: &DensityMatrix, basis: &HermitianBasis) -> Result<StateCoords> {
    let coords = basis.coords_of(sigma.entries())?;
    StateCoords::new(basis.dim(), coords)
}

/// Hermitian unit-trace operator with the given coordinates. Positivity only
/// holds inside the state body; use [`check_density`] to validate.
pub fn from_coords(c: &StateCoords, basis: &HermitianBasis) -> Result<DensityMatrix> {
    if c.dim() != basis.dim() {
        return Err(Error::Shape(format!(
            "coordinates of dimension {} with basis of dimension {}",
            c.dim(),
            basis.dim()
        )));
    }
    Ok(DensityMatrix::new_unchecked(
        basis.operator_from(c.coords(), 1.0)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityDiagnostics {
    pub hermiticity_deviation: f64,
    pub trace_deviation: f64,
    pub min_eigenvalue: f64,
    pub pass: bool,
}

/// Diagnoses the three density-matrix invariants at tolerance `tol`. The
/// eigenvalues are those of the Hermitian part.
pub fn check_density(m: &CMatrix, tol: f64) -> DensityDiagnostics {
    assert_eq!(m.nrows(), m.ncols(), "check_density needs a square matrix");
    let herm = hermiticity_deviation(m);
    let tr = trace(m);
    let trace_deviation = (tr - ONE).norm();
    let hpart = (m + m.adjoint()) * C64::from(0.5);
    let min_eigenvalue = hpart
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    DensityDiagnostics {
        hermiticity_deviation: herm,
        trace_deviation,
        min_eigenvalue,
        pass: herm <= tol && trace_deviation <= tol && min_eigenvalue >= -tol,
    }
}

/// Linear map on `D x D` operators, stored as a `D^2 x D^2` matrix acting on
/// column-stacked operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: CMatrix,
}

impl Superoperator {
    pub fn from_matrix(dim: usize, matrix: CMatrix) -> Result<Self> {
        let d2 = dim * dim;
        if matrix.nrows() != d2 || matrix.ncols() != d2 {
            return Err(Error::Shape(format!(
                "superoperator on dimension {dim} needs {d2}x{d2}, got {:?}",
                matrix.shape()
            )));
        }
        Ok(Self { dim, matrix })
    }

    pub fn identity(dim: usize) -> Self {
        let d2 = dim * dim;
        Self {
            dim,
            matrix: CMatrix::identity(d2, d2),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        let d2 = dim * dim;
        Self {
            dim,
            matrix: CMatrix::zeros(d2, d2),
        }
    }

    /// Assembles the matrix of a linear map by applying it to every matrix unit.
    pub fn from_linear_map(dim: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let d2 = dim * dim;
        let mut matrix = CMatrix::zeros(d2, d2);
        for col in 0..dim {
            for row in 0..dim {
                let image = f(&ket_bra(dim, row, col));
                matrix.set_column(row + dim * col, &vec(&image));
            }
        }
        Self { dim, matrix }
    }

    /// `X -> A X`.
    pub fn left(a: &CMatrix) -> Self {
        let d = a.nrows();
        Self {
            dim: d,
            matrix: kron(&CMatrix::identity(d, d), a),
        }
    }

    /// `X -> X A`.
    pub fn right(a: &CMatrix) -> Self {
        let d = a.nrows();
        Self {
            dim: d,
            matrix: kron(&a.transpose(), &CMatrix::identity(d, d)),
        }
    }

    /// `X -> [A, X]`.
    pub fn commutator(a: &CMatrix) -> Self {
        let d = a.nrows();
        let id = CMatrix::identity(d, d);
        Self {
            dim: d,
            matrix: kron(&id, a) - kron(&a.transpose(), &id),
        }
    }

    /// `X -> A X B`.
    pub fn sandwich(a: &CMatrix, b: &CMatrix) -> Self {
        Self {
            dim: a.nrows(),
            matrix: kron(&b.transpose(), a),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let out = &self.matrix * vec(x);
        CMatrix::from_column_slice(self.dim, self.dim, out.as_slice())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, other.dim, "composing superoperators of different dimension");
        Self {
            dim: self.dim,
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn scale(&self, s: C64) -> Superoperator {
        Self {
            dim: self.dim,
            matrix: &self.matrix * s,
        }
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        (&self.matrix - &other.matrix)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl std::ops::Mul for &Superoperator {
    type Output = Superoperator;
    fn mul(self, rhs: &Superoperator) -> Superoperator {
        self.compose(rhs)
    }
}

impl std::ops::Add for &Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, rhs.dim);
        Superoperator {
            dim: self.dim,
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl std::ops::Sub for &Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: &Superoperator) -> Superoperator {
        assert_eq!(self.dim, rhs.dim);
        Superoperator {
            dim: self.dim,
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

#[cfg(test)]
fn complex(re: f64) -> C64 {
    C64::new(re, 0.0)
}
