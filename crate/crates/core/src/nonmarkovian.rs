//! Projection-operator machinery for a finite system-bath composite:
//! the projectors `P` and `Q`, the interaction-picture Liouvillian, the
//! time-ordered propagator `G(t, s)`, the memory kernel `K(t, s)` and the
//! compressibility of the reduced flow.
//!
//! Composite basis index is `i * n_bath + alpha` (system-major), so a
//! product state is `kron(sigma_S, rho_B)`. Superoperators act on
//! column-stacked vectors: entry `(r, c)` of a `D x D` operator sits at
//! `r + D c`. Units have `hbar = 1`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::space::{
    commutator, hermiticity_deviation, kron, CMatrix, DensityMatrix, Superoperator, C64,
    STATE_TOL,
};

/// Tolerance on the stationarity `[H_B, rho_B] = 0`.
pub const STATIONARITY_TOL: f64 = 1e-10;
/// Largest imaginary part tolerated in the compressibility contraction.
pub const IMAG_TOL: f64 = 1e-8;
/// Default propagator step in units of `1 / ||V||`.
pub const DEFAULT_DT_SCALE: f64 = 1e-3;

/// `H = H_S + H_B + V` with a stationary bath reference state.
#[derive(Debug, Clone)]
pub struct CompositeModel {
    n_sys: usize,
    n_bath: usize,
    h_s: CMatrix,
    h_b: CMatrix,
    v: CMatrix,
    rho_b: DensityMatrix,
    literal_commutator: bool,
    energies: DVector<f64>,
    eigvecs: CMatrix,
}

impl CompositeModel {
    pub fn new(h_s: CMatrix, h_b: CMatrix, v: CMatrix, rho_b: DensityMatrix) -> Result<Self> {
        for (name, m) in [("H_S", &h_s), ("H_B", &h_b), ("V", &v)] {
            if !m.is_square() || m.nrows() == 0 {
                return Err(Error::Shape(format!("{name} must be square, got {:?}", m.shape())));
            }
            let dev = hermiticity_deviation(m);
            if dev > STATE_TOL {
                return Err(Error::Validation(format!(
                    "{name} is not Hermitian (deviation {dev:.3e})"
                )));
            }
        }
        let (n_sys, n_bath) = (h_s.nrows(), h_b.nrows());
        if v.nrows() != n_sys * n_bath {
            return Err(Error::InvalidDimension(format!(
                "V is {}x{} but the composite dimension is {}",
                v.nrows(),
                v.ncols(),
                n_sys * n_bath
            )));
        }
        if rho_b.dim() != n_bath {
            return Err(Error::InvalidDimension(format!(
                "rho_B has dimension {} but H_B has {n_bath}",
                rho_b.dim()
            )));
        }
        let drift = commutator(&h_b, rho_b.entries()).camax();
        if drift > STATIONARITY_TOL {
            return Err(Error::Validation(format!(
                "rho_B is not stationary under H_B (|[H_B, rho_B]| = {drift:.3e})"
            )));
        }
        let h0 = kron(&h_s, &CMatrix::identity(n_bath, n_bath))
            + kron(&CMatrix::identity(n_sys, n_sys), &h_b);
        let eig = h0.symmetric_eigen();
        Ok(Self {
            n_sys,
            n_bath,
            h_s,
            h_b,
            v,
            rho_b,
            literal_commutator: false,
            energies: eig.eigenvalues,
            eigvecs: eig.eigenvectors,
        })
    }

    /// Shifts `V -> V - M (x) 1_B` with `M = Tr_B{V (1_S (x) rho_B)}`, so that
    /// the coupling has zero mean in the bath reference state.
    pub fn with_zero_mean_coupling(mut self) -> Self {
        let m = self.mean_field();
        self.v -= kron(&m, &CMatrix::identity(self.n_bath, self.n_bath));
        self.v = (&self.v + self.v.adjoint()) * C64::new(0.5, 0.0);
        self
    }

    /// Drops the `-i` prefactor of the Liouvillian, `L(t) X = [V(t), X]`.
    pub fn with_literal_commutator(mut self, literal: bool) -> Self {
        self.literal_commutator = literal;
        self
    }

    /// `V -> lambda V`.
    pub fn with_scaled_coupling(mut self, lambda: f64) -> Self {
        self.v *= C64::new(lambda, 0.0);
        self
    }

    pub fn n_sys(&self) -> usize {
        self.n_sys
    }

    pub fn n_bath(&self) -> usize {
        self.n_bath
    }

    /// Composite Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.n_sys * self.n_bath
    }

    pub fn h_s(&self) -> &CMatrix {
        &self.h_s
    }

    pub fn h_b(&self) -> &CMatrix {
        &self.h_b
    }

    pub fn coupling(&self) -> &CMatrix {
        &self.v
    }

    pub fn rho_b(&self) -> &DensityMatrix {
        &self.rho_b
    }

    pub fn literal_commutator(&self) -> bool {
        self.literal_commutator
    }

    /// `Tr_B{V (1_S (x) rho_B)}`.
    pub fn mean_field(&self) -> CMatrix {
        let lifted = kron(&CMatrix::identity(self.n_sys, self.n_sys), self.rho_b.entries());
        partial_trace_bath(&(&self.v * lifted), self.n_sys, self.n_bath)
    }

    /// Spectral norm of `V`.
    pub fn coupling_norm(&self) -> f64 {
        self.v.clone().symmetric_eigenvalues().amax()
    }

    /// `1e-3 / ||V||`, or `1e-3` for a vanishing coupling.
    pub fn default_dt(&self) -> f64 {
        let norm = self.coupling_norm();
        if norm > 0.0 {
            DEFAULT_DT_SCALE / norm
        } else {
            DEFAULT_DT_SCALE
        }
    }

    /// `V(t) = e^{i H_0 t} V e^{-i H_0 t}` with `H_0 = H_S + H_B`.
    pub fn coupling_at(&self, t: f64) -> CMatrix {
        let w = &self.eigvecs;
        let mut vt = w.adjoint() * &self.v * w;
        for a in 0..vt.nrows() {
            for b in 0..vt.ncols() {
                let phase = (self.energies[a] - self.energies[b]) * t;
                vt[(a, b)] *= C64::from_polar(1.0, phase);
            }
        }
        w * vt * w.adjoint()
    }
}

/// `Tr_B X` for an operator on the composite.
pub fn partial_trace_bath(x: &CMatrix, n_sys: usize, n_bath: usize) -> CMatrix {
    CMatrix::from_fn(n_sys, n_sys, |i, j| {
        (0..n_bath)
            .map(|a| x[(i * n_bath + a, j * n_bath + a)])
            .sum()
    })
}

/// `P X = Tr_B{X} (x) rho_B`.
pub fn projector_p(model: &CompositeModel) -> Superoperator {
    Superoperator::from_linear_map(model.dim(), |x| {
        kron(
            &partial_trace_bath(x, model.n_sys, model.n_bath),
            model.rho_b.entries(),
        )
    })
}

/// `Q = 1 - P`.
pub fn projector_q(model: &CompositeModel) -> Superoperator {
    &Superoperator::identity(model.dim()) - &projector_p(model)
}

/// `L(t) X = -i [V(t), X]`, or `[V(t), X]` for a literal-commutator model.
pub fn interaction_liouvillian(model: &CompositeModel, t: f64) -> Superoperator {
    let l = Superoperator::commutator(&model.coupling_at(t));
    if model.literal_commutator {
        l
    } else {
        l.scale(C64::new(0.0, -1.0))
    }
}

/// Time-ordered `G(t, s)` solving `dG/dt = Q L(t) G`, `G(s, s) = 1`, by
/// classical RK4 with the largest step not exceeding `dt` that divides
/// `t - s` evenly.
pub fn propagator_g(model: &CompositeModel, t: f64, s: f64, dt: f64) -> Result<Superoperator> {
    if t.is_nan() || s.is_nan() || t < s {
        return Err(Error::Domain(format!("propagator needs t >= s, got t = {t}, s = {s}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    let dim = model.dim();
    let mut g = CMatrix::identity(dim * dim, dim * dim);
    if t == s {
        return Superoperator::from_matrix(dim, g);
    }
    let q = projector_q(model).into_matrix();
    let generator = |tau: f64| &q * interaction_liouvillian(model, tau).matrix();
    let steps = ((t - s) / dt).ceil().max(1.0) as usize;
    let h = (t - s) / steps as f64;
    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);
    let sixth = C64::new(h / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    let mut a_start = generator(s);
    for k in 0..steps {
        let tau = s + k as f64 * h;
        let a_mid = generator(tau + 0.5 * h);
        let a_end = generator(if k + 1 == steps { t } else { tau + h });
        let k1 = &a_start * &g;
        let k2 = &a_mid * (&g + &k1 * half);
        let k3 = &a_mid * (&g + &k2 * half);
        let k4 = &a_end * (&g + &k3 * full);
        g += (k1 + (k2 + k3) * two + k4) * sixth;
        a_start = a_end;
    }
    if !g.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::IntegrationFailure {
            t,
            reason: "propagator diverged".into(),
        });
    }
    Superoperator::from_matrix(dim, g)
}

/// One evaluation of the memory kernel.
#[derive(Debug, Clone)]
pub struct KernelEvaluation {
    pub t: f64,
    pub s: f64,
    pub kernel: Superoperator,
    /// Real part of `-contraction(K)`.
    pub compressibility: f64,
    /// Imaginary part of `-contraction(K)`.
    pub compressibility_imag: f64,
}

/// `K(t, s) = P L(t) G(t, s) Q L(s) P`.
pub fn kernel_k(model: &CompositeModel, t: f64, s: f64, dt: f64) -> Result<KernelEvaluation> {
    let g = propagator_g(model, t, s, dt)?;
    let p = projector_p(model);
    let q = projector_q(model);
    let kernel = &(&(&(&p * &interaction_liouvillian(model, t)) * &g) * &q)
        * &(&interaction_liouvillian(model, s) * &p);
    Ok(evaluation(model, t, s, kernel))
}

/// `K(t, t) = P L(t) Q L(t) P`, which needs no propagator.
pub fn equal_time_kernel(model: &CompositeModel, t: f64) -> KernelEvaluation {
    let p = projector_p(model);
    let q = projector_q(model);
    let l = interaction_liouvillian(model, t);
    let kernel = &(&(&(&p * &l) * &q) * &l) * &p;
    evaluation(model, t, t, kernel)
}

fn evaluation(model: &CompositeModel, t: f64, s: f64, kernel: Superoperator) -> KernelEvaluation {
    let kappa = -kernel_contraction(model, &kernel);
    KernelEvaluation {
        t,
        s,
        kernel,
        compressibility: kappa.re + 0.0,
        compressibility_imag: kappa.im + 0.0,
    }
}

/// `sum_{i,j} sum_{alpha,delta,gamma} K[(i alpha, j alpha), (i delta, j gamma)] rho_B[delta, gamma]`,
/// the trace of the reduced map `sigma_S -> Tr_B{K (sigma_S (x) rho_B)}`.
pub fn kernel_contraction(model: &CompositeModel, kernel: &Superoperator) -> C64 {
    let (ns, nb) = (model.n_sys, model.n_bath);
    let d = model.dim();
    let k = kernel.matrix();
    let rho = model.rho_b.entries();
    let mut sum = C64::new(0.0, 0.0);
    for i in 0..ns {
        for j in 0..ns {
            for alpha in 0..nb {
                let row = (i * nb + alpha) + d * (j * nb + alpha);
                for delta in 0..nb {
                    for gamma in 0..nb {
                        let col = (i * nb + delta) + d * (j * nb + gamma);
                        sum += k[(row, col)] * rho[(delta, gamma)];
                    }
                }
            }
        }
    }
    sum
}

/// `kappa = -div` of the reduced equal-time kernel flow.
pub fn nz_compressibility(model: &CompositeModel, t: f64) -> Result<f64> {
    let eval = equal_time_kernel(model, t);
    if eval.compressibility_imag.abs() > IMAG_TOL {
        return Err(Error::ConventionMismatch(eval.compressibility_imag));
    }
    Ok(eval.compressibility)
}
