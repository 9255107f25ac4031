//! Affine flow fields on real coordinates, shared by the quantum and
//! classical models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default central-difference step, in coordinate units.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Deterministic dynamics with a known trajectory map and a uniform
/// compressibility. Everything the ensemble machinery needs: velocities for
/// the flux, forward maps for the pushforward, backward maps for the
/// pull-back density.
pub trait LinearDynamics: Sync {
    fn dimension(&self) -> usize;

    fn velocity(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `x(t | x0)`.
    fn evolve(&self, x0: &DVector<f64>, t: f64) -> DVector<f64>;

    /// The initial condition that reaches `x` after time `t`.
    fn pull_back(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        self.evolve(x, -t)
    }

    /// `kappa = -div(xdot)`.
    fn compressibility(&self) -> f64;
}

/// `xdot = A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    linear: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineField {
    pub fn new(linear: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if linear.nrows() != linear.ncols() || linear.nrows() != offset.len() {
            return Err(Error::Shape(format!(
                "affine field with linear part {:?} and offset of length {}",
                linear.shape(),
                offset.len()
            )));
        }
        Ok(Self { linear, offset })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            linear: DMatrix::zeros(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.offset
    }

    pub fn kappa(&self) -> f64 {
        0.0 - self.linear.trace()
    }

    /// `(M, v)` with `x(t) = M x0 + v`, from the exponential of the augmented
    /// generator `[[A, b], [0, 0]] t`.
    pub fn flow_map(&self, t: f64) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.dim();
        let mut aug = DMatrix::zeros(d + 1, d + 1);
        aug.view_mut((0, 0), (d, d)).copy_from(&(&self.linear * t));
        aug.view_mut((0, d), (d, 1)).copy_from(&(&self.offset * t));
        let e = aug.exp();
        (
            e.view((0, 0), (d, d)).into_owned(),
            e.view((0, d), (d, 1)).column(0).into_owned(),
        )
    }
}

impl LinearDynamics for AffineField {
    fn dimension(&self) -> usize {
        self.dim()
    }

    fn velocity(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply(x)
    }

    fn evolve(&self, x0: &DVector<f64>, t: f64) -> DVector<f64> {
        let (m, v) = self.flow_map(t);
        m * x0 + v
    }

    fn compressibility(&self) -> f64 {
        self.kappa()
    }
}

/// Central-difference estimate of `div f` at `x`.
pub fn divergence_numeric<F>(f: F, x: &DVector<f64>, h: f64) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut div = 0.0;
    let mut probe = x.clone();
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let plus = f(&probe)[k];
        probe[k] = x[k] - h;
        let minus = f(&probe)[k];
        probe[k] = x[k];
        div += (plus - minus) / (2.0 * h);
    }
    div
}

/// Fixed-step classical RK4 for an autonomous or time-dependent vector field.
pub fn rk4_step<F>(f: &F, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_map_of_pure_offset_is_translation() {
        let f = AffineField::new(DMatrix::zeros(2, 2), DVector::from_column_slice(&[1.0, -2.0]))
            .unwrap();
        let x = f.evolve(&DVector::from_column_slice(&[0.5, 0.5]), 3.0);
        assert!((x - DVector::from_column_slice(&[3.5, -5.5])).amax() < 1e-13);
    }

    #[test]
    fn pull_back_inverts_evolve() {
        let a = DMatrix::from_row_slice(3, 3, &[-0.5, -1.0, 0.0, 1.0, -0.5, 0.0, 0.0, 0.0, -0.3]);
        let f = AffineField::new(a, DVector::from_column_slice(&[0.0, 0.0, -0.3])).unwrap();
        let x0 = DVector::from_column_slice(&[0.2, -0.1, 0.4]);
        let x = f.evolve(&x0, 2.5);
        assert!((f.pull_back(&x, 2.5) - x0).amax() < 1e-12);
    }

    #[test]
    fn numeric_divergence_of_affine_field_is_minus_kappa() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 2.0, -1.0, -1.1]);
        let f = AffineField::new(a, DVector::from_column_slice(&[0.1, 0.2])).unwrap();
        let div = divergence_numeric(|x| f.apply(x), &DVector::from_column_slice(&[0.4, 0.1]), 1e-5);
        assert!((div + f.kappa()).abs() < 1e-9);
        assert!((f.kappa() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(AffineField::new(DMatrix::zeros(2, 3), DVector::zeros(2)).is_err());
        assert!(AffineField::new(DMatrix::zeros(2, 2), DVector::zeros(3)).is_err());
    }
}
