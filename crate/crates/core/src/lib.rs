//! Probability flow of quantum ensembles on the state space of density
//! operators, with the classical phase-space analog.
//!
//! Ensembles are probability distributions over states; states move along the
//! dynamical flow field (Liouville-von Neumann, GKSL), and the distribution is
//! transported by the continuity equation. The crate builds flow fields,
//! measures their compressibility, propagates single states and ensembles,
//! and evaluates Nakajima-Zwanzig memory kernels for finite system-bath models.

pub mod classical;
pub mod cli;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod flow;
pub mod nonmarkovian;
pub mod random;
pub mod space;
pub mod trajectory;
pub mod transport;

pub use error::{Error, Result};
