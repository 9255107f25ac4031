//! Scenario configuration: a versioned TOML document holding one model and
//! optional per-subcommand sections. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{CMatrix, C64};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traj: Option<TrajSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compress: Option<CompressSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluxcheck: Option<FluxSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nz: Option<NzSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalSection>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_owned()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Model selection, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Two-level precession at `omega`, without dissipation.
    ClosedSpin { omega: f64 },
    /// Precession with dephasing `gamma_phi` and relaxation `gamma_relax`.
    SpinBoson {
        omega: f64,
        gamma_phi: f64,
        gamma_relax: f64,
    },
    /// Oscillator in symmetrized phase coordinates.
    ClassicalHarmonic { mass: f64, omega: f64 },
    /// Oscillator with momentum damping `gamma`, or a general damping
    /// matrix in symmetrized coordinates.
    ClassicalDamped {
        mass: f64,
        omega: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        damping: Option<[[f64; 2]; 2]>,
    },
    /// GKSL generator with an arbitrary Hamiltonian and jump operators.
    GkslCustom {
        hamiltonian: ComplexMatrix,
        #[serde(default)]
        lindblad: Vec<LindbladConfig>,
    },
    /// System-bath composite for memory-kernel evaluation. The bath state
    /// is either given explicitly or thermal at `bath_beta`.
    NzComposite {
        h_s: ComplexMatrix,
        h_b: ComplexMatrix,
        v: ComplexMatrix,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bath_beta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho_b: Option<ComplexMatrix>,
        #[serde(default)]
        zero_mean_coupling: bool,
        #[serde(default)]
        literal_commutator: bool,
    },
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::ClosedSpin { .. } => "closed-spin",
            ModelConfig::SpinBoson { .. } => "spin-boson",
            ModelConfig::ClassicalHarmonic { .. } => "classical-harmonic",
            ModelConfig::ClassicalDamped { .. } => "classical-damped",
            ModelConfig::GkslCustom { .. } => "gksl-custom",
            ModelConfig::NzComposite { .. } => "nz-composite",
        }
    }
}

/// Row-major real and imaginary parts; `im` defaults to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl ComplexMatrix {
    pub fn to_matrix(&self, name: &str) -> Result<CMatrix> {
        let n = self.re.len();
        let ragged = |rows: &Vec<Vec<f64>>| rows.len() != n || rows.iter().any(|r| r.len() != n);
        if n == 0 || ragged(&self.re) || self.im.as_ref().is_some_and(ragged) {
            return Err(Error::Config(format!("{name} must be a square, non-empty matrix")));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| {
            C64::new(self.re[i][j], self.im.as_ref().map_or(0.0, |im| im[i][j]))
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladConfig {
    pub operator: ComplexMatrix,
    pub rate: f64,
}

/// `flow`: velocity field on a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    /// Lattice points per axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Half-width of the lattice; quantum lattices keep points with
    /// `|c| <= extent`. Defaults to 1 (quantum) or 2 (classical).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            extent: None,
        }
    }
}

fn default_grid() -> usize {
    11
}

/// `traj`: integrated trajectories with exact snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajSection {
    pub initial: Vec<Vec<f64>>,
    pub t_end: f64,
    /// RK4 step; defaults to `1e-3` over the fastest rate of the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    /// Keep every `stride`-th integration step in the trajectory file.
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// `ensemble`: Monte Carlo and analytic transport of a Gaussian ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub mean: [f64; 3],
    pub covariance: [[f64; 3]; 3],
    #[serde(default = "yes")]
    pub truncated: bool,
    pub n: usize,
    pub times: Vec<f64>,
    #[serde(default = "yes")]
    pub dump_samples: bool,
}

/// `compress`: analytic vs numerical compressibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressSection {
    /// Random sample points.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

impl Default for CompressSection {
    fn default() -> Self {
        Self {
            points: default_points(),
            fd_step: default_fd_step(),
        }
    }
}

fn default_points() -> usize {
    10
}

fn default_fd_step() -> f64 {
    crate::dynamics::DEFAULT_FD_STEP
}

/// `fluxcheck`: both sides of the integral continuity equation on a ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxSection {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Restrict a quantum ensemble to the Bloch ball.
    #[serde(default = "yes")]
    pub truncated: bool,
    pub center: Vec<f64>,
    pub radius: f64,
    pub t: f64,
    pub n: usize,
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
    #[serde(default = "default_time_step")]
    pub time_step: f64,
}

fn default_quadrature() -> usize {
    2048
}

fn default_time_step() -> f64 {
    1e-2
}

/// `nz`: equal-time compressibility on a time grid, plus optional
/// two-time kernel evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NzSection {
    pub times: Vec<f64>,
    #[serde(default)]
    pub pairs: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

/// `classical`: phase-portrait data for one oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSection {
    pub initial: Vec<[f64; 2]>,
    pub t_end: f64,
    /// Points per trajectory, including both ends.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_classical_grid")]
    pub grid: usize,
    #[serde(default = "default_classical_extent")]
    pub extent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<ClassicalEnsemble>,
}

fn default_samples() -> usize {
    201
}

fn default_classical_grid() -> usize {
    21
}

fn default_classical_extent() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalEnsemble {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
    pub n: usize,
    pub times: Vec<f64>,
    #[serde(default = "yes")]
    pub dump_samples: bool,
}
