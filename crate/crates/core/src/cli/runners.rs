//! One runner per subcommand. Each validates its inputs first (failures
//! are config errors) and only then computes.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::config::{ModelConfig, ScenarioConfig};
use super::output::{Cell, Outputs, Table};
use crate::classical::{
    classical_pushforward, damped_harmonic_flow, dissipative_flow, harmonic_flow, ClassicalFlow,
};
use crate::dynamics::{divergence_numeric, LinearDynamics};
use crate::ensemble::{
    boundary_flux_check, ensemble_covariance, ensemble_mean, propagate_gaussian, pushforward,
    sample, Support, TruncatedGaussian, BALL_TOL,
};
use crate::error::{Error, Result};
use crate::flow::{gksl_flow, is_canonical_set, FlowField, LindbladTerm};
use crate::nonmarkovian::{equal_time_kernel, kernel_k, CompositeModel, IMAG_TOL};
use crate::random;
use crate::space::{check_density, hermitian_basis, to_coords, DensityMatrix, StateCoords};
use crate::trajectory::{integrate, spin_boson_analytic, SpinBoson, DEFAULT_DT_OMEGA};
use crate::transport::{covariance_of, flux_balance, mean_of, Ball, FluxReport, FluxSettings, Gaussian, NormalStream};

/// Interior mixing used for random compressibility sample states.
const SAMPLE_MIX: f64 = 0.9;

fn config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

fn finite_nonneg(x: f64, name: &str) -> Result<()> {
    require(x.is_finite() && x >= 0.0, format!("{name} must be finite and >= 0, got {x}"))
}

/// A validated model.
pub enum Model {
    Spin(SpinBoson),
    Gksl {
        field: FlowField,
        canonical: bool,
        rate_sum: f64,
    },
    Classical(ClassicalFlow),
    Composite(CompositeModel),
}

impl Model {
    pub fn build(cfg: &ModelConfig) -> Result<Model> {
        let model = match cfg {
            ModelConfig::ClosedSpin { omega } => Model::Spin(SpinBoson::closed(*omega)?),
            ModelConfig::SpinBoson {
                omega,
                gamma_phi,
                gamma_relax,
            } => Model::Spin(SpinBoson::new(*omega, *gamma_phi, *gamma_relax)?),
            ModelConfig::ClassicalHarmonic { mass, omega } => {
                Model::Classical(harmonic_flow(*mass, *omega)?)
            }
            ModelConfig::ClassicalDamped {
                mass,
                omega,
                gamma,
                damping,
            } => match (gamma, damping) {
                (Some(g), None) => Model::Classical(damped_harmonic_flow(*mass, *omega, *g)?),
                (None, Some(d)) => Model::Classical(dissipative_flow(
                    *mass,
                    *omega,
                    DMatrix::from_row_slice(2, 2, &[d[0][0], d[0][1], d[1][0], d[1][1]]),
                )?),
                _ => {
                    return Err(Error::Config(
                        "classical-damped needs exactly one of `gamma` or `damping`".into(),
                    ))
                }
            },
            ModelConfig::GkslCustom {
                hamiltonian,
                lindblad,
            } => {
                let h = hamiltonian.to_matrix("hamiltonian")?;
                let terms = lindblad
                    .iter()
                    .enumerate()
                    .map(|(k, l)| LindbladTerm::new(l.operator.to_matrix(&format!("lindblad[{k}]"))?, l.rate))
                    .collect::<Result<Vec<_>>>()?;
                let basis = hermitian_basis(h.nrows())?;
                Model::Gksl {
                    field: gksl_flow(&h, &terms, &basis)?,
                    canonical: is_canonical_set(&terms, 1e-10),
                    rate_sum: terms.iter().map(|t| t.rate()).sum(),
                }
            }
            ModelConfig::NzComposite {
                h_s,
                h_b,
                v,
                bath_beta,
                rho_b,
                zero_mean_coupling,
                literal_commutator,
            } => {
                let h_b = h_b.to_matrix("h_b")?;
                let rho = match (bath_beta, rho_b) {
                    (Some(beta), None) => {
                        require(beta.is_finite(), "bath_beta must be finite")?;
                        random::thermal_state(&h_b, *beta)
                    }
                    (None, Some(r)) => DensityMatrix::new(r.to_matrix("rho_b")?)?,
                    _ => {
                        return Err(Error::Config(
                            "nz-composite needs exactly one of `bath_beta` or `rho_b`".into(),
                        ))
                    }
                };
                let mut m = CompositeModel::new(h_s.to_matrix("h_s")?, h_b, v.to_matrix("v")?, rho)?
                    .with_literal_commutator(*literal_commutator);
                if *zero_mean_coupling {
                    m = m.with_zero_mean_coupling();
                }
                Model::Composite(m)
            }
        };
        Ok(model)
    }

    fn quantum_field(&self) -> Option<FlowField> {
        match self {
            Model::Spin(m) => Some(m.flow()),
            Model::Gksl { field, .. } => Some(field.clone()),
            _ => None,
        }
    }
}

fn coord_names(n: usize, prefix: &str) -> Vec<String> {
    if n == 3 {
        ["x", "y", "z"].iter().map(|c| format!("{prefix}{c}")).collect()
    } else {
        (1..=n).map(|k| format!("{prefix}c{k}")).collect()
    }
}

fn cells(v: impl IntoIterator<Item = f64>) -> impl Iterator<Item = Cell> {
    v.into_iter().map(Cell::Num)
}

fn lattice(grid: usize, extent: f64) -> impl Iterator<Item = f64> + Clone {
    (0..grid).map(move |i| -extent + 2.0 * extent * i as f64 / (grid - 1) as f64)
}

#[derive(Serialize)]
struct FieldSummary {
    model: &'static str,
    kappa: f64,
    linear: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn classical_flow_table(flow: &ClassicalFlow, grid: usize, extent: f64) -> Result<Table> {
    let mut t = Table::new(&["q", "p", "qdot", "pdot"])?;
    for q in lattice(grid, extent) {
        for p in lattice(grid, extent) {
            let v = flow.velocity(&DVector::from_column_slice(&[q, p]));
            t.row(&[Cell::Num(q), Cell::Num(p), Cell::Num(v[0]), Cell::Num(v[1])])?;
        }
    }
    Ok(t)
}

pub fn flow(cfg: &ScenarioConfig, model: &Model) -> Result<Outputs> {
    let sec = cfg.flow.clone().unwrap_or_default();
    require(sec.grid >= 2, "flow.grid must be >= 2")?;
    if let Some(e) = sec.extent {
        require(e.is_finite() && e > 0.0, "flow.extent must be > 0")?;
    }
    let mut out = Outputs::default();
    let kind = cfg.model.kind();
    if let Some(field) = model.quantum_field() {
        require(field.n_coords() == 3, "flow grids need a two-level model")?;
        let extent = sec.extent.unwrap_or(1.0);
        let mut t = Table::new(&["x", "y", "z", "vx", "vy", "vz"])?;
        for x in lattice(sec.grid, extent) {
            for y in lattice(sec.grid, extent) {
                for z in lattice(sec.grid, extent) {
                    let c = DVector::from_column_slice(&[x, y, z]);
                    if c.norm() > extent * (1.0 + 1e-12) {
                        continue;
                    }
                    let v = field.velocity(&c);
                    t.row(&cells([x, y, z, v[0], v[1], v[2]]).collect::<Vec<_>>())?;
                }
            }
        }
        out.add_table("flow.csv", t)?;
        out.add_json(
            "flow.json",
            &FieldSummary {
                model: kind,
                kappa: field.kappa(),
                linear: rows_of(field.linear()),
                offset: field.offset().iter().copied().collect(),
            },
        )?;
        return Ok(out);
    }
    match model {
        Model::Classical(flow) => {
            out.add_table("flow.csv", classical_flow_table(flow, sec.grid, sec.extent.unwrap_or(2.0))?)?;
            out.add_json(
                "flow.json",
                &FieldSummary {
                    model: kind,
                    kappa: flow.kappa(),
                    linear: rows_of(flow.linear()),
                    offset: flow.offset().iter().copied().collect(),
                },
            )?;
            Ok(out)
        }
        _ => Err(Error::Config(format!("`flow` does not apply to a {kind} model"))),
    }
}

fn default_dt(model: &Model, field: &FlowField) -> f64 {
    let scale = match model {
        Model::Spin(m) if m.omega != 0.0 => m.omega.abs(),
        _ => field
            .linear()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    };
    if scale > 0.0 {
        DEFAULT_DT_OMEGA / scale
    } else {
        DEFAULT_DT_OMEGA
    }
}

fn validate_state(c: &[f64], n_coords: usize, dim: usize, what: &str) -> Result<StateCoords> {
    require(
        c.len() == n_coords,
        format!("{what} has {} coordinates, expected {n_coords}", c.len()),
    )?;
    let state = StateCoords::new(dim, DVector::from_column_slice(c)).map_err(config)?;
    let basis = hermitian_basis(dim)?;
    let sigma = basis.operator_from(state.coords(), 1.0)?;
    require(
        check_density(&sigma, 1e-10).pass,
        format!("{what} is not a valid state"),
    )?;
    Ok(state)
}

pub fn traj(cfg: &ScenarioConfig, model: &Model) -> Result<Outputs> {
    let kind = cfg.model.kind();
    let sec = cfg
        .traj
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [traj] section".into()))?;
    let field = model
        .quantum_field()
        .ok_or_else(|| Error::Config(format!("`traj` does not apply to a {kind} model")))?;
    finite_nonneg(sec.t_end, "traj.t_end")?;
    require(!sec.initial.is_empty(), "traj.initial is empty")?;
    require(sec.stride >= 1, "traj.stride must be >= 1")?;
    if let Some(dt) = sec.dt {
        require(dt.is_finite() && dt > 0.0, "traj.dt must be > 0")?;
    }
    for &s in &sec.snapshots {
        require(
            s.is_finite() && (0.0..=sec.t_end).contains(&s),
            format!("snapshot time {s} is outside [0, t_end]"),
        )?;
    }
    let (dim, n) = (field.dim(), field.n_coords());
    let initial = sec
        .initial
        .iter()
        .enumerate()
        .map(|(k, c)| validate_state(c, n, dim, &format!("traj.initial[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    let dt = sec.dt.unwrap_or_else(|| default_dt(model, &field));

    let mut snapshots = sec.snapshots.clone();
    snapshots.sort_by(f64::total_cmp);
    snapshots.dedup();
    let mut stops = snapshots.clone();
    stops.push(sec.t_end);
    stops.dedup();

    let names = coord_names(n, "");
    let mut traj_header = vec!["trajectory".to_owned(), "t".to_owned()];
    traj_header.extend(names.iter().cloned());
    let mut snap_header = traj_header.clone();
    snap_header.extend(coord_names(n, "exact_"));
    snap_header.push("max_abs_error".into());
    let mut traj_table = Table::new(&traj_header)?;
    let mut snap_table = Table::new(&snap_header)?;

    for (k, c0) in initial.iter().enumerate() {
        let mut row = vec![Cell::from(k), Cell::Num(0.0)];
        row.extend(cells(c0.coords().iter().copied()));
        traj_table.row(&row)?;
        let mut at_stop = vec![(0.0, c0.clone())];
        let (mut t0, mut cur) = (0.0, c0.clone());
        for &stop in &stops {
            if stop <= t0 {
                continue;
            }
            let tr = integrate(&field, &cur, stop - t0, dt)?;
            let last = tr.len() - 1;
            for (i, (t, c)) in tr.times().iter().zip(tr.points()).enumerate().skip(1) {
                if i % sec.stride == 0 || i == last {
                    let mut row = vec![Cell::from(k), Cell::Num(t0 + t)];
                    row.extend(cells(c.coords().iter().copied()));
                    traj_table.row(&row)?;
                }
            }
            cur = tr.last().clone();
            t0 = stop;
            at_stop.push((stop, cur.clone()));
        }
        for &s in &snapshots {
            let state = &at_stop
                .iter()
                .find(|(t, _)| *t == s)
                .expect("every snapshot is a stop")
                .1;
            let exact = match model {
                Model::Spin(m) => spin_boson_analytic(c0, m.omega, m.gamma_phi, m.gamma_relax, s)?,
                _ => field.evolve_exact(c0, s)?,
            };
            let err = (state.coords() - exact.coords()).amax();
            let mut row = vec![Cell::from(k), Cell::Num(s)];
            row.extend(cells(state.coords().iter().copied()));
            row.extend(cells(exact.coords().iter().copied()));
            row.push(Cell::Num(err));
            snap_table.row(&row)?;
        }
    }
    let mut out = Outputs::default();
    out.add_table("trajectory.csv", traj_table)?;
    if !snapshots.is_empty() {
        out.add_table("snapshots.csv", snap_table)?;
    }
    Ok(out)
}

fn vector3(v: &[f64], name: &str) -> Result<Vector3<f64>> {
    require(v.len() == 3, format!("{name} must have 3 components"))?;
    Ok(Vector3::from_column_slice(v))
}

fn matrix3(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

fn dist_error(e: Error) -> Error {
    match e {
        Error::PathologicalTruncation { .. } => e,
        other => config(other),
    }
}

const COV3: [&str; 6] = ["cov_xx", "cov_xy", "cov_xz", "cov_yy", "cov_yz", "cov_zz"];

fn upper3(m: &Matrix3<f64>) -> [f64; 6] {
    [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]]
}

#[derive(Serialize)]
struct EnsembleSummary {
    model: &'static str,
    n: usize,
    seed: u64,
    truncated: bool,
    acceptance_rate: f64,
    log_norm: f64,
    kappa: f64,
}

pub fn ensemble(cfg: &ScenarioConfig, model: &Model, seed: u64) -> Result<Outputs> {
    let kind = cfg.model.kind();
    let sec = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [ensemble] section".into()))?;
    let Model::Spin(sb) = model else {
        return Err(Error::Config(format!("`ensemble` does not apply to a {kind} model")));
    };
    require(sec.n >= 2, "ensemble.n must be >= 2")?;
    for &t in &sec.times {
        finite_nonneg(t, "ensemble time")?;
    }
    let dist = TruncatedGaussian::new(
        Vector3::from_column_slice(&sec.mean),
        matrix3(&sec.covariance),
        sec.truncated,
    )
    .map_err(dist_error)?;

    let ens0 = sample(&dist, sec.n, seed)?;
    let mut out = Outputs::default();
    let mut moments = Table::new(
        &["snapshot", "t", "n", "mean_x", "mean_y", "mean_z"]
            .iter()
            .chain(COV3.iter())
            .collect::<Vec<_>>(),
    )?;
    let mut gaussian = Table::new(
        &["snapshot", "t", "mean_x", "mean_y", "mean_z"]
            .iter()
            .chain(COV3.iter())
            .chain(["support_x", "support_y", "support_z", "log_norm"].iter())
            .collect::<Vec<_>>(),
    )?;
    for (k, &t) in sec.times.iter().enumerate() {
        let ens = pushforward(&ens0, |c, t| sb.evolve(c, t), t)?;
        let mean = ensemble_mean(&ens)?.as_vector3().expect("Bloch vector");
        let cov = ensemble_covariance(&ens)?;
        let mut row = vec![Cell::from(k), Cell::Num(t), Cell::from(ens.len())];
        row.extend(cells(mean.iter().copied()));
        row.extend(cells(upper3(&cov)));
        moments.row(&row)?;

        let g = propagate_gaussian(&dist, sb, t)?;
        let support = match g.support() {
            Support::Unbounded => Vector3::zeros(),
            Support::Ellipsoid(s) => s,
        };
        let mut row = vec![Cell::from(k), Cell::Num(t)];
        row.extend(cells(g.mean().iter().copied()));
        row.extend(cells(upper3(&g.covariance())));
        row.extend(cells(support.iter().copied()));
        row.push(Cell::Num(g.log_norm()));
        gaussian.row(&row)?;

        if sec.dump_samples {
            let mut s = Table::new(&["x", "y", "z"])?;
            for p in ens.points() {
                s.row(&cells(p.iter().copied()).collect::<Vec<_>>())?;
            }
            out.add_table(&format!("samples_{k:03}.csv"), s)?;
        }
    }
    out.add_table("moments.csv", moments)?;
    out.add_table("gaussian.csv", gaussian)?;
    out.add_json(
        "ensemble.json",
        &EnsembleSummary {
            model: kind,
            n: ens0.len(),
            seed,
            truncated: dist.is_truncated(),
            acceptance_rate: ens0.acceptance_rate(),
            log_norm: dist.log_norm(),
            kappa: sb.kappa(),
        },
    )?;
    Ok(out)
}

#[derive(Serialize)]
struct CompressReport {
    model: &'static str,
    n_coords: usize,
    analytic_kappa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    canonical_formula: Option<f64>,
    numeric_min: f64,
    numeric_max: f64,
    max_abs_deviation: f64,
    fd_step: f64,
}

pub fn compress(cfg: &ScenarioConfig, model: &Model, seed: u64) -> Result<Outputs> {
    let kind = cfg.model.kind();
    let sec = cfg.compress.clone().unwrap_or_default();
    require(sec.points >= 1, "compress.points must be >= 1")?;
    require(sec.fd_step.is_finite() && sec.fd_step > 0.0, "compress.fd_step must be > 0")?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let (n, analytic, canonical_formula, points, numeric): (usize, f64, Option<f64>, Vec<DVector<f64>>, Vec<f64>) =
        match model {
            Model::Spin(_) | Model::Gksl { .. } => {
                let field = model.quantum_field().expect("quantum model");
                let dim = field.dim();
                let basis = hermitian_basis(dim)?;
                let points: Vec<DVector<f64>> = (0..sec.points)
                    .map(|_| {
                        let sigma = random::interior_density(dim, SAMPLE_MIX, &mut rng);
                        to_coords(&sigma, &basis).map(|c| c.into_vector())
                    })
                    .collect::<Result<_>>()?;
                let numeric = points
                    .iter()
                    .map(|c| field.compressibility_numeric(&StateCoords::new(dim, c.clone()).expect("valid"), sec.fd_step))
                    .collect();
                let formula = match model {
                    Model::Spin(sb) => Some(sb.kappa()),
                    Model::Gksl {
                        canonical: true,
                        rate_sum,
                        ..
                    } => Some(dim as f64 * rate_sum),
                    _ => None,
                };
                (field.n_coords(), field.kappa(), formula, points, numeric)
            }
            Model::Classical(flow) => {
                let points: Vec<DVector<f64>> =
                    (0..sec.points).map(|_| random::point_in_ball(2, 2.0, &mut rng)).collect();
                let numeric = points
                    .iter()
                    .map(|x| 0.0 - divergence_numeric(|y| flow.velocity(y), x, sec.fd_step))
                    .collect();
                (2, flow.kappa(), Some(flow.damping().trace()), points, numeric)
            }
            Model::Composite(_) => {
                return Err(Error::Config(format!("`compress` does not apply to a {kind} model; use `nz`")))
            }
        };

    let names = if matches!(model, Model::Classical(_)) {
        vec!["q".to_owned(), "p".to_owned()]
    } else {
        coord_names(n, "")
    };
    let mut header = vec!["point".to_owned()];
    header.extend(names);
    header.push("kappa_numeric".into());
    let mut table = Table::new(&header)?;
    for (k, (c, v)) in points.iter().zip(&numeric).enumerate() {
        let mut row = vec![Cell::from(k)];
        row.extend(cells(c.iter().copied()));
        row.push(Cell::Num(*v));
        table.row(&row)?;
    }
    let report = CompressReport {
        model: kind,
        n_coords: n,
        analytic_kappa: analytic,
        canonical_formula,
        numeric_min: numeric.iter().copied().fold(f64::INFINITY, f64::min),
        numeric_max: numeric.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        max_abs_deviation: numeric.iter().map(|v| (v - analytic).abs()).fold(0.0, f64::max),
        fd_step: sec.fd_step,
    };
    let mut out = Outputs::default();
    out.add_table("compress.csv", table)?;
    out.add_json("compress.json", &report)?;
    Ok(out)
}

#[derive(Serialize)]
struct FluxOutput {
    model: &'static str,
    t: f64,
    center: Vec<f64>,
    radius: f64,
    n: usize,
    quadrature: usize,
    time_step: f64,
    kappa: f64,
    #[serde(flatten)]
    report: FluxReport,
}

pub fn fluxcheck(cfg: &ScenarioConfig, model: &Model, seed: u64) -> Result<Outputs> {
    let kind = cfg.model.kind();
    let sec = cfg
        .fluxcheck
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [fluxcheck] section".into()))?;
    finite_nonneg(sec.t, "fluxcheck.t")?;
    require(sec.n >= 1, "fluxcheck.n must be >= 1")?;
    require(sec.quadrature >= 1, "fluxcheck.quadrature must be >= 1")?;
    require(
        sec.time_step.is_finite() && sec.time_step > 0.0,
        "fluxcheck.time_step must be > 0",
    )?;
    let region = Ball::new(DVector::from_column_slice(&sec.center), sec.radius).map_err(config)?;
    let settings = FluxSettings {
        time_step: sec.time_step,
        quadrature_nodes: sec.quadrature,
    };
    let (report, kappa) = match model {
        Model::Spin(sb) => {
            let mean = vector3(&sec.mean, "fluxcheck.mean")?;
            require(
                sec.covariance.len() == 3 && sec.covariance.iter().all(|r| r.len() == 3),
                "fluxcheck.covariance must be 3x3",
            )?;
            require(sec.center.len() == 3, "fluxcheck.center must have 3 components")?;
            require(
                region.center.norm() + region.radius <= 1.0 + BALL_TOL,
                "fluxcheck region must lie inside the Bloch ball",
            )?;
            let cov = Matrix3::from_fn(|i, j| sec.covariance[i][j]);
            let dist = TruncatedGaussian::new(mean, cov, sec.truncated).map_err(dist_error)?;
            let r = boundary_flux_check(sb, &dist, &region, sec.t, sec.n, seed, settings)?;
            (r, sb.kappa())
        }
        Model::Classical(flow) => {
            require(sec.mean.len() == 2, "fluxcheck.mean must have 2 components")?;
            require(sec.center.len() == 2, "fluxcheck.center must have 2 components")?;
            require(
                sec.covariance.len() == 2 && sec.covariance.iter().all(|r| r.len() == 2),
                "fluxcheck.covariance must be 2x2",
            )?;
            let g = Gaussian::new(
                DVector::from_column_slice(&sec.mean),
                DMatrix::from_fn(2, 2, |i, j| sec.covariance[i][j]),
            )
            .map_err(config)?;
            let mut stream = NormalStream::new(seed);
            let samples: Vec<_> = (0..sec.n).map(|_| g.draw(&mut stream)).collect();
            let r = flux_balance(flow, &samples, |x| g.pdf(x), &region, sec.t, settings)?;
            (r, flow.kappa())
        }
        _ => return Err(Error::Config(format!("`fluxcheck` does not apply to a {kind} model"))),
    };
    let mut out = Outputs::default();
    out.add_json(
        "fluxcheck.json",
        &FluxOutput {
            model: kind,
            t: sec.t,
            center: sec.center.clone(),
            radius: sec.radius,
            n: sec.n,
            quadrature: sec.quadrature,
            time_step: sec.time_step,
            kappa,
            report,
        },
    )?;
    Ok(out)
}

#[derive(Serialize)]
struct NzSummary {
    n_sys: usize,
    n_bath: usize,
    literal_commutator: bool,
    coupling_norm: f64,
    mean_field_norm: f64,
    dt: f64,
}

pub fn nz(cfg: &ScenarioConfig, model: &Model) -> Result<Outputs> {
    let kind = cfg.model.kind();
    let sec = cfg
        .nz
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [nz] section".into()))?;
    let Model::Composite(m) = model else {
        return Err(Error::Config(format!("`nz` does not apply to a {kind} model")));
    };
    for &t in &sec.times {
        require(t.is_finite(), "nz times must be finite")?;
    }
    for &[t, s] in &sec.pairs {
        require(t.is_finite() && s.is_finite() && t >= s, format!("nz pair ({t}, {s}) needs t >= s"))?;
    }
    if let Some(dt) = sec.dt {
        require(dt.is_finite() && dt > 0.0, "nz.dt must be > 0")?;
    }
    let dt = sec.dt.unwrap_or_else(|| m.default_dt());

    let mut table = Table::new(&["t", "kappa", "kappa_imag"])?;
    for &t in &sec.times {
        let e = equal_time_kernel(m, t);
        if e.compressibility_imag.abs() > IMAG_TOL {
            return Err(Error::ConventionMismatch(e.compressibility_imag));
        }
        table.row(&[Cell::Num(t), Cell::Num(e.compressibility), Cell::Num(e.compressibility_imag)])?;
    }
    let mut out = Outputs::default();
    out.add_table("nz.csv", table)?;
    if !sec.pairs.is_empty() {
        let mut kt = Table::new(&["t", "s", "contraction_re", "contraction_im", "kernel_norm"])?;
        for &[t, s] in &sec.pairs {
            let e = kernel_k(m, t, s, dt)?;
            let norm = e.kernel.matrix().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            kt.row(&[
                Cell::Num(t),
                Cell::Num(s),
                Cell::Num(-e.compressibility),
                Cell::Num(-e.compressibility_imag),
                Cell::Num(norm),
            ])?;
        }
        out.add_table("kernel.csv", kt)?;
    }
    out.add_json(
        "nz.json",
        &NzSummary {
            n_sys: m.n_sys(),
            n_bath: m.n_bath(),
            literal_commutator: m.literal_commutator(),
            coupling_norm: m.coupling_norm(),
            mean_field_norm: m.mean_field().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
            dt,
        },
    )?;
    Ok(out)
}

#[derive(Serialize)]
struct ClassicalSummary {
    model: &'static str,
    mass: f64,
    omega: f64,
    kappa: f64,
    damping: Vec<Vec<f64>>,
}

pub fn classical(cfg: &ScenarioConfig, model: &Model, seed: u64) -> Result<Outputs> {
    let kind = cfg.model.kind();
    let sec = cfg
        .classical
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [classical] section".into()))?;
    let Model::Classical(flow) = model else {
        return Err(Error::Config(format!("`classical` does not apply to a {kind} model")));
    };
    finite_nonneg(sec.t_end, "classical.t_end")?;
    require(sec.samples >= 2, "classical.samples must be >= 2")?;
    require(sec.grid >= 2, "classical.grid must be >= 2")?;
    require(sec.extent.is_finite() && sec.extent > 0.0, "classical.extent must be > 0")?;
    let initial: Vec<DVector<f64>> = sec
        .initial
        .iter()
        .map(|x| {
            require(x.iter().all(|v| v.is_finite()), "classical.initial must be finite")
                .map(|_| DVector::from_column_slice(x))
        })
        .collect::<Result<_>>()?;
    let ensemble = match &sec.ensemble {
        Some(e) => {
            require(e.n >= 2, "classical.ensemble.n must be >= 2")?;
            for &t in &e.times {
                finite_nonneg(t, "classical ensemble time")?;
            }
            let g = Gaussian::new(
                DVector::from_column_slice(&e.mean),
                DMatrix::from_fn(2, 2, |i, j| e.covariance[i][j]),
            )
            .map_err(config)?;
            Some((e, g))
        }
        None => None,
    };

    let mut out = Outputs::default();
    out.add_table("flow.csv", classical_flow_table(flow, sec.grid, sec.extent)?)?;
    let times: Vec<f64> = (0..sec.samples)
        .map(|k| sec.t_end * k as f64 / (sec.samples - 1) as f64)
        .collect();
    let mut tr = Table::new(&["trajectory", "t", "q", "p"])?;
    for (k, x0) in initial.iter().enumerate() {
        for (t, x) in times.iter().zip(flow.trajectory(x0, &times)) {
            tr.row(&[Cell::from(k), Cell::Num(*t), Cell::Num(x[0]), Cell::Num(x[1])])?;
        }
    }
    out.add_table("trajectories.csv", tr)?;

    if let Some((e, g)) = ensemble {
        let mut stream = NormalStream::new(seed);
        let samples0: Vec<_> = (0..e.n).map(|_| g.draw(&mut stream)).collect();
        let mut moments = Table::new(&["snapshot", "t", "n", "mean_q", "mean_p", "cov_qq", "cov_qp", "cov_pp"])?;
        let mut gauss = Table::new(&["snapshot", "t", "mean_q", "mean_p", "cov_qq", "cov_qp", "cov_pp", "density_scale"])?;
        for (k, &t) in e.times.iter().enumerate() {
            let moved = classical_pushforward(&samples0, flow, t);
            let m = mean_of(&moved)?;
            let c = covariance_of(&moved)?;
            moments.row(&[
                Cell::from(k),
                Cell::Num(t),
                Cell::from(moved.len()),
                Cell::Num(m[0]),
                Cell::Num(m[1]),
                Cell::Num(c[(0, 0)]),
                Cell::Num(c[(0, 1)]),
                Cell::Num(c[(1, 1)]),
            ])?;
            let (map, shift) = flow.field().flow_map(t);
            let gt = g.transformed(&map, &shift)?;
            let (gm, gc) = (gt.mean(), gt.covariance());
            gauss.row(&[
                Cell::from(k),
                Cell::Num(t),
                Cell::Num(gm[0]),
                Cell::Num(gm[1]),
                Cell::Num(gc[(0, 0)]),
                Cell::Num(gc[(0, 1)]),
                Cell::Num(gc[(1, 1)]),
                Cell::Num((flow.kappa() * t).exp()),
            ])?;
            if e.dump_samples {
                let mut s = Table::new(&["q", "p"])?;
                for x in &moved {
                    s.row(&[Cell::Num(x[0]), Cell::Num(x[1])])?;
                }
                out.add_table(&format!("samples_{k:03}.csv"), s)?;
            }
        }
        out.add_table("moments.csv", moments)?;
        out.add_table("gaussian.csv", gauss)?;
    }
    out.add_json(
        "classical.json",
        &ClassicalSummary {
            model: kind,
            mass: flow.mass(),
            omega: flow.omega(),
            kappa: flow.kappa(),
            damping: rows_of(flow.damping()),
        },
    )?;
    Ok(out)
}
