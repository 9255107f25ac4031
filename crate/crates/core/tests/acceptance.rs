//! Acceptance suite: one PASS/FAIL line per criterion, each checked at its
//! stated tolerance and runtime budget. Exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use liouflow::classical::{classical_density_at, damped_harmonic_flow, harmonic_flow};
use liouflow::cli::{self, Kind};
use liouflow::dynamics::{divergence_numeric, LinearDynamics};
use liouflow::ensemble::{
    boundary_flux_check, log_density_at, propagate_gaussian, pushforward, sample,
    ensemble_covariance, Support, TruncatedGaussian,
};
use liouflow::flow::{generator_velocity, Generator, LindbladTerm};
use liouflow::nonmarkovian::{
    kernel_k, nz_compressibility, partial_trace_bath, projector_p, projector_q, CompositeModel,
};
use liouflow::random;
use liouflow::space::{commutator, hermitian_basis, kron, to_coords, trace, CMatrix, Superoperator, C64};
use liouflow::trajectory::{integrate, spin_boson_analytic, SpinBoson};
use liouflow::transport::{Ball, FluxSettings, Gaussian};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Random interior states in coordinates.
fn interior_points(basis_dim: usize, n: usize, rng: &mut ChaCha20Rng) -> Vec<DVector<f64>> {
    let basis = hermitian_basis(basis_dim).unwrap();
    (0..n)
        .map(|_| {
            let sigma = random::interior_density(basis_dim, 0.9, rng);
            to_coords(&sigma, &basis).unwrap().into_vector()
        })
        .collect()
}

fn closed_liouville() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = 2 + k % 3;
        let basis = hermitian_basis(n).unwrap();
        let gen = Generator::new(random::hermitian(n, &mut rng), Vec::new()).unwrap();
        let v = generator_velocity(&gen, &basis);
        for c in interior_points(n, 10, &mut rng) {
            worst = worst.max(divergence_numeric(&v, &c, 1e-5).abs());
        }
    }
    outcome(worst <= 1e-8, format!("max |div| = {worst:.2e} over 1000 states"))
}

fn gksl_formula() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let (mut worst_rel, mut worst_spread): (f64, f64) = (0.0, 0.0);
    for k in 0..50 {
        let n = 2 + k % 3;
        let basis = hermitian_basis(n).unwrap();
        let terms: Vec<_> = (0..1 + k % 3)
            .map(|_| LindbladTerm::new(random::traceless_unit(n, &mut rng), rng.gen::<f64>()).unwrap())
            .collect();
        let expect = n as f64 * terms.iter().map(|t| t.rate()).sum::<f64>();
        let gen = Generator::new(random::hermitian(n, &mut rng), terms).unwrap();
        let v = generator_velocity(&gen, &basis);
        let kappas: Vec<f64> = interior_points(n, 10, &mut rng)
            .iter()
            .map(|c| -divergence_numeric(&v, c, 1e-5))
            .collect();
        for kappa in &kappas {
            worst_rel = worst_rel.max((kappa - expect).abs() / expect.abs().max(f64::MIN_POSITIVE));
            worst_spread = worst_spread.max((kappa - kappas[0]).abs());
        }
    }
    outcome(
        worst_rel <= 1e-6 && worst_spread <= 1e-8,
        format!("max rel. error {worst_rel:.2e}, max spread {worst_spread:.2e}"),
    )
}

fn spin_boson_exactness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let omega = 1.0;
    let model = SpinBoson::new(omega, omega / 3.0, omega / 3.0).unwrap();
    let field = model.flow();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c0 = liouflow::space::StateCoords::new(2, random::point_in_ball(3, 1.0, &mut rng)).unwrap();
        let tr = integrate(&field, &c0, 4.0 * PI / omega, 1e-3 / omega).unwrap();
        for (t, c) in tr.times().iter().zip(tr.points()) {
            let exact = spin_boson_analytic(&c0, omega, omega / 3.0, omega / 3.0, *t).unwrap();
            worst = worst.max((c.coords() - exact.coords()).amax());
        }
    }
    outcome(worst <= 1e-6, format!("max error {worst:.2e} over 20 trajectories"))
}

fn density_law() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    let model = SpinBoson::new(1.0, 1.0 / 3.0, 1.0 / 3.0).unwrap();
    let dist = TruncatedGaussian::new(Vector3::new(0.2, 0.1, 0.0), Matrix3::identity() * 0.05, true).unwrap();
    let (mut worst_slope, mut worst_resid): (f64, f64) = (0.0, 0.0);
    let times: Vec<f64> = (0..=50).map(|k| 4.0 * PI * k as f64 / 50.0).collect();
    for _ in 0..20 {
        let c0 = Vector3::from_column_slice(random::point_in_ball(3, 0.9, &mut rng).as_slice());
        let y: Vec<f64> = times
            .iter()
            .map(|&t| log_density_at(&dist, &model, &model.evolve(&c0, t), t))
            .collect();
        let n = times.len() as f64;
        let (mt, my) = (times.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = times.iter().zip(&y).map(|(t, v)| (t - mt) * (v - my)).sum();
        let sxx: f64 = times.iter().map(|t| (t - mt) * (t - mt)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mt;
        worst_slope = worst_slope.max((slope - 2.0 * (1.0 / 3.0 + 1.0 / 3.0)).abs());
        for (t, v) in times.iter().zip(&y) {
            worst_resid = worst_resid.max((v - intercept - slope * t).abs());
        }
    }
    outcome(
        worst_slope <= 1e-8 && worst_resid <= 1e-8,
        format!("slope error {worst_slope:.2e}, max residual {worst_resid:.2e}"),
    )
}

fn fro(m: &Matrix3<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn gaussian_transport() -> Outcome {
    let omega = 1.0;
    let model = SpinBoson::new(omega, omega / 3.0, omega / 3.0).unwrap();
    let delta0 = Matrix3::identity() * 1e-4;
    let dist = TruncatedGaussian::untruncated(Vector3::new(0.3, -0.2, 0.4), delta0).unwrap();
    let t = 2.0 * PI / (3.0 * omega);

    let ens = sample(&dist, 100_000, 0x5eed).unwrap();
    let moved = pushforward(&ens, |c, t| model.evolve(c, t), t).unwrap();
    let mc = ensemble_covariance(&moved).unwrap();
    let g = 1.0 / 3.0 + 1.0 / 6.0;
    let a = (-g * t).exp();
    let (s, c) = (omega * t).sin_cos();
    let j = Matrix3::new(a * c, -a * s, 0.0, a * s, a * c, 0.0, 0.0, 0.0, (-t / 3.0).exp());
    let delta_t = j * delta0 * j.transpose();
    let mc_err = fro(&(mc - delta_t)) / fro(&delta_t);

    let truncated = TruncatedGaussian::new(Vector3::new(0.3, -0.2, 0.4), Matrix3::identity() * 0.02, true).unwrap();
    let mut semigroup: f64 = 0.0;
    for d0 in [&dist, &truncated] {
        for (t1, t2) in [(0.3, 0.9), (1.1, 2.0), (2.5, 0.4)] {
            let two = propagate_gaussian(&propagate_gaussian(d0, &model, t1).unwrap(), &model, t2).unwrap();
            let one = propagate_gaussian(d0, &model, t1 + t2).unwrap();
            semigroup = semigroup
                .max((two.mean() - one.mean()).amax())
                .max(fro(&(two.covariance() - one.covariance())) / fro(&one.covariance()))
                .max((two.log_norm() - one.log_norm()).abs());
            if let (Support::Ellipsoid(a), Support::Ellipsoid(b)) = (two.support(), one.support()) {
                semigroup = semigroup.max((a - b).amax() / b.amax());
            }
        }
    }
    outcome(
        mc_err <= 0.05 && semigroup <= 1e-10,
        format!("MC covariance error {:.2}%, semigroup deviation {semigroup:.2e}", 100.0 * mc_err),
    )
}

fn integral_continuity() -> Outcome {
    let model = SpinBoson::new(1.0, 1.0 / 3.0, 1.0 / 3.0).unwrap();
    let dist = TruncatedGaussian::new(Vector3::new(0.5, 0.0, 0.5), Matrix3::identity() * 0.04, true).unwrap();
    let region = Ball::new(DVector::zeros(3), 0.3).unwrap();
    let settings = FluxSettings {
        time_step: 1e-2,
        quadrature_nodes: 2048,
    };
    let r = boundary_flux_check(&model, &dist, &region, 0.9, 1_000_000, 0xf1u64, settings).unwrap();
    outcome(
        r.relative_discrepancy <= 0.10,
        format!(
            "dP/dt = {:.4} +- {:.4}, surface flux = {:.4}, relative discrepancy {:.2}%",
            r.dpdt_mc,
            r.dpdt_std_error,
            r.surface_flux,
            100.0 * r.relative_discrepancy
        ),
    )
}

fn classical_analog() -> Outcome {
    let omega = 1.0;
    let g0 = Gaussian::new(DVector::from_column_slice(&[1.0, 0.0]), DMatrix::identity(2, 2) * 0.04).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(707);
    let harmonic = harmonic_flow(1.0, omega).unwrap();
    let damped = damped_harmonic_flow(1.0, omega, omega / 2.0).unwrap();
    let (mut h_dev, mut d_dev): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let x0 = g0.mean() + random::point_in_ball(2, 0.5, &mut rng);
        let p0 = g0.pdf(&x0);
        for k in 0..=20 {
            let t = 4.0 * PI * k as f64 / 20.0;
            let ph = classical_density_at(&g0, &harmonic, &harmonic.evolve(&x0, t), t);
            h_dev = h_dev.max((ph - p0).abs() / p0);
            let pd = classical_density_at(&g0, &damped, &damped.evolve(&x0, t), t);
            let want = p0 * (omega / 2.0 * t).exp();
            d_dev = d_dev.max((pd - want).abs() / want);
        }
    }
    let hk = harmonic.kappa().abs();
    let dk = (damped.kappa() - omega / 2.0).abs();
    outcome(
        hk <= 1e-10 && h_dev <= 1e-10 && dk <= 1e-8 && d_dev <= 1e-8,
        format!(
            "harmonic kappa {hk:.1e}, density drift {h_dev:.1e}; damped kappa error {dk:.1e}, growth error {d_dev:.1e}"
        ),
    )
}

/// `-div` of the reduced equal-time kernel flow, with every superoperator
/// applied directly as a map on matrices.
fn fd_reduced_compressibility(model: &CompositeModel, t: f64) -> f64 {
    let (ns, nb) = (model.n_sys(), model.n_bath());
    let basis = hermitian_basis(ns).unwrap();
    let rho = model.rho_b().entries().clone();
    let vt = model.coupling_at(t);
    let p = |x: &CMatrix| kron(&partial_trace_bath(x, ns, nb), &rho);
    let l = |x: &CMatrix| commutator(&vt, x) * C64::new(0.0, -1.0);
    let q = |x: &CMatrix| x - p(x);
    let velocity = |c: &DVector<f64>| {
        let sigma = basis.operator_from(c, 1.0).unwrap();
        basis.coords_unchecked(&partial_trace_bath(&p(&l(&q(&l(&p(&kron(&sigma, &rho)))))), ns, nb))
    };
    -divergence_numeric(velocity, &DVector::from_column_slice(&[0.05, -0.03, 0.02]), 1e-3)
}

fn nakajima_zwanzig() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(808);
    let (mut algebra, mut oracle, mut scaling): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..10 {
        let m = random::composite_model(2, 2, rng.gen_range(0.2..2.0), &mut rng);
        let p = projector_p(&m);
        let q = projector_q(&m);
        let id = Superoperator::identity(m.dim());
        algebra = algebra
            .max((&p * &p).max_abs_diff(&p))
            .max((&q * &q).max_abs_diff(&q))
            .max((&p * &q).max_abs())
            .max((&q * &p).max_abs())
            .max((&p + &q).max_abs_diff(&id));
        let sigma = random::density_matrix(m.dim(), &mut rng);
        algebra = algebra.max((trace(&p.apply(sigma.entries())) - C64::new(1.0, 0.0)).norm());

        let t = rng.gen_range(0.0..2.0);
        let k = nz_compressibility(&m, t).unwrap();
        let fd = fd_reduced_compressibility(&m, t);
        oracle = oracle.max((k - fd).abs() / fd.abs());

        let lambda = rng.gen_range(0.3..3.0);
        let kl = nz_compressibility(&m.clone().with_scaled_coupling(lambda), t).unwrap();
        scaling = scaling.max((kl - lambda * lambda * k).abs() / kl.abs());
    }
    let h_b = random::hermitian(2, &mut rng);
    let free = CompositeModel::new(
        random::hermitian(2, &mut rng),
        h_b.clone(),
        CMatrix::zeros(4, 4),
        random::thermal_state(&h_b, 1.0),
    )
    .unwrap();
    let zero = kernel_k(&free, 1.0, 0.25, 1e-2).unwrap().kernel.max_abs();
    outcome(
        algebra <= 1e-12 && zero == 0.0 && oracle <= 1e-6 && scaling <= 1e-8,
        format!(
            "projector identities {algebra:.1e}, V = 0 kernel {zero:.1e}, oracle rel. {oracle:.1e}, lambda^2 scaling rel. {scaling:.1e}"
        ),
    )
}

fn golden(scenario: &str, sub: &str, file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(scenario)
        .join(sub)
        .join(file)
}

fn table(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().to_owned();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn plot_data() -> Outcome {
    let scenarios = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let tmp = tempfile::tempdir().unwrap();
    let runs = [
        ("closed_spin", Kind::Flow, "flow", &["flow.csv"][..]),
        ("closed_spin", Kind::Traj, "traj", &["trajectory.csv", "snapshots.csv"][..]),
        ("spin_boson", Kind::Flow, "flow", &["flow.csv"][..]),
        ("spin_boson", Kind::Traj, "traj", &["trajectory.csv", "snapshots.csv"][..]),
        ("harmonic", Kind::Flow, "flow", &["flow.csv"][..]),
        ("harmonic", Kind::Classical, "classical", &["trajectories.csv"][..]),
        ("damped", Kind::Flow, "flow", &["flow.csv"][..]),
        ("damped", Kind::Classical, "classical", &["trajectories.csv"][..]),
    ];
    let (mut golden_dev, mut snapshot_err, mut mismatched): (f64, f64, Vec<String>) = (0.0, 0.0, Vec::new());
    for (scenario, kind, sub, files) in runs {
        let out = tmp.path().join(scenario).join(sub);
        if let Err(e) = cli::run(kind, &scenarios.join(format!("{scenario}.toml")), &out, None) {
            return outcome(false, format!("{scenario} {sub}: {e}"));
        }
        for f in files {
            let (h1, got) = table(&out.join(f));
            let (h2, want) = table(&golden(scenario, sub, f));
            if h1 != h2 || got.len() != want.len() || got.iter().zip(&want).any(|(a, b)| a.len() != b.len()) {
                mismatched.push(format!("{scenario}/{f}"));
                continue;
            }
            for (a, b) in got.iter().flatten().zip(want.iter().flatten()) {
                golden_dev = golden_dev.max((a - b).abs() / (1.0 + b.abs()));
            }
            if *f == "snapshots.csv" {
                let times: Vec<f64> = got.iter().map(|r| r[1]).collect();
                let expected = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
                if !expected.iter().all(|t| times.iter().any(|s| (s - t).abs() < 1e-15)) {
                    mismatched.push(format!("{scenario}/{f} snapshot times"));
                }
                for r in &got {
                    snapshot_err = snapshot_err.max(r[8]);
                }
            }
        }
    }
    outcome(
        mismatched.is_empty() && golden_dev <= 1e-12 && snapshot_err <= 1e-10,
        format!(
            "golden deviation {golden_dev:.1e}, snapshot error {snapshot_err:.1e}{}",
            if mismatched.is_empty() {
                String::new()
            } else {
                format!(", mismatched: {}", mismatched.join(" "))
            }
        ),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Check, Option<u64>); 9] = [
        (1, "closed Liouville theorem", closed_liouville, Some(5)),
        (2, "GKSL compressibility formula", gksl_formula, Some(10)),
        (3, "spin-boson exactness", spin_boson_exactness, Some(5)),
        (4, "local density exponential law", density_law, Some(5)),
        (5, "Gaussian transport", gaussian_transport, Some(30)),
        (6, "integral continuity", integral_continuity, Some(60)),
        (7, "classical analog", classical_analog, Some(5)),
        (8, "Nakajima-Zwanzig kernel", nakajima_zwanzig, Some(60)),
        (9, "plot-data regression", plot_data, None),
    ];
    let mut failures = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check);
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(_) => (false, "panicked".to_owned()),
        };
        let in_time = budget.is_none_or(|s| elapsed < Duration::from_secs(s));
        let limit = budget.map_or(String::new(), |s| format!(" < {s} s"));
        let ok = pass && in_time;
        failures += usize::from(!ok);
        println!(
            "criterion {id} [{name}]: {} ({detail}; {:.2} s{limit})",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

