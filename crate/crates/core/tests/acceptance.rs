//! The eight acceptance criteria, run in sequence. Each prints one line
//! `criterion N (name): PASS|FAIL  detail`; the process exits nonzero if any
//! criterion fails.

use std::error::Error;
use std::path::Path;
use std::time::Instant;

use linetension::construction::{
    approximate_measure_pipeline, brute_force_counts, build_tetra_measure, interior_ledger_residual, BubbleTest,
    ConstructionParams, LineLattice,
};
use linetension::currents::{check_divergence_free, default_quantum};
use linetension::densities::{check_density_properties, convex_envelope, Density, DictionaryParams, RecessionEvaluator};
use linetension::energy::{upper_bound_experiment, ExperimentParams};
use linetension::fields::{
    coordinate_rank_one_decomposition, curl_of_interpolated_potential, PiecewiseConstantField, PotentialSpec,
    RankOneDecomposition,
};
use linetension::geometry::{Aabb, FaceGrid, Tetra, Triangulation};
use linetension::harness::{gradient_pairing_check, run, Command, GeometryFormat, RunConfig};
use linetension::numerics::{fibonacci_sphere, seeded_rng, Extended};
use linetension::Vec3;
use nalgebra::DMatrix;
use rand::Rng;

type Outcome = Result<(bool, String), Box<dyn Error>>;
type Criterion = (&'static str, fn() -> Outcome);

fn quadratic_potential() -> PotentialSpec {
    let mut phi = PotentialSpec::new(2);
    phi.add(0, 0, [0, 1, 1], 1.0);
    phi.add(0, 2, [2, 0, 0], 0.5);
    phi.add(1, 1, [1, 0, 1], -1.0);
    phi.add(1, 0, [0, 0, 1], 0.75);
    phi
}

fn cube_field() -> Result<PiecewiseConstantField, Box<dyn Error>> {
    let mesh = Triangulation::kuhn_subdivision(1)?;
    Ok(curl_of_interpolated_potential(&quadratic_potential(), &mesh)?)
}

fn coordinate_decompositions(field: &PiecewiseConstantField) -> Vec<RankOneDecomposition> {
    field.matrices().iter().map(coordinate_rank_one_decomposition).collect()
}

fn divergence_free_gluing() -> Outcome {
    let field = cube_field()?;
    let decs = coordinate_decompositions(&field);
    let mesh = field.mesh();
    if mesh.len() != 6 {
        return Ok((false, format!("expected 6 tets, got {}", mesh.len())));
    }
    let q = default_quantum(mesh.domain());
    let (measures, _) = approximate_measure_pipeline(&field, &decs, &[2, 4, 8], 1, &[])?;
    let (mut ok, mut detail) = (true, Vec::new());
    for g in &measures {
        let mu = g.measure();
        let mass = mu.total_variation_on(mesh);
        let residual = interior_ledger_residual(&mu, mesh, q)?;
        let div = check_divergence_free(&mu, mesh, q, 1e-10 * mass)?;
        let (worst, n) = gradient_pairing_check(&mu, mesh, 20, g.k as u64);
        ok &= residual <= 1e-10 * mass && div.divergence_free && worst <= 1e-10 && n == 20;
        detail.push(format!("k={}: ledger {:.1e}|mu|, pairing {:.1e}|mu|Lip", g.k, residual / mass, worst));
    }
    Ok((ok, detail.join("; ")))
}

/// A random tetrahedron with inradius at least 8% of its diameter.
fn random_tet(seed: u64) -> Tetra {
    let mut rng = seeded_rng(&[seed, 0x7E7]);
    loop {
        let v: [Vec3; 4] = std::array::from_fn(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()));
        if let Ok(t) = Tetra::new(v) {
            if t.inradius() >= 0.08 * t.diam() {
                return t;
            }
        }
    }
}

fn lattice_count_estimate() -> Outcome {
    let (mut ok, mut oracle_agrees, mut detail) = (true, true, Vec::new());
    for seed in 0..5u64 {
        let tet = random_tet(seed);
        let mut rng = seeded_rng(&[seed, 0xD1]);
        let t = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let b = vec![rng.gen_range(0.5..2.0), rng.gen_range(-2.0..2.0)];
        let a = DMatrix::from_fn(2, 3, |i, j| b[i] * t[j]);
        let dec = RankOneDecomposition { terms: vec![(b.clone(), t)] };
        let domain = Aabb::from_points(tet.vertices()).expect("four points");
        let mut constants = Vec::new();
        for k in [2usize, 4, 8, 16] {
            let params = ConstructionParams::for_domain(k, seed, &domain);
            let c = build_tetra_measure(0, &tet, &a, &dec, &[], &params)?;
            let term = &c.terms[0];
            let grid = FaceGrid::subdivide(&tet, k)?.shrink_and_project()?;
            let lattice = LineLattice::new(&b, &t, k, term.offset);
            let oracle = brute_force_counts(&lattice, &grid, params.eps_rel * tet.diam());
            oracle_agrees &= oracle == term.counts;
            let k4 = (k as f64).powi(4);
            let gap = oracle
                .iter()
                .enumerate()
                .map(|(h, &n)| (c.inner_area[h] * k4 * t.dot(&c.normals[h]).abs() - n as f64).abs())
                .fold(0.0, f64::max);
            constants.push(gap / (tet.diam() * k as f64));
        }
        let lo = constants.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = constants.iter().copied().fold(0.0, f64::max);
        ok &= hi <= 2.0 * lo;
        let cs: Vec<String> = constants.iter().map(|c| format!("{c:.3}")).collect();
        detail.push(format!("seed {seed}: C_k = [{}] max/min {:.2}", cs.join(", "), hi / lo));
    }
    detail.push(format!("counts {} the brute-force oracle", if oracle_agrees { "match" } else { "DIFFER from" }));
    Ok((ok && oracle_agrees, detail.join("; ")))
}

fn vanishing_correctors() -> Outcome {
    let field = cube_field()?;
    let ks: Vec<usize> = (2..=16).collect();
    let (_, report) = approximate_measure_pipeline(&field, &coordinate_decompositions(&field), &ks, 3, &[])?;
    let (omega, rho) = (report.omega_slope, report.rho_slope);
    let ok = matches!((omega, rho), (Some(w), Some(r)) if w <= -0.8 && r <= -0.8);
    Ok((ok, format!("slopes over k=2..16: omega {omega:.3?}, rho {rho:.3?}")))
}

fn weak_star_convergence() -> Outcome {
    let field = cube_field()?;
    let tests = BubbleTest::family(field.dim(), 10);
    let (_, report) = approximate_measure_pipeline(&field, &coordinate_decompositions(&field), &[2, 4, 8, 16], 4, &tests)?;
    let rising: Vec<usize> =
        (0..tests.len()).filter(|&i| !report.rows.windows(2).all(|w| w[1].weak_gaps[i] < w[0].weak_gaps[i])).collect();
    let last = report.rows.last().expect("four levels");
    let worst = last.weak_gaps.iter().copied().fold(0.0, f64::max);
    let ok = rising.is_empty() && worst <= 0.05 * report.field_l1;
    let maxima: Vec<String> =
        report.rows.iter().map(|r| format!("{:.1e}", r.weak_gaps.iter().copied().fold(0.0, f64::max))).collect();
    let rises: Vec<String> = rising
        .iter()
        .map(|&i| {
            let g: Vec<String> = report.rows.iter().map(|r| format!("{:.1e}", r.weak_gaps[i])).collect();
            format!("test {i} [{}]", g.join(", "))
        })
        .collect();
    Ok((
        ok,
        format!(
            "largest gap at k=16 is {:.2}% of the L1 norm; largest gap per k [{}]; not decreasing: {}",
            100.0 * worst / report.field_l1,
            maxima.join(", "),
            if rises.is_empty() { "none".into() } else { rises.join(", ") }
        ),
    ))
}

fn convex_envelope_oracle() -> Outcome {
    let rec = RecessionEvaluator::new(Density::iso(3), 64)?;
    let params = DictionaryParams { z_max: 3, directions: 256 };
    let mut rng = seeded_rng(&[0xC5]);
    let (mut ok, mut worst, mut largest) = (true, 0.0f64, 0);
    for _ in 0..10 {
        let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let nuclear: f64 = a.clone().svd(false, false).singular_values.sum();
        let sol = convex_envelope(&a, &rec, &params)?;
        let doubled = convex_envelope(&(&a * 2.0), &rec, &params)?;
        let rel = sol.value / nuclear - 1.0;
        ok &= (-1e-9..=0.02).contains(&rel) && sol.certificate.terms.len() <= 9 && doubled.value == 2.0 * sol.value;
        worst = worst.max(rel.abs());
        largest = largest.max(sol.certificate.terms.len());
    }
    Ok((ok, format!("largest relative excess {:.3}%, largest certificate {largest} terms", 100.0 * worst)))
}

fn upper_bound_sandwich() -> Outcome {
    let field = cube_field()?;
    let params = ExperimentParams {
        ks: vec![8],
        sigmas: (1..=6).map(|j| 0.5f64.powi(j)).collect(),
        eps: vec![0.01],
        dictionary: DictionaryParams { z_max: 3, directions: 256 },
        s_max: 64,
        seed: 6,
    };
    let report = upper_bound_experiment(&field, &Density::iso(2), &params)?;
    let first = &report.rows[0];
    let sandwich = first.f_infinity_excess <= 0.03;
    let rounding = report.rows.iter().all(|r| r.gap <= r.gap_bound);
    let worst = report.rows.iter().map(|r| r.gap / r.gap_bound).fold(0.0, f64::max);
    Ok((
        sandwich && rounding,
        format!(
            "F_inf = {:.4}, E0 + eps L3 = {:.4}, excess {:.1}% (limit 3%); |E_sigma - F_inf| at most {:.3} of its bound",
            first.f_infinity.to_f64(),
            first.e0 + 0.01 * report.reductions[0].volume,
            100.0 * first.f_infinity_excess,
            worst
        ),
    ))
}

fn density_suite() -> Outcome {
    let iso = check_density_properties(&Density::iso(2), 200, 64, 1);
    let square = check_density_properties(&Density::power(2, 2.0), 200, 64, 1);
    let witness = square.subadditivity.witness.clone();
    let s_max = 64;
    let rec = RecessionEvaluator::new(Density::offset(2, 1.0), s_max)?;
    let mut rec_err = 0.0f64;
    for z in [[1i64, 0], [0, 3], [2, -1], [5, 7]] {
        for t in fibonacci_sphere(16) {
            let b = [z[0] as f64, z[1] as f64];
            let norm = b[0].hypot(b[1]);
            if let Extended::Finite(v) = rec.evaluate(&b, &t).value {
                rec_err = rec_err.max((v - norm).abs() / norm);
            } else {
                rec_err = f64::INFINITY;
            }
        }
    }
    let ok = iso.all_passed() && !square.subadditivity.passed && witness.is_some() && rec_err <= 1.0 / s_max as f64;
    Ok((ok, format!("|z|^2 subadditivity witness {witness:?}; recession of |z|+1 off by {rec_err:.2e}")))
}

fn determinism() -> Outcome {
    let cube = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/cube.toml");
    let mut cfg = RunConfig::load(&cube)?;
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    let mut files = 0;
    for cmd in [Command::Approximate, Command::Energy, Command::Envelope] {
        let mut manifests = Vec::new();
        for dir in [a.path(), b.path()] {
            cfg.out_dir = dir.to_path_buf();
            manifests.push(run(&cfg, cmd, GeometryFormat::Obj)?);
        }
        if manifests[0] != manifests[1] {
            return Ok((false, format!("{} manifests differ", cmd.name())));
        }
        for art in manifests[0].artifacts.iter().map(|x| x.path.as_str()).chain(["manifest.json"]) {
            if std::fs::read(a.path().join(art))? != std::fs::read(b.path().join(art))? {
                return Ok((false, format!("{art} differs")));
            }
            files += 1;
        }
    }
    Ok((true, format!("{files} files byte-identical across two runs")))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("divergence-free gluing", divergence_free_gluing),
        ("lattice-count estimate", lattice_count_estimate),
        ("vanishing correctors", vanishing_correctors),
        ("weak* convergence", weak_star_convergence),
        ("convex envelope oracle", convex_envelope_oracle),
        ("upper-bound sandwich", upper_bound_sandwich),
        ("density property suite", density_suite),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!ok);
        println!(
            "criterion {} ({name}): {}  {detail} [{:.1}s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
