use linetension::construction::{build_tetra_measure, ConstructionParams};
use linetension::currents::{decompose_into_loops, round_multiplicities, PolyhedralCurrent};
use linetension::densities::{g_infinity, Density, DictionaryParams, RecessionEvaluator};
use linetension::energy::{
    e_sigma, f_infinity, loops_of, lower_bound_diagnostics, upper_bound_experiment, ExperimentParams,
};
use linetension::fields::{coordinate_rank_one_decomposition, e0_energy, PiecewiseConstantField};
use linetension::geometry::{Aabb, Triangulation};
use linetension::numerics::{loglog_slope, Extended};
use linetension::Vec3;
use nalgebra::DMatrix;

fn square(b: &[f64]) -> PolyhedralCurrent {
    let p = [
        Vec3::new(0.2, 0.2, 0.5),
        Vec3::new(0.8, 0.2, 0.5),
        Vec3::new(0.8, 0.8, 0.5),
        Vec3::new(0.2, 0.8, 0.5),
    ];
    let mut c = PolyhedralCurrent::new(b.len());
    for i in 0..4 {
        c.push(p[i], p[(i + 1) % 4], b).unwrap();
    }
    c
}

fn cube() -> Aabb {
    Aabb::new([0.0; 3], [1.0; 3])
}

#[test]
fn irrational_multiplicity_rounds_at_rate_sigma() {
    let theta = 2f64.sqrt();
    let mu = square(&[theta, 0.0]);
    let psi = Density::iso(2);
    let rec = RecessionEvaluator::new(psi.clone(), 64).unwrap();
    let q = 1e-9;
    let d = decompose_into_loops(&mu, q, |_| false, 1e-12).unwrap();
    let f = f_infinity(&mu, &rec, &cube());
    // √2 is not in the integer cone of R², but (√2, 0) is a positive
    // multiple of e₁.
    assert!((f.to_f64() - 4.0 * 0.6 * theta).abs() < 1e-12);
    let (mut sig, mut gaps) = (Vec::new(), Vec::new());
    for j in 1..=8 {
        let sigma = 0.5f64.powi(j);
        let hat = round_multiplicities(&d, sigma, q).unwrap();
        let e = e_sigma(&hat, &psi, sigma, &cube()).unwrap().to_f64();
        let gap = (e - f.to_f64()).abs();
        assert!(gap <= psi.upper * sigma * 2f64.sqrt() * d.total_length() + 1e-12);
        sig.push(sigma);
        gaps.push(gap);
    }
    let nonzero: Vec<(f64, f64)> = sig.iter().zip(&gaps).filter(|(_, g)| **g > 0.0).map(|(s, g)| (*s, *g)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = nonzero.into_iter().unzip();
    assert!(loglog_slope(&xs, &ys).unwrap() >= 0.9);
}

#[test]
fn single_tet_rank_one_sandwich() {
    let mesh = Triangulation::single_tet().unwrap();
    let a = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
    let field = PiecewiseConstantField::constant(mesh.clone(), &a);
    let psi = Density::iso(1);
    let params = ExperimentParams {
        ks: vec![4, 8],
        sigmas: vec![0.5, 0.25],
        eps: vec![0.01],
        dictionary: DictionaryParams { z_max: 2, directions: 64 },
        s_max: 16,
        seed: 4,
    };
    let report = upper_bound_experiment(&field, &psi, &params).unwrap();
    let vol = mesh.total_volume();
    assert!((report.reductions[0].e0 - vol).abs() < 1e-9);
    let f: Vec<f64> = report.rows.iter().map(|r| r.f_infinity.to_f64()).collect();
    // F_∞(μ_k) ≥ the lattice part, which tends to vol(T), and approaches it.
    assert!(f.last().unwrap() < f.first().unwrap());
    assert!(report.rows.iter().all(|r| r.gap <= r.gap_bound));
}

#[test]
fn constructed_tet_measure_energy_splits_into_lines_and_correctors() {
    let mesh = Triangulation::single_tet().unwrap();
    let a = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
    let dec = coordinate_rank_one_decomposition(&a);
    let rec = RecessionEvaluator::new(Density::iso(1), 16).unwrap();
    for k in [2, 4, 8] {
        let p = ConstructionParams::for_domain(k, 1, mesh.domain());
        let c = build_tetra_measure(0, &mesh.tetra()[0], &a, &dec, &mesh.face_planes(), &p).unwrap();
        let total = f_infinity(&c.measure(), &rec, &mesh).to_f64();
        let lines = f_infinity(&c.nu, &rec, &mesh).to_f64();
        let mut eta = c.omega.clone();
        eta.append(&c.rho);
        // ψ_∞ ≤ c̄ |b| with c̄ = 1 for the isotropic density.
        assert!(total <= lines + eta.total_variation_on(&mesh) + 1e-12);
    }
}

#[test]
fn certificate_bound_grows_with_eps() {
    let mesh = Triangulation::kuhn_subdivision(1).unwrap();
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.0, -0.3, 0.8]);
    let field = PiecewiseConstantField::constant(mesh, &a);
    let params = ExperimentParams {
        ks: vec![2],
        sigmas: vec![0.5],
        eps: vec![1e-4, 0.05, 0.5],
        dictionary: DictionaryParams { z_max: 3, directions: 64 },
        s_max: 16,
        seed: 1,
    };
    let report = upper_bound_experiment(&field, &Density::iso(2), &params).unwrap();
    let bounds: Vec<f64> = report.reductions.iter().map(|r| r.bound).collect();
    assert!(bounds.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{bounds:?}");
    assert!(report.reductions.iter().all(|r| r.bound <= r.e0 + r.eps * r.volume + 1e-12));
}

#[test]
fn lower_bound_diagnostics_on_trivial_and_rank_one_fields() {
    let psi = Density::iso(1);
    let rec = RecessionEvaluator::new(psi.clone(), 16).unwrap();
    let dict = DictionaryParams { z_max: 2, directions: 64 };
    let params = ExperimentParams {
        ks: vec![2],
        sigmas: vec![0.25],
        eps: vec![0.01],
        dictionary: dict,
        s_max: 16,
        seed: 2,
    };
    let mesh = Triangulation::single_tet().unwrap();
    let zero = PiecewiseConstantField::constant(mesh.clone(), &DMatrix::zeros(1, 3));
    let rep = upper_bound_experiment(&zero, &psi, &params).unwrap();
    let lb = lower_bound_diagnostics(&psi, &rec, &dict, &rep, &[], 10);
    assert!(lb.passed());
    assert_eq!((lb.e0, lb.liminf_estimate, lb.limsup_estimate), (0.0, 0.0, 0.0));

    let a = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
    let field = PiecewiseConstantField::constant(mesh.clone(), &a);
    let rep = upper_bound_experiment(&field, &psi, &params).unwrap();
    let c = build_tetra_measure(
        0,
        &mesh.tetra()[0],
        &a,
        &coordinate_rank_one_decomposition(&a),
        &mesh.face_planes(),
        &ConstructionParams::for_domain(2, 2, mesh.domain()),
    )
    .unwrap();
    let q = linetension::currents::default_quantum(mesh.domain());
    let d = loops_of(&c.measure(), &mesh, q).unwrap();
    let hat = round_multiplicities(&d, 0.25, q).unwrap();
    let lb = lower_bound_diagnostics(&psi, &rec, &dict, &rep, &[(0.25, hat)], 20);
    assert!(lb.passed(), "{:?}", lb.violations);
    assert!(lb.segments_checked > 0);
}

#[test]
fn e0_of_rank_one_tet_is_norm_times_volume() {
    let mesh = Triangulation::single_tet().unwrap();
    let b = [3.0, 4.0];
    let a = DMatrix::from_row_slice(2, 3, &[0.0, b[0], 0.0, 0.0, b[1], 0.0]);
    let field = PiecewiseConstantField::constant(mesh.clone(), &a);
    let rec = RecessionEvaluator::new(Density::iso(2), 16).unwrap();
    match e0_energy(&field, |m| g_infinity(m, &rec)) {
        Extended::Finite(v) => assert!((v - 5.0 * mesh.total_volume()).abs() < 1e-12),
        Extended::Infinite => panic!("rank-one field has finite energy"),
    }
}
