use linetension::currents::{
    boundary_ledger, default_quantum, pair_with_gradient, pair_with_ledger, pair_with_matrix_field, read_csv, write_csv,
    PolyhedralCurrent,
};
use linetension::geometry::{line_triangle_intersection, Aabb, Incidence, Region, Tetra, Triangle, Triangulation};
use linetension::Vec3;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Vec3> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn current(dim: usize) -> impl Strategy<Value = PolyhedralCurrent> {
    prop::collection::vec((point(), point(), prop::collection::vec(-3.0..3.0f64, dim)), 1..12).prop_map(move |segs| {
        let mut mu = PolyhedralCurrent::new(dim);
        for (a, b, w) in segs {
            mu.push(a, b, &w).unwrap();
        }
        mu
    })
}

/// A quadratic test field with coefficients `c`, one row per component.
fn quadratic(c: Vec<f64>) -> impl Fn(&Vec3, &mut [f64]) {
    move |x: &Vec3, out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            let k = &c[(7 * i) % c.len()..];
            let at = |j: usize| k.get(j).copied().unwrap_or(0.5);
            *o = at(0) + at(1) * x.x + at(2) * x.y + at(3) * x.z + at(4) * x.x * x.y + at(5) * x.z * x.z + at(6) * x.y * x.z;
        }
    }
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-10 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_pairing_is_linear_in_the_current(mu in current(2), nu in current(2), lam in -4.0..4.0f64,
            c in prop::collection::vec(-2.0..2.0f64, 14)) {
        let phi = quadratic(c);
        let mut sum = mu.scaled(lam);
        sum.append(&nu);
        let lhs = pair_with_matrix_field(&sum, &phi, 4);
        let rhs = lam * pair_with_matrix_field(&mu, &phi, 4) + pair_with_matrix_field(&nu, &phi, 4);
        prop_assert!(close(lhs, rhs, sum.total_variation() * 10.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn gradient_pairing_matches_the_ledger(mu in current(3), c in prop::collection::vec(-2.0..2.0f64, 21)) {
        let phi = quadratic(c);
        let q = default_quantum(&Aabb::new([0.0; 3], [1.0; 3]));
        let ledger = boundary_ledger(&mu, q, 0.0).unwrap();
        let direct = pair_with_gradient(&mu, &phi);
        let booked = pair_with_ledger(&ledger, &phi);
        prop_assert!(close(direct, booked, mu.total_variation() * 10.0), "{direct} vs {booked}");
    }

    #[test]
    fn closed_polygons_have_empty_ledgers(pts in prop::collection::vec(point(), 3..9), w in prop::collection::vec(-2.0..2.0f64, 2)) {
        let mut mu = PolyhedralCurrent::new(2);
        for i in 0..pts.len() {
            mu.push(pts[i], pts[(i + 1) % pts.len()], &w).unwrap();
        }
        let ledger = boundary_ledger(&mu, 1e-9, 1e-12).unwrap();
        prop_assert!(ledger.is_empty());
    }

    #[test]
    fn csv_round_trip_is_bit_exact(mu in current(3)) {
        let mut buf = Vec::new();
        write_csv(&mu, &mut buf).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), mu);
    }

    #[test]
    fn transversal_hits_are_stable_under_small_shifts(u in 0.15..0.7f64, v in 0.15..0.7f64,
            dx in -1.0..1.0f64, dy in -1.0..1.0f64, shift in prop::array::uniform3(-1e-9..1e-9f64)) {
        prop_assume!(u + v < 0.85);
        let tri = Triangle::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.3));
        let target = tri.a + (tri.b - tri.a) * u + (tri.c - tri.a) * v;
        let dir = (tri.normal() + Vec3::new(dx, dy, 0.0) * 0.5).normalize();
        let origin = target - dir * 2.0;
        let moved = origin + Vec3::from(shift);
        match (line_triangle_intersection(&origin, &dir, &tri, 1e-7), line_triangle_intersection(&moved, &dir, &tri, 1e-7)) {
            (Incidence::Point(p), Incidence::Point(q)) => {
                prop_assert!((p - target).norm() < 1e-12);
                prop_assert!((p - q).norm() < 1e-8);
            }
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn segment_clipping_ignores_orientation(a in point(), b in point()) {
        let t = Tetra::new([
            Vec3::new(0.1, 0.1, 0.1),
            Vec3::new(0.9, 0.2, 0.1),
            Vec3::new(0.3, 0.8, 0.2),
            Vec3::new(0.4, 0.3, 0.9),
        ]).unwrap();
        let a3 = a * 1.4 - Vec3::new(0.2, 0.2, 0.2);
        let b3 = b * 1.4 - Vec3::new(0.2, 0.2, 0.2);
        let len = (b3 - a3).norm();
        let fwd = t.clip_segment(&a3, &b3).map_or(0.0, |(s, e)| (e - s) * len);
        let back = t.clip_segment(&b3, &a3).map_or(0.0, |(s, e)| (e - s) * len);
        prop_assert!((fwd - back).abs() < 1e-12);
    }

    #[test]
    fn mesh_clipping_sums_over_tets(a in point(), b in point()) {
        let mesh = Triangulation::kuhn_subdivision(2).unwrap();
        let a3 = a * 1.6 - Vec3::new(0.3, 0.3, 0.3);
        let b3 = b * 1.6 - Vec3::new(0.3, 0.3, 0.3);
        let len = (b3 - a3).norm();
        let per_tet: f64 = mesh.tetra().iter().filter_map(|t| t.clip_segment(&a3, &b3)).map(|(s, e)| (e - s) * len).sum();
        prop_assert!((Region::clipped_length(&mesh, &a3, &b3) - per_tet).abs() < 1e-10);
    }
}
