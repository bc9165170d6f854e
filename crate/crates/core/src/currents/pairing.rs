use super::{BoundaryLedger, PolyhedralCurrent};
use crate::geometry::Vec3;
use crate::numerics::gauss_legendre_unit;

/// `⟨μ, ∇φ⟩ = Σ b · (φ(end) − φ(start))`, exact along each straight segment.
///
/// `phi` writes the `N` components of the test function at a point.
pub fn pair_with_gradient<F>(mu: &PolyhedralCurrent, phi: F) -> f64
where
    F: Fn(&Vec3, &mut [f64]),
{
    let n = mu.dim();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut acc = 0.0;
    for s in mu.iter() {
        phi(&s.start, &mut a);
        phi(&s.end, &mut b);
        acc += s
            .burgers
            .iter()
            .zip(a.iter().zip(&b))
            .map(|(w, (x, y))| w * (y - x))
            .sum::<f64>();
    }
    acc
}

/// The same pairing computed from the ledger. With `+b` booked at segment
/// starts, `⟨μ, ∇φ⟩ = −Σ mass · φ(node)`.
pub fn pair_with_ledger<F>(ledger: &BoundaryLedger, phi: F) -> f64
where
    F: Fn(&Vec3, &mut [f64]),
{
    let mut v = vec![0.0; ledger.dim];
    let mut acc = 0.0;
    for e in ledger.iter() {
        phi(&e.point, &mut v);
        acc -= e.mass.iter().zip(&v).map(|(m, x)| m * x).sum::<f64>();
    }
    acc
}

/// `Σ ∫_segment ⟨φ(x), b ⊗ τ⟩ dH¹` with a Gauss–Legendre rule of `order`
/// points per segment. `phi` writes the `N × 3` matrix row-major.
pub fn pair_with_matrix_field<F>(mu: &PolyhedralCurrent, phi: F, order: usize) -> f64
where
    F: Fn(&Vec3, &mut [f64]),
{
    let n = mu.dim();
    let rule = gauss_legendre_unit(order.max(1));
    let mut m = vec![0.0; 3 * n];
    let mut acc = 0.0;
    for s in mu.iter() {
        let d = s.end - s.start;
        // b ⊗ τ · length = b ⊗ d.
        let mut seg = 0.0;
        for &(x, w) in &rule {
            let p = s.start + d * x;
            phi(&p, &mut m);
            let mut v = 0.0;
            for (i, bi) in s.burgers.iter().enumerate() {
                v += bi * (m[3 * i] * d.x + m[3 * i + 1] * d.y + m[3 * i + 2] * d.z);
            }
            seg += w * v;
        }
        acc += seg;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::super::boundary_ledger;
    use super::*;

    #[test]
    fn closed_loop_pairs_to_zero() {
        let mut c = PolyhedralCurrent::new(1);
        let pts = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.2, 0.0),
            Vec3::new(0.3, 1.0, 0.5),
        ];
        for i in 0..3 {
            c.push(pts[i], pts[(i + 1) % 3], &[1.3]).unwrap();
        }
        let phi = |x: &Vec3, out: &mut [f64]| out[0] = (x.x * 3.0).sin() * x.y.exp() + x.z;
        assert!(pair_with_gradient(&c, phi).abs() < 1e-15);
    }

    #[test]
    fn coordinate_test_function_gives_displacement() {
        let mut c = PolyhedralCurrent::new(2);
        let (p, q) = (Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.7, 0.1, 0.9));
        c.push(p, q, &[1.0, 0.0]).unwrap();
        let phi = |x: &Vec3, out: &mut [f64]| {
            out[0] = x.x;
            out[1] = 0.0;
        };
        assert!((pair_with_gradient(&c, phi) - (q.x - p.x)).abs() < 1e-15);
    }

    #[test]
    fn ledger_pairing_agrees() {
        let mut c = PolyhedralCurrent::new(2);
        c.push(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), &[1.0, 2.0]).unwrap();
        c.push(Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.5), &[0.5, -1.0]).unwrap();
        let phi = |x: &Vec3, out: &mut [f64]| {
            out[0] = x.x * x.y + x.z;
            out[1] = (x.x - 0.3 * x.z).cos();
        };
        let l = boundary_ledger(&c, 1e-9, 0.0).unwrap();
        let a = pair_with_gradient(&c, phi);
        let b = pair_with_ledger(&l, phi);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn matrix_pairing_oracles() {
        let mut c = PolyhedralCurrent::new(3);
        c.push(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), &[3.0, 4.0, 0.0]).unwrap();
        // φ = b ⊗ τ / |b ⊗ τ|.
        let phi = |_: &Vec3, out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[0] = 0.6;
            out[3] = 0.8;
        };
        assert!((pair_with_matrix_field(&c, phi, 1) - 5.0).abs() < 1e-14);
        // Linear φ is integrated exactly by the midpoint rule.
        let lin = |x: &Vec3, out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[0] = 2.0 * x.x + 1.0;
        };
        assert!((pair_with_matrix_field(&c, lin, 1) - 3.0 * 2.0).abs() < 1e-14);
    }
}
