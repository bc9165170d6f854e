use super::{Triangle, Vec3};

/// Classification of a line against a closed triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Incidence {
    /// Unique transversal hit in the open triangle, farther than `ε` from
    /// the contour.
    Point(Vec3),
    Empty,
    /// Within `ε` of the plane (for near-parallel lines), the contour or a
    /// vertex.
    Degenerate,
}

/// Intersects the line `origin + s·direction` (`|direction| = 1`) with `tri`.
pub fn line_triangle_intersection(
    origin: &Vec3,
    direction: &Vec3,
    tri: &Triangle,
    eps: f64,
) -> Incidence {
    let n = tri.normal();
    let denom = direction.dot(&n);
    let offset = n.dot(&(tri.a - origin));
    let extent = tri.diam();
    if denom.abs() * extent <= eps {
        // The line stays within ε of the plane over the triangle's extent
        // only if it is already close to it.
        if offset.abs() <= eps + denom.abs() * extent {
            let foot = origin + n * offset;
            let in_plane = planar_distance(tri, &n, &foot);
            if in_plane <= extent + eps {
                return Incidence::Degenerate;
            }
        }
        if denom == 0.0 {
            return Incidence::Empty;
        }
    }
    let s = offset / denom;
    let x = origin + direction * s;
    let signed = planar_distance(tri, &n, &x);
    if signed.abs() <= eps {
        Incidence::Degenerate
    } else if signed < 0.0 {
        Incidence::Point(x)
    } else {
        Incidence::Empty
    }
}

/// Signed in-plane distance to the contour: negative inside, positive
/// outside (distance to the nearest edge line, outside measured to the
/// closest violated edge).
fn planar_distance(tri: &Triangle, n: &Vec3, x: &Vec3) -> f64 {
    let verts = [tri.a, tri.b, tri.c];
    let mut inside_min = f64::INFINITY;
    let mut outside_max = f64::NEG_INFINITY;
    let mut outside_dist = f64::INFINITY;
    for e in 0..3 {
        let p = verts[e];
        let q = verts[(e + 1) % 3];
        let edge = q - p;
        // Outward in-plane normal of this edge (triangle is right-handed about n).
        let out = edge.cross(n).normalize();
        let d = out.dot(&(x - p));
        if d > 0.0 {
            outside_max = outside_max.max(d);
            // distance to the edge segment when outside
            let t = ((x - p).dot(&edge) / edge.norm_squared()).clamp(0.0, 1.0);
            outside_dist = outside_dist.min((x - (p + edge * t)).norm());
        } else {
            inside_min = inside_min.min(-d);
        }
    }
    if outside_max > 0.0 {
        outside_dist.max(outside_max)
    } else {
        -inside_min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> Triangle {
        Triangle::new(
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        )
    }

    #[test]
    fn orthogonal_line_through_centroid() {
        let t = tri();
        let c = t.centroid();
        let o = c + Vec3::new(0.0, 0.0, 2.0);
        match line_triangle_intersection(&o, &Vec3::new(0.0, 0.0, -1.0), &t, 1e-9) {
            Incidence::Point(p) => assert!((p - c).norm() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parallel_line_at_distance_one_is_empty() {
        let t = tri();
        let o = Vec3::new(0.2, 0.2, 1.0);
        let r = line_triangle_intersection(&o, &Vec3::new(1.0, 0.0, 0.0), &t, 1e-9);
        assert_eq!(r, Incidence::Empty);
    }

    #[test]
    fn edge_midpoint_is_degenerate() {
        let t = tri();
        let o = Vec3::new(0.5, 0.0, 1.0);
        let r = line_triangle_intersection(&o, &Vec3::new(0.0, 0.0, -1.0), &t, 1e-9);
        assert_eq!(r, Incidence::Degenerate);
        let v = Vec3::new(0.0, 1.0, 1.0);
        let r = line_triangle_intersection(&v, &Vec3::new(0.0, 0.0, 1.0), &t, 1e-9);
        assert_eq!(r, Incidence::Degenerate);
    }

    #[test]
    fn in_plane_line_is_degenerate() {
        let t = tri();
        let o = Vec3::new(-1.0, 0.3, 0.0);
        let r = line_triangle_intersection(&o, &Vec3::new(1.0, 0.0, 0.0), &t, 1e-9);
        assert_eq!(r, Incidence::Degenerate);
    }

    #[test]
    fn oblique_miss() {
        let t = tri();
        let d = Vec3::new(1.0, 1.0, -1.0).normalize();
        let o = Vec3::new(2.0, 2.0, 1.0);
        assert_eq!(line_triangle_intersection(&o, &d, &t, 1e-9), Incidence::Empty);
    }
}
