use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Tetra, Triangle, Vec3};

/// Axis-aligned box; the domain `Ω` is its open interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = pts.into_iter();
        let first = it.next()?;
        let mut b = Aabb::new([first.x, first.y, first.z], [first.x, first.y, first.z]);
        for p in it {
            for a in 0..3 {
                b.min[a] = b.min[a].min(p[a]);
                b.max[a] = b.max[a].max(p[a]);
            }
        }
        Some(b)
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }

    pub fn diameter(&self) -> f64 {
        Vec3::from_fn(|a, _| self.max[a] - self.min[a]).norm()
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from_fn(|a, _| 0.5 * (self.min[a] + self.max[a]))
    }

    /// Radius of the circumscribed ball about the center.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.diameter()
    }

    /// Point strictly inside, at distance greater than `tol` from the boundary.
    pub fn contains_open(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|a| p[a] > self.min[a] + tol && p[a] < self.max[a] - tol)
    }

    pub fn contains_closed(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    /// Parameter interval `[s0, s1] ⊂ [0, 1]` of `a + s (b - a)` inside the box.
    pub fn clip_segment(&self, a: &Vec3, b: &Vec3) -> Option<(f64, f64)> {
        let d = b - a;
        let mut s0: f64 = 0.0;
        let mut s1: f64 = 1.0;
        for ax in 0..3 {
            if d[ax] == 0.0 {
                if a[ax] < self.min[ax] || a[ax] > self.max[ax] {
                    return None;
                }
                continue;
            }
            let t0 = (self.min[ax] - a[ax]) / d[ax];
            let t1 = (self.max[ax] - a[ax]) / d[ax];
            let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            s0 = s0.max(lo);
            s1 = s1.min(hi);
            if s0 >= s1 {
                return None;
            }
        }
        Some((s0, s1))
    }

    /// Length of the part of segment `[a, b]` inside the box.
    pub fn clipped_length(&self, a: &Vec3, b: &Vec3) -> f64 {
        match self.clip_segment(a, b) {
            Some((s0, s1)) => (s1 - s0) * (b - a).norm(),
            None => 0.0,
        }
    }
}

/// Plane `{x : n·x = offset}` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn through(point: &Vec3, normal: &Vec3) -> Self {
        let n = normal.normalize();
        Self {
            normal: n,
            offset: n.dot(point),
        }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Interior faces of a triangulation, keyed by sorted vertex indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaceAdjacency {
    /// `(sorted vertex triple, [(tet, local face)])`, one or two entries.
    pub faces: BTreeMap<[usize; 3], Vec<(usize, usize)>>,
}

impl FaceAdjacency {
    pub fn interior(&self) -> impl Iterator<Item = (&[usize; 3], (usize, usize), (usize, usize))> {
        self.faces
            .iter()
            .filter(|(_, v)| v.len() == 2)
            .map(|(key, v)| (key, v[0], v[1]))
    }

    pub fn boundary(&self) -> impl Iterator<Item = (&[usize; 3], (usize, usize))> {
        self.faces
            .iter()
            .filter(|(_, v)| v.len() == 1)
            .map(|(key, v)| (key, v[0]))
    }
}

/// Built-in meshes and file input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeshSpec {
    UnitCube6tet,
    SingleTet,
    KuhnSubdivision { n: usize },
    File { path: String },
}

impl MeshSpec {
    pub fn parse_name(name: &str) -> Result<Self, GeometryError> {
        let name = name.trim();
        match name {
            "unit-cube-6tet" => return Ok(MeshSpec::UnitCube6tet),
            "single-tet" => return Ok(MeshSpec::SingleTet),
            _ => {}
        }
        if let Some(rest) = name.strip_prefix("kuhn-subdivision(") {
            if let Some(num) = rest.strip_suffix(')') {
                if let Ok(n) = num.trim().parse::<usize>() {
                    if n > 0 {
                        return Ok(MeshSpec::KuhnSubdivision { n });
                    }
                }
            }
        }
        Err(GeometryError::UnknownGenerator(name.to_string()))
    }

    pub fn build(&self) -> Result<Triangulation, GeometryError> {
        match self {
            MeshSpec::UnitCube6tet => Triangulation::kuhn_subdivision(1),
            MeshSpec::SingleTet => Triangulation::single_tet(),
            MeshSpec::KuhnSubdivision { n } => Triangulation::kuhn_subdivision(*n),
            MeshSpec::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Parse {
                    line: 0,
                    message: format!("{path}: {e}"),
                })?;
                parse_tet_list(&text)
            }
        }
    }
}

/// Conforming tetrahedral mesh with shared vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    vertices: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    tetra: Vec<Tetra>,
    adjacency: FaceAdjacency,
    domain: Aabb,
}

impl Triangulation {
    /// Validates orientation, face-to-face conformity and interior
    /// disjointness.
    pub fn new(vertices: Vec<Vec3>, mut tets: Vec<[usize; 4]>) -> Result<Self, GeometryError> {
        if tets.is_empty() {
            return Err(GeometryError::Empty);
        }
        let mut tetra = Vec::with_capacity(tets.len());
        for idx in &mut tets {
            for &i in idx.iter() {
                if i >= vertices.len() {
                    return Err(GeometryError::BadIndex {
                        index: i,
                        count: vertices.len(),
                    });
                }
            }
            let raw = idx.map(|i| vertices[i]);
            let t = Tetra::new(raw)?;
            if t.vertices()[2] != raw[2] {
                idx.swap(2, 3);
            }
            tetra.push(t);
        }
        let mut adjacency = FaceAdjacency::default();
        for (ti, idx) in tets.iter().enumerate() {
            for f in 0..4 {
                let mut key: Vec<usize> = (0..4).filter(|&j| j != f).map(|j| idx[j]).collect();
                key.sort_unstable();
                let key = [key[0], key[1], key[2]];
                let entry = adjacency.faces.entry(key).or_default();
                entry.push((ti, f));
                if entry.len() > 2 {
                    return Err(GeometryError::NonConforming(format!(
                        "face {key:?} shared by more than two tetrahedra"
                    )));
                }
            }
        }
        let domain = Aabb::from_points(&vertices).ok_or(GeometryError::Empty)?;
        let mesh = Self {
            vertices,
            tets,
            tetra,
            adjacency,
            domain,
        };
        mesh.check_disjoint_and_conforming()?;
        Ok(mesh)
    }

    fn check_disjoint_and_conforming(&self) -> Result<(), GeometryError> {
        let scale = self.size();
        for (i, t) in self.tetra.iter().enumerate() {
            let c = t.barycenter();
            for (j, s) in self.tetra.iter().enumerate() {
                if i != j && s.depth(&c) > 1e-12 * scale {
                    return Err(GeometryError::NonConforming(format!(
                        "tetrahedra {i} and {j} overlap"
                    )));
                }
            }
        }
        // A boundary face with another tetrahedron right behind it is a
        // hanging (non face-to-face) contact.
        for (_, (ti, f)) in self.adjacency.boundary() {
            let (tri, n) = self.tetra[ti].face(f);
            for probe in [tri.centroid(), (tri.a * 4.0 + tri.b + tri.c) / 6.0] {
                let x = probe + n * (1e-7 * scale);
                for (j, s) in self.tetra.iter().enumerate() {
                    if j != ti && s.depth(&x) > 0.0 {
                        return Err(GeometryError::NonConforming(format!(
                            "face {f} of tetrahedron {ti} meets tetrahedron {j} without sharing vertices"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_tetra_list(list: &[[Vec3; 4]]) -> Result<Self, GeometryError> {
        let mut index: BTreeMap<[u64; 3], usize> = BTreeMap::new();
        let mut vertices = Vec::new();
        let mut tets = Vec::with_capacity(list.len());
        for t in list {
            let mut idx = [0usize; 4];
            for (k, p) in t.iter().enumerate() {
                let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
                let id = *index.entry(key).or_insert_with(|| {
                    vertices.push(*p);
                    vertices.len() - 1
                });
                idx[k] = id;
            }
            tets.push(idx);
        }
        Self::new(vertices, tets)
    }

    pub fn single_tet() -> Result<Self, GeometryError> {
        Self::new(
            vec![
                Vec3::zeros(),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2, 3]],
        )
    }

    /// `[0,1]³` split into `n³` cubes, each cut into the six Kuhn simplices
    /// around its main diagonal.
    pub fn kuhn_subdivision(n: usize) -> Result<Self, GeometryError> {
        if n == 0 {
            return Err(GeometryError::Empty);
        }
        let nf = n as f64;
        let id = |i: usize, j: usize, k: usize| (i * (n + 1) + j) * (n + 1) + k;
        let mut vertices = Vec::with_capacity((n + 1).pow(3));
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    vertices.push(Vec3::new(i as f64 / nf, j as f64 / nf, k as f64 / nf));
                }
            }
        }
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut tets = Vec::with_capacity(6 * n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for p in perms {
                        let mut c = [i, j, k];
                        let mut idx = [id(c[0], c[1], c[2]); 4];
                        for (step, &axis) in p.iter().enumerate() {
                            c[axis] += 1;
                            idx[step + 1] = id(c[0], c[1], c[2]);
                        }
                        tets.push(idx);
                    }
                }
            }
        }
        Self::new(vertices, tets)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn tet_indices(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn tetra(&self) -> &[Tetra] {
        &self.tetra
    }

    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    pub fn adjacency(&self) -> &FaceAdjacency {
        &self.adjacency
    }

    pub fn domain(&self) -> &Aabb {
        &self.domain
    }

    /// `r = max diam(T)`.
    pub fn size(&self) -> f64 {
        self.tetra.iter().map(|t| t.diam()).fold(0.0, f64::max)
    }

    /// Aspect ratio `C₀ = min inradius / r`.
    pub fn aspect_ratio(&self) -> f64 {
        let r = self.size();
        self.tetra.iter().map(|t| t.inradius()).fold(f64::INFINITY, f64::min) / r
    }

    pub fn total_volume(&self) -> f64 {
        self.tetra.iter().map(|t| t.volume()).sum()
    }

    /// Whether the tetrahedra tile the bounding box exactly.
    pub fn covers_domain(&self) -> bool {
        (self.total_volume() - self.domain.volume()).abs() <= 1e-9 * self.domain.volume()
    }

    /// Distinct planes carrying mesh faces.
    pub fn face_planes(&self) -> Vec<Plane> {
        let mut out: Vec<Plane> = Vec::new();
        for t in &self.tetra {
            for (tri, n) in t.faces() {
                let p = Plane::through(&tri.a, &n);
                let dup = out.iter().any(|q| {
                    let s = q.normal.dot(&p.normal);
                    (s.abs() - 1.0).abs() < 1e-12 && (q.offset - s.signum() * p.offset).abs() < 1e-12
                });
                if !dup {
                    out.push(p);
                }
            }
        }
        out
    }
}

/// An open set on which lengths are measured and divergence is tested.
pub trait Region: Sync {
    /// Disjoint parameter intervals of `a + s (b - a)`, `s ∈ [0, 1]`, inside
    /// the region.
    fn clip_intervals(&self, a: &Vec3, b: &Vec3) -> Vec<(f64, f64)>;
    /// Whether `p` lies in the region farther than `tol` from its boundary.
    fn contains_open(&self, p: &Vec3, tol: f64) -> bool;

    /// `H¹([a, b] ∩ region)`.
    fn clipped_length(&self, a: &Vec3, b: &Vec3) -> f64 {
        let len = (b - a).norm();
        self.clip_intervals(a, b).iter().map(|(s0, s1)| (s1 - s0) * len).sum()
    }
}

impl Region for Aabb {
    fn clip_intervals(&self, a: &Vec3, b: &Vec3) -> Vec<(f64, f64)> {
        self.clip_segment(a, b).into_iter().collect()
    }

    fn contains_open(&self, p: &Vec3, tol: f64) -> bool {
        Aabb::contains_open(self, p, tol)
    }

    fn clipped_length(&self, a: &Vec3, b: &Vec3) -> f64 {
        Aabb::clipped_length(self, a, b)
    }
}

/// The interior of the union of the tetrahedra. A mesh tiling its bounding
/// box defers to the box.
impl Region for Triangulation {
    fn clip_intervals(&self, a: &Vec3, b: &Vec3) -> Vec<(f64, f64)> {
        if self.covers_domain() {
            return self.domain.clip_intervals(a, b);
        }
        if self.domain.clip_segment(a, b).is_none() {
            return Vec::new();
        }
        let mut pieces: Vec<(f64, f64)> = self.tetra.iter().filter_map(|t| t.clip_segment(a, b)).collect();
        pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pieces.len());
        for (s0, s1) in pieces {
            match merged.last_mut() {
                Some(last) if s0 <= last.1 => last.1 = last.1.max(s1),
                _ => merged.push((s0, s1)),
            }
        }
        merged
    }

    fn contains_open(&self, p: &Vec3, tol: f64) -> bool {
        if self.covers_domain() {
            return self.domain.contains_open(p, tol);
        }
        if !self.tetra.iter().any(|t| t.contains(p, tol)) {
            return false;
        }
        !self.boundary_faces().any(|(tri, _)| tri.distance(p) <= tol)
    }
}

impl Triangulation {
    /// Faces on `∂Ω` with their outward normals.
    pub fn boundary_faces(&self) -> impl Iterator<Item = (Triangle, Vec3)> + '_ {
        self.adjacency.boundary().map(|(_, (t, f))| self.tetra[t].face(f))
    }
}

/// Plain-text tetrahedron list: one tetrahedron per line as 12 floats
/// (comma or whitespace separated). Blank lines and `#` comments are skipped.
pub fn parse_tet_list(text: &str) -> Result<Triangulation, GeometryError> {
    let mut list = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse::<f64>)
            .collect();
        let nums = nums.map_err(|e| GeometryError::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if nums.len() != 12 {
            return Err(GeometryError::Parse {
                line: lineno + 1,
                message: format!("expected 12 coordinates, found {}", nums.len()),
            });
        }
        let p = |i: usize| Vec3::new(nums[3 * i], nums[3 * i + 1], nums[3 * i + 2]);
        list.push([p(0), p(1), p(2), p(3)]);
    }
    Triangulation::from_tetra_list(&list)
}
