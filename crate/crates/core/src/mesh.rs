//! Conforming triangulations of polygonal domains and newest-vertex bisection.
//!
//! Triangles are stored with their refinement edge as local edge 2, i.e. the
//! edge between local vertices 0 and 1; local vertex 2 is the newest vertex.
//! Local edge `i` is the edge opposite local vertex `i`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Built-in and file-based initial domains.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// `(-1,1)^2 \ [0,1)^2` split into six 1 x 1/2 rectangles, each cut along
    /// the diagonal that points towards the reentrant corner.
    LShape,
    UnitSquare,
    File(PathBuf),
}

impl Domain {
    pub fn parse_tag(tag: &str) -> Domain {
        match tag {
            "l_shape" | "lshape" | "L" => Domain::LShape,
            "unit_square" | "square" => Domain::UnitSquare,
            other => Domain::File(PathBuf::from(other)),
        }
    }
}

/// Set of marked triangle indices, sorted and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MarkedSet {
    indices: Vec<usize>,
}

impl MarkedSet {
    pub fn new(mut indices: Vec<usize>, n_triangles: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&last) = indices.last() {
            if last >= n_triangles {
                return Err(Error::InvalidMesh(format!(
                    "marked index {last} out of range for {n_triangles} triangles"
                )));
            }
        }
        Ok(MarkedSet { indices })
    }

    pub fn empty() -> Self {
        MarkedSet::default()
    }

    pub fn all(n_triangles: usize) -> Self {
        MarkedSet { indices: (0..n_triangles).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.indices.binary_search(&t).is_ok()
    }
}

/// Per-edge data of one element, local edge `i` opposite local vertex `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeGeometry {
    pub length: f64,
    /// Outward unit normal.
    pub normal: [f64; 2],
    /// Neighbouring triangle across the edge; `None` on the boundary.
    pub neighbor: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    /// Longest edge length.
    pub diameter: f64,
    pub area: f64,
    pub edges: [EdgeGeometry; 3],
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    generation: Vec<u32>,
    parent: Option<Vec<usize>>,
    root: Vec<usize>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    edge_tris: Vec<[Option<usize>; 2]>,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Rotate `tri` so that local vertex `r` becomes local vertex 2.
fn rotate_refinement(tri: [usize; 3], r: usize) -> [usize; 3] {
    match r {
        0 => [tri[1], tri[2], tri[0]],
        1 => [tri[2], tri[0], tri[1]],
        _ => tri,
    }
}

impl Triangulation {
    /// Build a validated mesh from vertex coordinates and triangles with the
    /// local index `r` of the vertex opposite each refinement edge.
    ///
    /// Clockwise triangles are reoriented; the refinement edge is preserved.
    pub fn new(vertices: Vec<Point>, triangles: &[([usize; 3], usize)]) -> Result<Self> {
        let nv = vertices.len();
        let scale = vertices
            .iter()
            .flat_map(|p| p.iter().map(|c| c.abs()))
            .fold(1.0_f64, f64::max);
        let mut tris = Vec::with_capacity(triangles.len());
        for (t, &(tri, r)) in triangles.iter().enumerate() {
            if r > 2 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t}: refinement edge index {r} not in 0..=2"
                )));
            }
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t}: vertex index out of range ({nv} vertices)"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t}: repeated vertex")));
            }
            let mut tri = rotate_refinement(tri, r);
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area.abs() <= 1e-14 * scale * scale {
                return Err(Error::InvalidMesh(format!("triangle {t}: zero area")));
            }
            if area < 0.0 {
                tri.swap(0, 1);
            }
            tris.push(tri);
        }
        let n = tris.len();
        let mesh = Self::assemble(vertices, tris, vec![0; n], None, (0..n).collect())?;
        mesh.check_no_hanging_nodes()?;
        Ok(mesh)
    }

    /// Build a mesh assigning the longest edge of every triangle as its
    /// refinement edge (ties: lowest global index of the opposite vertex).
    pub fn with_longest_edge(vertices: Vec<Point>, triangles: &[[usize; 3]]) -> Result<Self> {
        let mut tagged = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t}: vertex index out of range")));
            }
            let len = |i: usize| dist(vertices[tri[(i + 1) % 3]], vertices[tri[(i + 2) % 3]]);
            let lmax = (0..3).map(len).fold(0.0, f64::max);
            let r = (0..3)
                .filter(|&i| len(i) >= lmax * (1.0 - 1e-12))
                .min_by_key(|&i| tri[i])
                .unwrap_or(2);
            tagged.push((*tri, r));
        }
        Self::new(vertices, &tagged)
    }

    fn assemble(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        generation: Vec<u32>,
        parent: Option<Vec<usize>>,
        root: Vec<usize>,
    ) -> Result<Self> {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges = Vec::with_capacity(triangles.len() * 2);
        let mut edge_tris: Vec<[Option<usize>; 2]> = Vec::with_capacity(triangles.len() * 2);
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for (i, slot) in local.iter_mut().enumerate() {
                let key = edge_key(tri[(i + 1) % 3], tri[(i + 2) % 3]);
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_tris.push([None, None]);
                    edges.len() - 1
                });
                match edge_tris[e] {
                    [None, _] => edge_tris[e][0] = Some(t),
                    [Some(_), None] => edge_tris[e][1] = Some(t),
                    [Some(a), Some(b)] => {
                        return Err(Error::InvalidMesh(format!(
                            "edge ({}, {}) shared by more than two triangles ({a}, {b}, {t})",
                            key.0, key.1
                        )))
                    }
                }
                *slot = e;
            }
            tri_edges.push(local);
        }
        Ok(Triangulation { vertices, triangles, generation, parent, root, edges, tri_edges, edge_tris })
    }

    fn check_no_hanging_nodes(&self) -> Result<()> {
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if !self.is_boundary_edge(e) {
                continue;
            }
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let len = dist(pa, pb);
            for (v, &pv) in self.vertices.iter().enumerate() {
                if v == a || v == b {
                    continue;
                }
                let cross = (pb[0] - pa[0]) * (pv[1] - pa[1]) - (pb[1] - pa[1]) * (pv[0] - pa[0]);
                let along = ((pv[0] - pa[0]) * (pb[0] - pa[0]) + (pv[1] - pa[1]) * (pb[1] - pa[1])) / len;
                if cross.abs() <= 1e-12 * len * len && along > 1e-12 * len && along < len * (1.0 - 1e-12) {
                    return Err(Error::InvalidMesh(format!(
                        "hanging vertex {v} on edge ({a}, {b})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn initial(domain: &Domain) -> Result<Self> {
        match domain {
            Domain::LShape => {
                let vertices = vec![
                    [-1.0, -1.0], [0.0, -1.0], [1.0, -1.0],
                    [-1.0, -0.5], [0.0, -0.5], [1.0, -0.5],
                    [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0],
                    [-1.0, 0.5], [0.0, 0.5],
                    [-1.0, 1.0], [0.0, 1.0],
                ];
                let triangles = [
                    [0, 1, 4], [0, 4, 3],
                    [3, 4, 7], [3, 7, 6],
                    [1, 2, 4], [2, 5, 4],
                    [4, 5, 7], [5, 8, 7],
                    [6, 7, 9], [7, 10, 9],
                    [9, 10, 11], [10, 12, 11],
                ];
                Self::with_longest_edge(vertices, &triangles)
            }
            Domain::UnitSquare => Self::with_longest_edge(
                vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                &[[0, 1, 2], [0, 2, 3]],
            ),
            Domain::File(path) => Self::read(path),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Serialize to the plain-text mesh format (refinement edge written as `2`).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(out, "{} {}", p[0], p[1]);
        }
        let _ = writeln!(out, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {} 2", t[0], t[1], t[2]);
        }
        let boundary: Vec<_> = (0..self.edges.len()).filter(|&e| self.is_boundary_edge(e)).collect();
        let _ = writeln!(out, "boundary {}", boundary.len());
        for e in boundary {
            let _ = writeln!(out, "{} {}", self.edges[e][0], self.edges[e][1]);
        }
        out
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Global vertex pair of the refinement edge of `t`.
    pub fn refinement_edge(&self, t: usize) -> [usize; 2] {
        [self.triangles[t][0], self.triangles[t][1]]
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    /// Index of the element of the previous mesh that `t` was created from.
    pub fn parent(&self, t: usize) -> Option<usize> {
        self.parent.as_ref().map(|p| p[t])
    }

    pub fn has_parents(&self) -> bool {
        self.parent.is_some()
    }

    /// Index of the initial-mesh ancestor of `t`.
    pub fn root(&self, t: usize) -> usize {
        self.root[t]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global edge ids of `t`, local edge `i` opposite local vertex `i`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn edge_triangles(&self, e: usize) -> [Option<usize>; 2] {
        self.edge_tris[e]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_tris[e][1].is_none()
    }

    /// Boundary edges as sorted vertex pairs.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        (0..self.edges.len())
            .filter(|&e| self.is_boundary_edge(e))
            .map(|e| self.edges[e])
            .collect()
    }

    pub fn neighbor(&self, t: usize, local_edge: usize) -> Option<usize> {
        let e = self.tri_edges[t][local_edge];
        match self.edge_tris[e] {
            [Some(a), Some(b)] => Some(if a == t { b } else { a }),
            _ => None,
        }
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn element_geometry(&self, t: usize) -> ElementGeometry {
        let p = self.corners(t);
        let edges = std::array::from_fn(|i| {
            let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            let length = dist(a, b);
            EdgeGeometry {
                length,
                normal: [(b[1] - a[1]) / length, -(b[0] - a[0]) / length],
                neighbor: self.neighbor(t, i),
            }
        });
        ElementGeometry { diameter: self.diameter(t), area: self.area(t), edges }
    }

    /// Smallest interior angle (radians) of triangle `t`.
    pub fn min_angle(&self, t: usize) -> f64 {
        let p = self.corners(t);
        (0..3)
            .map(|i| {
                let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                cos.clamp(-1.0, 1.0).acos()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Check edge multiplicities, orientation and positive areas.
    pub fn check_conforming(&self) -> Result<()> {
        for t in 0..self.n_triangles() {
            if self.area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} not positively oriented")));
            }
        }
        // A hanging node shows up as a vertex in the interior of an edge.
        let mut mids: HashMap<(u64, u64), usize> = HashMap::new();
        for &[a, b] in &self.edges {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            mids.insert((m[0].to_bits(), m[1].to_bits()), a);
        }
        for (v, p) in self.vertices.iter().enumerate() {
            if let Some(&a) = mids.get(&(p[0].to_bits(), p[1].to_bits())) {
                return Err(Error::InvalidMesh(format!(
                    "vertex {v} is a hanging node on an edge starting at vertex {a}"
                )));
            }
        }
        let total: f64 = (0..self.n_triangles()).map(|t| self.area(t)).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMesh("empty mesh".into()));
        }
        Ok(())
    }

    /// Newest-vertex bisection of all marked elements plus conforming closure.
    pub fn refine(&self, marked: &MarkedSet) -> Result<Triangulation> {
        if let Some(&last) = marked.indices().last() {
            if last >= self.n_triangles() {
                return Err(Error::InvalidMesh(format!("marked index {last} out of range")));
            }
        }
        let ne = self.edges.len();
        let mut edge_marked = vec![false; ne];
        let mut stack = Vec::new();
        for &t in marked.indices() {
            let e = self.tri_edges[t][2];
            if !edge_marked[e] {
                edge_marked[e] = true;
                stack.push(e);
            }
        }
        // Closure: a triangle with any bisected edge must bisect its refinement edge.
        while let Some(e) = stack.pop() {
            for t in self.edge_tris[e].iter().flatten() {
                let re = self.tri_edges[*t][2];
                if !edge_marked[re] {
                    edge_marked[re] = true;
                    stack.push(re);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint = vec![None; ne];
        for e in 0..ne {
            if edge_marked[e] {
                let [a, b] = self.edges[e];
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                midpoint[e] = Some(vertices.len());
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }

        let n = self.n_triangles();
        let mut triangles = Vec::with_capacity(n + 2 * stack.capacity().max(n / 2));
        let mut generation = Vec::with_capacity(triangles.capacity());
        let mut parent = Vec::with_capacity(triangles.capacity());
        let mut root = Vec::with_capacity(triangles.capacity());
        let mut push = |tri: [usize; 3], gen: u32, t: usize| {
            triangles.push(tri);
            generation.push(gen);
            parent.push(t);
            root.push(self.root[t]);
        };
        for t in 0..n {
            let [v0, v1, v2] = self.triangles[t];
            let [e0, e1, e2] = self.tri_edges[t];
            let gen = self.generation[t];
            let Some(m) = midpoint[e2] else {
                push([v0, v1, v2], gen, t);
                continue;
            };
            match midpoint[e1] {
                Some(m1) => {
                    push([m, v2, m1], gen + 2, t);
                    push([v0, m, m1], gen + 2, t);
                }
                None => push([v2, v0, m], gen + 1, t),
            }
            match midpoint[e0] {
                Some(m0) => {
                    push([m, v1, m0], gen + 2, t);
                    push([v2, m, m0], gen + 2, t);
                }
                None => push([v1, v2, m], gen + 1, t),
            }
        }
        Self::assemble(vertices, triangles, generation, Some(parent), root)
    }

    /// One bisection of every element.
    pub fn uniform_refine(&self) -> Result<Triangulation> {
        self.refine(&MarkedSet::all(self.n_triangles()))
    }

    /// Barycentric coordinates of `x` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        let area = signed_area(a, b, c);
        let l1 = signed_area(a, x, c) / area;
        let l2 = signed_area(a, b, x) / area;
        [1.0 - l1 - l2, l1, l2]
    }
}

impl std::str::FromStr for Triangulation {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        fn header<'a>(
            lines: &mut impl Iterator<Item = (usize, &'a str)>,
            key: &str,
        ) -> Result<Option<usize>> {
            let Some((line, l)) = lines.next() else {
                return Ok(None);
            };
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::MeshParse { line, msg: format!("expected `{key} <count>`") });
            }
            let count = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::MeshParse { line, msg: format!("bad {key} count") })?;
            Ok(Some(count))
        }

        fn numbers<'a, T: std::str::FromStr>(
            lines: &mut impl Iterator<Item = (usize, &'a str)>,
            n: usize,
            what: &str,
        ) -> Result<Vec<T>> {
            let Some((line, l)) = lines.next() else {
                return Err(Error::MeshParse { line: 0, msg: format!("unexpected end of input in {what}") });
            };
            let vals: Vec<T> = l
                .split_whitespace()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::MeshParse { line, msg: format!("malformed {what} entry") })?;
            if vals.len() != n {
                return Err(Error::MeshParse { line, msg: format!("{what} entry needs {n} values") });
            }
            Ok(vals)
        }

        let nv = header(&mut lines, "vertices")?
            .ok_or(Error::MeshParse { line: 0, msg: "empty mesh file".into() })?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let v: Vec<f64> = numbers(&mut lines, 2, "vertex")?;
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::MeshParse { line: 0, msg: "non-finite coordinate".into() });
            }
            vertices.push([v[0], v[1]]);
        }
        let nt = header(&mut lines, "triangles")?
            .ok_or(Error::MeshParse { line: 0, msg: "missing triangles section".into() })?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let t: Vec<usize> = numbers(&mut lines, 4, "triangle")?;
            triangles.push(([t[0], t[1], t[2]], t[3]));
        }
        let boundary = match header(&mut lines, "boundary")? {
            Some(nb) => {
                let mut b = Vec::with_capacity(nb);
                for _ in 0..nb {
                    let e: Vec<usize> = numbers(&mut lines, 2, "boundary")?;
                    b.push(edge_key(e[0], e[1]));
                }
                Some(b)
            }
            None => None,
        };
        if let Some((line, _)) = lines.next() {
            return Err(Error::MeshParse { line, msg: "trailing content".into() });
        }
        let mesh = Triangulation::new(vertices, &triangles)?;
        if let Some(mut given) = boundary {
            given.sort_unstable();
            given.dedup();
            let mut inferred: Vec<_> = mesh.boundary_edges().iter().map(|e| (e[0], e[1])).collect();
            inferred.sort_unstable();
            if given != inferred {
                return Err(Error::InvalidMesh(
                    "boundary section does not match the edges with a single adjacent triangle".into(),
                ));
            }
        }
        Ok(mesh)
    }
}
