//! Closed triangulated surfaces: loading, generation, validation and area measures.
//!
//! A [`Mesh`] is immutable once built. Construction derives the edge list from the
//! triangles, checks that the surface is a closed, consistently oriented 2-manifold
//! without degenerate faces, and lumps triangle areas onto vertices (one third of
//! every incident face).

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::Vec3;

/// Reference triangles with area below this are rejected.
pub const MIN_TRIANGLE_AREA: f64 = 1e-14;

/// Largest icosphere subdivision level accepted by [`generate_icosphere`].
pub const MAX_SUBDIVISIONS: u32 = 7;

#[derive(Debug, Clone)]
pub struct Mesh {
    positions: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    vertex_areas: Vec<f64>,
    total_area: f64,
}

impl Mesh {
    /// Builds a mesh from vertex positions and triangles, validating the topology.
    pub fn new(positions: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = positions.len();
        if nv == 0 || triangles.is_empty() {
            return Err(Error::Topology("mesh has no vertices or no triangles".into()));
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::Topology(format!("vertex {i} has a non-finite coordinate")));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::Topology(format!(
                    "triangle {t} references vertex {bad} but the mesh has {nv} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::DegenerateTriangle { index: t, area: 0.0 });
            }
            let area = triangle_area(&positions[tri[0]], &positions[tri[1]], &positions[tri[2]]);
            if !(area >= MIN_TRIANGLE_AREA) {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
        }

        let edges = extract_edges(&triangles)?;

        let mut used = vec![false; nv];
        for tri in &triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        if let Some(isolated) = used.iter().position(|&u| !u) {
            return Err(Error::Topology(format!(
                "vertex {isolated} belongs to no triangle"
            )));
        }

        let vertex_areas = area_weights(&positions, &triangles);
        let total_area = triangles
            .iter()
            .map(|t| triangle_area(&positions[t[0]], &positions[t[1]], &positions[t[2]]))
            .sum();

        Ok(Mesh {
            positions,
            triangles,
            edges,
            vertex_areas,
            total_area,
        })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Unordered edges, each stored once as `[lo, hi]`, sorted lexicographically.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Lumped per-vertex areas ΔA_i.
    pub fn vertex_areas(&self) -> &[f64] {
        &self.vertex_areas
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// nv − ne + nt; equals 2 for a genus-0 surface.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    /// Sum of reference triangle areas.
    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn edge_length_range(&self) -> (f64, f64) {
        self.edges.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), e| {
            let l = (self.positions[e[1]] - self.positions[e[0]]).norm();
            (lo.min(l), hi.max(l))
        })
    }

    /// Returns a copy with every position multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Mesh> {
        Mesh::new(
            self.positions.iter().map(|p| p * factor).collect(),
            self.triangles.clone(),
        )
    }

    /// Returns a copy with `offset` added to every position.
    pub fn translated(&self, offset: Vec3) -> Result<Mesh> {
        Mesh::new(
            self.positions.iter().map(|p| p + offset).collect(),
            self.triangles.clone(),
        )
    }

    /// SHA-256 over the exact bit patterns of positions and triangle indices.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.positions.len() as u64).to_le_bytes());
        for p in &self.positions {
            for c in p.iter() {
                hasher.update(c.to_bits().to_le_bytes());
            }
        }
        hasher.update((self.triangles.len() as u64).to_le_bytes());
        for t in &self.triangles {
            for &v in t {
                hasher.update((v as u64).to_le_bytes());
            }
        }
        hasher.finalize().into()
    }
}

/// Area of the triangle (a, b, c).
pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Derives unique unordered edges and checks that every edge has exactly two incident
/// faces that traverse it in opposite directions.
fn extract_edges(triangles: &[[usize; 3]]) -> Result<Vec<[usize; 2]>> {
    // (lo, hi) -> (uses as lo->hi, uses as hi->lo)
    let mut uses: HashMap<(usize, usize), (u32, u32)> = HashMap::with_capacity(triangles.len() * 3 / 2);
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let entry = uses.entry((a.min(b), a.max(b))).or_insert((0, 0));
            if a < b {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
    }
    let mut edges: Vec<[usize; 2]> = Vec::with_capacity(uses.len());
    for (&(lo, hi), &(fwd, bwd)) in &uses {
        if fwd + bwd != 2 {
            return Err(Error::Topology(format!(
                "edge ({lo}, {hi}) has {} incident faces, expected 2",
                fwd + bwd
            )));
        }
        if fwd != 1 {
            return Err(Error::Topology(format!(
                "faces sharing edge ({lo}, {hi}) are not consistently oriented"
            )));
        }
        edges.push([lo, hi]);
    }
    edges.sort_unstable();
    Ok(edges)
}

/// Barycentric lumping: ΔA_i is one third of the area of every triangle incident to i.
pub fn area_weights(positions: &[Vec3], triangles: &[[usize; 3]]) -> Vec<f64> {
    let mut areas = vec![0.0; positions.len()];
    for tri in triangles {
        let third = triangle_area(&positions[tri[0]], &positions[tri[1]], &positions[tri[2]]) / 3.0;
        for &v in tri {
            areas[v] += third;
        }
    }
    areas
}

/// Total area of the surface after displacing every vertex by `displacement`.
///
/// Collapsed triangles simply contribute zero.
pub fn deformed_area(mesh: &Mesh, displacement: &[Vec3]) -> f64 {
    assert_eq!(
        displacement.len(),
        mesh.num_vertices(),
        "displacement length must match vertex count"
    );
    let x = mesh.positions();
    mesh.triangles
        .iter()
        .map(|t| {
            triangle_area(
                &(x[t[0]] + displacement[t[0]]),
                &(x[t[1]] + displacement[t[1]]),
                &(x[t[2]] + displacement[t[2]]),
            )
        })
        .sum()
}

/// Regular icosahedron with two vertices on the ±z axis, outward-oriented faces.
fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let h = 1.0 / 5.0_f64.sqrt();
    let r = 2.0 * h;
    let mut positions = Vec::with_capacity(12);
    positions.push(Vec3::new(0.0, 0.0, 1.0));
    for k in 0..5 {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
        positions.push(Vec3::new(r * phi.cos(), r * phi.sin(), h));
    }
    for k in 0..5 {
        let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 5.0;
        positions.push(Vec3::new(r * phi.cos(), r * phi.sin(), -h));
    }
    positions.push(Vec3::new(0.0, 0.0, -1.0));

    let mut triangles = Vec::with_capacity(20);
    for k in 0..5 {
        let u0 = 1 + k;
        let u1 = 1 + (k + 1) % 5;
        let l0 = 6 + k;
        let l1 = 6 + (k + 1) % 5;
        triangles.push([0, u0, u1]);
        triangles.push([u0, l0, u1]);
        triangles.push([u1, l0, l1]);
        triangles.push([11, l1, l0]);
    }
    (positions, triangles)
}

/// Subdivided icosahedron projected onto the sphere of the given radius.
///
/// Level 0 is the icosahedron (12 vertices, 30 edges, 20 faces); each level splits every
/// face into four. The base orientation places vertices exactly at (0, 0, ±radius).
pub fn generate_icosphere(subdivisions: u32, radius: f64) -> Result<Mesh> {
    if subdivisions > MAX_SUBDIVISIONS {
        return Err(Error::param(
            "subdivisions",
            format!("must be at most {MAX_SUBDIVISIONS}, got {subdivisions}"),
        ));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("radius", format!("must be positive, got {radius}")));
    }

    let (mut positions, mut triangles) = icosahedron();
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, positions: &mut Vec<Vec3>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (positions[a] + positions[b]) * 0.5;
                positions.push(m / m.norm());
                positions.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut positions);
            let bc = midpoint(b, c, &mut positions);
            let ca = midpoint(c, a, &mut positions);
            next.push([a, ab, ca]);
            next.push([ab, b, bc]);
            next.push([ca, bc, c]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }
    for p in positions.iter_mut() {
        *p *= radius;
    }
    Mesh::new(positions, triangles)
}

/// Reads an ASCII OFF file containing only triangular faces.
pub fn load_off(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_off(&text)
}

/// Parses OFF text. See [`load_off`].
pub fn parse_off(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line_no, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        msg: "empty file".into(),
    })?;
    let mut header_tokens = header.split_whitespace();
    if header_tokens.next() != Some("OFF") {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("expected header `OFF`, found `{header}`"),
        });
    }
    // Counts may follow the header on the same line.
    let rest: Vec<&str> = header_tokens.collect();
    let (count_line, counts): (usize, Vec<&str>) = if rest.is_empty() {
        let (n, l) = lines.next().ok_or(Error::Parse {
            line: line_no,
            msg: "missing counts line".into(),
        })?;
        (n, l.split_whitespace().collect())
    } else {
        (line_no, rest)
    };
    if counts.len() < 2 {
        return Err(Error::Parse {
            line: count_line,
            msg: "counts line must contain `nv nt [ne]`".into(),
        });
    }
    let nv: usize = parse_token(counts[0], count_line)?;
    let nt: usize = parse_token(counts[1], count_line)?;

    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, l) = lines.next().ok_or(Error::Parse {
            line: count_line,
            msg: format!("expected {nv} vertex lines, file ended after {}", positions.len()),
        })?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() < 3 {
            return Err(Error::Parse {
                line: n,
                msg: format!("vertex line needs 3 coordinates, found `{l}`"),
            });
        }
        positions.push(Vec3::new(
            parse_token(tok[0], n)?,
            parse_token(tok[1], n)?,
            parse_token(tok[2], n)?,
        ));
    }

    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (n, l) = lines.next().ok_or(Error::Parse {
            line: count_line,
            msg: format!("expected {nt} face lines, file ended after {}", triangles.len()),
        })?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        let arity: usize = parse_token(tok[0], n)?;
        if arity != 3 || tok.len() < 4 {
            return Err(Error::Parse {
                line: n,
                msg: format!("only triangular faces `3 i j k` are supported, found `{l}`"),
            });
        }
        triangles.push([
            parse_token(tok[1], n)?,
            parse_token(tok[2], n)?,
            parse_token(tok[3], n)?,
        ]);
    }
    Mesh::new(positions, triangles)
}

fn parse_token<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse `{tok}`"),
    })
}

/// Writes the mesh as ASCII OFF with round-trippable coordinates.
pub fn write_off(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("OFF\n");
    out.push_str(&format!(
        "{} {} {}\n",
        mesh.num_vertices(),
        mesh.num_triangles(),
        mesh.num_edges()
    ));
    for p in mesh.positions() {
        out.push_str(&format!("{:?} {:?} {:?}\n", p.x, p.y, p.z));
    }
    for t in mesh.triangles() {
        out.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
