//! Graph distances along mesh edges and horizon neighborhoods.
//!
//! The mesh is treated as an undirected graph whose edge weights are Euclidean edge
//! lengths. Geodesic distances are approximated by shortest edge paths (Dijkstra with a
//! binary heap and lazy deletion). The search from each source stops once the smallest
//! tentative distance reaches the cutoff, so only the horizon ball is ever explored.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Weighted adjacency of the mesh edge graph.
#[derive(Debug, Clone)]
pub struct MeshGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl MeshGraph {
    /// One entry per mesh edge per direction, weighted by Euclidean length.
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let x = mesh.positions();
        let mut adjacency = vec![Vec::new(); mesh.num_vertices()];
        for &[a, b] in mesh.edges() {
            let w = (x[b] - x[a]).norm();
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        for list in &mut adjacency {
            list.sort_unstable_by_key(|&(j, _)| j);
        }
        MeshGraph { adjacency }
    }

    /// Builds a graph from explicit adjacency lists, rejecting asymmetric or
    /// non-positive weights, self loops and out-of-range indices.
    pub fn from_adjacency(mut adjacency: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = adjacency.len();
        for list in &mut adjacency {
            list.sort_unstable_by_key(|&(j, _)| j);
        }
        for (i, list) in adjacency.iter().enumerate() {
            for w in list.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Graph(format!("duplicate edge ({i}, {})", w[0].0)));
                }
            }
            for &(j, w) in list {
                if j >= n {
                    return Err(Error::Graph(format!("edge ({i}, {j}) out of range")));
                }
                if j == i {
                    return Err(Error::Graph(format!("self loop at vertex {i}")));
                }
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::Graph(format!("edge ({i}, {j}) has weight {w}")));
                }
                let back = adjacency[j]
                    .binary_search_by_key(&i, |&(k, _)| k)
                    .ok()
                    .map(|pos| adjacency[j][pos].1);
                if back != Some(w) {
                    return Err(Error::Graph(format!(
                        "edge ({i}, {j}) with weight {w} has no identical reverse entry"
                    )));
                }
            }
        }
        Ok(MeshGraph { adjacency })
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    /// Neighbors of `v` with edge lengths, sorted by neighbor index.
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }
}

/// Convenience wrapper for [`MeshGraph::from_mesh`].
pub fn build_graph(mesh: &Mesh) -> MeshGraph {
    MeshGraph::from_mesh(mesh)
}

#[derive(Debug, Clone, Copy)]
struct QueueEntry {
    dist: f64,
    vertex: usize,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    // Reversed so that `BinaryHeap` pops the smallest distance, then the smallest index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// Single-source result of [`dijkstra_truncated`].
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub source: usize,
    /// Graph distance from the source, or `f64::INFINITY` beyond the cutoff.
    pub distances: Vec<f64>,
    /// Previous vertex on one shortest path; `None` for the source and for
    /// vertices beyond the cutoff.
    pub predecessors: Vec<Option<usize>>,
}

/// Scratch buffers reused across sources; reset cost is proportional to the
/// number of vertices touched, not to the mesh size.
struct Workspace {
    dist: Vec<f64>,
    prev: Vec<Option<usize>>,
    settled: Vec<bool>,
    touched: Vec<usize>,
    heap: BinaryHeap<QueueEntry>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            dist: vec![f64::INFINITY; n],
            prev: vec![None; n],
            settled: vec![false; n],
            touched: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            self.dist[v] = f64::INFINITY;
            self.prev[v] = None;
            self.settled[v] = false;
        }
        self.touched.clear();
        self.heap.clear();
    }

    /// Runs the truncated search; afterwards `settled` marks exactly the vertices with
    /// distance below `cutoff`.
    fn run(&mut self, graph: &MeshGraph, source: usize, cutoff: f64) {
        self.reset();
        self.dist[source] = 0.0;
        self.touched.push(source);
        self.heap.push(QueueEntry {
            dist: 0.0,
            vertex: source,
        });
        while let Some(QueueEntry { dist, vertex: u }) = self.heap.pop() {
            if self.settled[u] || dist > self.dist[u] {
                continue;
            }
            if dist >= cutoff {
                break;
            }
            self.settled[u] = true;
            for &(v, w) in graph.neighbors(u) {
                if self.settled[v] {
                    continue;
                }
                let candidate = dist + w;
                if candidate < self.dist[v] {
                    if self.dist[v] == f64::INFINITY {
                        self.touched.push(v);
                    }
                    self.dist[v] = candidate;
                    self.prev[v] = Some(u);
                    self.heap.push(QueueEntry {
                        dist: candidate,
                        vertex: v,
                    });
                }
            }
        }
    }
}

/// Shortest edge-path distances from `source`, truncated at `cutoff`.
///
/// Vertices whose distance is not below `cutoff` are reported as infinity with no
/// predecessor. `cutoff` may be `f64::INFINITY` for a full search.
pub fn dijkstra_truncated(graph: &MeshGraph, source: usize, cutoff: f64) -> Result<ShortestPaths> {
    let n = graph.num_vertices();
    if source >= n {
        return Err(Error::Domain(format!("source {source} out of range for {n} vertices")));
    }
    if !(cutoff > 0.0) {
        return Err(Error::Domain(format!("cutoff must be positive, got {cutoff}")));
    }
    let mut ws = Workspace::new(n);
    ws.run(graph, source, cutoff);
    let mut distances = vec![f64::INFINITY; n];
    let mut predecessors = vec![None; n];
    for &v in &ws.touched {
        if ws.settled[v] {
            distances[v] = ws.dist[v];
            predecessors[v] = ws.prev[v];
        }
    }
    Ok(ShortestPaths {
        source,
        distances,
        predecessors,
    })
}

/// Reconstructs the vertex sequence from the source to `target`.
pub fn shortest_path(paths: &ShortestPaths, target: usize) -> Result<Vec<usize>> {
    if target >= paths.distances.len() || !paths.distances[target].is_finite() {
        return Err(Error::Unreachable { target });
    }
    let mut path = vec![target];
    let mut v = target;
    while let Some(p) = paths.predecessors[v] {
        path.push(p);
        v = p;
    }
    debug_assert_eq!(v, paths.source);
    path.reverse();
    Ok(path)
}

/// Horizon neighborhoods: for every vertex, all other vertices at graph distance
/// strictly below `horizon`, sorted by index, in compressed row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicTable {
    horizon: f64,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl GeodesicTable {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Neighbor indices of `i` (ascending) and the matching distances.
    pub fn neighbors(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.indices[r.clone()], &self.distances[r])
    }

    /// Stored distance between `i` and `j`, if they are within the horizon.
    pub fn distance(&self, i: usize, j: usize) -> Option<f64> {
        let (idx, dist) = self.neighbors(i);
        idx.binary_search(&j).ok().map(|k| dist[k])
    }

    /// Position of vertex `i`'s first entry in the flattened entry arrays.
    pub fn row_offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn neighbor_count(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Number of ordered pairs stored (twice the number of bonds).
    pub fn num_entries(&self) -> usize {
        self.indices.len()
    }

    /// Vertices with no neighbor inside the horizon.
    pub fn isolated_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices())
            .filter(|&i| self.neighbor_count(i) == 0)
            .collect()
    }

    fn from_pairs(nv: usize, horizon: f64, upper: Vec<Vec<(usize, f64)>>) -> Self {
        let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
        for (i, row) in upper.into_iter().enumerate() {
            for (j, d) in row {
                lists[i].push((j, d));
                lists[j].push((i, d));
            }
        }
        let mut offsets = Vec::with_capacity(nv + 1);
        let mut indices = Vec::new();
        let mut distances = Vec::new();
        offsets.push(0);
        for mut list in lists {
            list.sort_unstable_by_key(|&(j, _)| j);
            for (j, d) in list {
                indices.push(j);
                distances.push(d);
            }
            offsets.push(indices.len());
        }
        GeodesicTable {
            horizon,
            offsets,
            indices,
            distances,
        }
    }
}

/// Runs the truncated search from every vertex and keeps all pairs closer than `horizon`.
///
/// Each unordered pair is evaluated once, from its lower-index endpoint, and mirrored,
/// so the table is bit-exactly symmetric. Sources are processed in parallel; the result
/// does not depend on the schedule.
pub fn build_geodesic_table(graph: &MeshGraph, horizon: f64) -> Result<GeodesicTable> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param("delta", format!("horizon must be positive, got {horizon}")));
    }
    let nv = graph.num_vertices();
    let upper: Vec<Vec<(usize, f64)>> = (0..nv)
        .into_par_iter()
        .map_init(
            || Workspace::new(nv),
            |ws, i| {
                ws.run(graph, i, horizon);
                let mut row: Vec<(usize, f64)> = ws
                    .touched
                    .iter()
                    .filter(|&&j| j > i && ws.settled[j])
                    .map(|&j| (j, ws.dist[j]))
                    .collect();
                row.sort_unstable_by_key(|&(j, _)| j);
                row
            },
        )
        .collect();
    let table = GeodesicTable::from_pairs(nv, horizon, upper);
    let isolated = table.isolated_vertices();
    if !isolated.is_empty() {
        log::warn!(
            "{} of {} vertices have no neighbor within horizon {horizon}; the horizon is below the mesh resolution",
            isolated.len(),
            nv
        );
    }
    Ok(table)
}

const CACHE_MAGIC: &[u8; 8] = b"PDGTAB01";

/// Serializes the table together with the mesh hash it was built for.
///
/// Layout (little endian): magic, 32-byte mesh hash, horizon bits, vertex count,
/// entry count, `nv + 1` offsets, then `(index, distance bits)` per entry.
pub fn write_table_cache(table: &GeodesicTable, mesh_hash: &[u8; 32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(64 + 8 * table.offsets.len() + 16 * table.indices.len());
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(mesh_hash);
    buf.extend_from_slice(&table.horizon.to_bits().to_le_bytes());
    buf.extend_from_slice(&(table.num_vertices() as u64).to_le_bytes());
    buf.extend_from_slice(&(table.indices.len() as u64).to_le_bytes());
    for &o in &table.offsets {
        buf.extend_from_slice(&(o as u64).to_le_bytes());
    }
    for (&j, &d) in table.indices.iter().zip(&table.distances) {
        buf.extend_from_slice(&(j as u64).to_le_bytes());
        buf.extend_from_slice(&d.to_bits().to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads a cached table, checking that it matches `mesh_hash` and `horizon` exactly.
pub fn read_table_cache(path: impl AsRef<Path>, mesh_hash: &[u8; 32], horizon: f64) -> Result<GeodesicTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader { bytes: &bytes, pos: 0 };
    if r.take(8)? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    if r.take(32)? != mesh_hash {
        return Err(Error::Cache("mesh hash mismatch".into()));
    }
    let cached_horizon = f64::from_bits(r.u64()?);
    if cached_horizon.to_bits() != horizon.to_bits() {
        return Err(Error::Cache(format!(
            "horizon mismatch: cache has {cached_horizon}, requested {horizon}"
        )));
    }
    let nv = r.u64()? as usize;
    let ne = r.u64()? as usize;
    let mut offsets = Vec::with_capacity(nv + 1);
    for _ in 0..=nv {
        offsets.push(r.u64()? as usize);
    }
    let mut indices = Vec::with_capacity(ne);
    let mut distances = Vec::with_capacity(ne);
    for _ in 0..ne {
        indices.push(r.u64()? as usize);
        distances.push(f64::from_bits(r.u64()?));
    }
    if r.pos != bytes.len() || offsets.first() != Some(&0) || offsets.last() != Some(&ne) {
        return Err(Error::Cache("inconsistent table layout".into()));
    }
    if offsets.windows(2).any(|w| w[0] > w[1]) || indices.iter().any(|&j| j >= nv) {
        return Err(Error::Cache("corrupt offsets or indices".into()));
    }
    Ok(GeodesicTable {
        horizon,
        offsets,
        indices,
        distances,
    })
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Cache("truncated file".into()))?;
        self.pos = end;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        b.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(b))
    }
}
