//! 2D triangulations of disk-like domains with an oriented closed boundary.
//!
//! A [`Mesh`] is a P1 triangulation whose boundary is a single closed
//! counterclockwise loop. Besides connectivity it carries the per-edge
//! boundary lengths and a per-boundary-node curvature estimate (three-point
//! circumscribed-circle formula), both of which feed the impedance boundary
//! condition downstream.
//!
//! The disk generator uses a concentric-ring layout: ring `r` of `n` holds
//! `6r` nodes, so the mesh is deterministic and needs no seed. Text I/O uses
//! the `PATMESH 1` format described at [`save_mesh`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

/// Node-count ceiling for the generator; beyond this the assembled operators
/// would not fit a desktop memory budget.
pub const MAX_GENERATED_NODES: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mesh would need {nodes} nodes, above the {MAX_GENERATED_NODES} budget")]
    Resource { nodes: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("topology error: {0}")]
    Topology(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable 2D triangulation of a disk-topology domain.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Boundary node indices in counterclockwise order around the closed loop.
    boundary_loop: Vec<usize>,
    /// Length of boundary edge `loop[i] -> loop[i+1]` (cyclic).
    boundary_edge_lengths: Vec<f64>,
    /// Discrete curvature at each boundary-loop node, units 1/length.
    boundary_curvature: Vec<f64>,
    n_edges: usize,
    min_edge: f64,
    max_edge: f64,
}

impl Mesh {
    /// Validate connectivity and compute the derived boundary quantities.
    ///
    /// `boundary_loop` must list every boundary node exactly once, in an
    /// order that walks the (single) boundary cycle counterclockwise.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_loop: Vec<usize>,
    ) -> Result<Self, MeshError> {
        let n = nodes.len();
        if n < 3 || triangles.is_empty() {
            return Err(MeshError::Topology("mesh needs at least one triangle".into()));
        }
        if let Some(i) = nodes.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(MeshError::Topology(format!("node {i} has non-finite coordinates")));
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(MeshError::Topology(format!(
                        "triangle {t} references node {v} >= {n}"
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::Topology(format!("triangle {t} repeats a node")));
            }
            let a = signed_area(&nodes, tri);
            if !(a > 0.0) {
                return Err(MeshError::Topology(format!(
                    "triangle {t} has non-positive signed area {a:.3e}"
                )));
            }
        }

        // Undirected edge -> incidence count.
        let mut edge_count: HashMap<(usize, usize), u8> = HashMap::new();
        for tri in &triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let c = edge_count.entry(key).or_insert(0);
                *c += 1;
                if *c > 2 {
                    return Err(MeshError::Topology(format!(
                        "edge ({a}, {b}) belongs to more than two triangles"
                    )));
                }
            }
        }
        let n_edges = edge_count.len();

        // Boundary edges are those with exactly one incident triangle; they
        // must assemble into a single closed cycle.
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut n_boundary_edges = 0usize;
        for (&(a, b), &c) in &edge_count {
            if c == 1 {
                adj.entry(a).or_default().push(b);
                adj.entry(b).or_default().push(a);
                n_boundary_edges += 1;
            }
        }
        if n_boundary_edges == 0 {
            return Err(MeshError::Topology("mesh has no boundary".into()));
        }
        for (&v, nb) in &adj {
            if nb.len() != 2 {
                return Err(MeshError::Topology(format!(
                    "boundary node {v} has {} boundary edges, expected 2",
                    nb.len()
                )));
            }
        }
        // Walk one cycle and require it to cover every boundary edge.
        let start = *adj.keys().min().expect("non-empty boundary");
        let mut cycle_len = 1usize;
        let mut prev = start;
        let mut cur = adj[&start][0];
        while cur != start {
            let nb = &adj[&cur];
            let next = if nb[0] == prev { nb[1] } else { nb[0] };
            prev = cur;
            cur = next;
            cycle_len += 1;
            if cycle_len > n_boundary_edges {
                break;
            }
        }
        if cycle_len != n_boundary_edges {
            return Err(MeshError::Topology(format!(
                "multiple boundary loops: walked {cycle_len} of {n_boundary_edges} boundary edges"
            )));
        }

        // Euler relation for a disk: N - E + T = 1.
        let euler = n as i64 - n_edges as i64 + triangles.len() as i64;
        if euler != 1 {
            return Err(MeshError::Topology(format!(
                "Euler characteristic N - E + T = {euler}, expected 1 (disk topology)"
            )));
        }

        // The supplied loop must match the walked cycle: right length, every
        // consecutive pair an actual boundary edge, no repeats.
        if boundary_loop.len() != n_boundary_edges {
            return Err(MeshError::Topology(format!(
                "boundary loop lists {} nodes, boundary has {}",
                boundary_loop.len(),
                n_boundary_edges
            )));
        }
        let nb = boundary_loop.len();
        let mut seen = vec![false; n];
        for i in 0..nb {
            let a = boundary_loop[i];
            let b = boundary_loop[(i + 1) % nb];
            if a >= n || seen[a] {
                return Err(MeshError::Topology(format!(
                    "boundary loop repeats or exceeds node range at {a}"
                )));
            }
            seen[a] = true;
            if edge_count.get(&(a.min(b), a.max(b))) != Some(&1) {
                return Err(MeshError::Topology(format!(
                    "loop nodes {a} -> {b} are not a boundary edge"
                )));
            }
        }
        // Counterclockwise orientation: positive polygon signed area.
        let mut area2 = 0.0;
        for i in 0..nb {
            let p = nodes[boundary_loop[i]];
            let q = nodes[boundary_loop[(i + 1) % nb]];
            area2 += p[0] * q[1] - q[0] * p[1];
        }
        if area2 <= 0.0 {
            return Err(MeshError::Topology(
                "boundary loop must be oriented counterclockwise".into(),
            ));
        }

        let boundary_edge_lengths: Vec<f64> = (0..nb)
            .map(|i| {
                let p = nodes[boundary_loop[i]];
                let q = nodes[boundary_loop[(i + 1) % nb]];
                ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
            })
            .collect();
        let boundary_curvature: Vec<f64> = (0..nb)
            .map(|i| {
                let p = nodes[boundary_loop[(i + nb - 1) % nb]];
                let q = nodes[boundary_loop[i]];
                let r = nodes[boundary_loop[(i + 1) % nb]];
                three_point_curvature(p, q, r)
            })
            .collect();

        let mut min_edge = f64::INFINITY;
        let mut max_edge = 0.0f64;
        for tri in &triangles {
            for e in 0..3 {
                let p = nodes[tri[e]];
                let q = nodes[tri[(e + 1) % 3]];
                let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
                min_edge = min_edge.min(len);
                max_edge = max_edge.max(len);
            }
        }

        Ok(Self {
            nodes,
            triangles,
            boundary_loop,
            boundary_edge_lengths,
            boundary_curvature,
            n_edges,
            min_edge,
            max_edge,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_loop(&self) -> &[usize] {
        &self.boundary_loop
    }

    pub fn boundary_edge_lengths(&self) -> &[f64] {
        &self.boundary_edge_lengths
    }

    /// Discrete curvature per boundary-loop node; positive for a convex
    /// domain walked counterclockwise (outward normal convention, +1/R on a
    /// circle of radius R).
    pub fn boundary_curvature(&self) -> &[f64] {
        &self.boundary_curvature
    }

    pub fn perimeter(&self) -> f64 {
        self.boundary_edge_lengths.iter().sum()
    }

    pub fn min_edge_length(&self) -> f64 {
        self.min_edge
    }

    pub fn max_edge_length(&self) -> f64 {
        self.max_edge
    }
}

fn signed_area(nodes: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Signed curvature of the circle through three consecutive boundary points.
///
/// Returns `2 cross(q-p, r-q) / (|q-p| |r-q| |r-p|)`; collinear points give 0,
/// and points that lie on a circle of radius R give exactly +-1/R.
pub fn three_point_curvature(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    let u = [q[0] - p[0], q[1] - p[1]];
    let v = [r[0] - q[0], r[1] - q[1]];
    let w = [r[0] - p[0], r[1] - p[1]];
    let cross = u[0] * v[1] - u[1] * v[0];
    let denom = (u[0].powi(2) + u[1].powi(2)).sqrt()
        * (v[0].powi(2) + v[1].powi(2)).sqrt()
        * (w[0].powi(2) + w[1].powi(2)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

/// Triangulate a disk of the given radius with target edge length `h`.
///
/// Concentric rings: ring `r` of `n = ceil(radius/h)` carries `6r` nodes at
/// radius `r * radius / n`, giving `1 + 3n(n+1)` nodes, `6n^2` triangles and
/// all edges no longer than `1.5 h`. Deterministic, no randomness involved.
pub fn generate_disk_mesh(radius: f64, h: f64) -> Result<Mesh, MeshError> {
    if !(radius > 0.0) {
        return Err(MeshError::InvalidParameter(format!("radius {radius} must be positive")));
    }
    if !(h > 0.0 && h < radius) {
        return Err(MeshError::InvalidParameter(format!(
            "edge length {h} must lie in (0, radius = {radius})"
        )));
    }
    let n = (radius / h).ceil() as usize;
    let n_nodes = 1 + 3 * n * (n + 1);
    if n_nodes > MAX_GENERATED_NODES {
        return Err(MeshError::Resource { nodes: n_nodes });
    }

    let mut nodes = Vec::with_capacity(n_nodes);
    nodes.push([0.0, 0.0]);
    // ring r starts at index 1 + 3 r (r - 1)
    let ring_start = |r: usize| 1 + 3 * r * (r - 1);
    for r in 1..=n {
        let rad = radius * r as f64 / n as f64;
        let count = 6 * r;
        for j in 0..count {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
            nodes.push([rad * theta.cos(), rad * theta.sin()]);
        }
    }

    let mut triangles = Vec::with_capacity(6 * n * n);
    for r in 1..=n {
        let outer = |j: usize| ring_start(r) + j % (6 * r);
        for s in 0..6 {
            if r == 1 {
                triangles.push([outer(s), outer(s + 1), 0]);
                continue;
            }
            let inner = |j: usize| ring_start(r - 1) + j % (6 * (r - 1));
            for t in 0..r {
                let o0 = outer(s * r + t);
                let o1 = outer(s * r + t + 1);
                triangles.push([o0, o1, inner(s * (r - 1) + t)]);
            }
            for t in 0..r - 1 {
                let o1 = outer(s * r + t + 1);
                let i0 = inner(s * (r - 1) + t);
                let i1 = inner(s * (r - 1) + t + 1);
                triangles.push([o1, i1, i0]);
            }
        }
    }

    let boundary_loop: Vec<usize> = (0..6 * n).map(|j| ring_start(n) + j).collect();
    Mesh::new(nodes, triangles, boundary_loop)
}

/// Write a mesh in the `PATMESH 1` text format:
///
/// ```text
/// PATMESH 1
/// N T B
/// x y          (N node lines, 17 significant digits)
/// i j k        (T triangle lines, 0-based)
/// b            (B boundary-loop indices, in order)
/// ```
pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut out = String::new();
    writeln!(out, "PATMESH 1").expect("string write");
    writeln!(out, "{} {} {}", mesh.n_nodes(), mesh.n_triangles(), mesh.boundary_loop.len())
        .expect("string write");
    for p in &mesh.nodes {
        writeln!(out, "{:.16e} {:.16e}", p[0], p[1]).expect("string write");
    }
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).expect("string write");
    }
    for b in &mesh.boundary_loop {
        writeln!(out, "{b}").expect("string write");
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

struct TokenStream {
    tokens: Vec<(usize, String)>,
    pos: usize,
}

impl TokenStream {
    fn take(&mut self, what: &str) -> Result<(usize, &str), MeshError> {
        if self.pos >= self.tokens.len() {
            return Err(MeshError::Parse {
                line: self.tokens.last().map(|t| t.0).unwrap_or(1),
                msg: format!("unexpected end of file, expected {what}"),
            });
        }
        let (line, tok) = &self.tokens[self.pos];
        self.pos += 1;
        Ok((*line, tok.as_str()))
    }

    fn take_usize(&mut self, what: &str) -> Result<(usize, usize), MeshError> {
        let (line, tok) = self.take(what)?;
        let v = tok.parse::<usize>().map_err(|_| MeshError::Parse {
            line,
            msg: format!("expected {what} (unsigned integer), found '{tok}'"),
        })?;
        Ok((line, v))
    }

    fn take_f64(&mut self, what: &str) -> Result<(usize, f64), MeshError> {
        let (line, tok) = self.take(what)?;
        let v = tok.parse::<f64>().map_err(|_| MeshError::Parse {
            line,
            msg: format!("expected {what} (float), found '{tok}'"),
        })?;
        Ok((line, v))
    }
}

/// Read a `PATMESH 1` file; the mesh is re-validated on load.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut tokens: Vec<(usize, String)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if idx == 0 {
            if line.trim() != "PATMESH 1" {
                return Err(MeshError::Parse {
                    line: 1,
                    msg: format!("expected header 'PATMESH 1', found '{}'", line.trim()),
                });
            }
            continue;
        }
        for tok in line.split_ascii_whitespace() {
            tokens.push((idx + 1, tok.to_string()));
        }
    }
    let mut ts = TokenStream { tokens, pos: 0 };

    let (_, n) = ts.take_usize("node count")?;
    let (_, t) = ts.take_usize("triangle count")?;
    let (_, b) = ts.take_usize("boundary count")?;

    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let (line, x) = ts.take_f64(&format!("x of node {i}"))?;
        let (_, y) = ts.take_f64(&format!("y of node {i}"))?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(MeshError::Parse {
                line,
                msg: format!("node {i} has non-finite coordinates"),
            });
        }
        nodes.push([x, y]);
    }
    let mut triangles = Vec::with_capacity(t);
    for i in 0..t {
        let mut tri = [0usize; 3];
        for v in &mut tri {
            let (line, idx) = ts.take_usize(&format!("vertex of triangle {i}"))?;
            if idx >= n {
                return Err(MeshError::Parse {
                    line,
                    msg: format!("triangle {i} references node {idx} >= {n}"),
                });
            }
            *v = idx;
        }
        triangles.push(tri);
    }
    let mut boundary = Vec::with_capacity(b);
    for i in 0..b {
        let (line, v) = ts.take_usize(&format!("boundary index {i}"))?;
        if v >= n {
            return Err(MeshError::Parse {
                line,
                msg: format!("boundary index {v} >= {n}"),
            });
        }
        boundary.push(v);
    }
    if ts.pos != ts.tokens.len() {
        return Err(MeshError::Parse {
            line: ts.tokens[ts.pos].0,
            msg: "trailing data after boundary loop".into(),
        });
    }
    Mesh::new(nodes, triangles, boundary)
}
