//! Finite models of metric measure spaces.
//!
//! A [`Space`] is a finite point set with a metric, a positive mass per point
//! and a window: continuous spaces are replaced by the cell centres of a
//! uniform grid (midpoint masses), infinite graphs by a finite piece. Every
//! point knows its distance to the truncation boundary through
//! [`Space::margin`]; balls that reach past it are flagged, never silently
//! clipped.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numeric;

/// Tag for the supported families of spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    EuclideanRadial,
    BrokenLine,
    Lattice,
    Tree,
    Bipartite,
    CustomGraph,
}

impl SpaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SpaceKind::EuclideanRadial => "euclidean_radial",
            SpaceKind::BrokenLine => "broken_line",
            SpaceKind::Lattice => "lattice",
            SpaceKind::Tree => "tree",
            SpaceKind::Bipartite => "bipartite",
            SpaceKind::CustomGraph => "custom_graph",
        }
    }

    pub fn is_graph(self) -> bool {
        matches!(
            self,
            SpaceKind::Lattice | SpaceKind::Tree | SpaceKind::Bipartite | SpaceKind::CustomGraph
        )
    }
}

/// Vertex weights and undirected edges of a finite graph.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GraphData {
    pub weights: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
}

impl GraphData {
    /// Unit-weight graph on `n` vertices.
    pub fn unweighted(n: usize, edges: Vec<(usize, usize)>) -> Self {
        GraphData {
            weights: vec![1.0; n],
            edges,
        }
    }

    /// Cycle graph on `n` vertices.
    pub fn cycle(n: usize) -> Self {
        let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::unweighted(n, edges)
    }

    /// Path graph on `n` vertices.
    pub fn path(n: usize) -> Self {
        let edges = (1..n).map(|i| (i - 1, i)).collect();
        Self::unweighted(n, edges)
    }

    /// Parse the line-oriented graph format:
    ///
    /// ```text
    /// graph <num_vertices> <num_edges>
    /// v <id> <weight>
    /// e <id1> <id2>
    /// ```
    ///
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut weights: Vec<Option<f64>> = Vec::new();
        let mut edges = Vec::new();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let err = |msg: &str| Error::Parse {
                line,
                msg: msg.to_string(),
            };
            match (fields[0], header) {
                ("graph", None) => {
                    if fields.len() != 3 {
                        return Err(err("expected `graph <num_vertices> <num_edges>`"));
                    }
                    let n = parse_usize(fields[1], line)?;
                    let m = parse_usize(fields[2], line)?;
                    weights = vec![None; n];
                    header = Some((n, m));
                }
                ("graph", Some(_)) => return Err(err("duplicate header")),
                (_, None) => return Err(err("missing `graph` header")),
                ("v", Some((n, _))) => {
                    if fields.len() != 3 {
                        return Err(err("expected `v <id> <weight>`"));
                    }
                    if !edges.is_empty() {
                        return Err(err("vertex line after edge lines"));
                    }
                    let id = parse_usize(fields[1], line)?;
                    if id >= n {
                        return Err(err("vertex id out of range"));
                    }
                    let w: f64 = fields[2]
                        .parse()
                        .map_err(|_| err("weight is not a decimal number"))?;
                    if !(w > 0.0 && w.is_finite()) {
                        return Err(err("weight must be positive"));
                    }
                    if weights[id].is_some() {
                        return Err(err("duplicate vertex"));
                    }
                    weights[id] = Some(w);
                }
                ("e", Some((n, _))) => {
                    if fields.len() != 3 {
                        return Err(err("expected `e <id1> <id2>`"));
                    }
                    let a = parse_usize(fields[1], line)?;
                    let b = parse_usize(fields[2], line)?;
                    if a >= n || b >= n {
                        return Err(err("edge endpoint out of range"));
                    }
                    if a == b {
                        return Err(err("self loop"));
                    }
                    edges.push((a, b));
                }
                _ => return Err(err("unknown record")),
            }
        }
        let (n, m) = header.ok_or(Error::Parse {
            line: last_line.max(1),
            msg: "missing `graph` header".into(),
        })?;
        if edges.len() != m {
            return Err(Error::Parse {
                line: last_line,
                msg: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        let weights = weights
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                w.ok_or(Error::Parse {
                    line: last_line,
                    msg: format!("vertex {i} has no `v` line"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if n == 0 {
            return Err(Error::EmptyWindow);
        }
        Ok(GraphData { weights, edges })
    }

    /// Serialise in the format read by [`GraphData::parse`].
    pub fn to_text(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "graph {} {}", self.weights.len(), self.edges.len());
        for (i, w) in self.weights.iter().enumerate() {
            let _ = writeln!(out, "v {i} {w}");
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "e {a} {b}");
        }
        out
    }
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("`{s}` is not a non-negative integer"),
    })
}

/// Structured description of a space.
#[derive(Clone, Debug, PartialEq)]
pub enum SpaceSpec {
    /// `[-window, window]^dim` with density `(1+|x|²)^{alpha/2}`, grid step `step`.
    EuclideanRadial {
        dim: usize,
        alpha: f64,
        window: f64,
        step: f64,
    },
    /// `⋃ [n-1/4, n+1/4] ∩ [-window, window]` with Lebesgue measure.
    BrokenLine { window: f64, step: f64 },
    /// `{0..side}^dim` with the graph (L¹) metric and unit masses.
    Lattice { dim: usize, side: usize },
    /// Rooted regular tree: every vertex has `degree` neighbours except the leaves.
    Tree { degree: usize, depth: usize },
    /// Complete bipartite graph `K_{left,right}`.
    Bipartite { left: usize, right: usize },
    CustomGraph(GraphData),
}

impl SpaceSpec {
    pub fn kind(&self) -> SpaceKind {
        match self {
            SpaceSpec::EuclideanRadial { .. } => SpaceKind::EuclideanRadial,
            SpaceSpec::BrokenLine { .. } => SpaceKind::BrokenLine,
            SpaceSpec::Lattice { .. } => SpaceKind::Lattice,
            SpaceSpec::Tree { .. } => SpaceKind::Tree,
            SpaceSpec::Bipartite { .. } => SpaceKind::Bipartite,
            SpaceSpec::CustomGraph(_) => SpaceKind::CustomGraph,
        }
    }
}

#[derive(Clone, Debug)]
enum Geometry {
    /// Sorted 1-D positions.
    Line { pos: Vec<f64> },
    /// Cell centres `k·step`, `k ∈ [-half, half]^dim`, Euclidean metric.
    Grid { dim: usize, half: i64, step: f64 },
    /// `{0..side}^dim`, L¹ metric.
    Lattice { dim: usize, side: usize },
    Tree {
        parent: Vec<usize>,
        depth: Vec<u32>,
        adj: Vec<Vec<usize>>,
        max_depth: u32,
    },
    /// Hop metric, all pairs.
    Graph { adj: Vec<Vec<usize>>, dist: Vec<u32> },
}

const GRAPH_LIMIT: usize = 6000;
const UNREACHABLE: u32 = u32::MAX;

/// Finite metric measure space with a declared window.
#[derive(Clone, Debug)]
pub struct Space {
    spec: SpaceSpec,
    mass: Vec<f64>,
    geom: Geometry,
}

/// Volumes `V(x, r_i)` on a grid of radii.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeProfile {
    pub center: usize,
    pub radii: Vec<f64>,
    pub volumes: Vec<f64>,
    /// `true` where the ball reaches past the window.
    pub truncated: Vec<bool>,
}

impl Space {
    pub fn build(spec: SpaceSpec) -> Result<Space> {
        match &spec {
            SpaceSpec::EuclideanRadial {
                dim,
                alpha,
                window,
                step,
            } => {
                let (dim, alpha, window, step) = (*dim, *alpha, *window, *step);
                if dim == 0 {
                    return Err(Error::InvalidParameter("dimension must be ≥ 1".into()));
                }
                check_grid(window, step)?;
                let half = ((window / step) - 0.5 + 1e-9).floor();
                if half < 0.0 {
                    return Err(Error::EmptyWindow);
                }
                let half = half as i64;
                let side = (2 * half + 1) as usize;
                let count = side
                    .checked_pow(dim as u32)
                    .filter(|c| *c <= 50_000_000)
                    .ok_or_else(|| Error::InvalidParameter("grid too large".into()))?;
                let cell = step.powi(dim as i32);
                let mut mass = Vec::with_capacity(count);
                let mut k = vec![-half; dim];
                for _ in 0..count {
                    let r2: f64 = k.iter().map(|&c| (c as f64 * step).powi(2)).sum();
                    mass.push((1.0 + r2).powf(alpha / 2.0) * cell);
                    increment(&mut k, -half, half);
                }
                Ok(Space {
                    spec,
                    mass,
                    geom: Geometry::Grid { dim, half, step },
                })
            }
            SpaceSpec::BrokenLine { window, step } => {
                let (window, step) = (*window, *step);
                check_grid(window, step)?;
                if step > 0.5 {
                    return Err(Error::InvalidParameter(
                        "step must resolve the components (≤ 1/2)".into(),
                    ));
                }
                let cells = (0.5 / step).round().max(1.0) as usize;
                let width = 0.5 / cells as f64;
                let n_max = (window - 0.25 + 1e-12).floor() as i64;
                if n_max < 0 {
                    return Err(Error::EmptyWindow);
                }
                let mut pos = Vec::new();
                for n in -n_max..=n_max {
                    for i in 0..cells {
                        pos.push(n as f64 - 0.25 + (i as f64 + 0.5) * width);
                    }
                }
                let mass = vec![width; pos.len()];
                Ok(Space {
                    spec,
                    mass,
                    geom: Geometry::Line { pos },
                })
            }
            SpaceSpec::Lattice { dim, side } => {
                let (dim, side) = (*dim, *side);
                if dim == 0 || side == 0 {
                    return Err(Error::InvalidParameter(
                        "lattice needs dim ≥ 1 and side ≥ 1".into(),
                    ));
                }
                let count = side
                    .checked_pow(dim as u32)
                    .filter(|c| *c <= 50_000_000)
                    .ok_or_else(|| Error::InvalidParameter("lattice too large".into()))?;
                Ok(Space {
                    spec,
                    mass: vec![1.0; count],
                    geom: Geometry::Lattice { dim, side },
                })
            }
            SpaceSpec::Tree { degree, depth } => {
                let (degree, depth) = (*degree, *depth);
                if degree < 3 || depth < 1 {
                    return Err(Error::InvalidParameter(
                        "tree needs degree ≥ 3 and depth ≥ 1".into(),
                    ));
                }
                let mut count: usize = 1;
                let mut layer: usize = degree;
                for _ in 0..depth {
                    count = count
                        .checked_add(layer)
                        .filter(|c| *c <= 20_000_000)
                        .ok_or_else(|| Error::InvalidParameter("tree too large".into()))?;
                    layer = layer.saturating_mul(degree - 1);
                }
                let mut parent = vec![usize::MAX; count];
                let mut dep = vec![0u32; count];
                let mut adj: Vec<Vec<usize>> = vec![Vec::new(); count];
                let mut next = 1;
                for v in 0..count {
                    if dep[v] as usize == depth {
                        continue;
                    }
                    let kids = if v == 0 { degree } else { degree - 1 };
                    for _ in 0..kids {
                        parent[next] = v;
                        dep[next] = dep[v] + 1;
                        adj[v].push(next);
                        adj[next].push(v);
                        next += 1;
                    }
                }
                debug_assert_eq!(next, count);
                Ok(Space {
                    spec,
                    mass: vec![1.0; count],
                    geom: Geometry::Tree {
                        parent,
                        depth: dep,
                        adj,
                        max_depth: depth as u32,
                    },
                })
            }
            SpaceSpec::Bipartite { left, right } => {
                let (left, right) = (*left, *right);
                if left == 0 || right == 0 {
                    return Err(Error::InvalidParameter(
                        "bipartite sides must be non-empty".into(),
                    ));
                }
                let mut edges = Vec::with_capacity(left * right);
                for a in 0..left {
                    for b in 0..right {
                        edges.push((a, left + b));
                    }
                }
                let g = GraphData::unweighted(left + right, edges);
                let (adj, dist) = graph_metric(&g)?;
                Ok(Space {
                    spec,
                    mass: g.weights,
                    geom: Geometry::Graph { adj, dist },
                })
            }
            SpaceSpec::CustomGraph(g) => {
                if g.weights.is_empty() {
                    return Err(Error::EmptyWindow);
                }
                if let Some(w) = g.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
                    return Err(Error::InvalidParameter(format!(
                        "vertex weight {w} is not positive"
                    )));
                }
                let (adj, dist) = graph_metric(g)?;
                let mass = g.weights.clone();
                Ok(Space {
                    spec,
                    mass,
                    geom: Geometry::Graph { adj, dist },
                })
            }
        }
    }

    pub fn from_graph(g: GraphData) -> Result<Space> {
        Space::build(SpaceSpec::CustomGraph(g))
    }

    pub fn spec(&self) -> &SpaceSpec {
        &self.spec
    }

    pub fn kind(&self) -> SpaceKind {
        self.spec.kind()
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self, x: usize) -> f64 {
        self.mass[x]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        numeric::compensated_sum(self.mass.iter().copied())
    }

    /// Grid step for grid-backed continuous spaces.
    pub fn resolution(&self) -> Option<f64> {
        match &self.spec {
            SpaceSpec::EuclideanRadial { step, .. } => Some(*step),
            SpaceSpec::BrokenLine { step, .. } => Some(0.5 / (0.5 / step).round().max(1.0)),
            _ => None,
        }
    }

    /// Coordinates of a point (hop depth for trees, index for abstract graphs).
    pub fn coords(&self, x: usize) -> Vec<f64> {
        match &self.geom {
            Geometry::Line { pos } => vec![pos[x]],
            Geometry::Grid { dim, half, step } => grid_coords(x, *dim, *half)
                .into_iter()
                .map(|k| k as f64 * step)
                .collect(),
            Geometry::Lattice { dim, side } => lattice_coords(x, *dim, *side)
                .into_iter()
                .map(|c| c as f64)
                .collect(),
            Geometry::Tree { depth, .. } => vec![depth[x] as f64],
            Geometry::Graph { .. } => vec![x as f64],
        }
    }

    /// The point closest to `target` (ties broken by lower index).
    pub fn locate(&self, target: &[f64]) -> usize {
        match &self.geom {
            Geometry::Line { pos } => {
                let t = target.first().copied().unwrap_or(0.0);
                let i = pos.partition_point(|p| *p < t);
                let mut best = i.min(pos.len() - 1);
                if i > 0 && (t - pos[i - 1]).abs() <= (pos[best] - t).abs() {
                    best = i - 1;
                }
                best
            }
            Geometry::Grid { dim, half, step } => {
                let k: Vec<i64> = (0..*dim)
                    .map(|i| {
                        let t = target.get(i).copied().unwrap_or(0.0);
                        ((t / step).round() as i64).clamp(-half, *half)
                    })
                    .collect();
                grid_index(&k, *half)
            }
            Geometry::Lattice { dim, side } => {
                let c: Vec<usize> = (0..*dim)
                    .map(|i| {
                        let t = target.get(i).copied().unwrap_or(0.0).round();
                        t.clamp(0.0, (*side - 1) as f64) as usize
                    })
                    .collect();
                lattice_index(&c, *side)
            }
            _ => (target.first().copied().unwrap_or(0.0).round().max(0.0) as usize)
                .min(self.len() - 1),
        }
    }

    /// Central point of the window (the origin, the lattice centre, the root).
    pub fn center(&self) -> usize {
        match &self.geom {
            Geometry::Lattice { dim, side } => lattice_index(&vec![(side - 1) / 2; *dim], *side),
            Geometry::Line { .. } | Geometry::Grid { .. } => self.locate(&[0.0, 0.0, 0.0, 0.0]),
            _ => 0,
        }
    }

    pub fn dist(&self, x: usize, y: usize) -> f64 {
        match &self.geom {
            Geometry::Line { pos } => (pos[x] - pos[y]).abs(),
            Geometry::Grid { dim, half, step } => {
                let a = grid_coords(x, *dim, *half);
                let b = grid_coords(y, *dim, *half);
                let s: f64 = a
                    .iter()
                    .zip(&b)
                    .map(|(p, q)| ((p - q) as f64 * step).powi(2))
                    .sum();
                s.sqrt()
            }
            Geometry::Lattice { dim, side } => {
                let a = lattice_coords(x, *dim, *side);
                let b = lattice_coords(y, *dim, *side);
                a.iter().zip(&b).map(|(p, q)| p.abs_diff(*q)).sum::<usize>() as f64
            }
            Geometry::Tree { parent, depth, .. } => {
                let (mut a, mut b) = (x, y);
                let mut hops = 0u32;
                while depth[a] > depth[b] {
                    a = parent[a];
                    hops += 1;
                }
                while depth[b] > depth[a] {
                    b = parent[b];
                    hops += 1;
                }
                while a != b {
                    a = parent[a];
                    b = parent[b];
                    hops += 2;
                }
                hops as f64
            }
            Geometry::Graph { dist, .. } => {
                let d = dist[x * self.len() + y];
                if d == UNREACHABLE {
                    f64::INFINITY
                } else {
                    d as f64
                }
            }
        }
    }

    /// Indices of the closed ball `B(x, r)`, ascending.
    pub fn ball(&self, x: usize, r: f64) -> Vec<usize> {
        if r < 0.0 {
            return Vec::new();
        }
        let tol = ball_tolerance(r);
        match &self.geom {
            Geometry::Line { pos } => {
                let lo = pos.partition_point(|p| *p < pos[x] - r - tol);
                let hi = pos.partition_point(|p| *p <= pos[x] + r + tol);
                (lo..hi).collect()
            }
            Geometry::Grid { dim, half, step } => {
                let c = grid_coords(x, *dim, *half);
                let reach = ((r + tol) / step).floor() as i64;
                let lo: Vec<i64> = c.iter().map(|k| (k - reach).max(-half)).collect();
                let hi: Vec<i64> = c.iter().map(|k| (k + reach).min(*half)).collect();
                let r2 = (r + tol) * (r + tol);
                let mut out = Vec::new();
                let mut k = lo.clone();
                loop {
                    let d2: f64 = k
                        .iter()
                        .zip(&c)
                        .map(|(p, q)| ((p - q) as f64 * step).powi(2))
                        .sum();
                    if d2 <= r2 {
                        out.push(grid_index(&k, *half));
                    }
                    if !increment_box(&mut k, &lo, &hi) {
                        break;
                    }
                }
                out
            }
            Geometry::Lattice { dim, side } => {
                let c = lattice_coords(x, *dim, *side);
                let reach = (r + tol).floor() as i64;
                let lo: Vec<i64> = c.iter().map(|k| (*k as i64 - reach).max(0)).collect();
                let hi: Vec<i64> = c
                    .iter()
                    .map(|k| (*k as i64 + reach).min(*side as i64 - 1))
                    .collect();
                let mut out = Vec::new();
                let mut k = lo.clone();
                loop {
                    let d: i64 = k.iter().zip(&c).map(|(p, q)| (p - *q as i64).abs()).sum();
                    if d <= reach {
                        let cu: Vec<usize> = k.iter().map(|v| *v as usize).collect();
                        out.push(lattice_index(&cu, *side));
                    }
                    if !increment_box(&mut k, &lo, &hi) {
                        break;
                    }
                }
                out
            }
            Geometry::Tree { adj, .. } => bfs_ball(adj, x, (r + tol).floor() as u32),
            Geometry::Graph { dist, .. } => {
                let n = self.len();
                let reach = (r + tol).floor();
                (0..n)
                    .filter(|&y| {
                        let d = dist[x * n + y];
                        d != UNREACHABLE && (d as f64) <= reach
                    })
                    .collect()
            }
        }
    }

    /// Distance from `x` to the truncation boundary; `∞` for boundary-free spaces.
    pub fn margin(&self, x: usize) -> f64 {
        match (&self.spec, &self.geom) {
            (SpaceSpec::EuclideanRadial { window, .. }, Geometry::Grid { dim, half, step }) => {
                let c = grid_coords(x, *dim, *half);
                let m = c.iter().map(|k| (*k as f64 * step).abs()).fold(0.0, f64::max);
                window - m
            }
            (SpaceSpec::BrokenLine { window, .. }, Geometry::Line { pos }) => window - pos[x].abs(),
            (_, Geometry::Lattice { dim, side }) => lattice_coords(x, *dim, *side)
                .iter()
                .map(|c| (*c).min(side - 1 - c))
                .min()
                .unwrap_or(0) as f64,
            (_, Geometry::Tree { depth, max_depth, .. }) => (max_depth - depth[x]) as f64,
            _ => f64::INFINITY,
        }
    }

    /// `true` when the space has no truncation boundary.
    pub fn is_boundary_free(&self) -> bool {
        matches!(self.geom, Geometry::Graph { .. })
    }

    /// Diameter of the window; lemma preconditions quoting `diam(M)` use this value.
    pub fn window_diameter(&self) -> f64 {
        match (&self.spec, &self.geom) {
            (SpaceSpec::EuclideanRadial { window, dim, .. }, _) => 2.0 * window * (*dim as f64).sqrt(),
            (SpaceSpec::BrokenLine { window, .. }, _) => 2.0 * window,
            (_, Geometry::Lattice { dim, side }) => (dim * (side - 1)) as f64,
            (_, Geometry::Tree { max_depth, .. }) => 2.0 * *max_depth as f64,
            (_, Geometry::Graph { dist, .. }) => dist
                .iter()
                .filter(|d| **d != UNREACHABLE)
                .max()
                .copied()
                .unwrap_or(0) as f64,
            _ => 0.0,
        }
    }

    /// Graph neighbours (distance exactly one) for graph kinds.
    pub fn graph_neighbors(&self, x: usize) -> Vec<usize> {
        match &self.geom {
            Geometry::Tree { adj, .. } | Geometry::Graph { adj, .. } => {
                let mut v = adj[x].clone();
                v.sort_unstable();
                v
            }
            Geometry::Lattice { .. } => self
                .ball(x, 1.0)
                .into_iter()
                .filter(|&y| y != x)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// `V(x, r) = Σ_{d(x,y) ≤ r} μ(y)`.
    pub fn ball_volume(&self, x: usize, r: f64) -> f64 {
        numeric::compensated_sum(self.ball(x, r).into_iter().map(|y| self.mass[y]))
    }

    /// Closed-form `V(x, r)` for one-dimensional radial weights, integrated over
    /// the part of the ball covered by grid cells.
    pub fn ball_volume_exact(&self, x: usize, r: f64) -> Result<f64> {
        match (&self.spec, &self.geom) {
            (SpaceSpec::EuclideanRadial { dim: 1, alpha, .. }, Geometry::Grid { half, step, .. }) => {
                let c = self.coords(x)[0];
                let edge = (*half as f64 + 0.5) * step;
                let lo = (c - r).max(-edge);
                let hi = (c + r).min(edge);
                Ok(radial_integral(*alpha, lo, hi))
            }
            _ => Err(Error::InvalidParameter(
                "exact volumes exist only for one-dimensional radial weights".into(),
            )),
        }
    }

    pub fn volume_profile(&self, x: usize, radii: &[f64]) -> VolumeProfile {
        let margin = self.margin(x);
        VolumeProfile {
            center: x,
            radii: radii.to_vec(),
            volumes: radii.iter().map(|&r| self.ball_volume(x, r)).collect(),
            truncated: radii.iter().map(|&r| r > margin + 1e-12).collect(),
        }
    }

    /// Components of the proximity graph `d ≤ b`, as a label per point.
    pub fn proximity_components(&self, b: f64) -> Vec<usize> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for w in self.ball(v, b) {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// Slack used by closed balls so grid distances at exactly `r` are not lost to round-off.
pub fn ball_tolerance(r: f64) -> f64 {
    1e-9 * r.max(1.0)
}

/// `d ≤ r` with the closed-ball slack of [`Space::ball`].
pub fn within_radius(d: f64, r: f64) -> bool {
    d <= r + ball_tolerance(r)
}

/// `∫_lo^hi (1+t²)^{α/2} dt`.
pub fn radial_integral(alpha: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if alpha == 0.0 {
        return hi - lo;
    }
    if alpha == 2.0 {
        return (hi + hi.powi(3) / 3.0) - (lo + lo.powi(3) / 3.0);
    }
    numeric::integrate(|t| (1.0 + t * t).powf(alpha / 2.0), lo, hi, 0.25)
}

fn check_grid(window: f64, step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter("resolution must be positive".into()));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::InvalidParameter("window radius must be positive".into()));
    }
    if step > window / 10.0 + 1e-12 {
        return Err(Error::InvalidParameter(
            "resolution must be at most window/10".into(),
        ));
    }
    Ok(())
}

fn increment(k: &mut [i64], lo: i64, hi: i64) {
    for c in k.iter_mut().rev() {
        if *c < hi {
            *c += 1;
            return;
        }
        *c = lo;
    }
}

fn increment_box(k: &mut [i64], lo: &[i64], hi: &[i64]) -> bool {
    for i in (0..k.len()).rev() {
        if k[i] < hi[i] {
            k[i] += 1;
            return true;
        }
        k[i] = lo[i];
    }
    false
}

fn grid_coords(x: usize, dim: usize, half: i64) -> Vec<i64> {
    let side = (2 * half + 1) as usize;
    let mut out = vec![0i64; dim];
    let mut rest = x;
    for i in (0..dim).rev() {
        out[i] = (rest % side) as i64 - half;
        rest /= side;
    }
    out
}

fn grid_index(k: &[i64], half: i64) -> usize {
    let side = (2 * half + 1) as usize;
    k.iter()
        .fold(0usize, |acc, c| acc * side + (c + half) as usize)
}

fn lattice_coords(x: usize, dim: usize, side: usize) -> Vec<usize> {
    let mut out = vec![0usize; dim];
    let mut rest = x;
    for i in (0..dim).rev() {
        out[i] = rest % side;
        rest /= side;
    }
    out
}

fn lattice_index(c: &[usize], side: usize) -> usize {
    c.iter().fold(0usize, |acc, v| acc * side + v)
}

fn bfs_ball(adj: &[Vec<usize>], x: usize, reach: u32) -> Vec<usize> {
    let mut seen = vec![x];
    let mut frontier = vec![(x, usize::MAX)];
    for _ in 0..reach {
        let mut next = Vec::new();
        for (v, from) in frontier {
            for &w in &adj[v] {
                if w != from {
                    next.push((w, v));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        seen.extend(next.iter().map(|(w, _)| *w));
        frontier = next;
    }
    seen.sort_unstable();
    seen
}

fn graph_metric(g: &GraphData) -> Result<(Vec<Vec<usize>>, Vec<u32>)> {
    let n = g.weights.len();
    if n > GRAPH_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "graph has {n} vertices; all-pairs metric is limited to {GRAPH_LIMIT}"
        )));
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &g.edges {
        if a >= n || b >= n {
            return Err(Error::PointOutOfRange(a.max(b)));
        }
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
    }
    let mut dist = vec![UNREACHABLE; n * n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        let row = &mut dist[s * n..(s + 1) * n];
        row[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            let dv = row[v];
            for &w in &adj[v] {
                if row[w] == UNREACHABLE {
                    row[w] = dv + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    Ok((adj, dist))
}

/// Per-radius doubling ratios `C_D(r) = max_x V(x,2r)/V(x,r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoublingProfile {
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub truncated: Vec<bool>,
    /// `log₂ max_r C_D(r)`.
    pub delta_hat: f64,
    /// Largest excess of `V(x,r)/V(x,s)` over `C_b (r/s)^δ̂`, as a ratio (0 when none).
    pub vd1_violation: f64,
    /// Reverse-doubling slope over the same radii.
    pub gamma_hat: f64,
    pub verdict: bool,
}

/// Growth of `C_D` across the radius sweep above which large-scale doubling is rejected.
pub const DOUBLING_GROWTH_LIMIT: f64 = 1.5;
/// Reverse-doubling slope at or below which volume growth counts as saturated.
pub const REVERSE_DOUBLING_FLOOR: f64 = 0.1;

pub fn doubling_profile(space: &Space, centers: &[usize], radii: &[f64]) -> Result<DoublingProfile> {
    if centers.is_empty() {
        return Err(Error::InvalidParameter("empty centers list".into()));
    }
    if radii.is_empty() {
        return Err(Error::InvalidParameter("empty radius grid".into()));
    }
    for &c in centers {
        if c >= space.len() {
            return Err(Error::PointOutOfRange(c));
        }
    }
    let mut ratios = Vec::with_capacity(radii.len());
    let mut truncated = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut worst = 0.0f64;
        let mut trunc = false;
        for &x in centers {
            let v1 = space.ball_volume(x, r);
            let v2 = space.ball_volume(x, 2.0 * r);
            worst = worst.max(v2 / v1);
            trunc |= 2.0 * r > space.margin(x) + 1e-12;
        }
        ratios.push(worst);
        truncated.push(trunc);
    }
    let cb = ratios.iter().copied().fold(0.0, f64::max);
    let delta_hat = cb.log2();
    let mut vd1_violation = 0.0f64;
    for &x in centers {
        let vols: Vec<f64> = radii.iter().map(|&r| space.ball_volume(x, r)).collect();
        for i in 0..radii.len() {
            for j in 0..radii.len() {
                if radii[i] < radii[j] {
                    let bound = cb * (radii[j] / radii[i]).powf(delta_hat);
                    let excess = vols[j] / vols[i] / bound - 1.0;
                    vd1_violation = vd1_violation.max(excess);
                }
            }
        }
    }
    let gamma_hat = if radii.len() >= 2 {
        centers
            .iter()
            .filter_map(|&x| {
                let vols: Vec<f64> = radii.iter().map(|&r| space.ball_volume(x, r)).collect();
                numeric::loglog_slope(radii, &vols)
            })
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::NAN
    };
    let first = ratios[0];
    let last = *ratios.last().unwrap();
    let growing = last > DOUBLING_GROWTH_LIMIT * first;
    let saturated = gamma_hat.is_finite() && gamma_hat <= REVERSE_DOUBLING_FLOOR;
    Ok(DoublingProfile {
        radii: radii.to_vec(),
        ratios,
        truncated,
        delta_hat,
        vd1_violation,
        gamma_hat,
        verdict: !growing && !saturated,
    })
}

/// Least-squares growth exponent of `log V` against `log r`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReverseDoubling {
    /// Smallest slope across centres.
    pub gamma_hat: f64,
    /// Worst constant `min V(x,r)/V(x,s) / (r/s)^γ̂` over radius pairs.
    pub c_hat: f64,
    /// Set when the largest radius exceeds `window_diameter / 5`.
    pub truncated: bool,
}

pub fn reverse_doubling(space: &Space, centers: &[usize], radii: &[f64], b: f64) -> Result<ReverseDoubling> {
    if radii.len() < 3 {
        return Err(Error::InvalidParameter("need at least 3 radii".into()));
    }
    if centers.is_empty() {
        return Err(Error::InvalidParameter("empty centers list".into()));
    }
    let rmin = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    if b > rmin {
        return Err(Error::Precondition(format!(
            "scale b = {b} exceeds the smallest radius {rmin}"
        )));
    }
    let mut gamma_hat = f64::INFINITY;
    let mut per_center = Vec::new();
    for &x in centers {
        let vols: Vec<f64> = radii.iter().map(|&r| space.ball_volume(x, r)).collect();
        let slope = numeric::loglog_slope(radii, &vols)
            .ok_or_else(|| Error::InvalidParameter("degenerate radius grid".into()))?;
        gamma_hat = gamma_hat.min(slope);
        per_center.push(vols);
    }
    let mut c_hat = f64::INFINITY;
    for vols in &per_center {
        for i in 0..radii.len() {
            for j in 0..radii.len() {
                if radii[i] < radii[j] {
                    let c = vols[j] / vols[i] / (radii[j] / radii[i]).powf(gamma_hat);
                    c_hat = c_hat.min(c);
                }
            }
        }
    }
    Ok(ReverseDoubling {
        gamma_hat,
        c_hat,
        truncated: rmax > space.window_diameter() / 5.0 + 1e-12,
    })
}
