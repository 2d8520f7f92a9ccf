//! ε-nets: maximal ε-separated subsets turned into weighted graphs.

use std::collections::VecDeque;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numeric;
use crate::space::{within_radius, GraphData, Space};

/// Weighted graph on a maximal ε-separated subset of a parent space.
#[derive(Clone, Debug)]
pub struct Net {
    pub eps: f64,
    /// Parent indices of the net vertices, ascending.
    pub vertices: Vec<usize>,
    /// Edges as pairs of net-vertex indices `(a, b)` with `a < b`.
    pub edges: Vec<(usize, usize)>,
    /// `m(x) = V(x, ε)` in the parent.
    pub m: Vec<f64>,
    /// Parent points of `B(x, ε)` for each vertex.
    pub cells: Vec<Vec<usize>>,
    graph: Space,
}

impl Net {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// The net as a graph space (hop metric, weights `m`).
    pub fn graph(&self) -> &Space {
        &self.graph
    }

    pub fn graph_dist(&self, a: usize, b: usize) -> f64 {
        self.graph.dist(a, b)
    }

    pub fn to_graph_data(&self) -> GraphData {
        GraphData {
            weights: self.m.clone(),
            edges: self.edges.clone(),
        }
    }

    /// Export in the graph file format with an `# eps` comment.
    pub fn to_text(&self) -> String {
        self.to_graph_data().to_text(&[format!("eps {}", self.eps)])
    }

    pub fn degree(&self, a: usize) -> usize {
        self.graph.graph_neighbors(a).len()
    }
}

/// Greedy maximal ε-separated set in index order, edges at `0 < d ≤ 3ε`.
pub fn build_net(space: &Space, eps: f64) -> Result<Net> {
    if space.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    if let Some(rho) = space.resolution() {
        if eps < 2.0 * rho - 1e-12 {
            return Err(Error::BelowResolution {
                eps,
                resolution: rho,
            });
        }
    }
    let n = space.len();
    let mut admitted = vec![false; n];
    let mut vertices = Vec::new();
    for p in 0..n {
        let blocked = space
            .ball(p, eps)
            .into_iter()
            .any(|q| admitted[q] && space.dist(p, q) <= eps);
        if !blocked {
            admitted[p] = true;
            vertices.push(p);
        }
    }
    let mut net_index = vec![usize::MAX; n];
    for (i, &v) in vertices.iter().enumerate() {
        net_index[v] = i;
    }
    let mut edges = Vec::new();
    for (a, &v) in vertices.iter().enumerate() {
        for q in space.ball(v, 3.0 * eps) {
            let b = net_index[q];
            if b != usize::MAX && b > a && space.dist(v, q) > 0.0 {
                edges.push((a, b));
            }
        }
    }
    let cells: Vec<Vec<usize>> = vertices.iter().map(|&v| space.ball(v, eps)).collect();
    let m: Vec<f64> = cells
        .iter()
        .map(|c| numeric::compensated_sum(c.iter().map(|&y| space.mass(y))))
        .collect();
    let graph = Space::from_graph(GraphData {
        weights: m.clone(),
        edges: edges.clone(),
    })?;
    Ok(Net {
        eps,
        vertices,
        edges,
        m,
        cells,
        graph,
    })
}

/// Structural certificate of a net.
#[derive(Clone, Debug, PartialEq)]
pub struct NetAudit {
    pub separated: bool,
    pub covering: bool,
    pub edge_rule: bool,
    /// `{B(x, ε/2)}` pairwise disjoint.
    pub disjoint: bool,
    /// Every parent point sees `Σ_x θ_x = 1` exactly.
    pub partition_of_unity: bool,
    pub max_degree: usize,
    /// `N̂(δ) = max_p |{x ∈ X : d(x,p) ≤ δ}|` over parent points.
    pub overlap: usize,
    /// `min 3ε·d_G/d` over probed pairs; at least 1 by construction.
    pub lower: f64,
    /// Smallest `A` with `d_G ≤ A·d + A` on probed pairs.
    pub a_hat: f64,
    pub connected: bool,
    pub pairs_probed: usize,
}

impl NetAudit {
    pub fn structural_ok(&self) -> bool {
        self.separated
            && self.covering
            && self.edge_rule
            && self.disjoint
            && self.partition_of_unity
            && self.lower >= 1.0 - 1e-12
    }
}

/// Verify the structural net properties and fit the metric comparison constants.
///
/// All vertex pairs are probed when there are at most `probe_pairs` of them;
/// otherwise a seeded sample plus every edge.
pub fn audit_net(space: &Space, net: &Net, probe_pairs: usize, delta: f64, seed: u64) -> NetAudit {
    let k = net.len();
    let eps = net.eps;
    let mut separated = true;
    let mut edge_rule = true;
    let mut edge_set = std::collections::HashSet::new();
    for &(a, b) in &net.edges {
        edge_set.insert((a, b));
    }
    let mut net_index = vec![usize::MAX; space.len()];
    for (i, &v) in net.vertices.iter().enumerate() {
        net_index[v] = i;
    }
    for (a, &v) in net.vertices.iter().enumerate() {
        for q in space.ball(v, 3.0 * eps) {
            let b = net_index[q];
            if b == usize::MAX || b == a {
                continue;
            }
            let d = space.dist(v, q);
            if d <= eps {
                separated = false;
            }
            let key = (a.min(b), a.max(b));
            if (d > 0.0 && within_radius(d, 3.0 * eps)) != edge_set.contains(&key) {
                edge_rule = false;
            }
        }
    }
    for &(a, b) in &net.edges {
        let d = space.dist(net.vertices[a], net.vertices[b]);
        if !(d > 0.0 && within_radius(d, 3.0 * eps)) {
            edge_rule = false;
        }
    }

    let mut cover_count = vec![0usize; space.len()];
    for cell in &net.cells {
        for &p in cell {
            cover_count[p] += 1;
        }
    }
    let covering = cover_count.iter().all(|&c| c >= 1);
    let partition_of_unity = match from_net(space, net, &vec![1.0; k]) {
        Ok(ones) => ones.iter().all(|v| *v == 1.0),
        Err(_) => false,
    };

    let mut half_count = vec![0u32; space.len()];
    let mut disjoint = true;
    for &v in &net.vertices {
        for p in space.ball(v, eps / 2.0) {
            half_count[p] += 1;
            if half_count[p] > 1 {
                disjoint = false;
            }
        }
    }

    let max_degree = (0..k).map(|a| net.degree(a)).max().unwrap_or(0);
    let mut overlap = 0;
    for p in 0..space.len() {
        let c = space
            .ball(p, delta)
            .into_iter()
            .filter(|q| net_index[*q] != usize::MAX)
            .count();
        overlap = overlap.max(c);
    }

    let total = k * k.saturating_sub(1) / 2;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if total <= probe_pairs {
        for a in 0..k {
            for b in a + 1..k {
                pairs.push((a, b));
            }
        }
    } else {
        let mut rng = numeric::rng(seed, 0x6e6574);
        while pairs.len() < probe_pairs {
            let a = rng.random_range(0..k);
            let b = rng.random_range(0..k);
            if a != b {
                pairs.push((a.min(b), a.max(b)));
            }
        }
        pairs.extend(net.edges.iter().copied());
    }
    let mut lower = f64::INFINITY;
    let mut a_hat = 0.0f64;
    let mut connected = true;
    for &(a, b) in &pairs {
        let d = space.dist(net.vertices[a], net.vertices[b]);
        let dg = net.graph_dist(a, b);
        if !dg.is_finite() {
            connected = false;
            continue;
        }
        lower = lower.min(3.0 * eps * dg / d);
        a_hat = a_hat.max(dg / (d + 1.0));
    }
    if k > 1 {
        let comps = net.graph.proximity_components(1.0);
        connected = comps.iter().all(|&c| c == 0);
    }
    NetAudit {
        separated,
        covering,
        edge_rule,
        disjoint,
        partition_of_unity,
        max_degree,
        overlap,
        lower,
        a_hat,
        connected,
        pairs_probed: pairs.len(),
    }
}

/// A `b`-chain between two points.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub points: Vec<usize>,
    /// `Σ d(x_i, x_{i+1})`.
    pub length: f64,
    /// `hops·b / d(x,y)`; 0 for `x = y`.
    pub ratio: f64,
}

impl Chain {
    pub fn hops(&self) -> usize {
        self.points.len().saturating_sub(1)
    }
}

/// Fewest-hop chain with steps of length at most `b`.
pub fn find_chain(space: &Space, b: f64, x: usize, y: usize) -> Result<Chain> {
    if !(b > 0.0) {
        return Err(Error::InvalidParameter("b must be positive".into()));
    }
    for p in [x, y] {
        if p >= space.len() {
            return Err(Error::PointOutOfRange(p));
        }
    }
    let mut prev = vec![usize::MAX; space.len()];
    prev[x] = x;
    let mut queue = VecDeque::from([x]);
    while let Some(v) = queue.pop_front() {
        if v == y {
            break;
        }
        for w in space.ball(v, b) {
            if prev[w] == usize::MAX {
                prev[w] = v;
                queue.push_back(w);
            }
        }
    }
    if prev[y] == usize::MAX {
        return Err(Error::NoChain { b, x, y });
    }
    let mut points = vec![y];
    while *points.last().unwrap() != x {
        points.push(prev[*points.last().unwrap()]);
    }
    points.reverse();
    let length = points.windows(2).map(|w| space.dist(w[0], w[1])).sum();
    let d = space.dist(x, y);
    let hops = points.len() - 1;
    Ok(Chain {
        points,
        length,
        ratio: if d > 0.0 { hops as f64 * b / d } else { 0.0 },
    })
}

/// `g̃(x) = V(x,ε)⁻¹ Σ_{B(x,ε)} g μ`.
pub fn to_net(space: &Space, net: &Net, g: &[f64]) -> Vec<f64> {
    net.cells
        .iter()
        .zip(&net.m)
        .map(|(cell, m)| numeric::compensated_sum(cell.iter().map(|&y| g[y] * space.mass(y))) / m)
        .collect()
}

/// `f̂ = Σ_x f(x) θ_x` with the partition of unity subordinate to the ε-balls.
pub fn from_net(space: &Space, net: &Net, f: &[f64]) -> Result<Vec<f64>> {
    let mut num = vec![0.0; space.len()];
    let mut count = vec![0usize; space.len()];
    for (cell, fx) in net.cells.iter().zip(f) {
        for &p in cell {
            num[p] += fx;
            count[p] += 1;
        }
    }
    num.iter()
        .zip(&count)
        .enumerate()
        .map(|(p, (s, c))| {
            if *c == 0 {
                Err(Error::Uncovered(p))
            } else {
                Ok(s / *c as f64)
            }
        })
        .collect()
}

/// Quasi-isometry constants of a point map `φ: s1 → s2`.
#[derive(Clone, Debug, PartialEq)]
pub struct QiAudit {
    pub a_hat: f64,
    pub b_hat: f64,
    pub surjective: bool,
    /// An `s2` point farther than `epsilon_surj` from the image.
    pub witness: Option<usize>,
    /// `max` of `V₂(φx,1)/V₁(x,1)` and its inverse.
    pub c_hat: f64,
    /// Probed `(d₁, d₂)` pairs.
    pub pairs: Vec<(f64, f64)>,
}

impl QiAudit {
    /// Smallest `a ≥ 1` with `a⁻¹d₁ − b ≤ d₂ ≤ a·d₁ + b` on the probed pairs.
    pub fn a_at(&self, b: f64) -> f64 {
        a_for(&self.pairs, b)
    }
}

fn a_for(pairs: &[(f64, f64)], b: f64) -> f64 {
    let mut a = 1.0f64;
    for &(d1, d2) in pairs {
        if d1 > 0.0 && d2 > b {
            a = a.max((d2 - b) / d1);
        }
        if d1 > 0.0 {
            if d2 + b > 0.0 {
                a = a.max(d1 / (d2 + b));
            } else {
                return f64::INFINITY;
            }
        }
    }
    a
}

pub fn audit_quasi_isometry(
    map: &[usize],
    s1: &Space,
    s2: &Space,
    epsilon_surj: f64,
    probe_pairs: usize,
    seed: u64,
) -> Result<QiAudit> {
    if map.len() != s1.len() {
        return Err(Error::InvalidParameter(
            "map must be defined on every point of the source".into(),
        ));
    }
    if let Some(&bad) = map.iter().find(|&&y| y >= s2.len()) {
        return Err(Error::PointOutOfRange(bad));
    }
    let n = s1.len();
    let mut pairs = Vec::new();
    if n * n.saturating_sub(1) / 2 <= probe_pairs {
        for a in 0..n {
            for b in a + 1..n {
                pairs.push((s1.dist(a, b), s2.dist(map[a], map[b])));
            }
        }
    } else {
        let mut rng = numeric::rng(seed, 0x7169);
        while pairs.len() < probe_pairs {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                pairs.push((s1.dist(a, b), s2.dist(map[a], map[b])));
            }
        }
    }
    let bmax = pairs.iter().map(|p| p.1.max(p.0)).fold(0.0, f64::max);
    let mut best = (a_for(&pairs, 0.0), 0.0);
    let steps = 400;
    for i in 1..=steps {
        let b = bmax * i as f64 / steps as f64;
        let a = a_for(&pairs, b);
        if a + b < best.0 + best.1 {
            best = (a, b);
        }
    }
    let mut image = vec![false; s2.len()];
    for &y in map {
        image[y] = true;
    }
    let mut witness = None;
    for q in 0..s2.len() {
        let hit = s2.ball(q, epsilon_surj).into_iter().any(|y| image[y]);
        if !hit {
            witness = Some(q);
            break;
        }
    }
    let mut c_hat = 1.0f64;
    for (x, &y) in map.iter().enumerate().take(n) {
        let v1 = s1.ball_volume(x, 1.0);
        let v2 = s2.ball_volume(y, 1.0);
        c_hat = c_hat.max(v2 / v1).max(v1 / v2);
    }
    Ok(QiAudit {
        a_hat: best.0,
        b_hat: best.1,
        surjective: witness.is_none(),
        witness,
        c_hat,
        pairs,
    })
}
