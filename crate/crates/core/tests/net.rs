use heatlab::net::{audit_net, audit_quasi_isometry, build_net, find_chain, from_net, to_net, Net};
use heatlab::{Error, GraphData, Space, SpaceSpec};
use proptest::prelude::*;
use std::collections::VecDeque;

fn lattice(dim: usize, side: usize) -> Space {
    Space::build(SpaceSpec::Lattice { dim, side }).unwrap()
}

fn broken(step: f64) -> Space {
    Space::build(SpaceSpec::BrokenLine { window: 5.25, step }).unwrap()
}

// Greedy maximal separated set, written out longhand.
fn greedy_oracle(s: &Space, eps: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for p in 0..s.len() {
        if chosen.iter().all(|&q| s.dist(p, q) > eps) {
            chosen.push(p);
        }
    }
    chosen
}

fn hop_oracle(n: usize, edges: &[(usize, usize)], from: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut d = vec![usize::MAX; n];
    d[from] = 0;
    let mut q = VecDeque::from([from]);
    while let Some(v) = q.pop_front() {
        for &w in &adj[v] {
            if d[w] == usize::MAX {
                d[w] = d[v] + 1;
                q.push_back(w);
            }
        }
    }
    d
}

fn check_invariants(s: &Space, net: &Net) {
    let eps = net.eps;
    assert_eq!(net.vertices, greedy_oracle(s, eps));
    for (i, &u) in net.vertices.iter().enumerate() {
        for (j, &v) in net.vertices.iter().enumerate().skip(i + 1) {
            let d = s.dist(u, v);
            assert!(d > eps);
            let edge = net.edges.contains(&(i, j));
            assert_eq!(edge, d <= 3.0 * eps + 1e-9, "edge rule at {u},{v}");
        }
    }
    for p in 0..s.len() {
        assert!(net.vertices.iter().any(|&v| s.dist(p, v) <= eps + 1e-9));
    }
    for (i, &v) in net.vertices.iter().enumerate() {
        let vol: f64 = (0..s.len()).filter(|&y| s.dist(v, y) <= eps + 1e-9).map(|y| s.mass(y)).sum();
        assert!((net.m[i] - vol).abs() <= 1e-9 * vol);
        assert!(net.m[i] > 0.0);
    }
}

#[test]
fn path_net_by_hand() {
    let s = lattice(1, 10);
    let net = build_net(&s, 1.0).unwrap();
    check_invariants(&s, &net);
    assert_eq!(net.vertices, vec![0, 2, 4, 6, 8]);
    assert_eq!(net.edges, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    assert_eq!(net.m, vec![2.0, 3.0, 3.0, 3.0, 3.0]);

    let audit = audit_net(&s, &net, 10_000, 2.0, 0);
    assert!(audit.structural_ok());
    assert!(audit.connected);
    assert_eq!(audit.max_degree, 2);
    assert!(audit.a_hat <= 2.0);
    // exhaustive overlap with closed balls
    let overlap = (0..s.len())
        .map(|p| net.vertices.iter().filter(|&&v| s.dist(p, v) <= 2.0).count())
        .max()
        .unwrap();
    assert_eq!(audit.overlap, overlap);
}

#[test]
fn broken_line_net_is_connected() {
    let s = broken(0.01);
    let net = build_net(&s, 0.6).unwrap();
    check_invariants(&s, &net);
    let audit = audit_net(&s, &net, 10_000, 1.2, 3);
    assert!(audit.structural_ok());
    assert!(audit.connected);
    assert!(audit.a_hat <= 6.0, "A = {}", audit.a_hat);
    let hops = hop_oracle(net.len(), &net.edges, 0);
    assert!(hops.iter().all(|h| *h != usize::MAX));
    for (b, &h) in hops.iter().enumerate() {
        assert_eq!(net.graph_dist(0, b), h as f64);
        // d ≤ 3ε d_G
        assert!(s.dist(net.vertices[0], net.vertices[b]) <= 3.0 * net.eps * h as f64 + 1e-9);
    }
}

#[test]
fn oversized_eps_gives_one_vertex() {
    for s in [lattice(2, 7), broken(0.05)] {
        let net = build_net(&s, 10.0 * s.window_diameter()).unwrap();
        assert_eq!(net.len(), 1);
        assert!(net.edges.is_empty());
        let audit = audit_net(&s, &net, 100, 1.0, 0);
        assert_eq!(audit.max_degree, 0);
        assert!(audit.connected);
        let f = from_net(&s, &net, &[-2.5]).unwrap();
        assert!(f.iter().all(|v| *v == -2.5));
    }
}

#[test]
fn lattice_net_degree() {
    let s = lattice(2, 51);
    let net = build_net(&s, 2.0).unwrap();
    check_invariants(&s, &net);
    let audit = audit_net(&s, &net, 10_000, 4.0, 1);
    assert!(audit.structural_ok());
    let degree_oracle = (0..net.len())
        .map(|a| net.vertices.iter().filter(|&&v| v != net.vertices[a] && s.dist(net.vertices[a], v) <= 6.0).count())
        .max()
        .unwrap();
    assert_eq!(audit.max_degree, degree_oracle);
    assert!(audit.max_degree <= 48);
}

#[test]
fn scale_below_resolution_is_rejected() {
    assert!(matches!(build_net(&broken(0.05), 0.06), Err(Error::BelowResolution { .. })));
    assert!(build_net(&lattice(1, 4), 0.0).is_err());
}

#[test]
fn chains_on_the_broken_line() {
    let s = broken(0.05);
    let (x, y1, y2) = (s.locate(&[0.0]), s.locate(&[1.0]), s.locate(&[2.0]));
    assert!(matches!(find_chain(&s, 0.4, x, y1), Err(Error::NoChain { .. })));
    let c = find_chain(&s, 0.6, x, y2).unwrap();
    // BFS oracle on the 0.6-proximity graph
    let edges: Vec<(usize, usize)> = (0..s.len())
        .flat_map(|a| (a + 1..s.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| s.dist(a, b) <= 0.6 + 1e-9)
        .collect();
    let hops = hop_oracle(s.len(), &edges, x);
    assert_eq!(c.hops(), hops[y2]);
    assert!(c.hops() <= 8);
    assert_eq!(c.points.first(), Some(&x));
    assert_eq!(c.points.last(), Some(&y2));
    for w in c.points.windows(2) {
        assert!(s.dist(w[0], w[1]) <= 0.6 + 1e-9);
    }
    let len: f64 = c.points.windows(2).map(|w| s.dist(w[0], w[1])).sum();
    assert!((c.length - len).abs() < 1e-12);

    let same = find_chain(&s, 0.6, x, x).unwrap();
    assert_eq!(same.points, vec![x]);
    assert_eq!(same.length, 0.0);
}

#[test]
fn transfers() {
    let s = lattice(1, 10);
    let net = build_net(&s, 1.0).unwrap();
    assert!(to_net(&s, &net, &[4.0; 10]).iter().all(|v| *v == 4.0));
    assert!(from_net(&s, &net, &[4.0; 5]).unwrap().iter().all(|v| *v == 4.0));
    let g: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let gt = to_net(&s, &net, &g);
    for (a, &v) in net.vertices.iter().enumerate().skip(1) {
        assert_eq!(gt[a], v as f64);
    }
    let mut cell = vec![0.0; 10];
    cell[5] = 1.0;
    let ct = to_net(&s, &net, &cell);
    for (a, &v) in net.vertices.iter().enumerate() {
        let want = if s.dist(v, 5) <= 1.0 { s.mass(5) / net.m[a] } else { 0.0 };
        assert_eq!(ct[a], want);
    }
}

#[test]
fn round_trip_is_controlled_by_local_oscillation() {
    let s = lattice(2, 30);
    let net = build_net(&s, 2.0).unwrap();
    let f: Vec<f64> = (0..net.len())
        .map(|a| {
            let c = s.coords(net.vertices[a]);
            (0.3 * c[0]).sin() + 0.1 * c[1]
        })
        .collect();
    let back = to_net(&s, &net, &from_net(&s, &net, &f).unwrap());
    for (a, &v) in net.vertices.iter().enumerate() {
        let near: Vec<f64> = (0..net.len())
            .filter(|&b| s.dist(v, net.vertices[b]) <= 4.0 * net.eps)
            .map(|b| f[b])
            .collect();
        let osc = near.iter().cloned().fold(f64::MIN, f64::max) - near.iter().cloned().fold(f64::MAX, f64::min);
        assert!((back[a] - f[a]).abs() <= 2.0 * osc + 1e-12);
    }
}

#[test]
fn quasi_isometries() {
    let s = lattice(2, 8);
    let id: Vec<usize> = (0..s.len()).collect();
    let q = audit_quasi_isometry(&id, &s, &s, 0.0, 10_000, 0).unwrap();
    assert_eq!((q.a_hat, q.b_hat, q.c_hat), (1.0, 0.0, 1.0));

    // inclusion of a net into its parent
    let net = build_net(&s, 1.0).unwrap();
    let audit = audit_net(&s, &net, 10_000, 2.0, 0);
    let q = audit_quasi_isometry(&net.vertices, net.graph(), &s, net.eps, 10_000, 0).unwrap();
    assert!(q.surjective);
    assert!(q.a_hat <= (3.0 * net.eps).max(audit.a_hat) + 1e-12);

    // Z-path onto the broken-line components, n ↦ the point at n
    let bl = broken(0.05);
    let path = lattice(1, 11);
    let map: Vec<usize> = (0..11).map(|n| bl.locate(&[n as f64 - 5.0])).collect();
    let q = audit_quasi_isometry(&map, &path, &bl, 0.3, 10_000, 0).unwrap();
    assert!(q.a_hat <= 1.5 && q.b_hat <= 0.5, "a = {}, b = {}", q.a_hat, q.b_hat);
    assert!(q.surjective);
    // each image sits within half a cell of the integer
    for &(d1, d2) in &q.pairs {
        assert!((d1 - d2).abs() <= 0.05 + 1e-9);
    }
    let q = audit_quasi_isometry(&map, &path, &bl, 0.1, 10_000, 0).unwrap();
    assert!(!q.surjective);
    let w = q.witness.unwrap();
    assert!(map.iter().all(|&y| bl.dist(w, y) > 0.1));
}

#[test]
fn export_round_trip() {
    let s = lattice(2, 9);
    let net = build_net(&s, 2.0).unwrap();
    let text = net.to_text();
    assert!(text.starts_with("# eps 2\n"));
    assert_eq!(GraphData::parse(&text).unwrap(), net.to_graph_data());
    assert_eq!(build_net(&s, 2.0).unwrap().to_text(), text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nets_satisfy_invariants(side in 2usize..14, dim in 1usize..3, eps in 1.0f64..5.0) {
        let s = lattice(dim, side);
        let net = build_net(&s, eps).unwrap();
        check_invariants(&s, &net);
        let audit = audit_net(&s, &net, 2_000, 2.0 * eps, 5);
        prop_assert!(audit.structural_ok());
        prop_assert!(audit.connected);
        let x: Vec<f64> = (0..net.len()).map(|a| (a as f64).cos()).collect();
        let lifted = from_net(&s, &net, &x).unwrap();
        let lo = x.iter().cloned().fold(f64::MAX, f64::min);
        let hi = x.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(lifted.iter().all(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12));
    }
}
