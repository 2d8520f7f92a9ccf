use heatlab::kernel::{annulus_walk, ball_walk, srw, GreenStatus, KernelDump};
use heatlab::space::radial_integral;
use heatlab::{Error, GraphData, Kernel, Space, SpaceSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lattice(dim: usize, side: usize) -> Space {
    Space::build(SpaceSpec::Lattice { dim, side }).unwrap()
}

fn k2() -> Space {
    Space::from_graph(GraphData::path(2)).unwrap()
}

// Markov matrix A(x,y) = p(x,y) m(y), so that (Pf) = A f.
fn operator(k: &Kernel) -> DMatrix<f64> {
    let n = k.len();
    DMatrix::from_fn(n, n, |x, y| k.p(x, y) * k.m()[y])
}

fn dense_row(a: &DMatrix<f64>, m: &[f64], x: usize, n: usize) -> Vec<f64> {
    let an = a.pow(n as u32);
    (0..m.len()).map(|y| an[(x, y)] / m[y]).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_graph(seed: u64, n: usize) -> Space {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    for _ in 0..n {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b && !edges.contains(&(a.min(b), a.max(b))) && !edges.contains(&(a.max(b), a.min(b))) {
            edges.push((a.min(b), a.max(b)));
        }
    }
    let weights = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    Space::from_graph(GraphData { weights, edges }).unwrap()
}

#[test]
fn integer_ball_walk_entries() {
    let s = lattice(1, 21);
    let k = ball_walk(&s, 1.0).unwrap();
    for x in 2..19 {
        assert_eq!(k.m()[x], 3.0);
        for y in x - 1..=x + 1 {
            assert!((k.p(x, y) - 1.0 / 9.0).abs() < 1e-15);
        }
        assert_eq!(k.p(x, (x + 2) % 21), 0.0);
    }
    let sums = k.row_sums();
    for x in 1..20 {
        assert!((sums[x] - 1.0).abs() <= 1e-12);
    }
    assert!(sums[0] < 1.0 || k.deficient_rows().is_empty());
}

#[test]
fn broken_line_walk_stays_in_its_component() {
    let s = Space::build(SpaceSpec::BrokenLine { window: 5.25, step: 0.05 }).unwrap();
    let k = ball_walk(&s, 0.4).unwrap();
    for (x, y, v) in k.entries() {
        if v > 0.0 {
            assert_eq!(s.coords(x)[0].round(), s.coords(y)[0].round());
        }
    }
    let o = s.locate(&[0.0]);
    let row = k.iterate(o, 40).unwrap();
    for (y, v) in row.values.iter().enumerate() {
        if *v != 0.0 {
            assert!(s.coords(y)[0].abs() <= 0.25 + 1e-12);
        }
    }
    assert!((row.mass - 1.0).abs() <= 40.0 * 1e-12);
}

#[test]
fn radial_ball_walk_measure_is_comparable_to_doubled_weight() {
    let (alpha, h, rho) = (1.0, 0.5, 0.05);
    let s = Space::build(SpaceSpec::EuclideanRadial {
        dim: 1,
        alpha,
        window: 20.0,
        step: rho,
    })
    .unwrap();
    let k = ball_walk(&s, h).unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for x in 0..s.len() {
        if s.margin(x) < h {
            continue;
        }
        let t = s.coords(x)[0];
        // V(x,h) by the closed-form integral, up to the closed-ball endpoint cells
        let v = radial_integral(alpha, t - h, t + h);
        let vol = k.m()[x] / s.mass(x);
        let dens = |u: f64| (1.0 + u * u).powf(alpha / 2.0);
        assert!((vol - v).abs() <= 2.0 * rho * dens(t.abs() + h), "at {t}");
        let ratio = k.m()[x] / (rho * (1.0 + t * t).powf(alpha));
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    // m(x) ≈ 2h (1+x²)^α ρ, the μ_{2α} density up to constants
    assert!(lo > 0.5 * 2.0 * h && hi < 2.0 * 2.0 * h, "ratio band [{lo}, {hi}]");
}

#[test]
fn lazy_kernels() {
    let k = srw(&k2()).unwrap();
    assert_eq!((k.p(0, 0), k.p(0, 1), k.p(1, 1)), (0.0, 1.0, 0.0));
    assert_eq!(k.m(), &[1.0, 1.0]);
    let two = k.iterate(0, 2).unwrap().values;
    assert_eq!(two, vec![1.0, 0.0]);

    let l = k.lazy();
    let eig = operator(&l).symmetric_eigen().eigenvalues;
    let mut e: Vec<f64> = eig.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    assert!(e[0].abs() < 1e-15 && (e[1] - 1.0).abs() < 1e-15);
    let e0 = operator(&k).symmetric_eigen().eigenvalues;
    assert!(e0.iter().any(|v| (v + 1.0).abs() < 1e-15));

    let s = random_graph(3, 25);
    let k = srw(&s).unwrap();
    let ll = k.lazy().lazy();
    for x in 0..s.len() {
        assert!(ll.p(x, x) >= 0.75 / ll.m()[x] - 1e-15);
    }
    let (a, b) = (k.row_sums(), k.lazy().row_sums());
    assert!(max_diff(&a, &b) <= 1e-15);
}

#[test]
fn annulus_walk_needs_two_steps() {
    let s = Space::build(SpaceSpec::EuclideanRadial {
        dim: 1,
        alpha: 0.0,
        window: 12.0,
        step: 0.1,
    })
    .unwrap();
    let k = annulus_walk(&s, 0.5, 1.0, 2.0).unwrap();
    let o = s.locate(&[0.0]);
    assert_eq!(k.p(o, o), 0.0);
    let p2 = k.iterate(o, 2).unwrap().values;
    assert!(p2[o] > 0.0);
    // one convolution step by hand
    let want: f64 = (0..s.len()).map(|z| k.p(o, z) * k.p(z, o) * k.m()[z]).sum();
    assert!((p2[o] - want).abs() <= 1e-15 * want.max(1.0));
    let audit = k.audit_compat(&s, 0.5, 2.0).unwrap();
    assert_eq!(audit.c1_hat, 0.0);
    assert!(!audit.pass());
    let audit2 = k.square().audit_compat(&s, 0.5, 4.0).unwrap();
    assert!(audit2.c1_hat > 0.0);

    let tiny = lattice(1, 3);
    assert!(matches!(annulus_walk(&tiny, 1.0, 5.0, 6.0), Err(Error::EmptyAnnulus(_))));
}

#[test]
fn iterates_match_dense_powers() {
    for seed in 0..4 {
        let s = random_graph(seed, 30);
        let k = srw(&s).unwrap();
        let a = operator(&k);
        for n in [1, 2, 5, 13] {
            for x in [0, 7, 29] {
                let row = k.iterate(x, n).unwrap();
                let want = dense_row(&a, k.m(), x, n);
                assert!(max_diff(&row.values, &want) <= 1e-12);
                assert!((row.mass - 1.0).abs() <= n as f64 * 1e-12);
            }
        }
        assert_eq!(k.iterate(0, 1).unwrap().values, k.row(0));
    }
    assert!(k2_non_lazy_parity());
}

fn k2_non_lazy_parity() -> bool {
    let k = srw(&k2()).unwrap();
    let l = k.lazy();
    (1..12).all(|n| {
        let back = k.iterate(0, n).unwrap().values[0];
        let lazy_back = l.iterate(0, n).unwrap().values[0];
        (back == 1.0) == (n % 2 == 0) && lazy_back > 0.0
    })
}

#[test]
fn killed_chains() {
    let s = lattice(1, 11);
    let k = srw(&s).unwrap();
    let whole = k.restrict_to((0..11).collect());
    for n in 1..6 {
        assert!(max_diff(&whole.iterate(5, n).unwrap(), &k.iterate(5, n).unwrap().values) < 1e-15);
    }
    let dk = k.restrict(&s, 5, 2.0).unwrap();
    assert_eq!(dk.members, vec![3, 4, 5, 6, 7]);
    // dense oracle: the restricted block of A
    let a = operator(&k);
    let ab = a.select_rows(dk.members.iter()).select_columns(dk.members.iter());
    let m: Vec<f64> = dk.members.iter().map(|&g| k.m()[g]).collect();
    let i = dk.local(5).unwrap();
    let mut prev = f64::INFINITY;
    for n in 1..12 {
        let got = dk.iterate(5, n).unwrap();
        assert!(max_diff(&got, &dense_row(&ab, &m, i, n)) < 1e-14);
        let full = k.iterate(5, n).unwrap().values;
        for (j, &g) in dk.members.iter().enumerate() {
            assert!(got[j] <= full[g] + 1e-15);
        }
        let mass = dk.mass(&got);
        assert!(mass <= prev + 1e-15);
        prev = mass;
    }
    // two-step loops from the centre never leave B; from its edge they can
    assert_eq!(dk.iterate(5, 2).unwrap()[i], k.iterate(5, 2).unwrap().values[5]);
    let e = dk.local(3).unwrap();
    assert!(dk.iterate(3, 2).unwrap()[e] < k.iterate(3, 2).unwrap().values[3]);
    assert!(matches!(k.restrict(&s, 5, -1.0), Err(Error::EmptyBall { .. })));
    let grid = Space::build(SpaceSpec::EuclideanRadial {
        dim: 1,
        alpha: 0.0,
        window: 3.0,
        step: 0.1,
    })
    .unwrap();
    let kg = ball_walk(&grid, 0.5).unwrap();
    let c = grid.locate(&[0.0]);
    assert!(matches!(kg.restrict(&grid, c, 3.5), Err(Error::OutsideWindow { .. })));
}

#[test]
fn heat_kernel_h_matches_binomial_sum() {
    let s = random_graph(9, 20);
    let k = srw(&s).unwrap();
    let a = operator(&k);
    for n in [0usize, 1, 4, 9, 20] {
        let h = k.hk(2, n).unwrap().values;
        let mut want = vec![0.0; s.len()];
        for i in 0..=n {
            let c = (0..i).fold(1.0, |c, j| c * (n - j) as f64 / (j + 1) as f64) / 2f64.powi(n as i32);
            for (w, v) in want.iter_mut().zip(dense_row(&a, k.m(), 2, i + 2)) {
                *w += c * v;
            }
        }
        assert!(max_diff(&h, &want) <= 1e-10, "n = {n}");
    }
    assert_eq!(k.hk(2, 0).unwrap().values, k.iterate(2, 2).unwrap().values);

    // h_{2n} ≥ c₃ p_{n+1} on a compatible kernel
    let lb = ball_walk(&lattice(1, 15), 1.0).unwrap();
    let mut worst = f64::INFINITY;
    for n in 1..=30 {
        for x in 0..15 {
            let h = lb.hk(x, 2 * n).unwrap().values;
            let p = lb.iterate(x, n + 1).unwrap().values;
            for y in 0..15 {
                if p[y] > 0.0 {
                    worst = worst.min(h[y] / p[y]);
                }
            }
        }
    }
    assert!(worst > 0.0 && worst.is_finite(), "c₃ = {worst}");
}

#[test]
fn dirichlet_green_matches_resolvent() {
    let s = lattice(1, 11);
    let k = srw(&s).unwrap();
    let dk = k.restrict(&s, 5, 1.0).unwrap();
    assert_eq!(dk.members, vec![4, 5, 6]);
    let g = dk.green(5, 1e-13, 100_000).unwrap();
    assert_eq!(g.status, GreenStatus::Converged);
    let a = operator(&k);
    let ab = a.select_rows(dk.members.iter()).select_columns(dk.members.iter());
    let res = (DMatrix::identity(3, 3) - &ab).try_inverse().unwrap() - DMatrix::identity(3, 3);
    let i = dk.local(5).unwrap();
    for j in 0..3 {
        let want = res[(i, j)] / dk.m()[j];
        assert!((g.sums[j] - want).abs() <= 1e-9);
    }
}

#[test]
fn full_space_green_sums() {
    let s = lattice(3, 41);
    let k = ball_walk(&s, 1.0).unwrap();
    let o = s.locate(&[20.0, 20.0, 20.0]);
    let g = k.green(o, 1e-3, 400).unwrap();
    assert!(g.decay_exponent.unwrap() > 1.0);
    assert!(g.tail.is_finite());

    let path = lattice(1, 4001);
    let k = ball_walk(&path, 1.0).unwrap();
    let g = k.green(2000, 1e-6, 400).unwrap();
    assert_eq!(g.status, GreenStatus::NoConvergence);
    assert!(g.clone().into_result().is_err());
    // G_N(x,x) grows like √N: compare 100 and 400 steps
    let short = k.green(2000, 1e-6, 100).unwrap();
    let growth = g.sums[2000] / short.sums[2000];
    assert!((growth - 2.0).abs() < 0.15, "growth {growth}");
}

#[test]
fn compatibility_audits() {
    let s = lattice(1, 41);
    let k = ball_walk(&s, 1.0).unwrap();
    let a = k.audit_compat(&s, 1.0, 1.0).unwrap();
    assert!(a.pass());
    // p = 1/9, V_m(x,1) = 9
    assert!((a.c1_hat - 1.0).abs() < 1e-12 && (a.big_c1_hat - 1.0).abs() < 1e-12);
    assert!(a.alpha_hat > 0.0);
    assert!(a.pcomp_hat > 0.0);
    let l = k.lazy().audit_compat(&s, 1.0, 1.0).unwrap();
    assert!(l.alpha_hat >= 0.5 * a.alpha_hat - 1e-12);
    assert!(matches!(k.audit_compat(&s, 2.0, 1.0), Err(Error::Precondition(_))));
}

#[test]
fn forms() {
    let k = srw(&k2()).unwrap();
    let f = k.forms(&[1.0, -1.0]);
    assert_eq!(f.energy, 4.0);
    assert_eq!(f.energy_inner, 4.0);
    assert_eq!(f.energy_star, 0.0);
    let c = k.forms(&[2.0, 2.0]);
    assert_eq!((c.energy, c.energy_star), (0.0, 0.0));

    let s = random_graph(5, 30);
    let k = srw(&s).unwrap();
    let a = operator(&k);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let f: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fv = nalgebra::DVector::from_vec(f.clone());
        let pf = &a * &fv;
        let norm = |v: &nalgebra::DVector<f64>| (0..30).map(|i| v[i] * v[i] * k.m()[i]).sum::<f64>();
        let forms = k.forms(&f);
        assert!((forms.energy_star - (norm(&fv) - norm(&pf))).abs() <= 1e-11);
        assert!((forms.energy - forms.energy_inner).abs() <= 1e-11);
        assert!(forms.energy_star <= 2.0 * forms.energy + 1e-12);
        assert!(forms.energy <= 2.0 * norm(&fv) + 1e-12);
        assert!(k.integration_by_parts_residual(&f, &g).unwrap() <= 1e-10);
        let gx: f64 = (0..30)
            .map(|y| (f[y] - f[3]).powi(2) * k.p(3, y) * k.m()[y])
            .sum::<f64>()
            .sqrt();
        assert!((k.grad(&f, 3) - gx).abs() < 1e-12);
    }

    let path = lattice(1, 20);
    let k = ball_walk(&path, 1.0).unwrap();
    let mut edge = vec![0.0; 20];
    edge[0] = 1.0;
    assert!(matches!(k.dirichlet_forms(&edge), Err(Error::Support(_))));
}

#[test]
fn kernel_dump_round_trip() {
    let s = random_graph(2, 12);
    let k = srw(&s).unwrap();
    let text = k.to_text();
    assert!(text.starts_with("kernel 12 "));
    let back = KernelDump::parse(&text).unwrap();
    let k2 = back.into_kernel(&s, 1.0, 1.0).unwrap();
    for x in 0..12 {
        for y in 0..12 {
            assert_eq!(k.p(x, y), k2.p(x, y));
        }
    }
    assert!(KernelDump::parse("kernel 2 1\nm 0 1\nm 1 1\np 0 5 1\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_laws(seed in 0u64..1000, n in 4usize..25, a in 1usize..5, b in 1usize..5) {
        let s = random_graph(seed, n);
        let k = srw(&s).unwrap();
        let m = k.m().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pf = k.apply(&f);
        let lp = |v: &[f64], p: i32| (0..n).map(|i| v[i].abs().powi(p) * m[i]).sum::<f64>().powf(1.0 / p as f64);
        prop_assert!(lp(&pf, 1) <= lp(&f, 1) + 1e-12);
        prop_assert!(lp(&pf, 2) <= lp(&f, 2) + 1e-12);
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        prop_assert!(sup(&pf) <= sup(&f) + 1e-12);

        for x in 0..n {
            for y in 0..n {
                prop_assert_eq!(k.p(x, y), k.p(y, x));
            }
        }
        // Chapman–Kolmogorov
        let x = seed as usize % n;
        let lhs = k.iterate(x, a + b).unwrap().values;
        let rhs = k.apply_n(&k.iterate(x, a).unwrap().values, b);
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-11);

        // diagonal decay and Cauchy–Schwarz
        let rows: Vec<Vec<f64>> = (0..n).map(|z| k.iterate(z, 2 * a).unwrap().values).collect();
        let later: Vec<f64> = (0..n).map(|z| k.iterate(z, 2 * a + 2).unwrap().values[z]).collect();
        for z in 0..n {
            prop_assert!(later[z] <= rows[z][z] + 1e-12);
            for w in 0..n {
                prop_assert!(rows[z][w] <= (rows[z][z] * rows[w][w]).sqrt() + 1e-12);
            }
        }

        // (P − α/2)² keeps non-negative functions non-negative
        let l = k.lazy();
        let alpha = l.audit_compat(&s, 1.0, 1.0).unwrap().alpha_hat;
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let shift = |v: &[f64]| -> Vec<f64> { l.apply(v).iter().zip(v).map(|(p, q)| p - 0.5 * alpha * q).collect() };
        let out = shift(&shift(&g));
        prop_assert!(out.iter().all(|v| *v >= -1e-12));
    }
}
