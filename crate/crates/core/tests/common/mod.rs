#![allow(dead_code)]

use std::path::PathBuf;

use island_core::{Branch, Bus, BusKind, Generator, GridCase};
use nalgebra::DMatrix;
use num_complex::Complex64;

pub fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn bus(id: u32, kind: BusKind) -> Bus {
    Bus {
        id,
        kind,
        v_mag: 1.0,
        v_ang: 0.0,
        p_load: 0.0,
        q_load: 0.0,
        g_sh: 0.0,
        b_sh: 0.0,
    }
}

pub fn line(id: u32, from: u32, to: u32, r: f64, x: f64) -> Branch {
    Branch {
        id,
        from_bus: from,
        to_bus: to,
        r,
        x,
        b_ch: 0.0,
        in_service: true,
    }
}

pub fn machine(label: &str, bus: u32, p: f64, h: f64, xd: f64) -> Generator {
    Generator {
        label: label.to_string(),
        bus,
        p_set: p,
        v_set: 1.0,
        h,
        d: 0.0,
        xd_p: xd,
        mva_base: 100.0,
    }
}

/// Generators at buses 1 and 2 feeding a load at bus 3 over lines x1, x2.
pub fn star(x1: f64, x2: f64, load: (f64, f64)) -> GridCase {
    let mut b3 = bus(3, BusKind::Pq);
    b3.p_load = load.0;
    b3.q_load = load.1;
    GridCase::new(
        100.0,
        vec![bus(1, BusKind::Slack), bus(2, BusKind::Pv), b3],
        vec![line(1, 1, 3, 0.01, x1), line(2, 2, 3, 0.02, x2)],
        vec![machine("G1", 1, 0.0, 5.0, 0.25), machine("G2", 2, 0.4, 4.0, 0.3)],
    )
    .unwrap()
}

/// Machine at bus 1 against a near-infinite bus 2 over two parallel lossless
/// lines of reactance `xl` each.
pub fn smib(p: f64, xl: f64, h: f64, xd: f64) -> GridCase {
    GridCase::new(
        100.0,
        vec![bus(1, BusKind::Pv), bus(2, BusKind::Slack)],
        vec![line(1, 1, 2, 0.0, xl), line(2, 1, 2, 0.0, xl)],
        vec![machine("G1", 1, p, h, xd), machine("G2", 2, 0.0, 1e7, 1e-4)],
    )
    .unwrap()
}

/// Star network reduced by hand: each machine's transient reactance is in
/// series with its line, the load admittance sits at the centre, and
/// Y_ij = δ_ij·y_i − y_i·y_j / (Σ_k y_k + y_L).
pub fn hand_star(xd: &[f64], z_line: &[Complex64], y_load: Complex64) -> DMatrix<Complex64> {
    let y: Vec<Complex64> = xd
        .iter()
        .zip(z_line)
        .map(|(&x, z)| (Complex64::new(0.0, x) + z).inv())
        .collect();
    let total: Complex64 = y.iter().sum::<Complex64>() + y_load;
    let m = y.len();
    DMatrix::from_fn(m, m, |i, j| {
        let d = if i == j { y[i] } else { Complex64::new(0.0, 0.0) };
        d - y[i] * y[j] / total
    })
}

/// Three machines at buses 1..3, each on its own line to load bus 4.
pub fn star3() -> GridCase {
    let mut b4 = bus(4, BusKind::Pq);
    b4.p_load = 1.2;
    b4.q_load = 0.4;
    GridCase::new(
        100.0,
        vec![bus(1, BusKind::Slack), bus(2, BusKind::Pv), bus(3, BusKind::Pv), b4],
        vec![
            line(1, 1, 4, 0.01, 0.1),
            line(2, 2, 4, 0.01, 0.2),
            line(3, 3, 4, 0.02, 0.15),
        ],
        vec![
            machine("G1", 1, 0.0, 5.0, 0.2),
            machine("G2", 2, 0.5, 4.0, 0.25),
            machine("G3", 3, 0.3, 3.0, 0.3),
        ],
    )
    .unwrap()
}

/// Random connected weighted graph for cut tests: a random spanning tree
/// plus up to n extra edges, weights in [0.1, 10).
pub fn random_connected(rng: &mut impl rand::Rng, n: usize) -> island_core::WeightedGraph {
    use island_core::partition::GraphEdge;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 1..n {
        let j = order[rng.random_range(0..i)];
        let a = order[i];
        let v = rng.random_range(0.1..10.0);
        w[(a, j)] = v;
        w[(j, a)] = v;
    }
    for _ in 0..rng.random_range(0..n) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && w[(a, b)] == 0.0 {
            let v = rng.random_range(0.1..10.0);
            w[(a, b)] = v;
            w[(b, a)] = v;
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if w[(i, j)] > 0.0 {
                edges.push(GraphEdge {
                    branch: edges.len() as u32 + 1,
                    a: i,
                    b: j,
                    weight: w[(i, j)],
                });
            }
        }
    }
    island_core::WeightedGraph::new((1..=n as u32).collect(), edges).unwrap()
}

/// Exhaustive minimum bipartition cut with node `a` on one side, `b` on the
/// other and every must-link pair (node indices) together. Sides need not
/// be connected, so this bounds any connected answer from below.
pub fn brute_min_cut(g: &island_core::WeightedGraph, a: usize, b: usize, ml: &[(usize, usize)]) -> f64 {
    let n = g.node_count();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        let side = |i: usize| (mask >> i) & 1 == 1;
        if !side(a) || side(b) || ml.iter().any(|&(x, y)| side(x) != side(y)) {
            continue;
        }
        let c: f64 = g
            .edges
            .iter()
            .filter(|e| side(e.a) != side(e.b))
            .map(|e| e.weight)
            .sum();
        best = best.min(c);
    }
    best
}

/// ML closure root per node.
pub fn ml_roots(n: usize, ml: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for &(a, b) in ml {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// One criterion-style instance: graph, CL pair (a, b), 1 to 3 ML pairs,
/// redrawn until the ML closure keeps a and b apart.
pub fn cut_instance(rng: &mut impl rand::Rng) -> (island_core::WeightedGraph, usize, usize, Vec<(usize, usize)>) {
    loop {
        let n = rng.random_range(4..=10);
        let g = random_connected(rng, n);
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let mut ml = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let x = rng.random_range(0..n);
            let mut y = rng.random_range(0..n - 1);
            if y >= x {
                y += 1;
            }
            ml.push((x, y));
        }
        let r = ml_roots(n, &ml);
        if r[a] != r[b] {
            return (g, a, b, ml);
        }
    }
}

/// Whether some bipartition separating a and b, keeping ML pairs together,
/// has both sides connected.
pub fn connected_split_exists(g: &island_core::WeightedGraph, a: usize, b: usize, ml: &[(usize, usize)]) -> bool {
    let n = g.node_count();
    (0u32..(1 << n)).any(|mask| {
        let side: Vec<bool> = (0..n).map(|i| (mask >> i) & 1 == 1).collect();
        let other: Vec<bool> = side.iter().map(|s| !s).collect();
        side[a]
            && !side[b]
            && ml.iter().all(|&(x, y)| side[x] == side[y])
            && g.is_connected_subset(&side)
            && g.is_connected_subset(&other)
    })
}
