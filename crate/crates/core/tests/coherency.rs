mod common;

use common::{data, hand_star, star3};
use island_core::coherency::{default_k_max, normalized_laplacian_floored, CoherencyError};
use island_core::linalg::sym_eigen;
use island_core::power_flow::ReducedNetwork;
use island_core::report::parse_ks_csv;
use island_core::{
    choose_k, kron_reduce, ks_matrix, normalized_laplacian, psync_matrix, solve_power_flow, spectral_coherency,
    KsMatrix,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("G{i}")).collect()
}

#[test]
fn star3_psync_matches_scalar_evaluation() {
    let case = star3();
    let sol = solve_power_flow(&case).unwrap();
    let red = kron_reduce(&case, &sol).unwrap();
    let v4 = sol.v_mag[3];
    let y = hand_star(
        &[0.2, 0.25, 0.3],
        &[
            Complex64::new(0.01, 0.1),
            Complex64::new(0.01, 0.2),
            Complex64::new(0.02, 0.15),
        ],
        Complex64::new(1.2, -0.4) / (v4 * v4),
    );
    let p = psync_matrix(&red);
    assert!(p.flipped);
    let mut expect = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                // inductive coupling: Im(Y_ij) > 0, so the coefficient is +|E_i||E_j|·B_ij·cos δ_ij
                let b = y[(i, j)].im;
                let v = red.e_mag[i] * red.e_mag[j] * b * (red.delta[i] - red.delta[j]).cos();
                expect[i][j] = v.max(0.0);
                assert!((p.values[(i, j)] - expect[i][j]).abs() < 1e-10);
            }
        }
        assert_eq!(p.values[(i, i)], 0.0);
    }
    let ks = ks_matrix(&p).unwrap();
    let max = expect.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { expect[i][j] / max };
            assert!((ks.values[(i, j)] - want).abs() < 1e-12);
        }
    }
}

fn random_reduced(rng: &mut ChaCha8Rng, m: usize) -> ReducedNetwork {
    let mut y = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for i in 0..m {
        for j in i + 1..m {
            let v = Complex64::new(rng.random_range(-0.2..0.2), rng.random_range(-1.0..3.0));
            y[(i, j)] = v;
            y[(j, i)] = v;
        }
        y[(i, i)] = Complex64::new(rng.random_range(0.0..1.0), -rng.random_range(1.0..10.0));
    }
    ReducedNetwork {
        labels: names(m),
        y,
        e_mag: (0..m).map(|_| rng.random_range(0.9..1.2)).collect(),
        delta: (0..m).map(|_| rng.random_range(-3.0..3.0)).collect(),
    }
}

#[test]
fn psync_symmetric_on_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let m = rng.random_range(2..12);
        let p = psync_matrix(&random_reduced(&mut rng, m));
        assert!((&p.values - p.values.transpose()).amax() < 1e-10);
        assert!(p.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn psync_scales_with_emf_squared() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let red = random_reduced(&mut rng, 6);
        let c = rng.random_range(0.5..2.0);
        let mut scaled = red.clone();
        for e in &mut scaled.e_mag {
            *e *= c;
        }
        let a = psync_matrix(&red);
        let b = psync_matrix(&scaled);
        assert!((a.values * (c * c) - b.values).amax() < 1e-10);
    }
}

#[test]
fn ks_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let red = random_reduced(&mut rng, 7);
    let p = psync_matrix(&red);
    let mut q = p.clone();
    q.values *= 37.5;
    let a = ks_matrix(&p).unwrap();
    let b = ks_matrix(&q).unwrap();
    assert!((a.values - b.values).amax() < 1e-15);
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize, density: f64) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) || j == i + 1 {
                let v = rng.random_range(0.01..5.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_null_vector(seed in any::<u64>(), n in 2usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_weights(&mut rng, n, 0.4);
        let l = normalized_laplacian(&w).unwrap();
        prop_assert!((&l.values - l.values.transpose()).amax() < 1e-15);
        let e = sym_eigen(&l.values).unwrap();
        prop_assert!(e.values[0].abs() < 1e-8);
        prop_assert!(e.values.iter().all(|&x| x > -1e-9));
        let mut v: Vec<f64> = l.degree.iter().map(|d| d.sqrt()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        for (i, x) in v.iter().enumerate() {
            prop_assert!((e.vectors[(i, 0)] - x).abs() < 1e-8);
        }
    }
}

fn blocks(sizes: &[usize], intra: f64, inter: f64) -> DMatrix<f64> {
    let n: usize = sizes.iter().sum();
    let mut owner = Vec::new();
    for (b, &s) in sizes.iter().enumerate() {
        owner.extend(std::iter::repeat_n(b, s));
    }
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else if owner[i] == owner[j] {
            intra
        } else {
            inter
        }
    })
}

#[test]
fn disconnected_cliques() {
    let l = normalized_laplacian(&blocks(&[3, 3], 1.0, 0.0)).unwrap();
    let e = sym_eigen(&l.values).unwrap();
    assert!(e.values[0].abs() < 1e-12 && e.values[1].abs() < 1e-12);
    assert!(e.values[2] > 0.5);

    let l3 = normalized_laplacian(&blocks(&[3, 4, 2], 1.0, 0.0)).unwrap();
    assert_eq!(choose_k(&l3, 5).unwrap(), 3);
}

fn ks_from_weights(w: &DMatrix<f64>) -> KsMatrix {
    let max = w.max();
    let n = w.nrows();
    let v = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { w[(i, j)] / max });
    KsMatrix::new(names(n), v).unwrap()
}

#[test]
fn block_diagonal_groups_exactly() {
    let ks = ks_from_weights(&blocks(&[3, 4, 3], 1.0, 0.0));
    let g = spectral_coherency(&ks, 3).unwrap();
    assert_eq!(
        g.groups,
        vec![
            names(10)[0..3].to_vec(),
            names(10)[3..7].to_vec(),
            names(10)[7..10].to_vec()
        ]
    );
}

fn planted(rng: &mut ChaCha8Rng, nblocks: usize) -> (DMatrix<f64>, Vec<usize>) {
    let sizes: Vec<usize> = (0..nblocks).map(|_| rng.random_range(2..6)).collect();
    let n: usize = sizes.iter().sum();
    let mut owner = Vec::new();
    for (b, &s) in sizes.iter().enumerate() {
        owner.extend(std::iter::repeat_n(b, s));
    }
    // shuffle node order so blocks are not contiguous
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        owner.swap(i, j);
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = if owner[i] == owner[j] {
                rng.random_range(0.5..1.0)
            } else {
                rng.random_range(0.0..0.05)
            };
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    (w, owner)
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

fn cluster_ids(groups: &island_core::CoherencyGroups, n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| groups.group_of(&format!("G{}", i + 1)).unwrap())
        .collect()
}

#[test]
fn planted_four_blocks_choose_four() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (w, _) = planted(&mut rng, 4);
        let l = normalized_laplacian(&w).unwrap();
        let kmax = 6.min(w.nrows());
        assert_eq!(choose_k(&l, kmax).unwrap(), 4);
    }
}

#[test]
fn planted_three_blocks_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut hits = 0;
    for _ in 0..200 {
        let (w, owner) = planted(&mut rng, 3);
        let n = w.nrows();
        let ks = ks_from_weights(&w);
        let l = normalized_laplacian_floored(&ks.weights(), 1e-9).unwrap();
        let k = choose_k(&l, default_k_max(n).max(3)).unwrap();
        let g = spectral_coherency(&ks, k).unwrap();
        if same_partition(&cluster_ids(&g, n), &owner) {
            hits += 1;
        }
    }
    assert!(hits >= 190, "{hits}/200 recovered");
}

#[test]
fn scaling_and_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let (w, _) = planted(&mut rng, 3);
        let n = w.nrows();
        let ks = ks_from_weights(&w);
        let base = spectral_coherency(&ks, 3).unwrap();
        let scaled = KsMatrix::new(ks.labels.clone(), {
            let mut v = &ks.values * 0.5;
            v.fill_diagonal(1.0);
            v
        })
        .unwrap();
        let half = spectral_coherency(&scaled, 3).unwrap();
        assert!(same_partition(&cluster_ids(&base, n), &cluster_ids(&half, n)));

        // reverse the generator order but keep labels attached to rows
        let perm: Vec<usize> = (0..n).rev().collect();
        let pv = DMatrix::from_fn(n, n, |i, j| ks.values[(perm[i], perm[j])]);
        let plabels: Vec<String> = perm.iter().map(|&i| ks.labels[i].clone()).collect();
        let permuted = spectral_coherency(&KsMatrix::new(plabels, pv).unwrap(), 3).unwrap();
        assert!(same_partition(&cluster_ids(&base, n), &cluster_ids(&permuted, n)));
    }
}

#[test]
fn fig7_three_groups() {
    let text = std::fs::read_to_string(data().join("fig7_ks.csv")).unwrap();
    let ks = parse_ks_csv("fig7_ks.csv", &text).unwrap();
    let g = spectral_coherency(&ks, 3).unwrap();
    let expected = [
        ["G1", "G2", "G3"].as_slice(),
        &["G4", "G5", "G6", "G7"],
        &["G8", "G9", "G10"],
    ];
    // best label matching over group permutations
    let mut best = 0;
    for p in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
        let hits = (0..3)
            .map(|i| {
                expected[i]
                    .iter()
                    .filter(|l| g.groups.get(p[i]).is_some_and(|grp| grp.iter().any(|x| x == *l)))
                    .count()
            })
            .sum::<usize>();
        best = best.max(hits);
    }
    assert!(best >= 8, "{:?}", g.groups);
}

#[test]
fn bad_k_rejected() {
    let ks = ks_from_weights(&blocks(&[2, 2], 1.0, 0.1));
    assert!(matches!(spectral_coherency(&ks, 1), Err(CoherencyError::BadK { .. })));
    assert!(matches!(spectral_coherency(&ks, 5), Err(CoherencyError::BadK { .. })));
}
