use hydrosentinel_core::graph::{cheb_apply, GraphTopology, LambdaMode, SpectralOperator};
use hydrosentinel_core::net1;
use hydrosentinel_core::placement::{pagerank, place_pagerank, DEFAULT_ALPHA, DEFAULT_EPSILON};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random tree plus extra chords, so the graph is always connected.
fn random_connected(rng: &mut ChaCha8Rng, max_n: usize) -> GraphTopology {
    let n = rng.random_range(2..=max_n);
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.random_range(0..i), i));
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b && !edges.contains(&(a, b)) && !edges.contains(&(b, a)) {
            edges.push((a, b));
        }
    }
    GraphTopology::from_edges(n, &edges).unwrap()
}

fn dense_adjacency(g: &GraphTopology) -> DMatrix<f64> {
    let a = g.adjacency_dense();
    DMatrix::from_fn(g.n(), g.n(), |i, j| f64::from(a[i][j]))
}

/// `(I − αM)^{-1}(1−α)v` with `M = A D^{-1}` and uniform `v`.
fn pagerank_dense(g: &GraphTopology, alpha: f64) -> DVector<f64> {
    let n = g.n();
    let a = dense_adjacency(g);
    let deg: Vec<f64> = (0..n).map(|j| a.column(j).sum()).collect();
    let m = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / deg[j]);
    let lhs = DMatrix::identity(n, n) - m * alpha;
    let rhs = DVector::from_element(n, (1.0 - alpha) / n as f64);
    lhs.lu().solve(&rhs).unwrap()
}

fn dense_l_norm(g: &GraphTopology) -> DMatrix<f64> {
    let n = g.n();
    let a = dense_adjacency(g);
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - a[(i, j)] / (d[i] * d[j]).sqrt()
    })
}

#[test]
fn pagerank_matches_dense_solve_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let g = random_connected(&mut rng, 50);
        let iterative = pagerank(&g, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap();
        let dense = pagerank_dense(&g, DEFAULT_ALPHA);
        let err: f64 = iterative
            .scores
            .iter()
            .zip(dense.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-8, "n={} error {err:e}", g.n());
    }
}

#[test]
fn path_of_three() {
    let g = GraphTopology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let pr = pagerank(&g, 0.85, 1e-12).unwrap();
    let alpha = 0.85;
    // stationary equations: x_end = (1−α)/3 + α x_mid / 2, x_mid = (1−α)/3 + 2α x_end
    let x_end = ((1.0 - alpha) / 3.0) * (1.0 + alpha / 2.0) / (1.0 - alpha * alpha);
    let x_mid = (1.0 - alpha) / 3.0 + 2.0 * alpha * x_end;
    assert!((pr.scores[0] - x_end).abs() < 1e-10);
    assert!((pr.scores[2] - x_end).abs() < 1e-10);
    assert!((pr.scores[1] - x_mid).abs() < 1e-10);
}

#[test]
fn pagerank_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let g = random_connected(&mut rng, 30);
        let n = g.n();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let gp = g.permuted(&perm).unwrap();
        let a = pagerank(&g, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap();
        let b = pagerank(&gp, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap();
        for i in 0..n {
            assert!((a.scores[i] - b.scores[perm[i]]).abs() < 1e-9);
        }
    }
}

#[test]
fn net1_golden_scores_and_sensors() {
    let g = GraphTopology::from_dense(&net1::ADJACENCY).unwrap();
    let pr = pagerank(&g, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap();
    let expected = [0.056, 0.139, 0.132, 0.093, 0.132, 0.1699, 0.092, 0.093, 0.092];
    for (i, (s, e)) in pr.scores.iter().zip(expected).enumerate() {
        assert!((s - e).abs() <= 5e-4, "{} got {s} want {e}", net1::LABELS[i]);
    }
    let p = place_pagerank(&g, 3, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap();
    let mut labels: Vec<&str> = p.sensors.iter().map(|&i| net1::LABELS[i]).collect();
    labels.sort_unstable();
    assert_eq!(labels, ["10", "23", "32"]);
}

#[test]
fn lambda_max_matches_symmetric_eigensolver() {
    let g = GraphTopology::from_dense(&net1::ADJACENCY).unwrap();
    let op = SpectralOperator::new(&g, LambdaMode::PowerIteration).unwrap();
    let eig = SymmetricEigen::new(dense_l_norm(&g));
    let top = eig.eigenvalues.max();
    assert!((op.lambda_max() - top).abs() <= 1e-6, "{} vs {top}", op.lambda_max());

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..25 {
        let g = random_connected(&mut rng, 25);
        let op = SpectralOperator::new(&g, LambdaMode::PowerIteration).unwrap();
        let eig = SymmetricEigen::new(dense_l_norm(&g));
        assert!(eig.eigenvalues.iter().all(|&l| (-1e-9..=2.0 + 1e-9).contains(&l)));
        assert!((op.lambda_max() - eig.eigenvalues.max()).abs() <= 1e-6);
        let l_hat = op.l_hat().to_dense();
        let hat = DMatrix::from_fn(g.n(), g.n(), |i, j| l_hat[[i, j]]);
        let spectrum = SymmetricEigen::new(hat).eigenvalues;
        assert!(spectrum.iter().all(|&l| (-1.0 - 1e-9..=1.0 + 1e-9).contains(&l)));
    }
}

#[test]
fn cheb_apply_matches_dense_recursion() {
    let g = GraphTopology::from_dense(&net1::ADJACENCY).unwrap();
    let op = SpectralOperator::new(&g, LambdaMode::PowerIteration).unwrap();
    let n = g.n();
    let lam = op.lambda_max();
    let hat = dense_l_norm(&g) * (2.0 / lam) - DMatrix::identity(n, n);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = 3;
    let x = DMatrix::from_fn(n, f, |_, _| rng.random_range(-1.0..1.0));
    let xa = Array2::from_shape_fn((n, f), |(i, j)| x[(i, j)]);

    let got = cheb_apply(&op, 4, xa.view()).unwrap();
    // dense polynomials T_k(L̂) formed explicitly
    let mut polys = vec![DMatrix::identity(n, n), hat.clone()];
    for k in 2..=4 {
        let next = &hat * &polys[k - 1] * 2.0 - &polys[k - 2];
        polys.push(next);
    }
    for (k, p) in polys.iter().enumerate() {
        let want = p * &x;
        for i in 0..n {
            for j in 0..f {
                assert!((got[k][[i, j]] - want[(i, j)]).abs() <= 1e-10, "k={k}");
            }
        }
    }
}
