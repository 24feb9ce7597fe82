use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hydrosentinel_core::gnn::{squared_error, Architecture, ChebNetModel, ModelRole, Normalization};
use hydrosentinel_core::graph::{cheb_apply, GraphTopology, LambdaMode, SpectralOperator};
use hydrosentinel_core::hydro::{simulate, solve_steady_state, SimulationConfig};
use hydrosentinel_core::net1;
use hydrosentinel_core::network::parse_inp;
use hydrosentinel_core::placement::pagerank;
use ndarray::Array2;

/// Deterministic pseudo-random values in [-1, 1).
fn filler(rows: usize, cols: usize) -> Array2<f64> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    Array2::from_shape_simple_fn((rows, cols), || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    })
}

/// Ring of `n` nodes with a chord every tenth node.
fn ring(n: usize) -> GraphTopology {
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    edges.extend((0..n).step_by(10).map(|i| (i, (i + n / 2) % n)));
    edges.sort_unstable();
    edges.dedup();
    GraphTopology::from_edges(n, &edges).unwrap()
}

fn placement(c: &mut Criterion) {
    let net1 = GraphTopology::from_dense(&net1::ADJACENCY).unwrap();
    let large = ring(2000);
    c.bench_function("pagerank/net1", |b| b.iter(|| pagerank(black_box(&net1), 0.85, 1e-10).unwrap()));
    c.bench_function("pagerank/ring2000", |b| b.iter(|| pagerank(black_box(&large), 0.85, 1e-10).unwrap()));
}

fn spectral(c: &mut Criterion) {
    let g = GraphTopology::from_dense(&net1::ADJACENCY).unwrap();
    let op = SpectralOperator::new(&g, LambdaMode::PowerIteration).unwrap();
    let x = filler(9 * 64, 24);
    c.bench_function("cheb_apply/net1_K48_B64_F24", |b| b.iter(|| cheb_apply(&op, 47, black_box(x.view())).unwrap()));
    c.bench_function("spectral_operator/ring2000", |b| {
        let g = ring(2000);
        b.iter(|| SpectralOperator::new(black_box(&g), LambdaMode::PowerIteration).unwrap())
    });
}

fn network_passes(c: &mut Criterion) {
    let g = GraphTopology::from_dense(&net1::ADJACENCY).unwrap();
    let op = SpectralOperator::new(&g, LambdaMode::PowerIteration).unwrap();
    let arch = Architecture::net1_default();
    let batch = 64;
    for (name, role, window) in [("reconstructor", ModelRole::Reconstructor, 0), ("predictor_w120", ModelRole::Predictor, 120)] {
        let model = ChebNetModel::new(role, window, &arch, Normalization::IDENTITY, 1).unwrap();
        let x = filler(9 * batch, ChebNetModel::in_channels(role, window));
        let y = filler(9 * batch, 1);
        c.bench_function(&format!("forward/{name}_B64"), |b| {
            b.iter(|| model.forward_batch(&op, black_box(x.view())).unwrap())
        });
        c.bench_function(&format!("forward_backward/{name}_B64"), |b| {
            b.iter(|| {
                let cache = model.forward_batch(&op, x.view()).unwrap();
                let (_, d) = squared_error(cache.output.view(), y.view());
                model.backward_batch(&op, &cache, d.view())
            })
        });
    }
}

fn hydraulics(c: &mut Criterion) {
    let model = parse_inp(net1::INP).unwrap().model;
    let tank = &model.tanks[0];
    let heads = [tank.elevation + tank.init_level];
    let mults = vec![1.0; model.junctions.len()];
    c.bench_function("steady_state/net1", |b| {
        b.iter(|| solve_steady_state(black_box(&model), &mults, &heads).unwrap())
    });
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    let cfg = SimulationConfig::new(24.0);
    group.bench_function("net1_24h_1min", |b| b.iter(|| simulate(black_box(&model), &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, placement, spectral, network_passes, hydraulics);
criterion_main!(benches);
