//! Criterion benchmarks for the solver stack: midrange subproblems,
//! fixed-point sweeps, the continuation solver, and nonlocal graph builds.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lipext_core::fixed_point::apply_midr;
use lipext_core::function::{InteriorInit, VertexFunction};
use lipext_core::graph::WeightedGraph;
use lipext_core::image_io::RawImage;
use lipext_core::midrange::{scalar_midrange, vector_midrange, MidrangeConfig, MidrangeProblem};
use lipext_core::nonlocal::{build_patch_graph, MaskedImage, PatchGraphParams, SigmaPolicy};
use lipext_core::plap::{continuation_solve, SolverConfig};

fn grid_instance(
    side: usize,
    hole: usize,
) -> (Arc<WeightedGraph>, lipext_core::function::BoundaryData) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut known = vec![true; side * side];
    let start = (side - hole) / 2;
    for i in start..start + hole {
        for j in start..start + hole {
            known[i * side + j] = false;
        }
    }
    let graph = Arc::new(WeightedGraph::grid4(side, side, &known, 1.0).unwrap());
    let mut g = lipext_core::function::BoundaryData::new(3);
    for v in 0..side * side {
        if known[v] {
            g.insert(v, (0..3).map(|_| rng.random::<f64>()).collect())
                .unwrap();
        }
    }
    (graph, g)
}

fn bench_midrange(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scalar_pts: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
    let weights: Vec<f64> = (0..64).map(|_| 0.25 + rng.random::<f64>()).collect();
    let scalar = MidrangeProblem::new(1, scalar_pts, weights.clone()).unwrap();
    c.bench_function("scalar_midrange_64", |b| {
        b.iter(|| scalar_midrange(black_box(&scalar)).unwrap())
    });

    let pts: Vec<f64> = (0..32 * 3).map(|_| rng.random::<f64>()).collect();
    let vector = MidrangeProblem::new(3, pts, weights[..32].to_vec()).unwrap();
    let cfg = MidrangeConfig::default();
    c.bench_function("vector_midrange_32x3", |b| {
        b.iter(|| vector_midrange(black_box(&vector), &cfg).unwrap())
    });
}

fn bench_sweeps(c: &mut Criterion) {
    let (graph, g) = grid_instance(16, 6);
    let f = VertexFunction::from_boundary(&graph, &g, InteriorInit::BoundaryMean).unwrap();
    c.bench_function("midr_sweep_16x16_rgb", |b| {
        b.iter(|| apply_midr(black_box(&f)).unwrap())
    });
}

fn bench_continuation(c: &mut Criterion) {
    let (graph, g) = grid_instance(16, 6);
    let cfg = SolverConfig {
        p_target: 50.0,
        ..SolverConfig::default()
    };
    c.bench_function("continuation_p50_16x16_rgb", |b| {
        b.iter(|| continuation_solve(black_box(&graph), black_box(&g), &cfg).unwrap())
    });
}

fn bench_patch_graph(c: &mut Criterion) {
    let side = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data: Vec<f64> = (0..side * side).map(|_| rng.random::<f64>()).collect();
    let mut known = vec![true; side * side];
    for v in 0..side * side {
        if rng.random::<f64>() < 0.3 {
            known[v] = false;
        }
    }
    known[0] = true; // keep at least one boundary pixel
    known[1] = false; // and one interior
    let img =
        MaskedImage::new(&RawImage::new(side, side, 1, data), known).unwrap();
    let params = PatchGraphParams {
        r: 2,
        search_radius: 8,
        top_k: 10,
        c: 4.0,
        sigma_policy: SigmaPolicy::Knn { k: 8 },
        ..PatchGraphParams::default()
    };
    c.bench_function("patch_graph_32x32", |b| {
        b.iter(|| build_patch_graph(black_box(&img), &params, 5).unwrap())
    });
}

criterion_group!(
    benches,
    bench_midrange,
    bench_sweeps,
    bench_continuation,
    bench_patch_graph
);
criterion_main!(benches);
