//! Shared fixtures and seeded instance generators for tests and benchmarks.
//!
//! Everything here is deterministic: the same seed always yields the same
//! graph, boundary data, and values, which the reproducibility checks rely
//! on.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::function::{BoundaryData, InteriorInit, VertexFunction};
use crate::graph::{GraphOptions, WeightedGraph};

/// Path graph `0 - 1 - ... - k` with boundary `{0, k}`, one weight per edge,
/// and scalar values for every vertex (endpoints become the boundary data).
pub fn path_function(weights: &[f64], values: &[f64]) -> VertexFunction {
    assert_eq!(values.len(), weights.len() + 1);
    let edges: Vec<(usize, usize, f64)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (i, i + 1, w))
        .collect();
    let last = values.len() - 1;
    let graph = Arc::new(
        WeightedGraph::build(&edges, &[0, last], &GraphOptions::default()).unwrap(),
    );
    let mut g = BoundaryData::new(1);
    g.insert(0, vec![values[0]]).unwrap();
    g.insert(last, vec![values[last]]).unwrap();
    let mut f = VertexFunction::from_boundary(&graph, &g, InteriorInit::Zeros).unwrap();
    for (u, &x) in values.iter().enumerate().take(last).skip(1) {
        f.set_interior(u, &[x]).unwrap();
    }
    f
}

/// Unit-weight star: boundary vertices 0..2 at the corners of an equilateral
/// triangle in the plane, one interior center vertex 3.
pub fn star_graph() -> (Arc<WeightedGraph>, BoundaryData) {
    let edges = [(0, 3, 1.0), (1, 3, 1.0), (2, 3, 1.0)];
    let graph =
        Arc::new(WeightedGraph::build(&edges, &[0, 1, 2], &GraphOptions::default()).unwrap());
    let mut g = BoundaryData::new(2);
    g.insert(0, vec![0.0, 0.0]).unwrap();
    g.insert(1, vec![1.0, 0.0]).unwrap();
    g.insert(2, vec![0.5, 3f64.sqrt() / 2.0]).unwrap();
    (graph, g)
}

/// The star instance with a chosen value at the center vertex.
pub fn star_function(center: &[f64]) -> VertexFunction {
    let (graph, g) = star_graph();
    let mut f = VertexFunction::from_boundary(&graph, &g, InteriorInit::Zeros).unwrap();
    f.set_interior(3, center).unwrap();
    f
}

/// A connected random instance: spanning tree plus extra edges, weights in
/// `[0.2, 1]`, boundary values uniform in `[0, 1]^m`.
///
/// Weights stay away from zero so that brute-force references and
/// convergence-rate assertions remain numerically meaningful.
pub fn random_instance(
    seed: u64,
    n_interior: usize,
    n_boundary: usize,
    dim: usize,
) -> (Arc<WeightedGraph>, BoundaryData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_interior + n_boundary;
    assert!(n_boundary >= 1 && n >= 2);

    let mut ids: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let boundary: Vec<usize> = ids[..n_boundary].to_vec();

    let weight = |rng: &mut ChaCha8Rng| 0.2 + 0.8 * rng.random::<f64>();
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        let w = weight(&mut rng);
        edges.push((u, v, w));
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        if edges.iter().any(|&(x, y, _)| (x, y) == (a, b)) {
            continue;
        }
        let w = weight(&mut rng);
        edges.push((a, b, w));
    }

    let graph = Arc::new(
        WeightedGraph::build(&edges, &boundary, &GraphOptions::default()).unwrap(),
    );
    let mut g = BoundaryData::new(dim);
    for &u in graph.boundary() {
        let value: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        g.insert(u, value).unwrap();
    }
    (graph, g)
}

/// A vertex function on `graph` with the given boundary data and uniform
/// random interior values in `[0, 1]^m`.
pub fn random_function(
    graph: &Arc<WeightedGraph>,
    g: &BoundaryData,
    seed: u64,
) -> VertexFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = VertexFunction::from_boundary(graph, g, InteriorInit::Zeros).unwrap();
    let dim = g.dim();
    for &u in graph.interior() {
        let value: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        f.set_interior(u, &value).unwrap();
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instance_is_deterministic() {
        let (g1, b1) = random_instance(7, 3, 4, 2);
        let (g2, b2) = random_instance(7, 3, 4, 2);
        assert_eq!(g1.edges(), g2.edges());
        assert_eq!(g1.boundary(), g2.boundary());
        assert_eq!(b1, b2);
        assert_eq!(g1.interior().len(), 3);
    }

    #[test]
    fn random_instance_weights_in_range() {
        for seed in 0..20 {
            let (g, _) = random_instance(seed, 4, 3, 1);
            for &(_, _, w) in g.edges() {
                assert!(w >= 0.2 && w <= 1.0);
            }
        }
    }
}
