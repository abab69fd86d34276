//! Randomized invariant checks across the solver stack: graph symmetry and
//! serialization round trips, energy-norm relations, midrange operator
//! regularity, relabeling invariance, and fixed-point residual contracts.

use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use lipext_core::fixed_point::{apply_midr, km_iterate};
use lipext_core::function::{BoundaryData, InteriorInit, VertexFunction};
use lipext_core::graph::{parse_edge_list, GraphOptions, WeightedGraph};
use lipext_core::metrics::{
    energy_inf, energy_p, lex_compare, lex_vector, llex_vector, LexVector,
};
use lipext_core::midrange::{scalar_midrange, vector_midrange, MidrangeConfig, MidrangeProblem};
use lipext_core::IterationConfig;

/// A connected instance from a path backbone plus a few extra chords.
/// `extra` entries are taken modulo the possible vertex pairs, so any byte
/// vector yields a valid (deduplicated) edge set.
fn build_instance(
    n: usize,
    weights: &[f64],
    extra: &[(usize, usize)],
    boundary: &[usize],
) -> Arc<WeightedGraph> {
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut used: Vec<(usize, usize)> = Vec::new();
    let mut wi = 0usize;
    let mut next_w = || {
        let w = weights[wi % weights.len()];
        wi += 1;
        w
    };
    for v in 1..n {
        edges.push((v - 1, v, next_w()));
        used.push((v - 1, v));
    }
    for &(a, b) in extra {
        let (u, v) = (a % n, b % n);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if used.contains(&key) {
            continue;
        }
        used.push(key);
        edges.push((key.0, key.1, next_w()));
    }
    Arc::new(WeightedGraph::build(&edges, boundary, &GraphOptions::default()).unwrap())
}

fn function_on(
    graph: &Arc<WeightedGraph>,
    dim: usize,
    boundary_vals: &[f64],
    interior_vals: &[f64],
) -> VertexFunction {
    let mut g = BoundaryData::new(dim);
    let mut k = 0usize;
    for &u in graph.boundary() {
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                let x = boundary_vals[k % boundary_vals.len()];
                k += 1;
                x
            })
            .collect();
        g.insert(u, v).unwrap();
    }
    let mut f = VertexFunction::from_boundary(graph, &g, InteriorInit::Zeros).unwrap();
    let mut k = 0usize;
    for &u in graph.interior() {
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                let x = interior_vals[k % interior_vals.len()];
                k += 1;
                x
            })
            .collect();
        f.set_interior(u, &v).unwrap();
    }
    f
}

fn weight_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 1..12)
}

fn value_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Stored adjacency is symmetric with identical weights, and no listed
    /// neighbor pair has both endpoints on the boundary.
    #[test]
    fn adjacency_is_symmetric_and_interior_touching(
        n in 3usize..10,
        weights in weight_vec(),
        extra in prop::collection::vec((0usize..32, 0usize..32), 0..8),
    ) {
        let graph = build_instance(n, &weights, &extra, &[0, n - 1]);
        for u in 0..graph.vertex_count() {
            for &(v, w) in graph.neighbors(u).unwrap() {
                prop_assert!(!(graph.is_boundary(u) && graph.is_boundary(v)));
                if v != u {
                    let back = graph
                        .neighbors(v)
                        .unwrap()
                        .iter()
                        .find(|&&(x, _)| x == u)
                        .map(|&(_, wb)| wb);
                    prop_assert_eq!(back, Some(w));
                }
            }
        }
    }

    /// Writing the edge list and rebuilding reproduces the adjacency
    /// structure bit-exactly.
    #[test]
    fn edge_list_round_trips(
        n in 3usize..10,
        weights in weight_vec(),
        extra in prop::collection::vec((0usize..32, 0usize..32), 0..8),
    ) {
        let graph = build_instance(n, &weights, &extra, &[0, n - 1]);
        let text = graph.write_edge_list();
        let edges = parse_edge_list(&text).unwrap();
        let rebuilt =
            WeightedGraph::build(&edges, &[0, n - 1], &GraphOptions::default()).unwrap();
        prop_assert_eq!(graph.edges(), rebuilt.edges());
    }

    /// Boundary data serialization round-trips every f64 bit pattern.
    #[test]
    fn boundary_data_round_trips(
        dim in 1usize..4,
        vals in prop::collection::vec(-1e6f64..1e6, 8),
    ) {
        let mut g = BoundaryData::new(dim);
        let mut k = 0usize;
        for u in [0usize, 3, 7] {
            let v: Vec<f64> = (0..dim).map(|_| { let x = vals[k % vals.len()]; k += 1; x }).collect();
            g.insert(u, v).unwrap();
        }
        let text = g.write();
        let back = BoundaryData::parse(&text).unwrap();
        prop_assert_eq!(back.dim(), g.dim());
        for (u, v) in g.iter() {
            prop_assert_eq!(back.get(u).unwrap(), v);
        }
    }

    /// Norm sandwich between the sup energy and the p-energy:
    /// E_inf <= (E_p/2)^{1/p} <= (2M)^{1/p} E_inf, with M edges.
    #[test]
    fn energy_sandwich(
        n in 3usize..9,
        weights in weight_vec(),
        extra in prop::collection::vec((0usize..32, 0usize..32), 0..6),
        bvals in value_vec(4..9),
        ivals in value_vec(8..25),
        dim in 1usize..4,
        p in prop::sample::select(vec![2.0f64, 4.0, 8.0, 16.0]),
    ) {
        let graph = build_instance(n, &weights, &extra, &[0, n - 1]);
        let f = function_on(&graph, dim, &bvals, &ivals);
        let e_inf = energy_inf(&f);
        let e_p = energy_p(&f, p).unwrap();
        let m_edges = graph.edges().len() as f64;
        let lhs = (e_p / 2.0).powf(1.0 / p);
        prop_assert!(e_inf <= lhs * (1.0 + 1e-12) + 1e-300);
        prop_assert!(lhs <= (2.0 * m_edges).powf(1.0 / p) * e_inf * (1.0 + 1e-12) + 1e-300);
    }

    /// The largest edgewise and vertexwise Lipschitz values coincide, and
    /// equal the sup energy exactly.
    #[test]
    fn lex_and_llex_share_their_head(
        n in 3usize..9,
        weights in weight_vec(),
        extra in prop::collection::vec((0usize..32, 0usize..32), 0..6),
        bvals in value_vec(4..9),
        ivals in value_vec(8..25),
        dim in 1usize..3,
    ) {
        let graph = build_instance(n, &weights, &extra, &[0, n - 1]);
        let f = function_on(&graph, dim, &bvals, &ivals);
        let lex = lex_vector(&f);
        let llex = llex_vector(&f);
        prop_assert_eq!(lex.head().to_bits(), llex.head().to_bits());
        prop_assert_eq!(energy_inf(&f).to_bits(), llex.head().to_bits());
    }

    /// Energies and lex vectors are invariant under a relabeling of vertex
    /// ids (lex vectors bit-exactly; the summed energy up to roundoff).
    #[test]
    fn relabeling_leaves_metrics_invariant(
        n in 3usize..9,
        weights in weight_vec(),
        extra in prop::collection::vec((0usize..32, 0usize..32), 0..6),
        bvals in value_vec(4..9),
        ivals in value_vec(8..25),
        shuffle_seed in 0u64..1000,
    ) {
        let graph = build_instance(n, &weights, &extra, &[0, n - 1]);
        let f = function_on(&graph, 1, &bvals, &ivals);

        // Deterministic permutation of 0..n from the seed.
        let nv = graph.vertex_count();
        let mut perm: Vec<usize> = (0..nv).collect();
        let mut state = shuffle_seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        for i in (1..nv).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            perm.swap(i, j);
        }

        let edges: Vec<(usize, usize, f64)> = graph
            .edges()
            .iter()
            .map(|&(u, v, w)| (perm[u], perm[v], w))
            .collect();
        let boundary: Vec<usize> = graph.boundary().iter().map(|&u| perm[u]).collect();
        let relabeled = Arc::new(
            WeightedGraph::build(&edges, &boundary, &GraphOptions::default()).unwrap(),
        );
        let mut g2 = BoundaryData::new(1);
        for &u in graph.boundary() {
            g2.insert(perm[u], f.value(u).to_vec()).unwrap();
        }
        let mut f2 = VertexFunction::from_boundary(&relabeled, &g2, InteriorInit::Zeros).unwrap();
        for &u in graph.interior() {
            f2.set_interior(perm[u], f.value(u)).unwrap();
        }

        let lex_a = lex_vector(&f);
        let lex_b = lex_vector(&f2);
        prop_assert_eq!(lex_a.values(), lex_b.values());
        let llex_a = llex_vector(&f);
        let llex_b = llex_vector(&f2);
        prop_assert_eq!(llex_a.values(), llex_b.values());
        let ep_a = energy_p(&f, 4.0).unwrap();
        let ep_b = energy_p(&f2, 4.0).unwrap();
        prop_assert!((ep_a - ep_b).abs() <= 1e-12 * (1.0 + ep_a.abs()));
    }

    /// lex_compare with a positive eps is antisymmetric and, on sampled
    /// triples, transitive in its strict part.
    #[test]
    fn lex_compare_is_a_preorder(
        (a, b, c) in (1usize..6).prop_flat_map(|len| (
            prop::collection::vec(0.0f64..2.0, len),
            prop::collection::vec(0.0f64..2.0, len),
            prop::collection::vec(0.0f64..2.0, len),
        )),
    ) {
        use std::cmp::Ordering;
        let eps = 1e-9;
        let va = LexVector::from_values(lipext_core::LexKind::Llex, a);
        let vb = LexVector::from_values(lipext_core::LexKind::Llex, b);
        let vc = LexVector::from_values(lipext_core::LexKind::Llex, c);
        let ab = lex_compare(&va, &vb, eps).unwrap();
        let ba = lex_compare(&vb, &va, eps).unwrap();
        prop_assert_eq!(ab, ba.reverse());
        let bc = lex_compare(&vb, &vc, eps).unwrap();
        let ac = lex_compare(&va, &vc, eps).unwrap();
        if ab == Ordering::Less && bc == Ordering::Less {
            // Strict-strict chains stay strict: eps grouping cannot flip
            // the combined ordering, though it may flatten it to Equal only
            // when both gaps are at the eps scale; allow non-Greater.
            prop_assert_ne!(ac, Ordering::Greater);
        }
    }

    /// Scalar midrange is nonexpansive under the sup norm on the points.
    #[test]
    fn scalar_midrange_is_nonexpansive(
        w in prop::collection::vec(0.05f64..1.0, 1..8),
        x in prop::collection::vec(-2.0f64..2.0, 8),
        y in prop::collection::vec(-2.0f64..2.0, 8),
    ) {
        let k = w.len();
        let px = MidrangeProblem::new(1, x[..k].to_vec(), w.clone()).unwrap();
        let py = MidrangeProblem::new(1, y[..k].to_vec(), w.clone()).unwrap();
        let mx = scalar_midrange(&px).unwrap().center[0];
        let my = scalar_midrange(&py).unwrap().center[0];
        let dist = x[..k]
            .iter()
            .zip(&y[..k])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        prop_assert!((mx - my).abs() <= dist + 1e-12);
    }

    /// Scalar midrange stays inside the hull of its inputs.
    #[test]
    fn scalar_midrange_stays_in_hull(
        w in prop::collection::vec(0.05f64..1.0, 1..8),
        x in prop::collection::vec(-2.0f64..2.0, 8),
    ) {
        let k = w.len();
        let p = MidrangeProblem::new(1, x[..k].to_vec(), w.clone()).unwrap();
        let c = scalar_midrange(&p).unwrap().center[0];
        let lo = x[..k].iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(c >= lo - 1e-12 && c <= hi + 1e-12);
    }

    /// The vector solver at m=1 agrees with the scalar closed form.
    #[test]
    fn vector_solver_matches_scalar_closed_form(
        w in prop::collection::vec(0.05f64..1.0, 2..7),
        x in prop::collection::vec(-2.0f64..2.0, 7),
    ) {
        let k = w.len();
        let p = MidrangeProblem::new(1, x[..k].to_vec(), w.clone()).unwrap();
        let s = scalar_midrange(&p).unwrap();
        let v = vector_midrange(&p, &MidrangeConfig::default()).unwrap();
        prop_assert!((s.center[0] - v.center[0]).abs() <= 1e-9 * (1.0 + s.center[0].abs()));
    }

    /// Translation and positive scaling equivariance of the vector solver.
    #[test]
    fn vector_midrange_is_equivariant(
        w in prop::collection::vec(0.05f64..1.0, 2..6),
        x in prop::collection::vec(-1.0f64..1.0, 12),
        shift in prop::collection::vec(-3.0f64..3.0, 2),
        lambda in 0.1f64..4.0,
    ) {
        let k = w.len();
        let m = 2usize;
        let pts: Vec<f64> = x[..k * m].to_vec();
        let cfg = MidrangeConfig::default();
        let base = vector_midrange(
            &MidrangeProblem::new(m, pts.clone(), w.clone()).unwrap(), &cfg).unwrap();

        let shifted: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(i, &v)| v + shift[i % m])
            .collect();
        let sres = vector_midrange(
            &MidrangeProblem::new(m, shifted, w.clone()).unwrap(), &cfg).unwrap();
        for i in 0..m {
            prop_assert!((sres.center[i] - (base.center[i] + shift[i])).abs() <= 1e-7);
        }

        let scaled: Vec<f64> = pts.iter().map(|&v| lambda * v).collect();
        let lres = vector_midrange(
            &MidrangeProblem::new(m, scaled, w.clone()).unwrap(), &cfg).unwrap();
        for i in 0..m {
            prop_assert!((lres.center[i] - lambda * base.center[i]).abs() <= 1e-7 * (1.0 + lambda));
        }
    }
}

proptest! {
    // Fixed-point runs are heavier; fewer cases.
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// A reported averaged-iteration limit satisfies the fixed-point
    /// residual contract: one more full midrange application moves it by
    /// at most 10x the tolerance.
    #[test]
    fn km_limit_passes_residual_contract(
        n in 2usize..6,
        weights in weight_vec(),
        extra in prop::collection::vec((0usize..32, 0usize..32), 0..4),
        bvals in value_vec(4..9),
    ) {
        let graph = build_instance(n + 2, &weights, &extra, &[0, n + 1]);
        let mut g = BoundaryData::new(1);
        g.insert(0, vec![bvals[0]]).unwrap();
        g.insert(n + 1, vec![bvals[1 % bvals.len()]]).unwrap();
        let f0 = VertexFunction::from_boundary(&graph, &g, InteriorInit::BoundaryMean).unwrap();
        let tol = 1e-10;
        let cfg = IterationConfig { tol: Some(tol), ..IterationConfig::default() };
        let res = km_iterate(&f0, &cfg).unwrap();
        prop_assert_eq!(res.status, lipext_core::IterationStatus::Converged);
        let once = apply_midr(&res.function).unwrap();
        let moved = res.function.sup_distance(&once);
        prop_assert!(moved <= 10.0 * tol, "residual {} > 10*tol", moved);
    }
}

/// Self-loop bookkeeping: opting in adds the loop to the neighbor list
/// exactly once per vertex and never to boundary vertices.
#[test]
fn self_loop_option_is_consistent() {
    let mut loops = BTreeMap::new();
    loops.insert(1usize, 0.7f64);
    let opts = GraphOptions {
        self_loops: loops,
        ..GraphOptions::default()
    };
    let graph = Arc::new(
        WeightedGraph::build(&[(0, 1, 1.0), (1, 2, 0.5)], &[0, 2], &opts).unwrap(),
    );
    let selfs: Vec<(usize, f64)> = graph
        .neighbors(1)
        .unwrap()
        .iter()
        .cloned()
        .filter(|&(v, _)| v == 1)
        .collect();
    assert_eq!(selfs, vec![(1, 0.7)]);
}
