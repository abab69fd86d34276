//! Finite weighted graphs with a distinguished boundary vertex set.
//!
//! A [`WeightedGraph`] stores each undirected edge once with a weight in
//! `(0, 1]`, keeps the boundary set `U` apart from the interior `V \ U`, and
//! precomputes neighbor lists. Edges joining two boundary vertices carry no
//! information for extension problems (both endpoints are pinned), so the
//! builder drops them and records how many were dropped.
//!
//! Self-loops are opt-in: they never change an extension's value set, but
//! they alter the fixed-point iterations (the vertex's own value joins its
//! neighborhood), so they are off unless requested.

use std::collections::BTreeMap;

use thiserror::Error;

/// Errors from graph construction, lookup, and edge-list parsing.
#[derive(Debug, Error)]
pub enum GraphError {
    /// The union of listed edges (including any dropped boundary-boundary
    /// edges) does not connect all vertices.
    #[error("graph is not connected")]
    DisconnectedGraph,
    #[error("boundary vertex set is empty")]
    EmptyBoundary,
    #[error("edge ({u}, {v}) has nonpositive weight {w}")]
    NonpositiveWeight { u: usize, v: usize, w: f64 },
    #[error("edge ({u}, {v}) has weight {w} > 1")]
    WeightAboveOne { u: usize, v: usize, w: f64 },
    #[error("grid has no unknown pixels: nothing to extend")]
    AllKnown,
    #[error("grid has no known pixels: boundary would be empty")]
    AllUnknown,
    #[error("vertex id {v} out of range for graph with {n} vertices")]
    BadVertexId { v: usize, n: usize },
    #[error("edge ({u}, {v}) listed more than once")]
    DuplicateEdge { u: usize, v: usize },
    #[error("grid dimensions {height}x{width} do not match mask length {len}")]
    BadDimensions {
        height: usize,
        width: usize,
        len: usize,
    },
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Construction options for [`WeightedGraph::build`].
#[derive(Debug, Clone, Default)]
pub struct GraphOptions {
    /// Self-loop weights per interior vertex, each in `(0, 1]`. Loops listed
    /// here (or as `(u, u, w)` edge entries) become part of the edge set;
    /// loops at boundary vertices are dropped like boundary-boundary edges.
    pub self_loops: BTreeMap<usize, f64>,
}

/// An undirected weighted graph with boundary set, ready for extension
/// problems.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    n: usize,
    /// Each undirected edge once, `u <= v`, sorted; includes self-loops.
    edges: Vec<(usize, usize, f64)>,
    boundary: Vec<usize>,
    interior: Vec<usize>,
    is_boundary: Vec<bool>,
    /// Position of each interior vertex in `interior`; `usize::MAX` on boundary.
    interior_index: Vec<usize>,
    dropped_boundary_edges: usize,
    adj_offsets: Vec<usize>,
    adj: Vec<(usize, f64)>,
}

impl WeightedGraph {
    /// Builds a graph from an undirected edge list and a boundary set.
    ///
    /// Vertex ids must be dense in `[0, n)` with `n` inferred as one past the
    /// largest id mentioned. Boundary-boundary edges (and self-loops at
    /// boundary vertices) are dropped and counted; they still participate in
    /// the connectivity check, since dropping them must not reject masks
    /// whose known region is internally adjacent.
    pub fn build(
        edges: &[(usize, usize, f64)],
        boundary: &[usize],
        options: &GraphOptions,
    ) -> Result<Self, GraphError> {
        if boundary.is_empty() {
            return Err(GraphError::EmptyBoundary);
        }
        let mut n = 0usize;
        for &(u, v, _) in edges {
            n = n.max(u + 1).max(v + 1);
        }
        for &u in boundary {
            n = n.max(u + 1);
        }
        for (&u, _) in &options.self_loops {
            n = n.max(u + 1);
        }

        let mut is_boundary = vec![false; n];
        for &u in boundary {
            is_boundary[u] = true;
        }

        let mut all: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
        for &(u, v, w) in edges {
            let (a, b) = if u <= v { (u, v) } else { (v, u) };
            all.push((a, b, w));
        }
        for (&u, &w) in &options.self_loops {
            all.push((u, u, w));
        }
        all.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for pair in all.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(GraphError::DuplicateEdge {
                    u: pair[0].0,
                    v: pair[0].1,
                });
            }
        }
        for &(u, v, w) in &all {
            if !(w > 0.0) {
                return Err(GraphError::NonpositiveWeight { u, v, w });
            }
            if w > 1.0 {
                return Err(GraphError::WeightAboveOne { u, v, w });
            }
        }

        // Connectivity over the full input edge set: boundary-boundary edges
        // count as attachments even though they are dropped from storage.
        if n > 0 {
            let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
            for &(u, v, _) in &all {
                if u != v {
                    adj[u].push(v);
                    adj[v].push(u);
                }
            }
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1usize;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        count += 1;
                        stack.push(v);
                    }
                }
            }
            if count != n {
                return Err(GraphError::DisconnectedGraph);
            }
        }

        let mut kept: Vec<(usize, usize, f64)> = Vec::with_capacity(all.len());
        let mut dropped = 0usize;
        for &(u, v, w) in &all {
            if is_boundary[u] && is_boundary[v] {
                dropped += 1;
            } else {
                kept.push((u, v, w));
            }
        }

        let mut boundary_sorted: Vec<usize> = boundary.to_vec();
        boundary_sorted.sort_unstable();
        boundary_sorted.dedup();
        let interior: Vec<usize> = (0..n).filter(|&u| !is_boundary[u]).collect();
        let mut interior_index = vec![usize::MAX; n];
        for (i, &u) in interior.iter().enumerate() {
            interior_index[u] = i;
        }

        // Neighbor lists in ascending id order; a self-loop sorts at its own id.
        let mut degree = vec![0usize; n];
        for &(u, v, _) in &kept {
            degree[u] += 1;
            if u != v {
                degree[v] += 1;
            }
        }
        let mut adj_offsets = vec![0usize; n + 1];
        for u in 0..n {
            adj_offsets[u + 1] = adj_offsets[u] + degree[u];
        }
        let mut adj = vec![(0usize, 0.0f64); adj_offsets[n]];
        let mut cursor = adj_offsets.clone();
        for &(u, v, w) in &kept {
            adj[cursor[u]] = (v, w);
            cursor[u] += 1;
            if u != v {
                adj[cursor[v]] = (u, w);
                cursor[v] += 1;
            }
        }
        for u in 0..n {
            adj[adj_offsets[u]..adj_offsets[u + 1]]
                .sort_by(|a, b| a.0.cmp(&b.0));
        }

        Ok(WeightedGraph {
            n,
            edges: kept,
            boundary: boundary_sorted,
            interior,
            is_boundary,
            interior_index,
            dropped_boundary_edges: dropped,
            adj_offsets,
            adj,
        })
    }

    /// Builds the 4-neighbor grid graph of an image, with known pixels as
    /// boundary. Vertex ids are row-major: `row * width + col`. Every grid
    /// edge carries the same `weight`.
    pub fn grid4(
        height: usize,
        width: usize,
        known: &[bool],
        weight: f64,
    ) -> Result<Self, GraphError> {
        if known.len() != height * width {
            return Err(GraphError::BadDimensions {
                height,
                width,
                len: known.len(),
            });
        }
        let total = height * width;
        let known_count = known.iter().filter(|&&k| k).count();
        if known_count == total {
            return Err(GraphError::AllKnown);
        }
        if known_count == 0 {
            return Err(GraphError::AllUnknown);
        }
        let mut edges = Vec::with_capacity(2 * total);
        for row in 0..height {
            for col in 0..width {
                let u = row * width + col;
                if col + 1 < width {
                    edges.push((u, u + 1, weight));
                }
                if row + 1 < height {
                    edges.push((u, u + width, weight));
                }
            }
        }
        let boundary: Vec<usize> = (0..total).filter(|&u| known[u]).collect();
        Self::build(&edges, &boundary, &GraphOptions::default())
    }

    /// Number of vertices `n`.
    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// Number of stored (undirected) edges `M`, self-loops included.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Stored edges, each once with `u <= v`, sorted by `(u, v)`.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Boundary vertex ids, ascending.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Interior vertex ids, ascending.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn is_boundary(&self, u: usize) -> bool {
        self.is_boundary[u]
    }

    /// Position of interior vertex `u` in [`Self::interior`], if interior.
    pub fn interior_position(&self, u: usize) -> Option<usize> {
        let i = *self.interior_index.get(u)?;
        (i != usize::MAX).then_some(i)
    }

    /// How many boundary-boundary edges the builder dropped.
    pub fn dropped_boundary_edges(&self) -> usize {
        self.dropped_boundary_edges
    }

    /// Neighbors of `u` as `(vertex, weight)`, ascending by vertex id. A
    /// configured self-loop appears as `(u, w)` in its sorted position.
    pub fn neighbors(&self, u: usize) -> Result<&[(usize, f64)], GraphError> {
        if u >= self.n {
            return Err(GraphError::BadVertexId { v: u, n: self.n });
        }
        Ok(self.adj(u))
    }

    /// Unchecked neighbor slice for validated ids (internal hot paths).
    pub(crate) fn adj(&self, u: usize) -> &[(usize, f64)] {
        &self.adj[self.adj_offsets[u]..self.adj_offsets[u + 1]]
    }

    /// Weight of edge `(u, v)` if present.
    pub fn edge_weight(&self, u: usize, v: usize) -> Option<f64> {
        if u >= self.n {
            return None;
        }
        let list = self.adj(u);
        list.binary_search_by(|probe| probe.0.cmp(&v))
            .ok()
            .map(|i| list[i].1)
    }

    /// Serializes the stored edges in the `u v w` text format. Weights print
    /// in shortest round-trip form, so parsing recovers them bit-exactly.
    pub fn write_edge_list(&self) -> String {
        let mut out = String::new();
        for &(u, v, w) in &self.edges {
            out.push_str(&format!("{} {} {}\n", u, v, w));
        }
        out
    }
}

/// Parses the `u v w` edge-list format: one edge per line, `#` starts a
/// comment, blank lines are skipped.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize, f64)>, GraphError> {
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let mut parts = line.split_whitespace();
        let Some(u) = parts.next() else { continue };
        let (v, w) = match (parts.next(), parts.next()) {
            (Some(v), Some(w)) => (v, w),
            _ => {
                return Err(GraphError::Parse {
                    line: i + 1,
                    msg: "expected `u v w`".into(),
                })
            }
        };
        if parts.next().is_some() {
            return Err(GraphError::Parse {
                line: i + 1,
                msg: "trailing fields after `u v w`".into(),
            });
        }
        let parse_id = |s: &str| {
            s.parse::<usize>().map_err(|e| GraphError::Parse {
                line: i + 1,
                msg: format!("bad vertex id {s:?}: {e}"),
            })
        };
        let wv: f64 = w.parse().map_err(|e| GraphError::Parse {
            line: i + 1,
            msg: format!("bad weight {w:?}: {e}"),
        })?;
        edges.push((parse_id(u)?, parse_id(v)?, wv));
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph() -> WeightedGraph {
        WeightedGraph::build(&[(0, 1, 1.0), (1, 2, 1.0)], &[0, 2], &GraphOptions::default())
            .unwrap()
    }

    #[test]
    fn path_has_one_interior_and_two_edges() {
        let g = path_graph();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.interior(), &[1]);
        assert_eq!(g.boundary(), &[0, 2]);
        assert_eq!(g.dropped_boundary_edges(), 0);
    }

    #[test]
    fn boundary_boundary_edge_is_dropped_and_counted() {
        let g = WeightedGraph::build(
            &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 0.5)],
            &[0, 2],
            &GraphOptions::default(),
        )
        .unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.dropped_boundary_edges(), 1);
        assert_eq!(g.edge_weight(0, 2), None);
    }

    #[test]
    fn disconnected_components_are_rejected() {
        let err = WeightedGraph::build(
            &[(0, 1, 1.0), (2, 3, 1.0)],
            &[0, 2],
            &GraphOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DisconnectedGraph));
    }

    #[test]
    fn dropped_boundary_edges_still_connect() {
        // All of vertex 3's edges go to other boundary vertices; the graph is
        // connected through them even though they are dropped from storage.
        let g = WeightedGraph::build(
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
            &[0, 2, 3],
            &GraphOptions::default(),
        )
        .unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.dropped_boundary_edges(), 1);
    }

    #[test]
    fn weight_validation() {
        let zero = WeightedGraph::build(&[(0, 1, 0.0)], &[0], &GraphOptions::default());
        assert!(matches!(zero, Err(GraphError::NonpositiveWeight { .. })));
        let big = WeightedGraph::build(&[(0, 1, 1.5)], &[0], &GraphOptions::default());
        assert!(matches!(big, Err(GraphError::WeightAboveOne { .. })));
    }

    #[test]
    fn empty_boundary_is_rejected() {
        let err = WeightedGraph::build(&[(0, 1, 1.0)], &[], &GraphOptions::default()).unwrap_err();
        assert!(matches!(err, GraphError::EmptyBoundary));
    }

    #[test]
    fn duplicate_edges_are_rejected() {
        let err = WeightedGraph::build(
            &[(0, 1, 1.0), (1, 0, 0.5)],
            &[0],
            &GraphOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DuplicateEdge { u: 0, v: 1 }));
    }

    #[test]
    fn neighbors_sorted_ascending() {
        let g = WeightedGraph::build(
            &[(1, 3, 0.5), (1, 0, 1.0), (1, 2, 0.25)],
            &[0, 2, 3],
            &GraphOptions::default(),
        )
        .unwrap();
        assert_eq!(g.neighbors(1).unwrap(), &[(0, 1.0), (2, 0.25), (3, 0.5)]);
        assert!(matches!(
            g.neighbors(9),
            Err(GraphError::BadVertexId { v: 9, n: 4 })
        ));
    }

    #[test]
    fn self_loop_option_appears_in_neighbor_list() {
        let mut options = GraphOptions::default();
        options.self_loops.insert(1, 0.75);
        let g = WeightedGraph::build(&[(0, 1, 1.0), (1, 2, 1.0)], &[0, 2], &options).unwrap();
        assert_eq!(g.neighbors(1).unwrap(), &[(0, 1.0), (1, 0.75), (2, 1.0)]);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn boundary_self_loop_is_dropped() {
        let g = WeightedGraph::build(
            &[(0, 1, 1.0), (1, 2, 1.0), (0, 0, 0.5)],
            &[0, 2],
            &GraphOptions::default(),
        )
        .unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.dropped_boundary_edges(), 1);
    }

    #[test]
    fn grid4_line_matches_path() {
        let g = WeightedGraph::grid4(1, 3, &[true, false, true], 1.0).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.interior(), &[1]);
        assert_eq!(g.boundary(), &[0, 2]);
    }

    #[test]
    fn grid4_three_by_three_corners_known() {
        let mut known = vec![false; 9];
        for idx in [0, 2, 6, 8] {
            known[idx] = true;
        }
        let g = WeightedGraph::grid4(3, 3, &known, 1.0).unwrap();
        // 12 grid edges; no two known corners are 4-adjacent, so none drop.
        assert_eq!(g.edge_count(), 12);
        assert_eq!(g.dropped_boundary_edges(), 0);
        assert_eq!(g.interior().len(), 5);
    }

    #[test]
    fn grid4_degenerate_masks() {
        assert!(matches!(
            WeightedGraph::grid4(2, 2, &[true; 4], 1.0),
            Err(GraphError::AllKnown)
        ));
        assert!(matches!(
            WeightedGraph::grid4(2, 2, &[false; 4], 1.0),
            Err(GraphError::AllUnknown)
        ));
    }

    #[test]
    fn grid4_interior_known_region_stays_connected() {
        // Known plus-shape in the middle: all its internal edges drop, but
        // connectivity is assessed before dropping.
        let mut known = vec![false; 25];
        for idx in [7, 11, 12, 13, 17] {
            known[idx] = true;
        }
        let g = WeightedGraph::grid4(5, 5, &known, 1.0).unwrap();
        assert_eq!(g.dropped_boundary_edges(), 4);
    }

    #[test]
    fn edge_list_round_trips_bit_exactly() {
        let weights = [0.1, 1.0 / 3.0, 0.7253858861, 1e-9, 1.0];
        let edges: Vec<(usize, usize, f64)> = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| (i, i + 1, w))
            .collect();
        let g = WeightedGraph::build(&edges, &[0], &GraphOptions::default()).unwrap();
        let text = g.write_edge_list();
        let parsed = parse_edge_list(&text).unwrap();
        assert_eq!(parsed, edges);
    }

    #[test]
    fn edge_list_comments_and_errors() {
        let text = "# header\n0 1 0.5 # trailing comment\n\n1 2 1\n";
        let edges = parse_edge_list(text).unwrap();
        assert_eq!(edges, vec![(0, 1, 0.5), (1, 2, 1.0)]);
        assert!(parse_edge_list("0 1\n").is_err());
        assert!(parse_edge_list("0 1 x\n").is_err());
        assert!(parse_edge_list("0 1 0.5 7\n").is_err());
    }
}
