//! Vertex functions `f: V -> R^m` and boundary data `g: U -> R^m`.
//!
//! A [`VertexFunction`] owns one value per vertex and shares its graph via
//! `Arc`, so cloning a function (the snapshot mechanism of the iterative
//! solvers) is a flat copy of the value buffer. Boundary values are written
//! once at construction; the mutation API only reaches interior vertices, so
//! `f = g` on the boundary holds at all times by construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::WeightedGraph;

#[derive(Debug, Error)]
pub enum FunctionError {
    #[error("boundary data covers {got} vertices, graph boundary has {want}")]
    BoundaryMismatch { got: usize, want: usize },
    #[error("vertex {u} is missing from the boundary data")]
    MissingBoundaryValue { u: usize },
    #[error("value for vertex {u} has {got} components, expected {want}")]
    DimensionMismatch { u: usize, got: usize, want: usize },
    #[error("vertex {u} is a boundary vertex and cannot be assigned")]
    BoundaryVertex { u: usize },
    #[error("vertex id {v} out of range for graph with {n} vertices")]
    BadVertexId { v: usize, n: usize },
    #[error("boundary data line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Prescribed values on the boundary set, `m` components per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    dim: usize,
    values: BTreeMap<usize, Vec<f64>>,
}

impl BoundaryData {
    pub fn new(dim: usize) -> Self {
        BoundaryData {
            dim,
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, u: usize, value: Vec<f64>) -> Result<(), FunctionError> {
        if value.len() != self.dim {
            return Err(FunctionError::DimensionMismatch {
                u,
                got: value.len(),
                want: self.dim,
            });
        }
        self.values.insert(u, value);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, u: usize) -> Option<&[f64]> {
        self.values.get(&u).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.values.iter().map(|(&u, v)| (u, v.as_slice()))
    }

    /// Componentwise mean of the boundary values.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for value in self.values.values() {
            for (m, x) in mean.iter_mut().zip(value) {
                *m += x;
            }
        }
        let count = self.values.len().max(1) as f64;
        for m in &mut mean {
            *m /= count;
        }
        mean
    }

    /// Largest pairwise Euclidean distance between boundary values.
    pub fn diameter(&self) -> f64 {
        let vals: Vec<&Vec<f64>> = self.values.values().collect();
        let mut diam = 0.0f64;
        for i in 0..vals.len() {
            for j in (i + 1)..vals.len() {
                let d: f64 = vals[i]
                    .iter()
                    .zip(vals[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                diam = diam.max(d.sqrt());
            }
        }
        diam
    }

    /// Parses the `u x_1 ... x_m` text format; `m` is inferred from the first
    /// data line and enforced on the rest. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, FunctionError> {
        let mut dim: Option<usize> = None;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let mut parts = line.split_whitespace();
            let Some(id) = parts.next() else { continue };
            let u: usize = id.parse().map_err(|e| FunctionError::Parse {
                line: i + 1,
                msg: format!("bad vertex id {id:?}: {e}"),
            })?;
            let mut value = Vec::new();
            for p in parts {
                let x: f64 = p.parse().map_err(|e| FunctionError::Parse {
                    line: i + 1,
                    msg: format!("bad value {p:?}: {e}"),
                })?;
                value.push(x);
            }
            if value.is_empty() {
                return Err(FunctionError::Parse {
                    line: i + 1,
                    msg: "expected `u x_1 ... x_m`".into(),
                });
            }
            match dim {
                None => dim = Some(value.len()),
                Some(d) if d != value.len() => {
                    return Err(FunctionError::Parse {
                        line: i + 1,
                        msg: format!("expected {d} components, found {}", value.len()),
                    })
                }
                _ => {}
            }
            values.insert(u, value);
        }
        Ok(BoundaryData {
            dim: dim.unwrap_or(1),
            values,
        })
    }

    /// Serializes in the `u x_1 ... x_m` format with bit-exact round-trip.
    pub fn write(&self) -> String {
        let mut out = String::new();
        for (u, value) in &self.values {
            out.push_str(&u.to_string());
            for x in value {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// How to fill interior values at construction.
#[derive(Debug, Clone)]
pub enum InteriorInit {
    Zeros,
    /// Componentwise mean of the boundary values.
    BoundaryMean,
    Constant(Vec<f64>),
}

/// A function `V -> R^m` tied to a graph, with pinned boundary values.
#[derive(Debug, Clone)]
pub struct VertexFunction {
    graph: Arc<WeightedGraph>,
    dim: usize,
    values: Vec<f64>,
}

impl VertexFunction {
    /// Creates a function equal to `g` on the boundary, with interior values
    /// per `init`. The boundary data must cover the graph boundary exactly.
    pub fn from_boundary(
        graph: &Arc<WeightedGraph>,
        g: &BoundaryData,
        init: InteriorInit,
    ) -> Result<Self, FunctionError> {
        if g.len() != graph.boundary().len() {
            return Err(FunctionError::BoundaryMismatch {
                got: g.len(),
                want: graph.boundary().len(),
            });
        }
        let dim = g.dim();
        let fill = match &init {
            InteriorInit::Zeros => vec![0.0; dim],
            InteriorInit::BoundaryMean => g.mean(),
            InteriorInit::Constant(c) => {
                if c.len() != dim {
                    return Err(FunctionError::DimensionMismatch {
                        u: 0,
                        got: c.len(),
                        want: dim,
                    });
                }
                c.clone()
            }
        };
        let n = graph.vertex_count();
        let mut values = Vec::with_capacity(n * dim);
        for u in 0..n {
            if graph.is_boundary(u) {
                let v = g
                    .get(u)
                    .ok_or(FunctionError::MissingBoundaryValue { u })?;
                values.extend_from_slice(v);
            } else {
                values.extend_from_slice(&fill);
            }
        }
        Ok(VertexFunction {
            graph: Arc::clone(graph),
            dim,
            values,
        })
    }

    pub fn graph(&self) -> &Arc<WeightedGraph> {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value at vertex `u` as a slice of `m` components.
    pub fn value(&self, u: usize) -> &[f64] {
        &self.values[u * self.dim..(u + 1) * self.dim]
    }

    /// Overwrites the value at interior vertex `u`.
    pub fn set_interior(&mut self, u: usize, value: &[f64]) -> Result<(), FunctionError> {
        if u >= self.graph.vertex_count() {
            return Err(FunctionError::BadVertexId {
                v: u,
                n: self.graph.vertex_count(),
            });
        }
        if self.graph.is_boundary(u) {
            return Err(FunctionError::BoundaryVertex { u });
        }
        if value.len() != self.dim {
            return Err(FunctionError::DimensionMismatch {
                u,
                got: value.len(),
                want: self.dim,
            });
        }
        self.values[u * self.dim..(u + 1) * self.dim].copy_from_slice(value);
        Ok(())
    }

    /// Flat value buffer, row-major `[vertex][component]`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interior values flattened in [`WeightedGraph::interior`] order.
    pub fn interior_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.graph.interior().len() * self.dim);
        for &u in self.graph.interior() {
            out.extend_from_slice(self.value(u));
        }
        out
    }

    /// Overwrites all interior values from a flat buffer in interior order.
    pub fn set_interior_values(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.graph.interior().len() * self.dim);
        for (i, &u) in self.graph.interior().iter().enumerate() {
            let src = &flat[i * self.dim..(i + 1) * self.dim];
            self.values[u * self.dim..(u + 1) * self.dim].copy_from_slice(src);
        }
    }

    /// `max_u |f(u) - other(u)|_2`: the sup norm over vertices of Euclidean
    /// componentwise distance.
    pub fn sup_distance(&self, other: &VertexFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let n = self.graph.vertex_count();
        let mut worst = 0.0f64;
        for u in 0..n {
            let d: f64 = self
                .value(u)
                .iter()
                .zip(other.value(u))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            worst = worst.max(d);
        }
        worst.sqrt()
    }

    /// Serializes all vertex values in the `u x_1 ... x_m` format.
    pub fn write(&self) -> String {
        let mut out = String::new();
        for u in 0..self.graph.vertex_count() {
            out.push_str(&u.to_string());
            for x in self.value(u) {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }
}
