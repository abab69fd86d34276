//! Fixed-point schemes built on the weighted midrange filter: averaged
//! (Krasnoselskii-Mann) sweeps, cyclic single-vertex sweeps, and the scalar
//! infinity-Laplacian iteration.
//!
//! All of them drive the interior values toward functions that are
//! infinity-harmonic — each interior value the weighted midrange of its
//! neighbors — which for scalar data is exactly the minimal Lipschitz
//! extension. The averaged and infinity-Laplacian schemes update every
//! vertex simultaneously from a frozen snapshot; the cyclic scheme updates
//! one vertex at a time and sees its own earlier updates within a sweep.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::function::{BoundaryData, FunctionError, InteriorInit, VertexFunction};
use crate::graph::WeightedGraph;
use crate::metrics::{energy_inf, llex_vector};
use crate::midrange::{
    scalar_midrange, vector_midrange, MidrangeConfig, MidrangeError, MidrangeProblem,
};
use std::sync::Arc;

#[derive(Debug, Error)]
pub enum FixedPointError {
    #[error("operation requires scalar values, function has dimension {dim}")]
    NotScalar { dim: usize },
    #[error("vertex {u} is a boundary vertex")]
    BoundaryVertex { u: usize },
    #[error("tau = {tau} outside the valid range {need}")]
    BadTau { tau: f64, need: &'static str },
    #[error("config mode does not match this iteration (expected {expected})")]
    WrongMode { expected: &'static str },
    #[error("midrange solve failed at vertex {u}: {source}")]
    Midrange {
        u: usize,
        source: MidrangeError,
    },
    #[error(transparent)]
    Function(#[from] FunctionError),
}

/// Visit order of the cyclic sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOrder {
    /// Interior vertices in ascending id order.
    Sequential,
    /// A fresh seeded permutation every sweep.
    RandomCyclic(u64),
}

/// Which scheme a config is meant for: simultaneous (Jacobi-style) updates
/// from a snapshot, or in-place single-vertex (Gauss-Seidel-style) updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationMode {
    Jacobi,
    GaussSeidel,
}

#[derive(Debug, Clone)]
pub struct IterationConfig {
    /// Relaxation factor. Simultaneous schemes need `tau` in (0,1); the
    /// cyclic scheme allows `tau = 1` (full replacement).
    pub tau: f64,
    /// Stopping tolerance on the per-sweep movement `max_u |delta(u)|_2`.
    /// `None` uses `1e-8 * (1 + max_u |g(u)|_2)` over the boundary data.
    pub tol: Option<f64>,
    pub max_sweeps: usize,
    pub order: UpdateOrder,
    pub mode: IterationMode,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            tau: 0.95,
            tol: None,
            max_sweeps: 200_000,
            order: UpdateOrder::Sequential,
            mode: IterationMode::Jacobi,
        }
    }
}

impl IterationConfig {
    /// Stock config for the cyclic sweep: full replacement updates.
    pub fn cyclic() -> Self {
        IterationConfig {
            tau: 1.0,
            mode: IterationMode::GaussSeidel,
            ..IterationConfig::default()
        }
    }

    fn effective_tol(&self, f: &VertexFunction) -> f64 {
        self.tol.unwrap_or_else(|| {
            let graph = f.graph();
            let gnorm = graph
                .boundary()
                .iter()
                .map(|&u| {
                    f.value(u)
                        .iter()
                        .map(|x| x * x)
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0f64, f64::max);
            1e-8 * (1.0 + gnorm)
        })
    }
}

/// How an iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationStatus {
    Converged,
    /// Budget ran out; the result holds the best iterate and its residual.
    MaxSweepsExceeded,
}

/// One diagnostics row per sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub sweep: usize,
    pub residual: f64,
    pub e_inf: f64,
    pub llex_head: f64,
}

#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    pub rows: Vec<SweepRow>,
}

impl IterationTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep,residual,E_inf,llex_head\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                r.sweep, r.residual, r.e_inf, r.llex_head
            ));
        }
        out
    }
}

/// Result of an iterate-to-tolerance run.
#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub function: VertexFunction,
    pub status: IterationStatus,
    pub sweeps: usize,
    /// Movement of the final sweep.
    pub residual: f64,
    pub trace: IterationTrace,
}

/// The weighted midrange of the neighbor values at interior vertex `u`
/// (the vertex's own value participates when it carries a self-loop).
pub fn midr_value(f: &VertexFunction, u: usize) -> Result<Vec<f64>, FixedPointError> {
    let graph = f.graph();
    if graph.is_boundary(u) {
        return Err(FixedPointError::BoundaryVertex { u });
    }
    let m = f.dim();
    let neigh = graph.adj(u);
    let mut points = Vec::with_capacity(neigh.len() * m);
    let mut weights = Vec::with_capacity(neigh.len());
    for &(v, w) in neigh {
        points.extend_from_slice(f.value(v));
        weights.push(w);
    }
    let prob = MidrangeProblem::new(m, points, weights)
        .map_err(|source| FixedPointError::Midrange { u, source })?;
    let result = if m == 1 {
        scalar_midrange(&prob)
    } else {
        vector_midrange(&prob, &MidrangeConfig::default())
    };
    result
        .map(|r| r.center)
        .map_err(|source| FixedPointError::Midrange { u, source })
}

/// Applies the midrange filter to every interior vertex simultaneously,
/// reading a frozen snapshot of `f`.
pub fn apply_midr(f: &VertexFunction) -> Result<VertexFunction, FixedPointError> {
    let graph = f.graph();
    let interior = graph.interior();
    let centers: Result<Vec<Vec<f64>>, FixedPointError> = if interior.len() >= 64 {
        interior
            .par_iter()
            .map(|&u| midr_value(f, u))
            .collect()
    } else {
        interior.iter().map(|&u| midr_value(f, u)).collect()
    };
    let centers = centers?;
    let mut out = f.clone();
    let flat: Vec<f64> = centers.into_iter().flatten().collect();
    out.set_interior_values(&flat);
    Ok(out)
}

/// Averaged fixed-point iteration `f <- f + tau (Midr f - f)`, `tau` in
/// (0,1), until the per-sweep movement drops below tolerance.
pub fn km_iterate(
    f0: &VertexFunction,
    cfg: &IterationConfig,
) -> Result<FixedPointResult, FixedPointError> {
    if cfg.mode != IterationMode::Jacobi {
        return Err(FixedPointError::WrongMode { expected: "jacobi" });
    }
    if !(cfg.tau > 0.0 && cfg.tau < 1.0) {
        return Err(FixedPointError::BadTau {
            tau: cfg.tau,
            need: "(0,1)",
        });
    }
    let tol = cfg.effective_tol(f0);
    let mut f = f0.clone();
    let mut trace = IterationTrace::default();
    let mut residual = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        let target = apply_midr(&f)?;
        let mut next = f.interior_values();
        let tv = target.interior_values();
        for (n, t) in next.iter_mut().zip(&tv) {
            *n += cfg.tau * (t - *n);
        }
        let mut moved = f.clone();
        moved.set_interior_values(&next);
        residual = moved.sup_distance(&f);
        f = moved;
        trace.rows.push(SweepRow {
            sweep,
            residual,
            e_inf: energy_inf(&f),
            llex_head: llex_vector(&f).head(),
        });
        if residual <= tol {
            return Ok(FixedPointResult {
                function: f,
                status: IterationStatus::Converged,
                sweeps: sweep,
                residual,
                trace,
            });
        }
    }
    Ok(FixedPointResult {
        function: f,
        status: IterationStatus::MaxSweepsExceeded,
        sweeps: cfg.max_sweeps,
        residual,
        trace,
    })
}

/// Cyclic (Gauss-Seidel) sweep: single-vertex midrange updates in the
/// configured order, each seeing earlier updates of the same sweep;
/// `tau` in (0,1].
pub fn cyclic_iterate(
    f0: &VertexFunction,
    cfg: &IterationConfig,
) -> Result<FixedPointResult, FixedPointError> {
    if cfg.mode != IterationMode::GaussSeidel {
        return Err(FixedPointError::WrongMode {
            expected: "gauss_seidel",
        });
    }
    if !(cfg.tau > 0.0 && cfg.tau <= 1.0) {
        return Err(FixedPointError::BadTau {
            tau: cfg.tau,
            need: "(0,1]",
        });
    }
    let tol = cfg.effective_tol(f0);
    let m = f0.dim();
    let mut f = f0.clone();
    let mut trace = IterationTrace::default();
    let mut order: Vec<usize> = f.graph().interior().to_vec();
    let mut rng = match cfg.order {
        UpdateOrder::Sequential => None,
        UpdateOrder::RandomCyclic(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut residual = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut max_move = 0.0f64;
        for &u in &order {
            let target = midr_value(&f, u)?;
            let old = f.value(u).to_vec();
            let mut newv = vec![0.0f64; m];
            let mut move2 = 0.0f64;
            for i in 0..m {
                newv[i] = old[i] + cfg.tau * (target[i] - old[i]);
                move2 += (newv[i] - old[i]) * (newv[i] - old[i]);
            }
            f.set_interior(u, &newv)?;
            max_move = max_move.max(move2.sqrt());
        }
        residual = max_move;
        trace.rows.push(SweepRow {
            sweep,
            residual,
            e_inf: energy_inf(&f),
            llex_head: llex_vector(&f).head(),
        });
        if residual <= tol {
            return Ok(FixedPointResult {
                function: f,
                status: IterationStatus::Converged,
                sweeps: sweep,
                residual,
                trace,
            });
        }
    }
    Ok(FixedPointResult {
        function: f,
        status: IterationStatus::MaxSweepsExceeded,
        sweeps: cfg.max_sweeps,
        residual,
        trace,
    })
}

/// The scalar infinity-Laplacian at interior `u`: half the sum of the
/// largest and smallest weighted signed differences to the neighbors.
pub fn inf_laplacian(f: &VertexFunction, u: usize) -> Result<f64, FixedPointError> {
    if f.dim() != 1 {
        return Err(FixedPointError::NotScalar { dim: f.dim() });
    }
    let graph = f.graph();
    if graph.is_boundary(u) {
        return Err(FixedPointError::BoundaryVertex { u });
    }
    let fu = f.value(u)[0];
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &(v, w) in graph.adj(u) {
        let d = w * (f.value(v)[0] - fu);
        hi = hi.max(d);
        lo = lo.min(d);
    }
    Ok(0.5 * (hi + lo))
}

/// Scalar iteration `f <- f + tau * inf_laplacian(f)`, simultaneous over
/// the interior, `tau` in (0,1).
pub fn inf_laplacian_iterate(
    f0: &VertexFunction,
    cfg: &IterationConfig,
) -> Result<FixedPointResult, FixedPointError> {
    if f0.dim() != 1 {
        return Err(FixedPointError::NotScalar { dim: f0.dim() });
    }
    if !(cfg.tau > 0.0 && cfg.tau < 1.0) {
        return Err(FixedPointError::BadTau {
            tau: cfg.tau,
            need: "(0,1)",
        });
    }
    let tol = cfg.effective_tol(f0);
    let mut f = f0.clone();
    let interior: Vec<usize> = f.graph().interior().to_vec();
    let mut trace = IterationTrace::default();
    let mut residual = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        let deltas: Result<Vec<f64>, FixedPointError> =
            interior.iter().map(|&u| inf_laplacian(&f, u)).collect();
        let deltas = deltas?;
        let mut vals = f.interior_values();
        let mut max_move = 0.0f64;
        for (x, d) in vals.iter_mut().zip(&deltas) {
            let step = cfg.tau * d;
            *x += step;
            max_move = max_move.max(step.abs());
        }
        f.set_interior_values(&vals);
        residual = max_move;
        trace.rows.push(SweepRow {
            sweep,
            residual,
            e_inf: energy_inf(&f),
            llex_head: llex_vector(&f).head(),
        });
        if residual <= tol {
            return Ok(FixedPointResult {
                function: f,
                status: IterationStatus::Converged,
                sweeps: sweep,
                residual,
                trace,
            });
        }
    }
    Ok(FixedPointResult {
        function: f,
        status: IterationStatus::MaxSweepsExceeded,
        sweeps: cfg.max_sweeps,
        residual,
        trace,
    })
}

/// Runs the scalar infinity-Laplacian iteration independently on each of
/// the `m` coordinates of the boundary data and stacks the results.
pub fn componentwise_extension(
    graph: &Arc<WeightedGraph>,
    g: &BoundaryData,
    cfg: &IterationConfig,
) -> Result<FixedPointResult, FixedPointError> {
    let m = g.dim();
    let mut stacked = VertexFunction::from_boundary(graph, g, InteriorInit::BoundaryMean)?;
    let mut status = IterationStatus::Converged;
    let mut sweeps = 0usize;
    let mut residual = 0.0f64;
    for d in 0..m {
        let mut gd = BoundaryData::new(1);
        for (u, vals) in g.iter() {
            gd.insert(u, vec![vals[d]])?;
        }
        let f0 = VertexFunction::from_boundary(graph, &gd, InteriorInit::BoundaryMean)?;
        let out = inf_laplacian_iterate(&f0, cfg)?;
        if out.status == IterationStatus::MaxSweepsExceeded {
            status = IterationStatus::MaxSweepsExceeded;
        }
        sweeps = sweeps.max(out.sweeps);
        residual = residual.max(out.residual);
        for &u in graph.interior() {
            let mut cur = stacked.value(u).to_vec();
            cur[d] = out.function.value(u)[0];
            stacked.set_interior(u, &cur)?;
        }
    }
    Ok(FixedPointResult {
        function: stacked,
        status,
        sweeps,
        residual,
        trace: IterationTrace::default(),
    })
}
