//! Brute-force ground truth on tiny instances.
//!
//! Everything here is deliberately slow and dumb: exhaustive product-grid
//! searches with local refinement, and central finite differences. These
//! routines exist so the fast solvers have something independent to be
//! checked against — they share no code path with the Newton or fixed-point
//! machinery beyond the metric evaluations themselves.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::function::{BoundaryData, FunctionError, InteriorInit, VertexFunction};
use crate::graph::WeightedGraph;
use crate::metrics::{lex_compare, lex_vector, llex_vector, LexVector};
use crate::midrange::{certificate, MidrangeProblem, MidrangeResult};

/// Hard cap on interior-vertices × value-dimension for the grid search.
pub const MAX_FREE_DIMS: usize = 6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{free} free scalars exceed the exhaustive-search cap of {max}")]
    TooManyFreeDims { free: usize, max: usize },
    #[error("refined optimum sits on the search-box edge (axis {axis}, value {value})")]
    BoundsTooTight { axis: usize, value: f64 },
    #[error("bad oracle configuration: {0}")]
    BadConfig(String),
    #[error("midrange grid search supports up to {max} dimensions, got {dim}")]
    DimensionTooHigh { dim: usize, max: usize },
    #[error(transparent)]
    Function(#[from] FunctionError),
}

/// Primary objective of the extension search; the other vector breaks ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleObjective {
    /// Vertexwise local Lipschitz constants over the interior.
    Llex,
    /// Edgewise weighted differences over all edges.
    Lex,
}

/// Grid-search parameters for [`brute_force_minimal_extension`].
#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Per-coordinate search interval. `None` derives the default box:
    /// boundary-value range padded by the boundary diameter on both sides.
    /// User-supplied bounds must contain that default box.
    pub value_bounds: Option<Vec<(f64, f64)>>,
    /// Grid points per axis at every level.
    pub initial_grid: usize,
    /// Rounds of local refinement around the incumbent.
    pub refine_levels: usize,
    /// Box-width shrink factor per refinement round.
    pub refine_shrink: f64,
    pub objective: OracleObjective,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            value_bounds: None,
            initial_grid: 21,
            refine_levels: 8,
            refine_shrink: 0.2,
            objective: OracleObjective::Llex,
        }
    }
}

/// Output of the exhaustive search, with the resolution it was run at.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub function: VertexFunction,
    /// Largest final-grid spacing over all axes; near-ties during the
    /// search were grouped at this scale, so downstream comparisons should
    /// allow a small multiple of it.
    pub final_spacing: f64,
    pub primary: LexVector,
    pub secondary: LexVector,
}

/// Incumbent of a grid scan: linear index, flat interior values, and the
/// two objective vectors at that point.
#[derive(Clone)]
struct Incumbent {
    lin: usize,
    values: Vec<f64>,
    primary: LexVector,
    secondary: LexVector,
}

/// Exhaustively minimizes the chosen lexicographic objective over a product
/// grid of interior values, then refines locally around the incumbent.
///
/// The search box defaults to the boundary-value range padded by the
/// boundary diameter per coordinate — minimal extensions stay in the convex
/// hull of the boundary values, and the padding guards that claim instead
/// of assuming it (an incumbent that ends up on the box edge is an error,
/// not an answer).
pub fn brute_force_minimal_extension(
    graph: &Arc<WeightedGraph>,
    g: &BoundaryData,
    cfg: &OracleConfig,
) -> Result<OracleSolution, OracleError> {
    let m = g.dim();
    let n_int = graph.interior().len();
    let q = n_int * m;
    if q > MAX_FREE_DIMS {
        return Err(OracleError::TooManyFreeDims {
            free: q,
            max: MAX_FREE_DIMS,
        });
    }
    if cfg.initial_grid < 3 {
        return Err(OracleError::BadConfig(format!(
            "initial_grid must be at least 3, got {}",
            cfg.initial_grid
        )));
    }
    if !(cfg.refine_shrink > 0.0 && cfg.refine_shrink < 1.0) {
        return Err(OracleError::BadConfig(format!(
            "refine_shrink must lie in (0,1), got {}",
            cfg.refine_shrink
        )));
    }

    // Per-coordinate value range over the boundary, and its diameter.
    let mut lo_d = vec![f64::INFINITY; m];
    let mut hi_d = vec![f64::NEG_INFINITY; m];
    for (_, vals) in g.iter() {
        for d in 0..m {
            lo_d[d] = lo_d[d].min(vals[d]);
            hi_d[d] = hi_d[d].max(vals[d]);
        }
    }
    let dia = g.diameter();

    if dia == 0.0 {
        // All boundary values identical: the constant extension is exact.
        let value = g.iter().next().map(|(_, v)| v.to_vec()).unwrap_or_default();
        let f = VertexFunction::from_boundary(graph, g, InteriorInit::Constant(value))?;
        let primary = objective_vector(&f, cfg.objective);
        let secondary = objective_vector(&f, other_objective(cfg.objective));
        return Ok(OracleSolution {
            function: f,
            final_spacing: 0.0,
            primary,
            secondary,
        });
    }

    let default_bounds: Vec<(f64, f64)> =
        (0..m).map(|d| (lo_d[d] - dia, hi_d[d] + dia)).collect();
    let dim_bounds = match &cfg.value_bounds {
        None => default_bounds.clone(),
        Some(bounds) => {
            if bounds.len() != m {
                return Err(OracleError::BadConfig(format!(
                    "value_bounds has {} intervals for {}-dimensional values",
                    bounds.len(),
                    m
                )));
            }
            for (d, &(lo, hi)) in bounds.iter().enumerate() {
                let slack = 1e-12 * (1.0 + dia);
                if lo > default_bounds[d].0 + slack || hi < default_bounds[d].1 - slack {
                    return Err(OracleError::BadConfig(format!(
                        "value_bounds[{d}] = [{lo}, {hi}] does not contain the padded \
                         boundary range [{}, {}]",
                        default_bounds[d].0, default_bounds[d].1
                    )));
                }
            }
            bounds.clone()
        }
    };

    // Per-axis boxes; axis s holds coordinate s % m of interior vertex s / m.
    let grid = cfg.initial_grid;
    let mut boxes: Vec<(f64, f64)> = (0..q).map(|s| dim_bounds[s % m]).collect();
    let original = boxes.clone();

    // Reported resolution of the search: the coarsest final-level spacing
    // over all axes. Comparisons during the search are exact — grouping
    // near-ties at any positive resolution lets the scan trade a tiny
    // worsening of a leading entry for a large improvement of a later one
    // and drift far along nearly flat valleys of the leading entries.
    let shrink_total = cfg.refine_shrink.powi(cfg.refine_levels as i32);
    let final_spacing = boxes
        .iter()
        .map(|&(lo, hi)| (hi - lo) * shrink_total / (grid - 1) as f64)
        .fold(0.0f64, f64::max);

    let mut work = VertexFunction::from_boundary(graph, g, InteriorInit::BoundaryMean)?;
    let mut best: Option<Incumbent> = None;

    for level in 0..=cfg.refine_levels {
        if level > 0 {
            let incumbent = best.as_ref().expect("level 0 always sets an incumbent");
            for s in 0..q {
                let width = (boxes[s].1 - boxes[s].0) * cfg.refine_shrink;
                let center = incumbent.values[s];
                let lo = (center - width / 2.0).max(original[s].0);
                let hi = (center + width / 2.0).min(original[s].1);
                boxes[s] = (lo, hi);
            }
        }
        let level_best = scan_grid(graph, g, &boxes, grid, cfg.objective, &mut work);
        best = Some(match best {
            None => level_best,
            Some(prev) => prefer(level_best, prev),
        });
    }

    let incumbent = best.expect("at least one level ran");
    for s in 0..q {
        let v = incumbent.values[s];
        if v - original[s].0 <= final_spacing || original[s].1 - v <= final_spacing {
            return Err(OracleError::BoundsTooTight { axis: s, value: v });
        }
    }

    work.set_interior_values(&incumbent.values);
    Ok(OracleSolution {
        function: work,
        final_spacing,
        primary: incumbent.primary,
        secondary: incumbent.secondary,
    })
}

fn other_objective(obj: OracleObjective) -> OracleObjective {
    match obj {
        OracleObjective::Llex => OracleObjective::Lex,
        OracleObjective::Lex => OracleObjective::Llex,
    }
}

fn objective_vector(f: &VertexFunction, obj: OracleObjective) -> LexVector {
    match obj {
        OracleObjective::Llex => llex_vector(f),
        OracleObjective::Lex => lex_vector(f),
    }
}

/// `a` better than `b`? Primary vector first, secondary on exact ties,
/// lower linear index on full ties. Returns the preferred incumbent.
fn prefer(a: Incumbent, b: Incumbent) -> Incumbent {
    match lex_compare(&a.primary, &b.primary, 0.0) {
        Ok(std::cmp::Ordering::Less) => a,
        Ok(std::cmp::Ordering::Greater) => b,
        _ => match lex_compare(&a.secondary, &b.secondary, 0.0) {
            Ok(std::cmp::Ordering::Less) => a,
            Ok(std::cmp::Ordering::Greater) => b,
            _ => {
                if a.lin <= b.lin {
                    a
                } else {
                    b
                }
            }
        },
    }
}

/// Scans one product grid, returning the best point. Parallel over fixed
/// index chunks with an ordered merge, so the result does not depend on the
/// thread count.
fn scan_grid(
    graph: &Arc<WeightedGraph>,
    g: &BoundaryData,
    boxes: &[(f64, f64)],
    grid: usize,
    objective: OracleObjective,
    work: &mut VertexFunction,
) -> Incumbent {
    let q = boxes.len();
    let total = grid.checked_pow(q as u32).expect("grid size overflow");
    let axes: Vec<Vec<f64>> = boxes
        .iter()
        .map(|&(lo, hi)| {
            (0..grid)
                .map(|t| lo + (hi - lo) * t as f64 / (grid - 1) as f64)
                .collect()
        })
        .collect();

    let scan_range = |range: std::ops::Range<usize>, work: &mut VertexFunction| -> Incumbent {
        let mut values = vec![0.0f64; q];
        let mut best: Option<Incumbent> = None;
        for lin in range {
            let mut rem = lin;
            for s in (0..q).rev() {
                values[s] = axes[s][rem % grid];
                rem /= grid;
            }
            work.set_interior_values(&values);
            let primary = objective_vector(work, objective);
            let adopt = match &best {
                None => true,
                Some(b) => match lex_compare(&primary, &b.primary, 0.0) {
                    Ok(std::cmp::Ordering::Less) => true,
                    Ok(std::cmp::Ordering::Greater) => false,
                    _ => {
                        let secondary = objective_vector(work, other_objective(objective));
                        matches!(
                            lex_compare(&secondary, &b.secondary, 0.0),
                            Ok(std::cmp::Ordering::Less)
                        )
                    }
                },
            };
            if adopt {
                let secondary = objective_vector(work, other_objective(objective));
                best = Some(Incumbent {
                    lin,
                    values: values.clone(),
                    primary,
                    secondary,
                });
            }
        }
        best.expect("non-empty range")
    };

    const CHUNK: usize = 8192;
    if total <= 2 * CHUNK {
        return scan_range(0..total, work);
    }

    let n_chunks = total.div_ceil(CHUNK);
    let chunk_bests: Vec<Incumbent> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = VertexFunction::from_boundary(graph, g, InteriorInit::BoundaryMean)
                .expect("boundary data already validated");
            scan_range(c * CHUNK..((c + 1) * CHUNK).min(total), &mut local)
        })
        .collect();
    chunk_bests
        .into_iter()
        .reduce(prefer)
        .expect("at least one chunk")
}

/// Central finite differences of a scalar field, one coordinate at a time.
pub fn finite_difference_gradient<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0f64; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Dense grid search for the weighted midrange: the bounding box of the
/// points padded by their diameter, scanned at `resolution`, then two local
/// refinement passes at 20x finer spacing each.
pub fn grid_midrange_oracle(
    prob: &MidrangeProblem,
    resolution: f64,
) -> Result<MidrangeResult, OracleError> {
    let m = prob.dim();
    if m > 3 {
        return Err(OracleError::DimensionTooHigh { dim: m, max: 3 });
    }
    if !(resolution > 0.0) {
        return Err(OracleError::BadConfig(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let k = prob.len();
    let mut dia = 0.0f64;
    for i in 0..k {
        for j in (i + 1)..k {
            let d2: f64 = prob
                .point(i)
                .iter()
                .zip(prob.point(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dia = dia.max(d2.sqrt());
        }
    }
    if dia == 0.0 {
        return Ok(MidrangeResult {
            center: prob.point(0).to_vec(),
            radius: 0.0,
            active_set: (0..k).collect(),
            iterations: 0,
            certificate: 0.0,
        });
    }

    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for i in 0..k {
        for d in 0..m {
            lo[d] = lo[d].min(prob.point(i)[d]);
            hi[d] = hi[d].max(prob.point(i)[d]);
        }
    }
    for d in 0..m {
        lo[d] -= dia;
        hi[d] += dia;
    }
    let outer = (lo.clone(), hi.clone());

    let scan = |lo: &[f64], hi: &[f64], spacing: f64, best: &mut Vec<f64>, best_r: &mut f64| {
        let counts: Vec<usize> = (0..m)
            .map(|d| (((hi[d] - lo[d]) / spacing).ceil() as usize + 1).max(2))
            .collect();
        let total: usize = counts.iter().product();
        let mut a = vec![0.0f64; m];
        for lin in 0..total {
            let mut rem = lin;
            for d in (0..m).rev() {
                let t = rem % counts[d];
                rem /= counts[d];
                a[d] = lo[d] + (hi[d] - lo[d]) * t as f64 / (counts[d] - 1) as f64;
            }
            let r = prob.radius(&a);
            if r < *best_r {
                *best_r = r;
                best.copy_from_slice(&a);
            }
        }
    };

    let mut best = vec![0.0f64; m];
    let mut best_r = f64::INFINITY;
    let mut spacing = resolution;
    scan(&lo, &hi, spacing, &mut best, &mut best_r);
    for _ in 0..2 {
        let prev = spacing;
        spacing /= 20.0;
        let lo: Vec<f64> = (0..m)
            .map(|d| (best[d] - 3.0 * prev).max(outer.0[d]))
            .collect();
        let hi: Vec<f64> = (0..m)
            .map(|d| (best[d] + 3.0 * prev).min(outer.1[d]))
            .collect();
        scan(&lo, &hi, spacing, &mut best, &mut best_r);
    }

    Ok(MidrangeResult {
        radius: prob.radius(&best),
        active_set: prob.active_set(&best),
        iterations: 0,
        certificate: certificate(prob, &best),
        center: best,
    })
}
