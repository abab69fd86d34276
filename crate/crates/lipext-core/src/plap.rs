//! Minimization of the `p`-energies by preconditioned damped Newton, with
//! continuation in `p`.
//!
//! The energy of an extension `f` is `E_p(f) = sum_{u,v} (w(u,v)|f(u)-f(v)|)^p`
//! over ordered vertex pairs (each edge twice). Its minimizers approach the
//! minimal Lipschitz extension as `p` grows, so the solver walks a schedule
//! of increasing `p` values, warm-starting each stage with the previous
//! minimizer and running a damped Newton iteration per stage.
//!
//! Large `p` makes the raw quantities unrepresentable: `(w|d|)^p` under- or
//! overflows long before `p = 2400`. The stage therefore works in scaled
//! units throughout. With `s` the largest weighted difference at the stage
//! start and `s_u` its per-vertex analogue, the assembled system is the
//! left-preconditioned `D H h = D grad` whose entries depend only on ratios
//! `w|d| / s_u <~ 1` raised to `p - 2`, and line-search energies are
//! `E_p / s^p`, a sum of `(w|d|/s)^p <~ 1` terms. Nothing in the hot path
//! ever evaluates an unscaled `p`-th power.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::{BoundaryData, FunctionError, InteriorInit, VertexFunction};
use crate::graph::WeightedGraph;

#[derive(Debug, Error)]
pub enum PlapError {
    #[error("exponent p = {p} is not supported (need p >= 1)")]
    BadExponent { p: f64 },
    #[error("bad continuation schedule: {0}")]
    BadSchedule(String),
    #[error("line search failed at p = {p}, Newton iteration {iter}")]
    LineSearchFailure { p: f64, iter: usize },
    #[error("Newton budget exhausted at p = {p} after {iters} iterations")]
    IterationBudgetExceeded { p: f64, iters: usize },
    #[error("linear solver breakdown (after jitter restart)")]
    LinearBreakdown,
    #[error("linear solver breakdown at p = {p}")]
    LinearBreakdownAt { p: f64 },
    #[error(transparent)]
    Function(#[from] FunctionError),
}

/// Armijo backtracking parameters: accept `x - alpha h` once the energy
/// drops by at least `c1 * alpha * <grad, h>`, halving `alpha` otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmijoParams {
    pub c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub p_target: f64,
    /// Explicit stage schedule; `None` generates [`default_schedule`].
    pub schedule: Option<Vec<f64>>,
    /// Stage stopping tolerance on the preconditioned gradient, relative to
    /// `1 +` the scaled stage-start energy.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub armijo: ArmijoParams,
    /// Preconditioner constant `c` in `(0,1]`.
    pub precond_c: f64,
    /// Relative residual target of the inner linear solver.
    pub linear_tol: f64,
    pub linear_max_iters: usize,
    /// Distance floor inside the regularized powers `|d|^{p-2}`, `|d|^{p-4}`.
    pub eps_reg: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            p_target: 2.0,
            schedule: None,
            newton_tol: 1e-9,
            max_newton_iters: 200,
            armijo: ArmijoParams::default(),
            precond_c: 1.0,
            linear_tol: 1e-10,
            linear_max_iters: 1000,
            eps_reg: 1e-30,
        }
    }
}

/// The stock continuation schedule: 2, 5, 10, 15, 20, then steps of 10,
/// ending exactly at `p_target`.
pub fn default_schedule(p_target: f64) -> Vec<f64> {
    let mut s = Vec::new();
    for v in [2.0, 5.0, 10.0, 15.0, 20.0] {
        if v < p_target {
            s.push(v);
        }
    }
    let mut v = 30.0;
    while v < p_target {
        s.push(v);
        v += 10.0;
    }
    s.push(p_target);
    s
}

fn validate_schedule(schedule: &[f64], p_target: f64) -> Result<(), PlapError> {
    if schedule.is_empty() {
        return Err(PlapError::BadSchedule("schedule is empty".into()));
    }
    if schedule[0] != 2.0 {
        return Err(PlapError::BadSchedule(format!(
            "schedule must start at 2, got {}",
            schedule[0]
        )));
    }
    if *schedule.last().unwrap() != p_target {
        return Err(PlapError::BadSchedule(format!(
            "schedule must end at p_target = {p_target}, got {}",
            schedule.last().unwrap()
        )));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PlapError::BadSchedule(
            "schedule must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `x^e` for `x >= 0` via the log domain, clamped so the result stays
/// finite. `0^0 = 1`, `0^positive = 0`.
fn powsafe(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        return 1.0;
    }
    if x == 0.0 {
        return if e > 0.0 { 0.0 } else { f64::INFINITY };
    }
    (e * x.ln()).min(700.0).exp()
}

/// Gradient of `E_p` with respect to the interior values, flattened in
/// interior order (`N * m` entries).
///
/// Component `(u, i)` is `2p sum_{v~u} w(u,v)^p |f(u)-f(v)|^{p-2}
/// (f_i(u)-f_i(v))`, with the norm power regularized by `eps_reg`. This is
/// the plain formula; it under- or overflows for extreme `p` and exists for
/// moderate exponents and as an independent cross-check of the scaled
/// assembly in the solver.
pub fn grad_energy_p(f: &VertexFunction, p: f64, eps_reg: f64) -> Result<Vec<f64>, PlapError> {
    if !(p >= 1.0) {
        return Err(PlapError::BadExponent { p });
    }
    let graph = f.graph();
    let m = f.dim();
    let interior = graph.interior();
    let mut grad = vec![0.0f64; interior.len() * m];
    for (iu, &u) in interior.iter().enumerate() {
        let fu = f.value(u);
        for &(v, w) in graph.adj(u) {
            if v == u {
                continue;
            }
            let fv = f.value(v);
            let d2: f64 = fu.iter().zip(fv).map(|(a, b)| (a - b) * (a - b)).sum();
            let dreg = (d2 + eps_reg * eps_reg).sqrt();
            // w^p |d|^{p-2} = (w dreg)^{p-2} w^2, grouped to tame the powers.
            let scale = 2.0 * p * powsafe(w * dreg, p - 2.0) * w * w;
            for i in 0..m {
                grad[iu * m + i] += scale * (fu[i] - fv[i]);
            }
        }
    }
    Ok(grad)
}

/// Symmetric-pattern block-sparse matrix over the interior vertices:
/// one `m x m` block per interior vertex (diagonal) and per interior-interior
/// edge (off-diagonal), stored CSR by interior row.
#[derive(Debug, Clone)]
pub struct BlockSparseHessian {
    m: usize,
    n: usize,
    row_offsets: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<f64>,
}

impl BlockSparseHessian {
    pub fn block_dim(&self) -> usize {
        self.m
    }

    /// Number of interior vertices (block rows).
    pub fn rows(&self) -> usize {
        self.n
    }

    /// Scalar dimension of the matrix, `rows * block_dim`.
    pub fn size(&self) -> usize {
        self.n * self.m
    }

    /// Block `(iu, iv)` in interior indices, row-major `m x m`, if present.
    pub fn block(&self, iu: usize, iv: usize) -> Option<&[f64]> {
        let mm = self.m * self.m;
        let range = self.row_offsets[iu]..self.row_offsets[iu + 1];
        self.cols[range.clone()]
            .iter()
            .position(|&c| c == iv)
            .map(|k| {
                let e = range.start + k;
                &self.blocks[e * mm..(e + 1) * mm]
            })
    }

    /// Scalar diagonal, length `size()`.
    pub fn diagonal(&self) -> Vec<f64> {
        let mm = self.m * self.m;
        let mut diag = vec![0.0f64; self.size()];
        for iu in 0..self.n {
            let range = self.row_offsets[iu]..self.row_offsets[iu + 1];
            for e in range {
                if self.cols[e] == iu {
                    for i in 0..self.m {
                        diag[iu * self.m + i] = self.blocks[e * mm + i * self.m + i];
                    }
                }
            }
        }
        diag
    }

    /// `y = H x`. Rows are independent, so the parallel path is exact.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.size());
        assert_eq!(y.len(), self.size());
        let m = self.m;
        let mm = m * m;
        let row = |iu: usize, yu: &mut [f64]| {
            yu.iter_mut().for_each(|v| *v = 0.0);
            for e in self.row_offsets[iu]..self.row_offsets[iu + 1] {
                let xv = &x[self.cols[e] * m..(self.cols[e] + 1) * m];
                let b = &self.blocks[e * mm..(e + 1) * mm];
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += b[i * m + j] * xv[j];
                    }
                    yu[i] += acc;
                }
            }
        };
        if self.size() >= 4096 {
            y.par_chunks_mut(m)
                .enumerate()
                .for_each(|(iu, yu)| row(iu, yu));
        } else {
            for (iu, yu) in y.chunks_mut(m).enumerate() {
                row(iu, yu);
            }
        }
    }

    #[cfg(test)]
    fn to_dense(&self) -> Vec<f64> {
        let s = self.size();
        let m = self.m;
        let mut dense = vec![0.0f64; s * s];
        for iu in 0..self.n {
            for iv in 0..self.n {
                if let Some(b) = self.block(iu, iv) {
                    for i in 0..m {
                        for j in 0..m {
                            dense[(iu * m + i) * s + iv * m + j] = b[i * m + j];
                        }
                    }
                }
            }
        }
        dense
    }
}

/// One assembled Newton system in stage-scaled units.
struct Assembled {
    /// `D H` — row-preconditioned Hessian (raw `H` when unit scales).
    dh: BlockSparseHessian,
    /// `D grad E_p` (raw gradient when unit scales).
    dg: Vec<f64>,
    /// `grad E_p / s_ref^p` — the gradient in line-search energy units.
    gs: Vec<f64>,
}

/// Shared assembly for the raw Hessian/gradient (unit scales) and the
/// preconditioned, stage-scaled Newton system. For interior row `u` with
/// frozen scale `s_u` and ratio `rho = w |d|_reg / s_u`, the row blocks are
/// `2 p c w^2 rho^{p-2} (I + (p-2) uu^T)` with `u = d / |d|_reg`, which is
/// exactly `D_u` times the second-derivative blocks of `E_p`.
fn assemble(
    f: &VertexFunction,
    p: f64,
    eps_reg: f64,
    s_hat: &[f64],
    c: f64,
    s_ref: f64,
) -> Assembled {
    let graph = f.graph();
    let m = f.dim();
    let mm = m * m;
    let interior = graph.interior();
    let n = interior.len();

    struct Row {
        cols: Vec<usize>,
        blocks: Vec<f64>,
        dg: Vec<f64>,
        gs: Vec<f64>,
    }

    let build_row = |iu: usize| -> Row {
        let u = interior[iu];
        let fu = f.value(u);
        let neigh = graph.adj(u);
        let mut cols: Vec<usize> = Vec::with_capacity(neigh.len() + 1);
        cols.push(iu);
        for &(v, _) in neigh {
            if v != u {
                if let Some(iv) = graph.interior_position(v) {
                    cols.push(iv);
                }
            }
        }
        cols.sort_unstable();
        let self_at = cols.binary_search(&iu).unwrap();
        let mut blocks = vec![0.0f64; cols.len() * mm];
        let mut dg = vec![0.0f64; m];
        let mut gs = vec![0.0f64; m];
        let mut uhat = vec![0.0f64; m];

        for &(v, w) in neigh {
            if v == u {
                continue;
            }
            let fv = f.value(v);
            let d2: f64 = fu.iter().zip(fv).map(|(a, b)| (a - b) * (a - b)).sum();
            let dreg = (d2 + eps_reg * eps_reg).sqrt();
            for i in 0..m {
                uhat[i] = (fu[i] - fv[i]) / dreg;
            }
            let t1 = powsafe(w * dreg / s_hat[iu], p - 2.0);
            let base = 2.0 * p * c * w * w * t1;
            // Diagonal block: + base (I + (p-2) uhat uhat^T).
            let db = &mut blocks[self_at * mm..(self_at + 1) * mm];
            for i in 0..m {
                db[i * m + i] += base;
                if p != 2.0 {
                    for j in 0..m {
                        // Group the unit-direction product so mirrored entries
                        // round identically and the assembled matrix stays
                        // bitwise symmetric.
                        db[i * m + j] += base * (p - 2.0) * (uhat[i] * uhat[j]);
                    }
                }
            }
            // Off-diagonal block for interior neighbors: the negative.
            if let Some(iv) = graph.interior_position(v) {
                let at = cols.binary_search(&iv).unwrap();
                let ob = &mut blocks[at * mm..(at + 1) * mm];
                for i in 0..m {
                    ob[i * m + i] -= base;
                    if p != 2.0 {
                        for j in 0..m {
                            ob[i * m + j] -= base * (p - 2.0) * (uhat[i] * uhat[j]);
                        }
                    }
                }
            }
            // Gradient rows: preconditioned and energy-scaled variants.
            let tr = powsafe(w * dreg / s_ref, p - 2.0);
            for i in 0..m {
                let d_i = fu[i] - fv[i];
                dg[i] += base * d_i;
                gs[i] += 2.0 * p * w * w * tr * d_i / (s_ref * s_ref);
            }
        }
        Row {
            cols,
            blocks,
            dg,
            gs,
        }
    };

    let rows: Vec<Row> = if n >= 128 {
        (0..n).into_par_iter().map(build_row).collect()
    } else {
        (0..n).map(build_row).collect()
    };

    let mut row_offsets = Vec::with_capacity(n + 1);
    row_offsets.push(0usize);
    let mut cols = Vec::new();
    let mut blocks = Vec::new();
    let mut dg = Vec::with_capacity(n * m);
    let mut gs = Vec::with_capacity(n * m);
    for row in rows {
        cols.extend_from_slice(&row.cols);
        blocks.extend_from_slice(&row.blocks);
        dg.extend_from_slice(&row.dg);
        gs.extend_from_slice(&row.gs);
        row_offsets.push(cols.len());
    }
    Assembled {
        dh: BlockSparseHessian {
            m,
            n,
            row_offsets,
            cols,
            blocks,
        },
        dg,
        gs,
    }
}

/// The exact second-derivative blocks of `E_p` at `f` (diagonal per interior
/// vertex, off-diagonal per interior-interior edge). Like [`grad_energy_p`],
/// this is the unscaled object: fine for moderate `p`, not for `p` in the
/// thousands — the solver never materializes it.
pub fn hessian_energy_p(
    f: &VertexFunction,
    p: f64,
    eps_reg: f64,
) -> Result<BlockSparseHessian, PlapError> {
    if !(p >= 1.0) {
        return Err(PlapError::BadExponent { p });
    }
    let ones = vec![1.0f64; f.graph().interior().len()];
    Ok(assemble(f, p, eps_reg, &ones, 1.0, 1.0).dh)
}

/// Diagonal preconditioner: entry `c / s_u^{p-2}` for all `m` components of
/// interior `u`, where `s_u` is the largest regularized weighted difference
/// over edges at `u`, kept away from zero.
pub fn preconditioner_d(f: &VertexFunction, p: f64, c: f64, eps_reg: f64) -> Vec<f64> {
    let m = f.dim();
    let s_hat = vertex_scales(f, eps_reg);
    let mut d = Vec::with_capacity(s_hat.len() * m);
    for &s in &s_hat {
        let val = c * powsafe(s, 2.0 - p);
        for _ in 0..m {
            d.push(val);
        }
    }
    d
}

/// Largest regularized weighted difference at each interior vertex. Uses
/// the same `sqrt(d^2 + eps^2)` regularization as the assembly, so every
/// per-edge ratio `w |d|_reg / s_u` is at most 1 (exactly 1 on the dominant
/// edge) and its `(p-2)`-th power cannot overflow at any exponent. Keeping
/// the dominant ratio at exactly 1 — rather than flooring the scale — gives
/// every row a uniform `O(p w^2)` weight, so rows of locally flat vertices
/// are not silently dropped by the linear solver's residual tolerance.
fn vertex_scales(f: &VertexFunction, eps_reg: f64) -> Vec<f64> {
    let graph = f.graph();
    graph
        .interior()
        .iter()
        .map(|&u| {
            let fu = f.value(u);
            let mut s = 0.0f64;
            for &(v, w) in graph.adj(u) {
                if v == u {
                    continue;
                }
                let d2: f64 = fu
                    .iter()
                    .zip(f.value(v))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                s = s.max(w * (d2 + eps_reg * eps_reg).sqrt());
            }
            s.max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// Largest weighted difference over all edges, floored away from zero.
fn global_scale(f: &VertexFunction) -> f64 {
    let s = f
        .graph()
        .edges()
        .iter()
        .map(|&(u, v, w)| {
            if u == v {
                0.0
            } else {
                let d2: f64 = f
                    .value(u)
                    .iter()
                    .zip(f.value(v))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                w * d2.sqrt()
            }
        })
        .fold(0.0f64, f64::max);
    if s < 1e-300 {
        1.0
    } else {
        s
    }
}

/// `E_p(f) / s_ref^p`, evaluated without ever forming an unscaled power.
/// May legitimately overflow to `+inf` during line search; the caller
/// rejects such trials.
fn scaled_energy(f: &VertexFunction, p: f64, s_ref: f64) -> f64 {
    let edges = f.graph().edges();
    let term = |&(u, v, w): &(usize, usize, f64)| -> f64 {
        if u == v {
            return 0.0;
        }
        let d2: f64 = f
            .value(u)
            .iter()
            .zip(f.value(v))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d2 == 0.0 {
            return 0.0;
        }
        2.0 * (p * (w * d2.sqrt() / s_ref).ln()).min(700.0).exp()
    };
    const CHUNK: usize = 4096;
    if edges.len() <= CHUNK {
        edges.iter().map(term).sum()
    } else {
        // Fixed-size chunks with an ordered serial combine keep the sum
        // bit-identical across thread counts.
        let partials: Vec<f64> = edges
            .par_chunks(CHUNK)
            .map(|c| c.iter().map(term).sum())
            .collect();
        partials.iter().sum()
    }
}

/// Reconstructs `v * s^p` through the log domain; may round to 0 or inf at
/// extreme `p`, which is acceptable for diagnostics.
fn unscale(v: f64, s_ref: f64, p: f64) -> f64 {
    if v <= 0.0 {
        return v;
    }
    (p * s_ref.ln() + v.ln()).exp()
}

/// Result of one inner linear solve.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual of the returned iterate.
    pub residual: f64,
    /// Whether the tolerance was met; when `false` the best iterate seen is
    /// returned and the caller may still make progress with it.
    pub converged: bool,
}

/// Solves `D H h = D rhs` by BiCGSTAB with Jacobi inner preconditioning.
///
/// The row scaling `D` makes the system nonsymmetric even for symmetric
/// `H`, hence a nonsymmetric Krylov method. A breakdown (vanishing inner
/// product) is retried once with a relative diagonal jitter of `1e-14`;
/// a second breakdown is a hard error.
pub fn linear_solve(
    h: &BlockSparseHessian,
    d: &[f64],
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<LinearSolution, PlapError> {
    assert_eq!(d.len(), h.size());
    assert_eq!(rhs.len(), h.size());
    let n = h.size();
    let b: Vec<f64> = rhs.iter().zip(d).map(|(r, s)| r * s).collect();

    let diag: Vec<f64> = h
        .diagonal()
        .iter()
        .zip(d)
        .map(|(hd, s)| hd * s)
        .collect();

    for attempt in 0..2 {
        let jitter = if attempt == 0 { 0.0 } else { 1e-14 };
        let jit: Vec<f64> = diag.iter().map(|&x| jitter * x.abs()).collect();
        let apply = |x: &[f64], y: &mut [f64], tmp: &mut [f64]| {
            h.matvec(x, tmp);
            for i in 0..n {
                y[i] = d[i] * tmp[i] + jit[i] * x[i];
            }
        };
        let minv: Vec<f64> = diag
            .iter()
            .zip(&jit)
            .map(|(&x, &j)| {
                let v = x + j;
                if v.abs() < 1e-300 {
                    1.0
                } else {
                    1.0 / v
                }
            })
            .collect();
        if let Some(sol) = bicgstab(n, apply, &minv, &b, tol, max_iters) {
            return Ok(sol);
        }
    }
    Err(PlapError::LinearBreakdown)
}

/// Textbook right-preconditioned BiCGSTAB. `None` signals breakdown.
fn bicgstab<A: Fn(&[f64], &mut [f64], &mut [f64])>(
    n: usize,
    apply: A,
    minv: &[f64],
    b: &[f64],
    tol: f64,
    max_iters: usize,
) -> Option<LinearSolution> {
    let dot = |a: &[f64], c: &[f64]| -> f64 { a.iter().zip(c).map(|(x, y)| x * y).sum() };
    let norm = |a: &[f64]| -> f64 { dot(a, a).sqrt() };

    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Some(LinearSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }

    let mut x = vec![0.0f64; n];
    let mut r = b.to_vec();
    let rhat = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0f64; n];
    let mut p = vec![0.0f64; n];
    let mut phat = vec![0.0f64; n];
    let mut s = vec![0.0f64; n];
    let mut shat = vec![0.0f64; n];
    let mut t = vec![0.0f64; n];
    let mut tmp = vec![0.0f64; n];

    let mut best_x = x.clone();
    let mut best_res = 1.0f64;
    let tiny = 1e-300;

    for it in 1..=max_iters {
        let rho_new = dot(&rhat, &r);
        if !rho_new.is_finite() || rho_new.abs() < tiny * bnorm * bnorm {
            return None;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            phat[i] = minv[i] * p[i];
        }
        apply(&phat, &mut v, &mut tmp);
        let denom = dot(&rhat, &v);
        if !denom.is_finite() || denom.abs() < tiny {
            return None;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        // First half-step convergence check.
        let snorm = norm(&s);
        if snorm / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Some(LinearSolution {
                x,
                iterations: it,
                residual: snorm / bnorm,
                converged: true,
            });
        }
        for i in 0..n {
            shat[i] = minv[i] * s[i];
        }
        apply(&shat, &mut t, &mut tmp);
        let tt = dot(&t, &t);
        if !tt.is_finite() || tt < tiny {
            return None;
        }
        omega = dot(&t, &s) / tt;
        if !omega.is_finite() || omega.abs() < tiny {
            return None;
        }
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = norm(&r) / bnorm;
        if !res.is_finite() {
            return None;
        }
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        if res <= tol {
            return Some(LinearSolution {
                x,
                iterations: it,
                residual: res,
                converged: true,
            });
        }
    }
    Some(LinearSolution {
        x: best_x,
        iterations: max_iters,
        residual: best_res,
        converged: false,
    })
}

/// One diagnostics row of the Newton/continuation loop.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub p: f64,
    pub iter: usize,
    pub energy: f64,
    pub grad_inf_norm: f64,
    pub alpha: f64,
    pub linear_iters: usize,
}

/// Per-stage diagnostics of a continuation run.
#[derive(Debug, Clone, Default)]
pub struct ContinuationTrace {
    pub rows: Vec<TraceRow>,
}

impl ContinuationTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,iter,E_p,grad_inf_norm,alpha,linear_iters\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:e},{:e},{},{}\n",
                r.p, r.iter, r.energy, r.grad_inf_norm, r.alpha, r.linear_iters
            ));
        }
        out
    }
}

/// Outcome of a single Newton stage.
#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub function: VertexFunction,
    pub trace: Vec<TraceRow>,
}

/// Damped Newton minimization of `E_p` at a fixed `p`.
///
/// The per-row preconditioner scales are refreshed at every iterate so each
/// edge ratio stays at most 1 and the assembled system is finite at any
/// exponent, including on locally flat regions. The stage stops when the
/// preconditioned gradient satisfies
/// `max |D grad E_p| <= newton_tol * (1 + E_p(f0)/s^p)`; the preconditioned
/// test is used because the raw gradient norm underflows at large `p` and
/// a zero of `D grad` is a zero of `grad` (D is positive diagonal) — the
/// stationarity test is unchanged, only its scaling is.
pub fn newton_minimize(
    f0: &VertexFunction,
    p: f64,
    cfg: &SolverConfig,
) -> Result<NewtonResult, PlapError> {
    if !(p >= 1.0) {
        return Err(PlapError::BadExponent { p });
    }
    let mut f = f0.clone();
    let s_ref = global_scale(&f);
    let c = cfg.precond_c;
    let ones = vec![1.0f64; f.graph().interior().len() * f.dim()];

    let e0 = scaled_energy(&f, p, s_ref);
    let threshold = cfg.newton_tol * (1.0 + e0);
    let mut e_cur = e0;
    let mut trace = Vec::new();
    let mut trial = f.clone();
    let mut converged = false;
    // Consecutive accepted steps whose energy decrease is below a few ulps
    // of the current value. Two in a row mean the energy has reached its
    // representable floor: Armijo's sufficient-decrease test is vacuous
    // there (`c1 * alpha * dd` rounds away against `e_cur`), so without
    // this exit the loop treadmills on null steps until the step itself
    // underflows bitwise.
    let mut null_steps = 0usize;

    let dbg = std::env::var_os("LIPEXT_NEWTON_DEBUG").is_some();
    for iter in 0..cfg.max_newton_iters {
        let s_hat = vertex_scales(&f, cfg.eps_reg);
        let asm = assemble(&f, p, cfg.eps_reg, &s_hat, c, s_ref);
        let ginf = asm.dg.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        let gs_inf = asm.gs.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        if ginf <= threshold {
            trace.push(TraceRow {
                p,
                iter,
                energy: unscale(e_cur, s_ref, p),
                grad_inf_norm: unscale(gs_inf, s_ref, p),
                alpha: 0.0,
                linear_iters: 0,
            });
            converged = true;
            break;
        }

        // A Krylov breakdown (vanishing inner product even after the
        // jittered retry) is not fatal for the outer iteration: the
        // preconditioned gradient is always available as a descent
        // direction, so substitute it and keep going.
        let (mut h, lin_iters) = match linear_solve(
            &asm.dh,
            &ones,
            &asm.dg,
            cfg.linear_tol,
            cfg.linear_max_iters,
        ) {
            Ok(lin) => (lin.x, lin.iterations),
            Err(PlapError::LinearBreakdown) => {
                (steepest_direction(&asm.dg, &f.interior_values()), 0)
            }
            Err(other) => return Err(other),
        };

        // Directional derivative of the scaled energy along -h; fall back
        // to the preconditioned gradient when the Newton direction is not
        // a descent direction (indefinite or badly solved system).
        let mut dd: f64 = asm.gs.iter().zip(&h).map(|(g, hi)| g * hi).sum();
        let mut used_fallback = false;
        if !(dd > 0.0) {
            h = steepest_direction(&asm.dg, &f.interior_values());
            dd = asm.gs.iter().zip(&h).map(|(g, hi)| g * hi).sum();
            used_fallback = true;
            if !(dd > 0.0) {
                // The gradient is zero in representable arithmetic.
                converged = true;
                trace.push(TraceRow {
                    p,
                    iter,
                    energy: unscale(e_cur, s_ref, p),
                    grad_inf_norm: unscale(gs_inf, s_ref, p),
                    alpha: 0.0,
                    linear_iters: lin_iters,
                });
                break;
            }
        }

        let mut outcome = line_search(&f, &mut trial, &h, e_cur, dd, p, s_ref, &cfg.armijo);
        if matches!(outcome, SearchOutcome::Exhausted) && !used_fallback {
            h = steepest_direction(&asm.dg, &f.interior_values());
            dd = asm.gs.iter().zip(&h).map(|(g, hi)| g * hi).sum();
            if dd > 0.0 {
                outcome = line_search(&f, &mut trial, &h, e_cur, dd, p, s_ref, &cfg.armijo);
            }
        }
        match outcome {
            SearchOutcome::Accepted { alpha, energy } => {
                if dbg {
                    eprintln!(
                        "[p={p} it={iter}] ginf={ginf:.3e} thr={threshold:.2e} e={e_cur:.9e} de={:.3e} a={alpha:.2e} lin={lin_iters} fb={used_fallback}",
                        e_cur - energy
                    );
                }
                let floor = e_cur.abs() * 4.0 * f64::EPSILON;
                // A full step accepted on a flat energy is still a genuine
                // Newton step (the gradient may be resolvable when the
                // energy difference is not, especially at large `p`); only
                // backtracked steps on a flat energy indicate the treadmill.
                if e_cur - energy <= floor && alpha < 1.0 {
                    null_steps += 1;
                } else {
                    null_steps = 0;
                }
                std::mem::swap(&mut f, &mut trial);
                e_cur = energy;
                trace.push(TraceRow {
                    p,
                    iter,
                    energy: unscale(e_cur, s_ref, p),
                    grad_inf_norm: unscale(gs_inf, s_ref, p),
                    alpha,
                    linear_iters: lin_iters,
                });
                if null_steps >= 2 {
                    // Two consecutive steps without a representable energy
                    // decrease: the iterate sits on the energy's rounding
                    // floor, the same working-precision convergence the
                    // bitwise stagnation exit reports.
                    converged = true;
                    break;
                }
            }
            SearchOutcome::Stagnated => {
                if dbg {
                    eprintln!("[p={p} it={iter}] ginf={ginf:.3e} STAGNATED");
                }
                // Steps at the rounding floor cannot decrease the energy
                // any further; the iterate is converged to working
                // precision.
                converged = true;
                trace.push(TraceRow {
                    p,
                    iter,
                    energy: unscale(e_cur, s_ref, p),
                    grad_inf_norm: unscale(gs_inf, s_ref, p),
                    alpha: 0.0,
                    linear_iters: lin_iters,
                });
                break;
            }
            SearchOutcome::Exhausted => {
                return Err(PlapError::LineSearchFailure { p, iter });
            }
        }
    }

    if !converged {
        // Final stationarity check: the last accepted step may have landed
        // on the stopping set exactly at the budget.
        let s_hat = vertex_scales(&f, cfg.eps_reg);
        let asm = assemble(&f, p, cfg.eps_reg, &s_hat, c, s_ref);
        let ginf = asm.dg.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        if ginf > threshold {
            return Err(PlapError::IterationBudgetExceeded {
                p,
                iters: cfg.max_newton_iters,
            });
        }
    }

    Ok(NewtonResult { function: f, trace })
}

/// Steepest-descent fallback direction: the preconditioned gradient rescaled
/// so the unit-step move is `0.1 (1 + |x|_inf)`. The row equilibration can
/// leave `dg` tens of orders of magnitude away from a usable step length,
/// far outside what backtracking can recover.
fn steepest_direction(dg: &[f64], x: &[f64]) -> Vec<f64> {
    let hmax = dg.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if hmax == 0.0 || !hmax.is_finite() {
        return dg.to_vec();
    }
    let xmax = x.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let scale = 0.1 * (1.0 + xmax) / hmax;
    dg.iter().map(|&v| v * scale).collect()
}

enum SearchOutcome {
    Accepted { alpha: f64, energy: f64 },
    /// The step underflowed: `x - alpha h == x` bitwise.
    Stagnated,
    Exhausted,
}

#[allow(clippy::too_many_arguments)]
fn line_search(
    f: &VertexFunction,
    trial: &mut VertexFunction,
    h: &[f64],
    e_cur: f64,
    dd: f64,
    p: f64,
    s_ref: f64,
    armijo: &ArmijoParams,
) -> SearchOutcome {
    let base = f.interior_values();
    let mut alpha = 1.0f64;
    let mut step = vec![0.0f64; base.len()];
    for _ in 0..armijo.max_backtracks {
        let mut moved = false;
        for i in 0..base.len() {
            step[i] = base[i] - alpha * h[i];
            if step[i] != base[i] {
                moved = true;
            }
        }
        if !moved {
            return SearchOutcome::Stagnated;
        }
        trial.set_interior_values(&step);
        let e_t = scaled_energy(trial, p, s_ref);
        if e_t <= e_cur - armijo.c1 * alpha * dd {
            return SearchOutcome::Accepted {
                alpha,
                energy: e_t,
            };
        }
        alpha *= armijo.shrink;
    }
    SearchOutcome::Exhausted
}

/// Continuation result: the minimizer at `p_target`, per-stage minimizers,
/// and the full diagnostics trace.
#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub function: VertexFunction,
    pub trace: ContinuationTrace,
    /// `(p, minimizer)` for every stage of the schedule, in order.
    pub trajectory: Vec<(f64, VertexFunction)>,
}

/// Runs [`newton_minimize`] along the schedule, warm-starting each stage
/// with the previous minimizer, beginning from the boundary mean.
pub fn continuation_solve(
    graph: &Arc<WeightedGraph>,
    g: &BoundaryData,
    cfg: &SolverConfig,
) -> Result<ContinuationResult, PlapError> {
    let f0 = VertexFunction::from_boundary(graph, g, InteriorInit::BoundaryMean)?;
    continuation_solve_from(&f0, cfg)
}

/// Continuation with a caller-supplied starting function — used by the
/// inpainting loop, which warm-starts from the previous outer iteration.
pub fn continuation_solve_from(
    f0: &VertexFunction,
    cfg: &SolverConfig,
) -> Result<ContinuationResult, PlapError> {
    let schedule = match &cfg.schedule {
        Some(s) => s.clone(),
        None => default_schedule(cfg.p_target),
    };
    validate_schedule(&schedule, cfg.p_target)?;

    let mut f = f0.clone();
    let mut trace = ContinuationTrace::default();
    let mut trajectory = Vec::with_capacity(schedule.len());
    for &p in &schedule {
        let stage = newton_minimize(&f, p, cfg)?;
        f = stage.function;
        trace.rows.extend(stage.trace);
        trajectory.push((p, f.clone()));
    }
    Ok(ContinuationResult {
        function: f,
        trace,
        trajectory,
    })
}
