//! Weighted midrange filters: centers of smallest weighted enclosing balls.
//!
//! For points `x_1..x_k` in `R^m` with weights `w_i > 0`, the weighted
//! midrange is `argmin_a max_i w_i |x_i - a|_2` — the center of the smallest
//! ball that contains every point after scaling distances by the weights.
//! The fixed points of this filter applied over graph neighborhoods are
//! exactly the infinity-harmonic functions, which is why the filter sits at
//! the bottom of the iterative solvers.
//!
//! Scalars admit a closed form over the worst pair of points. The vector
//! case is solved by a smoothing homotopy: minimize the log-sum-exp
//! relaxation `(1/beta) log sum_i exp(beta w_i^2 |x_i - a|^2)` by damped
//! Newton over an increasing `beta` schedule, then polish the active set on
//! the exact problem until the subgradient optimality certificate (distance
//! from the origin to the convex hull of the active gradients) is met.

use thiserror::Error;

use crate::dense::solve_in_place;

/// Indices count as active within `1e-7 * (1 + radius)` of the radius.
pub const ACTIVE_SET_REL_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum MidrangeError {
    #[error("midrange of an empty point set")]
    EmptyInput,
    #[error("point {index} has {got} components, expected {want}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        want: usize,
    },
    #[error("scalar midrange called on {dim}-dimensional points")]
    NotScalar { dim: usize },
    #[error("smoothing homotopy exhausted its beta/iteration budget (residual {residual:.3e})")]
    NoConvergence { residual: f64 },
}

/// A weighted point set in `R^m`, stored flat (`k * dim`, point-major).
#[derive(Debug, Clone)]
pub struct MidrangeProblem {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl MidrangeProblem {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self, MidrangeError> {
        if weights.is_empty() {
            return Err(MidrangeError::EmptyInput);
        }
        if points.len() != weights.len() * dim {
            return Err(MidrangeError::DimensionMismatch {
                index: 0,
                got: points.len(),
                want: weights.len() * dim,
            });
        }
        Ok(MidrangeProblem {
            dim,
            points,
            weights,
        })
    }

    /// Convenience constructor for scalar point sets.
    pub fn scalar(points: &[f64], weights: &[f64]) -> Result<Self, MidrangeError> {
        Self::new(1, points.to_vec(), weights.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `max_i w_i |x_i - a|`: the weighted radius seen from `a`.
    pub fn radius(&self, a: &[f64]) -> f64 {
        let mut r = 0.0f64;
        for i in 0..self.len() {
            r = r.max(self.weights[i] * dist(self.point(i), a));
        }
        r
    }

    /// Indices whose weighted distance from `a` is within the active-set
    /// tolerance of the radius.
    pub fn active_set(&self, a: &[f64]) -> Vec<usize> {
        let r = self.radius(a);
        let tol = ACTIVE_SET_REL_TOL * (1.0 + r);
        (0..self.len())
            .filter(|&i| self.weights[i] * dist(self.point(i), a) >= r - tol)
            .collect()
    }
}

/// Solver parameters for [`vector_midrange`].
#[derive(Debug, Clone)]
pub struct MidrangeConfig {
    /// Optimality certificate tolerance, relative to the gradient scale
    /// `1 + 2 max_i w_i^2 * radius`.
    pub tol: f64,
    /// Newton iterations per smoothing level.
    pub max_newton_iters: usize,
    /// Levels of the base schedule `beta = 10^1..10^levels / (1 + R0^2)`.
    pub beta_levels: usize,
    /// Extra tenfold extensions allowed past the base schedule when the
    /// certificate has not been met yet.
    pub max_beta_extensions: usize,
}

impl Default for MidrangeConfig {
    fn default() -> Self {
        MidrangeConfig {
            tol: 1e-9,
            max_newton_iters: 100,
            beta_levels: 6,
            max_beta_extensions: 10,
        }
    }
}

/// Solution of a midrange problem.
#[derive(Debug, Clone)]
pub struct MidrangeResult {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Indices attaining the radius (within the active-set tolerance).
    pub active_set: Vec<usize>,
    /// Total inner Newton iterations spent (0 for the scalar closed form).
    pub iterations: usize,
    /// Distance from the origin to the convex hull of the active gradients
    /// `2 w_i^2 (a - x_i)` — the optimality certificate.
    pub certificate: f64,
}

/// Closed-form scalar midrange: the worst pair under the harmonic weight
/// combination decides the center. Exact ties pick the lexicographically
/// smallest pair.
pub fn scalar_midrange(prob: &MidrangeProblem) -> Result<MidrangeResult, MidrangeError> {
    if prob.is_empty() {
        return Err(MidrangeError::EmptyInput);
    }
    if prob.dim != 1 {
        return Err(MidrangeError::NotScalar { dim: prob.dim });
    }
    let x = &prob.points;
    let w = &prob.weights;
    let k = prob.len();
    if k == 1 {
        return Ok(MidrangeResult {
            center: vec![x[0]],
            radius: 0.0,
            active_set: vec![0],
            iterations: 0,
            certificate: 0.0,
        });
    }
    let mut best = (0usize, 1usize);
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            let val = (x[i] - x[j]).abs() / (1.0 / w[i] + 1.0 / w[j]);
            if val > best_val {
                best_val = val;
                best = (i, j);
            }
        }
    }
    let (i, j) = best;
    let center = (w[i] * x[i] + w[j] * x[j]) / (w[i] + w[j]);
    let radius = prob.radius(&[center]);
    Ok(MidrangeResult {
        center: vec![center],
        radius,
        active_set: prob.active_set(&[center]),
        iterations: 0,
        certificate: certificate(prob, &[center]),
    })
}

/// Vector midrange by smoothing homotopy with active-set polish.
pub fn vector_midrange(
    prob: &MidrangeProblem,
    cfg: &MidrangeConfig,
) -> Result<MidrangeResult, MidrangeError> {
    if prob.is_empty() {
        return Err(MidrangeError::EmptyInput);
    }
    let m = prob.dim;
    let k = prob.len();

    // Single point, or all points coincident: the ball is degenerate.
    let coincident = (1..k).all(|i| prob.point(i) == prob.point(0));
    if coincident {
        return Ok(MidrangeResult {
            center: prob.point(0).to_vec(),
            radius: 0.0,
            active_set: (0..k).collect(),
            iterations: 0,
            certificate: 0.0,
        });
    }

    // Weighted least-squares center as the homotopy start.
    let mut a = vec![0.0f64; m];
    let mut wsum = 0.0;
    for i in 0..k {
        let w2 = prob.weights[i] * prob.weights[i];
        wsum += w2;
        for (ac, xc) in a.iter_mut().zip(prob.point(i)) {
            *ac += w2 * xc;
        }
    }
    for ac in &mut a {
        *ac /= wsum;
    }

    let r0 = prob.radius(&a);
    let wmax2 = prob
        .weights
        .iter()
        .fold(0.0f64, |acc, &w| acc.max(w * w));
    let grad_scale = 1.0 + 2.0 * wmax2 * r0;
    let inner_tol = 1e-12 * grad_scale;

    let mut iterations = 0usize;
    let mut scratch = Scratch::new(m, k);
    let total_levels = cfg.beta_levels + cfg.max_beta_extensions;
    for level in 1..=total_levels {
        let beta = 10f64.powi(level as i32) / (1.0 + r0 * r0);
        iterations += newton_smoothed(prob, beta, inner_tol, cfg.max_newton_iters, &mut a, &mut scratch);

        if let Some(result) = try_polish(prob, cfg, &mut a, iterations) {
            return Ok(result);
        }
    }
    Err(MidrangeError::NoConvergence {
        residual: certificate(prob, &a),
    })
}

/// One smoothing level: damped Newton on the log-sum-exp relaxation.
/// Returns the iterations spent; `a` is updated in place.
fn newton_smoothed(
    prob: &MidrangeProblem,
    beta: f64,
    inner_tol: f64,
    max_iters: usize,
    a: &mut Vec<f64>,
    scratch: &mut Scratch,
) -> usize {
    let m = prob.dim;
    let mut spent = 0usize;
    let mut phi = smoothed_value(prob, beta, a, &mut scratch.h);
    for _ in 0..max_iters {
        spent += 1;
        let gnorm = smoothed_grad_hess(prob, beta, a, scratch);
        if gnorm <= inner_tol {
            break;
        }
        // Newton direction; fall back to the gradient if the (possibly
        // ill-conditioned at large beta) Hessian solve fails.
        scratch.step.copy_from_slice(&scratch.grad);
        let mut h = scratch.hess.clone();
        if !solve_in_place(m, &mut h, &mut scratch.step) {
            let ridge = 1e-10 * scratch.hess.iter().fold(1.0f64, |acc, &x| acc.max(x.abs()));
            h.copy_from_slice(&scratch.hess);
            for d in 0..m {
                h[d * m + d] += ridge;
            }
            scratch.step.copy_from_slice(&scratch.grad);
            if !solve_in_place(m, &mut h, &mut scratch.step) {
                scratch.step.copy_from_slice(&scratch.grad);
            }
        }
        // Damped update: halve until the smoothed objective decreases.
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            for d in 0..m {
                scratch.trial[d] = a[d] - alpha * scratch.step[d];
            }
            let trial_phi = smoothed_value(prob, beta, &scratch.trial, &mut scratch.h);
            if trial_phi < phi {
                a.copy_from_slice(&scratch.trial);
                phi = trial_phi;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    spent
}

/// Scratch buffers reused across smoothing levels.
struct Scratch {
    grad: Vec<f64>,
    hess: Vec<f64>,
    step: Vec<f64>,
    trial: Vec<f64>,
    h: Vec<f64>,
    lambda: Vec<f64>,
}

impl Scratch {
    fn new(m: usize, k: usize) -> Self {
        Scratch {
            grad: vec![0.0; m],
            hess: vec![0.0; m * m],
            step: vec![0.0; m],
            trial: vec![0.0; m],
            h: vec![0.0; k],
            lambda: vec![0.0; k],
        }
    }
}

/// `h_i(a) = w_i^2 |x_i - a|^2` for all i, into `scratch.h`; returns max.
fn eval_h(prob: &MidrangeProblem, a: &[f64], h: &mut [f64]) -> f64 {
    let mut hmax = f64::NEG_INFINITY;
    for i in 0..prob.len() {
        let w2 = prob.weights[i] * prob.weights[i];
        let d2: f64 = prob
            .point(i)
            .iter()
            .zip(a)
            .map(|(x, ac)| (x - ac) * (x - ac))
            .sum();
        h[i] = w2 * d2;
        hmax = hmax.max(h[i]);
    }
    hmax
}

/// Max-shifted log-sum-exp value of the smoothed objective.
fn smoothed_value(prob: &MidrangeProblem, beta: f64, a: &[f64], hbuf: &mut [f64]) -> f64 {
    let hmax = eval_h(prob, a, hbuf);
    let sum: f64 = hbuf.iter().map(|&hi| (beta * (hi - hmax)).exp()).sum();
    hmax + sum.ln() / beta
}

/// Gradient and Hessian of the smoothed objective at `a`; returns `|grad|`.
fn smoothed_grad_hess(prob: &MidrangeProblem, beta: f64, a: &[f64], scratch: &mut Scratch) -> f64 {
    let m = prob.dim;
    let k = prob.len();
    let hmax = eval_h(prob, a, &mut scratch.h);
    let mut z = 0.0;
    for i in 0..k {
        scratch.lambda[i] = (beta * (scratch.h[i] - hmax)).exp();
        z += scratch.lambda[i];
    }
    for l in &mut scratch.lambda {
        *l /= z;
    }
    // grad = sum_i lambda_i g_i with g_i = 2 w_i^2 (a - x_i);
    // hess = sum_i lambda_i (2 w_i^2 I + beta g_i g_i^T) - beta grad grad^T.
    scratch.grad.iter_mut().for_each(|g| *g = 0.0);
    scratch.hess.iter_mut().for_each(|h| *h = 0.0);
    let mut gi = vec![0.0f64; m];
    for i in 0..k {
        let li = scratch.lambda[i];
        if li == 0.0 {
            continue;
        }
        let w2 = prob.weights[i] * prob.weights[i];
        for d in 0..m {
            gi[d] = 2.0 * w2 * (a[d] - prob.point(i)[d]);
        }
        for d in 0..m {
            scratch.grad[d] += li * gi[d];
            scratch.hess[d * m + d] += li * 2.0 * w2;
            for e in 0..m {
                scratch.hess[d * m + e] += li * beta * gi[d] * gi[e];
            }
        }
    }
    for d in 0..m {
        for e in 0..m {
            scratch.hess[d * m + e] -= beta * scratch.grad[d] * scratch.grad[e];
        }
    }
    scratch.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Tries to finish from the current smoothed iterate: identify the active
/// set, Newton-polish the exact equal-radius KKT system, and check the
/// subgradient certificate. Returns `None` when identification is immature.
fn try_polish(
    prob: &MidrangeProblem,
    cfg: &MidrangeConfig,
    a: &mut Vec<f64>,
    iterations: usize,
) -> Option<MidrangeResult> {
    let m = prob.dim;
    let active = prob.active_set(a);
    if active.len() < 2 {
        return None;
    }
    let s = active.len();
    let n = m + s;

    // Unknowns (a, lambda); residuals: stationarity (m), equal h-values
    // between consecutive active points (s-1), simplex sum (1).
    let mut av = a.clone();
    let mut lambda = vec![1.0 / s as f64; s];
    let mut residual = vec![0.0f64; n];
    let mut jac = vec![0.0f64; n * n];

    let eval_residual = |av: &[f64], lambda: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|r| *r = 0.0);
        for (si, &i) in active.iter().enumerate() {
            let w2 = prob.weights[i] * prob.weights[i];
            for d in 0..m {
                out[d] += lambda[si] * w2 * (av[d] - prob.point(i)[d]);
            }
        }
        for si in 0..(s - 1) {
            let (i, j) = (active[si], active[si + 1]);
            let hi = prob.weights[i].powi(2) * dist2(prob.point(i), av);
            let hj = prob.weights[j].powi(2) * dist2(prob.point(j), av);
            out[m + si] = hi - hj;
        }
        out[n - 1] = lambda.iter().sum::<f64>() - 1.0;
    };

    eval_residual(&av, &lambda, &mut residual);
    let mut rnorm: f64 = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
    for _ in 0..60 {
        if rnorm <= 1e-15 * (1.0 + prob.radius(&av)) {
            break;
        }
        jac.iter_mut().for_each(|j| *j = 0.0);
        // d(stationarity)/da and /dlambda.
        let mut lw2 = 0.0;
        for (si, &i) in active.iter().enumerate() {
            let w2 = prob.weights[i] * prob.weights[i];
            lw2 += lambda[si] * w2;
            for d in 0..m {
                jac[d * n + m + si] = w2 * (av[d] - prob.point(i)[d]);
            }
        }
        for d in 0..m {
            jac[d * n + d] = lw2;
        }
        // d(h_i - h_j)/da.
        for si in 0..(s - 1) {
            let (i, j) = (active[si], active[si + 1]);
            let w2i = prob.weights[i].powi(2);
            let w2j = prob.weights[j].powi(2);
            for d in 0..m {
                jac[(m + si) * n + d] = 2.0 * w2i * (av[d] - prob.point(i)[d])
                    - 2.0 * w2j * (av[d] - prob.point(j)[d]);
            }
        }
        for si in 0..s {
            jac[(n - 1) * n + m + si] = 1.0;
        }

        let mut step = residual.clone();
        let mut jwork = jac.clone();
        if !solve_in_place(n, &mut jwork, &mut step) {
            // Degenerate active set (more points than the face dimension):
            // ridge the diagonal and retry.
            jwork.copy_from_slice(&jac);
            for d in 0..n {
                jwork[d * n + d] += 1e-10;
            }
            step.copy_from_slice(&residual);
            if !solve_in_place(n, &mut jwork, &mut step) {
                return None;
            }
        }

        // Damped Newton on the residual norm.
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut trial_a = vec![0.0; m];
        let mut trial_l = vec![0.0; s];
        let mut trial_r = vec![0.0; n];
        for _ in 0..40 {
            for d in 0..m {
                trial_a[d] = av[d] - alpha * step[d];
            }
            for si in 0..s {
                trial_l[si] = lambda[si] - alpha * step[m + si];
            }
            eval_residual(&trial_a, &trial_l, &mut trial_r);
            let trial_norm: f64 = trial_r.iter().map(|r| r * r).sum::<f64>().sqrt();
            if trial_norm < rnorm {
                av.copy_from_slice(&trial_a);
                lambda.copy_from_slice(&trial_l);
                residual.copy_from_slice(&trial_r);
                rnorm = trial_norm;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    // Validate the polished point: multipliers must form a (near-)convex
    // combination and no inactive point may poke outside the ball.
    if lambda.iter().any(|&l| l < -1e-7) {
        return None;
    }
    let radius = prob.radius(&av);
    let polished_active = prob.active_set(&av);
    if !active.iter().all(|i| polished_active.contains(i)) {
        return None;
    }
    let cert = certificate(prob, &av);
    let wmax2 = prob.weights.iter().fold(0.0f64, |acc, &w| acc.max(w * w));
    if cert > cfg.tol * (1.0 + 2.0 * wmax2 * radius) {
        return None;
    }
    *a = av.clone();
    Some(MidrangeResult {
        center: av,
        radius,
        active_set: polished_active,
        iterations,
        certificate: cert,
    })
}

/// Upper bound on the distance from the origin to the convex hull of the
/// active gradients `2 w_i^2 (a - x_i)`, via a min-norm-point descent over
/// convex combinations. An upper bound is exactly what a certificate needs.
pub fn certificate(prob: &MidrangeProblem, a: &[f64]) -> f64 {
    let m = prob.dim;
    let active = prob.active_set(a);
    let grads: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| {
            let w2 = prob.weights[i] * prob.weights[i];
            prob.point(i)
                .iter()
                .zip(a)
                .map(|(x, ac)| 2.0 * w2 * (ac - x))
                .collect()
        })
        .collect();
    if grads.is_empty() {
        return 0.0;
    }
    min_norm_in_hull(&grads, m)
}

/// Wolfe's min-norm point algorithm over the convex hull of `pts`.
///
/// Maintains a corral of hull vertices, alternating between adding the
/// most violating vertex and projecting onto the affine hull of the
/// corral, dropping members whose barycentric weight would turn negative.
/// The corral projections are exact linear solves, so at a point whose
/// hull contains the origin the bound collapses to roundoff — a plain
/// conditional-gradient descent zigzags and stalls orders of magnitude
/// above certificate precision on thin hulls. The returned norm is always
/// a valid upper bound on the hull distance, even at the iteration cap.
fn min_norm_in_hull(pts: &[Vec<f64>], m: usize) -> f64 {
    let k = pts.len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let scale2 = pts.iter().map(|p| dot(p, p)).fold(0.0f64, f64::max);
    if scale2 == 0.0 {
        return 0.0;
    }

    let start = (0..k)
        .min_by(|&i, &j| dot(&pts[i], &pts[i]).total_cmp(&dot(&pts[j], &pts[j])))
        .unwrap();
    let mut support: Vec<usize> = vec![start];
    let mut lambda: Vec<f64> = vec![1.0];
    let mut x = pts[start].clone();
    let mut xx = dot(&x, &x);

    for _ in 0..(8 * (k + m) + 32) {
        let (jbest, dbest) = (0..k)
            .map(|j| (j, dot(&x, &pts[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        // Wolfe's stopping rule: <x,x> <= <x,p_j> for every vertex, up to
        // a roundoff allowance at the squared scale of the input.
        if xx - dbest <= 1e-14 * scale2 {
            break;
        }
        if !support.contains(&jbest) {
            support.push(jbest);
            lambda.push(0.0);
        }

        // Minor cycle: project onto the affine hull of the corral and
        // drop vertices until the projection is a convex combination.
        loop {
            let s = support.len();
            let n = s + 1;
            let mut mat = vec![0.0f64; n * n];
            let mut rhs = vec![0.0f64; n];
            for i in 0..s {
                for j in 0..s {
                    mat[i * n + j] = 2.0 * dot(&pts[support[i]], &pts[support[j]]);
                }
                mat[i * n + s] = 1.0;
                mat[s * n + i] = 1.0;
            }
            rhs[s] = 1.0;
            let mut work = mat.clone();
            let mut alpha = rhs.clone();
            if !solve_in_place(n, &mut work, &mut alpha) {
                // Affinely dependent corral (duplicate gradients): ridge.
                work.copy_from_slice(&mat);
                for d in 0..s {
                    work[d * n + d] += 1e-12 * (1.0 + scale2);
                }
                alpha.copy_from_slice(&rhs);
                if !solve_in_place(n, &mut work, &mut alpha) {
                    return xx.sqrt();
                }
            }
            if alpha[..s].iter().all(|&ai| ai > 0.0) {
                lambda.clear();
                lambda.extend_from_slice(&alpha[..s]);
                break;
            }
            // Walk from lambda toward alpha until a coefficient hits zero.
            let mut theta = 1.0f64;
            for i in 0..s {
                if alpha[i] <= 0.0 {
                    let shrink = lambda[i] - alpha[i];
                    if shrink > 0.0 {
                        theta = theta.min(lambda[i] / shrink);
                    }
                }
            }
            for i in 0..s {
                lambda[i] += theta * (alpha[i] - lambda[i]);
            }
            let mut kept_support = Vec::with_capacity(s);
            let mut kept_lambda = Vec::with_capacity(s);
            for i in 0..s {
                if lambda[i] > 1e-12 {
                    kept_support.push(support[i]);
                    kept_lambda.push(lambda[i]);
                }
            }
            debug_assert!(!kept_support.is_empty());
            let shrunk = kept_support.len() < s;
            support = kept_support;
            lambda = kept_lambda;
            let total: f64 = lambda.iter().sum();
            for l in &mut lambda {
                *l /= total;
            }
            if !shrunk {
                // Numerical stall: accept the current combination.
                break;
            }
        }

        let mut xnew = vec![0.0f64; m];
        for (i, &si) in support.iter().enumerate() {
            for d in 0..m {
                xnew[d] += lambda[i] * pts[si][d];
            }
        }
        let xxnew = dot(&xnew, &xnew);
        if xxnew >= xx {
            // The norm is strictly decreasing in exact arithmetic; a
            // non-decrease means roundoff exhausted the progress.
            break;
        }
        x = xnew;
        xx = xxnew;
    }
    xx.sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
