//! The inpainting pipeline: initialize the unknown pixels, then alternate
//! between rebuilding the similarity graph from the current estimate and
//! solving the chosen extension problem on it, with per-iteration
//! snapshots, steepness tables, and PSNR reporting.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed_point::{
    componentwise_extension, cyclic_iterate, inf_laplacian_iterate, km_iterate, FixedPointError,
    IterationConfig, IterationTrace,
};
use crate::function::{FunctionError, InteriorInit, VertexFunction};
use crate::graph::{GraphError, WeightedGraph};
use crate::image_io::{self, ImageIoError, RawImage};
use crate::metrics::{energy_inf, vertex_lipschitz};
use crate::nonlocal::{
    build_patch_graph, init_layered_fill, init_random_gaussian, MaskVariant, MaskedImage,
    NonlocalError, PatchGraphParams,
};
use crate::plap::{continuation_solve_from, newton_minimize, PlapError, SolverConfig};

/// Failure inside one outer iteration, tagged with its module of origin so
/// the command line can map it to an exit code.
#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Nonlocal(#[from] NonlocalError),
    #[error(transparent)]
    Plap(#[from] PlapError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Io(#[from] ImageIoError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] ImageIoError),
    #[error(transparent)]
    Nonlocal(#[from] NonlocalError),
    #[error("outer iteration {iter}: {source}")]
    AtIteration { iter: usize, source: StepError },
}

impl PipelineError {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::BadConfig(_) => 2,
            PipelineError::Io(_) => 4,
            PipelineError::Nonlocal(NonlocalError::BadParams(_)) => 2,
            PipelineError::Nonlocal(_) => 3,
            PipelineError::AtIteration { source, .. } => match source {
                StepError::Io(_) => 4,
                StepError::Plap(PlapError::BadExponent { .. })
                | StepError::Plap(PlapError::BadSchedule(_)) => 2,
                StepError::Nonlocal(NonlocalError::BadParams(_)) => 2,
                _ => 3,
            },
        }
    }
}

fn default_tau() -> f64 {
    0.95
}

fn default_tau_cyclic() -> f64 {
    1.0
}

fn default_outer_iters() -> usize {
    15
}

fn default_llex_top() -> usize {
    10
}

fn default_grid_weight() -> f64 {
    1.0
}

/// Which extension solver the pipeline runs each outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Continuation to a high exponent, warm-started from the estimate.
    Plap { p_target: f64 },
    /// Averaged midrange fixed-point sweeps.
    MidrangeKm {
        #[serde(default = "default_tau")]
        tau: f64,
    },
    /// Cyclic single-vertex midrange sweeps.
    MidrangeCyclic {
        #[serde(default = "default_tau_cyclic")]
        tau: f64,
    },
    /// Scalar infinity-Laplacian iteration (grayscale only).
    InfLaplacian {
        #[serde(default = "default_tau")]
        tau: f64,
    },
    /// Independent scalar extension of each channel.
    Componentwise {
        #[serde(default = "default_tau")]
        tau: f64,
    },
}

/// Graph used each outer iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSpec {
    /// Nonlocal patch graph rebuilt from the current estimate.
    Patch(PatchGraphParams),
    /// Plain 4-neighbor grid (does not depend on the estimate).
    Grid4 {
        #[serde(default = "default_grid_weight")]
        weight: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub method: Method,
    #[serde(default = "default_outer_iters")]
    pub outer_iters: usize,
    pub graph: GraphSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_llex_top")]
    pub report_llex_top: usize,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.outer_iters < 1 {
            return Err(PipelineError::BadConfig("outer_iters must be >= 1".into()));
        }
        match self.method {
            Method::Plap { p_target } => {
                if !(p_target >= 2.0) {
                    return Err(PipelineError::BadConfig(format!(
                        "p_target = {p_target} must be >= 2"
                    )));
                }
            }
            Method::MidrangeKm { tau }
            | Method::InfLaplacian { tau }
            | Method::Componentwise { tau } => {
                if !(tau > 0.0 && tau < 1.0) {
                    return Err(PipelineError::BadConfig(format!(
                        "tau = {tau} outside (0,1)"
                    )));
                }
            }
            Method::MidrangeCyclic { tau } => {
                if !(tau > 0.0 && tau <= 1.0) {
                    return Err(PipelineError::BadConfig(format!(
                        "tau = {tau} outside (0,1]"
                    )));
                }
            }
        }
        if let GraphSpec::Grid4 { weight } = self.graph {
            if !(weight > 0.0 && weight <= 1.0) {
                return Err(PipelineError::BadConfig(format!(
                    "grid weight = {weight} outside (0,1]"
                )));
            }
        }
        if let GraphSpec::Patch(ref p) = self.graph {
            p.validate().map_err(PipelineError::Nonlocal)?;
        }
        Ok(())
    }
}

/// Top-k steepness table: the largest per-vertex Lipschitz constants with
/// their owning vertices, nonincreasing.
#[derive(Debug, Clone, Serialize)]
pub struct LlexTable {
    pub entries: Vec<(usize, f64)>,
}

impl LlexTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,vertex,value\n");
        for (rank, (v, x)) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "{},{},{:e}", rank + 1, v, x);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("rank  vertex        value\n");
        for (rank, (v, x)) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "{:>4}  {:>6}  {:>12.6}", rank + 1, v, x);
        }
        out
    }
}

/// The `k` largest per-vertex Lipschitz constants of `f` with vertex ids
/// (ties ordered by vertex id).
pub fn report_llex_table(f: &VertexFunction, k: usize) -> LlexTable {
    let mut rows: Vec<(usize, f64)> = f
        .graph()
        .interior()
        .iter()
        .map(|&u| (u, vertex_lipschitz(f, u).expect("interior vertex")))
        .collect();
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    rows.truncate(k);
    LlexTable { entries: rows }
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iter: usize,
    pub e_inf: f64,
    /// The solver's own convergence measure: final preconditioned gradient
    /// norm for the continuation method, final sweep movement for the
    /// fixed-point methods.
    pub residual: f64,
    pub psnr: Option<f64>,
    pub llex_top: LlexTable,
}

#[derive(Debug, Clone)]
pub struct InpaintReport {
    pub final_image: RawImage,
    pub psnr: Option<f64>,
    pub iterations: Vec<IterationReport>,
}

#[derive(Serialize)]
struct SummaryRow {
    iter: usize,
    e_inf: f64,
    residual: f64,
    llex_head: f64,
    psnr: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    method: &'a Method,
    outer_iters: usize,
    seed: u64,
    psnr: Option<f64>,
    iterations: Vec<SummaryRow>,
}

/// Loads an image and its mask into a [`MaskedImage`].
pub fn load_masked(input: &Path, mask: &Path) -> Result<MaskedImage, PipelineError> {
    let img = image_io::load_image(input)?;
    let known = image_io::load_mask(mask, img.height, img.width)?;
    MaskedImage::new(&img, known).map_err(PipelineError::Nonlocal)
}

enum SolveTrace {
    Continuation(String),
    Sweeps(IterationTrace),
    None,
}

/// Runs the full inpainting loop on a masked image.
///
/// The unknown pixels are initialized per mask variant (Gaussian draws for
/// scattered masks, layered fill for holes), then each outer iteration
/// rebuilds the graph from the current estimate — the original mask keeps
/// defining which pixels are boundary — solves with the configured method
/// warm-started from the estimate, and clamps the result to [0, 1].
pub fn run_inpaint(
    cfg: &PipelineConfig,
    input: &MaskedImage,
    reference: Option<&RawImage>,
) -> Result<InpaintReport, PipelineError> {
    cfg.validate()?;
    let m = input.channels;
    if let Some(r) = reference {
        if (r.height, r.width, r.channels) != (input.height, input.width, m) {
            return Err(PipelineError::Io(ImageIoError::ShapeMismatch {
                expected: format!("{}x{}x{}", input.height, input.width, m),
                got: format!("{}x{}x{}", r.height, r.width, r.channels),
            }));
        }
    }
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Io(ImageIoError::Io(e)))?;
    }

    // Initialization by mask variant.
    let mut estimate: Vec<f64> = match &cfg.graph {
        GraphSpec::Patch(p) if p.variant == MaskVariant::HoleMask => {
            init_layered_fill(input)?.image.data
        }
        _ => init_random_gaussian(input, cfg.seed)?.data,
    };
    if let Some(dir) = &cfg.output_dir {
        let img = RawImage::new(input.height, input.width, m, estimate.clone());
        image_io::save_image(dir.join("init.png"), &img)?;
    }

    let mut iterations = Vec::with_capacity(cfg.outer_iters);
    for t in 0..cfg.outer_iters {
        let step = |source: StepError| PipelineError::AtIteration { iter: t, source };

        let masked = input
            .with_pixels(estimate.clone())
            .map_err(|e| step(e.into()))?;
        let graph: Arc<WeightedGraph> = match &cfg.graph {
            GraphSpec::Patch(p) => {
                let mut eff = p.clone();
                eff.add_local_grid = p.add_local_grid && t < p.local_grid_iters;
                build_patch_graph(&masked, &eff, cfg.seed).map_err(|e| step(e.into()))?
            }
            GraphSpec::Grid4 { weight } => Arc::new(
                WeightedGraph::grid4(input.height, input.width, &input.known, *weight)
                    .map_err(|e| step(e.into()))?,
            ),
        };
        let boundary = masked.boundary_data();
        let mut f0 = VertexFunction::from_boundary(&graph, &boundary, InteriorInit::Zeros)
            .map_err(|e| step(e.into()))?;
        let interior: Vec<usize> = graph.interior().to_vec();
        let mut warm = Vec::with_capacity(interior.len() * m);
        for &u in &interior {
            warm.extend_from_slice(&estimate[u * m..u * m + m]);
        }
        f0.set_interior_values(&warm);

        let (solved, residual, trace) = match &cfg.method {
            Method::Plap { p_target } => {
                let mut scfg = cfg.solver.clone();
                scfg.p_target = *p_target;
                let out = continuation_solve_from(&f0, &scfg).map_err(|e| step(e.into()))?;
                let residual = out
                    .trace
                    .rows
                    .last()
                    .map(|r| r.grad_inf_norm)
                    .unwrap_or(0.0);
                (
                    out.function,
                    residual,
                    SolveTrace::Continuation(out.trace.to_csv()),
                )
            }
            Method::MidrangeKm { tau } => {
                let f2 = newton_minimize(&f0, 2.0, &cfg.solver)
                    .map_err(|e| step(e.into()))?
                    .function;
                let it = IterationConfig {
                    tau: *tau,
                    ..IterationConfig::default()
                };
                let out = km_iterate(&f2, &it).map_err(|e| step(e.into()))?;
                (out.function, out.residual, SolveTrace::Sweeps(out.trace))
            }
            Method::MidrangeCyclic { tau } => {
                let f2 = newton_minimize(&f0, 2.0, &cfg.solver)
                    .map_err(|e| step(e.into()))?
                    .function;
                let it = IterationConfig {
                    tau: *tau,
                    ..IterationConfig::cyclic()
                };
                let out = cyclic_iterate(&f2, &it).map_err(|e| step(e.into()))?;
                (out.function, out.residual, SolveTrace::Sweeps(out.trace))
            }
            Method::InfLaplacian { tau } => {
                let f2 = newton_minimize(&f0, 2.0, &cfg.solver)
                    .map_err(|e| step(e.into()))?
                    .function;
                let it = IterationConfig {
                    tau: *tau,
                    ..IterationConfig::default()
                };
                let out = inf_laplacian_iterate(&f2, &it).map_err(|e| step(e.into()))?;
                (out.function, out.residual, SolveTrace::Sweeps(out.trace))
            }
            Method::Componentwise { tau } => {
                let it = IterationConfig {
                    tau: *tau,
                    ..IterationConfig::default()
                };
                let out =
                    componentwise_extension(&graph, &boundary, &it).map_err(|e| step(e.into()))?;
                (out.function, out.residual, SolveTrace::None)
            }
        };

        for (&u, chunk) in interior.iter().zip(solved.interior_values().chunks(m)) {
            for ch in 0..m {
                estimate[u * m + ch] = chunk[ch].clamp(0.0, 1.0);
            }
        }

        let psnr_t = match reference {
            Some(r) => {
                let cur = RawImage::new(input.height, input.width, m, estimate.clone());
                Some(image_io::psnr(&cur, r).map_err(|e| step(e.into()))?)
            }
            None => None,
        };
        let table = report_llex_table(&solved, cfg.report_llex_top.min(interior.len()));
        iterations.push(IterationReport {
            iter: t,
            e_inf: energy_inf(&solved),
            residual,
            psnr: psnr_t,
            llex_top: table,
        });

        if let Some(dir) = &cfg.output_dir {
            let img = RawImage::new(input.height, input.width, m, estimate.clone());
            image_io::save_image(dir.join(format!("iter_{:03}.png", t + 1)), &img)?;
            let last = iterations.last().expect("just pushed");
            fs::write(
                dir.join(format!("llex_iter_{:03}.csv", t + 1)),
                last.llex_top.to_csv(),
            )
            .map_err(|e| PipelineError::Io(ImageIoError::Io(e)))?;
            let (name, text) = match &trace {
                SolveTrace::Continuation(csv) => {
                    (Some(format!("plap_trace_iter_{:03}.csv", t + 1)), csv.clone())
                }
                SolveTrace::Sweeps(tr) => (
                    Some(format!("sweeps_iter_{:03}.csv", t + 1)),
                    tr.to_csv(),
                ),
                SolveTrace::None => (None, String::new()),
            };
            if let Some(name) = name {
                fs::write(dir.join(name), text)
                    .map_err(|e| PipelineError::Io(ImageIoError::Io(e)))?;
            }
        }
    }

    let final_image = RawImage::new(input.height, input.width, m, estimate);
    let psnr = match reference {
        Some(r) => Some(image_io::psnr(&final_image, r)?),
        None => None,
    };
    if let Some(dir) = &cfg.output_dir {
        image_io::save_image(dir.join("final.png"), &final_image)?;
        let summary = Summary {
            method: &cfg.method,
            outer_iters: cfg.outer_iters,
            seed: cfg.seed,
            psnr,
            iterations: iterations
                .iter()
                .map(|r| SummaryRow {
                    iter: r.iter,
                    e_inf: r.e_inf,
                    residual: r.residual,
                    llex_head: r.llex_top.entries.first().map(|e| e.1).unwrap_or(0.0),
                    psnr: r.psnr,
                })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| PipelineError::BadConfig(e.to_string()))?;
        fs::write(dir.join("report.json"), json)
            .map_err(|e| PipelineError::Io(ImageIoError::Io(e)))?;
        let mut text = String::new();
        for r in &iterations {
            let _ = writeln!(
                text,
                "iteration {}: E_inf = {:.6}, residual = {:.3e}{}",
                r.iter + 1,
                r.e_inf,
                r.residual,
                match r.psnr {
                    Some(p) => format!(", psnr = {p:.2} dB"),
                    None => String::new(),
                }
            );
            text.push_str(&r.llex_top.to_text());
            text.push('\n');
        }
        fs::write(dir.join("report.txt"), text)
            .map_err(|e| PipelineError::Io(ImageIoError::Io(e)))?;
    }

    Ok(InpaintReport {
        final_image,
        psnr,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlocal::SigmaPolicy;
    use crate::testing::path_function;

    fn small_image(h: usize, w: usize, m: usize) -> RawImage {
        let mut data = Vec::with_capacity(h * w * m);
        for i in 0..h {
            for j in 0..w {
                for ch in 0..m {
                    data.push((((i * 5 + j * 11 + ch * 3) % 13) as f64) / 12.0);
                }
            }
        }
        RawImage::new(h, w, m, data)
    }

    fn square_hole_mask(h: usize, w: usize, top: usize, left: usize, side: usize) -> Vec<bool> {
        let mut known = vec![true; h * w];
        for i in top..top + side {
            for j in left..left + side {
                known[i * w + j] = false;
            }
        }
        known
    }

    #[test]
    fn config_json_field_names() {
        let text = r#"{
            "method": {"plap": {"p_target": 200.0}},
            "outer_iters": 3,
            "graph": {"grid4": {"weight": 1.0}},
            "solver": {"newton_tol": 1e-9},
            "seed": 7,
            "report_llex_top": 5
        }"#;
        let cfg: PipelineConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.outer_iters, 3);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.report_llex_top, 5);
        assert!(matches!(cfg.method, Method::Plap { p_target } if p_target == 200.0));
        assert!(matches!(cfg.graph, GraphSpec::Grid4 { weight } if weight == 1.0));

        let minimal = r#"{
            "method": {"midrange_km": {}},
            "graph": {"patch": {"variant": "hole_mask"}}
        }"#;
        let cfg: PipelineConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(cfg.outer_iters, 15);
        assert_eq!(cfg.report_llex_top, 10);
        assert!(matches!(cfg.method, Method::MidrangeKm { tau } if tau == 0.95));
        match cfg.graph {
            GraphSpec::Patch(p) => assert_eq!(p.variant, MaskVariant::HoleMask),
            _ => panic!("expected patch graph"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_domains() {
        let mut cfg = PipelineConfig {
            method: Method::Plap { p_target: 1.5 },
            outer_iters: 1,
            graph: GraphSpec::Grid4 { weight: 1.0 },
            solver: SolverConfig::default(),
            seed: 0,
            output_dir: None,
            report_llex_top: 10,
        };
        assert!(matches!(
            cfg.validate(),
            Err(PipelineError::BadConfig(_))
        ));
        cfg.method = Method::MidrangeKm { tau: 1.0 };
        assert!(cfg.validate().is_err());
        cfg.method = Method::MidrangeCyclic { tau: 1.0 };
        assert!(cfg.validate().is_ok());
        cfg.outer_iters = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn llex_table_examples() {
        let f = path_function(&[1.0, 1.0], &[0.0, 0.5, 1.0]);
        let t = report_llex_table(&f, 1);
        assert_eq!(t.entries, vec![(1, 0.5)]);
        let empty = report_llex_table(&f, 0);
        assert!(empty.entries.is_empty());
        assert!(t.to_csv().starts_with("rank,vertex,value\n"));
        assert!(t.to_text().contains("rank"));
    }

    #[test]
    fn grid4_pipeline_runs_and_is_deterministic() {
        let img = small_image(8, 8, 1);
        let known = square_hole_mask(8, 8, 3, 3, 3);
        let masked = MaskedImage::new(&img, known).unwrap();
        let cfg = PipelineConfig {
            method: Method::Plap { p_target: 8.0 },
            outer_iters: 2,
            graph: GraphSpec::Grid4 { weight: 1.0 },
            solver: SolverConfig::default(),
            seed: 99,
            output_dir: None,
            report_llex_top: 10,
        };
        let a = run_inpaint(&cfg, &masked, Some(&img)).unwrap();
        let b = run_inpaint(&cfg, &masked, Some(&img)).unwrap();
        assert_eq!(a.final_image.data, b.final_image.data);
        assert_eq!(a.iterations.len(), 2);
        assert!(a.psnr.unwrap() > 0.0);
        for v in 0..64usize {
            if masked.known[v] {
                assert_eq!(a.final_image.data[v], masked.pixels[v]);
            }
        }
        assert!(a.final_image.data.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert_eq!(a.iterations[0].llex_top.entries.len(), 9);
    }

    #[test]
    fn patch_pipeline_with_fixed_point_method() {
        let img = small_image(8, 8, 1);
        let mut known = vec![true; 64];
        for v in [19usize, 27, 28, 36, 44] {
            known[v] = false;
        }
        let masked = MaskedImage::new(&img, known).unwrap();
        let cfg = PipelineConfig {
            method: Method::MidrangeKm { tau: 0.95 },
            outer_iters: 2,
            graph: GraphSpec::Patch(PatchGraphParams {
                r: 1,
                search_radius: 2,
                top_k: 4,
                c: 1.0,
                sigma_policy: SigmaPolicy::Fixed { sigma: 0.5 },
                ..PatchGraphParams::default()
            }),
            solver: SolverConfig::default(),
            seed: 5,
            output_dir: None,
            report_llex_top: 3,
        };
        let out = run_inpaint(&cfg, &masked, None).unwrap();
        assert!(out.psnr.is_none());
        assert_eq!(out.iterations.len(), 2);
        for r in &out.iterations {
            assert!(r.residual.is_finite());
            assert!(r.e_inf.is_finite());
            assert_eq!(r.llex_top.entries.len(), 3);
        }
        for v in 0..64usize {
            if masked.known[v] {
                assert_eq!(out.final_image.data[v], masked.pixels[v]);
            }
        }
    }

    #[test]
    fn exit_codes_classify_errors() {
        assert_eq!(PipelineError::BadConfig("x".into()).exit_code(), 2);
        assert_eq!(
            PipelineError::Io(ImageIoError::UnsupportedFormat("x".into())).exit_code(),
            4
        );
        assert_eq!(
            PipelineError::Nonlocal(NonlocalError::BadParams("x".into())).exit_code(),
            2
        );
        assert_eq!(
            PipelineError::AtIteration {
                iter: 1,
                source: StepError::Plap(PlapError::LinearBreakdown),
            }
            .exit_code(),
            3
        );
    }
}
