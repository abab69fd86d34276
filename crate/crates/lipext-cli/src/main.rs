//! `lipext`: Lipschitz extension solvers on weighted graphs, and an image
//! inpainting pipeline built on them.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use lipext_core::fixed_point::{
    componentwise_extension, cyclic_iterate, inf_laplacian_iterate, km_iterate, IterationConfig,
};
use lipext_core::function::{BoundaryData, InteriorInit, VertexFunction};
use lipext_core::graph::{parse_edge_list, GraphOptions, WeightedGraph};
use lipext_core::image_io;
use lipext_core::metrics::{energy_inf, llex_vector};
use lipext_core::oracle::{brute_force_minimal_extension, OracleConfig, OracleError};
use lipext_core::pipeline::{self, PipelineConfig};
use lipext_core::plap::continuation_solve;

#[derive(Parser)]
#[command(
    name = "lipext",
    version,
    about = "Minimal Lipschitz extensions on weighted graphs and image inpainting"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Inpaint an image: iterate graph rebuilds and extension solves.
    Inpaint {
        /// Input image (PNG or binary PPM/PGM).
        #[arg(long)]
        input: PathBuf,
        /// Mask image: zero pixels are unknown, nonzero are known.
        #[arg(long)]
        mask: PathBuf,
        /// Ground-truth image for PSNR reporting.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// JSON pipeline configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for snapshots, tables, and the final image.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve one extension problem on an explicit graph file.
    SolveGraph {
        /// Edge list, one `u v w` per line.
        #[arg(long)]
        graph: PathBuf,
        /// Boundary values, one `u x_1 .. x_m` per line.
        #[arg(long)]
        boundary: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Target exponent (plap only; default 200).
        #[arg(long)]
        p: Option<f64>,
        /// Relaxation factor (fixed-point methods only).
        #[arg(long)]
        tau: Option<f64>,
        /// Where to write the solved vertex function.
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive grid search for the minimal extension of a small instance.
    Oracle {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        boundary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Plap,
    Km,
    Cyclic,
    Inflap,
    Componentwise,
}

struct Failure {
    code: u8,
    msg: String,
}

fn fail<E: std::fmt::Display>(code: u8) -> impl Fn(E) -> Failure {
    move |e| Failure {
        code,
        msg: e.to_string(),
    }
}

fn main() -> ExitCode {
    init_threads();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

/// `LIPEXT_THREADS` caps the global worker pool.
fn init_threads() {
    if let Ok(v) = std::env::var("LIPEXT_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Inpaint {
            input,
            mask,
            reference,
            config,
            out,
            seed,
        } => {
            let text = fs::read_to_string(&config).map_err(fail(4))?;
            let mut cfg: PipelineConfig = serde_json::from_str(&text).map_err(fail(2))?;
            cfg.output_dir = Some(out.clone());
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let masked = pipeline::load_masked(&input, &mask)
                .map_err(|e| fail(e.exit_code() as u8)(&e))?;
            let reference = match reference {
                Some(p) => Some(image_io::load_image(&p).map_err(fail(4))?),
                None => None,
            };
            let report = pipeline::run_inpaint(&cfg, &masked, reference.as_ref())
                .map_err(|e| fail(e.exit_code() as u8)(&e))?;
            match report.psnr {
                Some(p) => println!(
                    "inpainted {} iterations, psnr {:.2} dB -> {}",
                    report.iterations.len(),
                    p,
                    out.join("final.png").display()
                ),
                None => println!(
                    "inpainted {} iterations -> {}",
                    report.iterations.len(),
                    out.join("final.png").display()
                ),
            }
            Ok(())
        }
        Cmd::SolveGraph {
            graph,
            boundary,
            method,
            p,
            tau,
            out,
        } => {
            if p.is_some() && method != MethodArg::Plap {
                return Err(Failure {
                    code: 2,
                    msg: "--p only applies to --method plap".into(),
                });
            }
            if tau.is_some() && method == MethodArg::Plap {
                return Err(Failure {
                    code: 2,
                    msg: "--tau does not apply to --method plap".into(),
                });
            }
            let (g, graph) = load_instance(&graph, &boundary)?;
            let f: VertexFunction = match method {
                MethodArg::Plap => {
                    let mut cfg = lipext_core::plap::SolverConfig::default();
                    cfg.p_target = p.unwrap_or(200.0);
                    continuation_solve(&graph, &g, &cfg)
                        .map_err(fail(3))?
                        .function
                }
                MethodArg::Km => {
                    let it = IterationConfig {
                        tau: tau.unwrap_or(0.95),
                        ..IterationConfig::default()
                    };
                    let f0 = VertexFunction::from_boundary(&graph, &g, InteriorInit::BoundaryMean)
                        .map_err(fail(3))?;
                    km_iterate(&f0, &it).map_err(fail(3))?.function
                }
                MethodArg::Cyclic => {
                    let it = IterationConfig {
                        tau: tau.unwrap_or(1.0),
                        ..IterationConfig::cyclic()
                    };
                    let f0 = VertexFunction::from_boundary(&graph, &g, InteriorInit::BoundaryMean)
                        .map_err(fail(3))?;
                    cyclic_iterate(&f0, &it).map_err(fail(3))?.function
                }
                MethodArg::Inflap => {
                    let it = IterationConfig {
                        tau: tau.unwrap_or(0.95),
                        ..IterationConfig::default()
                    };
                    let f0 = VertexFunction::from_boundary(&graph, &g, InteriorInit::BoundaryMean)
                        .map_err(fail(3))?;
                    inf_laplacian_iterate(&f0, &it).map_err(fail(3))?.function
                }
                MethodArg::Componentwise => {
                    let it = IterationConfig {
                        tau: tau.unwrap_or(0.95),
                        ..IterationConfig::default()
                    };
                    componentwise_extension(&graph, &g, &it)
                        .map_err(fail(3))?
                        .function
                }
            };
            fs::write(&out, f.write()).map_err(fail(4))?;
            println!(
                "solved {} vertices: E_inf = {:.6}, llex head = {:.6} -> {}",
                graph.vertex_count(),
                energy_inf(&f),
                llex_vector(&f).head(),
                out.display()
            );
            Ok(())
        }
        Cmd::Oracle {
            graph,
            boundary,
            out,
        } => {
            let (g, graph) = load_instance(&graph, &boundary)?;
            let sol = brute_force_minimal_extension(&graph, &g, &OracleConfig::default())
                .map_err(|e| match e {
                    OracleError::BadConfig(_) | OracleError::TooManyFreeDims { .. } => {
                        fail(2)(&e)
                    }
                    other => fail(3)(&other),
                })?;
            fs::write(&out, sol.function.write()).map_err(fail(4))?;
            println!(
                "oracle done: final spacing {:.3e}, objective head {:.6} -> {}",
                sol.final_spacing,
                sol.primary.head(),
                out.display()
            );
            Ok(())
        }
    }
}

fn load_instance(
    graph_path: &PathBuf,
    boundary_path: &PathBuf,
) -> Result<(BoundaryData, Arc<WeightedGraph>), Failure> {
    let gtext = fs::read_to_string(graph_path).map_err(fail(4))?;
    let edges = parse_edge_list(&gtext).map_err(fail(2))?;
    let btext = fs::read_to_string(boundary_path).map_err(fail(4))?;
    let g = BoundaryData::parse(&btext).map_err(fail(2))?;
    let boundary: Vec<usize> = g.iter().map(|(u, _)| u).collect();
    let graph = WeightedGraph::build(&edges, &boundary, &GraphOptions::default())
        .map_err(fail(2))?;
    Ok((g, Arc::new(graph)))
}
