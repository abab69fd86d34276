//! Minimal Lipschitz extensions of vector-valued functions on finite weighted
//! graphs.
//!
//! Given values on a boundary set of vertices, the library computes interior
//! values whose local Lipschitz constants are as small as possible in the
//! strongest (lexicographic) sense, together with the machinery around that
//! problem:
//!
//! - [`graph`]: weighted graphs, 4-neighbor image grids, edge-list I/O.
//! - [`metrics`]: edgewise/vertexwise Lipschitz constants, sorted constant
//!   vectors and their lexicographic order, and the `p`-energies.
//! - [`midrange`]: weighted midrange (smallest enclosing ball) filters, the
//!   building block of the fixed-point solvers.
//! - [`fixed_point`]: midrange and infinity-Laplacian iterations.
//! - [`plap`]: preconditioned Newton solver for the `p`-energies with
//!   continuation in `p`.
//! - [`oracle`]: slow, trustworthy brute-force references used by the tests.
//! - [`nonlocal`]: patch-similarity graphs over partially known images.
//! - [`pipeline`]: the iterated rebuild-and-solve inpainting driver.
//! - [`image_io`]: 8-bit image and mask I/O mapped to `[0,1]` values.

mod dense;
pub mod fixed_point;
pub mod function;
pub mod graph;
pub mod image_io;
pub mod metrics;
pub mod midrange;
pub mod nonlocal;
pub mod oracle;
pub mod pipeline;
pub mod plap;
pub mod testing;

pub use fixed_point::{IterationConfig, IterationStatus, IterationTrace, UpdateOrder};
pub use function::{BoundaryData, InteriorInit, VertexFunction};
pub use graph::{GraphOptions, WeightedGraph};
pub use metrics::{LexKind, LexVector};
pub use midrange::{MidrangeConfig, MidrangeProblem, MidrangeResult};
pub use nonlocal::{MaskedImage, PatchGraphParams, SigmaPolicy};
pub use oracle::OracleConfig;
pub use pipeline::{InpaintReport, Method, PipelineConfig};
pub use plap::{BlockSparseHessian, ContinuationTrace, SolverConfig};
