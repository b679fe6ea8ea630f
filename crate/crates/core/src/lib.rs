//! Thread-parallel anisotropic adaptation of 2D triangle meshes.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod benchmark;
pub mod coarsen;
pub mod colouring;
pub mod error;
pub mod hessian;
pub mod io;
pub mod mesh;
pub mod metric;
pub mod parallel;
pub mod quality;
pub mod refine;
pub mod smooth;
pub mod swap;
mod view;
pub mod vtk;

pub use adapt::{adapt, quality_histogram, AdaptConfig, AdaptStats, PhaseTimes, HISTOGRAM_BINS};
pub use benchmark::{
    run_benchmark, run_benchmark_on, run_single, synthetic_solution, BenchmarkConfig, BenchmarkReport, BenchmarkSummary,
};
pub use coarsen::{coarsen_identify, coarsen_kernel, coarsen_pass, collapse_is_legal, CoarsenStats};
pub use colouring::{colour_graph, improper_edges, independent_set, repair_colouring, ColourMap};
pub use error::{Error, Result};
pub use hessian::recover_hessian;
pub use io::{read_mesh, read_metric, write_mesh, write_metric};
pub use mesh::{
    BoundaryTag, ConsistencyReport, ElementId, Mesh, Renumbering, VertexAdjacency, VertexId, Violation, INVALID,
};
pub use metric::{compute_metric, edge_length_metric, interpolate_metric, MetricField, MetricParams, MetricTensor};
pub use parallel::{AdjacencyEdit, CommitStats, DeferredOps, Workers, Worklist};
pub use quality::{element_quality, patch_quality, sizing_factor, triangle_quality};
pub use refine::{refine_pass, split_element, RefineStats, SplitEdge};
pub use smooth::{laplacian_proposal, smart_smooth_kernel, smooth_pass, SmoothParams, SmoothStats};
pub use swap::{swap_edge, swap_pass, SwapStats};
pub use vtk::{write_vtk, VtkField};
