//! Gravity-aligned rotation averaging.
//!
//! Estimates global camera orientations from noisy pairwise relative
//! rotations. Cameras with a known gravity direction reduce to a single
//! angle around the y-axis, solved by robust circular regression; cameras
//! without gravity join through a mixed 1-DoF / 3-DoF solve. The crate also
//! ships gravity refinement by majority voting, a synthetic benchmark
//! generator, and evaluation metrics.
//!
//! Per-edge and per-vertex passes are data-parallel via rayon (the default
//! `parallel` feature); disabling the feature compiles the same code paths
//! sequentially with bit-identical results.

pub mod circular;
pub mod eval;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod linsys;
pub mod mixed;
pub mod pose_graph;
pub mod refine;
pub mod synth;

pub use circular::{OneDofProblem, SolveError, SolveReport, SolverConfig, Stage};
pub use eval::{EvalError, EvalReport};
pub use geometry::{
    AxisAngle, GeometryError, Rotation3, UnitVector3, WrappedAngle,
};
pub use mixed::{EdgeClass, MixedReport};
pub use pose_graph::{ComponentFilter, Edge, GraphError, PoseGraph, Vertex, VertexId};
pub use refine::{RefineConfig, RefineReport};
pub use synth::{GroundTruth, SynthConfig, SynthError, Topology};
