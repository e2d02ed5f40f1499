//! Joint motion estimation and image sequence reconstruction.
//!
//! Given a sequence of noisy or degraded frames `f¹…fⁿ`, [`solve_joint`]
//! alternates between TV-L¹ optical flow on the current reconstruction and a
//! space-time TV reconstruction that is coupled to the flows through
//! bicubic warping matrices. Both subproblems use diagonally preconditioned
//! primal-dual iterations.
//!
//! Kernels run on rayon when the default `parallel` feature is enabled and
//! sequentially otherwise; results are identical either way.

pub mod config;
pub mod driver;
pub mod energy;
pub mod error;
pub mod flow;
pub mod image;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod operators;
pub mod par;
pub mod reconstruct;
pub mod sparse;
pub mod synth;
pub mod warp;

pub use config::{InitKind, OperatorKind, SolveConfig};
pub use driver::{solve_joint, solve_joint_with, Diagnostics, JointOptions, JointOutcome};
pub use energy::joint_energy;
pub use error::{Error, Result};
pub use flow::solve_flow_pyramid;
pub use image::{normalize_sequence, FlowField, FlowSequence, Image, ImageSequence, Normalization};
pub use operators::ForwardOperator;
pub use reconstruct::{init_rof, init_smooth_time, solve_images, ImageOperators, ImageSolverParams};
pub use sparse::SparseOperator;
