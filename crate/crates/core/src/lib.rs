//! Bayesian optimization that tolerates corrupted observations.
//!
//! A Gaussian process with a Student-t likelihood, fitted by the Laplace
//! approximation, periodically reclassifies every observation as inlier or
//! outlier. The acquisition step then uses an exact Gaussian-likelihood GP
//! fitted on the inliers only.
//!
//! All numerical code is generic over [`Scalar`] (`f32`, `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

pub mod acquisition;
pub mod bench;
pub mod bo_loop;
pub mod dataset;
pub mod design;
pub mod error;
pub mod gp_exact;
pub mod gp_laplace;
pub mod kernels;
pub mod linalg;
pub mod optim;
pub mod rng;
pub mod robust;
pub mod scalar;
pub mod special;

pub use acquisition::{expected_improvement, maximize_acquisition, AcquisitionEval, AcquisitionOptions};
pub use bo_loop::{latin_hypercube_design, run_bo, BoConfig, BoEvent, BoResult, BoState, IterationRecord, Proposal};
pub use dataset::{Dataset, Observation};
pub use design::{latin_hypercube, Bounds};
pub use error::{Error, Result};
pub use gp_exact::{fit_exact, nlml, ExactFitOptions, GaussianGp, HyperBounds, Prediction};
pub use gp_laplace::{
    fit_laplace, laplace_evidence, laplace_mode, t_logpdf, LaplaceFitOptions, LaplaceGp, LaplaceOptions, StudentTLik,
};
pub use kernels::{gram, kernel_value, scaled_distance, KernelFamily, KernelSpec};
pub use robust::{active_subset, classify_outliers, should_run_detection, Direction, OutlierFlags, Schedule};
pub use scalar::Scalar;

pub type KernelSpec64 = KernelSpec<f64>;
pub type KernelSpec32 = KernelSpec<f32>;
pub type GaussianGp64 = GaussianGp<f64>;
pub type GaussianGp32 = GaussianGp<f32>;
pub type LaplaceGp64 = LaplaceGp<f64>;
pub type LaplaceGp32 = LaplaceGp<f32>;
pub type StudentTLik64 = StudentTLik<f64>;
pub type Bounds64 = Bounds<f64>;
pub type Dataset64 = Dataset<f64>;
pub type BoConfig64 = BoConfig<f64>;
pub type BoState64 = BoState<f64>;
pub type BoResult64 = BoResult<f64>;
