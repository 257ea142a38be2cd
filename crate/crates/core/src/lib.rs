//! Boundary regression on OCT-like volumes: column-wise probability maps,
//! position, distribution and curvature losses, a small trainable predictor,
//! uncertainty-gated spline post-processing, and evaluation.
//!
//! ```
//! use bmseg::phantom::{make_suite, Difficulty, SuiteShape};
//! use bmseg::postproc::{apply_postprocess, PostprocConfig};
//! use bmseg::surface::UncertaintyGrid;
//!
//! let ph = &make_suite(Difficulty::Motion, 1, 4, SuiteShape::default()).unwrap()[0];
//! let (nb, w) = (ph.truth.n_bscans(), ph.truth.width());
//! let mut unc = UncertaintyGrid::constant(nb, w, 0.2);
//! for x in 30..40 {
//!     unc.set(5, x, 3.0);
//! }
//! let (fixed, report) = apply_postprocess(&ph.truth, &unc, &PostprocConfig::default()).unwrap();
//! assert_eq!(report.replaced, 10);
//! assert!((fixed.get(5, 35).unwrap() - ph.truth.get(5, 35).unwrap()).abs() < 1.0);
//! ```

pub mod error;
pub mod eval;
pub mod geometry;
pub mod phantom;
pub mod pmf;
pub mod postproc;
pub mod predictor;
pub mod preprocess;
pub mod shape;
pub mod surface;
pub mod tensor_io;

pub use error::{Error, Result};
