//! Dictionary learning under semirandom sparse-coding models.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! * [`model`]: synthetic dictionaries, support/value laws and semirandom
//!   sample batches with ground truth.
//! * [`column_test`]: inner-product histogram tests deciding whether a unit
//!   vector is close to a dictionary column, and refinement of accepted ones.
//! * [`candidates`]: the weighted moment statistic over anchor tuples, tuple
//!   proposal strategies and the filtered candidate set.
//! * [`recovery`]: support detection, the reweighting LP, weighted
//!   subsampling and the outer recovery loop.
//! * [`conc`]: flattened tensor norms and Monte-Carlo checks of tail bounds
//!   for multilinear polynomials of sparse random vectors.
//! * [`harness`]: experiment configs, column matching and on-disk artifacts;
//!   [`io`] holds the file formats.

pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod candidates;
pub mod conc;
pub mod column_test;
pub mod model;
pub mod recovery;
pub mod rng;

pub use error::{Error, Result};
