//! Restarted GMRES with progressive statistical preconditioning.
//!
//! The solver records every matrix-vector product it performs as a probe
//! pair `(x, A*x)`. A banded preconditioner is then estimated from that
//! history by row-wise least squares and reused for subsequent solves or
//! time steps, where its tridiagonal (`d = 1`) form can be applied in
//! O(n) with the Thomas algorithm.
//!
//! Module map:
//! - [`linalg`]: dense vectors, CSR and banded storage, the matrix-free
//!   operator trait and the probe recorder.
//! - [`banded`]: Thomas algorithm and unpivoted banded LU for applying
//!   the inverse of the preconditioner.
//! - [`gmres`]: restarted, right-preconditioned GMRES with integrated
//!   probe recording.
//! - [`mrep`]: the multi-regressor estimator that fits the banded
//!   preconditioner from probe history.
//! - [`problems`]: test-problem generators (seven-diagonal random family,
//!   1-D implicit heat equation) and the time-stepping driver.
//! - [`mtx`]: Matrix Market coordinate-format I/O.
//! - [`cli`]: benchmark/solve subcommands and artifact emission.

pub mod banded;
pub mod cli;
pub mod error;
pub mod gmres;
pub mod linalg;
pub mod mrep;
pub mod mtx;
pub mod problems;

pub use error::Error;
pub use gmres::{psp_gmres, GmresConfig, Preconditioner, SolveReport};
pub use linalg::{BandedMatrix, CsrMatrix, LinearOperator, ProbeHistory};
pub use mrep::{mrep, PreconditionerEstimate};
