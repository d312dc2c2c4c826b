//! Certification of steering-based randomness in the one-sided
//! device-independent setting.
//!
//! The crate computes Eve's optimal guessing probability for an assemblage
//! (and for a measurement device alone), decides star-compatibility of a
//! programmable measurement device and star-unsteerability of an assemblage,
//! evaluates the star-incompatibility weight, and searches for shared states
//! that minimize the guessing probability with an alternating
//! (see-saw) scheme.
//!
//! All semidefinite programs are posed over complex Hermitian operators,
//! lowered to real symmetric cones by [`sdp::embed_hermitian`] and solved by
//! the primal–dual interior-point backend in [`sdp`].
//!
//! ```
//! use steercert::{quantum::pauli_pmd, certify::is_star_compatible};
//!
//! let pmd = pauli_pmd(0.6).unwrap();
//! let verdict = is_star_compatible(&pmd, 0).unwrap();
//! assert!(verdict.compatible());
//! ```

pub mod certify;
pub mod experiments;
pub mod instance;
pub mod linalg;
pub mod quantum;
pub mod sdp;
pub mod seesaw;

use thiserror::Error;

pub use linalg::{CMatrix, CVector, DensityOperator, Hermitian, PureBipartiteState, C64};
pub use quantum::{Assemblage, Pmd, Povm, ValidationReport};
pub use sdp::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix has a non-finite entry")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid {kind}: {report}")]
    Invalid {
        kind: &'static str,
        report: ValidationReport,
    },
    #[error("solver returned {status:?} ({context})")]
    Solver {
        status: SolveStatus,
        context: String,
    },
    #[error("all {0} see-saw restarts failed")]
    AllRestartsFailed(usize),
    #[error("threshold search failed: {0}")]
    Threshold(String),
    #[error("malformed instance file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numerical backend rather than the input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::Solver { .. } | Error::AllRestartsFailed(_) | Error::Threshold(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
