//! Numerical verification engine for the twistor space 𝒵 and reflector space ℛ
//! over a paraquaternionic contact (pqc) manifold.
//!
//! The crate builds an explicit flat model — the paraquaternionic Heisenberg
//! group of dimension 4n+3 — together with its conformal and SO(1,2)-rotated
//! images, constructs the bundle 𝒬 of compatible endomorphisms in coordinates
//! (u, x), and machine-checks the structural identities of that geometry:
//! the pqc axioms, the Reeb and connection-form equations, the canonical
//! contact form η and its exterior derivative, the distribution 𝒦 with its
//! endomorphism J and Levi form G of split signature (2n+2, 2n+2), and the
//! vanishing of the Nijenhuis tensors on 𝒵 (CR integrability) and ℛ
//! (para-CR integrability).
//!
//! Module map:
//! - [`algebra`] — split quaternions 𝔹, the Im(𝔹) inner/cross products, the
//!   SO(1,2) triple correspondence, Sp(n,𝔹)Sp(1,𝔹), the Casimir split.
//! - [`scalar`], [`linalg`], [`fields`] — forward-mode dual numbers (nested for
//!   higher derivatives), small dense linear algebra, and evaluable
//!   scalar/vector/form fields with exterior derivative and Lie bracket.
//! - [`pqc`] — local pqc structures, the flat model, axiom checking, the Reeb
//!   solver, connection forms, rotations and conformal changes.
//! - [`bundle`] — the total space 𝒬: horizontal lifts, φ-forms, canonical η,
//!   the frame of 𝒦, J, the Levi form, lift commutators and bar lifts.
//! - [`twistor`] — 𝒵 and ℛ points, Nijenhuis tensors, Frobenius tests,
//!   conformal invariance of (𝒦, J), Levi signature checks.
//! - [`report`], [`suite`] — the verification suites behind the `verify` binary.

pub mod algebra;
pub mod bundle;
pub mod fields;
pub mod linalg;
pub mod pqc;
pub mod report;
pub mod scalar;
pub mod suite;
pub mod twistor;

use std::fmt;

/// Error type for geometric precondition violations and invalid inputs.
#[derive(Debug, Clone)]
pub enum Error {
    /// A defining relation failed: carries the relation and its residual.
    Constraint {
        what: &'static str,
        constraint: String,
        residual: f64,
    },
    /// A linear system was too ill-conditioned to trust.
    Degenerate { what: &'static str, detail: String },
    /// The operation is not defined for this input (e.g. nonconstant data
    /// where only constants are supported).
    Unsupported(String),
    /// Malformed user input (dimensions, parse errors, ...).
    InvalidInput(String),
}

impl Error {
    pub(crate) fn constraint(
        what: &'static str,
        constraint: impl Into<String>,
        residual: f64,
    ) -> Self {
        Error::Constraint {
            what,
            constraint: constraint.into(),
            residual,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Constraint {
                what,
                constraint,
                residual,
            } => write!(
                f,
                "{what}: constraint violated: {constraint} (residual {residual:.3e})"
            ),
            Error::Degenerate { what, detail } => write!(f, "{what}: degenerate: {detail}"),
            Error::Unsupported(msg) => write!(f, "unsupported input: {msg}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

/// Signs ε = (−1, −1, +1) fixed by the orientation convention on Im(𝔹).
pub const EPS: [f64; 3] = [-1.0, -1.0, 1.0];

/// Cyclic permutations (i, j, k) of (0, 1, 2), used throughout the bundle
/// formulas that sum over positive permutations of the three indices.
pub const CYCLIC: [(usize, usize, usize); 3] = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];
