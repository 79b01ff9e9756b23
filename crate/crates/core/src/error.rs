//! Error type shared by all modules of the crate.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, CoreError>;

/// Everything that can go wrong across grid construction, assembly, solves,
/// transforms, continuation and inequality verification.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Invalid construction input (counts, extents, region bounds, ...).
    InvalidInput(String),
    /// A field was used with a grid it does not belong to.
    GridMismatch,
    /// A field holds a non-finite value at the given flat node index.
    NonFinite { node: usize },
    /// Boundary data violated where a boundary-consistent iterate is required.
    BoundaryMismatch { node: usize, deviation: f64 },
    /// Coefficient matrix lost ellipticity at a node.
    NotElliptic { node: usize, eigenvalue: f64 },
    /// Central differencing requested on a mesh too coarse for the drift.
    PecletExceeded { peclet: f64 },
    /// Direct factorization hit a pivot below the breakdown threshold.
    SingularMatrix { pivot: f64 },
    /// Newton ran out of iterations.
    Diverged { iterations: usize, residual: f64 },
    /// The iterate left the admissible range of the exponential substitution.
    BlowUp { node: usize, value: f64 },
    /// `1 + mu*v` must stay positive for the inverse substitution.
    TransformDomain { node: usize, value: f64 },
    /// Exact substitution requires constant mu (and identity leading part for
    /// the semilinear scheme).
    TransformInexact(String),
    /// Deflated search exhausted its restarts without a new root.
    NoNewSolution { restarts: usize },
    /// Hypothesis of an inequality failed at a node (certification refused).
    PreconditionFailed { what: String, node: usize, value: f64 },
    /// Branch data does not determine a diagram class.
    Inconclusive(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            CoreError::GridMismatch => write!(f, "grid function used with a foreign grid"),
            CoreError::NonFinite { node } => write!(f, "non-finite value at node {node}"),
            CoreError::BoundaryMismatch { node, deviation } => {
                write!(f, "boundary data violated at node {node} by {deviation:e}")
            }
            CoreError::NotElliptic { node, eigenvalue } => {
                write!(f, "coefficient matrix not elliptic at node {node} (eigenvalue {eigenvalue})")
            }
            CoreError::PecletExceeded { peclet } => {
                write!(f, "cell Peclet number {peclet} >= 1; refine the mesh or enable upwinding")
            }
            CoreError::SingularMatrix { pivot } => {
                write!(f, "matrix numerically singular (smallest pivot {pivot:e})")
            }
            CoreError::Diverged { iterations, residual } => {
                write!(f, "no convergence after {iterations} iterations (residual {residual:e})")
            }
            CoreError::BlowUp { node, value } => {
                write!(f, "blow-up signal: mu*u = {value} at node {node} exceeds overflow range")
            }
            CoreError::TransformDomain { node, value } => {
                write!(f, "inverse substitution undefined: 1 + mu*v = {value} at node {node}")
            }
            CoreError::TransformInexact(msg) => write!(f, "substitution not exact: {msg}"),
            CoreError::NoNewSolution { restarts } => {
                write!(f, "no new solution found after {restarts} restarts")
            }
            CoreError::PreconditionFailed { what, node, value } => {
                write!(f, "{what} fails at node {node} (value {value:e})")
            }
            CoreError::Inconclusive(msg) => write!(f, "classification inconclusive: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}
