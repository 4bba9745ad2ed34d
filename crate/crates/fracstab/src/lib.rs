//! fracstab: stability analysis and output-feedback stabilization of
//! fractional-order LTI systems whose pseudo-states carry different
//! derivative orders.
//!
//! The toolkit rewrites a multi-order plant over the exact greatest common
//! divisor of its orders, producing an equivalent single-order realization
//! of dimension `N = sum(alpha_i / alpha_c)`. Stability is then decided two
//! independent ways: a sector test on the eigenvalues of the lifted state
//! matrix, and a semidefinite feasibility test over a complex Hermitian
//! variable. Fixed-order dynamic output-feedback stabilizers are
//! synthesized from a linearized matrix-inequality condition, recovered,
//! and always re-verified spectrally. A Grünwald-Letnikov time stepper
//! reproduces trajectories of the lifted dynamics.

use openblas_src as _;

pub mod cli;
pub mod document;
mod eigen;
pub mod error;
pub mod lmi;
pub mod model;
pub mod order;
pub mod plot;
pub mod report;
pub mod sim;
pub mod spectral;
pub mod synthesis;

pub use error::{Error, Result};
pub use model::{CommensurateRealization, MultiOrderSystem};
pub use order::{commensurate_base, parse_order, RationalOrder};
pub use spectral::{argument_stability_test, characteristic_polynomial, StabilityVerdict};
