//! Semidefinite feasibility machinery: problem assembly over structured
//! matrix variables, the complex-to-real embedding, the stability LMI, and
//! the backend solver contract with independent re-verification.

pub mod problem;
pub mod solver;
pub mod stability;

pub use problem::{
    add_sector_var_map, realify_hermitian_pd, sector_matrix, AffineExpr, ConstraintKind,
    HermitianVariable, LmiConstraint, LmiFeasibilityProblem, LmiOptions, MatrixVar, VarRef,
    VarStructure, VariableSpace,
};
pub use solver::{solve_feasibility, FeasibilityResult, FeasibilityStatus};
pub use stability::{build_stability_lmi, lmi_stability_check, sector_theta, LmiStability};
