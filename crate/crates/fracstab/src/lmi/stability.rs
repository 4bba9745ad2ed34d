//! The stability LMI for the lifted system: asymptotic stability of the
//! commensurate realization (base order below one) is equivalent to the
//! existence of a positive definite Hermitian `X` with
//! `Q' Abig' + Abig Q < 0` where `Q = r X + conj(r) conj(X)` is real,
//! `r = exp(i theta)`, `theta = (1 - alpha_c) pi / 2`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::MultiOrderSystem;
use crate::order::RationalOrder;
use crate::spectral::{self, StabilityVerdict, VerdictMethod};

use super::problem::{
    add_sector_var_map, realify_hermitian_pd, AffineExpr, LmiFeasibilityProblem, LmiOptions,
    VariableSpace,
};
use super::solver::{solve_feasibility, FeasibilityStatus};

/// Sector rotation angle for a base order below one.
pub fn sector_theta(alpha_c: RationalOrder) -> f64 {
    (1.0 - alpha_c.value()) * std::f64::consts::FRAC_PI_2
}

fn require_subunit(alpha_c: RationalOrder) -> Result<()> {
    if alpha_c.as_ratio() >= num_rational::Ratio::new(1, 1) {
        return Err(Error::UnsupportedOrderRange(alpha_c.decimal_string()));
    }
    Ok(())
}

/// Assembles the feasibility problem: positive definite Hermitian `X`
/// (through its doubled real embedding) plus the sector inequality on the
/// lifted state matrix.
pub fn build_stability_lmi(
    a_big: &DMatrix<f64>,
    alpha_c: RationalOrder,
    opts: LmiOptions,
) -> Result<LmiFeasibilityProblem> {
    let n = a_big.nrows();
    if a_big.ncols() != n || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "state matrix must be square and nonempty, got {}x{}",
            n,
            a_big.ncols()
        )));
    }
    require_subunit(alpha_c)?;
    let theta = sector_theta(alpha_c);

    let mut space = VariableSpace::new();
    let x = space.add_hermitian("X", n);
    let pd = realify_hermitian_pd(&space, &x);

    let mut sector = AffineExpr::zeros(n, n);
    add_sector_var_map(&mut sector, &space, &x, theta, |q_b| {
        let m = a_big * q_b;
        -(&m + m.transpose())
    });

    let mut problem = LmiFeasibilityProblem::new(space, opts);
    problem.add_psd("hermitian_pd", pd)?;
    problem.add_psd("sector_stability", sector)?;
    Ok(problem)
}

/// Outcome of the LMI stability route; inconclusive solves are kept
/// distinct from an unstable verdict.
#[derive(Debug, Clone)]
pub enum LmiStability {
    Decided(StabilityVerdict),
    Inconclusive { diagnostic: String },
}

/// Lifts the plant, assembles the stability LMI, solves, and re-verifies.
/// Stable iff feasible; the verdict carries the re-verified certificate
/// margin and the lifted spectrum as evidence.
pub fn lmi_stability_check(system: &MultiOrderSystem, opts: LmiOptions) -> Result<LmiStability> {
    let lifted = system.lift()?;
    let problem = build_stability_lmi(lifted.a_big(), lifted.alpha_c(), opts)?;
    let result = solve_feasibility(&problem)?;
    let boundary = lifted.alpha_c().value() * std::f64::consts::FRAC_PI_2;
    let eigenvalues = spectral::eigenvalues(lifted.a_big())?;
    match result.status {
        FeasibilityStatus::Feasible => Ok(LmiStability::Decided(StabilityVerdict {
            stable: true,
            method: VerdictMethod::Lmi,
            margin: result.certificate_margin,
            boundary,
            eigenvalues,
        })),
        FeasibilityStatus::Infeasible => Ok(LmiStability::Decided(StabilityVerdict {
            stable: false,
            method: VerdictMethod::Lmi,
            margin: result.certificate_margin,
            boundary,
            eigenvalues,
        })),
        FeasibilityStatus::Inconclusive => Ok(LmiStability::Inconclusive {
            diagnostic: result.diagnostic,
        }),
    }
}
