//! Eigenvalue-based stability test for the lifted commensurate system,
//! plus characteristic-polynomial extraction for cross-validation.
//!
//! A commensurate system of base order `alpha_c` is asymptotically stable
//! iff every eigenvalue of its state matrix satisfies
//! `|arg(lambda)| > alpha_c * pi / 2` (Matignon sector criterion).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::eigen;
use crate::error::{Error, Result};
use crate::order::RationalOrder;

/// Cap for the characteristic-polynomial recurrence; beyond this the
/// coefficients are too ill-conditioned in double precision to be useful.
pub const CHARPOLY_DIMENSION_CAP: usize = 64;

/// Relative threshold below which an eigenvalue is treated as zero (a
/// marginal mode, counted as a stability violation).
const ZERO_EIGENVALUE_RTOL: f64 = 1e-10;

/// How a stability verdict was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictMethod {
    Spectral,
    Lmi,
}

/// Stability decision with its supporting evidence.
#[derive(Debug, Clone)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub method: VerdictMethod,
    /// Distance to the stability boundary in radians: the minimum over all
    /// eigenvalues of `|arg(lambda)| - alpha_c * pi / 2` for the spectral
    /// method, or the re-verified constraint slack for the LMI method.
    pub margin: f64,
    /// The sector half-angle `alpha_c * pi / 2` in radians.
    pub boundary: f64,
    /// Eigenvalues of the lifted state matrix, with multiplicity.
    pub eigenvalues: Vec<Complex64>,
}

/// All eigenvalues of a real square matrix, with multiplicity, sorted by
/// real part then imaginary part.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    eigen::eigenvalues(m)
}

/// Applies the sector criterion to a lifted state matrix: stable iff every
/// eigenvalue has `|arg| > alpha_c * pi / 2` strictly. A numerically zero
/// eigenvalue has no argument and counts as a violation with margin
/// `-alpha_c * pi / 2`.
pub fn argument_stability_test(
    m: &DMatrix<f64>,
    alpha_c: RationalOrder,
) -> Result<StabilityVerdict> {
    let boundary = alpha_c.value() * std::f64::consts::FRAC_PI_2;
    let eigs = eigenvalues(m)?;
    let scale = m.norm();
    let zero_tol = ZERO_EIGENVALUE_RTOL * scale;
    let mut margin = f64::INFINITY;
    for lambda in &eigs {
        let this = if lambda.norm() <= zero_tol {
            -boundary
        } else {
            lambda.arg().abs() - boundary
        };
        if this < margin {
            margin = this;
        }
    }
    if eigs.is_empty() {
        margin = f64::INFINITY;
    }
    Ok(StabilityVerdict {
        stable: margin > 0.0,
        method: VerdictMethod::Spectral,
        margin,
        boundary,
        eigenvalues: eigs,
    })
}

/// Coefficients of `det(sI - M)` as a monic polynomial, highest power
/// first, via the Faddeev-LeVerrier trace recurrence.
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "characteristic polynomial input must be square, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if n > CHARPOLY_DIMENSION_CAP {
        return Err(Error::CharPolyCap {
            n,
            cap: CHARPOLY_DIMENSION_CAP,
        });
    }
    let mut coeffs = vec![0.0; n + 1];
    coeffs[0] = 1.0;
    let mut b = DMatrix::<f64>::identity(n, n);
    for k in 1..=n {
        b = m * b;
        let c = -b.trace() / k as f64;
        coeffs[k] = c;
        for i in 0..n {
            b[(i, i)] += c;
        }
    }
    Ok(coeffs)
}

/// Companion matrix of a monic polynomial given as coefficients highest
/// power first (`coeffs[0]` must be 1): the matrix whose characteristic
/// polynomial is the input.
pub fn companion_matrix(coeffs: &[f64]) -> Result<DMatrix<f64>> {
    if coeffs.len() < 2 {
        return Err(Error::DimensionMismatch(
            "companion matrix needs a polynomial of degree >= 1".into(),
        ));
    }
    if coeffs[0] != 1.0 {
        return Err(Error::Numeric(
            "companion matrix requires a monic polynomial".into(),
        ));
    }
    let n = coeffs.len() - 1;
    let mut m = DMatrix::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -coeffs[n - i];
    }
    Ok(m)
}
