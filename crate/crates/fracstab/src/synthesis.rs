//! Fixed-order dynamic output-feedback stabilizer synthesis.
//!
//! A controller of designer-chosen order `nc` driven by the plant output
//! is found through a linearized matrix-inequality condition on the lifted
//! system: with block-diagonal Hermitian `P = diag(P_S, P_C)` and
//! change-of-variables matrices `W1..W4`, feasibility of
//!
//! ```text
//! [ Abig Qs + Qs' Abig' + Bbig W4 + W4' Bbig'   Bbig W3 + W2' ]
//! [ W2 + W3' Bbig'                              W1 + W1'      ]  < 0
//! ```
//!
//! (`Qs = r P_S + conj(r) conj(P_S)` real) together with positive definite
//! `P_S`, `P_C` yields controller matrices by inverting the change of
//! variables. The inversion applies a pseudo-inverse of the lifted output
//! matrix, which is exact only when `W2`, `W4` happen to factor through
//! it; the reconstruction error is measured as a recovery residual and
//! never silently accepted. When the residual is too large, the search
//! continues on refinements that keep the change of variables exactly
//! invertible:
//!
//! 1. with the sector matrices `Qs`, `Qc` frozen at the solved values, the
//!    original (un-linearized) inequality is affine in the controller
//!    matrices themselves and is re-solved for them directly;
//! 2. alternating with step 1, the block-diagonal Hermitian `P` is
//!    re-solved for a frozen candidate controller;
//! 3. as a last resort, a structured restriction (`W2 = V2 C`,
//!    `W4 = V4 C`, `C Qs = Gamma C`) couples the variables so the change
//!    of variables inverts exactly, at the cost of extra conservatism.
//!
//! Every returned controller is independently re-verified by the spectral
//! sector test on the lifted closed loop; feasibility alone is never
//! reported as success.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lmi::{
    add_sector_var_map, realify_hermitian_pd, sector_matrix, sector_theta, solve_feasibility,
    AffineExpr, FeasibilityStatus, HermitianVariable, LmiFeasibilityProblem, LmiOptions, VarRef,
    VarStructure, VariableSpace,
};
use crate::model::{CommensurateRealization, MultiOrderSystem};
use crate::order::RationalOrder;
use crate::spectral::{argument_stability_test, StabilityVerdict};

/// Condition-number guard for the matrices inverted during recovery.
const RECOVERY_CONDITION_CAP: f64 = 1e12;

/// A dynamic output-feedback controller realized at the plant's base
/// order; order zero degenerates to the static gain `u = Dc y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerRealization {
    pub ac: DMatrix<f64>,
    pub bc: DMatrix<f64>,
    pub cc: DMatrix<f64>,
    pub dc: DMatrix<f64>,
    pub alpha_c: RationalOrder,
}

impl ControllerRealization {
    pub fn new(
        ac: DMatrix<f64>,
        bc: DMatrix<f64>,
        cc: DMatrix<f64>,
        dc: DMatrix<f64>,
        alpha_c: RationalOrder,
    ) -> Result<Self> {
        let nc = ac.nrows();
        if ac.ncols() != nc {
            return Err(Error::DimensionMismatch(
                "controller Ac must be square".into(),
            ));
        }
        if bc.nrows() != nc || cc.ncols() != nc {
            return Err(Error::DimensionMismatch(
                "controller Bc/Cc dimensions do not match its order".into(),
            ));
        }
        if cc.nrows() != dc.nrows() || bc.ncols() != dc.ncols() {
            return Err(Error::DimensionMismatch(
                "controller input/output dimensions are inconsistent".into(),
            ));
        }
        Ok(Self {
            ac,
            bc,
            cc,
            dc,
            alpha_c,
        })
    }

    /// Static output-feedback gain.
    pub fn static_gain(dc: DMatrix<f64>, alpha_c: RationalOrder) -> Self {
        let (l, m) = (dc.nrows(), dc.ncols());
        Self {
            ac: DMatrix::zeros(0, 0),
            bc: DMatrix::zeros(0, m),
            cc: DMatrix::zeros(l, 0),
            dc,
            alpha_c,
        }
    }

    pub fn order(&self) -> usize {
        self.ac.nrows()
    }
}

/// Variable handles of one assembled synthesis problem.
pub struct SynthesisLayout {
    theta: f64,
    ps: HermitianVariable,
    pc: Option<HermitianVariable>,
    w1: Option<VarRef>,
    w3: Option<VarRef>,
    /// Free form: (W2, W4).
    free: Option<(Option<VarRef>, VarRef)>,
    /// Structured form: (V2, V4, Gamma).
    structured: Option<(Option<VarRef>, VarRef, VarRef)>,
}

impl SynthesisLayout {
    /// Sector matrix `Qs` of the solved `P_S`.
    pub fn sector_s(&self, space: &VariableSpace, assignment: &[f64]) -> DMatrix<f64> {
        sector_matrix(space, &self.ps, self.theta, assignment)
    }

    /// Sector matrix `Qc` of the solved `P_C` for dynamic controllers.
    pub fn sector_c(&self, space: &VariableSpace, assignment: &[f64]) -> Option<DMatrix<f64>> {
        self.pc
            .as_ref()
            .map(|pc| sector_matrix(space, pc, self.theta, assignment))
    }
}

/// Which recovery produced a returned controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryPath {
    /// Pseudo-inverse inversion of the change of variables.
    PseudoInverse,
    /// Re-solve of the original inequality for the controller matrices
    /// with the sector matrices frozen; exactly invertible.
    FixedSector,
    /// Structured variable coupling `C Qs = Gamma C`; exactly invertible.
    StructuredCoupling,
}

impl RecoveryPath {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecoveryPath::PseudoInverse => "pseudo-inverse",
            RecoveryPath::FixedSector => "fixed-sector",
            RecoveryPath::StructuredCoupling => "structured-coupling",
        }
    }
}

/// Options controlling the synthesis search.
#[derive(Debug, Clone, Copy)]
pub struct SynthesisOptions {
    pub lmi: LmiOptions,
    /// Relative tolerance on the recovery residual.
    pub residual_tolerance: f64,
    /// Whether the structured restriction may be tried when pseudo-inverse
    /// recovery fails its residual check.
    pub structured_fallback: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            lmi: LmiOptions::default(),
            residual_tolerance: 1e-6,
            structured_fallback: true,
        }
    }
}

/// Outcome of a successful synthesis.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub controller: ControllerRealization,
    /// Hermitian `P_S` assignment as (real part, imaginary part).
    pub p_s: (DMatrix<f64>, DMatrix<f64>),
    pub p_c: Option<(DMatrix<f64>, DMatrix<f64>)>,
    pub w1: Option<DMatrix<f64>>,
    pub w2: Option<DMatrix<f64>>,
    pub w3: Option<DMatrix<f64>>,
    pub w4: DMatrix<f64>,
    /// Largest reconstruction error of the change of variables.
    pub recovery_residual: f64,
    /// Independent spectral verdict on the lifted closed loop.
    pub closed_loop_verdict: StabilityVerdict,
    /// Re-verified feasibility slack of the certifying (P, controller)
    /// pair: the smallest eigenvalue margin over the definiteness and
    /// sector inequalities evaluated at the returned values.
    pub certificate_margin: f64,
    /// Which recovery produced the controller.
    pub recovery: RecoveryPath,
}

fn require_subunit(alpha_c: RationalOrder) -> Result<()> {
    if alpha_c.as_ratio() >= num_rational::Ratio::new(1, 1) {
        return Err(Error::UnsupportedOrderRange(alpha_c.decimal_string()));
    }
    Ok(())
}

fn place(target: &mut DMatrix<f64>, r0: usize, c0: usize, block: &DMatrix<f64>) {
    target
        .view_mut((r0, c0), (block.nrows(), block.ncols()))
        .copy_from(block);
}

fn check_lifted_dims(
    a_big: &DMatrix<f64>,
    b_big: &DMatrix<f64>,
    c_big: &DMatrix<f64>,
) -> Result<()> {
    let n_big = a_big.nrows();
    if a_big.ncols() != n_big || b_big.nrows() != n_big || c_big.ncols() != n_big {
        return Err(Error::DimensionMismatch(
            "lifted matrices are dimensionally inconsistent".into(),
        ));
    }
    Ok(())
}

/// Adds the variables and inequality blocks shared by both synthesis
/// forms: the `P_S` sector block and, for dynamic controllers, the `P_C`,
/// `W1`, `W3` contributions.
fn build_common(
    a_big: &DMatrix<f64>,
    b_big: &DMatrix<f64>,
    nc: usize,
    theta: f64,
    space: &mut VariableSpace,
    expr: &mut AffineExpr,
) -> (
    HermitianVariable,
    Option<HermitianVariable>,
    Option<VarRef>,
    Option<VarRef>,
) {
    let n_big = a_big.nrows();
    let dim = n_big + nc;
    let ps = space.add_hermitian("P_S", n_big);

    // top-left block: -(Abig Qs + Qs' Abig')
    add_sector_var_map(expr, space, &ps, theta, |q_b| {
        let m = a_big * q_b;
        let mut out = DMatrix::zeros(dim, dim);
        let s = -(&m + m.transpose());
        place(&mut out, 0, 0, &s);
        out
    });

    if nc == 0 {
        return (ps, None, None, None);
    }
    let pc = space.add_hermitian("P_C", nc);
    let w1 = space.add("W1", nc, nc, VarStructure::Full);
    let w3 = space.add("W3", b_big.ncols(), nc, VarStructure::Full);

    // bottom-right block: -(W1 + W1')
    expr.add_var_map(space, w1, |b| {
        let mut out = DMatrix::zeros(dim, dim);
        let s = -(b + b.transpose());
        place(&mut out, n_big, n_big, &s);
        out
    });
    // off-diagonal Bbig W3 contribution
    expr.add_var_map(space, w3, |b| {
        let m = b_big * b;
        let mut out = DMatrix::zeros(dim, dim);
        place(&mut out, 0, n_big, &(-&m));
        place(&mut out, n_big, 0, &(-m.transpose()));
        out
    });
    (ps, Some(pc), Some(w1), Some(w3))
}

/// Assembles the synthesis inequality with free `W2`, `W4`.
pub fn build_synthesis_lmi(
    a_big: &DMatrix<f64>,
    b_big: &DMatrix<f64>,
    c_big: &DMatrix<f64>,
    nc: usize,
    alpha_c: RationalOrder,
    opts: LmiOptions,
) -> Result<(LmiFeasibilityProblem, SynthesisLayout)> {
    check_lifted_dims(a_big, b_big, c_big)?;
    require_subunit(alpha_c)?;
    let theta = sector_theta(alpha_c);
    let n_big = a_big.nrows();
    let l = b_big.ncols();
    let dim = n_big + nc;

    let mut space = VariableSpace::new();
    let mut expr = AffineExpr::zeros(dim, dim);
    let (ps, pc, w1, w3) = build_common(a_big, b_big, nc, theta, &mut space, &mut expr);

    let w2 = if nc > 0 {
        let w2 = space.add("W2", nc, n_big, VarStructure::Full);
        expr.add_var_map(&space, w2, |b| {
            let mut out = DMatrix::zeros(dim, dim);
            place(&mut out, 0, n_big, &(-b.transpose()));
            place(&mut out, n_big, 0, &(-b));
            out
        });
        Some(w2)
    } else {
        None
    };
    let w4 = space.add("W4", l, n_big, VarStructure::Full);
    expr.add_var_map(&space, w4, |b| {
        let m = b_big * b;
        let mut out = DMatrix::zeros(dim, dim);
        let s = -(&m + m.transpose());
        place(&mut out, 0, 0, &s);
        out
    });

    let mut problem = LmiFeasibilityProblem::new(space, opts);
    problem.add_psd("P_S_pd", realify_hermitian_pd(&problem.space, &ps))?;
    if let Some(pc) = &pc {
        problem.add_psd("P_C_pd", realify_hermitian_pd(&problem.space, pc))?;
    }
    problem.add_psd("closed_loop_sector", expr)?;

    Ok((
        problem,
        SynthesisLayout {
            theta,
            ps,
            pc,
            w1,
            w3,
            free: Some((w2, w4)),
            structured: None,
        },
    ))
}

/// Assembles the structured restriction `W2 = V2 C`, `W4 = V4 C` with the
/// coupling `C Qs = Gamma C`, under which the change of variables inverts
/// exactly (`Dc = V4 Gamma^-1`, `Bc = V2 Gamma^-1`).
pub fn build_structured_synthesis_lmi(
    a_big: &DMatrix<f64>,
    b_big: &DMatrix<f64>,
    c_big: &DMatrix<f64>,
    nc: usize,
    alpha_c: RationalOrder,
    opts: LmiOptions,
) -> Result<(LmiFeasibilityProblem, SynthesisLayout)> {
    check_lifted_dims(a_big, b_big, c_big)?;
    require_subunit(alpha_c)?;
    let theta = sector_theta(alpha_c);
    let n_big = a_big.nrows();
    let l = b_big.ncols();
    let m = c_big.nrows();
    let dim = n_big + nc;

    let mut space = VariableSpace::new();
    let mut expr = AffineExpr::zeros(dim, dim);
    let (ps, pc, w1, w3) = build_common(a_big, b_big, nc, theta, &mut space, &mut expr);

    let v2 = if nc > 0 {
        let v2 = space.add("V2", nc, m, VarStructure::Full);
        expr.add_var_map(&space, v2, |b| {
            let w2_b = b * c_big;
            let mut out = DMatrix::zeros(dim, dim);
            place(&mut out, 0, n_big, &(-w2_b.transpose()));
            place(&mut out, n_big, 0, &(-w2_b));
            out
        });
        Some(v2)
    } else {
        None
    };
    let v4 = space.add("V4", l, m, VarStructure::Full);
    expr.add_var_map(&space, v4, |b| {
        let w4_b = b * c_big;
        let mb = b_big * w4_b;
        let mut out = DMatrix::zeros(dim, dim);
        let s = -(&mb + mb.transpose());
        place(&mut out, 0, 0, &s);
        out
    });
    let gamma = space.add("Gamma", m, m, VarStructure::Full);

    // coupling C Qs - Gamma C = 0
    let mut coupling = AffineExpr::zeros(m, n_big);
    add_sector_var_map(&mut coupling, &space, &ps, theta, |q_b| c_big * q_b);
    coupling.add_var_map(&space, gamma, |b| -(b * c_big));

    let mut problem = LmiFeasibilityProblem::new(space, opts);
    problem.add_psd("P_S_pd", realify_hermitian_pd(&problem.space, &ps))?;
    if let Some(pc) = &pc {
        problem.add_psd("P_C_pd", realify_hermitian_pd(&problem.space, pc))?;
    }
    problem.add_psd("closed_loop_sector", expr)?;
    problem.add_zero("output_coupling", coupling);

    Ok((
        problem,
        SynthesisLayout {
            theta,
            ps,
            pc,
            w1,
            w3,
            free: None,
            structured: Some((v2, v4, gamma)),
        },
    ))
}

/// Variable handles of the fixed-sector controller problem.
pub struct ControllerVars {
    pub dc: VarRef,
    pub dynamic: Option<(VarRef, VarRef, VarRef)>,
}

/// With `Qs` (and `Qc`) frozen, the un-linearized closed-loop inequality
/// is affine in the controller matrices; this assembles it so a controller
/// can be re-solved directly, making the change of variables exactly
/// invertible by construction.
pub fn build_controller_lmi(
    a_big: &DMatrix<f64>,
    b_big: &DMatrix<f64>,
    c_big: &DMatrix<f64>,
    q_s: &DMatrix<f64>,
    q_c: Option<&DMatrix<f64>>,
    nc: usize,
    opts: LmiOptions,
) -> Result<(LmiFeasibilityProblem, ControllerVars)> {
    check_lifted_dims(a_big, b_big, c_big)?;
    let n_big = a_big.nrows();
    let l = b_big.ncols();
    let m = c_big.nrows();
    let dim = n_big + nc;
    let c_qs = c_big * q_s;

    let mut space = VariableSpace::new();
    let dc = space.add("Dc", l, m, VarStructure::Full);
    let dynamic = if nc > 0 {
        Some((
            space.add("Ac", nc, nc, VarStructure::Full),
            space.add("Bc", nc, m, VarStructure::Full),
            space.add("Cc", l, nc, VarStructure::Full),
        ))
    } else {
        None
    };

    let mut expr = AffineExpr::zeros(dim, dim);
    let m0 = a_big * q_s;
    let mut constant = DMatrix::zeros(dim, dim);
    let s0 = -(&m0 + m0.transpose());
    place(&mut constant, 0, 0, &s0);
    expr.add_constant(&constant);

    expr.add_var_map(&space, dc, |b| {
        let t = b_big * b * &c_qs;
        let mut out = DMatrix::zeros(dim, dim);
        let s = -(&t + t.transpose());
        place(&mut out, 0, 0, &s);
        out
    });
    if let (Some((ac, bc, cc)), Some(q_c)) = (&dynamic, q_c) {
        expr.add_var_map(&space, *ac, |b| {
            let t = b * q_c;
            let mut out = DMatrix::zeros(dim, dim);
            let s = -(&t + t.transpose());
            place(&mut out, n_big, n_big, &s);
            out
        });
        expr.add_var_map(&space, *bc, |b| {
            let t = b * &c_qs;
            let mut out = DMatrix::zeros(dim, dim);
            place(&mut out, n_big, 0, &(-&t));
            place(&mut out, 0, n_big, &(-t.transpose()));
            out
        });
        expr.add_var_map(&space, *cc, |b| {
            let t = b_big * b * q_c;
            let mut out = DMatrix::zeros(dim, dim);
            place(&mut out, 0, n_big, &(-&t));
            place(&mut out, n_big, 0, &(-t.transpose()));
            out
        });
    } else if nc > 0 {
        return Err(Error::DimensionMismatch(
            "dynamic controller re-solve needs the controller sector matrix".into(),
        ));
    }

    let mut problem = LmiFeasibilityProblem::new(space, opts);
    problem.add_psd("fixed_sector_closed_loop", expr)?;
    Ok((problem, ControllerVars { dc, dynamic }))
}

/// Block-diagonal stability re-solve: for a frozen closed-loop lift, find
/// Hermitian positive definite `P_S`, `P_C` (block-diagonal as in the
/// synthesis condition) satisfying the sector inequality. Feasible exactly
/// when such a structured certificate exists for that closed loop.
pub fn build_blockdiag_stability_lmi(
    a_cl: &DMatrix<f64>,
    n_big: usize,
    nc: usize,
    alpha_c: RationalOrder,
    opts: LmiOptions,
) -> Result<(
    LmiFeasibilityProblem,
    (HermitianVariable, Option<HermitianVariable>),
)> {
    let dim = n_big + nc;
    if a_cl.nrows() != dim || a_cl.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "closed-loop matrix must be {dim}x{dim}"
        )));
    }
    require_subunit(alpha_c)?;
    let theta = sector_theta(alpha_c);

    let mut space = VariableSpace::new();
    let ps = space.add_hermitian("P_S", n_big);
    let pc = (nc > 0).then(|| space.add_hermitian("P_C", nc));

    let mut sector = AffineExpr::zeros(dim, dim);
    add_sector_var_map(&mut sector, &space, &ps, theta, |q_b| {
        let mut q_full = DMatrix::zeros(dim, dim);
        place(&mut q_full, 0, 0, q_b);
        let t = a_cl * q_full;
        -(&t + t.transpose())
    });
    if let Some(pc) = &pc {
        add_sector_var_map(&mut sector, &space, pc, theta, |q_b| {
            let mut q_full = DMatrix::zeros(dim, dim);
            place(&mut q_full, n_big, n_big, q_b);
            let t = a_cl * q_full;
            -(&t + t.transpose())
        });
    }

    let mut problem = LmiFeasibilityProblem::new(space, opts);
    problem.add_psd("P_S_pd", realify_hermitian_pd(&problem.space, &ps))?;
    if let Some(pc) = &pc {
        problem.add_psd("P_C_pd", realify_hermitian_pd(&problem.space, pc))?;
    }
    problem.add_psd("blockdiag_sector", sector)?;
    Ok((problem, (ps, pc)))
}

/// Hermitian assignment of one synthesis solve, kept as plain matrices so
/// refinement rounds can move between problems.
#[derive(Clone)]
struct HermitianParts {
    ps_re: DMatrix<f64>,
    ps_im: DMatrix<f64>,
    pc: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl HermitianParts {
    fn sector(&self, theta: f64) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        let q_s = 2.0 * (theta.cos() * &self.ps_re - theta.sin() * &self.ps_im);
        let q_c = self
            .pc
            .as_ref()
            .map(|(re, im)| 2.0 * (theta.cos() * re - theta.sin() * im));
        (q_s, q_c)
    }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue margin of the certifying pair: definiteness of the
/// Hermitian parts (through the doubled embedding) and the sector
/// inequality of the closed loop, all measured directly.
fn pair_certificate(a_cl: &DMatrix<f64>, parts: &HermitianParts, theta: f64, margin: f64) -> f64 {
    let n = parts.ps_re.nrows();
    let mut embed = DMatrix::zeros(2 * n, 2 * n);
    place(&mut embed, 0, 0, &parts.ps_re);
    place(&mut embed, n, n, &parts.ps_re);
    place(&mut embed, 0, n, &(-&parts.ps_im));
    place(&mut embed, n, 0, &parts.ps_im);
    let mut cert = min_eig(&embed) - margin;
    if let Some((re, im)) = &parts.pc {
        let c = re.nrows();
        let mut embed_c = DMatrix::zeros(2 * c, 2 * c);
        place(&mut embed_c, 0, 0, re);
        place(&mut embed_c, c, c, re);
        place(&mut embed_c, 0, c, &(-im));
        place(&mut embed_c, c, 0, im);
        cert = cert.min(min_eig(&embed_c) - margin);
    }
    let (q_s, q_c) = parts.sector(theta);
    let dim = a_cl.nrows();
    let n_big = q_s.nrows();
    let mut q_full = DMatrix::zeros(dim, dim);
    place(&mut q_full, 0, 0, &q_s);
    if let Some(q_c) = &q_c {
        place(&mut q_full, n_big, n_big, q_c);
    }
    let t = a_cl * q_full;
    cert.min(min_eig(&(-(&t + t.transpose()))) - margin)
}

fn guarded_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(false, false);
    let max_sv = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let min_sv = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(min_sv > 0.0) || max_sv / min_sv > RECOVERY_CONDITION_CAP {
        return Err(Error::RecoveryFailure(format!(
            "{what} is numerically singular (condition {:.3e})",
            max_sv / min_sv
        )));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::RecoveryFailure(format!("{what} could not be inverted")))
}

fn empty_dynamic_parts(dc: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (l, m) = (dc.nrows(), dc.ncols());
    (
        DMatrix::zeros(0, 0),
        DMatrix::zeros(0, m),
        DMatrix::zeros(l, 0),
    )
}

/// Recovers controller matrices from a feasible assignment and measures
/// the reconstruction error of the change of variables.
pub fn recover_controller(
    layout: &SynthesisLayout,
    space: &VariableSpace,
    assignment: &[f64],
    c_big: &DMatrix<f64>,
    alpha_c: RationalOrder,
) -> Result<(ControllerRealization, f64)> {
    let q_s = sector_matrix(space, &layout.ps, layout.theta, assignment);
    let q_s_inv = guarded_inverse(&q_s, "sector matrix of P_S")?;

    let dynamic = |space: &VariableSpace| -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>> {
        match (layout.pc.as_ref(), layout.w1, layout.w3) {
            (Some(pc), Some(w1), Some(w3)) => {
                let q_c = sector_matrix(space, pc, layout.theta, assignment);
                let q_c_inv = guarded_inverse(&q_c, "sector matrix of P_C")?;
                let ac = space.materialize(w1, assignment) * &q_c_inv;
                let cc = space.materialize(w3, assignment) * &q_c_inv;
                Ok(Some((ac, cc)))
            }
            _ => Ok(None),
        }
    };

    let (ac, bc, cc, dc, w2_val, w4_val) = match (&layout.free, &layout.structured) {
        (Some((w2, w4)), None) => {
            let c_pinv = c_big
                .clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::RecoveryFailure(format!("output pseudo-inverse: {e}")))?;
            let w4_val = space.materialize(*w4, assignment);
            let dc = &w4_val * &q_s_inv * &c_pinv;
            match (dynamic(space)?, w2) {
                (Some((ac, cc)), Some(w2)) => {
                    let w2_val = space.materialize(*w2, assignment);
                    let bc = &w2_val * &q_s_inv * &c_pinv;
                    (ac, bc, cc, dc, Some(w2_val), w4_val)
                }
                _ => {
                    let (ac, bc, cc) = empty_dynamic_parts(&dc);
                    (ac, bc, cc, dc, None, w4_val)
                }
            }
        }
        (None, Some((v2, v4, gamma))) => {
            let gamma_val = space.materialize(*gamma, assignment);
            let gamma_inv = guarded_inverse(&gamma_val, "output coupling Gamma")?;
            let v4_val = space.materialize(*v4, assignment);
            let dc = &v4_val * &gamma_inv;
            let w4_val = &v4_val * c_big;
            match (dynamic(space)?, v2) {
                (Some((ac, cc)), Some(v2)) => {
                    let v2_val = space.materialize(*v2, assignment);
                    let bc = &v2_val * &gamma_inv;
                    let w2_val = &v2_val * c_big;
                    (ac, bc, cc, dc, Some(w2_val), w4_val)
                }
                _ => {
                    let (ac, bc, cc) = empty_dynamic_parts(&dc);
                    (ac, bc, cc, dc, None, w4_val)
                }
            }
        }
        _ => {
            return Err(Error::Inconsistency(
                "synthesis layout has no variable form".into(),
            ))
        }
    };

    let mut residual = (&dc * c_big * &q_s - &w4_val).norm();
    if let Some(w2_val) = &w2_val {
        residual = residual.max((&bc * c_big * &q_s - w2_val).norm());
    }
    let controller = ControllerRealization::new(ac, bc, cc, dc, alpha_c)?;
    Ok((controller, residual))
}

/// Builds the augmented plant-plus-controller system: state dimension
/// `n + nc`, orders extended by `nc` copies of the base order.
pub fn assemble_closed_loop(
    system: &MultiOrderSystem,
    controller: &ControllerRealization,
) -> Result<MultiOrderSystem> {
    let n = system.dim();
    let l = system.input_dim();
    let m = system.output_dim();
    let nc = controller.order();
    if controller.dc.nrows() != l || controller.dc.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "controller feeds {}x{} but the plant expects {l}x{m}",
            controller.dc.nrows(),
            controller.dc.ncols()
        )));
    }
    let (alpha_c, _) = crate::order::commensurate_base(system.orders())?;
    if controller.alpha_c != alpha_c {
        return Err(Error::DimensionMismatch(format!(
            "controller base order {} does not match the plant base order {}",
            controller.alpha_c, alpha_c
        )));
    }

    let b_dc = system.b() * &controller.dc;
    let a00 = system.a() + &b_dc * system.c();
    let a01 = system.b() * &controller.cc;
    let a10 = &controller.bc * system.c();

    let mut a_cl = DMatrix::zeros(n + nc, n + nc);
    place(&mut a_cl, 0, 0, &a00);
    place(&mut a_cl, 0, n, &a01);
    place(&mut a_cl, n, 0, &a10);
    place(&mut a_cl, n, n, &controller.ac);

    let mut b_cl = DMatrix::zeros(n + nc, l);
    place(&mut b_cl, 0, 0, system.b());
    let mut c_cl = DMatrix::zeros(m, n + nc);
    place(&mut c_cl, 0, 0, system.c());

    let mut orders = system.orders().to_vec();
    orders.extend(std::iter::repeat(alpha_c).take(nc));
    let mut x0 = DVector::zeros(n + nc);
    x0.rows_mut(0, n).copy_from(system.x0());
    let mut x0_deriv = DVector::zeros(n + nc);
    x0_deriv.rows_mut(0, n).copy_from(system.x0_deriv());

    MultiOrderSystem::new(a_cl, b_cl, c_cl, orders, x0, x0_deriv)
}

/// Lifted closed-loop state matrix built directly from the lifted plant
/// blocks; every controller state contributes exactly one lifted state
/// because the controller runs at the base order.
pub fn closed_loop_lift_direct(
    lifted: &CommensurateRealization,
    controller: &ControllerRealization,
) -> DMatrix<f64> {
    let n_big = lifted.dim();
    let nc = controller.order();
    let b_dc = lifted.b_big() * &controller.dc;
    let m00 = lifted.a_big() + &b_dc * lifted.c_big();
    let m01 = lifted.b_big() * &controller.cc;
    let m10 = &controller.bc * lifted.c_big();

    let mut out = DMatrix::zeros(n_big + nc, n_big + nc);
    place(&mut out, 0, 0, &m00);
    place(&mut out, 0, n_big, &m01);
    place(&mut out, n_big, 0, &m10);
    place(&mut out, n_big, n_big, &controller.ac);
    out
}

/// Expands the closed loop through the augmented multi-order system and
/// cross-checks it entry for entry against the direct block construction;
/// the two are the same exact integer-indexed placements and must agree
/// to the bit.
pub fn expand_closed_loop(
    system: &MultiOrderSystem,
    controller: &ControllerRealization,
) -> Result<DMatrix<f64>> {
    let augmented = assemble_closed_loop(system, controller)?;
    let via_assembly = augmented.lift()?.a_big().clone();
    let direct = closed_loop_lift_direct(&system.lift()?, controller);
    if via_assembly != direct {
        return Err(Error::Inconsistency(
            "closed-loop lift differs between the augmented-system path and the direct \
             block construction"
                .into(),
        ));
    }
    Ok(via_assembly)
}

struct Attempt {
    result: SynthesisResult,
    residual_ok: bool,
}

fn attempt(
    system: &MultiOrderSystem,
    lifted: &CommensurateRealization,
    problem: &LmiFeasibilityProblem,
    layout: &SynthesisLayout,
    assignment: &[f64],
    certificate_margin: f64,
    opts: &SynthesisOptions,
) -> Result<Attempt> {
    let (controller, residual) = recover_controller(
        layout,
        &problem.space,
        assignment,
        lifted.c_big(),
        lifted.alpha_c(),
    )?;
    let w4_val = match (&layout.free, &layout.structured) {
        (Some((_, w4)), None) => problem.space.materialize(*w4, assignment),
        (None, Some((_, v4, _))) => problem.space.materialize(*v4, assignment) * lifted.c_big(),
        _ => unreachable!(),
    };
    let w2_val = match (&layout.free, &layout.structured) {
        (Some((Some(w2), _)), None) => Some(problem.space.materialize(*w2, assignment)),
        (None, Some((Some(v2), _, _))) => {
            Some(problem.space.materialize(*v2, assignment) * lifted.c_big())
        }
        _ => None,
    };
    let scale = w4_val
        .norm()
        .max(w2_val.as_ref().map(|m| m.norm()).unwrap_or(0.0))
        .max(1.0);
    let residual_ok = residual <= opts.residual_tolerance * scale;

    let a_cl = expand_closed_loop(system, &controller)?;
    let verdict = argument_stability_test(&a_cl, lifted.alpha_c())?;

    let result = SynthesisResult {
        controller,
        p_s: (
            problem.space.materialize(layout.ps.sym, assignment),
            problem.space.materialize(layout.ps.skew, assignment),
        ),
        p_c: layout.pc.as_ref().map(|pc| {
            (
                problem.space.materialize(pc.sym, assignment),
                problem.space.materialize(pc.skew, assignment),
            )
        }),
        w1: layout
            .w1
            .map(|w1| problem.space.materialize(w1, assignment)),
        w2: w2_val,
        w3: layout
            .w3
            .map(|w3| problem.space.materialize(w3, assignment)),
        w4: w4_val,
        recovery_residual: residual,
        closed_loop_verdict: verdict,
        certificate_margin,
        recovery: if layout.structured.is_some() {
            RecoveryPath::StructuredCoupling
        } else {
            RecoveryPath::PseudoInverse
        },
    };
    Ok(Attempt {
        result,
        residual_ok,
    })
}

/// Assembles the result of a fixed-sector recovery: the change of
/// variables is evaluated forward, so the recovery residual is zero by
/// construction, and the certificate is measured directly on the final
/// (P, controller) pair.
fn fixed_sector_result(
    system: &MultiOrderSystem,
    lifted: &CommensurateRealization,
    parts: &HermitianParts,
    theta: f64,
    controller: ControllerRealization,
    margin: f64,
) -> Result<SynthesisResult> {
    let a_cl = expand_closed_loop(system, &controller)?;
    let verdict = argument_stability_test(&a_cl, lifted.alpha_c())?;
    let certificate = pair_certificate(&a_cl, parts, theta, margin);
    let (q_s, q_c) = parts.sector(theta);
    let w4 = &controller.dc * lifted.c_big() * &q_s;
    let w2 = (controller.order() > 0).then(|| &controller.bc * lifted.c_big() * &q_s);
    let w1 = q_c.as_ref().map(|qc| &controller.ac * qc);
    let w3 = q_c.as_ref().map(|qc| &controller.cc * qc);
    let mut residual = (&controller.dc * lifted.c_big() * &q_s - &w4).norm();
    if let Some(w2) = &w2 {
        residual = residual.max((&controller.bc * lifted.c_big() * &q_s - w2).norm());
    }
    Ok(SynthesisResult {
        controller,
        p_s: (parts.ps_re.clone(), parts.ps_im.clone()),
        p_c: parts.pc.clone(),
        w1,
        w2,
        w3,
        w4,
        recovery_residual: residual,
        closed_loop_verdict: verdict,
        certificate_margin: certificate,
        recovery: RecoveryPath::FixedSector,
    })
}

const REFINEMENT_ROUNDS: usize = 3;

/// End-to-end synthesis: lift, solve the inequality system, recover the
/// controller, assemble the closed loop, and verify it spectrally.
/// Success requires a stable independent verdict and a recovery residual
/// within tolerance; when the pseudo-inverse recovery misses that bar, the
/// search continues with exactly invertible refinements.
pub fn synthesize(
    system: &MultiOrderSystem,
    nc: usize,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    if system.input_dim() == 0 || system.output_dim() == 0 {
        return Err(Error::DimensionMismatch(
            "synthesis requires plant input and output matrices".into(),
        ));
    }
    let lifted = system.lift()?;
    require_subunit(lifted.alpha_c())?;

    let (problem, layout) = build_synthesis_lmi(
        lifted.a_big(),
        lifted.b_big(),
        lifted.c_big(),
        nc,
        lifted.alpha_c(),
        opts.lmi,
    )?;
    let solved = solve_feasibility(&problem)?;
    let assignment = match solved.status {
        FeasibilityStatus::Infeasible => return Err(Error::SynthesisInfeasible { nc }),
        FeasibilityStatus::Inconclusive => {
            return Err(Error::SolverInconclusive(solved.diagnostic))
        }
        FeasibilityStatus::Feasible => solved
            .assignment
            .expect("feasible result carries assignment"),
    };

    // the published recovery: pseudo-inverse inversion of the change of
    // variables
    let free_attempt = match attempt(
        system,
        &lifted,
        &problem,
        &layout,
        &assignment,
        solved.certificate_margin,
        opts,
    ) {
        Ok(att) => {
            if att.residual_ok && att.result.closed_loop_verdict.stable {
                return Ok(att.result);
            }
            Some(att)
        }
        Err(Error::RecoveryFailure(_)) => None,
        Err(e) => return Err(e),
    };

    // refinement: alternate a controller re-solve at frozen sector
    // matrices with a block-diagonal P re-solve at a frozen candidate
    let theta = sector_theta(lifted.alpha_c());
    let mut parts = HermitianParts {
        ps_re: problem.space.materialize(layout.ps.sym, &assignment),
        ps_im: problem.space.materialize(layout.ps.skew, &assignment),
        pc: layout.pc.as_ref().map(|pc| {
            (
                problem.space.materialize(pc.sym, &assignment),
                problem.space.materialize(pc.skew, &assignment),
            )
        }),
    };
    let mut candidate: Option<ControllerRealization> =
        free_attempt.as_ref().map(|a| a.result.controller.clone());
    // gains are searched smallest bound first, and each adaptation round
    // lets the gain descend further, so controllers come out at
    // actuator-friendly magnitudes when those suffice
    let mut gain_ladder: Vec<f64> = [1.0, 3.0, 10.0, 100.0]
        .into_iter()
        .filter(|b| *b < opts.lmi.variable_bound)
        .collect();
    gain_ladder.push(opts.lmi.variable_bound);
    let mut best: Option<SynthesisResult> = None;
    let mut best_bound = f64::INFINITY;
    for _ in 0..REFINEMENT_ROUNDS {
        let (q_s, q_c) = parts.sector(theta);
        let mut solved: Option<(ControllerRealization, f64)> = None;
        for &bound in &gain_ladder {
            let copts = LmiOptions {
                margin: opts.lmi.margin,
                variable_bound: bound,
            };
            let (cproblem, cvars) = build_controller_lmi(
                lifted.a_big(),
                lifted.b_big(),
                lifted.c_big(),
                &q_s,
                q_c.as_ref(),
                nc,
                copts,
            )?;
            let cres = solve_feasibility(&cproblem)?;
            if cres.status == FeasibilityStatus::Feasible {
                let cv = cres.assignment.expect("feasible result carries assignment");
                let dc = cproblem.space.materialize(cvars.dc, &cv);
                let (ac, bc, cc) = match cvars.dynamic {
                    Some((ac, bc, cc)) => (
                        cproblem.space.materialize(ac, &cv),
                        cproblem.space.materialize(bc, &cv),
                        cproblem.space.materialize(cc, &cv),
                    ),
                    None => empty_dynamic_parts(&dc),
                };
                solved = Some((
                    ControllerRealization::new(ac, bc, cc, dc, lifted.alpha_c())?,
                    bound,
                ));
                break;
            }
        }
        if let Some((controller, bound)) = solved {
            let result =
                fixed_sector_result(system, &lifted, &parts, theta, controller, opts.lmi.margin)?;
            if result.closed_loop_verdict.stable {
                let made_progress = bound < best_bound;
                candidate = Some(result.controller.clone());
                best = Some(result);
                best_bound = bound;
                if !made_progress {
                    break;
                }
            } else if best.is_some() {
                break;
            }
        }
        // adapting P needs a stabilizing candidate to certify
        let Some(ctrl) = candidate.take() else { break };
        let a_cl = closed_loop_lift_direct(&lifted, &ctrl);
        let (pproblem, (psv, pcv)) =
            build_blockdiag_stability_lmi(&a_cl, lifted.dim(), nc, lifted.alpha_c(), opts.lmi)?;
        let pres = solve_feasibility(&pproblem)?;
        if pres.status != FeasibilityStatus::Feasible {
            break;
        }
        let pv = pres.assignment.expect("feasible result carries assignment");
        parts = HermitianParts {
            ps_re: pproblem.space.materialize(psv.sym, &pv),
            ps_im: pproblem.space.materialize(psv.skew, &pv),
            pc: pcv.as_ref().map(|pc| {
                (
                    pproblem.space.materialize(pc.sym, &pv),
                    pproblem.space.materialize(pc.skew, &pv),
                )
            }),
        };
        candidate = Some(ctrl);
    }
    if let Some(result) = best {
        return Ok(result);
    }

    if opts.structured_fallback {
        let (sproblem, slayout) = build_structured_synthesis_lmi(
            lifted.a_big(),
            lifted.b_big(),
            lifted.c_big(),
            nc,
            lifted.alpha_c(),
            opts.lmi,
        )?;
        let ssolved = solve_feasibility(&sproblem)?;
        if ssolved.status == FeasibilityStatus::Feasible {
            let sassignment = ssolved
                .assignment
                .expect("feasible result carries assignment");
            let att = attempt(
                system,
                &lifted,
                &sproblem,
                &slayout,
                &sassignment,
                ssolved.certificate_margin,
                opts,
            )?;
            if att.residual_ok && att.result.closed_loop_verdict.stable {
                return Ok(att.result);
            }
            if !att.result.closed_loop_verdict.stable {
                return Err(Error::VerificationFailure(format!(
                    "the structured inequality system was feasible with exact recovery but \
                     the closed-loop spectral test failed (margin {:.3e})",
                    att.result.closed_loop_verdict.margin
                )));
            }
        }
    }

    match free_attempt {
        Some(att) if !att.residual_ok => Err(Error::RecoveryFailure(format!(
            "recovery residual {:.3e} exceeds tolerance (the change of variables does not \
             factor through the output matrix) and no exactly invertible refinement \
             succeeded",
            att.result.recovery_residual
        ))),
        Some(att) => Err(Error::VerificationFailure(format!(
            "the inequality system was feasible but the recovered controller fails the \
             closed-loop spectral test (margin {:.3e})",
            att.result.closed_loop_verdict.margin
        ))),
        None => Err(Error::RecoveryFailure(
            "recovery inverses were numerically singular and no exactly invertible \
             refinement succeeded"
                .into(),
        )),
    }
}
