//! Affine matrix-inequality problem assembly.
//!
//! Matrix variables carry a structure tag (symmetric, skew-symmetric, or
//! full) and are flattened into a single scalar parameter vector. Every
//! constraint is an affine matrix-valued map of that vector, normalized to
//! either `expr(v) >= margin * I` (semidefinite with margin) or
//! `expr(v) = 0` (equality). Complex Hermitian variables are represented
//! by a symmetric real part and a skew-symmetric imaginary part; their
//! positive definiteness is imposed through the doubled real embedding
//! `[[Re, -Im], [Im, Re]]`, which is definite iff the complex matrix is.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Structure tag of a matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStructure {
    Symmetric,
    SkewSymmetric,
    Full,
}

/// One named matrix variable inside a problem.
#[derive(Debug, Clone)]
pub struct MatrixVar {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub structure: VarStructure,
    /// Offset of this variable's first scalar parameter.
    pub offset: usize,
}

impl MatrixVar {
    pub fn param_count(&self) -> usize {
        match self.structure {
            VarStructure::Symmetric => self.rows * (self.rows + 1) / 2,
            VarStructure::SkewSymmetric => self.rows * (self.rows - 1) / 2,
            VarStructure::Full => self.rows * self.cols,
        }
    }

    /// Basis matrix for the k-th local scalar parameter: the derivative of
    /// the materialized matrix with respect to that parameter.
    pub fn basis(&self, k: usize) -> DMatrix<f64> {
        let n = self.rows;
        let mut m = DMatrix::zeros(self.rows, self.cols);
        match self.structure {
            VarStructure::Symmetric => {
                let (i, j) = sym_position(n, k);
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
            }
            VarStructure::SkewSymmetric => {
                let (i, j) = skew_position(n, k);
                m[(i, j)] = 1.0;
                m[(j, i)] = -1.0;
            }
            VarStructure::Full => {
                m[(k / self.cols, k % self.cols)] = 1.0;
            }
        }
        m
    }

    /// Builds the matrix value of this variable from the scalar assignment.
    pub fn materialize(&self, v: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for k in 0..self.param_count() {
            let x = v[self.offset + k];
            match self.structure {
                VarStructure::Symmetric => {
                    let (i, j) = sym_position(self.rows, k);
                    m[(i, j)] = x;
                    m[(j, i)] = x;
                }
                VarStructure::SkewSymmetric => {
                    let (i, j) = skew_position(self.rows, k);
                    m[(i, j)] = x;
                    m[(j, i)] = -x;
                }
                VarStructure::Full => {
                    m[(k / self.cols, k % self.cols)] = x;
                }
            }
        }
        m
    }
}

/// Row-major upper-triangle position (including the diagonal) of local
/// parameter `k` in an `n x n` symmetric variable.
fn sym_position(n: usize, k: usize) -> (usize, usize) {
    let mut k = k;
    for i in 0..n {
        let row_len = n - i;
        if k < row_len {
            return (i, i + k);
        }
        k -= row_len;
    }
    unreachable!("symmetric parameter index out of range")
}

/// Row-major strict-upper-triangle position of local parameter `k` in an
/// `n x n` skew-symmetric variable.
fn skew_position(n: usize, k: usize) -> (usize, usize) {
    let mut k = k;
    for i in 0..n {
        let row_len = n - i - 1;
        if k < row_len {
            return (i, i + 1 + k);
        }
        k -= row_len;
    }
    unreachable!("skew parameter index out of range")
}

/// Handle to a variable inside a [`VariableSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarRef(pub usize);

/// The ordered collection of matrix variables of one problem.
#[derive(Debug, Clone, Default)]
pub struct VariableSpace {
    vars: Vec<MatrixVar>,
    total: usize,
}

impl VariableSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, structure: VarStructure) -> VarRef {
        if matches!(
            structure,
            VarStructure::Symmetric | VarStructure::SkewSymmetric
        ) {
            assert_eq!(rows, cols, "structured variables must be square");
        }
        let var = MatrixVar {
            name: name.to_string(),
            rows,
            cols,
            structure,
            offset: self.total,
        };
        self.total += var.param_count();
        self.vars.push(var);
        VarRef(self.vars.len() - 1)
    }

    pub fn var(&self, r: VarRef) -> &MatrixVar {
        &self.vars[r.0]
    }

    pub fn vars(&self) -> &[MatrixVar] {
        &self.vars
    }

    pub fn total_params(&self) -> usize {
        self.total
    }

    pub fn materialize(&self, r: VarRef, v: &[f64]) -> DMatrix<f64> {
        self.var(r).materialize(v)
    }
}

/// A complex Hermitian variable `X = S + i K` with `S` symmetric and `K`
/// skew-symmetric; the free scalar parameter count is `dim^2`.
#[derive(Debug, Clone, Copy)]
pub struct HermitianVariable {
    pub dim: usize,
    pub sym: VarRef,
    pub skew: VarRef,
}

impl VariableSpace {
    pub fn add_hermitian(&mut self, name: &str, dim: usize) -> HermitianVariable {
        let sym = self.add(&format!("{name}.re"), dim, dim, VarStructure::Symmetric);
        let skew = self.add(&format!("{name}.im"), dim, dim, VarStructure::SkewSymmetric);
        HermitianVariable { dim, sym, skew }
    }
}

/// An affine matrix-valued function of the scalar parameter vector:
/// `expr(v) = constant + sum_k v_k * coeff_k`.
#[derive(Debug, Clone)]
pub struct AffineExpr {
    pub rows: usize,
    pub cols: usize,
    pub constant: DMatrix<f64>,
    /// Sparse map from scalar parameter index to coefficient matrix.
    pub coeffs: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            constant: DMatrix::zeros(rows, cols),
            coeffs: BTreeMap::new(),
        }
    }

    pub fn add_constant(&mut self, m: &DMatrix<f64>) {
        self.constant += m;
    }

    pub fn add_term(&mut self, scalar: usize, m: DMatrix<f64>) {
        if m.amax() == 0.0 {
            return;
        }
        self.coeffs
            .entry(scalar)
            .and_modify(|c| *c += &m)
            .or_insert(m);
    }

    /// Adds `f(basis)` for every scalar parameter of `var`, where `f` is a
    /// linear matrix map; this is how products like `A * Q(v)` enter.
    pub fn add_var_map(
        &mut self,
        space: &VariableSpace,
        var: VarRef,
        f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    ) {
        let mv = space.var(var);
        for k in 0..mv.param_count() {
            let coeff = f(&mv.basis(k));
            debug_assert_eq!(coeff.nrows(), self.rows);
            debug_assert_eq!(coeff.ncols(), self.cols);
            self.add_term(mv.offset + k, coeff);
        }
    }

    pub fn eval(&self, v: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (&k, coeff) in &self.coeffs {
            let x = v[k];
            if x != 0.0 {
                m += coeff * x;
            }
        }
        m
    }
}

/// The doubled real embedding of the positive-definiteness requirement on
/// a Hermitian variable: `[[S, -K], [K, S]] >= margin * I`, which holds
/// iff `S + iK >= margin * I` in the complex sense.
pub fn realify_hermitian_pd(space: &VariableSpace, hv: &HermitianVariable) -> AffineExpr {
    let n = hv.dim;
    let mut expr = AffineExpr::zeros(2 * n, 2 * n);
    expr.add_var_map(space, hv.sym, |b| {
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(b);
        m.view_mut((n, n), (n, n)).copy_from(b);
        m
    });
    expr.add_var_map(space, hv.skew, |b| {
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, n), (n, n)).copy_from(&(-b));
        m.view_mut((n, 0), (n, n)).copy_from(b);
        m
    });
    expr
}

/// Adds `f(dQ/dv_k)` terms for the real sector-transformed matrix
/// `Q = 2 (cos(theta) * S - sin(theta) * K)` of a Hermitian variable,
/// `theta = (1 - alpha_c) * pi / 2`. `Q` is exactly the real matrix
/// `r X + conj(r) conj(X)` with `r = exp(i theta)`.
pub fn add_sector_var_map(
    expr: &mut AffineExpr,
    space: &VariableSpace,
    hv: &HermitianVariable,
    theta: f64,
    f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
) {
    let (c, s) = (theta.cos(), theta.sin());
    expr.add_var_map(space, hv.sym, |b| f(&(2.0 * c * b)));
    expr.add_var_map(space, hv.skew, |b| f(&(-2.0 * s * b)));
}

/// Evaluates the sector-transformed matrix `Q` of a Hermitian variable at
/// a concrete assignment.
pub fn sector_matrix(
    space: &VariableSpace,
    hv: &HermitianVariable,
    theta: f64,
    v: &[f64],
) -> DMatrix<f64> {
    let s_part = space.materialize(hv.sym, v);
    let k_part = space.materialize(hv.skew, v);
    2.0 * (theta.cos() * s_part - theta.sin() * k_part)
}

/// Kind of one constraint in a feasibility problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `expr(v) >= margin * I` (an inequality `expr' <= -margin I` is
    /// stored negated).
    PsdMargin,
    /// `expr(v) = 0` entrywise.
    Zero,
}

#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub name: String,
    pub kind: ConstraintKind,
    pub expr: AffineExpr,
}

/// Default semidefinite margin standing in for strict definiteness.
pub const DEFAULT_MARGIN: f64 = 1e-6;
/// Default infinity-norm cap on scalar variables; with the margin it
/// normalizes the homogeneous strict inequalities.
pub const DEFAULT_VARIABLE_BOUND: f64 = 1e4;

/// Margin/bound knobs for a feasibility solve.
#[derive(Debug, Clone, Copy)]
pub struct LmiOptions {
    pub margin: f64,
    pub variable_bound: f64,
}

impl Default for LmiOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            variable_bound: DEFAULT_VARIABLE_BOUND,
        }
    }
}

/// A margin-normalized semidefinite feasibility problem.
#[derive(Debug, Clone)]
pub struct LmiFeasibilityProblem {
    pub space: VariableSpace,
    pub constraints: Vec<LmiConstraint>,
    pub margin: f64,
    pub variable_bound: f64,
}

/// Per-constraint outcome of re-verifying an assignment directly.
#[derive(Debug, Clone)]
pub struct ConstraintCheck {
    pub name: String,
    /// For `PsdMargin`: smallest eigenvalue minus the margin. For `Zero`:
    /// the negated largest absolute entry.
    pub slack: f64,
}

impl LmiFeasibilityProblem {
    pub fn new(space: VariableSpace, opts: LmiOptions) -> Self {
        Self {
            space,
            constraints: Vec::new(),
            margin: opts.margin,
            variable_bound: opts.variable_bound,
        }
    }

    pub fn add_psd(&mut self, name: &str, expr: AffineExpr) -> Result<()> {
        if expr.rows != expr.cols {
            return Err(Error::DimensionMismatch(format!(
                "semidefinite constraint {name} must be square, got {}x{}",
                expr.rows, expr.cols
            )));
        }
        self.constraints.push(LmiConstraint {
            name: name.to_string(),
            kind: ConstraintKind::PsdMargin,
            expr,
        });
        Ok(())
    }

    pub fn add_zero(&mut self, name: &str, expr: AffineExpr) {
        self.constraints.push(LmiConstraint {
            name: name.to_string(),
            kind: ConstraintKind::Zero,
            expr,
        });
    }

    /// Directly re-verifies an assignment: eigenvalue checks for the
    /// semidefinite constraints, entry checks for the equalities. Does not
    /// trust any solver output.
    pub fn verify_assignment(&self, v: &[f64]) -> Vec<ConstraintCheck> {
        self.constraints
            .iter()
            .map(|c| {
                let m = c.expr.eval(v);
                let slack = match c.kind {
                    ConstraintKind::PsdMargin => {
                        let sym = (&m + m.transpose()) * 0.5;
                        let eig = sym.symmetric_eigen();
                        eig.eigenvalues
                            .iter()
                            .copied()
                            .fold(f64::INFINITY, f64::min)
                            - self.margin
                    }
                    ConstraintKind::Zero => -m.amax(),
                };
                ConstraintCheck {
                    name: c.name.clone(),
                    slack,
                }
            })
            .collect()
    }

    /// Plain-text dump of the affine problem (variable list plus constraint
    /// matrices, row-major, 17-significant-digit decimals) for debugging
    /// against an external solver.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lmi feasibility problem");
        let _ = writeln!(out, "margin: {:.16e}", self.margin);
        let _ = writeln!(out, "variable_bound: {:.16e}", self.variable_bound);
        let _ = writeln!(out, "scalar_parameters: {}", self.space.total_params());
        let _ = writeln!(out, "variables:");
        for v in self.space.vars() {
            let tag = match v.structure {
                VarStructure::Symmetric => "symmetric",
                VarStructure::SkewSymmetric => "skew-symmetric",
                VarStructure::Full => "full",
            };
            let _ = writeln!(
                out,
                "  {} {}x{} {} offset {} params {}",
                v.name,
                v.rows,
                v.cols,
                tag,
                v.offset,
                v.param_count()
            );
        }
        for c in &self.constraints {
            let kind = match c.kind {
                ConstraintKind::PsdMargin => ">= margin*I",
                ConstraintKind::Zero => "= 0",
            };
            let _ = writeln!(
                out,
                "constraint {:?} {}x{} {}",
                c.name, c.expr.rows, c.expr.cols, kind
            );
            let _ = writeln!(out, "  constant:");
            dump_matrix(&mut out, &c.expr.constant);
            for (k, m) in &c.expr.coeffs {
                let _ = writeln!(out, "  d/dv[{k}]:");
                dump_matrix(&mut out, m);
            }
        }
        out
    }
}

fn dump_matrix(out: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.16e}", m[(i, j)]))
            .collect();
        let _ = writeln!(out, "    {}", row.join(" "));
    }
}
