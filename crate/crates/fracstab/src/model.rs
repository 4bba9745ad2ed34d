//! Multi-order FO-LTI plant models and their exact lifting to an
//! equivalent single-order (commensurate) realization.
//!
//! A plant where pseudo-state `i` carries its own derivative order
//! `alpha_i` is rewritten over the common base order `alpha_c =
//! gcd(alpha_i)`: each original state expands into a chain of `p_i =
//! alpha_i / alpha_c` pseudo-states, giving a single-order system of
//! dimension `N = sum p_i` whose state matrix has a fixed block layout:
//! ones on each within-block superdiagonal and the original entry `a_ij`
//! in the bottom-left corner of block `(i, j)`.

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use num_traits::One;

use crate::error::{Error, Result};
use crate::order::{commensurate_base, RationalOrder};

/// Default cap on the lifted dimension N; nearly-equal orders such as
/// 0.991 vs 0.99 can make N explode, so lifting is guarded.
pub const DEFAULT_DIMENSION_CAP: usize = 512;

/// A fractional-order LTI plant with one derivative order per pseudo-state.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiOrderSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    orders: Vec<RationalOrder>,
    x0: DVector<f64>,
    x0_deriv: DVector<f64>,
}

impl MultiOrderSystem {
    /// Validates dimensions and the canonical-form rule that
    /// first-derivative initial values are zero wherever `alpha_i < 1`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        orders: Vec<RationalOrder>,
        x0: DVector<f64>,
        x0_deriv: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if orders.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n} orders, got {}",
                orders.len()
            )));
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {n}",
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "C has {} columns, expected {n}",
                c.ncols()
            )));
        }
        if x0.len() != n || x0_deriv.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial conditions must have length {n}"
            )));
        }
        for (i, o) in orders.iter().enumerate() {
            if !o.has_first_derivative_ic() && x0_deriv[i] != 0.0 {
                return Err(Error::DimensionMismatch(format!(
                    "x0_deriv[{i}] must be zero because order {o} is below 1"
                )));
            }
        }
        if !a.iter().all(|v| v.is_finite())
            || !b.iter().all(|v| v.is_finite())
            || !c.iter().all(|v| v.is_finite())
        {
            return Err(Error::Numeric("matrix entries must be finite".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            orders,
            x0,
            x0_deriv,
        })
    }

    /// Plant without inputs/outputs, for pure stability analysis.
    pub fn autonomous(a: DMatrix<f64>, orders: Vec<RationalOrder>) -> Result<Self> {
        let n = a.nrows();
        Self::new(
            a,
            DMatrix::zeros(n, 0),
            DMatrix::zeros(0, n),
            orders,
            DVector::zeros(n),
            DVector::zeros(n),
        )
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn orders(&self) -> &[RationalOrder] {
        &self.orders
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn x0_deriv(&self) -> &DVector<f64> {
        &self.x0_deriv
    }

    /// Lifts the plant to its commensurate realization under the default
    /// dimension cap.
    pub fn lift(&self) -> Result<CommensurateRealization> {
        self.lift_with_cap(DEFAULT_DIMENSION_CAP)
    }

    pub fn lift_with_cap(&self, cap: usize) -> Result<CommensurateRealization> {
        CommensurateRealization::from_system(self, cap)
    }
}

/// The lifted single-order realization of a multi-order plant.
#[derive(Debug, Clone, PartialEq)]
pub struct CommensurateRealization {
    a_big: DMatrix<f64>,
    b_big: DMatrix<f64>,
    c_big: DMatrix<f64>,
    alpha_c: RationalOrder,
    p: Vec<usize>,
    n_big: usize,
    z0: DVector<f64>,
}

impl CommensurateRealization {
    fn from_system(sys: &MultiOrderSystem, cap: usize) -> Result<Self> {
        let (alpha_c, p) = commensurate_base(sys.orders())?;
        let n_big: usize = p.iter().sum();
        if n_big > cap {
            return Err(Error::DimensionCap { n: n_big, cap });
        }
        let a_big = expand_state_matrix(sys.a(), sys.orders())?;
        let (b_big, c_big) = expand_input_output(sys.b(), sys.c(), sys.orders())?;
        let z0 = lift_initial_conditions(sys.x0(), sys.x0_deriv(), sys.orders())?;
        Ok(Self {
            a_big,
            b_big,
            c_big,
            alpha_c,
            p,
            n_big,
            z0,
        })
    }

    pub fn a_big(&self) -> &DMatrix<f64> {
        &self.a_big
    }

    pub fn b_big(&self) -> &DMatrix<f64> {
        &self.b_big
    }

    pub fn c_big(&self) -> &DMatrix<f64> {
        &self.c_big
    }

    pub fn alpha_c(&self) -> RationalOrder {
        self.alpha_c
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.n_big
    }

    pub fn z0(&self) -> &DVector<f64> {
        &self.z0
    }

    /// Row offset of block `i`, i.e. the lifted index of pseudo-state
    /// `z_{i,1}`.
    pub fn block_offset(&self, i: usize) -> usize {
        self.p[..i].iter().sum()
    }

    /// Offsets of the first pseudo-state of every block; these positions
    /// carry the original plant states.
    pub fn state_positions(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.p.len());
        let mut acc = 0;
        for &pi in &self.p {
            offs.push(acc);
            acc += pi;
        }
        offs
    }
}

fn block_offsets(p: &[usize]) -> Vec<usize> {
    let mut offs = Vec::with_capacity(p.len());
    let mut acc = 0;
    for &pi in p {
        offs.push(acc);
        acc += pi;
    }
    offs
}

/// Expands the plant state matrix into the lifted block layout: block
/// `(i, j)` is `p_i x p_j`, holding `a_ij` in its bottom-left corner, and
/// diagonal blocks additionally carry ones on the superdiagonal.
pub fn expand_state_matrix(a: &DMatrix<f64>, orders: &[RationalOrder]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || orders.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{} with {} orders",
            a.nrows(),
            a.ncols(),
            orders.len()
        )));
    }
    let (_, p) = commensurate_base(orders)?;
    let n_big: usize = p.iter().sum();
    let offs = block_offsets(&p);
    let mut big = DMatrix::zeros(n_big, n_big);
    for i in 0..n {
        for k in 0..p[i].saturating_sub(1) {
            big[(offs[i] + k, offs[i] + k + 1)] = 1.0;
        }
        for j in 0..n {
            big[(offs[i] + p[i] - 1, offs[j])] = a[(i, j)];
        }
    }
    Ok(big)
}

/// Expands input and output matrices: each `B` row lands in the last row
/// of its block; each `C` column lands in the first column of its block.
pub fn expand_input_output(
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    orders: &[RationalOrder],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = orders.len();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "B has {} rows, expected {n}",
            b.nrows()
        )));
    }
    if c.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "C has {} columns, expected {n}",
            c.ncols()
        )));
    }
    let (_, p) = commensurate_base(orders)?;
    let n_big: usize = p.iter().sum();
    let offs = block_offsets(&p);
    let mut b_big = DMatrix::zeros(n_big, b.ncols());
    let mut c_big = DMatrix::zeros(c.nrows(), n_big);
    for i in 0..n {
        for col in 0..b.ncols() {
            b_big[(offs[i] + p[i] - 1, col)] = b[(i, col)];
        }
        for row in 0..c.nrows() {
            c_big[(row, offs[i])] = c[(row, i)];
        }
    }
    Ok((b_big, c_big))
}

/// Places initial conditions in the lifted coordinates: `z_{i,1}(0) = x0_i`;
/// `z_{i,k}(0) = x0_deriv_i` exactly when `(k-1) * alpha_c = 1` in rational
/// arithmetic (the chain member that is the classical first derivative);
/// every other lifted state starts at zero, since non-integer Caputo
/// derivatives of a smooth function vanish at the origin.
pub fn lift_initial_conditions(
    x0: &DVector<f64>,
    x0_deriv: &DVector<f64>,
    orders: &[RationalOrder],
) -> Result<DVector<f64>> {
    let n = orders.len();
    if x0.len() != n || x0_deriv.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial conditions must have length {n}"
        )));
    }
    let (alpha_c, p) = commensurate_base(orders)?;
    let n_big: usize = p.iter().sum();
    let offs = block_offsets(&p);
    let mut z0 = DVector::zeros(n_big);
    for i in 0..n {
        z0[offs[i]] = x0[i];
        for k in 2..=p[i] {
            let derivative_order = alpha_c.as_ratio() * Ratio::new((k - 1) as i64, 1);
            if derivative_order == Ratio::one() {
                z0[offs[i] + k - 1] = x0_deriv[i];
            }
        }
    }
    Ok(z0)
}
