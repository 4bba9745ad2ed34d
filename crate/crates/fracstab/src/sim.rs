//! Time-domain simulation of the lifted commensurate dynamics by an
//! explicit Grünwald-Letnikov stepper, plus the Mittag-Leffler series used
//! as its analytic oracle.
//!
//! The fractional derivative acts on the shifted variable `Z - z0`
//! (matching the Caputo convention that constants have zero derivative):
//!
//! ```text
//! Z_k = z0 - sum_{j=1..k} w_j (Z_{k-j} - z0) + h^alpha (Abig Z_{k-1} + Bbig u_{k-1})
//! ```
//!
//! with the binomial weights of `(1 - xi)^alpha`. First-order accurate;
//! full history by default, with optional truncation.
//!
//! The explicit drift restricts the usable step to roughly
//! `h^alpha |lambda| < 2^alpha` per eigenvalue. Stiff closed loops (fast
//! controller poles at a small base order) push that bound below any
//! tractable step, so a backward variant is available that evaluates the
//! drift at `Z_k` instead, solving `(I - h^alpha Abig) Z_k = ...` with one
//! factorization for the whole run; same memory term, same first-order
//! accuracy, no step restriction for sector-stable dynamics.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{CommensurateRealization, MultiOrderSystem};
use crate::synthesis::{assemble_closed_loop, ControllerRealization};

/// State norm beyond which a run is declared divergent; an expected
/// outcome for unstable systems, not a failure of the method.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Grünwald-Letnikov history handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryLength {
    Full,
    Truncated(usize),
}

/// Where the drift term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimScheme {
    /// Drift at the previous sample (the default stepping rule).
    Explicit,
    /// Drift at the new sample; removes the explicit step restriction for
    /// stiff sector-stable systems at the cost of one matrix
    /// factorization.
    ImplicitDrift,
}

/// Step size, horizon, memory policy, and scheme of one simulation run.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub step: f64,
    pub t_final: f64,
    pub memory: MemoryLength,
    pub scheme: SimScheme,
}

impl SimConfig {
    pub fn new(step: f64, t_final: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Numeric(format!("step must be positive, got {step}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::Numeric(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        Ok(Self {
            step,
            t_final,
            memory: MemoryLength::Full,
            scheme: SimScheme::Explicit,
        })
    }

    pub fn implicit(mut self) -> Self {
        self.scheme = SimScheme::ImplicitDrift;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.step).round().max(1.0) as usize
    }
}

/// A simulated run: one row per time sample, starting at the initial
/// condition.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `(steps+1) x N` lifted pseudo-states.
    pub states: DMatrix<f64>,
    /// `(steps+1) x m` outputs.
    pub outputs: DMatrix<f64>,
    /// `(steps+1) x l` inputs as applied.
    pub inputs: DMatrix<f64>,
}

impl Trajectory {
    /// CSV export: header `t,z_1..z_N,y_1..y_m,u_1..u_l`, ten significant
    /// digits per value.
    pub fn to_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let n = self.states.ncols();
        let m = self.outputs.ncols();
        let l = self.inputs.ncols();
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",z_{i}"));
        }
        for i in 1..=m {
            header.push_str(&format!(",y_{i}"));
        }
        for i in 1..=l {
            header.push_str(&format!(",u_{i}"));
        }
        writeln!(w, "{header}")?;
        for (row, t) in self.times.iter().enumerate() {
            let mut line = format!("{:.9e}", t);
            for j in 0..n {
                line.push_str(&format!(",{:.9e}", self.states[(row, j)]));
            }
            for j in 0..m {
                line.push_str(&format!(",{:.9e}", self.outputs[(row, j)]));
            }
            for j in 0..l {
                line.push_str(&format!(",{:.9e}", self.inputs[(row, j)]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    fn truncate_rows(&mut self, rows: usize) {
        self.times.truncate(rows);
        self.states = self.states.rows(0, rows).into_owned();
        self.outputs = self.outputs.rows(0, rows).into_owned();
        self.inputs = self.inputs.rows(0, rows).into_owned();
    }
}

/// Simulation failures; divergence carries the partial run.
#[derive(Debug)]
pub enum SimError {
    /// The state norm crossed the divergence threshold at time `t`.
    Diverged {
        partial: Trajectory,
        t: f64,
    },
    Other(Error),
}

impl std::fmt::Display for SimError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimError::Diverged { t, .. } => {
                write!(f, "simulation diverged at t = {t:.6} (state norm above {DIVERGENCE_THRESHOLD:.0e})")
            }
            SimError::Other(e) => e.fmt(f),
        }
    }
}

impl From<Error> for SimError {
    fn from(e: Error) -> Self {
        SimError::Other(e)
    }
}

/// Binomial weights of `(1 - xi)^alpha`: `w_0 = 1`,
/// `w_j = (1 - (alpha + 1) / j) w_{j-1}`.
pub fn gl_weights(alpha: f64, count: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(count + 1);
    w.push(1.0);
    for j in 1..=count {
        let prev = w[j - 1];
        w.push((1.0 - (alpha + 1.0) / j as f64) * prev);
    }
    w
}

/// Steps the lifted dynamics `D^alpha_c Z = Abig Z + Bbig u` from `z0`.
/// The base order must lie in (0, 1]; the boundary value 1 reproduces the
/// classical explicit Euler scheme and exists for validation.
pub fn simulate_commensurate(
    realization: &CommensurateRealization,
    input: &dyn Fn(f64) -> DVector<f64>,
    config: &SimConfig,
) -> std::result::Result<Trajectory, SimError> {
    let alpha = realization.alpha_c().value();
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(SimError::Other(Error::UnsupportedOrderRange(
            realization.alpha_c().decimal_string(),
        )));
    }
    let n = realization.dim();
    let l = realization.b_big().ncols();
    let m = realization.c_big().nrows();
    let steps = config.steps();
    let h = config.step;
    let h_alpha = h.powf(alpha);
    let weights = gl_weights(alpha, steps);
    let memory = match config.memory {
        MemoryLength::Full => usize::MAX,
        MemoryLength::Truncated(k) => k.max(1),
    };

    let z0 = realization.z0().clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = DMatrix::zeros(steps + 1, n);
    let mut outputs = DMatrix::zeros(steps + 1, m);
    let mut inputs = DMatrix::zeros(steps + 1, l);

    // history of Z_j - z0
    let mut shifted: Vec<DVector<f64>> = Vec::with_capacity(steps + 1);
    let mut z = z0.clone();
    let record = |row: usize,
                  t: f64,
                  z: &DVector<f64>,
                  u: &DVector<f64>,
                  times: &mut Vec<f64>,
                  states: &mut DMatrix<f64>,
                  outputs: &mut DMatrix<f64>,
                  inputs: &mut DMatrix<f64>| {
        times.push(t);
        for j in 0..n {
            states[(row, j)] = z[j];
        }
        let y = realization.c_big() * z;
        for j in 0..m {
            outputs[(row, j)] = y[j];
        }
        for j in 0..l {
            inputs[(row, j)] = u[j];
        }
    };

    let u0 = input(0.0);
    if u0.len() != l {
        return Err(SimError::Other(Error::DimensionMismatch(format!(
            "input signal must produce vectors of length {l}"
        ))));
    }
    record(
        0,
        0.0,
        &z,
        &u0,
        &mut times,
        &mut states,
        &mut outputs,
        &mut inputs,
    );
    shifted.push(DVector::zeros(n));

    let implicit_lu = match config.scheme {
        SimScheme::Explicit => None,
        SimScheme::ImplicitDrift => {
            let step_matrix = DMatrix::identity(n, n) - realization.a_big() * h_alpha;
            let lu = step_matrix.lu();
            if !lu.is_invertible() {
                return Err(SimError::Other(Error::Numeric(
                    "implicit step matrix is singular; adjust the step size".into(),
                )));
            }
            Some(lu)
        }
    };

    let mut u_prev = u0;
    for k in 1..=steps {
        let t = k as f64 * h;
        let u = input(t);
        let mut acc = z0.clone();
        let lookback = k.min(memory);
        for j in 1..=lookback {
            let w = weights[j];
            if w != 0.0 {
                acc.axpy(-w, &shifted[k - j], 1.0);
            }
        }
        let next = match &implicit_lu {
            None => {
                let drift = realization.a_big() * &z + realization.b_big() * &u_prev;
                acc.axpy(h_alpha, &drift, 1.0);
                acc
            }
            Some(lu) => {
                acc.axpy(h_alpha, &(realization.b_big() * &u), 1.0);
                lu.solve(&acc).ok_or_else(|| {
                    SimError::Other(Error::Numeric("implicit step solve failed".into()))
                })?
            }
        };

        z = next;
        shifted.push(&z - &z0);
        record(
            k,
            t,
            &z,
            &u,
            &mut times,
            &mut states,
            &mut outputs,
            &mut inputs,
        );
        u_prev = u;

        let norm = z.amax();
        if !norm.is_finite() || norm > DIVERGENCE_THRESHOLD {
            let mut partial = Trajectory {
                times,
                states,
                outputs,
                inputs,
            };
            partial.truncate_rows(k + 1);
            return Err(SimError::Diverged { partial, t });
        }
    }

    Ok(Trajectory {
        times,
        states,
        outputs,
        inputs,
    })
}

/// Simulates the autonomous closed loop of a plant and controller: the
/// augmented system is assembled, lifted, and stepped with zero external
/// input. The recorded "inputs" column carries the control signal
/// `u = Cc x_c + Dc y` realized by the controller.
pub fn simulate_closed_loop(
    system: &MultiOrderSystem,
    controller: &ControllerRealization,
    config: &SimConfig,
) -> std::result::Result<Trajectory, SimError> {
    let augmented = assemble_closed_loop(system, controller)?;
    let lifted = augmented.lift()?;
    let l_aug = augmented.input_dim();
    let zero_input = move |_t: f64| DVector::<f64>::zeros(l_aug);
    let mut traj = simulate_commensurate(&lifted, &zero_input, config);

    // reconstruct the realized control signal from the states
    let fill_inputs = |traj: &mut Trajectory| {
        let nc = controller.order();
        let positions = lifted.state_positions();
        let n_plant = system.dim();
        let rows = traj.times.len();
        let l = system.input_dim();
        let mut realized = DMatrix::zeros(rows, l);
        for row in 0..rows {
            let mut x_plant = DVector::zeros(n_plant);
            for (i, &pos) in positions.iter().take(n_plant).enumerate() {
                x_plant[i] = traj.states[(row, pos)];
            }
            let y = system.c() * &x_plant;
            let mut u = &controller.dc * &y;
            if nc > 0 {
                let mut x_c = DVector::zeros(nc);
                for (i, &pos) in positions.iter().skip(n_plant).enumerate() {
                    x_c[i] = traj.states[(row, pos)];
                }
                u += &controller.cc * &x_c;
            }
            for j in 0..l {
                realized[(row, j)] = u[j];
            }
        }
        traj.inputs = realized;
    };

    match &mut traj {
        Ok(t) => fill_inputs(t),
        Err(SimError::Diverged { partial, .. }) => fill_inputs(partial),
        Err(SimError::Other(_)) => {}
    }
    traj
}

/// Mittag-Leffler function `E_alpha(z) = sum z^k / Gamma(alpha k + 1)`,
/// evaluated term by term in log space; the series is summed until the
/// tail drops below 1e-12 (relative to the running sum).
pub fn mittag_leffler(alpha: f64, z: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::OutOfGuardedRange {
            value: alpha,
            range: "(0, 2) for the series order".into(),
        });
    }
    if !(z.abs() <= 10.0) {
        return Err(Error::OutOfGuardedRange {
            value: z,
            range: "|z| <= 10 for series validity at double precision".into(),
        });
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let ln_abs_z = z.abs().ln();
    let mut sum = 0.0_f64;
    let mut compensation = 0.0_f64;
    let mut decreasing_streak = 0usize;
    let mut prev_mag = f64::INFINITY;
    for k in 0..4000 {
        let ln_term = k as f64 * ln_abs_z - libm::lgamma(alpha * k as f64 + 1.0);
        let magnitude = ln_term.exp();
        let term = if z < 0.0 && k % 2 == 1 {
            -magnitude
        } else {
            magnitude
        };
        // Kahan compensated accumulation
        let yv = term - compensation;
        let t = sum + yv;
        compensation = (t - sum) - yv;
        sum = t;
        if magnitude < prev_mag {
            decreasing_streak += 1;
        } else {
            decreasing_streak = 0;
        }
        prev_mag = magnitude;
        if decreasing_streak >= 3 && magnitude <= 1e-12 * sum.abs().max(1.0) {
            return Ok(sum);
        }
    }
    Err(Error::Numeric(format!(
        "Mittag-Leffler series did not converge for alpha = {alpha}, z = {z}"
    )))
}
