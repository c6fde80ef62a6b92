//! Classical reference solvers for the beam equation in first-order form
//! `u' = w`, `w' = −F(u)/g(u)`.

use std::io::Write;

use thiserror::Error;

use crate::problem::OscillatorProblem;

/// Smallest inertia value accepted before the explicit form is considered singular.
const INERTIA_FLOOR: f64 = 1e-12;
const MIN_STEP: f64 = 1e-12;
const MAX_ADAPTIVE_STEPS: usize = 10_000_000;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum IntegratorError {
    #[error("inertia polynomial is {value} at u = {u}; trajectory left the valid range")]
    SingularInertia { u: f64, value: f64 },
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error("need at least {min} steps, got {got}")]
    TooFewSteps { min: usize, got: usize },
    #[error("tolerances must be positive (rtol = {rtol}, atol = {atol})")]
    BadTolerance { rtol: f64, atol: f64 },
    #[error("end time {t_end} is not after the initial time {t0}")]
    BadEndTime { t0: f64, t_end: f64 },
    #[error("step size underflow (h = {h:e}) at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("adaptive integration exceeded {0} steps")]
    TooManySteps(usize),
    #[error("interpolation needs velocities and a grid inside [{t0}, {t_end}]")]
    BadResample { t0: f64, t_end: f64 },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
}

/// Sampled solution: times ascending, displacement and (optionally) velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub velocities: Option<Vec<f64>>,
}

impl SolutionTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `t,u[,v]`, 17 significant digits per entry.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match &self.velocities {
            Some(vel) => {
                writeln!(out, "t,u,v")?;
                for ((t, u), v) in self.times.iter().zip(&self.values).zip(vel) {
                    writeln!(out, "{t:.16e},{u:.16e},{v:.16e}")?;
                }
            }
            None => {
                writeln!(out, "t,u")?;
                for (t, u) in self.times.iter().zip(&self.values) {
                    writeln!(out, "{t:.16e},{u:.16e}")?;
                }
            }
        }
        Ok(())
    }

    /// Largest absolute value difference against another trace on the same grid.
    pub fn max_abs_difference(&self, other: &SolutionTrace) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Right-hand side of the first-order system at displacement `u`, velocity `w`.
pub fn rhs(problem: &OscillatorProblem, u: f64, w: f64) -> Result<(f64, f64), IntegratorError> {
    let g = problem.inertia(u);
    if !(g > INERTIA_FLOOR) {
        return Err(IntegratorError::SingularInertia { u, value: g });
    }
    Ok((w, -problem.restoring(u) / g))
}

fn f(problem: &OscillatorProblem, y: [f64; 2]) -> Result<[f64; 2], IntegratorError> {
    let (du, dw) = rhs(problem, y[0], y[1])?;
    Ok([du, dw])
}

fn axpy(y: [f64; 2], h: f64, k: [f64; 2]) -> [f64; 2] {
    [y[0] + h * k[0], y[1] + h * k[1]]
}

/// One classical RK4 step of size `h` (negative `h` integrates backwards).
pub fn rk4_step(problem: &OscillatorProblem, y: [f64; 2], h: f64) -> Result<[f64; 2], IntegratorError> {
    let k1 = f(problem, y)?;
    let k2 = f(problem, axpy(y, 0.5 * h, k1))?;
    let k3 = f(problem, axpy(y, 0.5 * h, k2))?;
    let k4 = f(problem, axpy(y, h, k3))?;
    Ok([
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

struct TraceBuilder {
    times: Vec<f64>,
    values: Vec<f64>,
    velocities: Vec<f64>,
}

impl TraceBuilder {
    fn new(capacity: usize) -> Self {
        Self {
            times: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
            velocities: Vec::with_capacity(capacity),
        }
    }

    fn push(&mut self, t: f64, y: [f64; 2]) -> Result<(), IntegratorError> {
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(IntegratorError::NonFinite(t));
        }
        self.times.push(t);
        self.values.push(y[0]);
        self.velocities.push(y[1]);
        Ok(())
    }

    fn finish(self) -> SolutionTrace {
        SolutionTrace {
            times: self.times,
            values: self.values,
            velocities: Some(self.velocities),
        }
    }
}

fn check_step(h: f64) -> Result<(), IntegratorError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(IntegratorError::BadStep(h))
    }
}

fn initial_state(problem: &OscillatorProblem) -> [f64; 2] {
    [problem.u0(), problem.du0()]
}

/// Fixed-step RK4 from `(u0, du0)`; the trace holds `n_steps + 1` points.
pub fn integrate_rk4(
    problem: &OscillatorProblem,
    h: f64,
    n_steps: usize,
) -> Result<SolutionTrace, IntegratorError> {
    check_step(h)?;
    let t0 = problem.t0();
    let mut y = initial_state(problem);
    let mut trace = TraceBuilder::new(n_steps + 1);
    trace.push(t0, y)?;
    for i in 1..=n_steps {
        y = rk4_step(problem, y, h)?;
        trace.push(t0 + i as f64 * h, y)?;
    }
    Ok(trace.finish())
}

/// Four-step Adams–Bashforth, bootstrapped with three RK4 steps.
pub fn integrate_ab4(
    problem: &OscillatorProblem,
    h: f64,
    n_steps: usize,
) -> Result<SolutionTrace, IntegratorError> {
    check_step(h)?;
    if n_steps < 4 {
        return Err(IntegratorError::TooFewSteps { min: 4, got: n_steps });
    }
    let t0 = problem.t0();
    let mut y = initial_state(problem);
    let mut trace = TraceBuilder::new(n_steps + 1);
    trace.push(t0, y)?;
    // history[3] is the newest slope
    let mut history = [[0.0; 2]; 4];
    history[0] = f(problem, y)?;
    for i in 1..4 {
        y = rk4_step(problem, y, h)?;
        trace.push(t0 + i as f64 * h, y)?;
        history[i] = f(problem, y)?;
    }
    for i in 4..=n_steps {
        let [f3, f2, f1, f0] = history;
        for c in 0..2 {
            y[c] += h / 24.0 * (55.0 * f0[c] - 59.0 * f1[c] + 37.0 * f2[c] - 9.0 * f3[c]);
        }
        trace.push(t0 + i as f64 * h, y)?;
        history.rotate_left(1);
        history[3] = f(problem, y)?;
    }
    Ok(trace.finish())
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the stage
// times are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

fn error_norm(err: [f64; 2], y: [f64; 2], y_new: [f64; 2], rtol: f64, atol: f64) -> f64 {
    let sum: f64 = (0..2)
        .map(|i| {
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (sum / 2.0).sqrt()
}

fn initial_step(
    problem: &OscillatorProblem,
    y: [f64; 2],
    f0: [f64; 2],
    rtol: f64,
    atol: f64,
) -> Result<f64, IntegratorError> {
    let norm = |v: [f64; 2]| {
        let s: f64 = (0..2)
            .map(|i| (v[i] / (atol + rtol * y[i].abs())).powi(2))
            .sum();
        (s / 2.0).sqrt()
    };
    let (d0, d1) = (norm(y), norm(f0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let f1 = f(problem, axpy(y, h0, f0))?;
    let d2 = norm([f1[0] - f0[0], f1[1] - f0[1]]) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1))
}

/// Adaptive Dormand–Prince 5(4) from `t0` to `t_end`.
///
/// The returned trace holds every accepted step (with velocities); use
/// [`resample_hermite`] to move it onto another grid.
pub fn integrate_dopri45(
    problem: &OscillatorProblem,
    rtol: f64,
    atol: f64,
    t_end: f64,
) -> Result<SolutionTrace, IntegratorError> {
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(IntegratorError::BadTolerance { rtol, atol });
    }
    let mut t = problem.t0();
    if !(t_end > t) {
        return Err(IntegratorError::BadEndTime { t0: t, t_end });
    }
    let mut y = initial_state(problem);
    let mut trace = TraceBuilder::new(1024);
    trace.push(t, y)?;
    let mut k = [[0.0; 2]; 7];
    k[0] = f(problem, y)?;
    let mut h = initial_step(problem, y, k[0], rtol, atol)?.min(t_end - t);
    let mut steps = 0;

    while t < t_end {
        steps += 1;
        if steps > MAX_ADAPTIVE_STEPS {
            return Err(IntegratorError::TooManySteps(MAX_ADAPTIVE_STEPS));
        }
        if h < MIN_STEP {
            return Err(IntegratorError::StepUnderflow { t, h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys = axpy(ys, h * A[s][j], *kj);
            }
            k[s] = f(problem, ys)?;
        }
        // row 6 of A holds the fifth-order weights (FSAL)
        let mut y_new = y;
        let mut err = [0.0; 2];
        for s in 0..7 {
            if s < 6 {
                y_new = axpy(y_new, h * A[6][s], k[s]);
            }
            err = axpy(err, h * E[s], k[s]);
        }
        let en = error_norm(err, y, y_new, rtol, atol);
        let factor = if en == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * en.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        if en <= 1.0 {
            t = if last { t_end } else { t + h };
            y = y_new;
            trace.push(t, y)?;
            k[0] = k[6];
            h *= factor;
        } else {
            h *= factor.min(1.0);
        }
    }
    Ok(trace.finish())
}

/// Cubic Hermite interpolation of a trace (values and velocities) onto `grid`.
pub fn resample_hermite(trace: &SolutionTrace, grid: &[f64]) -> Result<SolutionTrace, IntegratorError> {
    let (t0, t_end) = (trace.times[0], *trace.times.last().unwrap());
    let bad = IntegratorError::BadResample { t0, t_end };
    let vel = trace.velocities.as_ref().ok_or(bad.clone())?;
    if grid.iter().any(|&t| t < t0 || t > t_end) {
        return Err(bad);
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut velocities = Vec::with_capacity(grid.len());
    for &t in grid {
        let i = match trace.times.partition_point(|&x| x <= t) {
            0 => 0,
            n if n >= trace.times.len() => trace.times.len() - 2,
            n => n - 1,
        };
        let (ta, tb) = (trace.times[i], trace.times[i + 1]);
        let dt = tb - ta;
        let x = (t - ta) / dt;
        let (ya, yb, ma, mb) = (trace.values[i], trace.values[i + 1], vel[i] * dt, vel[i + 1] * dt);
        let x2 = x * x;
        let x3 = x2 * x;
        values.push(
            (2.0 * x3 - 3.0 * x2 + 1.0) * ya
                + (x3 - 2.0 * x2 + x) * ma
                + (-2.0 * x3 + 3.0 * x2) * yb
                + (x3 - x2) * mb,
        );
        velocities.push(
            ((6.0 * x2 - 6.0 * x) * ya
                + (3.0 * x2 - 4.0 * x + 1.0) * ma
                + (-6.0 * x2 + 6.0 * x) * yb
                + (3.0 * x2 - 2.0 * x) * mb)
                / dt,
        );
    }
    Ok(SolutionTrace {
        times: grid.to_vec(),
        values,
        velocities: Some(velocities),
    })
}
