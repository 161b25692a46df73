use log::debug;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{DensityState, LindbladGenerator};
use crate::linalg::{axpy, hermiticity_defect, hermitize, trace, CMatrix};

/// Tolerances and budgets for [`evolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest allowed step (1/Γ₀).
    pub max_step: f64,
    /// Accepted plus rejected steps before giving up.
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

/// Invariant drift allowed before a step is declared a failure.
const INVARIANT_LIMIT: f64 = 1e-6;

/// Sampled solution of the master equation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityState>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Sum over accepted steps of `|Tr ρ − 1|` removed by renormalisation.
    pub trace_correction: f64,
    /// Sum over accepted steps of the anti-Hermitian part removed.
    pub hermiticity_correction: f64,
}

impl Trajectory {
    pub fn last(&self) -> &DensityState {
        self.states.last().expect("trajectory holds at least one state")
    }
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand–Prince stepper on Hermitian density matrices.
pub(crate) struct Stepper<'a> {
    generator: &'a LindbladGenerator,
    opts: EvolveOptions,
    pub t: f64,
    pub y: CMatrix,
    /// `f(t, y)`, reused as the first stage (FSAL).
    pub dy: CMatrix,
    h: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub trace_correction: f64,
    pub hermiticity_correction: f64,
}

fn scaled_norm(v: &CMatrix, y0: &CMatrix, y1: &CMatrix, atol: f64, rtol: f64) -> f64 {
    let n = v.len() as f64;
    let s: f64 = v
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.norm().max(b.norm());
            (e.norm() / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

impl<'a> Stepper<'a> {
    pub fn new(generator: &'a LindbladGenerator, t: f64, y: CMatrix, opts: EvolveOptions) -> Result<Self> {
        if !(opts.rel_tol > 0.0) || !(opts.abs_tol > 0.0) || !(opts.max_step > 0.0) {
            return Err(Error::InvalidArgument("tolerances and max_step must be positive".into()));
        }
        let dy = generator.apply_hermitian(t, &y);
        // Hairer's starting-step heuristic
        let zero = CMatrix::zeros(y.nrows(), y.ncols());
        let d0 = scaled_norm(&y, &y, &zero, opts.abs_tol, opts.rel_tol);
        let d1 = scaled_norm(&dy, &y, &zero, opts.abs_tol, opts.rel_tol);
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        Ok(Self {
            generator,
            h: h.min(opts.max_step),
            opts,
            t,
            y,
            dy,
            accepted: 0,
            rejected: 0,
            trace_correction: 0.0,
            hermiticity_correction: 0.0,
        })
    }

    /// Advances exactly to `t_end`.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.t < t_end {
            if self.accepted + self.rejected >= self.opts.max_steps {
                return Err(Error::Convergence {
                    context: format!("time integration (reached t = {})", self.t),
                    iterations: self.accepted + self.rejected,
                    residual: self.dy.norm(),
                });
            }
            let remaining = t_end - self.t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            if h < 1e-13 * self.t.abs().max(1.0) && !last {
                return Err(Error::Stiffness { time: self.t, step: h });
            }
            let (y_new, f_new, err) = self.trial(h);
            if err <= 1.0 && err.is_finite() {
                self.accept(h, y_new, f_new, last, t_end)?;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a clamped final step says nothing about the natural step size
                if !last || fac < 1.0 {
                    self.h = (h * fac).min(self.opts.max_step);
                }
            } else {
                self.rejected += 1;
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                self.h = h * fac;
                if self.h < 1e-13 * self.t.abs().max(1.0) {
                    return Err(Error::Stiffness { time: self.t, step: self.h });
                }
            }
        }
        Ok(())
    }

    /// One trial step: new state, its derivative, and the scaled error.
    fn trial(&self, h: f64) -> (CMatrix, CMatrix, f64) {
        let mut k: Vec<CMatrix> = Vec::with_capacity(7);
        k.push(self.dy.clone());
        for s in 1..7 {
            let mut stage = self.y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    axpy(&mut stage, Complex64::from(h * a), kj);
                }
            }
            if s == 6 {
                // the last stage point is the 5th-order solution
                let f = self.generator.apply_hermitian(self.t + h, &stage);
                k.push(f);
                let mut err = CMatrix::zeros(self.y.nrows(), self.y.ncols());
                for (j, kj) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        axpy(&mut err, Complex64::from(h * E[j]), kj);
                    }
                }
                let e = scaled_norm(&err, &self.y, &stage, self.opts.abs_tol, self.opts.rel_tol);
                let f_new = k.pop().expect("seventh stage");
                return (stage, f_new, e);
            }
            k.push(self.generator.apply_hermitian(self.t + C[s] * h, &stage));
        }
        unreachable!()
    }

    fn accept(&mut self, h: f64, mut y_new: CMatrix, f_new: CMatrix, last: bool, t_end: f64) -> Result<()> {
        let herm = hermiticity_defect(&y_new);
        let tr = trace(&y_new);
        let drift = (tr - 1.0).norm();
        if herm > INVARIANT_LIMIT || drift > INVARIANT_LIMIT {
            return Err(Error::IntegrationFailure(format!(
                "at t = {}: Hermiticity defect {herm:e}, trace {tr}",
                self.t + h
            )));
        }
        hermitize(&mut y_new);
        y_new /= Complex64::from(tr.re);
        self.hermiticity_correction += herm;
        self.trace_correction += drift;
        self.t = if last { t_end } else { self.t + h };
        self.y = y_new;
        self.dy = f_new;
        self.accepted += 1;
        Ok(())
    }
}

/// Integrates `dρ/dt = L(t)ρ` from `initial.time` to `t_end`, recording the
/// state at each of `sample_times` (and at `t_end` if the list is empty).
pub fn evolve(
    initial: &DensityState,
    generator: &LindbladGenerator,
    t_end: f64,
    sample_times: &[f64],
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let t0 = initial.time;
    if !(t_end > t0) {
        return Err(Error::InvalidArgument(format!("t_end = {t_end} must exceed t0 = {t0}")));
    }
    if initial.dim() != generator.dim() {
        return Err(Error::InvalidArgument("state and generator dimensions differ".into()));
    }
    let samples: Vec<f64> = if sample_times.is_empty() { vec![t_end] } else { sample_times.to_vec() };
    for w in samples.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument("sample times must be strictly increasing".into()));
        }
    }
    if samples[0] < t0 || samples[samples.len() - 1] > t_end {
        return Err(Error::InvalidArgument(format!("sample times must lie in [{t0}, {t_end}]")));
    }
    let mut stepper = Stepper::new(generator, t0, initial.rho.clone(), opts.clone())?;
    let mut times = Vec::with_capacity(samples.len());
    let mut states = Vec::with_capacity(samples.len());
    for &ts in &samples {
        if ts > stepper.t {
            stepper.advance_to(ts)?;
        }
        times.push(ts);
        states.push(DensityState {
            rho: stepper.y.clone(),
            basis: initial.basis.clone(),
            time: ts,
        });
    }
    debug!(
        "evolve: {} accepted, {} rejected steps; trace correction {:e}, hermiticity correction {:e}",
        stepper.accepted, stepper.rejected, stepper.trace_correction, stepper.hermiticity_correction
    );
    Ok(Trajectory {
        times,
        states,
        accepted_steps: stepper.accepted,
        rejected_steps: stepper.rejected,
        trace_correction: stepper.trace_correction,
        hermiticity_correction: stepper.hermiticity_correction,
    })
}
