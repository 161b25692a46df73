use std::sync::Arc;

use log::debug;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::integrator::{EvolveOptions, Stepper};
use crate::couplings::CouplingMatrices;
use crate::error::{Error, Result};
use crate::geometry::EmitterArray;
use crate::hilbert::{
    hamiltonian, unvectorize, vectorize, vectorized_liouvillian, Basis, DensityState, Drive, LindbladGenerator,
};
use crate::linalg::{axpy, eig, gemm, hermitize, trace, CMatrix, Op, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyStateMethod {
    /// Kernel of the vectorised Liouvillian by shifted inverse iteration.
    NullSpace,
    /// Long-time integration from the ground state.
    Integration,
    /// Preconditioned GMRES on the trace-augmented stationarity equation.
    Krylov,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateOptions {
    pub method: SteadyStateMethod,
    /// Bound on `‖dρ/dt‖_F`; `None` means `1e-10·D`.
    pub tol: Option<f64>,
    /// GMRES iterations, inverse iterations, or integrator steps.
    pub max_iterations: usize,
    pub restart: usize,
    pub integration: EvolveOptions,
    /// Integration horizon (1/Γ₀).
    pub max_time: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            method: SteadyStateMethod::Krylov,
            tol: None,
            max_iterations: 4000,
            restart: 60,
            integration: EvolveOptions::default(),
            max_time: 1e6,
        }
    }
}

impl SteadyStateOptions {
    pub fn with_method(method: SteadyStateMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn tolerance(&self, dim: usize) -> f64 {
        self.tol.unwrap_or(1e-10 * dim as f64)
    }
}

#[derive(Debug, Clone)]
pub struct SteadyStateReport {
    pub state: DensityState,
    pub method: SteadyStateMethod,
    /// `‖L ρ‖_F` of the returned state.
    pub residual: f64,
    pub iterations: usize,
}

/// `‖L ρ‖_F`.
pub fn stationarity_residual(generator: &LindbladGenerator, rho: &CMatrix) -> f64 {
    generator.apply_hermitian(0.0, rho).norm()
}

/// Steady state of a continuously driven array.
pub fn steady_state(
    basis: Arc<Basis>,
    array: &EmitterArray,
    couplings: &CouplingMatrices,
    drive: &Drive,
    opts: &SteadyStateOptions,
) -> Result<SteadyStateReport> {
    if drive.is_time_dependent() {
        return Err(Error::InvalidArgument("steady state requires a time-independent drive".into()));
    }
    let generator = LindbladGenerator::new(basis.clone(), array, couplings, drive)?;
    match opts.method {
        SteadyStateMethod::NullSpace => {
            let h = hamiltonian(&basis, array, couplings, drive, 0.0)?;
            null_space(&generator, &h, couplings, opts)
        }
        _ => steady_state_of(&generator, opts),
    }
}

/// Steady state of a prepared generator (Krylov or integration).
pub fn steady_state_of(generator: &LindbladGenerator, opts: &SteadyStateOptions) -> Result<SteadyStateReport> {
    if generator.is_time_dependent() {
        return Err(Error::InvalidArgument("steady state requires a time-independent drive".into()));
    }
    match opts.method {
        SteadyStateMethod::Krylov => krylov(generator, opts),
        SteadyStateMethod::Integration => integrate(generator, opts),
        SteadyStateMethod::NullSpace => Err(Error::InvalidArgument(
            "null-space method needs the Hamiltonian; use steady_state".into(),
        )),
    }
}

fn finish(generator: &LindbladGenerator, mut rho: CMatrix) -> Result<(DensityState, f64)> {
    hermitize(&mut rho);
    let tr = trace(&rho).re;
    if !(tr.abs() > 0.0) || !tr.is_finite() {
        return Err(Error::Numeric(format!("steady-state candidate has trace {tr}")));
    }
    rho /= Complex64::from(tr);
    let residual = stationarity_residual(generator, &rho);
    let state = DensityState::new(rho, generator.basis().clone(), 0.0)?;
    Ok((state, residual))
}

fn null_space(
    generator: &LindbladGenerator,
    h: &crate::linalg::SparseMatrix,
    couplings: &CouplingMatrices,
    opts: &SteadyStateOptions,
) -> Result<SteadyStateReport> {
    let basis = generator.basis();
    let d = basis.dim();
    let tol = opts.tolerance(d);
    let l = vectorized_liouvillian(basis, h, couplings)?.to_dense();
    let n = l.nrows();
    // tiny complex shift keeps the factorisation regular
    let shift = Complex64::new(1e-10, 1e-10) * l.camax().max(1.0);
    let shifted = &l - DMatrix::<Complex64>::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut x = nalgebra::DVector::from_vec(vectorize(
        &(CMatrix::identity(d, d) / Complex64::from(d as f64)),
    ));
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut best = None;
    while iterations < opts.max_iterations.min(50) {
        iterations += 1;
        x = lu
            .solve(&x)
            .ok_or_else(|| Error::Numeric("vectorized Liouvillian factorisation is singular".into()))?;
        let norm = x.norm();
        x /= Complex64::from(norm);
        let (state, r) = finish(generator, unvectorize(x.as_slice(), d))?;
        residual = r;
        best = Some(state);
        if residual < tol {
            break;
        }
    }
    let state = best.expect("at least one inverse iteration");
    if residual >= tol {
        return Err(Error::Convergence {
            context: "null-space inverse iteration".into(),
            iterations,
            residual,
        });
    }
    Ok(SteadyStateReport {
        state,
        method: SteadyStateMethod::NullSpace,
        residual,
        iterations,
    })
}

fn integrate(generator: &LindbladGenerator, opts: &SteadyStateOptions) -> Result<SteadyStateReport> {
    let d = generator.dim();
    let tol = opts.tolerance(d);
    let ground = DensityState::ground(generator.basis().clone());
    let mut evolve_opts = opts.integration.clone();
    // the integrator's own error floor must sit below the target residual
    evolve_opts.abs_tol = evolve_opts.abs_tol.min(1e-2 * tol / d as f64);
    evolve_opts.rel_tol = evolve_opts.rel_tol.min(1e-2 * tol / d as f64);
    evolve_opts.max_steps = evolve_opts.max_steps.min(opts.max_iterations.max(1) * 1000);
    let mut stepper = Stepper::new(generator, 0.0, ground.rho, evolve_opts)?;
    let mut chunk = 1.0;
    loop {
        let target = (stepper.t + chunk).min(opts.max_time);
        stepper.advance_to(target)?;
        let residual = stationarity_residual(generator, &stepper.y);
        if residual < tol {
            let (state, residual) = finish(generator, stepper.y.clone())?;
            return Ok(SteadyStateReport {
                state,
                method: SteadyStateMethod::Integration,
                residual,
                iterations: stepper.accepted,
            });
        }
        if stepper.t >= opts.max_time {
            return Err(Error::Convergence {
                context: format!("steady-state integration up to t = {}", opts.max_time),
                iterations: stepper.accepted,
                residual,
            });
        }
        chunk = (chunk * 1.5).min(50.0);
    }
}

/// Exact inverse of the no-jump part `X ↦ −i H_eff X + i X H_eff†`, with the
/// drive included in `H_eff`.
struct NoJumpPreconditioner {
    vectors: CMatrix,
    inverse: CMatrix,
    values: Vec<Complex64>,
    floor: f64,
}

impl NoJumpPreconditioner {
    fn new(generator: &LindbladGenerator) -> Result<Self> {
        let h = generator.effective_hamiltonian(0.0).to_dense();
        let e = eig(&h)?;
        let inverse = e
            .vectors
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("defective effective Hamiltonian".into()))?;
        let scale = e.values.iter().map(|v| v.norm()).fold(1.0, f64::max);
        Ok(Self {
            vectors: e.vectors,
            inverse,
            values: e.values,
            floor: 1e-13 * scale,
        })
    }

    fn apply(&self, y: &CMatrix) -> CMatrix {
        let mut t = CMatrix::zeros(y.nrows(), y.ncols());
        gemm(ONE, &self.inverse, Op::None, y, Op::None, ZERO, &mut t);
        let mut z = CMatrix::zeros(y.nrows(), y.ncols());
        gemm(ONE, &t, Op::None, &self.inverse, Op::Adjoint, ZERO, &mut z);
        for j in 0..z.ncols() {
            for i in 0..z.nrows() {
                let mut den = self.values[i] - self.values[j].conj();
                if den.norm() < self.floor {
                    den = Complex64::new(0.0, -self.floor);
                }
                z[(i, j)] *= I / den;
            }
        }
        gemm(ONE, &self.vectors, Op::None, &z, Op::None, ZERO, &mut t);
        gemm(ONE, &t, Op::None, &self.vectors, Op::Adjoint, ZERO, &mut z);
        z
    }
}

fn dotc(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Restarted right-preconditioned GMRES for `A x = b`.
/// Returns the solution, the iteration count and the final residual.
fn gmres(
    apply_a: impl Fn(&CMatrix) -> CMatrix,
    apply_m: impl Fn(&CMatrix) -> CMatrix,
    b: &CMatrix,
    mut x: CMatrix,
    tol: f64,
    restart: usize,
    max_iterations: usize,
) -> (CMatrix, usize, f64) {
    let mut iterations = 0;
    let restart = restart.max(1);
    loop {
        let r = b - apply_a(&x);
        let beta = r.norm();
        if beta <= tol || iterations >= max_iterations {
            return (x, iterations, beta);
        }
        let mut v: Vec<CMatrix> = vec![r / Complex64::from(beta)];
        let mut h = DMatrix::<Complex64>::zeros(restart + 1, restart);
        let mut cs = vec![ZERO; restart];
        let mut sn = vec![ZERO; restart];
        let mut g = vec![ZERO; restart + 1];
        g[0] = Complex64::from(beta);
        let mut k = 0;
        while k < restart && iterations < max_iterations {
            iterations += 1;
            let mut w = apply_a(&apply_m(&v[k]));
            for (i, vi) in v.iter().enumerate() {
                let hik = dotc(vi, &w);
                h[(i, k)] = hik;
                axpy(&mut w, -hik, vi);
            }
            // second Gram–Schmidt pass for stability
            for (i, vi) in v.iter().enumerate() {
                let corr = dotc(vi, &w);
                h[(i, k)] += corr;
                axpy(&mut w, -corr, vi);
            }
            let wn = w.norm();
            h[(k + 1, k)] = Complex64::from(wn);
            for i in 0..k {
                let a = h[(i, k)];
                let bb = h[(i + 1, k)];
                h[(i, k)] = cs[i].conj() * a + sn[i].conj() * bb;
                h[(i + 1, k)] = -sn[i] * a + cs[i] * bb;
            }
            let a = h[(k, k)];
            let bb = h[(k + 1, k)];
            let rho = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if rho == 0.0 {
                cs[k] = ONE;
                sn[k] = ZERO;
            } else {
                cs[k] = a / rho;
                sn[k] = bb / rho;
            }
            h[(k, k)] = Complex64::from(rho);
            h[(k + 1, k)] = ZERO;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k += 1;
            if g[k].norm() <= tol || wn == 0.0 {
                break;
            }
            v.push(w / Complex64::from(wn));
        }
        // back-substitution for the least-squares coefficients
        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        let mut update = CMatrix::zeros(b.nrows(), b.ncols());
        for (yi, vi) in y.iter().zip(v.iter()) {
            axpy(&mut update, *yi, vi);
        }
        x += apply_m(&update);
        debug!("gmres: {iterations} iterations, estimated residual {:e}", g[k].norm());
    }
}

fn krylov(generator: &LindbladGenerator, opts: &SteadyStateOptions) -> Result<SteadyStateReport> {
    let d = generator.dim();
    let tol = opts.tolerance(d);
    let c = 1.0;
    let pre = NoJumpPreconditioner::new(generator)?;
    let apply_a = |x: &CMatrix| {
        let mut y = generator.apply(0.0, x);
        y[(0, 0)] += trace(x) * c;
        y
    };
    let mut b = CMatrix::zeros(d, d);
    b[(0, 0)] = Complex64::from(c);
    let mut x = DensityState::ground(generator.basis().clone()).rho;
    let mut total = 0;
    loop {
        let budget = opts.max_iterations.saturating_sub(total);
        let (sol, its, _) = gmres(&apply_a, |v| pre.apply(v), &b, x, 0.25 * tol, opts.restart, budget);
        total += its;
        let (state, residual) = finish(generator, sol.clone())?;
        debug!("krylov steady state: {total} iterations, residual {residual:e}");
        if residual < tol {
            return Ok(SteadyStateReport {
                state,
                method: SteadyStateMethod::Krylov,
                residual,
                iterations: total,
            });
        }
        if total >= opts.max_iterations || its == 0 {
            return Err(Error::Convergence {
                context: "preconditioned GMRES steady state".into(),
                iterations: total,
                residual,
            });
        }
        x = state.rho;
    }
}
