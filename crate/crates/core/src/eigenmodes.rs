//! Single-excitation spectra of `Ω − iΓ/2`: general arrays, the infinite
//! chain dispersion, ring angular-momentum modes and drive targeting.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::couplings::{greens_tensor, CouplingMatrices};
use crate::error::{Error, Result};
use crate::geometry::{ring_angle, EmitterArray, Vec3};
use crate::linalg::{eig, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ModeLabel {
    /// Position in the decay-sorted spectrum.
    Index(usize),
    /// Ring angular momentum.
    Angular(i64),
    /// Chain wavenumber (1/λ₀ units × 2π, i.e. `k_y`).
    Wavenumber(f64),
}

/// Eigenmode of the single-excitation effective Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveMode {
    pub label: ModeLabel,
    /// `Re(ω) − ω₀` in units of Γ₀.
    pub shift: f64,
    /// Collective decay rate, `−2 Im(ω)`.
    pub decay: f64,
    /// Unit-norm amplitudes per emitter.
    pub vector: DVector<Complex64>,
}

impl CollectiveMode {
    /// Complex eigenvalue `shift − i·decay/2`.
    pub fn eigenvalue(&self) -> Complex64 {
        Complex64::new(self.shift, -0.5 * self.decay)
    }
}

/// All single-excitation modes, sorted by decay rate (largest first).
pub fn effective_modes(couplings: &CouplingMatrices) -> Result<Vec<CollectiveMode>> {
    if couplings.is_empty() {
        return Err(Error::InvalidArgument("no emitters".into()));
    }
    let h = couplings.effective_hamiltonian();
    let e = eig(&h).map_err(|err| {
        Error::Numeric(format!(
            "single-excitation eigenproblem failed for N = {} (max |H| = {:e}): {err}",
            h.nrows(),
            h.camax()
        ))
    })?;
    let mut order: Vec<usize> = (0..e.values.len()).collect();
    order.sort_by(|&a, &b| (-e.values[b].im).total_cmp(&(-e.values[a].im)).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(rank, k)| CollectiveMode {
            label: ModeLabel::Index(rank),
            shift: e.values[k].re,
            decay: -2.0 * e.values[k].im,
            vector: e.vectors.column(k).into_owned(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    MostSuperradiant,
    MostSubradiant,
}

/// Detuning `Δ_p = ω₀ − ω_p` that puts the drive on resonance with the
/// selected mode. Ties in decay go to the smallest `|shift|`, then to the
/// lower index.
pub fn target_detuning(couplings: &CouplingMatrices, which: Selection) -> Result<f64> {
    Ok(-select_mode(couplings, which)?.shift)
}

pub fn select_mode(couplings: &CouplingMatrices, which: Selection) -> Result<CollectiveMode> {
    let modes = effective_modes(couplings)?;
    let extreme = match which {
        Selection::MostSuperradiant => modes.first(),
        Selection::MostSubradiant => modes.last(),
    }
    .expect("at least one mode")
    .decay;
    let scale = modes.iter().map(|m| m.decay.abs()).fold(1.0, f64::max);
    let tie = 1e-9 * scale;
    modes
        .into_iter()
        .filter(|m| (m.decay - extreme).abs() <= tie)
        .min_by(|a, b| a.shift.abs().total_cmp(&b.shift.abs()))
        .ok_or_else(|| Error::Numeric("mode selection failed".into()))
}

/// Angular-momentum mode `v_j = e^{imφ_j}/√N` of a regular ring; the
/// eigenvalue is the Rayleigh quotient `v†(Ω − iΓ/2)v`.
pub fn ring_mode(ring: &EmitterArray, couplings: &CouplingMatrices, m: i64) -> Result<CollectiveMode> {
    let n = ring.len();
    if n == 0 || couplings.len() != n {
        return Err(Error::InvalidArgument("ring and couplings disagree".into()));
    }
    let m_max = (n / 2) as i64;
    if m.abs() > m_max {
        return Err(Error::InvalidArgument(format!(
            "angular momentum {m} outside [-{m_max}, {m_max}] for a ring of {n}"
        )));
    }
    let norm = 1.0 / (n as f64).sqrt();
    let v = DVector::from_fn(n, |j, _| Complex64::from_polar(norm, m as f64 * ring_angle(n, j)));
    let h = couplings.effective_hamiltonian();
    let lambda = (v.adjoint() * &h * &v)[(0, 0)];
    Ok(CollectiveMode {
        label: ModeLabel::Angular(m),
        shift: lambda.re,
        decay: -2.0 * lambda.im,
        vector: v,
    })
}

/// Controls for [`chain_dispersion`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionOptions {
    pub j_start: usize,
    pub j_cap: usize,
    /// Relative agreement of successive extrapolated sums.
    pub tol: f64,
    pub k0: f64,
}

impl Default for DispersionOptions {
    fn default() -> Self {
        Self {
            j_start: 1000,
            j_cap: 1_000_000,
            tol: 1e-8,
            k0: 2.0 * PI,
        }
    }
}

/// Raised-cosine tapered sum `Σ_{0<|j|≤J} w(j/J) e^{−ik j d} g_j`, with `g_j`
/// the (even in `j`) pair coupling at distance `j d`.
fn tapered_sum(k: f64, d: f64, g: &[Complex64], j_max: usize) -> Complex64 {
    let mut acc = ZERO;
    // tail first so the small terms are added before the large ones
    for j in (1..=j_max).rev() {
        let x = j as f64 / (j_max as f64 + 1.0);
        let w = (0.5 * PI * x).cos().powi(2);
        acc += g[j - 1] * (2.0 * w * (k * d * j as f64).cos());
    }
    acc
}

/// Infinite-chain spin-wave eigenvalue `ω(k_y) − ω₀ = shift − i·decay/2` for
/// a chain along ŷ with spacing `d` and common dipole `orientation`.
///
/// The conditionally convergent lattice sum is smoothed with a raised-cosine
/// taper, whose bias falls off as `J⁻²`; successive cutoff doublings are
/// Richardson-extrapolated until two estimates agree to `tol`.
pub fn chain_dispersion(k: f64, d: f64, orientation: Vec3, opts: &DispersionOptions) -> Result<Complex64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("spacing must be positive, got {d}")));
    }
    if !(k.abs() <= PI / d * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("k_y = {k} lies outside [-π/d, π/d]")));
    }
    let norm = orientation.norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("orientation must be non-zero".into()));
    }
    let mu = orientation / norm;
    let pre = -3.0 * PI / opts.k0;
    let mut g: Vec<Complex64> = Vec::new();
    let extend = |g: &mut Vec<Complex64>, upto: usize| -> Result<()> {
        for j in g.len() + 1..=upto {
            g.push(greens_tensor(&(Vec3::y() * (j as f64 * d)), opts.k0)?.contract(&mu, &mu) * pre);
        }
        Ok(())
    };
    let self_term = Complex64::new(0.0, -0.5);
    let mut j = opts.j_start.max(1);
    extend(&mut g, j)?;
    let mut coarse = tapered_sum(k, d, &g, j);
    let mut previous: Option<Complex64> = None;
    let mut change = f64::INFINITY;
    loop {
        let next_j = j * 2;
        if next_j > opts.j_cap {
            return Err(Error::Convergence {
                context: format!("chain dispersion at k_y = {k}"),
                iterations: j,
                residual: change,
            });
        }
        extend(&mut g, next_j)?;
        let fine = tapered_sum(k, d, &g, next_j);
        let estimate = (fine * 4.0 - coarse) / 3.0;
        if let Some(p) = previous {
            change = (estimate - p).norm();
            if change < opts.tol * estimate.norm().max(1.0) {
                return Ok(estimate + self_term);
            }
        }
        previous = Some(estimate);
        coarse = fine;
        j = next_j;
    }
}

/// Assignment of a finite-chain mode to a standing spin wave
/// `√(2/(N+1)) sin(πq(j+1)/(N+1))`, `k_q = πq/((N+1)d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveAssignment {
    pub q: usize,
    pub k: f64,
    /// `|⟨s_q|v⟩|` for the best `q`.
    pub overlap: f64,
}

pub fn assign_standing_wave(mode: &CollectiveMode, d: f64) -> WaveAssignment {
    let n = mode.vector.len();
    let norm = (2.0 / (n as f64 + 1.0)).sqrt();
    let mut best = WaveAssignment {
        q: 0,
        k: 0.0,
        overlap: -1.0,
    };
    for q in 1..=n {
        let arg = PI * q as f64 / (n as f64 + 1.0);
        let ov: Complex64 = mode
            .vector
            .iter()
            .enumerate()
            .map(|(j, v)| v * (norm * (arg * (j as f64 + 1.0)).sin()))
            .sum();
        if ov.norm() > best.overlap {
            best = WaveAssignment {
                q,
                k: arg / d,
                overlap: ov.norm(),
            };
        }
    }
    best
}
