use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::basis::Basis;
use crate::couplings::{CVec3, CouplingMatrices};
use crate::error::{Error, Result};
use crate::geometry::{EmitterArray, Vec3};
use crate::linalg::{SparseMatrix, I, ONE, ZERO};

/// Gaussian envelope `Ω(t) = amplitude · exp(−(t − center)²/width²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Pulse {
    pub fn envelope(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.width;
        self.amplitude * (-x * x).exp()
    }
}

/// Coherent plane-wave drive.
///
/// `detuning` is `ω₀ − ω_p`. The drive enters the Hamiltonian as
/// `Ω(t) Σ_j (ε·μ̂_j)(e^{−ik·r_j} σ⁺_j + h.c.)`. The Rabi frequency is
/// therefore `2Ω`, and a single resonantly driven emitter has excited
/// population `4Ω²/(Γ₀² + 8Ω²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub rabi: f64,
    pub detuning: f64,
    pub k_vec: Vec3,
    pub polarization: CVec3,
    pub pulse: Option<Pulse>,
    /// Emitters the laser reaches; `None` means all of them.
    pub targets: Option<Vec<usize>>,
}

impl Drive {
    pub fn new(rabi: f64, detuning: f64, k_vec: Vec3, polarization: CVec3) -> Result<Self> {
        let norm = polarization.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument("drive polarization must be non-zero".into()));
        }
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "drive polarization must be normalized, |ε| = {norm}"
            )));
        }
        if !rabi.is_finite() || !detuning.is_finite() || !k_vec.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("drive parameters must be finite".into()));
        }
        Ok(Self {
            rabi,
            detuning,
            k_vec,
            polarization,
            pulse: None,
            targets: None,
        })
    }

    /// Real linear polarization along `axis`, propagating along `direction`
    /// with `|k| = k0`.
    pub fn linear(rabi: f64, detuning: f64, direction: Vec3, axis: Vec3, k0: f64) -> Result<Self> {
        if direction.norm() == 0.0 || axis.norm() == 0.0 {
            return Err(Error::InvalidArgument("drive direction and polarization must be non-zero".into()));
        }
        let pol = axis.normalize().map(Complex64::from);
        Self::new(rabi, detuning, direction.normalize() * k0, pol)
    }

    /// No drive at all.
    pub fn off() -> Self {
        Self {
            rabi: 0.0,
            detuning: 0.0,
            k_vec: Vec3::zeros(),
            polarization: CVec3::new(ZERO, ZERO, ONE),
            pulse: None,
            targets: None,
        }
    }

    pub fn with_pulse(mut self, pulse: Pulse) -> Result<Self> {
        if !(pulse.width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pulse width must be positive, got {}",
                pulse.width
            )));
        }
        self.pulse = Some(pulse);
        Ok(self)
    }

    pub fn with_targets(mut self, targets: Vec<usize>) -> Self {
        self.targets = Some(targets);
        self
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn is_time_dependent(&self) -> bool {
        self.pulse.is_some()
    }

    /// Rabi frequency `2Ω` of the (unpulsed) drive, the rate that appears in
    /// textbook two-level formulas such as `Ω_R²/(4Δ² + Γ₀² + 2Ω_R²)`.
    pub fn rabi_frequency(&self) -> f64 {
        2.0 * self.rabi
    }

    /// Drive rate `Ω(t)` at time `t`.
    pub fn rabi_at(&self, t: f64) -> f64 {
        match &self.pulse {
            Some(p) => p.envelope(t),
            None => self.rabi,
        }
    }

    /// Per-emitter coupling `(ε·μ̂_j) e^{−ik·r_j}` (zero for untargeted emitters).
    pub fn amplitudes(&self, array: &EmitterArray) -> Result<Vec<Complex64>> {
        let n = array.len();
        let mut mask = vec![self.targets.is_none(); n];
        if let Some(targets) = &self.targets {
            for &j in targets {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, len: n });
                }
                mask[j] = true;
            }
        }
        Ok(array
            .positions()
            .iter()
            .zip(array.orientations())
            .zip(mask)
            .map(|((r, mu), on)| {
                if !on {
                    return ZERO;
                }
                let proj: Complex64 = self
                    .polarization
                    .iter()
                    .zip(mu.iter())
                    .map(|(e, m)| e * m)
                    .sum();
                proj * Complex64::from_polar(1.0, -self.k_vec.dot(r))
            })
            .collect())
    }
}

/// `σ⁻_j` in the given basis (0-based emitter index).
pub fn lowering_operator(basis: &Basis, j: usize) -> Result<SparseMatrix> {
    check_index(basis, j)?;
    let bit = 1u64 << j;
    let triplets = basis
        .states()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s & bit != 0)
        .map(|(col, &s)| {
            let row = basis.index_of(s & !bit).expect("truncated basis is closed under lowering");
            (row, col, ONE)
        })
        .collect();
    Ok(SparseMatrix::from_triplets(basis.dim(), basis.dim(), triplets))
}

/// `σ⁺_j` projected on the truncated basis.
pub fn raising_operator(basis: &Basis, j: usize) -> Result<SparseMatrix> {
    Ok(lowering_operator(basis, j)?.adjoint())
}

fn check_index(basis: &Basis, j: usize) -> Result<()> {
    if j >= basis.n_emitters() {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: basis.n_emitters(),
        });
    }
    Ok(())
}

/// Excitation-conserving operator `Σ_ij c_ij σ⁺_i σ⁻_j`.
pub fn hopping_operator(basis: &Basis, coeffs: &DMatrix<Complex64>) -> SparseMatrix {
    let n = basis.n_emitters();
    assert_eq!(coeffs.nrows(), n);
    let mut triplets = Vec::new();
    for (col, &s) in basis.states().iter().enumerate() {
        for j in (0..n).filter(|&j| s & (1 << j) != 0) {
            let without = s & !(1 << j);
            for i in 0..n {
                let c = coeffs[(i, j)];
                if c == ZERO || (i != j && without & (1 << i) != 0) {
                    continue;
                }
                let target = without | (1 << i);
                let row = basis.index_of(target).expect("hopping preserves excitation number");
                triplets.push((row, col, c));
            }
        }
    }
    SparseMatrix::from_triplets(basis.dim(), basis.dim(), triplets)
}

/// Total excitation number `Σ_j σ⁺_j σ⁻_j` (diagonal).
pub fn number_operator(basis: &Basis) -> SparseMatrix {
    let triplets = (0..basis.dim())
        .map(|i| (i, i, Complex64::from(basis.excitations(i) as f64)))
        .collect();
    SparseMatrix::from_triplets(basis.dim(), basis.dim(), triplets)
}

/// Drive operator for unit drive rate: `Σ_j (a_j σ⁺_j + a_j* σ⁻_j)`.
pub fn drive_operator(basis: &Basis, amplitudes: &[Complex64]) -> SparseMatrix {
    assert_eq!(amplitudes.len(), basis.n_emitters());
    let mut triplets = Vec::new();
    for (col, &s) in basis.states().iter().enumerate() {
        for (j, &a) in amplitudes.iter().enumerate() {
            if a == ZERO || s & (1 << j) != 0 {
                continue;
            }
            if let Some(row) = basis.index_of(s | (1 << j)) {
                triplets.push((row, col, a));
                triplets.push((col, row, a.conj()));
            }
        }
    }
    SparseMatrix::from_triplets(basis.dim(), basis.dim(), triplets)
}

/// Excitation-conserving part `Δ_p N̂ + Σ_{i≠j} Ω_ij σ⁺_i σ⁻_j`.
pub fn static_hamiltonian(basis: &Basis, couplings: &CouplingMatrices, detuning: f64) -> SparseMatrix {
    let n = basis.n_emitters();
    let coeffs = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::from(detuning)
        } else {
            Complex64::from(couplings.omega[(i, j)])
        }
    });
    hopping_operator(basis, &coeffs)
}

/// Decay operator `Σ_ij Γ_ij σ⁺_i σ⁻_j`; the effective Hamiltonian is `H − (i/2)K`.
pub fn decay_operator(basis: &Basis, couplings: &CouplingMatrices) -> SparseMatrix {
    hopping_operator(basis, &couplings.gamma.map(Complex64::from))
}

/// Driven Hamiltonian `H(t)` restricted to the truncated basis.
pub fn hamiltonian(
    basis: &Basis,
    array: &EmitterArray,
    couplings: &CouplingMatrices,
    drive: &Drive,
    t: f64,
) -> Result<SparseMatrix> {
    if array.len() != basis.n_emitters() || couplings.len() != basis.n_emitters() {
        return Err(Error::InvalidArgument(format!(
            "basis has {} emitters, array {} and couplings {}",
            basis.n_emitters(),
            array.len(),
            couplings.len()
        )));
    }
    let h0 = static_hamiltonian(basis, couplings, drive.detuning);
    let v = drive_operator(basis, &drive.amplitudes(array)?);
    Ok(h0.combine(ONE, &v, Complex64::from(drive.rabi_at(t))))
}

/// `H − (i/2) Σ Γ_ij σ⁺_i σ⁻_j`.
pub fn effective_hamiltonian(h: &SparseMatrix, decay: &SparseMatrix) -> SparseMatrix {
    h.combine(ONE, decay, -0.5 * I)
}
