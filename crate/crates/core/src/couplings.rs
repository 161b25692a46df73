//! Free-space dyadic Green's tensor and the collective dipole-dipole couplings.
//!
//! For a displacement `r` with `r̂ = r/|r|` and wavenumber `k₀`:
//!
//! ```text
//! G(r) = e^{ik₀r}/(4πr) · [ (I − r̂r̂) + (1/(k₀r)² − i/(k₀r)) (3r̂r̂ − I) ]
//! ```
//!
//! The coherent and dissipative rates between emitters `i ≠ j` are
//!
//! ```text
//! Ω_ij = −(3πΓ₀/k₀) Re{μ̂_i·G(r_i − r_j)·μ̂_j}
//! Γ_ij = (6πΓ₀/k₀) Im{μ̂_i·G(r_i − r_j)·μ̂_j}
//! ```
//!
//! normalised so that `Im{μ̂·G(r→0)·μ̂} = k₀/6π` reproduces `Γ_ii = Γ₀`. The
//! diagonal is set analytically: `Ω_ii = 0`, `Γ_ii = Γ₀`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{EmitterArray, Vec3};

pub type CVec3 = Vector3<Complex64>;

/// 3×3 complex dyadic, symmetric for free space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreensTensor(pub Matrix3<Complex64>);

impl GreensTensor {
    /// Contraction `a·G·b` (no complex conjugation on `a`).
    pub fn contract(&self, a: &Vec3, b: &Vec3) -> Complex64 {
        let ac = a.map(Complex64::from);
        let bc = b.map(Complex64::from);
        (ac.transpose() * self.0 * bc)[(0, 0)]
    }

    /// Field radiated by a unit dipole along `mu`: `G·μ̂`.
    pub fn apply(&self, mu: &Vec3) -> CVec3 {
        self.0 * mu.map(Complex64::from)
    }
}

/// Evaluates the free-space Green's tensor at displacement `r`.
pub fn greens_tensor(r: &Vec3, k0: f64) -> Result<GreensTensor> {
    let dist = r.norm();
    if !(dist > 0.0) {
        return Err(Error::SingularInput(
            "Green's tensor evaluated at zero displacement".into(),
        ));
    }
    let rhat = r / dist;
    let kr = k0 * dist;
    let prefactor = Complex64::from_polar(1.0 / (4.0 * PI * dist), kr);
    let near = Complex64::new(1.0 / (kr * kr), -1.0 / kr);
    let rr = rhat * rhat.transpose();
    let id = Matrix3::<f64>::identity();
    let transverse = (id - rr).map(Complex64::from);
    let longitudinal = (rr * 3.0 - id).map(Complex64::from);
    Ok(GreensTensor((transverse + longitudinal * near) * prefactor))
}

/// Coherent (`omega`) and dissipative (`gamma`) coupling rates in units of the
/// emitter rate constant.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    pub omega: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

impl CouplingMatrices {
    pub fn len(&self) -> usize {
        self.omega.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.nrows() == 0
    }

    /// Single-excitation effective Hamiltonian `Ω − iΓ/2`.
    pub fn effective_hamiltonian(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.len(), self.len(), |i, j| {
            Complex64::new(self.omega[(i, j)], -0.5 * self.gamma[(i, j)])
        })
    }

    /// Couplings restricted to the listed emitters.
    pub fn subset(&self, indices: &[usize]) -> CouplingMatrices {
        let n = indices.len();
        CouplingMatrices {
            omega: DMatrix::from_fn(n, n, |a, b| self.omega[(indices[a], indices[b])]),
            gamma: DMatrix::from_fn(n, n, |a, b| self.gamma[(indices[a], indices[b])]),
        }
    }
}

/// Pairwise couplings of an emitter array.
pub fn coupling_matrices(array: &EmitterArray) -> CouplingMatrices {
    let n = array.len();
    let k0 = array.k0();
    let scale = 3.0 * PI * array.gamma0() / k0;
    let mut omega = DMatrix::zeros(n, n);
    let mut gamma = DMatrix::zeros(n, n);
    let pos = array.positions();
    let mu = array.orientations();
    for i in 0..n {
        gamma[(i, i)] = array.gamma0();
        for j in i + 1..n {
            // positions are validated distinct, so the tensor exists
            let g = greens_tensor(&(pos[i] - pos[j]), k0)
                .expect("distinct emitter positions")
                .contract(&mu[i], &mu[j]);
            let w = -scale * g.re;
            let y = 2.0 * scale * g.im;
            omega[(i, j)] = w;
            omega[(j, i)] = w;
            gamma[(i, j)] = y;
            gamma[(j, i)] = y;
        }
    }
    CouplingMatrices { omega, gamma }
}
