use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::basis::Basis;
use super::operators::{
    decay_operator, drive_operator, effective_hamiltonian, lowering_operator, static_hamiltonian,
    Drive, Pulse,
};
use crate::couplings::CouplingMatrices;
use crate::error::{Error, Result};
use crate::geometry::EmitterArray;
use crate::linalg::{hermiticity_defect, trace, CMatrix, SparseMatrix, I, ONE, ZERO};

/// Largest `D` for which [`vectorized_liouvillian`] builds the `D²×D²` matrix.
pub const LIOUVILLIAN_MAX_DIM: usize = 60;

/// Density matrix on a (possibly truncated) product basis.
#[derive(Debug, Clone)]
pub struct DensityState {
    pub rho: CMatrix,
    pub basis: Arc<Basis>,
    pub time: f64,
}

impl DensityState {
    pub fn new(rho: CMatrix, basis: Arc<Basis>, time: f64) -> Result<Self> {
        if rho.nrows() != basis.dim() || rho.ncols() != basis.dim() {
            return Err(Error::InvalidArgument(format!(
                "density matrix is {}x{}, basis dimension is {}",
                rho.nrows(),
                rho.ncols(),
                basis.dim()
            )));
        }
        Ok(Self { rho, basis, time })
    }

    /// All emitters in the ground state.
    pub fn ground(basis: Arc<Basis>) -> Self {
        let mut rho = CMatrix::zeros(basis.dim(), basis.dim());
        rho[(0, 0)] = ONE;
        Self { rho, basis, time: 0.0 }
    }

    /// Pure state `|ψ⟩⟨ψ|` from (unnormalised) amplitudes.
    pub fn pure(basis: Arc<Basis>, amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes for basis dimension {}",
                amplitudes.len(),
                basis.dim()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("state vector is zero".into()));
        }
        let psi = nalgebra::DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|a| a / norm));
        let rho = &psi * psi.adjoint();
        Ok(Self { rho, basis, time: 0.0 })
    }

    /// Pure state given by bit patterns and their amplitudes.
    pub fn from_patterns(basis: Arc<Basis>, terms: &[(u64, Complex64)]) -> Result<Self> {
        let mut amps = vec![ZERO; basis.dim()];
        for &(s, a) in terms {
            let i = basis.index_of(s).ok_or_else(|| {
                Error::InvalidArgument(format!("pattern {s:#b} lies outside the basis"))
            })?;
            amps[i] += a;
        }
        Self::pure(basis, &amps)
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        trace(&self.rho)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.rho + self.rho.adjoint()) * Complex64::from(0.5);
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Checks Hermiticity (1e-10), unit trace (1e-9) and positivity (−1e-8).
    pub fn check_invariants(&self) -> Result<()> {
        let herm = hermiticity_defect(&self.rho);
        if herm > 1e-10 {
            return Err(Error::Numeric(format!("density matrix not Hermitian (defect {herm:e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > 1e-9 {
            return Err(Error::Numeric(format!("density matrix trace is {tr}")));
        }
        let min = self.eigenvalues()[0];
        if min < -1e-8 {
            return Err(Error::Numeric(format!("density matrix has eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Trace distance `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityState) -> f64 {
        let diff = &self.rho - &other.rho;
        let h = (&diff + diff.adjoint()) * Complex64::from(0.5);
        0.5 * SymmetricEigen::new(h).eigenvalues.iter().map(|v| v.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Envelope {
    Constant(f64),
    Pulsed(Pulse),
}

impl Envelope {
    fn at(&self, t: f64) -> f64 {
        match self {
            Envelope::Constant(r) => *r,
            Envelope::Pulsed(p) => p.envelope(t),
        }
    }
}

/// Precomputed Lindblad generator
/// `dρ/dt = −i[H, ρ] + Σ_ij (Γ_ij/2)(2σ⁻_iρσ⁺_j − σ⁺_iσ⁻_jρ − ρσ⁺_iσ⁻_j)`.
///
/// Internally `H_eff = H − (i/2)Σ Γ_ij σ⁺_iσ⁻_j` carries the anticommutator
/// and the recycling term is diagonalised, `Σ_ij Γ_ij σ⁻_i ρ σ⁺_j =
/// Σ_k γ_k L_k ρ L_k†` with `Γ = Σ_k γ_k v_k v_kᵀ` and `L_k = Σ_i v_ik σ⁻_i`.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    basis: Arc<Basis>,
    static_eff: SparseMatrix,
    drive_op: SparseMatrix,
    envelope: Envelope,
    jumps: Vec<(f64, SparseMatrix)>,
}

fn collective_jumps(basis: &Basis, couplings: &CouplingMatrices) -> Result<Vec<(f64, SparseMatrix)>> {
    let n = basis.n_emitters();
    let lowering: Vec<SparseMatrix> = (0..n).map(|j| lowering_operator(basis, j)).collect::<Result<_>>()?;
    let eig = SymmetricEigen::new(couplings.gamma.clone());
    let scale = couplings.gamma.diagonal().iter().map(|g| g.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut jumps = Vec::new();
    for k in 0..n {
        let rate = eig.eigenvalues[k];
        if rate.abs() <= 1e-15 * scale {
            continue;
        }
        let mut triplets = Vec::new();
        for (i, op) in lowering.iter().enumerate() {
            let c = eig.eigenvectors[(i, k)];
            if c != 0.0 {
                triplets.extend(op.iter().map(|(r, col, v)| (r, col, v * c)));
            }
        }
        jumps.push((rate, SparseMatrix::from_triplets(basis.dim(), basis.dim(), triplets)));
    }
    Ok(jumps)
}

impl LindbladGenerator {
    /// Generator for an emitter array under a (possibly pulsed) drive.
    pub fn new(basis: Arc<Basis>, array: &EmitterArray, couplings: &CouplingMatrices, drive: &Drive) -> Result<Self> {
        if array.len() != basis.n_emitters() || couplings.len() != basis.n_emitters() {
            return Err(Error::InvalidArgument(format!(
                "basis has {} emitters, array {} and couplings {}",
                basis.n_emitters(),
                array.len(),
                couplings.len()
            )));
        }
        let h0 = static_hamiltonian(&basis, couplings, drive.detuning);
        let decay = decay_operator(&basis, couplings);
        let drive_op = drive_operator(&basis, &drive.amplitudes(array)?);
        let envelope = match drive.pulse {
            Some(p) => Envelope::Pulsed(p),
            None => Envelope::Constant(drive.rabi),
        };
        Ok(Self {
            static_eff: effective_hamiltonian(&h0, &decay),
            drive_op,
            envelope,
            jumps: collective_jumps(&basis, couplings)?,
            basis,
        })
    }

    /// Generator for a fixed Hamiltonian matrix.
    pub fn from_hamiltonian(basis: Arc<Basis>, h: &SparseMatrix, couplings: &CouplingMatrices) -> Result<Self> {
        if h.nrows() != basis.dim() || couplings.len() != basis.n_emitters() {
            return Err(Error::InvalidArgument("Hamiltonian or couplings do not match the basis".into()));
        }
        let decay = decay_operator(&basis, couplings);
        Ok(Self {
            static_eff: effective_hamiltonian(h, &decay),
            drive_op: SparseMatrix::zeros(basis.dim(), basis.dim()),
            envelope: Envelope::Constant(0.0),
            jumps: collective_jumps(&basis, couplings)?,
            basis,
        })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self.envelope, Envelope::Pulsed(_))
    }

    pub fn rabi_at(&self, t: f64) -> f64 {
        self.envelope.at(t)
    }

    /// Excitation-conserving part of `H_eff` (no drive).
    pub fn undriven_effective_hamiltonian(&self) -> &SparseMatrix {
        &self.static_eff
    }

    /// Drive operator for unit Rabi rate.
    pub fn drive_operator(&self) -> &SparseMatrix {
        &self.drive_op
    }

    pub fn jumps(&self) -> &[(f64, SparseMatrix)] {
        &self.jumps
    }

    /// Full `H_eff(t)`.
    pub fn effective_hamiltonian(&self, t: f64) -> SparseMatrix {
        self.static_eff.combine(ONE, &self.drive_op, Complex64::from(self.envelope.at(t)))
    }

    /// Recycling term `Σ_k γ_k L_k x L_k†` for an arbitrary matrix `x`.
    pub fn recycle(&self, x: &CMatrix, out: &mut CMatrix) {
        for (rate, l) in &self.jumps {
            let lx = l.mul_dense(x);
            // (L (L x)†)† = L x L†
            let t = l.mul_dense(&lx.adjoint());
            *out += t.adjoint() * Complex64::from(*rate);
        }
    }

    /// `L(t)·x` for an arbitrary (not necessarily Hermitian) matrix `x`.
    pub fn apply(&self, t: f64, x: &CMatrix) -> CMatrix {
        let omega = Complex64::from(self.envelope.at(t));
        let mut left = CMatrix::zeros(x.nrows(), x.ncols());
        self.static_eff.mul_dense_acc(-I, x, &mut left);
        let xa = x.adjoint();
        let mut right = CMatrix::zeros(x.nrows(), x.ncols());
        self.static_eff.mul_dense_acc(-I, &xa, &mut right);
        if omega != ZERO {
            self.drive_op.mul_dense_acc(-I * omega, x, &mut left);
            self.drive_op.mul_dense_acc(-I * omega, &xa, &mut right);
        }
        // −i H x + i x H† = left + right†
        let mut out = left + right.adjoint();
        self.recycle(x, &mut out);
        out
    }

    /// `L(t)·ρ` for Hermitian `ρ`; the result is Hermitian by construction.
    pub fn apply_hermitian(&self, t: f64, rho: &CMatrix) -> CMatrix {
        let omega = Complex64::from(self.envelope.at(t));
        let mut left = CMatrix::zeros(rho.nrows(), rho.ncols());
        self.static_eff.mul_dense_acc(-I, rho, &mut left);
        if omega != ZERO {
            self.drive_op.mul_dense_acc(-I * omega, rho, &mut left);
        }
        let mut out = &left + left.adjoint();
        for (rate, l) in &self.jumps {
            let lx = l.mul_dense(rho);
            out += l.mul_dense(&lx.adjoint()) * Complex64::from(*rate);
        }
        out
    }
}

/// `dρ/dt` for a fixed Hamiltonian.
pub fn lindblad_rhs(state: &DensityState, h: &SparseMatrix, couplings: &CouplingMatrices) -> Result<CMatrix> {
    let gen = LindbladGenerator::from_hamiltonian(state.basis.clone(), h, couplings)?;
    Ok(gen.apply(state.time, &state.rho))
}

fn kron(a: &SparseMatrix, b: &SparseMatrix, scale: Complex64, out: &mut Vec<(usize, usize, Complex64)>) {
    let nb_r = b.nrows();
    let nb_c = b.ncols();
    for (ar, ac, av) in a.iter() {
        for (br, bc, bv) in b.iter() {
            out.push((ar * nb_r + br, ac * nb_c + bc, scale * av * bv));
        }
    }
}

fn identity(n: usize) -> SparseMatrix {
    SparseMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, ONE)).collect())
}

/// `D²×D²` superoperator with `L·vec(ρ) = vec(dρ/dt)` under column-major
/// vectorisation, `vec(ρ)[i + j·D] = ρ[i, j]`.
pub fn vectorized_liouvillian(basis: &Basis, h: &SparseMatrix, couplings: &CouplingMatrices) -> Result<SparseMatrix> {
    vectorized_liouvillian_with_budget(basis, h, couplings, LIOUVILLIAN_MAX_DIM)
}

pub fn vectorized_liouvillian_with_budget(
    basis: &Basis,
    h: &SparseMatrix,
    couplings: &CouplingMatrices,
    max_dim: usize,
) -> Result<SparseMatrix> {
    let d = basis.dim();
    if d > max_dim {
        return Err(Error::ResourceLimit {
            what: "vectorized Liouvillian (basis dimension)".into(),
            requested: d,
            budget: max_dim,
        });
    }
    let decay = decay_operator(basis, couplings);
    let heff = effective_hamiltonian(h, &decay);
    let heff_conj = SparseMatrix::from_triplets(d, d, heff.iter().map(|(r, c, v)| (r, c, v.conj())).collect());
    let id = identity(d);
    let mut t = Vec::new();
    kron(&id, &heff, -I, &mut t);
    kron(&heff_conj, &id, I, &mut t);
    let lowering: Vec<SparseMatrix> =
        (0..basis.n_emitters()).map(|j| lowering_operator(basis, j)).collect::<Result<_>>()?;
    for i in 0..basis.n_emitters() {
        for j in 0..basis.n_emitters() {
            let g = couplings.gamma[(i, j)];
            if g == 0.0 {
                continue;
            }
            // σ⁻_i ρ σ⁺_j  →  conj(σ⁻_j) ⊗ σ⁻_i  (σ⁻ is real)
            kron(&lowering[j], &lowering[i], Complex64::from(g), &mut t);
        }
    }
    Ok(SparseMatrix::from_triplets(d * d, d * d, t))
}

/// Column-major flattening of a square matrix.
pub fn vectorize(m: &CMatrix) -> Vec<Complex64> {
    m.as_slice().to_vec()
}

pub fn unvectorize(v: &[Complex64], d: usize) -> CMatrix {
    DMatrix::from_column_slice(d, d, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::coupling_matrices;
    use crate::geometry::{make_chain, Vec3};
    use crate::hilbert::operators::{hamiltonian, raising_operator};
    use proptest::prelude::*;

    fn setup(n: usize, n_max: usize, d: f64, rabi: f64) -> (Arc<Basis>, EmitterArray, CouplingMatrices, Drive) {
        let array = make_chain(n, d, Vec3::y(), Vec3::z()).unwrap();
        let c = coupling_matrices(&array);
        let basis = Arc::new(Basis::new(n, n_max).unwrap());
        let drive = Drive::linear(rabi, 0.7, Vec3::y(), Vec3::z(), array.k0()).unwrap();
        (basis, array, c, drive)
    }

    /// Dissipator written out term by term with dense operators.
    fn rhs_by_terms(basis: &Basis, h: &CMatrix, c: &CouplingMatrices, rho: &CMatrix) -> CMatrix {
        let n = basis.n_emitters();
        let sm: Vec<CMatrix> = (0..n).map(|j| lowering_operator(basis, j).unwrap().to_dense()).collect();
        let sp: Vec<CMatrix> = (0..n).map(|j| raising_operator(basis, j).unwrap().to_dense()).collect();
        let mut out = (h * rho - rho * h) * (-I);
        for i in 0..n {
            for j in 0..n {
                let g = Complex64::from(c.gamma[(i, j)] / 2.0);
                let pm = &sp[i] * &sm[j];
                out += (&sm[i] * rho * &sp[j] * Complex64::from(2.0) - &pm * rho - rho * &pm) * g;
            }
        }
        out
    }

    fn random_state(dim: usize, seed: u64) -> CMatrix {
        let mut s = seed | 1;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = CMatrix::from_fn(dim, dim, |_, _| Complex64::new(next(), next()));
        let rho = &a * a.adjoint();
        let tr = trace(&rho);
        rho / tr
    }

    #[test]
    fn generator_matches_term_by_term_form() {
        let (basis, array, c, drive) = setup(4, 2, 0.08, 0.9);
        let h = hamiltonian(&basis, &array, &c, &drive, 0.0).unwrap();
        let gen = LindbladGenerator::new(basis.clone(), &array, &c, &drive).unwrap();
        let rho = random_state(basis.dim(), 3);
        let expected = rhs_by_terms(&basis, &h.to_dense(), &c, &rho);
        assert!((gen.apply(0.0, &rho) - &expected).norm() < 1e-11 * expected.norm());
        assert!((gen.apply_hermitian(0.0, &rho) - &expected).norm() < 1e-11 * expected.norm());
    }

    #[test]
    fn single_atom_decay_rate() {
        let (basis, array, c, _) = setup(1, 1, 0.1, 0.0);
        let h = hamiltonian(&basis, &array, &c, &Drive::off(), 0.0).unwrap();
        let excited = DensityState::from_patterns(basis, &[(1, ONE)]).unwrap();
        let d = lindblad_rhs(&excited, &h, &c).unwrap();
        assert!((d[(1, 1)] + 1.0).norm() < 1e-15);
        assert!((d[(0, 0)] - 1.0).norm() < 1e-15);
    }

    #[test]
    fn dicke_superradiant_decay() {
        let (basis, array, c, _) = setup(2, 2, 1e-4, 0.0);
        let h = hamiltonian(&basis, &array, &c, &Drive::off(), 0.0).unwrap();
        let s = Complex64::from(1.0 / 2f64.sqrt());
        let sym = DensityState::from_patterns(basis.clone(), &[(0b01, s), (0b10, s)]).unwrap();
        let d = lindblad_rhs(&sym, &h, &c).unwrap();
        let rate = -(d[(1, 1)] + d[(2, 2)]).re;
        assert!((rate - 2.0).abs() < 1e-6, "rate {rate}");
    }

    #[test]
    fn vectorized_form_agrees() {
        let (basis, array, c, drive) = setup(3, 2, 0.1, 1.3);
        let h = hamiltonian(&basis, &array, &c, &drive, 0.0).unwrap();
        let l = vectorized_liouvillian(&basis, &h, &c).unwrap();
        let rho = random_state(basis.dim(), 17);
        let state = DensityState::new(rho.clone(), basis.clone(), 0.0).unwrap();
        let direct = lindblad_rhs(&state, &h, &c).unwrap();
        let via_vec = unvectorize(&l.mul_vec(&vectorize(&rho)), basis.dim());
        assert!((direct - via_vec).norm() < 1e-11);
    }

    #[test]
    fn maximally_mixed_state_is_stationary_only_without_decay() {
        let (basis, array, c, drive) = setup(2, 2, 0.1, 1.0);
        let mixed = vectorize(&(CMatrix::identity(4, 4) / Complex64::from(4.0)));
        let undriven = hamiltonian(&basis, &array, &c, &Drive::off(), 0.0).unwrap();
        let no_decay = CouplingMatrices {
            omega: c.omega.clone(),
            gamma: DMatrix::zeros(2, 2),
        };
        let norm = |v: Vec<Complex64>| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let l = vectorized_liouvillian(&basis, &undriven, &no_decay).unwrap();
        assert!(norm(l.mul_vec(&mixed)) < 1e-14);
        let l = vectorized_liouvillian(&basis, &undriven, &c).unwrap();
        assert!(norm(l.mul_vec(&mixed)) > 1e-3);
        let driven = hamiltonian(&basis, &array, &c, &drive, 0.0).unwrap();
        let l = vectorized_liouvillian(&basis, &driven, &no_decay).unwrap();
        assert!(norm(l.mul_vec(&mixed)) < 1e-14);
    }

    #[test]
    fn liouvillian_budget() {
        let basis = Basis::new(12, 2).unwrap();
        let array = make_chain(12, 0.05, Vec3::y(), Vec3::z()).unwrap();
        let c = coupling_matrices(&array);
        let h = hamiltonian(&basis, &array, &c, &Drive::off(), 0.0).unwrap();
        assert!(matches!(
            vectorized_liouvillian(&basis, &h, &c),
            Err(Error::ResourceLimit { budget: 60, requested: 79, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn trace_and_hermiticity_preserved(seed in any::<u64>(), rabi in 0.0f64..5.0, d in 0.02f64..0.5) {
            let (basis, array, c, drive) = setup(4, 2, d, rabi);
            let gen = LindbladGenerator::new(basis.clone(), &array, &c, &drive).unwrap();
            let rho = random_state(basis.dim(), seed);
            let out = gen.apply(0.0, &rho);
            let scale = out.norm().max(1.0);
            prop_assert!(trace(&out).norm() < 1e-11 * scale);
            let adj = gen.apply(0.0, &rho.adjoint());
            prop_assert!((out.adjoint() - adj).norm() < 1e-12 * scale);
        }
    }
}
