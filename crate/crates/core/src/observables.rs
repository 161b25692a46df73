//! Far-field observables of a density state: intensity, g²(0), detector
//! integrals, emission rate and manifold populations.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::couplings::{greens_tensor, CVec3, CouplingMatrices};
use crate::error::{Error, Result};
use crate::geometry::{EmitterArray, Vec3};
use crate::hilbert::{Basis, DensityState};
use crate::linalg::{CMatrix, SparseMatrix, ZERO};

/// Intensities below this make g²(0) undefined.
pub const INTENSITY_FLOOR: f64 = 1e-30;

/// Relative bound on the imaginary part of sums that must be real.
const REALITY_TOL: f64 = 1e-10;

/// `c_j(r) = G(r − r_j)·μ̂_j`, so that `E⁺(r) = Σ_j c_j σ⁻_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCoefficients {
    pub c: Vec<CVec3>,
}

impl FieldCoefficients {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Scalar weights `ê*·c_j` seen through a polarizer along `e`.
    pub fn project(&self, e: &CVec3) -> Vec<Complex64> {
        self.c.iter().map(|c| e.dotc(c)).collect()
    }

    fn component(&self, alpha: usize) -> Vec<Complex64> {
        self.c.iter().map(|c| c[alpha]).collect()
    }
}

pub fn field_coefficients(array: &EmitterArray, r: &Vec3) -> Result<FieldCoefficients> {
    let k0 = array.k0();
    let c = array
        .positions()
        .iter()
        .zip(array.orientations())
        .enumerate()
        .map(|(j, (p, mu))| {
            greens_tensor(&(r - p), k0)
                .map(|g| g.apply(mu))
                .map_err(|_| Error::SingularInput(format!("field point coincides with emitter {j}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldCoefficients { c })
}

/// Which field components enter g²(0).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum G2Mode {
    /// Polarization-insensitive detector, `Σ_{αβ}⟨E⁺_α E⁺_β E⁻_β E⁻_α⟩`.
    #[default]
    Total,
    /// Only the component along the (normalized) polarization vector.
    Filtered { polarization: [Complex64; 3] },
}

impl G2Mode {
    pub fn filtered(polarization: CVec3) -> Result<Self> {
        let norm = polarization.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument("filter polarization must be a nonzero finite vector".into()));
        }
        let e = polarization / Complex64::from(norm);
        Ok(G2Mode::Filtered { polarization: [e[0], e[1], e[2]] })
    }
}

/// `C_ij = ⟨σ⁺_i σ⁻_j⟩`.
pub fn correlation_matrix(state: &DensityState) -> CMatrix {
    let basis = &state.basis;
    let n = basis.n_emitters();
    let rho = &state.rho;
    let mut c = DMatrix::from_element(n, n, ZERO);
    for (s_idx, &s) in basis.states().iter().enumerate() {
        for j in (0..n).filter(|j| s >> j & 1 == 1) {
            c[(j, j)] += rho[(s_idx, s_idx)];
            let lowered = s & !(1u64 << j);
            for i in (0..n).filter(|i| lowered >> i & 1 == 0 && *i != j) {
                // same excitation number, so always inside the truncated basis
                let t_idx = basis.index_of(lowered | 1u64 << i).expect("excitation-preserving hop");
                c[(i, j)] += rho[(s_idx, t_idx)];
            }
        }
    }
    c
}

fn real_part(z: Complex64, scale: f64, what: &str) -> f64 {
    assert!(
        z.im.abs() <= REALITY_TOL * scale.max(f64::MIN_POSITIVE),
        "{what} has imaginary residue {:e} at scale {:e}",
        z.im,
        scale
    );
    z.re
}

/// `Σ_ij w_ij C_ij` for a Hermitian weight matrix, checked to be real.
fn hermitian_contraction(weights: &DMatrix<Complex64>, corr: &CMatrix, what: &str) -> f64 {
    let mut sum = ZERO;
    let mut scale = 0.0;
    for (w, c) in weights.iter().zip(corr.iter()) {
        sum += w * c;
        scale += w.norm() * c.norm();
    }
    real_part(sum, scale, what)
}

fn intensity_from_correlations(coeffs: &FieldCoefficients, corr: &CMatrix) -> f64 {
    let n = coeffs.len();
    let w = DMatrix::from_fn(n, n, |i, j| coeffs.c[i].dotc(&coeffs.c[j]));
    hermitian_contraction(&w, corr, "intensity")
}

/// `I = Σ_ij (c_i*·c_j)⟨σ⁺_i σ⁻_j⟩`.
pub fn intensity(state: &DensityState, coeffs: &FieldCoefficients) -> f64 {
    assert_eq!(coeffs.len(), state.basis.n_emitters(), "field coefficients do not match the emitter count");
    intensity_from_correlations(coeffs, &correlation_matrix(state))
}

/// `Σ_j w_j σ⁻_j` as a sparse operator.
fn field_operator(basis: &Basis, weights: &[Complex64]) -> SparseMatrix {
    let mut triplets = Vec::new();
    for (col, &s) in basis.states().iter().enumerate() {
        for (j, &w) in weights.iter().enumerate() {
            if s >> j & 1 == 1 && w != ZERO {
                let row = basis.index_of(s & !(1u64 << j)).expect("truncated basis is closed under lowering");
                triplets.push((row, col, w));
            }
        }
    }
    SparseMatrix::from_triplets(basis.dim(), basis.dim(), triplets)
}

/// `Tr(A X A†)` without forming the second product.
fn sandwich_trace(a: &SparseMatrix, x: &CMatrix) -> (Complex64, f64) {
    let y = a.mul_dense(x);
    let mut sum = ZERO;
    let mut scale = 0.0;
    for (r, c, v) in a.iter() {
        let term = y[(r, c)] * v.conj();
        sum += term;
        scale += term.norm();
    }
    (sum, scale)
}

/// Zero-delay second-order correlation at the detector described by `coeffs`.
pub fn g2_zero(state: &DensityState, coeffs: &FieldCoefficients, mode: G2Mode) -> Result<f64> {
    let basis = &state.basis;
    if coeffs.len() != basis.n_emitters() {
        return Err(Error::InvalidArgument(format!(
            "{} field coefficients for {} emitters",
            coeffs.len(),
            basis.n_emitters()
        )));
    }
    let ops: Vec<SparseMatrix> = match mode {
        G2Mode::Total => (0..3).map(|a| field_operator(basis, &coeffs.component(a))).collect(),
        G2Mode::Filtered { polarization } => {
            let e = CVec3::new(polarization[0], polarization[1], polarization[2]);
            vec![field_operator(basis, &coeffs.project(&e))]
        }
    };
    // R = Σ_α A_α ρ A_α†; numerator Σ_β Tr(A_β R A_β†), denominator (Tr R)²
    let mut r = CMatrix::zeros(basis.dim(), basis.dim());
    for a in &ops {
        r += a.sandwich(&state.rho);
    }
    let mut den = ZERO;
    let mut den_scale = 0.0;
    for i in 0..basis.dim() {
        den += r[(i, i)];
        den_scale += r[(i, i)].norm();
    }
    let den = real_part(den, den_scale, "g2 denominator");
    if !(den > INTENSITY_FLOOR) {
        return Err(Error::UndefinedCorrelation(den));
    }
    let mut num = ZERO;
    let mut num_scale = 0.0;
    for a in &ops {
        let (s, sc) = sandwich_trace(a, &r);
        num += s;
        num_scale += sc;
    }
    let num = real_part(num, num_scale, "g2 numerator");
    Ok(num.max(0.0) / (den * den))
}

/// Detector geometry for `𝒥(φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorOptions {
    /// Angular half-width of the detector.
    pub delta_phi: f64,
    /// Far-field radius (λ₀).
    pub r_far: f64,
    /// Simpson nodes across `[φ−Δφ, φ+Δφ]`, odd and ≥ 5.
    pub n_quad: usize,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        Self { delta_phi: 0.01 * PI, r_far: 100.0, n_quad: 9 }
    }
}

impl DetectorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_phi > 0.0 && self.delta_phi.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta_phi must be positive, got {}", self.delta_phi)));
        }
        if !(self.r_far > 0.0 && self.r_far.is_finite()) {
            return Err(Error::InvalidArgument(format!("r_far must be positive, got {}", self.r_far)));
        }
        if self.n_quad < 5 || self.n_quad % 2 == 0 {
            return Err(Error::InvalidArgument(format!("n_quad must be odd and at least 5, got {}", self.n_quad)));
        }
        Ok(())
    }

    /// Square-detector solid angle `(2Δφ)²`.
    pub fn solid_angle(&self) -> f64 {
        (2.0 * self.delta_phi).powi(2)
    }

    pub fn point(&self, phi: f64) -> Vec3 {
        direction(phi) * self.r_far
    }
}

/// In-plane unit vector `(sin φ, −cos φ, 0)`.
pub fn direction(phi: f64) -> Vec3 {
    Vec3::new(phi.sin(), -phi.cos(), 0.0)
}

fn detector_integral(array: &EmitterArray, corr: &CMatrix, phi: f64, det: &DetectorOptions) -> Result<f64> {
    let n = det.n_quad;
    let h = 2.0 * det.delta_phi / (n - 1) as f64;
    let mut sum = 0.0;
    for q in 0..n {
        let w = if q == 0 || q == n - 1 {
            1.0
        } else if q % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = phi - det.delta_phi + h * q as f64;
        let coeffs = field_coefficients(array, &det.point(p))?;
        sum += w * intensity_from_correlations(&coeffs, corr);
    }
    // mean over the window times ΔΩ, so 𝒥/ΔΩ → I for a point detector
    Ok(det.solid_angle() / (2.0 * det.delta_phi) * sum * h / 3.0)
}

/// `𝒥(φ)`: far-field intensity integrated over the detector window.
pub fn directional_intensity(state: &DensityState, array: &EmitterArray, phi: f64, det: &DetectorOptions) -> Result<f64> {
    det.validate()?;
    check_array(state, array)?;
    detector_integral(array, &correlation_matrix(state), phi, det)
}

fn check_array(state: &DensityState, array: &EmitterArray) -> Result<()> {
    if array.len() != state.basis.n_emitters() {
        return Err(Error::InvalidArgument(format!(
            "array has {} emitters, state has {}",
            array.len(),
            state.basis.n_emitters()
        )));
    }
    Ok(())
}

/// `Γ_out = Σ_ij Γ_ij ⟨σ⁺_i σ⁻_j⟩`.
pub fn total_emission_rate(state: &DensityState, couplings: &CouplingMatrices) -> f64 {
    let corr = correlation_matrix(state);
    assert_eq!(couplings.len(), corr.nrows(), "couplings do not match the emitter count");
    hermitian_contraction(&couplings.gamma.map(Complex64::from), &corr, "emission rate").max(0.0)
}

/// `⟨n_ex⟩ = Σ_j ⟨σ⁺_j σ⁻_j⟩`.
pub fn excited_population(state: &DensityState) -> f64 {
    let basis = &state.basis;
    (0..basis.dim()).map(|i| basis.excitations(i) as f64 * state.rho[(i, i)].re).sum()
}

/// `p_n = Tr(P_n ρ)` for `n = 0..=n_max`.
pub fn manifold_populations(state: &DensityState) -> Vec<f64> {
    let basis = &state.basis;
    (0..=basis.n_max())
        .map(|k| basis.block(k).map(|i| state.rho[(i, i)].re).sum())
        .collect()
}

/// One row of an angular scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub phi: f64,
    pub j_phi: Result<f64>,
    pub g2: Result<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularScan {
    pub points: Vec<ScanPoint>,
    /// First grid angle attaining the largest `𝒥`.
    pub argmax_phi: Option<f64>,
    pub j_max: Option<f64>,
}

impl AngularScan {
    /// `𝒥/𝒥_max` per point (NaN where `𝒥` failed).
    pub fn j_norm(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| match (&p.j_phi, self.j_max) {
                (Ok(j), Some(m)) if m > 0.0 => j / m,
                (Ok(_), _) => 0.0,
                (Err(_), _) => f64::NAN,
            })
            .collect()
    }

    pub fn at_argmax(&self) -> Option<&ScanPoint> {
        let phi = self.argmax_phi?;
        self.points.iter().find(|p| p.phi == phi)
    }
}

/// `𝒥(φ)` and g²(0) at `r_far·r̂(φ)` for every grid angle.
pub fn angular_scan(
    state: &DensityState,
    array: &EmitterArray,
    phi_grid: &[f64],
    det: &DetectorOptions,
    mode: G2Mode,
) -> Result<AngularScan> {
    if phi_grid.is_empty() {
        return Err(Error::InvalidArgument("empty angle grid".into()));
    }
    det.validate()?;
    check_array(state, array)?;
    let corr = correlation_matrix(state);
    let points: Vec<ScanPoint> = phi_grid
        .par_iter()
        .map(|&phi| ScanPoint {
            phi,
            j_phi: detector_integral(array, &corr, phi, det),
            g2: field_coefficients(array, &det.point(phi)).and_then(|c| g2_zero(state, &c, mode)),
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for p in &points {
        if let Ok(j) = p.j_phi {
            if best.is_none_or(|(_, m)| j > m) {
                best = Some((p.phi, j));
            }
        }
    }
    Ok(AngularScan { points, argmax_phi: best.map(|b| b.0), j_max: best.map(|b| b.1) })
}

/// `𝒥(φ)` alone over a grid; returns the first maximizing angle and the
/// per-angle values.
pub fn emission_profile(
    state: &DensityState,
    array: &EmitterArray,
    phi_grid: &[f64],
    det: &DetectorOptions,
) -> Result<(f64, Vec<f64>)> {
    if phi_grid.is_empty() {
        return Err(Error::InvalidArgument("empty angle grid".into()));
    }
    det.validate()?;
    check_array(state, array)?;
    let corr = correlation_matrix(state);
    let values = phi_grid
        .par_iter()
        .map(|&phi| detector_integral(array, &corr, phi, det))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &j) in values.iter().enumerate() {
        if j > values[best] {
            best = i;
        }
    }
    Ok((phi_grid[best], values))
}

/// Observables of one state at one detector angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub phi: f64,
    pub intensity: f64,
    /// `None` when the detector sees no light.
    pub g2: Option<f64>,
    pub j_phi: f64,
    pub gamma_out: f64,
    pub n_ex: f64,
    pub manifolds: Vec<f64>,
}

impl ObservableRecord {
    pub fn measure(
        state: &DensityState,
        array: &EmitterArray,
        couplings: &CouplingMatrices,
        phi: f64,
        det: &DetectorOptions,
        mode: G2Mode,
    ) -> Result<Self> {
        det.validate()?;
        check_array(state, array)?;
        let corr = correlation_matrix(state);
        let coeffs = field_coefficients(array, &det.point(phi))?;
        let g2 = match g2_zero(state, &coeffs, mode) {
            Ok(g) => Some(g),
            Err(Error::UndefinedCorrelation(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            phi,
            intensity: intensity_from_correlations(&coeffs, &corr),
            g2,
            j_phi: detector_integral(array, &corr, phi, det)?,
            gamma_out: total_emission_rate(state, couplings),
            n_ex: excited_population(state),
            manifolds: manifold_populations(state),
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::couplings::coupling_matrices;
    use crate::dynamics::{steady_state, SteadyStateOptions};
    use crate::geometry::make_chain;
    use crate::hilbert::{lowering_operator, Drive};
    use crate::linalg::{matmul, Op, ONE};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn z_chain(n: usize, d: f64) -> EmitterArray {
        make_chain(n, d, Vec3::y(), Vec3::z()).unwrap()
    }

    fn driven_steady(array: &EmitterArray, n_max: usize, rabi: f64, detuning: f64) -> DensityState {
        let basis = Arc::new(Basis::new(array.len(), n_max).unwrap());
        let couplings = coupling_matrices(array);
        let drive = Drive::linear(rabi, detuning, Vec3::y(), Vec3::z(), array.k0()).unwrap();
        steady_state(basis, array, &couplings, &drive, &SteadyStateOptions::default()).unwrap().state
    }

    #[test]
    fn single_dipole_far_field() {
        let array = z_chain(1, 0.1);
        let r = 37.25;
        let coeffs = field_coefficients(&array, &Vec3::new(r, 0.0, 0.0)).unwrap();
        let kr = 2.0 * PI * r;
        let expected = Complex64::from_polar(1.0 / (4.0 * PI * r), kr) * c(1.0 - 1.0 / (kr * kr), 1.0 / kr);
        assert_relative_eq!(coeffs.c[0][2].re, expected.re, max_relative = 1e-12);
        assert_relative_eq!(coeffs.c[0][2].im, expected.im, max_relative = 1e-12);
        assert_eq!(coeffs.c[0][0], ZERO);
        assert_eq!(coeffs.c[0][1], ZERO);
    }

    #[test]
    fn two_emitter_coefficients_match_direct_formula() {
        let d = 0.05;
        let array = make_chain(2, d, Vec3::y(), Vec3::new(1.0, 0.0, 1.0).normalize()).unwrap();
        let r = Vec3::new(100.0, 0.0, 0.0);
        let coeffs = field_coefficients(&array, &r).unwrap();
        let k = 2.0 * PI;
        for (j, (p, mu)) in array.positions().iter().zip(array.orientations()).enumerate() {
            let x = r - p;
            let dist = x.norm();
            let n = x / dist;
            // component form G_ab = e^{ikr}/(4πr)[(1 + i/kr − 1/(kr)²)δ_ab + (−1 − 3i/kr + 3/(kr)²) n_a n_b]
            let kr = k * dist;
            let pre = Complex64::from_polar(1.0 / (4.0 * PI * dist), kr);
            let a = c(1.0 - 1.0 / (kr * kr), 1.0 / kr);
            let b = c(-1.0 + 3.0 / (kr * kr), -3.0 / kr);
            let ndotmu = n.dot(mu);
            for comp in 0..3 {
                let expected = pre * (a * mu[comp] + b * n[comp] * ndotmu);
                let got = coeffs.c[j][comp];
                assert!((got - expected).norm() <= 1e-14 * pre.norm(), "emitter {j} component {comp}");
            }
        }
    }

    #[test]
    fn coefficients_of_union_concatenate() {
        let a = z_chain(2, 0.1);
        let b = make_chain(3, 0.07, Vec3::x(), Vec3::y()).unwrap();
        let ab = a.concat(&EmitterArray::new(
            b.positions().iter().map(|p| p + Vec3::new(0.0, 0.0, 1.0)).collect(),
            b.orientations().to_vec(),
        ).unwrap()).unwrap();
        let r = Vec3::new(3.0, -20.0, 1.5);
        let ca = field_coefficients(&a, &r).unwrap();
        let cab = field_coefficients(&ab, &r).unwrap();
        assert_eq!(&cab.c[..2], &ca.c[..]);
        assert_eq!(cab.len(), 5);
    }

    #[test]
    fn coefficients_at_emitter_are_singular() {
        let array = z_chain(3, 0.1);
        let err = field_coefficients(&array, &array.positions()[1]).unwrap_err();
        assert!(matches!(err, Error::SingularInput(_)));
    }

    #[test]
    fn ground_state_observables() {
        let array = z_chain(4, 0.1);
        let basis = Arc::new(Basis::new(4, 2).unwrap());
        let g = DensityState::ground(basis);
        let coeffs = field_coefficients(&array, &Vec3::new(100.0, 0.0, 0.0)).unwrap();
        assert_eq!(intensity(&g, &coeffs), 0.0);
        assert_eq!(excited_population(&g), 0.0);
        assert_eq!(manifold_populations(&g), vec![1.0, 0.0, 0.0]);
        assert_eq!(total_emission_rate(&g, &coupling_matrices(&array)), 0.0);
        assert!(matches!(g2_zero(&g, &coeffs, G2Mode::Total), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn single_emitter_intensity_and_antibunching() {
        let array = z_chain(1, 0.1);
        let state = driven_steady(&array, 1, 1.3, 0.4);
        let coeffs = field_coefficients(&array, &Vec3::new(0.0, -100.0, 0.0)).unwrap();
        let pop = state.rho[(1, 1)].re;
        assert_relative_eq!(intensity(&state, &coeffs), coeffs.c[0].norm_squared() * pop, max_relative = 1e-12);
        assert_eq!(g2_zero(&state, &coeffs, G2Mode::Total).unwrap(), 0.0);
        assert_relative_eq!(excited_population(&state), pop, max_relative = 1e-12);
    }

    #[test]
    fn fully_inverted_emission_rate() {
        let array = z_chain(4, 0.08);
        let basis = Arc::new(Basis::new(4, 4).unwrap());
        let state = DensityState::from_patterns(basis, &[(0b1111, ONE)]).unwrap();
        assert_relative_eq!(total_emission_rate(&state, &coupling_matrices(&array)), 4.0, max_relative = 1e-12);
        assert_eq!(excited_population(&state), 4.0);
    }

    #[test]
    fn correlation_matrix_matches_operator_products() {
        let array = z_chain(3, 0.1);
        let state = driven_steady(&array, 3, 2.0, 0.3);
        let corr = correlation_matrix(&state);
        let basis = &state.basis;
        for i in 0..3 {
            for j in 0..3 {
                let si = lowering_operator(basis, i).unwrap().to_dense();
                let sj = lowering_operator(basis, j).unwrap().to_dense();
                let op = matmul(&si, Op::Adjoint, &sj, Op::None);
                let expected = crate::linalg::trace(&matmul(&op, Op::None, &state.rho, Op::None));
                assert!((corr[(i, j)] - expected).norm() < 1e-14);
            }
        }
    }

    /// `Σ_{αβ} Σ_{ijkl} c_iα* c_jβ* c_kβ c_lα ⟨σ⁺_i σ⁺_j σ⁻_k σ⁻_l⟩` by explicit index sums.
    fn g2_brute_force(state: &DensityState, coeffs: &FieldCoefficients) -> f64 {
        let basis = &state.basis;
        let n = basis.n_emitters();
        let low: Vec<CMatrix> = (0..n).map(|j| lowering_operator(basis, j).unwrap().to_dense()).collect();
        let mut four = vec![ZERO; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                let up = matmul(&low[i], Op::Adjoint, &low[j], Op::Adjoint);
                for k in 0..n {
                    for l in 0..n {
                        let down = matmul(&low[k], Op::None, &low[l], Op::None);
                        let op = matmul(&up, Op::None, &down, Op::None);
                        four[((i * n + j) * n + k) * n + l] =
                            crate::linalg::trace(&matmul(&op, Op::None, &state.rho, Op::None));
                    }
                }
            }
        }
        let mut num = ZERO;
        for a in 0..3 {
            for b in 0..3 {
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            for l in 0..n {
                                num += coeffs.c[i][a].conj() * coeffs.c[j][b].conj() * coeffs.c[k][b] * coeffs.c[l][a]
                                    * four[((i * n + j) * n + k) * n + l];
                            }
                        }
                    }
                }
            }
        }
        let den = intensity(state, coeffs);
        num.re / (den * den)
    }

    #[test]
    fn g2_matches_explicit_four_point_sum() {
        let array = z_chain(3, 0.1);
        let state = driven_steady(&array, 3, 1.5, -0.5);
        for phi in [0.3, PI / 2.0, 2.0] {
            let coeffs = field_coefficients(&array, &(direction(phi) * 100.0)).unwrap();
            let fast = g2_zero(&state, &coeffs, G2Mode::Total).unwrap();
            assert_relative_eq!(fast, g2_brute_force(&state, &coeffs), max_relative = 1e-10);
        }
    }

    #[test]
    fn filtered_g2_on_only_component_equals_total() {
        let array = z_chain(3, 0.1);
        let state = driven_steady(&array, 2, 1.0, 0.0);
        let coeffs = field_coefficients(&array, &(direction(1.0) * 100.0)).unwrap();
        // ẑ dipoles in the xy plane radiate only ẑ-polarized light
        let total = g2_zero(&state, &coeffs, G2Mode::Total).unwrap();
        let mode = G2Mode::filtered(CVec3::new(ZERO, ZERO, c(0.0, 2.0))).unwrap();
        assert_relative_eq!(g2_zero(&state, &coeffs, mode).unwrap(), total, max_relative = 1e-12);
        let cross = G2Mode::filtered(CVec3::new(ONE, ZERO, ZERO)).unwrap();
        assert!(matches!(g2_zero(&state, &coeffs, cross), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn point_detector_limit() {
        let array = z_chain(4, 0.1);
        let state = driven_steady(&array, 2, 1.0, 0.2);
        let phi = 1.1;
        let det = DetectorOptions { delta_phi: 1e-5, ..Default::default() };
        let j = directional_intensity(&state, &array, phi, &det).unwrap();
        let i = intensity(&state, &field_coefficients(&array, &det.point(phi)).unwrap());
        assert_relative_eq!(j / det.solid_angle(), i, max_relative = 1e-6);
    }

    #[test]
    fn detector_validation() {
        for det in [
            DetectorOptions { n_quad: 4, ..Default::default() },
            DetectorOptions { n_quad: 3, ..Default::default() },
            DetectorOptions { delta_phi: 0.0, ..Default::default() },
            DetectorOptions { r_far: -1.0, ..Default::default() },
        ] {
            assert!(det.validate().is_err());
        }
    }

    #[test]
    fn single_emitter_scan_is_flat() {
        let array = z_chain(1, 0.1);
        let state = driven_steady(&array, 1, 1.0, 0.0);
        let grid: Vec<f64> = (0..21).map(|i| -PI + 0.1 * PI * i as f64).collect();
        let scan = angular_scan(&state, &array, &grid, &DetectorOptions::default(), G2Mode::Total).unwrap();
        for v in scan.j_norm() {
            assert!((v - 1.0).abs() < 1e-9);
        }
        assert!(scan.points.iter().all(|p| p.g2 == Ok(0.0)));
    }

    #[test]
    fn chain_scan_is_mirror_symmetric() {
        let array = z_chain(6, 0.1);
        let detuning = crate::eigenmodes::target_detuning(&coupling_matrices(&array), crate::eigenmodes::Selection::MostSuperradiant).unwrap();
        let state = driven_steady(&array, 2, 1.0, detuning);
        let grid: Vec<f64> = (0..=40).map(|i| -PI + 0.05 * PI * i as f64).collect();
        let scan = angular_scan(&state, &array, &grid, &DetectorOptions::default(), G2Mode::Total).unwrap();
        let js: Vec<f64> = scan.points.iter().map(|p| *p.j_phi.as_ref().unwrap()).collect();
        for (a, b) in js.iter().zip(js.iter().rev()) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()));
        }
        let best = scan.argmax_phi.unwrap();
        let mirror = scan.points.iter().find(|p| (p.phi + best).abs() < 1e-12).unwrap();
        assert!((mirror.j_phi.as_ref().unwrap() - scan.j_max.unwrap()).abs() <= 1e-8 * scan.j_max.unwrap());
        assert!(scan.at_argmax().is_some());

        let (phi, profile) = emission_profile(&state, &array, &grid, &DetectorOptions::default()).unwrap();
        assert_eq!(phi, best);
        assert_eq!(profile, js);
    }

    #[test]
    fn scan_records_errors_per_point() {
        let array = z_chain(2, 0.1);
        let basis = Arc::new(Basis::new(2, 2).unwrap());
        let g = DensityState::ground(basis);
        let scan = angular_scan(&g, &array, &[0.0, 1.0], &DetectorOptions::default(), G2Mode::Total).unwrap();
        assert_eq!(scan.points.len(), 2);
        assert!(scan.points.iter().all(|p| p.j_phi == Ok(0.0) && p.g2.is_err()));
        assert!(angular_scan(&g, &array, &[], &DetectorOptions::default(), G2Mode::Total).is_err());
    }

    #[test]
    fn record_fields_are_consistent() {
        let array = z_chain(3, 0.1);
        let couplings = coupling_matrices(&array);
        let state = driven_steady(&array, 2, 1.0, 0.0);
        let rec = ObservableRecord::measure(&state, &array, &couplings, PI / 2.0, &DetectorOptions::default(), G2Mode::Total)
            .unwrap();
        assert!((rec.manifolds.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(rec.n_ex >= 0.0 && rec.n_ex <= 3.0);
        assert!(rec.g2.unwrap() >= 0.0);
        assert!(rec.gamma_out > 0.0 && rec.intensity > 0.0 && rec.j_phi > 0.0);
    }

    #[test]
    fn extended_array_g2_converges_inverse_in_radius() {
        let array = z_chain(8, 0.05);
        let state = driven_steady(&array, 2, 1.0, 0.0);
        let g = |r: f64| g2_zero(&state, &field_coefficients(&array, &(direction(1.2) * r)).unwrap(), G2Mode::Total).unwrap();
        let (g1, g2, g3) = (g(100.0), g(1000.0), g(10000.0));
        let ratio = (g1 - g2).abs() / (g2 - g3).abs();
        assert!((7.0..14.0).contains(&ratio), "discrepancy ratio {ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn far_field_radius_independence(n in 2usize..4, d in 0.002f64..0.01, rabi in 0.2f64..3.0, phi in -3.0f64..3.0) {
            let array = z_chain(n, d);
            let state = driven_steady(&array, 2, rabi, 0.0);
            let near = field_coefficients(&array, &(direction(phi) * 100.0)).unwrap();
            let far = field_coefficients(&array, &(direction(phi) * 1000.0)).unwrap();
            let (g_near, g_far) = (g2_zero(&state, &near, G2Mode::Total).unwrap(), g2_zero(&state, &far, G2Mode::Total).unwrap());
            prop_assert!((g_near - g_far).abs() <= 1e-6 * g_far.abs().max(1.0));
            let ratio = intensity(&state, &near) / intensity(&state, &far);
            prop_assert!((ratio / 100.0 - 1.0).abs() <= 1e-4);
        }

        #[test]
        fn populations_are_normalized(n in 1usize..5, d in 0.05f64..0.3, rabi in 0.1f64..5.0, detuning in -2.0f64..2.0) {
            let array = z_chain(n, d);
            let state = driven_steady(&array, n.min(2), rabi, detuning);
            let p = manifold_populations(&state);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let n_ex = excited_population(&state);
            prop_assert!(n_ex >= -1e-12 && n_ex <= n as f64);
            let weighted: f64 = p.iter().enumerate().map(|(k, pk)| k as f64 * pk).sum();
            prop_assert!((weighted - n_ex).abs() < 1e-12);
        }
    }
}
