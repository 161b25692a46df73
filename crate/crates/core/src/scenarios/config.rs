//! Declarative scenario description. Rates are in Γ₀, lengths in λ₀, times
//! in 1/Γ₀.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::couplings::{coupling_matrices, CVec3, CouplingMatrices};
use crate::dynamics::{EvolveOptions, SteadyStateMethod, SteadyStateOptions};
use crate::eigenmodes::{target_detuning, Selection};
use crate::error::{Error, Result};
use crate::geometry::{make_chain, make_ring, make_ring_pair, EmitterArray, Vec3};
use crate::hilbert::{truncated_dimension, Drive, Pulse, DEFAULT_MAX_DIM};
use crate::observables::{DetectorOptions, G2Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    ChainSteady,
    ChainStatistics,
    PulseSubradiant,
    RingPair,
    TiltedPolarization,
    DisorderSweep,
    ModelComparison,
    Dispersion,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::ChainSteady,
        Preset::ChainStatistics,
        Preset::PulseSubradiant,
        Preset::RingPair,
        Preset::TiltedPolarization,
        Preset::DisorderSweep,
        Preset::ModelComparison,
        Preset::Dispersion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::ChainSteady => "chain_steady",
            Preset::ChainStatistics => "chain_statistics",
            Preset::PulseSubradiant => "pulse_subradiant",
            Preset::RingPair => "ring_pair",
            Preset::TiltedPolarization => "tilted_polarization",
            Preset::DisorderSweep => "disorder_sweep",
            Preset::ModelComparison => "model_comparison",
            Preset::Dispersion => "dispersion",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

fn default_preset() -> String {
    Preset::ChainSteady.name().into()
}

fn default_n_max() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_preset")]
    pub preset: String,
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub drive: DriveSpec,
    /// Excitation truncation; capped at the emitter count.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder: Option<DisorderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<DispersionSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn y_axis() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_separation() -> f64 {
    0.7
}

fn default_tilt() -> f64 {
    PI / 4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Chain {
        n: usize,
        d: f64,
        #[serde(default = "y_axis")]
        axis: [f64; 3],
        #[serde(default = "z_axis")]
        orientation: [f64; 3],
    },
    Ring {
        n: usize,
        d: f64,
        #[serde(default = "z_axis")]
        normal: [f64; 3],
        #[serde(default = "z_axis")]
        orientation: [f64; 3],
    },
    /// Driven ring first, undriven ring second.
    RingPair {
        n_driven: usize,
        n_undriven: usize,
        d: f64,
        #[serde(default = "default_separation")]
        center_separation: f64,
        #[serde(default = "default_tilt")]
        tilt_angle: f64,
        /// x component added to the driven ring's ẑ dipoles.
        #[serde(default)]
        orientation_tilt_x: f64,
    },
}

impl GeometrySpec {
    pub fn len(&self) -> usize {
        match *self {
            GeometrySpec::Chain { n, .. } | GeometrySpec::Ring { n, .. } => n,
            GeometrySpec::RingPair { n_driven, n_undriven, .. } => n_driven + n_undriven,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        match *self {
            GeometrySpec::Chain { d, .. } | GeometrySpec::Ring { d, .. } | GeometrySpec::RingPair { d, .. } => d,
        }
    }

    /// Indices of the ring the laser is meant to address (all emitters for
    /// single structures).
    pub fn driven(&self) -> Vec<usize> {
        match *self {
            GeometrySpec::RingPair { n_driven, .. } => (0..n_driven).collect(),
            _ => (0..self.len()).collect(),
        }
    }

    pub fn build(&self) -> Result<EmitterArray> {
        match *self {
            GeometrySpec::Chain { n, d, axis, orientation } => make_chain(n, d, vec3(axis), vec3(orientation)),
            GeometrySpec::Ring { n, d, normal, orientation } => make_ring(n, d, vec3(normal), vec3(orientation)),
            GeometrySpec::RingPair { n_driven, n_undriven, d, center_separation, tilt_angle, orientation_tilt_x } => {
                Ok(make_ring_pair(n_driven, n_undriven, d, center_separation, tilt_angle, orientation_tilt_x)?.array)
            }
        }
    }
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

/// Complex 3-vectors are written as `[[re, im], [re, im], [re, im]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolarizationSpec {
    Real([f64; 3]),
    Complex([[f64; 2]; 3]),
}

impl PolarizationSpec {
    pub fn to_vector(self) -> CVec3 {
        match self {
            PolarizationSpec::Real(v) => CVec3::new(v[0].into(), v[1].into(), v[2].into()),
            PolarizationSpec::Complex(v) => CVec3::new(
                Complex64::new(v[0][0], v[0][1]),
                Complex64::new(v[1][0], v[1][1]),
                Complex64::new(v[2][0], v[2][1]),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsystem {
    #[default]
    All,
    /// The driven ring of a ring pair.
    Driven,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetuningSpec {
    Value(f64),
    Target(ModeTarget),
}

/// Resonance with a collective single-excitation mode, plus `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTarget {
    pub target: Selection,
    #[serde(default)]
    pub subsystem: Subsystem,
    #[serde(default)]
    pub offset: f64,
}

impl Default for DetuningSpec {
    fn default() -> Self {
        DetuningSpec::Target(ModeTarget { target: Selection::MostSuperradiant, subsystem: Subsystem::All, offset: 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    #[default]
    #[serde(skip)]
    Unset,
    Named(Subsystem),
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    /// Peak drive rate Ω̃.
    pub amplitude: f64,
    /// Envelope centre t₀.
    pub center: f64,
    /// τ in `exp(−(t − t₀)²/τ²)`.
    pub width: f64,
}

fn default_rabi() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSpec {
    /// Ω_p, the coefficient of `(e^{−ik·r}σ⁺ + h.c.)` in the Hamiltonian.
    #[serde(default = "default_rabi")]
    pub rabi: f64,
    #[serde(default)]
    pub detuning: DetuningSpec,
    /// Propagation direction of the plane wave.
    #[serde(default = "y_axis")]
    pub direction: [f64; 3],
    #[serde(default = "default_polarization")]
    pub polarization: PolarizationSpec,
    /// Emitters the laser reaches; all of them when unset.
    #[serde(default, skip_serializing_if = "is_unset")]
    pub targets: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseSpec>,
}

fn is_unset(t: &TargetSpec) -> bool {
    *t == TargetSpec::Unset
}

fn default_polarization() -> PolarizationSpec {
    PolarizationSpec::Real(z_axis())
}

impl Default for DriveSpec {
    fn default() -> Self {
        Self {
            rabi: default_rabi(),
            detuning: DetuningSpec::default(),
            direction: y_axis(),
            polarization: default_polarization(),
            targets: TargetSpec::Unset,
            pulse: None,
        }
    }
}

fn default_phi_points() -> usize {
    201
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    #[serde(default = "minus_pi")]
    pub phi_start: f64,
    #[serde(default = "plus_pi")]
    pub phi_stop: f64,
    /// Grid points including both ends.
    #[serde(default = "default_phi_points")]
    pub phi_points: usize,
    #[serde(default = "default_delta_phi")]
    pub delta_phi: f64,
    #[serde(default = "default_r_far")]
    pub r_far: f64,
    #[serde(default = "default_n_quad")]
    pub n_quad: usize,
    #[serde(default)]
    pub g2_mode: G2ModeSpec,
}

fn minus_pi() -> f64 {
    -PI
}

fn plus_pi() -> f64 {
    PI
}

fn default_delta_phi() -> f64 {
    DetectorOptions::default().delta_phi
}

fn default_r_far() -> f64 {
    DetectorOptions::default().r_far
}

fn default_n_quad() -> usize {
    DetectorOptions::default().n_quad
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            phi_start: -PI,
            phi_stop: PI,
            phi_points: default_phi_points(),
            delta_phi: default_delta_phi(),
            r_far: default_r_far(),
            n_quad: default_n_quad(),
            g2_mode: G2ModeSpec::default(),
        }
    }
}

impl DetectorSpec {
    pub fn options(&self) -> DetectorOptions {
        DetectorOptions { delta_phi: self.delta_phi, r_far: self.r_far, n_quad: self.n_quad }
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.phi_points == 1 {
            return vec![self.phi_start];
        }
        let span = self.phi_stop - self.phi_start;
        let last = (self.phi_points - 1) as f64;
        (0..self.phi_points).map(|i| self.phi_start + span * i as f64 / last).collect()
    }
}

/// `"total"` or `{"filtered": <polarization>}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum G2ModeSpec {
    #[default]
    Total,
    Filtered(PolarizationSpec),
}

impl G2ModeSpec {
    pub fn mode(&self) -> Result<G2Mode> {
        match *self {
            G2ModeSpec::Total => Ok(G2Mode::Total),
            G2ModeSpec::Filtered(p) => G2Mode::filtered(p.to_vector()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Emitter count (per ring for ring pairs).
    N,
    /// Undriven-ring emitter count.
    NUndriven,
    D,
    Rabi,
    /// Fixed detuning, replacing any mode targeting.
    Detuning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalars {
    One(f64),
    Many(Vec<f64>),
}

impl Scalars {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Scalars::One(x) => vec![*x],
            Scalars::Many(v) => v.clone(),
        }
    }
}

fn default_realizations() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSpec {
    /// Displacement bound(s) in units of `d`.
    pub epsilon: Scalars,
    #[serde(default = "default_realizations")]
    pub n_realizations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_t_end() -> f64 {
    150.0
}

fn default_samples() -> usize {
    151
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSpec {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Evenly spaced samples on `[0, t_end]`, both ends included.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for EvolutionSpec {
    fn default() -> Self {
        Self { t_end: default_t_end(), samples: default_samples() }
    }
}

impl EvolutionSpec {
    pub fn times(&self) -> Vec<f64> {
        if self.samples <= 1 {
            return vec![self.t_end];
        }
        let last = (self.samples - 1) as f64;
        (0..self.samples).map(|i| self.t_end * i as f64 / last).collect()
    }
}

fn default_k_points() -> usize {
    201
}

/// Wavenumber grid of the infinite-chain curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionSpec {
    /// Evenly spaced points on `[0, π/d]`.
    #[serde(default = "default_k_points")]
    pub k_points: usize,
    /// Explicit `k_y/k₀` values, replacing the even grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_over_k0: Option<Vec<f64>>,
}

impl Default for DispersionSpec {
    fn default() -> Self {
        Self { k_points: default_k_points(), k_over_k0: None }
    }
}

impl DispersionSpec {
    pub fn wavenumbers(&self, d: f64, k0: f64) -> Vec<f64> {
        match &self.k_over_k0 {
            Some(v) => v.iter().map(|x| x * k0).collect(),
            None if self.k_points == 1 => vec![0.0],
            None => (0..self.k_points).map(|i| PI / d * i as f64 / (self.k_points - 1) as f64).collect(),
        }
    }
}

fn default_method() -> SteadyStateMethod {
    SteadyStateMethod::Krylov
}

fn default_rel_tol() -> f64 {
    EvolveOptions::default().rel_tol
}

fn default_abs_tol() -> f64 {
    EvolveOptions::default().abs_tol
}

fn default_max_dim() -> usize {
    DEFAULT_MAX_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_method")]
    pub steady_method: SteadyStateMethod,
    /// Bound on `‖dρ/dt‖_F`; defaults to `1e-10·D`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_tol: Option<f64>,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    /// Hilbert-space dimension budget.
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            steady_method: default_method(),
            steady_tol: None,
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_dim: default_max_dim(),
        }
    }
}

impl Tolerances {
    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions { rel_tol: self.rel_tol, abs_tol: self.abs_tol, ..Default::default() }
    }

    pub fn steady_options(&self) -> SteadyStateOptions {
        SteadyStateOptions {
            tol: self.steady_tol,
            integration: self.evolve_options(),
            ..SteadyStateOptions::with_method(self.steady_method)
        }
    }
}

/// Largest emitter count the full (untruncated) comparison model accepts.
pub const FULL_MODEL_MAX_N: usize = 6;

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {x}")))
    }
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {x}")))
    }
}

impl ScenarioConfig {
    pub fn preset(&self) -> Result<Preset> {
        self.preset.parse()
    }

    /// Checks every field against the preconditions of the modules it feeds.
    pub fn validate(&self) -> Result<()> {
        let preset = self.preset()?;
        match self.geometry {
            GeometrySpec::Chain { n, d, .. } | GeometrySpec::Ring { n, d, .. } => {
                if n == 0 {
                    return Err(Error::InvalidArgument("geometry.n must be at least 1".into()));
                }
                positive("geometry.d", d)?;
            }
            GeometrySpec::RingPair { n_driven, n_undriven, d, center_separation, tilt_angle, orientation_tilt_x } => {
                if n_driven < 2 || n_undriven < 2 {
                    return Err(Error::InvalidArgument("each ring needs at least 2 emitters".into()));
                }
                positive("geometry.d", d)?;
                positive("geometry.center_separation", center_separation)?;
                finite("geometry.tilt_angle", tilt_angle)?;
                finite("geometry.orientation_tilt_x", orientation_tilt_x)?;
            }
        }
        if self.n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be at least 1".into()));
        }
        finite("drive.rabi", self.drive.rabi)?;
        if let DetuningSpec::Value(x) = self.drive.detuning {
            finite("drive.detuning", x)?;
        }
        if let DetuningSpec::Target(ModeTarget { subsystem: Subsystem::Driven, .. }) = self.drive.detuning {
            if !matches!(self.geometry, GeometrySpec::RingPair { .. }) {
                return Err(Error::InvalidArgument("drive.detuning.subsystem `driven` needs a ring_pair geometry".into()));
            }
        }
        if let TargetSpec::Named(Subsystem::Driven) = self.drive.targets {
            if !matches!(self.geometry, GeometrySpec::RingPair { .. }) {
                return Err(Error::InvalidArgument("drive.targets `driven` needs a ring_pair geometry".into()));
            }
        }
        if let Some(p) = &self.drive.pulse {
            finite("drive.pulse.amplitude", p.amplitude)?;
            finite("drive.pulse.center", p.center)?;
            positive("drive.pulse.width", p.width)?;
        }
        self.detector.options().validate()?;
        if self.detector.phi_points == 0 {
            return Err(Error::InvalidArgument("detector.phi_points must be at least 1".into()));
        }
        finite("detector.phi_start", self.detector.phi_start)?;
        finite("detector.phi_stop", self.detector.phi_stop)?;
        self.detector.g2_mode.mode()?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::InvalidArgument("sweep.values must not be empty".into()));
            }
            for &v in &s.values {
                finite("sweep value", v)?;
                if matches!(s.variable, SweepVariable::N | SweepVariable::NUndriven) && (v < 1.0 || v.fract() != 0.0) {
                    return Err(Error::InvalidArgument(format!("sweep over emitter counts needs positive integers, got {v}")));
                }
            }
            if s.variable == SweepVariable::NUndriven && !matches!(self.geometry, GeometrySpec::RingPair { .. }) {
                return Err(Error::InvalidArgument("sweep variable n_undriven needs a ring_pair geometry".into()));
            }
        }
        if let Some(dis) = &self.disorder {
            for e in dis.epsilon.values() {
                if !(e >= 0.0 && e.is_finite()) {
                    return Err(Error::InvalidArgument(format!("disorder.epsilon must be >= 0, got {e}")));
                }
            }
            if dis.n_realizations == 0 {
                return Err(Error::InvalidArgument("disorder.n_realizations must be at least 1".into()));
            }
            if dis.seed.is_none() {
                return Err(Error::InvalidArgument("disorder.seed is required when disorder is present".into()));
            }
        }
        if let Some(ds) = &self.dispersion {
            if ds.k_over_k0.as_ref().map_or(ds.k_points == 0, |v| v.is_empty()) {
                return Err(Error::InvalidArgument("dispersion grid must not be empty".into()));
            }
        }
        if let Some(ev) = &self.evolution {
            positive("evolution.t_end", ev.t_end)?;
        }
        let t = &self.tolerances;
        positive("tolerances.rel_tol", t.rel_tol)?;
        positive("tolerances.abs_tol", t.abs_tol)?;
        if let Some(tol) = t.steady_tol {
            positive("tolerances.steady_tol", tol)?;
        }

        match preset {
            Preset::PulseSubradiant if self.drive.pulse.is_none() => {
                return Err(Error::InvalidArgument("pulse_subradiant needs drive.pulse".into()));
            }
            Preset::RingPair | Preset::TiltedPolarization if !matches!(self.geometry, GeometrySpec::RingPair { .. }) => {
                return Err(Error::InvalidArgument(format!("{preset} needs a ring_pair geometry")));
            }
            Preset::Dispersion if !matches!(self.geometry, GeometrySpec::Chain { .. }) => {
                return Err(Error::InvalidArgument("dispersion needs a chain geometry".into()));
            }
            Preset::DisorderSweep if self.disorder.is_none() => {
                return Err(Error::InvalidArgument("disorder_sweep needs a disorder block".into()));
            }
            Preset::ModelComparison => {
                let largest = self.points().iter().map(|c| c.geometry.len()).max().unwrap_or(0);
                if largest > FULL_MODEL_MAX_N {
                    return Err(Error::ResourceLimit {
                        what: "full-model comparison emitter count".into(),
                        requested: largest,
                        budget: FULL_MODEL_MAX_N,
                    });
                }
            }
            _ => {}
        }
        if preset != Preset::Dispersion {
            for point in self.points() {
                let n = point.geometry.len();
                let n_max = point.n_max.min(n);
                let dim = truncated_dimension(n, n_max);
                if dim > t.max_dim {
                    return Err(Error::ResourceLimit {
                        what: format!("Hilbert space for N={n}, n_max={n_max}"),
                        requested: dim,
                        budget: t.max_dim,
                    });
                }
            }
        }
        Ok(())
    }

    /// The configuration at one sweep value.
    pub fn at(&self, variable: SweepVariable, value: f64) -> ScenarioConfig {
        let mut c = self.clone();
        c.sweep = None;
        let count = value as usize;
        match (variable, &mut c.geometry) {
            (SweepVariable::N, GeometrySpec::Chain { n, .. } | GeometrySpec::Ring { n, .. }) => *n = count,
            (SweepVariable::N, GeometrySpec::RingPair { n_driven, n_undriven, .. }) => {
                *n_driven = count;
                *n_undriven = count;
            }
            (SweepVariable::NUndriven, GeometrySpec::RingPair { n_undriven, .. }) => *n_undriven = count,
            (SweepVariable::D, GeometrySpec::Chain { d, .. } | GeometrySpec::Ring { d, .. } | GeometrySpec::RingPair { d, .. }) => {
                *d = value
            }
            (SweepVariable::Rabi, _) => {
                c.drive.rabi = value;
                if let Some(p) = &mut c.drive.pulse {
                    p.amplitude = value;
                }
            }
            (SweepVariable::Detuning, _) => c.drive.detuning = DetuningSpec::Value(value),
            _ => {}
        }
        c
    }

    /// One configuration per sweep value (or just `self`).
    pub fn points(&self) -> Vec<ScenarioConfig> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| self.at(s.variable, v)).collect(),
            None => vec![self.clone()],
        }
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        match &self.sweep {
            Some(s) => s.values.clone(),
            None => vec![f64::NAN],
        }
    }
}

/// Everything needed to simulate one configuration point.
#[derive(Debug, Clone)]
pub struct Setup {
    pub array: EmitterArray,
    pub couplings: CouplingMatrices,
    pub drive: Drive,
    pub n_max: usize,
}

impl ScenarioConfig {
    pub fn detuning_for(&self, couplings: &CouplingMatrices) -> Result<f64> {
        match self.drive.detuning {
            DetuningSpec::Value(x) => Ok(x),
            DetuningSpec::Target(ModeTarget { target, subsystem, offset }) => {
                let sub = match subsystem {
                    Subsystem::All => couplings.clone(),
                    Subsystem::Driven => couplings.subset(&self.geometry.driven()),
                };
                Ok(target_detuning(&sub, target)? + offset)
            }
        }
    }

    /// Builds the array and drive; `detuning` overrides the configured one.
    pub fn setup_with(&self, array: EmitterArray, detuning: Option<f64>) -> Result<Setup> {
        let couplings = coupling_matrices(&array);
        let detuning = match detuning {
            Some(x) => x,
            None => self.detuning_for(&couplings)?,
        };
        let spec = &self.drive;
        let pol = spec.polarization.to_vector();
        let norm = pol.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("drive.polarization must be non-zero".into()));
        }
        let k = vec3(spec.direction);
        if !(k.norm() > 0.0) {
            return Err(Error::InvalidArgument("drive.direction must be non-zero".into()));
        }
        let mut drive = Drive::new(spec.rabi, detuning, k.normalize() * array.k0(), pol / Complex64::from(norm))?;
        if let Some(p) = spec.pulse {
            drive = drive.with_pulse(Pulse { amplitude: p.amplitude, center: p.center, width: p.width })?;
        }
        match &spec.targets {
            TargetSpec::Unset | TargetSpec::Named(Subsystem::All) => {}
            TargetSpec::Named(Subsystem::Driven) => drive = drive.with_targets(self.geometry.driven()),
            TargetSpec::Indices(ix) => drive = drive.with_targets(ix.clone()),
        }
        Ok(Setup { n_max: self.n_max.min(array.len()), array, couplings, drive })
    }

    pub fn setup(&self) -> Result<Setup> {
        self.setup_with(self.geometry.build()?, None)
    }
}
