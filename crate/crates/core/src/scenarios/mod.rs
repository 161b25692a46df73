//! Preset experiments: steady-state angular scans, manifold statistics, pulsed
//! preparation, ring pairs, disorder averages, truncation checks and the chain
//! dispersion.

mod comparison;
mod config;
mod disorder;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use log::{info, warn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use comparison::{model_comparison, ComparisonRow, ModelSnapshot};
pub use config::*;
pub use disorder::{disorder_average, pairwise_sum, DisorderCell, Moments, Realization};

use crate::dynamics::{evolve, steady_state, SteadyStateReport};
use crate::eigenmodes::{assign_standing_wave, chain_dispersion, effective_modes, DispersionOptions};
use crate::error::{Error, Result};
use crate::geometry::{EmitterArray, Vec3};
use crate::hilbert::{Basis, DensityState, LindbladGenerator};
use crate::observables::{
    angular_scan, excited_population, manifold_populations, total_emission_rate, AngularScan, ObservableRecord,
};

/// Rectangular numeric output; one CSV per table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<String>) -> Self {
        Self { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn manifold_names(prefix: &str, n_max: usize, suffix: &str) -> Vec<String> {
    (0..=n_max).map(|k| format!("{prefix}{k}{suffix}")).collect()
}

/// Populations padded with zeros up to manifold `n_max`.
fn padded(p: &[f64], n_max: usize) -> Vec<f64> {
    (0..=n_max).map(|k| p.get(k).copied().unwrap_or(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledRecord {
    pub label: String,
    /// Sweep value, NaN without a sweep.
    pub value: f64,
    pub record: ObservableRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutput {
    pub preset: String,
    pub records: Vec<LabelledRecord>,
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, f64>,
    /// Base seeds the run consumed.
    pub seeds: Vec<u64>,
}

impl ScenarioOutput {
    fn new(preset: Preset) -> Self {
        Self { preset: preset.name().into(), records: Vec::new(), tables: Vec::new(), summary: BTreeMap::new(), seeds: Vec::new() }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Steady state of one configuration point plus its angular scan.
#[derive(Debug, Clone)]
pub struct SteadyPoint {
    pub setup: Setup,
    pub report: SteadyStateReport,
    pub scan: AngularScan,
    /// Observables at the emission maximum.
    pub record: ObservableRecord,
}

fn with_context(err: Error, what: &str) -> Error {
    match err {
        Error::ResourceLimit { what: inner, requested, budget } => {
            Error::ResourceLimit { what: format!("{what}: {inner}"), requested, budget }
        }
        Error::Convergence { context, iterations, residual } => {
            Error::Convergence { context: format!("{what}: {context}"), iterations, residual }
        }
        other => other,
    }
}

pub(crate) fn steady_for(cfg: &ScenarioConfig, setup: &Setup) -> Result<SteadyStateReport> {
    let n = setup.array.len();
    let basis = Arc::new(Basis::with_budget(n, setup.n_max, cfg.tolerances.max_dim)?);
    steady_state(basis, &setup.array, &setup.couplings, &setup.drive, &cfg.tolerances.steady_options())
}

/// Steady state on `array`, with the detuning overridden when given.
pub fn steady_point(cfg: &ScenarioConfig, array: EmitterArray, detuning: Option<f64>) -> Result<SteadyPoint> {
    let setup = cfg.setup_with(array, detuning)?;
    let report = steady_for(cfg, &setup)?;
    let det = cfg.detector.options();
    let mode = cfg.detector.g2_mode.mode()?;
    let scan = angular_scan(&report.state, &setup.array, &cfg.detector.grid(), &det, mode)?;
    let phi = scan
        .argmax_phi
        .ok_or_else(|| Error::Numeric("directional intensity failed at every grid angle".into()))?;
    let record = ObservableRecord::measure(&report.state, &setup.array, &setup.couplings, phi, &det, mode)?;
    Ok(SteadyPoint { setup, report, scan, record })
}

/// Runs one preset end to end.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let preset = cfg.preset()?;
    info!("running preset {preset}");
    let out = match preset {
        Preset::ChainSteady | Preset::RingPair | Preset::TiltedPolarization => steady_scan(cfg, preset)?,
        Preset::ChainStatistics => chain_statistics(cfg)?,
        Preset::PulseSubradiant => pulse(cfg)?,
        Preset::DisorderSweep => disorder_sweep(cfg)?,
        Preset::ModelComparison => comparison_table(cfg)?,
        Preset::Dispersion => dispersion(cfg)?,
    };
    Ok(out)
}

fn label(cfg: &ScenarioConfig, value: f64) -> String {
    match &cfg.sweep {
        Some(s) => format!("{}={value}", serde_variable(s.variable)),
        None => "point".into(),
    }
}

fn serde_variable(v: SweepVariable) -> &'static str {
    match v {
        SweepVariable::N => "n",
        SweepVariable::NUndriven => "n_undriven",
        SweepVariable::D => "d",
        SweepVariable::Rabi => "rabi",
        SweepVariable::Detuning => "detuning",
    }
}

/// Solves every sweep point, in parallel.
fn solve_points(cfg: &ScenarioConfig) -> Result<Vec<(f64, SteadyPoint)>> {
    let values = cfg.sweep_values();
    let points = cfg.points();
    values
        .par_iter()
        .zip(points.par_iter())
        .map(|(&v, p)| {
            let array = p.geometry.build()?;
            steady_point(p, array, None).map(|s| (v, s)).map_err(|e| with_context(e, &label(cfg, v)))
        })
        .collect()
}

fn record_columns(n_max: usize) -> Vec<String> {
    let mut c = names(&["value", "detuning", "phi_max", "j_max", "j_max_over_gamma_out", "gamma_out", "n_ex", "g2"]);
    c.extend(manifold_names("p", n_max, ""));
    c
}

fn record_row(value: f64, p: &SteadyPoint, n_max: usize) -> Vec<f64> {
    let r = &p.record;
    let mut row = vec![
        value,
        p.setup.drive.detuning,
        r.phi,
        r.j_phi,
        r.j_phi / r.gamma_out,
        r.gamma_out,
        r.n_ex,
        r.g2.unwrap_or(f64::NAN),
    ];
    row.extend(padded(&r.manifolds, n_max));
    row
}

fn scan_rows(table: &mut Table, value: Option<f64>, scan: &AngularScan) {
    for (p, j) in scan.points.iter().zip(scan.j_norm()) {
        let mut row = value.map(|v| vec![v]).unwrap_or_default();
        row.extend([p.phi, j, p.g2.as_ref().copied().unwrap_or(f64::NAN)]);
        table.push(row);
    }
}

fn summarize_point(out: &mut ScenarioOutput, p: &SteadyPoint) {
    let r = &p.record;
    let s = &mut out.summary;
    s.insert("detuning".into(), p.setup.drive.detuning);
    s.insert("phi_max".into(), r.phi);
    s.insert("j_max".into(), r.j_phi);
    s.insert("gamma_out".into(), r.gamma_out);
    s.insert("n_ex".into(), r.n_ex);
    s.insert("g2_at_max".into(), r.g2.unwrap_or(f64::NAN));
    s.insert("steady_residual".into(), p.report.residual);
    s.insert("dimension".into(), p.report.state.dim() as f64);
}

fn steady_scan(cfg: &ScenarioConfig, preset: Preset) -> Result<ScenarioOutput> {
    let mut out = ScenarioOutput::new(preset);
    let solved = solve_points(cfg)?;
    let swept = cfg.sweep.is_some();
    let mut scan = if swept {
        Table::new("angular_scan_sweep", names(&["value", "phi", "j_norm", "g2"]))
    } else {
        Table::new("angular_scan", names(&["phi", "j_norm", "g2"]))
    };
    let mut records = Table::new("records", record_columns(cfg.n_max));
    for (v, p) in &solved {
        scan_rows(&mut scan, swept.then_some(*v), &p.scan);
        records.push(record_row(*v, p, cfg.n_max));
        out.records.push(LabelledRecord { label: label(cfg, *v), value: *v, record: p.record.clone() });
    }
    if let [(_, only)] = solved.as_slice() {
        summarize_point(&mut out, only);
    }
    out.tables.push(scan);
    out.tables.push(records);
    Ok(out)
}

fn chain_statistics(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let mut out = ScenarioOutput::new(Preset::ChainStatistics);
    let solved = solve_points(cfg)?;
    let mut stats = Table::new("statistics", record_columns(cfg.n_max));
    let mut manifolds = Table::new("manifolds", names(&["value", "manifold", "population"]));
    for (v, p) in &solved {
        stats.push(record_row(*v, p, cfg.n_max));
        for (k, pk) in padded(&p.record.manifolds, cfg.n_max).into_iter().enumerate() {
            manifolds.push(vec![*v, k as f64, pk]);
        }
        out.records.push(LabelledRecord { label: label(cfg, *v), value: *v, record: p.record.clone() });
    }
    if let [(_, only)] = solved.as_slice() {
        summarize_point(&mut out, only);
    }
    out.tables.push(stats);
    out.tables.push(manifolds);
    Ok(out)
}

fn pulse(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let mut out = ScenarioOutput::new(Preset::PulseSubradiant);
    let setup = cfg.setup()?;
    let ev = cfg.evolution.unwrap_or_default();
    let basis = Arc::new(Basis::with_budget(setup.array.len(), setup.n_max, cfg.tolerances.max_dim)?);
    let generator = LindbladGenerator::new(basis.clone(), &setup.array, &setup.couplings, &setup.drive)?;
    let traj = evolve(&DensityState::ground(basis), &generator, ev.t_end, &ev.times(), &cfg.tolerances.evolve_options())?;

    let mut columns = names(&["t", "rabi", "n_ex", "gamma_out"]);
    columns.extend(manifold_names("p", setup.n_max, ""));
    let mut table = Table::new("trajectory", columns);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![*t, setup.drive.rabi_at(*t), excited_population(s), total_emission_rate(s, &setup.couplings)];
        row.extend(manifold_populations(s));
        table.push(row);
    }

    let last = traj.last();
    let det = cfg.detector.options();
    let mode = cfg.detector.g2_mode.mode()?;
    let scan = angular_scan(last, &setup.array, &cfg.detector.grid(), &det, mode)?;
    let mut scan_table = Table::new("angular_scan", names(&["phi", "j_norm", "g2"]));
    scan_rows(&mut scan_table, None, &scan);
    let phi = scan.argmax_phi.unwrap_or(0.0);
    let record = ObservableRecord::measure(last, &setup.array, &setup.couplings, phi, &det, mode)?;

    let s = &mut out.summary;
    s.insert("detuning".into(), setup.drive.detuning);
    s.insert("t_end".into(), ev.t_end);
    s.insert("n_ex".into(), record.n_ex);
    s.insert("gamma_out".into(), record.gamma_out);
    s.insert("p0_plus_p1".into(), record.manifolds[0] + record.manifolds.get(1).copied().unwrap_or(0.0));
    s.insert("accepted_steps".into(), traj.accepted_steps as f64);
    out.records.push(LabelledRecord { label: format!("t={}", ev.t_end), value: ev.t_end, record });
    out.tables.push(table);
    out.tables.push(scan_table);
    Ok(out)
}

fn disorder_sweep(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let mut out = ScenarioOutput::new(Preset::DisorderSweep);
    let cells = disorder_average(cfg)?;
    let mut table = Table::new(
        "disorder",
        names(&[
            "value",
            "epsilon",
            "realizations",
            "failures",
            "gamma_out_mean",
            "gamma_out_std",
            "g2_mean",
            "g2_std",
            "gamma_out_ordered",
            "g2_ordered",
            "detuning",
        ]),
    );
    let mut reals = Table::new(
        "realizations",
        names(&["value", "epsilon", "index", "seed", "ok", "phi_max", "gamma_out", "g2", "n_ex"]),
    );
    for c in &cells {
        table.push(vec![
            c.value,
            c.epsilon,
            c.realizations.len() as f64,
            c.failures as f64,
            c.gamma_out.mean,
            c.gamma_out.std,
            c.g2.mean,
            c.g2.std,
            c.ordered.gamma_out,
            c.ordered.g2.unwrap_or(f64::NAN),
            c.detuning,
        ]);
        for r in &c.realizations {
            let row = match &r.outcome {
                Ok(rec) => vec![1.0, rec.phi, rec.gamma_out, rec.g2.unwrap_or(f64::NAN), rec.n_ex],
                Err(_) => vec![0.0, f64::NAN, f64::NAN, f64::NAN, f64::NAN],
            };
            let mut full = vec![c.value, c.epsilon, r.index as f64, r.seed as f64];
            full.extend(row);
            reals.push(full);
        }
        out.records.push(LabelledRecord {
            label: format!("{} ordered", label(cfg, c.value)),
            value: c.value,
            record: c.ordered.clone(),
        });
    }
    out.seeds = cfg.disorder.as_ref().and_then(|d| d.seed).into_iter().collect();
    out.summary.insert("cells".into(), cells.len() as f64);
    out.summary.insert("failures".into(), cells.iter().map(|c| c.failures).sum::<usize>() as f64);
    out.tables.push(table);
    out.tables.push(reals);
    Ok(out)
}

fn comparison_table(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let mut out = ScenarioOutput::new(Preset::ModelComparison);
    let rows = model_comparison(cfg)?;
    let n = cfg.geometry.len();
    let truncated = cfg.n_max.min(n);
    let mut columns = names(&[
        "rabi",
        "n_ex_truncated",
        "n_ex_full",
        "n_ex_rel_dev",
        "gamma_out_truncated",
        "gamma_out_full",
        "gamma_out_rel_dev",
    ]);
    columns.extend(manifold_names("p", truncated, "_truncated"));
    columns.extend(manifold_names("p", n, "_full"));
    let mut table = Table::new("model_comparison", columns);
    for r in &rows {
        let mut row = vec![
            r.rabi,
            r.truncated.n_ex,
            r.full.n_ex,
            r.n_ex_rel_dev,
            r.truncated.gamma_out,
            r.full.gamma_out,
            r.gamma_out_rel_dev,
        ];
        row.extend(padded(&r.truncated.manifolds, truncated));
        row.extend(padded(&r.full.manifolds, n));
        table.push(row);
    }
    let worst = |f: &dyn Fn(&ComparisonRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    out.summary.insert("max_n_ex_rel_dev".into(), worst(&|r| r.n_ex_rel_dev));
    out.summary.insert("max_gamma_out_rel_dev".into(), worst(&|r| r.gamma_out_rel_dev));
    out.summary.insert(
        "max_full_higher_manifolds".into(),
        worst(&|r| r.full.manifolds.iter().skip(truncated + 1).sum()),
    );
    out.tables.push(table);
    Ok(out)
}

/// Orientation in a frame where the chain runs along ŷ; the pair coupling
/// depends only on the angle between dipole and chain axis.
fn chain_frame_orientation(axis: [f64; 3], orientation: [f64; 3]) -> Result<Vec3> {
    let a = Vec3::new(axis[0], axis[1], axis[2]);
    let mu = Vec3::new(orientation[0], orientation[1], orientation[2]);
    if !(a.norm() > 0.0 && mu.norm() > 0.0) {
        return Err(Error::InvalidArgument("chain axis and orientation must be non-zero".into()));
    }
    let a = a.normalize();
    let mu = mu.normalize();
    let along = mu.dot(&a);
    let across = (mu - a * along).norm();
    Ok(Vec3::new(across, along, 0.0))
}

/// The lattice sum diverges on the light line; such points come back NaN.
fn curve_point(k: f64, d: f64, mu: Vec3, opts: &DispersionOptions) -> Result<Complex64> {
    match chain_dispersion(k, d, mu, opts) {
        Err(Error::Convergence { .. }) => {
            warn!("dispersion sum does not converge at k_y/k0 = {}", k / opts.k0);
            Ok(Complex64::new(f64::NAN, f64::NAN))
        }
        other => other,
    }
}

fn dispersion(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let mut out = ScenarioOutput::new(Preset::Dispersion);
    let GeometrySpec::Chain { d, axis, orientation, .. } = cfg.geometry else {
        return Err(Error::InvalidArgument("dispersion needs a chain geometry".into()));
    };
    let mu = chain_frame_orientation(axis, orientation)?;
    let array = cfg.geometry.build()?;
    let opts = DispersionOptions { k0: array.k0(), ..Default::default() };
    let k0 = opts.k0;
    let ks = cfg.dispersion.clone().unwrap_or_default().wavenumbers(d, k0);
    let curve = ks
        .par_iter()
        .map(|&k| curve_point(k, d, mu, &opts))
        .collect::<Result<Vec<_>>>()?;
    let mut curve_table = Table::new("dispersion", names(&["k_over_k0", "shift", "decay"]));
    for (k, w) in ks.iter().zip(&curve) {
        curve_table.push(vec![k / k0, w.re, -2.0 * w.im]);
    }

    let couplings = crate::couplings::coupling_matrices(&array);
    let modes = effective_modes(&couplings)?;
    let assigned: Vec<_> = modes.iter().map(|m| assign_standing_wave(m, d)).collect();
    let on_curve = assigned
        .par_iter()
        .map(|a| curve_point(a.k.min(PI / d), d, mu, &opts))
        .collect::<Result<Vec<_>>>()?;
    let mut finite = Table::new(
        "finite_modes",
        names(&["rank", "q", "k_over_k0", "overlap", "shift", "decay", "curve_shift", "curve_decay"]),
    );
    for (i, ((m, a), w)) in modes.iter().zip(&assigned).zip(&on_curve).enumerate() {
        finite.push(vec![i as f64, a.q as f64, a.k / k0, a.overlap, m.shift, m.decay, w.re, -2.0 * w.im]);
    }
    let min_decay = modes.iter().map(|m| m.decay).fold(f64::INFINITY, f64::min);
    out.summary.insert("min_decay".into(), min_decay);
    out.summary.insert("max_decay".into(), modes[0].decay);
    out.tables.push(curve_table);
    out.tables.push(finite);
    Ok(out)
}
