//! Positional-disorder averages with the laser frozen at the ordered tuning.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::{with_context, Setup};
use crate::error::{Error, Result};
use crate::geometry::apply_disorder;
use crate::observables::{emission_profile, ObservableRecord};

/// Largest tolerated fraction of failed realizations per cell.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

/// Seeds are kept below 2⁵³ so they survive a round trip through an f64
/// table column.
const SEED_BITS: u32 = 53;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    /// Sample standard deviation, 0 for a single value.
    pub std: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = pairwise_sum(values) / n as f64;
        if n == 1 {
            return Self { mean, std: 0.0 };
        }
        let sq: Vec<f64> = values.iter().map(|x| (x - mean) * (x - mean)).collect();
        Self { mean, std: (pairwise_sum(&sq) / (n - 1) as f64).sqrt() }
    }
}

/// Cascade summation; the result depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub index: usize,
    pub seed: u64,
    /// Observables at this realization's own emission maximum.
    pub outcome: Result<ObservableRecord>,
}

/// One (sweep value, ε) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderCell {
    pub value: f64,
    pub epsilon: f64,
    /// Laser detuning shared by every realization.
    pub detuning: f64,
    pub ordered: ObservableRecord,
    pub realizations: Vec<Realization>,
    pub failures: usize,
    pub gamma_out: Moments,
    pub g2: Moments,
}

/// Per-realization seeds for each sweep point. The same seeds are reused for
/// every ε, so the displacement pattern only scales with ε.
fn realization_seeds(base: u64, points: usize, n: usize) -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    (0..points)
        .map(|_| (0..n).map(|_| rng.random::<u64>() >> (64 - SEED_BITS)).collect())
        .collect()
}

/// Observables of a steady state at the first `𝒥` maximum on the grid.
fn measure_at_max(cfg: &ScenarioConfig, setup: &Setup) -> Result<ObservableRecord> {
    let report = super::steady_for(cfg, setup)?;
    let det = cfg.detector.options();
    let (phi, _) = emission_profile(&report.state, &setup.array, &cfg.detector.grid(), &det)?;
    let record = ObservableRecord::measure(&report.state, &setup.array, &setup.couplings, phi, &det, cfg.detector.g2_mode.mode()?)?;
    if record.g2.is_none() {
        return Err(Error::UndefinedCorrelation(record.intensity));
    }
    Ok(record)
}

/// Mean and spread of `Γ_out` and `g²(argmax φ)` over disorder realizations,
/// for every sweep value and ε.
///
/// The laser stays tuned to the ordered array. Failed realizations are kept
/// in the output and excluded from the moments; more than
/// [`MAX_FAILURE_FRACTION`] of them aborts the run.
pub fn disorder_average(cfg: &ScenarioConfig) -> Result<Vec<DisorderCell>> {
    cfg.validate()?;
    let spec = cfg
        .disorder
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("disorder block missing".into()))?;
    let seed = spec.seed.ok_or_else(|| Error::InvalidArgument("disorder.seed is required".into()))?;
    let epsilons = spec.epsilon.values();
    let points = cfg.points();
    let values = cfg.sweep_values();
    let seeds = realization_seeds(seed, points.len(), spec.n_realizations);

    let mut cells = Vec::with_capacity(points.len() * epsilons.len());
    for ((point, &value), seeds) in points.iter().zip(&values).zip(&seeds) {
        let ordered_array = point.geometry.build()?;
        let ordered_setup = point.setup_with(ordered_array.clone(), None)?;
        let detuning = ordered_setup.drive.detuning;
        let ordered = measure_at_max(point, &ordered_setup).map_err(|e| with_context(e, "ordered array"))?;
        let d = point.geometry.spacing();
        for &epsilon in &epsilons {
            let realizations: Vec<Realization> = seeds
                .par_iter()
                .enumerate()
                .map(|(index, &seed)| {
                    let outcome = apply_disorder(&ordered_array, epsilon, d, seed)
                        .and_then(|a| point.setup_with(a, Some(detuning)))
                        .and_then(|s| measure_at_max(point, &s));
                    Realization { index, seed, outcome }
                })
                .collect();
            let failed: Vec<&Realization> = realizations.iter().filter(|r| r.outcome.is_err()).collect();
            let failures = failed.len();
            if let Some(first) = failed.first() {
                warn!("{failures} disorder realizations failed at value {value}, epsilon {epsilon}");
                if failures as f64 > MAX_FAILURE_FRACTION * realizations.len() as f64 {
                    let Err(e) = &first.outcome else { unreachable!() };
                    return Err(Error::Numeric(format!(
                        "{failures} of {} disorder realizations failed at value {value}, epsilon {epsilon}; first (seed {}): {e}",
                        realizations.len(),
                        first.seed
                    )));
                }
            }
            let ok: Vec<&ObservableRecord> = realizations.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let gamma: Vec<f64> = ok.iter().map(|r| r.gamma_out).collect();
            let g2: Vec<f64> = ok.iter().filter_map(|r| r.g2).collect();
            cells.push(DisorderCell {
                value,
                epsilon,
                detuning,
                ordered: ordered.clone(),
                gamma_out: Moments::of(&gamma),
                g2: Moments::of(&g2),
                realizations,
                failures,
            });
        }
    }
    Ok(cells)
}
