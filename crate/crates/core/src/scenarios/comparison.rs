//! Truncated versus untruncated steady states under the same drive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, SweepVariable, FULL_MODEL_MAX_N};
use super::steady_for;
use crate::error::{Error, Result};
use crate::observables::{excited_population, manifold_populations, total_emission_rate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub n_max: usize,
    pub n_ex: f64,
    pub gamma_out: f64,
    pub manifolds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub rabi: f64,
    pub truncated: ModelSnapshot,
    pub full: ModelSnapshot,
    pub n_ex_rel_dev: f64,
    pub gamma_out_rel_dev: f64,
}

/// `|a − b|/|b|`, with 0 when both vanish.
fn rel_dev(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn snapshot(cfg: &ScenarioConfig, n_max: usize) -> Result<ModelSnapshot> {
    let mut setup = cfg.setup()?;
    setup.n_max = n_max;
    let state = steady_for(cfg, &setup)?.state;
    Ok(ModelSnapshot {
        n_max,
        n_ex: excited_population(&state),
        gamma_out: total_emission_rate(&state, &setup.couplings),
        manifolds: manifold_populations(&state),
    })
}

/// Steady states with the configured truncation and with none, for every
/// drive rate of a `rabi` sweep (or the configured rate alone).
pub fn model_comparison(cfg: &ScenarioConfig) -> Result<Vec<ComparisonRow>> {
    let n = cfg.geometry.len();
    if n > FULL_MODEL_MAX_N {
        return Err(Error::ResourceLimit {
            what: "full-model comparison emitter count".into(),
            requested: n,
            budget: FULL_MODEL_MAX_N,
        });
    }
    if let Some(s) = &cfg.sweep {
        if s.variable != SweepVariable::Rabi {
            return Err(Error::InvalidArgument("model comparison sweeps the drive rate only (variable `rabi`)".into()));
        }
    }
    let truncated = cfg.n_max.min(n);
    cfg.points()
        .par_iter()
        .map(|p| {
            let t = snapshot(p, truncated)?;
            let f = snapshot(p, n)?;
            Ok(ComparisonRow {
                rabi: p.drive.rabi,
                n_ex_rel_dev: rel_dev(t.n_ex, f.n_ex),
                gamma_out_rel_dev: rel_dev(t.gamma_out, f.gamma_out),
                truncated: t,
                full: f,
            })
        })
        .collect()
}
