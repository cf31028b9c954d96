use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compare::{episode_seed, paired_ratio};
use super::ConfigError;
use crate::model::Instance;
use crate::planner::standard_plan;
use crate::policies::PolicyKind;
use crate::seeding;
use crate::simulator::{default_cap, simulate_episode};

/// Largest bias bound the harness accepts; requests above it are clamped.
pub const MAX_DELTA: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConfig {
    /// Multiplicative bias bound of the forecast distribution.
    pub delta: f64,
    pub episodes: usize,
    pub seed: u64,
    pub policy: PolicyKind,
}

impl RobustnessConfig {
    pub fn new(delta: f64, episodes: usize, seed: u64) -> Self {
        Self {
            delta,
            episodes,
            seed,
            policy: PolicyKind::FbGreedy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub delta_requested: f64,
    pub delta: f64,
    pub delta_capped: bool,
    /// `max_j |p̂_j / p_j − 1|` after renormalization.
    pub delta_eff: f64,
    pub forecast: Vec<f64>,
    pub z_hat_true: u64,
    pub z_hat_forecast: u64,
    pub completed: usize,
    pub failed: usize,
    pub mean_true_plan: Option<f64>,
    pub mean_forecast_plan: Option<f64>,
    /// Mean consumption under the forecast plan over that under the true one.
    pub ratio: Option<f64>,
    pub ratio_std_error: Option<f64>,
    /// `(1 + δ_eff) / (1 − δ_eff)`; absent when `δ_eff ≥ 1`.
    pub bound: Option<f64>,
}

/// Biased forecast `p̂`: every `p_j` times an independent `Uniform[1−δ, 1+δ]`
/// multiplier, renormalized. `δ = 0` returns `p` unchanged.
pub fn perturb_distribution(probs: &[f64], delta: f64, seed: u64) -> Vec<f64> {
    if delta == 0.0 {
        return probs.to_vec();
    }
    let mut rng = seeding::stream(seed, "perturbation", &[]);
    let raw: Vec<f64> = probs
        .iter()
        .map(|&p| p * rng.random_range(1.0 - delta..=1.0 + delta))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// Plans from a biased forecast, simulates against the true distribution,
/// and compares with planning from the truth on the same sequences.
pub fn run_robustness(
    instance: &Instance,
    config: &RobustnessConfig,
) -> Result<RobustnessReport, ConfigError> {
    if !(config.delta >= 0.0 && config.delta < 1.0) {
        return Err(ConfigError(format!("delta {} must lie in [0, 1)", config.delta)));
    }
    if config.policy.plan_variant() != Some(crate::planner::PlanVariant::Standard) {
        return Err(ConfigError(format!(
            "robustness needs a policy driven by the standard plan, got {}",
            config.policy
        )));
    }
    let delta = config.delta.min(MAX_DELTA);
    let forecast = perturb_distribution(instance.probs(), delta, config.seed);
    let delta_eff = instance
        .probs()
        .iter()
        .zip(&forecast)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| (q / p - 1.0).abs())
        .fold(0.0, f64::max);
    let forecast_instance = instance
        .with_probs(forecast.clone())
        .map_err(|e| ConfigError(format!("perturbed distribution is invalid: {e}")))?;

    let true_plan = standard_plan(instance);
    let forecast_plan = standard_plan(&forecast_instance);
    let cap = default_cap(true_plan.z_hat.max(forecast_plan.z_hat));

    let pairs: Vec<Option<(f64, f64)>> = (0..config.episodes)
        .into_par_iter()
        .map(|k| {
            let seed = episode_seed(config.seed, 0, k);
            let a = simulate_episode(instance, config.policy, Some(&forecast_plan), seed, cap);
            let b = simulate_episode(instance, config.policy, Some(&true_plan), seed, cap);
            match (a, b) {
                (Ok(a), Ok(b)) => Some((a.consumption as f64, b.consumption as f64)),
                _ => None,
            }
        })
        .collect();
    let (forecast_used, true_used): (Vec<f64>, Vec<f64>) = pairs.iter().flatten().copied().unzip();
    let n = true_used.len() as f64;
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / n);
    let ratio = paired_ratio(&forecast_used, &true_used);
    Ok(RobustnessReport {
        delta_requested: config.delta,
        delta,
        delta_capped: delta < config.delta,
        delta_eff,
        forecast,
        z_hat_true: true_plan.z_hat,
        z_hat_forecast: forecast_plan.z_hat,
        completed: true_used.len(),
        failed: config.episodes - true_used.len(),
        mean_true_plan: mean(&true_used),
        mean_forecast_plan: mean(&forecast_used),
        ratio: ratio.map(|r| r.0),
        ratio_std_error: ratio.map(|r| r.1),
        bound: (delta_eff < 1.0).then(|| (1.0 + delta_eff) / (1.0 - delta_eff)),
    })
}
