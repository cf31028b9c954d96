//! Random instance generation and the evaluation harnesses built on the
//! simulator: multi-policy comparison with competitive-ratio estimates and
//! the forecast-bias robustness check.
//!
//! Comparisons are deterministic for a root seed regardless of thread
//! count: work is split per (instance, sequence) pair, collected in index
//! order, and reduced sequentially.

mod compare;
mod generate;
mod robustness;

use thiserror::Error;

pub use compare::{
    episode_seed, instance_cap, paired_ratio, run_comparison, ComparisonConfig, EvalReport,
    InstanceResult, PolicySummary,
};
pub use generate::{generate_instance, DegreeMode, DistKind, GeneratedInstance, GeneratorConfig};
pub use robustness::{
    perturb_distribution, run_robustness, RobustnessConfig, RobustnessReport, MAX_DELTA,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

/// Instances `0..count` of a sweep, each generated from its own sub-seed of
/// `root`.
pub fn generate_batch(
    base: &GeneratorConfig,
    count: usize,
    root: u64,
) -> Result<Vec<GeneratedInstance>, ConfigError> {
    (0..count)
        .map(|k| {
            let config = GeneratorConfig {
                seed: crate::seeding::sub_seed(root, "instance", &[k as u64]),
                ..base.clone()
            };
            generate_instance(&config)
        })
        .collect()
}
