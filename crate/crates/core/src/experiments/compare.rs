use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::Instance;
use crate::planner::{plan_for, FlowPlan, PlanError, PlanVariant};
use crate::policies::PolicyKind;
use crate::seeding;
use crate::simulator::{
    default_cap, episode_offline_optimum, simulate_episode, EpisodeRow, SimError,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub policies: Vec<PolicyKind>,
    pub episodes: usize,
    pub seed: u64,
    /// Episode cap as a multiple of `Ẑ`.
    pub cap_factor: u64,
}

impl ComparisonConfig {
    pub fn new(policies: Vec<PolicyKind>, episodes: usize, seed: u64) -> Self {
        Self {
            policies,
            episodes,
            seed,
            cap_factor: crate::simulator::DEFAULT_CAP_FACTOR,
        }
    }
}

/// Seed of episode `k` on instance `instance_id`; shared by every policy.
pub fn episode_seed(root: u64, instance_id: usize, k: usize) -> u64 {
    seeding::sub_seed(root, "episode", &[instance_id as u64, k as u64])
}

/// Ratio of means `mean(a) / mean(b)` over paired samples with its
/// delta-method standard error.
pub fn paired_ratio(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let ratio = mean_a / mean_b;
    let se = if a.len() > 1 {
        let var = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - ratio * y).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt() / mean_b
    } else {
        0.0
    };
    Some((ratio, se))
}

/// One policy on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance_id: usize,
    pub policy: String,
    pub z_hat: u64,
    pub z_flow: f64,
    pub completed: usize,
    pub failed: usize,
    pub mean_consumption: Option<f64>,
    pub mean_t_star: Option<f64>,
    /// Mean consumption over mean offline optimum.
    pub ratio: Option<f64>,
    pub ratio_std_error: Option<f64>,
    /// Mean of per-sequence ratios.
    pub mean_sequence_ratio: Option<f64>,
    pub worst_sequence_ratio: Option<f64>,
}

/// One policy across all instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub mean_consumption: Option<f64>,
    pub mean_t_star: Option<f64>,
    /// Average of the per-instance ratios.
    pub mean_ratio: Option<f64>,
    pub mean_ratio_std_error: Option<f64>,
    pub worst_sequence_ratio: Option<f64>,
    /// Smallest and largest per-instance ratio.
    pub ratio_range: Option<(f64, f64)>,
    pub failed_episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub episodes_per_instance: usize,
    pub policies: Vec<PolicySummary>,
    pub instances: Vec<InstanceResult>,
    #[serde(skip)]
    pub episodes: Vec<EpisodeRow>,
}

impl EvalReport {
    pub fn summary(&self, policy: PolicyKind) -> Option<&PolicySummary> {
        let name = policy.to_string();
        self.policies.iter().find(|s| s.policy == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Plot data: one row per instance and policy.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record([
            "instance_id",
            "policy",
            "z_hat",
            "z_flow",
            "mean_consumption",
            "mean_t_star",
            "ratio",
            "ratio_std_error",
            "worst_sequence_ratio",
            "failed",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.instances {
            writer.write_record([
                r.instance_id.to_string(),
                r.policy.clone(),
                r.z_hat.to_string(),
                r.z_flow.to_string(),
                opt(r.mean_consumption),
                opt(r.mean_t_star),
                opt(r.ratio),
                opt(r.ratio_std_error),
                opt(r.worst_sequence_ratio),
                r.failed.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

struct Job {
    instance_id: usize,
    t_star: Result<u64, SimError>,
    episodes: Vec<Result<(u64, u64), SimError>>,
    seed: u64,
}

/// Runs every policy on `episodes` shared sequences per instance, pairs each
/// episode with the offline optimum of its sequence and aggregates.
pub fn run_comparison(
    instances: &[Instance],
    config: &ComparisonConfig,
) -> Result<EvalReport, PlanError> {
    let mut variants: Vec<PlanVariant> = vec![PlanVariant::Standard];
    for p in &config.policies {
        if let Some(v) = p.plan_variant() {
            if !variants.contains(&v) {
                variants.push(v);
            }
        }
    }
    let plans: Vec<BTreeMap<String, FlowPlan>> = instances
        .par_iter()
        .map(|inst| {
            variants
                .iter()
                .map(|&v| plan_for(inst, v).map(|p| (v.to_string(), p)))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..config.episodes).map(move |k| (i, k)))
        .collect();
    let results: Vec<Job> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let inst = &instances[i];
            let standard = &plans[i][&PlanVariant::Standard.to_string()];
            let cap = standard.z_hat.max(1).saturating_mul(config.cap_factor);
            let seed = episode_seed(config.seed, i, k);
            let t_star = episode_offline_optimum(inst, seed, cap).map(|o| o.t_star);
            let episodes = config
                .policies
                .iter()
                .map(|p| {
                    let plan = p.plan_variant().map(|v| &plans[i][&v.to_string()]);
                    simulate_episode(inst, *p, plan, seed, cap)
                        .map(|r| (r.consumption, r.passthrough))
                })
                .collect();
            Job {
                instance_id: i,
                t_star,
                episodes,
                seed,
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len() * config.policies.len());
    for job in &results {
        for (p, ep) in config.policies.iter().zip(&job.episodes) {
            rows.push(EpisodeRow {
                instance_id: job.instance_id,
                policy: p.to_string(),
                seed: job.seed,
                consumption: ep.as_ref().ok().map(|e| e.0),
                t_star: job.t_star.as_ref().ok().copied(),
                passthrough: ep.as_ref().ok().map(|e| e.1),
            });
        }
    }

    let mut per_instance = Vec::new();
    for (pi, policy) in config.policies.iter().enumerate() {
        for (i, plan_set) in plans.iter().enumerate() {
            let standard = &plan_set[&PlanVariant::Standard.to_string()];
            let mut used = Vec::new();
            let mut opt = Vec::new();
            let mut failed = 0;
            for job in results.iter().filter(|j| j.instance_id == i) {
                match (&job.episodes[pi], &job.t_star) {
                    (Ok((y, _)), Ok(t)) => {
                        used.push(*y as f64);
                        opt.push(*t as f64);
                    }
                    _ => failed += 1,
                }
            }
            let n = used.len() as f64;
            let ratio = paired_ratio(&used, &opt);
            let seq_ratios: Vec<f64> = used.iter().zip(&opt).map(|(y, t)| y / t).collect();
            per_instance.push(InstanceResult {
                instance_id: i,
                policy: policy.to_string(),
                z_hat: standard.z_hat,
                z_flow: standard.z_flow,
                completed: used.len(),
                failed,
                mean_consumption: (!used.is_empty()).then(|| used.iter().sum::<f64>() / n),
                mean_t_star: (!opt.is_empty()).then(|| opt.iter().sum::<f64>() / n),
                ratio: ratio.map(|r| r.0),
                ratio_std_error: ratio.map(|r| r.1),
                mean_sequence_ratio: (!seq_ratios.is_empty())
                    .then(|| seq_ratios.iter().sum::<f64>() / n),
                worst_sequence_ratio: seq_ratios.iter().copied().reduce(f64::max),
            });
        }
    }

    let policies = config
        .policies
        .iter()
        .map(|policy| {
            let name = policy.to_string();
            let rows: Vec<&InstanceResult> =
                per_instance.iter().filter(|r| r.policy == name).collect();
            let mean_of = |f: &dyn Fn(&InstanceResult) -> Option<f64>| {
                let vals: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            };
            let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
            let se = (!ratios.is_empty()).then(|| {
                let s: f64 = rows
                    .iter()
                    .filter_map(|r| r.ratio_std_error)
                    .map(|e| e * e)
                    .sum();
                s.sqrt() / ratios.len() as f64
            });
            PolicySummary {
                policy: name.clone(),
                mean_consumption: mean_of(&|r| r.mean_consumption),
                mean_t_star: mean_of(&|r| r.mean_t_star),
                mean_ratio: mean_of(&|r| r.ratio),
                mean_ratio_std_error: se,
                worst_sequence_ratio: rows
                    .iter()
                    .filter_map(|r| r.worst_sequence_ratio)
                    .reduce(f64::max),
                ratio_range: ratios
                    .iter()
                    .copied()
                    .reduce(f64::min)
                    .zip(ratios.iter().copied().reduce(f64::max)),
                failed_episodes: rows.iter().map(|r| r.failed).sum(),
            }
        })
        .collect();

    Ok(EvalReport {
        seed: config.seed,
        episodes_per_instance: config.episodes,
        policies,
        instances: per_instance,
        episodes: rows,
    })
}

/// Default cap for an instance whose plan is not at hand.
pub fn instance_cap(instance: &Instance) -> u64 {
    default_cap(crate::planner::find_z_hat(instance).z_hat)
}
