//! Episode simulation: i.i.d. user streams, policy runs and the offline
//! optimum of a realized sequence.
//!
//! An episode is identified by one `u64` seed. The user sequence is drawn
//! from the `"sequence"` stream of that seed and a policy's own randomness
//! from `"policy:<name>"`, so every policy run with the same episode seed
//! sees the same users, and the offline optimum can be paired with it.

mod oracles;
mod records;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maxflow::{ExpectedNetwork, InnerCapacity};
use crate::model::Instance;
use crate::planner::FlowPlan;
use crate::policies::{DeliveryPolicy, PolicyError, PolicyKind};
use crate::seeding::{self, StreamRng};

pub use oracles::{
    dp_optimal_expected, random_upper_bound, wald_check, WaldRow, DP_STATE_LIMIT,
};
pub use records::{read_episode_csv, write_episode_csv, EpisodeRow, EPISODE_CSV_VERSION};

/// Episode cap as a multiple of the planned budget `Ẑ`.
pub const DEFAULT_CAP_FACTOR: u64 = 1000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("episode exceeded its cap of {cap} users")]
    CapExceeded { cap: u64 },
    #[error("state space of {states} residual vectors exceeds the limit of {limit}")]
    StateSpaceTooLarge { states: u128, limit: u128 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Default episode cap for a plan budget.
pub fn default_cap(z_hat: u64) -> u64 {
    z_hat.max(1).saturating_mul(DEFAULT_CAP_FACTOR)
}

/// Lazily drawn i.i.d. user types, refusing to go past `cap` draws.
#[derive(Clone, Debug)]
pub struct UserStream<R> {
    dist: WeightedIndex<f64>,
    rng: R,
    cap: u64,
    drawn: u64,
}

pub fn sample_sequence<R: Rng>(probs: &[f64], rng: R, cap: u64) -> UserStream<R> {
    assert!(cap >= 1, "cap must be at least 1");
    let dist = WeightedIndex::new(probs.iter().copied()).expect("a valid distribution");
    UserStream {
        dist,
        rng,
        cap,
        drawn: 0,
    }
}

/// The user stream of episode `seed`.
pub fn episode_sequence(instance: &Instance, seed: u64, cap: u64) -> UserStream<StreamRng> {
    sample_sequence(instance.probs(), seeding::stream(seed, "sequence", &[]), cap)
}

impl<R: Rng> UserStream<R> {
    pub fn next_user(&mut self) -> Result<usize, SimError> {
        if self.drawn >= self.cap {
            return Err(SimError::CapExceeded { cap: self.cap });
        }
        self.drawn += 1;
        Ok(self.dist.sample(&mut self.rng))
    }

    pub fn drawn(&self) -> u64 {
        self.drawn
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }
}

/// Counters of one completed episode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Users that arrived until every contract was fulfilled.
    pub consumption: u64,
    /// Arrivals per user type.
    pub type_counts: Vec<u64>,
    /// Deliveries per targeting edge, aligned with [`Instance::edges`].
    pub pair_counts: Vec<u64>,
    /// Users that received no ad.
    pub passthrough: u64,
    pub seed: u64,
}

/// Feeds users to `policy` until every demand is met.
pub fn run_episode<R: Rng>(
    instance: &Instance,
    policy: &mut dyn DeliveryPolicy,
    users: &mut UserStream<R>,
    policy_rng: &mut dyn RngCore,
    seed: u64,
) -> Result<EpisodeRecord, SimError> {
    let mut record = EpisodeRecord {
        consumption: 0,
        type_counts: vec![0; instance.n()],
        pair_counts: vec![0; instance.edges().len()],
        passthrough: 0,
        seed,
    };
    let mut delivered = Vec::new();
    while !policy.state().is_done() {
        let j = users.next_user()?;
        record.consumption += 1;
        record.type_counts[j] += 1;
        delivered.clear();
        policy.serve(j, policy_rng, &mut delivered);
        if delivered.is_empty() {
            record.passthrough += 1;
        }
        for &i in &delivered {
            let e = instance
                .edge_index(i, j)
                .expect("policies deliver along targeting edges");
            record.pair_counts[e] += 1;
        }
    }
    Ok(record)
}

/// Runs policy `kind` on episode `seed`.
pub fn simulate_episode(
    instance: &Instance,
    kind: PolicyKind,
    plan: Option<&FlowPlan>,
    seed: u64,
    cap: u64,
) -> Result<EpisodeRecord, SimError> {
    let mut policy = kind.build(instance, plan)?;
    let mut users = episode_sequence(instance, seed, cap);
    let mut rng = seeding::stream(seed, &format!("policy:{kind}"), &[]);
    run_episode(instance, policy.as_mut(), &mut users, &mut rng, seed)
}

/// Shortest prefix of a sequence that admits a complete assignment when
/// earlier decisions may be revised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfflineOptimum {
    pub t_star: u64,
}

/// Walks the sequence one user at a time, growing a maximum flow by
/// augmenting paths until it saturates every demand.
pub fn offline_optimum<R: Rng>(
    instance: &Instance,
    users: &mut UserStream<R>,
) -> Result<OfflineOptimum, SimError> {
    let mut net: ExpectedNetwork<i64> =
        ExpectedNetwork::build(instance, &vec![0; instance.n()], InnerCapacity::TotalDemand);
    net.max_flow();
    let mut t = 0;
    while !net.is_saturated() {
        let j = users.next_user()?;
        t += 1;
        net.increment_supply_and_augment(j);
    }
    Ok(OfflineOptimum { t_star: t })
}

/// Same result as [`offline_optimum`], found by galloping then bisecting on
/// the prefix length with a fresh max-flow per probe. Needs `O(log t*)`
/// flow computations instead of one augmentation search per demand unit.
pub fn offline_optimum_bisect<R: Rng>(
    instance: &Instance,
    users: &mut UserStream<R>,
) -> Result<OfflineOptimum, SimError> {
    let total = instance.total_demand();
    let cap = users.cap();
    let mut seq: Vec<u32> = Vec::new();
    let mut feasible = |t: u64, seq: &mut Vec<u32>| -> Result<bool, SimError> {
        while (seq.len() as u64) < t {
            seq.push(users.next_user()? as u32);
        }
        let mut counts = vec![0u64; instance.n()];
        for &j in &seq[..t as usize] {
            counts[j as usize] += 1;
        }
        let mut net: ExpectedNetwork<i64> =
            ExpectedNetwork::build(instance, &counts, InnerCapacity::TotalDemand);
        net.max_flow();
        Ok(net.is_saturated())
    };
    // Every user covers at most one unit of demand.
    let mut lo = total - 1;
    let mut hi = total;
    while !feasible(hi.min(cap), &mut seq)? {
        if hi >= cap {
            return Err(SimError::CapExceeded { cap });
        }
        lo = hi;
        hi = hi.saturating_mul(2);
    }
    hi = hi.min(cap);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid, &mut seq)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(OfflineOptimum { t_star: hi })
}

/// Offline optimum of episode `seed`.
pub fn episode_offline_optimum(
    instance: &Instance,
    seed: u64,
    cap: u64,
) -> Result<OfflineOptimum, SimError> {
    offline_optimum_bisect(instance, &mut episode_sequence(instance, seed, cap))
}
