use rand::{Rng, RngCore};

use super::{DeliveryPolicy, PolicyState};
use crate::model::Instance;

/// Lowest-index eligible campaign for `user_type` minimizing `key`.
fn argmin_eligible<K: PartialOrd>(
    instance: &Instance,
    state: &PolicyState,
    user_type: usize,
    key: impl Fn(usize) -> K,
) -> Option<usize> {
    let mut best: Option<(usize, K)> = None;
    for r in instance.type_edges(user_type) {
        if state.residual(r.node) == 0 {
            continue;
        }
        let k = key(r.node);
        if best.as_ref().is_none_or(|(_, b)| k < *b) {
            best = Some((r.node, k));
        }
    }
    best.map(|(i, _)| i)
}

/// Picks an eligible campaign with probability proportional to its residual
/// demand, i.e. a uniformly random undelivered unit ad.
pub struct RandomPolicy<'a> {
    instance: &'a Instance,
    state: PolicyState,
}

impl<'a> RandomPolicy<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        Self {
            instance,
            state: PolicyState::new(instance),
        }
    }

    pub fn choose(&self, user_type: usize, rng: &mut dyn RngCore) -> Option<usize> {
        let total: u64 = self
            .instance
            .type_edges(user_type)
            .iter()
            .map(|r| self.state.residual(r.node))
            .sum();
        if total == 0 {
            return None;
        }
        let mut ticket = rng.random_range(0..total);
        for r in self.instance.type_edges(user_type) {
            let w = self.state.residual(r.node);
            if ticket < w {
                return Some(r.node);
            }
            ticket -= w;
        }
        unreachable!("ticket below the eligible total")
    }
}

impl DeliveryPolicy for RandomPolicy<'_> {
    fn state(&self) -> &PolicyState {
        &self.state
    }

    fn serve(&mut self, user_type: usize, rng: &mut dyn RngCore, delivered: &mut Vec<usize>) {
        if let Some(i) = self.choose(user_type, rng) {
            self.state.deliver(i);
            delivered.push(i);
        }
    }
}

/// Eligible campaign with the fewest targeted user types.
pub struct DegreeGreedyPolicy<'a> {
    instance: &'a Instance,
    state: PolicyState,
}

impl<'a> DegreeGreedyPolicy<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        Self {
            instance,
            state: PolicyState::new(instance),
        }
    }

    pub fn choose(&self, user_type: usize) -> Option<usize> {
        argmin_eligible(self.instance, &self.state, user_type, |i| {
            self.instance.campaign_degree(i)
        })
    }
}

impl DeliveryPolicy for DegreeGreedyPolicy<'_> {
    fn state(&self) -> &PolicyState {
        &self.state
    }

    fn serve(&mut self, user_type: usize, _rng: &mut dyn RngCore, delivered: &mut Vec<usize>) {
        if let Some(i) = self.choose(user_type) {
            self.state.deliver(i);
            delivered.push(i);
        }
    }
}

/// Delivery values `r_i = Σ_{u_j ∈ Γ(a_i)} p_j / W(u_j)` from the initial demands.
pub fn delivery_values(instance: &Instance) -> Vec<f64> {
    let type_demand: Vec<f64> = (0..instance.n())
        .map(|j| instance.type_demand(j) as f64)
        .collect();
    (0..instance.m())
        .map(|i| {
            instance
                .campaign_edges(i)
                .iter()
                .map(|r| instance.prob(r.node) / type_demand[r.node])
                .sum()
        })
        .collect()
}

/// Eligible campaign with the smallest delivery value, i.e. the one whose
/// audience is scarcest relative to competing demand.
pub struct ProbabilityGreedyPolicy<'a> {
    instance: &'a Instance,
    state: PolicyState,
    values: Vec<f64>,
}

impl<'a> ProbabilityGreedyPolicy<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        Self {
            instance,
            state: PolicyState::new(instance),
            values: delivery_values(instance),
        }
    }

    pub fn delivery_values(&self) -> &[f64] {
        &self.values
    }

    pub fn choose(&self, user_type: usize) -> Option<usize> {
        argmin_eligible(self.instance, &self.state, user_type, |i| self.values[i])
    }
}

impl DeliveryPolicy for ProbabilityGreedyPolicy<'_> {
    fn state(&self) -> &PolicyState {
        &self.state
    }

    fn serve(&mut self, user_type: usize, _rng: &mut dyn RngCore, delivered: &mut Vec<usize>) {
        if let Some(i) = self.choose(user_type) {
            self.state.deliver(i);
            delivered.push(i);
        }
    }
}

/// Offline part of the high-water-mark policy.
#[derive(Clone, Debug, PartialEq)]
pub struct HwmAllocation {
    /// Campaigns from most to least contended.
    pub order: Vec<usize>,
    /// Serving fraction per campaign, in `[0, 1]`.
    pub alpha: Vec<f64>,
}

/// Allocates a forecast of `forecast_total` users (`s_j = forecast_total·p_j`
/// of type `u_j`). Campaigns are processed by ascending `Σ_j s_j / W_i`; each
/// takes the smallest fraction `α_i ≤ 1` of every targeted type's forecast
/// that, limited by what earlier campaigns left over, covers `W_i`.
pub fn hwm_allocation(instance: &Instance, forecast_total: f64) -> HwmAllocation {
    let supply: Vec<f64> = instance.probs().iter().map(|p| forecast_total * p).collect();
    let contention: Vec<f64> = (0..instance.m())
        .map(|i| {
            let s: f64 = instance.campaign_edges(i).iter().map(|r| supply[r.node]).sum();
            s / instance.demand(i) as f64
        })
        .collect();
    let mut order: Vec<usize> = (0..instance.m()).collect();
    order.sort_by(|&a, &b| contention[a].total_cmp(&contention[b]).then(a.cmp(&b)));

    let mut left = supply.clone();
    let mut alpha = vec![0.0; instance.m()];
    for &i in &order {
        let edges = instance.campaign_edges(i);
        let covered = |a: f64| -> f64 {
            edges.iter().map(|r| left[r.node].min(a * supply[r.node])).sum()
        };
        let demand = instance.demand(i) as f64;
        let a = if covered(1.0) <= demand {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if covered(mid) >= demand {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        alpha[i] = a;
        for r in edges {
            let take = left[r.node].min(a * supply[r.node]);
            left[r.node] -= take;
        }
    }
    HwmAllocation { order, alpha }
}

/// Scans the campaigns targeting the user's type in allocation order and
/// fires each live one with probability `α_i` until one is delivered.
pub struct HighWaterMarkPolicy<'a> {
    instance: &'a Instance,
    state: PolicyState,
    allocation: HwmAllocation,
    by_type: Vec<Vec<usize>>,
}

impl<'a> HighWaterMarkPolicy<'a> {
    pub fn new(instance: &'a Instance, forecast_total: f64) -> Self {
        Self::from_allocation(instance, hwm_allocation(instance, forecast_total))
    }

    pub fn from_allocation(instance: &'a Instance, allocation: HwmAllocation) -> Self {
        let mut rank = vec![0; instance.m()];
        for (k, &i) in allocation.order.iter().enumerate() {
            rank[i] = k;
        }
        let by_type = (0..instance.n())
            .map(|j| {
                let mut list: Vec<usize> = instance.type_edges(j).iter().map(|r| r.node).collect();
                list.sort_by_key(|&i| rank[i]);
                list
            })
            .collect();
        Self {
            instance,
            state: PolicyState::new(instance),
            allocation,
            by_type,
        }
    }

    pub fn allocation(&self) -> &HwmAllocation {
        &self.allocation
    }

    pub fn choose(&self, user_type: usize, rng: &mut dyn RngCore) -> Option<usize> {
        debug_assert!(user_type < self.instance.n());
        for &i in &self.by_type[user_type] {
            if self.state.residual(i) == 0 {
                continue;
            }
            let a = self.allocation.alpha[i];
            if a >= 1.0 || rng.random::<f64>() < a {
                return Some(i);
            }
        }
        None
    }
}

impl DeliveryPolicy for HighWaterMarkPolicy<'_> {
    fn state(&self) -> &PolicyState {
        &self.state
    }

    fn serve(&mut self, user_type: usize, rng: &mut dyn RngCore, delivered: &mut Vec<usize>) {
        if let Some(i) = self.choose(user_type, rng) {
            self.state.deliver(i);
            delivered.push(i);
        }
    }
}
