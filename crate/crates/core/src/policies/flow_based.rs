use rand::RngCore;

use super::{DeliveryDecision, DeliveryPolicy, PolicyState};
use crate::model::Instance;
use crate::planner::FlowPlan;

/// Picks a campaign for a user of a given type from per-edge capacities.
///
/// A rule belongs to the flow-based class when, once `⌈Ẑ·p_j⌉` users of type
/// `u_j` have arrived, every campaign targeting `u_j` has either received at
/// least `C_{i,j}` of them or been fully delivered.
pub trait DeliveryRule {
    fn choose(&mut self, instance: &Instance, residual: &[u64], user_type: usize) -> Option<usize>;
}

fn planned(instance: &Instance, plan: &FlowPlan) -> Vec<i64> {
    plan.capacities
        .per_edge(instance)
        .into_iter()
        .map(|c| c as i64)
        .collect()
}

/// Eligible campaign with the largest residual capacity. Residual
/// capacities keep decreasing past zero, so a campaign whose planned users
/// are exhausted can still take spare users of the type.
#[derive(Clone, Debug)]
pub struct GreedyRule {
    remaining: Vec<i64>,
}

impl GreedyRule {
    pub fn new(instance: &Instance, plan: &FlowPlan) -> Self {
        Self::from_capacities(planned(instance, plan))
    }

    /// Residual capacities aligned with [`Instance::edges`].
    pub fn from_capacities(remaining: Vec<i64>) -> Self {
        Self { remaining }
    }

    pub fn residual_capacities(&self) -> &[i64] {
        &self.remaining
    }
}

impl DeliveryRule for GreedyRule {
    fn choose(&mut self, instance: &Instance, residual: &[u64], user_type: usize) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        for r in instance.type_edges(user_type) {
            if residual[r.node] == 0 {
                continue;
            }
            if best.is_none_or(|(_, e)| self.remaining[r.edge] > self.remaining[e]) {
                best = Some((r.node, r.edge));
            }
        }
        let (campaign, edge) = best?;
        self.remaining[edge] -= 1;
        Some(campaign)
    }
}

/// Greedy rule that never exceeds a planned capacity: a user is passed
/// through when the best eligible edge has no capacity left. Under a
/// proportional plan the terminal allocation equals the plan exactly.
#[derive(Clone, Debug)]
pub struct RepresentativeRule {
    remaining: Vec<i64>,
}

impl RepresentativeRule {
    pub fn new(instance: &Instance, plan: &FlowPlan) -> Self {
        Self::from_capacities(planned(instance, plan))
    }

    pub fn from_capacities(remaining: Vec<i64>) -> Self {
        Self { remaining }
    }

    pub fn residual_capacities(&self) -> &[i64] {
        &self.remaining
    }
}

impl DeliveryRule for RepresentativeRule {
    fn choose(&mut self, instance: &Instance, residual: &[u64], user_type: usize) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        for r in instance.type_edges(user_type) {
            if residual[r.node] == 0 {
                continue;
            }
            if best.is_none_or(|(_, e)| self.remaining[r.edge] > self.remaining[e]) {
                best = Some((r.node, r.edge));
            }
        }
        let (campaign, edge) = best?;
        if self.remaining[edge] <= 0 {
            return None;
        }
        self.remaining[edge] -= 1;
        Some(campaign)
    }
}

/// Eligible campaign whose edge has the largest fraction `Ĉ_{i,j} / C_{i,j}`
/// of its planned users still ahead of it, which spreads each type's users
/// across campaigns in proportion to the plan. Edges planned at zero are
/// skipped; when only such edges are eligible the rule falls back to the
/// greedy choice on `Ĉ`.
#[derive(Clone, Debug)]
pub struct SmoothRule {
    remaining: Vec<i64>,
    planned: Vec<i64>,
}

impl SmoothRule {
    pub fn new(instance: &Instance, plan: &FlowPlan) -> Self {
        Self::from_capacities(planned(instance, plan))
    }

    pub fn from_capacities(planned: Vec<i64>) -> Self {
        Self {
            remaining: planned.clone(),
            planned,
        }
    }

    /// Starts from arbitrary residuals `Ĉ` with frozen plan `C`.
    pub fn with_residuals(remaining: Vec<i64>, planned: Vec<i64>) -> Self {
        assert_eq!(remaining.len(), planned.len());
        Self { remaining, planned }
    }

    pub fn residual_capacities(&self) -> &[i64] {
        &self.remaining
    }
}

impl DeliveryRule for SmoothRule {
    fn choose(&mut self, instance: &Instance, residual: &[u64], user_type: usize) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        let mut fallback: Option<(usize, usize)> = None;
        for r in instance.type_edges(user_type) {
            if residual[r.node] == 0 {
                continue;
            }
            let (rem, plan) = (self.remaining[r.edge], self.planned[r.edge]);
            if plan > 0 {
                // rem/plan > best_rem/best_plan, cross-multiplied (plans positive).
                let better = best.is_none_or(|(_, e)| {
                    (rem as i128) * (self.planned[e] as i128)
                        > (self.remaining[e] as i128) * (plan as i128)
                });
                if better {
                    best = Some((r.node, r.edge));
                }
            } else if fallback.is_none_or(|(_, e)| rem > self.remaining[e]) {
                fallback = Some((r.node, r.edge));
            }
        }
        let (campaign, edge) = best.or(fallback)?;
        self.remaining[edge] -= 1;
        Some(campaign)
    }
}

/// The online part of the flow-based policy, parameterized by its rule.
pub struct FlowBasedPolicy<'a, R> {
    instance: &'a Instance,
    state: PolicyState,
    rule: R,
}

impl<'a, R: DeliveryRule> FlowBasedPolicy<'a, R> {
    pub fn new(instance: &'a Instance, rule: R) -> Self {
        Self {
            instance,
            state: PolicyState::new(instance),
            rule,
        }
    }

    pub fn rule(&self) -> &R {
        &self.rule
    }

    pub fn decide(&mut self, user_type: usize) -> DeliveryDecision {
        let choice = self
            .rule
            .choose(self.instance, self.state.residual_demands(), user_type);
        if let Some(i) = choice {
            self.state.deliver(i);
        }
        DeliveryDecision::from_choice(choice)
    }
}

impl<R: DeliveryRule> DeliveryPolicy for FlowBasedPolicy<'_, R> {
    fn state(&self) -> &PolicyState {
        &self.state
    }

    fn serve(&mut self, user_type: usize, _rng: &mut dyn RngCore, delivered: &mut Vec<usize>) {
        if let DeliveryDecision::Deliver(i) = self.decide(user_type) {
            delivered.push(i);
        }
    }
}

/// Flow-based policy with `k` ad slots per visit: the up to `k` eligible
/// campaigns with the largest residual capacities, at most one slot each.
pub struct MultiDeliveryPolicy<'a> {
    instance: &'a Instance,
    state: PolicyState,
    remaining: Vec<i64>,
    slots: usize,
    scratch: Vec<(i64, usize, usize)>,
}

impl<'a> MultiDeliveryPolicy<'a> {
    pub fn new(instance: &'a Instance, plan: &FlowPlan, slots: u32) -> Self {
        Self::from_capacities(instance, planned(instance, plan), slots)
    }

    pub fn from_capacities(instance: &'a Instance, remaining: Vec<i64>, slots: u32) -> Self {
        assert!(slots >= 1);
        Self {
            instance,
            state: PolicyState::new(instance),
            remaining,
            slots: slots as usize,
            scratch: Vec::new(),
        }
    }

    pub fn residual_capacities(&self) -> &[i64] {
        &self.remaining
    }

    pub fn decide(&mut self, user_type: usize) -> Vec<DeliveryDecision> {
        self.scratch.clear();
        for r in self.instance.type_edges(user_type) {
            if self.state.residual(r.node) > 0 {
                self.scratch.push((self.remaining[r.edge], r.node, r.edge));
            }
        }
        self.scratch.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let picked: Vec<(usize, usize)> = self
            .scratch
            .iter()
            .take(self.slots)
            .map(|&(_, i, e)| (i, e))
            .collect();
        picked
            .into_iter()
            .map(|(i, e)| {
                self.remaining[e] -= 1;
                self.state.deliver(i);
                DeliveryDecision::Deliver(i)
            })
            .collect()
    }
}

impl DeliveryPolicy for MultiDeliveryPolicy<'_> {
    fn state(&self) -> &PolicyState {
        &self.state
    }

    fn serve(&mut self, user_type: usize, _rng: &mut dyn RngCore, delivered: &mut Vec<usize>) {
        for d in self.decide(user_type) {
            if let DeliveryDecision::Deliver(i) = d {
                delivered.push(i);
            }
        }
    }
}
