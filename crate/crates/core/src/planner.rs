//! Offline planning: the minimal integer traffic budget `Ẑ`, the per-edge
//! capacities read off the saturating flow, and the real-valued lower bound
//! `Z_flow` on the optimal expected consumption.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maxflow::{ExpectedNetwork, InnerCapacity};
use crate::model::{parse_json, CapacityPlan, Instance, ModelError};
use crate::scalar::Scalar;
use crate::Cap;

/// Largest campaign count accepted by [`z_flow_exact_small`].
pub const EXACT_SUBSET_LIMIT: usize = 20;

/// Fixed-point precision of the real-valued feasibility check in
/// [`compute_z_flow`]: supplies are `⌊T·p_j·2^40⌋` against demands `W_i·2^40`.
pub const Z_FLOW_SCALE_BITS: u32 = 40;

/// Relative slack under which `x` counts as the integer it is next to when
/// taking `⌈x⌉` of a budget share. Keeps `⌈10 · 0.7⌉` at 7.
const CEIL_SNAP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("exact subset enumeration supports at most {limit} campaigns, got {m}")]
    TooManyCampaigns { m: usize, limit: usize },
    #[error("multiple delivery needs k >= 1")]
    ZeroSlots,
    #[error(transparent)]
    Parse(#[from] ModelError),
    #[error("plan does not match instance: {0}")]
    Mismatch(String),
}

/// Which network and delivery rule family a plan belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanVariant {
    Standard,
    Representative,
    Multiple(u32),
}

impl fmt::Display for PlanVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanVariant::Standard => write!(f, "standard"),
            PlanVariant::Representative => write!(f, "representative"),
            PlanVariant::Multiple(k) => write!(f, "multiple:{k}"),
        }
    }
}

impl FromStr for PlanVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(PlanVariant::Standard),
            "representative" => Ok(PlanVariant::Representative),
            _ => s
                .strip_prefix("multiple:")
                .and_then(|k| k.parse::<u32>().ok())
                .filter(|&k| k >= 1)
                .map(PlanVariant::Multiple)
                .ok_or_else(|| format!("unknown plan variant `{s}`")),
        }
    }
}

/// Output of the offline part.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowPlan {
    pub z_hat: u64,
    pub capacities: CapacityPlan,
    pub z_flow: f64,
    pub variant: PlanVariant,
}

impl FlowPlan {
    /// Users of each type the plan needs: `⌈Ẑ·p_j⌉`. Arrivals beyond the
    /// threshold can be sold elsewhere.
    pub fn thresholds(&self, instance: &Instance) -> Vec<u64> {
        budget_supply(instance, self.z_hat, 1)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    z_hat: u64,
    z_flow: f64,
    variant: String,
    capacities: Vec<[u64; 3]>,
}

/// Serializes a plan as pretty-printed JSON.
pub fn save_plan(plan: &FlowPlan) -> Vec<u8> {
    let file = PlanFile {
        z_hat: plan.z_hat,
        z_flow: plan.z_flow,
        variant: plan.variant.to_string(),
        capacities: plan
            .capacities
            .iter()
            .map(|((i, j), c)| [i as u64, j as u64, c])
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("plan serialization cannot fail");
    out.push(b'\n');
    out
}

pub fn load_plan(bytes: &[u8]) -> Result<FlowPlan, PlanError> {
    let file: PlanFile = parse_json(bytes)?;
    let variant = file.variant.parse().map_err(PlanError::Mismatch)?;
    Ok(FlowPlan {
        z_hat: file.z_hat,
        z_flow: file.z_flow,
        variant,
        capacities: CapacityPlan::from_entries(
            file.capacities
                .into_iter()
                .map(|[i, j, c]| ((i as usize, j as usize), c)),
        ),
    })
}

/// Checks that a loaded plan lives on the instance's edges and routes every
/// campaign's full demand.
pub fn check_plan(instance: &Instance, plan: &FlowPlan) -> Result<(), PlanError> {
    if !plan.capacities.is_supported_by(instance) {
        return Err(PlanError::Mismatch(
            "capacity defined on a non-targeting pair".into(),
        ));
    }
    for i in 0..instance.m() {
        let routed = plan.capacities.campaign_total(i);
        if routed != instance.demand(i) {
            return Err(PlanError::Mismatch(format!(
                "campaign {i} routes {routed} of {}",
                instance.demand(i)
            )));
        }
    }
    Ok(())
}

/// `⌈x⌉`, treating values within relative `1e-12` of an integer as that
/// integer.
pub(crate) fn snapped_ceil(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= CEIL_SNAP * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Sink capacities of `F̂_G(Z, k)`: `⌈Z·k·p_j⌉`.
pub fn budget_supply(instance: &Instance, budget: u64, slots: u32) -> Vec<u64> {
    let scaled = budget as f64 * slots as f64;
    instance
        .probs()
        .iter()
        .map(|&p| snapped_ceil(scaled * p))
        .collect()
}

fn budget_network(instance: &Instance, budget: u64, slots: u32, inner: InnerCapacity) -> ExpectedNetwork<Cap> {
    let mut net =
        ExpectedNetwork::<Cap>::build(instance, &budget_supply(instance, budget, slots), inner);
    net.max_flow();
    net
}

/// `Max-Flow(F̂_G(Z))` for the standard network.
pub fn max_flow_at_budget(instance: &Instance, budget: u64) -> u64 {
    budget_network(instance, budget, 1, InnerCapacity::TotalDemand).value() as u64
}

/// Whether `Max-Flow(F̂_G(Z)) ≥ M`.
pub fn is_feasible_budget(instance: &Instance, budget: u64) -> bool {
    max_flow_at_budget(instance, budget) >= instance.total_demand()
}

/// Smallest budget accepted by a monotone predicate: doubling from
/// `max(1, M/2)` to an upper bracket, then bisection.
fn search_budget(total_demand: u64, mut feasible: impl FnMut(u64) -> bool) -> u64 {
    let mut z = (total_demand / 2).max(1);
    let mut probes = 0;
    loop {
        z = z.checked_mul(2).expect("no feasible budget below 2^64");
        probes += 1;
        if feasible(z) {
            break;
        }
    }
    // z/2 was probed and rejected unless this is the first probe, whose lower
    // half was never tested.
    let (mut begin, mut end) = if probes == 1 { (1, z) } else { (z / 2, z) };
    while begin < end {
        let mid = begin + (end - begin) / 2;
        if feasible(mid) {
            end = mid;
        } else {
            begin = mid + 1;
        }
    }
    begin
}

/// Minimal budget and its capacity plan.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetSolution {
    pub z_hat: u64,
    pub capacities: CapacityPlan,
}

fn solve_budget(instance: &Instance, slots: u32, inner_for: impl Fn(u64) -> InnerCapacity) -> BudgetSolution {
    let demand = instance.total_demand();
    let z_hat = search_budget(demand, |z| {
        budget_network(instance, z, slots, inner_for(z)).value() as u64 >= demand
    });
    let net = budget_network(instance, z_hat, slots, inner_for(z_hat));
    let capacities = net
        .extract_edge_flows(instance)
        .expect("flow at the minimal budget saturates by construction");
    BudgetSolution { z_hat, capacities }
}

/// Minimal integer `Ẑ` with `Max-Flow(F̂_G(Ẑ)) ≥ M`, and the flow on every
/// targeting edge at that budget.
pub fn find_z_hat(instance: &Instance) -> BudgetSolution {
    solve_budget(instance, 1, |_| InnerCapacity::TotalDemand)
}

/// Default tolerance of [`compute_z_flow`]: `1e-6 · M`.
pub fn default_z_flow_tolerance(instance: &Instance) -> f64 {
    1e-6 * instance.total_demand() as f64
}

fn real_budget_feasible(instance: &Instance, t: f64) -> bool {
    let scale = 2f64.powi(Z_FLOW_SCALE_BITS as i32);
    let unit: i128 = 1 << Z_FLOW_SCALE_BITS;
    let demand = instance.total_demand() as i128 * unit;
    let supply: Vec<i128> = instance
        .probs()
        .iter()
        .map(|&p| {
            let s = (t * p * scale).floor();
            if s >= demand as f64 {
                demand
            } else {
                s.max(0.0) as i128
            }
        })
        .collect();
    let mut net =
        ExpectedNetwork::<i128>::build_scaled(instance, &supply, InnerCapacity::TotalDemand, unit);
    net.max_flow() >= demand
}

/// `Z_flow`, the minimal real `T` with `Max-Flow(F_G(T)) = M`, by bisection
/// on `T` to within `tolerance`. The returned value passed the feasibility
/// check, so it never undercuts the exact value by more than the fixed-point
/// rounding (`|Γ(S)| · 2^-40 / p(Γ(S))`).
pub fn compute_z_flow(instance: &Instance, tolerance: f64) -> f64 {
    assert!(tolerance > 0.0, "tolerance must be positive");
    let m_total = instance.total_demand() as f64;
    // Z_flow ≥ M since the full campaign set needs M users from a subset of
    // total probability at most one.
    let mut lo = m_total - tolerance;
    let mut hi = m_total;
    while !real_budget_feasible(instance, hi) {
        lo = hi;
        hi *= 2.0;
        assert!(hi.is_finite(), "no feasible real budget");
    }
    while hi - lo > tolerance {
        let mid = lo + (hi - lo) / 2.0;
        if mid <= lo || mid >= hi {
            break;
        }
        if real_budget_feasible(instance, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `Z_flow = max_{S ⊆ A} W(S) / p(Γ(S))` by enumerating every nonempty
/// campaign subset in Gray-code order. Exponential; `m ≤ 20`.
pub fn z_flow_exact_small<F: Scalar>(instance: &Instance) -> Result<F, PlanError> {
    let m = instance.m();
    if m > EXACT_SUBSET_LIMIT {
        return Err(PlanError::TooManyCampaigns {
            m,
            limit: EXACT_SUBSET_LIMIT,
        });
    }
    let probs: Vec<F> = instance
        .probs()
        .iter()
        .map(|&p| F::from_probability(p))
        .collect();
    let mut cover = vec![0u32; instance.n()];
    let mut demand = 0u64;
    let mut mass = F::zero();
    let mut in_set = vec![false; m];
    let mut best: Option<F> = None;
    for step in 1u64..(1u64 << m) {
        let i = step.trailing_zeros() as usize;
        if in_set[i] {
            in_set[i] = false;
            demand -= instance.demand(i);
            for r in instance.campaign_edges(i) {
                cover[r.node] -= 1;
                if cover[r.node] == 0 {
                    mass = mass - probs[r.node].clone();
                }
            }
        } else {
            in_set[i] = true;
            demand += instance.demand(i);
            for r in instance.campaign_edges(i) {
                if cover[r.node] == 0 {
                    mass = mass + probs[r.node].clone();
                }
                cover[r.node] += 1;
            }
        }
        let ratio = F::from_count(demand) / mass.clone();
        if best.as_ref().is_none_or(|b| ratio > *b) {
            best = Some(ratio);
        }
    }
    Ok(best.expect("at least one campaign"))
}

/// The standard plan: minimal budget, flow capacities and `Z_flow`.
pub fn standard_plan(instance: &Instance) -> FlowPlan {
    let BudgetSolution { z_hat, capacities } = find_z_hat(instance);
    FlowPlan {
        z_hat,
        capacities,
        z_flow: compute_z_flow(instance, default_z_flow_tolerance(instance)),
        variant: PlanVariant::Standard,
    }
}

/// Proportional capacities `W_i · p_j / p(Γ(a_i))`, rounded per campaign by
/// largest remainder (ties to the lower type index) so each campaign's
/// capacities sum to `W_i`.
pub fn representative_capacities(instance: &Instance) -> CapacityPlan {
    let mut entries = Vec::with_capacity(instance.edges().len());
    for i in 0..instance.m() {
        let adj = instance.campaign_edges(i);
        let w = instance.demand(i);
        let mass: f64 = adj.iter().map(|r| instance.prob(r.node)).sum();
        let targets: Vec<f64> = adj
            .iter()
            .map(|r| w as f64 * instance.prob(r.node) / mass)
            .collect();
        let mut alloc: Vec<u64> = targets.iter().map(|t| t.floor() as u64).collect();
        let floor_sum: u64 = alloc.iter().sum();
        let mut left = w.saturating_sub(floor_sum) as usize;
        let mut order: Vec<usize> = (0..adj.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = targets[a] - targets[a].floor();
            let rb = targets[b] - targets[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            alloc[k] += 1;
            left -= 1;
        }
        entries.extend(adj.iter().zip(alloc).map(|(r, c)| ((i, r.node), c)));
    }
    CapacityPlan::from_entries(entries)
}

/// Plan for the representative delivery rule. `Ẑ` and `Z_flow` are carried
/// for reporting only.
pub fn representative_plan(instance: &Instance) -> FlowPlan {
    FlowPlan {
        z_hat: find_z_hat(instance).z_hat,
        capacities: representative_capacities(instance),
        z_flow: compute_z_flow(instance, default_z_flow_tolerance(instance)),
        variant: PlanVariant::Representative,
    }
}

/// Inner-edge capacity of the multiple-delivery network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotInnerCapacity {
    /// Each targeting edge carries at most the probed budget `Z`.
    ProbeBudget,
    /// Each targeting edge carries at most `M`, as in the standard network.
    TotalDemand,
}

/// Plan for `k` ad slots per page view over `F̂_G(Ẑ, k)`: sink capacities
/// `⌈Ẑ·k·p_j⌉`, inner capacities `Ẑ`.
pub fn multiple_delivery_plan(instance: &Instance, slots: u32) -> Result<FlowPlan, PlanError> {
    multiple_delivery_plan_with(instance, slots, SlotInnerCapacity::ProbeBudget)
}

pub fn multiple_delivery_plan_with(
    instance: &Instance,
    slots: u32,
    inner: SlotInnerCapacity,
) -> Result<FlowPlan, PlanError> {
    if slots == 0 {
        return Err(PlanError::ZeroSlots);
    }
    let BudgetSolution { z_hat, capacities } = solve_budget(instance, slots, |z| match inner {
        SlotInnerCapacity::ProbeBudget => InnerCapacity::Uniform(z),
        SlotInnerCapacity::TotalDemand => InnerCapacity::TotalDemand,
    });
    Ok(FlowPlan {
        z_hat,
        capacities,
        z_flow: compute_z_flow(instance, default_z_flow_tolerance(instance)),
        variant: PlanVariant::Multiple(slots),
    })
}

/// Builds the plan a variant calls for.
pub fn plan_for(instance: &Instance, variant: PlanVariant) -> Result<FlowPlan, PlanError> {
    match variant {
        PlanVariant::Standard => Ok(standard_plan(instance)),
        PlanVariant::Representative => Ok(representative_plan(instance)),
        PlanVariant::Multiple(k) => multiple_delivery_plan(instance, k),
    }
}
