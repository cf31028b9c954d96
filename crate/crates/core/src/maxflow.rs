//! Integer max-flow over the expected network.
//!
//! [`MaxFlowNetwork`] is a plain capacitated digraph solved with Dinic's
//! algorithm (BFS level graph, DFS blocking flow with current-arc pointers).
//! Arcs are explored in insertion order, so the flow that is found is a
//! deterministic function of the order in which arcs were added.
//!
//! [`ExpectedNetwork`] wraps it with the source → campaign → user type → sink
//! layout and supports growing one sink capacity at a time. Raising a single
//! capacity by one unit raises the max-flow by at most one, so a single
//! augmenting path search restores optimality. The residual reachability tree
//! from the source is cached between calls: while no augmentation happens it
//! stays valid, which makes the common "this arrival is useless" case O(1).

use std::collections::VecDeque;

use thiserror::Error;

use crate::model::{CapacityPlan, Instance};
use crate::scalar::Capacity;

pub type ArcId = usize;

const NONE: usize = usize::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("plan requires saturating flow: flow value {value} < total demand {demand}")]
    Unsaturated { value: u64, demand: u64 },
}

/// Capacitated digraph with a designated source and sink.
///
/// Arc `2k` is the `k`-th added arc, arc `2k + 1` its residual twin.
#[derive(Clone, Debug)]
pub struct MaxFlowNetwork<C> {
    source: usize,
    sink: usize,
    head: Vec<usize>,
    residual: Vec<C>,
    capacity: Vec<C>,
    adj: Vec<Vec<ArcId>>,
    value: C,
    level: Vec<u32>,
    cursor: Vec<usize>,
}

impl<C: Capacity> MaxFlowNetwork<C> {
    pub fn new(node_count: usize, source: usize, sink: usize) -> Self {
        assert!(source < node_count && sink < node_count && source != sink);
        Self {
            source,
            sink,
            head: Vec::new(),
            residual: Vec::new(),
            capacity: Vec::new(),
            adj: vec![Vec::new(); node_count],
            value: C::zero(),
            level: vec![0; node_count],
            cursor: vec![0; node_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn arc_count(&self) -> usize {
        self.head.len() / 2
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Adds an arc with zero flow and returns its id.
    pub fn add_arc(&mut self, from: usize, to: usize, capacity: C) -> ArcId {
        assert!(capacity >= C::zero(), "negative capacity");
        let id = self.head.len();
        self.head.push(to);
        self.residual.push(capacity);
        self.capacity.push(capacity);
        self.adj[from].push(id);
        self.head.push(from);
        self.residual.push(C::zero());
        self.capacity.push(C::zero());
        self.adj[to].push(id + 1);
        id
    }

    pub fn tail(&self, arc: ArcId) -> usize {
        self.head[arc ^ 1]
    }

    pub fn head(&self, arc: ArcId) -> usize {
        self.head[arc]
    }

    pub fn capacity(&self, arc: ArcId) -> C {
        self.capacity[arc]
    }

    pub fn flow(&self, arc: ArcId) -> C {
        self.capacity[arc] - self.residual[arc]
    }

    /// Current flow value (valid after [`max_flow`](Self::max_flow) or
    /// incremental augmentations).
    pub fn value(&self) -> C {
        self.value
    }

    /// Grows the capacity of a forward arc; the current flow stays feasible.
    pub fn raise_capacity(&mut self, arc: ArcId, delta: C) {
        assert_eq!(arc & 1, 0, "only forward arcs carry capacity");
        assert!(delta >= C::zero());
        self.capacity[arc] = self.capacity[arc] + delta;
        self.residual[arc] = self.residual[arc] + delta;
    }

    /// Maximizes the flow starting from the current (feasible) flow and
    /// returns the total value.
    pub fn max_flow(&mut self) -> C {
        while self.build_levels() {
            self.cursor.iter_mut().for_each(|c| *c = 0);
            loop {
                let pushed = self.push_blocking(self.source, C::max_value());
                if pushed == C::zero() {
                    break;
                }
                self.value = self.value + pushed;
            }
        }
        self.value
    }

    fn build_levels(&mut self) -> bool {
        self.level.iter_mut().for_each(|l| *l = u32::MAX);
        let mut queue = VecDeque::new();
        self.level[self.source] = 0;
        queue.push_back(self.source);
        while let Some(v) = queue.pop_front() {
            for &a in &self.adj[v] {
                let w = self.head[a];
                if self.residual[a] > C::zero() && self.level[w] == u32::MAX {
                    self.level[w] = self.level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        self.level[self.sink] != u32::MAX
    }

    fn push_blocking(&mut self, v: usize, limit: C) -> C {
        if v == self.sink {
            return limit;
        }
        while self.cursor[v] < self.adj[v].len() {
            let a = self.adj[v][self.cursor[v]];
            let w = self.head[a];
            if self.residual[a] > C::zero() && self.level[w] == self.level[v] + 1 {
                let pushed = self.push_blocking(w, limit.min(self.residual[a]));
                if pushed > C::zero() {
                    self.residual[a] = self.residual[a] - pushed;
                    self.residual[a ^ 1] = self.residual[a ^ 1] + pushed;
                    return pushed;
                }
            }
            self.cursor[v] += 1;
        }
        C::zero()
    }

    /// BFS over positive-residual arcs from the source. Fills, for every
    /// node, the arc through which it was first reached (`NONE` for the
    /// source and for unreachable nodes). The sink is never expanded.
    fn residual_tree(&self, parent: &mut Vec<usize>) {
        parent.clear();
        parent.resize(self.node_count(), NONE);
        let mut seen = vec![false; self.node_count()];
        let mut queue = VecDeque::new();
        seen[self.source] = true;
        queue.push_back(self.source);
        while let Some(v) = queue.pop_front() {
            if v == self.sink {
                continue;
            }
            for &a in &self.adj[v] {
                let w = self.head[a];
                if !seen[w] && self.residual[a] > C::zero() {
                    seen[w] = true;
                    parent[w] = a;
                    queue.push_back(w);
                }
            }
        }
    }

    /// Augments along one shortest residual path. Returns the pushed amount
    /// (zero when the flow is already maximum).
    pub fn augment_shortest_path(&mut self) -> C {
        let mut parent = Vec::new();
        self.residual_tree(&mut parent);
        if parent[self.sink] == NONE {
            return C::zero();
        }
        let mut bottleneck = C::max_value();
        let mut v = self.sink;
        while v != self.source {
            let a = parent[v];
            bottleneck = bottleneck.min(self.residual[a]);
            v = self.tail(a);
        }
        let mut v = self.sink;
        while v != self.source {
            let a = parent[v];
            self.residual[a] = self.residual[a] - bottleneck;
            self.residual[a ^ 1] = self.residual[a ^ 1] + bottleneck;
            v = self.tail(a);
        }
        self.value = self.value + bottleneck;
        bottleneck
    }

    /// Nodes reachable from the source in the residual graph. At maximum flow
    /// this is the source side of a minimum cut.
    pub fn source_side(&self) -> Vec<bool> {
        let mut parent = Vec::new();
        self.residual_tree(&mut parent);
        parent
            .iter()
            .enumerate()
            .map(|(v, &p)| v == self.source || p != NONE)
            .collect()
    }

    /// Walks every arc and node checking capacity bounds and conservation.
    pub fn check_flow(&self) -> Result<(), String> {
        let mut excess = vec![C::zero(); self.node_count()];
        for a in (0..self.head.len()).step_by(2) {
            let f = self.flow(a);
            if f < C::zero() || f > self.capacity[a] {
                return Err(format!(
                    "arc {}->{} carries {f:?} outside [0, {:?}]",
                    self.tail(a),
                    self.head(a),
                    self.capacity[a]
                ));
            }
            if self.residual[a ^ 1] != f {
                return Err(format!("arc {a} residual twin out of sync"));
            }
            excess[self.head(a)] = excess[self.head(a)] + f;
            excess[self.tail(a)] = excess[self.tail(a)] - f;
        }
        for (v, &e) in excess.iter().enumerate() {
            if v != self.source && v != self.sink && e != C::zero() {
                return Err(format!("node {v} violates conservation by {e:?}"));
            }
        }
        if excess[self.sink] != self.value || excess[self.source] != C::zero() - self.value {
            return Err(format!(
                "flow value {:?} does not match sink inflow {:?}",
                self.value, excess[self.sink]
            ));
        }
        Ok(())
    }
}

/// Capacity rule for the campaign → user-type arcs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerCapacity {
    /// Capacity `M` (total demand, in the network's demand units).
    TotalDemand,
    /// The same capacity on every targeting arc.
    Uniform(u64),
}

/// The expected network `F̂_G`: source → campaigns (capacity `W_i`),
/// campaigns → user types along targeting edges, user types → sink (supply).
#[derive(Clone, Debug)]
pub struct ExpectedNetwork<C> {
    net: MaxFlowNetwork<C>,
    m: usize,
    demand: C,
    source_arcs: Vec<ArcId>,
    edge_arcs: Vec<ArcId>,
    sink_arcs: Vec<ArcId>,
    maximized: bool,
    tree: Option<Vec<usize>>,
}

/// Builds `F̂_G` with the given per-type supply.
pub fn build_expected_network<C: Capacity>(
    instance: &Instance,
    supply: &[u64],
    inner: InnerCapacity,
) -> ExpectedNetwork<C> {
    ExpectedNetwork::build(instance, supply, inner)
}

impl<C: Capacity> ExpectedNetwork<C> {
    /// Builds the network from integer supplies with demands at face value.
    pub fn build(instance: &Instance, supply: &[u64], inner: InnerCapacity) -> Self {
        let supply: Vec<C> = supply.iter().map(|&s| C::from_u64_checked(s)).collect();
        Self::build_scaled(instance, &supply, inner, C::one())
    }

    /// Builds the network with every demand (and the `M` inner capacity)
    /// multiplied by `demand_scale`, so fractional supplies can be expressed
    /// as integers in the same units.
    pub fn build_scaled(
        instance: &Instance,
        supply: &[C],
        inner: InnerCapacity,
        demand_scale: C,
    ) -> Self {
        let (m, n) = (instance.m(), instance.n());
        assert_eq!(supply.len(), n, "supply length must equal the number of user types");
        let source = 0;
        let sink = m + n + 1;
        let mut net = MaxFlowNetwork::new(m + n + 2, source, sink);
        let scale = |w: u64| {
            C::from_u64_checked(w)
                .checked_mul(&demand_scale)
                .expect("scaled demand overflows the capacity type")
        };
        let demand = scale(instance.total_demand());
        let inner_cap = match inner {
            InnerCapacity::TotalDemand => demand,
            InnerCapacity::Uniform(c) => C::from_u64_checked(c),
        };
        let source_arcs = (0..m)
            .map(|i| net.add_arc(source, 1 + i, scale(instance.demand(i))))
            .collect();
        let mut edge_arcs = vec![NONE; instance.edges().len()];
        for i in 0..m {
            for r in instance.campaign_edges(i) {
                edge_arcs[r.edge] = net.add_arc(1 + i, 1 + m + r.node, inner_cap);
            }
        }
        let sink_arcs = supply
            .iter()
            .enumerate()
            .map(|(j, &s)| net.add_arc(1 + m + j, sink, s))
            .collect();
        Self {
            net,
            m,
            demand,
            source_arcs,
            edge_arcs,
            sink_arcs,
            maximized: false,
            tree: None,
        }
    }

    pub fn network(&self) -> &MaxFlowNetwork<C> {
        &self.net
    }

    /// Total demand in network units.
    pub fn demand(&self) -> C {
        self.demand
    }

    pub fn value(&self) -> C {
        self.net.value()
    }

    pub fn is_saturated(&self) -> bool {
        self.net.value() >= self.demand
    }

    pub fn supply(&self, user_type: usize) -> C {
        self.net.capacity(self.sink_arcs[user_type])
    }

    pub fn source_arc(&self, campaign: usize) -> ArcId {
        self.source_arcs[campaign]
    }

    pub fn sink_arc(&self, user_type: usize) -> ArcId {
        self.sink_arcs[user_type]
    }

    /// Arc carrying targeting edge `edge` (an index into [`Instance::edges`]).
    pub fn edge_arc(&self, edge: usize) -> ArcId {
        self.edge_arcs[edge]
    }

    pub fn max_flow(&mut self) -> C {
        let v = self.net.max_flow();
        self.maximized = true;
        self.tree = None;
        v
    }

    /// Raises the supply of `user_type` by one and restores a maximum flow.
    /// Returns the new flow value.
    pub fn increment_supply_and_augment(&mut self, user_type: usize) -> C {
        if !self.maximized {
            self.max_flow();
        }
        let arc = self.sink_arcs[user_type];
        self.net.raise_capacity(arc, C::one());
        if self.net.value() >= self.demand {
            return self.net.value();
        }
        let tree = match self.tree.take() {
            Some(t) => t,
            None => {
                let mut t = Vec::new();
                self.net.residual_tree(&mut t);
                t
            }
        };
        let node = 1 + self.m + user_type;
        if tree[node] == NONE {
            // Unreachable from the source: the extra unit cannot be used and
            // the residual graph seen from the source is unchanged.
            self.tree = Some(tree);
            return self.net.value();
        }
        let one = C::one();
        let mut v = node;
        while v != self.net.source {
            let a = tree[v];
            self.net.residual[a] = self.net.residual[a] - one;
            self.net.residual[a ^ 1] = self.net.residual[a ^ 1] + one;
            v = self.net.tail(a);
        }
        self.net.residual[arc] = self.net.residual[arc] - one;
        self.net.residual[arc ^ 1] = self.net.residual[arc ^ 1] + one;
        self.net.value = self.net.value + one;
        self.net.value()
    }

    /// Flow on every targeting edge, as a capacity plan.
    pub fn extract_edge_flows(&self, instance: &Instance) -> Result<CapacityPlan, FlowError> {
        if !self.is_saturated() {
            return Err(FlowError::Unsaturated {
                value: self.net.value().as_u64(),
                demand: self.demand.as_u64(),
            });
        }
        Ok(CapacityPlan::from_entries(
            instance
                .edges()
                .iter()
                .zip(&self.edge_arcs)
                .map(|(&(i, j), &a)| ((i, j), self.net.flow(a).as_u64())),
        ))
    }

    /// Campaigns on the source side of the minimum cut.
    pub fn cut_campaigns(&self) -> Vec<usize> {
        let side = self.net.source_side();
        (0..self.m).filter(|&i| side[1 + i]).collect()
    }

    pub fn check_flow(&self) -> Result<(), String> {
        self.net.check_flow()
    }
}
