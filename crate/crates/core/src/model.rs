//! Instance data model: the demand-supply graph, contract demands and the
//! user-type arrival distribution, plus the capacity plans read off a flow.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on `Σ p_j = 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Optional human-readable names. Never consulted by the algorithms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub campaigns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub user_types: Vec<String>,
}

/// A targeting edge seen from one of its endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeRef {
    /// The other endpoint (campaign index when seen from a type, and vice versa).
    pub node: usize,
    /// Position of the edge in [`Instance::edges`].
    pub edge: usize,
}

/// A guaranteed-delivery instance `(G, W, D)`.
///
/// Campaigns and user types are dense zero-based indices. The adjacency lists
/// are sorted by index, which fixes the tie-breaking order of every policy
/// and the arc order of every flow network built from the instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    demands: Vec<u64>,
    probs: Vec<f64>,
    edges: Vec<(usize, usize)>,
    labels: Option<Labels>,
    campaign_adj: Vec<Vec<EdgeRef>>,
    type_adj: Vec<Vec<EdgeRef>>,
}

impl Instance {
    /// Builds and validates an instance.
    pub fn new(
        demands: Vec<u64>,
        probs: Vec<f64>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self, ModelError> {
        let instance = Self::from_parts_unchecked(demands, probs, edges, None);
        let report = validate(&instance);
        if report.is_valid() {
            Ok(instance)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    /// Builds an instance without validation. Out-of-range edges are kept in
    /// the edge list (so [`validate`] can report them) but left out of the
    /// adjacency lists.
    pub fn from_parts_unchecked(
        demands: Vec<u64>,
        probs: Vec<f64>,
        edges: Vec<(usize, usize)>,
        labels: Option<Labels>,
    ) -> Self {
        let m = demands.len();
        let n = probs.len();
        let mut campaign_adj = vec![Vec::new(); m];
        let mut type_adj = vec![Vec::new(); n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            if i < m && j < n {
                campaign_adj[i].push(EdgeRef { node: j, edge: e });
                type_adj[j].push(EdgeRef { node: i, edge: e });
            }
        }
        for list in campaign_adj.iter_mut().chain(type_adj.iter_mut()) {
            list.sort_by_key(|r| (r.node, r.edge));
        }
        Self {
            demands,
            probs,
            edges,
            labels,
            campaign_adj,
            type_adj,
        }
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Same graph and demands under a different arrival distribution.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self, ModelError> {
        assert_eq!(probs.len(), self.n(), "distribution length must match n");
        let next = Self::from_parts_unchecked(
            self.demands.clone(),
            probs,
            self.edges.clone(),
            self.labels.clone(),
        );
        let report = validate(&next);
        if report.is_valid() {
            Ok(next)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    /// Same graph and distribution with new demands.
    pub fn with_demands(&self, demands: Vec<u64>) -> Result<Self, ModelError> {
        assert_eq!(demands.len(), self.m(), "demand length must match m");
        let next = Self::from_parts_unchecked(
            demands,
            self.probs.clone(),
            self.edges.clone(),
            self.labels.clone(),
        );
        let report = validate(&next);
        if report.is_valid() {
            Ok(next)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    /// Number of campaigns.
    pub fn m(&self) -> usize {
        self.demands.len()
    }

    /// Number of user types.
    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn demands(&self) -> &[u64] {
        &self.demands
    }

    pub fn demand(&self, campaign: usize) -> u64 {
        self.demands[campaign]
    }

    /// `M = Σ W_i`.
    pub fn total_demand(&self) -> u64 {
        self.demands.iter().sum()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, user_type: usize) -> f64 {
        self.probs[user_type]
    }

    pub fn p_min(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn p_max(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    /// `Γ(a_i)`: user types targeted by a campaign, ascending.
    pub fn campaign_edges(&self, campaign: usize) -> &[EdgeRef] {
        &self.campaign_adj[campaign]
    }

    /// `Γ(u_j)`: campaigns targeting a user type, ascending.
    pub fn type_edges(&self, user_type: usize) -> &[EdgeRef] {
        &self.type_adj[user_type]
    }

    pub fn campaign_degree(&self, campaign: usize) -> usize {
        self.campaign_adj[campaign].len()
    }

    /// `W(u_j) = Σ_{a_i ∈ Γ(u_j)} W_i`.
    pub fn type_demand(&self, user_type: usize) -> u64 {
        self.type_adj[user_type]
            .iter()
            .map(|r| self.demands[r.node])
            .sum()
    }

    /// Position of edge `(campaign, user_type)` in [`Instance::edges`].
    pub fn edge_index(&self, campaign: usize, user_type: usize) -> Option<usize> {
        let adj = self.campaign_adj.get(campaign)?;
        adj.binary_search_by_key(&user_type, |r| r.node)
            .ok()
            .map(|k| adj[k].edge)
    }
}

/// One broken instance invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoCampaigns,
    NoUserTypes,
    DimensionMismatch {
        field: &'static str,
        declared: usize,
        actual: usize,
    },
    DistributionNotNormalized {
        sum: f64,
    },
    ProbabilityOutOfRange {
        user_type: usize,
        p: f64,
    },
    ZeroDemand {
        campaign: usize,
    },
    DemandOverflow,
    UnreachableCampaign {
        campaign: usize,
    },
    EdgeOutOfRange {
        campaign: usize,
        user_type: usize,
    },
    DuplicateEdge {
        campaign: usize,
        user_type: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoCampaigns => write!(f, "instance has no campaigns"),
            Violation::NoUserTypes => write!(f, "instance has no user types"),
            Violation::DimensionMismatch {
                field,
                declared,
                actual,
            } => write!(f, "`{field}` has length {actual}, declared {declared}"),
            Violation::DistributionNotNormalized { sum } => {
                write!(f, "distribution not normalized (sum = {sum})")
            }
            Violation::ProbabilityOutOfRange { user_type, p } => {
                write!(f, "probability of user type {user_type} is {p}, outside (0, 1]")
            }
            Violation::ZeroDemand { campaign } => {
                write!(f, "campaign {campaign} has zero demand")
            }
            Violation::DemandOverflow => write!(f, "total demand overflows"),
            Violation::UnreachableCampaign { campaign } => {
                write!(f, "unreachable campaign {campaign} (no targeting edge)")
            }
            Violation::EdgeOutOfRange {
                campaign,
                user_type,
            } => write!(f, "edge [{campaign}, {user_type}] references a missing node"),
            Violation::DuplicateEdge {
                campaign,
                user_type,
            } => write!(f, "duplicate edge [{campaign}, {user_type}]"),
        }
    }
}

/// Result of [`validate`]: empty means valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every instance invariant and reports all violations found.
pub fn validate(instance: &Instance) -> ValidationReport {
    let mut violations = Vec::new();
    let (m, n) = (instance.m(), instance.n());
    if m == 0 {
        violations.push(Violation::NoCampaigns);
    }
    if n == 0 {
        violations.push(Violation::NoUserTypes);
    }

    for (j, &p) in instance.probs.iter().enumerate() {
        if !(p > 0.0 && p <= 1.0) {
            violations.push(Violation::ProbabilityOutOfRange { user_type: j, p });
        }
    }
    let sum: f64 = instance.probs.iter().sum();
    if n > 0 && ((sum - 1.0).abs() > NORMALIZATION_TOLERANCE || sum.is_nan()) {
        violations.push(Violation::DistributionNotNormalized { sum });
    }

    for (i, &w) in instance.demands.iter().enumerate() {
        if w == 0 {
            violations.push(Violation::ZeroDemand { campaign: i });
        }
    }
    if instance
        .demands
        .iter()
        .try_fold(0u64, |acc, &w| acc.checked_add(w))
        .is_none_or(|total| total > i64::MAX as u64 / 4)
    {
        violations.push(Violation::DemandOverflow);
    }

    let mut seen = std::collections::HashSet::with_capacity(instance.edges.len());
    for &(i, j) in &instance.edges {
        if i >= m || j >= n {
            violations.push(Violation::EdgeOutOfRange {
                campaign: i,
                user_type: j,
            });
        } else if !seen.insert((i, j)) {
            violations.push(Violation::DuplicateEdge {
                campaign: i,
                user_type: j,
            });
        }
    }

    for (i, adj) in instance.campaign_adj.iter().enumerate() {
        if adj.is_empty() {
            violations.push(Violation::UnreachableCampaign { campaign: i });
        }
    }

    ValidationReport { violations }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    m: usize,
    n: usize,
    demands: Vec<u64>,
    probs: Vec<f64>,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Labels>,
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ModelError> {
    let parse_error = |path: String, e: serde_json::Error| ModelError::Parse {
        path,
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        parse_error(path, err.into_inner())
    })?;
    de.end().map_err(|e| parse_error(".".to_string(), e))?;
    Ok(value)
}

/// Parses and validates an instance from its JSON form.
pub fn load_instance(bytes: &[u8]) -> Result<Instance, ModelError> {
    let file: InstanceFile = parse_json(bytes)?;
    let mut structural = Vec::new();
    if file.demands.len() != file.m {
        structural.push(Violation::DimensionMismatch {
            field: "demands",
            declared: file.m,
            actual: file.demands.len(),
        });
    }
    if file.probs.len() != file.n {
        structural.push(Violation::DimensionMismatch {
            field: "probs",
            declared: file.n,
            actual: file.probs.len(),
        });
    }
    let edges = file.edges.into_iter().map(|[i, j]| (i, j)).collect();
    let instance = Instance::from_parts_unchecked(file.demands, file.probs, edges, file.labels);
    let mut report = validate(&instance);
    structural.append(&mut report.violations);
    if structural.is_empty() {
        Ok(instance)
    } else {
        Err(ModelError::Invalid(ValidationReport {
            violations: structural,
        }))
    }
}

/// Serializes an instance to compact JSON (newline-terminated).
pub fn save_instance(instance: &Instance) -> Vec<u8> {
    let file = InstanceFile {
        m: instance.m(),
        n: instance.n(),
        demands: instance.demands.clone(),
        probs: instance.probs.clone(),
        edges: instance.edges.iter().map(|&(i, j)| [i, j]).collect(),
        labels: instance.labels.clone(),
    };
    let mut out = serde_json::to_vec(&file).expect("instance serialization cannot fail");
    out.push(b'\n');
    out
}

/// Planned deliveries `C_{i,j}` per targeting edge.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CapacityPlan {
    entries: BTreeMap<(usize, usize), u64>,
}

impl CapacityPlan {
    pub fn new(entries: BTreeMap<(usize, usize), u64>) -> Self {
        Self { entries }
    }

    pub fn from_entries<I: IntoIterator<Item = ((usize, usize), u64)>>(entries: I) -> Self {
        Self {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, campaign: usize, user_type: usize) -> u64 {
        self.entries
            .get(&(campaign, user_type))
            .copied()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ_j C_{i,j}` for one campaign.
    pub fn campaign_total(&self, campaign: usize) -> u64 {
        self.entries
            .range((campaign, 0)..(campaign + 1, 0))
            .map(|(_, &c)| c)
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    /// Capacities aligned with [`Instance::edges`].
    pub fn per_edge(&self, instance: &Instance) -> Vec<u64> {
        instance
            .edges()
            .iter()
            .map(|&(i, j)| self.get(i, j))
            .collect()
    }

    /// True when every entry sits on a targeting edge of `instance`.
    pub fn is_supported_by(&self, instance: &Instance) -> bool {
        self.entries
            .keys()
            .all(|&(i, j)| instance.edge_index(i, j).is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Instance {
        Instance::new(vec![1], vec![1.0], vec![(0, 0)]).unwrap()
    }

    #[test]
    fn minimal_instance_is_valid() {
        assert!(validate(&minimal()).is_valid());
    }

    #[test]
    fn unnormalized_distribution_is_reported() {
        let inst = Instance::from_parts_unchecked(vec![1], vec![0.5, 0.4], vec![(0, 0)], None);
        let report = validate(&inst);
        assert_eq!(report.violations.len(), 1);
        assert!(report.to_string().contains("distribution not normalized"));
    }

    #[test]
    fn campaign_without_edges_is_unreachable() {
        let inst = Instance::from_parts_unchecked(vec![1, 2], vec![1.0], vec![(0, 0)], None);
        let report = validate(&inst);
        assert_eq!(
            report.violations,
            vec![Violation::UnreachableCampaign { campaign: 1 }]
        );
        assert!(report.to_string().contains("unreachable campaign"));
    }

    #[test]
    fn duplicate_and_dangling_edges_are_rejected() {
        let inst = Instance::from_parts_unchecked(
            vec![1],
            vec![1.0],
            vec![(0, 0), (0, 0), (0, 3)],
            None,
        );
        let report = validate(&inst);
        assert!(report.violations.contains(&Violation::DuplicateEdge {
            campaign: 0,
            user_type: 0
        }));
        assert!(report.violations.contains(&Violation::EdgeOutOfRange {
            campaign: 0,
            user_type: 3
        }));
    }

    #[test]
    fn zero_demand_and_bad_probability() {
        let inst =
            Instance::from_parts_unchecked(vec![0], vec![1.5, -0.5], vec![(0, 0)], None);
        let report = validate(&inst);
        assert!(report.violations.contains(&Violation::ZeroDemand { campaign: 0 }));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ProbabilityOutOfRange { user_type: 1, .. })));
    }

    #[test]
    fn validate_does_not_mutate() {
        let inst = Instance::from_parts_unchecked(vec![1], vec![0.5], vec![], None);
        let before = inst.clone();
        let _ = validate(&inst);
        assert_eq!(inst, before);
    }

    #[test]
    fn round_trip_minimal() {
        let inst = minimal();
        assert_eq!(load_instance(&save_instance(&inst)).unwrap(), inst);
    }

    #[test]
    fn round_trip_keeps_labels() {
        let inst = minimal().with_labels(Labels {
            campaigns: vec!["spring sale".into()],
            user_types: vec!["age 20-25".into()],
        });
        let back = load_instance(&save_instance(&inst)).unwrap();
        assert_eq!(back.labels().unwrap().user_types[0], "age 20-25");
        assert_eq!(back, inst);
    }

    #[test]
    fn malformed_demands_names_field() {
        let text = br#"{"m": 1, "n": 1, "demands": "abc", "probs": [1.0], "edges": [[0, 0]]}"#;
        match load_instance(text) {
            Err(ModelError::Parse { path, line, .. }) => {
                assert_eq!(path, "demands");
                assert_eq!(line, 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_nested_field_reports_path() {
        let text = b"{\"m\": 1, \"n\": 1, \"demands\": [1],\n \"probs\": [1.0],\n \"edges\": [[0, \"x\"]]}";
        let err = load_instance(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("edges[0][1]"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn declared_sizes_must_match() {
        let text = br#"{"m": 2, "n": 1, "demands": [1], "probs": [1.0], "edges": [[0, 0]]}"#;
        let err = load_instance(text).unwrap_err();
        assert!(matches!(err, ModelError::Invalid(_)));
        assert!(err.to_string().contains("`demands` has length 1, declared 2"));
    }

    #[test]
    fn load_rejects_duplicates() {
        let text = br#"{"m": 1, "n": 1, "demands": [1], "probs": [1.0], "edges": [[0, 0], [0, 0]]}"#;
        assert!(load_instance(text)
            .unwrap_err()
            .to_string()
            .contains("duplicate edge"));
    }

    #[test]
    fn adjacency_and_derived_values() {
        let inst = Instance::new(
            vec![10, 20],
            vec![0.4, 0.6],
            vec![(1, 0), (0, 0), (0, 1)],
        )
        .unwrap();
        assert_eq!(inst.total_demand(), 30);
        assert_eq!(inst.type_demand(0), 30);
        assert_eq!(inst.type_demand(1), 10);
        let nodes: Vec<_> = inst.type_edges(0).iter().map(|r| r.node).collect();
        assert_eq!(nodes, vec![0, 1]);
        assert_eq!(inst.edge_index(1, 0), Some(0));
        assert_eq!(inst.edge_index(1, 1), None);
        assert_eq!(inst.campaign_degree(0), 2);
        assert_eq!(inst.p_min(), 0.4);
        assert_eq!(inst.p_max(), 0.6);
    }

    #[test]
    fn capacity_plan_totals() {
        let plan = CapacityPlan::from_entries([((0, 0), 3), ((0, 1), 4), ((1, 0), 5)]);
        assert_eq!(plan.campaign_total(0), 7);
        assert_eq!(plan.campaign_total(1), 5);
        assert_eq!(plan.total(), 12);
        assert_eq!(plan.get(1, 1), 0);
    }
}
