//! Online delivery policies.
//!
//! Every policy owns a [`PolicyState`] (residual demands and the countdown of
//! undelivered exposures) and, per visiting user, either delivers one or more
//! eligible campaigns or passes the user through for other use. A campaign is
//! eligible for a user of type `u_j` when it targets `u_j` and still has
//! residual demand. All ties break towards the lowest campaign index.

mod baselines;
mod flow_based;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use thiserror::Error;

use crate::model::Instance;
use crate::planner::{FlowPlan, PlanVariant};

pub use baselines::{
    delivery_values, hwm_allocation, DegreeGreedyPolicy, HighWaterMarkPolicy, HwmAllocation,
    ProbabilityGreedyPolicy, RandomPolicy,
};
pub use flow_based::{
    DeliveryRule, FlowBasedPolicy, GreedyRule, MultiDeliveryPolicy, RepresentativeRule, SmoothRule,
};

/// Residual demands of one episode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyState {
    residual: Vec<u64>,
    remaining: u64,
}

impl PolicyState {
    pub fn new(instance: &Instance) -> Self {
        Self {
            residual: instance.demands().to_vec(),
            remaining: instance.total_demand(),
        }
    }

    pub fn residual_demands(&self) -> &[u64] {
        &self.residual
    }

    pub fn residual(&self, campaign: usize) -> u64 {
        self.residual[campaign]
    }

    pub fn remaining_total(&self) -> u64 {
        self.remaining
    }

    pub fn is_done(&self) -> bool {
        self.remaining == 0
    }

    /// Records one exposure of `campaign`.
    pub fn deliver(&mut self, campaign: usize) {
        assert!(self.residual[campaign] > 0, "campaign {campaign} is already satisfied");
        self.residual[campaign] -= 1;
        self.remaining -= 1;
    }
}

/// Outcome for one visiting user.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeliveryDecision {
    Deliver(usize),
    PassThrough,
}

impl DeliveryDecision {
    fn from_choice(choice: Option<usize>) -> Self {
        choice.map_or(DeliveryDecision::PassThrough, DeliveryDecision::Deliver)
    }
}

/// A policy instantiated for one episode.
pub trait DeliveryPolicy {
    fn state(&self) -> &PolicyState;

    /// Serves one user of `user_type`, appending every delivered campaign to
    /// `delivered` (nothing appended means the user was passed through).
    fn serve(&mut self, user_type: usize, rng: &mut dyn RngCore, delivered: &mut Vec<usize>);
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("unknown policy `{name}`; valid names: {}", VALID_NAMES.join(", "))]
    UnknownName { name: String },
    #[error("policy {policy} needs a {expected} plan, got {got}")]
    WrongPlan {
        policy: PolicyKind,
        expected: PlanVariant,
        got: String,
    },
}

pub const VALID_NAMES: &[&str] = &[
    "fb-greedy",
    "fb-smooth",
    "fb-representative",
    "fb-multi:<k>",
    "random",
    "dg",
    "pg",
    "hwm",
];

/// Policy selector, named as on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    FbGreedy,
    FbSmooth,
    FbRepresentative,
    FbMulti(u32),
    Random,
    DegreeGreedy,
    ProbabilityGreedy,
    Hwm,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::FbGreedy => write!(f, "fb-greedy"),
            PolicyKind::FbSmooth => write!(f, "fb-smooth"),
            PolicyKind::FbRepresentative => write!(f, "fb-representative"),
            PolicyKind::FbMulti(k) => write!(f, "fb-multi:{k}"),
            PolicyKind::Random => write!(f, "random"),
            PolicyKind::DegreeGreedy => write!(f, "dg"),
            PolicyKind::ProbabilityGreedy => write!(f, "pg"),
            PolicyKind::Hwm => write!(f, "hwm"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s {
            "fb-greedy" => PolicyKind::FbGreedy,
            "fb-smooth" => PolicyKind::FbSmooth,
            "fb-representative" => PolicyKind::FbRepresentative,
            "random" => PolicyKind::Random,
            "dg" => PolicyKind::DegreeGreedy,
            "pg" => PolicyKind::ProbabilityGreedy,
            "hwm" => PolicyKind::Hwm,
            _ => match s.strip_prefix("fb-multi:").and_then(|k| k.parse::<u32>().ok()) {
                Some(k) if k >= 1 => PolicyKind::FbMulti(k),
                _ => {
                    return Err(PolicyError::UnknownName {
                        name: s.to_string(),
                    })
                }
            },
        };
        Ok(kind)
    }
}

impl serde::Serialize for PolicyKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for PolicyKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

impl PolicyKind {
    /// Parses a comma-separated list.
    pub fn parse_list(list: &str) -> Result<Vec<PolicyKind>, PolicyError> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }

    /// The plan the policy is driven by. HWM uses the standard plan's budget
    /// as its supply forecast.
    pub fn plan_variant(&self) -> Option<PlanVariant> {
        match self {
            PolicyKind::FbGreedy | PolicyKind::FbSmooth | PolicyKind::Hwm => {
                Some(PlanVariant::Standard)
            }
            PolicyKind::FbRepresentative => Some(PlanVariant::Representative),
            PolicyKind::FbMulti(k) => Some(PlanVariant::Multiple(*k)),
            PolicyKind::Random | PolicyKind::DegreeGreedy | PolicyKind::ProbabilityGreedy => None,
        }
    }

    /// Ad slots per page view.
    pub fn slots(&self) -> u32 {
        match self {
            PolicyKind::FbMulti(k) => *k,
            _ => 1,
        }
    }

    /// Instantiates the policy for one episode.
    pub fn build<'a>(
        &self,
        instance: &'a Instance,
        plan: Option<&FlowPlan>,
    ) -> Result<Box<dyn DeliveryPolicy + 'a>, PolicyError> {
        let plan = match self.plan_variant() {
            Some(expected) => match plan {
                Some(p) if p.variant == expected => Some(p),
                other => {
                    return Err(PolicyError::WrongPlan {
                        policy: *self,
                        expected,
                        got: other.map_or("none".to_string(), |p| p.variant.to_string()),
                    })
                }
            },
            None => None,
        };
        Ok(match (self, plan) {
            (PolicyKind::FbGreedy, Some(plan)) => {
                Box::new(FlowBasedPolicy::new(instance, GreedyRule::new(instance, plan)))
            }
            (PolicyKind::FbSmooth, Some(plan)) => {
                Box::new(FlowBasedPolicy::new(instance, SmoothRule::new(instance, plan)))
            }
            (PolicyKind::FbRepresentative, Some(plan)) => Box::new(FlowBasedPolicy::new(
                instance,
                RepresentativeRule::new(instance, plan),
            )),
            (PolicyKind::FbMulti(k), Some(plan)) => {
                Box::new(MultiDeliveryPolicy::new(instance, plan, *k))
            }
            (PolicyKind::Hwm, Some(plan)) => {
                Box::new(HighWaterMarkPolicy::new(instance, plan.z_hat as f64))
            }
            (PolicyKind::Random, _) => Box::new(RandomPolicy::new(instance)),
            (PolicyKind::DegreeGreedy, _) => Box::new(DegreeGreedyPolicy::new(instance)),
            (PolicyKind::ProbabilityGreedy, _) => Box::new(ProbabilityGreedyPolicy::new(instance)),
            _ => unreachable!("plan presence checked above"),
        })
    }
}
