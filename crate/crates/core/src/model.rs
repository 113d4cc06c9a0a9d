//! The M1 layer: the seven agent-oriented model templates of a plan, the
//! phase and stereotype vocabularies, and canonical element addressing.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Disaster management phase. Used as a tag, not an execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Prevention,
    Preparedness,
    Response,
    Recovery,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Prevention,
        Phase::Preparedness,
        Phase::Response,
        Phase::Recovery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Prevention => "Prevention",
            Phase::Preparedness => "Preparedness",
            Phase::Response => "Response",
            Phase::Recovery => "Recovery",
        }
    }
}

/// Agent-oriented annotation attached to metamodel concepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stereotype {
    Goal,
    Role,
    Agent,
    Activity,
    Event,
    EnvironmentEntity,
}

impl Stereotype {
    pub const ALL: [Stereotype; 6] = [
        Stereotype::Goal,
        Stereotype::Role,
        Stereotype::Agent,
        Stereotype::Activity,
        Stereotype::Event,
        Stereotype::EnvironmentEntity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stereotype::Goal => "Goal",
            Stereotype::Role => "Role",
            Stereotype::Agent => "Agent",
            Stereotype::Activity => "Activity",
            Stereotype::Event => "Event",
            Stereotype::EnvironmentEntity => "EnvironmentEntity",
        }
    }
}

/// Typed relationship between knowledge units.
///
/// `IsControlledBy` and `Involves` are the inverses of `Controls` and
/// `ParticipatesIn`; they are derived at query time and never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    #[serde(rename = "isPeer")]
    IsPeer,
    Controls,
    #[serde(rename = "isControlledBy")]
    IsControlledBy,
    #[serde(rename = "rolePursueGoal")]
    RolePursueGoal,
    ParticipatesIn,
    Involves,
}

impl RelationKind {
    pub const ALL: [RelationKind; 6] = [
        RelationKind::IsPeer,
        RelationKind::Controls,
        RelationKind::IsControlledBy,
        RelationKind::RolePursueGoal,
        RelationKind::ParticipatesIn,
        RelationKind::Involves,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::IsPeer => "isPeer",
            RelationKind::Controls => "Controls",
            RelationKind::IsControlledBy => "isControlledBy",
            RelationKind::RolePursueGoal => "rolePursueGoal",
            RelationKind::ParticipatesIn => "ParticipatesIn",
            RelationKind::Involves => "Involves",
        }
    }

    /// The relation read in the opposite direction. `IsPeer` and
    /// `RolePursueGoal` have no named inverse and map to themselves.
    pub fn inverse(self) -> RelationKind {
        match self {
            RelationKind::Controls => RelationKind::IsControlledBy,
            RelationKind::IsControlledBy => RelationKind::Controls,
            RelationKind::ParticipatesIn => RelationKind::Involves,
            RelationKind::Involves => RelationKind::ParticipatesIn,
            other => other,
        }
    }

    /// True for the kinds that are materialized from a stored inverse.
    pub fn is_derived(self) -> bool {
        matches!(self, RelationKind::IsControlledBy | RelationKind::Involves)
    }

    pub fn is_symmetric(self) -> bool {
        self == RelationKind::IsPeer
    }
}

/// Kind of an addressable M1 element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Goal,
    Role,
    Agent,
    Activity,
    Trigger,
    Resource,
    Interaction,
    Scenario,
}

impl ElementKind {
    /// Fixed enumeration order.
    pub const ALL: [ElementKind; 8] = [
        ElementKind::Goal,
        ElementKind::Role,
        ElementKind::Agent,
        ElementKind::Activity,
        ElementKind::Trigger,
        ElementKind::Resource,
        ElementKind::Interaction,
        ElementKind::Scenario,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Goal => "goal",
            ElementKind::Role => "role",
            ElementKind::Agent => "agent",
            ElementKind::Activity => "activity",
            ElementKind::Trigger => "trigger",
            ElementKind::Resource => "resource",
            ElementKind::Interaction => "interaction",
            ElementKind::Scenario => "scenario",
        }
    }
}

/// The concept family an element of `kind` is mapped into. Interactions and
/// scenarios yield relationships and groupings rather than mapped elements.
pub fn stereotype_of(kind: ElementKind) -> Option<Stereotype> {
    match kind {
        ElementKind::Goal => Some(Stereotype::Goal),
        ElementKind::Role => Some(Stereotype::Role),
        ElementKind::Agent => Some(Stereotype::Agent),
        ElementKind::Activity => Some(Stereotype::Activity),
        ElementKind::Trigger => Some(Stereotype::Event),
        ElementKind::Resource => Some(Stereotype::EnvironmentEntity),
        ElementKind::Interaction | ElementKind::Scenario => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {what} `{value}`")]
pub struct UnknownName {
    pub what: &'static str,
    pub value: String,
}

macro_rules! impl_name_traits {
    ($ty:ty, $what:literal) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = UnknownName;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| UnknownName {
                        what: $what,
                        value: s.to_string(),
                    })
            }
        }
    };
}

impl_name_traits!(Phase, "phase");
impl_name_traits!(Stereotype, "stereotype");
impl_name_traits!(RelationKind, "relation kind");
impl_name_traits!(ElementKind, "element kind");

/// Returns true if `s` matches `[A-Za-z_][A-Za-z0-9_-]*`.
pub fn is_token(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Canonical address of an M1 element, rendered as
/// `plan_id/phase/kind/element_id`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementRef {
    pub plan_id: String,
    pub phase: Phase,
    pub kind: ElementKind,
    pub element_id: String,
}

impl ElementRef {
    pub fn new(
        plan_id: impl Into<String>,
        phase: Phase,
        kind: ElementKind,
        element_id: impl Into<String>,
    ) -> Self {
        ElementRef {
            plan_id: plan_id.into(),
            phase,
            kind,
            element_id: element_id.into(),
        }
    }

    pub fn path(&self) -> String {
        self.to_string()
    }

    pub fn stereotype(&self) -> Option<Stereotype> {
        stereotype_of(self.kind)
    }
}

impl fmt::Display for ElementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.plan_id, self.phase, self.kind, self.element_id
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("element path `{0}` must have four `/`-separated segments")]
    Segments(String),
    #[error("element path `{path}`: {source}")]
    Name { path: String, source: UnknownName },
    #[error("element path `{path}`: `{token}` is not a valid identifier")]
    Token { path: String, token: String },
}

impl FromStr for ElementRef {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        let [plan_id, phase, kind, element_id] = parts[..] else {
            return Err(PathError::Segments(s.to_string()));
        };
        for token in [plan_id, element_id] {
            if !is_token(token) {
                return Err(PathError::Token {
                    path: s.to_string(),
                    token: token.to_string(),
                });
            }
        }
        let name_err = |source| PathError::Name {
            path: s.to_string(),
            source,
        };
        Ok(ElementRef {
            plan_id: plan_id.to_string(),
            phase: phase.parse().map_err(name_err)?,
            kind: kind.parse().map_err(name_err)?,
            element_id: element_id.to_string(),
        })
    }
}

impl Serialize for ElementRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ElementRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A disaster management plan: the agent models of each populated phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub plan_id: String,
    pub title: String,
    pub phases: BTreeMap<Phase, PhaseModels>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseModels {
    pub goals: Vec<GoalNode>,
    pub roles: Vec<RoleDef>,
    pub organisation: Vec<OrgRelation>,
    pub interactions: Vec<Interaction>,
    pub environment: Vec<EnvEntity>,
    pub agents: Vec<AgentDef>,
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalNode {
    pub goal_id: String,
    pub description: String,
    pub subgoals: Vec<GoalNode>,
    pub role_ids: Vec<String>,
}

impl GoalNode {
    /// Pre-order walk over this goal and all of its subgoals.
    pub fn walk<'a>(&'a self, out: &mut Vec<&'a GoalNode>) {
        out.push(self);
        for sub in &self.subgoals {
            sub.walk(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleDef {
    pub role_id: String,
    pub description: String,
    pub responsibilities: Vec<Responsibility>,
    pub constraints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Responsibility {
    pub text: String,
    pub goal_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrgKind {
    Peer,
    Controls,
}

impl OrgKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OrgKind::Peer => "peer",
            OrgKind::Controls => "controls",
        }
    }
}

/// Organisational relation between two roles. Peer relations are kept with
/// `left < right`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrgRelation {
    pub kind: OrgKind,
    pub left: String,
    pub right: String,
}

impl OrgRelation {
    pub fn controls(controller: impl Into<String>, controlled: impl Into<String>) -> Self {
        OrgRelation {
            kind: OrgKind::Controls,
            left: controller.into(),
            right: controlled.into(),
        }
    }

    pub fn peer(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        let (left, right) = if a <= b { (a, b) } else { (b, a) };
        OrgRelation {
            kind: OrgKind::Peer,
            left,
            right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub interaction_id: String,
    pub goal_id: String,
    pub participants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvEntity {
    pub entity_id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDef {
    pub agent_id: String,
    pub description: String,
    pub plays: Vec<String>,
    pub triggers: Vec<Trigger>,
    pub activities: Vec<Activity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub trigger_id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub activity_id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub goal_id: String,
    pub precondition: String,
    pub postcondition: String,
    pub steps: Vec<ScenarioStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioStep {
    pub activity_id: String,
    pub actor_role_id: String,
    pub resource_ids: Vec<String>,
    pub mode: StepMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    Sequential,
    Parallel,
    Interleaved,
}

impl StepMode {
    pub const ALL: [StepMode; 3] = [
        StepMode::Sequential,
        StepMode::Parallel,
        StepMode::Interleaved,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepMode::Sequential => "sequential",
            StepMode::Parallel => "parallel",
            StepMode::Interleaved => "interleaved",
        }
    }
}

impl_name_traits!(StepMode, "step mode");

impl PhaseModels {
    /// Every goal and subgoal, pre-order.
    pub fn all_goals(&self) -> Vec<&GoalNode> {
        let mut out = Vec::new();
        for g in &self.goals {
            g.walk(&mut out);
        }
        out
    }

    /// Agent activities deduplicated by id, first declaration wins.
    pub fn activities(&self) -> Vec<&Activity> {
        let mut seen = HashSet::new();
        self.agents
            .iter()
            .flat_map(|a| &a.activities)
            .filter(|act| seen.insert(act.activity_id.as_str()))
            .collect()
    }

    pub fn triggers(&self) -> Vec<&Trigger> {
        self.agents.iter().flat_map(|a| &a.triggers).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
            && self.roles.is_empty()
            && self.organisation.is_empty()
            && self.interactions.is_empty()
            && self.environment.is_empty()
            && self.agents.is_empty()
            && self.scenarios.is_empty()
    }
}

/// One addressable element of a plan as produced by [`enumerate_elements`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ElementEntry {
    pub element: ElementRef,
    pub stereotype: Option<Stereotype>,
    pub description: String,
}

/// Lists every element of the plan: phases in enum order, kinds in
/// [`ElementKind::ALL`] order, declaration order within a kind.
pub fn enumerate_elements(plan: &Plan) -> Vec<ElementEntry> {
    let mut out = Vec::new();
    for (&phase, models) in &plan.phases {
        let mut push = |kind: ElementKind, id: &str, description: String| {
            out.push(ElementEntry {
                element: ElementRef::new(plan.plan_id.clone(), phase, kind, id),
                stereotype: stereotype_of(kind),
                description,
            });
        };
        for g in models.all_goals() {
            push(ElementKind::Goal, &g.goal_id, g.description.clone());
        }
        for r in &models.roles {
            push(ElementKind::Role, &r.role_id, r.description.clone());
        }
        for a in &models.agents {
            push(ElementKind::Agent, &a.agent_id, a.description.clone());
        }
        for act in models.activities() {
            push(
                ElementKind::Activity,
                &act.activity_id,
                act.description.clone(),
            );
        }
        for t in models.triggers() {
            push(ElementKind::Trigger, &t.trigger_id, t.description.clone());
        }
        for e in &models.environment {
            push(ElementKind::Resource, &e.entity_id, e.description.clone());
        }
        for i in &models.interactions {
            push(
                ElementKind::Interaction,
                &i.interaction_id,
                format!("{} pursue {}", i.participants.join(", "), i.goal_id),
            );
        }
        for s in &models.scenarios {
            push(
                ElementKind::Scenario,
                &s.scenario_id,
                format!("achieves {}", s.goal_id),
            );
        }
    }
    out
}
