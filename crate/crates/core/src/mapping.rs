//! Mapping M1 elements onto M2 concepts and transferring the mapped
//! elements into knowledge units and typed edges.
//!
//! Candidate concepts for an element are those of the element's phase that
//! carry the element kind's stereotype. A practitioner (interactively or via
//! a batch file) picks one; [`suggest`] only orders the candidates.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Duration, DurationRound, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::model::*;
use crate::records::{quote_field, sha256_hex, split_fields, FieldCursor};
use crate::registry::{Concept, Registry};
use crate::validate::{count_by_severity, validate_plan};

/// An audited practitioner decision. A record with no concept retracts the
/// mapping it supersedes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MappingRecord {
    pub element: ElementRef,
    pub stereotype: Stereotype,
    pub concept_name: Option<String>,
    pub concept_phase: Phase,
    pub mapper: String,
    pub timestamp: DateTime<Utc>,
    /// Index of the superseded record in the same mapping log.
    pub supersedes: Option<usize>,
}

impl MappingRecord {
    pub fn is_retraction(&self) -> bool {
        self.concept_name.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error("unknown element `{0}`")]
    UnknownElement(ElementRef),
    #[error("`{0}` is not a mappable element kind")]
    NotMappable(ElementRef),
    #[error("no {stereotype} concepts in {phase}: the registry is under-annotated")]
    NoCandidates {
        stereotype: Stereotype,
        phase: Phase,
    },
    #[error("`{concept}` is not a {stereotype} candidate for `{element}` (candidates: {})", candidates.join(", "))]
    CandidateViolation {
        element: ElementRef,
        concept: String,
        stereotype: Stereotype,
        candidates: Vec<String>,
    },
    #[error("`{0}` has no active mapping")]
    NotMapped(ElementRef),
    #[error("`{element}`: expected active record {expected:?}, found {actual:?}")]
    SupersessionConflict {
        element: ElementRef,
        expected: Option<usize>,
        actual: Option<usize>,
    },
    #[error("mapping session is stale")]
    StaleSession,
    #[error("plan `{plan_id}` has {errors} validation error(s); transfer refused")]
    ValidationGate { plan_id: String, errors: usize },
}

impl MappingError {
    /// Machine-readable error class.
    pub fn class(&self) -> &'static str {
        match self {
            MappingError::UnknownElement(_) => "UnknownElement",
            MappingError::NotMappable(_) => "NotMappable",
            MappingError::NoCandidates { .. } => "NoCandidates",
            MappingError::CandidateViolation { .. } => "CandidateViolation",
            MappingError::NotMapped(_) => "NotMapped",
            MappingError::SupersessionConflict { .. } => "SupersessionConflict",
            MappingError::StaleSession => "StaleSession",
            MappingError::ValidationGate { .. } => "ValidationGate",
        }
    }
}

// ---------------------------------------------------------------------------
// Suggestions

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub concept: Concept,
    pub score: f64,
}

/// Lowercased maximal alphanumeric runs.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Jaccard similarity of two token sets; two empty sets score 0.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn score(element_text: &str, definition: &str) -> f64 {
    jaccard(&tokens(element_text), &tokens(definition))
}

fn candidates_for<'r>(
    registry: &'r Registry,
    element: &ElementRef,
) -> Result<(Stereotype, Vec<&'r Concept>), MappingError> {
    let stereotype = element
        .stereotype()
        .ok_or_else(|| MappingError::NotMappable(element.clone()))?;
    Ok((stereotype, registry.candidates(stereotype, element.phase)))
}

/// Scores every candidate concept against the element description, sorted
/// by score descending then name ascending.
pub fn suggest(
    element: &ElementRef,
    description: &str,
    registry: &Registry,
) -> Result<Vec<Suggestion>, MappingError> {
    let (stereotype, candidates) = candidates_for(registry, element)?;
    if candidates.is_empty() {
        return Err(MappingError::NoCandidates {
            stereotype,
            phase: element.phase,
        });
    }
    Ok(rank(candidates.into_iter().cloned(), description))
}

pub(crate) fn rank(
    candidates: impl IntoIterator<Item = Concept>,
    description: &str,
) -> Vec<Suggestion> {
    let element_tokens = tokens(description);
    let mut out: Vec<Suggestion> = candidates
        .into_iter()
        .map(|concept| Suggestion {
            score: jaccard(&element_tokens, &tokens(&concept.definition)),
            concept,
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.concept.name.cmp(&b.concept.name))
    });
    out
}

// ---------------------------------------------------------------------------
// Mapping log

/// Non-superseded, non-retracted records keyed by element, with their index
/// in the log.
pub fn active_mappings(log: &[MappingRecord]) -> BTreeMap<ElementRef, (usize, &MappingRecord)> {
    let superseded: HashSet<usize> = log.iter().filter_map(|r| r.supersedes).collect();
    log.iter()
        .enumerate()
        .filter(|(i, r)| !superseded.contains(i) && !r.is_retraction())
        .map(|(i, r)| (r.element.clone(), (i, r)))
        .collect()
}

/// Index of the record currently heading the supersession chain of
/// `element`, retraction or not.
fn chain_head(log: &[MappingRecord], element: &ElementRef) -> Option<usize> {
    let superseded: HashSet<usize> = log.iter().filter_map(|r| r.supersedes).collect();
    (0..log.len())
        .rev()
        .find(|i| !superseded.contains(i) && &log[*i].element == element)
}

/// Checks the structural invariants of an append-only mapping log: each
/// `supersedes` points backwards to a record of the same element, no record
/// is superseded twice, and each element has a single chain head.
pub fn check_log(log: &[MappingRecord]) -> Result<(), String> {
    let mut superseded_by: HashMap<usize, usize> = HashMap::new();
    for (i, r) in log.iter().enumerate() {
        if r.concept_phase != r.element.phase {
            return Err(format!(
                "mapping record {i}: concept phase differs from element phase"
            ));
        }
        if Some(r.stereotype) != r.element.stereotype() {
            return Err(format!(
                "mapping record {i}: stereotype does not match element kind"
            ));
        }
        if let Some(prev) = r.supersedes {
            if prev >= i {
                return Err(format!(
                    "mapping record {i} supersedes a later record {prev}"
                ));
            }
            if log[prev].element != r.element {
                return Err(format!(
                    "mapping record {i} supersedes a record of another element"
                ));
            }
            if let Some(other) = superseded_by.insert(prev, i) {
                return Err(format!(
                    "mapping record {prev} is superseded by both {other} and {i}"
                ));
            }
        }
    }
    let mut heads: HashSet<&ElementRef> = HashSet::new();
    for (i, r) in log.iter().enumerate() {
        if !superseded_by.contains_key(&i) && !heads.insert(&r.element) {
            return Err(format!(
                "element `{}` has more than one current mapping record",
                r.element
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Session

/// Source of commit timestamps.
#[derive(Debug, Clone)]
pub enum Clock {
    System,
    /// Starts at `next` and advances by one second per commit.
    Fixed(DateTime<Utc>),
}

/// A single-writer mapping session over a set of plans and a registry.
/// Timestamps strictly increase across the whole log.
#[derive(Debug)]
pub struct MappingSession {
    registry: Arc<Registry>,
    elements: BTreeMap<ElementRef, ElementEntry>,
    log: Vec<MappingRecord>,
    clock: Clock,
    stale: bool,
}

fn micros(ts: DateTime<Utc>) -> DateTime<Utc> {
    ts.duration_trunc(Duration::microseconds(1)).unwrap_or(ts)
}

impl MappingSession {
    pub fn new(registry: Arc<Registry>, plans: &[Plan], log: Vec<MappingRecord>) -> Self {
        let elements = plans
            .iter()
            .flat_map(enumerate_elements)
            .map(|e| (e.element.clone(), e))
            .collect();
        MappingSession {
            registry,
            elements,
            log,
            clock: Clock::System,
            stale: false,
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn log(&self) -> &[MappingRecord] {
        &self.log
    }

    pub fn into_log(self) -> Vec<MappingRecord> {
        self.log
    }

    pub fn element(&self, element: &ElementRef) -> Option<&ElementEntry> {
        self.elements.get(element)
    }

    pub fn elements(&self) -> impl Iterator<Item = &ElementEntry> {
        self.elements.values()
    }

    pub fn active(&self) -> BTreeMap<ElementRef, (usize, &MappingRecord)> {
        active_mappings(&self.log)
    }

    /// Marks the session unusable, e.g. after the workspace was reloaded.
    pub fn invalidate(&mut self) {
        self.stale = true;
    }

    pub fn is_stale(&self) -> bool {
        self.stale
    }

    fn next_timestamp(&mut self) -> DateTime<Utc> {
        let candidate = match &mut self.clock {
            Clock::System => micros(Utc::now()),
            Clock::Fixed(next) => {
                let t = *next;
                *next += Duration::seconds(1);
                t
            }
        };
        match self.log.iter().map(|r| r.timestamp).max() {
            Some(last) if candidate <= last => last + Duration::microseconds(1),
            _ => candidate,
        }
    }

    fn lookup(&self, element: &ElementRef) -> Result<&ElementEntry, MappingError> {
        if self.stale {
            return Err(MappingError::StaleSession);
        }
        self.elements
            .get(element)
            .ok_or_else(|| MappingError::UnknownElement(element.clone()))
    }

    /// Candidate concepts for a known element, by name.
    pub fn candidates(&self, element: &ElementRef) -> Result<Vec<&Concept>, MappingError> {
        self.lookup(element)?;
        Ok(candidates_for(&self.registry, element)?.1)
    }

    pub fn suggest(&self, element: &ElementRef) -> Result<Vec<Suggestion>, MappingError> {
        let entry = self.lookup(element)?;
        suggest(element, &entry.description, &self.registry)
    }

    /// Fails with `SupersessionConflict` unless the element's current chain
    /// head is `expected`.
    pub fn expect_head(
        &self,
        element: &ElementRef,
        expected: Option<usize>,
    ) -> Result<(), MappingError> {
        let actual = chain_head(&self.log, element);
        if actual != expected {
            return Err(MappingError::SupersessionConflict {
                element: element.clone(),
                expected,
                actual,
            });
        }
        Ok(())
    }

    /// Records `concept` as the mapping of `element`. Remapping supersedes
    /// the previous record; committing the concept already in force returns
    /// the existing record without appending.
    pub fn commit_mapping(
        &mut self,
        element: &ElementRef,
        concept: &str,
        mapper: &str,
    ) -> Result<MappingRecord, MappingError> {
        self.lookup(element)?;
        let (stereotype, candidates) = candidates_for(&self.registry, element)?;
        if !candidates.iter().any(|c| c.name == concept) {
            return Err(MappingError::CandidateViolation {
                element: element.clone(),
                concept: concept.to_string(),
                stereotype,
                candidates: candidates.iter().map(|c| c.name.clone()).collect(),
            });
        }
        let head = chain_head(&self.log, element);
        if let Some(i) = head {
            if self.log[i].concept_name.as_deref() == Some(concept) {
                return Ok(self.log[i].clone());
            }
        }
        let record = MappingRecord {
            element: element.clone(),
            stereotype,
            concept_name: Some(concept.to_string()),
            concept_phase: element.phase,
            mapper: mapper.to_string(),
            timestamp: self.next_timestamp(),
            supersedes: head,
        };
        self.log.push(record.clone());
        Ok(record)
    }

    /// Appends a retraction for the element's active mapping.
    pub fn retract(
        &mut self,
        element: &ElementRef,
        mapper: &str,
    ) -> Result<MappingRecord, MappingError> {
        self.lookup(element)?;
        let (index, active) = self
            .active()
            .get(element)
            .map(|(i, r)| (*i, (*r).clone()))
            .ok_or_else(|| MappingError::NotMapped(element.clone()))?;
        let record = MappingRecord {
            element: element.clone(),
            stereotype: active.stereotype,
            concept_name: None,
            concept_phase: element.phase,
            mapper: mapper.to_string(),
            timestamp: self.next_timestamp(),
            supersedes: Some(index),
        };
        self.log.push(record.clone());
        Ok(record)
    }
}

// ---------------------------------------------------------------------------
// Batch mapping files

/// One line of a batch mapping file:
/// `map <plan>/<phase>/<kind>/<id> -> <Concept> by "<mapper>"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchEntry {
    pub line: usize,
    pub element: ElementRef,
    pub concept: String,
    pub mapper: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct BatchError {
    pub line: usize,
    pub message: String,
}

pub fn parse_batch(text: &str) -> Result<Vec<BatchEntry>, Vec<BatchError>> {
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let parsed = split_fields(raw).and_then(|fields| {
            if fields.is_empty() {
                return Ok(None);
            }
            let mut cur = FieldCursor::new(fields);
            cur.keyword("map")?;
            let element: ElementRef = cur
                .word("element path")?
                .parse()
                .map_err(|e: PathError| e.to_string())?;
            cur.keyword("->")?;
            let concept = cur.word("concept name")?;
            cur.keyword("by")?;
            let mapper = cur.string("mapper string")?;
            cur.finish()?;
            Ok(Some(BatchEntry {
                line,
                element,
                concept,
                mapper,
            }))
        });
        match parsed {
            Ok(Some(entry)) => entries.push(entry),
            Ok(None) => {}
            Err(message) => errors.push(BatchError { line, message }),
        }
    }
    if errors.is_empty() {
        Ok(entries)
    } else {
        Err(errors)
    }
}

/// Renders active mappings of `log` as a batch file.
pub fn render_batch(log: &[MappingRecord]) -> String {
    let mut out = String::new();
    for (element, (_, record)) in active_mappings(log) {
        if let Some(concept) = &record.concept_name {
            out.push_str(&format!(
                "map {element} -> {concept} by {}\n",
                quote_field(&record.mapper)
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Transfer

/// Agent model the knowledge of a unit came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceModel {
    Goal,
    Role,
    Agent,
    Environment,
    Scenario,
}

impl SourceModel {
    pub const ALL: [SourceModel; 5] = [
        SourceModel::Goal,
        SourceModel::Role,
        SourceModel::Agent,
        SourceModel::Environment,
        SourceModel::Scenario,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceModel::Goal => "goal",
            SourceModel::Role => "role",
            SourceModel::Agent => "agent",
            SourceModel::Environment => "environment",
            SourceModel::Scenario => "scenario",
        }
    }

    /// Activities are scenario knowledge; triggers belong to the agent model.
    pub fn of(kind: ElementKind) -> Option<SourceModel> {
        match kind {
            ElementKind::Goal => Some(SourceModel::Goal),
            ElementKind::Role => Some(SourceModel::Role),
            ElementKind::Agent | ElementKind::Trigger => Some(SourceModel::Agent),
            ElementKind::Activity => Some(SourceModel::Scenario),
            ElementKind::Resource => Some(SourceModel::Environment),
            ElementKind::Interaction | ElementKind::Scenario => None,
        }
    }
}

impl fmt::Display for SourceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SourceModel {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceModel::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UnknownName {
                what: "source model",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnowledgeUnit {
    pub unit_id: String,
    pub element: ElementRef,
    pub phase: Phase,
    pub concept_name: String,
    pub name: String,
    pub description: String,
    pub source_model: SourceModel,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct KnowledgeEdge {
    pub from_unit: String,
    pub to_unit: String,
    pub relation: RelationKind,
    /// The organisation relation (addressed by its left role), interaction
    /// or scenario the edge was derived from.
    pub provenance: ElementRef,
}

impl KnowledgeEdge {
    pub fn key(&self) -> (&str, &str, RelationKind) {
        (&self.from_unit, &self.to_unit, self.relation)
    }

    /// The edge read backwards under the inverse relation.
    pub fn reversed(&self) -> KnowledgeEdge {
        KnowledgeEdge {
            from_unit: self.to_unit.clone(),
            to_unit: self.from_unit.clone(),
            relation: self.relation.inverse(),
            provenance: self.provenance.clone(),
        }
    }
}

/// An edge that could not be emitted because an endpoint is unmapped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DroppedEdge {
    pub relation: RelationKind,
    pub from: ElementRef,
    pub to: ElementRef,
    pub provenance: ElementRef,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TransferOutput {
    pub units: Vec<KnowledgeUnit>,
    pub edges: Vec<KnowledgeEdge>,
    /// Mappable elements without an active mapping.
    pub skipped: Vec<ElementRef>,
    pub dropped_edges: Vec<DroppedEdge>,
}

/// Deterministic unit id: the first 128 bits of SHA-256 over the element
/// path, hex encoded.
pub fn unit_id(element: &ElementRef) -> String {
    sha256_hex(element.path().as_bytes())[..32].to_string()
}

/// Turns the mapped elements of `plan` into knowledge units and derives the
/// relationship edges between them. Refuses plans with validation errors.
pub fn transfer(plan: &Plan, mappings: &[MappingRecord]) -> Result<TransferOutput, MappingError> {
    let (errors, _) = count_by_severity(&validate_plan(plan));
    if errors > 0 {
        return Err(MappingError::ValidationGate {
            plan_id: plan.plan_id.clone(),
            errors,
        });
    }
    let active = active_mappings(mappings);
    let mut out = TransferOutput::default();
    let mut mapped: HashMap<ElementRef, String> = HashMap::new();

    for entry in enumerate_elements(plan) {
        let Some(source_model) = SourceModel::of(entry.element.kind) else {
            continue;
        };
        let Some(concept) = active
            .get(&entry.element)
            .and_then(|(_, r)| r.concept_name.clone())
        else {
            out.skipped.push(entry.element);
            continue;
        };
        let id = unit_id(&entry.element);
        mapped.insert(entry.element.clone(), id.clone());
        out.units.push(KnowledgeUnit {
            unit_id: id,
            phase: entry.element.phase,
            concept_name: concept,
            name: entry.element.element_id.clone(),
            description: entry.description,
            source_model,
            element: entry.element,
        });
    }

    let mut seen = HashSet::new();
    for (&phase, models) in &plan.phases {
        let at = |kind, id: &str| ElementRef::new(plan.plan_id.clone(), phase, kind, id);
        let mut derive =
            |relation: RelationKind, from: ElementRef, to: ElementRef, provenance: ElementRef| {
                match (mapped.get(&from), mapped.get(&to)) {
                    (Some(f), Some(t)) => {
                        let (f, t) = if relation.is_symmetric() && t < f {
                            (t, f)
                        } else {
                            (f, t)
                        };
                        if seen.insert((f.clone(), t.clone(), relation)) {
                            out.edges.push(KnowledgeEdge {
                                from_unit: f.clone(),
                                to_unit: t.clone(),
                                relation,
                                provenance,
                            });
                        }
                    }
                    _ => out.dropped_edges.push(DroppedEdge {
                        relation,
                        from,
                        to,
                        provenance,
                    }),
                }
            };
        for rel in &models.organisation {
            let relation = match rel.kind {
                OrgKind::Peer => RelationKind::IsPeer,
                OrgKind::Controls => RelationKind::Controls,
            };
            derive(
                relation,
                at(ElementKind::Role, &rel.left),
                at(ElementKind::Role, &rel.right),
                at(ElementKind::Role, &rel.left),
            );
        }
        for i in &models.interactions {
            for p in &i.participants {
                derive(
                    RelationKind::RolePursueGoal,
                    at(ElementKind::Role, p),
                    at(ElementKind::Goal, &i.goal_id),
                    at(ElementKind::Interaction, &i.interaction_id),
                );
            }
        }
        for s in &models.scenarios {
            for step in &s.steps {
                derive(
                    RelationKind::ParticipatesIn,
                    at(ElementKind::Role, &step.actor_role_id),
                    at(ElementKind::Activity, &step.activity_id),
                    at(ElementKind::Scenario, &s.scenario_id),
                );
            }
        }
    }
    Ok(out)
}
