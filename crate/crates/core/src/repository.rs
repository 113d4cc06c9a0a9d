//! The knowledge repository: concept-indexed knowledge units, typed edges
//! between them and the mapping audit log, persisted as a line-oriented
//! snapshot file.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::mapping::{
    check_log, unit_id, KnowledgeEdge, KnowledgeUnit, MappingRecord, SourceModel, TransferOutput,
};
use crate::model::*;
use crate::records::{quote_field, split_fields, FieldCursor};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepositoryError {
    #[error("integrity violation: {0}")]
    IntegrityViolation(String),
    #[error("registry mismatch: snapshot built with {stored}, payload built with {incoming}")]
    RegistryMismatch { stored: String, incoming: String },
    #[error("a query needs at least one filter field")]
    EmptyFilter,
}

impl RepositoryError {
    pub fn class(&self) -> &'static str {
        match self {
            RepositoryError::IntegrityViolation(_) => "IntegrityViolation",
            RepositoryError::RegistryMismatch { .. } => "RegistryMismatch",
            RepositoryError::EmptyFilter => "EmptyFilter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct SnapshotError {
    pub line: usize,
    pub message: String,
}

type EdgeKey = (String, String, RelationKind);

/// An immutable-by-convention repository state. Writers clone, modify and
/// replace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Snapshot {
    units: BTreeMap<String, KnowledgeUnit>,
    edges: BTreeMap<EdgeKey, KnowledgeEdge>,
    mappings: Vec<MappingRecord>,
    registry_fingerprint: Option<String>,
}

/// Units, edges and mapping records to merge into a snapshot.
#[derive(Debug, Clone, Default)]
pub struct Payload {
    pub units: Vec<KnowledgeUnit>,
    pub edges: Vec<KnowledgeEdge>,
    pub mappings: Vec<MappingRecord>,
}

impl From<TransferOutput> for Payload {
    fn from(out: TransferOutput) -> Self {
        Payload {
            units: out.units,
            edges: out.edges,
            mappings: Vec::new(),
        }
    }
}

/// Unit filter; every set field must match.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryFilter {
    pub phase: Option<Phase>,
    pub concept_name: Option<String>,
    pub plan_id: Option<String>,
    pub source_model: Option<SourceModel>,
}

impl QueryFilter {
    pub fn is_empty(&self) -> bool {
        self == &QueryFilter::default()
    }

    pub fn matches(&self, unit: &KnowledgeUnit) -> bool {
        self.phase.is_none_or(|p| unit.phase == p)
            && self
                .concept_name
                .as_ref()
                .is_none_or(|c| &unit.concept_name == c)
            && self
                .plan_id
                .as_ref()
                .is_none_or(|p| &unit.element.plan_id == p)
            && self.source_model.is_none_or(|m| unit.source_model == m)
    }
}

/// Edge filter. With `unit` set, edges are read from that unit's
/// perspective: inverse and peer edges pointing at it are turned around.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeFilter {
    pub relation: Option<RelationKind>,
    pub unit: Option<String>,
}

/// An edge as returned by [`Snapshot::query_edges`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct EdgeView {
    #[serde(flatten)]
    pub edge: KnowledgeEdge,
    pub derived: bool,
}

impl Snapshot {
    pub fn new() -> Self {
        Snapshot::default()
    }

    pub fn units(&self) -> impl Iterator<Item = &KnowledgeUnit> {
        self.units.values()
    }

    pub fn unit(&self, unit_id: &str) -> Option<&KnowledgeUnit> {
        self.units.get(unit_id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &KnowledgeEdge> {
        self.edges.values()
    }

    pub fn mappings(&self) -> &[MappingRecord] {
        &self.mappings
    }

    pub fn registry_fingerprint(&self) -> Option<&str> {
        self.registry_fingerprint.as_deref()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty() && self.edges.is_empty() && self.mappings.is_empty()
    }

    /// Merges `payload` produced under the registry with `fingerprint`.
    /// Units are upserted by id, edges deduplicated by (from, to, relation)
    /// and mapping records not already in the log appended. On error the
    /// snapshot is unchanged.
    pub fn put(
        &mut self,
        payload: Payload,
        fingerprint: &str,
        force: bool,
    ) -> Result<(), RepositoryError> {
        if let Some(stored) = &self.registry_fingerprint {
            if stored != fingerprint && !force {
                return Err(RepositoryError::RegistryMismatch {
                    stored: stored.clone(),
                    incoming: fingerprint.to_string(),
                });
            }
        }
        let mut next = self.clone();
        for unit in payload.units {
            check_unit(&unit).map_err(RepositoryError::IntegrityViolation)?;
            next.units.insert(unit.unit_id.clone(), unit);
        }
        for edge in payload.edges {
            if edge.relation.is_derived() {
                return Err(RepositoryError::IntegrityViolation(format!(
                    "{} edges are derived and cannot be stored",
                    edge.relation
                )));
            }
            if edge.relation.is_symmetric() && edge.to_unit < edge.from_unit {
                return Err(RepositoryError::IntegrityViolation(format!(
                    "{} edge {} -> {} is not normalized",
                    edge.relation, edge.from_unit, edge.to_unit
                )));
            }
            for end in [&edge.from_unit, &edge.to_unit] {
                if !next.units.contains_key(end) {
                    return Err(RepositoryError::IntegrityViolation(format!(
                        "edge endpoint {end} is not a stored unit"
                    )));
                }
            }
            let key = (edge.from_unit.clone(), edge.to_unit.clone(), edge.relation);
            next.edges.entry(key).or_insert(edge);
        }
        let mut positions = Vec::with_capacity(payload.mappings.len());
        for (i, mut record) in payload.mappings.into_iter().enumerate() {
            if let Some(prev) = record.supersedes {
                let Some(&mapped) = positions.get(prev).filter(|_| prev < i) else {
                    return Err(RepositoryError::IntegrityViolation(format!(
                        "mapping record {i} supersedes {prev}, which does not precede it"
                    )));
                };
                record.supersedes = Some(mapped);
            }
            match next.mappings.iter().position(|m| m == &record) {
                Some(pos) => positions.push(pos),
                None => {
                    next.mappings.push(record);
                    positions.push(next.mappings.len() - 1);
                }
            }
        }
        check_log(&next.mappings).map_err(RepositoryError::IntegrityViolation)?;
        next.registry_fingerprint = Some(fingerprint.to_string());
        *self = next;
        Ok(())
    }

    /// Removes the units of `plan_id` and every edge touching them. The
    /// mapping log is kept.
    pub fn retract_plan(&mut self, plan_id: &str) {
        self.units.retain(|_, u| u.element.plan_id != plan_id);
        let units = &self.units;
        self.edges
            .retain(|(from, to, _), _| units.contains_key(from) && units.contains_key(to));
    }

    /// Units matching every set field, ordered by (plan_id, phase, path).
    pub fn query(&self, filter: &QueryFilter) -> Result<Vec<&KnowledgeUnit>, RepositoryError> {
        if filter.is_empty() {
            return Err(RepositoryError::EmptyFilter);
        }
        let mut out: Vec<&KnowledgeUnit> =
            self.units.values().filter(|u| filter.matches(u)).collect();
        out.sort_by_cached_key(|u| (u.element.plan_id.clone(), u.phase, u.element.path()));
        Ok(out)
    }

    /// Stored edges plus the derived inverses of Controls and
    /// ParticipatesIn, filtered and ordered by (from, to, relation).
    pub fn query_edges(&self, filter: &EdgeFilter) -> Vec<EdgeView> {
        let mut out = Vec::new();
        for edge in self.edges.values() {
            let mut views = vec![EdgeView {
                edge: edge.clone(),
                derived: false,
            }];
            if edge.relation.inverse() != edge.relation || filter.unit.is_some() {
                views.push(EdgeView {
                    edge: edge.reversed(),
                    derived: true,
                });
            }
            for view in views {
                let relation_ok = filter.relation.is_none_or(|r| view.edge.relation == r);
                let unit_ok = filter
                    .unit
                    .as_ref()
                    .is_none_or(|u| &view.edge.from_unit == u);
                if relation_ok && unit_ok {
                    out.push(view);
                }
            }
        }
        out.sort();
        out
    }

    pub fn check_integrity(&self) -> Result<(), RepositoryError> {
        for unit in self.units.values() {
            check_unit(unit).map_err(RepositoryError::IntegrityViolation)?;
        }
        for edge in self.edges.values() {
            for end in [&edge.from_unit, &edge.to_unit] {
                if !self.units.contains_key(end) {
                    return Err(RepositoryError::IntegrityViolation(format!(
                        "edge endpoint {end} is not a stored unit"
                    )));
                }
            }
        }
        check_log(&self.mappings).map_err(RepositoryError::IntegrityViolation)
    }
}

fn check_unit(unit: &KnowledgeUnit) -> Result<(), String> {
    let e = &unit.element;
    if unit.unit_id != unit_id(e) {
        return Err(format!(
            "unit {} does not match the digest of {e}",
            unit.unit_id
        ));
    }
    if unit.phase != e.phase
        || unit.name != e.element_id
        || Some(unit.source_model) != SourceModel::of(e.kind)
    {
        return Err(format!(
            "unit {} disagrees with its element path {e}",
            unit.unit_id
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Snapshot file format

fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// Renders the snapshot: a `meta` header, then units, edges and mapping
/// records, one per line.
pub fn export_snapshot(snapshot: &Snapshot) -> String {
    let mut out = format!(
        "meta version={SNAPSHOT_VERSION} registry={}\n",
        snapshot.registry_fingerprint.as_deref().unwrap_or("none")
    );
    for u in snapshot.units.values() {
        out.push_str(&format!(
            "unit {} {} {} {} {} {} {}\n",
            u.unit_id,
            u.element,
            u.phase,
            u.concept_name,
            u.name,
            quote_field(&u.description),
            u.source_model
        ));
    }
    for e in snapshot.edges.values() {
        out.push_str(&format!(
            "edge {} {} {} {}\n",
            e.from_unit, e.to_unit, e.relation, e.provenance
        ));
    }
    for m in &snapshot.mappings {
        out.push_str(&format!(
            "map {} {} {} {} {} {}",
            m.element,
            m.stereotype,
            m.concept_name.as_deref().unwrap_or("-"),
            m.concept_phase,
            quote_field(&m.mapper),
            format_timestamp(&m.timestamp)
        ));
        if let Some(n) = m.supersedes {
            out.push_str(&format!(" supersedes={n}"));
        }
        out.push('\n');
    }
    out
}

fn parse_value<T: std::str::FromStr>(cur: &mut FieldCursor, what: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    cur.word(what)?.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_meta(cur: &mut FieldCursor) -> Result<Option<String>, String> {
    let version = cur.word("`version=N`")?;
    if version != format!("version={SNAPSHOT_VERSION}") {
        return Err(format!("unsupported snapshot {version}"));
    }
    let registry = cur.word("`registry=DIGEST`")?;
    let digest = registry
        .strip_prefix("registry=")
        .ok_or_else(|| format!("expected `registry=DIGEST`, found `{registry}`"))?;
    Ok((digest != "none").then(|| digest.to_string()))
}

fn parse_unit(cur: &mut FieldCursor) -> Result<KnowledgeUnit, String> {
    Ok(KnowledgeUnit {
        unit_id: cur.word("unit id")?,
        element: parse_value(cur, "element path")?,
        phase: parse_value(cur, "phase")?,
        concept_name: cur.word("concept name")?,
        name: cur.word("unit name")?,
        description: cur.string("description string")?,
        source_model: parse_value(cur, "source model")?,
    })
}

fn parse_edge(cur: &mut FieldCursor) -> Result<KnowledgeEdge, String> {
    Ok(KnowledgeEdge {
        from_unit: cur.word("unit id")?,
        to_unit: cur.word("unit id")?,
        relation: parse_value(cur, "relation")?,
        provenance: parse_value(cur, "provenance path")?,
    })
}

fn parse_map(cur: &mut FieldCursor) -> Result<MappingRecord, String> {
    let element = parse_value(cur, "element path")?;
    let stereotype = parse_value(cur, "stereotype")?;
    let concept = cur.word("concept name")?;
    let concept_phase = parse_value(cur, "phase")?;
    let mapper = cur.string("mapper string")?;
    let timestamp = DateTime::parse_from_rfc3339(&cur.word("timestamp")?)
        .map_err(|e| format!("invalid timestamp: {e}"))?
        .with_timezone(&Utc);
    let supersedes = match cur.next() {
        None => None,
        Some(crate::records::Field::Word(w)) => Some(
            w.strip_prefix("supersedes=")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| format!("expected `supersedes=N`, found `{w}`"))?,
        ),
        Some(other) => {
            return Err(format!(
                "expected `supersedes=N`, found {}",
                other.describe()
            ))
        }
    };
    Ok(MappingRecord {
        element,
        stereotype,
        concept_name: (concept != "-").then_some(concept),
        concept_phase,
        mapper,
        timestamp,
        supersedes,
    })
}

/// Parses a snapshot file. A final line without its terminating newline is
/// treated as truncated.
pub fn import_snapshot(text: &str) -> Result<Snapshot, SnapshotError> {
    let err = |line: usize, message: String| SnapshotError { line, message };
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    if lines.is_empty() {
        return Err(err(1, "missing `meta` header".into()));
    }
    let mut snapshot = Snapshot::new();
    let mut edge_lines = Vec::new();
    let mut seen_units = HashSet::new();
    for (idx, raw) in lines.iter().enumerate() {
        let line = idx + 1;
        let Some(content) = raw.strip_suffix('\n') else {
            return Err(err(
                line,
                "truncated record (no terminating newline)".into(),
            ));
        };
        let record = split_fields(content).and_then(|fields| {
            let mut cur = FieldCursor::new(fields);
            let tag = cur.word("record kind")?;
            match (line, tag.as_str()) {
                (1, "meta") => snapshot.registry_fingerprint = parse_meta(&mut cur)?,
                (1, other) => return Err(format!("expected `meta` header, found `{other}`")),
                (_, "unit") => {
                    let unit = parse_unit(&mut cur)?;
                    check_unit(&unit)?;
                    if !seen_units.insert(unit.unit_id.clone()) {
                        return Err(format!("duplicate unit {}", unit.unit_id));
                    }
                    snapshot.units.insert(unit.unit_id.clone(), unit);
                }
                (_, "edge") => {
                    let edge = parse_edge(&mut cur)?;
                    if edge.relation.is_derived() {
                        return Err(format!(
                            "{} edges are derived and cannot be stored",
                            edge.relation
                        ));
                    }
                    let key = (edge.from_unit.clone(), edge.to_unit.clone(), edge.relation);
                    if snapshot.edges.insert(key, edge).is_some() {
                        return Err("duplicate edge".into());
                    }
                    edge_lines.push(line);
                }
                (_, "map") => snapshot.mappings.push(parse_map(&mut cur)?),
                (_, other) => return Err(format!("unknown record kind `{other}`")),
            }
            cur.finish()
        });
        record.map_err(|m| err(line, m))?;
    }
    for (edge, line) in snapshot.edges.values().zip(&edge_lines) {
        for end in [&edge.from_unit, &edge.to_unit] {
            if !snapshot.units.contains_key(end) {
                return Err(err(
                    *line,
                    format!("edge endpoint {end} is not a stored unit"),
                ));
            }
        }
    }
    check_log(&snapshot.mappings).map_err(|m| err(lines.len(), m))?;
    Ok(snapshot)
}

/// Writes `text` to `path` by renaming a fully written temporary file in
/// the same directory over it.
pub fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
