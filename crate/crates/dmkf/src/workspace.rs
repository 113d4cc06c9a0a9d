//! The files one command or service instance works on: a registry, a set of
//! plans and a snapshot, plus the engine operations that change them.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dmkf_core::dsl::{format_errors, parse_plan};
use dmkf_core::mapping::{
    transfer, BatchEntry, Clock, MappingError, MappingRecord, MappingSession, TransferOutput,
};
use dmkf_core::model::{ElementRef, Plan};
use dmkf_core::registry::{load_registry, Registry};
use dmkf_core::repository::{
    export_snapshot, import_snapshot, write_atomic, Payload, RepositoryError, Snapshot,
};
use dmkf_core::validate::{has_errors, validate_plan};

/// A failed operation with its machine-readable class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub class: &'static str,
    pub message: String,
    pub element: Option<String>,
}

impl Failure {
    pub fn new(class: &'static str, message: impl Into<String>) -> Self {
        Failure {
            class,
            message: message.into(),
            element: None,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure::new("Usage", message)
    }

    pub fn with_element(mut self, element: &ElementRef) -> Self {
        self.element = Some(element.path());
        self
    }

    /// 1 for invalid input, 2 for usage errors, 3 for I/O and integrity.
    pub fn exit_code(&self) -> i32 {
        match self.class {
            "Usage" | "EmptyFilter" => 2,
            "Io" | "SnapshotError" | "IntegrityViolation" | "RegistryMismatch" => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.class, self.message)
    }
}

impl std::error::Error for Failure {}

impl From<MappingError> for Failure {
    fn from(e: MappingError) -> Self {
        let element = match &e {
            MappingError::UnknownElement(r)
            | MappingError::NotMappable(r)
            | MappingError::NotMapped(r)
            | MappingError::CandidateViolation { element: r, .. }
            | MappingError::SupersessionConflict { element: r, .. } => Some(r.path()),
            _ => None,
        };
        Failure {
            class: e.class(),
            message: e.to_string(),
            element,
        }
    }
}

impl From<RepositoryError> for Failure {
    fn from(e: RepositoryError) -> Self {
        Failure::new(e.class(), e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::new("Io", format!("{}: {e}", path.display())))
}

pub fn read_registry(path: &Path) -> Result<Registry, Failure> {
    let text = read(path)?;
    load_registry(&text).map_err(|errors| {
        let lines: Vec<String> = errors
            .iter()
            .map(|e| format!("{}: {e}", path.display()))
            .collect();
        Failure::new("RegistryInvalid", lines.join("\n"))
    })
}

pub fn read_plan(path: &Path) -> Result<Plan, Failure> {
    let text = read(path)?;
    parse_plan(&text).map_err(|errors| {
        Failure::new(
            "ParseError",
            format_errors(&path.display().to_string(), &errors)
                .trim_end()
                .to_string(),
        )
    })
}

/// Reads a snapshot file; a missing file is an empty snapshot.
pub fn read_snapshot(path: &Path) -> Result<Snapshot, Failure> {
    match std::fs::read_to_string(path) {
        Ok(text) => import_snapshot(&text)
            .map_err(|e| Failure::new("SnapshotError", format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Snapshot::new()),
        Err(e) => Err(Failure::new("Io", format!("{}: {e}", path.display()))),
    }
}

/// Outcome of applying a batch mapping file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSummary {
    pub committed: usize,
    pub unchanged: usize,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    pub registry: Arc<Registry>,
    pub plans: Vec<Plan>,
    pub snapshot: Snapshot,
    pub snapshot_path: Option<PathBuf>,
    /// Accept snapshot content produced under a different registry.
    pub force: bool,
}

impl Workspace {
    pub fn new(registry: Registry, plans: Vec<Plan>, snapshot: Snapshot) -> Result<Self, Failure> {
        for (i, p) in plans.iter().enumerate() {
            if plans[..i].iter().any(|q| q.plan_id == p.plan_id) {
                return Err(Failure::usage(format!(
                    "plan id `{}` is loaded twice",
                    p.plan_id
                )));
            }
        }
        Ok(Workspace {
            registry: Arc::new(registry),
            plans,
            snapshot,
            snapshot_path: None,
            force: false,
        })
    }

    pub fn load(
        registry: &Path,
        plans: &[PathBuf],
        snapshot: Option<&Path>,
    ) -> Result<Self, Failure> {
        let registry = read_registry(registry)?;
        let plans = plans
            .iter()
            .map(|p| read_plan(p))
            .collect::<Result<Vec<_>, _>>()?;
        let snap = match snapshot {
            Some(path) => read_snapshot(path)?,
            None => Snapshot::new(),
        };
        let mut ws = Workspace::new(registry, plans, snap)?;
        ws.snapshot_path = snapshot.map(Path::to_path_buf);
        Ok(ws)
    }

    pub fn plan(&self, plan_id: &str) -> Option<&Plan> {
        self.plans.iter().find(|p| p.plan_id == plan_id)
    }

    pub fn fingerprint(&self) -> String {
        self.registry.fingerprint()
    }

    /// A mapping session over all loaded plans, continuing the snapshot's
    /// mapping log.
    pub fn session(&self, clock: Clock) -> MappingSession {
        MappingSession::new(
            self.registry.clone(),
            &self.plans,
            self.snapshot.mappings().to_vec(),
        )
        .with_clock(clock)
    }

    fn check_concept(&self, element: &ElementRef, concept: &str) -> Result<(), Failure> {
        if self.registry.lookup(concept, element.phase).is_none() {
            return Err(Failure::new(
                "UnknownConcept",
                format!(
                    "no concept `{concept}` in {} of the registry",
                    element.phase
                ),
            )
            .with_element(element));
        }
        Ok(())
    }

    fn store_log(&mut self, session: MappingSession) -> Result<(), Failure> {
        let payload = Payload {
            mappings: session.into_log(),
            ..Default::default()
        };
        let fingerprint = self.fingerprint();
        self.snapshot.put(payload, &fingerprint, self.force)?;
        Ok(())
    }

    /// Applies every entry or none. All failures are reported.
    pub fn apply_batch(
        &mut self,
        entries: &[BatchEntry],
        clock: Clock,
    ) -> Result<BatchSummary, Vec<Failure>> {
        let mut session = self.session(clock);
        let mut failures = Vec::new();
        let mut committed = 0;
        for entry in entries {
            let before = session.log().len();
            let result = self
                .check_concept(&entry.element, &entry.concept)
                .and_then(|_| {
                    Ok(session.commit_mapping(&entry.element, &entry.concept, &entry.mapper)?)
                });
            match result {
                Ok(_) => committed += usize::from(session.log().len() > before),
                Err(f) => failures.push(Failure {
                    message: format!("line {}: {}", entry.line, f.message),
                    ..f
                }),
            }
        }
        if !failures.is_empty() {
            return Err(failures);
        }
        self.store_log(session).map_err(|f| vec![f])?;
        Ok(BatchSummary {
            committed,
            unchanged: entries.len() - committed,
        })
    }

    /// Commits one mapping. With `expected` set, the element's current
    /// record index must equal it.
    pub fn commit(
        &mut self,
        element: &ElementRef,
        concept: &str,
        mapper: &str,
        expected: Option<Option<usize>>,
        clock: Clock,
    ) -> Result<(usize, MappingRecord), Failure> {
        let mut session = self.session(clock);
        if session.element(element).is_none() {
            return Err(MappingError::UnknownElement(element.clone()).into());
        }
        self.check_concept(element, concept)?;
        if let Some(expected) = expected {
            session.expect_head(element, expected)?;
        }
        let record = session.commit_mapping(element, concept, mapper)?;
        let index = session.active()[element].0;
        self.store_log(session)?;
        self.refresh(&element.plan_id)?;
        Ok((index, record))
    }

    pub fn retract(
        &mut self,
        element: &ElementRef,
        mapper: &str,
        clock: Clock,
    ) -> Result<(usize, MappingRecord), Failure> {
        let mut session = self.session(clock);
        let record = session.retract(element, mapper)?;
        let index = session.log().len() - 1;
        self.store_log(session)?;
        self.refresh(&element.plan_id)?;
        Ok((index, record))
    }

    /// Replaces the repository content of one plan with a fresh transfer.
    pub fn transfer_plan(&mut self, plan_id: &str) -> Result<TransferOutput, Failure> {
        let plan = self
            .plan(plan_id)
            .ok_or_else(|| Failure::new("UnknownPlan", format!("no loaded plan `{plan_id}`")))?;
        let out = transfer(plan, self.snapshot.mappings())?;
        let mut next = self.snapshot.clone();
        next.retract_plan(plan_id);
        next.put(Payload::from(out.clone()), &self.fingerprint(), self.force)?;
        self.snapshot = next;
        Ok(out)
    }

    /// Re-transfers a plan after its mappings changed, if it validates.
    pub fn refresh(&mut self, plan_id: &str) -> Result<(), Failure> {
        match self.plan(plan_id) {
            Some(plan) if !has_errors(&validate_plan(plan)) => {
                self.transfer_plan(plan_id).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    pub fn save(&self) -> Result<(), Failure> {
        let path = self
            .snapshot_path
            .as_deref()
            .ok_or_else(|| Failure::usage("no --snapshot file given"))?;
        write_atomic(path, &export_snapshot(&self.snapshot))
            .map_err(|e| Failure::new("Io", format!("{}: {e}", path.display())))
    }
}
