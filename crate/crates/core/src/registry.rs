//! The M2 layer: metamodel concepts tagged with a phase and annotated with
//! one or more stereotypes, plus candidate filtering over them.
//!
//! Registry files are line oriented:
//!
//! ```text
//! counts Prevention=21 Preparedness=25 Response=25 Recovery=21
//! concept People phase Preparedness stereotypes Agent,Role definition "..."
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{is_token, Phase, Stereotype};
use crate::records::quote_field as quote;
use crate::records::{sha256_hex, split_fields, Field, FieldCursor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Concept {
    pub name: String,
    pub phase: Phase,
    pub stereotypes: BTreeSet<Stereotype>,
    pub definition: String,
}

impl Concept {
    pub fn new(
        name: impl Into<String>,
        phase: Phase,
        stereotypes: impl IntoIterator<Item = Stereotype>,
        definition: impl Into<String>,
    ) -> Self {
        Concept {
            name: name.into(),
            phase,
            stereotypes: stereotypes.into_iter().collect(),
            definition: definition.into(),
        }
    }

    pub fn has(&self, stereotype: Stereotype, phase: Phase) -> bool {
        self.phase == phase && self.stereotypes.contains(&stereotype)
    }
}

/// A concept catalogue. Iteration order is phase, then name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    concepts: Vec<Concept>,
    declared_counts: Option<BTreeMap<Phase, usize>>,
}

/// A broken registry invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryIssue {
    #[error("duplicate concept `{name}` in {phase}")]
    DuplicateConcept { name: String, phase: Phase },
    #[error("concept `{name}` in {phase} has no stereotypes")]
    EmptyStereotypes { name: String, phase: Phase },
    #[error("{phase}: declared {declared}, found {found}")]
    CountMismatch {
        phase: Phase,
        declared: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryErrorKind {
    Syntax(String),
    Invalid(RegistryIssue),
}

/// A registry load failure, with the 1-based line it was found on.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct RegistryError {
    pub line: usize,
    pub kind: RegistryErrorKind,
}

impl fmt::Display for RegistryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RegistryErrorKind::Syntax(msg) => write!(f, "line {}: {msg}", self.line),
            RegistryErrorKind::Invalid(issue) => write!(f, "line {}: {issue}", self.line),
        }
    }
}

impl Registry {
    /// Builds a registry without checking invariants; see
    /// [`validate_registry`].
    pub fn from_parts(
        mut concepts: Vec<Concept>,
        declared_counts: Option<BTreeMap<Phase, usize>>,
    ) -> Self {
        concepts.sort_by(|a, b| (a.phase, &a.name).cmp(&(b.phase, &b.name)));
        Registry {
            concepts,
            declared_counts,
        }
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn declared_counts(&self) -> Option<&BTreeMap<Phase, usize>> {
        self.declared_counts.as_ref()
    }

    /// Number of concepts per phase, including phases with none.
    pub fn counts(&self) -> BTreeMap<Phase, usize> {
        let mut counts: BTreeMap<Phase, usize> = Phase::ALL.iter().map(|p| (*p, 0)).collect();
        for c in &self.concepts {
            *counts.entry(c.phase).or_default() += 1;
        }
        counts
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Concepts of `phase` annotated with `stereotype`, by name ascending.
    pub fn candidates(&self, stereotype: Stereotype, phase: Phase) -> Vec<&Concept> {
        self.concepts
            .iter()
            .filter(|c| c.has(stereotype, phase))
            .collect()
    }

    pub fn lookup(&self, name: &str, phase: Phase) -> Option<&Concept> {
        self.concepts
            .iter()
            .find(|c| c.phase == phase && c.name == name)
    }

    /// Canonical file text: the counts line if declared, then one line per
    /// concept in iteration order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(counts) = &self.declared_counts {
            out.push_str("counts");
            for (phase, n) in counts {
                out.push_str(&format!(" {phase}={n}"));
            }
            out.push('\n');
        }
        for c in &self.concepts {
            let stereotypes: Vec<&str> = c.stereotypes.iter().map(|s| s.as_str()).collect();
            out.push_str(&format!(
                "concept {} phase {} stereotypes {} definition {}\n",
                c.name,
                c.phase,
                stereotypes.join(","),
                quote(&c.definition)
            ));
        }
        out
    }

    /// SHA-256 of the canonical rendering, so comments and layout of the
    /// source file do not affect it.
    pub fn fingerprint(&self) -> String {
        sha256_hex(self.render().as_bytes())
    }
}

/// One finding per broken invariant; empty iff the registry is valid.
pub fn validate_registry(registry: &Registry) -> Vec<RegistryIssue> {
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for c in &registry.concepts {
        if !seen.insert((c.phase, c.name.as_str())) {
            issues.push(RegistryIssue::DuplicateConcept {
                name: c.name.clone(),
                phase: c.phase,
            });
        }
        if c.stereotypes.is_empty() {
            issues.push(RegistryIssue::EmptyStereotypes {
                name: c.name.clone(),
                phase: c.phase,
            });
        }
    }
    if let Some(declared) = &registry.declared_counts {
        let found = registry.counts();
        for (&phase, &declared) in declared {
            let found = found[&phase];
            if found != declared {
                issues.push(RegistryIssue::CountMismatch {
                    phase,
                    declared,
                    found,
                });
            }
        }
    }
    issues
}

fn parse_counts(cursor: &mut FieldCursor) -> Result<BTreeMap<Phase, usize>, String> {
    let mut counts = BTreeMap::new();
    while let Some(field) = cursor.next() {
        let Field::Word(word) = field else {
            return Err(format!("expected Phase=N, found {}", field.describe()));
        };
        let (phase, n) = word
            .split_once('=')
            .ok_or_else(|| format!("expected Phase=N, found `{word}`"))?;
        let phase: Phase = phase.parse().map_err(|e| format!("{e}"))?;
        let n: usize = n
            .parse()
            .map_err(|_| format!("count for {phase} is not a number: `{n}`"))?;
        if counts.insert(phase, n).is_some() {
            return Err(format!("count for {phase} given twice"));
        }
    }
    if counts.is_empty() {
        return Err("`counts` needs at least one Phase=N entry".to_string());
    }
    Ok(counts)
}

fn parse_concept(cursor: &mut FieldCursor) -> Result<Concept, String> {
    let name = cursor.word("concept name")?;
    if !is_token(&name) {
        return Err(format!("`{name}` is not a valid concept name"));
    }
    cursor.keyword("phase")?;
    let phase: Phase = cursor
        .word("phase name")?
        .parse()
        .map_err(|e| format!("{e}"))?;
    cursor.keyword("stereotypes")?;
    let mut stereotypes = BTreeSet::new();
    match cursor.next() {
        Some(Field::Word(w)) if w == "definition" => {}
        Some(Field::Word(list)) => {
            for s in list.split(',').filter(|s| !s.is_empty()) {
                stereotypes.insert(s.parse::<Stereotype>().map_err(|e| format!("{e}"))?);
            }
            cursor.keyword("definition")?;
        }
        Some(other) => {
            return Err(format!(
                "expected stereotype list, found {}",
                other.describe()
            ))
        }
        None => return Err("expected stereotype list, found end of line".to_string()),
    }
    let definition = cursor.string("definition string")?;
    Ok(Concept {
        name,
        phase,
        stereotypes,
        definition,
    })
}

/// Parses and validates a registry file. All errors are reported, each with
/// its line number.
pub fn load_registry(text: &str) -> Result<Registry, Vec<RegistryError>> {
    let mut errors = Vec::new();
    let mut concepts = Vec::new();
    let mut concept_lines: BTreeMap<(Phase, String), usize> = BTreeMap::new();
    let mut declared: Option<(BTreeMap<Phase, usize>, usize)> = None;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let syntax = |msg: String| RegistryError {
            line: line_no,
            kind: RegistryErrorKind::Syntax(msg),
        };
        let fields = match split_fields(line) {
            Ok(f) if f.is_empty() => continue,
            Ok(f) => f,
            Err(msg) => {
                errors.push(syntax(msg));
                continue;
            }
        };
        let mut cursor = FieldCursor::new(fields);
        let directive = match cursor.word("`counts` or `concept`") {
            Ok(w) => w,
            Err(msg) => {
                errors.push(syntax(msg));
                continue;
            }
        };
        match directive.as_str() {
            "counts" => match parse_counts(&mut cursor) {
                Ok(_) if declared.is_some() => {
                    errors.push(syntax("`counts` given more than once".to_string()))
                }
                Ok(counts) => declared = Some((counts, line_no)),
                Err(msg) => errors.push(syntax(msg)),
            },
            "concept" => {
                match parse_concept(&mut cursor).and_then(|c| cursor.finish().map(|_| c)) {
                    Ok(concept) => {
                        let key = (concept.phase, concept.name.clone());
                        if concept_lines.contains_key(&key) {
                            errors.push(RegistryError {
                                line: line_no,
                                kind: RegistryErrorKind::Invalid(RegistryIssue::DuplicateConcept {
                                    name: concept.name.clone(),
                                    phase: concept.phase,
                                }),
                            });
                            continue;
                        }
                        if concept.stereotypes.is_empty() {
                            errors.push(RegistryError {
                                line: line_no,
                                kind: RegistryErrorKind::Invalid(RegistryIssue::EmptyStereotypes {
                                    name: concept.name.clone(),
                                    phase: concept.phase,
                                }),
                            });
                        }
                        concept_lines.insert(key, line_no);
                        concepts.push(concept);
                    }
                    Err(msg) => errors.push(syntax(msg)),
                }
            }
            other => errors.push(syntax(format!(
                "expected `counts` or `concept`, found `{other}`"
            ))),
        }
    }

    let (declared_counts, counts_line) = match declared {
        Some((counts, line)) => (Some(counts), line),
        None => (None, 0),
    };
    let registry = Registry::from_parts(concepts, declared_counts);
    // Duplicates and empty sets were reported per line above.
    for issue in validate_registry(&registry) {
        if let RegistryIssue::CountMismatch { .. } = issue {
            errors.push(RegistryError {
                line: counts_line,
                kind: RegistryErrorKind::Invalid(issue),
            });
        }
    }
    if errors.is_empty() {
        Ok(registry)
    } else {
        errors.sort_by_key(|e| e.line);
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLOOD_EXCERPT: &str = include_str!("../../../fixtures/registry/flood-excerpt.reg");
    const FULL_92: &str = include_str!("../../../fixtures/registry/full-92.reg");

    fn names(concepts: &[&Concept]) -> Vec<String> {
        concepts.iter().map(|c| c.name.clone()).collect()
    }

    #[test]
    fn loads_annotated_record() {
        let reg = load_registry(
            "concept PreparednessTeam phase Preparedness stereotypes Agent,Role definition \"A group of all agencies with a role in incident management...\"\n",
        )
        .unwrap();
        let c = &reg.concepts()[0];
        assert_eq!(c.name, "PreparednessTeam");
        assert_eq!(
            c.stereotypes,
            BTreeSet::from([Stereotype::Agent, Stereotype::Role])
        );
    }

    #[test]
    fn flood_excerpt_candidates() {
        let reg = load_registry(FLOOD_EXCERPT).unwrap();
        assert!(validate_registry(&reg).is_empty());
        assert_eq!(
            names(&reg.candidates(Stereotype::Role, Phase::Preparedness)),
            ["AidAgency", "People", "PreparednessTeam"]
        );
        assert!(reg.candidates(Stereotype::Role, Phase::Recovery).is_empty());
        assert_eq!(
            names(&reg.candidates(Stereotype::Activity, Phase::Preparedness)),
            ["PublicEducation", "Training"]
        );
        assert_eq!(
            names(&reg.candidates(Stereotype::EnvironmentEntity, Phase::Preparedness)),
            ["Media", "MutualAidAgreement"]
        );
        assert_eq!(
            names(&reg.candidates(Stereotype::Event, Phase::Preparedness)),
            ["Before-disaster"]
        );
    }

    #[test]
    fn concept_lookup() {
        let reg = load_registry(FLOOD_EXCERPT).unwrap();
        assert_eq!(
            reg.lookup("People", Phase::Preparedness)
                .unwrap()
                .definition,
            "Collections of human in local communities who are threaten to disaster"
        );
        assert!(reg.lookup("People", Phase::Response).is_none());
        assert!(reg
            .lookup("Training", Phase::Preparedness)
            .unwrap()
            .definition
            .starts_with("An instruction that imparts and/or maintains the skills"));
    }

    #[test]
    fn full_registry_counts() {
        let reg = load_registry(FULL_92).unwrap();
        let counts = reg.counts();
        assert_eq!(
            counts.values().copied().collect::<Vec<_>>(),
            vec![21, 25, 25, 21]
        );
        assert_eq!(reg.len(), 92);
        assert!(validate_registry(&reg).is_empty());
    }

    #[test]
    fn removing_a_placeholder_breaks_the_count() {
        let mut lines: Vec<&str> = FULL_92.lines().collect();
        let idx = lines
            .iter()
            .position(|l| l.contains("phase Preparedness") && l.contains("placeholder"))
            .unwrap();
        lines.remove(idx);
        let mutated = lines.join("\n");
        // independent recount of the mutated text
        let prep_lines = mutated
            .lines()
            .filter(|l| l.starts_with("concept ") && l.contains(" phase Preparedness "))
            .count();
        assert_eq!(prep_lines, 24);

        let errors = load_registry(&mutated).unwrap_err();
        assert_eq!(errors.len(), 1);
        assert_eq!(
            errors[0].kind,
            RegistryErrorKind::Invalid(RegistryIssue::CountMismatch {
                phase: Phase::Preparedness,
                declared: 25,
                found: 24
            })
        );

        let unchecked = Registry::from_parts(
            load_registry(FULL_92).unwrap().concepts()[1..].to_vec(),
            load_registry(FULL_92).unwrap().declared_counts().cloned(),
        );
        let issues = validate_registry(&unchecked);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].to_string(), "Prevention: declared 21, found 20");
    }

    #[test]
    fn declared_count_mismatch_names_phase_and_numbers() {
        let text = "counts Preparedness=2\nconcept A phase Preparedness stereotypes Goal definition \"\"\n";
        let errors = load_registry(text).unwrap_err();
        assert_eq!(
            errors[0].to_string(),
            "line 1: Preparedness: declared 2, found 1"
        );
    }

    #[test]
    fn empty_stereotype_set_is_reported() {
        let errors = load_registry("concept Lonely phase Response stereotypes definition \"x\"\n")
            .unwrap_err();
        assert_eq!(
            errors[0].kind,
            RegistryErrorKind::Invalid(RegistryIssue::EmptyStereotypes {
                name: "Lonely".into(),
                phase: Phase::Response
            })
        );

        let reg =
            Registry::from_parts(vec![Concept::new("Lonely", Phase::Response, [], "x")], None);
        let issues = validate_registry(&reg);
        assert_eq!(issues.len(), 1);
        assert!(issues[0].to_string().contains("Lonely"));
    }

    #[test]
    fn duplicates_and_syntax_errors_carry_line_numbers() {
        let text = "\
concept A phase Response stereotypes Goal definition \"\"
concept A phase Response stereotypes Role definition \"\"
concept A phase Recovery stereotypes Role definition \"\"
concept B phase Autumn stereotypes Role definition \"\"
concept C phase Response stereotypes Wizard definition \"\"
concept D phase Response stereotypes Goal definition unquoted
frobnicate
";
        let errors = load_registry(text).unwrap_err();
        let lines: Vec<usize> = errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 4, 5, 6, 7]);
        assert_eq!(
            errors[0].to_string(),
            "line 2: duplicate concept `A` in Response"
        );
        assert_eq!(errors[1].to_string(), "line 4: unknown phase `Autumn`");
    }

    #[test]
    fn fingerprint_ignores_layout() {
        let a = load_registry(
            "# comment\nconcept A phase Response stereotypes Goal definition \"d\"\n",
        )
        .unwrap();
        let b =
            load_registry("concept   A phase Response stereotypes Goal definition \"d\"").unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c =
            load_registry("concept A phase Response stereotypes Role definition \"d\"").unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(load_registry(&a.render()).unwrap(), a);
    }

    mod properties {
        use proptest::prelude::*;

        use super::*;

        fn registry() -> impl Strategy<Value = Registry> {
            let concept = (
                prop::sample::select(&["A", "B", "C", "D", "E"][..]),
                prop::sample::select(&Phase::ALL[..]),
                prop::collection::btree_set(prop::sample::select(&Stereotype::ALL[..]), 1..4),
            )
                .prop_map(|(name, phase, stereotypes)| Concept {
                    name: name.to_string(),
                    phase,
                    stereotypes,
                    definition: String::new(),
                });
            prop::collection::vec(concept, 0..20).prop_map(|cs| {
                let mut seen = HashSet::new();
                let cs = cs
                    .into_iter()
                    .filter(|c| seen.insert((c.phase, c.name.clone())))
                    .collect();
                Registry::from_parts(cs, None)
            })
        }

        proptest! {
            #[test]
            fn candidates_are_exact_and_cover_each_phase(reg in registry()) {
                for phase in Phase::ALL {
                    let mut covered = BTreeSet::new();
                    for s in Stereotype::ALL {
                        let cands = reg.candidates(s, phase);
                        let expected: Vec<&Concept> = reg.concepts().iter().filter(|c| c.phase == phase && c.stereotypes.contains(&s)).collect();
                        prop_assert_eq!(&cands, &expected);
                        prop_assert!(cands.windows(2).all(|w| w[0].name < w[1].name));
                        covered.extend(cands.iter().map(|c| c.name.clone()));
                    }
                    let all: BTreeSet<String> = reg.concepts().iter().filter(|c| c.phase == phase).map(|c| c.name.clone()).collect();
                    prop_assert_eq!(covered, all);
                }
            }
        }
    }
}
