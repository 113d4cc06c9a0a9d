//! Operations shared verbatim by the command line and the HTTP API.

use std::collections::BTreeSet;

use dmkf_core::mapping::{suggest, MappingError};
use dmkf_core::model::{ElementRef, Phase, Stereotype};
use serde::Serialize;

use crate::workspace::{Failure, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRow {
    pub name: String,
    pub phase: Phase,
    pub stereotypes: BTreeSet<Stereotype>,
    pub definition: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Candidate concepts of a loaded element, by name or, when `ranked`, by
/// suggestion score.
pub fn candidates(
    ws: &Workspace,
    element: &ElementRef,
    ranked: bool,
) -> Result<Vec<CandidateRow>, Failure> {
    let entry = ws
        .plans
        .iter()
        .filter(|p| p.plan_id == element.plan_id)
        .flat_map(dmkf_core::model::enumerate_elements)
        .find(|e| &e.element == element)
        .ok_or_else(|| Failure::from(MappingError::UnknownElement(element.clone())))?;
    let stereotype = entry
        .stereotype
        .ok_or_else(|| Failure::from(MappingError::NotMappable(element.clone())))?;
    let concepts = ws.registry.candidates(stereotype, element.phase);
    if !ranked || concepts.is_empty() {
        return Ok(concepts
            .into_iter()
            .map(|c| CandidateRow {
                name: c.name.clone(),
                phase: c.phase,
                stereotypes: c.stereotypes.clone(),
                definition: c.definition.clone(),
                score: None,
            })
            .collect());
    }
    Ok(suggest(element, &entry.description, &ws.registry)?
        .into_iter()
        .map(|s| CandidateRow {
            name: s.concept.name,
            phase: s.concept.phase,
            stereotypes: s.concept.stereotypes,
            definition: s.concept.definition,
            score: Some(s.score),
        })
        .collect())
}
