//! Disaster management plan knowledge framework.
//!
//! Plans are written as seven agent-oriented models ([`model`], [`dsl`]),
//! checked for cross-model consistency ([`validate`]), mapped element by
//! element onto stereotype-annotated metamodel concepts ([`registry`],
//! [`mapping`]) and transferred into a concept-indexed knowledge
//! repository ([`repository`]).

pub mod dsl;
pub mod mapping;
pub mod model;
mod records;
pub mod registry;
pub mod repository;
pub mod validate;

#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
