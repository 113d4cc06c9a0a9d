//! Proptest strategies for structurally valid plans.
//!
//! Identifiers are drawn from a small pool shared by every element kind, so
//! generated cross-references resolve only some of the time. The pool
//! includes keywords of the plan language to exercise contextual parsing.

use std::collections::{BTreeMap, HashSet};

use proptest::collection::vec;
use proptest::prelude::*;

use crate::model::*;

pub const ID_POOL: &[&str] = &["A", "B", "C", "Dx", "e-1", "_f", "goal", "peer"];

pub fn ident() -> impl Strategy<Value = String> {
    prop::sample::select(ID_POOL).prop_map(str::to_string)
}

pub fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => "[ -~]{0,12}",
        1 => "(?s).{0,8}",
        1 => Just(String::new()),
    ]
}

fn goal_node() -> impl Strategy<Value = GoalNode> {
    let leaf =
        (ident(), text(), vec(ident(), 0..3)).prop_map(|(goal_id, description, role_ids)| {
            GoalNode {
                goal_id,
                description,
                subgoals: Vec::new(),
                role_ids,
            }
        });
    leaf.prop_recursive(2, 6, 3, |inner| {
        (ident(), text(), vec(ident(), 0..3), vec(inner, 0..3)).prop_map(
            |(goal_id, description, role_ids, subgoals)| GoalNode {
                goal_id,
                description,
                subgoals,
                role_ids,
            },
        )
    })
}

fn role_def() -> impl Strategy<Value = RoleDef> {
    (
        ident(),
        text(),
        vec((text(), ident()), 0..3),
        vec(text(), 0..2),
    )
        .prop_map(|(role_id, description, resp, constraints)| RoleDef {
            role_id,
            description,
            responsibilities: resp
                .into_iter()
                .map(|(text, goal_id)| Responsibility { text, goal_id })
                .collect(),
            constraints,
        })
}

fn org_relation() -> impl Strategy<Value = OrgRelation> {
    (any::<bool>(), ident(), ident())
        .prop_filter("self relation", |(_, a, b)| a != b)
        .prop_map(|(peer, a, b)| {
            if peer {
                OrgRelation::peer(a, b)
            } else {
                OrgRelation::controls(a, b)
            }
        })
}

fn interaction() -> impl Strategy<Value = Interaction> {
    (ident(), ident(), vec(ident(), 2..4)).prop_filter_map(
        "fewer than two distinct participants",
        |(interaction_id, goal_id, participants)| {
            let participants = dedup(participants);
            (participants.len() >= 2).then_some(Interaction {
                interaction_id,
                goal_id,
                participants,
            })
        },
    )
}

fn env_entity() -> impl Strategy<Value = EnvEntity> {
    (ident(), text()).prop_map(|(entity_id, description)| EnvEntity {
        entity_id,
        description,
    })
}

fn agent_def() -> impl Strategy<Value = AgentDef> {
    (
        ident(),
        text(),
        vec(ident(), 1..3),
        vec((ident(), text()), 0..3),
        vec((ident(), text()), 0..3),
    )
        .prop_map(|(agent_id, description, plays, triggers, activities)| {
            let mut seen = HashSet::new();
            AgentDef {
                agent_id,
                description,
                plays,
                triggers: triggers
                    .into_iter()
                    .map(|(trigger_id, description)| Trigger {
                        trigger_id,
                        description,
                    })
                    .collect(),
                activities: activities
                    .into_iter()
                    .filter(|(id, _)| seen.insert(id.clone()))
                    .map(|(activity_id, description)| Activity {
                        activity_id,
                        description,
                    })
                    .collect(),
            }
        })
}

fn step_mode() -> impl Strategy<Value = StepMode> {
    prop::sample::select(&StepMode::ALL[..])
}

fn scenario() -> impl Strategy<Value = Scenario> {
    let step = (ident(), ident(), vec(ident(), 0..3), step_mode()).prop_map(
        |(activity_id, actor_role_id, resource_ids, mode)| ScenarioStep {
            activity_id,
            actor_role_id,
            resource_ids,
            mode,
        },
    );
    (ident(), ident(), text(), text(), vec(step, 1..4)).prop_map(
        |(scenario_id, goal_id, precondition, postcondition, steps)| Scenario {
            scenario_id,
            goal_id,
            precondition,
            postcondition,
            steps,
        },
    )
}

fn dedup(items: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

fn dedup_by<T>(items: Vec<T>, key: impl Fn(&T) -> &str) -> Vec<T> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .filter(|item| seen.insert(key(item).to_string()))
        .collect()
}

fn prune_goals(goals: Vec<GoalNode>, seen: &mut HashSet<String>) -> Vec<GoalNode> {
    goals
        .into_iter()
        .filter_map(|mut g| {
            if !seen.insert(g.goal_id.clone()) {
                return None;
            }
            g.subgoals = prune_goals(std::mem::take(&mut g.subgoals), seen);
            Some(g)
        })
        .collect()
}

/// Phase models satisfying the per-phase uniqueness invariants.
pub fn phase_models() -> impl Strategy<Value = PhaseModels> {
    (
        vec(goal_node(), 0..3),
        vec(role_def(), 0..4),
        vec(org_relation(), 0..4),
        vec(interaction(), 0..3),
        vec(env_entity(), 0..3),
        vec(agent_def(), 0..3),
        vec(scenario(), 0..3),
    )
        .prop_map(
            |(goals, roles, organisation, interactions, environment, agents, scenarios)| {
                let mut trigger_ids = HashSet::new();
                let agents = dedup_by(agents, |a| &a.agent_id)
                    .into_iter()
                    .map(|mut a| {
                        a.triggers
                            .retain(|t| trigger_ids.insert(t.trigger_id.clone()));
                        a
                    })
                    .collect();
                PhaseModels {
                    goals: prune_goals(goals, &mut HashSet::new()),
                    roles: dedup_by(roles, |r| &r.role_id),
                    organisation,
                    interactions: dedup_by(interactions, |i| &i.interaction_id),
                    environment: dedup_by(environment, |e| &e.entity_id),
                    agents,
                    scenarios: dedup_by(scenarios, |s| &s.scenario_id),
                }
            },
        )
}

/// A structurally valid plan with one to four populated phases.
pub fn valid_plan() -> impl Strategy<Value = Plan> {
    (
        "[A-Za-z_][A-Za-z0-9_-]{0,8}",
        text(),
        vec(
            (prop::sample::select(&Phase::ALL[..]), phase_models()),
            1..4,
        ),
    )
        .prop_map(|(plan_id, title, phases)| Plan {
            plan_id,
            title,
            phases: phases.into_iter().collect::<BTreeMap<_, _>>(),
        })
}
