//! Cross-model consistency rules over a parsed plan.
//!
//! Every rule is evaluated per phase; the plan language has no cross-phase
//! references. Output is ordered by (phase, rule, element path, message).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;
use serde::Serialize;

use crate::model::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub rule_id: RuleId,
    pub severity: Severity,
    pub element: ElementRef,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[{}] {}: {}",
            self.severity, self.rule_id, self.element, self.message
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RuleInfo {
    pub rule_id: RuleId,
    pub severity: Severity,
    pub description: &'static str,
}

const RULES: [RuleInfo; 9] = [
    RuleInfo {
        rule_id: RuleId::R1,
        severity: Severity::Error,
        description: "every agent activity is performed by some scenario step",
    },
    RuleInfo {
        rule_id: RuleId::R2,
        severity: Severity::Error,
        description: "every scenario achieves a declared goal or subgoal",
    },
    RuleInfo {
        rule_id: RuleId::R3,
        severity: Severity::Error,
        description: "every role responsibility names a declared goal",
    },
    RuleInfo {
        rule_id: RuleId::R4,
        severity: Severity::Error,
        description: "every resource used by a scenario step is declared in the environment model",
    },
    RuleInfo {
        rule_id: RuleId::R5,
        severity: Severity::Error,
        description: "organisation relations reference declared roles and the controls hierarchy is acyclic",
    },
    RuleInfo {
        rule_id: RuleId::R6,
        severity: Severity::Error,
        description: "interaction participants are declared roles and the pursued goal exists",
    },
    RuleInfo {
        rule_id: RuleId::R7,
        severity: Severity::Error,
        description: "every role needed by a goal is a declared role",
    },
    RuleInfo {
        rule_id: RuleId::R8,
        severity: Severity::Error,
        description: "every agent plays only declared roles",
    },
    RuleInfo {
        rule_id: RuleId::R9,
        severity: Severity::Warning,
        description: "scenario pre/postconditions are non-empty and each step actor is a role of an agent declaring the activity",
    },
];

/// The fixed rule table, R1 through R9.
pub fn rule_table() -> &'static [RuleInfo] {
    &RULES
}

fn severity_of(rule: RuleId) -> Severity {
    RULES[rule as usize].severity
}

struct Sink<'p> {
    plan_id: &'p str,
    phase: Phase,
    out: Vec<Diagnostic>,
}

impl Sink<'_> {
    fn push(&mut self, rule: RuleId, kind: ElementKind, id: &str, message: String) {
        self.out.push(Diagnostic {
            rule_id: rule,
            severity: severity_of(rule),
            element: ElementRef::new(self.plan_id, self.phase, kind, id),
            message,
        });
    }
}

/// Runs every rule over every phase of the plan.
pub fn validate_plan(plan: &Plan) -> Vec<Diagnostic> {
    let mut all = Vec::new();
    for (&phase, models) in &plan.phases {
        let mut sink = Sink {
            plan_id: &plan.plan_id,
            phase,
            out: Vec::new(),
        };
        check_phase(models, &mut sink);
        all.extend(sink.out);
    }
    all.sort_by(|a, b| {
        (a.element.phase, a.rule_id, a.element.path(), &a.message).cmp(&(
            b.element.phase,
            b.rule_id,
            b.element.path(),
            &b.message,
        ))
    });
    all
}

fn check_phase(m: &PhaseModels, sink: &mut Sink<'_>) {
    let goals: HashSet<&str> = m.all_goals().iter().map(|g| g.goal_id.as_str()).collect();
    let roles: HashSet<&str> = m.roles.iter().map(|r| r.role_id.as_str()).collect();
    let resources: HashSet<&str> = m.environment.iter().map(|e| e.entity_id.as_str()).collect();
    let performed: HashSet<&str> = m
        .scenarios
        .iter()
        .flat_map(|s| &s.steps)
        .map(|st| st.activity_id.as_str())
        .collect();

    // R1
    for act in m.activities() {
        if !performed.contains(act.activity_id.as_str()) {
            sink.push(
                RuleId::R1,
                ElementKind::Activity,
                &act.activity_id,
                format!(
                    "activity `{}` is not performed by any scenario step",
                    act.activity_id
                ),
            );
        }
    }

    // R2
    for s in &m.scenarios {
        if !goals.contains(s.goal_id.as_str()) {
            sink.push(
                RuleId::R2,
                ElementKind::Scenario,
                &s.scenario_id,
                format!("scenario achieves undeclared goal `{}`", s.goal_id),
            );
        }
    }

    // R3
    for r in &m.roles {
        for resp in &r.responsibilities {
            if !goals.contains(resp.goal_id.as_str()) {
                sink.push(
                    RuleId::R3,
                    ElementKind::Role,
                    &r.role_id,
                    format!(
                        "responsibility {:?} of role `{}` names undeclared goal `{}`",
                        resp.text, r.role_id, resp.goal_id
                    ),
                );
            }
        }
    }

    // R4
    for s in &m.scenarios {
        for (n, step) in s.steps.iter().enumerate() {
            for res in &step.resource_ids {
                if !resources.contains(res.as_str()) {
                    sink.push(
                        RuleId::R4,
                        ElementKind::Scenario,
                        &s.scenario_id,
                        format!(
                            "step {} (`{}`) uses undeclared resource `{res}`",
                            n + 1,
                            step.activity_id
                        ),
                    );
                }
            }
        }
    }

    // R5
    for rel in &m.organisation {
        for side in [&rel.left, &rel.right] {
            if !roles.contains(side.as_str()) {
                sink.push(
                    RuleId::R5,
                    ElementKind::Role,
                    side,
                    format!(
                        "organisation relation `{} {} {}` references undeclared role `{side}`",
                        rel.left,
                        rel.kind.as_str(),
                        rel.right
                    ),
                );
            }
        }
    }
    for cycle in controls_cycles(&m.organisation) {
        let shown: Vec<&str> = cycle
            .iter()
            .chain(cycle.first())
            .map(|s| s.as_str())
            .collect();
        sink.push(
            RuleId::R5,
            ElementKind::Role,
            &cycle[0],
            format!("controls cycle {}", shown.join(" -> ")),
        );
    }

    // R6
    for i in &m.interactions {
        for p in &i.participants {
            if !roles.contains(p.as_str()) {
                sink.push(
                    RuleId::R6,
                    ElementKind::Interaction,
                    &i.interaction_id,
                    format!("participant `{p}` is not a declared role"),
                );
            }
        }
        if !goals.contains(i.goal_id.as_str()) {
            sink.push(
                RuleId::R6,
                ElementKind::Interaction,
                &i.interaction_id,
                format!("interaction pursues undeclared goal `{}`", i.goal_id),
            );
        }
    }

    // R7
    for g in m.all_goals() {
        for r in &g.role_ids {
            if !roles.contains(r.as_str()) {
                sink.push(
                    RuleId::R7,
                    ElementKind::Goal,
                    &g.goal_id,
                    format!("goal needs undeclared role `{r}`"),
                );
            }
        }
    }

    // R8
    for a in &m.agents {
        for r in &a.plays {
            if !roles.contains(r.as_str()) {
                sink.push(
                    RuleId::R8,
                    ElementKind::Agent,
                    &a.agent_id,
                    format!("agent plays undeclared role `{r}`"),
                );
            }
        }
    }

    // R9
    for s in &m.scenarios {
        if s.precondition.trim().is_empty() {
            sink.push(
                RuleId::R9,
                ElementKind::Scenario,
                &s.scenario_id,
                "precondition is empty".to_string(),
            );
        }
        if s.postcondition.trim().is_empty() {
            sink.push(
                RuleId::R9,
                ElementKind::Scenario,
                &s.scenario_id,
                "postcondition is empty".to_string(),
            );
        }
        for (n, step) in s.steps.iter().enumerate() {
            let eligible = m.agents.iter().any(|a| {
                a.activities
                    .iter()
                    .any(|act| act.activity_id == step.activity_id)
                    && a.plays.contains(&step.actor_role_id)
            });
            if !eligible {
                sink.push(
                    RuleId::R9,
                    ElementKind::Scenario,
                    &s.scenario_id,
                    format!(
                        "step {} actor `{}` is not played by any agent declaring activity `{}`",
                        n + 1,
                        step.actor_role_id,
                        step.activity_id
                    ),
                );
            }
        }
    }
}

/// One cycle per strongly connected component of the controls digraph,
/// starting at the component's smallest role.
fn controls_cycles(org: &[OrgRelation]) -> Vec<Vec<String>> {
    let mut graph: DiGraphMap<&str, ()> = DiGraphMap::new();
    for rel in org.iter().filter(|r| r.kind == OrgKind::Controls) {
        graph.add_edge(rel.left.as_str(), rel.right.as_str(), ());
    }
    let mut cycles = Vec::new();
    for scc in tarjan_scc(&graph) {
        let has_cycle = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
        if !has_cycle {
            continue;
        }
        let members: BTreeSet<&str> = scc.iter().copied().collect();
        let start = *members.iter().next().expect("non-empty scc");
        cycles.push(cycle_through(&graph, &members, start));
    }
    cycles.sort();
    cycles
}

/// Shortest cycle from `start` back to itself inside `members`, found by
/// breadth-first search with lexicographic neighbour order.
fn cycle_through(
    graph: &DiGraphMap<&str, ()>,
    members: &BTreeSet<&str>,
    start: &str,
) -> Vec<String> {
    let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        let mut next: Vec<&str> = graph
            .neighbors(node)
            .filter(|n| members.contains(n))
            .collect();
        next.sort();
        for n in next {
            if n == start {
                let mut path = vec![node];
                let mut cur = node;
                while cur != start {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return path.into_iter().map(str::to_string).collect();
            }
            if !parent.contains_key(n) {
                parent.insert(n, node);
                queue.push_back(n);
            }
        }
    }
    unreachable!("every member of a cyclic component lies on a cycle")
}

/// (errors, warnings)
pub fn count_by_severity(diagnostics: &[Diagnostic]) -> (usize, usize) {
    let errors = diagnostics
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .count();
    (errors, diagnostics.len() - errors)
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}
