//! Fixtures, single-edit mutations and a brute-force reference checker for
//! the consistency rules. Shared with the acceptance harness.

#![allow(dead_code)]

use dmkf_core::model::*;
use dmkf_core::validate::{Diagnostic, RuleId, Severity};

pub const FLOOD_EXCERPT: &str = include_str!("../../../../fixtures/registry/flood-excerpt.reg");
pub const FULL_92: &str = include_str!("../../../../fixtures/registry/full-92.reg");
pub const WAGGA: &str = include_str!("../../../../fixtures/plans/wagga.dmp");
pub const WAGGA_MAP: &str = include_str!("../../../../fixtures/plans/wagga.map");
pub const WAGGA_ROLES: &str = include_str!("../../../../fixtures/plans/wagga-roles.dmp");
pub const WAGGA_ROLES_MAP: &str = include_str!("../../../../fixtures/plans/wagga-roles.map");
pub const WAGGA_EDGES: &str = include_str!("../../../../fixtures/plans/wagga-edges.dmp");
pub const WAGGA_EDGES_MAP: &str = include_str!("../../../../fixtures/plans/wagga-edges.map");
pub const GUNDAGAI: &str = include_str!("../../../../fixtures/plans/gundagai.dmp");
pub const GUNDAGAI_MAP: &str = include_str!("../../../../fixtures/plans/gundagai.map");

/// One textual edit of the Wagga fixture per error rule, with the element
/// the resulting diagnostic must name.
pub struct Mutation {
    pub rule: RuleId,
    pub find: &'static str,
    pub replace: &'static str,
    pub element: &'static str,
}

pub const MUTATIONS: [Mutation; 8] = [
    Mutation {
        rule: RuleId::R1,
        find: "activity ExerciseWardens \"warden exercise on doorknocking and warnings\"",
        replace: "activity ExerciseWardens \"warden exercise on doorknocking and warnings\"\n      activity StockpileSandbags \"stockpile sandbags\"",
        element: "WaggaWaggaLFP/Preparedness/activity/StockpileSandbags",
    },
    Mutation {
        rule: RuleId::R2,
        find: "scenario MemberTraining achieves TrainVolunteers",
        replace: "scenario MemberTraining achieves TrainStaff",
        element: "WaggaWaggaLFP/Preparedness/scenario/MemberTraining",
    },
    Mutation {
        rule: RuleId::R3,
        find: "      goal MaintainFloodReadiness \"The local flood plan and flood equipment are kept current\" {}\n",
        replace: "",
        element: "WaggaWaggaLFP/Preparedness/role/SESLC",
    },
    Mutation {
        rule: RuleId::R4,
        find: "uses LocalMedia",
        replace: "uses Radio",
        element: "WaggaWaggaLFP/Preparedness/scenario/EducationCampaign",
    },
    Mutation {
        rule: RuleId::R5,
        find: "SESLC controls SESUM",
        replace: "SESLC controls SESUM\n      SESUM controls SESSHQ",
        element: "WaggaWaggaLFP/Preparedness/role/MSESDHQ",
    },
    Mutation {
        rule: RuleId::R6,
        find: "participants SESLC, WWCC",
        replace: "participants SESLC, Council",
        element: "WaggaWaggaLFP/Preparedness/interaction/LiaiseOnEducation",
    },
    Mutation {
        rule: RuleId::R7,
        find: "role WWCC\n        role FPCs",
        replace: "role WWCC\n        role Residents",
        element: "WaggaWaggaLFP/Preparedness/goal/EducatePublic",
    },
    Mutation {
        rule: RuleId::R8,
        find: "plays WWCC {}",
        replace: "plays CityCouncil {}",
        element: "WaggaWaggaLFP/Preparedness/agent/Council",
    },
];

impl Mutation {
    pub fn apply(&self, text: &str) -> String {
        assert_eq!(
            text.matches(self.find).count(),
            1,
            "mutation anchor for {:?} must be unique",
            self.rule
        );
        text.replacen(self.find, self.replace, 1)
    }
}

pub type Finding = (RuleId, Severity, String);

pub fn findings(diagnostics: &[Diagnostic]) -> Vec<Finding> {
    let mut out: Vec<Finding> = diagnostics
        .iter()
        .map(|d| (d.rule_id, d.severity, d.element.path()))
        .collect();
    out.sort();
    out
}

fn contains(list: &[String], id: &str) -> bool {
    list.iter().any(|x| x == id)
}

fn walk_goals(goals: &[GoalNode], out: &mut Vec<GoalNode>) {
    for g in goals {
        out.push(g.clone());
        walk_goals(&g.subgoals, out);
    }
}

/// Exhaustive re-statement of the consistency rules, written without the
/// validator's data structures. Returns a sorted multiset of findings.
pub fn reference_check(plan: &Plan) -> Vec<Finding> {
    let mut out = Vec::new();
    for (phase, m) in &plan.phases {
        let path = |kind: &str, id: &str| format!("{}/{}/{}/{}", plan.plan_id, phase, kind, id);
        let mut goals = Vec::new();
        walk_goals(&m.goals, &mut goals);
        let goal_ids: Vec<String> = goals.iter().map(|g| g.goal_id.clone()).collect();
        let role_ids: Vec<String> = m.roles.iter().map(|r| r.role_id.clone()).collect();
        let resource_ids: Vec<String> = m.environment.iter().map(|e| e.entity_id.clone()).collect();
        let mut step_activities = Vec::new();
        for s in &m.scenarios {
            for st in &s.steps {
                step_activities.push(st.activity_id.clone());
            }
        }

        let mut activity_ids: Vec<String> = Vec::new();
        for a in &m.agents {
            for act in &a.activities {
                if !contains(&activity_ids, &act.activity_id) {
                    activity_ids.push(act.activity_id.clone());
                }
            }
        }
        for id in &activity_ids {
            if !contains(&step_activities, id) {
                out.push((RuleId::R1, Severity::Error, path("activity", id)));
            }
        }
        for s in &m.scenarios {
            if !contains(&goal_ids, &s.goal_id) {
                out.push((
                    RuleId::R2,
                    Severity::Error,
                    path("scenario", &s.scenario_id),
                ));
            }
        }
        for r in &m.roles {
            for resp in &r.responsibilities {
                if !contains(&goal_ids, &resp.goal_id) {
                    out.push((RuleId::R3, Severity::Error, path("role", &r.role_id)));
                }
            }
        }
        for s in &m.scenarios {
            for st in &s.steps {
                for res in &st.resource_ids {
                    if !contains(&resource_ids, res) {
                        out.push((
                            RuleId::R4,
                            Severity::Error,
                            path("scenario", &s.scenario_id),
                        ));
                    }
                }
            }
        }
        for rel in &m.organisation {
            for side in [&rel.left, &rel.right] {
                if !contains(&role_ids, side) {
                    out.push((RuleId::R5, Severity::Error, path("role", side)));
                }
            }
        }
        for start in controls_cycle_starts(&m.organisation) {
            out.push((RuleId::R5, Severity::Error, path("role", &start)));
        }
        for i in &m.interactions {
            for p in &i.participants {
                if !contains(&role_ids, p) {
                    out.push((
                        RuleId::R6,
                        Severity::Error,
                        path("interaction", &i.interaction_id),
                    ));
                }
            }
            if !contains(&goal_ids, &i.goal_id) {
                out.push((
                    RuleId::R6,
                    Severity::Error,
                    path("interaction", &i.interaction_id),
                ));
            }
        }
        for g in &goals {
            for r in &g.role_ids {
                if !contains(&role_ids, r) {
                    out.push((RuleId::R7, Severity::Error, path("goal", &g.goal_id)));
                }
            }
        }
        for a in &m.agents {
            for r in &a.plays {
                if !contains(&role_ids, r) {
                    out.push((RuleId::R8, Severity::Error, path("agent", &a.agent_id)));
                }
            }
        }
        for s in &m.scenarios {
            if s.precondition.trim().is_empty() {
                out.push((
                    RuleId::R9,
                    Severity::Warning,
                    path("scenario", &s.scenario_id),
                ));
            }
            if s.postcondition.trim().is_empty() {
                out.push((
                    RuleId::R9,
                    Severity::Warning,
                    path("scenario", &s.scenario_id),
                ));
            }
            for st in &s.steps {
                let mut ok = false;
                for a in &m.agents {
                    let declares = a.activities.iter().any(|x| x.activity_id == st.activity_id);
                    if declares && contains(&a.plays, &st.actor_role_id) {
                        ok = true;
                    }
                }
                if !ok {
                    out.push((
                        RuleId::R9,
                        Severity::Warning,
                        path("scenario", &s.scenario_id),
                    ));
                }
            }
        }
    }
    out.sort();
    out
}

/// For each group of roles lying on a common controls cycle, its smallest
/// role. Uses a transitive closure over the roles named in the relations.
pub fn controls_cycle_starts(org: &[OrgRelation]) -> Vec<String> {
    let mut nodes: Vec<String> = Vec::new();
    for rel in org.iter().filter(|r| r.kind == OrgKind::Controls) {
        for n in [&rel.left, &rel.right] {
            if !contains(&nodes, n) {
                nodes.push(n.clone());
            }
        }
    }
    let n = nodes.len();
    let idx = |s: &str| nodes.iter().position(|x| x == s).unwrap();
    let mut reach = vec![vec![false; n]; n];
    for rel in org.iter().filter(|r| r.kind == OrgKind::Controls) {
        reach[idx(&rel.left)][idx(&rel.right)] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut starts = Vec::new();
    for i in 0..n {
        if !reach[i][i] {
            continue;
        }
        let smallest = (0..n)
            .filter(|&j| reach[i][j] && reach[j][i])
            .map(|j| nodes[j].clone())
            .min()
            .unwrap();
        if smallest == nodes[i] {
            starts.push(smallest);
        }
    }
    starts
}

/// Mappable elements of a plan counted straight from its models, without
/// the enumeration helper: goals and subgoals, roles, agents, distinct
/// activity ids, triggers and resources.
pub fn mappable_count(plan: &Plan) -> usize {
    let mut total = 0;
    for m in plan.phases.values() {
        let mut goals = Vec::new();
        walk_goals(&m.goals, &mut goals);
        let mut activity_ids: Vec<String> = Vec::new();
        for a in &m.agents {
            for act in &a.activities {
                if !contains(&activity_ids, &act.activity_id) {
                    activity_ids.push(act.activity_id.clone());
                }
            }
        }
        let triggers: usize = m.agents.iter().map(|a| a.triggers.len()).sum();
        total += goals.len()
            + m.roles.len()
            + m.agents.len()
            + activity_ids.len()
            + triggers
            + m.environment.len();
    }
    total
}

pub const SUGGEST_CONCEPTS: [&str; 3] = ["Evacuation", "PublicEducation", "Sandbagging"];

pub const SUGGEST_REGISTRY: &str = r#"
concept Evacuation phase Response stereotypes Activity definition "move people out of the flood area to a safe place"
concept Sandbagging phase Response stereotypes Activity definition "place sandbags to protect property from flood water"
concept PublicEducation phase Response stereotypes Activity definition "education of the public"
"#;

/// Element descriptions and their hand-counted scores against
/// [`SUGGEST_CONCEPTS`] in that order.
pub const SUGGEST_TABLE: [(&str, [f64; 3]); 5] = [
    ("public education campaign", [0.0, 2.0 / 5.0, 0.0]),
    (
        "move residents to a safe place",
        [5.0 / 12.0, 0.0, 2.0 / 12.0],
    ),
    ("Flood water", [1.0 / 12.0, 0.0, 2.0 / 8.0]),
    ("", [0.0, 0.0, 0.0]),
    ("education of the public", [2.0 / 13.0, 1.0, 0.0]),
];

/// Jaccard similarity written out by hand over lowercase alphanumeric runs.
pub fn hand_jaccard(a: &str, b: &str) -> f64 {
    fn words(s: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut cur = String::new();
        for c in s.chars().chain(std::iter::once(' ')) {
            if c.is_alphanumeric() {
                cur.extend(c.to_lowercase());
            } else if !cur.is_empty() {
                if !out.contains(&cur) {
                    out.push(cur.clone());
                }
                cur.clear();
            }
        }
        out
    }
    let (x, y) = (words(a), words(b));
    let inter = x.iter().filter(|w| y.contains(w)).count();
    let union = x.len() + y.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
