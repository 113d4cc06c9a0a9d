use std::fmt::Write;

use crate::model::{GoalNode, Plan};

/// Quotes `s` as a plan-language string literal.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

struct Out {
    buf: String,
}

impl Out {
    fn line(&mut self, depth: usize, text: impl AsRef<str>) {
        for _ in 0..depth {
            self.buf.push_str("  ");
        }
        self.buf.push_str(text.as_ref());
        self.buf.push('\n');
    }

    /// Emits `head {}` when `body` is empty, otherwise a braced block.
    fn block(&mut self, depth: usize, head: String, body: Vec<String>) {
        if body.is_empty() {
            self.line(depth, format!("{head} {{}}"));
        } else {
            self.line(depth, format!("{head} {{"));
            for l in body {
                self.line(depth + 1, l);
            }
            self.line(depth, "}");
        }
    }
}

fn goal(out: &mut Out, depth: usize, g: &GoalNode) {
    let head = format!("goal {} {}", g.goal_id, quote(&g.description));
    if g.role_ids.is_empty() && g.subgoals.is_empty() {
        out.line(depth, format!("{head} {{}}"));
        return;
    }
    out.line(depth, format!("{head} {{"));
    for r in &g.role_ids {
        out.line(depth + 1, format!("role {r}"));
    }
    for sub in &g.subgoals {
        goal(out, depth + 1, sub);
    }
    out.line(depth, "}");
}

/// Canonical text of a plan: two-space indentation, one statement per line,
/// phases in enum order, elements in declaration order.
pub fn render_plan(plan: &Plan) -> String {
    let mut out = Out { buf: String::new() };
    out.line(
        0,
        format!("plan {} as {} {{", quote(&plan.title), plan.plan_id),
    );
    for (phase, m) in &plan.phases {
        if m.is_empty() {
            out.line(1, format!("phase {phase} {{}}"));
            continue;
        }
        out.line(1, format!("phase {phase} {{"));
        for g in &m.goals {
            goal(&mut out, 2, g);
        }
        for r in &m.roles {
            let mut body: Vec<String> = r
                .responsibilities
                .iter()
                .map(|resp| format!("responsibility {} for {}", quote(&resp.text), resp.goal_id))
                .collect();
            body.extend(
                r.constraints
                    .iter()
                    .map(|c| format!("constraint {}", quote(c))),
            );
            out.block(
                2,
                format!("role {} {}", r.role_id, quote(&r.description)),
                body,
            );
        }
        if !m.organisation.is_empty() {
            let body = m
                .organisation
                .iter()
                .map(|rel| format!("{} {} {}", rel.left, rel.kind.as_str(), rel.right))
                .collect();
            out.block(2, "organisation".to_string(), body);
        }
        for i in &m.interactions {
            out.block(
                2,
                format!("interaction {} pursues {}", i.interaction_id, i.goal_id),
                vec![format!("participants {}", i.participants.join(", "))],
            );
        }
        if !m.environment.is_empty() {
            let body = m
                .environment
                .iter()
                .map(|e| {
                    if e.description.is_empty() {
                        format!("resource {}", e.entity_id)
                    } else {
                        format!("resource {} {}", e.entity_id, quote(&e.description))
                    }
                })
                .collect();
            out.block(2, "environment".to_string(), body);
        }
        for a in &m.agents {
            let mut body: Vec<String> = a
                .triggers
                .iter()
                .map(|t| format!("trigger {} {}", t.trigger_id, quote(&t.description)))
                .collect();
            body.extend(
                a.activities
                    .iter()
                    .map(|act| format!("activity {} {}", act.activity_id, quote(&act.description))),
            );
            out.block(
                2,
                format!(
                    "agent {} {} plays {}",
                    a.agent_id,
                    quote(&a.description),
                    a.plays.join(", ")
                ),
                body,
            );
        }
        for s in &m.scenarios {
            let mut body = vec![format!("pre {}", quote(&s.precondition))];
            for step in &s.steps {
                let mut line = format!("step {} by {}", step.activity_id, step.actor_role_id);
                if !step.resource_ids.is_empty() {
                    let _ = write!(line, " uses {}", step.resource_ids.join(", "));
                }
                let _ = write!(line, " [{}]", step.mode.as_str());
                body.push(line);
            }
            body.push(format!("post {}", quote(&s.postcondition)));
            out.block(
                2,
                format!("scenario {} achieves {}", s.scenario_id, s.goal_id),
                body,
            );
        }
        out.line(1, "}");
    }
    out.line(0, "}");
    out.buf
}
