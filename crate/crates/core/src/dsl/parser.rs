//! Recursive descent parser for the plan language. Errors are collected in
//! one pass; after a failed statement the parser resynchronizes at the next
//! section (or phase) boundary.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::lexer::{tokenize, Token, TokenKind};
use super::{ParseError, ParsedPlan, SourceSpan};
use crate::model::*;

const SECTION_KEYWORDS: &[&str] = &[
    "goal",
    "role",
    "organisation",
    "interaction",
    "environment",
    "agent",
    "scenario",
];

type PResult<T> = Result<T, ()>;

pub(crate) fn parse(text: &str) -> Result<ParsedPlan, Vec<ParseError>> {
    let (tokens, lex_errors) = tokenize(text);
    let mut parser = Parser {
        tokens,
        pos: 0,
        errors: lex_errors,
        spans: BTreeMap::new(),
        plan_id: String::new(),
    };
    let plan = parser.plan();
    let mut errors = parser.errors;
    match plan {
        Ok(plan) if errors.is_empty() => Ok(ParsedPlan {
            plan,
            spans: parser.spans,
        }),
        _ => {
            errors.sort_by_key(|e| (e.span.start, e.span.end));
            Err(errors)
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    errors: Vec<ParseError>,
    spans: BTreeMap<ElementRef, SourceSpan>,
    plan_id: String,
}

/// Ids declared so far within one phase, keyed by element kind.
#[derive(Default)]
struct DeclaredIds {
    seen: HashSet<(ElementKind, String)>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn peek_keyword(&self) -> Option<&str> {
        match &self.peek().kind {
            TokenKind::Ident(s) => Some(s.as_str()),
            _ => None,
        }
    }

    fn error_here<T>(&mut self, expected: impl Into<String>) -> PResult<T> {
        let tok = self.peek();
        let err = ParseError::new(tok.span, expected, tok.kind.to_string());
        self.errors.push(err);
        Err(())
    }

    fn expect_keyword(&mut self, keyword: &str) -> PResult<SourceSpan> {
        if self.peek_keyword() == Some(keyword) {
            Ok(self.advance().span)
        } else {
            self.error_here(format!("`{keyword}`"))
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, SourceSpan)> {
        match &self.peek().kind {
            TokenKind::Ident(s) => {
                let s = s.clone();
                Ok((s, self.advance().span))
            }
            _ => self.error_here(what.to_string()),
        }
    }

    fn expect_string(&mut self, what: &str) -> PResult<String> {
        match &self.peek().kind {
            TokenKind::Str(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => self.error_here(what.to_string()),
        }
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<SourceSpan> {
        if self.peek().kind == kind {
            Ok(self.advance().span)
        } else {
            self.error_here(kind.to_string())
        }
    }

    fn at(&self, kind: &TokenKind) -> bool {
        &self.peek().kind == kind
    }

    /// Skips forward from token index `from` to the next statement boundary:
    /// just past the block the statement opened, or the next keyword in
    /// `keywords` at the same nesting level, or an unmatched `}`.
    fn synchronize(&mut self, from: usize, keywords: &[&str]) {
        let mut depth = 0usize;
        let mut i = from;
        loop {
            match &self.tokens[i].kind {
                TokenKind::Eof => break,
                TokenKind::LBrace => depth += 1,
                TokenKind::RBrace => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                    if depth == 0 {
                        i += 1;
                        break;
                    }
                }
                TokenKind::Ident(s) if depth == 0 && i > from && keywords.contains(&s.as_str()) => {
                    break
                }
                _ => {}
            }
            i += 1;
        }
        self.pos = i;
    }

    fn declare(
        &mut self,
        ids: &mut DeclaredIds,
        phase: Phase,
        kind: ElementKind,
        id: &str,
        span: SourceSpan,
    ) {
        if !ids.seen.insert((kind, id.to_string())) {
            self.errors.push(ParseError::new(
                span,
                format!("unique {kind} id"),
                format!("duplicate `{id}`"),
            ));
            return;
        }
        self.record_span(phase, kind, id, span);
    }

    fn record_span(&mut self, phase: Phase, kind: ElementKind, id: &str, span: SourceSpan) {
        let key = ElementRef::new(self.plan_id.clone(), phase, kind, id);
        self.spans.entry(key).or_insert(span);
    }

    // plan := "plan" STRING "as" IDENT "{" phaseBlock+ "}"
    fn plan(&mut self) -> PResult<Plan> {
        let header = (|| {
            self.expect_keyword("plan")?;
            let title = self.expect_string("plan title string")?;
            self.expect_keyword("as")?;
            let (plan_id, _) = self.expect_ident("plan identifier")?;
            self.expect(TokenKind::LBrace)?;
            Ok((title, plan_id))
        })();
        let mut ok = header.is_ok();
        let (title, plan_id) = match header {
            Ok(h) => h,
            Err(()) => {
                // Keep reporting errors from any phase blocks further on.
                while !self.at(&TokenKind::Eof) && self.peek_keyword() != Some("phase") {
                    self.advance();
                }
                (String::new(), String::new())
            }
        };
        self.plan_id = plan_id.clone();

        let mut phases: BTreeMap<Phase, PhaseModels> = BTreeMap::new();
        loop {
            match &self.peek().kind {
                TokenKind::RBrace => {
                    if phases.is_empty() && ok {
                        self.error_here::<()>(
                            "`phase` block (a plan must populate at least one phase)",
                        )
                        .ok();
                        ok = false;
                    }
                    self.advance();
                    break;
                }
                TokenKind::Ident(s) if s == "phase" => {
                    let start = self.pos;
                    match self.phase_block() {
                        Ok(Some((phase, models, span))) => {
                            if let std::collections::btree_map::Entry::Vacant(slot) =
                                phases.entry(phase)
                            {
                                slot.insert(models);
                            } else {
                                self.errors.push(ParseError::new(
                                    span,
                                    "each phase at most once",
                                    format!("duplicate phase `{phase}`"),
                                ));
                            }
                        }
                        Ok(None) => ok = false,
                        Err(()) => {
                            ok = false;
                            self.synchronize(start, &["phase"]);
                        }
                    }
                }
                TokenKind::Eof => {
                    self.error_here::<()>("`phase` or `}`").ok();
                    return Err(());
                }
                _ => {
                    ok = false;
                    let start = self.pos;
                    self.error_here::<()>("`phase` or `}`").ok();
                    self.synchronize(start, &["phase"]);
                    if self.pos == start {
                        self.advance();
                    }
                }
            }
        }
        if !self.at(&TokenKind::Eof) {
            self.error_here::<()>("end of input").ok();
            ok = false;
        }
        if !ok {
            return Err(());
        }
        Ok(Plan {
            plan_id,
            title,
            phases,
        })
    }

    // phaseBlock := "phase" phaseName "{" section* "}"
    // Returns Ok(None) when the phase name is unknown but the body parsed.
    fn phase_block(&mut self) -> PResult<Option<(Phase, PhaseModels, SourceSpan)>> {
        self.expect_keyword("phase")?;
        let (name, name_span) = self.expect_ident("phase name")?;
        let phase = match name.parse::<Phase>() {
            Ok(p) => Some(p),
            Err(_) => {
                self.errors.push(ParseError::new(
                    name_span,
                    "`Prevention`, `Preparedness`, `Response` or `Recovery`",
                    format!("`{name}`"),
                ));
                None
            }
        };
        self.expect(TokenKind::LBrace)?;
        let tag = phase.unwrap_or(Phase::Prevention);
        let mut models = PhaseModels::default();
        let mut ids = DeclaredIds::default();
        loop {
            match &self.peek().kind {
                TokenKind::RBrace => {
                    self.advance();
                    break;
                }
                TokenKind::Eof => return self.error_here("section or `}`"),
                TokenKind::Ident(s) if SECTION_KEYWORDS.contains(&s.as_str()) => {
                    let start = self.pos;
                    if self.section(tag, &mut models, &mut ids).is_err() {
                        self.synchronize(start, SECTION_KEYWORDS);
                    }
                }
                _ => {
                    let start = self.pos;
                    self.error_here::<()>(
                        "section keyword (`goal`, `role`, `organisation`, `interaction`, `environment`, `agent`, `scenario`) or `}`",
                    )
                    .ok();
                    self.synchronize(start, SECTION_KEYWORDS);
                    if self.pos == start {
                        self.advance();
                    }
                }
            }
        }
        Ok(phase.map(|p| (p, models, name_span)))
    }

    fn section(
        &mut self,
        phase: Phase,
        models: &mut PhaseModels,
        ids: &mut DeclaredIds,
    ) -> PResult<()> {
        let keyword = self.peek_keyword().unwrap_or_default().to_string();
        match keyword.as_str() {
            "goal" => {
                let goal = self.goal_decl(phase, ids)?;
                models.goals.push(goal);
            }
            "role" => {
                let role = self.role_decl(phase, ids)?;
                models.roles.push(role);
            }
            "organisation" => {
                let rels = self.org_block()?;
                models.organisation.extend(rels);
            }
            "interaction" => {
                let inter = self.interaction_decl(phase, ids)?;
                models.interactions.push(inter);
            }
            "environment" => {
                let entities = self.env_block(phase, ids)?;
                models.environment.extend(entities);
            }
            "agent" => {
                let agent = self.agent_decl(phase, ids)?;
                models.agents.push(agent);
            }
            "scenario" => {
                let scen = self.scenario_decl(phase, ids)?;
                models.scenarios.push(scen);
            }
            _ => unreachable!("caller checked section keyword"),
        }
        Ok(())
    }

    // goalDecl := "goal" IDENT STRING "{" (goalDecl | "role" IDENT)* "}"
    fn goal_decl(&mut self, phase: Phase, ids: &mut DeclaredIds) -> PResult<GoalNode> {
        self.expect_keyword("goal")?;
        let (goal_id, span) = self.expect_ident("goal identifier")?;
        self.declare(ids, phase, ElementKind::Goal, &goal_id, span);
        let description = self.expect_string("goal description string")?;
        self.expect(TokenKind::LBrace)?;
        let mut node = GoalNode {
            goal_id,
            description,
            subgoals: Vec::new(),
            role_ids: Vec::new(),
        };
        loop {
            match self.peek_keyword() {
                Some("goal") => node.subgoals.push(self.goal_decl(phase, ids)?),
                Some("role") => {
                    self.advance();
                    let (role, _) = self.expect_ident("role identifier")?;
                    node.role_ids.push(role);
                }
                _ => {
                    self.expect(TokenKind::RBrace)
                        .or_else(|_| self.replace_last_expected("`goal`, `role` or `}`"))?;
                    break;
                }
            }
        }
        Ok(node)
    }

    fn replace_last_expected<T>(&mut self, expected: &str) -> PResult<T> {
        if let Some(last) = self.errors.last_mut() {
            last.expected = expected.to_string();
        }
        Err(())
    }

    // roleDecl := "role" IDENT STRING "{" respDecl* consDecl* "}"
    fn role_decl(&mut self, phase: Phase, ids: &mut DeclaredIds) -> PResult<RoleDef> {
        self.expect_keyword("role")?;
        let (role_id, span) = self.expect_ident("role identifier")?;
        self.declare(ids, phase, ElementKind::Role, &role_id, span);
        let description = self.expect_string("role description string")?;
        self.expect(TokenKind::LBrace)?;
        let mut role = RoleDef {
            role_id,
            description,
            responsibilities: Vec::new(),
            constraints: Vec::new(),
        };
        while self.peek_keyword() == Some("responsibility") {
            self.advance();
            let text = self.expect_string("responsibility string")?;
            self.expect_keyword("for")?;
            let (goal_id, _) = self.expect_ident("goal identifier")?;
            role.responsibilities.push(Responsibility { text, goal_id });
        }
        while self.peek_keyword() == Some("constraint") {
            self.advance();
            role.constraints
                .push(self.expect_string("constraint string")?);
        }
        let expected = if role.constraints.is_empty() {
            "`responsibility`, `constraint` or `}`"
        } else {
            "`constraint` or `}`"
        };
        self.expect(TokenKind::RBrace)
            .or_else(|_| self.replace_last_expected(expected))?;
        Ok(role)
    }

    // orgBlock := "organisation" "{" orgRel* "}"
    // orgRel   := IDENT ("controls" | "peer") IDENT
    fn org_block(&mut self) -> PResult<Vec<OrgRelation>> {
        self.expect_keyword("organisation")?;
        self.expect(TokenKind::LBrace)?;
        let mut rels = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            let (left, left_span) = self.expect_ident("role identifier or `}`")?;
            let kind = match self.peek_keyword() {
                Some("controls") => OrgKind::Controls,
                Some("peer") => OrgKind::Peer,
                _ => return self.error_here("`controls` or `peer`"),
            };
            self.advance();
            let (right, _) = self.expect_ident("role identifier")?;
            if left == right {
                self.errors.push(ParseError::new(
                    left_span,
                    "two distinct roles",
                    format!("`{left} {} {right}`", kind.as_str()),
                ));
                continue;
            }
            rels.push(match kind {
                OrgKind::Controls => OrgRelation::controls(left, right),
                OrgKind::Peer => OrgRelation::peer(left, right),
            });
        }
        self.advance();
        Ok(rels)
    }

    // interDecl := "interaction" IDENT "pursues" IDENT "{" "participants" IDENT ("," IDENT)+ "}"
    fn interaction_decl(&mut self, phase: Phase, ids: &mut DeclaredIds) -> PResult<Interaction> {
        self.expect_keyword("interaction")?;
        let (interaction_id, span) = self.expect_ident("interaction identifier")?;
        self.declare(ids, phase, ElementKind::Interaction, &interaction_id, span);
        self.expect_keyword("pursues")?;
        let (goal_id, _) = self.expect_ident("goal identifier")?;
        self.expect(TokenKind::LBrace)?;
        let list_span = self.expect_keyword("participants")?;
        let participants = self.ident_list("role identifier")?;
        if participants.len() < 2 {
            self.errors.push(ParseError::new(
                list_span,
                "at least two participants",
                format!("{} participant", participants.len()),
            ));
        }
        let mut seen = HashSet::new();
        for p in &participants {
            if !seen.insert(p) {
                self.errors.push(ParseError::new(
                    list_span,
                    "distinct participants",
                    format!("duplicate `{p}`"),
                ));
            }
        }
        self.expect(TokenKind::RBrace)?;
        Ok(Interaction {
            interaction_id,
            goal_id,
            participants,
        })
    }

    fn ident_list(&mut self, what: &str) -> PResult<Vec<String>> {
        let mut items = vec![self.expect_ident(what)?.0];
        while self.at(&TokenKind::Comma) {
            self.advance();
            items.push(self.expect_ident(what)?.0);
        }
        Ok(items)
    }

    // envBlock := "environment" "{" ("resource" IDENT STRING?)* "}"
    fn env_block(&mut self, phase: Phase, ids: &mut DeclaredIds) -> PResult<Vec<EnvEntity>> {
        self.expect_keyword("environment")?;
        self.expect(TokenKind::LBrace)?;
        let mut entities = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            self.expect_keyword("resource")
                .or_else(|_| self.replace_last_expected("`resource` or `}`"))?;
            let (entity_id, span) = self.expect_ident("resource identifier")?;
            self.declare(ids, phase, ElementKind::Resource, &entity_id, span);
            let description = match &self.peek().kind {
                TokenKind::Str(s) => {
                    let s = s.clone();
                    self.advance();
                    s
                }
                _ => String::new(),
            };
            entities.push(EnvEntity {
                entity_id,
                description,
            });
        }
        self.advance();
        Ok(entities)
    }

    // agentDecl := "agent" IDENT STRING "plays" IDENT ("," IDENT)* "{" trigDecl* actDecl* "}"
    fn agent_decl(&mut self, phase: Phase, ids: &mut DeclaredIds) -> PResult<AgentDef> {
        self.expect_keyword("agent")?;
        let (agent_id, span) = self.expect_ident("agent identifier")?;
        self.declare(ids, phase, ElementKind::Agent, &agent_id, span);
        let description = self.expect_string("agent description string")?;
        self.expect_keyword("plays")?;
        let plays = self.ident_list("role identifier")?;
        self.expect(TokenKind::LBrace)?;
        let mut agent = AgentDef {
            agent_id,
            description,
            plays,
            triggers: Vec::new(),
            activities: Vec::new(),
        };
        while self.peek_keyword() == Some("trigger") {
            self.advance();
            let (trigger_id, span) = self.expect_ident("trigger identifier")?;
            self.declare(ids, phase, ElementKind::Trigger, &trigger_id, span);
            let description = self.expect_string("trigger description string")?;
            agent.triggers.push(Trigger {
                trigger_id,
                description,
            });
        }
        // Activities may be shared between agents, but not repeated in one.
        let mut own: HashMap<String, ()> = HashMap::new();
        while self.peek_keyword() == Some("activity") {
            self.advance();
            let (activity_id, span) = self.expect_ident("activity identifier")?;
            if own.insert(activity_id.clone(), ()).is_some() {
                self.errors.push(ParseError::new(
                    span,
                    "unique activity id within agent",
                    format!("duplicate `{activity_id}`"),
                ));
            } else {
                self.record_span(phase, ElementKind::Activity, &activity_id, span);
            }
            let description = self.expect_string("activity description string")?;
            agent.activities.push(Activity {
                activity_id,
                description,
            });
        }
        let expected = if agent.activities.is_empty() {
            "`trigger`, `activity` or `}`"
        } else {
            "`activity` or `}`"
        };
        self.expect(TokenKind::RBrace)
            .or_else(|_| self.replace_last_expected(expected))?;
        Ok(agent)
    }

    // scenDecl := "scenario" IDENT "achieves" IDENT "{" "pre" STRING stepDecl+ "post" STRING "}"
    fn scenario_decl(&mut self, phase: Phase, ids: &mut DeclaredIds) -> PResult<Scenario> {
        self.expect_keyword("scenario")?;
        let (scenario_id, span) = self.expect_ident("scenario identifier")?;
        self.declare(ids, phase, ElementKind::Scenario, &scenario_id, span);
        self.expect_keyword("achieves")?;
        let (goal_id, _) = self.expect_ident("goal identifier")?;
        self.expect(TokenKind::LBrace)?;
        self.expect_keyword("pre")?;
        let precondition = self.expect_string("precondition string")?;
        let mut steps = vec![self.step_decl()?];
        while self.peek_keyword() == Some("step") {
            steps.push(self.step_decl()?);
        }
        self.expect_keyword("post")
            .or_else(|_| self.replace_last_expected("`step` or `post`"))?;
        let postcondition = self.expect_string("postcondition string")?;
        self.expect(TokenKind::RBrace)?;
        Ok(Scenario {
            scenario_id,
            goal_id,
            precondition,
            postcondition,
            steps,
        })
    }

    // stepDecl := "step" IDENT "by" IDENT ("uses" IDENT ("," IDENT)*)? "[" mode "]"
    fn step_decl(&mut self) -> PResult<ScenarioStep> {
        self.expect_keyword("step")?;
        let (activity_id, _) = self.expect_ident("activity identifier")?;
        self.expect_keyword("by")?;
        let (actor_role_id, _) = self.expect_ident("role identifier")?;
        let resource_ids = if self.peek_keyword() == Some("uses") {
            self.advance();
            self.ident_list("resource identifier")?
        } else {
            Vec::new()
        };
        self.expect(TokenKind::LBracket).or_else(|_| {
            self.replace_last_expected(if resource_ids.is_empty() {
                "`uses` or `[`"
            } else {
                "`,` or `[`"
            })
        })?;
        let mode = match &self.peek().kind {
            TokenKind::Ident(s) => match s.parse::<StepMode>() {
                Ok(m) => m,
                Err(_) => return self.error_here("`sequential`, `parallel` or `interleaved`"),
            },
            _ => return self.error_here("`sequential`, `parallel` or `interleaved`"),
        };
        self.advance();
        self.expect(TokenKind::RBracket)?;
        Ok(ScenarioStep {
            activity_id,
            actor_role_id,
            resource_ids,
            mode,
        })
    }
}
