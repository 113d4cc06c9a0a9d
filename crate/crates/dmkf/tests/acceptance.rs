//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or exceeds its time limit.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use dmkf_core::dsl::{parse_plan, parse_plan_bytes, render_plan};
use dmkf_core::mapping::{score, suggest};
use dmkf_core::model::*;
use dmkf_core::registry::load_registry;
use dmkf_core::testkit::valid_plan;
use dmkf_core::validate::{validate_plan, Severity};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

type Check = Result<(), String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture(rel: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", rel]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

struct Cli {
    dir: tempfile::TempDir,
}

struct Output {
    code: i32,
    out: String,
    err: String,
}

impl Cli {
    fn new() -> Self {
        Cli {
            dir: tempfile::tempdir().expect("temp dir"),
        }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = dmkf::cli::run(
            std::iter::once("dmkf").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        Output {
            code,
            out: String::from_utf8(out).expect("utf-8 stdout"),
            err: String::from_utf8(err).expect("utf-8 stderr"),
        }
    }

    fn ok(&self, args: &[&str]) -> Result<String, String> {
        let o = self.run(args);
        if o.code != 0 {
            return Err(format!(
                "`dmkf {}` exited {}: {}",
                args.join(" "),
                o.code,
                o.err.trim_end()
            ));
        }
        Ok(o.out)
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

const ROLES: [&str; 8] = [
    "SESLC", "WWCC", "SESSHQ", "MSESDHQ", "SES", "SESFWs", "SESUM", "FPCs",
];

fn wagga_roles() -> Check {
    let cli = Cli::new();
    let reg = fixture("registry/flood-excerpt.reg");
    let plan = fixture("plans/wagga-roles.dmp");
    let snap = cli.path("repo.dmks");
    let ws = [
        "--registry",
        reg.as_str(),
        "--plan",
        plan.as_str(),
        "--snapshot",
        snap.as_str(),
    ];
    for role in ROLES {
        let element = format!("WaggaWaggaLFP/Preparedness/role/{role}");
        let mut args = vec!["candidates", "--element", element.as_str()];
        args.extend_from_slice(&ws);
        let out = cli.ok(&args)?;
        ensure!(
            out == "AidAgency\nPeople\nPreparednessTeam\n",
            "{role}: candidates {out:?}"
        );
    }
    let map = fixture("plans/wagga-roles.map");
    let mut args = vec!["map-batch", map.as_str()];
    args.extend_from_slice(&ws);
    cli.ok(&args)?;
    let mut args = vec!["transfer"];
    args.extend_from_slice(&ws);
    let out = cli.ok(&args)?;
    ensure!(
        out.starts_with("WaggaWaggaLFP: 8 units,"),
        "transfer: {out:?}"
    );

    let exported = cli.ok(&["export", "--snapshot", &snap])?;
    let snapshot = dmkf_core::repository::import_snapshot(&exported).map_err(|e| e.to_string())?;
    let plan = parse_plan(WAGGA_ROLES).map_err(|e| format!("{e:?}"))?;
    let rows: BTreeMap<String, (String, String)> = snapshot
        .units()
        .map(|u| {
            (
                u.name.clone(),
                (u.concept_name.clone(), u.description.clone()),
            )
        })
        .collect();
    let expected = [
        (
            "SESLC",
            "PreparednessTeam",
            "State Emergency Service Local Controller",
        ),
        ("WWCC", "PreparednessTeam", "Wagga - wagga City Council"),
        ("SESSHQ", "PreparednessTeam", "SES State HeadQuarter"),
        (
            "MSESDHQ",
            "PreparednessTeam",
            "Murrumbidgee SES Division Headquarter",
        ),
        ("SES", "PreparednessTeam", "SES New South Wales"),
        ("SESFWs", "PreparednessTeam", "SES Flood Wardens"),
        ("SESUM", "PreparednessTeam", "SES Unit Members"),
        ("FPCs", "People", "Flood Prone Communities"),
    ];
    ensure!(rows.len() == 8, "{} units", rows.len());
    let order: Vec<String> = enumerate_elements(&plan)
        .into_iter()
        .map(|e| e.element.element_id)
        .collect();
    ensure!(order == ROLES, "row order {order:?}");
    for (name, concept, description) in expected {
        let got = rows.get(name).ok_or(format!("no unit for {name}"))?;
        ensure!(got.0 == concept && got.1 == description, "{name}: {got:?}");
    }
    let team = cli.ok(&[
        "query",
        "--concept",
        "PreparednessTeam",
        "--snapshot",
        &snap,
    ])?;
    ensure!(
        team.lines().count() == 7,
        "PreparednessTeam query: {team:?}"
    );
    Ok(())
}

fn registry_arithmetic() -> Check {
    let registry = load_registry(FULL_92).map_err(|e| format!("{e:?}"))?;
    let counts: Vec<usize> = registry.counts().values().copied().collect();
    ensure!(counts == [21, 25, 25, 21], "counts {counts:?}");
    ensure!(registry.len() == 92, "total {}", registry.len());

    let cli = Cli::new();
    let out = cli.ok(&["registry-check", &fixture("registry/full-92.reg")])?;
    ensure!(out.contains("total 92\n"), "registry-check: {out:?}");
    let lines: Vec<&str> = FULL_92.lines().collect();
    let mut deleted = 0;
    let path = cli.path("mutated.reg");
    for (i, line) in lines.iter().enumerate() {
        if !line.starts_with("concept ") {
            continue;
        }
        let phase = line
            .split_whitespace()
            .nth(3)
            .ok_or("malformed concept line")?;
        let declared = match phase {
            "Prevention" | "Recovery" => 21,
            _ => 25,
        };
        let kept: Vec<&str> = lines
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, l)| *l)
            .collect();
        std::fs::write(&path, kept.join("\n") + "\n").map_err(|e| e.to_string())?;
        let o = cli.run(&["registry-check", &path]);
        let want = format!("{phase}: declared {declared}, found {}", declared - 1);
        ensure!(
            o.code != 0 && o.err.contains(&want),
            "deleting line {}: exit {} {:?}",
            i + 1,
            o.code,
            o.err
        );
        deleted += 1;
    }
    ensure!(deleted == 92, "{deleted} records tried");
    Ok(())
}

fn annotation_fidelity() -> Check {
    let registry = load_registry(FLOOD_EXCERPT).map_err(|e| format!("{e:?}"))?;
    let names = |s, p| -> Vec<String> {
        registry
            .candidates(s, p)
            .iter()
            .map(|c| c.name.clone())
            .collect()
    };
    let act = names(Stereotype::Activity, Phase::Preparedness);
    ensure!(act == ["PublicEducation", "Training"], "Activity: {act:?}");
    let env = names(Stereotype::EnvironmentEntity, Phase::Preparedness);
    ensure!(
        env == ["Media", "MutualAidAgreement"],
        "EnvironmentEntity: {env:?}"
    );
    Ok(())
}

fn validator_suite() -> Check {
    let clean = parse_plan(WAGGA).map_err(|e| format!("{e:?}"))?;
    let d = validate_plan(&clean);
    ensure!(
        d.iter().all(|d| d.severity != Severity::Error),
        "clean fixture: {d:?}"
    );
    for m in &MUTATIONS {
        let plan = parse_plan(&m.apply(WAGGA)).map_err(|e| format!("{:?}: {e:?}", m.rule))?;
        let errors: Vec<_> = validate_plan(&plan)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect();
        ensure!(
            errors.len() == 1
                && errors[0].rule_id == m.rule
                && errors[0].element.path() == m.element,
            "{:?} mutation: {errors:?}",
            m.rule
        );
    }
    runner(200)
        .run(&valid_plan(), |plan| {
            let got = findings(&validate_plan(&plan));
            let want = reference_check(&plan);
            if got != want {
                return Err(TestCaseError::fail(format!(
                    "validator {got:?} vs reference {want:?}"
                )));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn parser_round_trip() -> Check {
    runner(500)
        .run(&valid_plan(), |plan| {
            let text = render_plan(&plan);
            match parse_plan(&text) {
                Ok(back) if back == plan => Ok(()),
                Ok(_) => Err(TestCaseError::fail(format!(
                    "round trip changed the plan:\n{text}"
                ))),
                Err(e) => Err(TestCaseError::fail(format!("{e:?}\n{text}"))),
            }
        })
        .map_err(|e| e.to_string())?;
    runner(10_000)
        .run(&vec(any::<u8>(), 0..512), |bytes| {
            match catch_unwind(|| parse_plan_bytes(&bytes)) {
                Ok(Ok(_)) | Ok(Err(_)) => Ok(()),
                Err(_) => Err(TestCaseError::fail(format!("parser panicked on {bytes:?}"))),
            }
        })
        .map_err(|e| e.to_string())
}

fn edge_derivation() -> Check {
    let cli = Cli::new();
    let reg = fixture("registry/flood-excerpt.reg");
    let plan = fixture("plans/wagga-edges.dmp");
    let snap = cli.path("repo.dmks");
    let ws = [
        "--registry",
        reg.as_str(),
        "--plan",
        plan.as_str(),
        "--snapshot",
        snap.as_str(),
    ];
    let map = fixture("plans/wagga-edges.map");
    let mut args = vec!["map-batch", map.as_str()];
    args.extend_from_slice(&ws);
    cli.ok(&args)?;
    let mut args = vec!["transfer"];
    args.extend_from_slice(&ws);
    cli.ok(&args)?;
    let snapshot = dmkf::workspace::read_snapshot(Path::new(&snap)).map_err(|f| f.to_string())?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for e in snapshot.edges() {
        *counts.entry(e.relation.to_string()).or_default() += 1;
    }
    let want: BTreeMap<String, usize> = [("Controls", 2), ("isPeer", 1), ("rolePursueGoal", 2)]
        .map(|(k, v)| (k.to_string(), v))
        .into();
    ensure!(counts == want, "stored edges {counts:?}");
    let role = |id: &str| format!("WaggaWaggaLFP/Preparedness/role/{id}");
    let out = cli.ok(&["query", "--relation", "isControlledBy", "--snapshot", &snap])?;
    let mut got: Vec<&str> = out.lines().collect();
    got.sort();
    let mut want = vec![
        format!(
            "{} isControlledBy {} (derived)",
            role("MSESDHQ"),
            role("SESSHQ")
        ),
        format!(
            "{} isControlledBy {} (derived)",
            role("SESLC"),
            role("MSESDHQ")
        ),
    ];
    want.sort();
    ensure!(got == want, "isControlledBy edges {got:?}");
    Ok(())
}

fn cross_plan_query() -> Check {
    let cli = Cli::new();
    let reg = fixture("registry/flood-excerpt.reg");
    let wagga = fixture("plans/wagga.dmp");
    let gundagai = fixture("plans/gundagai.dmp");
    let snap = cli.path("repo.dmks");
    let ws = [
        "--registry",
        reg.as_str(),
        "--plan",
        wagga.as_str(),
        "--plan",
        gundagai.as_str(),
        "--snapshot",
        snap.as_str(),
    ];
    for map in [fixture("plans/wagga.map"), fixture("plans/gundagai.map")] {
        let mut args = vec!["map-batch", map.as_str()];
        args.extend_from_slice(&ws);
        cli.ok(&args)?;
    }
    let mut args = vec!["transfer"];
    args.extend_from_slice(&ws);
    cli.ok(&args)?;
    let out = cli.ok(&["query", "--concept", "PublicEducation", "--snapshot", &snap])?;
    let got: Vec<&str> = out
        .lines()
        .map(|l| l.split('\t').next().unwrap_or_default())
        .collect();

    let snapshot = dmkf::workspace::read_snapshot(Path::new(&snap)).map_err(|f| f.to_string())?;
    let mut oracle: Vec<(String, Phase, String)> = snapshot
        .units()
        .filter(|u| u.concept_name == "PublicEducation")
        .map(|u| (u.element.plan_id.clone(), u.phase, u.element.path()))
        .collect();
    oracle.sort();
    let oracle: Vec<&str> = oracle.iter().map(|t| t.2.as_str()).collect();
    ensure!(got == oracle, "query {got:?} vs brute force {oracle:?}");
    ensure!(got.len() == 2, "{} units", got.len());
    ensure!(
        got[0].starts_with("GundagaiLFP/") && got[1].starts_with("WaggaWaggaLFP/"),
        "one unit per plan in plan order: {got:?}"
    );
    Ok(())
}

fn suggestion_oracle() -> Check {
    let registry = load_registry(SUGGEST_REGISTRY).map_err(|e| format!("{e:?}"))?;
    ensure!(
        score("public education campaign", "education of the public") == 0.4,
        "worked example"
    );
    for (i, (text, expected)) in SUGGEST_TABLE.iter().enumerate() {
        let element = ElementRef::new("T", Phase::Response, ElementKind::Activity, format!("A{i}"));
        let got = suggest(&element, text, &registry).map_err(|e| e.to_string())?;
        for (name, want) in SUGGEST_CONCEPTS.iter().zip(expected) {
            let s = got
                .iter()
                .find(|s| &s.concept.name == name)
                .ok_or(format!("{name} missing"))?;
            ensure!(
                s.score == *want,
                "{text:?} vs {name}: {} != {want}",
                s.score
            );
            ensure!(
                s.score == hand_jaccard(text, &s.concept.definition),
                "{text:?} vs {name}: oracle"
            );
        }
        let mut order: Vec<(f64, &str)> = SUGGEST_CONCEPTS
            .iter()
            .zip(expected)
            .map(|(n, s)| (*s, *n))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let got_order: Vec<&str> = got.iter().map(|s| s.concept.name.as_str()).collect();
        let want_order: Vec<&str> = order.iter().map(|o| o.1).collect();
        ensure!(got_order == want_order, "{text:?}: order {got_order:?}");
    }
    Ok(())
}

const QUERIES: [&[&str]; 10] = [
    &["query", "--concept", "PreparednessTeam"],
    &["query", "--concept", "People"],
    &["query", "--concept", "PublicEducation"],
    &["query", "--concept", "Training"],
    &["query", "--phase", "Preparedness"],
    &["query", "--plan-id", "WaggaWaggaLFP", "--phase", "Recovery"],
    &["query", "--source-model", "role"],
    &[
        "query",
        "--source-model",
        "scenario",
        "--concept",
        "Training",
    ],
    &["query", "--relation", "isControlledBy"],
    &["query", "--relation", "Involves"],
];

fn snapshot_round_trip() -> Check {
    let cli = Cli::new();
    let reg = fixture("registry/flood-excerpt.reg");
    let plan = fixture("plans/wagga.dmp");
    let snap = cli.path("repo.dmks");
    let ws = [
        "--registry",
        reg.as_str(),
        "--plan",
        plan.as_str(),
        "--snapshot",
        snap.as_str(),
    ];
    let map = fixture("plans/wagga.map");
    let mut args = vec!["map-batch", map.as_str()];
    args.extend_from_slice(&ws);
    cli.ok(&args)?;
    let mut args = vec!["transfer"];
    args.extend_from_slice(&ws);
    let out = cli.ok(&args)?;
    ensure!(
        out.contains(" 0 skipped elements"),
        "Wagga not fully mapped: {out:?}"
    );

    let exported = cli.path("export.dmks");
    cli.ok(&["export", "--snapshot", &snap, "--output", &exported])?;
    let restored = cli.path("restored.dmks");
    cli.ok(&["import", &exported, "--snapshot", &restored])?;
    let mut answered = 0;
    for q in QUERIES {
        let before = cli.ok(&[q, &["--snapshot", snap.as_str()]].concat())?;
        let after = cli.ok(&[q, &["--snapshot", restored.as_str()]].concat())?;
        ensure!(
            before == after,
            "`{}` differs after round trip",
            q.join(" ")
        );
        answered += usize::from(!before.is_empty());
    }
    ensure!(
        answered == 9,
        "{answered} of 10 queries returned rows; only the Recovery query should be empty"
    );
    Ok(())
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "wagga role mapping",
            Some(Duration::from_secs(1)),
            wagga_roles,
        ),
        (
            "registry arithmetic",
            Some(Duration::from_secs(1)),
            registry_arithmetic,
        ),
        ("annotation fidelity", None, annotation_fidelity),
        (
            "validator mutation suite",
            Some(Duration::from_secs(30)),
            validator_suite,
        ),
        (
            "parser round-trip",
            Some(Duration::from_secs(60)),
            parser_round_trip,
        ),
        ("edge derivation", None, edge_derivation),
        ("cross-plan query", None, cross_plan_query),
        ("suggestion oracle", None, suggestion_oracle),
        ("snapshot round-trip", None, snapshot_round_trip),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(()), Some(limit)) if elapsed > limit => {
                Err(format!("took {elapsed:?}, limit {limit:?}"))
            }
            (r, _) => r,
        };
        match result {
            Ok(()) => println!("PASS {name} ({} ms)", elapsed.as_millis()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({} ms): {why}", elapsed.as_millis());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
