//! The `dmkf` command line.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};
use dmkf_core::dsl::render_plan;
use dmkf_core::mapping::{parse_batch, unit_id, Clock, SourceModel};
use dmkf_core::model::{ElementRef, Phase, RelationKind};
use dmkf_core::repository::{
    export_snapshot, import_snapshot, write_atomic, EdgeFilter, QueryFilter,
};
use dmkf_core::validate::{count_by_severity, rule_table, validate_plan};

use crate::engine;
use crate::workspace::{read_plan, read_registry, Failure, Workspace};

#[derive(Debug, Parser)]
#[command(
    name = "dmkf",
    version,
    about = "Disaster management plan knowledge framework"
)]
pub struct Cli {
    /// Metamodel registry file
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    /// Repository snapshot file (created on first write)
    #[arg(long, global = true)]
    pub snapshot: Option<PathBuf>,
    /// Plan file; repeat for several plans
    #[arg(long = "plan", global = true)]
    pub plans: Vec<PathBuf>,
    /// Accept a snapshot built under a different registry
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse plan files and print their syntax tree as JSON
    Parse {
        files: Vec<PathBuf>,
        /// Print the canonical plan text instead
        #[arg(long)]
        canonical: bool,
    },
    /// Check the cross-model consistency rules
    Validate { files: Vec<PathBuf> },
    /// Print the consistency rule table
    Rules,
    /// Load a registry and report its per-phase counts
    RegistryCheck { file: Option<PathBuf> },
    /// List the candidate concepts of an element
    Candidates {
        #[arg(long)]
        element: String,
        /// Order by suggestion score and print scores
        #[arg(long)]
        ranked: bool,
    },
    /// Apply a batch mapping file to the snapshot's mapping log
    MapBatch {
        file: PathBuf,
        /// Timestamp of the first commit (later commits follow by seconds)
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    /// Transfer mapped elements into the repository
    Transfer {
        /// Only this plan
        #[arg(long = "plan-id")]
        plan_id: Option<String>,
    },
    /// Query knowledge units, or edges with --edges/--relation/--unit
    Query {
        #[arg(long)]
        concept: Option<String>,
        #[arg(long)]
        phase: Option<Phase>,
        #[arg(long = "plan-id")]
        plan_id: Option<String>,
        #[arg(long = "source-model")]
        source_model: Option<SourceModel>,
        #[arg(long)]
        edges: bool,
        #[arg(long)]
        relation: Option<RelationKind>,
        /// Unit id or element path
        #[arg(long)]
        unit: Option<String>,
    },
    /// Print the snapshot in its file format
    Export {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a snapshot file and install it as --snapshot
    Import { file: PathBuf },
    /// Serve the HTTP API
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "error[Usage]: {}", e.render());
            return 2;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(failures) => {
            let code = failures.iter().map(Failure::exit_code).max().unwrap_or(1);
            for f in failures {
                let _ = writeln!(err, "{f}");
            }
            code
        }
    }
}

fn one<T>(r: Result<T, Failure>) -> Result<T, Vec<Failure>> {
    r.map_err(|f| vec![f])
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Vec<Failure>> {
    value
        .as_deref()
        .ok_or_else(|| vec![Failure::usage(format!("--{flag} FILE is required"))])
}

fn plan_files<'a>(
    files: &'a [PathBuf],
    cli_plans: &'a [PathBuf],
) -> Result<&'a [PathBuf], Vec<Failure>> {
    let files = if files.is_empty() { cli_plans } else { files };
    if files.is_empty() {
        return Err(vec![Failure::usage("no plan files given")]);
    }
    Ok(files)
}

fn workspace(cli: &Cli) -> Result<Workspace, Vec<Failure>> {
    let registry = required(&cli.registry, "registry")?;
    let mut ws = one(Workspace::load(
        registry,
        &cli.plans,
        cli.snapshot.as_deref(),
    ))?;
    ws.force = cli.force;
    Ok(ws)
}

fn parse_element(path: &str) -> Result<ElementRef, Vec<Failure>> {
    path.parse()
        .map_err(|e| vec![Failure::usage(format!("--element: {e}"))])
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Vec<Failure>> {
    let io = |e: std::io::Error| vec![Failure::new("Io", e.to_string())];
    match &cli.command {
        Command::Parse { files, canonical } => {
            let mut failures = Vec::new();
            for path in plan_files(files, &cli.plans)? {
                match read_plan(path) {
                    Ok(plan) if *canonical => write!(out, "{}", render_plan(&plan)).map_err(io)?,
                    Ok(plan) => {
                        let json = serde_json::to_string_pretty(&plan).expect("plans serialize");
                        writeln!(out, "{json}").map_err(io)?;
                    }
                    Err(f) => failures.push(f),
                }
            }
            if failures.is_empty() {
                Ok(0)
            } else {
                Err(failures)
            }
        }
        Command::Validate { files } => {
            let mut plans = Vec::new();
            let mut failures = Vec::new();
            for path in plan_files(files, &cli.plans)? {
                match read_plan(path) {
                    Ok(plan) => plans.push(plan),
                    Err(f) => failures.push(f),
                }
            }
            if !failures.is_empty() {
                return Err(failures);
            }
            let diagnostics: Vec<_> = plans.iter().flat_map(validate_plan).collect();
            for d in &diagnostics {
                writeln!(out, "{d}").map_err(io)?;
            }
            let (errors, warnings) = count_by_severity(&diagnostics);
            writeln!(out, "{errors} errors, {warnings} warnings").map_err(io)?;
            Ok(i32::from(errors > 0))
        }
        Command::Rules => {
            for r in rule_table() {
                writeln!(out, "{} {} {}", r.rule_id, r.severity, r.description).map_err(io)?;
            }
            Ok(0)
        }
        Command::RegistryCheck { file } => {
            let path = match file {
                Some(f) => f.as_path(),
                None => required(&cli.registry, "registry")?,
            };
            let registry = one(read_registry(path))?;
            for (phase, n) in registry.counts() {
                writeln!(out, "{phase} {n}").map_err(io)?;
            }
            writeln!(out, "total {}", registry.len()).map_err(io)?;
            writeln!(out, "fingerprint {}", registry.fingerprint()).map_err(io)?;
            Ok(0)
        }
        Command::Candidates { element, ranked } => {
            let ws = workspace(&cli)?;
            let element = parse_element(element)?;
            let listing = one(engine::candidates(&ws, &element, *ranked))?;
            for c in listing {
                match c.score {
                    Some(score) => writeln!(out, "{} {score:.4}", c.name).map_err(io)?,
                    None => writeln!(out, "{}", c.name).map_err(io)?,
                }
            }
            Ok(0)
        }
        Command::MapBatch { file, at } => {
            let mut ws = workspace(&cli)?;
            required(&cli.snapshot, "snapshot")?;
            let text = std::fs::read_to_string(file)
                .map_err(|e| vec![Failure::new("Io", format!("{}: {e}", file.display()))])?;
            let entries = parse_batch(&text).map_err(|errors| {
                errors
                    .into_iter()
                    .map(|e| Failure::new("BatchSyntax", format!("{}: {e}", file.display())))
                    .collect::<Vec<_>>()
            })?;
            let clock = at.map_or(Clock::System, Clock::Fixed);
            let summary = ws.apply_batch(&entries, clock)?;
            one(ws.save())?;
            writeln!(
                out,
                "{} mappings committed, {} unchanged",
                summary.committed, summary.unchanged
            )
            .map_err(io)?;
            Ok(0)
        }
        Command::Transfer { plan_id } => {
            let mut ws = workspace(&cli)?;
            required(&cli.snapshot, "snapshot")?;
            let ids: Vec<String> = match plan_id {
                Some(id) => vec![id.clone()],
                None => ws.plans.iter().map(|p| p.plan_id.clone()).collect(),
            };
            if ids.is_empty() {
                return Err(vec![Failure::usage("no plan files given")]);
            }
            let mut reports = Vec::new();
            for id in &ids {
                reports.push((id, one(ws.transfer_plan(id))?));
            }
            one(ws.save())?;
            for (id, r) in reports {
                writeln!(
                    out,
                    "{id}: {} units, {} edges, {} skipped elements, {} dropped edges",
                    r.units.len(),
                    r.edges.len(),
                    r.skipped.len(),
                    r.dropped_edges.len()
                )
                .map_err(io)?;
                for s in &r.skipped {
                    writeln!(err, "warning[Skipped]: {s} has no active mapping").map_err(io)?;
                }
                for d in &r.dropped_edges {
                    writeln!(
                        err,
                        "warning[DroppedEdge]: {} {} -> {} from {} has an unmapped endpoint",
                        d.relation, d.from, d.to, d.provenance
                    )
                    .map_err(io)?;
                }
            }
            Ok(0)
        }
        Command::Query {
            concept,
            phase,
            plan_id,
            source_model,
            edges,
            relation,
            unit,
        } => {
            let snapshot_path = required(&cli.snapshot, "snapshot")?;
            let snapshot = one(crate::workspace::read_snapshot(snapshot_path))?;
            if *edges || relation.is_some() || unit.is_some() {
                let unit = unit.as_ref().map(|u| match u.parse::<ElementRef>() {
                    Ok(path) => unit_id(&path),
                    Err(_) => u.clone(),
                });
                let views = snapshot.query_edges(&EdgeFilter {
                    relation: *relation,
                    unit,
                });
                let path_of = |id: &str| {
                    snapshot
                        .unit(id)
                        .map_or(id.to_string(), |u| u.element.path())
                };
                for v in views {
                    writeln!(
                        out,
                        "{} {} {}{}",
                        path_of(&v.edge.from_unit),
                        v.edge.relation,
                        path_of(&v.edge.to_unit),
                        if v.derived { " (derived)" } else { "" }
                    )
                    .map_err(io)?;
                }
                return Ok(0);
            }
            let filter = QueryFilter {
                phase: *phase,
                concept_name: concept.clone(),
                plan_id: plan_id.clone(),
                source_model: *source_model,
            };
            for u in one(snapshot.query(&filter).map_err(Failure::from))? {
                writeln!(out, "{}\t{}\t{}", u.element, u.concept_name, u.description)
                    .map_err(io)?;
            }
            Ok(0)
        }
        Command::Export { output } => {
            let snapshot_path = required(&cli.snapshot, "snapshot")?;
            let snapshot = one(crate::workspace::read_snapshot(snapshot_path))?;
            let text = export_snapshot(&snapshot);
            match output {
                Some(path) => write_atomic(path, &text)
                    .map_err(|e| vec![Failure::new("Io", format!("{}: {e}", path.display()))])?,
                None => write!(out, "{text}").map_err(io)?,
            }
            Ok(0)
        }
        Command::Import { file } => {
            let target = required(&cli.snapshot, "snapshot")?;
            let text = std::fs::read_to_string(file)
                .map_err(|e| vec![Failure::new("Io", format!("{}: {e}", file.display()))])?;
            let snapshot = import_snapshot(&text).map_err(|e| {
                vec![Failure::new(
                    "SnapshotError",
                    format!("{}: {e}", file.display()),
                )]
            })?;
            write_atomic(target, &export_snapshot(&snapshot))
                .map_err(|e| vec![Failure::new("Io", format!("{}: {e}", target.display()))])?;
            writeln!(
                out,
                "imported {} units, {} edges, {} mapping records",
                snapshot.units().count(),
                snapshot.edges().count(),
                snapshot.mappings().len()
            )
            .map_err(io)?;
            Ok(0)
        }
        Command::Serve { bind } => {
            let ws = workspace(&cli)?;
            required(&cli.snapshot, "snapshot")?;
            let runtime = tokio::runtime::Runtime::new().map_err(io)?;
            runtime
                .block_on(crate::server::serve(ws, *bind))
                .map_err(|e| vec![Failure::new("Io", format!("serve {bind}: {e}"))])?;
            Ok(0)
        }
    }
}
