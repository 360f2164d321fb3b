//! Command-line front end: builds scenario behaviors, evaluates the network
//! inequalities and eavesdropper bounds, runs the correlated-source attack
//! and classical-strategy searches, and checks behavior files against their
//! DAG constraints.
//!
//! Exit codes: 0 success, 2 usage error, 3 numeric/parse/io failure,
//! 4 search budget exceeded. Diagnostics go to stderr; reports go to files
//! or stdout. Output files are written atomically (temp file + rename).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use polybell::attack::correlated_source_attack;
use polybell::behavior::Behavior;
use polybell::classical::{exhaustive_max, randomized_max, SearchObjective, DEFAULT_BUDGET};
use polybell::error::Error;
use polybell::inequality::{eval_chained, eval_chsh, eval_repeater, eval_star};
use polybell::scenario::{
    build_bell_quantum, build_repeater_quantum, build_star_quantum, repeater_closed_form,
    resolve_visibilities,
};
use polybell::security::{
    correlated_star_eavesdropper_bound, repeater_eavesdropper_bound, star_eavesdropper_bound,
    visibility_analysis, AttackDiagnostics, ScenarioDescriptor, SecurityReport,
};
use polybell::topology::{
    check_independences, make_repeater_topology, make_star_topology, IndependenceViolation,
    NetworkTopology,
};

#[derive(Parser)]
#[command(
    name = "polybell",
    version,
    about = "Correlation behaviors, polynomial Bell inequalities, and eavesdropper bounds on multi-source networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the n-source repeater chain, score it, and bound eavesdropper information.
    Repeater(RepeaterArgs),
    /// Build the n-branch star with k settings, score it, and bound eavesdropper information.
    Star(StarArgs),
    /// Build the two-party k-setting scenario and evaluate the CHSH/chained pair.
    Bell(BellArgs),
    /// Run the correlated-source attack on the repeater chain.
    Attack(AttackArgs),
    /// Search classical source-and-response models for the maximal score.
    LhvSearch(LhvSearchArgs),
    /// Check a behavior file against the independence constraints of a network DAG.
    CheckDag(CheckDagArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum OutputFormat {
    /// JSON security report.
    Report,
    /// Flattened key,value rows.
    Csv,
}

#[derive(Args, Serialize)]
struct OutputArgs {
    /// Report destination; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Also write the built behavior table to this path.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    emit_behavior: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "report")]
    format: OutputFormat,
    /// Tolerance for the DAG independence self-check.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

#[derive(Args, Serialize)]
struct RepeaterArgs {
    /// Number of sources in the chain (>= 2).
    #[arg(long)]
    n: usize,
    /// Comma-separated per-source visibilities; defaults to all 1.
    #[arg(long, value_parser = parse_visibilities)]
    visibility: Option<VisibilityList>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct StarArgs {
    /// Number of branches (>= 1).
    #[arg(long)]
    n: usize,
    /// Settings per agent (>= 2).
    #[arg(long)]
    k: usize,
    /// Number of sources the eavesdropper correlates (defaults to n when --q is set).
    #[arg(long)]
    m: Option<usize>,
    /// Cardinality of the shared variable correlating sources (must satisfy q < k).
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, value_parser = parse_visibilities)]
    visibility: Option<VisibilityList>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct BellArgs {
    /// Settings per agent (>= 2).
    #[arg(long)]
    k: usize,
    /// Source visibility in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    visibility: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct AttackArgs {
    /// Number of sources in the attacked chain (>= 2).
    #[arg(long)]
    n: usize,
    /// Simulated rounds for the transcript (0 for the exact table only).
    #[arg(long, default_value_t = 10_000)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the round-by-round transcript to this path.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    transcript: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum NetworkKind {
    Repeater,
    Star,
    Bell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SearchMode {
    Exhaustive,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ObjectiveArg {
    Repeater,
    Star,
    Chsh,
    Chained,
}

#[derive(Args, Serialize)]
struct LhvSearchArgs {
    #[arg(long, value_enum)]
    network: NetworkKind,
    /// Sources (repeater) or branches (star); ignored for bell.
    #[arg(long)]
    n: Option<usize>,
    /// Settings per agent (star and bell).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    mode: SearchMode,
    /// Objective to maximize; defaults to the network's own inequality.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Source cardinality for the strategy space.
    #[arg(long, default_value_t = 4)]
    cardinality: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    iterations: usize,
    /// Cap on the exhaustive strategy count.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct CheckDagArgs {
    /// Behavior file to check.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    behavior: PathBuf,
    #[arg(long, value_enum)]
    network: NetworkKind,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

/// Comma-separated visibility list; a newtype so clap treats the whole list
/// as one value.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
struct VisibilityList(Vec<f64>);

fn parse_visibilities(raw: &str) -> Result<VisibilityList, String> {
    raw.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad visibility {part:?}: {e}"))
        })
        .collect::<Result<Vec<f64>, String>>()
        .map(VisibilityList)
}

struct CliError {
    code: i32,
    message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter(_) | Error::ShapeMismatch(_) | Error::DimensionMismatch(_) => 2,
            Error::BudgetExceeded { .. } => 4,
            _ => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: 3,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError {
            code: 3,
            message: e.to_string(),
        }
    }
}

fn usage_error(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Repeater(args) => cmd_repeater(args),
        Command::Star(args) => cmd_star(args),
        Command::Bell(args) => cmd_bell(args),
        Command::Attack(args) => cmd_attack(args),
        Command::LhvSearch(args) => cmd_lhv_search(args),
        Command::CheckDag(args) => cmd_check_dag(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

/// Envelope for every machine-readable output. `generated_at` sits outside
/// the diffable `report` section.
#[derive(Serialize)]
struct ReportFile<T: Serialize> {
    format: &'static str,
    toolkit_version: &'static str,
    config_hash: String,
    report: T,
    generated_at: String,
}

fn config_hash<T: Serialize>(command: &str, args: &T) -> Result<String, CliError> {
    let payload = serde_json::json!({ "command": command, "args": args });
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(&payload)?.as_bytes());
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Serialize fully in memory, then write atomically (temp file + rename) so
/// failures cannot leave partial output behind.
fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
            let mut tmp = match dir {
                Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
                None => tempfile::NamedTempFile::new_in(".")?,
            };
            tmp.write_all(bytes)?;
            tmp.persist(path).map_err(|e| CliError {
                code: 3,
                message: e.to_string(),
            })?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn flatten_json(value: &serde_json::Value, prefix: &str, rows: &mut Vec<(String, String)>) {
    match value {
        serde_json::Value::Object(map) => {
            for (key, v) in map {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                flatten_json(v, &path, rows);
            }
        }
        serde_json::Value::Array(items) => {
            for (idx, v) in items.iter().enumerate() {
                flatten_json(v, &format!("{prefix}[{idx}]"), rows);
            }
        }
        scalar => rows.push((prefix.to_string(), scalar.to_string())),
    }
}

fn emit<T: Serialize>(
    output: &OutputArgs,
    tag: &'static str,
    hash: String,
    report: T,
) -> Result<(), CliError> {
    let bytes = match output.format {
        OutputFormat::Report => {
            let file = ReportFile {
                format: tag,
                toolkit_version: env!("CARGO_PKG_VERSION"),
                config_hash: hash,
                report,
                generated_at: chrono::Utc::now().to_rfc3339(),
            };
            let mut text = serde_json::to_string_pretty(&file)?;
            text.push('\n');
            text.into_bytes()
        }
        OutputFormat::Csv => {
            // The CSV view carries only deterministic fields.
            let mut rows = vec![
                ("format".to_string(), format!("\"{tag}\"")),
                (
                    "toolkit_version".to_string(),
                    format!("\"{}\"", env!("CARGO_PKG_VERSION")),
                ),
                ("config_hash".to_string(), format!("\"{hash}\"")),
            ];
            flatten_json(&serde_json::to_value(&report)?, "report", &mut rows);
            let mut text = String::from("key,value\n");
            for (key, value) in rows {
                text.push_str(&key);
                text.push(',');
                text.push_str(&value);
                text.push('\n');
            }
            text.into_bytes()
        }
    };
    write_bytes(output.out.as_deref(), &bytes)
}

fn emit_behavior(output: &OutputArgs, behavior: &Behavior) -> Result<(), CliError> {
    if let Some(path) = &output.emit_behavior {
        let mut bytes = Vec::new();
        behavior.to_writer(&mut bytes)?;
        bytes.push(b'\n');
        write_bytes(Some(path), &bytes)?;
    }
    Ok(())
}

fn dag_self_check(
    topology: &NetworkTopology,
    behavior: &Behavior,
    tolerance: f64,
) -> Result<Vec<IndependenceViolation>, CliError> {
    Ok(check_independences(topology, behavior, tolerance)?)
}

fn cmd_repeater(args: RepeaterArgs) -> Result<(), CliError> {
    let hash = config_hash("repeater", &args)?;
    let visibilities =
        resolve_visibilities(args.n, args.visibility.as_ref().map(|v| v.0.as_slice()))?;
    let behavior = build_repeater_quantum(args.n, &visibilities)?;
    let score = eval_repeater(&behavior)?;
    let bound = repeater_eavesdropper_bound(score.score)?;
    let topology = make_repeater_topology(args.n)?;

    let mut report = SecurityReport::new(ScenarioDescriptor {
        kind: "repeater".into(),
        sources: Some(args.n),
        settings: None,
        correlated_sources: None,
        shared_values: None,
        visibilities: Some(visibilities.clone()),
        seed: None,
        rounds: None,
    });
    report.repeater_score = Some(score);
    report.bounds.push(bound);
    report.visibility = Some(visibility_analysis(&visibilities)?);
    report.dag_violations = Some(dag_self_check(&topology, &behavior, args.output.tolerance)?);

    emit_behavior(&args.output, &behavior)?;
    emit(&args.output, "security-report/1", hash, report)
}

fn cmd_star(args: StarArgs) -> Result<(), CliError> {
    let hash = config_hash("star", &args)?;
    if args.m.is_some() && args.q.is_none() {
        return Err(usage_error(
            "--m requires --q (the shared-variable cardinality)",
        ));
    }
    let visibilities =
        resolve_visibilities(args.n, args.visibility.as_ref().map(|v| v.0.as_slice()))?;
    let behavior = build_star_quantum(args.n, args.k, &visibilities)?;
    let score = eval_star(&behavior, args.n, args.k)?;
    let bound = star_eavesdropper_bound(score.score, args.n, args.k)?;
    let correlated = match args.q {
        Some(q) => {
            let m = args.m.unwrap_or(args.n);
            Some(correlated_star_eavesdropper_bound(
                score.score,
                args.n,
                args.k,
                m,
                q,
            )?)
        }
        None => None,
    };
    let topology = make_star_topology(args.n, args.k)?;

    let mut report = SecurityReport::new(ScenarioDescriptor {
        kind: "star".into(),
        sources: Some(args.n),
        settings: Some(args.k),
        correlated_sources: args.q.map(|_| args.m.unwrap_or(args.n)),
        shared_values: args.q,
        visibilities: Some(visibilities.clone()),
        seed: None,
        rounds: None,
    });
    report.star_score = Some(score);
    report.bounds.push(bound);
    report.bounds.extend(correlated);
    report.visibility = Some(visibility_analysis(&visibilities)?);
    report.dag_violations = Some(dag_self_check(&topology, &behavior, args.output.tolerance)?);

    emit_behavior(&args.output, &behavior)?;
    emit(&args.output, "security-report/1", hash, report)
}

fn cmd_bell(args: BellArgs) -> Result<(), CliError> {
    let hash = config_hash("bell", &args)?;
    let behavior = build_bell_quantum(args.k, args.visibility)?;
    let chsh = eval_chsh(&behavior, args.k)?;
    let chained = eval_chained(&behavior, args.k)?;
    let topology = make_star_topology(1, args.k)?;

    let mut report = SecurityReport::new(ScenarioDescriptor {
        kind: "bell".into(),
        sources: Some(1),
        settings: Some(args.k),
        correlated_sources: None,
        shared_values: None,
        visibilities: Some(vec![args.visibility]),
        seed: None,
        rounds: None,
    });
    report.chsh_value = Some(chsh);
    report.chained_value = Some(chained);
    report.chained_chsh_residue = Some((chained - (args.k as f64 - chsh / 2.0)).abs());
    report.visibility = Some(visibility_analysis(&[args.visibility])?);
    report.dag_violations = Some(dag_self_check(&topology, &behavior, args.output.tolerance)?);

    emit_behavior(&args.output, &behavior)?;
    emit(&args.output, "security-report/1", hash, report)
}

fn cmd_attack(args: AttackArgs) -> Result<(), CliError> {
    let hash = config_hash("attack", &args)?;
    let outcome = correlated_source_attack(args.n, args.rounds, args.seed)?;
    let quantum = repeater_closed_form(args.n)?;
    let deviation = outcome.behavior.max_abs_diff(&quantum)?;
    let score = eval_repeater(&outcome.behavior)?;
    let bound = repeater_eavesdropper_bound(score.score)?;
    let topology = make_repeater_topology(args.n)?;
    let violations = dag_self_check(&topology, &outcome.behavior, args.output.tolerance)?;

    // Worst case over inputs and end outcomes of the distance between the
    // eavesdropper's (exact) inference and the end agents' joint marginal.
    let mut information_tvd = 0.0f64;
    let last = outcome.behavior.agents().len() - 1;
    for inputs in outcome.behavior.input_tuples() {
        let marginal = outcome.behavior.joint_marginal(0, last, &inputs);
        for (value, &p) in marginal.iter().enumerate() {
            if p > 0.0 {
                let mut point = vec![0.0; marginal.len()];
                point[value] = 1.0;
                information_tvd = information_tvd
                    .max(polybell::security::tvd(&point, &marginal).map_err(CliError::from)?);
            }
        }
    }

    let mut report = SecurityReport::new(ScenarioDescriptor {
        kind: "attack".into(),
        sources: Some(args.n),
        settings: None,
        correlated_sources: Some(2),
        shared_values: Some(2),
        visibilities: None,
        seed: Some(args.seed),
        rounds: Some(args.rounds),
    });
    report.repeater_score = Some(score);
    report.bounds.push(bound);
    report.attack = Some(AttackDiagnostics {
        guess_probability: outcome.transcript.guess_success_rate(),
        matches_quantum_table: deviation <= 1e-12,
        max_deviation_from_quantum: deviation,
        undetectable: violations.is_empty(),
        information_tvd,
    });
    report.dag_violations = Some(violations);

    if let Some(path) = &args.transcript {
        if args.rounds > 0 {
            let mut bytes = Vec::new();
            outcome.transcript.write_delimited(&mut bytes)?;
            write_bytes(Some(path), &bytes)?;
        } else {
            eprintln!("no rounds simulated; transcript not written");
        }
    }
    emit_behavior(&args.output, &outcome.behavior)?;
    emit(&args.output, "security-report/1", hash, report)
}

#[derive(Serialize)]
struct LhvSearchReport {
    network: NetworkKind,
    objective: SearchObjective,
    mode: SearchMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    sources: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    settings: Option<usize>,
    cardinality: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    best: f64,
    /// The inequality's classical ceiling, for comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    classical_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    strategies_visited: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    argmax: Option<polybell::classical::DeterministicStrategy>,
}

fn cmd_lhv_search(args: LhvSearchArgs) -> Result<(), CliError> {
    let hash = config_hash("lhv-search", &args)?;
    let (topology, sources, settings) = match args.network {
        NetworkKind::Repeater => {
            let n = args
                .n
                .ok_or_else(|| usage_error("--network repeater requires --n"))?;
            (make_repeater_topology(n)?, Some(n), None)
        }
        NetworkKind::Star => {
            let n = args
                .n
                .ok_or_else(|| usage_error("--network star requires --n"))?;
            let k = args
                .k
                .ok_or_else(|| usage_error("--network star requires --k"))?;
            (make_star_topology(n, k)?, Some(n), Some(k))
        }
        NetworkKind::Bell => {
            let k = args
                .k
                .ok_or_else(|| usage_error("--network bell requires --k"))?;
            (make_star_topology(1, k)?, Some(1), Some(k))
        }
    };
    let objective = match args.objective {
        Some(ObjectiveArg::Repeater) => SearchObjective::Repeater,
        Some(ObjectiveArg::Star) => SearchObjective::Star,
        Some(ObjectiveArg::Chsh) => SearchObjective::Chsh,
        Some(ObjectiveArg::Chained) => SearchObjective::Chained,
        None => match args.network {
            NetworkKind::Repeater => SearchObjective::Repeater,
            NetworkKind::Star => SearchObjective::Star,
            NetworkKind::Bell => SearchObjective::Chsh,
        },
    };
    let classical_bound = match objective {
        SearchObjective::Repeater => Some(1.0),
        SearchObjective::Star => settings.map(|k| (k - 1) as f64),
        SearchObjective::Chsh => settings.map(|k| 2.0 * (k - 1) as f64),
        SearchObjective::Chained => None,
    };

    let report = match args.mode {
        SearchMode::Exhaustive => {
            let outcome = exhaustive_max(&topology, objective, args.cardinality, args.budget)?;
            LhvSearchReport {
                network: args.network,
                objective,
                mode: args.mode,
                sources,
                settings,
                cardinality: args.cardinality,
                seed: None,
                iterations: None,
                best: outcome.best,
                classical_bound,
                strategies_visited: Some(outcome.strategies_visited),
                argmax: Some(outcome.strategy),
            }
        }
        SearchMode::Random => {
            let best = randomized_max(
                &topology,
                objective,
                args.seed,
                args.iterations,
                args.cardinality,
            )?;
            LhvSearchReport {
                network: args.network,
                objective,
                mode: args.mode,
                sources,
                settings,
                cardinality: args.cardinality,
                seed: Some(args.seed),
                iterations: Some(args.iterations),
                best,
                classical_bound,
                strategies_visited: None,
                argmax: None,
            }
        }
    };
    emit(&args.output, "lhv-search/1", hash, report)
}

#[derive(Serialize)]
struct DagCheckReport {
    network: NetworkKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    sources: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    settings: Option<usize>,
    tolerance: f64,
    violations: Vec<IndependenceViolation>,
}

fn cmd_check_dag(args: CheckDagArgs) -> Result<(), CliError> {
    let hash = config_hash("check-dag", &args)?;
    let behavior = Behavior::load(&args.behavior)?;
    let (topology, sources, settings) = match args.network {
        NetworkKind::Repeater => {
            let n = args
                .n
                .ok_or_else(|| usage_error("--network repeater requires --n"))?;
            (make_repeater_topology(n)?, Some(n), None)
        }
        NetworkKind::Star => {
            let n = args
                .n
                .ok_or_else(|| usage_error("--network star requires --n"))?;
            let k = args
                .k
                .ok_or_else(|| usage_error("--network star requires --k"))?;
            (make_star_topology(n, k)?, Some(n), Some(k))
        }
        NetworkKind::Bell => {
            let k = args
                .k
                .ok_or_else(|| usage_error("--network bell requires --k"))?;
            (make_star_topology(1, k)?, Some(1), Some(k))
        }
    };
    let violations = check_independences(&topology, &behavior, args.output.tolerance)?;
    for v in &violations {
        eprintln!(
            "violated {:?} between agents {} and {}: deviation {}",
            v.kind, v.agents.0, v.agents.1, v.deviation
        );
    }
    let report = DagCheckReport {
        network: args.network,
        sources,
        settings,
        tolerance: args.output.tolerance,
        violations,
    };
    emit(&args.output, "dag-check/1", hash, report)
}
