//! Command-line front end.
//!
//! Data goes to stdout. Diagnostics go to stderr as `error[<category>]: <message>`.
//! Exit codes: 0 success, 1 repro discrepancy, 2 not a conceptual dependency
//! set, 3 chase failed, 4 budget exhausted, 5 input error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::chase::{Budget, ChaseEngine, ChaseState, ChaseStatus};
use crate::dsl::{parse_dependencies, parse_instance, parse_schema};
use crate::lab::{check_lower_level_stability, derivation_path_steps, refute_constant_bounds};
use crate::model::{Database, DependencySet, Schema};
use crate::query::{certain_answers, check_containment, parse_queries, CertainAnswers, ConjunctiveQuery, QueryError};
use crate::render::{self, to_json_string, ReproOutcome};
use crate::validate::validate_cd_set;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DISCREPANCY: i32 = 1;
pub const EXIT_NOT_CD: i32 = 2;
pub const EXIT_CHASE_FAILED: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;
pub const EXIT_INPUT: i32 = 5;

/// Inclusion-step budget when `--max-steps` is not given.
pub const DEFAULT_MAX_STEPS: u64 = 100_000;

#[derive(Parser, Debug)]
#[command(name = "cdchase", version, about = "Leveled chase for key and inclusion dependencies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
}

#[derive(Args, Debug)]
struct SchemaArgs {
    /// Schema file (`predicate name/arity` lines)
    #[arg(long)]
    schema: PathBuf,
    /// Dependency file (`key` and `inclusion` lines)
    #[arg(long)]
    deps: PathBuf,
}

#[derive(Args, Debug)]
struct ChaseArgs {
    #[command(flatten)]
    files: SchemaArgs,
    /// Instance file (one fact per line)
    #[arg(long)]
    data: PathBuf,
    /// Create no fact above this level
    #[arg(long)]
    max_level: Option<u32>,
    /// Stop after this many inclusion steps
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_steps: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check that the dependencies form a conceptual dependency set
    Validate {
        #[command(flatten)]
        files: SchemaArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Chase an instance
    Chase {
        #[command(flatten)]
        chase: ChaseArgs,
        /// Record and print every rule application
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Answer conjunctive queries over the chase levels below `--level`
    Query {
        #[command(flatten)]
        chase: ChaseArgs,
        /// Query file (`q(X) :- p(X,c).` lines)
        #[arg(long)]
        query: PathBuf,
        /// Consider only facts at levels below this bound
        #[arg(long)]
        level: u32,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Decide whether the first query is contained in the second up to a level
    Contain {
        #[command(flatten)]
        files: SchemaArgs,
        /// Query file holding the contained query
        #[arg(long)]
        q1: PathBuf,
        /// Query file holding the containing query
        #[arg(long)]
        q2: PathBuf,
        /// Chase the frozen first query below this level
        #[arg(long)]
        level: u32,
        /// Stop after this many inclusion steps
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        max_steps: Option<u64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Rerun the level-growth experiment for an instance size
    Repro {
        /// Instance size (number of chained constants, at least 2)
        #[arg(long)]
        n: usize,
        /// Print the report as JSON
        #[arg(long, conflicts_with = "dot")]
        json: bool,
        /// Print the derivation graph of the probe prefix as DOT
        #[arg(long)]
        dot: bool,
    },
}

/// A failure that ends the run: exit code, error category and message.
#[derive(Debug)]
struct Failure {
    code: i32,
    category: &'static str,
    message: String,
}

impl Failure {
    fn input(category: &'static str, message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, category, message: message.into() }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input("io", format!("{}: {e}", path.display())))
}

fn parse_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::input("parse", format!("{}: {e}", path.display()))
}

fn load_schema(files: &SchemaArgs) -> Result<(Schema, DependencySet), Failure> {
    let schema = parse_schema(&read(&files.schema)?).map_err(|e| parse_failure(&files.schema, e))?;
    let deps = parse_dependencies(&read(&files.deps)?, &schema).map_err(|e| parse_failure(&files.deps, e))?;
    Ok((schema, deps))
}

fn load_data(path: &Path, schema: &Schema) -> Result<Database, Failure> {
    parse_instance(&read(path)?, schema).map_err(|e| parse_failure(path, e))
}

fn load_queries(path: &Path, schema: &Schema) -> Result<Vec<ConjunctiveQuery>, Failure> {
    let qs = parse_queries(&read(path)?, schema).map_err(|e| parse_failure(path, e))?;
    if qs.is_empty() {
        return Err(Failure::input("input", format!("{}: no query", path.display())));
    }
    Ok(qs)
}

fn load_single_query(path: &Path, schema: &Schema) -> Result<ConjunctiveQuery, Failure> {
    let mut qs = load_queries(path, schema)?;
    if qs.len() > 1 {
        return Err(Failure::input("input", format!("{}: expected one query, found {}", path.display(), qs.len())));
    }
    Ok(qs.remove(0))
}

fn reject_dot(format: Format, command: &str) -> Result<(), Failure> {
    if format == Format::Dot {
        return Err(Failure::input("usage", format!("--format dot is only available for chase and repro, not {command}")));
    }
    Ok(())
}

fn budget(max_level: Option<u32>, max_steps: Option<u64>) -> Budget {
    Budget { max_steps: Some(max_steps.unwrap_or(DEFAULT_MAX_STEPS)), max_level }
}

fn query_failure(e: QueryError) -> Failure {
    match e {
        QueryError::PrefixNotMaterialized { .. } => Failure { code: EXIT_BUDGET, category: "budget", message: e.to_string() },
        QueryError::ChaseFailed => Failure { code: EXIT_CHASE_FAILED, category: "chase-failed", message: e.to_string() },
        _ => Failure::input("query", e.to_string()),
    }
}

fn chase_outcome(state: &ChaseState) -> Result<(), Failure> {
    match state.status() {
        ChaseStatus::Completed => Ok(()),
        ChaseStatus::Failed => Err(Failure {
            code: EXIT_CHASE_FAILED,
            category: "chase-failed",
            message: "a key merge met two distinct constants; the chase does not exist".into(),
        }),
        ChaseStatus::Active => Err(Failure {
            code: EXIT_BUDGET,
            category: "budget",
            message: format!(
                "budget exhausted after {} steps; levels below {} are complete",
                state.step_count(),
                state.prefix_bound().unwrap_or(0)
            ),
        }),
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let mut emit = |s: String| out.write_all(s.as_bytes()).map_err(|e| Failure::input("io", e.to_string()));
    match cli.command {
        Command::Validate { files, format } => {
            reject_dot(format, "validate")?;
            let (schema, deps) = load_schema(&files)?;
            match validate_cd_set(&schema, &deps) {
                Ok(partition) => match format {
                    Format::Json => emit(to_json_string(&render::partition_json(&partition))),
                    _ => emit(render::partition_text(&partition)),
                },
                Err(violations) => {
                    match format {
                        Format::Json => emit(to_json_string(&render::violations_json(&violations)))?,
                        _ => emit(render::violations_text(&violations))?,
                    }
                    let first = violations.first().map(ToString::to_string).unwrap_or_default();
                    Err(Failure { code: EXIT_NOT_CD, category: "not-cd", message: first })
                }
            }
        }
        Command::Chase { chase, trace, format } => {
            let (schema, deps) = load_schema(&chase.files)?;
            let db = load_data(&chase.data, &schema)?;
            let mut state = ChaseState::new(&db);
            if trace || format == Format::Dot {
                state = state.with_trace();
            }
            let state = ChaseEngine::new(&deps).run_from(state, budget(chase.max_level, chase.max_steps));
            emit(match format {
                Format::Text => render::chase_text(&state, trace),
                Format::Json => to_json_string(&render::chase_json(&state, trace)),
                Format::Dot => render::chase_dot(&state, "chase"),
            })?;
            chase_outcome(&state)
        }
        Command::Query { chase, query, level, format } => {
            reject_dot(format, "query")?;
            let (schema, deps) = load_schema(&chase.files)?;
            let db = load_data(&chase.data, &schema)?;
            let queries = load_queries(&query, &schema)?;
            let budget = budget(chase.max_level, chase.max_steps);
            let mut results = Vec::new();
            for q in &queries {
                let (answers, _) = certain_answers(&db, &deps, q, level, budget).map_err(query_failure)?;
                results.push((q.name().to_string(), answers));
            }
            match format {
                Format::Json => emit(to_json_string(&render::answers_json(&results)))?,
                _ => {
                    for (name, r) in &results {
                        emit(render::answers_text(name, r))?;
                    }
                }
            }
            if results.iter().any(|(_, r)| matches!(r, CertainAnswers::Inconsistent)) {
                return Err(query_failure(QueryError::ChaseFailed));
            }
            Ok(())
        }
        Command::Contain { files, q1, q2, level, max_steps, format } => {
            reject_dot(format, "contain")?;
            let (schema, deps) = load_schema(&files)?;
            let q1 = load_single_query(&q1, &schema)?;
            let q2 = load_single_query(&q2, &schema)?;
            let result = check_containment(&q1, &q2, &deps, level, budget(None, max_steps)).map_err(query_failure)?;
            match format {
                Format::Json => emit(to_json_string(&render::containment_json(q1.name(), q2.name(), &result))),
                _ => emit(render::containment_text(q1.name(), q2.name(), &result)),
            }
        }
        Command::Repro { n, json, dot } => {
            let refutation = refute_constant_bounds(n).map_err(|e| Failure::input("input", e.to_string()))?;
            let stability = check_lower_level_stability(n, 4 * n as u64)
                .map_err(|e| Failure { code: EXIT_DISCREPANCY, category: "discrepancy", message: e.to_string() })?;
            let ce = crate::lab::build_counterexample(n).expect("size already accepted");
            let traced = ChaseEngine::new(&ce.deps)
                .run_from(ChaseState::new(&ce.db).with_trace(), Budget::levels(ce.probe_level()));
            let path_steps = derivation_path_steps(&ce, traced.trace().unwrap_or_default());
            let outcome = ReproOutcome { refutation, stability, path_steps };
            if dot {
                emit(render::chase_dot(&traced, &format!("repro n={n}")))?;
            } else if json {
                emit(to_json_string(&render::repro_json(&outcome)))?;
            } else {
                emit(render::repro_text(&outcome))?;
            }
            match outcome.discrepancies().first() {
                None => Ok(()),
                Some(d) => Err(Failure { code: EXIT_DISCREPANCY, category: "discrepancy", message: d.clone() }),
            }
        }
    }
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            let _ = writeln!(err, "error[usage]: {first}");
            return EXIT_INPUT;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error[{}]: {}", f.category, f.message);
            f.code
        }
    }
}

pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
