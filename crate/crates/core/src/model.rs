//! JSON model format: parsing, validation, and solving.
//!
//! A model document declares integer variables with inclusive bounds, a list
//! of constraints (positive table constraints and linear equalities), and an
//! optional `solve` block selecting the search mode and value heuristic.
//! Parsing is strict serde; validation then checks the cross-references a
//! schema cannot (unknown variable names, ragged tuple lists, zero
//! coefficients, ...) and reports them with a JSON-path-like location.

use crate::engine::{
    SearchConfig, SearchMode, SearchOutcome, SearchStats, SearchStatus, Solver, ValueHeuristic,
};
use crate::exec::Executor;
use crate::state::VarId;
use crate::table::Backend;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::time::{Duration, Instant};

/// Largest allowed domain span (`max - min + 1`) per variable; bitmap
/// domains are allocated eagerly, so unbounded spans are refused up front.
pub const MAX_SPAN: i64 = 1 << 20;

#[derive(thiserror::Error, Debug)]
pub enum ModelError {
    #[error("invalid model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid model: {path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
pub struct VarDecl {
    pub name: String,
    pub min: i64,
    pub max: i64,
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintDecl {
    Table {
        vars: Vec<String>,
        tuples: Vec<Vec<i64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        backend: Option<String>,
    },
    LinearEq {
        coeffs: Vec<i64>,
        vars: Vec<String>,
        constant: i64,
    },
}

#[derive(Deserialize, Serialize, Clone, Copy, PartialEq, Eq, Debug)]
#[serde(rename_all = "snake_case")]
pub enum ModeDecl {
    Satisfy,
    All,
}

#[derive(Deserialize, Serialize, Clone, Copy, PartialEq, Eq, Debug)]
#[serde(rename_all = "snake_case")]
pub enum OrderDecl {
    InputOrder,
}

#[derive(Deserialize, Serialize, Clone, Copy, PartialEq, Eq, Debug)]
#[serde(rename_all = "snake_case")]
pub enum ValueDecl {
    IndomainMax,
    IndomainMin,
}

#[derive(Deserialize, Serialize, Clone, Copy, Debug)]
#[serde(deny_unknown_fields)]
pub struct SolveDecl {
    #[serde(default = "default_mode")]
    pub mode: ModeDecl,
    #[serde(default = "default_order")]
    pub order: OrderDecl,
    #[serde(default = "default_value")]
    pub value: ValueDecl,
}

fn default_mode() -> ModeDecl {
    ModeDecl::Satisfy
}
fn default_order() -> OrderDecl {
    OrderDecl::InputOrder
}
fn default_value() -> ValueDecl {
    ValueDecl::IndomainMax
}

impl Default for SolveDecl {
    fn default() -> Self {
        SolveDecl {
            mode: default_mode(),
            order: default_order(),
            value: default_value(),
        }
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub variables: Vec<VarDecl>,
    pub constraints: Vec<ConstraintDecl>,
    #[serde(default)]
    pub solve: SolveDecl,
}

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<ModelDoc, ModelError> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    validate(&doc)?;
    Ok(doc)
}

/// Structural checks beyond what deserialization enforces.
pub fn validate(doc: &ModelDoc) -> Result<(), ModelError> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, v) in doc.variables.iter().enumerate() {
        let path = format!("variables[{i}]");
        if v.name.is_empty() {
            return Err(invalid(format!("{path}.name"), "empty variable name"));
        }
        if let Some(first) = seen.insert(v.name.as_str(), i) {
            return Err(invalid(
                format!("{path}.name"),
                format!("duplicate variable name '{}' (first declared at variables[{first}])", v.name),
            ));
        }
        if v.min > v.max {
            return Err(invalid(path, format!("empty domain: min {} > max {}", v.min, v.max)));
        }
        let span = v.max - v.min + 1;
        if span > MAX_SPAN {
            return Err(invalid(
                path,
                format!("domain span {span} exceeds the {MAX_SPAN} limit"),
            ));
        }
    }
    for (i, c) in doc.constraints.iter().enumerate() {
        let path = format!("constraints[{i}]");
        match c {
            ConstraintDecl::Table { vars, tuples, backend } => {
                if vars.is_empty() {
                    return Err(invalid(format!("{path}.vars"), "empty scope"));
                }
                let mut in_scope: HashMap<&str, usize> = HashMap::new();
                for (j, name) in vars.iter().enumerate() {
                    if !seen.contains_key(name.as_str()) {
                        return Err(invalid(
                            format!("{path}.vars[{j}]"),
                            format!("unknown variable '{name}'"),
                        ));
                    }
                    if let Some(first) = in_scope.insert(name.as_str(), j) {
                        return Err(invalid(
                            format!("{path}.vars[{j}]"),
                            format!("variable '{name}' already appears in this scope at vars[{first}]"),
                        ));
                    }
                }
                if tuples.is_empty() {
                    return Err(invalid(format!("{path}.tuples"), "a table needs at least one tuple"));
                }
                for (j, t) in tuples.iter().enumerate() {
                    if t.len() != vars.len() {
                        return Err(invalid(
                            format!("{path}.tuples[{j}]"),
                            format!("tuple arity {} does not match scope arity {}", t.len(), vars.len()),
                        ));
                    }
                }
                if let Some(tag) = backend {
                    if Backend::from_tag(tag).is_none() {
                        return Err(invalid(
                            format!("{path}.backend"),
                            format!("unknown backend '{tag}' (expected serial, u, f, or uf)"),
                        ));
                    }
                }
            }
            ConstraintDecl::LinearEq { coeffs, vars, constant: _ } => {
                if vars.is_empty() {
                    return Err(invalid(format!("{path}.vars"), "empty term list"));
                }
                if coeffs.len() != vars.len() {
                    return Err(invalid(
                        format!("{path}.coeffs"),
                        format!("{} coefficients for {} variables", coeffs.len(), vars.len()),
                    ));
                }
                for (j, &a) in coeffs.iter().enumerate() {
                    if a == 0 {
                        return Err(invalid(format!("{path}.coeffs[{j}]"), "zero coefficient"));
                    }
                }
                for (j, name) in vars.iter().enumerate() {
                    if !seen.contains_key(name.as_str()) {
                        return Err(invalid(
                            format!("{path}.vars[{j}]"),
                            format!("unknown variable '{name}'"),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Command-line level adjustments applied on top of the document.
#[derive(Clone, Copy, Default, Debug)]
pub struct SolveOverrides {
    /// Replaces the backend of every table constraint.
    pub backend: Option<Backend>,
    /// Replaces the default 900 s timeout.
    pub timeout: Option<Duration>,
    /// Forces all-solutions mode regardless of the document.
    pub all: bool,
}

/// Result of solving one model: the search outcome, the backend label the
/// run is attributed to, and the variable names in declaration order
/// (solutions list values in the same order).
#[derive(Debug)]
pub struct SolveReport {
    pub outcome: SearchOutcome,
    pub backend: String,
    pub var_names: Vec<String>,
}

/// One-line run summary in a stable wire format.
#[derive(Serialize, Deserialize, Debug)]
pub struct StatsLine {
    pub status: String,
    pub solutions: u64,
    pub nodes: u64,
    pub failures: u64,
    pub propagations: u64,
    pub elapsed_ms: u64,
    pub backend: String,
}

impl StatsLine {
    pub fn from_report(report: &SolveReport) -> StatsLine {
        StatsLine {
            status: report.outcome.stats.status.label().to_string(),
            solutions: report.outcome.solutions.len() as u64,
            nodes: report.outcome.stats.nodes,
            failures: report.outcome.stats.failures,
            propagations: report.outcome.stats.propagations,
            elapsed_ms: report.outcome.stats.elapsed.as_millis() as u64,
            backend: report.backend.clone(),
        }
    }
}

/// Builds a solver from a validated document and runs the search.
///
/// A contradiction detected while posting (a table whose valid-tuple set is
/// already empty against the root domains) short-circuits as UNSAT with one
/// node and one failure, without invoking the search.
pub fn solve_model(
    doc: &ModelDoc,
    exec: &Executor,
    overrides: &SolveOverrides,
) -> Result<SolveReport, ModelError> {
    validate(doc)?;
    let began = Instant::now();
    let mut solver = Solver::new(exec.clone());
    let mut ids: HashMap<&str, VarId> = HashMap::new();
    let mut var_names = Vec::with_capacity(doc.variables.len());
    for v in &doc.variables {
        let id = solver.new_var(v.min, v.max);
        ids.insert(v.name.as_str(), id);
        var_names.push(v.name.clone());
    }

    let mut table_tags: Vec<&'static str> = Vec::new();
    let mut root_failed = false;
    for c in &doc.constraints {
        match c {
            ConstraintDecl::Table { vars, tuples, backend } => {
                let declared = backend
                    .as_deref()
                    .and_then(Backend::from_tag)
                    .unwrap_or(Backend::Serial);
                let effective = overrides.backend.unwrap_or(declared);
                table_tags.push(effective.tag());
                let scope: Vec<VarId> = vars.iter().map(|n| ids[n.as_str()]).collect();
                if solver.post_table(scope, tuples, effective).is_err() {
                    root_failed = true;
                    break;
                }
            }
            ConstraintDecl::LinearEq { coeffs, vars, constant } => {
                let scope: Vec<VarId> = vars.iter().map(|n| ids[n.as_str()]).collect();
                solver.post_linear(coeffs.clone(), scope, *constant).unwrap();
            }
        }
    }

    let backend = backend_label(overrides.backend, &table_tags);
    let cfg = SearchConfig {
        mode: if overrides.all || doc.solve.mode == ModeDecl::All {
            SearchMode::All
        } else {
            SearchMode::First
        },
        value: match doc.solve.value {
            ValueDecl::IndomainMax => ValueHeuristic::Max,
            ValueDecl::IndomainMin => ValueHeuristic::Min,
        },
        timeout: overrides.timeout.unwrap_or(Duration::from_secs(900)),
    };

    let outcome = if root_failed {
        SearchOutcome {
            solutions: Vec::new(),
            stats: SearchStats {
                propagations: 0,
                nodes: 1,
                failures: 1,
                status: SearchStatus::Unsat,
                elapsed: began.elapsed(),
                propagation_time: Duration::ZERO,
            },
        }
    } else {
        solver.search(&cfg)
    };

    Ok(SolveReport {
        outcome,
        backend,
        var_names,
    })
}

/// Backend shown in run summaries: the override when given, otherwise the
/// tag shared by every table constraint, `mixed` when tables disagree, and
/// `serial` for models without tables.
fn backend_label(over: Option<Backend>, table_tags: &[&'static str]) -> String {
    if let Some(b) = over {
        return b.tag().to_string();
    }
    match table_tags {
        [] => "serial".to_string(),
        [first, rest @ ..] => {
            if rest.iter().all(|t| t == first) {
                first.to_string()
            } else {
                "mixed".to_string()
            }
        }
    }
}
