//! Brute-force oracles, the grid-path validator, and the benchmark harness.
//!
//! The oracles are deliberately naive — a direct scan for arc consistency
//! and a guarded Cartesian enumeration for solutions — so the propagation
//! and search machinery can be checked against code with no shared logic.
//! The harness runs instance × backend matrices, times each solve
//! best-of-N, and renders the comparison CSV.

use crate::engine::SearchStatus;
use crate::exec::Executor;
use crate::gen::{grid_neighbors, OpMeta};
use crate::model::{solve_model, ConstraintDecl, ModelDoc, SolveOverrides};
use crate::table::Backend;
use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Duration;

/// Upper bound on oracle work: `tuples × arity` for the GAC scan and the
/// Cartesian assignment count for enumeration.
pub const ORACLE_GUARD: u128 = 1_000_000;

#[derive(thiserror::Error, Debug)]
pub enum VerifyError {
    #[error("assignment space of {0} candidates exceeds the {ORACLE_GUARD} enumeration guard")]
    SpaceTooLarge(u128),
    #[error("bad external CSV at line {line}: {message}")]
    BadCsv { line: usize, message: String },
}

/// Single-pass arc-consistency oracle for one positive table.
///
/// A value survives for a variable exactly when some tuple lies
/// componentwise inside the current domains and carries that value at the
/// variable's position. Returns `None` when any variable loses every value.
pub fn gac_oracle(domains: &[Vec<i64>], tuples: &[Vec<i64>]) -> Option<Vec<Vec<i64>>> {
    let n = domains.len();
    assert!(n >= 1, "need at least one variable");
    assert!(
        (tuples.len() as u128) * (n as u128) <= ORACLE_GUARD,
        "instance too large for the scan oracle"
    );
    let sets: Vec<HashSet<i64>> = domains.iter().map(|d| d.iter().copied().collect()).collect();
    let mut supported: Vec<HashSet<i64>> = vec![HashSet::new(); n];
    for t in tuples {
        assert_eq!(t.len(), n, "ragged tuple");
        if t.iter().zip(&sets).all(|(v, s)| s.contains(v)) {
            for (i, &v) in t.iter().enumerate() {
                supported[i].insert(v);
            }
        }
    }
    let out: Vec<Vec<i64>> = domains
        .iter()
        .zip(&supported)
        .map(|(d, s)| d.iter().copied().filter(|v| s.contains(v)).collect())
        .collect();
    if out.iter().any(|d: &Vec<i64>| d.is_empty()) {
        None
    } else {
        Some(out)
    }
}

/// Exhaustive solution enumeration by direct constraint checking.
///
/// Walks the full Cartesian product of the declared variable ranges (not
/// the propagated domains — this oracle shares nothing with the solver) and
/// keeps the assignments that satisfy every constraint. Refuses spaces
/// larger than [`ORACLE_GUARD`].
pub fn enumerate_solutions(doc: &ModelDoc) -> Result<Vec<Vec<i64>>, VerifyError> {
    let mut space: u128 = 1;
    for v in &doc.variables {
        space = space.saturating_mul((v.max - v.min + 1) as u128);
    }
    if space > ORACLE_GUARD {
        return Err(VerifyError::SpaceTooLarge(space));
    }
    let index: HashMap<&str, usize> = doc
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();

    enum Check {
        Table { scope: Vec<usize>, rows: HashSet<Vec<i64>> },
        Linear { terms: Vec<(i64, usize)>, constant: i64 },
    }
    let checks: Vec<Check> = doc
        .constraints
        .iter()
        .map(|c| match c {
            ConstraintDecl::Table { vars, tuples, .. } => Check::Table {
                scope: vars.iter().map(|n| index[n.as_str()]).collect(),
                rows: tuples.iter().cloned().collect(),
            },
            ConstraintDecl::LinearEq { coeffs, vars, constant } => Check::Linear {
                terms: coeffs
                    .iter()
                    .zip(vars)
                    .map(|(&a, n)| (a, index[n.as_str()]))
                    .collect(),
                constant: *constant,
            },
        })
        .collect();

    let mut out = Vec::new();
    if doc.variables.is_empty() {
        if checks.is_empty() {
            out.push(Vec::new());
        }
        return Ok(out);
    }
    let mut cur: Vec<i64> = doc.variables.iter().map(|v| v.min).collect();
    'outer: loop {
        let sat = checks.iter().all(|c| match c {
            Check::Table { scope, rows } => {
                let proj: Vec<i64> = scope.iter().map(|&i| cur[i]).collect();
                rows.contains(&proj)
            }
            Check::Linear { terms, constant } => {
                terms.iter().map(|&(a, i)| a * cur[i]).sum::<i64>() == *constant
            }
        });
        if sat {
            out.push(cur.clone());
        }
        // Odometer step, last variable fastest.
        for i in (0..cur.len()).rev() {
            if cur[i] < doc.variables[i].max {
                cur[i] += 1;
                continue 'outer;
            }
            cur[i] = doc.variables[i].min;
        }
        break;
    }
    Ok(out)
}

/// Verdict of the independent grid-path validator.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub ok: bool,
    /// A positive-profit cell entered at more than one time step; legal in
    /// the generated models, flagged because the profit counts again.
    pub recollection: bool,
    pub problems: Vec<String>,
}

/// Replays one solver assignment (variable order `pos0, rew0, pos1, rew1,
/// ...`) against the generated instance's metadata: endpoint pins,
/// obstacle avoidance, 4-connected moves (staying allowed only at the end
/// cell), the capped reward recurrence, and the reward bound.
pub fn validate_op_solution(meta: &OpMeta, assignment: &[i64]) -> OpCheck {
    let mut problems = Vec::new();
    let steps = meta.d;
    if assignment.len() != 2 * (steps + 1) {
        return OpCheck {
            ok: false,
            recollection: false,
            problems: vec![format!(
                "expected {} values (pos/rew for {} time steps), got {}",
                2 * (steps + 1),
                steps + 1,
                assignment.len()
            )],
        };
    }
    let pos: Vec<i64> = (0..=steps).map(|t| assignment[2 * t]).collect();
    let rew: Vec<i64> = (0..=steps).map(|t| assignment[2 * t + 1]).collect();
    let obstacles: HashSet<i64> = meta.obstacles.iter().map(|&q| q as i64).collect();
    let profit = |cell: i64| meta.profits[(cell - 1) as usize];

    if pos[0] != meta.start as i64 {
        problems.push(format!("path starts at {} instead of {}", pos[0], meta.start));
    }
    if pos[steps] != meta.end as i64 {
        problems.push(format!("path ends at {} instead of {}", pos[steps], meta.end));
    }
    let mut moves = 0usize;
    for t in 0..=steps {
        let q = pos[t];
        if q < 1 || q > (meta.rows * meta.cols) as i64 {
            problems.push(format!("position {q} at step {t} is off the grid"));
            continue;
        }
        if obstacles.contains(&q) {
            problems.push(format!("position {q} at step {t} is an obstacle"));
        }
        if t < steps {
            let q2 = pos[t + 1];
            let stay = q == q2 && q == meta.end as i64;
            let adjacent = q2 >= 1
                && q2 <= (meta.rows * meta.cols) as i64
                && grid_neighbors(q as usize, meta.rows, meta.cols).contains(&(q2 as usize));
            if stay {
                // Parking at the end cell is not a move.
            } else if adjacent {
                moves += 1;
            } else {
                problems.push(format!("step {t}: {q} -> {q2} is neither a 4-connected move nor a stay at the end cell"));
            }
        }
    }
    if moves > meta.d {
        problems.push(format!("{moves} moves exceed the length bound {}", meta.d));
    }
    if problems.is_empty() {
        // Reward recurrence, truncated at the cap.
        let mut expect = profit(pos[0]).min(meta.c);
        if rew[0] != expect {
            problems.push(format!("reward {} at step 0, expected {expect}", rew[0]));
        }
        for t in 1..=steps {
            expect = (expect + profit(pos[t])).min(meta.c);
            if rew[t] != expect {
                problems.push(format!("reward {} at step {t}, expected {expect}", rew[t]));
            }
        }
        if rew[steps] > meta.c {
            problems.push(format!("final reward {} exceeds the cap {}", rew[steps], meta.c));
        }
    }
    let mut seen_cells = HashSet::new();
    let mut recollection = false;
    for &q in &pos {
        if q >= 1 && q <= (meta.rows * meta.cols) as i64 && !seen_cells.insert(q) && profit(q) > 0 {
            recollection = true;
        }
    }
    OpCheck {
        ok: problems.is_empty(),
        recollection,
        problems,
    }
}

/// One line of the benchmark matrix.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub instance: String,
    pub backend: String,
    pub status: String,
    pub solve_time_ms: Option<u64>,
    pub propagations: Option<u64>,
    pub nodes: Option<u64>,
    pub failures: Option<u64>,
    pub speedup_vs_serial: String,
    /// Propagation-phase time of the measured repetition; reported next to
    /// the CSV, not one of its columns.
    pub propagation_time_ms: Option<u64>,
}

pub const CSV_HEADER: &str =
    "instance,backend,status,solve_time_ms,propagations,nodes,failures,speedup_vs_serial";

pub const EXTERNAL_CSV_HEADER: &str =
    "instance,backend,status,solve_time_ms,external_time_ms,ratio_vs_external";

#[derive(Clone, Debug)]
struct Measure {
    status: SearchStatus,
    ms: u64,
    propagations: u64,
    nodes: u64,
    failures: u64,
    prop_ms: u64,
}

fn finished(status: &str) -> bool {
    status == "SAT" || status == "UNSAT"
}

/// Speedup column text. Serial rows that finish report the literal `1.0`;
/// other finished rows report `serial_time / backend_time` to two decimals
/// when the serial baseline finished, and the lower bound
/// `> timeout / backend_time` when only the serial baseline timed out.
/// Everything else — timeouts, errors, missing baseline — is blank.
pub fn speedup_field(
    backend: &str,
    status: &str,
    time_ms: Option<u64>,
    serial: Option<(&str, u64)>,
    timeout_ms: u64,
) -> String {
    if backend == Backend::Serial.tag() {
        return if finished(status) { "1.0".to_string() } else { String::new() };
    }
    let ms = match time_ms {
        Some(ms) if finished(status) => ms.max(1) as f64,
        _ => return String::new(),
    };
    match serial {
        Some((st, serial_ms)) if finished(st) => format!("{:.2}", serial_ms.max(1) as f64 / ms),
        Some(("TIMEOUT", _)) => format!("> {:.2}", timeout_ms as f64 / ms),
        _ => String::new(),
    }
}

fn make_row(
    instance: &str,
    backend: Backend,
    measure: Option<&Measure>,
    serial: Option<&Measure>,
    timeout_ms: u64,
) -> BenchRow {
    let status = match measure {
        Some(m) => m.status.label().to_string(),
        None => "ERROR".to_string(),
    };
    let serial_pair = serial.map(|m| (m.status.label(), m.ms));
    let speedup = speedup_field(
        backend.tag(),
        &status,
        measure.map(|m| m.ms),
        serial_pair,
        timeout_ms,
    );
    BenchRow {
        instance: instance.to_string(),
        backend: backend.tag().to_string(),
        status,
        solve_time_ms: measure.map(|m| m.ms),
        propagations: measure.map(|m| m.propagations),
        nodes: measure.map(|m| m.nodes),
        failures: measure.map(|m| m.failures),
        speedup_vs_serial: speedup,
        propagation_time_ms: measure.map(|m| m.prop_ms),
    }
}

fn measure(
    doc: &ModelDoc,
    backend: Backend,
    timeout: Duration,
    reps: usize,
    exec: &Executor,
) -> Option<Measure> {
    let mut best: Option<Measure> = None;
    for _ in 0..reps.max(1) {
        let overrides = SolveOverrides {
            backend: Some(backend),
            timeout: Some(timeout),
            all: false,
        };
        let report = catch_unwind(AssertUnwindSafe(|| solve_model(doc, exec, &overrides)))
            .ok()?
            .ok()?;
        let m = Measure {
            status: report.outcome.stats.status,
            ms: report.outcome.stats.elapsed.as_millis() as u64,
            propagations: report.outcome.stats.propagations,
            nodes: report.outcome.stats.nodes,
            failures: report.outcome.stats.failures,
            prop_ms: report.outcome.stats.propagation_time.as_millis() as u64,
        };
        match &best {
            Some(b) => {
                debug_assert_eq!(
                    (b.propagations, b.nodes, b.failures),
                    (m.propagations, m.nodes, m.failures),
                    "counters must not vary across repetitions"
                );
                if m.ms < b.ms {
                    best = Some(m);
                }
            }
            None => best = Some(m),
        }
    }
    best
}

/// Runs every instance under every backend, best-of-`reps` timing, one row
/// per (instance, backend). When `serial` is among the backends its result
/// is the speedup baseline for that instance; a panicking solve yields an
/// ERROR row and the matrix continues.
pub fn run_bench(
    instances: &[(String, ModelDoc)],
    backends: &[Backend],
    timeout: Duration,
    reps: usize,
    exec: &Executor,
) -> Vec<BenchRow> {
    let timeout_ms = timeout.as_millis() as u64;
    let mut rows = Vec::with_capacity(instances.len() * backends.len());
    for (name, doc) in instances {
        let baseline = if backends.contains(&Backend::Serial) {
            measure(doc, Backend::Serial, timeout, reps, exec)
        } else {
            None
        };
        for &b in backends {
            let m = if b == Backend::Serial {
                baseline.clone()
            } else {
                measure(doc, b, timeout, reps, exec)
            };
            rows.push(make_row(name, b, m.as_ref(), baseline.as_ref(), timeout_ms));
        }
    }
    rows
}

fn opt(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.instance,
            r.backend,
            r.status,
            opt(r.solve_time_ms),
            opt(r.propagations),
            opt(r.nodes),
            opt(r.failures),
            r.speedup_vs_serial
        ));
    }
    out
}

/// Parses a two-column `instance,solve_time_ms` CSV produced by some other
/// solver; a header line is allowed and skipped.
pub fn parse_external_csv(text: &str) -> Result<Vec<(String, u64)>, VerifyError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("instance")) {
            continue;
        }
        let mut parts = line.split(',');
        let name = parts.next().unwrap_or_default().trim();
        let ms = parts.next().map(str::trim);
        if name.is_empty() || ms.is_none() || parts.next().is_some() {
            return Err(VerifyError::BadCsv {
                line: i + 1,
                message: "expected exactly two fields: instance,solve_time_ms".into(),
            });
        }
        let ms: u64 = ms.unwrap().parse().map_err(|e| VerifyError::BadCsv {
            line: i + 1,
            message: format!("bad time value: {e}"),
        })?;
        out.push((name.to_string(), ms));
    }
    Ok(out)
}

/// Joins harness rows with an external solver's times: each finished row
/// gains the ratio `external_time / backend_time` (two decimals); rows
/// without a matching external entry, or that did not finish, stay blank.
pub fn external_ratio_csv(rows: &[BenchRow], external: &[(String, u64)]) -> String {
    let map: HashMap<&str, u64> = external.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    let mut out = String::from(EXTERNAL_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let ext = map.get(r.instance.as_str()).copied();
        let ratio = match (ext, r.solve_time_ms) {
            (Some(e), Some(ms)) if finished(&r.status) => {
                format!("{:.2}", e as f64 / ms.max(1) as f64)
            }
            _ => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.instance,
            r.backend,
            r.status,
            opt(r.solve_time_ms),
            ext.map(|e| e.to_string()).unwrap_or_default(),
            ratio
        ));
    }
    out
}
