//! Propagation engine and depth-first search.
//!
//! The solver owns the trailed store, the posted constraints, and a FIFO
//! propagation queue. Every constraint watches its scope: when a domain
//! shrinks, the watchers are enqueued (each constraint at most once) and the
//! fixpoint loop runs them until the queue empties or one fails. Search is
//! binary branching — try `x = v`, on exhaustion remove `v` and stay at the
//! node — over the lowest-index unbound variable, with the branch value
//! taken from the top or bottom of the domain.

use crate::exec::Executor;
use crate::grid::{propagate_variant, TmpMasks};
use crate::state::{DomainStore, VarId};
use crate::table::{Backend, TableConstraint};
use crate::WordArray;
use std::collections::VecDeque;
use std::time::{Duration, Instant};

/// Signal that propagation wiped out a domain or a table: the current
/// branch is dead and search must backtrack.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Inconsistency;

pub type CpResult<T = ()> = Result<T, Inconsistency>;

/// Bounds-consistent linear equality `sum(coeffs[i] * vars[i]) = constant`.
///
/// Each variable is clamped to the interval its coefficient and the extremal
/// sums of the other terms allow, iterating until no bound moves. Holes
/// inside the domains are left alone — only bounds are pruned — and an
/// empty feasible interval fails.
pub struct LinearEq {
    coeffs: Vec<i64>,
    vars: Vec<VarId>,
    constant: i64,
}

impl LinearEq {
    pub fn new(coeffs: Vec<i64>, vars: Vec<VarId>, constant: i64) -> LinearEq {
        assert_eq!(coeffs.len(), vars.len(), "one coefficient per variable");
        assert!(!coeffs.is_empty(), "linear equality needs at least one term");
        assert!(coeffs.iter().all(|&c| c != 0), "zero coefficients are not allowed");
        LinearEq {
            coeffs,
            vars,
            constant,
        }
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    fn propagate(&self, store: &mut DomainStore) -> CpResult<()> {
        loop {
            let mut changed = false;
            for (i, (&a, &x)) in self.coeffs.iter().zip(&self.vars).enumerate() {
                // Extremal sums of the other terms, from live bounds.
                let (mut rest_min, mut rest_max) = (0i64, 0i64);
                for (j, (&b, &y)) in self.coeffs.iter().zip(&self.vars).enumerate() {
                    if j == i {
                        continue;
                    }
                    if store.size(y) == 0 {
                        return Err(Inconsistency);
                    }
                    let (lo, hi) = (store.min(y), store.max(y));
                    if b > 0 {
                        rest_min += b * lo;
                        rest_max += b * hi;
                    } else {
                        rest_min += b * hi;
                        rest_max += b * lo;
                    }
                }
                // a * x must land in [constant - rest_max, constant - rest_min].
                let (num_lo, num_hi) = (self.constant - rest_max, self.constant - rest_min);
                let (lb, ub) = if a > 0 {
                    (div_ceil(num_lo, a), div_floor(num_hi, a))
                } else {
                    (div_ceil(num_hi, a), div_floor(num_lo, a))
                };
                if lb > ub {
                    return Err(Inconsistency);
                }
                changed |= store.remove_below(x, lb);
                changed |= store.remove_above(x, ub);
                if store.size(x) == 0 {
                    return Err(Inconsistency);
                }
            }
            if !changed {
                return Ok(());
            }
        }
    }
}

fn div_floor(a: i64, b: i64) -> i64 {
    let q = a / b;
    if a % b != 0 && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    let q = a / b;
    if a % b != 0 && ((a < 0) == (b < 0)) {
        q + 1
    } else {
        q
    }
}

/// A posted table constraint plus the scratch buffers its grid variants
/// reuse between runs.
struct TableEntry {
    ct: TableConstraint,
    masks: TmpMasks,
    removal: WordArray,
}

enum ConstraintKind {
    // Boxed: the table entry is an order of magnitude larger than the
    // linear case and would bloat every slot of the constraint list.
    Table(Box<TableEntry>),
    Linear(LinearEq),
}

/// How search picks the branch value of the chosen variable.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ValueHeuristic {
    /// Largest remaining value first.
    Max,
    /// Smallest remaining value first.
    Min,
}

/// Whether search stops at the first solution or enumerates all of them.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SearchMode {
    First,
    All,
}

#[derive(Clone, Copy, Debug)]
pub struct SearchConfig {
    pub mode: SearchMode,
    pub value: ValueHeuristic,
    pub timeout: Duration,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: SearchMode::First,
            value: ValueHeuristic::Max,
            timeout: Duration::from_secs(900),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SearchStatus {
    Sat,
    Unsat,
    Timeout,
}

impl SearchStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SearchStatus::Sat => "SAT",
            SearchStatus::Unsat => "UNSAT",
            SearchStatus::Timeout => "TIMEOUT",
        }
    }
}

/// Counters of one search run. `nodes` counts attempted branches (both
/// `x = v` and `x != v`), `failures` counts dead ends, `propagations`
/// counts propagator invocations; a run that fails at the root before any
/// branching is reported as one node with one failure.
#[derive(Clone, Copy, Debug)]
pub struct SearchStats {
    pub propagations: u64,
    pub nodes: u64,
    pub failures: u64,
    pub status: SearchStatus,
    pub elapsed: Duration,
    /// Time spent inside propagator invocations (a subset of `elapsed`).
    pub propagation_time: Duration,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub solutions: Vec<Vec<i64>>,
    pub stats: SearchStats,
}

/// Constraint store, propagation queue, and search driver.
pub struct Solver {
    pub store: DomainStore,
    constraints: Vec<ConstraintKind>,
    watchers: Vec<Vec<usize>>,
    queue: VecDeque<usize>,
    queued: Vec<bool>,
    exec: Executor,
    event_buf: Vec<usize>,
    propagations: u64,
    propagation_time: Duration,
    decision_vars: Vec<VarId>,
}

impl Solver {
    pub fn new(exec: Executor) -> Solver {
        Solver {
            store: DomainStore::new(),
            constraints: Vec::new(),
            watchers: Vec::new(),
            queue: VecDeque::new(),
            queued: Vec::new(),
            exec,
            event_buf: Vec::new(),
            propagations: 0,
            propagation_time: Duration::ZERO,
            decision_vars: Vec::new(),
        }
    }

    /// Creates a decision variable with domain `{min..=max}`. Search
    /// branches over decision variables in creation order.
    pub fn new_var(&mut self, min: i64, max: i64) -> VarId {
        let v = self.store.new_var(min, max);
        self.watchers.push(Vec::new());
        self.decision_vars.push(v);
        v
    }

    pub fn executor(&self) -> &Executor {
        &self.exec
    }

    /// Posts a table constraint. Construction already prunes the root
    /// domains; the constraint is also queued for its first full run.
    pub fn post_table(
        &mut self,
        scope: Vec<VarId>,
        tuples: &[Vec<i64>],
        backend: Backend,
    ) -> CpResult<()> {
        let ct = TableConstraint::new(&mut self.store, scope, tuples, backend)?;
        let masks = TmpMasks::for_table(ct.arity(), ct.word_count());
        let removal = WordArray::zeroed(ct.support_size());
        let id = self.constraints.len();
        for &x in ct.scope() {
            self.watchers[x.0].push(id);
        }
        self.constraints
            .push(ConstraintKind::Table(Box::new(TableEntry { ct, masks, removal })));
        self.queued.push(false);
        self.enqueue(id);
        Ok(())
    }

    /// Posts a linear equality; it propagates at the next fixpoint.
    pub fn post_linear(&mut self, coeffs: Vec<i64>, vars: Vec<VarId>, constant: i64) -> CpResult<()> {
        let lin = LinearEq::new(coeffs, vars, constant);
        let id = self.constraints.len();
        for &x in lin.vars() {
            self.watchers[x.0].push(id);
        }
        self.constraints.push(ConstraintKind::Linear(lin));
        self.queued.push(false);
        self.enqueue(id);
        Ok(())
    }

    fn enqueue(&mut self, id: usize) {
        if !self.queued[id] {
            self.queued[id] = true;
            self.queue.push_back(id);
        }
    }

    fn flush_events(&mut self) {
        let mut events = std::mem::take(&mut self.event_buf);
        self.store.drain_changed(&mut events);
        for &var in &events {
            // Indexed inner loop: `enqueue` needs `&mut self` while the
            // watcher list is borrowed, so no iterator over `self.watchers`.
            for w in 0..self.watchers[var].len() {
                let id = self.watchers[var][w];
                self.enqueue(id);
            }
        }
        self.event_buf = events;
    }

    /// Runs queued propagators to a fixpoint. On failure the queue and any
    /// pending events are discarded so the next branch starts clean.
    pub fn fixpoint(&mut self) -> CpResult<()> {
        self.flush_events();
        while let Some(id) = self.queue.pop_front() {
            self.queued[id] = false;
            self.propagations += 1;
            let began = Instant::now();
            let result = match &mut self.constraints[id] {
                ConstraintKind::Table(entry) => {
                    let TableEntry { ct, masks, removal } = entry.as_mut();
                    match ct.backend() {
                        Backend::Serial => ct.propagate_serial(&mut self.store),
                        _ => propagate_variant(ct, &mut self.store, &self.exec, masks, removal),
                    }
                }
                ConstraintKind::Linear(lin) => lin.propagate(&mut self.store),
            };
            self.propagation_time += began.elapsed();
            if result.is_err() {
                for id in self.queue.drain(..) {
                    self.queued[id] = false;
                }
                self.store.drain_changed(&mut self.event_buf);
                return Err(Inconsistency);
            }
            self.flush_events();
        }
        Ok(())
    }

    /// Depth-first search over the decision variables. The whole run —
    /// including the root fixpoint — happens under one extra trail level,
    /// so the solver is restored to its posted state afterwards.
    pub fn search(&mut self, cfg: &SearchConfig) -> SearchOutcome {
        let began = Instant::now();
        self.propagations = 0;
        self.propagation_time = Duration::ZERO;
        let mut run = SearchRun {
            cfg: *cfg,
            deadline: began + cfg.timeout,
            began,
            solutions: Vec::new(),
            nodes: 0,
            failures: 0,
            timed_out: false,
        };
        self.store.push_level();
        // Schedule everything so repeated searches on the same solver start
        // from the same queue state as the first one.
        for id in 0..self.constraints.len() {
            self.enqueue(id);
        }
        if self.fixpoint().is_ok() {
            run.dfs(self);
        } else {
            // Root contradiction: one explored node, one failure.
            run.nodes = 1;
            run.failures = 1;
        }
        self.store.pop_level();

        let status = if run.timed_out {
            SearchStatus::Timeout
        } else if run.solutions.is_empty() {
            SearchStatus::Unsat
        } else {
            SearchStatus::Sat
        };
        SearchOutcome {
            stats: SearchStats {
                propagations: self.propagations,
                nodes: run.nodes,
                failures: run.failures,
                status,
                elapsed: began.elapsed(),
                propagation_time: self.propagation_time,
            },
            solutions: run.solutions,
        }
    }
}

struct SearchRun {
    cfg: SearchConfig,
    deadline: Instant,
    #[allow(dead_code)]
    began: Instant,
    solutions: Vec<Vec<i64>>,
    nodes: u64,
    failures: u64,
    timed_out: bool,
}

enum Walk {
    Continue,
    Abort,
}

impl SearchRun {
    /// Explores the subtree below the current trail level. Left branches
    /// (`x = v`) recurse; right branches (`x != v`) stay at this level, so
    /// the recursion depth is bounded by the number of variables.
    fn dfs(&mut self, solver: &mut Solver) -> Walk {
        loop {
            if Instant::now() >= self.deadline {
                self.timed_out = true;
                return Walk::Abort;
            }
            let pick = solver
                .decision_vars
                .iter()
                .find(|&&x| solver.store.size(x) > 1)
                .copied();
            let x = match pick {
                Some(x) => x,
                None => {
                    // Every variable is fixed: record the assignment.
                    let sol: Vec<i64> = solver
                        .decision_vars
                        .iter()
                        .map(|&v| solver.store.min(v))
                        .collect();
                    self.solutions.push(sol);
                    return match self.cfg.mode {
                        SearchMode::First => Walk::Abort,
                        SearchMode::All => Walk::Continue,
                    };
                }
            };
            let v = match self.cfg.value {
                ValueHeuristic::Max => solver.store.max(x),
                ValueHeuristic::Min => solver.store.min(x),
            };

            // Left branch: x = v.
            self.nodes += 1;
            solver.store.push_level();
            solver.store.fix(x, v);
            match solver.fixpoint() {
                Ok(()) => {
                    if let Walk::Abort = self.dfs(solver) {
                        solver.store.pop_level();
                        return Walk::Abort;
                    }
                }
                Err(Inconsistency) => self.failures += 1,
            }
            solver.store.pop_level();

            // Right branch: x != v, applied at this level.
            self.nodes += 1;
            solver.store.remove(x, v);
            debug_assert!(solver.store.size(x) > 0);
            if solver.fixpoint().is_err() {
                self.failures += 1;
                return Walk::Continue;
            }
        }
    }
}
