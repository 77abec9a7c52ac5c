//! Deterministic benchmark-instance generators.
//!
//! Two families: `gen_lin` emits bounded-knapsack-style models (one large
//! positive table of sampled item-count configurations plus one linear
//! capacity equation), and `gen_orienteering` emits length-bounded path
//! models on a 4-connected grid with per-cell profits and a reward cap.
//! Both are pure functions of their parameters and a 64-bit seed: the same
//! inputs always produce byte-identical model files.

use crate::model::{ConstraintDecl, ModelDoc, SolveDecl, VarDecl};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(thiserror::Error, Debug)]
pub enum GenError {
    #[error("infeasible parameter combination: {0}")]
    Infeasible(String),
}

/// Parameters of the knapsack-style family.
///
/// The model has `n_vars` item-count variables `x_i ∈ {0..b_i}` (per-item
/// bounds `b_i` are sampled so the domain size stays ≤ `max_dom`), one table
/// of `n_tuples` distinct sampled configurations over all of them, and one
/// linear equation over the first `min(n_linear_vars, n_vars)` table
/// variables, extended with fresh variables when `n_linear_vars > n_vars`.
#[derive(Clone, Copy, Debug)]
pub struct LinParams {
    pub n_vars: usize,
    pub max_dom: i64,
    pub n_tuples: usize,
    pub n_linear_vars: usize,
    /// `true` pins the capacity to a sampled witness tuple (the instance is
    /// provably SAT); `false` sets it just above the reachable maximum.
    pub satisfiable: bool,
    pub seed: u64,
}

/// Large preset: 80–150 variables, domains up to 600, 5000–10000 tuples.
pub fn lin_b(seed: u64) -> LinParams {
    let mut rng = preset_rng(seed);
    let n_vars = rng.gen_range(80..=150);
    LinParams {
        n_vars,
        max_dom: 600,
        n_tuples: rng.gen_range(5000..=10000),
        n_linear_vars: rng.gen_range(n_vars / 2..=n_vars + 4),
        satisfiable: true,
        seed,
    }
}

/// Larger preset: 100–200 variables, domains up to 800, 5000–15000 tuples.
pub fn lin_eb(seed: u64) -> LinParams {
    let mut rng = preset_rng(seed);
    let n_vars = rng.gen_range(100..=200);
    LinParams {
        n_vars,
        max_dom: 800,
        n_tuples: rng.gen_range(5000..=15000),
        n_linear_vars: rng.gen_range(n_vars / 2..=n_vars + 4),
        satisfiable: true,
        seed,
    }
}

/// Small preset sized for quick desk runs: 20 variables, domains up to 50,
/// 1000 tuples.
pub fn desk(seed: u64) -> LinParams {
    LinParams {
        n_vars: 20,
        max_dom: 50,
        n_tuples: 1000,
        n_linear_vars: 10,
        satisfiable: true,
        seed,
    }
}

fn preset_rng(seed: u64) -> ChaCha8Rng {
    // Preset sampling draws from a separate stream so it never overlaps the
    // draws made by the generator itself under the same seed.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xB);
    rng
}

/// Sidecar metadata emitted next to a generated knapsack model.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct LinMeta {
    pub family: String,
    pub seed: u64,
    pub n_vars: usize,
    pub max_dom: i64,
    pub n_tuples: usize,
    pub n_linear_vars: usize,
    pub satisfiable: bool,
    pub capacity: i64,
    /// Satisfying assignment over the linear equation's scope (table
    /// variables first, then fresh ones), present when `satisfiable`.
    pub witness: Option<Vec<i64>>,
}

pub fn gen_lin(p: &LinParams) -> Result<(ModelDoc, LinMeta), GenError> {
    if p.n_vars == 0 {
        return Err(GenError::Infeasible("n_vars must be at least 1".into()));
    }
    if p.n_tuples == 0 {
        return Err(GenError::Infeasible("n_tuples must be at least 1".into()));
    }
    if p.max_dom < 2 {
        return Err(GenError::Infeasible("max_dom must be at least 2".into()));
    }
    if p.n_linear_vars == 0 {
        return Err(GenError::Infeasible("n_linear_vars must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    // Per-item bounds: x_i ranges over {0..b_i}, so the domain size b_i + 1
    // stays within max_dom.
    let bounds: Vec<i64> = (0..p.n_vars)
        .map(|_| rng.gen_range(1..=p.max_dom - 1))
        .collect();
    let mut space: u128 = 1;
    for &b in &bounds {
        space = space.saturating_mul(b as u128 + 1);
    }
    if (p.n_tuples as u128) > space {
        return Err(GenError::Infeasible(format!(
            "requested {} distinct tuples but the domain product admits only {space}",
            p.n_tuples
        )));
    }

    // Sample distinct configurations; collisions are re-drawn so the table
    // holds exactly n_tuples rows with no duplicates.
    let mut tuples: Vec<Vec<i64>> = Vec::with_capacity(p.n_tuples);
    let mut seen: HashSet<Vec<i64>> = HashSet::with_capacity(p.n_tuples);
    while tuples.len() < p.n_tuples {
        let t: Vec<i64> = bounds.iter().map(|&b| rng.gen_range(0..=b)).collect();
        if seen.insert(t.clone()) {
            tuples.push(t);
        }
    }

    let k = p.n_linear_vars.min(p.n_vars);
    let n_fresh = p.n_linear_vars - k;
    let weights: Vec<i64> = (0..p.n_linear_vars).map(|_| rng.gen_range(1..=9)).collect();
    let fresh_bounds: Vec<i64> = (0..n_fresh)
        .map(|_| rng.gen_range(1..=p.max_dom - 1))
        .collect();

    let (capacity, witness) = if p.satisfiable {
        let pick = rng.gen_range(0..tuples.len());
        let mut w: Vec<i64> = tuples[pick][..k].to_vec();
        w.extend(fresh_bounds.iter().map(|&b| rng.gen_range(0..=b)));
        let capacity: i64 = weights.iter().zip(&w).map(|(a, x)| a * x).sum();
        // Re-verify the witness against both constraints before emission.
        assert!(seen.contains(&tuples[pick]), "witness tuple must be in the table");
        assert_eq!(
            weights.iter().zip(&w).map(|(a, x)| a * x).sum::<i64>(),
            capacity,
            "witness must satisfy the linear equation"
        );
        (capacity, Some(w))
    } else {
        // One past the largest reachable weighted sum: provably UNSAT.
        let reach: i64 = weights
            .iter()
            .zip(bounds[..k].iter().chain(&fresh_bounds))
            .map(|(a, b)| a * b)
            .sum();
        (reach + 1, None)
    };

    let mut variables: Vec<VarDecl> = bounds
        .iter()
        .enumerate()
        .map(|(i, &b)| VarDecl {
            name: format!("x{i}"),
            min: 0,
            max: b,
        })
        .collect();
    variables.extend(fresh_bounds.iter().enumerate().map(|(j, &b)| VarDecl {
        name: format!("y{j}"),
        min: 0,
        max: b,
    }));

    let table_vars: Vec<String> = (0..p.n_vars).map(|i| format!("x{i}")).collect();
    let mut linear_vars: Vec<String> = (0..k).map(|i| format!("x{i}")).collect();
    linear_vars.extend((0..n_fresh).map(|j| format!("y{j}")));

    let doc = ModelDoc {
        variables,
        constraints: vec![
            ConstraintDecl::Table {
                vars: table_vars,
                tuples,
                backend: None,
            },
            ConstraintDecl::LinearEq {
                coeffs: weights,
                vars: linear_vars,
                constant: capacity,
            },
        ],
        solve: SolveDecl::default(),
    };
    let meta = LinMeta {
        family: "lin".into(),
        seed: p.seed,
        n_vars: p.n_vars,
        max_dom: p.max_dom,
        n_tuples: p.n_tuples,
        n_linear_vars: p.n_linear_vars,
        satisfiable: p.satisfiable,
        capacity,
        witness,
    };
    Ok((doc, meta))
}

/// Parameters of the grid-path family.
///
/// Cells are numbered 1..rows·cols row-major; the walk starts at cell 1,
/// must reach cell rows·cols after exactly `d` steps (staying put is only
/// allowed at the end cell), and accumulates the profit of each cell it
/// enters, truncated at the cap `c`.
#[derive(Clone, Debug)]
pub struct OpParams {
    pub rows: usize,
    pub cols: usize,
    /// Number of steps (the walk visits d + 1 positions).
    pub d: usize,
    /// Reward cap.
    pub c: i64,
    /// Probability that a non-start, non-end cell is an obstacle.
    pub obstacle_density: f64,
    /// Profits are sampled uniformly from {0..profit_max}.
    pub profit_max: i64,
    pub seed: u64,
    /// Explicit obstacle cells (overrides density sampling). Start and end
    /// may not appear here.
    pub obstacles: Option<Vec<usize>>,
    /// Explicit per-cell profits, indexed by cell − 1 (overrides sampling).
    pub profits: Option<Vec<i64>>,
}

impl Default for OpParams {
    fn default() -> Self {
        OpParams {
            rows: 4,
            cols: 4,
            d: 6,
            c: 10,
            obstacle_density: 0.1,
            profit_max: 3,
            seed: 0,
            obstacles: None,
            profits: None,
        }
    }
}

/// Sidecar metadata emitted next to a generated grid-path model; the path
/// validator consumes it.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct OpMeta {
    pub family: String,
    pub rows: usize,
    pub cols: usize,
    pub start: usize,
    pub end: usize,
    pub d: usize,
    pub c: i64,
    pub obstacles: Vec<usize>,
    /// Profit of cell i+1 at index i (obstacle cells keep their sampled
    /// profit; it is never collectible).
    pub profits: Vec<i64>,
    pub seed: u64,
}

/// 4-connected neighbors of a cell, all in 1..=rows·cols.
pub fn grid_neighbors(cell: usize, rows: usize, cols: usize) -> Vec<usize> {
    let r = (cell - 1) / cols;
    let c = (cell - 1) % cols;
    let mut out = Vec::with_capacity(4);
    if r > 0 {
        out.push(cell - cols);
    }
    if r + 1 < rows {
        out.push(cell + cols);
    }
    if c > 0 {
        out.push(cell - 1);
    }
    if c + 1 < cols {
        out.push(cell + 1);
    }
    out
}

pub fn gen_orienteering(p: &OpParams) -> Result<(ModelDoc, OpMeta), GenError> {
    let cells = p.rows * p.cols;
    if cells < 2 {
        return Err(GenError::Infeasible("the grid needs at least two cells".into()));
    }
    if p.d == 0 {
        return Err(GenError::Infeasible("the length bound must be at least 1".into()));
    }
    if p.c < 0 {
        return Err(GenError::Infeasible("the reward cap must be nonnegative".into()));
    }
    if !(0.0..1.0).contains(&p.obstacle_density) {
        return Err(GenError::Infeasible("obstacle density must lie in [0, 1)".into()));
    }
    if p.profit_max < 0 {
        return Err(GenError::Infeasible("profits must be nonnegative".into()));
    }
    let (start, end) = (1, cells);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let profits: Vec<i64> = match &p.profits {
        Some(v) => {
            if v.len() != cells || v.iter().any(|&x| x < 0) {
                return Err(GenError::Infeasible(format!(
                    "explicit profits must list {cells} nonnegative values"
                )));
            }
            v.clone()
        }
        None => (0..cells).map(|_| rng.gen_range(0..=p.profit_max)).collect(),
    };
    let obstacle: Vec<bool> = match &p.obstacles {
        Some(list) => {
            let mut flags = vec![false; cells + 1];
            for &cell in list {
                if cell < 1 || cell > cells {
                    return Err(GenError::Infeasible(format!("obstacle cell {cell} is off the grid")));
                }
                if cell == start || cell == end {
                    return Err(GenError::Infeasible("start and end cells cannot be obstacles".into()));
                }
                flags[cell] = true;
            }
            flags
        }
        None => {
            let mut flags = vec![false; cells + 1];
            for (cell, flag) in flags.iter_mut().enumerate().skip(1) {
                if cell != start && cell != end {
                    *flag = rng.gen_bool(p.obstacle_density);
                }
            }
            flags
        }
    };

    // Legal moves: 4-connected steps between non-obstacle cells, plus
    // staying at the end cell once it is reached.
    let mut moves: Vec<(usize, usize)> = Vec::new();
    for q in 1..=cells {
        if obstacle[q] {
            continue;
        }
        for n in grid_neighbors(q, p.rows, p.cols) {
            if !obstacle[n] {
                moves.push((q, n));
            }
        }
    }
    moves.push((end, end));

    // One transition table per consecutive time-step pair: rows
    // (pos, rew, pos', min(rew + profit(pos'), c)) for every legal move and
    // every reward level.
    let mut tuples: Vec<Vec<i64>> = Vec::with_capacity(moves.len() * (p.c as usize + 1));
    for &(q, q2) in &moves {
        for rew in 0..=p.c {
            let rew2 = (rew + profits[q2 - 1]).min(p.c);
            tuples.push(vec![q as i64, rew, q2 as i64, rew2]);
        }
    }

    let mut variables = Vec::with_capacity(2 * (p.d + 1));
    let start_rew = profits[start - 1].min(p.c);
    for t in 0..=p.d {
        let (pos_min, pos_max) = if t == 0 {
            (start as i64, start as i64)
        } else if t == p.d {
            (end as i64, end as i64)
        } else {
            (1, cells as i64)
        };
        variables.push(VarDecl {
            name: format!("pos{t}"),
            min: pos_min,
            max: pos_max,
        });
        let (rew_min, rew_max) = if t == 0 { (start_rew, start_rew) } else { (0, p.c) };
        variables.push(VarDecl {
            name: format!("rew{t}"),
            min: rew_min,
            max: rew_max,
        });
    }

    let constraints: Vec<ConstraintDecl> = (0..p.d)
        .map(|t| ConstraintDecl::Table {
            vars: vec![
                format!("pos{t}"),
                format!("rew{t}"),
                format!("pos{}", t + 1),
                format!("rew{}", t + 1),
            ],
            tuples: tuples.clone(),
            backend: None,
        })
        .collect();

    let doc = ModelDoc {
        variables,
        constraints,
        solve: SolveDecl::default(),
    };
    let meta = OpMeta {
        family: "op".into(),
        rows: p.rows,
        cols: p.cols,
        start,
        end,
        d: p.d,
        c: p.c,
        obstacles: (1..=cells).filter(|&q| obstacle[q]).collect(),
        profits,
        seed: p.seed,
    };
    Ok((doc, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    #[test]
    fn lin_witness_satisfies_both_constraints() {
        let p = LinParams {
            n_vars: 6,
            max_dom: 10,
            n_tuples: 20,
            n_linear_vars: 8,
            satisfiable: true,
            seed: 42,
        };
        let (doc, meta) = gen_lin(&p).unwrap();
        validate(&doc).unwrap();
        let witness = meta.witness.as_ref().unwrap();
        match (&doc.constraints[0], &doc.constraints[1]) {
            (
                ConstraintDecl::Table { tuples, .. },
                ConstraintDecl::LinearEq { coeffs, constant, vars },
            ) => {
                assert_eq!(vars.len(), witness.len());
                let k = p.n_linear_vars.min(p.n_vars);
                assert!(
                    tuples.iter().any(|t| t[..k] == witness[..k]),
                    "witness prefix must come from a table row"
                );
                let sum: i64 = coeffs.iter().zip(witness).map(|(a, x)| a * x).sum();
                assert_eq!(sum, *constant);
            }
            other => panic!("unexpected constraint shapes: {other:?}"),
        }
    }

    #[test]
    fn lin_tables_hold_exactly_the_requested_distinct_tuples() {
        let (doc, _) = gen_lin(&desk(7)).unwrap();
        match &doc.constraints[0] {
            ConstraintDecl::Table { tuples, .. } => {
                assert_eq!(tuples.len(), 1000);
                let set: HashSet<&Vec<i64>> = tuples.iter().collect();
                assert_eq!(set.len(), tuples.len(), "no duplicate rows");
            }
            other => panic!("expected a table, got {other:?}"),
        }
    }

    #[test]
    fn lin_is_deterministic_per_seed() {
        let a = serde_json::to_string(&gen_lin(&desk(3)).unwrap().0).unwrap();
        let b = serde_json::to_string(&gen_lin(&desk(3)).unwrap().0).unwrap();
        let c = serde_json::to_string(&gen_lin(&desk(4)).unwrap().0).unwrap();
        assert_eq!(a, b, "same seed, same bytes");
        assert_ne!(a, c, "different seeds diverge");
    }

    #[test]
    fn lin_rejects_impossible_tuple_counts() {
        let p = LinParams {
            n_vars: 2,
            max_dom: 2,
            n_tuples: 100,
            n_linear_vars: 2,
            satisfiable: true,
            seed: 0,
        };
        assert!(matches!(gen_lin(&p), Err(GenError::Infeasible(_))));
    }

    #[test]
    fn lin_presets_stay_inside_their_advertised_ranges() {
        for seed in 0..10 {
            let b = lin_b(seed);
            assert!((80..=150).contains(&b.n_vars));
            assert!((5000..=10000).contains(&b.n_tuples));
            assert_eq!(b.max_dom, 600);
            let eb = lin_eb(seed);
            assert!((100..=200).contains(&eb.n_vars));
            assert!((5000..=15000).contains(&eb.n_tuples));
            assert_eq!(eb.max_dom, 800);
        }
    }

    #[test]
    fn op_small_grid_table_shape_is_bounded() {
        let p = OpParams {
            rows: 2,
            cols: 2,
            d: 2,
            c: 10,
            obstacle_density: 0.0,
            profit_max: 0,
            profits: Some(vec![1, 1, 1, 1]),
            ..OpParams::default()
        };
        let (doc, meta) = gen_orienteering(&p).unwrap();
        validate(&doc).unwrap();
        assert_eq!(doc.constraints.len(), 2, "one table per consecutive step pair");
        match &doc.constraints[0] {
            ConstraintDecl::Table { tuples, vars, .. } => {
                assert_eq!(vars, &["pos0", "rew0", "pos1", "rew1"]);
                assert!(tuples.len() <= 4 * 3 * 11, "≤ cells × moves × reward levels");
                let set: HashSet<&Vec<i64>> = tuples.iter().collect();
                assert_eq!(set.len(), tuples.len());
            }
            other => panic!("expected a table, got {other:?}"),
        }
        assert_eq!(meta.start, 1);
        assert_eq!(meta.end, 4);
        assert!(meta.obstacles.is_empty());
    }

    #[test]
    fn op_reward_rows_truncate_at_the_cap() {
        let p = OpParams {
            rows: 2,
            cols: 2,
            d: 1,
            c: 3,
            profits: Some(vec![2, 2, 2, 2]),
            obstacle_density: 0.0,
            ..OpParams::default()
        };
        let (doc, _) = gen_orienteering(&p).unwrap();
        match &doc.constraints[0] {
            ConstraintDecl::Table { tuples, .. } => {
                for t in tuples {
                    assert!(t[3] <= 3);
                    let expect = (t[1] + 2).min(3);
                    assert_eq!(t[3], expect, "row {t:?}");
                }
            }
            other => panic!("expected a table, got {other:?}"),
        }
    }

    #[test]
    fn op_pins_endpoints_and_start_reward() {
        let (doc, meta) = gen_orienteering(&OpParams::default()).unwrap();
        let pos0 = &doc.variables[0];
        let rew0 = &doc.variables[1];
        let pos_last = &doc.variables[doc.variables.len() - 2];
        assert_eq!((pos0.min, pos0.max), (1, 1));
        assert_eq!((pos_last.min, pos_last.max), (16, 16));
        let expect = meta.profits[0].min(meta.c);
        assert_eq!((rew0.min, rew0.max), (expect, expect));
    }

    #[test]
    fn op_is_deterministic_per_seed() {
        let p = OpParams {
            rows: 7,
            cols: 7,
            d: 14,
            seed: 99,
            ..OpParams::default()
        };
        let a = serde_json::to_string(&gen_orienteering(&p).unwrap().0).unwrap();
        let b = serde_json::to_string(&gen_orienteering(&p).unwrap().0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn op_rejects_obstacles_on_the_endpoints() {
        let p = OpParams {
            obstacles: Some(vec![1]),
            ..OpParams::default()
        };
        assert!(matches!(gen_orienteering(&p), Err(GenError::Infeasible(_))));
    }

    #[test]
    fn grid_neighbors_match_the_4_connected_layout() {
        // 2×3 grid: 1 2 3 / 4 5 6.
        assert_eq!(grid_neighbors(1, 2, 3), vec![4, 2]);
        assert_eq!(grid_neighbors(5, 2, 3), vec![2, 4, 6]);
        assert_eq!(grid_neighbors(3, 2, 3), vec![6, 2]);
    }
}
