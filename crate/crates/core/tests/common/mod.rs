//! Helpers shared by the integration suites: the worked fixture table and
//! seeded random instance/model generators.

#![allow(dead_code)]

use ctsolve::model::{ConstraintDecl, ModeDecl, ModelDoc, SolveDecl, VarDecl};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// The worked example: five tuples over three variables ranging 1..=4.
pub fn fixture_tuples() -> Vec<Vec<i64>> {
    vec![
        vec![3, 1, 1],
        vec![1, 2, 3],
        vec![2, 3, 3],
        vec![1, 4, 1],
        vec![3, 4, 3],
    ]
}

pub struct RandomInstance {
    pub ranges: Vec<(i64, i64)>,
    pub tuples: Vec<Vec<i64>>,
}

/// Small random table instance: up to 6 variables, domains of up to 10
/// values (possibly negative), up to 50 tuples, with a few deliberately
/// out-of-range entries.
pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = rng.gen_range(1..=6);
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|_| {
            let min = rng.gen_range(-5..=5);
            let span = rng.gen_range(1..=10);
            (min, min + span - 1)
        })
        .collect();
    let t = rng.gen_range(1..=50);
    let tuples: Vec<Vec<i64>> = (0..t)
        .map(|_| {
            ranges
                .iter()
                .map(|&(lo, hi)| {
                    if rng.gen_bool(0.05) {
                        hi + rng.gen_range(1..=3)
                    } else {
                        rng.gen_range(lo..=hi)
                    }
                })
                .collect()
        })
        .collect();
    RandomInstance { ranges, tuples }
}

/// Random all-solutions model with at most 8^4 candidate assignments: one
/// table over every variable, plus a linear equality half of the time
/// (biased toward satisfiable constants).
pub fn random_model(seed: u64) -> ModelDoc {
    let mut rng = StdRng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let n = rng.gen_range(1..=4);
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|_| {
            let min = rng.gen_range(-4..=4);
            let span = rng.gen_range(1..=8);
            (min, min + span - 1)
        })
        .collect();
    let variables: Vec<VarDecl> = ranges
        .iter()
        .enumerate()
        .map(|(i, &(min, max))| VarDecl {
            name: format!("v{i}"),
            min,
            max,
        })
        .collect();
    let t = rng.gen_range(1..=40);
    let tuples: Vec<Vec<i64>> = (0..t)
        .map(|_| {
            ranges
                .iter()
                .map(|&(lo, hi)| {
                    if rng.gen_bool(0.05) {
                        hi + rng.gen_range(1..=3)
                    } else {
                        rng.gen_range(lo..=hi)
                    }
                })
                .collect()
        })
        .collect();
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut constraints = vec![ConstraintDecl::Table {
        vars: names.clone(),
        tuples,
        backend: None,
    }];
    if rng.gen_bool(0.5) {
        let coeffs: Vec<i64> = (0..n)
            .map(|_| {
                let c = rng.gen_range(1..=3);
                if rng.gen_bool(0.5) {
                    c
                } else {
                    -c
                }
            })
            .collect();
        let constant = if rng.gen_bool(0.7) {
            // Anchor to a random in-range point so many stay satisfiable.
            ranges
                .iter()
                .zip(&coeffs)
                .map(|(&(lo, hi), &a)| a * rng.gen_range(lo..=hi))
                .sum()
        } else {
            rng.gen_range(-50..=50)
        };
        constraints.push(ConstraintDecl::LinearEq {
            coeffs,
            vars: names,
            constant,
        });
    }
    ModelDoc {
        variables,
        constraints,
        solve: SolveDecl {
            mode: ModeDecl::All,
            ..SolveDecl::default()
        },
    }
}
