//! Essential sets: smallest constraint subsets with the same optimum.
//!
//! Only constraints active at `x*` can belong to an essential set. Dropping a
//! constraint with slack leaves `x*` locally optimal for both `lambda` (each
//! ratio `a^T x / b^T x` is monotone along segments) and the norm (convex at
//! fixed `lambda`), so the searches work on the near-active constraints first
//! and fall back to the full list only when that fails numerically.

use serde::{Deserialize, Serialize};

use super::{feasible_at, solve, QlpInstance, QlpSolution, Search, SolveOptions};
use crate::error::{Error, Result};

/// Largest constraint count the exhaustive search accepts.
pub const EXHAUSTIVE_CAP: usize = 20;

const ACTIVE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssentialSet {
    /// Constraint indices in ascending order.
    pub indices: Vec<usize>,
    pub lambda: f64,
    pub cost: f64,
}

/// Relative tolerances for matching `(lambda*, ||x*||^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssentialTolerance {
    pub lambda: f64,
    pub cost: f64,
}

impl Default for EssentialTolerance {
    fn default() -> Self {
        Self { lambda: 1e-5, cost: 1e-5 }
    }
}

impl EssentialTolerance {
    fn matches(&self, target: &QlpSolution, sol: &QlpSolution) -> bool {
        let (l0, l1) = (target.lambda_star, sol.lambda_star);
        let (c0, c1) = (target.cost(), sol.cost());
        (l1 - l0).abs() <= self.lambda * l0.abs().max(1.0) && (c1 - c0).abs() <= self.cost * c0.abs().max(1.0)
    }
}

struct Finder<'a> {
    inst: &'a QlpInstance,
    opts: SolveOptions,
    target: QlpSolution,
    tol: EssentialTolerance,
}

impl<'a> Finder<'a> {
    fn new(inst: &'a QlpInstance, opts: &SolveOptions, tol: EssentialTolerance) -> Result<Self> {
        let target = solve(inst, opts)?;
        // Subsets share the full problem's bracket so bisection steps line up.
        let mut sub = *opts;
        if target.bracket_top > 0.0 {
            let top = match opts.search {
                Search::Lambda => target.bracket_top,
                Search::SqrtLambda => target.bracket_top * target.bracket_top,
            };
            sub.lambda_hi = Some(top);
            sub.tol_lambda = Some(opts.tol_lambda.unwrap_or(super::DEFAULT_REL_TOL_LAMBDA * target.bracket_top));
        }
        Ok(Self { inst, opts: sub, target, tol })
    }

    fn try_subset(&self, indices: &[usize]) -> Result<Option<QlpSolution>> {
        let sub = self.inst.restrict(indices);
        // A subset that is feasible well below lambda* cannot match; one
        // oracle call settles most candidates without a full bisection.
        let below = self.target.lambda_star - 2.0 * self.tol.lambda * self.target.lambda_star.abs().max(1.0);
        if below >= 0.0 && feasible_at(&sub, below, self.opts.tol_feas, self.opts.max_iter)?.feasible {
            return Ok(None);
        }
        let sol = solve(&sub, &self.opts)?;
        Ok(self.tol.matches(&self.target, &sol).then_some(sol))
    }

    fn active(&self) -> Vec<usize> {
        let x = &self.target.x_star;
        let lambda = self.target.lambda_star;
        let scale = 1.0 + super::sets::norm(x);
        self.inst
            .constraints()
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                let b = super::sets::norm(&c.a).max(lambda * super::sets::norm(&c.b)).max(f64::MIN_POSITIVE);
                c.excess(lambda, x) >= -ACTIVE_SLACK * b * scale
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn result(&self, indices: Vec<usize>, sol: &QlpSolution) -> EssentialSet {
        EssentialSet { indices, lambda: sol.lambda_star, cost: sol.cost() }
    }

    /// Smallest subset of `pool` in cardinality-then-lexicographic order.
    fn smallest_in(&self, pool: &[usize]) -> Result<Option<EssentialSet>> {
        for k in 0..=pool.len() {
            let mut pick: Vec<usize> = (0..k).collect();
            loop {
                let subset: Vec<usize> = pick.iter().map(|&p| pool[p]).collect();
                if let Some(sol) = self.try_subset(&subset)? {
                    return Ok(Some(self.result(subset, &sol)));
                }
                if !next_combination(&mut pick, pool.len()) {
                    break;
                }
            }
        }
        Ok(None)
    }
}

/// Advances `pick` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(pick: &mut [usize], n: usize) -> bool {
    let k = pick.len();
    let Some(i) = (0..k).rev().find(|&i| pick[i] < n - k + i) else {
        return false;
    };
    pick[i] += 1;
    for j in i + 1..k {
        pick[j] = pick[j - 1] + 1;
    }
    true
}

/// Minimum-cardinality subset of the constraints whose optimum matches the
/// full problem. Ties go to the lexicographically smallest index list.
pub fn essential_set_exhaustive(inst: &QlpInstance, opts: &SolveOptions, tol: EssentialTolerance) -> Result<EssentialSet> {
    let n = inst.constraints().len();
    if n > EXHAUSTIVE_CAP {
        return Err(Error::Parameter(format!(
            "exhaustive search handles at most {EXHAUSTIVE_CAP} constraints, got {n}"
        )));
    }
    let search = Finder::new(inst, opts, tol)?;
    if let Some(found) = search.smallest_in(&search.active())? {
        return Ok(found);
    }
    let all: Vec<usize> = (0..n).collect();
    match search.smallest_in(&all)? {
        Some(found) => Ok(found),
        // The full index list always reproduces itself up to solver noise.
        None => Ok(search.result(all, &search.target)),
    }
}

/// Drops constraints in index order while the optimum stays put. The result
/// reproduces the full optimum but need not be minimal.
pub fn essential_set_greedy(inst: &QlpInstance, opts: &SolveOptions, tol: EssentialTolerance) -> Result<EssentialSet> {
    let search = Finder::new(inst, opts, tol)?;
    let all: Vec<usize> = (0..inst.constraints().len()).collect();
    let active = search.active();
    let (mut keep, mut sol) = match search.try_subset(&active)? {
        Some(sol) => (active, sol),
        None => (all, search.target.clone()),
    };
    let mut i = 0;
    while i < keep.len() {
        let mut trial = keep.clone();
        trial.remove(i);
        match search.try_subset(&trial)? {
            Some(s) => {
                keep = trial;
                sol = s;
            }
            None => i += 1,
        }
    }
    Ok(search.result(keep, &sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlp::{CommonSet, Constraint};

    fn interval() -> Vec<CommonSet> {
        vec![CommonSet::Box { lo: vec![1.0], hi: vec![2.0] }]
    }

    fn one_binding_five_slack() -> QlpInstance {
        let mut cs = vec![];
        for a in [0.5, 1.0, 1.5, 2.0, 2.5] {
            cs.push(Constraint::new(vec![a], vec![1.0]));
        }
        cs.insert(3, Constraint::new(vec![3.0], vec![1.0]));
        QlpInstance::new(1, cs, interval()).unwrap()
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut pick = vec![0, 1];
        let mut seen = vec![pick.clone()];
        while next_combination(&mut pick, 4) {
            seen.push(pick.clone());
        }
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        let mut empty: Vec<usize> = vec![];
        assert!(!next_combination(&mut empty, 3));
    }

    #[test]
    fn binding_singleton() {
        let inst = one_binding_five_slack();
        let opts = SolveOptions::default();
        let e = essential_set_exhaustive(&inst, &opts, EssentialTolerance::default()).unwrap();
        assert_eq!(e.indices, vec![3]);
        assert!((e.lambda - 3.0).abs() < 1e-4);
        let g = essential_set_greedy(&inst, &opts, EssentialTolerance::default()).unwrap();
        assert_eq!(g.indices, vec![3]);
    }

    #[test]
    fn empty_constraints() {
        let inst = QlpInstance::new(1, vec![], interval()).unwrap();
        let e = essential_set_exhaustive(&inst, &SolveOptions::default(), EssentialTolerance::default()).unwrap();
        assert!(e.indices.is_empty());
        assert_eq!(e.lambda, 0.0);
        let g = essential_set_greedy(&inst, &SolveOptions::default(), EssentialTolerance::default()).unwrap();
        assert!(g.indices.is_empty());
    }

    #[test]
    fn duplicate_binding_constraints_pick_lowest_index() {
        let cs = vec![
            Constraint::new(vec![1.0], vec![1.0]),
            Constraint::new(vec![3.0], vec![1.0]),
            Constraint::new(vec![6.0], vec![2.0]),
        ];
        let inst = QlpInstance::new(1, cs, interval()).unwrap();
        let e = essential_set_exhaustive(&inst, &SolveOptions::default(), EssentialTolerance::default()).unwrap();
        assert_eq!(e.indices, vec![1]);
    }

    #[test]
    fn cap_is_enforced() {
        let cs = (0..21).map(|i| Constraint::new(vec![i as f64], vec![1.0])).collect();
        let inst = QlpInstance::new(1, cs, interval()).unwrap();
        let r = essential_set_exhaustive(&inst, &SolveOptions::default(), EssentialTolerance::default());
        assert!(matches!(r, Err(Error::Parameter(_))));
        assert!(essential_set_greedy(&inst, &SolveOptions::default(), EssentialTolerance::default()).is_ok());
    }
}
