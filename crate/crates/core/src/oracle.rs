//! Exact minimum-cost trees for small instances.
//!
//! Memoized recursion over the object subsets reachable from the root. For
//! a subset `S` with children `S0`, `S1` under some query:
//!
//! * λ → 1: `C(S) = π_S + min_q [C(S0) + C(S1)]`, `C = 0` at homogeneous `S`;
//! * finite λ: `C(S) = λ · min_q [C(S0) + C(S1)]`, `C = π_S` at homogeneous
//!   `S`, and the cost is `log_λ C(Θ)`;
//! * λ → ∞: `C(S) = 1 + min_q max(C(S0), C(S1))`, `C = 0` at homogeneous `S`.
//!
//! Depth never enters the state, so the memo key is just the subset. Asking
//! a query twice on a path cannot split a subset again, which makes the
//! no-repeat rule redundant here.

use std::collections::HashMap;

use serde::Serialize;

use crate::entropy::LambdaRegime;
use crate::error::{Error, Result};
use crate::instance::{Mode, ProblemInstance};
use crate::tree::{DecisionTree, Node};

pub const DEFAULT_SUBSET_BUDGET: usize = 2_000_000;

/// Largest object count the bitset representation allows.
pub const MAX_OBJECTS: usize = 64;

const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    /// Optimal `L_λ` (expected depth at λ → 1, maximum depth at λ → ∞).
    pub cost: f64,
    pub tree: DecisionTree,
    /// Number of distinct subsets memoized.
    pub subsets: usize,
}

#[derive(Clone, Copy)]
struct Entry {
    // ln C(S) for finite λ, C(S) otherwise.
    value: f64,
    query: Option<u32>,
}

struct Solver<'a> {
    instance: &'a ProblemInstance,
    mode: Mode,
    regime: LambdaRegime,
    columns: Vec<u64>,
    group_masks: Vec<u64>,
    memo: HashMap<u64, Entry>,
    budget: usize,
}

fn bits(set: u64) -> impl Iterator<Item = usize> {
    let mut rest = set;
    std::iter::from_fn(move || {
        (rest != 0).then(|| {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            i
        })
    })
}

fn better(candidate: f64, best: f64) -> bool {
    candidate < best && (best - candidate) > TIE_TOLERANCE * 1f64.max(candidate.abs()).max(best.abs())
}

fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

impl Solver<'_> {
    fn homogeneous(&self, set: u64) -> bool {
        let first = set.trailing_zeros() as usize;
        let g = self.instance.group_index(self.mode, first);
        set & !self.group_masks[g] == 0
    }

    fn mass(&self, set: u64) -> f64 {
        bits(set).map(|i| self.instance.prior[i]).sum()
    }

    fn base(&self, set: u64) -> f64 {
        match self.regime {
            LambdaRegime::Finite(_) => {
                let m = self.mass(set);
                if m > 0.0 { m.ln() } else { f64::NEG_INFINITY }
            }
            _ => 0.0,
        }
    }

    fn combine(&self, set: u64, zero: f64, one: f64) -> f64 {
        match self.regime {
            LambdaRegime::LimitOne => self.mass(set) + zero + one,
            LambdaRegime::Finite(l) => {
                let s = ln_add(zero, one);
                if s == f64::NEG_INFINITY { s } else { l.ln() + s }
            }
            LambdaRegime::LimitInfinity => 1.0 + zero.max(one),
        }
    }

    fn solve(&mut self, set: u64) -> Result<f64> {
        if let Some(e) = self.memo.get(&set) {
            return Ok(e.value);
        }
        let entry = if set.count_ones() <= 1 || self.homogeneous(set) {
            Entry { value: self.base(set), query: None }
        } else {
            let mut best: Option<Entry> = None;
            for q in 0..self.columns.len() {
                let one = set & self.columns[q];
                let zero = set & !self.columns[q];
                if one == 0 || zero == 0 {
                    continue;
                }
                let v = {
                    let z = self.solve(zero)?;
                    let o = self.solve(one)?;
                    self.combine(set, z, o)
                };
                if best.is_none_or(|b| better(v, b.value)) {
                    best = Some(Entry { value: v, query: Some(q as u32) });
                }
            }
            best.ok_or_else(|| Error::NotIdentifiable { objects: bits(set).collect() })?
        };
        if self.memo.len() >= self.budget {
            return Err(Error::BudgetExceeded { budget: self.budget, explored: self.memo.len() });
        }
        self.memo.insert(set, entry);
        Ok(entry.value)
    }

    fn rebuild(&self, set: u64) -> Node {
        match self.memo[&set].query {
            None => Node::leaf(bits(set).collect()),
            Some(q) => {
                let col = self.columns[q as usize];
                Node::split(q as usize, self.rebuild(set & !col), self.rebuild(set & col))
            }
        }
    }
}

/// Globally optimal tree for the regime and mode; ties go to the lowest
/// query index.
pub fn optimal_tree(
    instance: &ProblemInstance,
    regime: LambdaRegime,
    mode: Mode,
    max_subsets: usize,
) -> Result<OracleResult> {
    instance.ensure_valid()?;
    if !regime.is_valid() {
        return Err(Error::Domain(format!("invalid regime {regime}")));
    }
    let m = instance.num_objects();
    if m > MAX_OBJECTS {
        return Err(Error::Domain(format!("the oracle handles at most {MAX_OBJECTS} objects, got {m}")));
    }
    if let Err((a, b)) = instance.check_identifiability(mode) {
        return Err(Error::NotIdentifiable { objects: vec![a, b] });
    }
    let columns = (0..instance.num_queries())
        .map(|q| (0..m).filter(|&i| instance.response(i, q)).fold(0u64, |acc, i| acc | 1 << i))
        .collect();
    let mut group_masks = vec![0u64; instance.num_groups(mode)];
    for i in 0..m {
        group_masks[instance.group_index(mode, i)] |= 1 << i;
    }
    let mut solver = Solver {
        instance,
        mode,
        regime,
        columns,
        group_masks,
        memo: HashMap::new(),
        budget: max_subsets,
    };
    let root = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    let value = solver.solve(root)?;
    let cost = match regime {
        LambdaRegime::Finite(l) => value / l.ln(),
        _ => value,
    };
    Ok(OracleResult {
        cost,
        tree: DecisionTree::new(solver.rebuild(root), mode),
        subsets: solver.memo.len(),
    })
}
