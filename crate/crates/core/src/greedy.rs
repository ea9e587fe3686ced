//! Top-down greedy construction of query trees.
//!
//! One selection rule covers the whole family: at every node the query
//! minimizing the regime's split criterion is chosen among the queries not
//! yet asked on the path. Finite λ minimizes
//! `C_a = (π_l/π_a) D_α(l) + (π_r/π_a) D_α(r)`; λ → 1 minimizes `ρ_a`
//! (object mode) or `1 - H(ρ_a) + Σ_i (π_a^i/π_a) H(ρ_a^i)` (group mode);
//! λ → ∞ minimizes the larger child's object count or group count.

use serde::{Deserialize, Serialize};

use crate::entropy::LambdaRegime;
use crate::error::{Error, Result};
use crate::instance::{Identified, Mode, ProblemInstance};
use crate::par::{map_collect, Execution};
use crate::split::{evaluate_split_with_prior, SplitEvaluation};
use crate::tree::{DecisionTree, Node};

/// Relative tolerance used to form the argmin set before tie-breaking,
/// applied to [`SplitEvaluation::ranking`].
pub const CRITERION_TOLERANCE: f64 = 1e-12;

/// Below this many object-query visits a node is evaluated sequentially.
const PARALLEL_WORK_THRESHOLD: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorChoice {
    #[default]
    Given,
    /// Replace the prior by the uniform distribution before any computation.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Smallest query index among the minimizers.
    #[default]
    Lowest,
    /// A minimizer picked by hashing the seed with the node's object set.
    Seeded(u64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TieBreakRepr {
    Word(String),
    Seed { seed: u64 },
}

impl Serialize for TieBreak {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            TieBreak::Lowest => TieBreakRepr::Word("lowest".into()).serialize(s),
            TieBreak::Seeded(seed) => TieBreakRepr::Seed { seed }.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for TieBreak {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match TieBreakRepr::deserialize(d)? {
            TieBreakRepr::Word(w) if w == "lowest" => Ok(TieBreak::Lowest),
            TieBreakRepr::Word(w) => Err(serde::de::Error::custom(format!("unknown tiebreak `{w}`"))),
            TieBreakRepr::Seed { seed } => Ok(TieBreak::Seeded(seed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuilderConfig {
    #[serde(rename = "lambda")]
    pub regime: LambdaRegime,
    pub mode: Mode,
    #[serde(default)]
    pub prior: PriorChoice,
    #[serde(default)]
    pub tiebreak: TieBreak,
}

impl BuilderConfig {
    pub fn new(regime: LambdaRegime, mode: Mode) -> Self {
        BuilderConfig { regime, mode, prior: PriorChoice::Given, tiebreak: TieBreak::Lowest }
    }

    /// Generalized binary search: expected query count, object mode.
    pub fn gbs() -> Self {
        Self::new(LambdaRegime::LimitOne, Mode::Object)
    }

    /// GBS run on the uniform prior.
    pub fn gbs_uniform() -> Self {
        Self::gbs().with_prior(PriorChoice::Uniform)
    }

    pub fn lambda_gbs(lambda: f64) -> Self {
        Self::new(LambdaRegime::Finite(lambda), Mode::Object)
    }

    /// Group-identification counterpart of [`gbs`](Self::gbs).
    pub fn ggbs() -> Self {
        Self::new(LambdaRegime::LimitOne, Mode::Group)
    }

    pub fn lambda_ggbs(lambda: f64) -> Self {
        Self::new(LambdaRegime::Finite(lambda), Mode::Group)
    }

    pub fn with_prior(mut self, prior: PriorChoice) -> Self {
        self.prior = prior;
        self
    }

    pub fn with_tiebreak(mut self, tiebreak: TieBreak) -> Self {
        self.tiebreak = tiebreak;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    fn effective_prior(&self, instance: &ProblemInstance) -> Vec<f64> {
        match self.prior {
            PriorChoice::Given => instance.prior.clone(),
            PriorChoice::Uniform => vec![1.0 / instance.num_objects() as f64; instance.num_objects()],
        }
    }
}

/// True when `a` and `b` agree within [`CRITERION_TOLERANCE`], relative to
/// `max(1, |a|, |b|)`.
pub fn criteria_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= CRITERION_TOLERANCE * 1f64.max(a.abs()).max(b.abs())
}

/// Positions of the minimizers among `criteria`.
pub fn argmin_positions(criteria: &[f64]) -> Vec<usize> {
    let Some(min) = criteria.iter().copied().reduce(f64::min) else {
        return Vec::new();
    };
    criteria
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c <= min || criteria_tie(c, min))
        .map(|(i, _)| i)
        .collect()
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic choice among `n` tied candidates for a node. Depends only
/// on the seed and the node's object set, so tree and adaptive forms agree.
fn seeded_pick(seed: u64, node_objects: &[usize], n: usize) -> usize {
    let mut h = splitmix64(seed);
    for &o in node_objects {
        h = splitmix64(h ^ o as u64);
    }
    ((u128::from(h) * n as u128) >> 64) as usize
}

/// Evaluates every candidate that splits the node. Non-splitting candidates
/// are skipped.
pub fn evaluate_candidates(
    instance: &ProblemInstance,
    node_objects: &[usize],
    available: &[usize],
    config: &BuilderConfig,
    exec: Execution,
) -> Vec<SplitEvaluation> {
    let prior = config.effective_prior(instance);
    let exec = if node_objects.len() * available.len() < PARALLEL_WORK_THRESHOLD {
        Execution::Sequential
    } else {
        exec
    };
    map_collect(available, exec, |&q| {
        evaluate_split_with_prior(instance, &prior, node_objects, q, config.regime, config.mode).ok()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// The set of queries minimizing the criterion at a node, sorted by index.
pub fn argmin_queries(
    instance: &ProblemInstance,
    node_objects: &[usize],
    available: &[usize],
    config: &BuilderConfig,
) -> Vec<usize> {
    let evals = evaluate_candidates(instance, node_objects, available, config, Execution::Sequential);
    let criteria: Vec<f64> = evals.iter().map(|e| e.ranking).collect();
    let mut out: Vec<usize> = argmin_positions(&criteria).into_iter().map(|i| evals[i].query).collect();
    out.sort_unstable();
    out
}

/// Picks the query for a node among `available`.
pub fn choose_query(
    instance: &ProblemInstance,
    node_objects: &[usize],
    available: &[usize],
    config: &BuilderConfig,
) -> Result<(usize, SplitEvaluation)> {
    choose_query_with(instance, node_objects, available, config, Execution::default())
}

pub fn choose_query_with(
    instance: &ProblemInstance,
    node_objects: &[usize],
    available: &[usize],
    config: &BuilderConfig,
    exec: Execution,
) -> Result<(usize, SplitEvaluation)> {
    let mut evals = evaluate_candidates(instance, node_objects, available, config, exec);
    if evals.is_empty() {
        return Err(Error::NotIdentifiable { objects: node_objects.to_vec() });
    }
    let criteria: Vec<f64> = evals.iter().map(|e| e.ranking).collect();
    let mut winners = argmin_positions(&criteria);
    winners.sort_unstable_by_key(|&i| evals[i].query);
    let pick = match config.tiebreak {
        TieBreak::Lowest => winners[0],
        TieBreak::Seeded(seed) => winners[seeded_pick(seed, node_objects, winners.len())],
    };
    let eval = evals.swap_remove(pick);
    Ok((eval.query, eval))
}

/// Builds a full tree greedily.
pub fn build_tree(instance: &ProblemInstance, config: &BuilderConfig) -> Result<DecisionTree> {
    build_tree_with(instance, config, Execution::default())
}

pub fn build_tree_with(instance: &ProblemInstance, config: &BuilderConfig, exec: Execution) -> Result<DecisionTree> {
    instance.ensure_valid()?;
    let mut used = vec![false; instance.num_queries()];
    let root = grow(instance, instance.all_objects(), &mut used, config, exec)?;
    Ok(DecisionTree::new(root, config.mode))
}

fn grow(
    instance: &ProblemInstance,
    objects: Vec<usize>,
    used: &mut [bool],
    config: &BuilderConfig,
    exec: Execution,
) -> Result<Node> {
    if objects.len() <= 1 || instance.is_homogeneous(config.mode, &objects) {
        return Ok(Node::leaf(objects));
    }
    let available: Vec<usize> = (0..used.len()).filter(|&q| !used[q]).collect();
    let (query, eval) = choose_query_with(instance, &objects, &available, config, exec)?;
    used[query] = true;
    let zero = grow(instance, eval.zero, used, config, exec);
    let one = zero.and_then(|z| grow(instance, eval.one, used, config, exec).map(|o| (z, o)));
    used[query] = false;
    let (zero, one) = one?;
    Ok(Node::split(query, zero, one))
}

/// Outcome of one adaptive step.
#[derive(Debug, Clone, PartialEq)]
pub enum NextStep {
    Ask { query: usize, evaluation: SplitEvaluation },
    Done(Identified),
}

/// The adaptive form of the builders: what to ask next given the objects
/// still consistent with the answers so far.
pub fn next_query(
    instance: &ProblemInstance,
    remaining: &[usize],
    asked: &[usize],
    config: &BuilderConfig,
) -> Result<NextStep> {
    let Some(&first) = remaining.first() else {
        return Err(Error::InconsistentAnswers);
    };
    if instance.is_homogeneous(config.mode, remaining) {
        return Ok(NextStep::Done(instance.identified(config.mode, first)));
    }
    let available: Vec<usize> = (0..instance.num_queries()).filter(|q| !asked.contains(q)).collect();
    let (query, evaluation) = choose_query(instance, remaining, &available, config)?;
    Ok(NextStep::Ask { query, evaluation })
}
