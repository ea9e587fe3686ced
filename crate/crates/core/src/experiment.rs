//! Cost-versus-λ sweeps over repeated randomized runs.
//!
//! Every repetition draws its own seed from the master seed and the
//! repetition index, so the table does not depend on how repetitions are
//! scheduled. Within a repetition ties are broken by a seed derived from it,
//! and for [`InstanceSource::ZipfPermuted`] the prior is redrawn as well.
//! Algorithms that follow the grid are rebuilt at every λ; the others are
//! built once per repetition and costed at every λ.

use std::fmt::Write as _;

use serde::Serialize;

use crate::cost::cost_direct;
use crate::datagen::zipf_prior;
use crate::entropy::LambdaRegime;
use crate::error::{Error, Result};
use crate::greedy::{build_tree_with, splitmix64, BuilderConfig, TieBreak};
use crate::instance::{Mode, ProblemInstance};
use crate::par::{map_collect, Execution};
use crate::tree::DecisionTree;

/// Where each repetition's instance comes from.
#[derive(Debug, Clone)]
pub enum InstanceSource {
    /// The same instance every time; only tie-breaking varies.
    Fixed(ProblemInstance),
    /// The instance's responses with a freshly permuted Zipf prior per
    /// repetition.
    ZipfPermuted { instance: ProblemInstance, beta: f64 },
}

impl InstanceSource {
    fn instance(&self, seed: u64) -> Result<ProblemInstance> {
        match self {
            InstanceSource::Fixed(inst) => Ok(inst.clone()),
            InstanceSource::ZipfPermuted { instance, beta } => {
                let (prior, _) = zipf_prior(instance.num_objects(), *beta, seed)?;
                let mut inst = instance.clone();
                inst.prior = prior;
                Ok(inst)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAlgorithm {
    pub name: String,
    pub config: BuilderConfig,
    /// Rebuild with the regime of each grid point instead of `config.regime`.
    pub follows_grid: bool,
}

impl SweepAlgorithm {
    pub fn fixed(name: &str, config: BuilderConfig) -> Self {
        SweepAlgorithm { name: name.to_owned(), config, follows_grid: false }
    }

    pub fn per_lambda(name: &str, config: BuilderConfig) -> Self {
        SweepAlgorithm { name: name.to_owned(), config, follows_grid: true }
    }

    /// `lambda-gbs`, `gbs`, `gbs-uniform`, `lambda-ggbs` or `ggbs`.
    pub fn named(name: &str) -> Result<Self> {
        let one = LambdaRegime::LimitOne;
        Ok(match name {
            "lambda-gbs" => Self::per_lambda(name, BuilderConfig::new(one, Mode::Object)),
            "gbs" => Self::fixed(name, BuilderConfig::gbs()),
            "gbs-uniform" => Self::fixed(name, BuilderConfig::gbs_uniform()),
            "lambda-ggbs" => Self::per_lambda(name, BuilderConfig::new(one, Mode::Group)),
            "ggbs" => Self::fixed(name, BuilderConfig::ggbs()),
            other => return Err(Error::Domain(format!("unknown algorithm `{other}`"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub source: InstanceSource,
    pub lambdas: Vec<LambdaRegime>,
    pub algorithms: Vec<SweepAlgorithm>,
    pub repetitions: usize,
    pub seed: u64,
    /// Cost is measured for identifying this; object-mode trees are pruned
    /// to group-pure leaves when it is `Group`.
    pub evaluation: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub algorithm: String,
    pub lambda: LambdaRegime,
    pub mean_cost: f64,
    pub std_cost: f64,
    /// Repetitions that produced a tree.
    pub repetitions: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn get(&self, algorithm: &str, lambda: LambdaRegime) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm && r.lambda == lambda)
    }

    pub fn mean(&self, algorithm: &str, lambda: LambdaRegime) -> Option<f64> {
        self.get(algorithm, lambda).map(|r| r.mean_cost)
    }

    /// `algorithm,lambda,mean_cost,std_cost,repetitions,failures`, floats in
    /// shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,lambda,mean_cost,std_cost,repetitions,failures\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.algorithm, r.lambda, r.mean_cost, r.std_cost, r.repetitions, r.failures
            );
        }
        out
    }
}

/// Seed of repetition `rep` under master seed `seed`.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    splitmix64(seed ^ splitmix64(rep as u64))
}

fn evaluate(tree: &DecisionTree, inst: &ProblemInstance, mode: Mode, regime: LambdaRegime) -> Result<f64> {
    match mode {
        Mode::Group => cost_direct(&tree.group_pruned(inst), inst, regime),
        Mode::Object => cost_direct(tree, inst, regime),
    }
}

/// One repetition: cost per (algorithm, λ) in row order, `None` when the
/// builder could not separate the instance.
fn repetition(sweep: &Sweep, rep: usize, exec: Execution) -> Result<Vec<Option<f64>>> {
    let seed = repetition_seed(sweep.seed, rep);
    let inst = sweep.source.instance(seed)?;
    let mut out = Vec::with_capacity(sweep.algorithms.len() * sweep.lambdas.len());
    let build = |cfg: BuilderConfig| -> Result<Option<DecisionTree>> {
        let cfg = cfg.with_tiebreak(TieBreak::Seeded(seed));
        match build_tree_with(&inst, &cfg, exec) {
            Ok(t) => Ok(Some(t)),
            Err(Error::NotIdentifiable { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    for alg in &sweep.algorithms {
        let shared = if alg.follows_grid { None } else { Some(build(alg.config)?) };
        for &regime in &sweep.lambdas {
            let tree = match &shared {
                Some(t) => t.clone(),
                None => build(BuilderConfig { regime, ..alg.config })?,
            };
            out.push(match tree {
                Some(t) => Some(evaluate(&t, &inst, sweep.evaluation, regime)?),
                None => None,
            });
        }
    }
    Ok(out)
}

fn validate(sweep: &Sweep) -> Result<()> {
    if sweep.repetitions == 0 {
        return Err(Error::Domain("at least one repetition is required".into()));
    }
    if sweep.lambdas.is_empty() || sweep.algorithms.is_empty() {
        return Err(Error::Domain("the λ grid and the algorithm list must be nonempty".into()));
    }
    if let Some(bad) = sweep.lambdas.iter().find(|r| !r.is_valid()) {
        return Err(Error::Domain(format!("invalid λ {bad}")));
    }
    if sweep.evaluation == Mode::Object {
        if let Some(alg) = sweep.algorithms.iter().find(|a| a.config.mode == Mode::Group) {
            return Err(Error::Domain(format!(
                "{} builds group trees, which cannot be costed for object identification",
                alg.name
            )));
        }
    }
    Ok(())
}

pub fn run_sweep(sweep: &Sweep) -> Result<SweepTable> {
    run_sweep_with(sweep, Execution::default())
}

/// Runs the sweep; the table is identical for both execution policies.
pub fn run_sweep_with(sweep: &Sweep, exec: Execution) -> Result<SweepTable> {
    validate(sweep)?;
    let reps: Vec<usize> = (0..sweep.repetitions).collect();
    // Repetitions fan out; tree building inside each stays sequential.
    let results = map_collect(&reps, exec, |&rep| repetition(sweep, rep, Execution::Sequential))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut cell = 0;
    for alg in &sweep.algorithms {
        for &lambda in &sweep.lambdas {
            let costs: Vec<f64> = results.iter().filter_map(|r| r[cell]).collect();
            let n = costs.len();
            let mean = if n > 0 { costs.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let std = if n > 1 {
                (costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            rows.push(SweepRow {
                algorithm: alg.name.clone(),
                lambda,
                mean_cost: mean,
                std_cost: std,
                repetitions: n,
                failures: sweep.repetitions - n,
            });
            cell += 1;
        }
    }
    Ok(SweepTable { rows })
}
