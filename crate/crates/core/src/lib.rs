//! Query-learning decision trees under exponential query cost.
//!
//! The crate builds binary query trees that identify an unknown object (or
//! only its group) from a [`ProblemInstance`], evaluates them under the cost
//! `L_λ = log_λ Σ_j π_j λ^{d_j}`, and ships the pieces needed to check the
//! results: two independent cost evaluators, an exact [`oracle`], instance
//! generators and a repetition sweep harness.
//!
//! ```
//! use querytree::{build_tree, cost_direct, BuilderConfig, LambdaRegime, ProblemInstance};
//!
//! let inst = ProblemInstance::from_bits(
//!     &[&[0, 1, 1], &[1, 1, 0], &[0, 1, 0], &[1, 0, 0]],
//!     vec![0.25; 4],
//! )
//! .with_labels(vec![1, 1, 1, 2]);
//! let tree = build_tree(&inst, &BuilderConfig::ggbs()).unwrap();
//! assert_eq!(cost_direct(&tree, &inst, LambdaRegime::LimitOne).unwrap(), 1.0);
//! ```

pub mod cost;
pub mod datagen;
pub mod entropy;
pub mod error;
pub mod experiment;
pub mod greedy;
pub mod instance;
pub mod io;
pub mod oracle;
pub mod par;
pub mod split;
pub mod tree;

pub use cost::{cost_direct, cost_via_decomposition, decomposition_terms, CostReport, DecompositionTerms, NodeGap};
pub use entropy::{
    alpha_from_lambda, binary_entropy, d_alpha, entropy_bound, renyi_entropy, shannon_entropy, LambdaRegime,
};
pub use error::{Error, Result};
pub use greedy::{
    argmin_queries, build_tree, build_tree_with, choose_query, next_query, BuilderConfig, NextStep, PriorChoice,
    TieBreak,
};
pub use instance::{Identified, Mode, ProblemInstance, Violation};
pub use oracle::{optimal_tree, OracleResult};
pub use par::Execution;
pub use split::{evaluate_split, SplitEvaluation};
pub use tree::{DecisionTree, Node, TreeViolation};
