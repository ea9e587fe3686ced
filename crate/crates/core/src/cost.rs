//! Tree cost under the exponential family, by two independent routes:
//! the leaf-depth sum and the decomposition over internal nodes into an
//! entropy bound plus per-node gap terms.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::entropy::{
    alpha_from_lambda, binary_entropy, entropy_bound, log_sum_exp, weighted_diversity, LambdaRegime,
};
use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::split::GroupMasses;
use crate::tree::DecisionTree;

/// Exponents above this are summed with a max shift instead of directly.
const DIRECT_SUM_LIMIT: f64 = 600.0;

/// `L_λ` of a valid tree from its leaf depths.
///
/// Massless leaves do not contribute to the weighted forms but do count
/// toward the maximum depth at λ → ∞.
pub fn cost_direct(tree: &DecisionTree, instance: &ProblemInstance, regime: LambdaRegime) -> Result<f64> {
    tree.ensure_valid(instance)?;
    Ok(cost_direct_unchecked(tree, instance, regime))
}

pub(crate) fn cost_direct_unchecked(tree: &DecisionTree, instance: &ProblemInstance, regime: LambdaRegime) -> f64 {
    let leaves: Vec<(f64, usize)> = tree
        .leaves()
        .iter()
        .map(|l| (instance.mass(l.objects), l.depth))
        .collect();
    leaf_cost(&leaves, regime)
}

/// Cost of a set of `(mass, depth)` leaves.
pub(crate) fn leaf_cost(leaves: &[(f64, usize)], regime: LambdaRegime) -> f64 {
    match regime {
        LambdaRegime::LimitOne => leaves.iter().map(|&(p, d)| p * d as f64).sum(),
        LambdaRegime::LimitInfinity => leaves.iter().map(|&(_, d)| d).max().unwrap_or(0) as f64,
        LambdaRegime::Finite(lambda) => {
            let ln_lambda = lambda.ln();
            let max_exp = leaves.iter().map(|&(_, d)| d as f64 * ln_lambda).fold(0.0, f64::max);
            if max_exp <= 1.0 {
                // Σ π λ^d = Σπ + Σ π (λ^d - 1), kept accurate as λ → 1.
                let excess: f64 = leaves
                    .iter()
                    .map(|&(p, d)| p * (d as f64 * ln_lambda).exp_m1())
                    .sum::<f64>()
                    + (leaves.iter().map(|&(p, _)| p).sum::<f64>() - 1.0);
                excess.ln_1p() / ln_lambda
            } else {
                let ln_sum = log_sum_exp(
                    leaves
                        .iter()
                        .filter(|&&(p, _)| p > 0.0)
                        .map(|&(p, d)| p.ln() + d as f64 * ln_lambda),
                );
                ln_sum / ln_lambda
            }
        }
    }
}

/// One internal node's contribution to the decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeGap {
    pub depth: usize,
    pub query: usize,
    pub mass: f64,
    pub gap: f64,
}

/// Cost of a tree by both routes, with the entropy bound and the per-node
/// gap terms keyed by preorder node index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub regime: LambdaRegime,
    pub cost_direct: f64,
    pub cost_decomposed: f64,
    pub entropy_bound: f64,
    pub gap_terms: BTreeMap<usize, NodeGap>,
}

impl CostReport {
    /// Relative disagreement between the two routes, scaled by `max(1, cost)`.
    pub fn discrepancy(&self) -> f64 {
        (self.cost_direct - self.cost_decomposed).abs() / self.cost_direct.abs().max(1.0)
    }
}

struct NodeMasses {
    preorder: usize,
    depth: usize,
    query: usize,
    node: GroupMasses,
    zero: GroupMasses,
    one: GroupMasses,
}

fn node_masses(tree: &DecisionTree, instance: &ProblemInstance) -> Vec<NodeMasses> {
    let prior = &instance.prior;
    tree.internal_nodes()
        .into_iter()
        .map(|info| NodeMasses {
            preorder: info.preorder,
            depth: info.depth,
            query: info.query,
            node: GroupMasses::of(instance, tree.mode, prior, &info.objects),
            zero: GroupMasses::of(instance, tree.mode, prior, &info.zero),
            one: GroupMasses::of(instance, tree.mode, prior, &info.one),
        })
        .collect()
}

fn total(g: &GroupMasses) -> f64 {
    g.masses.iter().sum()
}

/// `L_λ` assembled from the entropy bound and the per-node gap terms.
///
/// At λ → 1 this is `H(Π_y) + Σ π_a [1 - H(ρ_a) + Σ_i (π_a^i/π_a) H(ρ_a^i)]`;
/// for finite λ it is `log_λ(λ^{H_α} + Σ gap_a)` with
/// `gap_a = π_a (λ-1) λ^{d_a} - π_a D_α(a) + π_l D_α(l) + π_r D_α(r)`.
/// The decomposition has no λ → ∞ form.
pub fn cost_via_decomposition(
    tree: &DecisionTree,
    instance: &ProblemInstance,
    regime: LambdaRegime,
) -> Result<CostReport> {
    if regime == LambdaRegime::LimitInfinity {
        return Err(Error::UnsupportedRegime(regime.to_string()));
    }
    tree.ensure_valid(instance)?;
    let dist = instance.group_distribution(tree.mode);
    let bound = entropy_bound(&dist, regime)?;
    let nodes = node_masses(tree, instance);
    let mut gap_terms = BTreeMap::new();

    let cost_decomposed = match regime {
        LambdaRegime::LimitOne => {
            let mut cost = bound;
            for n in &nodes {
                let mass = total(&n.node);
                let gap = if mass > 0.0 {
                    let rho = total(&n.zero).max(total(&n.one)) / mass;
                    let within: f64 = n
                        .node
                        .groups
                        .iter()
                        .zip(&n.node.masses)
                        .filter(|&(_, &m)| m > 0.0)
                        .map(|(&g, &m)| {
                            let rho_g = n.zero.mass_of(g).max(n.one.mass_of(g)) / m;
                            m / mass * binary_entropy(rho_g)
                        })
                        .sum();
                    mass * (1.0 - binary_entropy(rho) + within)
                } else {
                    0.0
                };
                cost += gap;
                gap_terms.insert(n.preorder, NodeGap { depth: n.depth, query: n.query, mass, gap });
            }
            cost
        }
        LambdaRegime::Finite(lambda) => {
            let alpha = alpha_from_lambda(regime);
            let ln_lambda = lambda.ln();
            // Each gap is kept as signed log-magnitude terms so that the total
            // can be shifted when λ^{d_a} would overflow.
            let mut terms: Vec<(f64, f64)> = Vec::new();
            for n in &nodes {
                let mass = total(&n.node);
                let mut node_terms = Vec::with_capacity(4);
                if mass > 0.0 {
                    node_terms.push((1.0, (lambda - 1.0).ln() + n.depth as f64 * ln_lambda + mass.ln()));
                }
                for (sign, g) in [(-1.0, &n.node), (1.0, &n.zero), (1.0, &n.one)] {
                    let w = weighted_diversity(&g.masses, alpha);
                    if w > 0.0 {
                        node_terms.push((sign, w.ln()));
                    }
                }
                let gap = signed_sum(&node_terms);
                gap_terms.insert(n.preorder, NodeGap { depth: n.depth, query: n.query, mass, gap });
                terms.extend(node_terms);
            }
            let bound_exp = bound * ln_lambda;
            let shift = terms.iter().map(|&(_, l)| l).fold(bound_exp, f64::max);
            if shift <= DIRECT_SUM_LIMIT {
                // λ^L - 1 = (λ^{H_α} - 1) + Σ gaps
                let excess = bound_exp.exp_m1() + signed_sum(&terms);
                excess.ln_1p() / ln_lambda
            } else {
                let scaled: f64 = (bound_exp - shift).exp()
                    + terms.iter().map(|&(s, l)| s * (l - shift).exp()).sum::<f64>();
                (shift + scaled.ln()) / ln_lambda
            }
        }
        LambdaRegime::LimitInfinity => unreachable!(),
    };

    Ok(CostReport {
        regime,
        cost_direct: cost_direct_unchecked(tree, instance, regime),
        cost_decomposed,
        entropy_bound: bound,
        gap_terms,
    })
}

fn signed_sum(terms: &[(f64, f64)]) -> f64 {
    terms.iter().map(|&(s, l)| s * l.exp()).sum()
}

/// The two auxiliary quantities of the decomposition and their per-node
/// contributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionTerms {
    pub lambda: f64,
    /// `(Σ_j π_j λ^{d_j} - 1) / (λ - 1)`, from the leaves.
    pub l_tilde: f64,
    /// `1 - 1 / (Σ_i π_i^α)^{1/α}` over the group distribution.
    pub h_tilde: f64,
    /// `(Σ_i π_i^α)^{1/α}`.
    pub group_norm: f64,
    /// `λ^{d_a} π_a` per internal node, by preorder index.
    pub l_terms: BTreeMap<usize, f64>,
    /// `π_a D_α(a) - π_l D_α(l) - π_r D_α(r)` per internal node.
    pub h_terms: BTreeMap<usize, f64>,
}

impl DecompositionTerms {
    pub fn l_terms_sum(&self) -> f64 {
        self.l_terms.values().sum()
    }

    pub fn h_terms_sum(&self) -> f64 {
        self.h_terms.values().sum()
    }

    /// Relative error of `L̃ = Σ λ^{d_a} π_a`.
    pub fn l_identity_error(&self) -> f64 {
        (self.l_tilde - self.l_terms_sum()).abs() / self.l_tilde.abs().max(1.0)
    }

    /// Relative error of `H̃ (Σ π_i^α)^{1/α} = Σ h_a`.
    pub fn h_identity_error(&self) -> f64 {
        let lhs = self.h_tilde * self.group_norm;
        (lhs - self.h_terms_sum()).abs() / lhs.abs().max(1.0)
    }
}

pub fn decomposition_terms(
    tree: &DecisionTree,
    instance: &ProblemInstance,
    regime: LambdaRegime,
) -> Result<DecompositionTerms> {
    let LambdaRegime::Finite(lambda) = regime else {
        return Err(Error::UnsupportedRegime(regime.to_string()));
    };
    tree.ensure_valid(instance)?;
    let alpha = alpha_from_lambda(regime);
    let ln_lambda = lambda.ln();

    let leaves = tree.leaves();
    let mass_sum: f64 = leaves.iter().map(|l| instance.mass(l.objects)).sum();
    let excess: f64 = leaves
        .iter()
        .map(|l| instance.mass(l.objects) * (l.depth as f64 * ln_lambda).exp_m1())
        .sum::<f64>()
        + (mass_sum - 1.0);
    let l_tilde = excess / (lambda - 1.0);

    let group_norm = weighted_diversity(&instance.group_distribution(tree.mode), alpha);
    let h_tilde = 1.0 - 1.0 / group_norm;

    let mut l_terms = BTreeMap::new();
    let mut h_terms = BTreeMap::new();
    for n in node_masses(tree, instance) {
        let mass = total(&n.node);
        l_terms.insert(n.preorder, (n.depth as f64 * ln_lambda).exp() * mass);
        let w = |g: &GroupMasses| weighted_diversity(&g.masses, alpha);
        h_terms.insert(n.preorder, w(&n.node) - w(&n.zero) - w(&n.one));
    }
    Ok(DecompositionTerms { lambda, l_tilde, h_tilde, group_norm, l_terms, h_terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::shannon_entropy;
    use crate::instance::tests::toy;
    use crate::instance::Mode;
    use crate::tree::tests::fig2_tree;
    use crate::tree::Node;

    fn depth_one_group_tree() -> DecisionTree {
        DecisionTree::new(Node::split(1, Node::leaf(vec![3]), Node::leaf(vec![0, 1, 2])), Mode::Group)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn single_leaf_costs_zero() {
        let inst = ProblemInstance::from_bits(&[&[0]], vec![1.0]);
        let tree = DecisionTree::new(Node::leaf(vec![0]), Mode::Object);
        for regime in [LambdaRegime::LimitOne, LambdaRegime::Finite(3.0), LambdaRegime::LimitInfinity] {
            assert_eq!(cost_direct(&tree, &inst, regime).unwrap(), 0.0);
        }
    }

    #[test]
    fn fig2_costs() {
        let t = toy();
        assert!(close(cost_direct(&fig2_tree(), &t, LambdaRegime::LimitOne).unwrap(), 1.5));
        // Σ π 2^d = 0.5·2 + 0.25·4 + 0.25·4 = 3
        let l2 = cost_direct(&fig2_tree(), &t, LambdaRegime::Finite(2.0)).unwrap();
        assert!(close(l2, 3f64.log2()));
        assert!((l2 - 1.584963).abs() < 1e-6);
        assert_eq!(cost_direct(&fig2_tree(), &t, LambdaRegime::LimitInfinity).unwrap(), 2.0);
    }

    #[test]
    fn depth_one_costs_one_for_every_lambda() {
        let t = toy();
        for lambda in [1.01, 1.5, 2.0, 10.0, 1e9] {
            let c = cost_direct(&depth_one_group_tree(), &t, LambdaRegime::Finite(lambda)).unwrap();
            assert!(close(c, 1.0), "lambda {lambda}: {c}");
        }
    }

    #[test]
    fn invalid_tree_is_rejected() {
        let t = toy();
        let tree = DecisionTree::new(Node::leaf(vec![0, 1, 2, 3]), Mode::Group);
        assert!(matches!(cost_direct(&tree, &t, LambdaRegime::LimitOne), Err(Error::InvalidTree(_))));
    }

    #[test]
    fn depth_one_decomposition_at_limit_one() {
        let t = toy();
        let r = cost_via_decomposition(&depth_one_group_tree(), &t, LambdaRegime::LimitOne).unwrap();
        assert!(close(r.entropy_bound, shannon_entropy(&[0.75, 0.25]).unwrap()));
        assert!((r.entropy_bound - 0.811278).abs() < 1e-6);
        assert_eq!(r.gap_terms.len(), 1);
        assert!(close(r.gap_terms[&0].gap, 1.0 - binary_entropy(0.75)));
        assert!(close(r.cost_decomposed, 1.0));
        assert!(close(r.cost_direct, 1.0));
    }

    #[test]
    fn balanced_tree_has_no_gap() {
        let inst = ProblemInstance::from_bits(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]], vec![0.25; 4]);
        let tree = DecisionTree::new(
            Node::split(
                0,
                Node::split(1, Node::leaf(vec![0]), Node::leaf(vec![1])),
                Node::split(1, Node::leaf(vec![2]), Node::leaf(vec![3])),
            ),
            Mode::Object,
        );
        let r = cost_via_decomposition(&tree, &inst, LambdaRegime::LimitOne).unwrap();
        assert!(close(r.entropy_bound, 2.0));
        assert!(r.gap_terms.values().all(|g| g.gap.abs() < 1e-15));
        assert!(close(r.cost_decomposed, 2.0));
    }

    #[test]
    fn fig2_decomposition_at_lambda_two() {
        let r = cost_via_decomposition(&fig2_tree(), &toy(), LambdaRegime::Finite(2.0)).unwrap();
        assert!(close(r.cost_decomposed, 3f64.log2()));
        assert!(close(r.cost_direct, r.cost_decomposed));
        assert!(r.cost_direct >= r.entropy_bound - 1e-9);
    }

    #[test]
    fn decomposition_rejects_worst_case() {
        let err = cost_via_decomposition(&fig2_tree(), &toy(), LambdaRegime::LimitInfinity).unwrap_err();
        assert!(matches!(err, Error::UnsupportedRegime(_)));
        assert!(decomposition_terms(&fig2_tree(), &toy(), LambdaRegime::LimitOne).is_err());
    }

    #[test]
    fn lemma_terms_on_toy_trees() {
        let t = toy();
        let d1 = decomposition_terms(&depth_one_group_tree(), &t, LambdaRegime::Finite(2.0)).unwrap();
        assert!(close(d1.l_tilde, 1.0));
        assert_eq!(d1.l_terms.values().copied().collect::<Vec<_>>(), vec![1.0]);

        let d2 = decomposition_terms(&fig2_tree(), &t, LambdaRegime::Finite(2.0)).unwrap();
        assert!(close(d2.l_tilde, 2.0));
        assert!(close(d2.l_terms[&0], 1.0));
        assert!(close(d2.l_terms[&2], 1.0));
        assert!(d2.l_identity_error() < 1e-12);
        assert!(d2.h_identity_error() < 1e-12);
    }

    #[test]
    fn single_group_has_zero_h_tilde() {
        let mut t = toy();
        t.labels = Some(vec![1; 4]);
        let tree = DecisionTree::new(Node::split(0, Node::leaf(vec![0, 2]), Node::leaf(vec![1, 3])), Mode::Group);
        let d = decomposition_terms(&tree, &t, LambdaRegime::Finite(3.0)).unwrap();
        assert!(d.h_tilde.abs() < 1e-15);
        assert!(d.h_terms_sum().abs() < 1e-15);
    }

    #[test]
    fn report_serializes_with_preorder_keys() {
        let r = cost_via_decomposition(&fig2_tree(), &toy(), LambdaRegime::LimitOne).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert!(v["gap_terms"]["0"].is_object());
        assert!(v["gap_terms"]["2"].is_object());
        assert_eq!(v["regime"], "one");
    }
}
