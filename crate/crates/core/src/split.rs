//! Per-node split statistics and the greedy selection criteria.

use serde::Serialize;

use crate::entropy::{alpha_from_lambda, binary_entropy, d_alpha_excess_unchecked, d_alpha_unchecked, LambdaRegime};
use crate::error::{Error, Result};
use crate::instance::{Mode, ProblemInstance};

/// Statistics of splitting a node's object set with one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitEvaluation {
    pub query: usize,
    /// Objects answering 0 (left child).
    pub zero: Vec<usize>,
    /// Objects answering 1 (right child).
    pub one: Vec<usize>,
    pub zero_mass: f64,
    pub one_mass: f64,
    /// `ρ_a`: the heavier child's share of the node mass.
    pub reduction_factor: f64,
    /// `(group index, ρ_a^i)` for every group present at the node.
    pub group_reduction_factors: Vec<(usize, f64)>,
    /// `D_α` of each child; absent for massless children and at λ → ∞.
    pub zero_diversity: Option<f64>,
    pub one_diversity: Option<f64>,
    /// The value minimized by the greedy builders for this regime and mode.
    pub criterion: f64,
    /// A strictly increasing transform of `criterion` on which argmin sets
    /// are formed. For finite λ it is `(C_a - 1) / ln λ`, which stays of
    /// order one as λ → 1 where `C_a` itself flattens to `1 + O(λ - 1)`;
    /// otherwise it equals `criterion`.
    pub ranking: f64,
}

impl SplitEvaluation {
    pub fn node_mass(&self) -> f64 {
        self.zero_mass + self.one_mass
    }
}

/// Per-group masses and object counts of an object set, sorted by group.
#[derive(Debug, Clone, Default)]
pub(crate) struct GroupMasses {
    pub groups: Vec<usize>,
    pub masses: Vec<f64>,
}

impl GroupMasses {
    pub(crate) fn of(instance: &ProblemInstance, mode: Mode, prior: &[f64], objects: &[usize]) -> Self {
        let mut pairs: Vec<(usize, f64)> = objects
            .iter()
            .map(|&o| (instance.group_index(mode, o), prior[o]))
            .collect();
        pairs.sort_unstable_by_key(|&(g, _)| g);
        let mut out = GroupMasses::default();
        for (g, m) in pairs {
            if out.groups.last() == Some(&g) {
                *out.masses.last_mut().unwrap() += m;
            } else {
                out.groups.push(g);
                out.masses.push(m);
            }
        }
        out
    }

    pub(crate) fn count(&self) -> usize {
        self.groups.len()
    }

    pub(crate) fn mass_of(&self, group: usize) -> f64 {
        self.groups
            .binary_search(&group)
            .map_or(0.0, |i| self.masses[i])
    }
}

fn ratio_or_one(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        1.0
    }
}

/// Evaluates splitting `node_objects` with `query` under the instance's own
/// prior.
pub fn evaluate_split(
    instance: &ProblemInstance,
    node_objects: &[usize],
    query: usize,
    regime: LambdaRegime,
    mode: Mode,
) -> Result<SplitEvaluation> {
    evaluate_split_with_prior(instance, &instance.prior, node_objects, query, regime, mode)
}

/// Like [`evaluate_split`] but with an explicit prior vector (used for the
/// uniform-prior override).
pub fn evaluate_split_with_prior(
    instance: &ProblemInstance,
    prior: &[f64],
    node_objects: &[usize],
    query: usize,
    regime: LambdaRegime,
    mode: Mode,
) -> Result<SplitEvaluation> {
    let (zero, one) = instance.split(node_objects, query);
    if zero.is_empty() || one.is_empty() {
        return Err(Error::DegenerateSplit { query });
    }
    let zero_groups = GroupMasses::of(instance, mode, prior, &zero);
    let one_groups = GroupMasses::of(instance, mode, prior, &one);
    let zero_mass: f64 = zero_groups.masses.iter().sum();
    let one_mass: f64 = one_groups.masses.iter().sum();
    let node_mass = zero_mass + one_mass;
    let reduction_factor = ratio_or_one(zero_mass.max(one_mass), node_mass);

    let mut present: Vec<usize> = zero_groups.groups.iter().chain(&one_groups.groups).copied().collect();
    present.sort_unstable();
    present.dedup();
    let group_reduction_factors: Vec<(usize, f64)> = present
        .iter()
        .map(|&g| {
            let (l, r) = (zero_groups.mass_of(g), one_groups.mass_of(g));
            (g, ratio_or_one(l.max(r), l + r))
        })
        .collect();

    let (zero_diversity, one_diversity) = match regime {
        LambdaRegime::LimitInfinity => (None, None),
        _ => {
            let alpha = alpha_from_lambda(regime);
            let d = |g: &GroupMasses, mass: f64| (mass > 0.0).then(|| d_alpha_unchecked(&g.masses, mass, alpha));
            (d(&zero_groups, zero_mass), d(&one_groups, one_mass))
        }
    };

    let criterion = match (regime, mode) {
        (LambdaRegime::Finite(_), _) => {
            if node_mass > 0.0 {
                zero_diversity.map_or(0.0, |d| zero_mass / node_mass * d)
                    + one_diversity.map_or(0.0, |d| one_mass / node_mass * d)
            } else {
                1.0
            }
        }
        (LambdaRegime::LimitOne, Mode::Object) => reduction_factor,
        (LambdaRegime::LimitOne, Mode::Group) => {
            if node_mass > 0.0 {
                let within: f64 = group_reduction_factors
                    .iter()
                    .map(|&(g, rho)| {
                        let share = (zero_groups.mass_of(g) + one_groups.mass_of(g)) / node_mass;
                        share * binary_entropy(rho)
                    })
                    .sum();
                1.0 - binary_entropy(reduction_factor) + within
            } else {
                0.0
            }
        }
        (LambdaRegime::LimitInfinity, Mode::Object) => zero.len().max(one.len()) as f64,
        (LambdaRegime::LimitInfinity, Mode::Group) => zero_groups.count().max(one_groups.count()) as f64,
    };

    let ranking = match regime {
        LambdaRegime::Finite(lambda) if node_mass > 0.0 => {
            let alpha = alpha_from_lambda(regime);
            let excess = |g: &GroupMasses, mass: f64| {
                if mass > 0.0 { mass / node_mass * d_alpha_excess_unchecked(&g.masses, mass, alpha) } else { 0.0 }
            };
            (excess(&zero_groups, zero_mass) + excess(&one_groups, one_mass)) / lambda.ln()
        }
        LambdaRegime::Finite(_) => 0.0,
        _ => criterion,
    };

    Ok(SplitEvaluation {
        query,
        zero,
        one,
        zero_mass,
        one_mass,
        reduction_factor,
        group_reduction_factors,
        zero_diversity,
        one_diversity,
        criterion,
        ranking,
    })
}
