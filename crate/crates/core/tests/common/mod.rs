//! Reference computations for the integration tests. Everything here is
//! written from the definitions, without calling the library's evaluators.
#![allow(dead_code)]

use querytree::datagen::{random_instance, RandomSpec};
use querytree::{DecisionTree, LambdaRegime, Mode, Node, ProblemInstance};

pub const TOY_ROWS: [&[u8]; 4] = [&[0, 1, 1], &[1, 1, 0], &[0, 1, 0], &[1, 0, 0]];

pub fn toy() -> ProblemInstance {
    ProblemInstance::from_bits(&TOY_ROWS, vec![0.25; 4]).with_labels(vec![1, 1, 1, 2])
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// xorshift64*, enough for picking test cases.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn next(&mut self) -> u64 {
        self.0 ^= self.0 >> 12;
        self.0 ^= self.0 << 25;
        self.0 ^= self.0 >> 27;
        self.0.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

/// Identifiable random instance, labeled with `groups` groups.
pub fn corpus_instance(seed: u64, objects: usize, queries: usize, groups: usize) -> ProblemInstance {
    random_instance(RandomSpec {
        objects,
        queries,
        density: 0.5,
        seed,
        mode: Mode::Object,
        group_count: Some(groups),
    })
    .expect("random instance")
}

/// `(mass, depth)` of every leaf, found by walking each object down the
/// tree by its own responses.
pub fn leaf_depths(tree: &DecisionTree, inst: &ProblemInstance) -> Vec<(f64, usize)> {
    let mut leaves: Vec<(Vec<usize>, f64, usize)> = Vec::new();
    for i in 0..inst.num_objects() {
        let mut node = &tree.root;
        let mut depth = 0;
        while let Node::Split { query, zero, one } = node {
            node = if inst.responses[i][*query] { one } else { zero };
            depth += 1;
        }
        let Node::Leaf { objects } = node else { unreachable!() };
        match leaves.iter_mut().find(|l| &l.0 == objects) {
            Some(l) => l.1 += inst.prior[i],
            None => leaves.push((objects.clone(), inst.prior[i], depth)),
        }
    }
    leaves.into_iter().map(|(_, m, d)| (m, d)).collect()
}

pub fn naive_cost(leaves: &[(f64, usize)], regime: LambdaRegime) -> f64 {
    match regime {
        LambdaRegime::LimitOne => leaves.iter().map(|&(p, d)| p * d as f64).sum(),
        LambdaRegime::Finite(l) => leaves.iter().map(|&(p, d)| p * l.powi(d as i32)).sum::<f64>().ln() / l.ln(),
        LambdaRegime::LimitInfinity => leaves.iter().map(|&(_, d)| d).max().unwrap_or(0) as f64,
    }
}

pub fn naive_tree_cost(tree: &DecisionTree, inst: &ProblemInstance, regime: LambdaRegime) -> f64 {
    naive_cost(&leaf_depths(tree, inst), regime)
}

pub fn group_masses(inst: &ProblemInstance, mode: Mode) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut ids: Vec<u32> = Vec::new();
    for i in 0..inst.num_objects() {
        let g = match (mode, &inst.labels) {
            (Mode::Group, Some(l)) => l[i],
            _ => i as u32,
        };
        match ids.iter().position(|&x| x == g) {
            Some(k) => out[k] += inst.prior[i],
            None => {
                ids.push(g);
                out.push(inst.prior[i]);
            }
        }
    }
    out
}

/// Rényi entropy in bits, Shannon at α = 1.
pub fn naive_renyi(dist: &[f64], alpha: f64) -> f64 {
    let pos = dist.iter().filter(|&&p| p > 0.0);
    if alpha == 1.0 {
        -pos.map(|p| p * p.log2()).sum::<f64>()
    } else {
        pos.map(|p| p.powf(alpha)).sum::<f64>().log2() / (1.0 - alpha)
    }
}

pub fn naive_bound(inst: &ProblemInstance, mode: Mode, regime: LambdaRegime) -> f64 {
    let dist = group_masses(inst, mode);
    match regime {
        LambdaRegime::LimitOne => naive_renyi(&dist, 1.0),
        LambdaRegime::Finite(l) => naive_renyi(&dist, 1.0 / (1.0 + l.log2())),
        LambdaRegime::LimitInfinity => (dist.len() as f64).log2(),
    }
}

fn homogeneous(inst: &ProblemInstance, mode: Mode, set: &[usize]) -> bool {
    match (mode, &inst.labels) {
        (Mode::Group, Some(l)) => set.iter().all(|&o| l[o] == l[set[0]]),
        _ => set.len() == 1,
    }
}

/// A valid tree with uniformly random splitting queries, or `None` if some
/// node cannot be split.
pub fn random_tree(inst: &ProblemInstance, mode: Mode, rng: &mut TestRng) -> Option<DecisionTree> {
    fn grow(inst: &ProblemInstance, mode: Mode, set: Vec<usize>, used: &mut Vec<usize>, rng: &mut TestRng) -> Option<Node> {
        if homogeneous(inst, mode, &set) {
            return Some(Node::leaf(set));
        }
        let options: Vec<usize> = (0..inst.num_queries())
            .filter(|q| !used.contains(q))
            .filter(|&q| {
                let ones = set.iter().filter(|&&o| inst.responses[o][q]).count();
                ones > 0 && ones < set.len()
            })
            .collect();
        if options.is_empty() {
            return None;
        }
        let q = options[rng.below(options.len())];
        let (zero, one): (Vec<usize>, Vec<usize>) = set.iter().partition(|&&o| !inst.responses[o][q]);
        used.push(q);
        let z = grow(inst, mode, zero, used, rng);
        let o = grow(inst, mode, one, used, rng);
        used.pop();
        Some(Node::split(q, z?, o?))
    }
    let root = grow(inst, mode, (0..inst.num_objects()).collect(), &mut Vec::new(), rng)?;
    Some(DecisionTree::new(root, mode))
}

/// Minimum cost over every valid tree, by explicit enumeration. Only for
/// tiny instances.
pub fn brute_force_optimum(inst: &ProblemInstance, mode: Mode, regime: LambdaRegime) -> f64 {
    // each entry: (object, depth) for all objects below the node
    fn all_trees(inst: &ProblemInstance, mode: Mode, set: &[usize], used: &mut Vec<usize>) -> Vec<Vec<(usize, usize)>> {
        if homogeneous(inst, mode, set) {
            return vec![set.iter().map(|&o| (o, 0)).collect()];
        }
        let mut out = Vec::new();
        for q in 0..inst.num_queries() {
            if used.contains(&q) {
                continue;
            }
            let (zero, one): (Vec<usize>, Vec<usize>) = set.iter().partition(|&&o| !inst.responses[o][q]);
            if zero.is_empty() || one.is_empty() {
                continue;
            }
            used.push(q);
            let zs = all_trees(inst, mode, &zero, used);
            let os = all_trees(inst, mode, &one, used);
            used.pop();
            for z in &zs {
                for o in &os {
                    out.push(z.iter().chain(o).map(|&(obj, d)| (obj, d + 1)).collect());
                }
            }
        }
        out
    }
    let all: Vec<usize> = (0..inst.num_objects()).collect();
    all_trees(inst, mode, &all, &mut Vec::new())
        .into_iter()
        .map(|tree| {
            let leaves: Vec<(f64, usize)> = tree.iter().map(|&(o, d)| (inst.prior[o], d)).collect();
            naive_cost(&leaves, regime)
        })
        .fold(f64::INFINITY, f64::min)
}
