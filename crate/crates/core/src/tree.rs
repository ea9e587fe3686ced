//! Binary query trees and their validity checks.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::instance::{Mode, ProblemInstance};

/// One node of a query tree. Serializes as `{"query", "zero", "one"}` for
/// internal nodes and `{"objects"}` for leaves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        query: usize,
        zero: Box<Node>,
        one: Box<Node>,
    },
    Leaf {
        objects: Vec<usize>,
    },
}

impl Node {
    pub fn leaf(objects: Vec<usize>) -> Self {
        Node::Leaf { objects }
    }

    pub fn split(query: usize, zero: Node, one: Node) -> Self {
        Node::Split { query, zero: Box::new(zero), one: Box::new(one) }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    /// Objects of every leaf below this node, in leaf order.
    pub fn objects(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_objects(&mut out);
        out
    }

    fn collect_objects(&self, out: &mut Vec<usize>) {
        match self {
            Node::Leaf { objects } => out.extend_from_slice(objects),
            Node::Split { zero, one, .. } => {
                zero.collect_objects(out);
                one.collect_objects(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: Node,
    pub mode: Mode,
}

/// A leaf reached during a walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafInfo<'a> {
    pub objects: &'a [usize],
    pub depth: usize,
}

/// An internal node reached during a walk, with the object sets that reach
/// it and its two children.
#[derive(Debug, Clone)]
pub struct InternalInfo {
    pub preorder: usize,
    pub depth: usize,
    pub query: usize,
    pub objects: Vec<usize>,
    pub zero: Vec<usize>,
    pub one: Vec<usize>,
}

impl DecisionTree {
    pub fn new(root: Node, mode: Mode) -> Self {
        DecisionTree { root, mode }
    }

    /// Leaves with their depths, left (zero) branch first.
    pub fn leaves(&self) -> Vec<LeafInfo<'_>> {
        fn walk<'a>(node: &'a Node, depth: usize, out: &mut Vec<LeafInfo<'a>>) {
            match node {
                Node::Leaf { objects } => out.push(LeafInfo { objects, depth }),
                Node::Split { zero, one, .. } => {
                    walk(zero, depth + 1, out);
                    walk(one, depth + 1, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, 0, &mut out);
        out
    }

    /// Internal nodes in preorder. `preorder` counts leaves too, so the
    /// indices match a full preorder numbering of the tree.
    pub fn internal_nodes(&self) -> Vec<InternalInfo> {
        fn walk(node: &Node, depth: usize, counter: &mut usize, out: &mut Vec<InternalInfo>) -> Vec<usize> {
            let preorder = *counter;
            *counter += 1;
            match node {
                Node::Leaf { objects } => objects.clone(),
                Node::Split { query, zero, one } => {
                    let slot = out.len();
                    out.push(InternalInfo {
                        preorder,
                        depth,
                        query: *query,
                        objects: Vec::new(),
                        zero: Vec::new(),
                        one: Vec::new(),
                    });
                    let z = walk(zero, depth + 1, counter, out);
                    let o = walk(one, depth + 1, counter, out);
                    let mut all: Vec<usize> = z.iter().chain(o.iter()).copied().collect();
                    all.sort_unstable();
                    let info = &mut out[slot];
                    info.objects = all.clone();
                    info.zero = z;
                    info.one = o;
                    all
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, 0, &mut 0, &mut out);
        out
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn depth(&self) -> usize {
        self.leaves().iter().map(|l| l.depth).max().unwrap_or(0)
    }

    /// Follows an object's own responses from the root. Returns the leaf's
    /// objects, its depth and the queries asked on the way.
    pub fn route(&self, instance: &ProblemInstance, object: usize) -> (&[usize], usize, Vec<usize>) {
        let mut node = &self.root;
        let mut asked = Vec::new();
        loop {
            match node {
                Node::Leaf { objects } => return (objects, asked.len(), asked),
                Node::Split { query, zero, one } => {
                    asked.push(*query);
                    node = if instance.response(object, *query) { one } else { zero };
                }
            }
        }
    }

    /// The group-identification tree obtained by collapsing every subtree
    /// whose objects all share one group into a single leaf.
    pub fn group_pruned(&self, instance: &ProblemInstance) -> DecisionTree {
        fn prune(node: &Node, instance: &ProblemInstance) -> Node {
            let objects = node.objects();
            let mut sorted = objects.clone();
            sorted.sort_unstable();
            if instance.is_homogeneous(Mode::Group, &sorted) {
                return Node::leaf(sorted);
            }
            match node {
                Node::Leaf { .. } => Node::leaf(sorted),
                Node::Split { query, zero, one } => {
                    Node::split(*query, prune(zero, instance), prune(one, instance))
                }
            }
        }
        DecisionTree::new(prune(&self.root, instance), Mode::Group)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.root).expect("tree serialization cannot fail")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.root).expect("tree serialization cannot fail")
    }

    pub fn from_json(json: &str, mode: Mode) -> crate::Result<Self> {
        Ok(DecisionTree::new(serde_json::from_str(json)?, mode))
    }

    /// All invariant violations against the instance (empty = valid).
    pub fn validate(&self, instance: &ProblemInstance) -> Vec<TreeViolation> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        let mut seen = BTreeSet::new();
        self.check(&self.root, instance, &mut path, &mut seen, &mut out);
        for object in 0..instance.num_objects() {
            if !seen.contains(&object) {
                out.push(TreeViolation::MissingObject(object));
            }
        }
        out
    }

    pub fn ensure_valid(&self, instance: &ProblemInstance) -> crate::Result<()> {
        let v = self.validate(instance);
        if v.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::InvalidTree(v))
        }
    }

    // Returns the objects under `node`.
    fn check(
        &self,
        node: &Node,
        instance: &ProblemInstance,
        path: &mut Vec<usize>,
        seen: &mut BTreeSet<usize>,
        out: &mut Vec<TreeViolation>,
    ) -> Vec<usize> {
        match node {
            Node::Leaf { objects } => {
                for &o in objects {
                    if o >= instance.num_objects() {
                        out.push(TreeViolation::UnknownObject(o));
                    } else if !seen.insert(o) {
                        out.push(TreeViolation::DuplicateObject(o));
                    }
                }
                let known: Vec<usize> = objects
                    .iter()
                    .copied()
                    .filter(|&o| o < instance.num_objects())
                    .collect();
                match self.mode {
                    Mode::Object if objects.len() != 1 => {
                        out.push(TreeViolation::LeafNotSingleton(objects.clone()));
                    }
                    Mode::Group if !known.is_empty() && !instance.is_homogeneous(Mode::Group, &known) => {
                        out.push(TreeViolation::LeafMixesGroups(objects.clone()));
                    }
                    _ => {}
                }
                known
            }
            Node::Split { query, zero, one } => {
                let query = *query;
                let in_range = query < instance.num_queries();
                if !in_range {
                    out.push(TreeViolation::UnknownQuery(query));
                }
                if path.contains(&query) {
                    out.push(TreeViolation::RepeatedQuery(query));
                }
                path.push(query);
                let z = self.check(zero, instance, path, seen, out);
                let o = self.check(one, instance, path, seen, out);
                path.pop();
                if z.is_empty() || o.is_empty() {
                    out.push(TreeViolation::EmptyChild { query });
                }
                if in_range {
                    for &obj in &z {
                        if instance.response(obj, query) {
                            out.push(TreeViolation::ResponseMismatch { query, object: obj, expected: false });
                        }
                    }
                    for &obj in &o {
                        if !instance.response(obj, query) {
                            out.push(TreeViolation::ResponseMismatch { query, object: obj, expected: true });
                        }
                    }
                }
                z.into_iter().chain(o).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeViolation {
    UnknownObject(usize),
    UnknownQuery(usize),
    DuplicateObject(usize),
    MissingObject(usize),
    RepeatedQuery(usize),
    EmptyChild { query: usize },
    /// `expected` is the response implied by the object's branch.
    ResponseMismatch { query: usize, object: usize, expected: bool },
    LeafNotSingleton(Vec<usize>),
    LeafMixesGroups(Vec<usize>),
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeViolation::UnknownObject(o) => write!(f, "leaf holds unknown object {o}"),
            TreeViolation::UnknownQuery(q) => write!(f, "node asks unknown query {q}"),
            TreeViolation::DuplicateObject(o) => write!(f, "object {o} appears in more than one leaf"),
            TreeViolation::MissingObject(o) => write!(f, "object {o} reaches no leaf"),
            TreeViolation::RepeatedQuery(q) => write!(f, "query {q} repeated on a root-to-leaf path"),
            TreeViolation::EmptyChild { query } => write!(f, "split on query {query} has an empty child"),
            TreeViolation::ResponseMismatch { query, object, expected } => write!(
                f,
                "object {object} sits in the {} branch of query {query} but responds {}",
                if *expected { "one" } else { "zero" },
                u8::from(!*expected),
            ),
            TreeViolation::LeafNotSingleton(objs) => write!(f, "leaf {objs:?} is not a single object"),
            TreeViolation::LeafMixesGroups(objs) => write!(f, "leaf {objs:?} mixes groups"),
        }
    }
}
