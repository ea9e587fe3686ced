//! Problem instances: a binary response matrix, a prior over objects and
//! optional group labels.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Tolerance on the prior's total mass.
pub const PRIOR_SUM_TOLERANCE: f64 = 1e-12;

/// What a tree has to determine about the unknown object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The object itself.
    Object,
    /// Only the group label of the object.
    Group,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Object => f.write_str("object"),
            Mode::Group => f.write_str("group"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "object" => Ok(Mode::Object),
            "group" => Ok(Mode::Group),
            other => Err(format!("unknown mode `{other}` (expected object|group)")),
        }
    }
}

/// The result of a finished identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "id")]
pub enum Identified {
    Object(usize),
    /// 1-based group id.
    Group(u32),
}

/// A query learning problem.
///
/// `responses[i][j]` is true iff object `i` belongs to query `j`. Group ids
/// are 1-based; an instance without labels behaves as if every object were
/// its own group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub responses: Vec<Vec<bool>>,
    pub prior: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_names: Option<Vec<String>>,
    /// Original label strings, indexed by `group id - 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_names: Option<Vec<String>>,
}

/// A single broken instance invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    NoQueries,
    RowLength { object: usize, expected: usize, found: usize },
    PriorLength { expected: usize, found: usize },
    NegativePrior { object: usize, value: f64 },
    NonFinitePrior { object: usize },
    PriorSum(f64),
    LabelsLength { expected: usize, found: usize },
    ZeroGroupId { object: usize },
    UnusedGroup(u32),
    NamesLength { what: &'static str, expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "instance has no objects"),
            Violation::NoQueries => write!(f, "instance has no queries"),
            Violation::RowLength { object, expected, found } => write!(
                f,
                "row {object} has {found} responses, expected {expected}"
            ),
            Violation::PriorLength { expected, found } => {
                write!(f, "prior has {found} entries, expected {expected}")
            }
            Violation::NegativePrior { object, value } => {
                write!(f, "prior of object {object} is negative ({value})")
            }
            Violation::NonFinitePrior { object } => {
                write!(f, "prior of object {object} is not finite")
            }
            Violation::PriorSum(sum) => write!(f, "prior sums to {sum}"),
            Violation::LabelsLength { expected, found } => {
                write!(f, "labels have {found} entries, expected {expected}")
            }
            Violation::ZeroGroupId { object } => {
                write!(f, "object {object} has group id 0 (ids start at 1)")
            }
            Violation::UnusedGroup(id) => write!(f, "group id {id} unused"),
            Violation::NamesLength { what, expected, found } => {
                write!(f, "{what} names have {found} entries, expected {expected}")
            }
        }
    }
}

impl ProblemInstance {
    /// Builds an unlabeled instance. Nothing is checked; see [`validate`](Self::validate).
    pub fn new(responses: Vec<Vec<bool>>, prior: Vec<f64>) -> Self {
        ProblemInstance {
            responses,
            prior,
            labels: None,
            object_names: None,
            query_names: None,
            group_names: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Convenience constructor from 0/1 rows.
    pub fn from_bits(rows: &[&[u8]], prior: Vec<f64>) -> Self {
        let responses = rows
            .iter()
            .map(|row| row.iter().map(|&b| b != 0).collect())
            .collect();
        Self::new(responses, prior)
    }

    pub fn num_objects(&self) -> usize {
        self.responses.len()
    }

    pub fn num_queries(&self) -> usize {
        self.responses.first().map_or(0, Vec::len)
    }

    #[inline]
    pub fn response(&self, object: usize, query: usize) -> bool {
        self.responses[object][query]
    }

    /// Number of groups `m` for the mode (`M` in object mode).
    pub fn num_groups(&self, mode: Mode) -> usize {
        match (mode, &self.labels) {
            (Mode::Group, Some(labels)) => labels.iter().copied().max().unwrap_or(0) as usize,
            _ => self.num_objects(),
        }
    }

    /// 0-based group index of an object under the mode.
    #[inline]
    pub fn group_index(&self, mode: Mode, object: usize) -> usize {
        match (mode, &self.labels) {
            (Mode::Group, Some(labels)) => labels[object] as usize - 1,
            _ => object,
        }
    }

    /// What reaching a homogeneous set identifies.
    pub fn identified(&self, mode: Mode, object: usize) -> Identified {
        match mode {
            Mode::Object => Identified::Object(object),
            Mode::Group => Identified::Group(self.group_index(mode, object) as u32 + 1),
        }
    }

    /// True when every object of the set falls in one group (one object in
    /// object mode). Empty sets are not homogeneous.
    pub fn is_homogeneous(&self, mode: Mode, objects: &[usize]) -> bool {
        match objects.split_first() {
            None => false,
            Some((&first, rest)) => {
                let g = self.group_index(mode, first);
                rest.iter().all(|&o| self.group_index(mode, o) == g)
            }
        }
    }

    pub fn mass(&self, objects: &[usize]) -> f64 {
        objects.iter().map(|&o| self.prior[o]).sum()
    }

    /// Prior mass of each group, `Π_y` (the prior itself in object mode).
    pub fn group_distribution(&self, mode: Mode) -> Vec<f64> {
        let mut masses = vec![0.0; self.num_groups(mode)];
        for (object, &p) in self.prior.iter().enumerate() {
            masses[self.group_index(mode, object)] += p;
        }
        masses
    }

    /// Splits `objects` by a query column into (responds 0, responds 1).
    pub fn split(&self, objects: &[usize], query: usize) -> (Vec<usize>, Vec<usize>) {
        objects.iter().partition(|&&o| !self.response(o, query))
    }

    pub fn all_objects(&self) -> Vec<usize> {
        (0..self.num_objects()).collect()
    }

    pub fn object_name(&self, object: usize) -> String {
        self.object_names
            .as_ref()
            .and_then(|n| n.get(object).cloned())
            .unwrap_or_else(|| format!("theta_{}", object + 1))
    }

    pub fn query_name(&self, query: usize) -> String {
        self.query_names
            .as_ref()
            .and_then(|n| n.get(query).cloned())
            .unwrap_or_else(|| format!("q_{}", query + 1))
    }

    /// A copy with the prior replaced by the uniform distribution.
    pub fn with_uniform_prior(&self) -> Self {
        let m = self.num_objects();
        let mut out = self.clone();
        out.prior = vec![1.0 / m as f64; m];
        out
    }

    /// All invariant violations; an empty list means the instance is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let m = self.num_objects();
        let n = self.num_queries();
        if m == 0 {
            out.push(Violation::Empty);
        }
        if m > 0 && n == 0 {
            out.push(Violation::NoQueries);
        }
        for (object, row) in self.responses.iter().enumerate() {
            if row.len() != n {
                out.push(Violation::RowLength { object, expected: n, found: row.len() });
            }
        }
        if self.prior.len() != m {
            out.push(Violation::PriorLength { expected: m, found: self.prior.len() });
        }
        let mut sum = 0.0;
        for (object, &p) in self.prior.iter().enumerate() {
            if !p.is_finite() {
                out.push(Violation::NonFinitePrior { object });
            } else if p < 0.0 {
                out.push(Violation::NegativePrior { object, value: p });
            }
            sum += p;
        }
        if m > 0 && (sum - 1.0).abs() > PRIOR_SUM_TOLERANCE {
            out.push(Violation::PriorSum(sum));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != m {
                out.push(Violation::LabelsLength { expected: m, found: labels.len() });
            }
            let max = labels.iter().copied().max().unwrap_or(0);
            let mut used = vec![false; max as usize + 1];
            for (object, &id) in labels.iter().enumerate() {
                if id == 0 {
                    out.push(Violation::ZeroGroupId { object });
                }
                used[id as usize] = true;
            }
            for id in 1..=max {
                if !used[id as usize] {
                    out.push(Violation::UnusedGroup(id));
                }
            }
        }
        let names = [
            ("object", self.object_names.as_ref().map(Vec::len), m),
            ("query", self.query_names.as_ref().map(Vec::len), n),
        ];
        for (what, found, expected) in names {
            if let Some(found) = found {
                if found != expected {
                    out.push(Violation::NamesLength { what, expected, found });
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// `Ok` when all violations are absent, otherwise the full list.
    pub fn ensure_valid(&self) -> crate::Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::InvalidInstance(v))
        }
    }

    /// Checks that every pair of objects that must be told apart differs in
    /// at least one query column. Returns the first offending pair otherwise.
    pub fn check_identifiability(&self, mode: Mode) -> Result<(), (usize, usize)> {
        let m = self.num_objects();
        for a in 0..m {
            for b in a + 1..m {
                if self.group_index(mode, a) != self.group_index(mode, b)
                    && self.responses[a] == self.responses[b]
                {
                    return Err((a, b));
                }
            }
        }
        Ok(())
    }
}
