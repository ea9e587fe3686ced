//! Instance generators.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`) seeded through
//! `SeedableRng::seed_from_u64`. Only raw `next_u64` outputs are consumed:
//! an index below `n` is `(x * n) >> 64` on 128-bit integers and a unit
//! real is `(x >> 11) * 2^-53`, so generated instances are reproducible
//! byte for byte from the seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{Mode, ProblemInstance};

pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

/// Seeded portable generator used by every routine in this module.
#[derive(Debug, Clone)]
pub struct Generator(ChaCha8Rng);

impl Generator {
    pub fn new(seed: u64) -> Self {
        Generator(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Uniform real in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.index(i + 1);
            p.swap(i, j);
        }
        p
    }

    /// A point drawn uniformly from the probability simplex.
    pub fn simplex(&mut self, n: usize) -> Vec<f64> {
        let e: Vec<f64> = (0..n).map(|_| -(1.0 - self.unit()).ln()).collect();
        let total: f64 = e.iter().sum();
        if total > 0.0 {
            e.iter().map(|x| x / total).collect()
        } else {
            vec![1.0 / n as f64; n]
        }
    }
}

/// Normalized Zipf weights `k^{-β} / Σ i^{-β}` for ranks `k = 1..=m`.
pub fn zipf_weights(m: usize, beta: f64) -> Result<Vec<f64>> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::Domain(format!("zipf exponent must be >= 0, got {beta}")));
    }
    if m == 0 {
        return Err(Error::Domain("zipf prior needs at least one object".into()));
    }
    let raw: Vec<f64> = (1..=m).map(|k| (k as f64).powf(-beta)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Zipf prior over `m` objects after a seeded random permutation:
/// object `perm[k]` gets the weight of rank `k + 1`.
pub fn zipf_prior(m: usize, beta: f64, seed: u64) -> Result<(Vec<f64>, Vec<usize>)> {
    let weights = zipf_weights(m, beta)?;
    let perm = Generator::new(seed).permutation(m);
    let mut prior = vec![0.0; m];
    for (rank, &object) in perm.iter().enumerate() {
        prior[object] = weights[rank];
    }
    Ok((prior, perm))
}

/// Two-dimensional active-learning instance. Objects are the threshold
/// classifiers `x_i > c` and `x_i < c` for both axes and `c_count`
/// thresholds evenly spaced in `(-1, 1)`; queries are the midpoints of the
/// `(c_count + 1)²` grid cells the thresholds cut `[-1, 1]²` into, and a
/// classifier responds 1 at a point it labels positive.
///
/// The prior gives Zipf weight `k^{-β}` by rank of `|c|` (ties by object
/// index) and is not permuted. The instance does not depend on `seed`,
/// which is accepted so every generator shares one signature.
pub fn synthetic_classifier_instance(c_count: usize, beta: f64, _seed: u64) -> Result<ProblemInstance> {
    if c_count == 0 {
        return Err(Error::Domain("at least one threshold is required".into()));
    }
    let c = c_count as f64;
    let thresholds: Vec<f64> = (0..c_count).map(|k| -1.0 + (2 * k + 1) as f64 / c).collect();
    let mut bounds = vec![-1.0];
    bounds.extend(&thresholds);
    bounds.push(1.0);
    let centers: Vec<f64> = bounds.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let points: Vec<(f64, f64)> = centers
        .iter()
        .flat_map(|&u| centers.iter().map(move |&v| (u, v)))
        .collect();

    let mut responses = Vec::with_capacity(4 * c_count);
    let mut names = Vec::with_capacity(4 * c_count);
    let mut distance = Vec::with_capacity(4 * c_count);
    for axis in 0..2 {
        for positive in [true, false] {
            for (k, &t) in thresholds.iter().enumerate() {
                let row = points
                    .iter()
                    .map(|&(u, v)| {
                        let x = if axis == 0 { u } else { v };
                        if positive { x > t } else { x < t }
                    })
                    .collect();
                responses.push(row);
                names.push(format!("x{} {} {:.4}", axis + 1, if positive { ">" } else { "<" }, t));
                // |c| scaled to an integer so that ±c tie exactly
                distance.push((2 * k + 1).abs_diff(c_count));
            }
        }
    }

    let mut order: Vec<usize> = (0..responses.len()).collect();
    order.sort_by_key(|&i| (distance[i], i));
    let weights = zipf_weights(order.len(), beta)?;
    let mut prior = vec![0.0; order.len()];
    for (rank, &object) in order.iter().enumerate() {
        prior[object] = weights[rank];
    }

    let mut inst = ProblemInstance::new(responses, prior);
    inst.object_names = Some(names);
    inst.query_names = Some(points.iter().map(|(u, v)| format!("({u:.4},{v:.4})")).collect());
    Ok(inst)
}

/// Options for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub objects: usize,
    pub queries: usize,
    pub density: f64,
    pub seed: u64,
    pub mode: Mode,
    /// Round-robin labels `1, 2, …, g, 1, 2, …` when set.
    pub group_count: Option<usize>,
}

/// Bernoulli(density) response matrix, resampled until identifiable for the
/// mode, with a prior drawn uniformly from the simplex.
pub fn random_instance(spec: RandomSpec) -> Result<ProblemInstance> {
    let RandomSpec { objects, queries, density, seed, mode, group_count } = spec;
    if objects == 0 || queries == 0 {
        return Err(Error::Domain("need at least one object and one query".into()));
    }
    if !(density > 0.0 && density < 1.0) {
        return Err(Error::Domain(format!("density must lie in (0, 1), got {density}")));
    }
    if let Some(g) = group_count {
        if g == 0 || g > objects {
            return Err(Error::Domain(format!("group count {g} must lie in 1..={objects}")));
        }
    }
    let labels = group_count.map(|g| (0..objects).map(|k| (k % g) as u32 + 1).collect::<Vec<_>>());
    let mut rng = Generator::new(seed);
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let responses: Vec<Vec<bool>> = (0..objects)
            .map(|_| (0..queries).map(|_| rng.unit() < density).collect())
            .collect();
        let mut inst = ProblemInstance::new(responses, Vec::new());
        inst.labels = labels.clone();
        if inst.check_identifiability(mode).is_ok() {
            inst.prior = rng.simplex(objects);
            return Ok(inst);
        }
    }
    Err(Error::GenerationFailed { attempts: MAX_GENERATION_ATTEMPTS })
}
