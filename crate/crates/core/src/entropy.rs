//! Entropies, the λ ↔ α correspondence and the node diversity `D_α`.
//!
//! All entropies are in bits. Exponential quantities are evaluated in the
//! log domain with a max shift so that λ up to 1e9 on deep trees stays finite.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability vector passed to the
/// entropy functions.
pub const DIST_SUM_TOLERANCE: f64 = 1e-9;

/// Which member of the exponential-cost family is being optimized or
/// evaluated.
///
/// The limits are chosen explicitly; a large finite λ is never silently
/// treated as the worst-case regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRegime {
    /// λ → 1: expected number of queries.
    LimitOne,
    /// Finite λ > 1.
    Finite(f64),
    /// λ → ∞: worst-case number of queries.
    LimitInfinity,
}

impl LambdaRegime {
    pub fn finite(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 1.0 {
            Ok(LambdaRegime::Finite(lambda))
        } else {
            Err(Error::Domain(format!("finite lambda must be > 1, got {lambda}")))
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            LambdaRegime::Finite(l) => l.is_finite() && l > 1.0,
            _ => true,
        }
    }

    pub fn alpha(&self) -> f64 {
        alpha_from_lambda(*self)
    }
}

impl fmt::Display for LambdaRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaRegime::LimitOne => f.write_str("1"),
            LambdaRegime::Finite(l) => write!(f, "{l}"),
            LambdaRegime::LimitInfinity => f.write_str("inf"),
        }
    }
}

impl FromStr for LambdaRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "one" => Ok(LambdaRegime::LimitOne),
            "inf" | "infinity" | "∞" => Ok(LambdaRegime::LimitInfinity),
            other => {
                let l: f64 = other
                    .parse()
                    .map_err(|_| Error::Domain(format!("cannot parse lambda `{other}`")))?;
                if l == 1.0 {
                    Ok(LambdaRegime::LimitOne)
                } else {
                    LambdaRegime::finite(l)
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RegimeRepr {
    Number(f64),
    Word(String),
}

impl Serialize for LambdaRegime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LambdaRegime::LimitOne => s.serialize_str("one"),
            LambdaRegime::Finite(l) => s.serialize_f64(*l),
            LambdaRegime::LimitInfinity => s.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaRegime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match RegimeRepr::deserialize(d)? {
            RegimeRepr::Number(1.0) => Ok(LambdaRegime::LimitOne),
            RegimeRepr::Number(l) => LambdaRegime::finite(l).map_err(D::Error::custom),
            RegimeRepr::Word(w) => w.parse().map_err(D::Error::custom),
        }
    }
}

/// `α = 1 / (1 + log₂ λ)`; 1 at the λ → 1 limit and 0 (a marker for the
/// cardinality regime) at λ → ∞.
pub fn alpha_from_lambda(regime: LambdaRegime) -> f64 {
    match regime {
        LambdaRegime::LimitOne => 1.0,
        LambdaRegime::Finite(l) => 1.0 / (1.0 + l.log2()),
        LambdaRegime::LimitInfinity => 0.0,
    }
}

fn check_distribution(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::Domain("empty distribution".into()));
    }
    let mut sum = 0.0;
    for &p in dist {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Domain(format!("invalid probability {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > DIST_SUM_TOLERANCE {
        return Err(Error::Domain(format!("distribution sums to {sum}")));
    }
    Ok(())
}

/// `-Σ p log₂ p` with `0 log 0 = 0`.
pub fn shannon_entropy(dist: &[f64]) -> Result<f64> {
    check_distribution(dist)?;
    Ok(shannon_unchecked(dist))
}

pub(crate) fn shannon_unchecked(dist: &[f64]) -> f64 {
    dist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

/// Entropy of a two-point distribution `(p, 1 - p)`.
pub fn binary_entropy(p: f64) -> f64 {
    let q = 1.0 - p;
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.log2();
    }
    if q > 0.0 {
        h -= q * q.log2();
    }
    h
}

/// Rényi entropy of order α ∈ (0, 1]; α = 1 gives the Shannon entropy.
pub fn renyi_entropy(dist: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    check_distribution(dist)?;
    if alpha == 1.0 {
        return Ok(shannon_unchecked(dist));
    }
    let ln_sum = log_sum_pow(dist, alpha);
    Ok(ln_sum / ((1.0 - alpha) * std::f64::consts::LN_2))
}

/// The Campbell lower bound for a regime: Rényi entropy at the matching α,
/// Shannon entropy at λ → 1 and `log₂` of the number of outcomes at λ → ∞.
pub fn entropy_bound(dist: &[f64], regime: LambdaRegime) -> Result<f64> {
    match regime {
        LambdaRegime::LimitOne => shannon_entropy(dist),
        LambdaRegime::Finite(_) => renyi_entropy(dist, alpha_from_lambda(regime)),
        LambdaRegime::LimitInfinity => {
            check_distribution(dist)?;
            Ok((dist.len() as f64).log2())
        }
    }
}

/// `ln Σ xᵢ^α` over the positive entries, shifted by the largest exponent.
/// Returns `-inf` when no entry is positive.
pub(crate) fn log_sum_pow(values: &[f64], alpha: f64) -> f64 {
    log_sum_exp(values.iter().filter(|&&x| x > 0.0).map(|&x| alpha * x.ln()))
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Unnormalized diversity `(Σᵢ mᵢ^α)^{1/α}` of a node's group masses, which
/// equals `π_{Θ_a} D_α(Θ_a)` and is 0 for a massless node.
pub fn weighted_diversity(masses: &[f64], alpha: f64) -> f64 {
    if alpha == 1.0 {
        return masses.iter().sum();
    }
    (log_sum_pow(masses, alpha) / alpha).exp()
}

/// `D_α` of a node from its per-group masses:
/// `[Σᵢ (mᵢ / Σ m)^α]^{1/α}`, equal to 1 at group-pure nodes.
pub fn d_alpha(masses: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if masses.iter().any(|&m| !m.is_finite() || m < 0.0) {
        return Err(Error::Domain("masses must be finite and non-negative".into()));
    }
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain("node has no mass".into()));
    }
    Ok(d_alpha_unchecked(masses, total, alpha))
}

/// `D_α - 1`, accurate when α is close to 1 and `D_α` is close to 1.
///
/// Uses `Σ pᵢ^α - 1 = Σ pᵢ (pᵢ^{α-1} - 1)` (exact because `Σ pᵢ = 1`) so
/// that no cancellation against 1 happens before the final `expm1`.
pub(crate) fn d_alpha_excess_unchecked(masses: &[f64], total: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        return 0.0;
    }
    let ln_total = total.ln();
    let shares = masses.iter().filter(|&&m| m > 0.0).map(|&m| m.ln() - ln_total);
    let excess: f64 = shares.clone().map(|l| l.exp() * ((alpha - 1.0) * l).exp_m1()).sum();
    let ln_sum = if excess.is_finite() && excess < 1.0 {
        excess.ln_1p()
    } else {
        log_sum_exp(shares.map(|l| alpha * l))
    };
    (ln_sum / alpha).exp_m1()
}

pub(crate) fn d_alpha_unchecked(masses: &[f64], total: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        return 1.0;
    }
    let ln_total = total.ln();
    let ln_sum = log_sum_exp(
        masses
            .iter()
            .filter(|&&m| m > 0.0)
            .map(|&m| alpha * (m.ln() - ln_total)),
    );
    (ln_sum / alpha).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn shannon_examples() {
        assert_eq!(shannon_entropy(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(shannon_entropy(&[1.0]).unwrap(), 0.0);
        assert!(close(shannon_entropy(&[0.75, 0.25]).unwrap(), 0.811278, 1e-6));
        assert!(shannon_entropy(&[0.5, 0.6]).is_err());
        assert!(shannon_entropy(&[1.5, -0.5]).is_err());
        assert_eq!(shannon_entropy(&[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn renyi_examples() {
        assert!(close(renyi_entropy(&[0.25; 4], 0.5).unwrap(), 2.0, 1e-12));
        assert!(close(renyi_entropy(&[0.75, 0.25], 1.0).unwrap(), 0.811278, 1e-6));
        // 2 log2(sqrt(0.75) + sqrt(0.25))
        let expected = 2.0 * (0.75f64.sqrt() + 0.5).log2();
        assert!(close(renyi_entropy(&[0.75, 0.25], 0.5).unwrap(), expected, 1e-12));
        assert!(close(expected, 0.899969, 1e-6));
        assert!(renyi_entropy(&[0.5, 0.5], 0.0).is_err());
        assert!(renyi_entropy(&[0.5, 0.5], 1.5).is_err());
    }

    #[test]
    fn renyi_approaches_shannon() {
        let d = [0.6, 0.3, 0.1];
        let h = shannon_entropy(&d).unwrap();
        let near = renyi_entropy(&d, 1.0 - 1e-7).unwrap();
        assert!(close(h, near, 1e-6));
    }

    #[test]
    fn alpha_mapping() {
        assert_eq!(alpha_from_lambda(LambdaRegime::Finite(2.0)), 0.5);
        assert_eq!(alpha_from_lambda(LambdaRegime::LimitOne), 1.0);
        assert!(close(alpha_from_lambda(LambdaRegime::Finite(4.0)), 1.0 / 3.0, 1e-15));
        assert_eq!(alpha_from_lambda(LambdaRegime::LimitInfinity), 0.0);
    }

    #[test]
    fn d_alpha_examples() {
        assert_eq!(d_alpha(&[0.3], 0.5).unwrap(), 1.0);
        assert!(close(d_alpha(&[0.5, 0.5], 0.5).unwrap(), 2.0, 1e-12));
        let toy = (0.75f64.sqrt() + 0.5).powi(2);
        assert!(close(d_alpha(&[0.75, 0.25], 0.5).unwrap(), toy, 1e-12));
        assert!(close(toy, 1.866025, 1e-6));
        assert!(d_alpha(&[0.0, 0.0], 0.5).is_err());
        // unnormalized masses give the same value
        assert!(close(d_alpha(&[0.15, 0.05], 0.5).unwrap(), toy, 1e-12));
    }

    #[test]
    fn d_alpha_stays_finite_for_huge_lambda() {
        let alpha = alpha_from_lambda(LambdaRegime::Finite(1e9));
        let d = d_alpha(&[1.0 / 12.0; 12], alpha).unwrap();
        // uniform: D = n^{(1-α)/α}
        let expected = 12f64.powf((1.0 - alpha) / alpha);
        assert!(d.is_finite());
        assert!(((d - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn regime_parsing() {
        assert_eq!("1".parse::<LambdaRegime>().unwrap(), LambdaRegime::LimitOne);
        assert_eq!("inf".parse::<LambdaRegime>().unwrap(), LambdaRegime::LimitInfinity);
        assert_eq!("2.5".parse::<LambdaRegime>().unwrap(), LambdaRegime::Finite(2.5));
        assert!("0.5".parse::<LambdaRegime>().is_err());
        let json = serde_json::to_string(&[LambdaRegime::LimitOne, LambdaRegime::Finite(2.0), LambdaRegime::LimitInfinity]).unwrap();
        assert_eq!(json, r#"["one",2.0,"infinity"]"#);
        let back: Vec<LambdaRegime> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[1], LambdaRegime::Finite(2.0));
        assert!(serde_json::from_str::<LambdaRegime>("0.9").is_err());
    }
}
