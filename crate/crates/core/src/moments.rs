//! Distributions of random variables and initial states, with exact raw
//! moments and seeded sampling.

use std::collections::HashMap;

use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{parse_rational, q_to_f64, Monomial, Polynomial, VarId, Q};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("invalid rational `{0}`")]
    BadRational(String),
    #[error("uniform requires a < b")]
    EmptyInterval,
    #[error("normal requires sigma2 >= 0")]
    NegativeVariance,
    #[error("discrete probabilities must be positive and sum to 1")]
    BadProbabilities,
}

/// Law of a single real random variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub enum Distribution {
    Normal { mu: Q, sigma2: Q },
    Uniform { a: Q, b: Q },
    Discrete(Vec<(Q, Q)>),
    Constant(Q),
}

impl Distribution {
    pub fn normal(mu: Q, sigma2: Q) -> Result<Self, DistributionError> {
        if sigma2.is_negative() {
            return Err(DistributionError::NegativeVariance);
        }
        Ok(Distribution::Normal { mu, sigma2 })
    }

    pub fn uniform(a: Q, b: Q) -> Result<Self, DistributionError> {
        if a >= b {
            return Err(DistributionError::EmptyInterval);
        }
        Ok(Distribution::Uniform { a, b })
    }

    pub fn discrete(support: Vec<(Q, Q)>) -> Result<Self, DistributionError> {
        let total: Q = support.iter().map(|(_, p)| p.clone()).sum();
        if support.is_empty() || !total.is_one() || support.iter().any(|(_, p)| !p.is_positive()) {
            return Err(DistributionError::BadProbabilities);
        }
        Ok(Distribution::Discrete(support))
    }

    /// `E(r^k)`, exact.
    pub fn raw_moment(&self, k: u32) -> Q {
        match self {
            Distribution::Constant(c) => num_traits::pow(c.clone(), k as usize),
            Distribution::Discrete(s) => s
                .iter()
                .map(|(v, p)| p * num_traits::pow(v.clone(), k as usize))
                .sum(),
            Distribution::Uniform { a, b } => {
                let k1 = k as usize + 1;
                (num_traits::pow(b.clone(), k1) - num_traits::pow(a.clone(), k1))
                    / (Q::from_integer((k1 as i64).into()) * (b - a))
            }
            Distribution::Normal { mu, sigma2 } => {
                let (mut prev, mut cur) = (Q::zero(), Q::one());
                for a in 1..=k {
                    let next = mu * &cur + Q::from_integer(((a - 1) as i64).into()) * sigma2 * &prev;
                    prev = cur;
                    cur = next;
                }
                cur
            }
        }
    }

    pub fn mean(&self) -> Q {
        self.raw_moment(1)
    }

    /// `E|r - E r|` as a float.
    pub fn mean_abs_deviation(&self) -> f64 {
        match self {
            Distribution::Normal { sigma2, .. } => {
                (q_to_f64(sigma2)).sqrt() * (2.0 / std::f64::consts::PI).sqrt()
            }
            _ => q_to_f64(&self.mean_abs_deviation_exact().expect("exact for non-normal")),
        }
    }

    /// `E|r - E r|` when it is rational: every kind except a nondegenerate
    /// normal.
    pub fn mean_abs_deviation_exact(&self) -> Option<Q> {
        match self {
            Distribution::Normal { sigma2, .. } => sigma2.is_zero().then(Q::zero),
            Distribution::Constant(_) => Some(Q::zero()),
            Distribution::Uniform { a, b } => Some((b - a) / Q::from_integer(4.into())),
            Distribution::Discrete(s) => {
                let m = self.mean();
                Some(s.iter().map(|(v, p)| p * (v - &m).abs()).sum())
            }
        }
    }

    /// Largest value in the support, if bounded.
    pub fn sup(&self) -> Option<Q> {
        match self {
            Distribution::Normal { sigma2, mu } => sigma2.is_zero().then(|| mu.clone()),
            Distribution::Uniform { b, .. } => Some(b.clone()),
            Distribution::Discrete(s) => s.iter().map(|(v, _)| v.clone()).max(),
            Distribution::Constant(c) => Some(c.clone()),
        }
    }

    /// Smallest value in the support, if bounded.
    pub fn inf(&self) -> Option<Q> {
        match self {
            Distribution::Normal { sigma2, mu } => sigma2.is_zero().then(|| mu.clone()),
            Distribution::Uniform { a, .. } => Some(a.clone()),
            Distribution::Discrete(s) => s.iter().map(|(v, _)| v.clone()).min(),
            Distribution::Constant(c) => Some(c.clone()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Constant(c) => q_to_f64(c),
            Distribution::Normal { mu, sigma2 } => {
                let sd = q_to_f64(sigma2).sqrt();
                if sd == 0.0 {
                    q_to_f64(mu)
                } else {
                    Normal::new(q_to_f64(mu), sd).expect("valid normal").sample(rng)
                }
            }
            Distribution::Uniform { a, b } => {
                let (a, b) = (q_to_f64(a), q_to_f64(b));
                a + (b - a) * rng.random::<f64>()
            }
            Distribution::Discrete(s) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in s {
                    acc += q_to_f64(p);
                    if u < acc {
                        return q_to_f64(v);
                    }
                }
                q_to_f64(&s.last().expect("non-empty support").0)
            }
        }
    }

    /// Draws an exact rational. Continuous kinds are rounded through `f64`;
    /// discrete and constant draws are exact support points.
    pub fn sample_exact<R: Rng + ?Sized>(&self, rng: &mut R) -> Q {
        match self {
            Distribution::Constant(c) => c.clone(),
            Distribution::Discrete(s) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in s {
                    acc += q_to_f64(p);
                    if u < acc {
                        return v.clone();
                    }
                }
                s.last().expect("non-empty support").0.clone()
            }
            _ => crate::poly::q_from_f64(self.sample(rng)),
        }
    }
}

/// Replaces every power of a variable in `laws` by the corresponding raw
/// moment. Variables are assumed independent, so mixed monomials factor.
pub fn replace_moments(p: &Polynomial, laws: &HashMap<VarId, &Distribution>) -> Polynomial {
    let mut out = Polynomial::zero();
    for (m, c) in p.terms() {
        let mut coef = c.clone();
        let mut kept = Vec::new();
        for &(v, e) in m.factors() {
            match laws.get(&v) {
                Some(d) => coef *= d.raw_moment(e),
                None => kept.push((v, e)),
            }
        }
        out.add_term(Monomial::from_pairs(kept), coef);
    }
    out
}

/// Independent per-variable laws of the initial state `X0`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialDistribution {
    per_var: Vec<Distribution>,
}

impl InitialDistribution {
    pub fn new(per_var: Vec<Distribution>) -> Self {
        Self { per_var }
    }

    pub fn point(values: Vec<Q>) -> Self {
        Self::new(values.into_iter().map(Distribution::Constant).collect())
    }

    pub fn laws(&self) -> &[Distribution] {
        &self.per_var
    }

    pub fn law(&self, v: VarId) -> &Distribution {
        &self.per_var[v as usize]
    }

    /// `E(p(X0))` over variables `0..n`; other variables are left symbolic.
    pub fn expect(&self, p: &Polynomial) -> Polynomial {
        let laws = self
            .per_var
            .iter()
            .enumerate()
            .map(|(i, d)| (i as VarId, d))
            .collect();
        replace_moments(p, &laws)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.per_var.iter().map(|d| d.sample(rng)).collect()
    }

    pub fn sample_exact<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Q> {
        self.per_var.iter().map(|d| d.sample_exact(rng)).collect()
    }
}

/// A rational written as a JSON string (`"1/3"`, `"0.05"`) or number.
#[derive(Clone, Debug, PartialEq)]
pub struct RatText(pub Q);

impl Serialize for RatText {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for RatText {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let text = match &v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            _ => return Err(serde::de::Error::custom("expected rational string or number")),
        };
        parse_rational(&text)
            .map(RatText)
            .map_err(|_| serde::de::Error::custom(DistributionError::BadRational(text)))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DiscretePoint {
    value: RatText,
    p: RatText,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawDistribution {
    Normal { mu: RatText, sigma2: RatText },
    Uniform { a: RatText, b: RatText },
    Discrete { support: Vec<DiscretePoint> },
    Constant { value: RatText },
}

impl TryFrom<RawDistribution> for Distribution {
    type Error = DistributionError;
    fn try_from(r: RawDistribution) -> Result<Self, Self::Error> {
        match r {
            RawDistribution::Normal { mu, sigma2 } => Distribution::normal(mu.0, sigma2.0),
            RawDistribution::Uniform { a, b } => Distribution::uniform(a.0, b.0),
            RawDistribution::Discrete { support } => {
                Distribution::discrete(support.into_iter().map(|d| (d.value.0, d.p.0)).collect())
            }
            RawDistribution::Constant { value } => Ok(Distribution::Constant(value.0)),
        }
    }
}

impl From<Distribution> for RawDistribution {
    fn from(d: Distribution) -> Self {
        match d {
            Distribution::Normal { mu, sigma2 } => RawDistribution::Normal {
                mu: RatText(mu),
                sigma2: RatText(sigma2),
            },
            Distribution::Uniform { a, b } => RawDistribution::Uniform {
                a: RatText(a),
                b: RatText(b),
            },
            Distribution::Discrete(s) => RawDistribution::Discrete {
                support: s
                    .into_iter()
                    .map(|(v, p)| DiscretePoint {
                        value: RatText(v),
                        p: RatText(p),
                    })
                    .collect(),
            },
            Distribution::Constant(c) => RawDistribution::Constant { value: RatText(c) },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{q, qi};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_kinds() -> Vec<Distribution> {
        vec![
            Distribution::normal(qi(-3), qi(1)).unwrap(),
            Distribution::normal(q(1, 2), qi(2)).unwrap(),
            Distribution::uniform(q(-1, 10), q(1, 5)).unwrap(),
            Distribution::uniform(qi(0), qi(10)).unwrap(),
            Distribution::discrete(vec![(qi(-1), q(1, 2)), (qi(1), q(1, 2))]).unwrap(),
            Distribution::discrete(vec![(qi(0), q(1, 3)), (qi(2), q(2, 3))]).unwrap(),
            Distribution::Constant(qi(5)),
        ]
    }

    #[test]
    fn uniform_first_moment() {
        let d = Distribution::uniform(q(-1, 10), q(1, 5)).unwrap();
        assert_eq!(d.raw_moment(1), q(1, 20));
    }

    #[test]
    fn zeroth_moment_is_one() {
        for d in all_kinds() {
            assert_eq!(d.raw_moment(0), qi(1));
        }
    }

    #[test]
    fn normal_second_moment() {
        assert_eq!(Distribution::normal(qi(-3), qi(1)).unwrap().raw_moment(2), qi(10));
    }

    #[test]
    fn normal_recurrence_matches_binomial_expansion() {
        // E((mu + s Z)^k) = sum_j C(k,2j) mu^(k-2j) s^(2j) (2j-1)!!
        let (mu, s2) = (q(-3, 2), q(7, 3));
        let d = Distribution::normal(mu.clone(), s2.clone()).unwrap();
        for k in 0..=6u32 {
            let mut want = Q::zero();
            for j in 0..=k / 2 {
                let binom = num_integer::binomial(k as i64, (2 * j) as i64);
                let dfact: i64 = (1..=2 * j as i64).step_by(2).product::<i64>().max(1);
                want += qi(binom * dfact)
                    * num_traits::pow(mu.clone(), (k - 2 * j) as usize)
                    * num_traits::pow(s2.clone(), j as usize);
            }
            assert_eq!(d.raw_moment(k), want, "k = {k}");
        }
    }

    #[test]
    fn sample_moments_match() {
        let n = 1_000_000usize;
        for (i, d) in all_kinds().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + i as u64);
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            for k in 1..=4i32 {
                let ys: Vec<f64> = xs.iter().map(|x| x.powi(k)).collect();
                let mean = ys.iter().sum::<f64>() / n as f64;
                let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                let want = q_to_f64(&d.raw_moment(k as u32));
                assert!(
                    (mean - want).abs() <= 4.0 * se + 1e-12,
                    "{d:?} k={k}: {mean} vs {want} (se {se})"
                );
            }
        }
    }

    #[test]
    fn constant_and_seeded_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(Distribution::Constant(qi(5)).sample(&mut rng), 5.0);
        let u = Distribution::uniform(qi(0), qi(1)).unwrap();
        let a = u.sample(&mut ChaCha8Rng::seed_from_u64(9));
        let b = u.sample(&mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!((0.0..1.0).contains(&a));
    }

    #[test]
    fn mean_abs_deviation_closed_forms() {
        let u = Distribution::uniform(qi(0), qi(10)).unwrap();
        assert_eq!(u.mean_abs_deviation_exact(), Some(q(5, 2)));
        let c = Distribution::discrete(vec![(qi(-1), q(1, 2)), (qi(1), q(1, 2))]).unwrap();
        assert_eq!(c.mean_abs_deviation_exact(), Some(qi(1)));
        let n = Distribution::normal(qi(0), qi(4)).unwrap();
        assert!((n.mean_abs_deviation() - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let d: Distribution = serde_json::from_str(r#"{"kind":"normal","mu":"-3","sigma2":"1"}"#).unwrap();
        assert_eq!(d, Distribution::normal(qi(-3), qi(1)).unwrap());
        for d in all_kinds() {
            let s = serde_json::to_string(&d).unwrap();
            assert_eq!(serde_json::from_str::<Distribution>(&s).unwrap(), d);
        }
        let u: Distribution = serde_json::from_str(r#"{"kind":"uniform","a":-0.1,"b":"0.2"}"#).unwrap();
        assert_eq!(u.raw_moment(1), q(1, 20));
        assert!(serde_json::from_str::<Distribution>(r#"{"kind":"uniform","a":"1","b":"0"}"#).is_err());
        assert!(serde_json::from_str::<Distribution>(
            r#"{"kind":"discrete","support":[{"value":"0","p":"1/3"}]}"#
        )
        .is_err());
    }

    #[test]
    fn replace_moments_factors_independent_vars() {
        let v = crate::poly::Vars::new(&["x", "r1", "r2"]);
        let p = crate::poly::parse_polynomial("x*r1^2*r2 + r2^2", &v).unwrap();
        let d1 = Distribution::normal(qi(-3), qi(1)).unwrap();
        let d2 = Distribution::normal(qi(2), qi(2)).unwrap();
        let laws = HashMap::from([(1, &d1), (2, &d2)]);
        let want = crate::poly::parse_polynomial("20*x + 6", &v).unwrap();
        assert_eq!(replace_moments(&p, &laws), want);
    }
}
