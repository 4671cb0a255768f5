//! Polynomials whose coefficients are affine in the SDP parameters.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

use crate::poly::{Monomial, Polynomial, Q};

/// `constant + Σ coeffs[j] · y_j`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Aff {
    pub constant: Q,
    pub coeffs: BTreeMap<usize, Q>,
}

impl Aff {
    pub fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.coeffs.values().all(Zero::is_zero)
    }

    pub fn eval(&self, y: &[Q]) -> Q {
        self.coeffs.iter().fold(self.constant.clone(), |acc, (j, c)| acc + c * &y[*j])
    }

    fn add_scaled(&mut self, other: &Aff, s: &Q) {
        self.constant += &other.constant * s;
        for (j, c) in &other.coeffs {
            *self.coeffs.entry(*j).or_insert_with(Q::zero) += c * s;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffPoly {
    terms: BTreeMap<Monomial, Aff>,
}

impl AffPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(p: &Polynomial) -> Self {
        let mut out = Self::zero();
        for (m, c) in p.terms() {
            out.terms.entry(m.clone()).or_default().constant += c;
        }
        out
    }

    pub fn add_param_term(&mut self, m: Monomial, param: usize, c: Q) {
        *self.terms.entry(m).or_default().coeffs.entry(param).or_insert_with(Q::zero) += c;
    }

    /// Adds `s · y_param · p`.
    pub fn add_param_poly(&mut self, p: &Polynomial, param: usize, s: &Q) {
        for (m, c) in p.terms() {
            self.add_param_term(m.clone(), param, c * s);
        }
    }

    pub fn scale(&self, s: &Q) -> Self {
        let mut out = Self::zero();
        for (m, a) in &self.terms {
            out.terms.entry(m.clone()).or_default().add_scaled(a, s);
        }
        out
    }

    pub fn sub_assign(&mut self, other: &AffPoly) {
        let minus = -Q::from_integer(1.into());
        for (m, a) in &other.terms {
            self.terms.entry(m.clone()).or_default().add_scaled(a, &minus);
        }
    }

    pub fn mul_poly(&self, p: &Polynomial) -> Self {
        let mut out = Self::zero();
        for (m, a) in &self.terms {
            for (pm, pc) in p.terms() {
                out.terms.entry(m.mul(pm)).or_default().add_scaled(a, pc);
            }
        }
        out
    }

    /// Drops identically zero coefficients.
    pub fn prune(&mut self) {
        for a in self.terms.values_mut() {
            a.coeffs.retain(|_, c| !c.is_zero());
        }
        self.terms.retain(|_, a| !a.is_zero());
    }

    /// Monomials whose coefficient is not identically zero.
    pub fn support(&self) -> BTreeSet<Monomial> {
        self.terms
            .iter()
            .filter(|(_, a)| !a.is_zero())
            .map(|(m, _)| m.clone())
            .collect()
    }

    pub fn degree(&self) -> u32 {
        self.support().iter().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn coeffs(&self) -> impl Iterator<Item = &Aff> {
        self.terms.values().filter(|a| !a.is_zero())
    }

    pub fn coeff(&self, m: &Monomial) -> Option<&Aff> {
        self.terms.get(m)
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs().count()
    }

    pub fn eval(&self, y: &[Q]) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, a)| (m.clone(), a.eval(y))))
    }
}
