//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! A [`Polynomial`] is a map from [`Monomial`] to a nonzero [`Q`]. Variables
//! are plain integer ids; names live in a [`Vars`] table and are only needed
//! for parsing and printing.

mod monomial;
mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use monomial::{Monomial, VarId};
pub use parse::{parse_guard_atom, parse_polynomial, parse_rational, Scope, Symbol};

/// Exact rational scalar used throughout the symbolic pipeline.
pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_to_f64(x: &Q) -> f64 {
    ToPrimitive::to_f64(x).unwrap_or(f64::NAN)
}

/// Exact rational value of a finite float.
pub fn q_from_f64(x: f64) -> Q {
    Q::from_float(x).expect("finite float")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdent(String),
    #[error("negative exponent at {pos}")]
    NegativeExponent { pos: usize },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

/// Ordered table of variable names; the position is the [`VarId`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vars {
    names: Vec<String>,
    index: HashMap<String, VarId>,
}

impl Vars {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        let mut v = Vars::default();
        for n in names {
            v.push(n.as_ref());
        }
        v
    }

    pub fn push(&mut self, name: &str) -> VarId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as VarId;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: VarId) -> &str {
        self.names.get(id as usize).map(String::as_str).unwrap_or("?")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl Scope for Vars {
    fn lookup(&self, name: &str) -> Option<Symbol> {
        self.id(name).map(Symbol::Var)
    }
}

/// Numeric types a polynomial can be evaluated in.
pub trait Scalar: Clone + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn from_q(x: &Q) -> Self;
    fn to_f64(&self) -> f64;
    fn is_negative(&self) -> bool;
    fn is_positive(&self) -> bool;
}

impl Scalar for f64 {
    fn from_q(x: &Q) -> Self {
        q_to_f64(x)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_negative(&self) -> bool {
        *self < 0.0
    }
    fn is_positive(&self) -> bool {
        *self > 0.0
    }
}

impl Scalar for Q {
    fn from_q(x: &Q) -> Self {
        x.clone()
    }
    fn to_f64(&self) -> f64 {
        q_to_f64(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
}

fn pow_scalar<S: Scalar>(x: &S, e: u32) -> S {
    let mut acc = S::one();
    for _ in 0..e {
        acc = acc * x.clone();
    }
    acc
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, Q>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Q) -> Self {
        Self::term(c, Monomial::one())
    }

    pub fn var(v: VarId) -> Self {
        Self::term(Q::one(), Monomial::var(v))
    }

    pub fn term(c: Q, m: Monomial) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Self { terms }
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, Q)>>(terms: I) -> Self {
        let mut p = Self::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: Q) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Q)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> Q {
        self.terms.get(m).cloned().unwrap_or_else(Q::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(Monomial::is_one)
    }

    /// The constant term.
    pub fn constant_term(&self) -> Q {
        self.coeff(&Monomial::one())
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, keep: impl Fn(VarId) -> bool + Copy) -> u32 {
        self.terms.keys().map(|m| m.degree_in(keep)).max().unwrap_or(0)
    }

    pub fn min_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).min().unwrap_or(0)
    }

    pub fn variables(&self) -> BTreeSet<VarId> {
        self.terms
            .keys()
            .flat_map(|m| m.factors().iter().map(|&(v, _)| v))
            .collect()
    }

    pub fn scale(&self, c: &Q) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect(),
        }
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Self {
        Self {
            terms: self.terms.iter().map(|(t, k)| (t.mul(m), k.clone())).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Polynomial::constant(Q::one());
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Replaces each bound variable by its image and expands. Unbound
    /// variables pass through unchanged.
    pub fn substitute(&self, bindings: &BTreeMap<VarId, Polynomial>) -> Polynomial {
        let mut powers: HashMap<(VarId, u32), Polynomial> = HashMap::new();
        let mut out = Polynomial::zero();
        for (m, c) in &self.terms {
            let mut term = Polynomial::constant(c.clone());
            let mut kept = Vec::new();
            for &(v, e) in m.factors() {
                match bindings.get(&v) {
                    Some(img) => {
                        let pw = powers.entry((v, e)).or_insert_with(|| img.pow(e));
                        term = &term * &*pw;
                    }
                    None => kept.push((v, e)),
                }
            }
            if !kept.is_empty() {
                term = term.mul_monomial(&Monomial::from_pairs(kept));
            }
            out += &term;
        }
        out
    }

    /// Evaluates on a dense point indexed by variable id.
    pub fn eval_dense<S: Scalar>(&self, point: &[S]) -> Result<S, VarId> {
        let mut acc = S::zero();
        for (m, c) in &self.terms {
            let mut t = S::from_q(c);
            for &(v, e) in m.factors() {
                let x = point.get(v as usize).ok_or(v)?;
                t = t * pow_scalar(x, e);
            }
            acc = acc + t;
        }
        Ok(acc)
    }

    /// Evaluates at a sparse point; every variable of `self` must be bound.
    pub fn evaluate<S: Scalar>(&self, point: &HashMap<VarId, S>, vars: &Vars) -> Result<S, PolyError> {
        let mut acc = S::zero();
        for (m, c) in &self.terms {
            let mut t = S::from_q(c);
            for &(v, e) in m.factors() {
                let x = point
                    .get(&v)
                    .ok_or_else(|| PolyError::UnboundVariable(vars.name(v).to_string()))?;
                t = t * pow_scalar(x, e);
            }
            acc = acc + t;
        }
        Ok(acc)
    }

    /// Applies `f` to every coefficient, dropping terms that become zero.
    pub fn map_coeffs(&self, f: impl Fn(&Monomial, &Q) -> Q) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, c)| (m.clone(), f(m, c))))
    }

    /// `Some(c)` with `self == c * other`.
    pub fn ratio_to(&self, other: &Polynomial) -> Option<Q> {
        if other.is_zero() {
            return if self.is_zero() { Some(Q::zero()) } else { None };
        }
        let (m0, c0) = other.terms.iter().next()?;
        let r = self.coeff(m0) / c0;
        (other.scale(&r) == *self).then_some(r)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| q_to_f64(c).abs()).fold(0.0, f64::max)
    }

    pub fn display<'a>(&'a self, vars: &'a Vars) -> PolyDisplay<'a> {
        PolyDisplay {
            poly: self,
            vars,
            digits: None,
        }
    }

    /// Like [`display`](Self::display) but with coefficients printed as
    /// decimals rounded to `digits` significant digits.
    pub fn display_approx<'a>(&'a self, vars: &'a Vars, digits: usize) -> PolyDisplay<'a> {
        PolyDisplay {
            poly: self,
            vars,
            digits: Some(digits),
        }
    }
}

pub struct PolyDisplay<'a> {
    poly: &'a Polynomial,
    vars: &'a Vars,
    digits: Option<usize>,
}

fn fmt_monomial(m: &Monomial, vars: &Vars, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for (i, &(v, e)) in m.factors().iter().enumerate() {
        if i > 0 {
            write!(f, "*")?;
        }
        write!(f, "{}", vars.name(v))?;
        if e > 1 {
            write!(f, "^{e}")?;
        }
    }
    Ok(())
}

/// Shortest decimal rendering of `x` with `digits` significant digits.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - mag).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

impl fmt::Display for PolyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.poly.terms.iter().rev().enumerate() {
            let neg = Signed::is_negative(c);
            let abs = c.abs();
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let coef = match self.digits {
                Some(d) => fmt_sig(q_to_f64(&abs), d),
                None => abs.to_string(),
            };
            if m.is_one() {
                write!(f, "{coef}")?;
            } else {
                if !abs.is_one() {
                    write!(f, "{coef}*")?;
                }
                fmt_monomial(m, self.vars, f)?;
            }
        }
        Ok(())
    }
}

impl AddAssign<&Polynomial> for Polynomial {
    fn add_assign(&mut self, rhs: &Polynomial) {
        for (m, c) in &rhs.terms {
            self.add_term(m.clone(), c.clone());
        }
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Add for Polynomial {
    type Output = Polynomial;
    fn add(mut self, rhs: Polynomial) -> Polynomial {
        self += &rhs;
        self
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        -&self
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl Sub for Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: Polynomial) -> Polynomial {
        &self - &rhs
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

impl Mul for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: Polynomial) -> Polynomial {
        &self * &rhs
    }
}

/// Comparison of a polynomial against zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    /// `lhs >= 0`
    Ge,
    /// `lhs > 0`
    Gt,
}

/// A guard atom in canonical form `lhs >= 0` or `lhs > 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Inequality {
    pub lhs: Polynomial,
    pub relation: Relation,
}

impl Inequality {
    pub fn ge(lhs: Polynomial) -> Self {
        Self {
            lhs,
            relation: Relation::Ge,
        }
    }

    pub fn gt(lhs: Polynomial) -> Self {
        Self {
            lhs,
            relation: Relation::Gt,
        }
    }

    pub fn holds<S: Scalar>(&self, point: &[S]) -> bool {
        let v = self.lhs.eval_dense(point).expect("guard variables bound");
        match self.relation {
            Relation::Ge => !v.is_negative(),
            Relation::Gt => v.is_positive(),
        }
    }

    /// True when `self` and `other` are the syntactic complement pair
    /// `{p >= 0, -p > 0}`.
    pub fn is_complement_of(&self, other: &Inequality) -> bool {
        self.relation != other.relation && self.lhs == -&other.lhs
    }

    pub fn display<'a>(&'a self, vars: &'a Vars) -> impl fmt::Display + 'a {
        struct D<'a>(&'a Inequality, &'a Vars);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let op = match self.0.relation {
                    Relation::Ge => ">=",
                    Relation::Gt => ">",
                };
                write!(f, "{} {op} 0", self.0.lhs.display(self.1))
            }
        }
        D(self, vars)
    }
}
