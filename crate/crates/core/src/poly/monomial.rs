use std::cmp::Ordering;
use std::fmt;

/// Index of a variable inside a [`Vars`](super::Vars) table.
pub type VarId = u32;

/// A power product `x_{i1}^{e1} * ... * x_{ik}^{ek}`.
///
/// Stored sparsely as `(var, exponent)` pairs sorted by variable id; zero
/// exponents are never stored. Ordering is graded lexicographic with the
/// variable order given by the ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    factors: Vec<(VarId, u32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn var(v: VarId) -> Self {
        Self {
            factors: vec![(v, 1)],
        }
    }

    /// Builds a monomial from arbitrary `(var, exp)` pairs, merging repeats
    /// and dropping zero exponents.
    pub fn from_pairs<I: IntoIterator<Item = (VarId, u32)>>(pairs: I) -> Self {
        let mut factors: Vec<(VarId, u32)> = pairs.into_iter().filter(|&(_, e)| e > 0).collect();
        factors.sort_unstable_by_key(|&(v, _)| v);
        let mut merged: Vec<(VarId, u32)> = Vec::with_capacity(factors.len());
        for (v, e) in factors {
            match merged.last_mut() {
                Some((lv, le)) if *lv == v => *le += e,
                _ => merged.push((v, e)),
            }
        }
        Self { factors: merged }
    }

    pub fn factors(&self) -> &[(VarId, u32)] {
        &self.factors
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|&(_, e)| e).sum()
    }

    pub fn exponent(&self, v: VarId) -> u32 {
        self.factors
            .binary_search_by_key(&v, |&(var, _)| var)
            .map(|i| self.factors[i].1)
            .unwrap_or(0)
    }

    /// Total degree restricted to the variables accepted by `keep`.
    pub fn degree_in(&self, keep: impl Fn(VarId) -> bool) -> u32 {
        self.factors
            .iter()
            .filter(|&&(v, _)| keep(v))
            .map(|&(_, e)| e)
            .sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.factors.len() + other.factors.len());
        let (mut i, mut j) = (0, 0);
        while i < self.factors.len() && j < other.factors.len() {
            let (a, b) = (self.factors[i], other.factors[j]);
            match a.0.cmp(&b.0) {
                Ordering::Less => {
                    out.push(a);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a.0, a.1 + b.1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.factors[i..]);
        out.extend_from_slice(&other.factors[j..]);
        Monomial { factors: out }
    }

    pub fn pow(&self, k: u32) -> Monomial {
        if k == 0 {
            return Monomial::one();
        }
        Monomial {
            factors: self.factors.iter().map(|&(v, e)| (v, e * k)).collect(),
        }
    }

    /// Splits into the part over variables accepted by `pred` and the rest.
    pub fn split(&self, pred: impl Fn(VarId) -> bool) -> (Monomial, Monomial) {
        let (a, b): (Vec<_>, Vec<_>) = self.factors.iter().partition(|&&(v, _)| pred(v));
        (Monomial { factors: a }, Monomial { factors: b })
    }

    /// `Some(self / other)` when `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.factors.len());
        let mut j = 0;
        for &(v, e) in &self.factors {
            if j < other.factors.len() && other.factors[j].0 < v {
                return None;
            }
            if j < other.factors.len() && other.factors[j].0 == v {
                let oe = other.factors[j].1;
                j += 1;
                match e.cmp(&oe) {
                    Ordering::Less => return None,
                    Ordering::Equal => continue,
                    Ordering::Greater => out.push((v, e - oe)),
                }
            } else {
                out.push((v, e));
            }
        }
        if j < other.factors.len() {
            return None;
        }
        Some(Monomial { factors: out })
    }

    /// All monomials over `vars` with total degree in `lo..=hi`, by ascending
    /// degree and, within a degree, in declaration order (`x1` before `x2`).
    pub fn all_up_to(vars: &[VarId], lo: u32, hi: u32) -> Vec<Monomial> {
        fn rec(vars: &[VarId], budget: u32, acc: &mut Vec<(VarId, u32)>, out: &mut Vec<Monomial>) {
            match vars.split_first() {
                None => out.push(Monomial::from_pairs(acc.iter().copied())),
                Some((&v, rest)) => {
                    for e in 0..=budget {
                        acc.push((v, e));
                        rec(rest, budget - e, acc, out);
                        acc.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        rec(vars, hi, &mut Vec::new(), &mut out);
        out.retain(|m| m.degree() >= lo);
        out.sort_by(|a, b| a.degree().cmp(&b.degree()).then(b.cmp(a)));
        out
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        // Lex on the dense exponent vectors, earliest variable most significant.
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.factors.get(i), other.factors.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&(va, ea)), Some(&(vb, eb))) => {
                    if va < vb {
                        return Ordering::Greater;
                    }
                    if vb < va {
                        return Ordering::Less;
                    }
                    match ea.cmp(&eb) {
                        Ordering::Equal => {
                            i += 1;
                            j += 1;
                        }
                        ord => return ord,
                    }
                }
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        for (i, (v, e)) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            write!(f, "v{v}")?;
            if *e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grlex_order() {
        let x = Monomial::var(0);
        let y = Monomial::var(1);
        let one = Monomial::one();
        assert!(one < y);
        assert!(y < x);
        assert!(x < x.mul(&x));
        assert!(y.mul(&y) < x.mul(&y));
        assert!(x.mul(&y) < x.mul(&x));
    }

    #[test]
    fn division() {
        let x2y = Monomial::from_pairs([(0, 2), (1, 1)]);
        let xy = Monomial::from_pairs([(0, 1), (1, 1)]);
        assert_eq!(x2y.div(&xy), Some(Monomial::var(0)));
        assert_eq!(xy.div(&x2y), None);
        assert_eq!(x2y.div(&Monomial::var(2)), None);
    }

    #[test]
    fn enumerates_basis() {
        let b = Monomial::all_up_to(&[0, 1], 0, 2);
        assert_eq!(b.len(), 6);
        assert!(b[0].is_one());
        let homog = Monomial::all_up_to(&[0, 1], 1, 1);
        assert_eq!(homog, vec![Monomial::var(0), Monomial::var(1)]);
    }
}
