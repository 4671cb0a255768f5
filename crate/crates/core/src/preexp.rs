//! Pre-expectations by moment substitution.

use std::collections::BTreeMap;

use num_traits::{One, Signed};
use serde::Serialize;

use crate::moments::replace_moments;
use crate::poly::{Polynomial, Scalar, VarId};
use crate::pts::{Guard, Pts, Transition};

/// One polynomial per location.
#[derive(Clone, Debug, PartialEq)]
pub struct LocPoly {
    per_loc: Vec<Polynomial>,
}

impl LocPoly {
    pub fn new(per_loc: Vec<Polynomial>) -> Self {
        Self { per_loc }
    }

    /// The same polynomial at every location of `p`.
    pub fn uniform(p: &Pts, poly: Polynomial) -> Self {
        Self::new(vec![poly; p.locations().len()])
    }

    pub fn zero(p: &Pts) -> Self {
        Self::uniform(p, Polynomial::zero())
    }

    pub fn at(&self, loc: usize) -> &Polynomial {
        &self.per_loc[loc]
    }

    pub fn set(&mut self, loc: usize, poly: Polynomial) {
        self.per_loc[loc] = poly;
    }

    pub fn len(&self) -> usize {
        self.per_loc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_loc.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Polynomial> {
        self.per_loc.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.per_loc.iter().all(Polynomial::is_zero)
    }

    pub fn scale(&self, c: &crate::poly::Q) -> LocPoly {
        LocPoly::new(self.per_loc.iter().map(|p| p.scale(c)).collect())
    }

    pub fn add(&self, other: &LocPoly) -> LocPoly {
        LocPoly::new(self.per_loc.iter().zip(&other.per_loc).map(|(a, b)| a + b).collect())
    }

    pub fn degree(&self) -> u32 {
        self.per_loc.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn eval<S: Scalar>(&self, loc: usize, point: &[S]) -> S {
        self.per_loc[loc].eval_dense(point).expect("state variables bound")
    }

    pub fn display(&self, p: &Pts) -> String {
        p.locations()
            .iter()
            .zip(&self.per_loc)
            .map(|(l, poly)| format!("{l}: {}", poly.display(p.vars())))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// `h(x, k) -> h(x, k + 1)`.
pub fn shift_step(p: &Pts, h: &Polynomial) -> Polynomial {
    let k = p.step_var();
    if h.degree_in(|v| v == k) == 0 {
        return h.clone();
    }
    let mut b = BTreeMap::new();
    b.insert(k, &Polynomial::var(k) + &Polynomial::constant(crate::poly::qi(1)));
    h.substitute(&b)
}

fn image_bindings(t: &Transition, b: usize) -> BTreeMap<VarId, Polynomial> {
    t.branches[b]
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| (i as VarId, img.clone()))
        .collect()
}

/// `Σ_j p_j E_R h(F_j(x, R), dest)`, optionally with `k` shifted to `k + 1`.
pub fn preexp_transition(p: &Pts, h: &LocPoly, t: &Transition, shift: bool) -> Polynomial {
    let hd = if shift {
        shift_step(p, h.at(t.dest))
    } else {
        h.at(t.dest).clone()
    };
    preexp_poly(p, &hd, t)
}

/// Pre-expectation of a single polynomial through the branches of `t`.
pub fn preexp_poly(p: &Pts, hd: &Polynomial, t: &Transition) -> Polynomial {
    let laws = p.random_laws();
    let mut out = Polynomial::zero();
    for (b, branch) in t.branches.iter().enumerate() {
        let composed = hd.substitute(&image_bindings(t, b));
        let expected = replace_moments(&composed, &laws);
        if branch.prob.is_one() {
            out += &expected;
        } else {
            out += &expected.scale(&branch.prob);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub transition: usize,
    pub source: usize,
    pub guard: Guard,
    pub poly: Polynomial,
}

/// The pre-expectation as one guarded piece per transition.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewisePoly {
    pub pieces: Vec<Piece>,
}

impl PiecewisePoly {
    /// Value at `(loc, point)` from the piece whose guard holds.
    pub fn eval<S: Scalar>(&self, loc: usize, point: &[S]) -> Option<S> {
        self.pieces
            .iter()
            .find(|pc| pc.source == loc && pc.guard.holds(point))
            .map(|pc| pc.poly.eval_dense(point).expect("state variables bound"))
    }

    pub fn display(&self, p: &Pts) -> Vec<String> {
        self.pieces
            .iter()
            .map(|pc| {
                format!(
                    "[{}] {} -> {}",
                    p.locations()[pc.source],
                    pc.guard.display(p.vars()),
                    pc.poly.display(p.vars())
                )
            })
            .collect()
    }
}

pub fn preexp_pts(p: &Pts, h: &LocPoly, shift: bool) -> PiecewisePoly {
    PiecewisePoly {
        pieces: p
            .transitions()
            .iter()
            .enumerate()
            .map(|(i, t)| Piece {
                transition: i,
                source: t.source,
                guard: t.guard.clone(),
                poly: preexp_transition(p, h, t, shift),
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Equality,
    Inequality,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Answer {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionCheck {
    pub transition: usize,
    /// `preE(h, τ)(x, k+1) - h(x, source, k)`.
    pub difference: Polynomial,
    pub answer: Answer,
}

/// Per transition, whether `h` has zero (equality) or nonpositive
/// (inequality) one-step drift on the guard.
pub fn check_supermartingale(p: &Pts, h: &LocPoly, mode: Mode) -> Vec<TransitionCheck> {
    p.transitions()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let difference = &preexp_transition(p, h, t, true) - h.at(t.source);
            let answer = match mode {
                Mode::Equality if difference.is_zero() => Answer::Yes,
                Mode::Equality => Answer::No,
                Mode::Inequality => nonpositive_on_guard(&difference, &t.guard),
            };
            TransitionCheck {
                transition: i,
                difference,
                answer,
            }
        })
        .collect()
}

/// Sound check that `d <= 0` wherever `guard` holds: constant sign first,
/// then an SOS certificate for `-d` with guard multipliers.
pub fn nonpositive_on_guard(d: &Polynomial, guard: &Guard) -> Answer {
    if d.is_constant() {
        return if Signed::is_positive(&d.constant_term()) && guard.is_true() {
            Answer::No
        } else if !Signed::is_positive(&d.constant_term()) {
            Answer::Yes
        } else {
            Answer::Unknown
        };
    }
    if crate::sos::nonneg_on(&-d, &guard.atoms) {
        Answer::Yes
    } else {
        Answer::Unknown
    }
}
