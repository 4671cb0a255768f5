//! Linear invariants through the corresponding deterministic system, the
//! bounded-difference check, and the ranking rule for expected run-time.

use std::collections::{BTreeMap, HashMap};

use num_traits::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::moments::replace_moments;
use crate::poly::{q_to_f64, Inequality, Monomial, Polynomial, Relation, VarId, Q};
use crate::preexp::{nonpositive_on_guard, preexp_pts, preexp_transition, shift_step, Answer, LocPoly};
use crate::pts::{Guard, Pts, Transition, UpdateBranch};
use crate::report::{Evidence, InvariantReport, Method};

#[derive(Debug, Error, PartialEq)]
pub enum LinearError {
    #[error("transition {transition}: update of `{var}` has degree {degree} > 1")]
    NonLinearUpdate {
        transition: usize,
        var: String,
        degree: u32,
    },
    #[error("`{0}` is not linear in the state and step counter")]
    NonLinearH(String),
    #[error("h is not an exact invariant: transition {0} has nonzero drift")]
    NotInvariant(usize),
    #[error("no bounded-difference evidence: {0}")]
    NotBounded(String),
}

/// The system with every transition replaced by its mean update.
#[derive(Clone, Debug, PartialEq)]
pub struct Cdts {
    pts: Pts,
}

impl Cdts {
    pub fn pts(&self) -> &Pts {
        &self.pts
    }

    /// The single update image of each program variable on transition `t`.
    pub fn update(&self, t: usize) -> &[Polynomial] {
        &self.pts.transitions()[t].branches[0].images
    }
}

fn mean_bindings(p: &Pts) -> BTreeMap<VarId, Polynomial> {
    p.randoms().map(|(v, d)| (v, Polynomial::constant(d.mean()))).collect()
}

/// `f_det(x) = Σ_j p_j F_j(x, μ)`.
pub fn determinize(p: &Pts) -> Cdts {
    let means = mean_bindings(p);
    let mut out = p.clone();
    for t in out.transitions.iter_mut() {
        let n = t.branches[0].images.len();
        let mut images = vec![Polynomial::zero(); n];
        for b in &t.branches {
            for (acc, img) in images.iter_mut().zip(&b.images) {
                *acc += &img.substitute(&means).scale(&b.prob);
            }
        }
        t.branches = vec![UpdateBranch {
            prob: Q::from_integer(1.into()),
            images,
        }];
    }
    Cdts { pts: out }
}

/// Column layout of the linear template: for every location the state and
/// step coefficients, then all constants.
struct Layout {
    n: usize,
    locs: usize,
}

impl Layout {
    fn of(p: &Pts) -> Self {
        Layout {
            n: p.num_program_vars(),
            locs: p.locations().len(),
        }
    }

    fn cols(&self) -> usize {
        self.locs * (self.n + 2)
    }

    /// Column of slot `s` (`0..n` state, `n` step, `n + 1` constant).
    fn col(&self, loc: usize, s: usize) -> usize {
        if s <= self.n {
            loc * (self.n + 1) + s
        } else {
            self.locs * (self.n + 1) + loc
        }
    }

    fn is_constant_col(&self, c: usize) -> bool {
        c >= self.locs * (self.n + 1)
    }

    fn slot_poly(&self, s: usize) -> Polynomial {
        if s <= self.n {
            Polynomial::var(s as VarId)
        } else {
            Polynomial::constant(Q::from_integer(1.into()))
        }
    }

    fn to_locpoly(&self, v: &[Q]) -> LocPoly {
        LocPoly::new(
            (0..self.locs)
                .map(|l| {
                    let mut p = Polynomial::zero();
                    for s in 0..self.n + 2 {
                        p += &self.slot_poly(s).scale(&v[self.col(l, s)]);
                    }
                    p
                })
                .collect(),
        )
    }

    fn to_vec(&self, h: &LocPoly) -> Option<Vec<Q>> {
        let mut v = vec![Q::zero(); self.cols()];
        for l in 0..self.locs {
            for (m, c) in h.at(l).terms() {
                let s = match m.factors() {
                    [] => self.n + 1,
                    [(var, 1)] if (*var as usize) <= self.n => *var as usize,
                    _ => return None,
                };
                v[self.col(l, s)] = c.clone();
            }
        }
        Some(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum PdbVerdict {
    Bounded {
        k: f64,
        #[serde(serialize_with = "ser_opt_q")]
        k_exact: Option<Q>,
    },
    UnboundedEvidence { transition: usize, reason: String },
    Unknown { reason: String },
}

impl PdbVerdict {
    pub fn is_bounded(&self) -> bool {
        matches!(self, PdbVerdict::Bounded { .. })
    }
}

fn ser_opt_q<S: serde::Serializer>(v: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(q) => s.serialize_some(&q.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearInvariant {
    pub h: LocPoly,
    pub pdb: PdbVerdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearInvariantBasis {
    /// Non-constant basis elements.
    pub elements: Vec<LinearInvariant>,
    /// Location-wise constants that are invariant (excluded as trivial).
    pub trivial: Vec<LocPoly>,
}

/// All `h(x, l, k) = c_l·x + d_l k + e_l` with `h(f_det(x), dest, k+1) = h(x, src, k)`
/// on every transition that does not leave the final location.
pub fn synth_linear_invariants(c: &Cdts, original: &Pts) -> Result<LinearInvariantBasis, LinearError> {
    let p = c.pts();
    let lay = Layout::of(p);
    for (ti, t) in p.live_transitions() {
        for (i, img) in t.branches[0].images.iter().enumerate() {
            if img.degree() > 1 {
                return Err(LinearError::NonLinearUpdate {
                    transition: ti,
                    var: p.program_var_names()[i].clone(),
                    degree: img.degree(),
                });
            }
        }
    }
    let mut rows: BTreeMap<(usize, Monomial), Vec<Q>> = BTreeMap::new();
    for (ti, t) in p.live_transitions() {
        let bind = image_bindings(&t.branches[0]);
        for s in 0..lay.n + 2 {
            let base = lay.slot_poly(s);
            let forward = shift_step(p, &base).substitute(&bind);
            for (poly, loc, sign) in [(forward, t.dest, 1), (base, t.source, -1)] {
                let col = lay.col(loc, s);
                for (m, coef) in poly.terms() {
                    let row = rows.entry((ti, m.clone())).or_insert_with(|| vec![Q::zero(); lay.cols()]);
                    if sign > 0 {
                        row[col] += coef;
                    } else {
                        row[col] -= coef;
                    }
                }
            }
        }
    }
    let a: Vec<Vec<Q>> = rows.into_values().collect();
    let mut basis = linalg::nullspace(&a, lay.cols());
    let pivots = linalg::rref(&mut basis, lay.cols());
    let mut elements = Vec::new();
    let mut trivial = Vec::new();
    for (v, pc) in basis.iter().zip(pivots) {
        let h = lay.to_locpoly(v);
        if lay.is_constant_col(pc) {
            trivial.push(h);
        } else {
            let pdb = check_pdb_bound(original, &h);
            elements.push(LinearInvariant { h, pdb });
        }
    }
    Ok(LinearInvariantBasis { elements, trivial })
}

fn image_bindings(b: &UpdateBranch) -> BTreeMap<VarId, Polynomial> {
    b.images
        .iter()
        .enumerate()
        .map(|(i, img)| (i as VarId, img.clone()))
        .collect()
}

/// Coefficients expressing `target` in the span of the basis (elements first,
/// then trivial constants).
pub fn span_contains(p: &Pts, basis: &LinearInvariantBasis, target: &LocPoly) -> Option<Vec<Q>> {
    let lay = Layout::of(p);
    let t = lay.to_vec(target)?;
    solve_in_span(&lay, basis, &t, None)
}

/// A member of the span whose component at `loc` equals `target`.
pub fn span_member_at(p: &Pts, basis: &LinearInvariantBasis, loc: usize, target: &Polynomial) -> Option<LocPoly> {
    let lay = Layout::of(p);
    let mut whole = LocPoly::zero(p);
    whole.set(loc, target.clone());
    let t = lay.to_vec(&whole)?;
    let coeffs = solve_in_span(&lay, basis, &t, Some(loc))?;
    let mut acc = LocPoly::zero(p);
    for (c, h) in coeffs.iter().zip(basis.elements.iter().map(|e| &e.h).chain(&basis.trivial)) {
        acc = acc.add(&h.scale(c));
    }
    Some(acc)
}

fn solve_in_span(lay: &Layout, basis: &LinearInvariantBasis, t: &[Q], only: Option<usize>) -> Option<Vec<Q>> {
    let gens: Vec<Vec<Q>> = basis
        .elements
        .iter()
        .map(|e| &e.h)
        .chain(&basis.trivial)
        .map(|h| lay.to_vec(h).expect("basis is linear"))
        .collect();
    let rows: Vec<usize> = (0..lay.cols())
        .filter(|&c| match only {
            None => true,
            Some(l) => (0..lay.n + 2).any(|s| lay.col(l, s) == c),
        })
        .collect();
    let a: Vec<Vec<Q>> = rows.iter().map(|&r| gens.iter().map(|g| g[r].clone()).collect()).collect();
    let b: Vec<Q> = rows.iter().map(|&r| t[r].clone()).collect();
    linalg::solve(&a, &b, gens.len())
}

fn check_linear(p: &Pts, h: &LocPoly) -> Result<(), LinearError> {
    for poly in h.iter() {
        if poly.degree() > 1 || poly.variables().iter().any(|&v| p.is_random_var(v)) {
            return Err(LinearError::NonLinearH(poly.display(p.vars()).to_string()));
        }
    }
    Ok(())
}

/// Bound on `E[|h(X', L', k+1) - h(X, L, k)| | X, L]` over all states, or
/// evidence that none exists.
pub fn check_pdb_bound(p: &Pts, h: &LocPoly) -> PdbVerdict {
    if let Err(e) = check_linear(p, h) {
        return PdbVerdict::Unknown { reason: e.to_string() };
    }
    let cdts = determinize(p);
    let means = mean_bindings(p);
    let laws = p.random_laws();
    let mut k_f = 0.0f64;
    let mut k_q = Some(Q::zero());
    for (ti, t) in p.live_transitions() {
        let hd = shift_step(p, h.at(t.dest));
        let det = hd.substitute(&image_bindings(&cdts.pts().transitions()[ti].branches[0]));
        let drift = &det - h.at(t.source);
        if !drift.is_constant() {
            return PdbVerdict::UnboundedEvidence {
                transition: ti,
                reason: format!("one-step drift {} depends on the state", drift.display(p.vars())),
            };
        }
        let mut tau_f = q_to_f64(&drift.constant_term()).abs();
        let mut tau_q = Some(drift.constant_term().abs());
        for b in &t.branches {
            let full = hd.substitute(&image_bindings(b));
            let at_mean = full.substitute(&means);
            let spread = &at_mean - &det;
            if !spread.is_constant() {
                return PdbVerdict::UnboundedEvidence {
                    transition: ti,
                    reason: format!("branch offset {} depends on the state", spread.display(p.vars())),
                };
            }
            let noise = &full - &at_mean;
            if noise.variables().iter().any(|&v| !p.is_random_var(v)) {
                return PdbVerdict::UnboundedEvidence {
                    transition: ti,
                    reason: format!("noise {} scales with the state", noise.display(p.vars())),
                };
            }
            let (nf, nq) = noise_bound(&noise, &laws);
            let s = spread.constant_term().abs();
            tau_f += q_to_f64(&b.prob) * (q_to_f64(&s) + nf);
            tau_q = match (tau_q, nq) {
                (Some(acc), Some(n)) => Some(acc + &b.prob * (s + n)),
                _ => None,
            };
        }
        if tau_f > k_f {
            k_f = tau_f;
        }
        k_q = match (k_q, tau_q) {
            (Some(a), Some(b)) => Some(if b > a { b } else { a }),
            _ => None,
        };
    }
    PdbVerdict::Bounded { k: k_f, k_exact: k_q }
}

/// Upper bound on `E|g(R)|` for a polynomial in the random variables with
/// zero mean.
fn noise_bound(g: &Polynomial, laws: &HashMap<VarId, &crate::moments::Distribution>) -> (f64, Option<Q>) {
    if g.is_zero() {
        return (0.0, Some(Q::zero()));
    }
    if g.degree() <= 1 {
        let mut f = 0.0;
        let mut exact = Some(Q::zero());
        for (m, c) in g.terms() {
            let [(v, 1)] = m.factors() else { continue };
            let d = laws[v];
            f += q_to_f64(&c.abs()) * d.mean_abs_deviation();
            exact = match (exact, d.mean_abs_deviation_exact()) {
                (Some(acc), Some(mad)) => Some(acc + c.abs() * mad),
                _ => None,
            };
        }
        return (f, exact);
    }
    let second = replace_moments(&(g * g), laws);
    (q_to_f64(&second.constant_term()).max(0.0).sqrt(), None)
}

/// Expectation of `h(X0, l0, 0)` over the initial distribution.
pub fn initial_expectation(p: &Pts, h: &LocPoly) -> Polynomial {
    let mut b = BTreeMap::new();
    b.insert(p.step_var(), Polynomial::zero());
    p.init().expect(&h.at(p.init_loc()).substitute(&b))
}

#[derive(Debug, Error, PartialEq)]
pub enum PastError {
    #[error("need K < 0 and eps > 0")]
    BadConstants,
    #[error("the system has no final location")]
    NoFinal,
    #[error("h at the final location must be a negative constant, got {0}")]
    FinalNotNegative(String),
    #[error("transition {transition}: cannot show preE(h) <= h - eps where h >= 0 (difference {difference})")]
    Decrease { transition: usize, difference: String },
    #[error("cannot verify h >= K: {0}; pass the lower bound as an assumption to proceed")]
    LowerBound(String),
    #[error("initial expectation of h is not a constant: {0}")]
    InitialNotConstant(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PastBound {
    /// `(E h(X0, l0, 0) - K) / eps`, or 0 when `h` starts negative.
    pub bound: String,
    #[serde(skip)]
    pub bound_q: Q,
    pub initial_expectation: String,
    pub k: String,
    pub eps: String,
    /// Largest lower bound derived from the overshoot pattern, if it applies.
    pub k_verified: Option<String>,
    /// Transitions skipped because their guard already forces `h < 0`.
    pub skipped: Vec<usize>,
    pub assumptions: Vec<String>,
}

/// True when some atom of the guard forces `h < 0`: `-λ h + c > 0` with
/// `c <= 0`, or `-λ h + c >= 0` with `c < 0`, for some `λ > 0`.
fn guard_forces_negative(guard: &Guard, h: &Polynomial) -> bool {
    let hc = h.constant_term();
    let h_lin = h - &Polynomial::constant(hc.clone());
    if h_lin.is_zero() {
        return false;
    }
    guard.atoms.iter().any(|a: &Inequality| {
        let ac = a.lhs.constant_term();
        let a_lin = &a.lhs - &Polynomial::constant(ac.clone());
        match a_lin.ratio_to(&h_lin) {
            Some(r) if r.is_negative() => {
                let c = ac - &r * &hc;
                match a.relation {
                    Relation::Gt => !c.is_positive(),
                    Relation::Ge => c.is_negative(),
                }
            }
            _ => false,
        }
    })
}

/// Smallest one-step change of `h` on `t` when the change does not depend on
/// the state and is affine in bounded random variables.
fn min_step_change(p: &Pts, h: &LocPoly, t: &Transition) -> Result<Q, String> {
    let hd = shift_step(p, h.at(t.dest));
    let mut best: Option<Q> = None;
    for b in &t.branches {
        let delta = &hd.substitute(&image_bindings(b)) - h.at(t.source);
        if delta.variables().iter().any(|&v| !p.is_random_var(v)) {
            return Err(format!("the change {} depends on the state", delta.display(p.vars())));
        }
        if delta.degree() > 1 {
            return Err(format!("the change {} is not affine in the samples", delta.display(p.vars())));
        }
        let laws = p.random_laws();
        let mut lo = delta.constant_term();
        for (m, c) in delta.terms() {
            let [(v, 1)] = m.factors() else { continue };
            let d = laws[v];
            let (Some(inf), Some(sup)) = (d.inf(), d.sup()) else {
                return Err(format!("`{}` is unbounded", p.vars().name(*v)));
            };
            lo += if c.is_positive() { c * inf } else { c * sup };
        }
        best = Some(match best {
            Some(b) if b < lo => b,
            _ => lo,
        });
    }
    Ok(best.unwrap_or_else(Q::zero))
}

/// Expected-run-time bound `(E h(X0) - K) / eps` for `T = min{n : h < 0}`.
pub fn past_bound(p: &Pts, h: &LocPoly, k: &Q, eps: &Q, assume_lower_bound: bool) -> Result<PastBound, PastError> {
    if !k.is_negative() || !eps.is_positive() {
        return Err(PastError::BadConstants);
    }
    let f = p.final_loc().ok_or(PastError::NoFinal)?;
    let hf = h.at(f);
    if !(hf.is_constant() && hf.constant_term().is_negative()) {
        return Err(PastError::FinalNotNegative(hf.display(p.vars()).to_string()));
    }
    let mut skipped = Vec::new();
    let mut k_verified: Result<Q, String> = Ok(Q::zero());
    for (ti, t) in p.live_transitions() {
        let hs = h.at(t.source);
        if guard_forces_negative(&t.guard, hs) {
            skipped.push(ti);
            continue;
        }
        let diff = &(&preexp_transition(p, h, t, true) - hs) + &Polynomial::constant(eps.clone());
        let mut region = t.guard.clone();
        region.atoms.push(Inequality::ge(hs.clone()));
        if nonpositive_on_guard(&diff, &region) != Answer::Yes {
            return Err(PastError::Decrease {
                transition: ti,
                difference: diff.display(p.vars()).to_string(),
            });
        }
        if let Ok(cur) = &k_verified {
            k_verified = min_step_change(p, h, t).map(|m| if &m < cur { m } else { cur.clone() });
        }
    }
    let e0 = initial_expectation(p, h);
    if !e0.is_constant() {
        return Err(PastError::InitialNotConstant(e0.display(p.vars()).to_string()));
    }
    let e0 = e0.constant_term();
    if let Ok(kv) = &mut k_verified {
        if p.init().laws().iter().all(|d| matches!(d, crate::moments::Distribution::Constant(_))) {
            if e0 < *kv {
                *kv = e0.clone();
            }
        } else {
            k_verified = Err("the initial state is random".into());
        }
    }
    let mut assumptions = Vec::new();
    match &k_verified {
        Ok(kv) if k <= kv => {}
        Ok(kv) if assume_lower_bound => {
            assumptions.push(format!("h >= {k} asserted (overshoot pattern only gives {kv})"));
        }
        Err(why) if assume_lower_bound => assumptions.push(format!("h >= {k} asserted ({why})")),
        Ok(kv) => return Err(PastError::LowerBound(format!("overshoot pattern only gives h >= {kv}"))),
        Err(why) => return Err(PastError::LowerBound(why.clone())),
    }
    let bound = if e0.is_negative() { Q::zero() } else { (&e0 - k) / eps };
    Ok(PastBound {
        bound: bound.to_string(),
        bound_q: bound,
        initial_expectation: e0.to_string(),
        k: k.to_string(),
        eps: eps.to_string(),
        k_verified: k_verified.ok().map(|q| q.to_string()),
        skipped,
        assumptions,
    })
}

/// Report for a single exact invariant `h` under the bounded-difference
/// precondition. `past` records how termination was established.
pub fn report_linear(p: &Pts, h: &LocPoly, past: &str) -> Result<InvariantReport, LinearError> {
    check_linear(p, h)?;
    for (ti, t) in p.live_transitions() {
        if !(&preexp_transition(p, h, t, true) - h.at(t.source)).is_zero() {
            return Err(LinearError::NotInvariant(ti));
        }
    }
    let (k, k_exact) = match check_pdb_bound(p, h) {
        PdbVerdict::Bounded { k, k_exact } => (k, k_exact),
        PdbVerdict::UnboundedEvidence { transition, reason } => {
            return Err(LinearError::NotBounded(format!("transition {transition}: {reason}")))
        }
        PdbVerdict::Unknown { reason } => return Err(LinearError::NotBounded(reason)),
    };
    let e0 = initial_expectation(p, h);
    let e0q = if e0.is_constant() { e0.constant_term() } else { Q::zero() };
    let (init_s, init_f) = InvariantReport::initial(&e0q);
    let h0 = h.at(p.init_loc()).display(p.vars()).to_string();
    let mut assumptions = vec![
        "the stopping time T is at most the hitting time of the final location".to_string(),
    ];
    if !e0.is_constant() {
        assumptions.push(format!("initial expectation is symbolic: {}", e0.display(p.vars())));
    }
    Ok(InvariantReport {
        method: Method::LinearPdb,
        seed: p
            .locations()
            .iter()
            .zip(h.iter())
            .map(|(l, poly)| (l.clone(), poly.display(p.vars()).to_string()))
            .collect(),
        seed_poly: h.clone(),
        preexp: preexp_pts(p, h, true).display(p),
        martingale: format!("M_k = h(X^k, L^k, k), h = {}", h.display(p)),
        statement: format!("E({h0} at T) = E({h0} at 0) = {init_s}"),
        evidence: Evidence::Pdb {
            k,
            k_exact: k_exact.map(|q| q.to_string()),
            past: past.to_string(),
        },
        initial_expectation: init_s,
        initial_expectation_f64: init_f,
        correction_factor: None,
        assumptions,
    })
}

/// Reports for every basis element with a difference bound.
pub fn invariant_report_linear(p: &Pts, basis: &LinearInvariantBasis, past: &str) -> Vec<InvariantReport> {
    basis
        .elements
        .iter()
        .filter(|e| e.pdb.is_bounded())
        .filter_map(|e| report_linear(p, &e.h, past).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::moments::{Distribution, InitialDistribution};
    use crate::poly::{q, qi};
    use proptest::prelude::*;

    fn sp(p: &Pts, s: &str) -> Polynomial {
        p.parse_state_poly(s).unwrap()
    }

    #[test]
    fn hare_determinized() {
        let p = models::hare();
        let c = determinize(&p);
        assert_eq!(c.update(0), &[sp(&p, "x1 + 5/2"), sp(&p, "x2 + 1")]);
        assert_eq!(determinize(c.pts()), c);
    }

    #[test]
    fn nested_inner_determinized() {
        let p = models::nested_inner(qi(1));
        assert_eq!(determinize(&p).update(0), &[sp(&p, "y + 0.05")]);
    }

    #[test]
    fn hare_basis() {
        let p = models::hare();
        let basis = synth_linear_invariants(&determinize(&p), &p).unwrap();
        assert_eq!(basis.elements.len(), 2);
        assert_eq!(basis.trivial.len(), 1);
        for target in ["2*x1 - 5*x2", "x1 - 5/2*k", "x2 - k"] {
            let m = span_member_at(&p, &basis, 0, &sp(&p, target)).unwrap_or_else(|| panic!("{target}"));
            assert!(check_pdb_bound(&p, &m).is_bounded());
        }
        assert!(span_member_at(&p, &basis, 0, &sp(&p, "x2 + k")).is_none());
        assert!(span_contains(&p, &basis, &LocPoly::uniform(&p, sp(&p, "2*x1 - 5*x2"))).is_some());
    }

    #[test]
    fn hare_pdb_constant() {
        let p = models::hare();
        match check_pdb_bound(&p, &LocPoly::uniform(&p, sp(&p, "2*x1 - 5*x2"))) {
            PdbVerdict::Bounded { k_exact, .. } => assert_eq!(k_exact, Some(q(15, 2))),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn hare_report() {
        let p = models::hare();
        let r = report_linear(&p, &LocPoly::uniform(&p, sp(&p, "2*x1 - 5*x2")), "asserted").unwrap();
        assert_eq!(r.initial_expectation, "-150");
    }

    #[test]
    fn betting_rejected() {
        let p = models::betting();
        let basis = synth_linear_invariants(&determinize(&p), &p).unwrap();
        let m = span_member_at(&p, &basis, 0, &sp(&p, "x2")).unwrap();
        assert!(matches!(check_pdb_bound(&p, &m), PdbVerdict::UnboundedEvidence { .. }));
        assert!(report_linear(&p, &m, "asserted").is_err());
    }

    #[test]
    fn nested_outer_span() {
        let p = models::nested_outer(qi(1));
        let basis = synth_linear_invariants(&determinize(&p), &p).unwrap();
        for target in ["z - 20*x", "z - k", "x - 1/20*k"] {
            assert!(span_member_at(&p, &basis, 0, &sp(&p, target)).is_some(), "{target}");
        }
    }

    #[test]
    fn identity_conserves() {
        let p = models::demonic();
        let mut t = p.transitions()[0].clone();
        t.branches[0].images = vec![sp(&p, "x")];
        t.guard = Guard::always();
        let id = Pts::new(&["x"], vec![], vec!["l0".into()], 0, None, p.init().clone(), vec![t]).unwrap();
        let basis = synth_linear_invariants(&determinize(&id), &id).unwrap();
        assert!(span_member_at(&id, &basis, 0, &sp(&id, "x")).is_some());
    }

    #[test]
    fn nonlinear_rejected() {
        let p = models::markov();
        assert!(matches!(
            synth_linear_invariants(&determinize(&p), &p),
            Err(LinearError::NonLinearUpdate { .. })
        ));
    }

    #[test]
    fn constant_h_bounded_zero() {
        let p = models::hare();
        assert_eq!(
            check_pdb_bound(&p, &LocPoly::uniform(&p, Polynomial::constant(qi(3)))),
            PdbVerdict::Bounded {
                k: 0.0,
                k_exact: Some(Q::zero())
            }
        );
    }

    fn inner_h(p: &Pts) -> LocPoly {
        let mut h = LocPoly::uniform(p, sp(p, "n - y"));
        h.set(1, Polynomial::constant(qi(-1)));
        h
    }

    #[test]
    fn past_inner_loop() {
        for (n, want) in [(1, 24), (2, 44)] {
            let p = models::nested_inner(qi(n));
            let b = past_bound(&p, &inner_h(&p), &q(-1, 5), &q(1, 20), false).unwrap();
            assert_eq!(b.bound_q, qi(want));
            assert_eq!(b.skipped, vec![1]);
            assert_eq!(b.k_verified.as_deref(), Some("-1/5"));
        }
    }

    #[test]
    fn past_outer_loop() {
        let p = models::nested_outer(qi(1));
        let mut h = LocPoly::uniform(&p, sp(&p, "m - x"));
        h.set(1, Polynomial::constant(qi(-1)));
        assert_eq!(past_bound(&p, &h, &q(-1, 5), &q(1, 20), false).unwrap().bound_q, qi(24));
    }

    #[test]
    fn past_rejects_weak_k_and_steep_eps() {
        let p = models::nested_inner(qi(1));
        assert!(matches!(
            past_bound(&p, &inner_h(&p), &q(-1, 10), &q(1, 20), false),
            Err(PastError::LowerBound(_))
        ));
        let ok = past_bound(&p, &inner_h(&p), &q(-1, 10), &q(1, 20), true).unwrap();
        assert_eq!(ok.assumptions.len(), 1);
        assert!(matches!(
            past_bound(&p, &inner_h(&p), &q(-1, 5), &q(1, 10), false),
            Err(PastError::Decrease { .. })
        ));
    }

    #[test]
    fn past_zero_when_start_at_k() {
        let p = models::nested_inner(qi(1)).with_init(InitialDistribution::point(vec![q(6, 5)]));
        let mut h = inner_h(&p);
        h.set(0, sp(&p, "n - y - 1/5"));
        let b = past_bound(&p, &h, &q(-1, 5), &q(1, 20), true).unwrap();
        assert_eq!(b.bound_q, Q::zero());
    }

    #[test]
    fn past_hare() {
        let p = models::hare();
        let mut h = LocPoly::uniform(&p, sp(&p, "x2 - x1"));
        h.set(1, Polynomial::constant(qi(-1)));
        let b = past_bound(&p, &h, &qi(-9), &q(3, 2), false).unwrap();
        assert_eq!(b.bound_q, qi(26));
    }

    fn arb_q() -> impl Strategy<Value = Q> {
        (-6i64..=6, 1i64..=4).prop_map(|(n, d)| q(n, d))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        /// For linear systems the pre-expectation equals `h` at the mean update.
        #[test]
        fn preexp_matches_determinized(
            coeffs in proptest::collection::vec(arb_q(), 2 * 2 * 4),
            probs in 1i64..=5,
            mu in arb_q(),
            a in arb_q(), b in arb_q(), c in arb_q(),
        ) {
            let names = ["x1", "x2"];
            let mut branches = Vec::new();
            for j in 0..2 {
                let images = (0..2)
                    .map(|i| {
                        let w = &coeffs[(j * 2 + i) * 4..(j * 2 + i + 1) * 4];
                        Polynomial::from_terms([
                            (Monomial::var(0), w[0].clone()),
                            (Monomial::var(1), w[1].clone()),
                            (Monomial::var(3), w[2].clone()),
                            (Monomial::one(), w[3].clone()),
                        ])
                    })
                    .collect();
                let prob = if j == 0 { q(probs, 6) } else { q(6 - probs, 6) };
                branches.push(UpdateBranch { prob, images });
            }
            let t = Transition { source: 0, guard: Guard::always(), branches, dest: 0 };
            let law = Distribution::normal(mu, qi(2)).unwrap();
            let p = Pts::new(&names, vec![("r".into(), law)], vec!["l0".into()], 0, None,
                InitialDistribution::point(vec![qi(0), qi(0)]), vec![t]).unwrap();
            let h = LocPoly::uniform(&p, Polynomial::from_terms([
                (Monomial::var(0), a), (Monomial::var(1), b), (Monomial::one(), c),
            ]));
            let cdts = determinize(&p);
            let det = preexp_transition(cdts.pts(), &h, &cdts.pts().transitions()[0], true);
            prop_assert_eq!(preexp_transition(&p, &h, &p.transitions()[0], true), det);
        }
    }
}
