//! Geometric persistence certificates: a location-indexed SOS polynomial `V`
//! with `preE(V, τ) ≤ (1 - ε) V` on every guard, found through an SDP and
//! re-checked independently before it is reported.

mod affine;
mod cert;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{fmt_sig, parse_rational, q_from_f64, q_to_f64, qi, Monomial, Polynomial, VarId, Q};
use crate::preexp::{preexp_poly, preexp_pts, LocPoly};
use crate::pts::Pts;
use crate::report::{Evidence, InvariantReport, Method};
use crate::sdp::{self, SdpBlock, SdpOptions, SdpProblem, SdpStatus};

pub use affine::{Aff, AffPoly};
pub use cert::{certificate_from_json, certificate_to_json, CertificateInput, CERT_SCHEMA};

#[derive(Debug, Error)]
pub enum SosError {
    #[error("degree must be even, got {0}")]
    OddDegree(u32),
    #[error("degree must be at least 2, got {0}")]
    DegreeTooSmall(u32),
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(Q),
    #[error(transparent)]
    Sdp(#[from] sdp::SdpError),
    #[error("no certificate: solver status {status:?}, margin {margin:e}")]
    NotFeasible { status: SdpStatus, margin: f64 },
    #[error("certificate rejected: {}", .0.failures.join("; "))]
    Rejected(Verification),
    #[error("bad certificate: {0}")]
    Certificate(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub psd: f64,
    pub res: f64,
    pub margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            psd: 1e-8,
            res: 1e-6,
            margin: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SosOptions {
    pub degree: u32,
    pub eps: Q,
    pub homogeneous: bool,
    pub tol: Tolerances,
    pub sdp: SdpOptions,
}

impl Default for SosOptions {
    fn default() -> Self {
        Self {
            degree: 2,
            eps: Q::new(1.into(), 1_000_000.into()),
            homogeneous: false,
            tol: Tolerances::default(),
            sdp: SdpOptions::default(),
        }
    }
}

/// Symmetric Gram matrix of unknowns over a monomial basis. Entry `(i, j)`
/// with `i <= j` is SDP parameter `offset + index`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramVar {
    pub name: String,
    pub basis: Vec<Monomial>,
    pub offset: usize,
}

impl GramVar {
    pub fn size(&self) -> usize {
        self.basis.len()
    }

    pub fn n_params(&self) -> usize {
        let s = self.size();
        s * (s + 1) / 2
    }

    /// `(i, j, parameter)` for `i <= j`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let s = self.size();
        (0..s)
            .flat_map(move |i| (i..s).map(move |j| (i, j)))
            .enumerate()
            .map(move |(e, (i, j))| (i, j, self.offset + e))
    }

    /// `z(x)ᵀ G z(x)` with the Gram entries as unknowns.
    pub fn poly(&self) -> AffPoly {
        let mut out = AffPoly::zero();
        for (i, j, idx) in self.entries() {
            let mult = if i == j { qi(1) } else { qi(2) };
            out.add_param_term(self.basis[i].mul(&self.basis[j]), idx, mult);
        }
        out
    }

    pub fn matrix(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size(), self.size());
        for (i, j, idx) in self.entries() {
            m[(i, j)] = y[idx];
            m[(j, i)] = y[idx];
        }
        m
    }

    fn block(&self) -> SdpBlock {
        let s = self.size();
        SdpBlock {
            c: DMatrix::zeros(s, s),
            a: self
                .entries()
                .map(|(i, j, idx)| {
                    let mut a = DMatrix::zeros(s, s);
                    a[(i, j)] = 1.0;
                    a[(j, i)] = 1.0;
                    (idx, a)
                })
                .collect(),
        }
    }

    pub fn value(&self, y: &[f64]) -> GramValue {
        GramValue {
            name: self.name.clone(),
            basis: self.basis.clone(),
            gram: self.matrix(y),
        }
    }
}

/// A numeric Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GramValue {
    pub name: String,
    pub basis: Vec<Monomial>,
    pub gram: DMatrix<f64>,
}

impl GramValue {
    /// `z(x)ᵀ G z(x)`, computed exactly from the float entries.
    pub fn poly(&self) -> Polynomial {
        let mut out = Polynomial::zero();
        let s = self.basis.len();
        for i in 0..s {
            for j in 0..s {
                let g = self.gram[(i, j)];
                if g != 0.0 {
                    out.add_term(self.basis[i].mul(&self.basis[j]), q_from_f64(g));
                }
            }
        }
        out
    }

    /// Square roots of the eigen-components, largest first. Eigenvalues
    /// below `tol_psd` are dropped and coefficients rounded to 12 digits.
    pub fn summands(&self, tol_psd: f64) -> Vec<Polynomial> {
        if self.basis.is_empty() {
            return Vec::new();
        }
        let sym = (&self.gram + self.gram.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] > tol_psd)
            .map(|i| {
                let r = eig.eigenvalues[i].sqrt();
                let v = eig.eigenvectors.column(i);
                // fix the sign so the first significant coefficient is positive
                let lead = v.iter().copied().find(|c| c.abs() > 1e-12).unwrap_or(1.0);
                let sign = if lead < 0.0 { -1.0 } else { 1.0 };
                let mut p = Polynomial::zero();
                for (k, m) in self.basis.iter().enumerate() {
                    let c = round_sig(sign * r * v[k], 12);
                    if !c.is_zero() {
                        p.add_term(m.clone(), c);
                    }
                }
                p
            })
            .filter(|p| !p.is_zero())
            .collect()
    }
}

fn round_sig(x: f64, digits: usize) -> Q {
    if x.abs() < 1e-15 {
        return Q::zero();
    }
    parse_rational(&fmt_sig(x, digits)).unwrap_or_else(|_| q_from_f64(x))
}

/// `lhs - Σ_j q_j p_j - σ ≡ 0` with SOS multipliers `q_j` and residual `σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SosConstraint {
    pub transition: Option<usize>,
    pub atoms: Vec<Polynomial>,
    pub multipliers: Vec<GramVar>,
    pub residual: GramVar,
    pub identity: AffPoly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SosSystem {
    pub degree: u32,
    pub eps: Q,
    pub homogeneous: bool,
    /// One Gram per location; empty when `V` is fixed.
    pub v: Vec<GramVar>,
    pub constraints: Vec<SosConstraint>,
    pub n_params: usize,
    /// Location whose V-Gram is normalized to trace 1.
    pub normalize: Option<usize>,
}

impl SosSystem {
    fn empty(degree: u32, eps: Q, homogeneous: bool) -> Self {
        Self {
            degree,
            eps,
            homogeneous,
            v: Vec::new(),
            constraints: Vec::new(),
            n_params: 0,
            normalize: None,
        }
    }

    fn alloc(&mut self, name: String, basis: Vec<Monomial>) -> GramVar {
        let g = GramVar {
            name,
            basis,
            offset: self.n_params,
        };
        self.n_params += g.n_params();
        g
    }

    /// Adds `lhs - Σ q_j p_j - σ = 0`, choosing multiplier degrees so the
    /// identity is degree-balanced and pruning the residual basis against
    /// the support of the identity.
    fn add_guarded(&mut self, label: String, transition: Option<usize>, lhs: AffPoly, atoms: &[Polynomial], vars: &[VarId], min_degree: u32) {
        let top = lhs.degree().max(min_degree);
        let target = top + top % 2;
        let mut identity = lhs;
        let mut multipliers = Vec::new();
        let mut kept = Vec::new();
        for (j, a) in atoms.iter().enumerate() {
            if a.is_constant() {
                continue;
            }
            let da = a.degree();
            if da > target {
                continue;
            }
            let dq = (target - da) / 2 * 2;
            let q = self.alloc(format!("q[{label},{j}]"), Monomial::all_up_to(vars, 0, dq / 2));
            identity.sub_assign(&q.poly().mul_poly(a));
            multipliers.push(q);
            kept.push(a.clone());
        }
        let basis = residual_basis(&identity.support(), vars);
        let residual = self.alloc(format!("sigma[{label}]"), basis);
        identity.sub_assign(&residual.poly());
        identity.prune();
        self.constraints.push(SosConstraint {
            transition,
            atoms: kept,
            multipliers,
            residual,
            identity,
        });
    }
}

/// Monomials of half the support degree range whose squares can appear.
fn residual_basis(support: &BTreeSet<Monomial>, vars: &[VarId]) -> Vec<Monomial> {
    let (Some(lo), Some(hi)) = (
        support.iter().map(Monomial::degree).min(),
        support.iter().map(Monomial::degree).max(),
    ) else {
        return Vec::new();
    };
    let mut basis = Monomial::all_up_to(vars, lo.div_ceil(2), hi / 2);
    loop {
        let snapshot = basis.clone();
        basis.retain(|m| {
            let sq = m.mul(m);
            support.contains(&sq)
                || snapshot
                    .iter()
                    .enumerate()
                    .any(|(i, a)| snapshot[i + 1..].iter().any(|b| a.mul(b) == sq))
        });
        if basis.len() == snapshot.len() {
            return basis;
        }
    }
}

fn program_vars(p: &Pts) -> Vec<VarId> {
    (0..p.num_program_vars() as VarId).collect()
}

fn check_degree(d: u32) -> Result<(), SosError> {
    if d % 2 == 1 {
        return Err(SosError::OddDegree(d));
    }
    if d < 2 {
        return Err(SosError::DegreeTooSmall(d));
    }
    Ok(())
}

/// `preE(V, τ)` with the Gram entries of `V(dest)` as unknowns.
fn preexp_template(p: &Pts, g: &GramVar, t: &crate::pts::Transition) -> AffPoly {
    let mut cache: HashMap<Monomial, Polynomial> = HashMap::new();
    let mut out = AffPoly::zero();
    for (i, j, idx) in g.entries() {
        let m = g.basis[i].mul(&g.basis[j]);
        let pe = cache
            .entry(m.clone())
            .or_insert_with(|| preexp_poly(p, &Polynomial::term(qi(1), m), t))
            .clone();
        let mult = if i == j { qi(1) } else { qi(2) };
        out.add_param_poly(&pe, idx, &mult);
    }
    out
}

/// The constraint system for an unknown `V` of degree `d` with
/// `α = 1 - ε`. Strict guard atoms are relaxed to `≥ 0`.
pub fn build_constraints(p: &Pts, d: u32, eps: &Q, homogeneous: bool) -> Result<SosSystem, SosError> {
    check_degree(d)?;
    if !num_traits::Signed::is_positive(eps) || *eps >= Q::one() {
        return Err(SosError::BadEpsilon(eps.clone()));
    }
    let vars = program_vars(p);
    let lo = if homogeneous { d / 2 } else { 0 };
    let mut sys = SosSystem::empty(d, eps.clone(), homogeneous);
    for l in p.locations() {
        let basis = Monomial::all_up_to(&vars, lo, d / 2);
        let g = sys.alloc(format!("V[{l}]"), basis);
        sys.v.push(g);
    }
    sys.normalize = Some(p.init_loc());
    let alpha = Q::one() - eps;
    let live: Vec<(usize, &crate::pts::Transition)> = p.live_transitions().collect();
    for (ti, t) in live {
        let mut lhs = sys.v[t.source].poly().scale(&alpha);
        lhs.sub_assign(&preexp_template(p, &sys.v[t.dest], t));
        let atoms: Vec<Polynomial> = t.guard.atoms.iter().map(|a| a.lhs.clone()).collect();
        sys.add_guarded(format!("t{ti}"), Some(ti), lhs, &atoms, &vars, d);
    }
    Ok(sys)
}

/// Block-diagonal margin SDP: one block per Gram variable, one equality per
/// monomial of every identity, plus the trace normalization.
pub fn compile_to_sdp(sys: &SosSystem) -> SdpProblem {
    let mut prob = SdpProblem::new(sys.n_params);
    let grams = sys
        .v
        .iter()
        .chain(sys.constraints.iter().flat_map(|c| c.multipliers.iter().chain(std::iter::once(&c.residual))));
    for g in grams {
        if g.size() > 0 {
            prob.blocks.push(g.block());
        }
    }
    for c in &sys.constraints {
        for aff in c.identity.coeffs() {
            let mut row = vec![0.0; sys.n_params];
            for (j, v) in &aff.coeffs {
                row[*j] = q_to_f64(v);
            }
            prob.equalities.push((row, -q_to_f64(&aff.constant)));
        }
    }
    if let Some(l) = sys.normalize {
        let mut row = vec![0.0; sys.n_params];
        for (i, j, idx) in sys.v[l].entries() {
            if i == j {
                row[idx] = 1.0;
            }
        }
        prob.equalities.push((row, 1.0));
    }
    prob
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEigen {
    pub block: String,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionResidual {
    pub transition: usize,
    pub max_abs_coeff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub min_eigenvalues: Vec<BlockEigen>,
    pub residuals: Vec<TransitionResidual>,
    pub tol_psd: f64,
    pub tol_res: f64,
    pub passed: bool,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierValue {
    pub atom: Polynomial,
    pub gram: GramValue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintValue {
    pub transition: usize,
    pub multipliers: Vec<MultiplierValue>,
    pub residual: GramValue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SosCertificate {
    pub degree: u32,
    pub eps: Q,
    pub alpha: Q,
    pub homogeneous: bool,
    /// One V-Gram per location.
    pub v: Vec<GramValue>,
    /// `V(x, l) = Σ_i P_{l,i}(x)²`.
    pub summands: Vec<Vec<Polynomial>>,
    pub constraints: Vec<ConstraintValue>,
    pub verification: Verification,
}

impl SosCertificate {
    pub fn v_poly(&self) -> LocPoly {
        LocPoly::new(self.v.iter().map(GramValue::poly).collect())
    }

    /// Each summand as a location-indexed polynomial that is zero elsewhere.
    pub fn summand_polys(&self) -> Vec<(usize, LocPoly)> {
        let n = self.v.len();
        let mut out = Vec::new();
        for (l, ps) in self.summands.iter().enumerate() {
            for s in ps {
                let mut lp = LocPoly::new(vec![Polynomial::zero(); n]);
                lp.set(l, s.clone());
                out.push((l, lp));
            }
        }
        out
    }
}

/// Recomputes every condition of the certificate from its numeric Grams:
/// all Grams PSD within `tol.psd`, and for each live transition the
/// residual of `(1-ε)V - preE(V) - Σ q_j p_j - σ` below `tol.res`.
pub fn verify_certificate(p: &Pts, cert: &SosCertificate, tol: &Tolerances) -> Verification {
    let mut failures = Vec::new();
    let mut min_eigenvalues = Vec::new();
    let all = cert
        .v
        .iter()
        .chain(cert.constraints.iter().flat_map(|c| c.multipliers.iter().map(|m| &m.gram).chain(std::iter::once(&c.residual))));
    for g in all {
        let e = if g.basis.is_empty() {
            0.0
        } else {
            sdp::min_eigenvalue(&g.gram).unwrap_or(f64::NEG_INFINITY)
        };
        if e < -tol.psd {
            failures.push(format!("{} has eigenvalue {e:e}", g.name));
        }
        min_eigenvalues.push(BlockEigen {
            block: g.name.clone(),
            min_eigenvalue: e,
        });
    }
    if cert.v.len() != p.locations().len() {
        failures.push(format!("expected {} V-Grams, found {}", p.locations().len(), cert.v.len()));
    }
    let v = cert.v_poly();
    if v.len() == p.locations().len() && v.at(p.init_loc()).is_zero() {
        failures.push("V is zero at the initial location".into());
    }
    let live: Vec<(usize, &crate::pts::Transition)> = p.live_transitions().collect();
    let residuals: Vec<Result<TransitionResidual, String>> = live
        .par_iter()
        .map(|(ti, t)| {
            let c = cert
                .constraints
                .iter()
                .find(|c| c.transition == *ti)
                .ok_or_else(|| format!("no constraint for transition {ti}"))?;
            if v.len() != p.locations().len() {
                return Err("location count mismatch".into());
            }
            let mut r = v.at(t.source).scale(&cert.alpha) - preexp_poly(p, v.at(t.dest), t);
            for m in &c.multipliers {
                r = r - &m.gram.poly() * &m.atom;
            }
            r = r - c.residual.poly();
            Ok(TransitionResidual {
                transition: *ti,
                max_abs_coeff: r.max_abs_coeff(),
            })
        })
        .collect();
    let mut res = Vec::new();
    for r in residuals {
        match r {
            Ok(r) => {
                if r.max_abs_coeff.is_nan() || r.max_abs_coeff > tol.res {
                    failures.push(format!("transition {} residual {:e}", r.transition, r.max_abs_coeff));
                }
                res.push(r);
            }
            Err(e) => failures.push(e),
        }
    }
    for c in &cert.constraints {
        let Some((_, t)) = live.iter().find(|(ti, _)| *ti == c.transition) else {
            failures.push(format!("constraint for unknown transition {}", c.transition));
            continue;
        };
        for m in &c.multipliers {
            if !t.guard.atoms.iter().any(|a| a.lhs == m.atom) {
                failures.push(format!("multiplier atom of transition {} is not a guard atom", c.transition));
            }
        }
    }
    Verification {
        min_eigenvalues,
        residuals: res,
        tol_psd: tol.psd,
        tol_res: tol.res,
        passed: failures.is_empty(),
        failures,
    }
}

fn gram_values(sys: &SosSystem, y: &[f64]) -> (Vec<GramValue>, Vec<ConstraintValue>) {
    let v = sys.v.iter().map(|g| g.value(y)).collect();
    let cs = sys
        .constraints
        .iter()
        .map(|c| ConstraintValue {
            transition: c.transition.unwrap_or(usize::MAX),
            multipliers: c
                .multipliers
                .iter()
                .zip(&c.atoms)
                .map(|(g, a)| MultiplierValue {
                    atom: a.clone(),
                    gram: g.value(y),
                })
                .collect(),
            residual: c.residual.value(y),
        })
        .collect();
    (v, cs)
}

/// Reads the numeric Grams off a solver answer, factors the V-Grams into
/// summands and verifies the result.
pub fn extract_certificate(p: &Pts, sys: &SosSystem, sol: &sdp::SdpSolution, tol: &Tolerances) -> Result<SosCertificate, SosError> {
    if sol.status != SdpStatus::Feasible {
        return Err(SosError::NotFeasible {
            status: sol.status,
            margin: sol.t,
        });
    }
    let (v, constraints) = gram_values(sys, &sol.y);
    let summands = v.iter().map(|g| g.summands(tol.psd)).collect();
    let mut cert = SosCertificate {
        degree: sys.degree,
        eps: sys.eps.clone(),
        alpha: Q::one() - &sys.eps,
        homogeneous: sys.homogeneous,
        v,
        summands,
        constraints,
        verification: empty_verification(tol),
    };
    cert.verification = verify_certificate(p, &cert, tol);
    if cert.verification.passed {
        Ok(cert)
    } else {
        Err(SosError::Rejected(cert.verification))
    }
}

fn empty_verification(tol: &Tolerances) -> Verification {
    Verification {
        min_eigenvalues: Vec::new(),
        residuals: Vec::new(),
        tol_psd: tol.psd,
        tol_res: tol.res,
        passed: false,
        failures: Vec::new(),
    }
}

/// Builds, solves and verifies a certificate.
pub fn synth_sos(p: &Pts, opts: &SosOptions) -> Result<SosCertificate, SosError> {
    let sys = build_constraints(p, opts.degree, &opts.eps, opts.homogeneous)?;
    let prob = compile_to_sdp(&sys);
    let sdp_opts = SdpOptions {
        tol_margin: opts.tol.margin,
        ..opts.sdp
    };
    let sol = sdp::solve(&prob, &sdp_opts)?;
    extract_certificate(p, &sys, &sol, &opts.tol)
}

/// Certificate for a given `V`: each `V(l)` must be SOS, and multipliers
/// and residuals are solved for with `V` fixed.
pub fn certificate_for_v(p: &Pts, v: &LocPoly, eps: &Q, opts: &SosOptions) -> Result<SosCertificate, SosError> {
    if v.len() != p.locations().len() {
        return Err(SosError::Certificate(format!(
            "V has {} locations, the model has {}",
            v.len(),
            p.locations().len()
        )));
    }
    if v.iter().any(|q| q.variables().iter().any(|&x| !p.is_program_var(x))) {
        return Err(SosError::Certificate("V may only mention program variables".into()));
    }
    let mut grams = Vec::new();
    for (l, poly) in v.iter().enumerate() {
        match check_sos_membership(poly, opts) {
            SosMembership::Sos { basis, gram } => grams.push(GramValue {
                name: format!("V[{}]", p.locations()[l]),
                basis,
                gram,
            }),
            SosMembership::NotSos { margin } => {
                return Err(SosError::Certificate(format!(
                    "V at {} is not SOS (margin {margin:e})",
                    p.locations()[l]
                )))
            }
        }
    }
    let vars = program_vars(p);
    let alpha = Q::one() - eps;
    let mut sys = SosSystem::empty(v.degree(), eps.clone(), false);
    for (ti, t) in p.live_transitions() {
        let lhs = AffPoly::constant(&(v.at(t.source).scale(&alpha) - preexp_poly(p, v.at(t.dest), t)));
        let atoms: Vec<Polynomial> = t.guard.atoms.iter().map(|a| a.lhs.clone()).collect();
        sys.add_guarded(format!("t{ti}"), Some(ti), lhs, &atoms, &vars, 0);
    }
    let prob = compile_to_sdp(&sys);
    let sdp_opts = SdpOptions {
        tol_margin: opts.tol.margin,
        ..opts.sdp
    };
    let sol = sdp::solve(&prob, &sdp_opts)?;
    let (_, constraints) = gram_values(&sys, &sol.y);
    let mut cert = SosCertificate {
        degree: v.degree(),
        eps: eps.clone(),
        alpha,
        homogeneous: false,
        summands: grams.iter().map(|g| g.summands(opts.tol.psd)).collect(),
        v: grams,
        constraints,
        verification: empty_verification(&opts.tol),
    };
    cert.verification = verify_certificate(p, &cert, &opts.tol);
    if sol.status != SdpStatus::Feasible {
        cert.verification.passed = false;
        cert.verification
            .failures
            .push(format!("solver status {:?}, margin {:e}", sol.status, sol.t));
    }
    Ok(cert)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SosMembership {
    Sos { basis: Vec<Monomial>, gram: DMatrix<f64> },
    NotSos { margin: f64 },
}

/// Whether `q` has a PSD Gram matrix reconstructing it within `tol.res`.
pub fn check_sos_membership(q: &Polynomial, opts: &SosOptions) -> SosMembership {
    if q.is_zero() {
        return SosMembership::Sos {
            basis: Vec::new(),
            gram: DMatrix::zeros(0, 0),
        };
    }
    if q.degree() % 2 == 1 {
        return SosMembership::NotSos {
            margin: f64::NEG_INFINITY,
        };
    }
    let vars: Vec<VarId> = q.variables().into_iter().collect();
    let mut sys = SosSystem::empty(q.degree(), Q::zero(), false);
    sys.add_guarded("q".into(), None, AffPoly::constant(q), &[], &vars, 0);
    let c = &sys.constraints[0];
    let Ok(sol) = sdp::solve(&compile_to_sdp(&sys), &SdpOptions {
        tol_margin: opts.tol.margin,
        ..opts.sdp
    }) else {
        return SosMembership::NotSos { margin: f64::NAN };
    };
    let g = c.residual.value(&sol.y);
    let ok = sol.status == SdpStatus::Feasible
        && (q - &g.poly()).max_abs_coeff() <= opts.tol.res
        && (g.basis.is_empty() || sdp::min_eigenvalue(&g.gram).map(|e| e >= -opts.tol.psd).unwrap_or(false));
    if ok {
        SosMembership::Sos {
            basis: g.basis,
            gram: g.gram,
        }
    } else {
        SosMembership::NotSos { margin: sol.t }
    }
}

/// Numeric Putinar-style check that `q ≥ 0` wherever every atom is `≥ 0`.
/// `true` only for a certificate that survives re-verification.
pub fn nonneg_on(q: &Polynomial, atoms: &[crate::poly::Inequality]) -> bool {
    let opts = SosOptions::default();
    let mut vars: BTreeSet<VarId> = q.variables();
    for a in atoms {
        vars.extend(a.lhs.variables());
    }
    let vars: Vec<VarId> = vars.into_iter().collect();
    let lhs: Vec<Polynomial> = atoms.iter().map(|a| a.lhs.clone()).collect();
    let mut sys = SosSystem::empty(0, Q::zero(), false);
    sys.add_guarded("q".into(), None, AffPoly::constant(q), &lhs, &vars, 0);
    let Ok(sol) = sdp::solve(&compile_to_sdp(&sys), &opts.sdp) else {
        return false;
    };
    if sol.status != SdpStatus::Feasible {
        return false;
    }
    let (_, cs) = gram_values(&sys, &sol.y);
    let c = &cs[0];
    let mut r = q.clone();
    for m in &c.multipliers {
        if !m.gram.basis.is_empty() && sdp::min_eigenvalue(&m.gram.gram).map_or(true, |e| e < -opts.tol.psd) {
            return false;
        }
        r = r - &m.gram.poly() * &m.atom;
    }
    if !c.residual.basis.is_empty() && sdp::min_eigenvalue(&c.residual.gram).map_or(true, |e| e < -opts.tol.psd) {
        return false;
    }
    (r - c.residual.poly()).max_abs_coeff() <= opts.tol.res
}

pub fn iud_evidence(p: &Pts, cert: &SosCertificate) -> Evidence {
    let v = cert.v_poly();
    Evidence::Iud {
        certificate: format!(
            "V = {} (verified: {})",
            v.iter().map(|q| q.display_approx(p.vars(), 6).to_string()).collect::<Vec<_>>().join(" | "),
            cert.verification.passed
        ),
        alpha: cert.alpha.to_string(),
    }
}

/// Doob martingale of `P`:
/// `M_k = P(X^k, L^k) + Σ_{i<k} (P - preE(P))(X^i, L^i)`.
pub fn doob_invariant(p: &Pts, pp: &LocPoly, evidence: Evidence) -> InvariantReport {
    let pieces = preexp_pts(p, pp, true);
    let mut ratio: Option<Option<Q>> = None;
    for (ti, t) in p.live_transitions() {
        let pe = &pieces.pieces[ti].poly;
        let at = pp.at(t.source);
        let diff = at - pe;
        let r = if at.is_zero() {
            diff.is_zero().then(Q::zero)
        } else if diff.is_zero() {
            Some(Q::zero())
        } else {
            diff.ratio_to(at)
        };
        ratio = Some(match (ratio, r) {
            (None, r) => r,
            (Some(Some(a)), Some(b)) if a == b => Some(a),
            (Some(Some(a)), Some(_)) if pp.at(t.source).is_zero() => Some(a),
            _ => None,
        });
    }
    let correction = ratio.flatten();
    let shown = if pp.len() == 1 {
        format!("({})", pp.at(0).display(p.vars()))
    } else {
        format!("P = {}", pp.display(p))
    };
    let martingale = if pp.is_zero() {
        "M_k = 0".to_string()
    } else {
        match &correction {
            Some(c) if c.is_zero() => format!("M_k = P(X^k, L^k), P = {shown}"),
            Some(c) => format!("M_k = P(X^k, L^k) + {c} * Σ_{{i<k}} P(X^i, L^i), P = {shown}"),
            None => format!("M_k = P(X^k, L^k) + Σ_{{i<k}} (P - preE(P))(X^i, L^i), P = {shown}"),
        }
    };
    let k = p.step_var();
    let mut at0 = BTreeMap::new();
    at0.insert(k, Polynomial::zero());
    let p0 = pp.at(p.init_loc()).substitute(&at0);
    let e0 = p.init().expect(&p0);
    let e0q = if e0.is_constant() { e0.constant_term() } else { Q::zero() };
    let (init_s, init_f) = InvariantReport::initial(&e0q);
    let mut assumptions = vec!["the stopping time T is at most the hitting time of the final location".to_string()];
    if !e0.is_constant() {
        assumptions.push(format!("initial expectation is symbolic: {}", e0.display(p.vars())));
    }
    InvariantReport {
        method: Method::SosIud,
        seed: p
            .locations()
            .iter()
            .zip(pp.iter())
            .map(|(l, q)| (l.clone(), q.display(p.vars()).to_string()))
            .collect(),
        seed_poly: pp.clone(),
        preexp: pieces.display(p),
        martingale,
        statement: format!("E(M_T) = E(P(X^0, L^0)) = {init_s} for every stopping time T"),
        evidence,
        initial_expectation: init_s,
        initial_expectation_f64: init_f,
        correction_factor: correction,
        assumptions,
    }
}

/// `P` divided by its largest coefficient, rounded to 6 significant digits.
/// Near-ties go to the leading monomial in display order.
pub fn normalized_summand(pp: &Polynomial) -> Polynomial {
    let Some((_, lead)) = pp
        .terms()
        .map(|(m, c)| (m, q_to_f64(c)))
        .fold(None, |best: Option<(&Monomial, f64)>, (m, c)| match best {
            Some((_, b)) if b.abs() > c.abs() * (1.0 + 1e-6) => best,
            _ => Some((m, c)),
        })
    else {
        return Polynomial::zero();
    };
    pp.map_coeffs(|_, c| round_sig(q_to_f64(c) / lead, 6))
}

/// Reports for every summand of a verified certificate, each scaled by
/// [`normalized_summand`].
pub fn invariant_reports_sos(p: &Pts, cert: &SosCertificate) -> Vec<InvariantReport> {
    cert.summand_polys()
        .into_iter()
        .map(|(l, pp)| {
            let mut scaled = pp.clone();
            scaled.set(l, normalized_summand(pp.at(l)));
            let mut r = doob_invariant(p, &scaled, iud_evidence(p, cert));
            r.assumptions
                .push("P is a certificate summand scaled to largest coefficient 1 and rounded to 6 digits".to_string());
            r
        })
        .collect()
}

/// A sampled point where `preE(P, τ)² > j_τ · preE(V, τ)` (with a relative
/// slack for rounding), `j_τ` being the number of summands at the
/// destination.
#[derive(Clone, Debug, PartialEq)]
pub struct InequalityWitness {
    pub transition: usize,
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn check_summand_inequality(p: &Pts, cert: &SosCertificate, samples: usize, seed: u64) -> Result<usize, InequalityWitness> {
    let v = cert.v_poly();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.num_program_vars();
    let mut checked = 0;
    for (ti, t) in p.live_transitions() {
        let pv = preexp_poly(p, v.at(t.dest), t);
        let j = cert.summands[t.dest].len().max(1) as f64;
        let pes: Vec<Polynomial> = cert.summands[t.dest].iter().map(|s| preexp_poly(p, s, t)).collect();
        for _ in 0..samples {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let pt = p.dense_point(&x, 0.0, &vec![0.0; p.randoms().count()]);
            let rhs = j * pv.eval_dense(&pt).expect("state point");
            for pe in &pes {
                let lhs = pe.eval_dense(&pt).expect("state point").powi(2);
                if lhs > rhs + 1e-9 * (1.0 + rhs.abs()) {
                    return Err(InequalityWitness {
                        transition: ti,
                        point: x,
                        lhs,
                        rhs,
                    });
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}

#[cfg(test)]
mod tests;
