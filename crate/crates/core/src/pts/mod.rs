//! Polynomial probabilistic transition systems.
//!
//! Variable ids are laid out as: program variables `0..n`, the step counter
//! `k` at id `n`, then random variables in name order.

mod json;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::moments::{Distribution, InitialDistribution};
use crate::poly::{Inequality, PolyError, Polynomial, Scalar, VarId, Vars, Q};

pub use json::{load_pts, load_pts_with_params, save_pts, SCHEMA};

/// Reserved name of the step counter.
pub const STEP_VAR: &str = "k";

#[derive(Debug, Error)]
pub enum PtsError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("in {context}: {source}")]
    Poly {
        context: String,
        #[source]
        source: PolyError,
    },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown location `{0}`")]
    UnknownLocation(String),
    #[error("no transitions")]
    NoTransitions,
    #[error("transition {0}: {1}")]
    BadProbabilities(usize, String),
    #[error("`{0}` is reserved for the step counter")]
    ReservedName(String),
    #[error("no enabled transition at location `{0}`")]
    NoEnabled(String),
    #[error("multiple enabled transitions at location `{location}`: {transitions:?}")]
    MultipleEnabled {
        location: String,
        transitions: Vec<usize>,
    },
}

/// Conjunction of atoms; the empty conjunction is `true`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Guard {
    pub atoms: Vec<Inequality>,
}

impl Guard {
    pub fn always() -> Self {
        Self::default()
    }

    pub fn is_true(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn holds<S: Scalar>(&self, point: &[S]) -> bool {
        self.atoms.iter().all(|a| a.holds(point))
    }

    pub fn display(&self, vars: &Vars) -> String {
        if self.atoms.is_empty() {
            return "true".into();
        }
        self.atoms
            .iter()
            .map(|a| a.display(vars).to_string())
            .collect::<Vec<_>>()
            .join(" && ")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateBranch {
    pub prob: Q,
    /// One image per program variable, over program and random variables.
    pub images: Vec<Polynomial>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub source: usize,
    pub guard: Guard,
    pub branches: Vec<UpdateBranch>,
    pub dest: usize,
}

impl Transition {
    pub fn is_identity(&self) -> bool {
        self.branches
            .iter()
            .all(|b| b.images.iter().enumerate().all(|(i, p)| *p == Polynomial::var(i as VarId)))
    }
}

/// A location together with a valuation of the program variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration<S = f64> {
    pub location: usize,
    pub valuation: Vec<S>,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pts {
    pub(crate) vars: Vars,
    pub(crate) n_prog: usize,
    pub(crate) randoms: Vec<Distribution>,
    pub(crate) locations: Vec<String>,
    pub(crate) init_loc: usize,
    pub(crate) final_loc: Option<usize>,
    pub(crate) init: InitialDistribution,
    pub(crate) transitions: Vec<Transition>,
    pub(crate) trusted: bool,
    pub(crate) description: Option<String>,
    pub(crate) params: BTreeMap<String, Q>,
}

impl Pts {
    /// Builds a system from parts. Random variable `i` gets id `n + 1 + i`
    /// where `n = program_vars.len()`; transition polynomials must use that
    /// layout.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        program_vars: &[&str],
        randoms: Vec<(String, Distribution)>,
        locations: Vec<String>,
        init_loc: usize,
        final_loc: Option<usize>,
        init: InitialDistribution,
        transitions: Vec<Transition>,
    ) -> Result<Pts, PtsError> {
        let mut vars = Vars::new(program_vars);
        if vars.id(STEP_VAR).is_some() {
            return Err(PtsError::ReservedName(STEP_VAR.into()));
        }
        vars.push(STEP_VAR);
        for (name, _) in &randoms {
            if vars.id(name).is_some() {
                return Err(PtsError::Schema(format!("duplicate name `{name}`")));
            }
            vars.push(name);
        }
        let n_prog = program_vars.len();
        if init.laws().len() != n_prog {
            return Err(PtsError::Schema("initial distribution arity".into()));
        }
        if transitions.is_empty() {
            return Err(PtsError::NoTransitions);
        }
        for (i, t) in transitions.iter().enumerate() {
            if t.source >= locations.len() || t.dest >= locations.len() {
                return Err(PtsError::UnknownLocation(format!("#{}", t.source.max(t.dest))));
            }
            let total: Q = t.branches.iter().map(|b| b.prob.clone()).sum();
            if t.branches.is_empty() || total != Q::from_integer(1.into()) {
                return Err(PtsError::BadProbabilities(i, format!("probabilities sum to {total}")));
            }
            for b in &t.branches {
                if b.images.len() != n_prog {
                    return Err(PtsError::Schema(format!("transition {i}: update arity")));
                }
                for img in &b.images {
                    if img.variables().iter().any(|&v| v as usize == n_prog || v as usize >= vars.len()) {
                        return Err(PtsError::Schema(format!("transition {i}: undeclared variable in update")));
                    }
                }
            }
        }
        Ok(Pts {
            vars,
            n_prog,
            randoms: randoms.into_iter().map(|(_, d)| d).collect(),
            locations,
            init_loc,
            final_loc,
            init,
            transitions,
            trusted: false,
            description: None,
            params: BTreeMap::new(),
        })
    }

    /// All variable names: program variables, `k`, random variables.
    pub fn vars(&self) -> &Vars {
        &self.vars
    }

    pub fn num_program_vars(&self) -> usize {
        self.n_prog
    }

    pub fn program_var_names(&self) -> &[String] {
        &self.vars.names()[..self.n_prog]
    }

    pub fn step_var(&self) -> VarId {
        self.n_prog as VarId
    }

    pub fn is_program_var(&self, v: VarId) -> bool {
        (v as usize) < self.n_prog
    }

    pub fn is_random_var(&self, v: VarId) -> bool {
        (v as usize) > self.n_prog
    }

    /// `(id, law)` for each random variable.
    pub fn randoms(&self) -> impl Iterator<Item = (VarId, &Distribution)> {
        self.randoms
            .iter()
            .enumerate()
            .map(move |(i, d)| ((self.n_prog + 1 + i) as VarId, d))
    }

    pub fn random_laws(&self) -> HashMap<VarId, &Distribution> {
        self.randoms().collect()
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn location_id(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l == name)
    }

    pub fn init_loc(&self) -> usize {
        self.init_loc
    }

    pub fn final_loc(&self) -> Option<usize> {
        self.final_loc
    }

    pub fn init(&self) -> &InitialDistribution {
        &self.init
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn trusted(&self) -> bool {
        self.trusted
    }

    pub fn description(&self) -> Option<&str> {
        self.description.as_deref()
    }

    pub fn params(&self) -> &BTreeMap<String, Q> {
        &self.params
    }

    /// Transitions that matter before termination: everything not leaving
    /// the final location.
    pub fn live_transitions(&self) -> impl Iterator<Item = (usize, &Transition)> {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| Some(t.source) != self.final_loc)
    }

    /// Same system with a different initial distribution.
    pub fn with_init(&self, init: InitialDistribution) -> Pts {
        assert_eq!(init.laws().len(), self.n_prog, "initial distribution arity");
        Pts { init, ..self.clone() }
    }

    /// Parses a polynomial over program variables and `k`, with the model's
    /// parameters in scope.
    pub fn parse_state_poly(&self, text: &str) -> Result<Polynomial, PtsError> {
        let p = crate::poly::parse_polynomial(text, &self.scope(true)).map_err(|source| PtsError::Poly {
            context: format!("`{text}`"),
            source,
        })?;
        if let Some(v) = p.variables().into_iter().find(|&v| self.is_random_var(v)) {
            return Err(PtsError::Schema(format!(
                "random variable `{}` not allowed here",
                self.vars.name(v)
            )));
        }
        Ok(p)
    }

    pub(crate) fn scope(&self, with_step: bool) -> HashMap<String, crate::poly::Symbol> {
        use crate::poly::Symbol;
        let mut s: HashMap<String, Symbol> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), Symbol::Const(v.clone())))
            .collect();
        for (i, name) in self.vars.names().iter().enumerate() {
            if i == self.n_prog && !with_step {
                continue;
            }
            s.insert(name.clone(), Symbol::Var(i as VarId));
        }
        s
    }

    /// Dense evaluation point of length `|vars|` with `k` and the randoms
    /// filled in.
    pub fn dense_point<S: Scalar>(&self, x: &[S], k: S, r: &[S]) -> Vec<S> {
        let mut pt = Vec::with_capacity(self.vars.len());
        pt.extend_from_slice(x);
        pt.push(k);
        pt.extend_from_slice(r);
        pt
    }

    /// Index of the unique transition enabled at `(loc, x)`.
    pub fn enabled_index<S: Scalar>(&self, loc: usize, x: &[S]) -> Result<usize, PtsError> {
        let pt = self.dense_point(x, S::zero(), &vec![S::zero(); self.randoms.len()]);
        let mut found = Vec::new();
        for (i, t) in self.transitions.iter().enumerate() {
            if t.source == loc && t.guard.holds(&pt) {
                found.push(i);
            }
        }
        match found.len() {
            1 => Ok(found[0]),
            0 => Err(PtsError::NoEnabled(self.locations[loc].clone())),
            _ => Err(PtsError::MultipleEnabled {
                location: self.locations[loc].clone(),
                transitions: found,
            }),
        }
    }

    pub fn enabled_transition<S: Scalar>(&self, c: &Configuration<S>) -> Result<&Transition, PtsError> {
        self.enabled_index(c.location, &c.valuation).map(|i| &self.transitions[i])
    }

    /// Applies branch `b` of transition `t` at state `x` with random sample `r`.
    pub fn apply_branch<S: Scalar>(&self, t: &Transition, b: usize, x: &[S], r: &[S]) -> Vec<S> {
        let pt = self.dense_point(x, S::zero(), r);
        t.branches[b]
            .images
            .iter()
            .map(|p| p.eval_dense(&pt).expect("update variables bound"))
            .collect()
    }

    /// Checks that exactly one transition is enabled everywhere, exactly
    /// where guards form a recognised partition and by sampling elsewhere.
    pub fn validate_nondemonic(&self, samples: usize, seed: u64) -> NondemonicReport {
        let mut locations = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for loc in 0..self.locations.len() {
            let outgoing: Vec<&Transition> = self.transitions.iter().filter(|t| t.source == loc).collect();
            let verdict = if exact_partition(&outgoing) {
                Verdict::ExactPass
            } else {
                self.sample_location(loc, samples, &mut rng)
            };
            locations.push(LocationVerdict {
                location: self.locations[loc].clone(),
                verdict,
            });
        }
        NondemonicReport {
            trusted: self.trusted,
            locations,
        }
    }

    fn sample_location(&self, loc: usize, samples: usize, rng: &mut ChaCha8Rng) -> Verdict {
        let n = self.n_prog;
        let mut queue: Vec<Vec<f64>> = vec![vec![1.0; n], vec![0.0; n]];
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; n];
                e[i] = s;
                queue.push(e);
            }
        }
        let mut checked = 0;
        let mut next = 0;
        while checked < samples {
            let x = if next < queue.len() {
                next += 1;
                queue[next - 1].clone()
            } else {
                (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            };
            if x.iter().any(|v| !v.is_finite()) {
                continue;
            }
            checked += 1;
            match self.enabled_index(loc, &x) {
                Ok(i) => {
                    let t = &self.transitions[i];
                    if t.dest == loc && queue.len() < samples {
                        let r: Vec<f64> = self.randoms.iter().map(|d| d.sample(rng)).collect();
                        for b in 0..t.branches.len() {
                            queue.push(self.apply_branch(t, b, &x, &r));
                        }
                    }
                }
                Err(PtsError::MultipleEnabled { transitions, .. }) => {
                    return Verdict::Fail {
                        witness: x,
                        enabled: transitions,
                    }
                }
                Err(_) => {
                    return Verdict::Fail {
                        witness: x,
                        enabled: vec![],
                    }
                }
            }
        }
        Verdict::Pass { samples: checked }
    }
}

/// One `true` guard, or two single-atom guards `{p >= 0, -p > 0}`.
fn exact_partition(ts: &[&Transition]) -> bool {
    match ts {
        [t] => t.guard.is_true(),
        [a, b] => match (&a.guard.atoms[..], &b.guard.atoms[..]) {
            ([x], [y]) => x.is_complement_of(y),
            _ => false,
        },
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    ExactPass,
    Pass { samples: usize },
    Fail { witness: Vec<f64>, enabled: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocationVerdict {
    pub location: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NondemonicReport {
    pub trusted: bool,
    pub locations: Vec<LocationVerdict>,
}

impl NondemonicReport {
    pub fn passed(&self) -> bool {
        self.locations.iter().all(|l| !matches!(l.verdict, Verdict::Fail { .. }))
    }

    pub fn failure(&self) -> Option<&LocationVerdict> {
        self.locations.iter().find(|l| matches!(l.verdict, Verdict::Fail { .. }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::poly::{q, qi};

    #[test]
    fn markov_shape() {
        let p = models::markov();
        assert_eq!(p.locations().len(), 1);
        assert_eq!(p.transitions().len(), 1);
        assert_eq!(p.transitions()[0].branches.len(), 2);
        assert!(p.final_loc().is_none());
        assert_eq!(p.transitions()[0].branches[0].prob, q(1, 2));
    }

    #[test]
    fn hare_shape() {
        let p = models::hare();
        assert_eq!(p.locations().len(), 2);
        // loop, exit, and the automatic self-loop at the final location
        let live: Vec<_> = p.live_transitions().collect();
        assert_eq!(live.len(), 2);
        assert_eq!(live[0].1.branches.len(), 2);
        assert_eq!(p.transitions().len(), 3);
        assert!(p.transitions()[2].is_identity());
    }

    #[test]
    fn empty_transitions_rejected() {
        let doc = r#"{"vars":["x"],"locations":["l0"],"init_loc":"l0","init":{"x":"0"},"transitions":[]}"#;
        assert!(matches!(load_pts(doc), Err(PtsError::NoTransitions)));
    }

    #[test]
    fn reserved_step_name() {
        let doc = r#"{"vars":["k"],"locations":["l0"],"init_loc":"l0","init":{"k":"0"},
            "transitions":[{"from":"l0","to":"l0","branches":[{"p":"1","update":{}}]}]}"#;
        assert!(matches!(load_pts(doc), Err(PtsError::ReservedName(_))));
    }

    #[test]
    fn bad_probabilities_rejected() {
        let doc = r#"{"vars":["x"],"locations":["l0"],"init_loc":"l0","init":{"x":"0"},
            "transitions":[{"from":"l0","to":"l0","branches":[{"p":"1/3","update":{}},{"p":"1/3","update":{}}]}]}"#;
        assert!(matches!(load_pts(doc), Err(PtsError::BadProbabilities(0, _))));
    }

    #[test]
    fn unknown_names_rejected() {
        let doc = r#"{"vars":["x"],"locations":["l0"],"init_loc":"l0","init":{"x":"0"},
            "transitions":[{"from":"l0","to":"l0","branches":[{"p":"1","update":{"x":"x + y"}}]}]}"#;
        assert!(matches!(load_pts(doc), Err(PtsError::Poly { .. })));
        let doc = r#"{"vars":["x"],"locations":["l0"],"init_loc":"l0","init":{"x":"0"},
            "transitions":[{"from":"l0","to":"l1","branches":[{"p":"1","update":{}}]}]}"#;
        assert!(matches!(load_pts(doc), Err(PtsError::UnknownLocation(_))));
    }

    #[test]
    fn or_guard_splits() {
        let doc = r#"{"vars":["x"],"locations":["l0","lF"],"init_loc":"l0","final_loc":"lF","init":{"x":"0"},
            "transitions":[
              {"from":"l0","to":"l0","guard":{"or":[["x >= 1"],["x <= -1"]]},"branches":[{"p":"1","update":{"x":"1/2*x"}}]},
              {"from":"l0","to":"lF","guard":["x < 1","x > -1"],"branches":[{"p":"1","update":{}}]}]}"#;
        let p = load_pts(doc).unwrap();
        assert_eq!(p.transitions().len(), 4);
        assert_eq!(p.transitions()[0].branches, p.transitions()[1].branches);
        assert!(p.validate_nondemonic(200, 1).passed());
    }

    #[test]
    fn round_trip() {
        for p in models::all() {
            let text = save_pts(&p);
            let back = load_pts(&text).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn example2_guards_exact() {
        let p = models::example2(qi(-3), qi(1), qi(2), qi(2));
        let rep = p.validate_nondemonic(10, 0);
        assert_eq!(rep.locations[0].verdict, Verdict::ExactPass);
        assert_eq!(rep.locations[1].verdict, Verdict::ExactPass);
        let loop_t = p.enabled_index(0, &[3.0, 0.0]).unwrap();
        assert_eq!(p.transitions()[loop_t].dest, 0);
        let exit_t = p.enabled_index(0, &[11.0, 0.0]).unwrap();
        assert_eq!(p.transitions()[exit_t].dest, 1);
        let c = Configuration {
            location: 1,
            valuation: vec![0.0, 0.0],
            step: 0,
        };
        assert!(p.enabled_transition(&c).unwrap().is_identity());
    }

    #[test]
    fn demonic_witness() {
        let p = models::demonic();
        let rep = p.validate_nondemonic(100, 0);
        assert!(!rep.passed());
        match &rep.failure().unwrap().verdict {
            Verdict::Fail { witness, enabled } => {
                assert_eq!(witness, &vec![1.0]);
                assert_eq!(enabled.len(), 2);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn bundled_models_total_on_random_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in models::all().into_iter().filter(|p| !p.trusted()) {
            assert!(p.validate_nondemonic(1000, 3).passed());
            for _ in 0..1000 {
                let loc = rng.random_range(0..p.locations().len());
                let x: Vec<f64> = (0..p.num_program_vars())
                    .map(|_| 30.0 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                assert!(p.enabled_index(loc, &x).is_ok(), "{:?} at {loc} {x:?}", p.description());
            }
        }
    }
}
