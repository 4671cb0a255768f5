//! JSON encoding of a [`Pts`], schema `stopcert-pts/1`.
//!
//! ```json
//! {"vars": ["x1", "x2"],
//!  "randoms": {"r1": {"kind": "uniform", "a": "0", "b": "10"}},
//!  "params": {"n": "1"},
//!  "locations": ["l0", "lF"], "init_loc": "l0", "final_loc": "lF",
//!  "init": {"x1": "0", "x2": {"kind": "normal", "mu": "0", "sigma2": "1"}},
//!  "transitions": [{"from": "l0", "to": "l0", "guard": ["x1 <= x2"],
//!                   "branches": [{"p": "1/2", "update": {"x1": "x1 + r1"}}]}],
//!  "trusted": false}
//! ```
//!
//! A guard is `"true"`, a list of atoms (conjunction) or `{"or": [[..], ..]}`;
//! a disjunction becomes one transition per disjunct. Variables missing from
//! an update keep their value. When `final_loc` has no outgoing transition an
//! identity self-loop is added.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{Guard, Pts, PtsError, Transition, UpdateBranch, STEP_VAR};
use crate::moments::{Distribution, InitialDistribution, RatText};
use crate::poly::{parse_guard_atom, parse_polynomial, Polynomial, Relation, Symbol, VarId, Vars, Q};

pub const SCHEMA: &str = "stopcert-pts/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    params: BTreeMap<String, RatText>,
    vars: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    randoms: BTreeMap<String, Distribution>,
    locations: Vec<String>,
    init_loc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    final_loc: Option<String>,
    init: BTreeMap<String, RawInit>,
    transitions: Vec<RawTransition>,
    #[serde(default)]
    trusted: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawInit {
    Point(RatText),
    Law(Distribution),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    from: String,
    to: String,
    #[serde(default)]
    guard: RawGuard,
    branches: Vec<RawBranch>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawGuard {
    Text(String),
    Atoms(Vec<String>),
    Or { or: Vec<Vec<String>> },
}

impl Default for RawGuard {
    fn default() -> Self {
        RawGuard::Atoms(Vec::new())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    p: RatText,
    #[serde(default)]
    update: BTreeMap<String, String>,
}

pub fn load_pts(text: &str) -> Result<Pts, PtsError> {
    load_pts_with_params(text, &[])
}

/// Loads a PTS, overriding declared parameters.
pub fn load_pts_with_params(text: &str, overrides: &[(String, Q)]) -> Result<Pts, PtsError> {
    let raw: RawPts = serde_json::from_str(text)?;
    if let Some(s) = &raw.schema {
        if s != SCHEMA {
            return Err(PtsError::Schema(format!("unsupported schema `{s}`")));
        }
    }
    let mut params: BTreeMap<String, Q> = raw.params.into_iter().map(|(k, v)| (k, v.0)).collect();
    for (name, value) in overrides {
        match params.get_mut(name) {
            Some(slot) => *slot = value.clone(),
            None => return Err(PtsError::Schema(format!("unknown parameter `{name}`"))),
        }
    }

    let mut vars = Vars::default();
    let mut names: Vec<&String> = raw.vars.iter().collect();
    names.extend(raw.randoms.keys());
    for name in &names {
        if name.as_str() == STEP_VAR {
            return Err(PtsError::ReservedName(STEP_VAR.into()));
        }
        if params.contains_key(name.as_str()) || vars.id(name).is_some() {
            return Err(PtsError::Schema(format!("duplicate name `{name}`")));
        }
        if vars.len() == raw.vars.len() {
            vars.push(STEP_VAR);
        }
        vars.push(name);
    }
    if vars.len() == raw.vars.len() {
        vars.push(STEP_VAR);
    }
    let n_prog = raw.vars.len();
    if n_prog == 0 {
        return Err(PtsError::Schema("no program variables".into()));
    }

    let mut scope: HashMap<String, Symbol> = params
        .iter()
        .map(|(k, v)| (k.clone(), Symbol::Const(v.clone())))
        .collect();
    for (i, name) in vars.names().iter().enumerate() {
        if i != n_prog {
            scope.insert(name.clone(), Symbol::Var(i as VarId));
        }
    }

    let locations = raw.locations;
    let loc = |name: &str| {
        locations
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| PtsError::UnknownLocation(name.to_string()))
    };
    let init_loc = loc(&raw.init_loc)?;
    let final_loc = raw.final_loc.as_deref().map(loc).transpose()?;

    let mut init_laws = Vec::with_capacity(n_prog);
    let mut init_raw = raw.init;
    for name in &raw.vars {
        let law = match init_raw.remove(name) {
            Some(RawInit::Point(v)) => Distribution::Constant(v.0),
            Some(RawInit::Law(d)) => d,
            None => return Err(PtsError::Schema(format!("no initial value for `{name}`"))),
        };
        init_laws.push(law);
    }
    if let Some(extra) = init_raw.keys().next() {
        return Err(PtsError::UnknownVariable(extra.clone()));
    }

    let mut transitions = Vec::new();
    for (ti, rt) in raw.transitions.into_iter().enumerate() {
        let source = loc(&rt.from)?;
        let dest = loc(&rt.to)?;
        let mut branches = Vec::new();
        let mut total = Q::zero();
        for rb in rt.branches {
            if !rb.p.0.is_positive() || rb.p.0 > Q::one() {
                return Err(PtsError::BadProbabilities(ti, format!("probability {} not in (0,1]", rb.p.0)));
            }
            total += &rb.p.0;
            let mut images: Vec<Polynomial> = (0..n_prog).map(|i| Polynomial::var(i as VarId)).collect();
            for (var, expr) in rb.update {
                let i = raw
                    .vars
                    .iter()
                    .position(|v| *v == var)
                    .ok_or_else(|| PtsError::UnknownVariable(var.clone()))?;
                images[i] = parse_polynomial(&expr, &scope).map_err(|source| PtsError::Poly {
                    context: format!("update of `{var}` in transition {ti}"),
                    source,
                })?;
            }
            branches.push(UpdateBranch { prob: rb.p.0, images });
        }
        if branches.is_empty() {
            return Err(PtsError::BadProbabilities(ti, "no branches".into()));
        }
        if !total.is_one() {
            return Err(PtsError::BadProbabilities(ti, format!("probabilities sum to {total}")));
        }
        let disjuncts = match rt.guard {
            RawGuard::Text(t) if t.trim() == "true" => vec![vec![]],
            RawGuard::Text(t) => vec![vec![t]],
            RawGuard::Atoms(a) => vec![a],
            RawGuard::Or { or } => or,
        };
        if disjuncts.is_empty() {
            return Err(PtsError::Schema(format!("transition {ti}: empty disjunction")));
        }
        for atoms in disjuncts {
            let mut guard = Guard::always();
            for text in atoms.iter().filter(|t| t.trim() != "true") {
                let atom = parse_guard_atom(text, &scope).map_err(|source| PtsError::Poly {
                    context: format!("guard of transition {ti}"),
                    source,
                })?;
                if atom.lhs.variables().iter().any(|&v| v as usize > n_prog) {
                    return Err(PtsError::Schema(format!(
                        "transition {ti}: guards may not mention random variables"
                    )));
                }
                guard.atoms.push(atom);
            }
            transitions.push(Transition {
                source,
                guard,
                branches: branches.clone(),
                dest,
            });
        }
    }
    if transitions.is_empty() {
        return Err(PtsError::NoTransitions);
    }
    if let Some(f) = final_loc {
        if !transitions.iter().any(|t| t.source == f) {
            transitions.push(Transition {
                source: f,
                guard: Guard::always(),
                branches: vec![UpdateBranch {
                    prob: Q::one(),
                    images: (0..n_prog).map(|i| Polynomial::var(i as VarId)).collect(),
                }],
                dest: f,
            });
        }
    }

    Ok(Pts {
        vars,
        n_prog,
        randoms: raw.randoms.into_values().collect(),
        locations,
        init_loc,
        final_loc,
        init: InitialDistribution::new(init_laws),
        transitions,
        trusted: raw.trusted,
        description: raw.description,
        params,
    })
}

/// Serializes with parameters already substituted into every polynomial.
pub fn save_pts(p: &Pts) -> String {
    let vars = p.vars();
    let prog = p.program_var_names();
    let raw = RawPts {
        schema: Some(SCHEMA.into()),
        description: p.description.clone(),
        params: p.params.iter().map(|(k, v)| (k.clone(), RatText(v.clone()))).collect(),
        vars: prog.to_vec(),
        randoms: p
            .randoms()
            .map(|(id, d)| (vars.name(id).to_string(), d.clone()))
            .collect(),
        locations: p.locations.clone(),
        init_loc: p.locations[p.init_loc].clone(),
        final_loc: p.final_loc.map(|f| p.locations[f].clone()),
        init: prog
            .iter()
            .zip(p.init.laws())
            .map(|(name, d)| {
                let v = match d {
                    Distribution::Constant(c) => RawInit::Point(RatText(c.clone())),
                    d => RawInit::Law(d.clone()),
                };
                (name.clone(), v)
            })
            .collect(),
        transitions: p
            .transitions
            .iter()
            .map(|t| RawTransition {
                from: p.locations[t.source].clone(),
                to: p.locations[t.dest].clone(),
                guard: RawGuard::Atoms(
                    t.guard
                        .atoms
                        .iter()
                        .map(|a| {
                            let op = match a.relation {
                                Relation::Ge => ">=",
                                Relation::Gt => ">",
                            };
                            format!("{} {op} 0", a.lhs.display(vars))
                        })
                        .collect(),
                ),
                branches: t
                    .branches
                    .iter()
                    .map(|b| RawBranch {
                        p: RatText(b.prob.clone()),
                        update: b
                            .images
                            .iter()
                            .enumerate()
                            .filter(|(i, img)| **img != Polynomial::var(*i as VarId))
                            .map(|(i, img)| (prog[i].clone(), img.display(vars).to_string()))
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
        trusted: p.trusted,
    };
    serde_json::to_string_pretty(&raw).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_substitute_and_override() {
        let doc = r#"{"params":{"n":"1"},"vars":["y"],"locations":["l0","lF"],"init_loc":"l0","final_loc":"lF",
            "init":{"y":"0"},
            "transitions":[{"from":"l0","to":"lF","guard":"y > n","branches":[{"p":"1","update":{"y":"y + n"}}]},
                           {"from":"l0","to":"l0","guard":"y <= n","branches":[{"p":"1","update":{"y":"y + 1"}}]}]}"#;
        let p = load_pts_with_params(doc, &[("n".into(), crate::poly::qi(3))]).unwrap();
        assert_eq!(p.params()["n"], crate::poly::qi(3));
        assert_eq!(p.enabled_index(0, &[2.5f64]).unwrap(), 1);
        assert_eq!(p.enabled_index(0, &[3.5f64]).unwrap(), 0);
        assert!(load_pts_with_params(doc, &[("m".into(), crate::poly::qi(3))]).is_err());
    }

    #[test]
    fn initial_laws_parse() {
        let doc = r#"{"vars":["x"],"randoms":{"r":{"kind":"uniform","a":"0","b":"1"}},"locations":["l0"],"init_loc":"l0",
            "init":{"x":{"kind":"normal","mu":"1","sigma2":"2"}},
            "transitions":[{"from":"l0","to":"l0","branches":[{"p":"1","update":{"x":"x + r"}}]}]}"#;
        let p = load_pts(doc).unwrap();
        assert!(matches!(p.init().law(0), Distribution::Normal { .. }));
        assert_eq!(p.vars().names(), &["x", "k", "r"]);
        let doc = doc.replace(r#""init":{"x""#, r#""init":{"z""#);
        assert!(load_pts(&doc).is_err());
    }
}
