//! Synthesized invariants and the evidence they rest on.

use serde::Serialize;

use crate::poly::{q_to_f64, Q};
use crate::preexp::LocPoly;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "linear-PDB")]
    LinearPdb,
    #[serde(rename = "sos-IUD")]
    SosIud,
}

/// Which optional-stopping precondition holds, and why.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "precondition")]
pub enum Evidence {
    /// Bounded one-step differences plus positive almost-sure termination.
    #[serde(rename = "PDB")]
    Pdb { k: f64, k_exact: Option<String>, past: String },
    /// Dominated by a verified geometric persistence certificate.
    #[serde(rename = "IUD")]
    Iud { certificate: String, alpha: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantReport {
    pub method: Method,
    /// `(location, P)` pairs.
    pub seed: Vec<(String, String)>,
    #[serde(skip)]
    pub seed_poly: LocPoly,
    /// Pre-expectation of the seed, one guarded piece per transition.
    pub preexp: Vec<String>,
    pub martingale: String,
    pub statement: String,
    pub evidence: Evidence,
    pub initial_expectation: String,
    pub initial_expectation_f64: f64,
    /// `c` when `P - preE(P) = c * P` on every piece.
    #[serde(serialize_with = "ser_opt_q")]
    pub correction_factor: Option<Q>,
    pub assumptions: Vec<String>,
}

impl InvariantReport {
    pub(crate) fn initial(e: &Q) -> (String, f64) {
        (e.to_string(), q_to_f64(e))
    }
}

fn ser_opt_q<S: serde::Serializer>(v: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(q) => s.serialize_some(&q.to_string()),
        None => s.serialize_none(),
    }
}
