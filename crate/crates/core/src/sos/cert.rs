//! JSON form of certificates.
//!
//! A full certificate stores every Gram matrix as dense arrays of decimal
//! strings. A short form lists only `V` per location as polynomial strings;
//! multipliers are then solved for during verification.

use nalgebra::DMatrix;
use num_traits::One;
use serde::{Deserialize, Serialize};

use super::{ConstraintValue, GramValue, MultiplierValue, SosCertificate, SosError, Verification};
use crate::moments::RatText;
use crate::poly::{Monomial, Polynomial, Q};
use crate::preexp::LocPoly;
use crate::pts::Pts;

pub const CERT_SCHEMA: &str = "stopcert-cert/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertJson {
    format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    eps: RatText,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<RatText>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree: Option<u32>,
    #[serde(default)]
    homogeneous: bool,
    v: Vec<VJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    summands: Vec<SummandJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    constraints: Vec<ConstraintJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    verification: Option<Verification>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VJson {
    location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poly: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gram: Option<Vec<Vec<String>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummandJson {
    location: String,
    polys: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GramJson {
    name: String,
    basis: Vec<String>,
    gram: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultJson {
    atom: String,
    #[serde(flatten)]
    gram: GramJson,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintJson {
    transition: usize,
    multipliers: Vec<MultJson>,
    residual: GramJson,
}

/// What a certificate file holds.
#[derive(Clone, Debug, PartialEq)]
pub enum CertificateInput {
    Full(SosCertificate),
    Polys { eps: Q, v: LocPoly },
}

fn mono_text(p: &Pts, m: &Monomial) -> String {
    Polynomial::term(Q::one(), m.clone()).display(p.vars()).to_string()
}

fn matrix_text(m: &DMatrix<f64>) -> Vec<Vec<String>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect()).collect()
}

fn gram_json(p: &Pts, g: &GramValue) -> GramJson {
    GramJson {
        name: g.name.clone(),
        basis: g.basis.iter().map(|m| mono_text(p, m)).collect(),
        gram: matrix_text(&g.gram),
    }
}

pub fn certificate_to_json(p: &Pts, cert: &SosCertificate) -> String {
    let locs = p.locations();
    let out = CertJson {
        format: CERT_SCHEMA.into(),
        description: p.description().map(str::to_string),
        eps: RatText(cert.eps.clone()),
        alpha: Some(RatText(cert.alpha.clone())),
        degree: Some(cert.degree),
        homogeneous: cert.homogeneous,
        v: cert
            .v
            .iter()
            .zip(locs)
            .map(|(g, l)| VJson {
                location: l.clone(),
                poly: Some(g.poly().display_approx(p.vars(), 12).to_string()),
                basis: Some(g.basis.iter().map(|m| mono_text(p, m)).collect()),
                gram: Some(matrix_text(&g.gram)),
            })
            .collect(),
        summands: cert
            .summands
            .iter()
            .zip(locs)
            .map(|(ps, l)| SummandJson {
                location: l.clone(),
                polys: ps.iter().map(|q| q.display(p.vars()).to_string()).collect(),
            })
            .collect(),
        constraints: cert
            .constraints
            .iter()
            .map(|c| ConstraintJson {
                transition: c.transition,
                multipliers: c
                    .multipliers
                    .iter()
                    .map(|m| MultJson {
                        atom: m.atom.display(p.vars()).to_string(),
                        gram: gram_json(p, &m.gram),
                    })
                    .collect(),
                residual: gram_json(p, &c.residual),
            })
            .collect(),
        verification: Some(cert.verification.clone()),
    };
    serde_json::to_string_pretty(&out).expect("serializable")
}

fn bad(msg: impl Into<String>) -> SosError {
    SosError::Certificate(msg.into())
}

fn parse_poly(p: &Pts, text: &str) -> Result<Polynomial, SosError> {
    p.parse_state_poly(text).map_err(|e| bad(e.to_string()))
}

fn parse_mono(p: &Pts, text: &str) -> Result<Monomial, SosError> {
    let poly = parse_poly(p, text)?;
    let mut terms = poly.terms();
    match (terms.next(), terms.next()) {
        (Some((m, c)), None) if c.is_one() => Ok(m.clone()),
        _ => Err(bad(format!("`{text}` is not a monomial"))),
    }
}

fn parse_matrix(rows: &[Vec<String>], size: usize, name: &str) -> Result<DMatrix<f64>, SosError> {
    if rows.len() != size || rows.iter().any(|r| r.len() != size) {
        return Err(bad(format!("{name}: Gram is not {size}x{size}")));
    }
    let mut m = DMatrix::zeros(size, size);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = v
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("{name}: bad entry `{v}`")))?;
        }
    }
    Ok(m)
}

fn parse_gram(p: &Pts, g: &GramJson) -> Result<GramValue, SosError> {
    let basis = g.basis.iter().map(|b| parse_mono(p, b)).collect::<Result<Vec<_>, _>>()?;
    let gram = parse_matrix(&g.gram, basis.len(), &g.name)?;
    Ok(GramValue {
        name: g.name.clone(),
        basis,
        gram,
    })
}

pub fn certificate_from_json(p: &Pts, text: &str) -> Result<CertificateInput, SosError> {
    let raw: CertJson = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if raw.format != CERT_SCHEMA {
        return Err(bad(format!("unsupported format `{}`", raw.format)));
    }
    let eps = raw.eps.0;
    let n = p.locations().len();
    let loc_of = |name: &str| p.location_id(name).ok_or_else(|| bad(format!("unknown location `{name}`")));
    let full = raw.v.iter().all(|v| v.gram.is_some() && v.basis.is_some());
    if !full {
        let mut v = LocPoly::new(vec![Polynomial::zero(); n]);
        for e in &raw.v {
            let text = e
                .poly
                .as_deref()
                .ok_or_else(|| bad(format!("location `{}` has neither a Gram nor a polynomial", e.location)))?;
            v.set(loc_of(&e.location)?, parse_poly(p, text)?);
        }
        return Ok(CertificateInput::Polys { eps, v });
    }
    let mut grams: Vec<Option<GramValue>> = vec![None; n];
    for e in &raw.v {
        let g = GramJson {
            name: format!("V[{}]", e.location),
            basis: e.basis.clone().unwrap_or_default(),
            gram: e.gram.clone().unwrap_or_default(),
        };
        grams[loc_of(&e.location)?] = Some(parse_gram(p, &g)?);
    }
    let v: Vec<GramValue> = grams
        .into_iter()
        .enumerate()
        .map(|(l, g)| {
            g.unwrap_or(GramValue {
                name: format!("V[{}]", p.locations()[l]),
                basis: Vec::new(),
                gram: DMatrix::zeros(0, 0),
            })
        })
        .collect();
    let mut summands = vec![Vec::new(); n];
    for s in &raw.summands {
        summands[loc_of(&s.location)?] = s.polys.iter().map(|t| parse_poly(p, t)).collect::<Result<_, _>>()?;
    }
    let constraints = raw
        .constraints
        .iter()
        .map(|c| {
            Ok(ConstraintValue {
                transition: c.transition,
                multipliers: c
                    .multipliers
                    .iter()
                    .map(|m| {
                        Ok(MultiplierValue {
                            atom: parse_poly(p, &m.atom)?,
                            gram: parse_gram(p, &m.gram)?,
                        })
                    })
                    .collect::<Result<_, SosError>>()?,
                residual: parse_gram(p, &c.residual)?,
            })
        })
        .collect::<Result<Vec<_>, SosError>>()?;
    let alpha = Q::one() - &eps;
    if let Some(a) = &raw.alpha {
        if a.0 != alpha {
            return Err(bad(format!("alpha {} is not 1 - eps", a.0)));
        }
    }
    let tol = super::Tolerances::default();
    Ok(CertificateInput::Full(SosCertificate {
        degree: raw.degree.unwrap_or(0),
        eps,
        alpha,
        homogeneous: raw.homogeneous,
        v,
        summands,
        constraints,
        verification: raw.verification.unwrap_or(super::empty_verification(&tol)),
    }))
}
