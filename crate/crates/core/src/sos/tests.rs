use super::*;
use crate::models;
use crate::poly::{parse_polynomial, q, Inequality, Vars};
use crate::pts::load_pts;

fn sp(p: &Pts, s: &str) -> Polynomial {
    p.parse_state_poly(s).unwrap()
}

fn markov_opts() -> SosOptions {
    SosOptions {
        degree: 2,
        eps: q(1, 5),
        homogeneous: true,
        ..SosOptions::default()
    }
}

fn identity_pts() -> Pts {
    load_pts(
        r#"{"schema": "stopcert-pts/1", "vars": ["x"], "locations": ["l0"], "init_loc": "l0",
            "init": {"x": "1"},
            "transitions": [{"from": "l0", "to": "l0", "guard": "true",
                             "branches": [{"p": "1", "update": {}}]}]}"#,
    )
    .unwrap()
}

#[test]
fn degree_checks() {
    let p = models::markov();
    assert!(matches!(build_constraints(&p, 3, &q(1, 5), true), Err(SosError::OddDegree(3))));
    assert!(matches!(build_constraints(&p, 0, &q(1, 5), true), Err(SosError::DegreeTooSmall(0))));
    assert!(matches!(build_constraints(&p, 2, &qi(1), true), Err(SosError::BadEpsilon(_))));
}

#[test]
fn markov_system_shape() {
    let p = models::markov();
    let sys = build_constraints(&p, 2, &q(1, 5), true).unwrap();
    assert_eq!(sys.constraints.len(), 1);
    assert_eq!(sys.v[0].size(), 2);
    assert!(sys.constraints[0].multipliers.is_empty());
    let res: Vec<String> = sys.constraints[0]
        .residual
        .basis
        .iter()
        .map(|m| Polynomial::term(qi(1), m.clone()).display(p.vars()).to_string())
        .collect();
    assert_eq!(res, ["x1", "x2", "x1*x2"]);
    let full = build_constraints(&p, 2, &q(1, 5), false).unwrap();
    assert_eq!(full.v[0].size(), 3);
}

#[test]
fn equality_count_matches_monomials() {
    for p in [models::markov(), models::example2(qi(-3), qi(1), qi(2), qi(2)), models::nested_inner(qi(1))] {
        let sys = build_constraints(&p, 2, &q(1, 10), false).unwrap();
        let prob = compile_to_sdp(&sys);
        let monos: usize = sys.constraints.iter().map(|c| c.identity.num_terms()).sum();
        assert_eq!(prob.equalities.len(), monos + 1);
        let grams = sys.v.len() + sys.constraints.iter().map(|c| c.multipliers.len() + 1).sum::<usize>();
        assert!(prob.blocks.len() <= grams);
    }
}

#[test]
fn example2_degree_bookkeeping() {
    let p = models::example2(qi(-3), qi(1), qi(2), qi(2));
    let sys = build_constraints(&p, 2, &q(1, 1_000_000), false).unwrap();
    // loop and exit transitions
    assert_eq!(sys.constraints.len(), 2);
    let c = &sys.constraints[0];
    assert_eq!(c.multipliers.len(), 1);
    // the multiplier of the degree-1 atom is raised to degree 2
    assert_eq!(c.multipliers[0].basis.len(), 3);
    // every monomial of (1-ε)V - preE(V) is reachable by σ
    let alpha = Q::one() - &sys.eps;
    let mut lhs = sys.v[0].poly().scale(&alpha);
    lhs.sub_assign(&preexp_template(&p, &sys.v[0], &p.transitions()[0]));
    let sigma = c.residual.poly().support();
    for m in lhs.support() {
        assert!(sigma.contains(&m), "{m:?} missing from residual template");
    }
    assert_eq!(lhs.degree(), 4);
}

#[test]
fn affine_in_gram_entries() {
    let p = models::example2(qi(-3), qi(1), qi(2), qi(2));
    let sys = build_constraints(&p, 2, &q(1, 10), false).unwrap();
    let id = &sys.constraints[0].identity;
    let base: Vec<Q> = (0..sys.n_params).map(|i| q(i as i64 % 7 - 3, 5)).collect();
    let at = |j: usize, d: Q| {
        let mut y = base.clone();
        y[j] += d;
        id.eval(&y)
    };
    for j in [0, 2, sys.v[0].n_params() + 1] {
        let p0 = id.eval(&base);
        let d1 = at(j, q(1, 3)) - p0.clone();
        let d2 = at(j, q(2, 3)) - p0;
        assert_eq!(d2, d1.scale(&qi(2)));
    }
}

#[test]
fn identity_transition_is_infeasible() {
    let p = identity_pts();
    let sys = build_constraints(&p, 2, &q(1, 10), false).unwrap();
    assert!(sys.constraints[0].multipliers.is_empty());
    let err = synth_sos(
        &p,
        &SosOptions {
            eps: q(1, 10),
            ..SosOptions::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, SosError::NotFeasible { status: SdpStatus::Infeasible, .. }), "{err}");
}

#[test]
fn markov_certificate() {
    let p = models::markov();
    let cert = synth_sos(&p, &markov_opts()).unwrap();
    assert!(cert.verification.passed);
    assert_eq!(cert.alpha, q(4, 5));
    // V is proportional to (x1 - x2)^2
    let v = cert.v_poly().at(0).clone();
    let c11 = q_to_f64(&v.coeff(&Monomial::from_pairs([(0, 2)])));
    let c12 = q_to_f64(&v.coeff(&Monomial::from_pairs([(0, 1), (1, 1)])));
    let c22 = q_to_f64(&v.coeff(&Monomial::from_pairs([(1, 2)])));
    assert!((c11 - 0.5).abs() < 1e-4 && (c22 - 0.5).abs() < 1e-4 && (c12 + 1.0).abs() < 1e-4);
    assert_eq!(cert.summands[0].len(), 1);
    let text = certificate_to_json(&p, &cert);
    let CertificateInput::Full(back) = certificate_from_json(&p, &text).unwrap() else {
        panic!("full certificate expected");
    };
    assert!(verify_certificate(&p, &back, &Tolerances::default()).passed);
    assert_eq!(back.v, cert.v);
    assert_eq!(check_summand_inequality(&p, &cert, 1000, 7), Ok(1000));
}

#[test]
fn tampered_certificate_rejected() {
    let p = models::markov();
    let mut cert = synth_sos(&p, &markov_opts()).unwrap();
    cert.v[0].gram[(0, 0)] += 1e-3;
    let v = verify_certificate(&p, &cert, &Tolerances::default());
    assert!(!v.passed);
    let mut cert = synth_sos(&p, &markov_opts()).unwrap();
    cert.constraints[0].residual.gram[(2, 2)] = -1.0;
    assert!(!verify_certificate(&p, &cert, &Tolerances::default()).passed);
}

#[test]
fn hand_written_markov_v() {
    let p = models::markov();
    let v = LocPoly::uniform(&p, sp(&p, "(x1 - x2)^2"));
    let pe = preexp_poly(&p, v.at(0), &p.transitions()[0]);
    assert_eq!(pe, v.at(0).scale(&q(13, 18)));
    let cert = certificate_for_v(&p, &v, &q(1, 5), &markov_opts()).unwrap();
    assert!(cert.verification.passed, "{:?}", cert.verification.failures);
    let text = r#"{"format": "stopcert-cert/1", "eps": "1/5", "v": [{"location": "l0", "poly": "(x1 - x2)^2"}]}"#;
    match certificate_from_json(&p, text).unwrap() {
        CertificateInput::Polys { eps, v: back } => {
            assert_eq!(eps, q(1, 5));
            assert_eq!(back, v);
        }
        other => panic!("{other:?}"),
    }
    // 13/18 > 1 - 3/10
    let cert = certificate_for_v(&p, &v, &q(3, 10), &markov_opts()).unwrap();
    assert!(!cert.verification.passed);
}

#[test]
fn membership() {
    let vars = Vars::new(&["x", "y"]);
    let opts = SosOptions::default();
    let parse = |s: &str| parse_polynomial(s, &vars).unwrap();
    match check_sos_membership(&parse("x^4 - 2*x^2 + 1"), &opts) {
        SosMembership::Sos { basis, gram } => {
            let g = GramValue {
                name: "q".into(),
                basis,
                gram,
            };
            let r = parse("x^4 - 2*x^2 + 1") - g.poly();
            assert!(r.max_abs_coeff() <= 1e-6);
            let s = g.summands(1e-8);
            assert_eq!(s.len(), 1);
            let back = &s[0] * &s[0];
            assert!((back - parse("x^4 - 2*x^2 + 1")).max_abs_coeff() < 1e-9);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(check_sos_membership(&parse("-x^2 - 1"), &opts), SosMembership::NotSos { margin } if margin < 0.0));
    assert!(matches!(check_sos_membership(&parse("x^3"), &opts), SosMembership::NotSos { .. }));
    assert_eq!(
        check_sos_membership(&Polynomial::zero(), &opts),
        SosMembership::Sos {
            basis: Vec::new(),
            gram: DMatrix::zeros(0, 0)
        }
    );
    assert!(matches!(check_sos_membership(&parse("x^2 - 2*x*y + 2*y^2"), &opts), SosMembership::Sos { .. }));
    assert!(matches!(check_sos_membership(&parse("x^2 - 3*x*y + 2*y^2"), &opts), SosMembership::NotSos { .. }));
}

#[test]
fn diagonal_gram_summand() {
    let g = GramValue {
        name: "V".into(),
        basis: vec![Monomial::var(0), Monomial::var(1)],
        gram: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
    };
    assert_eq!(g.summands(1e-8), vec![Polynomial::var(0)]);
}

#[test]
fn guarded_nonnegativity() {
    let vars = Vars::new(&["x"]);
    let parse = |s: &str| parse_polynomial(s, &vars).unwrap();
    let xpos = [Inequality::ge(parse("x"))];
    assert!(nonneg_on(&parse("x + 1"), &xpos));
    assert!(nonneg_on(&parse("x^3 + x"), &xpos));
    assert!(!nonneg_on(&parse("1 - x"), &xpos));
    assert!(!nonneg_on(&parse("x"), &[]));
    let interval = [Inequality::ge(parse("x")), Inequality::ge(parse("1 - x"))];
    assert!(nonneg_on(&parse("2 - x"), &interval));
    assert!(!nonneg_on(&parse("x - 2"), &interval));
}

#[test]
fn doob_closed_forms() {
    let p = models::markov();
    let pp = LocPoly::uniform(&p, sp(&p, "x1 - x2"));
    let r = doob_invariant(&p, &pp, Evidence::Iud {
        certificate: "test".into(),
        alpha: "4/5".into(),
    });
    assert_eq!(r.correction_factor, Some(q(1, 6)));
    assert!(r.martingale.contains("1/6 * Σ_{i<k} P(X^i, L^i)"), "{}", r.martingale);
    assert_eq!(r.initial_expectation, "1");
    assert_eq!(r.method, Method::SosIud);

    let zero = doob_invariant(&p, &LocPoly::zero(&p), Evidence::Iud {
        certificate: "test".into(),
        alpha: "4/5".into(),
    });
    assert_eq!(zero.martingale, "M_k = 0");

    let e2 = models::example2(qi(0), qi(1), qi(0), qi(2));
    let pp = LocPoly::uniform(&e2, sp(&e2, "2*x1 + 3*x2"));
    let r = doob_invariant(&e2, &pp, Evidence::Iud {
        certificate: "test".into(),
        alpha: "1/2".into(),
    });
    assert_eq!(r.correction_factor, Some(Q::zero()));
    assert!(!r.martingale.contains('Σ'));
}

#[test]
fn markov_reports_per_summand() {
    let p = models::markov();
    let cert = synth_sos(&p, &markov_opts()).unwrap();
    let reports = invariant_reports_sos(&p, &cert);
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].correction_factor, Some(q(1, 6)));
    assert!(matches!(reports[0].evidence, Evidence::Iud { .. }));
}

