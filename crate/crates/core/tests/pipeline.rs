use proptest::prelude::*;

use stopcert_core::linear::{self, check_pdb_bound};
use stopcert_core::models;
use stopcert_core::poly::{q, qi, Polynomial};
use stopcert_core::preexp::{check_supermartingale, preexp_pts, Answer, LocPoly, Mode};
use stopcert_core::pts::{load_pts, save_pts};
use stopcert_core::sim::{estimate_expectation, At, RunConfig};
use stopcert_core::sos::{self, SosOptions};

#[test]
fn bundled_models_round_trip_and_are_deterministic() {
    for p in models::all() {
        let back = load_pts(&save_pts(&p)).unwrap();
        assert_eq!(back, p, "{:?}", p.description());
        assert!(p.validate_nondemonic(500, 1).passed(), "{:?}", p.description());
    }
    assert!(!models::demonic().validate_nondemonic(500, 1).passed());
}

#[test]
fn linear_invariants_are_exact_martingales() {
    for p in [models::hare(), models::betting(), models::nested_inner(qi(2))] {
        let basis = linear::synth_linear_invariants(&linear::determinize(&p), &p).unwrap();
        for e in &basis.elements {
            for (ti, t) in p.live_transitions() {
                let d = &stopcert_core::preexp::preexp_transition(&p, &e.h, t, true) - e.h.at(t.source);
                assert!(d.is_zero(), "transition {ti}: {}", d.display(p.vars()));
            }
        }
    }
}

#[test]
fn persistence_function_is_supermartingale() {
    let p = models::markov();
    let v = LocPoly::uniform(&p, p.parse_state_poly("(x1 - x2)^2").unwrap());
    for c in check_supermartingale(&p, &v, Mode::Inequality) {
        assert_eq!(c.answer, Answer::Yes);
    }
    let cert = sos::certificate_for_v(&p, &v, &q(1, 5), &SosOptions::default()).unwrap();
    assert!(cert.verification.passed);
}

#[test]
fn hare_invariant_holds_at_exit_in_simulation() {
    let p = models::hare();
    let h = linear::span_member_at(
        &p,
        &linear::synth_linear_invariants(&linear::determinize(&p), &p).unwrap(),
        0,
        &p.parse_state_poly("2*x1 - 5*x2").unwrap(),
    )
    .unwrap();
    assert!(check_pdb_bound(&p, &h).is_bounded());
    let cfg = RunConfig::new(20_000, 10_000, 31).unwrap();
    let e = estimate_expectation(&p, &cfg, &h, At::Stop).unwrap();
    assert!(e.within(-150.0), "{e:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn preexp_of_constants_is_constant(c in -1000i64..1000, d in 1i64..50) {
        for p in [models::markov(), models::hare(), models::example2(qi(-3), qi(1), qi(2), qi(2))] {
            let h = LocPoly::uniform(&p, Polynomial::constant(q(c, d)));
            for piece in preexp_pts(&p, &h, true).pieces {
                prop_assert_eq!(piece.poly, Polynomial::constant(q(c, d)));
            }
        }
    }

    #[test]
    fn markov_preexp_scales_difference(a in -20i64..20, b in 1i64..9) {
        let p = models::markov();
        let h = p.parse_state_poly("x1 - x2").unwrap().scale(&q(a, b));
        let got = stopcert_core::preexp::preexp_poly(&p, &h, &p.transitions()[0]);
        prop_assert_eq!(got, h.scale(&q(5, 6)));
    }
}
