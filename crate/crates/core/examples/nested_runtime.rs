//! Runtime bound for the nested loop, `E(T) <= 400mn + 80(m+n) + 16`,
//! rebuilt from the two single-loop bounds and compared with simulation.
//!
//! ```text
//! cargo run --release -p stopcert-core --example nested_runtime -- 1/4 1/4
//! ```

use stopcert_core::linear::past_bound;
use stopcert_core::models;
use stopcert_core::poly::{parse_rational, q, qi, Polynomial, Q};
use stopcert_core::preexp::LocPoly;
use stopcert_core::pts::Pts;
use stopcert_core::sim::{estimate_expectation, At, RunConfig};

fn ranking(p: &Pts, h: &str) -> LocPoly {
    let mut out = LocPoly::uniform(p, p.parse_state_poly(h).unwrap());
    out.set(p.final_loc().unwrap(), Polynomial::constant(qi(-1)));
    out
}

fn arg(i: usize) -> Q {
    std::env::args()
        .nth(i)
        .map(|s| parse_rational(&s).expect("rational argument"))
        .unwrap_or_else(|| q(1, 4))
}

fn main() {
    let (m, n) = (arg(1), arg(2));
    let (k, eps) = (q(-1, 5), q(1, 20));

    let inner = models::nested_inner(n.clone());
    let inner_bound = past_bound(&inner, &ranking(&inner, "n - y"), &k, &eps, false).unwrap();
    let outer = models::nested_outer(m.clone());
    let outer_bound = past_bound(&outer, &ranking(&outer, "m - x"), &k, &eps, false).unwrap();
    println!("inner loop: E(T1) <= {} = 20n + 4", inner_bound.bound);
    println!("outer loop: E(T2) <= {} = 20m + 4", outer_bound.bound);

    // each outer iteration runs an independent inner loop from y = 0
    let total = &inner_bound.bound_q * &outer_bound.bound_q;
    let formula = qi(400) * &m * &n + qi(80) * (&m + &n) + qi(16);
    assert_eq!(total, formula);
    println!("total:      E(T)  <= {total} = 400mn + 80(m+n) + 16");

    let p = models::nested(m, n);
    let cfg = RunConfig::new(100_000, 10_000_000, 2024).unwrap();
    let t = LocPoly::uniform(&p, p.parse_state_poly("t").unwrap());
    let e = estimate_expectation(&p, &cfg, &t, At::Stop).unwrap();
    println!("simulated:  E(T)  = {:.3} +/- {:.3} over {} runs", e.mean, e.stderr, e.runs);
}
