use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use stopcert_bench::{hare_runs, markov_exact_runs, markov_sos};
use stopcert_core::linear;
use stopcert_core::models;
use stopcert_core::poly::qi;
use stopcert_core::preexp::{preexp_pts, LocPoly};
use stopcert_core::sim::{self, At};
use stopcert_core::sos;

fn preexp(c: &mut Criterion) {
    let p = models::example2(qi(-3), qi(1), qi(2), qi(2));
    let h = LocPoly::uniform(&p, p.parse_state_poly("(x1 - x2 + k)^4").unwrap());
    c.bench_function("preexp/example2-quartic", |b| b.iter(|| preexp_pts(black_box(&p), &h, true)));
}

fn synthesis(c: &mut Criterion) {
    let hare = models::hare();
    c.bench_function("synth-linear/hare", |b| {
        b.iter(|| linear::synth_linear_invariants(&linear::determinize(black_box(&hare)), &hare).unwrap())
    });
    let (p, opts) = markov_sos();
    c.bench_function("synth-sos/markov", |b| b.iter(|| sos::synth_sos(black_box(&p), &opts).unwrap()));
    let cert = sos::synth_sos(&p, &opts).unwrap();
    c.bench_function("verify-certificate/markov", |b| {
        b.iter(|| sos::verify_certificate(black_box(&p), &cert, &opts.tol))
    });
}

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for runs in [1_000u64, 10_000] {
        let (p, cfg) = hare_runs(runs);
        g.bench_with_input(BenchmarkId::new("hare-stopping-time", runs), &runs, |b, _| {
            b.iter(|| sim::estimate_stopping_time(&p, &cfg).unwrap())
        });
    }
    let (p, cfg) = markov_exact_runs(10_000, 10);
    let e = LocPoly::uniform(&p, p.parse_state_poly("x1 - x2").unwrap());
    g.bench_function("markov-exact-k10", |b| b.iter(|| sim::estimate_expectation(&p, &cfg, &e, At::Step(10)).unwrap()));
    g.finish();
}

criterion_group!(benches, preexp, synthesis, simulation);
criterion_main!(benches);
