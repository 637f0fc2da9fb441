//! Fan-out comparison: the same workloads through `par::map` (rayon when the
//! `parallel` feature is on, the default) and `par::map_seq`. On a single
//! core the two should tie to within scheduling noise; the gap on a larger
//! machine is the speedup the feature buys.
//!
//! Run with `cargo bench -p rscs-core`, or with
//! `--no-default-features` to pin the `map` path to sequential too.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rscs_core::{montecarlo, par, replica, Prior};

/// A 24-point curve sweep for a three-component mixture; each point runs a
/// full root scan plus branch selection.
fn curve_points(c: &mut Criterion) {
    let p = Prior::figure1(0.1).unwrap();
    let deltas: Vec<f64> = (0..24).map(|k| 0.5 + 0.05 * k as f64).collect();

    let mut g = c.benchmark_group("curve-points");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("fanout", "default"), |b| {
        b.iter(|| {
            let out: Vec<_> = par::map(black_box(deltas.clone()), |d| {
                replica::replica_point(&p, d).unwrap().i_rs
            });
            black_box(out)
        })
    });
    g.bench_function(BenchmarkId::new("fanout", "sequential"), |b| {
        b.iter(|| {
            let out: Vec<_> = par::map_seq(black_box(deltas.clone()), |d| {
                replica::replica_point(&p, d).unwrap().i_rs
            });
            black_box(out)
        })
    });
    g.finish();
}

/// Exact-posterior trials, n = 10 binary signal: 1024 states per trial.
/// Both arms run the identical per-trial closure; only the fan-out differs.
fn posterior_trials(c: &mut Criterion) {
    let p = Prior::bpsk();
    let (n, m, trials) = (10u32, 30u32, 256u64);
    let trial = |t: u64| {
        let inst = montecarlo::sample_instance(&p, n, m, 1_000 + t);
        let var = montecarlo::exact_posterior_mean(&p, &inst).unwrap().variance;
        let mi = montecarlo::mi_density(&p, &inst).unwrap();
        (var, mi)
    };

    let mut g = c.benchmark_group("posterior-trials");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("fanout", "default"), |b| {
        b.iter(|| black_box(par::map((0..trials).collect(), trial)))
    });
    g.bench_function(BenchmarkId::new("fanout", "sequential"), |b| {
        b.iter(|| black_box(par::map_seq((0..trials).collect(), trial)))
    });
    g.finish();
}

criterion_group!(benches, curve_points, posterior_trials);
criterion_main!(benches);
