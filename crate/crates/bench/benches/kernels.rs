use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rbm_bench::{atlas, dense, mixed_point};
use rbm_core::bounds::{constant_cascade, lyapunov, optimal_v, theta_functionals, wasserstein_bound};
use rbm_core::reflect::{simulate_rbm, LcpSolver, SimConfig, DEFAULT_LCP_TOL};

fn lcp_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("lcp_step");
    for d in [2usize, 10, 50, 200] {
        let (_, dm) = atlas(d + 1);
        let z = mixed_point(d);
        let mut solver = LcpSolver::new(&dm, DEFAULT_LCP_TOL, 10 * d + 1000);
        let mut x = vec![0.0; d];
        let mut l = vec![0.0; d];
        group.bench_with_input(BenchmarkId::new("atlas", d), &d, |b, _| {
            b.iter(|| solver.solve_into(black_box(&z), &mut x, &mut l).unwrap())
        });
    }
    group.finish();
}

fn simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_rbm");
    group.sample_size(20);
    for d in [2usize, 10, 50] {
        let (p, _) = dense(d, 7);
        let cfg = SimConfig::new(1e-3, 1.0, 1, 1);
        let x0 = vec![1.0; d];
        group.bench_with_input(BenchmarkId::new("dense_1000_steps", d), &d, |b, _| {
            b.iter(|| simulate_rbm(&p, black_box(&x0), &cfg, 0).unwrap())
        });
    }
    group.finish();
}

fn functionals(c: &mut Criterion) {
    let mut group = c.benchmark_group("theta_functionals");
    for n in [5usize, 20, 80] {
        let (_, dm) = atlas(n);
        group.bench_with_input(BenchmarkId::new("atlas", n), &n, |b, _| {
            b.iter(|| theta_functionals(black_box(&dm)).unwrap())
        });
    }
    group.finish();

    let (_, dm) = atlas(20);
    let tf = theta_functionals(&dm).unwrap();
    let cascade = constant_cascade(68.0 * tf.b_theta).unwrap();
    let x = vec![1.0; dm.d];
    c.bench_function("wasserstein_bound/atlas/20", |b| {
        b.iter(|| wasserstein_bound(&dm, &tf, &cascade, black_box(&x), 1e9).unwrap())
    });
}

fn lyapunov_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("lyapunov");
    for d in [2usize, 10, 50] {
        let (_, dm) = dense(d, 3);
        let tf = theta_functionals(&dm).unwrap();
        let v = optimal_v(&dm, &tf).unwrap().v_tilde;
        let y: Vec<f64> = (0..d).map(|i| 0.5 * (i + 1) as f64).collect();
        group.bench_with_input(BenchmarkId::new("dense", d), &d, |b, _| {
            b.iter(|| lyapunov(black_box(&y), &v, &dm, 68.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lcp_step, simulate, functionals, lyapunov_eval);
criterion_main!(benches);
