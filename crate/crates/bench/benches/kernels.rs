//! Hot kernels: exact solving, Gram features, MLP passes, RK4 and lint.

use std::hint::black_box;

use covariant_core::audit::{lint_pipeline, PipelineDesc};
use covariant_core::blackbody::{intensity_dim, PhysConstants};
use covariant_core::geometry::{gram_invariants, haar_orthogonal};
use covariant_core::model::{Activation, Mlp};
use covariant_core::pendulum::{integrate, PendulumParams, PendulumState};
use covariant_core::{pi_basis, solve_target, Dimension, FeatureSchema, Vec3};
use criterion::{criterion_group, criterion_main, Criterion};

fn dimensions(c: &mut Criterion) {
    let k = PhysConstants::default();
    let inputs = [Dimension::length(), Dimension::temperature(), k.c.dim, k.k.dim, k.h.dim];
    let target = intensity_dim();
    c.bench_function("solve_target/planck", |b| b.iter(|| solve_target(black_box(&inputs), black_box(&target))));
    c.bench_function("pi_basis/planck", |b| b.iter(|| pi_basis(black_box(&inputs))));
}

fn geometry(c: &mut Criterion) {
    let vs: Vec<Vec3> = (0..4).map(|i| Vec3::new([i as f64, 1.0 - i as f64, 0.5], Dimension::length())).collect();
    c.bench_function("gram_invariants/4", |b| b.iter(|| gram_invariants(black_box(&vs))));
    c.bench_function("haar_orthogonal", |b| b.iter(|| haar_orthogonal(black_box(7), false)));
}

fn mlp(c: &mut Criterion) {
    let m = Mlp::new(&[10, 20, 20, 20, 4], Activation::Tanh, 0);
    let x = ndarray::Array2::from_shape_fn((256, 10), |(i, j)| ((i * 10 + j) as f64).sin());
    let d = ndarray::Array2::ones((256, 4));
    c.bench_function("mlp/forward_256", |b| b.iter(|| m.forward(black_box(x.view()))));
    c.bench_function("mlp/backward_256", |b| {
        b.iter(|| {
            let cache = m.forward_cached(x.view());
            let mut g = vec![0.0; m.num_params()];
            m.backward(&cache, d.view(), &mut g);
            g
        })
    });
}

fn pendulum(c: &mut Criterion) {
    let p = PendulumParams::default();
    let (q1, q2) = p.equilibrium();
    let s0 = PendulumState { p1: [0.1, 0.0, 0.2], ..PendulumState::at_rest(q1, q2) };
    c.bench_function("rk4/1000_steps", |b| b.iter(|| integrate(black_box(&s0), &p, 1e-3, 1000)));
}

fn lint(c: &mut Criterion) {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/audit");
    let schema = FeatureSchema::load(format!("{root}/schema.json").as_ref()).expect("schema fixture");
    let pipe = PipelineDesc::load(format!("{root}/pipelines/r2_fail.json").as_ref()).expect("pipeline fixture");
    c.bench_function("lint/r2_fail", |b| b.iter(|| lint_pipeline(&schema, black_box(&pipe))));
}

criterion_group!(benches, dimensions, geometry, mlp, pendulum, lint);
criterion_main!(benches);
