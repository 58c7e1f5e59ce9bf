//! Timing of the per-cycle kernels and of short episodes.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use jerkctl::control::{momentum_jerk_xidot, GainSet, MomentumContext, ReferenceSample, TorqueMap};
use jerkctl::linalg::{pinv, Mat};
use jerkctl::momentum::{ContactFrame, MomentumState};
use jerkctl::sim::{run_episode, ScenarioConfig};
use jerkctl::sot::{solve_jerk_sot, DynamicsSample, SotProblem};
use jerkctl::wrench::{phi, phi_gradient, phi_inverse, stack_phi};
use jerkctl::{ContactGeometry, SaturationPolicy, Xi, XiStack};
use nalgebra::{DVector, Vector3, Vector6};

fn xi() -> Xi {
    Xi(Vector6::new(0.3, -0.2, 4.0, 0.1, -0.4, 0.2))
}

fn parametrization(c: &mut Criterion) {
    let g = ContactGeometry::default();
    let x = xi();
    let w = phi(&x, &g);
    let policy = SaturationPolicy::default();
    c.bench_function("phi", |b| b.iter(|| phi(black_box(&x), &g)));
    c.bench_function("phi_inverse", |b| b.iter(|| phi_inverse(black_box(&w), &g, &policy).unwrap()));
    c.bench_function("phi_gradient", |b| b.iter(|| phi_gradient(black_box(&x), &g)));
}

fn linear_algebra(c: &mut Criterion) {
    let m = Mat::from_fn(6, 12, |i, j| ((i * 12 + j) as f64 * 0.37).sin());
    c.bench_function("pinv_6x12", |b| b.iter(|| pinv(black_box(&m), 1e-10).unwrap()));
}

fn two_feet() -> (Vec<ContactFrame>, XiStack) {
    let g = ContactGeometry::default();
    let frames = vec![
        ContactFrame::rigid(Vector3::new(0.0, 0.1, 0.0), g),
        ContactFrame::rigid(Vector3::new(0.0, -0.1, 0.0), g),
    ];
    (frames, XiStack(vec![xi(), Xi(Vector6::new(-0.1, 0.2, 3.5, 0.0, 0.3, -0.1))]))
}

fn controller(c: &mut Criterion) {
    let (frames, xis) = two_feet();
    let geoms: Vec<_> = frames.iter().map(|f| f.geometry).collect();
    let f = stack_phi(&xis, &geoms).unwrap();
    let state = MomentumState::new(30.0, Vector3::new(0.0, 0.0, 0.8)).unwrap();
    let gains = GainSet::scalar(4.0, 4.0).unwrap();
    let reference = ReferenceSample::default();
    c.bench_function("integral_law_cycle", |b| {
        b.iter(|| {
            let ctx = MomentumContext::new(&state, &frames, &xis, &f, &reference).unwrap();
            momentum_jerk_xidot(&ctx, &gains, None).unwrap()
        })
    });

    let sample = DynamicsSample::synthetic(14, 2, 5).unwrap();
    c.bench_function("torque_map_14_joints", |b| {
        b.iter_batched(
            || f.to_dvector(),
            |fv| TorqueMap::new(&sample, None).unwrap().torque(&fv).unwrap(),
            BatchSize::SmallInput,
        )
    });

    let cols = sample.d_matrix().ncols();
    let a_task = Mat::from_fn(6, cols, |i, j| ((i + 2 * j) as f64 * 0.11).cos());
    let problem = SotProblem::new(
        &sample,
        &xis,
        &geoms,
        a_task,
        DVector::from_element(6, 0.1),
        DVector::zeros(cols),
    )
    .unwrap();
    c.bench_function("jerk_sot_14_joints", |b| b.iter(|| solve_jerk_sot(black_box(&problem), 1e-10).unwrap()));
}

fn episodes(c: &mut Criterion) {
    let text = include_str!("../../../scenarios/equilibrium.json");
    let mut cfg = ScenarioConfig::from_json(text).unwrap();
    cfg.horizon_s = 1.0;
    let scenario = cfg.validate().unwrap();
    let mut group = c.benchmark_group("episode");
    group.sample_size(20);
    group.bench_function("equilibrium_1s", |b| b.iter(|| run_episode(black_box(&scenario)).unwrap()));
    group.finish();
}

criterion_group!(benches, parametrization, linear_algebra, controller, episodes);
criterion_main!(benches);
