//! Pullback ensemble and calibration on the rayon pool against the
//! sequential fallback. With one core the two should coincide.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tgfluid::attractor::{pullback_clouds, InitSet};
use tgfluid::leray::stokes_eigs;
use tgfluid::mesh::build_grid;
use tgfluid::noise::{make_noise_spec, ou_path};
use tgfluid::operators::{calibrate, CalibrationOptions};
use tgfluid::par::ExecMode;
use tgfluid::params::PhysParams;
use tgfluid::sampling::centered_bump;
use tgfluid::solver::SolverOptions;

const MODES: [(&str, ExecMode); 2] = [("parallel", ExecMode::Auto), ("sequential", ExecMode::Sequential)];

fn bench_pullback(c: &mut Criterion) {
    let grid = Arc::new(build_grid(4.0, 1.0, 32, 8).expect("grid"));
    let basis = Arc::new(stokes_eigs(&grid, 4).expect("basis"));
    let params = PhysParams::new(1.0, 0.25, 1.0, 0.0, centered_bump(&grid, 0.45, 1.0)).expect("params");
    let spec = make_noise_spec(&basis, 4, 1.0, 0.0).expect("spec").with_amplitude(20.0);
    let opts = SolverOptions::default().with_dt(2e-3);
    let path = ou_path(&spec, 0.0, 1.0, -0.2, 0.0, opts.dt, 1).expect("path");
    let inits = InitSet { radius: 1.0, n_members: 8, seed: 2, max_mode: 3 }.sample(&grid);

    let mut group = c.benchmark_group("pullback_8_members");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| pullback_clouds(black_box(&path), &params, &[0.1, 0.2], &inits, &opts, mode).expect("run"))
        });
    }
    group.finish();
}

fn bench_calibration(c: &mut Criterion) {
    let grid = Arc::new(build_grid(1.0, 1.0, 32, 32).expect("grid"));
    let lam = stokes_eigs(&grid, 1).expect("basis").lambda_hat();
    let opts = CalibrationOptions { n_samples: 256, ..Default::default() };

    let mut group = c.benchmark_group("calibrate_256");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| calibrate(black_box(&grid), lam, 0.5, opts, mode).expect("calibration"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_pullback, bench_calibration);
criterion_main!(benches);
