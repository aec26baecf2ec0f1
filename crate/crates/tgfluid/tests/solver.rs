mod common;

use std::sync::Arc;

use common::{channel, field, rng, smooth};
use tgfluid::error::Error;
use tgfluid::leray::{curl, project, stokes_eigs, StokesEigenbasis};
use tgfluid::mesh::{Grid, VelocityField};
use tgfluid::noise::{make_noise_spec, ou_path, ou_paths_coupled, OUPath};
use tgfluid::ode::OdeOptions;
use tgfluid::operators::{calibrate, CalibrationOptions};
use tgfluid::par::ExecMode;
use tgfluid::params::PhysParams;
use tgfluid::sampling::{centered_bump, white_field};
use tgfluid::solver::{
    chi_independence_check, continuity_check, energy_residual, galerkin_oracle, integrate, load_checkpoint,
    pressure_gradient, recompose, save_checkpoint, step, Integrator, SolverOptions,
};
use tgfluid::stats::fit_slope;

/// `β` small enough that the cubic stress is invisible at unit amplitudes;
/// `β = 0` itself is outside the admissible regime.
const TINY_BETA: f64 = 1e-12;

fn basis(g: &Arc<Grid>, m: usize) -> Arc<StokesEigenbasis> {
    Arc::new(stokes_eigs(g, m).unwrap())
}

fn noisy_path(b: &Arc<StokesEigenbasis>, nu: f64, t_min: f64, t_max: f64, dt: f64, seed: u64) -> OUPath {
    let s = make_noise_spec(b, b.m, 1.0, 0.0).unwrap().with_amplitude(20.0);
    ou_path(&s, 0.0, nu, t_min, t_max, dt, seed).unwrap()
}

#[test]
fn zero_state_is_a_fixed_point() {
    let g = channel(8);
    let p = PhysParams::unforced(&g, 1.0, 0.3, 1.0, 0.0).unwrap();
    let z = VelocityField::zeros(&g);
    assert_eq!(step(&z, &z, &z, &p, 1e-2).unwrap().norm_l2(), 0.0);
    let traj = integrate(&z, None, 0.0, 0.1, &p, 1e-2).unwrap();
    assert!(traj.states.iter().all(|s| s.max_abs() == 0.0));
    assert_eq!(energy_residual(&traj).max, 0.0);
}

#[test]
fn single_mode_decays_at_the_stokes_rate() {
    let g = channel(8);
    let b = basis(&g, 1);
    let nu = 0.5;
    let p = PhysParams::unforced(&g, nu, 0.0, TINY_BETA, 0.0).unwrap();
    let y0 = b.eigenfields[0].scaled(1e-3);
    let traj = integrate(&y0, None, 0.0, 0.2, &p, 1e-3).unwrap();
    let logs: Vec<f64> = traj.states.iter().map(|s| s.norm_l2().ln()).collect();
    let rate = -fit_slope(&traj.times, &logs);
    let want = nu * b.eigenvalues[0];
    assert!((rate / want - 1.0).abs() < 0.01, "{rate} vs {want}");
}

#[test]
fn strong_cubic_stress_dissipates_monotonically() {
    let g = channel(8);
    let p = PhysParams::unforced(&g, 0.1, 0.0, 10.0, 0.0).unwrap();
    let y0 = smooth(&g, 3, 0.5, 3);
    let traj = integrate(&y0, None, 0.0, 0.05, &p, 1e-3).unwrap();
    assert!(traj.states.windows(2).all(|w| w[1].norm_l2() < w[0].norm_l2()));
    for r in &traj.ledger {
        assert!(r.visc >= 0.0 && r.beta_l4 >= 0.0);
        assert!(r.rhs() < 0.0);
    }
    // The cubic stress is the dominant dissipation at this amplitude.
    let first = traj.ledger[0];
    assert!(first.beta_l4 > first.visc, "{first:?}");
}

#[test]
fn energy_ledger_has_no_alpha_work_in_two_dimensions() {
    let g = channel(8);
    let b = basis(&g, 4);
    let path = noisy_path(&b, 0.5, 0.0, 0.05, 1e-3, 7);
    for alpha in [0.0, 0.5] {
        let p = PhysParams::unforced(&g, 0.5, alpha, 1.0, 0.0).unwrap();
        let traj = integrate(&field(&g, 1).scaled(0.1), Some(&path), 0.0, 0.05, &p, 1e-3).unwrap();
        let res = energy_residual(&traj);
        assert!(res.scale > 0.0 && res.max.is_finite());
        for r in &traj.ledger {
            if alpha == 0.0 {
                assert_eq!(r.alpha_tr, 0.0);
                assert_eq!(r.j_z, 0.0);
            } else {
                assert!(r.alpha_tr.abs() <= 1e-10 * res.scale);
            }
        }
        assert_eq!(traj.ledger_csv().lines().count(), traj.ledger.len() + 1);
    }
}

#[test]
fn checkpoint_restart_is_bit_exact() {
    let g = channel(8);
    let b = basis(&g, 4);
    let path = noisy_path(&b, 0.5, 0.0, 0.1, 1e-3, 9);
    let p = PhysParams::new(0.5, 0.3, 1.0, 0.0, centered_bump(&g, 0.45, 1.0)).unwrap();
    let integ = Integrator::new(p.clone(), SolverOptions::default().with_dt(1e-3).storing_every(10)).unwrap();
    let y0 = field(&g, 2).scaled(0.2);
    let full = integ.integrate(&y0, Some(&path), 0.0, 0.1).unwrap();

    let half = integ.integrate(&y0, Some(&path), 0.0, 0.05).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &half, &p, Some(9)).unwrap();
    let (state, meta) = load_checkpoint(dir.path()).unwrap();
    assert_eq!((meta.step_index, meta.seed), (50, Some(9)));
    let rest = integ.integrate_steps(&state, Some(&path), meta.t0, meta.step_index, 100).unwrap();
    assert_eq!(rest.last().u, full.last().u);
    assert_eq!(rest.last().v, full.last().v);

    let mut joined = half.clone();
    joined.append(rest).unwrap();
    assert_eq!(joined.times, full.times);
}

#[test]
fn recomposition_adds_the_noise_back() {
    let g = channel(8);
    let b = basis(&g, 4);
    let path = noisy_path(&b, 0.5, 0.0, 0.02, 1e-3, 13);
    let p = PhysParams::unforced(&g, 0.5, 0.3, 1.0, 0.0).unwrap();
    let traj = integrate(&field(&g, 3).scaled(0.1), Some(&path), 0.0, 0.02, &p, 1e-3).unwrap();

    let plain = recompose(&traj, None).unwrap();
    assert!(plain.iter().zip(&traj.states).all(|(v, y)| v.u == y.u && v.v == y.v));

    let vs = recompose(&traj, Some(&path)).unwrap();
    for ((v, y), &t) in vs.iter().zip(&traj.states).zip(&traj.times) {
        let z = path.field_at(t).unwrap();
        assert!(v.norm_l2() <= y.norm_l2() + z.norm_l2() + 1e-14);
        // One rounding per sample separates (y + z) − z from y.
        let back = v - &z;
        let err = (&back - y).max_abs();
        assert!(err <= f64::EPSILON * (z.max_abs() + y.max_abs()), "{err}");
    }
    let off = path.shift(0.0005);
    assert!(off.is_err() || recompose(&traj, off.as_ref().ok()).is_err());
}

#[test]
fn guards_report_blow_up_and_stiffness() {
    let g = channel(8);
    let p = PhysParams::new(1.0, 0.0, 1.0, 0.0, centered_bump(&g, 0.45, 1.0)).unwrap();
    let opts = SolverOptions {
        blowup_factor: 1e-6,
        ..SolverOptions::default().with_dt(1e-3)
    };
    let integ = Integrator::new(p, opts).unwrap();
    let err = integ.integrate(&VelocityField::zeros(&g), None, 0.0, 0.01).unwrap_err();
    assert!(matches!(err, Error::BlowUp { .. }), "{err}");

    let stiff = PhysParams::unforced(&g, 1.0, 0.0, 100.0, 0.0).unwrap();
    let opts = SolverOptions {
        max_substeps: 1,
        ..SolverOptions::default().with_dt(1e-2)
    };
    let err = Integrator::new(stiff, opts).unwrap().integrate(&field(&g, 4), None, 0.0, 0.01).unwrap_err();
    assert!(matches!(err, Error::NonConvergence { .. }), "{err}");

    let p = PhysParams::unforced(&g, 1.0, 0.0, 1.0, 0.0).unwrap();
    assert!(integrate(&field(&channel(6), 1), None, 0.0, 0.01, &p, 1e-3).is_err());
    assert!(integrate(&field(&g, 1), None, 0.0, 0.0105, &p, 1e-3).is_err());
}

#[test]
fn galerkin_oracle_single_mode_is_exponential() {
    let g = channel(8);
    let b = basis(&g, 1);
    let nu = 0.7;
    let p = PhysParams::unforced(&g, nu, 0.0, TINY_BETA, 0.0).unwrap();
    let y0 = b.eigenfields[0].scaled(0.01);
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..OdeOptions::default() };
    let o = galerkin_oracle(&y0, None, 0.0, 0.5, &p, &b, 0.05, opts).unwrap();
    let mu = b.eigenvalues[0];
    for (t, c) in o.times.iter().zip(&o.coeffs) {
        let want = 0.01 * (-nu * mu * t).exp();
        assert!((c[0] - want).abs() <= 1e-8 * 0.01, "t = {t}: {} vs {want}", c[0]);
    }
    assert!(o.energy_residual <= 1e-8, "{}", o.energy_residual);
    assert_eq!(o.fields().unwrap().len(), o.times.len());
}

#[test]
fn galerkin_oracle_energy_balance_with_noise() {
    let g = channel(8);
    let b = basis(&g, 3);
    let path = noisy_path(&b, 0.5, 0.0, 0.2, 1e-3, 17);
    let p = PhysParams::new(0.5, 0.3, 1.0, 0.2, b.eigenfields[2].scaled(0.5)).unwrap();
    let y0 = b.reconstruct(&[0.05, -0.02, 0.01]);
    let o = galerkin_oracle(&y0, Some(&path), 0.0, 0.2, &p, &b, 0.01, OdeOptions::default()).unwrap();
    assert!(o.energy_residual <= 1e-8, "{}", o.energy_residual);
    assert!(o.accepted_steps > 0);
}

#[test]
fn continuity_bound_examples() {
    let g = channel(8);
    let b = basis(&g, 4);
    let p = PhysParams::unforced(&g, 0.5, 0.3, 1.0, 0.0).unwrap();
    let consts = calibrate(
        &g,
        b.lambda_hat(),
        p.eps0(),
        CalibrationOptions { n_samples: 200, ..Default::default() },
        ExecMode::Auto,
    )
    .unwrap()
    .constants;
    let path = noisy_path(&b, 0.5, 0.0, 0.2, 1e-3, 19);
    let integ = Integrator::new(p.clone(), SolverOptions::default().with_dt(1e-3).storing_every(10)).unwrap();
    let y0 = field(&g, 5).scaled(0.2);
    let a = integ.integrate(&y0, Some(&path), 0.0, 0.2).unwrap();
    let same = continuity_check(&a, &a.clone(), &p, &consts).unwrap();
    assert_eq!(same.observed, 0.0);
    assert!(same.holds());

    let y1 = &y0 + &b.eigenfields[1].scaled(1e-6);
    let mut bounds = Vec::new();
    for t1 in [0.05, 0.1, 0.2] {
        let ra = integ.integrate(&y1, Some(&path), 0.0, t1).unwrap();
        let rb = integ.integrate(&y0, Some(&path), 0.0, t1).unwrap();
        let c = continuity_check(&ra, &rb, &p, &consts).unwrap();
        assert!(c.holds(), "{c:?}");
        bounds.push(c.bound);
    }
    assert!(bounds.windows(2).all(|w| w[1] >= w[0]), "{bounds:?}");
}

#[test]
fn chi_shift_examples() {
    let g = channel(8);
    let b = basis(&g, 4);
    let p = PhysParams::unforced(&g, 0.5, 0.3, 1.0, 0.0).unwrap();
    let spec = make_noise_spec(&b, 4, 1.0, 0.0).unwrap().with_amplitude(20.0);
    let opts = SolverOptions::default().with_dt(1e-3);
    let x0 = field(&g, 6).scaled(0.2);
    let same = chi_independence_check(&x0, &spec, &p, [0.5, 0.5], 3, 0.1, &opts).unwrap();
    assert_eq!(same.discrepancy, 0.0);

    let diff = chi_independence_check(&x0, &spec, &p, [0.0, 1.0], 3, 0.1, &opts).unwrap();
    let paths = ou_paths_coupled(&spec, &[0.0, 1.0], 0.5, 0.0, 0.1, 1e-3, 3).unwrap();
    let ys: Vec<_> = paths
        .iter()
        .zip([0.0, 1.0])
        .map(|(path, chi)| {
            let y0 = &x0 - &path.field_at(0.0).unwrap();
            let integ = Integrator::new(p.with_chi(chi).unwrap(), opts.clone()).unwrap();
            integ.integrate(&y0, Some(path), 0.0, 0.1).unwrap()
        })
        .collect();
    let y_gap = ys[0].states.iter().zip(&ys[1].states).map(|(a, b)| (a - b).norm_l2()).fold(0.0, f64::max);
    assert!(y_gap > 10.0 * diff.discrepancy, "{y_gap} vs {}", diff.discrepancy);
}

#[test]
fn pressure_gradient_is_a_gradient() {
    let g = channel(8);
    let p = PhysParams::new(0.5, 0.3, 1.0, 0.4, centered_bump(&g, 0.45, 1.0)).unwrap();
    let z = VelocityField::zeros(&g);
    let zero_p = PhysParams::unforced(&g, 0.5, 0.3, 1.0, 0.4).unwrap();
    assert_eq!(pressure_gradient(&z, &z, &z, &zero_p).max_abs(), 0.0);

    let mut r = rng(23);
    for s in 0..5 {
        let y = field(&g, 30 + s);
        let zz = field(&g, 40 + s).scaled(0.3);
        let dydt = white_field(&g, &mut r);
        let gp = pressure_gradient(&y, &zz, &dydt, &p);
        let n = gp.norm_l2();
        assert!(n > 0.0);
        assert!(project(&gp).norm_l2() <= 1e-9 * n);
        let c = curl(&gp).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(c * g.h_min() <= 1e-8 * gp.max_abs(), "{c}");
    }
}
