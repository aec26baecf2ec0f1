mod common;

use std::sync::Arc;

use common::{channel, square};
use proptest::prelude::*;
use tgfluid::error::Error;
use tgfluid::leray::{divergence, stokes_eigs, StokesEigenbasis};
use tgfluid::noise::{
    make_noise_spec, member_seed, ou_diagnostics, ou_path, ou_paths_coupled, radius_kappas, radius_kappas_with,
    NoiseSpec, OUPath,
};
use tgfluid::stats;

fn small_basis() -> Arc<StokesEigenbasis> {
    Arc::new(stokes_eigs(&channel(4), 4).unwrap())
}

fn unit_mode() -> NoiseSpec {
    NoiseSpec::custom(vec![1.0], vec![1.0]).unwrap()
}

#[test]
fn exponent_must_exceed_half() {
    assert!(matches!(NoiseSpec::from_eigenvalues(vec![1.0, 4.0], 0.4, 0.0), Err(Error::ExponentTooSmall(_))));
    assert!(make_noise_spec(&small_basis(), 2, 0.5, 0.0).is_err());
}

#[test]
fn power_law_amplitudes() {
    let s = NoiseSpec::from_eigenvalues(vec![1.0, 4.0, 9.0], 1.0, 0.0).unwrap();
    let want = [1.0, 1.0 / 16.0, 1.0 / 81.0];
    for (a, b) in s.sigma.iter().zip(want) {
        assert!((a - b).abs() <= 1e-15 * b);
    }
    assert!(s.sigma.windows(2).all(|w| w[1] < w[0]));
    let s3 = s.with_amplitude(3.0);
    assert!((s3.sigma[1] - 3.0 / 16.0).abs() < 1e-15);
    assert_eq!(s3.rates(0.5, 2.0), vec![2.5, 4.0, 6.5]);
}

#[test]
fn w14_partial_sums_settle() {
    let b = Arc::new(stokes_eigs(&square(32), 16).unwrap());
    let s = make_noise_spec(&b, 16, 1.0, 0.0).unwrap();
    let sums = s.w14_partial_sums().unwrap();
    assert_eq!(sums.len(), 16);
    assert!(sums.windows(2).all(|w| w[1] >= w[0]));
    // Terms decay like j⁻³, so the last sums agree to 1%.
    let total = sums[15];
    assert!((total - sums[12]) / total < 0.01, "{sums:?}");
    assert!((total - sums[14]) / total < 0.1 * (sums[1] - sums[0]) / sums[1], "{sums:?}");
}

#[test]
fn zero_amplitude_gives_zero_path() {
    let b = small_basis();
    let s = make_noise_spec(&b, 3, 1.0, 0.0).unwrap().with_amplitude(0.0);
    let p = ou_path(&s, 0.0, 1.0, -1.0, 1.0, 0.01, 5).unwrap();
    assert!((0..3).all(|j| p.mode_series(j).iter().all(|x| *x == 0.0)));
    let k = radius_kappas(&p, 2.0, -1.0).unwrap();
    assert_eq!((k.k1, k.k2, k.k3, k.k4), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn reconstructed_noise_is_solenoidal() {
    let b = small_basis();
    let s = make_noise_spec(&b, 4, 1.0, 0.0).unwrap().with_amplitude(10.0);
    let p = ou_path(&s, 0.0, 1.0, 0.0, 0.1, 0.01, 9).unwrap();
    let z = p.field_at(0.05).unwrap();
    let div = divergence(&z).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(div <= 1e-10 * z.max_abs());
}

#[test]
fn single_mode_statistics() {
    // a = νμ + χ = 1 and σ = 1 over 10⁴ time units.
    let p = ou_path(&unit_mode(), 0.0, 1.0, 0.0, 1e4, 0.05, 11).unwrap();
    let d = ou_diagnostics(&p, 0, 10, 1000);
    assert_eq!(d.expected_variance, 0.5);
    assert!((d.variance / 0.5 - 1.0).abs() < 0.05, "{d:?}");
    assert!(d.mean.abs() < 0.05, "{d:?}");
    assert!((d.autocorrelation / d.expected_autocorrelation - 1.0).abs() < 0.05, "{d:?}");
    assert!(d.ks_pvalue > 0.01, "{d:?}");
    assert_eq!(d.ks_samples, 1000);
}

#[test]
fn independent_seeds_are_uncorrelated() {
    let a = ou_path(&unit_mode(), 0.0, 1.0, 0.0, 1e4, 0.05, member_seed(3, 0)).unwrap();
    let b = ou_path(&unit_mode(), 0.0, 1.0, 0.0, 1e4, 0.05, member_seed(3, 1)).unwrap();
    let r = stats::correlation(&a.mode_series(0), &b.mode_series(0));
    assert!(r.abs() < 0.05, "{r}");
    assert_ne!(member_seed(3, 0), member_seed(3, 1));
    assert_eq!(member_seed(3, 1), member_seed(3, 1));
}

#[test]
fn shift_is_relabeling() {
    let p = ou_path(&unit_mode(), 0.0, 1.0, -2.0, 2.0, 0.01, 13).unwrap();
    assert!(p.shift(0.0).unwrap().same_samples(&p));
    let s = p.shift(0.5).unwrap();
    for t in [-2.5, -1.0, 0.0, 1.37, 1.5] {
        assert_eq!(s.coeffs_at(t).unwrap(), p.coeffs_at(t + 0.5).unwrap());
    }
    assert!(p.shift(0.005).is_err());
}

#[test]
fn window_exhaustion_and_extension() {
    let mut p = ou_path(&unit_mode(), 0.0, 1.0, -1.0, 1.0, 0.01, 17).unwrap();
    assert!(matches!(p.coeffs_at(-1.5), Err(Error::WindowExhausted { .. })));
    assert!(matches!(p.ensure_window(-0.5, 2.0, false), Err(Error::WindowExhausted { .. })));
    assert!(matches!(p.ensure_window(-2.0, 0.0, true), Err(Error::WindowExhausted { .. })));
    p.ensure_window(-0.5, 3.0, true).unwrap();
    let direct = ou_path(&unit_mode(), 0.0, 1.0, -1.0, 3.0, 0.01, 17).unwrap();
    assert!(p.same_samples(&direct));
}

#[test]
fn kappas_grow_with_the_window() {
    let b = small_basis();
    let s = make_noise_spec(&b, 4, 1.0, 0.0).unwrap().with_amplitude(50.0);
    let p = ou_path(&s, 0.0, 0.1, -4.0, 0.0, 0.01, 19).unwrap();
    let mut last = (0.0, 0.0);
    for w in [0.5, 1.0, 2.0, 4.0] {
        let k = radius_kappas(&p, 1.0, -w).unwrap();
        assert!(k.k3 >= last.0 && k.k4 >= last.1);
        last = (k.k3, k.k4);
    }
    let strided = radius_kappas_with(&p, 1.0, -4.0, 4).unwrap();
    assert!((strided.k3 / last.0 - 1.0).abs() < 0.05);
    assert!(matches!(radius_kappas(&p, 1.0, -5.0), Err(Error::WindowExhausted { .. })));
}

#[test]
fn kappas_are_tempered_along_paths() {
    let b = small_basis();
    let s = make_noise_spec(&b, 4, 1.0, 0.0).unwrap().with_amplitude(50.0);
    let nu = 0.1;
    let c = nu * b.lambda_hat() * 1.5;
    let w = 2.0;
    for seed in 0..20 {
        let p = ou_path(&s, 0.0, nu, -(w + 8.0), 0.0, 0.01, seed).unwrap();
        let base = radius_kappas(&p, c, -w).unwrap();
        let trend = |t: f64| {
            let k = radius_kappas(&p.shift(-t).unwrap(), c, -w).unwrap();
            [k.k1, k.k2, k.k3, k.k4.powi(2)].map(|x| x * x * (-c * t).exp())
        };
        let late = trend(8.0);
        let first = [base.k1, base.k2, base.k3, base.k4.powi(2)].map(|x| x * x);
        for (l, f) in late.iter().zip(first) {
            assert!(*l < 1e-3 * f, "seed {seed}: {late:?} vs {first:?}");
        }
    }
}

#[test]
fn path_files_replay_bit_exactly() {
    let b = small_basis();
    let s = make_noise_spec(&b, 3, 1.0, 0.0).unwrap().with_amplitude(5.0);
    let p = ou_path(&s, 0.5, 1.0, -1.0, 1.0, 0.01, 23).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("z.path");
    p.save(&f).unwrap();
    let mut back = OUPath::load(&f, Some(Arc::clone(&b))).unwrap();
    assert!(back.same_samples(&p));
    assert_eq!(back.field_at(0.3).unwrap().u, p.field_at(0.3).unwrap().u);
    // The generator state survives the round trip.
    let mut q = p.clone();
    q.extend_to(2.0).unwrap();
    back.extend_to(2.0).unwrap();
    assert!(back.same_samples(&q));
}

#[test]
fn coupled_paths_share_the_driving_noise() {
    let s = NoiseSpec::from_eigenvalues(vec![1.0, 2.0], 1.0, 0.0).unwrap();
    let ps = ou_paths_coupled(&s, &[0.0, 3.0, 0.0], 1.0, -1.0, 1.0, 0.01, 29).unwrap();
    assert!(ps[0].same_samples(&ps[2]));
    assert!(!ps[0].same_samples(&ps[1]));
    let single = ou_path(&s, 0.0, 1.0, -1.0, 1.0, 0.01, 29).unwrap();
    let twins = ou_paths_coupled(&s, &[0.0, 0.0], 1.0, -1.0, 1.0, 0.01, 29).unwrap();
    assert!(single.same_samples(&twins[0]) && single.same_samples(&twins[1]));
    assert!(ou_paths_coupled(&s, &[-1.0], 1.0, -1.0, 1.0, 0.01, 29).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shifts_compose(k1 in -100i64..100, k2 in -100i64..100) {
        let p = ou_path(&unit_mode(), 0.0, 1.0, -1.0, 1.0, 0.01, 31).unwrap();
        let (s1, s2) = (k1 as f64 * 0.01, k2 as f64 * 0.01);
        let a = p.shift(s1).unwrap().shift(s2).unwrap();
        let b = p.shift((k1 + k2) as f64 * 0.01).unwrap();
        prop_assert!(a.same_samples(&b));
        prop_assert_eq!(a.start_index(), p.start_index() - k1 - k2);
    }

    #[test]
    fn marginal_variance_is_bounded(seed in 0u64..1000, a in 0.5f64..4.0) {
        let s = NoiseSpec::custom(vec![1.0], vec![1.0]).unwrap();
        let t_max = (2000.0 / a / 0.02).round() * 0.02;
        let p = ou_path(&s, a - 0.5, 0.5, 0.0, t_max, 0.02, seed).unwrap();
        let v = stats::variance(&p.mode_series(0));
        prop_assert!((v * 2.0 * a - 1.0).abs() < 0.15, "{}", v * 2.0 * a);
    }
}
