//! Pullback ensemble experiments: endpoint clouds, the absorbing radius,
//! Hausdorff semidistances, tail masses and invariant-measure probes.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{cutoff_weight, Grid, VelocityField};
use crate::noise::{kappa_parts, member_seed, ou_path, Kappas, NoiseSpec, OUPath};
use crate::operators::OperatorConstants;
use crate::par::{map_indexed, ExecMode};
use crate::params::PhysParams;
use crate::sampling::{smooth_field, SmoothFieldOpts};
use crate::solver::{Integrator, SolverOptions};
use crate::stats;

/// Initial data: `n_members` smooth fields of norm exactly `radius`, built
/// from stream-function profiles up to `max_mode`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSet {
    pub radius: f64,
    pub n_members: usize,
    pub seed: u64,
    pub max_mode: usize,
}

impl InitSet {
    pub fn sample(&self, grid: &Arc<Grid>) -> Vec<VelocityField> {
        (0..self.n_members)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(member_seed(self.seed, i as u64));
                smooth_field(
                    grid,
                    &mut rng,
                    SmoothFieldOpts {
                        l2: Some(self.radius),
                        max_mode: self.max_mode,
                        ..SmoothFieldOpts::default()
                    },
                )
            })
            .collect()
    }
}

/// A member that failed; the rest of the ensemble is kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberFailure {
    pub horizon: usize,
    pub member: usize,
    pub message: String,
}

/// Clouds of time-zero states for every pullback horizon, all driven by the
/// same noise path.
#[derive(Clone, Debug)]
pub struct PullbackResult {
    pub horizons: Vec<f64>,
    /// `clouds[n][i] = Ψ(t_n, θ_{−t_n}ω, x_i)`.
    pub clouds: Vec<Vec<VelocityField>>,
    /// Member index of every cloud entry.
    pub members: Vec<Vec<usize>>,
    /// Largest `‖·‖₂` in each cloud.
    pub radii: Vec<f64>,
    /// `dist(cloud_{n+1}, cloud_n)` for consecutive horizons.
    pub semidistances: Vec<f64>,
    /// Largest `‖x_i − z(−t_n)‖₂` per horizon.
    pub start_norms: Vec<f64>,
    pub failures: Vec<MemberFailure>,
}

/// Integrates every initial state from `−t_n` to `0` along `path` and
/// recomposes `v(0) = y(0) + z(0)`.
pub fn pullback_clouds(
    path: &OUPath,
    params: &PhysParams,
    horizons: &[f64],
    inits: &[VelocityField],
    opts: &SolverOptions,
    mode: ExecMode,
) -> Result<PullbackResult> {
    if inits.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if horizons.is_empty() || horizons.iter().any(|h| !(*h >= 0.0)) || horizons.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "horizons must be nonempty, nonnegative and nondecreasing".into(),
        ));
    }
    let h_max = *horizons.last().expect("nonempty");
    if path.t_min() > -h_max + 1e-9 * path.dt || path.t_max() < -1e-9 * path.dt {
        return Err(Error::WindowExhausted {
            requested: -h_max,
            t_min: path.t_min(),
            t_max: path.t_max(),
        });
    }
    let z0 = path.field_at(0.0)?;
    let integ = Integrator::new(params.clone(), opts.clone())?;
    let m = inits.len();
    let jobs = map_indexed(horizons.len() * m, mode, |job| {
        let (n, i) = (job / m, job % m);
        let t = horizons[n];
        let zs = path.field_at(-t)?;
        let y0 = &inits[i] - &zs;
        let start = y0.norm_l2();
        let traj = integ.integrate(&y0, Some(path), -t, 0.0)?;
        Ok::<_, Error>((traj.last() + &z0, start))
    });

    let mut out = PullbackResult {
        horizons: horizons.to_vec(),
        clouds: vec![Vec::new(); horizons.len()],
        members: vec![Vec::new(); horizons.len()],
        radii: vec![0.0; horizons.len()],
        semidistances: Vec::new(),
        start_norms: vec![0.0; horizons.len()],
        failures: Vec::new(),
    };
    for (job, r) in jobs.into_iter().enumerate() {
        let (n, i) = (job / m, job % m);
        match r {
            Ok((v, start)) => {
                out.radii[n] = out.radii[n].max(v.norm_l2());
                out.start_norms[n] = out.start_norms[n].max(start);
                out.clouds[n].push(v);
                out.members[n].push(i);
            }
            Err(e) => out.failures.push(MemberFailure {
                horizon: n,
                member: i,
                message: e.to_string(),
            }),
        }
    }
    for n in 1..horizons.len() {
        if out.clouds[n].is_empty() || out.clouds[n - 1].is_empty() {
            out.semidistances.push(f64::NAN);
        } else {
            out.semidistances.push(hausdorff_semidistance(&out.clouds[n], &out.clouds[n - 1])?);
        }
    }
    Ok(out)
}

/// Samples a path on `[−max horizon, 0]` from `seed` and the initial set,
/// then runs [`pullback_clouds`].
#[allow(clippy::too_many_arguments)]
pub fn pullback_ensemble(
    seed: u64,
    params: &PhysParams,
    spec: &NoiseSpec,
    horizons: &[f64],
    init: InitSet,
    opts: &SolverOptions,
    mode: ExecMode,
) -> Result<(PullbackResult, OUPath)> {
    let h_max = horizons.iter().copied().fold(0.0, f64::max);
    let path = ou_path(spec, params.chi, params.nu, -h_max, 0.0, opts.dt, seed)?;
    let inits = init.sample(params.grid());
    Ok((pullback_clouds(&path, params, horizons, &inits, opts, mode)?, path))
}

/// `max_{a∈A} min_{b∈B} ‖a − b‖₂`.
pub fn hausdorff_semidistance(a: &[VelocityField], b: &[VelocityField]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut worst = 0.0f64;
    for x in a {
        let mut best = f64::INFINITY;
        for y in b {
            if !x.same_grid(y) {
                return Err(Error::GridMismatch("clouds live on different grids".into()));
            }
            best = best.min((x - y).norm_l2());
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

/// The absorbing ball and the pieces it is assembled from.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AbsorbingRadius {
    pub kappas: Kappas,
    pub kappa11: f64,
    /// `‖z(0)‖₂`.
    pub kappa12: f64,
    /// `κ₁₃ = κ₁₁ + κ₁₂`, the radius in `‖·‖₂`.
    pub kappa13: f64,
    /// Decay rate `c = νλ̂(1 + ε₀/2)`.
    pub rate: f64,
    /// Share of the window integrals contributed by its older half.
    pub tail_fraction: f64,
}

impl AbsorbingRadius {
    /// Pullback time after which a ball of radius `r` (measured after the
    /// noise shift) is inside the absorbing ball: `ln(max(r², 1))/c`.
    pub fn absorption_time(&self, r: f64) -> f64 {
        (r * r).max(1.0).ln() / self.rate
    }
}

/// Window tail shares above this are rejected as too short.
pub const WINDOW_TAIL_LIMIT: f64 = 0.01;

/// Radius of the absorbing ball for the path's noise realization at time 0.
///
/// The energy inequality for `y = v − z` gives, with `c = νλ̂(1+ε₀/2)`,
/// `‖y(0)‖² ≤ e^{−ct}‖y(−t)‖² + ∫_{−t}^0 e^{cs} g(s) ds` where `g` collects the
/// noise and forcing work. Young's inequality with the calibrated embedding
/// constants bounds `g` by `C_z‖z‖₂² + C_W‖z‖⁴_{W^{1,4}} + C_f‖f‖₂²`:
///
/// * `C₃ = 729β/(64ε₀³)` from the quartic `𝒦` pairing,
/// * `M = C_tri·|𝒪|^{1/4}·C_S3·C_K·(1 + λ̂^{−1/2})/(2√2)` from the convective
///   pairing and `C_b4 = 108M⁴/(ν²βε₀³)`,
/// * `C_W = 2(16C₃ + C_b4)`, `C_z = 12χ²/(νε₀λ̂)` and `C_f = 12/(νε₀λ̂)`.
///
/// Then `κ₁₁² = 2 + 2κ₂² + safety·(C_z κ₃² + C_W κ₄⁴ + C_f‖f‖²/c)` and the
/// physical state lies in the ball of radius `κ₁₃ = κ₁₁ + ‖z(0)‖₂`.
pub fn absorbing_radius_estimate(
    path: &OUPath,
    params: &PhysParams,
    consts: &OperatorConstants,
) -> Result<AbsorbingRadius> {
    consts.validate()?;
    params.validate()?;
    let eps0 = params.eps0();
    let lam = consts.lambda_hat;
    let c = params.decay_rate(lam);
    let (kappas, old3, old4) = kappa_parts(path, c, path.t_min(), 1)?;
    let (nu, beta, chi) = (params.nu, params.beta, params.chi);
    let area = params.grid().area();
    let c3 = 729.0 * beta / (64.0 * eps0.powi(3));
    let m = consts.c_tri * area.powf(0.25) * consts.c_s3 * consts.c_k * (1.0 + lam.powf(-0.5))
        / (2.0 * std::f64::consts::SQRT_2);
    let cb4 = 108.0 * m.powi(4) / (nu * nu * beta * eps0.powi(3));
    let cw = 2.0 * (16.0 * c3 + cb4);
    let cz = 12.0 * chi * chi / (nu * eps0 * lam);
    let cf = 12.0 / (nu * eps0 * lam);
    let f2 = params.f.dot(&params.f);
    let i3 = kappas.k3 * kappas.k3;
    let i4 = kappas.k4.powi(4);
    let share = |old: f64, total: f64| if total > 0.0 { old / total } else { 0.0 };
    let tail_fraction = share(old3, i3).max(share(old4, i4));
    if tail_fraction > WINDOW_TAIL_LIMIT {
        return Err(Error::WindowTooShort {
            tail_fraction,
            limit: WINDOW_TAIL_LIMIT,
        });
    }
    let k11sq = 2.0 + 2.0 * kappas.k2 * kappas.k2 + consts.safety * (cz * i3 + cw * i4 + cf * f2 / c);
    let kappa11 = k11sq.sqrt();
    Ok(AbsorbingRadius {
        kappas,
        kappa11,
        kappa12: kappas.k1,
        kappa13: kappa11 + kappas.k1,
        rate: c,
        tail_fraction,
    })
}

/// `∫Λ²(|x|²/k²)|v|² dx`, the weighted mass outside radius `k` around the
/// domain center.
pub fn tail_mass(v: &VelocityField, k: f64) -> Result<f64> {
    let g = v.grid.as_ref();
    let w = cutoff_weight(g, k)?;
    let (uc, vc) = v.cell_centered();
    Ok(w.iter()
        .zip(uc.iter().zip(&vc))
        .map(|(w, (a, b))| w * (a * a + b * b))
        .sum::<f64>()
        * g.cell_area())
}

/// Empirical `k₀(ε)` for every horizon.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailStudy {
    pub ks: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// `max_mass[n][j]`: largest tail mass over cloud `n` at `ks[j]`.
    pub max_mass: Vec<Vec<f64>>,
    /// `k0[n][e]`: smallest `k` with max mass `≤ epsilons[e]`, if any.
    pub k0: Vec<Vec<Option<f64>>>,
    /// `|k₀(ε)|` drift between the two largest horizons, in grid cells.
    pub drift_cells: Vec<Option<f64>>,
}

/// Tail masses of every cloud on the radii `ks` and the resulting `k₀(ε)`.
pub fn tail_decay_study(result: &PullbackResult, ks: &[f64], epsilons: &[f64]) -> Result<TailStudy> {
    if ks.is_empty() || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("ks must be nonempty and increasing".into()));
    }
    let mut max_mass = Vec::with_capacity(result.clouds.len());
    for cloud in &result.clouds {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let row = ks
            .iter()
            .map(|&k| {
                cloud
                    .iter()
                    .map(|v| tail_mass(v, k))
                    .try_fold(0.0f64, |m, x| x.map(|x| m.max(x)))
            })
            .collect::<Result<Vec<f64>>>()?;
        max_mass.push(row);
    }
    let k0: Vec<Vec<Option<f64>>> = max_mass
        .iter()
        .map(|row| {
            epsilons
                .iter()
                .map(|&eps| row.iter().position(|&m| m <= eps).map(|j| ks[j]))
                .collect()
        })
        .collect();
    let h = result.clouds[0][0].grid.h_min();
    let n = k0.len();
    let drift_cells = (0..epsilons.len())
        .map(|e| {
            if n < 2 {
                return None;
            }
            match (k0[n - 2][e], k0[n - 1][e]) {
                (Some(a), Some(b)) => Some((a - b).abs() / h),
                _ => None,
            }
        })
        .collect();
    Ok(TailStudy {
        ks: ks.to_vec(),
        epsilons: epsilons.to_vec(),
        max_mass,
        k0,
        drift_cells,
    })
}

/// Scalar functions of the physical state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Constant,
    /// `‖v‖₂²`.
    Energy,
    /// `tanh(‖v‖₂²/scale)`.
    TanhEnergy { scale: f64 },
    /// `(v, e_j)` for a basis field of the noise.
    Mode { index: usize },
}

impl Observable {
    pub fn eval(&self, v: &VelocityField, spec: &NoiseSpec) -> Result<f64> {
        Ok(match *self {
            Observable::Constant => 1.0,
            Observable::Energy => v.dot(v),
            Observable::TanhEnergy { scale } => (v.dot(v) / scale).tanh(),
            Observable::Mode { index } => {
                let b = spec.require_basis()?;
                let e = b.eigenfields.get(index).ok_or_else(|| {
                    Error::InvalidArgument(format!("mode {index} outside the basis of {} fields", b.m))
                })?;
                v.dot(e)
            }
        })
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    fn of(xs: &[f64]) -> Self {
        McEstimate {
            mean: stats::mean(xs),
            std_error: stats::std_error(xs),
            n: xs.len(),
        }
    }

    /// `|a − b| ≤ k·√(se_a² + se_b²)`.
    pub fn agrees_with(&self, other: &McEstimate, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * self.std_error.hypot(other.std_error)
    }
}

/// `Ψ(t, ω, x)` for a fresh path of seed `seed` started at time zero.
fn evolve(
    integ: &Integrator,
    spec: &NoiseSpec,
    x: &VelocityField,
    t: f64,
    seed: u64,
) -> Result<VelocityField> {
    let p = &integ.params;
    let path = ou_path(spec, p.chi, p.nu, 0.0, t, integ.opts.dt, seed)?;
    let y0 = x - &path.field_at_index(0)?;
    let traj = integ.integrate(&y0, Some(&path), 0.0, t)?;
    Ok(traj.last() + &path.field_at(t)?)
}

/// `T_t f(x) = E[f(Ψ(t, ·, x))]` over `n_omega` independent paths.
#[allow(clippy::too_many_arguments)]
pub fn transition_average(
    observable: Observable,
    t: f64,
    n_omega: usize,
    init: &VelocityField,
    params: &PhysParams,
    spec: &NoiseSpec,
    master_seed: u64,
    opts: &SolverOptions,
    mode: ExecMode,
) -> Result<McEstimate> {
    if n_omega == 0 {
        return Err(Error::InvalidArgument("n_omega must be positive".into()));
    }
    if t == 0.0 {
        let v = observable.eval(init, spec)?;
        return Ok(McEstimate {
            mean: v,
            std_error: 0.0,
            n: n_omega,
        });
    }
    let integ = Integrator::new(params.clone(), opts.clone())?;
    let xs = map_indexed(n_omega, mode, |i| {
        let v = evolve(&integ, spec, init, t, member_seed(master_seed, i as u64))?;
        observable.eval(&v, spec)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::of(&xs))
}

/// Direct and nested estimates of `T_{t₁+t₂}f(x)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MarkovProbe {
    pub direct: McEstimate,
    pub nested: McEstimate,
    pub agrees: bool,
}

/// Compares `T_{t₁+t₂}f(x)` with `E[T_{t₂}f(Ψ(t₁, ·, x))]`, the inner
/// expectation taken over fresh paths for every outer sample.
#[allow(clippy::too_many_arguments)]
pub fn markov_probe(
    observable: Observable,
    t1: f64,
    t2: f64,
    n_outer: usize,
    n_inner: usize,
    init: &VelocityField,
    params: &PhysParams,
    spec: &NoiseSpec,
    master_seed: u64,
    opts: &SolverOptions,
    mode: ExecMode,
) -> Result<MarkovProbe> {
    if n_outer < 2 || n_inner == 0 {
        return Err(Error::InvalidArgument("need n_outer ≥ 2 and n_inner ≥ 1".into()));
    }
    let integ = Integrator::new(params.clone(), opts.clone())?;
    let direct_seed = member_seed(master_seed, 0);
    let nested_seed = member_seed(master_seed, 1);
    let direct = map_indexed(n_outer * n_inner, mode, |i| {
        let v = evolve(&integ, spec, init, t1 + t2, member_seed(direct_seed, i as u64))?;
        observable.eval(&v, spec)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let nested = map_indexed(n_outer, mode, |o| {
        let outer_seed = member_seed(nested_seed, o as u64);
        let mid = evolve(&integ, spec, init, t1, member_seed(outer_seed, 0))?;
        let mut acc = 0.0;
        for j in 0..n_inner {
            let v = evolve(&integ, spec, &mid, t2, member_seed(outer_seed, 1 + j as u64))?;
            acc += observable.eval(&v, spec)?;
        }
        Ok::<_, Error>(acc / n_inner as f64)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let direct = McEstimate::of(&direct);
    let nested = McEstimate::of(&nested);
    Ok(MarkovProbe {
        agrees: direct.agrees_with(&nested, 2.0),
        direct,
        nested,
    })
}

/// Time averages of one observable and the shift-invariance probe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObservableReport {
    pub observable: Observable,
    /// Average over `[burn_in, burn_in + horizon]` across paths.
    pub average: McEstimate,
    /// Average over the window shifted by `shift`.
    pub shifted: McEstimate,
    /// Spread of the per-path time averages.
    pub dispersion: f64,
    pub invariant: bool,
}

/// Long-run time averages after a burn-in.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantMeasureReport {
    pub burn_in: f64,
    pub horizon: f64,
    pub shift: f64,
    pub n_omega: usize,
    pub min_burn_in: f64,
    pub observables: Vec<ObservableReport>,
}

/// Controls of [`invariant_measure_estimate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantOptions {
    pub burn_in: f64,
    pub horizon: f64,
    /// Window shift `Δ`; zero picks `horizon/10`.
    pub shift: f64,
    pub n_omega: usize,
    /// Sample the observables every this many steps.
    pub sample_every: usize,
    pub master_seed: u64,
}

/// Runs `n_omega` paths from `init` over `[0, burn_in + horizon + Δ]` and
/// compares the time averages over `[burn_in, burn_in + horizon]` and
/// `[burn_in + Δ, burn_in + horizon + Δ]`, each with the standard error of
/// its across-path spread. The burn-in must be at least three decay times
/// `1/c`, `c = νλ̂(1 + ε₀/2)`, with `λ̂` the first eigenvalue of the noise
/// basis.
#[allow(clippy::too_many_arguments)]
pub fn invariant_measure_estimate(
    params: &PhysParams,
    spec: &NoiseSpec,
    init: &VelocityField,
    observables: &[Observable],
    iopts: InvariantOptions,
    opts: &SolverOptions,
    mode: ExecMode,
) -> Result<InvariantMeasureReport> {
    let basis = spec.require_basis()?;
    let c = params.decay_rate(basis.lambda_hat());
    let min_burn_in = 3.0 / c;
    if iopts.burn_in < min_burn_in {
        return Err(Error::InvalidArgument(format!(
            "burn-in {} is shorter than three decay times ({min_burn_in})",
            iopts.burn_in
        )));
    }
    if iopts.n_omega < 2 || !(iopts.horizon > 0.0) {
        return Err(Error::InvalidArgument("need n_omega ≥ 2 and a positive horizon".into()));
    }
    let shift = if iopts.shift > 0.0 { iopts.shift } else { iopts.horizon / 10.0 };
    let dt = opts.dt;
    let every = iopts.sample_every.max(1);
    let steps = |t: f64| (t / dt).round() as i64;
    let (n_burn, n_hor, n_shift) = (steps(iopts.burn_in), steps(iopts.horizon), steps(shift));
    let n_end = n_burn + n_hor + n_shift;
    let integ = Integrator::new(params.clone(), opts.clone().storing_every(every))?;
    let per_path = map_indexed(iopts.n_omega, mode, |i| {
        let seed = member_seed(iopts.master_seed, i as u64);
        let path = ou_path(spec, params.chi, params.nu, 0.0, n_end as f64 * dt, dt, seed)?;
        let y0 = init - &path.field_at_index(0)?;
        let traj = integ.integrate_steps(&y0, Some(&path), 0.0, 0, n_end)?;
        let mut sums = vec![(0.0, 0usize, 0.0, 0usize); observables.len()];
        for (&k, y) in traj.steps.iter().zip(&traj.states) {
            let in_a = k >= n_burn && k <= n_burn + n_hor;
            let in_b = k >= n_burn + n_shift && k <= n_end;
            if !(in_a || in_b) {
                continue;
            }
            let v = y + &path.field_at_index(k)?;
            for (s, obs) in sums.iter_mut().zip(observables) {
                let x = obs.eval(&v, spec)?;
                if in_a {
                    s.0 += x;
                    s.1 += 1;
                }
                if in_b {
                    s.2 += x;
                    s.3 += 1;
                }
            }
        }
        Ok::<_, Error>(
            sums.into_iter()
                .map(|(a, na, b, nb)| (a / na.max(1) as f64, b / nb.max(1) as f64))
                .collect::<Vec<_>>(),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let reports = observables
        .iter()
        .enumerate()
        .map(|(o, &observable)| {
            let a: Vec<f64> = per_path.iter().map(|p| p[o].0).collect();
            let b: Vec<f64> = per_path.iter().map(|p| p[o].1).collect();
            let average = McEstimate::of(&a);
            let shifted = McEstimate::of(&b);
            ObservableReport {
                observable,
                average,
                shifted,
                dispersion: stats::variance(&a).sqrt(),
                invariant: average.agrees_with(&shifted, 2.0),
            }
        })
        .collect();
    Ok(InvariantMeasureReport {
        burn_in: iopts.burn_in,
        horizon: iopts.horizon,
        shift,
        n_omega: iopts.n_omega,
        min_burn_in,
        observables: reports,
    })
}
