//! Time integration of the transformed system
//! `y' = −ν𝒜y − ℬ(y+z) − α𝒥(y+z) − β𝒦(y+z) + χz + Pf`.
//!
//! Each step treats the Stokes term by Crank–Nicolson and everything else
//! explicitly at the current state, with `z` taken at the half step. The
//! implicit solve is done in stream-function form, so the new state is
//! divergence-free without a separate projection.
//!
//! Time is addressed by integer step indices `t_n = t0 + n·dt`, which makes
//! restarts from a checkpoint bit-exact.

mod checks;
pub mod galerkin;

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leray::{galerkin_project, laplacian, project, ShiftedStokesSolver, StokesEigenbasis};
use crate::mesh::{sym_grad_sq_staggered, sym_gradient, VelocityField};
use crate::noise::OUPath;
use crate::operators::{conv_raw, stress_raw};

pub use crate::params::{alpha_limit, eps0_of, ParamsRecord, PhysParams};
pub use checks::{
    chi_independence_check, continuity_check, pressure_gradient, pressure_along, ChiIndependence,
    ContinuityCheck, PressureDiagnostics,
};
pub use galerkin::{galerkin_oracle, GalerkinTensors, OracleTrajectory};

/// Controls of the time stepper.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub dt: f64,
    /// Stability factor in `dt ≤ C_stab·h²/(β max|A|² + |α| max|A|)`.
    pub c_stab: f64,
    /// Advective Courant limit `dt ≤ cfl·h/max|u|`.
    pub cfl: f64,
    pub max_substeps: usize,
    /// Abort when `‖y‖₂` exceeds this multiple of the initial scale.
    pub blowup_factor: f64,
    /// Keep every `store_every`-th state (the endpoints are always kept).
    pub store_every: usize,
    /// Galerkin-restrict every step to the span of this basis.
    pub restrict: Option<Arc<StokesEigenbasis>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dt: 1e-3,
            c_stab: 0.25,
            cfl: 0.5,
            max_substeps: 4096,
            blowup_factor: 1e6,
            store_every: 1,
            restrict: None,
        }
    }
}

impl SolverOptions {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn storing_every(mut self, k: usize) -> Self {
        self.store_every = k;
        self
    }
}

/// One row per (sub)step: every term of the energy equality evaluated at
/// `(y_n, z_{n+½})`, with `a = y_n + z_{n+½}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub dt: f64,
    /// `‖y_n‖₂²`.
    pub energy: f64,
    /// `‖y_{n+1}‖₂²`.
    pub energy_next: f64,
    /// `ν‖A(y)‖₂²`.
    pub visc: f64,
    /// `β‖A(a)‖₄⁴`.
    pub beta_l4: f64,
    /// `α∫Tr(A(a)³)`.
    pub alpha_tr: f64,
    /// `⟨ℬ(a), z⟩`.
    pub b_z: f64,
    /// `α⟨𝒥(a), z⟩`.
    pub j_z: f64,
    /// `β⟨𝒦(a), z⟩`.
    pub k_z: f64,
    /// `χ(z, y)`.
    pub chi_zy: f64,
    /// `(f, y)`.
    pub f_y: f64,
    /// `‖A(a)‖₄²`, the Gronwall integrand.
    pub a_l4_sq: f64,
}

impl LedgerRow {
    pub const CSV_HEADER: &'static str =
        "t,dt,energy,energy_next,visc,beta_l4,alpha_tr,b_z,j_z,k_z,chi_zy,f_y,a_l4_sq";

    /// Right-hand side of `d‖y‖²/dt`.
    pub fn rhs(&self) -> f64 {
        -self.visc - self.beta_l4 - self.alpha_tr
            + 2.0 * (self.b_z + self.j_z + self.k_z + self.chi_zy + self.f_y)
    }

    /// `|‖y_{n+1}‖² − ‖y_n‖² − dt·rhs| / dt`.
    pub fn residual(&self) -> f64 {
        (self.energy_next - self.energy - self.dt * self.rhs()).abs() / self.dt
    }

    pub fn csv(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.t,
            self.dt,
            self.energy,
            self.energy_next,
            self.visc,
            self.beta_l4,
            self.alpha_tr,
            self.b_z,
            self.j_z,
            self.k_z,
            self.chi_zy,
            self.f_y,
            self.a_l4_sq
        )
    }
}

/// Counters and timing of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps: usize,
    pub substeps: usize,
    pub max_substeps_per_step: usize,
    pub wall_time_s: f64,
}

/// Stored states, their times and the full energy ledger.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    /// Step index of every stored state.
    pub steps: Vec<i64>,
    pub times: Vec<f64>,
    pub states: Vec<VelocityField>,
    pub ledger: Vec<LedgerRow>,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn last(&self) -> &VelocityField {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn ledger_csv(&self) -> String {
        let mut s = String::from(LedgerRow::CSV_HEADER);
        s.push('\n');
        for r in &self.ledger {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn append(&mut self, other: Trajectory) -> Result<()> {
        if self.steps.last() != other.steps.first() || self.dt != other.dt || self.t0 != other.t0 {
            return Err(Error::InvalidArgument("trajectories do not join".into()));
        }
        self.steps.extend_from_slice(&other.steps[1..]);
        self.times.extend_from_slice(&other.times[1..]);
        self.states.extend(other.states.into_iter().skip(1));
        self.ledger.extend(other.ledger);
        self.stats.steps += other.stats.steps;
        self.stats.substeps += other.stats.substeps;
        self.stats.max_substeps_per_step = self.stats.max_substeps_per_step.max(other.stats.max_substeps_per_step);
        self.stats.wall_time_s += other.stats.wall_time_s;
        Ok(())
    }
}

/// Summary of the per-step energy residuals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyResidual {
    pub max: f64,
    pub mean: f64,
    /// Largest magnitude among the ledger terms, for relative reading.
    pub scale: f64,
}

/// Per-step residuals of the discrete energy equality, normalized by the
/// step so that they measure the error in `d‖y‖²/dt`.
pub fn energy_residual(traj: &Trajectory) -> EnergyResidual {
    if traj.ledger.is_empty() {
        return EnergyResidual::default();
    }
    let rs: Vec<f64> = traj.ledger.iter().map(LedgerRow::residual).collect();
    let scale = traj
        .ledger
        .iter()
        .map(|r| {
            [r.visc, r.beta_l4, r.alpha_tr, 2.0 * r.b_z, 2.0 * r.j_z, 2.0 * r.k_z, 2.0 * r.chi_zy, 2.0 * r.f_y]
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()))
        })
        .fold(0.0, f64::max);
    EnergyResidual {
        max: rs.iter().copied().fold(0.0, f64::max),
        mean: rs.iter().sum::<f64>() / rs.len() as f64,
        scale,
    }
}

/// Crank–Nicolson/explicit integrator bound to one parameter set.
pub struct Integrator {
    pub params: PhysParams,
    pub opts: SolverOptions,
    pf: VelocityField,
    factors: Mutex<Vec<(u64, Arc<ShiftedStokesSolver>)>>,
}

impl Integrator {
    pub fn new(params: PhysParams, opts: SolverOptions) -> Result<Self> {
        params.validate()?;
        if !(opts.dt > 0.0) || !(opts.c_stab > 0.0) || !(opts.cfl > 0.0) || opts.max_substeps == 0 {
            return Err(Error::InvalidArgument(format!("invalid solver options: {opts:?}")));
        }
        if let Some(b) = &opts.restrict {
            if *b.grid != **params.grid() {
                return Err(Error::GridMismatch("restriction basis and forcing grids differ".into()));
            }
        }
        let pf = project(&params.f);
        Ok(Integrator {
            params,
            opts,
            pf,
            factors: Mutex::new(Vec::new()),
        })
    }

    fn solver_for(&self, dt: f64) -> Result<Arc<ShiftedStokesSolver>> {
        let key = dt.to_bits();
        let mut cache = self.factors.lock().expect("factor cache poisoned");
        if let Some((_, s)) = cache.iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(ShiftedStokesSolver::new(self.params.grid(), 0.5 * self.params.nu * dt)?);
        if cache.len() > 8 {
            cache.remove(0);
        }
        cache.push((key, Arc::clone(&s)));
        Ok(s)
    }

    /// Largest stable step for the state `a = y + z`.
    pub fn stable_dt(&self, a: &VelocityField) -> f64 {
        let g = a.grid.as_ref();
        let h = g.h_min();
        let amax = sym_gradient(a).max_frob();
        let p = &self.params;
        let stiff = p.beta * amax * amax + p.alpha.abs() * amax + 1e-300;
        let umax = a.max_abs() + 1e-300;
        (self.opts.c_stab * h * h / stiff).min(self.opts.cfl * h / umax)
    }

    /// One step of size `dt` from `y` with the half-step noise field `zh`.
    /// Returns the new state and the ledger row at `(y, zh)`.
    pub fn step(&self, y: &VelocityField, zh: &VelocityField, t: f64, dt: f64) -> Result<(VelocityField, LedgerRow)> {
        let p = &self.params;
        let a = y + zh;
        let conv = conv_raw(&a, &a);
        let stress = stress_raw(&a, p.alpha, p.beta);

        let c = 0.5 * p.nu * dt;
        let mut r = laplacian(y);
        r.scale(c);
        r.axpy(1.0, y);
        r.axpy(-dt, &conv);
        r.axpy(-dt, &stress);
        r.axpy(dt * p.chi, zh);
        r.axpy(dt, &self.pf);
        let mut next = self.solver_for(dt)?.solve(&r);
        if let Some(b) = &self.opts.restrict {
            next = b.reconstruct(&galerkin_project(&next, b)?);
        }

        let aa = sym_gradient(&a);
        let az = sym_gradient(zh);
        let (mut jz, mut kz, mut l4, mut tr) = (0.0, 0.0, 0.0, 0.0);
        for cell in 0..aa.a11.len() {
            let (x, s, w) = (aa.a11[cell], aa.a12[cell], aa.a22[cell]);
            let f = aa.frob_sq_at(cell);
            let (q11, q12, q22) = (x * x + s * s, s * (x + w), s * s + w * w);
            let (z11, z12, z22) = (az.a11[cell], az.a12[cell], az.a22[cell]);
            jz += q11 * z11 + 2.0 * q12 * z12 + q22 * z22;
            kz += f * (x * z11 + 2.0 * s * z12 + w * z22);
            l4 += f * f;
            tr += q11 * x + 2.0 * q12 * s + q22 * w;
        }
        let area = a.grid.cell_area();
        let row = LedgerRow {
            t,
            dt,
            energy: y.dot(y),
            energy_next: next.dot(&next),
            visc: p.nu * sym_grad_sq_staggered(y),
            beta_l4: p.beta * l4 * area,
            alpha_tr: p.alpha * tr * area,
            b_z: conv.dot(zh),
            j_z: 0.5 * p.alpha * jz * area,
            k_z: 0.5 * p.beta * kz * area,
            chi_zy: p.chi * zh.dot(y),
            f_y: self.pf.dot(y),
            a_l4_sq: (l4 * area).sqrt(),
        };
        Ok((next, row))
    }

    /// Integrates from `t0` to `t1` (a whole number of steps).
    pub fn integrate(&self, y0: &VelocityField, path: Option<&OUPath>, t0: f64, t1: f64) -> Result<Trajectory> {
        let n = ((t1 - t0) / self.opts.dt).round();
        if !(n >= 0.0) || ((t1 - t0) / self.opts.dt - n).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "[{t0}, {t1}] is not a whole number of steps of {}",
                self.opts.dt
            )));
        }
        self.integrate_steps(y0, path, t0, 0, n as i64)
    }

    /// Integrates from step `n0` to step `n1`, with `t_n = t0 + n·dt`.
    pub fn integrate_steps(
        &self,
        y0: &VelocityField,
        path: Option<&OUPath>,
        t0: f64,
        n0: i64,
        n1: i64,
    ) -> Result<Trajectory> {
        let clock = Instant::now();
        let dt = self.opts.dt;
        let time = |n: i64| t0 + n as f64 * dt;
        if !y0.same_grid(&self.params.f) {
            return Err(Error::GridMismatch("initial state and forcing grids differ".into()));
        }
        if let Some(p) = path {
            let b = p.spec.require_basis()?;
            if *b.grid != **self.params.grid() {
                return Err(Error::GridMismatch("noise basis and state grids differ".into()));
            }
            for t in [time(n0), time(n1)] {
                if t < p.t_min() - 1e-9 * p.dt || t > p.t_max() + 1e-9 * p.dt {
                    return Err(Error::WindowExhausted {
                        requested: t,
                        t_min: p.t_min(),
                        t_max: p.t_max(),
                    });
                }
            }
        }
        let zcoef = |n: i64| -> Result<Option<Vec<f64>>> {
            match path {
                Some(p) => Ok(Some(p.coeffs_at(time(n))?)),
                None => Ok(None),
            }
        };
        let grid = Arc::clone(self.params.grid());
        let zero = VelocityField::zeros(&grid);
        let basis = path.map(|p| p.spec.require_basis()).transpose()?;
        let limit = self.opts.blowup_factor
            * y0.norm_l2().max(self.params.f.norm_l2()).max(1.0);

        let mut traj = Trajectory {
            t0,
            dt,
            steps: vec![n0],
            times: vec![time(n0)],
            states: vec![y0.clone()],
            ledger: Vec::with_capacity((n1 - n0).max(0) as usize),
            stats: SolverStats::default(),
        };
        let mut y = y0.clone();
        let mut zc_now = zcoef(n0)?;
        for n in n0..n1 {
            let zc_next = zcoef(n + 1)?;
            let z_at = |theta: f64| -> VelocityField {
                match (&zc_now, &zc_next, basis) {
                    (Some(c0), Some(c1), Some(b)) => {
                        let c: Vec<f64> = c0.iter().zip(c1).map(|(p, q)| (1.0 - theta) * p + theta * q).collect();
                        b.reconstruct(&c)
                    }
                    _ => zero.clone(),
                }
            };
            let a0 = &y + &z_at(0.0);
            let sub = ((dt / self.stable_dt(&a0)).ceil() as usize).max(1);
            if sub > self.opts.max_substeps {
                return Err(Error::NonConvergence {
                    what: "stability guard (substeps per step)",
                    iterations: sub,
                    residual: self.stable_dt(&a0),
                });
            }
            let h = dt / sub as f64;
            for s in 0..sub {
                let zh = if sub == 1 {
                    z_at(0.5)
                } else {
                    z_at((s as f64 + 0.5) / sub as f64)
                };
                let (next, row) = self.step(&y, &zh, time(n) + s as f64 * h, h)?;
                let norm = next.norm_l2();
                if !next.is_finite() || norm > limit {
                    return Err(Error::BlowUp {
                        time: time(n) + (s + 1) as f64 * h,
                        norm,
                        limit,
                    });
                }
                traj.ledger.push(row);
                y = next;
            }
            traj.stats.steps += 1;
            traj.stats.substeps += sub;
            traj.stats.max_substeps_per_step = traj.stats.max_substeps_per_step.max(sub);
            let k = n + 1;
            if k == n1 || (self.opts.store_every > 0 && (k - n0) % self.opts.store_every as i64 == 0) {
                traj.steps.push(k);
                traj.times.push(time(k));
                traj.states.push(y.clone());
            }
            zc_now = zc_next;
        }
        traj.stats.wall_time_s = clock.elapsed().as_secs_f64();
        Ok(traj)
    }
}

/// A single step with no stability guard.
pub fn step(
    y: &VelocityField,
    z_now: &VelocityField,
    z_next: &VelocityField,
    params: &PhysParams,
    dt: f64,
) -> Result<VelocityField> {
    let integ = Integrator::new(params.clone(), SolverOptions::default().with_dt(dt))?;
    let mut zh = z_now + z_next;
    zh.scale(0.5);
    Ok(integ.step(y, &zh, 0.0, dt)?.0)
}

/// Integrates with fresh default options at step `dt`.
pub fn integrate(
    y0: &VelocityField,
    path: Option<&OUPath>,
    t0: f64,
    t1: f64,
    params: &PhysParams,
    dt: f64,
) -> Result<Trajectory> {
    Integrator::new(params.clone(), SolverOptions::default().with_dt(dt))?.integrate(y0, path, t0, t1)
}

/// Physical states `v(t) = y(t) + z(t)` at every stored time.
pub fn recompose(traj: &Trajectory, path: Option<&OUPath>) -> Result<Vec<VelocityField>> {
    let Some(p) = path else {
        return Ok(traj.states.clone());
    };
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, y)| {
            let k = p.index_of(t).ok_or_else(|| {
                Error::GridMismatch(format!("time {t} is not a sample of the noise path"))
            })?;
            let z = p.field_at_index(k)?;
            if !z.same_grid(y) {
                return Err(Error::GridMismatch("noise and state grids differ".into()));
            }
            Ok(y + &z)
        })
        .collect()
}

/// Metadata written next to a checkpointed state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub params: ParamsRecord,
    pub seed: Option<u64>,
    pub dt: f64,
    pub t0: f64,
    pub step_index: i64,
    pub t: f64,
}

/// Writes `state.bin`, `ledger.csv` and `meta.json` into `dir`.
pub fn save_checkpoint(dir: &Path, traj: &Trajectory, params: &PhysParams, seed: Option<u64>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    traj.last().save(&dir.join("state.bin"))?;
    std::fs::write(dir.join("ledger.csv"), traj.ledger_csv())?;
    let meta = CheckpointMeta {
        params: params.record(),
        seed,
        dt: traj.dt,
        t0: traj.t0,
        step_index: *traj.steps.last().expect("nonempty"),
        t: *traj.times.last().expect("nonempty"),
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<(VelocityField, CheckpointMeta)> {
    let state = VelocityField::load(&dir.join("state.bin"))?;
    let meta: CheckpointMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
    Ok((state, meta))
}
