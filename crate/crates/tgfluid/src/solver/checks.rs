//! A-posteriori checks on computed trajectories: continuous dependence,
//! independence of the recomposed solution from `χ`, and pressure recovery.

use serde::Serialize;

use super::{recompose, Integrator, SolverOptions, Trajectory};
use crate::error::{Error, Result};
use crate::leray::{curl, project};
use crate::mesh::VelocityField;
use crate::noise::{ou_paths_coupled, NoiseSpec};
use crate::operators::{conv_raw, stress_raw, OperatorConstants};
use crate::params::PhysParams;

/// Observed separation of two runs against the Gronwall bound.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContinuityCheck {
    /// `sup_t ‖y_a − y_b‖₂²` over the stored states.
    pub observed: f64,
    pub bound: f64,
    pub initial: f64,
    /// `∫‖A(y_b + z)‖₄² dt` from the ledger of `run_b`.
    pub integral: f64,
}

impl ContinuityCheck {
    pub fn holds(&self) -> bool {
        self.observed <= self.bound * (1.0 + 1e-12) + 1e-300
    }
}

/// Compares two runs driven by the same noise with
/// `‖y_a(0) − y_b(0)‖² exp(rate ∫‖A(y_b + z)‖₄²)`, `rate` from
/// [`OperatorConstants::gronwall_rate`].
pub fn continuity_check(
    run_a: &Trajectory,
    run_b: &Trajectory,
    params: &PhysParams,
    consts: &OperatorConstants,
) -> Result<ContinuityCheck> {
    if run_a.times.len() != run_b.times.len()
        || run_a.times.iter().zip(&run_b.times).any(|(a, b)| a != b)
    {
        return Err(Error::GridMismatch("runs are stored at different times".into()));
    }
    consts.validate()?;
    let sq = |k: usize| {
        let d = &run_a.states[k] - &run_b.states[k];
        d.dot(&d)
    };
    let initial = sq(0);
    let observed = (0..run_a.states.len()).map(sq).fold(0.0, f64::max);
    let integral: f64 = run_b.ledger.iter().map(|r| r.dt * r.a_l4_sq).sum();
    Ok(ContinuityCheck {
        observed,
        bound: initial * (consts.gronwall_rate(params.nu) * integral).exp(),
        initial,
        integral,
    })
}

/// Two recomposed solutions started from the same physical state.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChiIndependence {
    /// `sup_t ‖v_{χ₁} − v_{χ₂}‖₂`.
    pub discrepancy: f64,
    /// `sup_t ‖v_{χ₁}‖₂`.
    pub scale: f64,
}

impl ChiIndependence {
    pub fn relative(&self) -> f64 {
        self.discrepancy / self.scale.max(f64::MIN_POSITIVE)
    }
}

/// Runs the transformed system for `χ₁` and `χ₂` on coupled OU paths that
/// share one Wiener path, both from the physical state `x0` at time zero,
/// and compares `y + z` over `[0, horizon]`.
pub fn chi_independence_check(
    x0: &VelocityField,
    spec: &NoiseSpec,
    params: &PhysParams,
    chis: [f64; 2],
    seed: u64,
    horizon: f64,
    opts: &SolverOptions,
) -> Result<ChiIndependence> {
    let paths = ou_paths_coupled(spec, &chis, params.nu, 0.0, horizon, opts.dt, seed)?;
    let mut runs = Vec::with_capacity(2);
    for (path, &chi) in paths.iter().zip(&chis) {
        let y0 = x0 - &path.field_at_index(path.index_of(0.0).expect("window starts at zero"))?;
        let integ = Integrator::new(params.with_chi(chi)?, opts.clone())?;
        let traj = integ.integrate(&y0, Some(path), 0.0, horizon)?;
        runs.push(recompose(&traj, Some(path))?);
    }
    let mut out = ChiIndependence {
        discrepancy: 0.0,
        scale: 0.0,
    };
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        out.discrepancy = out.discrepancy.max((a - b).norm_l2());
        out.scale = out.scale.max(a.norm_l2());
    }
    Ok(out)
}

/// The gradient part of the momentum residual,
/// `∇P̂ = (I − P)(−(y' + ν(−Δy) + conv(u,u) + stress(u) − χz − f))`
/// with `u = y + z`.
pub fn pressure_gradient(
    y: &VelocityField,
    z: &VelocityField,
    dydt: &VelocityField,
    params: &PhysParams,
) -> VelocityField {
    let u = y + z;
    let mut r = crate::leray::laplacian(y);
    r.scale(-params.nu);
    r.axpy(1.0, dydt);
    r.axpy(1.0, &conv_raw(&u, &u));
    r.axpy(1.0, &stress_raw(&u, params.alpha, params.beta));
    r.axpy(-params.chi, z);
    r.axpy(-1.0, &params.f);
    let mut g = project(&r);
    g.axpy(-1.0, &r);
    g
}

/// How closely a recovered pressure gradient is a pure gradient.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PressureDiagnostics {
    pub t: f64,
    /// `‖P∇P̂‖₂ / ‖∇P̂‖₂`.
    pub solenoidal_part: f64,
    /// `max|curl ∇P̂|·h / max|∇P̂|` over interior nodes.
    pub curl_rel: f64,
}

fn diagnose(t: f64, g: &VelocityField) -> PressureDiagnostics {
    let gn = g.norm_l2().max(f64::MIN_POSITIVE);
    let gm = g.max_abs().max(f64::MIN_POSITIVE);
    let c = curl(g).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    PressureDiagnostics {
        t,
        solenoidal_part: project(g).norm_l2() / gn,
        curl_rel: c * g.grid.h_min() / gm,
    }
}

/// Recovers `∇P̂` at every interior stored time of `traj`, with `y'` from
/// centered differences of neighbouring states.
pub fn pressure_along(
    traj: &Trajectory,
    path: Option<&crate::noise::OUPath>,
    params: &PhysParams,
) -> Result<Vec<PressureDiagnostics>> {
    if traj.states.len() < 3 {
        return Err(Error::InvalidArgument("pressure recovery needs at least three stored states".into()));
    }
    let zero = VelocityField::zeros(params.grid());
    (1..traj.states.len() - 1)
        .map(|k| {
            let (t0, t, t1) = (traj.times[k - 1], traj.times[k], traj.times[k + 1]);
            let mut dydt = &traj.states[k + 1] - &traj.states[k - 1];
            dydt.scale(1.0 / (t1 - t0));
            let z = match path {
                Some(p) => p.field_at(t)?,
                None => zero.clone(),
            };
            Ok(diagnose(t, &pressure_gradient(&traj.states[k], &z, &dydt, params)))
        })
        .collect()
}
