//! Independent reference for the stepper: the same dynamics written as an
//! ODE for the coefficients on the first `m` Stokes eigenfields, with the
//! nonlinear terms assembled as dense tensors and integrated by an adaptive
//! fifth-order method.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::leray::{galerkin_project, StokesEigenbasis};
use crate::mesh::{sym_gradient, TensorField, VelocityField};
use crate::noise::OUPath;
use crate::ode::{dopri5, OdeOptions, OdeStats};
use crate::operators::conv_raw;
use crate::params::PhysParams;

/// Dense Galerkin tensors on the span of `m` eigenfields.
#[derive(Clone, Debug)]
pub struct GalerkinTensors {
    pub m: usize,
    pub mu: Vec<f64>,
    /// `b[(i·m + j)·m + k] = (conv(e_i, e_j), e_k)`.
    pub b: Vec<f64>,
    /// `j[(i·m + j)·m + k] = ½∫Tr(A_i A_j A_k)`.
    pub j: Vec<f64>,
    /// `k[((i·m + j)·m + l)·m + k] = ½∫(A_i:A_j)(A_l:A_k)`.
    pub k: Vec<f64>,
}

fn tr3(x: &TensorField, y: &TensorField, z: &TensorField, c: usize) -> f64 {
    let (x11, x12, x22) = (x.a11[c], x.a12[c], x.a22[c]);
    let (y11, y12, y22) = (y.a11[c], y.a12[c], y.a22[c]);
    let (p11, p12, p21, p22) = (
        x11 * y11 + x12 * y12,
        x11 * y12 + x12 * y22,
        x12 * y11 + x22 * y12,
        x12 * y12 + x22 * y22,
    );
    p11 * z.a11[c] + (p12 + p21) * z.a12[c] + p22 * z.a22[c]
}

impl GalerkinTensors {
    pub fn assemble(basis: &StokesEigenbasis) -> Self {
        let m = basis.m;
        let e = &basis.eigenfields;
        let grads: Vec<TensorField> = e.iter().map(sym_gradient).collect();
        let area = basis.grid.cell_area();
        let nc = basis.grid.n_cells();

        let mut b = vec![0.0; m * m * m];
        for i in 0..m {
            for jj in 0..m {
                let c = conv_raw(&e[i], &e[jj]);
                for k in 0..m {
                    b[(i * m + jj) * m + k] = c.dot(&e[k]);
                }
            }
        }

        let mut j = vec![0.0; m * m * m];
        for i in 0..m {
            for jj in 0..m {
                for k in 0..m {
                    let s: f64 = (0..nc).map(|c| tr3(&grads[i], &grads[jj], &grads[k], c)).sum();
                    j[(i * m + jj) * m + k] = 0.5 * s * area;
                }
            }
        }

        let mut q = vec![vec![0.0; nc]; m * m];
        for i in 0..m {
            for jj in 0..m {
                let (x, y) = (&grads[i], &grads[jj]);
                for (c, out) in q[i * m + jj].iter_mut().enumerate() {
                    *out = x.a11[c] * y.a11[c] + 2.0 * x.a12[c] * y.a12[c] + x.a22[c] * y.a22[c];
                }
            }
        }
        let mm = m * m;
        let mut k = vec![0.0; mm * mm];
        for p in 0..mm {
            for r in p..mm {
                let s: f64 = q[p].iter().zip(&q[r]).map(|(a, b)| a * b).sum();
                k[p * mm + r] = 0.5 * s * area;
                k[r * mm + p] = 0.5 * s * area;
            }
        }

        GalerkinTensors {
            m,
            mu: basis.eigenvalues.clone(),
            b,
            j,
            k,
        }
    }

    /// Contractions `Σ b_ijk a_i a_j`, `Σ j_ijk a_i a_j` and
    /// `Σ k_ijlk a_i a_j a_l`.
    pub fn contract(&self, a: &[f64], bv: &mut [f64], jv: &mut [f64], kv: &mut [f64]) {
        let m = self.m;
        bv.fill(0.0);
        jv.fill(0.0);
        kv.fill(0.0);
        for i in 0..m {
            for j in 0..m {
                let aij = a[i] * a[j];
                let base = (i * m + j) * m;
                for k in 0..m {
                    bv[k] += self.b[base + k] * aij;
                    jv[k] += self.j[base + k] * aij;
                }
                for l in 0..m {
                    let w = aij * a[l];
                    let row = ((i * m + j) * m + l) * m;
                    for k in 0..m {
                        kv[k] += self.k[row + k] * w;
                    }
                }
            }
        }
    }
}

/// Oracle output at the requested times.
#[derive(Clone, Debug, Serialize)]
pub struct OracleTrajectory {
    pub times: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
    /// `∫_{t0}^{t}` of the energy right-hand side.
    pub energy_integral: Vec<f64>,
    /// `max_t |‖c(t)‖² − ‖c(t0)‖² − ∫rhs|`.
    pub energy_residual: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    #[serde(skip)]
    pub basis: Option<Arc<StokesEigenbasis>>,
}

impl OracleTrajectory {
    pub fn fields(&self) -> Result<Vec<VelocityField>> {
        let b = self
            .basis
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("oracle trajectory has no basis attached".into()))?;
        Ok(self.coeffs.iter().map(|c| b.reconstruct(c)).collect())
    }
}

/// Integrates the Galerkin system on `basis` from `t0` to `t1`, reporting
/// at every multiple of `out_dt`. The noise is taken piecewise linear between
/// its samples and projected onto the span; components outside it are
/// dropped.
#[allow(clippy::too_many_arguments)]
pub fn galerkin_oracle(
    y0: &VelocityField,
    path: Option<&OUPath>,
    t0: f64,
    t1: f64,
    params: &PhysParams,
    basis: &Arc<StokesEigenbasis>,
    out_dt: f64,
    opts: OdeOptions,
) -> Result<OracleTrajectory> {
    params.validate()?;
    if *basis.grid != **params.grid() || !y0.same_grid(&params.f) {
        return Err(Error::GridMismatch("oracle basis, state and forcing grids differ".into()));
    }
    let n_out = ((t1 - t0) / out_dt).round();
    if !(n_out >= 0.0) || ((t1 - t0) / out_dt - n_out).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!("[{t0}, {t1}] is not a multiple of {out_dt}")));
    }
    let n_out = n_out as usize;
    let m = basis.m;
    let tens = GalerkinTensors::assemble(basis);
    let fk = galerkin_project(&params.f, basis)?;

    // Maps noise coefficients onto this basis.
    let zmap: Option<(Vec<Vec<f64>>, &OUPath)> = match path {
        Some(p) => {
            let pb = p.spec.require_basis()?;
            if *pb.grid != *basis.grid {
                return Err(Error::GridMismatch("noise basis and oracle grids differ".into()));
            }
            let rows = (0..p.n_modes())
                .map(|j| galerkin_project(&pb.eigenfields[j], basis))
                .collect::<Result<Vec<_>>>()?;
            Some((rows, p))
        }
        None => None,
    };
    let zc = |t: f64| -> Result<Vec<f64>> {
        let mut out = vec![0.0; m];
        if let Some((rows, p)) = &zmap {
            let c = p.coeffs_at(t)?;
            for (cj, row) in c.iter().zip(rows) {
                for k in 0..m {
                    out[k] += cj * row[k];
                }
            }
        }
        Ok(out)
    };

    // Segment breakpoints: output times, refined by the noise lattice.
    let mut breaks: Vec<f64> = (0..=n_out).map(|n| t0 + n as f64 * out_dt).collect();
    if let Some(p) = path {
        let k0 = (t0 / p.dt).ceil() as i64;
        let k1 = (t1 / p.dt).floor() as i64;
        breaks.extend((k0..=k1).map(|k| k as f64 * p.dt).filter(|&t| t > t0 && t < t1));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    let (nu, alpha, beta, chi) = (params.nu, params.alpha, params.beta, params.chi);
    let mut state = galerkin_project(y0, basis)?;
    state.push(0.0);
    let e0: f64 = state[..m].iter().map(|c| c * c).sum();
    let mut out = OracleTrajectory {
        times: vec![t0],
        coeffs: vec![state[..m].to_vec()],
        energy_integral: vec![0.0],
        energy_residual: 0.0,
        accepted_steps: 0,
        rejected_steps: 0,
        basis: Some(Arc::clone(basis)),
    };
    let mut next_out = 1usize;
    let (mut bv, mut jv, mut kv, mut a) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for w in breaks.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let (za, zb) = (zc(ta)?, zc(tb)?);
        let rhs = |t: f64, s: &[f64], d: &mut [f64]| {
            let th = (t - ta) / (tb - ta);
            let z: Vec<f64> = za.iter().zip(&zb).map(|(p, q)| (1.0 - th) * p + th * q).collect();
            for k in 0..m {
                a[k] = s[k] + z[k];
            }
            tens.contract(&a, &mut bv, &mut jv, &mut kv);
            let mut e = 0.0;
            for k in 0..m {
                d[k] = -nu * tens.mu[k] * s[k] - bv[k] - alpha * jv[k] - beta * kv[k] + chi * z[k] + fk[k];
                e += -2.0 * nu * tens.mu[k] * s[k] * s[k] - 2.0 * beta * kv[k] * a[k] - 2.0 * alpha * jv[k] * a[k]
                    + 2.0 * (bv[k] * z[k] + alpha * jv[k] * z[k] + beta * kv[k] * z[k] + chi * z[k] * s[k] + fk[k] * s[k]);
            }
            d[m] = e;
        };
        let st: OdeStats = dopri5(rhs, ta, tb, &mut state, opts)?;
        out.accepted_steps += st.accepted;
        out.rejected_steps += st.rejected;
        if next_out <= n_out && (tb - (t0 + next_out as f64 * out_dt)).abs() <= 1e-9 * out_dt {
            out.times.push(t0 + next_out as f64 * out_dt);
            out.coeffs.push(state[..m].to_vec());
            out.energy_integral.push(state[m]);
            let en: f64 = state[..m].iter().map(|c| c * c).sum();
            out.energy_residual = out.energy_residual.max((en - e0 - state[m]).abs());
            next_out += 1;
        }
    }
    Ok(out)
}
