//! Random test fields. Smooth fields come from a stream function built on
//! `sin(πs)·sin(kπs)` profiles, which vanish with their derivative at the
//! walls, so the same draw is resolution independent.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::leray::stream_to_velocity;
use crate::mesh::{Grid, VelocityField};

/// Shape controls for [`smooth_field`].
#[derive(Clone, Copy, Debug)]
pub struct SmoothFieldOpts {
    /// Highest profile index in each direction.
    pub max_mode: usize,
    /// Coefficients decay like `(k² + l²)^(-decay)`.
    pub decay: f64,
    /// Target `L2` norm; `None` keeps the raw draw.
    pub l2: Option<f64>,
}

impl Default for SmoothFieldOpts {
    fn default() -> Self {
        SmoothFieldOpts {
            max_mode: 6,
            decay: 1.0,
            l2: Some(1.0),
        }
    }
}

fn profile(s: f64, k: usize) -> f64 {
    let pi = std::f64::consts::PI;
    (pi * s).sin() * (k as f64 * pi * s).sin()
}

/// Random smooth stream function sampled at every node.
pub fn smooth_stream<R: Rng + ?Sized>(grid: &Grid, rng: &mut R, opts: SmoothFieldOpts) -> Vec<f64> {
    let km = opts.max_mode.max(1);
    let px: Vec<Vec<f64>> = (1..=km)
        .map(|k| grid.x_nodes.iter().map(|&x| profile(x / grid.lx, k)).collect())
        .collect();
    let py: Vec<Vec<f64>> = (1..=km)
        .map(|l| grid.y_nodes.iter().map(|&y| profile(y / grid.ly, l)).collect())
        .collect();
    let mut psi = vec![0.0; grid.n_nodes()];
    for k in 0..km {
        for l in 0..km {
            let amp: f64 = StandardNormal.sample(rng);
            let a = amp / (((k + 1) * (k + 1) + (l + 1) * (l + 1)) as f64).powf(opts.decay);
            for j in 0..=grid.ny {
                let yl = a * py[l][j];
                for i in 0..=grid.nx {
                    psi[grid.inode(i, j)] += yl * px[k][i];
                }
            }
        }
    }
    psi
}

/// Random smooth divergence-free field with zero boundary samples.
pub fn smooth_field<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R, opts: SmoothFieldOpts) -> VelocityField {
    let psi = smooth_stream(grid, rng, opts);
    let mut v = stream_to_velocity(grid, &psi);
    if let Some(target) = opts.l2 {
        let n = v.norm_l2();
        if n > 0.0 {
            v.scale(target / n);
        }
    }
    v
}

/// Smooth field with a random shape, random profile count and a log-uniform
/// amplitude in `[lo, hi]`.
pub fn varied_smooth_field<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R, lo: f64, hi: f64) -> VelocityField {
    let max_mode = rng.random_range(1..=6usize);
    let decay = rng.random_range(0.5..2.0);
    let amp = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
    smooth_field(
        grid,
        rng,
        SmoothFieldOpts {
            max_mode,
            decay,
            l2: Some(amp),
        },
    )
}

/// White-noise raw vector field (not divergence-free), zero on the boundary.
pub fn white_field<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R) -> VelocityField {
    let mut w = VelocityField::zeros(grid);
    for j in 0..grid.ny {
        for i in 1..grid.nx {
            w.u[grid.iu(i, j)] = StandardNormal.sample(rng);
        }
    }
    for j in 1..grid.ny {
        for i in 0..grid.nx {
            w.v[grid.iv(i, j)] = StandardNormal.sample(rng);
        }
    }
    w
}

/// White-noise cell scalar.
pub fn white_cells<R: Rng + ?Sized>(grid: &Grid, rng: &mut R) -> Vec<f64> {
    (0..grid.n_cells()).map(|_| StandardNormal.sample(rng)).collect()
}

/// Smooth field supported in the disc of radius `r` around the domain
/// center (stream function `(1 − ρ²/r²)^4` inside the disc).
pub fn centered_bump(grid: &Arc<Grid>, r: f64, l2: f64) -> VelocityField {
    let (cx, cy) = (0.5 * grid.lx, 0.5 * grid.ly);
    let mut psi = vec![0.0; grid.n_nodes()];
    for j in 0..=grid.ny {
        for i in 0..=grid.nx {
            let dx = grid.x_nodes[i] - cx;
            let dy = grid.y_nodes[j] - cy;
            let q = 1.0 - (dx * dx + dy * dy) / (r * r);
            if q > 0.0 {
                // Odd in dx so the bump carries a rotating pair of vortices.
                psi[grid.inode(i, j)] = q.powi(4) * (1.0 + dx / r);
            }
        }
    }
    let mut v = stream_to_velocity(grid, &psi);
    let n = v.norm_l2();
    if n > 0.0 {
        v.scale(l2 / n);
    }
    v
}
