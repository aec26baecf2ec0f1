//! Grids and generators shared by the integration tests.

#![allow(dead_code)]

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tgfluid::mesh::{build_grid, Grid, VelocityField};
use tgfluid::sampling::{smooth_field, varied_smooth_field, SmoothFieldOpts};

pub fn grid(lx: f64, ly: f64, nx: usize, ny: usize) -> Arc<Grid> {
    Arc::new(build_grid(lx, ly, nx, ny).expect("valid grid"))
}

pub fn square(n: usize) -> Arc<Grid> {
    grid(1.0, 1.0, n, n)
}

/// The 4×1 channel at `4n × n`.
pub fn channel(n: usize) -> Arc<Grid> {
    grid(4.0, 1.0, 4 * n, n)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Divergence-free field of random shape and amplitude.
pub fn field(g: &Arc<Grid>, seed: u64) -> VelocityField {
    varied_smooth_field(g, &mut rng(seed), 0.1, 10.0)
}

/// Smooth divergence-free field of exact norm `l2` built from low profiles.
pub fn smooth(g: &Arc<Grid>, seed: u64, l2: f64, max_mode: usize) -> VelocityField {
    smooth_field(
        g,
        &mut rng(seed),
        SmoothFieldOpts {
            max_mode,
            l2: Some(l2),
            ..SmoothFieldOpts::default()
        },
    )
}

pub fn rel_diff(a: &VelocityField, b: &VelocityField) -> f64 {
    (a - b).norm_l2() / a.norm_l2().max(b.norm_l2()).max(f64::MIN_POSITIVE)
}
