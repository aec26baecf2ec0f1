//! Discrete Helmholtz–Leray projection, the Stokes operator and its
//! eigenbasis.
//!
//! The projection solves the cell-centered Neumann problem `D G φ = D w`
//! directly in the separable cosine basis of the grid, so it is exact up to
//! roundoff. Divergence-free fields are parametrized by a discrete stream
//! function on interior nodes (`v = C ψ`), which turns Stokes problems into
//! banded symmetric positive-definite systems.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{self, BandCholesky, SymBand};
use crate::mesh::{build_grid, Grid, VelocityField};

/// Discrete divergence at cell centers.
pub fn divergence(w: &VelocityField) -> Vec<f64> {
    let g = &w.grid;
    let mut d = vec![0.0; g.n_cells()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            d[g.icell(i, j)] = (w.u[g.iu(i + 1, j)] - w.u[g.iu(i, j)]) / g.hx
                + (w.v[g.iv(i, j + 1)] - w.v[g.iv(i, j)]) / g.hy;
        }
    }
    d
}

/// Discrete gradient of a cell scalar, zero on boundary faces. It is the
/// negative adjoint of [`divergence`].
pub fn gradient(grid: &Arc<Grid>, phi: &[f64]) -> VelocityField {
    let g = grid;
    let mut out = VelocityField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.u[g.iu(i, j)] = (phi[g.icell(i, j)] - phi[g.icell(i - 1, j)]) / g.hx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.v[g.iv(i, j)] = (phi[g.icell(i, j)] - phi[g.icell(i, j - 1)]) / g.hy;
        }
    }
    out
}

/// Five-point vector Laplacian with reflected (odd) ghost values for the
/// tangential component at walls.
pub fn laplacian(w: &VelocityField) -> VelocityField {
    let g = &w.grid;
    let (nx, ny) = (g.nx, g.ny);
    let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let mut out = VelocityField::zeros(g);
    for j in 0..ny {
        for i in 1..nx {
            let c = w.u[g.iu(i, j)];
            let dn = if j == 0 { -c } else { w.u[g.iu(i, j - 1)] };
            let up = if j + 1 == ny { -c } else { w.u[g.iu(i, j + 1)] };
            out.u[g.iu(i, j)] = (w.u[g.iu(i + 1, j)] - 2.0 * c + w.u[g.iu(i - 1, j)]) * ihx2
                + (up - 2.0 * c + dn) * ihy2;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let c = w.v[g.iv(i, j)];
            let lf = if i == 0 { -c } else { w.v[g.iv(i - 1, j)] };
            let rt = if i + 1 == nx { -c } else { w.v[g.iv(i + 1, j)] };
            out.v[g.iv(i, j)] = (rt - 2.0 * c + lf) * ihx2
                + (w.v[g.iv(i, j + 1)] - 2.0 * c + w.v[g.iv(i, j - 1)]) * ihy2;
        }
    }
    out
}

/// Vorticity `∂v/∂x − ∂u/∂y` at interior nodes (zero on boundary nodes).
pub fn curl(w: &VelocityField) -> Vec<f64> {
    let g = &w.grid;
    let mut out = vec![0.0; g.n_nodes()];
    for j in 1..g.ny {
        for i in 1..g.nx {
            out[g.inode(i, j)] = (w.v[g.iv(i, j)] - w.v[g.iv(i - 1, j)]) / g.hx
                - (w.u[g.iu(i, j)] - w.u[g.iu(i, j - 1)]) / g.hy;
        }
    }
    out
}

/// Orthonormal DCT-II tables diagonalizing the Neumann cell Laplacian.
pub(crate) struct Projector {
    qx: DMatrix<f64>,
    qy: DMatrix<f64>,
    inv_eig: DMatrix<f64>,
}

fn dct_table(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, k| {
        let c = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        c * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos()
    })
}

fn neumann_eig(n: usize, h: f64, k: usize) -> f64 {
    -(2.0 - 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos()) / (h * h)
}

impl Projector {
    pub(crate) fn new(g: &Grid) -> Self {
        let inv_eig = DMatrix::from_fn(g.ny, g.nx, |l, k| {
            if k == 0 && l == 0 {
                0.0
            } else {
                1.0 / (neumann_eig(g.nx, g.hx, k) + neumann_eig(g.ny, g.hy, l))
            }
        });
        Projector {
            qx: dct_table(g.nx),
            qy: dct_table(g.ny),
            inv_eig,
        }
    }

    /// Solves `D G φ = b` with the compatible mean-zero solution.
    pub(crate) fn solve_neumann(&self, g: &Grid, b: &[f64]) -> Vec<f64> {
        let bm = DMatrix::from_row_slice(g.ny, g.nx, b);
        let bhat = self.qy.transpose() * bm * &self.qx;
        let phat = bhat.component_mul(&self.inv_eig);
        let phi = &self.qy * phat * self.qx.transpose();
        let mut out = vec![0.0; g.n_cells()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                out[g.icell(i, j)] = phi[(j, i)];
            }
        }
        out
    }
}

/// Helmholtz potential `φ` with `w = P w + G φ`.
pub fn helmholtz_potential(w: &VelocityField) -> Vec<f64> {
    let g = &w.grid;
    g.projector().solve_neumann(g, &divergence(w))
}

/// Leray projection `w − G φ` onto discretely divergence-free fields.
pub fn project(w: &VelocityField) -> VelocityField {
    let phi = helmholtz_potential(w);
    let mut out = w.clone();
    out.axpy(-1.0, &gradient(&w.grid, &phi));
    out
}

/// Stokes operator `𝒜 v = −P Δ v`.
pub fn stokes_apply(v: &VelocityField) -> VelocityField {
    let mut lap = laplacian(v);
    lap.scale(-1.0);
    project(&lap)
}

/// Discrete stream-function parametrization of the divergence-free subspace.
///
/// Interior nodes are numbered with the shorter grid direction running
/// fastest, which keeps the Stokes matrices narrowly banded.
pub(crate) struct StreamSpace {
    n1: usize,
    n2: usize,
    j_fast: bool,
    /// Plain (unweighted) `C^T C`.
    pub(crate) mass: SymBand,
    /// Plain `C^T (−Δ) C`.
    pub(crate) stiff: SymBand,
}

impl StreamSpace {
    pub(crate) fn new(g: &Grid) -> Self {
        let (n1, n2) = (g.nx - 1, g.ny - 1);
        let j_fast = g.ny <= g.nx;
        let fast = if j_fast { n2 } else { n1 };
        let bw = 2 * fast + 2;
        let n = n1 * n2;
        let mut s = StreamSpace {
            n1,
            n2,
            j_fast,
            mass: SymBand::zeros(n, bw),
            stiff: SymBand::zeros(n, bw),
        };
        s.assemble(g);
        s
    }

    pub(crate) fn dim(&self) -> usize {
        self.n1 * self.n2
    }

    #[inline]
    pub(crate) fn index(&self, i: usize, j: usize) -> usize {
        if self.j_fast {
            (i - 1) * self.n2 + (j - 1)
        } else {
            (j - 1) * self.n1 + (i - 1)
        }
    }

    #[inline]
    pub(crate) fn node(&self, p: usize) -> (usize, usize) {
        if self.j_fast {
            (p / self.n2 + 1, p % self.n2 + 1)
        } else {
            (p % self.n1 + 1, p / self.n1 + 1)
        }
    }

    /// `v = C ψ`: `u = ∂ψ/∂y`, `v = −∂ψ/∂x` with `ψ = 0` on the boundary.
    pub(crate) fn to_velocity(&self, grid: &Arc<Grid>, psi: &[f64]) -> VelocityField {
        let g = grid;
        let at = |i: usize, j: usize| -> f64 {
            if g.is_wall_node(i, j) {
                0.0
            } else {
                psi[self.index(i, j)]
            }
        };
        let mut out = VelocityField::zeros(g);
        for j in 0..g.ny {
            for i in 1..g.nx {
                out.u[g.iu(i, j)] = (at(i, j + 1) - at(i, j)) / g.hy;
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                out.v[g.iv(i, j)] = -(at(i + 1, j) - at(i, j)) / g.hx;
            }
        }
        out
    }

    /// Plain adjoint `C^T w` (sums without the cell-area weight).
    pub(crate) fn adjoint(&self, w: &VelocityField) -> Vec<f64> {
        let g = &w.grid;
        let mut out = vec![0.0; self.dim()];
        for p in 0..self.dim() {
            let (i, j) = self.node(p);
            out[p] = (w.u[g.iu(i, j - 1)] - w.u[g.iu(i, j)]) / g.hy
                + (w.v[g.iv(i, j)] - w.v[g.iv(i - 1, j)]) / g.hx;
        }
        out
    }

    fn assemble(&mut self, g: &Grid) {
        // Probe with 5x5 colorings: both operators reach at most two nodes in
        // each direction, so every colored column is recovered exactly.
        let grid = Arc::new(build_grid(g.lx, g.ly, g.nx, g.ny).expect("valid grid"));
        let n = self.dim();
        for a in 0..5 {
            for b in 0..5 {
                let mut psi = vec![0.0; n];
                let mut any = false;
                for p in 0..n {
                    let (i, j) = self.node(p);
                    if i % 5 == a && j % 5 == b {
                        psi[p] = 1.0;
                        any = true;
                    }
                }
                if !any {
                    continue;
                }
                let vel = self.to_velocity(&grid, &psi);
                let m_col = self.adjoint(&vel);
                let mut lap = laplacian(&vel);
                lap.scale(-1.0);
                let k_col = self.adjoint(&lap);
                for p in 0..n {
                    let (i, j) = self.node(p);
                    // The unique colored node within reach of p.
                    let ci = nearest_with_residue(i, a);
                    let cj = nearest_with_residue(j, b);
                    if ci == 0 || cj == 0 || ci >= g.nx || cj >= g.ny {
                        continue;
                    }
                    let q = self.index(ci, cj);
                    if q <= p && p - q <= self.mass.bw {
                        self.mass.set(p, q, m_col[p]);
                        self.stiff.set(p, q, k_col[p]);
                    }
                }
            }
        }
    }
}

fn nearest_with_residue(i: usize, r: usize) -> usize {
    // Candidate in [i-2, i+2] with the requested residue mod 5.
    let base = i as isize - 2;
    for d in 0..5isize {
        let c = base + d;
        if c.rem_euclid(5) as usize == r {
            return c.max(0) as usize;
        }
    }
    unreachable!()
}

/// Orthonormal Stokes eigenpairs `𝒜 e_i = μ_i e_i`, ascending.
#[derive(Clone, Debug)]
pub struct StokesEigenbasis {
    pub grid: Arc<Grid>,
    pub m: usize,
    pub eigenvalues: Vec<f64>,
    pub eigenfields: Vec<VelocityField>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BasisHeader {
    kind: String,
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    m: usize,
    eigenvalues: Vec<f64>,
}

/// Eigen-solver controls.
#[derive(Clone, Copy, Debug)]
pub struct EigOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            tol: 1e-12,
            max_iter: 2000,
            seed: 0x5eed_0f57,
        }
    }
}

const STALL_TOL: f64 = 1e-9;
const STALL_ITERS: usize = 20;

/// The `m` smallest Stokes eigenpairs, by shift-invert subspace iteration on
/// the stream-function pencil `(C^T(−Δ)C, C^T C)`.
pub fn stokes_eigs(grid: &Arc<Grid>, m: usize) -> Result<StokesEigenbasis> {
    stokes_eigs_with(grid, m, EigOptions::default())
}

pub fn stokes_eigs_with(grid: &Arc<Grid>, m: usize, opts: EigOptions) -> Result<StokesEigenbasis> {
    let dim = grid.div_free_dim();
    if m == 0 || 5 * m > dim {
        return Err(Error::InvalidArgument(format!(
            "mode count m = {m} must be in 1..=0.2*{dim} (divergence-free dimension)"
        )));
    }
    let space = grid.stream_space();
    let n = space.dim();
    let chol = space.stiff.cholesky()?;
    let p = (2 * m).max(m + 8).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    m_orthonormalize(&space.mass, &mut q);

    let mut last_res = f64::INFINITY;
    let (mut best, mut best_it) = (f64::INFINITY, 0usize);
    for it in 0..opts.max_iter {
        let mut x: Vec<Vec<f64>> = q.iter().map(|c| chol.solve(&space.mass.matvec(c))).collect();
        m_orthonormalize(&space.mass, &mut x);
        let kx: Vec<Vec<f64>> = x.iter().map(|c| space.stiff.matvec(c)).collect();
        let kr = DMatrix::from_fn(p, p, |a, b| 0.5 * (linalg::dot(&x[a], &kx[b]) + linalg::dot(&x[b], &kx[a])));
        let eig = SymmetricEigen::new(kr);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let mut theta = Vec::with_capacity(p);
        let mut q_new = Vec::with_capacity(p);
        let mut kq_new = Vec::with_capacity(p);
        for &c in &order {
            theta.push(eig.eigenvalues[c]);
            let mut v = vec![0.0; n];
            let mut kv = vec![0.0; n];
            for b in 0..p {
                let s = eig.eigenvectors[(b, c)];
                linalg::axpy(&mut v, s, &x[b]);
                linalg::axpy(&mut kv, s, &kx[b]);
            }
            q_new.push(v);
            kq_new.push(kv);
        }
        q = q_new;

        let mut worst: f64 = 0.0;
        for i in 0..m {
            let mq = space.mass.matvec(&q[i]);
            let r: f64 = kq_new[i]
                .iter()
                .zip(&mq)
                .map(|(a, b)| (a - theta[i] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = theta[i].abs() * linalg::dot(&mq, &mq).sqrt();
            worst = worst.max(r / scale);
        }
        last_res = worst;
        if worst < 0.5 * best {
            (best, best_it) = (worst, it);
        }
        // The residual bottoms out at a roundoff floor that grows with the
        // grid; a stalled residual below `STALL_TOL` counts as converged.
        let stalled = worst <= STALL_TOL && it - best_it >= STALL_ITERS;
        if worst <= opts.tol || stalled {
            return finish_basis(grid, space, &chol, m, &theta, &q);
        }
        if it + 1 == opts.max_iter {
            break;
        }
    }
    Err(Error::NonConvergence {
        what: "Stokes eigen-solver",
        iterations: opts.max_iter,
        residual: last_res,
    })
}

fn finish_basis(
    grid: &Arc<Grid>,
    space: &StreamSpace,
    _chol: &BandCholesky,
    m: usize,
    theta: &[f64],
    q: &[Vec<f64>],
) -> Result<StokesEigenbasis> {
    let w = 1.0 / grid.cell_area().sqrt();
    let mut eigenfields = Vec::with_capacity(m);
    for psi in q.iter().take(m) {
        let imax = psi
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
            .0;
        let sign = if psi[imax] < 0.0 { -w } else { w };
        let mut e = space.to_velocity(grid, psi);
        e.scale(sign);
        eigenfields.push(e);
    }
    let basis = StokesEigenbasis {
        grid: Arc::clone(grid),
        m,
        eigenvalues: theta[..m].to_vec(),
        eigenfields,
    };
    let res = basis.max_residual();
    if res > 1e-8 {
        return Err(Error::NonConvergence {
            what: "Stokes eigen residual check",
            iterations: 0,
            residual: res,
        });
    }
    Ok(basis)
}

/// Modified Gram–Schmidt (two passes) in the inner product of `mass`.
fn m_orthonormalize(mass: &SymBand, cols: &mut [Vec<f64>]) {
    for _pass in 0..2 {
        let mut mcols: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
        for a in 0..cols.len() {
            let (lo, hi) = cols.split_at_mut(a);
            for (b, mb) in mcols.iter().enumerate() {
                let c = linalg::dot(&hi[0], mb);
                linalg::axpy(&mut hi[0], -c, &lo[b]);
            }
            let mut ma = mass.matvec(&hi[0]);
            let inv = 1.0 / linalg::dot(&hi[0], &ma).sqrt();
            hi[0].iter_mut().for_each(|x| *x *= inv);
            ma.iter_mut().for_each(|x| *x *= inv);
            mcols.push(ma);
        }
    }
}

impl StokesEigenbasis {
    /// Largest relative residual `‖𝒜e_i − μ_i e_i‖ / μ_i`.
    pub fn max_residual(&self) -> f64 {
        self.eigenfields
            .iter()
            .zip(&self.eigenvalues)
            .map(|(e, &mu)| {
                let mut r = stokes_apply(e);
                r.axpy(-mu, e);
                r.norm_l2() / mu
            })
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue, the discrete Poincaré constant.
    pub fn lambda_hat(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `Σ c_i e_i`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> VelocityField {
        let mut out = VelocityField::zeros(&self.grid);
        for (c, e) in coeffs.iter().zip(&self.eigenfields) {
            if *c != 0.0 {
                out.axpy(*c, e);
            }
        }
        out
    }

    /// The first `k` modes as a new basis.
    pub fn truncated(&self, k: usize) -> StokesEigenbasis {
        let k = k.min(self.m);
        StokesEigenbasis {
            grid: Arc::clone(&self.grid),
            m: k,
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenfields: self.eigenfields[..k].to_vec(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = BasisHeader {
            kind: "stokes_eigenbasis".into(),
            lx: self.grid.lx,
            ly: self.grid.ly,
            nx: self.grid.nx,
            ny: self.grid.ny,
            m: self.m,
            eigenvalues: self.eigenvalues.clone(),
        };
        let mut data = Vec::new();
        for e in &self.eigenfields {
            data.extend_from_slice(&e.u);
            data.extend_from_slice(&e.v);
        }
        io::write_block_file(path, &header, &data)
    }

    /// Loads a cached basis and binds it to `grid`, which must match.
    pub fn load(path: &Path, grid: &Arc<Grid>) -> Result<Self> {
        let (h, data): (BasisHeader, Vec<f64>) = io::read_block_file(path)?;
        if h.nx != grid.nx || h.ny != grid.ny || h.lx != grid.lx || h.ly != grid.ly {
            return Err(Error::GridMismatch(format!(
                "cache is for {}x{} on {}x{}",
                h.nx, h.ny, h.lx, h.ly
            )));
        }
        let (nu, nv) = (grid.n_u(), grid.n_v());
        if data.len() != h.m * (nu + nv) || h.eigenvalues.len() != h.m {
            return Err(Error::Format("eigenbasis payload size mismatch".into()));
        }
        let eigenfields = data
            .chunks_exact(nu + nv)
            .map(|c| VelocityField {
                grid: Arc::clone(grid),
                u: c[..nu].to_vec(),
                v: c[nu..].to_vec(),
            })
            .collect();
        Ok(StokesEigenbasis {
            grid: Arc::clone(grid),
            m: h.m,
            eigenvalues: h.eigenvalues,
            eigenfields,
        })
    }

    /// Cache location keyed by grid hash and mode count.
    pub fn cache_path(dir: &Path, grid: &Grid, m: usize) -> PathBuf {
        dir.join(format!("stokes_{}_m{m}.bin", grid.hash_key()))
    }

    /// Loads the cached basis for `(grid, m)` or computes and stores it.
    pub fn load_or_compute(dir: &Path, grid: &Arc<Grid>, m: usize) -> Result<Self> {
        let path = Self::cache_path(dir, grid, m);
        if path.exists() {
            if let Ok(b) = Self::load(&path, grid) {
                return Ok(b);
            }
        }
        let b = stokes_eigs(grid, m)?;
        std::fs::create_dir_all(dir)?;
        b.save(&path)?;
        Ok(b)
    }
}

/// Galerkin coefficients `c_i = (v, e_i)`.
pub fn galerkin_project(v: &VelocityField, basis: &StokesEigenbasis) -> Result<Vec<f64>> {
    if !v.same_grid(&basis.eigenfields[0]) {
        return Err(Error::GridMismatch("field and basis live on different grids".into()));
    }
    Ok(basis.eigenfields.iter().map(|e| v.dot(e)).collect())
}

/// Solves `(M + c K) ψ = C^T r` and returns `C ψ`, i.e. the divergence-free
/// `y` with `y + c 𝒜 y = P r`.
pub(crate) struct ShiftedStokesSolver {
    chol: BandCholesky,
}

impl ShiftedStokesSolver {
    pub(crate) fn new(grid: &Grid, c: f64) -> Result<Self> {
        let s = grid.stream_space();
        let a = s.mass.plus_scaled(c, &s.stiff);
        Ok(ShiftedStokesSolver { chol: a.cholesky()? })
    }

    pub(crate) fn solve(&self, r: &VelocityField) -> VelocityField {
        let s = r.grid.stream_space();
        let mut b = s.adjoint(r);
        self.chol.solve_in_place(&mut b);
        s.to_velocity(&r.grid, &b)
    }
}

/// Conjugate gradients for the same shifted system, matrix-free in the
/// stream-function space. Kept as a cross-check of the direct solve.
pub fn shifted_stokes_cg(
    r: &VelocityField,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<VelocityField> {
    let s = r.grid.stream_space();
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = s.mass.matvec(x);
        linalg::axpy(&mut y, c, &s.stiff.matvec(x));
        y
    };
    let b = s.adjoint(r);
    let bnorm = linalg::dot(&b, &b).sqrt();
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok(s.to_velocity(&r.grid, &x));
    }
    let mut res = b.clone();
    let mut p = res.clone();
    let mut rr = linalg::dot(&res, &res);
    for it in 0..max_iter {
        let ap = apply(&p);
        let alpha = rr / linalg::dot(&p, &ap);
        linalg::axpy(&mut x, alpha, &p);
        linalg::axpy(&mut res, -alpha, &ap);
        let rr_new = linalg::dot(&res, &res);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok(s.to_velocity(&r.grid, &x));
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&res) {
            *pi = ri + beta * *pi;
        }
        if it + 1 == max_iter {
            break;
        }
    }
    Err(Error::NonConvergence {
        what: "conjugate gradients (Crank-Nicolson)",
        iterations: max_iter,
        residual: rr.sqrt() / bnorm,
    })
}

/// Velocity field of a stream function given on all nodes (boundary values
/// ignored).
pub fn stream_to_velocity(grid: &Arc<Grid>, psi_nodes: &[f64]) -> VelocityField {
    let s = grid.stream_space();
    let mut psi = vec![0.0; s.dim()];
    for (p, slot) in psi.iter_mut().enumerate() {
        let (i, j) = s.node(p);
        *slot = psi_nodes[grid.inode(i, j)];
    }
    s.to_velocity(grid, &psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;
    use crate::sampling::white_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn direct_shifted_solve_matches_conjugate_gradients() {
        let g = Arc::new(build_grid(2.0, 1.0, 16, 8).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = white_field(&g, &mut rng);
        let c = 0.01;
        let direct = ShiftedStokesSolver::new(&g, c).unwrap().solve(&r);
        let cg = shifted_stokes_cg(&r, c, 1e-13, 5000).unwrap();
        assert!((&direct - &cg).norm_l2() <= 1e-10 * direct.norm_l2());
        // y + c𝒜y = P r
        let mut lhs = stokes_apply(&direct);
        lhs.scale(c);
        lhs.axpy(1.0, &direct);
        assert!((&lhs - &project(&r)).norm_l2() <= 1e-9 * r.norm_l2());
    }

    #[test]
    fn projection_is_idempotent_and_divergence_free() {
        let g = Arc::new(build_grid(1.0, 1.0, 12, 12).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = white_field(&g, &mut rng);
        let p = project(&w);
        let pp = project(&p);
        assert!((&p - &pp).norm_l2() <= 1e-12 * p.norm_l2());
        let d = divergence(&p).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(d <= 1e-10 * w.max_abs() / g.h_min());
    }
}
