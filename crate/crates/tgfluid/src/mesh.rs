//! Staggered (MAC) grid geometry, velocity and tensor fields, discrete norms
//! and the smooth cutoff weight used by the tail diagnostics.
//!
//! Layout: `u` lives on x-faces, `(nx+1) x ny` samples indexed `j*(nx+1)+i`;
//! `v` lives on y-faces, `nx x (ny+1)` samples indexed `j*nx+i`. Samples on
//! the physical boundary are stored and kept at zero.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::leray::{Projector, StreamSpace};

/// Boundary-condition tag. Only no-slip walls are implemented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BoundaryCondition {
    #[default]
    NoSlip,
}

#[derive(Default)]
pub(crate) struct GridCache {
    pub(crate) projector: OnceLock<Projector>,
    pub(crate) stream: OnceLock<StreamSpace>,
}

/// A rectangle `[0, lx] x [0, ly]` split into `nx x ny` cells.
#[derive(Clone, Serialize, Deserialize)]
pub struct Grid {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub bc: BoundaryCondition,
    /// Node (and u-face) x coordinates, `nx+1` entries.
    pub x_nodes: Vec<f64>,
    /// Node (and v-face) y coordinates, `ny+1` entries.
    pub y_nodes: Vec<f64>,
    /// Cell-center x coordinates, `nx` entries.
    pub x_centers: Vec<f64>,
    /// Cell-center y coordinates, `ny` entries.
    pub y_centers: Vec<f64>,
    #[serde(skip)]
    pub(crate) cache: Arc<GridCache>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.lx == other.lx
            && self.ly == other.ly
            && self.bc == other.bc
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .finish()
    }
}

/// Builds a grid, rejecting non-positive sizes and fewer than four cells per
/// direction.
pub fn build_grid(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Grid> {
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "domain sides must be positive, got Lx = {lx}, Ly = {ly}"
        )));
    }
    if nx < 4 || ny < 4 {
        return Err(Error::GridTooCoarse(format!(
            "need nx, ny >= 4, got nx = {nx}, ny = {ny}"
        )));
    }
    let hx = lx / nx as f64;
    let hy = ly / ny as f64;
    Ok(Grid {
        lx,
        ly,
        nx,
        ny,
        hx,
        hy,
        bc: BoundaryCondition::NoSlip,
        x_nodes: (0..=nx).map(|i| i as f64 * hx).collect(),
        y_nodes: (0..=ny).map(|j| j as f64 * hy).collect(),
        x_centers: (0..nx).map(|i| (i as f64 + 0.5) * hx).collect(),
        y_centers: (0..ny).map(|j| (j as f64 + 0.5) * hy).collect(),
        cache: Arc::new(GridCache::default()),
    })
}

impl Grid {
    #[inline]
    pub fn iu(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn iv(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn icell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn inode(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_v(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Cell area, the weight of every discrete inner product.
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn h_min(&self) -> f64 {
        self.hx.min(self.hy)
    }

    pub fn diameter(&self) -> f64 {
        self.lx.hypot(self.ly)
    }

    /// Dimension of the discrete divergence-free subspace.
    pub fn div_free_dim(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    /// Short hex digest identifying the grid geometry, used as a cache key.
    pub fn hash_key(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.nx.to_le_bytes());
        h.update(self.ny.to_le_bytes());
        h.update(self.lx.to_bits().to_le_bytes());
        h.update(self.ly.to_bits().to_le_bytes());
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub(crate) fn projector(&self) -> &Projector {
        self.cache.projector.get_or_init(|| Projector::new(self))
    }

    pub(crate) fn stream_space(&self) -> &StreamSpace {
        self.cache.stream.get_or_init(|| StreamSpace::new(self))
    }

    /// True for nodes on the physical boundary.
    #[inline]
    pub fn is_wall_node(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }
}

/// A velocity sample set on the staggered grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub grid: Arc<Grid>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VelocityField {
            grid: Arc::clone(grid),
            u: vec![0.0; grid.n_u()],
            v: vec![0.0; grid.n_v()],
        }
    }

    /// Samples analytic component functions at the face locations; boundary
    /// samples are forced to zero.
    pub fn from_fn(
        grid: &Arc<Grid>,
        fu: impl Fn(f64, f64) -> f64,
        fv: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 1..grid.nx {
                out.u[grid.iu(i, j)] = fu(grid.x_nodes[i], grid.y_centers[j]);
            }
        }
        for j in 1..grid.ny {
            for i in 0..grid.nx {
                out.v[grid.iv(i, j)] = fv(grid.x_centers[i], grid.y_nodes[j]);
            }
        }
        out
    }

    pub fn same_grid(&self, other: &VelocityField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn dot(&self, other: &VelocityField) -> f64 {
        debug_assert!(self.same_grid(other));
        let su: f64 = self.u.iter().zip(&other.u).map(|(a, b)| a * b).sum();
        let sv: f64 = self.v.iter().zip(&other.v).map(|(a, b)| a * b).sum();
        (su + sv) * self.grid.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        self.u.iter_mut().for_each(|x| *x *= c);
        self.v.iter_mut().for_each(|x| *x *= c);
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &VelocityField) {
        debug_assert!(self.same_grid(other));
        self.u.iter_mut().zip(&other.u).for_each(|(a, b)| *a += c * b);
        self.v.iter_mut().zip(&other.v).for_each(|(a, b)| *a += c * b);
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest boundary sample magnitude; zero for a valid field.
    pub fn boundary_max(&self) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for j in 0..g.ny {
            m = m.max(self.u[g.iu(0, j)].abs()).max(self.u[g.iu(g.nx, j)].abs());
        }
        for i in 0..g.nx {
            m = m.max(self.v[g.iv(i, 0)].abs()).max(self.v[g.iv(i, g.ny)].abs());
        }
        m
    }

    /// Velocity interpolated to cell centers.
    pub fn cell_centered(&self) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let mut uc = vec![0.0; g.n_cells()];
        let mut vc = vec![0.0; g.n_cells()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.icell(i, j);
                uc[c] = 0.5 * (self.u[g.iu(i, j)] + self.u[g.iu(i + 1, j)]);
                vc[c] = 0.5 * (self.v[g.iv(i, j)] + self.v[g.iv(i, j + 1)]);
            }
        }
        (uc, vc)
    }

    /// Max of |v| over cell centers.
    pub fn sup_norm(&self) -> f64 {
        let (uc, vc) = self.cell_centered();
        uc.iter()
            .zip(&vc)
            .fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)))
    }

    /// Writes the field as a JSON header line followed by little-endian f64
    /// samples, u-block then v-block.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = FieldHeader::of(&self.grid);
        let data: Vec<f64> = self.u.iter().chain(&self.v).copied().collect();
        io::write_block_file(path, &header, &data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, data): (FieldHeader, Vec<f64>) = io::read_block_file(path)?;
        let grid = Arc::new(build_grid(header.lx, header.ly, header.nx, header.ny)?);
        if data.len() != grid.n_u() + grid.n_v() {
            return Err(Error::Format(format!(
                "expected {} samples, found {}",
                grid.n_u() + grid.n_v(),
                data.len()
            )));
        }
        let (u, v) = data.split_at(grid.n_u());
        Ok(VelocityField {
            u: u.to_vec(),
            v: v.to_vec(),
            grid,
        })
    }

    /// Rebinds the field to an equal grid so that `Arc::ptr_eq` fast paths apply.
    pub fn with_grid(mut self, grid: &Arc<Grid>) -> Result<Self> {
        if *self.grid != **grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, grid
            )));
        }
        self.grid = Arc::clone(grid);
        Ok(self)
    }

    /// CSV rows `component,i,j,x,y,value`, u-block then v-block.
    pub fn to_csv(&self) -> String {
        let g = &self.grid;
        let mut s = String::from("component,i,j,x,y,value\n");
        for j in 0..g.ny {
            for i in 0..=g.nx {
                s.push_str(&format!(
                    "u,{i},{j},{},{},{:e}\n",
                    g.x_nodes[i],
                    g.y_centers[j],
                    self.u[g.iu(i, j)]
                ));
            }
        }
        for j in 0..=g.ny {
            for i in 0..g.nx {
                s.push_str(&format!(
                    "v,{i},{j},{},{},{:e}\n",
                    g.x_centers[i],
                    g.y_nodes[j],
                    self.v[g.iv(i, j)]
                ));
            }
        }
        s
    }
}

/// Header stored ahead of field samples on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldHeader {
    pub kind: String,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub layout: String,
}

impl FieldHeader {
    pub fn of(grid: &Grid) -> Self {
        FieldHeader {
            kind: "velocity_field".into(),
            lx: grid.lx,
            ly: grid.ly,
            nx: grid.nx,
            ny: grid.ny,
            hx: grid.hx,
            hy: grid.hy,
            layout: "row-major; u[(nx+1)*ny] then v[nx*(ny+1)]; f64 LE".into(),
        }
    }
}

impl Add for &VelocityField {
    type Output = VelocityField;
    fn add(self, rhs: &VelocityField) -> VelocityField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &VelocityField {
    type Output = VelocityField;
    fn sub(self, rhs: &VelocityField) -> VelocityField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<&VelocityField> for f64 {
    type Output = VelocityField;
    fn mul(self, rhs: &VelocityField) -> VelocityField {
        rhs.scaled(self)
    }
}

impl Neg for &VelocityField {
    type Output = VelocityField;
    fn neg(self) -> VelocityField {
        self.scaled(-1.0)
    }
}

/// Cell-centered symmetric tensor; only the upper triangle is stored.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    pub grid: Arc<Grid>,
    pub a11: Vec<f64>,
    pub a12: Vec<f64>,
    pub a22: Vec<f64>,
}

impl TensorField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let n = grid.n_cells();
        TensorField {
            grid: Arc::clone(grid),
            a11: vec![0.0; n],
            a12: vec![0.0; n],
            a22: vec![0.0; n],
        }
    }

    /// Pointwise squared Frobenius norm `a11^2 + 2 a12^2 + a22^2`.
    #[inline]
    pub fn frob_sq_at(&self, c: usize) -> f64 {
        self.a11[c] * self.a11[c] + 2.0 * self.a12[c] * self.a12[c] + self.a22[c] * self.a22[c]
    }

    /// Frobenius pairing `∫ A : B`.
    pub fn inner(&self, other: &TensorField) -> f64 {
        let s: f64 = (0..self.a11.len())
            .map(|c| {
                self.a11[c] * other.a11[c]
                    + 2.0 * self.a12[c] * other.a12[c]
                    + self.a22[c] * other.a22[c]
            })
            .sum();
        s * self.grid.cell_area()
    }

    /// Cell-centered `‖A‖_2`.
    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `‖A‖_4 = (∫ |A|^4)^(1/4)`.
    pub fn norm_l4(&self) -> f64 {
        self.norm_l4_pow4().powf(0.25)
    }

    /// `∫ |A|^4`.
    pub fn norm_l4_pow4(&self) -> f64 {
        let s: f64 = (0..self.a11.len())
            .map(|c| {
                let f = self.frob_sq_at(c);
                f * f
            })
            .sum();
        s * self.grid.cell_area()
    }

    pub fn max_frob(&self) -> f64 {
        (0..self.a11.len())
            .map(|c| self.frob_sq_at(c))
            .fold(0.0f64, f64::max)
            .sqrt()
    }

    pub fn axpy(&mut self, c: f64, other: &TensorField) {
        for (a, b) in self.a11.iter_mut().zip(&other.a11) {
            *a += c * b;
        }
        for (a, b) in self.a12.iter_mut().zip(&other.a12) {
            *a += c * b;
        }
        for (a, b) in self.a22.iter_mut().zip(&other.a22) {
            *a += c * b;
        }
    }

    /// Pointwise matrix square `A^2`.
    pub fn square(&self) -> TensorField {
        let mut out = TensorField::zeros(&self.grid);
        for c in 0..self.a11.len() {
            let (a, b, d) = (self.a11[c], self.a12[c], self.a22[c]);
            out.a11[c] = a * a + b * b;
            out.a12[c] = b * (a + d);
            out.a22[c] = b * b + d * d;
        }
        out
    }

    /// Pointwise `|A|^2 A`.
    pub fn cubic(&self) -> TensorField {
        let mut out = TensorField::zeros(&self.grid);
        for c in 0..self.a11.len() {
            let f = self.frob_sq_at(c);
            out.a11[c] = f * self.a11[c];
            out.a12[c] = f * self.a12[c];
            out.a22[c] = f * self.a22[c];
        }
        out
    }

    /// `∫ Tr(A^3)`.
    pub fn trace_cube_integral(&self) -> f64 {
        self.square().inner(self)
    }
}

/// Off-diagonal shear `∂u/∂y` and `∂v/∂x` at grid nodes. Wall values use the
/// reflected ghost sample, so the one-sided difference is `2u/h`.
pub(crate) fn node_shears(vf: &VelocityField) -> (Vec<f64>, Vec<f64>) {
    let g = &vf.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut dudy = vec![0.0; g.n_nodes()];
    let mut dvdx = vec![0.0; g.n_nodes()];
    for i in 1..nx {
        dudy[g.inode(i, 0)] = 2.0 * vf.u[g.iu(i, 0)] / g.hy;
        for j in 1..ny {
            dudy[g.inode(i, j)] = (vf.u[g.iu(i, j)] - vf.u[g.iu(i, j - 1)]) / g.hy;
        }
        dudy[g.inode(i, ny)] = -2.0 * vf.u[g.iu(i, ny - 1)] / g.hy;
    }
    for j in 1..ny {
        dvdx[g.inode(0, j)] = 2.0 * vf.v[g.iv(0, j)] / g.hx;
        for i in 1..nx {
            dvdx[g.inode(i, j)] = (vf.v[g.iv(i, j)] - vf.v[g.iv(i - 1, j)]) / g.hx;
        }
        dvdx[g.inode(nx, j)] = -2.0 * vf.v[g.iv(nx - 1, j)] / g.hx;
    }
    (dudy, dvdx)
}

/// Quadrature weight of a node: one half on walls, one inside.
#[inline]
fn node_weight(g: &Grid, i: usize, j: usize) -> f64 {
    if g.is_wall_node(i, j) {
        0.5
    } else {
        1.0
    }
}

fn avg4(g: &Grid, nodes: &[f64], i: usize, j: usize) -> f64 {
    0.25 * (nodes[g.inode(i, j)]
        + nodes[g.inode(i + 1, j)]
        + nodes[g.inode(i, j + 1)]
        + nodes[g.inode(i + 1, j + 1)])
}

/// `A(v) = ∇v + (∇v)^T` at cell centers. Diagonal entries are centered face
/// differences; the off-diagonal entry averages the four corner shears.
pub fn sym_gradient(vf: &VelocityField) -> TensorField {
    let g = &vf.grid;
    let mut t = TensorField::zeros(g);
    let (dudy, dvdx) = node_shears(vf);
    let shear: Vec<f64> = dudy.iter().zip(&dvdx).map(|(a, b)| a + b).collect();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.icell(i, j);
            t.a11[c] = 2.0 * (vf.u[g.iu(i + 1, j)] - vf.u[g.iu(i, j)]) / g.hx;
            t.a22[c] = 2.0 * (vf.v[g.iv(i, j + 1)] - vf.v[g.iv(i, j)]) / g.hy;
            t.a12[c] = avg4(g, &shear, i, j);
        }
    }
    t
}

/// Adjoint of [`sym_gradient`] under the Frobenius and velocity inner
/// products: `(sym_gradient_adjoint(T), w) = ∫ T : A(w)` for every field `w`.
pub fn sym_gradient_adjoint(t: &TensorField) -> VelocityField {
    let g = &t.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut out = VelocityField::zeros(g);
    for j in 0..ny {
        for i in 0..nx {
            let c = g.icell(i, j);
            let gx = 2.0 * t.a11[c] / g.hx;
            if i + 1 < nx {
                out.u[g.iu(i + 1, j)] += gx;
            }
            if i > 0 {
                out.u[g.iu(i, j)] -= gx;
            }
            let gy = 2.0 * t.a22[c] / g.hy;
            if j + 1 < ny {
                out.v[g.iv(i, j + 1)] += gy;
            }
            if j > 0 {
                out.v[g.iv(i, j)] -= gy;
            }
        }
    }
    // Node multipliers: each cell hands half of its a12 to its four corners
    // (2 * a12 / 4).
    let mut nodes = vec![0.0; g.n_nodes()];
    for j in 0..ny {
        for i in 0..nx {
            let h = 0.5 * t.a12[g.icell(i, j)];
            nodes[g.inode(i, j)] += h;
            nodes[g.inode(i + 1, j)] += h;
            nodes[g.inode(i, j + 1)] += h;
            nodes[g.inode(i + 1, j + 1)] += h;
        }
    }
    for i in 1..nx {
        out.u[g.iu(i, 0)] += 2.0 * nodes[g.inode(i, 0)] / g.hy;
        for j in 1..ny {
            let n = nodes[g.inode(i, j)] / g.hy;
            out.u[g.iu(i, j)] += n;
            out.u[g.iu(i, j - 1)] -= n;
        }
        out.u[g.iu(i, ny - 1)] -= 2.0 * nodes[g.inode(i, ny)] / g.hy;
    }
    for j in 1..ny {
        out.v[g.iv(0, j)] += 2.0 * nodes[g.inode(0, j)] / g.hx;
        for i in 1..nx {
            let n = nodes[g.inode(i, j)] / g.hx;
            out.v[g.iv(i, j)] += n;
            out.v[g.iv(i - 1, j)] -= n;
        }
        out.v[g.iv(nx - 1, j)] -= 2.0 * nodes[g.inode(nx, j)] / g.hx;
    }
    // Both pairings carry the same cell-area weight, so the scattered
    // gradient is already the Riesz representative.
    out
}

/// Staggered quadrature of `‖A(v)‖_2^2`: diagonal parts at cell centers, the
/// shear at nodes with half weight on walls. For divergence-free fields this
/// equals `2 ‖∇v‖_2^2` exactly, matching the five-point Stokes operator, and
/// it dominates the cell-centered `‖A(v)‖_2^2`.
pub fn sym_grad_sq_staggered(vf: &VelocityField) -> f64 {
    let g = &vf.grid;
    let (dudy, dvdx) = node_shears(vf);
    let mut s = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let ux = (vf.u[g.iu(i + 1, j)] - vf.u[g.iu(i, j)]) / g.hx;
            let vy = (vf.v[g.iv(i, j + 1)] - vf.v[g.iv(i, j)]) / g.hy;
            s += 4.0 * (ux * ux + vy * vy);
        }
    }
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let n = g.inode(i, j);
            let sh = dudy[n] + dvdx[n];
            s += 2.0 * node_weight(g, i, j) * sh * sh;
        }
    }
    s * g.cell_area()
}

/// The five discrete norms of a velocity field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub l4: f64,
    pub w14: f64,
    pub grad_l2: f64,
    pub grad_l4: f64,
}

/// `‖∇v‖_2^2` with the staggered quadrature; equals `(-Δv, v)` for the
/// five-point Laplacian with reflected ghosts.
pub fn grad_l2_sq(vf: &VelocityField) -> f64 {
    let g = &vf.grid;
    let (dudy, dvdx) = node_shears(vf);
    let mut s = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let ux = (vf.u[g.iu(i + 1, j)] - vf.u[g.iu(i, j)]) / g.hx;
            let vy = (vf.v[g.iv(i, j + 1)] - vf.v[g.iv(i, j)]) / g.hy;
            s += ux * ux + vy * vy;
        }
    }
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let n = g.inode(i, j);
            s += node_weight(g, i, j) * (dudy[n] * dudy[n] + dvdx[n] * dvdx[n]);
        }
    }
    s * g.cell_area()
}

/// `∫ |∇v|^4` with the full gradient assembled at cell centers (shears
/// averaged from the corners, as in [`sym_gradient`]).
pub fn grad_l4_pow4(vf: &VelocityField) -> f64 {
    let g = &vf.grid;
    let (dudy, dvdx) = node_shears(vf);
    let mut s = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let ux = (vf.u[g.iu(i + 1, j)] - vf.u[g.iu(i, j)]) / g.hx;
            let vy = (vf.v[g.iv(i, j + 1)] - vf.v[g.iv(i, j)]) / g.hy;
            let uy = avg4(g, &dudy, i, j);
            let vx = avg4(g, &dvdx, i, j);
            let q = ux * ux + vy * vy + uy * uy + vx * vx;
            s += q * q;
        }
    }
    s * g.cell_area()
}

/// `∫ |v|^4` with the velocity interpolated to cell centers.
pub fn l4_pow4(vf: &VelocityField) -> f64 {
    let (uc, vc) = vf.cell_centered();
    let s: f64 = uc
        .iter()
        .zip(&vc)
        .map(|(a, b)| {
            let q = a * a + b * b;
            q * q
        })
        .sum();
    s * vf.grid.cell_area()
}

/// Midpoint-rule norms. `l2` uses the face-based inner product so that it is
/// consistent with projections and the energy balance.
pub fn norms(vf: &VelocityField) -> Norms {
    let l4p = l4_pow4(vf);
    let gl4p = grad_l4_pow4(vf);
    Norms {
        l2: vf.norm_l2(),
        l4: l4p.powf(0.25),
        w14: (l4p + gl4p).powf(0.25),
        grad_l2: grad_l2_sq(vf).sqrt(),
        grad_l4: gl4p.powf(0.25),
    }
}

/// The cutoff blend `Λ(ξ)`: 0 for `ξ ≤ 1`, 1 for `ξ ≥ 2`, `3s²−2s³` with
/// `s = ξ−1` in between.
pub fn cutoff_lambda(xi: f64) -> f64 {
    if xi <= 1.0 {
        0.0
    } else if xi >= 2.0 {
        1.0
    } else {
        let s = xi - 1.0;
        s * s * (3.0 - 2.0 * s)
    }
}

/// `Λ²(|x|²/k²)` at cell centers, `|x|` measured from the domain center.
pub fn cutoff_weight(grid: &Grid, k: f64) -> Result<Vec<f64>> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff radius k must be positive, got {k}")));
    }
    let (cx, cy) = (0.5 * grid.lx, 0.5 * grid.ly);
    let k2 = k * k;
    let mut w = vec![0.0; grid.n_cells()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let dx = grid.x_centers[i] - cx;
            let dy = grid.y_centers[j] - cy;
            let l = cutoff_lambda((dx * dx + dy * dy) / k2);
            w[grid.icell(i, j)] = l * l;
        }
    }
    Ok(w)
}
