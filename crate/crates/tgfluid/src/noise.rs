//! Finite-mode noise: amplitudes on the Stokes eigenbasis, stationary
//! Ornstein–Uhlenbeck paths sampled with exact transitions, the path shift
//! and the radius functions built from a path.
//!
//! A path stores its samples on the integer lattice `t_k = k·dt`, so shifts
//! by multiples of `dt` are exact relabelings and composing them is exact.
//! Several paths with different damping shifts can be driven by one Wiener
//! path; each mode then follows the exact joint Gaussian transition of the
//! coupled family.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::Normal;

use crate::error::{Error, Result};
use crate::io;
use crate::leray::StokesEigenbasis;
use crate::mesh::{norms, VelocityField};
use crate::stats;

/// Driven Stokes modes and their amplitudes
/// `σ_j = amplitude·μ_j^{-(s_exp + 1 + r_exp/2)}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub n_modes: usize,
    pub s_exp: f64,
    pub r_exp: f64,
    pub amplitude: f64,
    /// Eigenvalues of the driven modes.
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Basis used to turn coefficients into fields; not serialized.
    #[serde(skip)]
    pub basis: Option<Arc<StokesEigenbasis>>,
}

fn power_sigma(mu: &[f64], s_exp: f64, r_exp: f64, amplitude: f64) -> Vec<f64> {
    let e = s_exp + 1.0 + 0.5 * r_exp;
    mu.iter().map(|m| amplitude * m.powf(-e)).collect()
}

fn check_exponent(s_exp: f64) -> Result<()> {
    if !(s_exp > 0.5) {
        return Err(Error::ExponentTooSmall(s_exp));
    }
    Ok(())
}

/// Spec driving the first `n_modes` modes of `basis`.
pub fn make_noise_spec(
    basis: &Arc<StokesEigenbasis>,
    n_modes: usize,
    s_exp: f64,
    r_exp: f64,
) -> Result<NoiseSpec> {
    check_exponent(s_exp)?;
    if n_modes == 0 || n_modes > basis.m {
        return Err(Error::InvalidArgument(format!(
            "n_modes = {n_modes} must be in 1..={}",
            basis.m
        )));
    }
    let mu = basis.eigenvalues[..n_modes].to_vec();
    Ok(NoiseSpec {
        n_modes,
        s_exp,
        r_exp,
        amplitude: 1.0,
        sigma: power_sigma(&mu, s_exp, r_exp, 1.0),
        mu,
        basis: Some(Arc::clone(basis)),
    })
}

impl NoiseSpec {
    /// Spec from bare eigenvalues, without a basis (coefficients only).
    pub fn from_eigenvalues(mu: Vec<f64>, s_exp: f64, r_exp: f64) -> Result<Self> {
        check_exponent(s_exp)?;
        if mu.is_empty() || mu.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidArgument("eigenvalues must be positive".into()));
        }
        if mu.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("eigenvalues must be nondecreasing".into()));
        }
        Ok(NoiseSpec {
            n_modes: mu.len(),
            s_exp,
            r_exp,
            amplitude: 1.0,
            sigma: power_sigma(&mu, s_exp, r_exp, 1.0),
            mu,
            basis: None,
        })
    }

    /// Spec with explicitly given amplitudes (nonincreasing, nonnegative).
    pub fn custom(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() || mu.is_empty() {
            return Err(Error::InvalidArgument("mu and sigma must have equal, nonzero length".into()));
        }
        if sigma.iter().any(|s| !(*s >= 0.0)) || sigma.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("sigma must be nonnegative and nonincreasing".into()));
        }
        Ok(NoiseSpec {
            n_modes: mu.len(),
            s_exp: f64::NAN,
            r_exp: f64::NAN,
            amplitude: 1.0,
            mu,
            sigma,
            basis: None,
        })
    }

    /// Rescales every amplitude so that the overall factor is `amplitude`.
    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        let f = if self.amplitude == 0.0 { 0.0 } else { amplitude / self.amplitude };
        if self.amplitude == 0.0 && amplitude != 0.0 && self.s_exp.is_finite() {
            self.sigma = power_sigma(&self.mu, self.s_exp, self.r_exp, amplitude);
        } else {
            self.sigma.iter_mut().for_each(|s| *s *= f);
        }
        self.amplitude = amplitude;
        self
    }

    /// OU rates `a_j = νμ_j + χ`.
    pub fn rates(&self, nu: f64, chi: f64) -> Vec<f64> {
        self.mu.iter().map(|m| nu * m + chi).collect()
    }

    /// Stationary variances `σ_j²/(2a_j)`.
    pub fn stationary_variance(&self, nu: f64, chi: f64) -> Vec<f64> {
        self.sigma
            .iter()
            .zip(self.rates(nu, chi))
            .map(|(s, a)| s * s / (2.0 * a))
            .collect()
    }

    /// Partial sums of `Σ σ_j² ‖e_j‖²_{W^{1,4}}`.
    pub fn w14_partial_sums(&self) -> Result<Vec<f64>> {
        let basis = self.require_basis()?;
        let mut acc = 0.0;
        Ok(self
            .sigma
            .iter()
            .zip(&basis.eigenfields)
            .map(|(s, e)| {
                let w = norms(e).w14;
                acc += s * s * w * w;
                acc
            })
            .collect())
    }

    pub fn require_basis(&self) -> Result<&Arc<StokesEigenbasis>> {
        self.basis
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("noise spec carries no eigenbasis".into()))
    }
}

/// Generator state needed to extend a path forward bit-exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GenState {
    /// ChaCha word position after the last generated sample, in decimal.
    word_pos: String,
    n_chains: usize,
    /// `e^{-a_j dt}` per mode.
    decay: Vec<f64>,
    /// Per mode, this chain's row of the Cholesky factor of the one-step
    /// noise covariance of the coupled family.
    noise_row: Vec<Vec<f64>>,
}

/// Two-sided OU coefficient trajectory `z_j(t_k)` on `t_k = k·dt`.
#[derive(Clone, Debug)]
pub struct OUPath {
    pub spec: NoiseSpec,
    pub chi: f64,
    pub nu: f64,
    pub dt: f64,
    pub seed: u64,
    start: i64,
    n_t: usize,
    data: Vec<f64>,
    gen: Option<GenState>,
}

/// Cholesky factor of a small positive-semidefinite matrix; directions with
/// vanishing pivots get zero columns.
fn psd_cholesky(c: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = c.len();
    let scale = (0..k).map(|i| c[i][i].abs()).fold(0.0, f64::max);
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = c[i][j];
            for m in 0..j {
                s -= l[i][m] * l[j][m];
            }
            if i == j {
                l[i][i] = s.max(0.0).sqrt();
            } else if l[j][j] > 1e-14 * scale.sqrt() {
                l[i][j] = s / l[j][j];
            }
        }
    }
    l
}

fn lattice_index(t: f64, dt: f64) -> Result<i64> {
    let x = t / dt;
    let k = x.round();
    if (x - k).abs() > 1e-9 * k.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "time {t} is not a multiple of dt = {dt}"
        )));
    }
    Ok(k as i64)
}

/// Stationary OU path with one damping shift `χ`.
pub fn ou_path(
    spec: &NoiseSpec,
    chi: f64,
    nu: f64,
    t_min: f64,
    t_max: f64,
    dt: f64,
    seed: u64,
) -> Result<OUPath> {
    Ok(ou_paths_coupled(spec, &[chi], nu, t_min, t_max, dt, seed)?.remove(0))
}

/// OU paths for several shifts `χ`, all driven by the same Wiener path.
/// Equal shifts produce bit-identical paths, and a single shift reproduces
/// [`ou_path`].
pub fn ou_paths_coupled(
    spec: &NoiseSpec,
    chis: &[f64],
    nu: f64,
    t_min: f64,
    t_max: f64,
    dt: f64,
    seed: u64,
) -> Result<Vec<OUPath>> {
    if !(dt > 0.0) || !(t_min < t_max) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and t_min < t_max, got dt = {dt}, [{t_min}, {t_max}]"
        )));
    }
    if chis.is_empty() || chis.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::InvalidArgument("chi values must be nonnegative".into()));
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!("nu must be positive, got {nu}")));
    }
    let k0 = lattice_index(t_min, dt)?;
    let k1 = lattice_index(t_max, dt)?;
    let n_t = (k1 - k0) as usize + 1;
    let mut uniq: Vec<f64> = Vec::new();
    let slot: Vec<usize> = chis
        .iter()
        .map(|&c| match uniq.iter().position(|&u| u == c) {
            Some(p) => p,
            None => {
                uniq.push(c);
                uniq.len() - 1
            }
        })
        .collect();
    let nc = uniq.len();
    let nm = spec.n_modes;

    // Per mode: joint stationary and one-step covariances of the family.
    let mut stat_l = Vec::with_capacity(nm);
    let mut step_l = Vec::with_capacity(nm);
    let mut decay = vec![vec![0.0; nm]; nc];
    for j in 0..nm {
        let s2 = spec.sigma[j] * spec.sigma[j];
        let a: Vec<f64> = uniq.iter().map(|c| nu * spec.mu[j] + c).collect();
        let stat: Vec<Vec<f64>> = (0..nc)
            .map(|k| (0..nc).map(|l| s2 / (a[k] + a[l])).collect())
            .collect();
        let step: Vec<Vec<f64>> = (0..nc)
            .map(|k| {
                (0..nc)
                    .map(|l| s2 * -(-(a[k] + a[l]) * dt).exp_m1() / (a[k] + a[l]))
                    .collect()
            })
            .collect();
        stat_l.push(psd_cholesky(&stat));
        step_l.push(psd_cholesky(&step));
        for k in 0..nc {
            decay[k][j] = (-a[k] * dt).exp();
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![vec![0.0; n_t * nm]; nc];
    let mut xi = vec![0.0; nc];
    for j in 0..nm {
        xi.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
        for k in 0..nc {
            data[k][j] = (0..=k).map(|l| stat_l[j][k][l] * xi[l]).sum();
        }
    }
    for t in 1..n_t {
        for j in 0..nm {
            xi.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
            for k in 0..nc {
                let prev = data[k][(t - 1) * nm + j];
                let noise: f64 = (0..=k).map(|l| step_l[j][k][l] * xi[l]).sum();
                data[k][t * nm + j] = decay[k][j] * prev + noise;
            }
        }
    }
    let word_pos = rng.get_word_pos().to_string();
    let paths: Vec<OUPath> = (0..nc)
        .map(|k| OUPath {
            spec: spec.clone(),
            chi: uniq[k],
            nu,
            dt,
            seed,
            start: k0,
            n_t,
            data: std::mem::take(&mut data[k]),
            gen: Some(GenState {
                word_pos: word_pos.clone(),
                n_chains: nc,
                decay: decay[k].clone(),
                noise_row: (0..nm).map(|j| step_l[j][k].clone()).collect(),
            }),
        })
        .collect();
    Ok(slot.iter().map(|&s| paths[s].clone()).collect())
}

/// Path file header.
#[derive(Debug, Serialize, Deserialize)]
struct PathHeader {
    kind: String,
    spec: NoiseSpec,
    chi: f64,
    nu: f64,
    dt: f64,
    seed: u64,
    start: i64,
    n_t: usize,
    t_min: f64,
    t_max: f64,
    gen: Option<GenState>,
}

impl OUPath {
    pub fn n_modes(&self) -> usize {
        self.spec.n_modes
    }

    pub fn n_times(&self) -> usize {
        self.n_t
    }

    /// Lattice index of the first sample.
    pub fn start_index(&self) -> i64 {
        self.start
    }

    pub fn t_min(&self) -> f64 {
        self.start as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        (self.start + self.n_t as i64 - 1) as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|k| (self.start + k as i64) as f64 * self.dt).collect()
    }

    /// Coefficients at lattice index `k` (absolute).
    pub fn coeffs_at_index(&self, k: i64) -> Option<&[f64]> {
        let off = k - self.start;
        if off < 0 || off as usize >= self.n_t {
            return None;
        }
        let nm = self.spec.n_modes;
        let o = off as usize * nm;
        Some(&self.data[o..o + nm])
    }

    /// Lattice index of `t`, if `t` is a sample time inside the window.
    pub fn index_of(&self, t: f64) -> Option<i64> {
        let k = lattice_index(t, self.dt).ok()?;
        self.coeffs_at_index(k).map(|_| k)
    }

    /// Coefficients at time `t`, linearly interpolated between samples.
    pub fn coeffs_at(&self, t: f64) -> Result<Vec<f64>> {
        let x = t / self.dt;
        let exhausted = || Error::WindowExhausted {
            requested: t,
            t_min: self.t_min(),
            t_max: self.t_max(),
        };
        let k = x.round();
        if (x - k).abs() <= 1e-9 * k.abs().max(1.0) {
            return self.coeffs_at_index(k as i64).map(|c| c.to_vec()).ok_or_else(exhausted);
        }
        let k0 = x.floor() as i64;
        let th = x - k0 as f64;
        let a = self.coeffs_at_index(k0).ok_or_else(exhausted)?;
        let b = self.coeffs_at_index(k0 + 1).ok_or_else(exhausted)?;
        Ok(a.iter().zip(b).map(|(p, q)| (1.0 - th) * p + th * q).collect())
    }

    /// `z(t) = Σ_j z_j(t) e_j`.
    pub fn field_at(&self, t: f64) -> Result<VelocityField> {
        let c = self.coeffs_at(t)?;
        Ok(self.spec.require_basis()?.reconstruct(&c))
    }

    pub fn field_at_index(&self, k: i64) -> Result<VelocityField> {
        let c = self.coeffs_at_index(k).ok_or(Error::WindowExhausted {
            requested: k as f64 * self.dt,
            t_min: self.t_min(),
            t_max: self.t_max(),
        })?;
        Ok(self.spec.require_basis()?.reconstruct(c))
    }

    /// `‖z(t_k)‖₂`, from the coefficients (the basis is orthonormal).
    pub fn l2_at_index(&self, k: i64) -> Option<f64> {
        self.coeffs_at_index(k).map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    /// Time series of one mode.
    pub fn mode_series(&self, j: usize) -> Vec<f64> {
        let nm = self.spec.n_modes;
        (0..self.n_t).map(|k| self.data[k * nm + j]).collect()
    }

    /// The shifted path `ẑ(t) = z(t + s)`; `s` must be a multiple of `dt`.
    pub fn shift(&self, s: f64) -> Result<OUPath> {
        let ks = lattice_index(s, self.dt)?;
        let mut out = self.clone();
        out.start -= ks;
        Ok(out)
    }

    /// Extends the window forward to `t_max` with fresh increments that
    /// continue the generator stream.
    pub fn extend_to(&mut self, t_max: f64) -> Result<()> {
        let k1 = lattice_index(t_max, self.dt)?;
        let last = self.start + self.n_t as i64 - 1;
        if k1 <= last {
            return Ok(());
        }
        let gen = self.gen.as_mut().ok_or_else(|| {
            Error::InvalidArgument("path was resampled and can no longer be extended".into())
        })?;
        let pos: u128 = gen
            .word_pos
            .parse()
            .map_err(|_| Error::Format("bad generator position".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(pos);
        let nm = self.spec.n_modes;
        let mut xi = vec![0.0; gen.n_chains];
        for _ in last..k1 {
            let base = self.data.len() - nm;
            for j in 0..nm {
                xi.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
                let noise: f64 = gen.noise_row[j].iter().zip(&xi).map(|(l, x)| l * x).sum();
                let next = gen.decay[j] * self.data[base + j] + noise;
                self.data.push(next);
            }
            self.n_t += 1;
        }
        gen.word_pos = rng.get_word_pos().to_string();
        Ok(())
    }

    /// Makes sure `[t0, t1]` is covered, extending forward when allowed.
    pub fn ensure_window(&mut self, t0: f64, t1: f64, allow_extend: bool) -> Result<()> {
        let k0 = lattice_index(t0, self.dt)?;
        let k1 = lattice_index(t1, self.dt)?;
        let last = self.start + self.n_t as i64 - 1;
        if k0 < self.start || (k1 > last && !allow_extend) {
            return Err(Error::WindowExhausted {
                requested: if k0 < self.start { t0 } else { t1 },
                t_min: self.t_min(),
                t_max: self.t_max(),
            });
        }
        self.extend_to(t1)
    }

    /// Every `factor`-th sample, i.e. the same path on the lattice of step
    /// `factor·dt`. The window start must lie on the coarse lattice.
    pub fn subsample(&self, factor: usize) -> Result<OUPath> {
        if factor == 0 || self.start.rem_euclid(factor as i64) != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot subsample by {factor} from lattice start {}",
                self.start
            )));
        }
        let nm = self.spec.n_modes;
        let n_t = (self.n_t - 1) / factor + 1;
        let mut data = Vec::with_capacity(n_t * nm);
        for k in 0..n_t {
            data.extend_from_slice(&self.data[k * factor * nm..(k * factor + 1) * nm]);
        }
        Ok(OUPath {
            spec: self.spec.clone(),
            chi: self.chi,
            nu: self.nu,
            dt: self.dt * factor as f64,
            seed: self.seed,
            start: self.start / factor as i64,
            n_t,
            data,
            gen: None,
        })
    }

    /// Writes a JSON header line and the coefficient matrix (time-major).
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = PathHeader {
            kind: "ou_path".into(),
            spec: self.spec.clone(),
            chi: self.chi,
            nu: self.nu,
            dt: self.dt,
            seed: self.seed,
            start: self.start,
            n_t: self.n_t,
            t_min: self.t_min(),
            t_max: self.t_max(),
            gen: self.gen.clone(),
        };
        io::write_block_file(path, &header, &self.data)
    }

    /// Reads a path file; `basis` re-attaches the eigenbasis if given.
    pub fn load(path: &Path, basis: Option<Arc<StokesEigenbasis>>) -> Result<Self> {
        let (h, data): (PathHeader, Vec<f64>) = io::read_block_file(path)?;
        if data.len() != h.n_t * h.spec.n_modes {
            return Err(Error::Format("path payload size mismatch".into()));
        }
        let mut spec = h.spec;
        spec.basis = basis;
        Ok(OUPath {
            spec,
            chi: h.chi,
            nu: h.nu,
            dt: h.dt,
            seed: h.seed,
            start: h.start,
            n_t: h.n_t,
            data,
            gen: h.gen,
        })
    }

    /// Bit-level equality of the sampled data and lattice placement.
    pub fn same_samples(&self, other: &OUPath) -> bool {
        self.start == other.start
            && self.n_t == other.n_t
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// `κ₁ … κ₄` of a path at reference time `0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Kappas {
    /// `‖z(0)‖₂`.
    pub k1: f64,
    /// `(sup_s e^{cs}‖z(s)‖₂²)^{1/2}`.
    pub k2: f64,
    /// `(∫ e^{ct}‖z(t)‖₂² dt)^{1/2}`.
    pub k3: f64,
    /// `(∫ e^{ct}‖z(t)‖⁴_{W^{1,4}} dt)^{1/4}`.
    pub k4: f64,
}

/// Radius functions over the window `[t_start, 0]` with weight `e^{ct}`,
/// trapezoid rule on every `stride`-th sample.
pub fn radius_kappas_with(path: &OUPath, c: f64, t_start: f64, stride: usize) -> Result<Kappas> {
    let (k1, _, _) = kappa_parts(path, c, t_start, stride)?;
    Ok(k1)
}

/// Radius functions over `[t_start, 0]` using every sample.
pub fn radius_kappas(path: &OUPath, c: f64, t_start: f64) -> Result<Kappas> {
    radius_kappas_with(path, c, t_start, 1)
}

/// Kappas plus the integral contributions of the older half of the window,
/// `(κ₃²_old, κ₄⁴_old)`, used to judge whether the window is long enough.
pub(crate) fn kappa_parts(
    path: &OUPath,
    c: f64,
    t_start: f64,
    stride: usize,
) -> Result<(Kappas, f64, f64)> {
    let stride = stride.max(1) as i64;
    let k_end = 0i64;
    let k_start = lattice_index(t_start, path.dt)?;
    if k_start > k_end || path.coeffs_at_index(k_start).is_none() || path.coeffs_at_index(k_end).is_none() {
        return Err(Error::WindowExhausted {
            requested: t_start,
            t_min: path.t_min(),
            t_max: path.t_max(),
        });
    }
    let basis = path.spec.require_basis()?;
    let zero = path.coeffs_at_index(0).expect("checked");
    let k1 = zero.iter().map(|x| x * x).sum::<f64>().sqrt();
    let half = (k_start + k_end) as f64 * 0.5;
    let (mut sup2, mut i3, mut i4, mut old3, mut old4) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    let mut k = k_end;
    let mut prev: Option<(f64, f64, f64)> = None;
    loop {
        let t = k as f64 * path.dt;
        let cf = path.coeffs_at_index(k).expect("inside window");
        let l2sq: f64 = cf.iter().map(|x| x * x).sum();
        let w = (c * t).exp();
        sup2 = sup2.max(w * l2sq);
        let w14 = if cf.iter().all(|x| *x == 0.0) {
            0.0
        } else {
            norms(&basis.reconstruct(cf)).w14
        };
        let f3 = w * l2sq;
        let f4 = w * w14.powi(4);
        if let Some((tp, p3, p4)) = prev {
            let h = tp - t;
            let (s3, s4) = (0.5 * h * (f3 + p3), 0.5 * h * (f4 + p4));
            i3 += s3;
            i4 += s4;
            if (k as f64) < half {
                old3 += s3;
                old4 += s4;
            }
        }
        prev = Some((t, f3, f4));
        if k == k_start {
            break;
        }
        k = (k - stride).max(k_start);
    }
    Ok((
        Kappas {
            k1,
            k2: sup2.sqrt(),
            k3: i3.sqrt(),
            k4: i4.powf(0.25),
        },
        old3,
        old4,
    ))
}

/// Stationarity and transition diagnostics of one mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuDiagnostics {
    pub mode: usize,
    pub rate: f64,
    pub mean: f64,
    pub variance: f64,
    pub expected_variance: f64,
    pub lag: f64,
    pub autocorrelation: f64,
    pub expected_autocorrelation: f64,
    /// KS p-value of the standardized transition innovations against
    /// `N(0, 1)`.
    pub ks_pvalue: f64,
    pub ks_samples: usize,
}

/// Diagnostics of mode `j`: moments over the whole path, the lag-`lag_steps`
/// autocorrelation, and a KS test on the first `ks_samples` innovations
/// `(z_{k+1} − e^{−a dt} z_k)/s` with `s² = σ²(1 − e^{−2a dt})/(2a)`.
pub fn ou_diagnostics(path: &OUPath, j: usize, lag_steps: usize, ks_samples: usize) -> OuDiagnostics {
    let a = path.nu * path.spec.mu[j] + path.chi;
    let s = path.spec.sigma[j];
    let xs = path.mode_series(j);
    let decay = (-a * path.dt).exp();
    let sd = s * (-(-2.0 * a * path.dt).exp_m1() / (2.0 * a)).sqrt();
    let innov: Vec<f64> = xs
        .windows(2)
        .take(ks_samples)
        .map(|w| (w[1] - decay * w[0]) / sd)
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let d = stats::ks_statistic(&innov, &normal);
    OuDiagnostics {
        mode: j,
        rate: a,
        mean: stats::mean(&xs),
        variance: stats::variance(&xs),
        expected_variance: s * s / (2.0 * a),
        lag: lag_steps as f64 * path.dt,
        autocorrelation: stats::autocorrelation(&xs, lag_steps),
        expected_autocorrelation: (-a * lag_steps as f64 * path.dt).exp(),
        ks_pvalue: stats::ks_pvalue(d, innov.len()),
        ks_samples: innov.len(),
    }
}

/// Seed of ensemble member `index`, derived from `master` by a counter on an
/// independent ChaCha stream.
pub fn member_seed(master: u64, index: u64) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index.wrapping_add(1));
    rng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_spec() -> NoiseSpec {
        NoiseSpec::custom(vec![1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn sigma_follows_the_power_law() {
        let s = NoiseSpec::from_eigenvalues(vec![1.0, 4.0, 9.0], 1.0, 0.0).unwrap();
        assert_eq!(s.sigma[0], 1.0);
        assert!((s.sigma[1] - 0.0625).abs() < 1e-15);
        assert!((s.sigma[2] - 1.0 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn small_exponent_is_rejected() {
        match NoiseSpec::from_eigenvalues(vec![1.0], 0.4, 0.0) {
            Err(Error::ExponentTooSmall(x)) => assert_eq!(x, 0.4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_chi_coupled_equals_plain_path() {
        let spec = NoiseSpec::from_eigenvalues(vec![1.0, 2.0], 1.0, 0.0).unwrap();
        let p = ou_path(&spec, 0.5, 1.0, -1.0, 1.0, 0.01, 9).unwrap();
        let c = ou_paths_coupled(&spec, &[0.5, 0.5], 1.0, -1.0, 1.0, 0.01, 9).unwrap();
        assert!(p.same_samples(&c[0]) && p.same_samples(&c[1]));
    }

    #[test]
    fn extension_matches_a_longer_run() {
        let spec = scalar_spec();
        let long = ou_path(&spec, 0.0, 1.0, -1.0, 2.0, 0.01, 3).unwrap();
        let mut short = ou_path(&spec, 0.0, 1.0, -1.0, 0.5, 0.01, 3).unwrap();
        short.extend_to(2.0).unwrap();
        assert!(long.same_samples(&short));
    }

    #[test]
    fn interpolation_between_samples() {
        let spec = scalar_spec();
        let p = ou_path(&spec, 0.0, 1.0, 0.0, 1.0, 0.1, 4).unwrap();
        let a = p.coeffs_at(0.2).unwrap()[0];
        let b = p.coeffs_at(0.3).unwrap()[0];
        let m = p.coeffs_at(0.25).unwrap()[0];
        assert!((m - 0.5 * (a + b)).abs() < 1e-12);
        assert!(p.coeffs_at(1.5).is_err());
    }

    #[test]
    fn subsample_keeps_lattice_values() {
        let spec = scalar_spec();
        let p = ou_path(&spec, 0.0, 1.0, -1.0, 1.0, 0.01, 4).unwrap();
        let q = p.subsample(4).unwrap();
        assert_eq!(q.coeffs_at(0.2).unwrap(), p.coeffs_at(0.2).unwrap());
        assert!(q.clone().extend_to(3.0).is_err());
    }

    #[test]
    fn psd_cholesky_handles_rank_deficiency() {
        let c = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let l = psd_cholesky(&c);
        assert_eq!(l[1][1], 0.0);
        assert!((l[1][0] - 1.0).abs() < 1e-15);
    }
}
