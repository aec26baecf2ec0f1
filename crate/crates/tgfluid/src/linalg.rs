//! Symmetric banded matrices and their Cholesky factors.

use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower band. Row `i` keeps columns
/// `i-bw ..= i` at offsets `bw - (i-k)`.
#[derive(Clone, Debug)]
pub struct SymBand {
    pub n: usize,
    pub bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBand {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    fn at(&self, i: usize, k: usize) -> usize {
        i * (self.bw + 1) + self.bw + k - i
    }

    /// Entry `(i, k)` for `k <= i`, zero outside the band.
    pub fn get(&self, i: usize, k: usize) -> f64 {
        let (i, k) = if k > i { (k, i) } else { (i, k) };
        if i - k > self.bw {
            0.0
        } else {
            self.data[self.at(i, k)]
        }
    }

    /// Sets entry `(i, k)`, `k <= i`, `i - k <= bw`.
    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        debug_assert!(k <= i && i - k <= self.bw);
        let idx = self.at(i, k);
        self.data[idx] = value;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let k0 = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let mut s = 0.0;
            for k in k0..=i {
                let a = row[self.bw + k - i];
                s += a * x[k];
                if k != i {
                    y[k] += a * x[i];
                }
            }
            y[i] += s;
        }
        y
    }

    /// `self + c * other`; both must share the bandwidth.
    pub fn plus_scaled(&self, c: f64, other: &SymBand) -> SymBand {
        assert_eq!(self.bw, other.bw);
        assert_eq!(self.n, other.n);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + c * b)
            .collect();
        SymBand {
            n: self.n,
            bw: self.bw,
            data,
        }
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = SymBand::zeros(n, bw);
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            for k in k0..=i {
                let m0 = k0.max(k.saturating_sub(bw));
                let mut s = self.data[self.at(i, k)];
                for m in m0..k {
                    s -= l.data[l.at(i, m)] * l.data[l.at(k, m)];
                }
                if k == i {
                    if !(s > 0.0) {
                        return Err(Error::NonConvergence {
                            what: "banded Cholesky (matrix not positive definite)",
                            iterations: i,
                            residual: s,
                        });
                    }
                    let idx = l.at(i, i);
                    l.data[idx] = s.sqrt();
                } else {
                    let idx = l.at(i, k);
                    l.data[idx] = s / l.data[l.at(k, k)];
                }
            }
        }
        Ok(BandCholesky { l })
    }
}

/// Lower-triangular banded factor `L` with `A = L L^T`.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    l: SymBand,
}

impl BandCholesky {
    pub fn n(&self) -> usize {
        self.l.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.l.n, self.l.bw);
        let d = &self.l.data;
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            let base = i * (bw + 1) + bw - i;
            let mut s = x[i];
            for k in k0..i {
                s -= d[base + k] * x[k];
            }
            x[i] = s / d[base + i];
        }
        for i in (0..n).rev() {
            let xi = x[i] / d[i * (bw + 1) + bw];
            x[i] = xi;
            let k0 = i.saturating_sub(bw);
            let base = i * (bw + 1) + bw - i;
            for k in k0..i {
                x[k] -= d[base + k] * xi;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += c * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_spd(n: usize, bw: usize) -> SymBand {
        let mut a = SymBand::zeros(n, bw);
        for i in 0..n {
            for k in i.saturating_sub(bw)..=i {
                let v = if i == k {
                    4.0 + bw as f64 * 2.0
                } else {
                    1.0 / (1.0 + (i + 2 * k) as f64 % 3.0)
                };
                a.set(i, k, v);
            }
        }
        a
    }

    #[test]
    fn cholesky_solves_banded_system() {
        let a = dense_spd(37, 5);
        let x: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.matvec(&x);
        let sol = a.cholesky().unwrap().solve(&b);
        for (p, q) in sol.iter().zip(&x) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn matvec_is_symmetric() {
        let a = dense_spd(20, 3);
        let x: Vec<f64> = (0..20).map(|i| (i as f64).cos()).collect();
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 1.3).sin()).collect();
        let lhs = dot(&a.matvec(&x), &y);
        let rhs = dot(&x, &a.matvec(&y));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = SymBand::zeros(3, 1);
        a.set(0, 0, 1.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 1.0);
        a.set(2, 2, 1.0);
        assert!(a.cholesky().is_err());
    }
}
