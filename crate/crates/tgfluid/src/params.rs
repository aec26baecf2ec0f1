//! Physical parameters of the transformed system.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Grid, VelocityField};

/// Viscosity `ν`, moduli `α, β`, the OU shift `χ` and a time-independent
/// forcing field `f`.
#[derive(Clone, Debug)]
pub struct PhysParams {
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
    pub f: VelocityField,
}

/// Scalar echo of [`PhysParams`] for reports and checkpoint metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
    pub eps0: f64,
    pub f_l2: f64,
}

/// `√(2νβ)`, the bound on `|α|`.
pub fn alpha_limit(nu: f64, beta: f64) -> f64 {
    (2.0 * nu * beta).sqrt()
}

/// `ε₀ = 1 − √(α²/(2νβ))`.
pub fn eps0_of(nu: f64, alpha: f64, beta: f64) -> f64 {
    1.0 - (alpha * alpha / (2.0 * nu * beta)).sqrt()
}

impl PhysParams {
    /// Validated parameters. `f` is projected onto divergence-free fields by
    /// the solver, so any grid field is accepted.
    pub fn new(nu: f64, alpha: f64, beta: f64, chi: f64, f: VelocityField) -> Result<Self> {
        let p = PhysParams {
            nu,
            alpha,
            beta,
            chi,
            f,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `f ≡ 0` on `grid`.
    pub fn unforced(grid: &Arc<Grid>, nu: f64, alpha: f64, beta: f64, chi: f64) -> Result<Self> {
        Self::new(nu, alpha, beta, chi, VelocityField::zeros(grid))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.chi >= 0.0 && self.chi.is_finite()) {
            return Err(Error::InvalidArgument(format!("chi must be nonnegative, got {}", self.chi)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidArgument("alpha must be finite".into()));
        }
        let limit = alpha_limit(self.nu, self.beta);
        if self.alpha.abs() >= limit {
            return Err(Error::ParameterRegime {
                alpha: self.alpha.abs(),
                limit,
            });
        }
        if !self.f.is_finite() {
            return Err(Error::InvalidArgument("forcing contains non-finite samples".into()));
        }
        Ok(())
    }

    pub fn eps0(&self) -> f64 {
        eps0_of(self.nu, self.alpha, self.beta)
    }

    /// Attractor-relevant decay rate `νλ̂(1 + ε₀/2)`.
    pub fn decay_rate(&self, lambda_hat: f64) -> f64 {
        self.nu * lambda_hat * (1.0 + 0.5 * self.eps0())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.f.grid
    }

    /// Same parameters with a different `χ`.
    pub fn with_chi(&self, chi: f64) -> Result<Self> {
        Self::new(self.nu, self.alpha, self.beta, chi, self.f.clone())
    }

    pub fn record(&self) -> ParamsRecord {
        ParamsRecord {
            nu: self.nu,
            alpha: self.alpha,
            beta: self.beta,
            chi: self.chi,
            eps0: self.eps0(),
            f_l2: self.f.norm_l2(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;

    fn grid() -> Arc<Grid> {
        Arc::new(build_grid(1.0, 1.0, 8, 8).unwrap())
    }

    #[test]
    fn eps0_balances_the_quadratic_term() {
        let (nu, beta, alpha) = (0.7, 1.3, 0.4);
        let e = eps0_of(nu, alpha, beta);
        let lhs = alpha * alpha / (4.0 * nu * (1.0 - e));
        let rhs = beta * (1.0 - e) / 2.0;
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn regime_boundary_is_rejected() {
        let g = grid();
        let a = alpha_limit(1.0, 1.0);
        match PhysParams::unforced(&g, 1.0, a, 1.0, 0.0) {
            Err(Error::ParameterRegime { .. }) => {}
            other => panic!("expected regime error, got {other:?}"),
        }
        assert!(PhysParams::unforced(&g, 1.0, 0.99 * a, 1.0, 0.0).is_ok());
    }

    #[test]
    fn nonpositive_viscosity_is_rejected() {
        assert!(PhysParams::unforced(&grid(), 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(PhysParams::unforced(&grid(), 1.0, 0.0, -1.0, 0.0).is_err());
        assert!(PhysParams::unforced(&grid(), 1.0, 0.0, 1.0, -0.5).is_err());
    }
}
