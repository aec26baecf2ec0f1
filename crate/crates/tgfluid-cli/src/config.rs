//! Experiment configuration: TOML (or JSON) blocks with defaults for every
//! field, validated as a whole so that all problems are reported at once.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The experiment a config is meant for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    Properties,
    Pullback,
    Tails,
    InvariantMeasure,
    Calibrate,
    OuDiagnostics,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::Simulate => "simulate",
            Kind::Properties => "properties",
            Kind::Pullback => "pullback",
            Kind::Tails => "tails",
            Kind::InvariantMeasure => "invariant-measure",
            Kind::Calibrate => "calibrate",
            Kind::OuDiagnostics => "ou-diagnostics",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { lx: 4.0, ly: 1.0, nx: 64, ny: 16 }
    }
}

/// Body force `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingConfig {
    Zero,
    /// Smooth field supported in a disc around the domain center.
    Bump { radius: f64, amplitude: f64 },
    /// A velocity field file written by the library, on the configured grid.
    File { path: PathBuf },
    /// `f = div T` for a symmetric cell tensor read from JSON
    /// (`{"a11": [...], "a12": [...], "a22": [...]}`, row-major cells),
    /// assembled weakly as `(f, w) = −∫T : ∇w`.
    Divergence { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
    pub forcing: ForcingConfig,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            nu: 0.1,
            alpha: 0.25,
            beta: 1.0,
            chi: 0.0,
            forcing: ForcingConfig::Bump { radius: 0.45, amplitude: 1.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub n_modes: usize,
    /// Stokes modes computed for the run; at least `n_modes`.
    pub basis_size: usize,
    pub s_exp: f64,
    pub r_exp: f64,
    pub amplitude: f64,
    pub seed: u64,
    /// Regularity parameter of the noise; recorded, not used.
    pub delta: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            n_modes: 8,
            basis_size: 8,
            s_exp: 1.0,
            r_exp: 0.0,
            amplitude: 100.0,
            seed: 42,
            delta: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dt: f64,
    /// Length of a forward simulation.
    pub t_end: f64,
    /// Keep every this many steps in stored trajectories.
    pub store_every: usize,
    pub horizons: Vec<f64>,
    /// Backward extent of the noise path for pullback runs; at least the
    /// largest horizon.
    pub window: f64,
    pub n_members: usize,
    pub init_radius: f64,
    pub burn_in: f64,
    /// Averaging horizon of the invariant-measure estimate.
    pub horizon: f64,
    pub n_omega: usize,
    /// Markov probe `T_{t1+t2}` against `T_{t1} T_{t2}`; zero disables it.
    pub markov_t1: f64,
    pub markov_t2: f64,
    pub markov_inner: usize,
    /// The tail study probes radii `h, 2h, …, tail_cells·h`, `h` the
    /// smallest cell side.
    pub tail_cells: usize,
    pub tail_epsilons: Vec<f64>,
    /// Scale of the bounded observable `tanh(‖v‖²/scale)`.
    pub tanh_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dt: 2e-3,
            t_end: 1.0,
            store_every: 10,
            horizons: vec![0.25, 0.5, 1.0, 2.0],
            window: 4.0,
            n_members: 2,
            init_radius: 1.0,
            burn_in: 1.0,
            horizon: 0.5,
            n_omega: 20,
            markov_t1: 0.25,
            markov_t2: 0.25,
            markov_inner: 5,
            tail_cells: 40,
            tail_epsilons: vec![1e-3],
            tanh_scale: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub safety: f64,
    /// Constants written by an earlier `calibrate` run; calibrated afresh
    /// when absent.
    pub constants_file: Option<PathBuf>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { n_samples: 10_000, seed: 2024, safety: 10.0, constants_file: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertiesConfig {
    pub n_fields: usize,
    pub n_triples: usize,
    pub seed: u64,
}

impl Default for PropertiesConfig {
    fn default() -> Self {
        PropertiesConfig { n_fields: 100, n_triples: 200, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuConfig {
    /// Path length in units of the slowest relaxation time.
    pub relaxation_times: f64,
    pub steps_per_relaxation: usize,
    pub lag_steps: usize,
    pub ks_samples: usize,
}

impl Default for OuConfig {
    fn default() -> Self {
        OuConfig { relaxation_times: 1e4, steps_per_relaxation: 20, lag_steps: 5, ks_samples: 1000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub grid: GridConfig,
    pub params: ParamsConfig,
    pub noise: NoiseConfig,
    pub run: RunConfig,
    pub calibration: CalibrationConfig,
    pub properties: PropertiesConfig,
    pub ou: OuConfig,
}

impl ExperimentConfig {
    /// Reads TOML, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).with_context(|| format!("parsing JSON config {}", path.display()))
        } else {
            toml::from_str(&text).with_context(|| format!("parsing TOML config {}", path.display()))
        }
    }

    /// Every violated constraint, one message per field.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                v.push(msg);
            }
        };
        let g = &self.grid;
        check(g.lx > 0.0 && g.lx.is_finite(), format!("grid.lx = {} must be positive", g.lx));
        check(g.ly > 0.0 && g.ly.is_finite(), format!("grid.ly = {} must be positive", g.ly));
        check(g.nx >= 4, format!("grid.nx = {} must be at least 4", g.nx));
        check(g.ny >= 4, format!("grid.ny = {} must be at least 4", g.ny));

        let p = &self.params;
        check(p.nu > 0.0 && p.nu.is_finite(), format!("params.nu = {} must be positive", p.nu));
        check(p.beta > 0.0 && p.beta.is_finite(), format!("params.beta = {} must be positive", p.beta));
        check(p.chi >= 0.0 && p.chi.is_finite(), format!("params.chi = {} must be nonnegative", p.chi));
        check(p.alpha.is_finite(), format!("params.alpha = {} must be finite", p.alpha));
        if p.nu > 0.0 && p.beta > 0.0 {
            let limit = (2.0 * p.nu * p.beta).sqrt();
            check(
                p.alpha.abs() < limit,
                format!(
                    "params.alpha: third-grade regime requires |alpha| < sqrt(2 nu beta) = {limit}, got |alpha| = {}",
                    p.alpha.abs()
                ),
            );
        }
        if let ForcingConfig::Bump { radius, amplitude } = p.forcing {
            check(radius > 0.0, format!("params.forcing.radius = {radius} must be positive"));
            check(amplitude.is_finite(), format!("params.forcing.amplitude = {amplitude} must be finite"));
        }

        let n = &self.noise;
        check(n.n_modes >= 1, "noise.n_modes must be at least 1".into());
        check(
            n.basis_size >= n.n_modes,
            format!("noise.basis_size = {} must be at least noise.n_modes = {}", n.basis_size, n.n_modes),
        );
        check(n.s_exp > 0.5, format!("noise.s_exp = {} must exceed d/4 = 0.5", n.s_exp));
        check(n.r_exp.is_finite(), format!("noise.r_exp = {} must be finite", n.r_exp));
        check(n.amplitude >= 0.0 && n.amplitude.is_finite(), format!("noise.amplitude = {} must be nonnegative", n.amplitude));
        if let Some(d) = n.delta {
            check(d > 0.0 && d < 0.5, format!("noise.delta = {d} must lie in (0, 1/2)"));
        }

        let r = &self.run;
        check(r.dt > 0.0 && r.dt.is_finite(), format!("run.dt = {} must be positive", r.dt));
        check(r.t_end > 0.0, format!("run.t_end = {} must be positive", r.t_end));
        check(r.store_every >= 1, "run.store_every must be at least 1".into());
        check(
            !r.horizons.is_empty() && r.horizons.iter().all(|h| *h >= 0.0) && r.horizons.windows(2).all(|w| w[0] <= w[1]),
            format!("run.horizons = {:?} must be nonempty, nonnegative and nondecreasing", r.horizons),
        );
        let h_max = r.horizons.iter().copied().fold(0.0, f64::max);
        check(r.window >= h_max, format!("run.window = {} must cover the largest horizon {h_max}", r.window));
        check(r.n_members >= 1, "run.n_members must be at least 1".into());
        check(r.init_radius >= 0.0, format!("run.init_radius = {} must be nonnegative", r.init_radius));
        check(r.burn_in >= 0.0, format!("run.burn_in = {} must be nonnegative", r.burn_in));
        check(r.horizon > 0.0, format!("run.horizon = {} must be positive", r.horizon));
        check(r.n_omega >= 2, format!("run.n_omega = {} must be at least 2", r.n_omega));
        check(r.markov_t1 >= 0.0 && r.markov_t2 >= 0.0, "run.markov_t1 and run.markov_t2 must be nonnegative".into());
        check(r.tail_cells >= 1, "run.tail_cells must be at least 1".into());
        check(r.tanh_scale > 0.0, format!("run.tanh_scale = {} must be positive", r.tanh_scale));
        check(r.tail_epsilons.iter().all(|e| *e > 0.0), "run.tail_epsilons must be positive".into());

        let c = &self.calibration;
        check(c.n_samples >= 1, "calibration.n_samples must be at least 1".into());
        check(c.safety >= 1.0, format!("calibration.safety = {} must be at least 1", c.safety));

        let o = &self.ou;
        check(o.relaxation_times > 0.0, "ou.relaxation_times must be positive".into());
        check(o.steps_per_relaxation >= 1, "ou.steps_per_relaxation must be at least 1".into());
        check(o.lag_steps >= 1, "ou.lag_steps must be at least 1".into());
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            return Ok(());
        }
        let mut msg = format!("invalid configuration ({} problem{}):", v.len(), if v.len() == 1 { "" } else { "s" });
        for line in v {
            msg.push_str("\n  - ");
            msg.push_str(&line);
        }
        bail!(msg)
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        assert!(ExperimentConfig::default().violations().is_empty());
    }

    #[test]
    fn every_violation_is_listed() {
        let mut c = ExperimentConfig::default();
        c.grid.nx = 2;
        c.params.nu = -1.0;
        c.noise.s_exp = 0.3;
        let v = c.violations();
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v[0].starts_with("grid.nx"));
    }

    #[test]
    fn regime_boundary_is_rejected() {
        let mut c = ExperimentConfig::default();
        c.params.alpha = (2.0 * c.params.nu * c.params.beta).sqrt();
        let v = c.violations();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("|alpha| < sqrt(2 nu beta)"));
    }

    #[test]
    fn toml_and_json_agree() {
        let toml_text = "kind = \"pullback\"\n[grid]\nnx = 32\nny = 8\n[params.forcing]\nkind = \"zero\"\n";
        let a: ExperimentConfig = toml::from_str(toml_text).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.kind, Some(Kind::Pullback));
        assert_eq!(a.params.forcing, ForcingConfig::Zero);
        assert_eq!(a.hash(), b.hash());
        assert!(toml::from_str::<ExperimentConfig>("[grid]\nnz = 3\n").is_err());
    }
}
