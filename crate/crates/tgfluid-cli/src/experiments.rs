//! The seven experiments. Each writes its artifacts into the output
//! directory and returns a JSON summary with an overall verdict.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tgfluid::attractor::{
    absorbing_radius_estimate, invariant_measure_estimate, markov_probe, pullback_clouds, tail_decay_study,
    InitSet, InvariantOptions, Observable, PullbackResult,
};
use tgfluid::leray::{divergence, project, StokesEigenbasis};
use tgfluid::mesh::{build_grid, norms, sym_gradient, sym_gradient_adjoint, Grid, TensorField, VelocityField};
use tgfluid::noise::{make_noise_spec, ou_diagnostics, ou_path, NoiseSpec, OUPath};
use tgfluid::operators::{
    calibrate, conv_raw, convection, k_identity_residual, monotonicity_gap, op_k, trilinear, trilinear_bound,
    Calibration, CalibrationOptions, OperatorConstants,
};
use tgfluid::par::ExecMode;
use tgfluid::sampling::{centered_bump, varied_smooth_field, white_field};
use tgfluid::solver::{
    energy_residual, pressure_along, recompose, save_checkpoint, Integrator, PhysParams, SolverOptions, Trajectory,
};

use crate::config::{ExperimentConfig, ForcingConfig};

const K_PAIRING_REL: f64 = 1e-10;
const K_IDENTITY_REL: f64 = 1e-9;
const CONVECTION_REL: f64 = 1e-12;
const SKEW_REL: f64 = 1e-11;
const DIVERGENCE_REL: f64 = 1e-10;
const IDEMPOTENCE_REL: f64 = 1e-12;
const LEDGER_ALPHA_REL: f64 = 1e-10;
const PRESSURE_SOLENOIDAL: f64 = 1e-9;
const PRESSURE_CURL: f64 = 1e-8;
const OU_MOMENT_REL: f64 = 0.05;
const OU_KS_LEVEL: f64 = 0.01;
const OU_SHIFT_STEPS: i64 = 37;
const SEMIDISTANCE_FLOOR: f64 = 1e-10;
const TAIL_DRIFT_CELLS: f64 = 2.0;
const INIT_MAX_MODE: usize = 3;

/// Verdict and summary of one experiment.
pub struct Outcome {
    pub passed: bool,
    pub results: Value,
    /// Human-readable lines for the terminal.
    pub lines: Vec<String>,
}

/// Everything derived from the config that several experiments share.
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub mode: ExecMode,
    pub grid: Arc<Grid>,
}

impl Setup {
    pub fn new(cfg: ExperimentConfig, out: PathBuf, mode: ExecMode) -> Result<Self> {
        let g = &cfg.grid;
        let grid = Arc::new(build_grid(g.lx, g.ly, g.nx, g.ny)?);
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Setup { cfg, out, mode, grid })
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn basis(&self) -> Result<Arc<StokesEigenbasis>> {
        let m = self.cfg.noise.basis_size.max(self.cfg.noise.n_modes);
        Ok(Arc::new(StokesEigenbasis::load_or_compute(&self.out.join("cache"), &self.grid, m)?))
    }

    fn forcing(&self) -> Result<VelocityField> {
        Ok(match &self.cfg.params.forcing {
            ForcingConfig::Zero => VelocityField::zeros(&self.grid),
            ForcingConfig::Bump { radius, amplitude } => centered_bump(&self.grid, *radius, *amplitude),
            ForcingConfig::File { path } => VelocityField::load(path)
                .with_context(|| format!("loading forcing {}", path.display()))?
                .with_grid(&self.grid)?,
            ForcingConfig::Divergence { path } => divergence_forcing(&self.grid, path)?,
        })
    }

    fn params(&self) -> Result<PhysParams> {
        let p = &self.cfg.params;
        Ok(PhysParams::new(p.nu, p.alpha, p.beta, p.chi, self.forcing()?)?)
    }

    fn spec(&self, basis: &Arc<StokesEigenbasis>) -> Result<NoiseSpec> {
        let n = &self.cfg.noise;
        Ok(make_noise_spec(basis, n.n_modes, n.s_exp, n.r_exp)?.with_amplitude(n.amplitude))
    }

    fn solver_opts(&self, store_every: usize) -> SolverOptions {
        SolverOptions::default().with_dt(self.cfg.run.dt).storing_every(store_every)
    }

    fn init_set(&self, n_members: usize) -> InitSet {
        InitSet {
            radius: self.cfg.run.init_radius,
            n_members,
            seed: self.cfg.noise.seed,
            max_mode: INIT_MAX_MODE,
        }
    }

    /// `t` rounded to the time lattice of the run.
    fn on_lattice(&self, t: f64) -> f64 {
        let dt = self.cfg.run.dt;
        (t / dt).round() * dt
    }

    fn calibration(&self, basis: &StokesEigenbasis, params: &PhysParams) -> Result<Calibration> {
        let c = &self.cfg.calibration;
        let opts = CalibrationOptions { n_samples: c.n_samples, seed: c.seed, safety: c.safety };
        Ok(calibrate(&self.grid, basis.lambda_hat(), params.eps0(), opts, self.mode)?)
    }

    /// Constants from `calibration.constants_file` when given, otherwise
    /// calibrated for this grid and parameter set.
    fn constants(&self, basis: &StokesEigenbasis, params: &PhysParams) -> Result<OperatorConstants> {
        let Some(file) = &self.cfg.calibration.constants_file else {
            return Ok(self.calibration(basis, params)?.constants);
        };
        let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        let cal: Calibration =
            serde_json::from_str(&text).with_context(|| format!("parsing constants {}", file.display()))?;
        let k = cal.constants;
        k.validate()?;
        if (k.eps0 - params.eps0()).abs() > 1e-12 || (k.lambda_hat - basis.lambda_hat()).abs() > 1e-9 * k.lambda_hat {
            bail!(
                "constants in {} were calibrated for eps0 = {}, lambda_hat = {}; this run has eps0 = {}, lambda_hat = {}",
                file.display(),
                k.eps0,
                k.lambda_hat,
                params.eps0(),
                basis.lambda_hat()
            );
        }
        Ok(k)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StressFile {
    a11: Vec<f64>,
    a12: Vec<f64>,
    a22: Vec<f64>,
}

/// Leray-projected representative of `w ↦ −∫T : ∇w`. For symmetric `T`
/// this pairing equals `−½∫T : A(w)`, the adjoint of the symmetric gradient.
fn divergence_forcing(grid: &Arc<Grid>, path: &Path) -> Result<VelocityField> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let s: StressFile = serde_json::from_str(&text).with_context(|| format!("parsing stress {}", path.display()))?;
    let n = grid.n_cells();
    if s.a11.len() != n || s.a12.len() != n || s.a22.len() != n {
        bail!("stress file {} must hold {n} values per component", path.display());
    }
    let t = TensorField { grid: Arc::clone(grid), a11: s.a11, a12: s.a12, a22: s.a22 };
    Ok(project(&sym_gradient_adjoint(&t).scaled(-0.5)))
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

#[derive(Serialize)]
struct PressureSummary {
    states: usize,
    solenoidal_part: f64,
    curl_rel: f64,
    passed: bool,
}

fn pressure_summary(traj: &Trajectory, path: &OUPath, params: &PhysParams) -> Result<Option<PressureSummary>> {
    if traj.states.len() < 3 {
        return Ok(None);
    }
    let diag = pressure_along(traj, Some(path), params)?;
    let solenoidal_part = max_of(diag.iter().map(|d| d.solenoidal_part));
    let curl_rel = max_of(diag.iter().map(|d| d.curl_rel));
    Ok(Some(PressureSummary {
        states: diag.len(),
        solenoidal_part,
        curl_rel,
        passed: solenoidal_part <= PRESSURE_SOLENOIDAL && curl_rel <= PRESSURE_CURL,
    }))
}

/// Forward run from a random initial state of norm `run.init_radius`.
pub fn simulate(s: &Setup) -> Result<Outcome> {
    let basis = s.basis()?;
    let params = s.params()?;
    let spec = s.spec(&basis)?;
    let r = &s.cfg.run;
    let seed = s.cfg.noise.seed;
    let t_end = s.on_lattice(r.t_end).max(r.dt);
    let path = ou_path(&spec, params.chi, params.nu, 0.0, t_end, r.dt, seed)?;
    let x0 = s.init_set(1).sample(&s.grid).remove(0);
    let y0 = &x0 - &path.field_at_index(0)?;
    let traj = Integrator::new(params.clone(), s.solver_opts(r.store_every))?.integrate(&y0, Some(&path), 0.0, t_end)?;
    let states = recompose(&traj, Some(&path))?;

    let mut csv = String::from("t,y_l2,z_l2,v_l2,v_w14\n");
    for (k, (y, v)) in traj.states.iter().zip(&states).enumerate() {
        let z = path.l2_at_index(traj.steps[k]).unwrap_or(f64::NAN);
        let n = norms(v);
        writeln!(csv, "{},{},{},{},{}", traj.times[k], y.norm_l2(), z, n.l2, n.w14)?;
    }
    s.write("trajectory.csv", csv)?;
    save_checkpoint(&s.out.join("checkpoint"), &traj, &params, Some(seed))?;
    states.last().expect("nonempty").save(&s.out.join("final_state.bin"))?;
    path.save(&s.out.join("noise_path.bin"))?;

    let residual = energy_residual(&traj);
    let pressure = pressure_summary(&traj, &path, &params)?;
    let passed = pressure.as_ref().is_none_or(|p| p.passed);
    let final_l2 = states.last().expect("nonempty").norm_l2();
    let mut lines = vec![format!(
        "{} steps to t = {t_end}: final |v|_2 = {final_l2:.6e}, max energy residual {:.3e} (ledger scale {:.3e})",
        traj.stats.steps, residual.max, residual.scale
    )];
    if let Some(p) = &pressure {
        lines.push(format!(
            "pressure recovery over {} states: solenoidal part {:.2e}, curl {:.2e} [{}]",
            p.states,
            p.solenoidal_part,
            p.curl_rel,
            verdict(p.passed)
        ));
    }
    Ok(Outcome {
        passed,
        results: json!({
            "t_end": t_end,
            "steps": traj.stats.steps,
            "substeps": traj.stats.substeps,
            "stored_states": traj.states.len(),
            "initial_l2": x0.norm_l2(),
            "final_l2": final_l2,
            "energy_residual": residual,
            "pressure": pressure,
        }),
        lines,
    })
}

#[derive(Serialize)]
struct Suite {
    name: &'static str,
    passed: usize,
    total: usize,
    /// Largest relative defect (or smallest margin) seen.
    worst: f64,
}

impl Suite {
    fn ok(&self) -> bool {
        self.passed == self.total
    }
}

fn identity_suite(s: &Setup, rng: &mut ChaCha8Rng) -> Suite {
    let n = s.cfg.properties.n_fields;
    let fields: Vec<VelocityField> = (0..n).map(|_| varied_smooth_field(&s.grid, rng, 0.05, 20.0)).collect();
    let mut passed = 0;
    let mut worst = 0.0f64;
    for (i, v) in fields.iter().enumerate() {
        let u = &fields[(i + 1) % n];
        let w = &fields[(i + 2) % n];
        let quartic = 0.5 * sym_gradient(v).norm_l4_pow4();
        let defects = [
            rel(op_k(v).dot(v), quartic, quartic) / K_PAIRING_REL,
            k_identity_residual(u, v, 1.0) / K_IDENTITY_REL,
            convection(u, v).dot(v).abs() / (conv_raw(u, v).norm_l2() * v.norm_l2()) / CONVECTION_REL,
            (trilinear(u, v, w) + trilinear(u, w, v)).abs() / trilinear_bound(u, v, w) / SKEW_REL,
        ];
        let d = max_of(defects);
        worst = worst.max(d);
        if d <= 1.0 {
            passed += 1;
        }
    }
    Suite { name: "operator identities", passed, total: n, worst }
}

fn monotonicity_suite(
    s: &Setup,
    rng: &mut ChaCha8Rng,
    params: &PhysParams,
    consts: &OperatorConstants,
) -> Result<Suite> {
    let n = s.cfg.properties.n_triples;
    let mut passed = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..n {
        let y1 = varied_smooth_field(&s.grid, rng, 0.01, 10.0);
        let y2 = varied_smooth_field(&s.grid, rng, 0.01, 10.0);
        let z = varied_smooth_field(&s.grid, rng, 0.01, 10.0);
        let gap = monotonicity_gap(&y1, &y2, &z, params, consts)?;
        if gap.lhs >= gap.rhs && gap.rhs >= 0.0 {
            passed += 1;
        }
        worst = worst.min(gap.lhs / gap.rhs);
    }
    Ok(Suite { name: "monotonicity", passed, total: n, worst })
}

fn projection_suite(s: &Setup, rng: &mut ChaCha8Rng) -> Suite {
    let n = s.cfg.properties.n_fields;
    let mut passed = 0;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let w = white_field(&s.grid, rng);
        let p = project(&w);
        let scale = w.norm_l2();
        let div = max_of(divergence(&p).iter().map(|d| d.abs())) / scale / DIVERGENCE_REL;
        let idem = (&project(&p) - &p).norm_l2() / scale / IDEMPOTENCE_REL;
        let d = div.max(idem);
        worst = worst.max(d);
        if d <= 1.0 {
            passed += 1;
        }
    }
    Suite { name: "projection", passed, total: n, worst }
}

fn shift_suite(s: &Setup, spec: &NoiseSpec, params: &PhysParams) -> Result<Suite> {
    let dt = s.cfg.run.dt;
    let n_steps = 400i64;
    let path = ou_path(spec, params.chi, params.nu, 0.0, n_steps as f64 * dt, dt, s.cfg.noise.seed)?;
    let shifts = [1i64, 2, 7, OU_SHIFT_STEPS, 100, -3, -50];
    let mut passed = 0;
    for k in shifts {
        let shifted = path.shift(k as f64 * dt)?;
        let (lo, hi) = (path.start_index(), path.start_index() + n_steps);
        let (from, to) = (lo.max(lo - k), hi.min(hi - k));
        if (from..=to).all(|i| shifted.coeffs_at_index(i) == path.coeffs_at_index(i + k)) {
            passed += 1;
        }
    }
    Ok(Suite { name: "noise shift", passed, total: shifts.len(), worst: 0.0 })
}

/// Energy ledger signs and pressure recovery along a short forced run.
fn run_suites(s: &Setup, spec: &NoiseSpec, params: &PhysParams) -> Result<(Suite, Suite)> {
    let dt = s.cfg.run.dt;
    let t_end = s.on_lattice(s.cfg.run.t_end.min(50.0 * dt)).max(2.0 * dt);
    let seed = s.cfg.noise.seed;
    let path = ou_path(spec, params.chi, params.nu, 0.0, t_end, dt, seed)?;
    let x0 = s.init_set(1).sample(&s.grid).remove(0);
    let y0 = &x0 - &path.field_at_index(0)?;
    let traj = Integrator::new(params.clone(), s.solver_opts(1))?.integrate(&y0, Some(&path), 0.0, t_end)?;

    let scale = energy_residual(&traj).scale.max(f64::MIN_POSITIVE);
    let mut passed = 0;
    let mut worst = 0.0f64;
    for row in &traj.ledger {
        let d = (row.alpha_tr.abs() / scale) / LEDGER_ALPHA_REL;
        worst = worst.max(d);
        if row.visc >= 0.0 && row.beta_l4 >= 0.0 && d <= 1.0 {
            passed += 1;
        }
    }
    let ledger = Suite { name: "energy ledger", passed, total: traj.ledger.len(), worst };

    let diag = pressure_along(&traj, Some(&path), params)?;
    let mut passed = 0;
    let mut worst = 0.0f64;
    for d in &diag {
        let x = (d.solenoidal_part / PRESSURE_SOLENOIDAL).max(d.curl_rel / PRESSURE_CURL);
        worst = worst.max(x);
        if x <= 1.0 {
            passed += 1;
        }
    }
    let pressure = Suite { name: "pressure", passed, total: diag.len(), worst };
    Ok((ledger, pressure))
}

/// Randomized checks of the operator identities and structural properties.
pub fn properties(s: &Setup) -> Result<Outcome> {
    let basis = s.basis()?;
    let params = s.params()?;
    let spec = s.spec(&basis)?;
    let consts = s.constants(&basis, &params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.cfg.properties.seed);
    let mut suites = vec![
        identity_suite(s, &mut rng),
        monotonicity_suite(s, &mut rng, &params, &consts)?,
        projection_suite(s, &mut rng),
        shift_suite(s, &spec, &params)?,
    ];
    let (ledger, pressure) = run_suites(s, &spec, &params)?;
    suites.push(ledger);
    suites.push(pressure);

    let mut csv = String::from("suite,passed,total,worst\n");
    for suite in &suites {
        writeln!(csv, "{},{},{},{}", suite.name, suite.passed, suite.total, suite.worst)?;
    }
    s.write("properties.csv", csv)?;
    let lines = suites
        .iter()
        .map(|x| format!("{:<20} {:>5}/{:<5} [{}]", x.name, x.passed, x.total, verdict(x.ok())))
        .collect();
    Ok(Outcome {
        passed: suites.iter().all(Suite::ok),
        results: json!({ "eps0": params.eps0(), "constants": consts, "suites": suites }),
        lines,
    })
}

fn pullback_run(s: &Setup, params: &PhysParams, spec: &NoiseSpec) -> Result<(OUPath, PullbackResult)> {
    let r = &s.cfg.run;
    let window = s.on_lattice(r.window);
    let path = ou_path(spec, params.chi, params.nu, -window, 0.0, r.dt, s.cfg.noise.seed)?;
    let inits = s.init_set(r.n_members).sample(&s.grid);
    let res = pullback_clouds(&path, params, &r.horizons, &inits, &s.solver_opts(0), s.mode)?;
    Ok((path, res))
}

/// Pullback clouds for growing horizons and the absorbing-ball check.
pub fn pullback(s: &Setup) -> Result<Outcome> {
    let basis = s.basis()?;
    let params = s.params()?;
    let spec = s.spec(&basis)?;
    let consts = s.constants(&basis, &params)?;
    let (path, res) = pullback_run(s, &params, &spec)?;
    let ball = absorbing_radius_estimate(&path, &params, &consts)?;

    let mut rows = Vec::new();
    let mut csv = String::from("horizon,member,l2,w14\n");
    let (mut qualified, mut outside) = (0usize, 0usize);
    for (n, &h) in res.horizons.iter().enumerate() {
        let t_abs = ball.absorption_time(res.start_norms[n]);
        let absorbed = h >= t_abs;
        let inside = res.radii[n] <= ball.kappa13;
        if absorbed {
            qualified += 1;
            if !inside {
                outside += 1;
            }
        }
        rows.push(json!({
            "horizon": h,
            "radius": res.radii[n],
            "start_norm": res.start_norms[n],
            "absorption_time": t_abs,
            "absorbed": absorbed,
            "inside_ball": inside,
        }));
        for (v, &m) in res.clouds[n].iter().zip(&res.members[n]) {
            let nv = norms(v);
            writeln!(csv, "{h},{m},{},{}", nv.l2, nv.w14)?;
        }
    }
    s.write("clouds.csv", csv)?;
    let dir = s.out.join("clouds");
    fs::create_dir_all(&dir)?;
    if let (Some(cloud), Some(members)) = (res.clouds.last(), res.members.last()) {
        for (v, m) in cloud.iter().zip(members) {
            v.save(&dir.join(format!("member_{m}.bin")))?;
        }
    }

    let sd = &res.semidistances;
    let scale = max_of(res.radii.iter().copied());
    let settling = sd.len() < 2 || sd[sd.len() - 1] <= sd[sd.len() - 2] + SEMIDISTANCE_FLOOR * scale;
    let passed = res.failures.is_empty() && outside == 0 && settling;
    let lines = vec![
        format!(
            "absorbing ball kappa13 = {:.4e} (rate c = {:.4}, window tail share {:.2e})",
            ball.kappa13, ball.rate, ball.tail_fraction
        ),
        format!(
            "{qualified} absorbed clouds, {outside} outside the ball, semidistances {:?}",
            sd.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()
        ),
        format!("{} member failures [{}]", res.failures.len(), verdict(passed)),
    ];
    Ok(Outcome {
        passed,
        results: json!({
            "ball": ball,
            "constants": consts,
            "horizons": rows,
            "semidistances": sd,
            "semidistances_settling": settling,
            "failures": res.failures,
        }),
        lines,
    })
}

/// Weighted tail masses of the pullback clouds and the drift of `k₀(ε)`.
pub fn tails(s: &Setup) -> Result<Outcome> {
    if s.cfg.run.horizons.len() < 2 {
        bail!("tails needs at least two horizons in run.horizons");
    }
    let basis = s.basis()?;
    let params = s.params()?;
    let spec = s.spec(&basis)?;
    let (_, res) = pullback_run(s, &params, &spec)?;
    let h = s.grid.h_min();
    let ks: Vec<f64> = (1..=s.cfg.run.tail_cells).map(|i| i as f64 * h).collect();
    let study = tail_decay_study(&res, &ks, &s.cfg.run.tail_epsilons)?;

    let mut csv = String::from("horizon,k,max_mass\n");
    for (n, &hz) in res.horizons.iter().enumerate() {
        for (j, &k) in ks.iter().enumerate() {
            writeln!(csv, "{hz},{k},{}", study.max_mass[n][j])?;
        }
    }
    s.write("tails.csv", csv)?;

    let last = study.k0.len() - 1;
    let mut lines = Vec::new();
    let mut passed = res.failures.is_empty();
    for (e, eps) in study.epsilons.iter().enumerate() {
        let ok = study.k0[last - 1][e].is_some()
            && study.k0[last][e].is_some()
            && study.drift_cells[e].is_some_and(|d| d <= TAIL_DRIFT_CELLS);
        passed &= ok;
        lines.push(format!(
            "eps = {eps:e}: k0 = {:?} across horizons, drift {:?} cells [{}]",
            study.k0.iter().map(|row| row[e]).collect::<Vec<_>>(),
            study.drift_cells[e],
            verdict(ok)
        ));
    }
    Ok(Outcome {
        passed,
        results: json!({ "study": study, "failures": res.failures }),
        lines,
    })
}

fn observable_name(o: &Observable) -> String {
    match o {
        Observable::Constant => "constant".into(),
        Observable::Energy => "energy".into(),
        Observable::TanhEnergy { scale } => format!("tanh_energy(scale={scale})"),
        Observable::Mode { index } => format!("mode({index})"),
    }
}

/// Time averages under the invariant measure and the Markov probe.
pub fn invariant_measure(s: &Setup) -> Result<Outcome> {
    let basis = s.basis()?;
    let params = s.params()?;
    let spec = s.spec(&basis)?;
    let r = &s.cfg.run;
    let seed = s.cfg.noise.seed;
    let init = s.init_set(1).sample(&s.grid).remove(0);
    let observables = [
        Observable::Energy,
        Observable::TanhEnergy { scale: r.tanh_scale },
        Observable::Mode { index: 0 },
    ];
    let iopts = InvariantOptions {
        burn_in: r.burn_in,
        horizon: r.horizon,
        shift: 0.0,
        n_omega: r.n_omega,
        sample_every: r.store_every,
        master_seed: seed,
    };
    let report = invariant_measure_estimate(&params, &spec, &init, &observables, iopts, &s.solver_opts(0), s.mode)?;
    let probe = if r.markov_t1 + r.markov_t2 > 0.0 {
        Some(markov_probe(
            Observable::TanhEnergy { scale: r.tanh_scale },
            s.on_lattice(r.markov_t1),
            s.on_lattice(r.markov_t2),
            r.n_omega,
            r.markov_inner,
            &init,
            &params,
            &spec,
            seed,
            &s.solver_opts(0),
            s.mode,
        )?)
    } else {
        None
    };

    let mut csv = String::from("observable,average,average_se,shifted,shifted_se,dispersion,invariant\n");
    let mut lines = Vec::new();
    for o in &report.observables {
        let name = observable_name(&o.observable);
        writeln!(
            csv,
            "{name},{},{},{},{},{},{}",
            o.average.mean, o.average.std_error, o.shifted.mean, o.shifted.std_error, o.dispersion, o.invariant
        )?;
        lines.push(format!(
            "{name}: {:.5e} +- {:.1e} vs shifted {:.5e} +- {:.1e} [{}]",
            o.average.mean,
            o.average.std_error,
            o.shifted.mean,
            o.shifted.std_error,
            verdict(o.invariant)
        ));
    }
    s.write("observables.csv", csv)?;
    if let Some(p) = &probe {
        lines.push(format!(
            "Markov probe: direct {:.5e} +- {:.1e}, nested {:.5e} +- {:.1e} [{}]",
            p.direct.mean,
            p.direct.std_error,
            p.nested.mean,
            p.nested.std_error,
            verdict(p.agrees)
        ));
    }
    let passed = report.observables.iter().all(|o| o.invariant) && probe.as_ref().is_none_or(|p| p.agrees);
    Ok(Outcome {
        passed,
        results: json!({ "invariant_measure": report, "markov": probe }),
        lines,
    })
}

/// Empirical operator constants; `λ̂` is the first Stokes eigenvalue.
pub fn calibrate_constants(s: &Setup) -> Result<Outcome> {
    let basis = s.basis()?;
    let params = s.params()?;
    let cal = s.calibration(&basis, &params)?;
    s.write("constants.json", serde_json::to_string_pretty(&cal)?)?;
    let mu1 = basis.eigenvalues[0];
    let k = &cal.constants;
    let lines = vec![
        format!("C_K = {:.6}, C_S3 = {:.6}, C_tri = {:.6}", k.c_k, k.c_s3, k.c_tri),
        format!(
            "witnesses {}, {}, {} of {} samples; lambda_hat = mu_1 = {mu1:.8}",
            cal.witness_c_k, cal.witness_c_s3, cal.witness_c_tri, cal.n_samples
        ),
    ];
    Ok(Outcome {
        passed: k.lambda_hat == mu1,
        results: json!({ "calibration": cal, "mu1": mu1 }),
        lines,
    })
}

/// Moments, autocorrelation and transition law of every noise mode.
pub fn ou_diagnostics_run(s: &Setup) -> Result<Outcome> {
    if s.cfg.noise.amplitude == 0.0 {
        bail!("ou-diagnostics needs a positive noise.amplitude");
    }
    let basis = s.basis()?;
    let spec = s.spec(&basis)?;
    let (nu, chi) = (s.cfg.params.nu, s.cfg.params.chi);
    let o = &s.cfg.ou;
    let slowest = 1.0 / spec.rates(nu, chi).into_iter().fold(f64::INFINITY, f64::min);
    let dt = slowest / o.steps_per_relaxation as f64;
    let n_steps = (o.relaxation_times * o.steps_per_relaxation as f64).round();
    let path = ou_path(&spec, chi, nu, 0.0, n_steps * dt, dt, s.cfg.noise.seed)?;

    let ks_level = OU_KS_LEVEL / spec.n_modes as f64;
    let mut csv = String::from(
        "mode,rate,mean,variance,expected_variance,lag,autocorrelation,expected_autocorrelation,ks_pvalue\n",
    );
    let mut modes = Vec::new();
    let mut lines = Vec::new();
    let mut passed = true;
    for j in 0..spec.n_modes {
        let d = ou_diagnostics(&path, j, o.lag_steps, o.ks_samples);
        let var_err = rel(d.variance, d.expected_variance, d.expected_variance);
        let ac_err = rel(d.autocorrelation, d.expected_autocorrelation, d.expected_autocorrelation);
        let ok = var_err <= OU_MOMENT_REL && ac_err <= OU_MOMENT_REL && d.ks_pvalue >= ks_level;
        passed &= ok;
        writeln!(
            csv,
            "{j},{},{},{},{},{},{},{},{}",
            d.rate, d.mean, d.variance, d.expected_variance, d.lag, d.autocorrelation, d.expected_autocorrelation, d.ks_pvalue
        )?;
        lines.push(format!(
            "mode {j}: variance off by {var_err:.3}, autocorrelation off by {ac_err:.3}, KS p = {:.3} [{}]",
            d.ks_pvalue,
            verdict(ok)
        ));
        modes.push(json!({ "diagnostics": d, "variance_rel_error": var_err, "autocorrelation_rel_error": ac_err, "passed": ok }));
    }
    s.write("ou.csv", csv)?;

    let shifted = path.shift(OU_SHIFT_STEPS as f64 * dt)?;
    let (lo, hi) = (path.start_index(), path.start_index() + path.n_times() as i64 - 1);
    let shift_exact = (lo..=hi - OU_SHIFT_STEPS).all(|k| shifted.coeffs_at_index(k) == path.coeffs_at_index(k + OU_SHIFT_STEPS));
    passed &= shift_exact;
    lines.push(format!("shift by {OU_SHIFT_STEPS} steps relabels samples exactly [{}]", verdict(shift_exact)));
    Ok(Outcome {
        passed,
        results: json!({
            "dt": dt,
            "steps": n_steps,
            "slowest_relaxation_time": slowest,
            "ks_level": ks_level,
            "modes": modes,
            "shift_exact": shift_exact,
        }),
        lines,
    })
}
