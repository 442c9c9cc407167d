//! Explicit projection scheme for the perturbation about the steady state.
//!
//! One step: Euler predictor for the velocity with centred flux-form
//! advection and the viscous operator `div(2 mu D)`, a Neumann pressure
//! solve that projects onto discretely divergence-free fields, then an
//! Euler update of the temperature perturbation driven by the corrected
//! velocity. The viscous heating `2 mu D:D` is formed once per step from
//! the corrected velocity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::functionals::{self, FunctionalTrace, TraceMeta};
use crate::grid::{
    advect_scalar, divergence, double_dot, face_dot, gradient, integrate, laplacian_dirichlet, sym_grad, Grid,
    ScalarBc, ScalarField, VectorField,
};
use crate::linalg::NeumannPoisson;
use crate::steady::{solve_steady, BoundaryProfile, SteadyState};
use crate::thermo::{ExponentPair, Material};

/// Material, grid and steady state shared by every step.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub material: Material,
    pub steady: SteadyState,
    poisson: NeumannPoisson,
}

impl Problem {
    pub fn new(grid: Grid, material: Material, profile: &BoundaryProfile, steady_tol: f64) -> Result<Self> {
        material.validate()?;
        let steady = solve_steady(grid, profile, steady_tol)?;
        Ok(Problem::from_steady(material, steady))
    }

    pub fn from_steady(material: Material, steady: SteadyState) -> Self {
        let grid = steady.theta_hat.grid;
        Problem { grid, material, poisson: NeumannPoisson::new(grid), steady }
    }

    pub fn theta_hat(&self) -> &ScalarField {
        &self.steady.theta_hat
    }
}

/// Velocity, temperature and pressure perturbations at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationState {
    pub t: f64,
    pub velocity: VectorField,
    pub theta: ScalarField,
    pub pressure: ScalarField,
}

impl PerturbationState {
    pub fn zeros(grid: Grid) -> Self {
        PerturbationState {
            t: 0.0,
            velocity: VectorField::zeros(grid),
            theta: ScalarField::zeros(grid),
            pressure: ScalarField::zeros(grid),
        }
    }

    /// Smallest `1 + theta_tilde / theta_hat` and the cell where it occurs.
    pub fn min_ratio(&self, theta_hat: &ScalarField) -> (f64, usize, usize) {
        let g = self.theta.grid;
        let mut best = (f64::INFINITY, 0, 0);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.cell(i, j);
                let r = 1.0 + self.theta.data[c] / theta_hat.data[c];
                if !(r >= best.0) {
                    best = (r, i, j);
                }
            }
        }
        best
    }
}

fn default_cfl() -> f64 {
    0.4
}
fn default_dt_max() -> f64 {
    1.0
}
fn default_projection_tol() -> f64 {
    1e-10
}
fn default_eps_pos() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_projection_tol")]
    pub projection_tol: f64,
    /// Smallest admissible `1 + theta_tilde / theta_hat`.
    #[serde(default = "default_eps_pos")]
    pub eps_pos: f64,
    /// Uniform step; rounded so that it divides the sample interval.
    #[serde(default)]
    pub fixed_dt: Option<f64>,
    /// Skips the `cfl_safety < 1` check. Only meant for provoking
    /// instabilities on purpose.
    #[serde(default)]
    pub allow_unstable: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            cfl_safety: default_cfl(),
            dt_max: default_dt_max(),
            projection_tol: default_projection_tol(),
            eps_pos: default_eps_pos(),
            fixed_dt: None,
            allow_unstable: false,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let cfl_ok = self.cfl_safety > 0.0 && (self.cfl_safety < 1.0 || self.allow_unstable);
        if !(cfl_ok && self.cfl_safety.is_finite()) {
            return Err(Error::Config(format!("step.cfl_safety must lie in (0, 1) (got {})", self.cfl_safety)));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::Config(format!("step.dt_max must be positive (got {})", self.dt_max)));
        }
        if !(self.projection_tol > 0.0 && self.projection_tol <= 1e-6) {
            return Err(Error::Config(format!(
                "step.projection_tol must lie in (0, 1e-6] (got {})",
                self.projection_tol
            )));
        }
        if !(self.eps_pos > 0.0 && self.eps_pos < 1.0) {
            return Err(Error::Config(format!("step.eps_pos must lie in (0, 1) (got {})", self.eps_pos)));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("step.fixed_dt must be positive (got {dt})")));
            }
        }
        Ok(())
    }
}

/// Streamfunction mode `amplitude sin(k pi x / lx) sin(l pi y / ly)`,
/// amplitude in m^2/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamMode {
    pub k: u32,
    pub l: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemperatureInit {
    Zero,
    /// Gaussian `amplitude exp(-|x - center|^2 / (2 width^2))`.
    Bump {
        center: [f64; 2],
        width: f64,
        amplitude: f64,
    },
    /// Sine series up to `modes` in each direction with coefficients
    /// decaying like `1/(k^2 + l^2)`, scaled to peak `amplitude`.
    RandomSmooth {
        modes: u32,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomVelocity {
    pub modes: u32,
    /// Largest face speed after scaling, m/s.
    pub peak_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPerturbation {
    #[serde(default)]
    pub velocity_modes: Vec<StreamMode>,
    #[serde(default)]
    pub random_velocity: Option<RandomVelocity>,
    #[serde(default = "zero_temperature")]
    pub temperature: TemperatureInit,
}

fn zero_temperature() -> TemperatureInit {
    TemperatureInit::Zero
}

impl InitialPerturbation {
    pub fn rest() -> Self {
        InitialPerturbation { velocity_modes: vec![], random_velocity: None, temperature: TemperatureInit::Zero }
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.velocity_modes {
            if m.k == 0 || m.l == 0 || !m.amplitude.is_finite() {
                return Err(Error::Config(format!(
                    "velocity mode ({}, {}) needs k, l >= 1 and a finite amplitude",
                    m.k, m.l
                )));
            }
        }
        if let Some(r) = &self.random_velocity {
            if r.modes == 0 || !(r.peak_speed.is_finite() && r.peak_speed >= 0.0) {
                return Err(Error::Config("random_velocity needs modes >= 1 and a nonnegative peak_speed".into()));
            }
        }
        match self.temperature {
            TemperatureInit::Zero => {}
            TemperatureInit::Bump { center, width, amplitude } => {
                if !(width > 0.0 && width.is_finite() && amplitude.is_finite() && center.iter().all(|c| c.is_finite()))
                {
                    return Err(Error::Config("temperature bump needs a positive width and finite parameters".into()));
                }
            }
            TemperatureInit::RandomSmooth { modes, amplitude } => {
                if modes == 0 || !amplitude.is_finite() {
                    return Err(Error::Config("random temperature needs modes >= 1 and a finite amplitude".into()));
                }
            }
        }
        Ok(())
    }

    /// Builds the initial state. Random parts draw from ChaCha8 seeded
    /// with `seed`.
    pub fn build(&self, problem: &Problem, eps_pos: f64, seed: u64) -> Result<PerturbationState> {
        self.validate()?;
        let g = problem.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lx, ly) = (g.lx, g.ly);
        let pi = std::f64::consts::PI;
        let modes = self.velocity_modes.clone();
        let mut velocity = VectorField::from_streamfunction(g, |x, y| {
            modes
                .iter()
                .map(|m| m.amplitude * (f64::from(m.k) * pi * x / lx).sin() * (f64::from(m.l) * pi * y / ly).sin())
                .sum()
        });
        if let Some(rv) = &self.random_velocity {
            let coeffs = random_coefficients(&mut rng, rv.modes);
            let mut extra = VectorField::from_streamfunction(g, |x, y| sine_series(&coeffs, rv.modes, x / lx, y / ly));
            let peak = extra.max_abs();
            if peak > 0.0 {
                extra.scale(rv.peak_speed / peak);
            }
            velocity.u.iter_mut().zip(&extra.u).for_each(|(a, b)| *a += b);
            velocity.v.iter_mut().zip(&extra.v).for_each(|(a, b)| *a += b);
        }
        velocity.enforce_no_penetration();
        let theta = match self.temperature {
            TemperatureInit::Zero => ScalarField::zeros(g),
            TemperatureInit::Bump { center, width, amplitude } => ScalarField::from_fn(g, |x, y| {
                let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                amplitude * (-d2 / (2.0 * width * width)).exp()
            }),
            TemperatureInit::RandomSmooth { modes, amplitude } => {
                let coeffs = random_coefficients(&mut rng, modes);
                let f = ScalarField::from_fn(g, |x, y| sine_series(&coeffs, modes, x / lx, y / ly));
                let peak = f.max_abs();
                if peak > 0.0 {
                    f.map(|a| a * amplitude / peak)
                } else {
                    f
                }
            }
        };
        let state = PerturbationState { t: 0.0, velocity, theta, pressure: ScalarField::zeros(g) };
        let (r, i, j) = state.min_ratio(problem.theta_hat());
        if !(r >= 10.0 * eps_pos) {
            return Err(Error::Positivity { t: 0.0, ratio: r, i, j });
        }
        Ok(state)
    }
}

fn random_coefficients(rng: &mut ChaCha8Rng, modes: u32) -> Vec<f64> {
    let mut c = Vec::with_capacity((modes * modes) as usize);
    for l in 1..=modes {
        for k in 1..=modes {
            let a: f64 = rng.gen_range(-1.0..1.0);
            c.push(a / f64::from(k * k + l * l));
        }
    }
    c
}

fn sine_series(coeffs: &[f64], modes: u32, xs: f64, ys: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut acc = 0.0;
    for l in 1..=modes {
        let sy = (f64::from(l) * pi * ys).sin();
        for k in 1..=modes {
            acc += coeffs[((l - 1) * modes + (k - 1)) as usize] * (f64::from(k) * pi * xs).sin() * sy;
        }
    }
    acc
}

/// Largest step allowed by the explicit scheme:
/// `cfl_safety * min(viscous, thermal, advective, cell-Peclet)`, capped by
/// `dt_max`. The last bound, `2 min(nu, alpha) / |v|^2`, keeps forward
/// Euler with centred advection stable when the cell Reynolds number
/// exceeds two.
pub fn stable_dt(problem: &Problem, state: &PerturbationState, control: &StepControl) -> f64 {
    let g = problem.grid;
    let mat = &problem.material;
    let inv_h2 = 1.0 / (g.hx() * g.hx()) + 1.0 / (g.hy() * g.hy());
    let nu = mat.kinematic_viscosity();
    let alpha = mat.thermal_diffusivity();
    let mut bound = (1.0 / (2.0 * nu * inv_h2)).min(1.0 / (2.0 * alpha * inv_h2));
    let vmax = state.velocity.max_abs();
    if vmax > 0.0 {
        bound = bound.min(g.hx().min(g.hy()) / vmax);
        bound = bound.min(2.0 * nu.min(alpha) / (vmax * vmax));
    }
    (control.cfl_safety * bound).min(control.dt_max)
}

/// Cell Reynolds number `|v|_max h / nu`.
pub fn cell_reynolds(problem: &Problem, state: &PerturbationState) -> f64 {
    let g = problem.grid;
    state.velocity.max_abs() * g.hx().max(g.hy()) / problem.material.kinematic_viscosity()
}

/// `(rho/2) |v|^2` integrated with trapezoid face weights.
pub fn kinetic_energy(problem: &Problem, velocity: &VectorField) -> f64 {
    0.5 * problem.material.rho * face_dot(velocity, velocity)
}

/// Cell-centred viscous heating `2 mu D:D`.
pub fn heating(problem: &Problem, velocity: &VectorField) -> ScalarField {
    let mu2 = 2.0 * problem.material.mu;
    double_dot(&sym_grad(velocity)).map(|a| mu2 * a)
}

/// Total viscous dissipation rate, W per unit depth.
pub fn dissipation(problem: &Problem, velocity: &VectorField) -> f64 {
    integrate(&heating(problem, velocity))
}

/// Centred flux-form advection `div(v v)` on the interior faces.
pub fn advection(v: &VectorField) -> VectorField {
    let g = v.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let u = |i: usize, j: usize| v.u[g.u_at(i, j)];
    let w = |i: usize, j: usize| v.v[g.v_at(i, j)];
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let fe = 0.5 * (u(i, j) + u(i + 1, j));
            let fw = 0.5 * (u(i - 1, j) + u(i, j));
            let fn_ =
                if j + 1 == g.ny { 0.0 } else { 0.25 * (w(i - 1, j + 1) + w(i, j + 1)) * (u(i, j) + u(i, j + 1)) };
            let fs = if j == 0 { 0.0 } else { 0.25 * (w(i - 1, j) + w(i, j)) * (u(i, j - 1) + u(i, j)) };
            out.u[g.u_at(i, j)] = (fe * fe - fw * fw) / hx + (fn_ - fs) / hy;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let fn_ = 0.5 * (w(i, j) + w(i, j + 1));
            let fs = 0.5 * (w(i, j - 1) + w(i, j));
            let fe = if i + 1 == g.nx { 0.0 } else { 0.25 * (u(i + 1, j - 1) + u(i + 1, j)) * (w(i, j) + w(i + 1, j)) };
            let fw = if i == 0 { 0.0 } else { 0.25 * (u(i, j - 1) + u(i, j)) * (w(i - 1, j) + w(i, j)) };
            out.v[g.v_at(i, j)] = (fe - fw) / hx + (fn_ * fn_ - fs * fs) / hy;
        }
    }
    out
}

/// `div(2 D(v))` on the interior faces with no-slip walls. Its face inner
/// product with `v` equals `-2 int D:D` exactly.
pub fn viscous(v: &VectorField) -> VectorField {
    let g = v.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let d = sym_grad(v);
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.u[g.u_at(i, j)] = 2.0 * (d.d11[g.cell(i, j)] - d.d11[g.cell(i - 1, j)]) / hx
                + 2.0 * (d.d12[g.corner(i, j + 1)] - d.d12[g.corner(i, j)]) / hy;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.v[g.v_at(i, j)] = 2.0 * (d.d12[g.corner(i + 1, j)] - d.d12[g.corner(i, j)]) / hx
                + 2.0 * (d.d22[g.cell(i, j)] - d.d22[g.cell(i, j - 1)]) / hy;
        }
    }
    out
}

/// Right-hand side of the unprojected momentum equation.
pub fn momentum_rhs(problem: &Problem, v: &VectorField) -> VectorField {
    let nu = problem.material.kinematic_viscosity();
    let a = advection(v);
    let mut out = viscous(v);
    for (o, a) in out.u.iter_mut().zip(&a.u) {
        *o = nu * *o - a;
    }
    for (o, a) in out.v.iter_mut().zip(&a.v) {
        *o = nu * *o - a;
    }
    out
}

/// Time derivative of the temperature perturbation for a given velocity.
pub fn temperature_rhs(problem: &Problem, theta: &ScalarField, v: &VectorField, heat: &ScalarField) -> ScalarField {
    let rc = problem.material.heat_capacity();
    let kappa = problem.material.kappa_ref;
    let adv = advect_scalar(v, theta, ScalarBc::Zero);
    let adv_hat = advect_scalar(v, problem.theta_hat(), problem.steady.bc());
    let lap = laplacian_dirichlet(theta, None);
    let mut out = ScalarField::zeros(problem.grid);
    for k in 0..out.data.len() {
        out.data[k] = -adv.data[k] - adv_hat.data[k] + (kappa * lap.data[k] + heat.data[k]) / rc;
    }
    out
}

/// Diagnostics of one completed step.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub dt: f64,
    pub divergence_max: f64,
    pub projection_residual: f64,
}

/// Projects `v` onto discretely divergence-free fields; returns the
/// projected field, the pressure and the solver residual.
pub fn project(problem: &Problem, v: &VectorField, dt: f64, tol: f64) -> Result<(VectorField, ScalarField, f64)> {
    let g = problem.grid;
    let rho = problem.material.rho;
    let rhs = divergence(v).map(|d| d * rho / dt);
    let (p, res) = problem.poisson.solve(&rhs, tol)?;
    let gp = gradient(&p, ScalarBc::Neumann);
    let mut out = v.clone();
    let s = dt / rho;
    for j in 0..g.ny {
        for i in 1..g.nx {
            let k = g.u_at(i, j);
            out.u[k] -= s * gp.u[k];
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let k = g.v_at(i, j);
            out.v[k] -= s * gp.v[k];
        }
    }
    Ok((out, p, res))
}

/// Advances the state by `dt`.
pub fn step(
    problem: &Problem,
    state: &PerturbationState,
    dt: f64,
    control: &StepControl,
) -> Result<(PerturbationState, StepInfo)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(domain(format!("time step must be positive (got {dt})")));
    }
    let t = state.t + dt;
    let f = momentum_rhs(problem, &state.velocity);
    let mut pred = state.velocity.clone();
    pred.u.iter_mut().zip(&f.u).for_each(|(a, b)| *a += dt * b);
    pred.v.iter_mut().zip(&f.v).for_each(|(a, b)| *a += dt * b);
    if !pred.is_finite() {
        return Err(Error::BlowUp { t, field: "velocity" });
    }
    let (velocity, pressure, res) = project(problem, &pred, dt, control.projection_tol)?;
    let divergence_max = divergence(&velocity).max_abs();
    if !(divergence_max <= 10.0 * control.projection_tol) {
        if !divergence_max.is_finite() {
            return Err(Error::BlowUp { t, field: "velocity" });
        }
        return Err(Error::Solver {
            solver: "pressure projection",
            iterations: 0,
            last: divergence_max,
            history: vec![res],
        });
    }
    let heat = heating(problem, &velocity);
    let rate = temperature_rhs(problem, &state.theta, &velocity, &heat);
    let theta = state.theta.zip_map(&rate, |a, b| a + dt * b);
    if !theta.is_finite() {
        return Err(Error::BlowUp { t, field: "temperature" });
    }
    let next = PerturbationState { t, velocity, theta, pressure };
    let (r, i, j) = next.min_ratio(problem.theta_hat());
    if !(r >= control.eps_pos) {
        return Err(Error::Positivity { t, ratio: r, i, j });
    }
    Ok((next, StepInfo { dt, divergence_max, projection_residual: res }))
}

/// Time window and sampling of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_end: f64,
    pub sample_interval: f64,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive (got {})", self.t_end)));
        }
        if !(self.sample_interval > 0.0 && self.sample_interval <= self.t_end) {
            return Err(Error::Config(format!(
                "sample_interval must lie in (0, t_end] (got {})",
                self.sample_interval
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.t_end / self.sample_interval).round() as usize
    }
}

/// What is sampled along a run.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub pair: ExponentPair,
    pub l_values: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: FunctionalTrace,
    pub final_state: PerturbationState,
    pub steps: usize,
    pub max_divergence: f64,
    pub initial_cell_reynolds: f64,
}

/// Failure part-way through a run, with the samples taken so far.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: FunctionalTrace,
    pub last_state: PerturbationState,
}

/// Integrates from `initial` to `schedule.t_end`, recording functional
/// samples at `t = 0, interval, 2 interval, ...`.
pub fn run(
    problem: &Problem,
    initial: PerturbationState,
    control: &StepControl,
    schedule: &Schedule,
    monitor: &Monitor,
) -> std::result::Result<RunOutput, Box<RunFailure>> {
    let meta = TraceMeta::new(problem, monitor, schedule.sample_interval);
    let mut trace = FunctionalTrace::new(meta);
    let fail = |error: Error, trace: FunctionalTrace, state: PerturbationState| {
        Box::new(RunFailure { error, partial: trace, last_state: state })
    };
    if let Err(e) = control.validate().and_then(|_| schedule.validate()) {
        return Err(fail(e, trace, initial));
    }
    let re = cell_reynolds(problem, &initial);
    if re > 2.0 {
        log::warn!("cell Reynolds number {re:.2} exceeds 2; centred advection may show grid-scale wiggles");
    }
    let mut state = initial;
    let mut dissipated = 0.0;
    let mut diss_now = dissipation(problem, &state.velocity);
    match functionals::sample(problem, &state, monitor, diss_now, dissipated) {
        Ok(s) => trace.samples.push(s),
        Err(e) => return Err(fail(e, trace, state)),
    }
    let n_samples = schedule.n_samples();
    let mut steps = 0;
    let mut max_div: f64 = 0.0;
    for k in 1..=n_samples {
        let t_next = k as f64 * schedule.sample_interval;
        let mut n_sub_fixed = None;
        if let Some(dt) = control.fixed_dt {
            n_sub_fixed = Some(((schedule.sample_interval / dt).round() as usize).max(1));
        }
        let mut sub = 0;
        loop {
            let remaining = t_next - state.t;
            let (dt, last) = match n_sub_fixed {
                Some(n) => (schedule.sample_interval / n as f64, sub + 1 == n),
                None => {
                    let limit = stable_dt(problem, &state, control);
                    let n = (remaining / limit).ceil().max(1.0);
                    (remaining / n, n <= 1.0)
                }
            };
            match step(problem, &state, dt, control) {
                Ok((mut next, info)) => {
                    if last {
                        next.t = t_next;
                    }
                    let diss_next = dissipation(problem, &next.velocity);
                    dissipated += 0.5 * dt * (diss_now + diss_next);
                    diss_now = diss_next;
                    max_div = max_div.max(info.divergence_max);
                    state = next;
                    steps += 1;
                    sub += 1;
                }
                Err(e) => return Err(fail(e, trace, state)),
            }
            if last {
                break;
            }
        }
        match functionals::sample(problem, &state, monitor, diss_now, dissipated) {
            Ok(s) => trace.samples.push(s),
            Err(e) => return Err(fail(e, trace, state)),
        }
    }
    Ok(RunOutput { trace, final_state: state, steps, max_divergence: max_div, initial_cell_reynolds: re })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady::BoundaryProfile;
    use std::f64::consts::PI;

    fn problem(n: usize, mu: f64, kappa: f64) -> Problem {
        let mat = Material { rho: 1000.0, mu, cv_ref: 4180.0, kappa_ref: kappa, theta_ref: 300.0, vartheta_ref: None };
        Problem::new(Grid::unit_square(n).unwrap(), mat, &BoundaryProfile::LinearX { base: 300.0, delta: 20.0 }, 1e-12)
            .unwrap()
    }

    fn swirl(g: Grid, peak: f64) -> VectorField {
        VectorField::from_streamfunction(g, |x, y| peak / PI * (PI * x).sin() * (PI * y).sin())
    }

    #[test]
    fn advection_is_energy_neutral_for_divergence_free_fields() {
        let g = Grid::new(16, 12, 1.0, 0.8).unwrap();
        let v = VectorField::from_streamfunction(g, |x, y| {
            (PI * x).sin() * (2.0 * PI * y / 0.8).sin() + 0.3 * (2.0 * PI * x).sin().powi(2) * (PI * y / 0.8).sin()
        });
        let a = advection(&v);
        let scale = face_dot(&a, &a).sqrt() * face_dot(&v, &v).sqrt();
        assert!(face_dot(&v, &a).abs() < 1e-13 * scale);
    }

    #[test]
    fn viscous_operator_dissipates_exactly() {
        let g = Grid::unit_square(12).unwrap();
        let mut v = VectorField::from_fn(g, |x, y| ((PI * x).sin() * (2.0 * y).cos(), x * y * (1.0 - y)));
        v.enforce_no_penetration();
        let lhs = face_dot(&v, &viscous(&v));
        let rhs = -2.0 * integrate(&double_dot(&sym_grad(&v)));
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
    }

    #[test]
    fn stable_dt_scaling() {
        let p = problem(16, 0.1, 60.0);
        let c = StepControl { dt_max: 1e9, ..StepControl::default() };
        let rest = PerturbationState::zeros(p.grid);
        let dt16 = stable_dt(&p, &rest, &c);
        let p32 = problem(32, 0.1, 60.0);
        let dt32 = stable_dt(&p32, &PerturbationState::zeros(p32.grid), &c);
        assert!((dt16 / dt32 - 4.0).abs() < 1e-12);
        let pv = problem(16, 0.2, 1.0);
        let pv2 = problem(16, 0.4, 1.0);
        let r = stable_dt(&pv, &rest, &c) / stable_dt(&pv2, &rest, &c);
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rest_state_is_a_fixed_point() {
        let p = problem(16, 0.1, 60.0);
        let mut s = PerturbationState::zeros(p.grid);
        let c = StepControl::default();
        for _ in 0..100 {
            let dt = stable_dt(&p, &s, &c);
            s = step(&p, &s, dt, &c).unwrap().0;
        }
        assert!(s.theta.max_abs() < 1e-12 && s.velocity.max_abs() < 1e-12);
    }

    #[test]
    fn heat_eigenmode_decays_at_the_continuum_rate() {
        let mat =
            Material { rho: 1000.0, mu: 0.1, cv_ref: 4180.0, kappa_ref: 600.0, theta_ref: 300.0, vartheta_ref: None };
        let p = Problem::new(Grid::unit_square(64).unwrap(), mat, &BoundaryProfile::Constant { value: 300.0 }, 1e-10)
            .unwrap();
        let mut s = PerturbationState::zeros(p.grid);
        s.theta = ScalarField::from_fn(p.grid, |x, y| (PI * x).sin() * (PI * y).sin());
        let c = StepControl::default();
        let a0 = integrate(&s.theta);
        let t_end = 100.0;
        while s.t < t_end - 1e-12 {
            let dt = stable_dt(&p, &s, &c).min(t_end - s.t);
            s = step(&p, &s, dt, &c).unwrap().0;
        }
        let rate = -(integrate(&s.theta) / a0).ln() / t_end;
        let exact = mat.thermal_diffusivity() * 2.0 * PI * PI;
        assert!((rate / exact - 1.0).abs() < 0.02, "rate {rate} vs {exact}");
    }

    #[test]
    fn step_stays_divergence_free_and_heats() {
        let mat =
            Material { rho: 1000.0, mu: 0.1, cv_ref: 4180.0, kappa_ref: 60.0, theta_ref: 300.0, vartheta_ref: None };
        let p = Problem::new(Grid::unit_square(32).unwrap(), mat, &BoundaryProfile::Constant { value: 300.0 }, 1e-10)
            .unwrap();
        let mut s = PerturbationState::zeros(p.grid);
        s.velocity = swirl(p.grid, 0.05);
        let c = StepControl::default();
        let dt = stable_dt(&p, &s, &c);
        let (next, info) = step(&p, &s, dt, &c).unwrap();
        assert!(info.divergence_max < 1e-12);
        assert!(kinetic_energy(&p, &next.velocity) < kinetic_energy(&p, &s.velocity));
        let expected = heating(&p, &next.velocity).map(|q| dt * q / mat.heat_capacity());
        for (a, b) in next.theta.data.iter().zip(&expected.data) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1e-300));
            assert!(*a >= 0.0);
        }
        assert!(next.theta.max() > 0.0);
    }

    #[test]
    fn oversized_step_aborts_with_numerical_error() {
        let p = problem(16, 0.1, 600.0);
        let mut s = PerturbationState::zeros(p.grid);
        s.theta = ScalarField::from_fn(p.grid, |x, y| 30.0 * (PI * x).sin() * (PI * y).sin());
        let c = StepControl { cfl_safety: 10.0, allow_unstable: true, dt_max: 1e9, ..StepControl::default() };
        let mut res = Ok(());
        for _ in 0..2000 {
            let dt = stable_dt(&p, &s, &c);
            match step(&p, &s, dt, &c) {
                Ok((n, _)) => s = n,
                Err(e) => {
                    res = Err(e);
                    break;
                }
            }
        }
        let e = res.unwrap_err();
        assert_eq!(e.category(), crate::ErrorCategory::Numerical, "{e}");
    }

    #[test]
    fn initial_conditions_are_reproducible_and_positive() {
        let p = problem(16, 0.1, 60.0);
        let init = InitialPerturbation {
            velocity_modes: vec![],
            random_velocity: Some(RandomVelocity { modes: 3, peak_speed: 0.02 }),
            temperature: TemperatureInit::RandomSmooth { modes: 4, amplitude: 10.0 },
        };
        let a = init.build(&p, 1e-10, 7).unwrap();
        let b = init.build(&p, 1e-10, 7).unwrap();
        let c = init.build(&p, 1e-10, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.theta, c.theta);
        assert!((a.theta.max_abs() - 10.0).abs() < 1e-12);
        assert!(divergence(&a.velocity).max_abs() < 1e-12);
        let cold = InitialPerturbation {
            temperature: TemperatureInit::Bump { center: [0.5, 0.5], width: 0.1, amplitude: -400.0 },
            ..InitialPerturbation::rest()
        };
        assert!(matches!(cold.build(&p, 1e-10, 0), Err(Error::Positivity { .. })));
    }
}
