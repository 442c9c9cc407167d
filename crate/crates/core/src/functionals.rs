//! Lyapunov-type functionals of the perturbation and the formulas for
//! their time derivatives.
//!
//! Every thermal integrand is written in terms of the ratio
//! `r = 1 + theta_tilde / theta_hat`. Gradient terms are evaluated on the
//! faces with trapezoid weights and face-averaged `theta_hat`; heating
//! terms use the cell-centred `2 mu D:D`; coupling terms use the
//! cell-centred `v . grad theta_hat`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::evolution::{dissipation, heating, kinetic_energy, temperature_rhs, Monitor, PerturbationState, Problem};
use crate::grid::{
    advect_scalar, face_dot, face_product_to_centre, face_values, gradient, integrate, laplacian_dirichlet, Grid,
    ScalarBc, ScalarField, VectorField,
};
use crate::lemmas::{gap_f_unchecked, pow_m1_over};
use crate::thermo::{ExponentPair, Material};

/// Ratio field `1 + theta_tilde / theta_hat`; fails if it is not positive.
pub fn ratio(problem: &Problem, theta: &ScalarField) -> Result<ScalarField> {
    let r = theta.zip_map(problem.theta_hat(), |a, b| 1.0 + a / b);
    if let Some(k) = r.data.iter().position(|&v| !(v > 0.0)) {
        return Err(domain(format!("1 + theta_tilde/theta_hat = {} in cell {k}", r.data[k])));
    }
    Ok(r)
}

fn thermal_integral(problem: &Problem, theta: &ScalarField, f: impl Fn(f64) -> f64) -> Result<f64> {
    let rc = problem.material.heat_capacity();
    let r = ratio(problem, theta)?;
    let integrand = r.zip_map(problem.theta_hat(), |r, th| rc * th * f(r));
    Ok(integrate(&integrand))
}

/// `int rho c_V theta_hat (x - ln(1+x)) + KE`.
pub fn v_meq(problem: &Problem, state: &PerturbationState) -> Result<f64> {
    Ok(thermal_integral(problem, &state.theta, |r| (r - 1.0) - r.ln())? + kinetic_energy(problem, &state.velocity))
}

/// `int rho c_V theta_hat (x - ((1+x)^m - 1)/m) + KE`.
pub fn v_meq_theta_m(problem: &Problem, state: &PerturbationState, m: f64) -> Result<f64> {
    if !(m > 0.0 && m < 1.0) {
        return Err(domain(format!("exponent must lie in (0, 1) (got {m})")));
    }
    Ok(thermal_integral(problem, &state.theta, |r| (r - 1.0) - pow_m1_over(r, m))?
        + kinetic_energy(problem, &state.velocity))
}

/// Difference of the two power functionals, integrated directly.
pub fn y_mn(problem: &Problem, state: &PerturbationState, pair: ExponentPair) -> Result<f64> {
    thermal_integral(problem, &state.theta, |r| gap_f_unchecked(r, pair.m, pair.n))
}

/// `int rho c_V theta_hat |ln(1+x)|^l`, the `l`-th power of the relative
/// entropy weighted by `theta_hat`.
pub fn rel_entropy_norm(problem: &Problem, state: &PerturbationState, l: u32) -> Result<f64> {
    thermal_integral(problem, &state.theta, |r| r.ln().abs().powi(l as i32))
}

fn hadamard(a: &VectorField, b: &VectorField) -> VectorField {
    VectorField {
        grid: a.grid,
        u: a.u.iter().zip(&b.u).map(|(x, y)| x * y).collect(),
        v: a.v.iter().zip(&b.v).map(|(x, y)| x * y).collect(),
    }
}

/// `int theta_hat |grad d|^2` for a cell field vanishing on the walls.
fn weighted_grad_sq(problem: &Problem, d: &ScalarField) -> f64 {
    let th_face = face_values(problem.theta_hat(), problem.steady.bc());
    let g = gradient(d, ScalarBc::Zero);
    face_dot(&hadamard(&th_face, &g), &g)
}

/// `v . grad theta_hat` at the cell centres.
pub fn steady_advection(problem: &Problem, v: &VectorField) -> ScalarField {
    advect_scalar(v, problem.theta_hat(), problem.steady.bc())
}

/// Terms of the log-functional derivative, each as it enters
/// `dV/dt = diffusive + dissipative + coupling`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRhs {
    /// `-int kappa theta_hat |grad ln r|^2`.
    pub diffusive: f64,
    /// `-int 2 mu D:D / r`.
    pub dissipative: f64,
    /// `int rho theta_hat v . grad s_diff = -int rho (v . grad theta_hat) s_diff`.
    pub coupling: f64,
}

impl LogRhs {
    pub fn total(&self) -> f64 {
        self.diffusive + self.dissipative + self.coupling
    }
    pub fn magnitude(&self) -> f64 {
        self.diffusive.abs() + self.dissipative.abs() + self.coupling.abs()
    }
}

pub fn v_meq_dot_rhs(problem: &Problem, state: &PerturbationState) -> Result<LogRhs> {
    let mat = &problem.material;
    let r = ratio(problem, &state.theta)?;
    let ln_r = r.map(f64::ln);
    let diffusive = -mat.kappa_ref * weighted_grad_sq(problem, &ln_r);
    let heat = heating(problem, &state.velocity);
    let dissipative = -integrate(&heat.zip_map(&r, |q, r| q / r));
    let adv = steady_advection(problem, &state.velocity);
    let coupling = -integrate(&adv.zip_map(&ln_r, |a, l| mat.rho * mat.cv_ref * a * l));
    Ok(LogRhs { diffusive, dissipative, coupling })
}

/// The coupling term written as `int rho theta_hat v . grad s_diff`.
pub fn coupling_gradient_form(problem: &Problem, state: &PerturbationState) -> Result<f64> {
    let mat = &problem.material;
    let r = ratio(problem, &state.theta)?;
    let s = r.map(|r| mat.cv_ref * r.ln());
    let adv = advect_scalar(&state.velocity, &s, ScalarBc::Zero);
    Ok(integrate(&adv.zip_map(problem.theta_hat(), |a, th| mat.rho * th * a)))
}

/// Terms of the power-functional derivative,
/// `dV/dt = -gradient - dissipative + coupling`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRhs {
    /// `4 (1-m)/m^2 int kappa theta_hat |grad d_m|^2`, `d_m = r^{m/2} - 1`.
    pub gradient: f64,
    /// `int 2 mu D:D / r^{1-m}`.
    pub dissipative: f64,
    /// `-int rho c_V (v . grad theta_hat) (1-m)/m (r^m - 1)`.
    pub coupling: f64,
}

impl PowerRhs {
    pub fn total(&self) -> f64 {
        -self.gradient - self.dissipative + self.coupling
    }
    pub fn magnitude(&self) -> f64 {
        self.gradient.abs() + self.dissipative.abs() + self.coupling.abs()
    }
}

fn half_power(r: &ScalarField, p: f64) -> ScalarField {
    r.map(|r| (0.5 * p * r.ln()).exp_m1())
}

pub fn v_meq_theta_m_dot_rhs(problem: &Problem, state: &PerturbationState, m: f64) -> Result<PowerRhs> {
    if !(m > 0.0 && m < 1.0) {
        return Err(domain(format!("exponent must lie in (0, 1) (got {m})")));
    }
    let mat = &problem.material;
    let r = ratio(problem, &state.theta)?;
    let gradient = 4.0 * (1.0 - m) / (m * m) * mat.kappa_ref * weighted_grad_sq(problem, &half_power(&r, m));
    let heat = heating(problem, &state.velocity);
    let dissipative = integrate(&heat.zip_map(&r, |q, r| q * r.powf(m - 1.0)));
    let adv = steady_advection(problem, &state.velocity);
    let rc = mat.heat_capacity();
    let coupling = -integrate(&adv.zip_map(&r, |a, r| rc * a * (1.0 - m) * pow_m1_over(r, m)));
    Ok(PowerRhs { gradient, dissipative, coupling })
}

/// Exact time derivatives of the discrete log, `m` and `n` functionals
/// along the semi-discrete flow, by the chain rule through the cell
/// temperature rate. The derivative formulas approach these as `h -> 0`.
pub fn semi_discrete_derivatives(problem: &Problem, state: &PerturbationState, pair: ExponentPair) -> Result<[f64; 3]> {
    let rc = problem.material.heat_capacity();
    let r = ratio(problem, &state.theta)?;
    let heat = heating(problem, &state.velocity);
    let rate = temperature_rhs(problem, &state.theta, &state.velocity, &heat);
    let diss = dissipation(problem, &state.velocity);
    let along = |fp: &dyn Fn(f64) -> f64| integrate(&r.zip_map(&rate, |r, d| rc * fp(r) * d)) - diss;
    Ok([
        along(&|r| 1.0 - 1.0 / r),
        along(&|r| -((pair.m - 1.0) * r.ln()).exp_m1()),
        along(&|r| -((pair.n - 1.0) * r.ln()).exp_m1()),
    ])
}

/// Decay rate in the bound `dY/dt <= -K Y + H`:
/// `4 n (1-m) kappa / (m^2 C_P) * min theta_hat / max theta_hat`, divided
/// by `rho c_V` so that it is a rate in 1/s. The second value omits that
/// division.
pub fn k_mn(problem: &Problem, pair: ExponentPair) -> (f64, f64) {
    let (m, n) = (pair.m, pair.n);
    let s = &problem.steady;
    let raw = 4.0 * n * (1.0 - m) * problem.material.kappa_ref / (m * m * s.poincare) * s.theta_min / s.theta_max;
    (raw / problem.material.heat_capacity(), raw)
}

/// Remainder `H^{m,n}` in the bound `dY/dt <= -K Y + H`.
pub fn h_mn(problem: &Problem, state: &PerturbationState, pair: ExponentPair) -> Result<f64> {
    let (m, n) = (pair.m, pair.n);
    let r = ratio(problem, &state.theta)?;
    let gdn = weighted_grad_sq(problem, &half_power(&r, n));
    let coef = 4.0 * (1.0 - m) / (m * m) + 4.0 * (1.0 - n) / (n * n);
    let pm = v_meq_theta_m_dot_rhs(problem, state, m)?;
    let pn = v_meq_theta_m_dot_rhs(problem, state, n)?;
    Ok(coef * problem.material.kappa_ref * gdn
        + pm.dissipative
        + pn.dissipative
        + pm.coupling.abs()
        + pn.coupling.abs())
}

/// Size below which integrated thermal quantities are indistinguishable
/// from rounding: `1e-12 rho c_V max theta_hat |Omega|`.
pub fn quadrature_eps(problem: &Problem) -> f64 {
    1e-12 * problem.material.heat_capacity() * problem.steady.theta_max * problem.grid.area()
}

/// Run-level constants stored alongside the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub grid: Grid,
    pub material: Material,
    pub pair: ExponentPair,
    pub l_values: Vec<u32>,
    pub k_mn: f64,
    pub k_mn_unnormalized: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub poincare: f64,
    pub quad_eps: f64,
    pub sample_interval: f64,
}

impl TraceMeta {
    pub fn new(problem: &Problem, monitor: &Monitor, sample_interval: f64) -> Self {
        let (k, k_raw) = k_mn(problem, monitor.pair);
        TraceMeta {
            grid: problem.grid,
            material: problem.material,
            pair: monitor.pair,
            l_values: monitor.l_values.clone(),
            k_mn: k,
            k_mn_unnormalized: k_raw,
            theta_min: problem.steady.theta_min,
            theta_max: problem.steady.theta_max,
            poincare: problem.steady.poincare,
            quad_eps: quadrature_eps(problem),
            sample_interval,
        }
    }
}

/// One row of the trace. Energies in J and rates in W, per unit depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub t: f64,
    pub v_meq: f64,
    pub v_meq_theta_m: f64,
    pub v_meq_theta_n: f64,
    pub y_mn: f64,
    pub ke: f64,
    pub dissipation: f64,
    pub weighted_dissipation_m: f64,
    pub weighted_dissipation_n: f64,
    pub grad_dthm_term: f64,
    pub grad_dthn_term: f64,
    pub coupling_term_m: f64,
    pub coupling_term_n: f64,
    pub h_mn: f64,
    /// `int s_diff^2`.
    pub sdiff_l2: f64,
    pub vmeq_diffusive: f64,
    pub vmeq_dissipative: f64,
    pub vmeq_coupling: f64,
    /// `int theta_tilde^2`.
    pub theta_l2: f64,
    /// `int kappa |grad theta_tilde|^2`.
    pub em_grad: f64,
    /// `int 2 mu D:D theta_tilde`.
    pub em_heating: f64,
    /// `int rho c_V (v . grad theta_hat) theta_tilde`.
    pub em_coupling: f64,
    /// Running time integral of the dissipation.
    pub dissipated_energy: f64,
    /// One entry per monitored `l`.
    pub rel_entropy: Vec<f64>,
}

impl FunctionalSample {
    pub const FIXED_COLUMNS: [&'static str; 23] = [
        "t",
        "v_meq",
        "v_meq_theta_m",
        "v_meq_theta_n",
        "y_mn",
        "ke",
        "dissipation",
        "weighted_dissipation_m",
        "weighted_dissipation_n",
        "grad_dthm_term",
        "grad_dthn_term",
        "coupling_term_m",
        "coupling_term_n",
        "h_mn",
        "sdiff_l2",
        "vmeq_diffusive",
        "vmeq_dissipative",
        "vmeq_coupling",
        "theta_l2",
        "em_grad",
        "em_heating",
        "em_coupling",
        "dissipated_energy",
    ];

    pub fn fixed_values(&self) -> [f64; 23] {
        [
            self.t,
            self.v_meq,
            self.v_meq_theta_m,
            self.v_meq_theta_n,
            self.y_mn,
            self.ke,
            self.dissipation,
            self.weighted_dissipation_m,
            self.weighted_dissipation_n,
            self.grad_dthm_term,
            self.grad_dthn_term,
            self.coupling_term_m,
            self.coupling_term_n,
            self.h_mn,
            self.sdiff_l2,
            self.vmeq_diffusive,
            self.vmeq_dissipative,
            self.vmeq_coupling,
            self.theta_l2,
            self.em_grad,
            self.em_heating,
            self.em_coupling,
            self.dissipated_energy,
        ]
    }

    pub fn from_values(fixed: &[f64], rel_entropy: Vec<f64>) -> Option<Self> {
        let v: &[f64; 23] = fixed.try_into().ok()?;
        Some(FunctionalSample {
            t: v[0],
            v_meq: v[1],
            v_meq_theta_m: v[2],
            v_meq_theta_n: v[3],
            y_mn: v[4],
            ke: v[5],
            dissipation: v[6],
            weighted_dissipation_m: v[7],
            weighted_dissipation_n: v[8],
            grad_dthm_term: v[9],
            grad_dthn_term: v[10],
            coupling_term_m: v[11],
            coupling_term_n: v[12],
            h_mn: v[13],
            sdiff_l2: v[14],
            vmeq_diffusive: v[15],
            vmeq_dissipative: v[16],
            vmeq_coupling: v[17],
            theta_l2: v[18],
            em_grad: v[19],
            em_heating: v[20],
            em_coupling: v[21],
            dissipated_energy: v[22],
            rel_entropy,
        })
    }

    /// `dV^{m}/dt` from the recorded terms.
    pub fn power_rhs_m(&self) -> f64 {
        -self.grad_dthm_term - self.weighted_dissipation_m + self.coupling_term_m
    }

    pub fn power_rhs_n(&self) -> f64 {
        -self.grad_dthn_term - self.weighted_dissipation_n + self.coupling_term_n
    }

    pub fn log_rhs(&self) -> f64 {
        self.vmeq_diffusive + self.vmeq_dissipative + self.vmeq_coupling
    }
}

/// Evaluates every monitored quantity on `state`.
pub fn sample(
    problem: &Problem,
    state: &PerturbationState,
    monitor: &Monitor,
    dissipation_now: f64,
    dissipated_energy: f64,
) -> Result<FunctionalSample> {
    let pair = monitor.pair;
    let mat = &problem.material;
    let ke = kinetic_energy(problem, &state.velocity);
    let log = v_meq_dot_rhs(problem, state)?;
    let pm = v_meq_theta_m_dot_rhs(problem, state, pair.m)?;
    let pn = v_meq_theta_m_dot_rhs(problem, state, pair.n)?;
    let r = ratio(problem, &state.theta)?;
    let heat = heating(problem, &state.velocity);
    let adv = steady_advection(problem, &state.velocity);
    let rel_entropy =
        monitor.l_values.iter().map(|&l| rel_entropy_norm(problem, state, l)).collect::<Result<Vec<_>>>()?;
    let gt = gradient(&state.theta, ScalarBc::Zero);
    Ok(FunctionalSample {
        t: state.t,
        v_meq: v_meq(problem, state)?,
        v_meq_theta_m: v_meq_theta_m(problem, state, pair.m)?,
        v_meq_theta_n: v_meq_theta_m(problem, state, pair.n)?,
        y_mn: y_mn(problem, state, pair)?,
        ke,
        dissipation: dissipation_now,
        weighted_dissipation_m: pm.dissipative,
        weighted_dissipation_n: pn.dissipative,
        grad_dthm_term: pm.gradient,
        grad_dthn_term: pn.gradient,
        coupling_term_m: pm.coupling,
        coupling_term_n: pn.coupling,
        h_mn: h_mn(problem, state, pair)?,
        sdiff_l2: integrate(&r.map(|r| (mat.cv_ref * r.ln()).powi(2))),
        vmeq_diffusive: log.diffusive,
        vmeq_dissipative: log.dissipative,
        vmeq_coupling: log.coupling,
        theta_l2: integrate(&state.theta.map(|a| a * a)),
        em_grad: mat.kappa_ref * face_dot(&gt, &gt),
        em_heating: integrate(&heat.zip_map(&state.theta, |q, t| q * t)),
        em_coupling: integrate(&adv.zip_map(&state.theta, |a, t| mat.heat_capacity() * a * t)),
        dissipated_energy,
        rel_entropy,
    })
}

/// Samples at a uniform spacing together with the run constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalTrace {
    pub meta: TraceMeta,
    pub samples: Vec<FunctionalSample>,
}

impl FunctionalTrace {
    pub fn new(meta: TraceMeta) -> Self {
        FunctionalTrace { meta, samples: Vec::new() }
    }

    pub fn column(&self, f: impl Fn(&FunctionalSample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    /// Central difference of a column at interior sample `k`.
    pub fn central_difference(&self, k: usize, f: impl Fn(&FunctionalSample) -> f64) -> Option<f64> {
        if k == 0 || k + 1 >= self.samples.len() {
            return None;
        }
        let (a, b) = (&self.samples[k - 1], &self.samples[k + 1]);
        Some((f(b) - f(a)) / (b.t - a.t))
    }

    /// Index of the sample closest to time `t`.
    pub fn index_near(&self, t: f64) -> Option<usize> {
        (0..self.samples.len()).min_by(|&a, &b| (self.samples[a].t - t).abs().total_cmp(&(self.samples[b].t - t).abs()))
    }
}

/// Result of testing `dY/dt <= -K Y + H` along a trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityReport {
    pub samples_checked: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    /// Largest `(dY/dt + K Y - H) / (|K Y| + H + eps)`.
    pub max_normalized_excess: f64,
    /// Same count with `K` left without the `1/(rho c_V)` factor.
    pub violations_unnormalized_k: usize,
    /// Violations of the weaker companion bound `dY/dt <= K Y + H`.
    pub companion_violations: usize,
    pub tolerance: f64,
}

/// Checks the differential inequality with central differences at the
/// interior samples. A sample counts as a violation when the normalised
/// excess exceeds `tolerance`.
pub fn differential_inequality_check(trace: &FunctionalTrace, tolerance: f64) -> InequalityReport {
    let meta = &trace.meta;
    let eps = meta.quad_eps;
    let mut report = InequalityReport {
        samples_checked: 0,
        violations: 0,
        violation_fraction: 0.0,
        max_normalized_excess: f64::NEG_INFINITY,
        violations_unnormalized_k: 0,
        companion_violations: 0,
        tolerance,
    };
    for k in 1..trace.samples.len().saturating_sub(1) {
        let dy = trace.central_difference(k, |s| s.y_mn).unwrap_or(0.0);
        let s = &trace.samples[k];
        let excess = |kk: f64, sign: f64| (dy - (sign * kk * s.y_mn + s.h_mn)) / ((kk * s.y_mn).abs() + s.h_mn + eps);
        let e = excess(meta.k_mn, -1.0);
        report.samples_checked += 1;
        report.max_normalized_excess = report.max_normalized_excess.max(e);
        if e > tolerance {
            report.violations += 1;
        }
        if excess(meta.k_mn_unnormalized, -1.0) > tolerance {
            report.violations_unnormalized_k += 1;
        }
        if excess(meta.k_mn, 1.0) > tolerance {
            report.companion_violations += 1;
        }
    }
    if report.samples_checked > 0 {
        report.violation_fraction = report.violations as f64 / report.samples_checked as f64;
    } else {
        report.max_normalized_excess = 0.0;
    }
    report
}

/// Central-difference derivative against the formula at one sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub t: f64,
    pub measured: f64,
    pub formula: f64,
    /// Sum of the absolute values of the formula's terms.
    pub scale: f64,
}

impl DerivativeCheck {
    pub fn mismatch(&self) -> f64 {
        self.measured - self.formula
    }
    pub fn relative(&self) -> f64 {
        self.mismatch().abs() / self.scale.max(f64::MIN_POSITIVE)
    }
}

/// Derivative checks for the log functional and both power functionals
/// at interior sample `k`.
pub fn derivative_checks(trace: &FunctionalTrace, k: usize) -> Option<[DerivativeCheck; 3]> {
    let s = trace.samples.get(k)?;
    let log = DerivativeCheck {
        t: s.t,
        measured: trace.central_difference(k, |s| s.v_meq)?,
        formula: s.log_rhs(),
        scale: s.vmeq_diffusive.abs() + s.vmeq_dissipative.abs() + s.vmeq_coupling.abs(),
    };
    let m = DerivativeCheck {
        t: s.t,
        measured: trace.central_difference(k, |s| s.v_meq_theta_m)?,
        formula: s.power_rhs_m(),
        scale: s.grad_dthm_term.abs() + s.weighted_dissipation_m.abs() + s.coupling_term_m.abs(),
    };
    let n = DerivativeCheck {
        t: s.t,
        measured: trace.central_difference(k, |s| s.v_meq_theta_n)?,
        formula: s.power_rhs_n(),
        scale: s.grad_dthn_term.abs() + s.weighted_dissipation_n.abs() + s.coupling_term_n.abs(),
    };
    Some([log, m, n])
}

/// Entropy-like weight `f(r)` in the pointwise identity for `theta_hat f(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightChoice {
    /// `r - 1 - ln r`.
    Log,
    /// `r - 1 - (r^m - 1)/m`.
    Power { m: f64 },
}

impl WeightChoice {
    fn eval(&self, r: f64) -> (f64, f64, f64) {
        match *self {
            WeightChoice::Log => ((r - 1.0) - r.ln(), 1.0 - 1.0 / r, 1.0 / (r * r)),
            WeightChoice::Power { m } => {
                ((r - 1.0) - pow_m1_over(r, m), -((m - 1.0) * r.ln()).exp_m1(), (1.0 - m) * r.powf(m - 2.0))
            }
        }
    }
}

/// The two sides of the pointwise identity for `w = theta_hat f(r)`.
struct PointwiseTerms {
    /// `kappa lap w - kappa theta_hat f'' |grad r|^2 + f' 2 mu D:D + rho c_V (f - f' r) v . grad theta_hat`.
    source: ScalarField,
    w: ScalarField,
}

fn pointwise_terms(
    problem: &Problem,
    theta: &ScalarField,
    velocity: &VectorField,
    f: WeightChoice,
) -> Result<PointwiseTerms> {
    let mat = &problem.material;
    let th = problem.theta_hat();
    let r = ratio(problem, theta)?;
    let vals: Vec<(f64, f64, f64)> = r.data.iter().map(|&r| f.eval(r)).collect();
    let w = ScalarField { grid: problem.grid, data: vals.iter().zip(&th.data).map(|(v, t)| t * v.0).collect() };
    let lap = laplacian_dirichlet(&w, None);
    let x = theta.zip_map(th, |a, b| a / b);
    let gx = gradient(&x, ScalarBc::Zero);
    let grad_r2 = face_product_to_centre(&gx, &gx);
    let heat = heating(problem, velocity);
    let adv_hat = steady_advection(problem, velocity);
    let rc = mat.heat_capacity();
    let mut source = ScalarField::zeros(problem.grid);
    for (k, &(fv, fp, fpp)) in vals.iter().enumerate() {
        source.data[k] = mat.kappa_ref * lap.data[k] - mat.kappa_ref * th.data[k] * fpp * grad_r2.data[k]
            + fp * heat.data[k]
            + rc * (fv - fp * r.data[k]) * adv_hat.data[k];
    }
    Ok(PointwiseTerms { source, w })
}

/// Cell-wise residual of the pointwise identity
/// `rho c_V D_t w = source` between two consecutive states, using the
/// velocity of `after` as the transport velocity.
pub fn pointwise_residual_check(
    problem: &Problem,
    before: &PerturbationState,
    after: &PerturbationState,
    f: WeightChoice,
) -> Result<ScalarField> {
    let dt = after.t - before.t;
    if !(dt > 0.0) {
        return Err(domain("states must be ordered in time"));
    }
    let rc = problem.material.heat_capacity();
    let terms = pointwise_terms(problem, &before.theta, &after.velocity, f)?;
    let w_after = pointwise_terms(problem, &after.theta, &after.velocity, f)?.w;
    let adv = advect_scalar(&after.velocity, &terms.w, ScalarBc::Zero);
    let mut out = ScalarField::zeros(problem.grid);
    for k in 0..out.data.len() {
        let dwdt = (w_after.data[k] - terms.w.data[k]) / dt;
        out.data[k] = rc * (dwdt + adv.data[k]) - terms.source.data[k];
    }
    Ok(out)
}

/// Domain integral of the pointwise source for the log weight minus the
/// kinetic dissipation; reproduces [`v_meq_dot_rhs`] up to quadrature.
pub fn integrated_log_source(problem: &Problem, state: &PerturbationState) -> Result<f64> {
    let terms = pointwise_terms(problem, &state.theta, &state.velocity, WeightChoice::Log)?;
    Ok(integrate(&terms.source) - dissipation(problem, &state.velocity))
}

/// Balance of `int theta_tilde^2` under three readings of the energy
/// method identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyMethodReport {
    /// `rho c_V d/dt int theta^2` against `-grad + heating + coupling`.
    pub as_printed: f64,
    /// Halved left side, coupling sign unchanged.
    pub half_corrected: f64,
    /// Halved left side and coupling entering with a minus sign.
    pub corrected: f64,
    pub samples_checked: usize,
}

/// Largest normalised residual of each reading over the interior samples.
pub fn energy_method_diagnostic(trace: &FunctionalTrace) -> EnergyMethodReport {
    let rc = trace.meta.material.heat_capacity();
    let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
    let mut checked = 0;
    for k in 1..trace.samples.len().saturating_sub(1) {
        let s = &trace.samples[k];
        let d = trace.central_difference(k, |s| s.theta_l2).unwrap_or(0.0);
        let scale = s.em_grad.abs() + s.em_heating.abs() + s.em_coupling.abs() + f64::MIN_POSITIVE;
        let base = -s.em_grad + s.em_heating;
        a = a.max((rc * d - (base + s.em_coupling)).abs() / scale);
        b = b.max((0.5 * rc * d - (base + s.em_coupling)).abs() / scale);
        c = c.max((0.5 * rc * d - (base - s.em_coupling)).abs() / scale);
        checked += 1;
    }
    EnergyMethodReport { as_printed: a, half_corrected: b, corrected: c, samples_checked: checked }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{stable_dt, step, StepControl};
    use crate::grid::VectorField;
    use crate::steady::BoundaryProfile;
    use std::f64::consts::PI;

    fn setup(profile: BoundaryProfile) -> Problem {
        let mat =
            Material { rho: 1000.0, mu: 0.1, cv_ref: 4180.0, kappa_ref: 600.0, theta_ref: 300.0, vartheta_ref: None };
        Problem::new(Grid::unit_square(32).unwrap(), mat, &profile, 1e-12).unwrap()
    }

    fn state(p: &Problem, amp: f64, speed: f64) -> PerturbationState {
        let mut s = PerturbationState::zeros(p.grid);
        s.theta = ScalarField::from_fn(p.grid, |x, y| amp * (PI * x).sin() * (2.0 * PI * y).sin().abs().powf(1.5));
        s.velocity =
            VectorField::from_streamfunction(p.grid, |x, y| speed / PI * (PI * x).sin().powi(2) * (PI * y).sin());
        s
    }

    fn arc() -> BoundaryProfile {
        BoundaryProfile::SinusoidalArc { base: 300.0, amplitude: 20.0, modes: 1 }
    }

    #[test]
    fn derivative_formulas_approach_the_semi_discrete_rates() {
        let pair = ExponentPair::new(0.6, 0.9).unwrap();
        let mut gaps = Vec::new();
        for n in [16, 32, 64] {
            let mat = Material {
                rho: 1000.0,
                mu: 0.1,
                cv_ref: 4180.0,
                kappa_ref: 600.0,
                theta_ref: 300.0,
                vartheta_ref: None,
            };
            let p = Problem::new(Grid::unit_square(n).unwrap(), mat, &arc(), 1e-12).unwrap();
            let s = state(&p, 20.0, 0.05);
            let exact = semi_discrete_derivatives(&p, &s, pair).unwrap();
            let f = [
                v_meq_dot_rhs(&p, &s).unwrap().total(),
                v_meq_theta_m_dot_rhs(&p, &s, pair.m).unwrap().total(),
                v_meq_theta_m_dot_rhs(&p, &s, pair.n).unwrap().total(),
            ];
            gaps.push([0, 1, 2].map(|i| (f[i] - exact[i]).abs() / exact[i].abs()));
        }
        for i in 0..3 {
            assert!(gaps[2][i] < 1e-3, "{gaps:?}");
            assert!(gaps[0][i] / gaps[1][i] > 3.0 && gaps[1][i] / gaps[2][i] > 3.0, "{gaps:?}");
        }
    }

    #[test]
    fn functionals_vanish_at_rest_and_are_positive_otherwise() {
        let p = setup(arc());
        let pair = ExponentPair::new(0.6, 0.9).unwrap();
        let rest = PerturbationState::zeros(p.grid);
        assert_eq!(v_meq(&p, &rest).unwrap(), 0.0);
        assert_eq!(y_mn(&p, &rest, pair).unwrap(), 0.0);
        let s = state(&p, 5.0, 0.01);
        assert!(v_meq(&p, &s).unwrap() > 0.0);
        assert!(y_mn(&p, &s, pair).unwrap() > 0.0);
        assert!(h_mn(&p, &s, pair).unwrap() > 0.0);
    }

    #[test]
    fn y_equals_difference_of_power_functionals() {
        let p = setup(arc());
        let pair = ExponentPair::new(0.6, 0.9).unwrap();
        let s = state(&p, 25.0, 0.03);
        let vm = v_meq_theta_m(&p, &s, 0.6).unwrap();
        let vn = v_meq_theta_m(&p, &s, 0.9).unwrap();
        let y = y_mn(&p, &s, pair).unwrap();
        assert!((y - (vm - vn)).abs() <= 8.0 * f64::EPSILON * (vm.abs() + vn.abs()), "{y} vs {}", vm - vn);
    }

    #[test]
    fn small_exponent_approaches_log_functional() {
        let p = setup(arc());
        let s = state(&p, 25.0, 0.0);
        let v0 = v_meq(&p, &s).unwrap();
        let vm = v_meq_theta_m(&p, &s, 1e-6).unwrap();
        assert!((vm - v0).abs() / v0 < 1e-4);
    }

    #[test]
    fn coupling_forms_agree_and_vanish_for_uniform_steady_state() {
        let p = setup(arc());
        let s = state(&p, 25.0, 0.03);
        let a = v_meq_dot_rhs(&p, &s).unwrap().coupling;
        let b = coupling_gradient_form(&p, &s).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs(), "{a} vs {b}");
        let flat = setup(BoundaryProfile::Constant { value: 300.0 });
        let s = state(&flat, 25.0, 0.03);
        assert_eq!(v_meq_dot_rhs(&flat, &s).unwrap().coupling, 0.0);
        assert_eq!(v_meq_theta_m_dot_rhs(&flat, &s, 0.6).unwrap().coupling, 0.0);
    }

    #[test]
    fn k_constant_reduces_for_uniform_steady_state() {
        let p = setup(BoundaryProfile::Constant { value: 300.0 });
        let pair = ExponentPair::new(0.6, 0.9).unwrap();
        let (k, raw) = k_mn(&p, pair);
        let expect = 4.0 * 0.9 * 0.4 * 600.0 * 2.0 * PI * PI / 0.36;
        assert!((raw - expect).abs() < 1e-9 * expect);
        assert!((k * p.material.heat_capacity() - raw).abs() < 1e-9 * raw);
    }

    #[test]
    fn integrated_pointwise_source_matches_log_rhs() {
        // Wall-adjacent cells carry an O(h) ghost defect, so the agreement
        // improves at first order.
        let mut prev = f64::INFINITY;
        for n in [16, 32, 64] {
            let mat = Material {
                rho: 1000.0,
                mu: 0.1,
                cv_ref: 4180.0,
                kappa_ref: 600.0,
                theta_ref: 300.0,
                vartheta_ref: None,
            };
            let p = Problem::new(Grid::unit_square(n).unwrap(), mat, &arc(), 1e-12).unwrap();
            let s = state(&p, 25.0, 0.03);
            let a = integrated_log_source(&p, &s).unwrap();
            let rhs = v_meq_dot_rhs(&p, &s).unwrap();
            let rel = (a - rhs.total()).abs() / rhs.magnitude();
            assert!(prev / rel > 1.8, "n = {n}: {rel} after {prev}");
            prev = rel;
        }
        assert!(prev < 5e-3, "{prev}");
    }

    #[test]
    fn pointwise_residual_shrinks_with_the_step() {
        let p = setup(arc());
        let s = state(&p, 25.0, 0.03);
        let c = StepControl::default();
        let dt = stable_dt(&p, &s, &c);
        let mut norms = vec![];
        for f in [1.0, 0.5, 0.25] {
            let (next, _) = step(&p, &s, dt * f, &c).unwrap();
            norms.push(pointwise_residual_check(&p, &s, &next, WeightChoice::Log).unwrap());
        }
        let d1 = norms[0].zip_map(&norms[1], |a, b| a - b).max_abs();
        let d2 = norms[1].zip_map(&norms[2], |a, b| a - b).max_abs();
        let ratio = d1 / d2;
        assert!((1.6..2.4).contains(&ratio), "ratio {ratio}");
    }
}
