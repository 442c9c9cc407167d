//! The `run`, `steady` and `converge` commands.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::config::RunConfig;
use super::io::{trace_to_csv, Snapshot};
use super::korn::korn_study;
use super::report::RunReport;
use crate::error::{domain, Error, Result};
use crate::evolution::{
    dissipation, kinetic_energy, run, step, Monitor, PerturbationState, Problem, Schedule, StepControl,
};
use crate::functionals::{
    derivative_checks, differential_inequality_check, energy_method_diagnostic, integrated_log_source,
    pointwise_residual_check, sample, semi_discrete_derivatives, v_meq_dot_rhs, FunctionalTrace, WeightChoice,
};
use crate::grid::{integrate, Grid, ScalarField};
use crate::lemmas::{decay_hypothesis_check, DecayThresholds};
use crate::steady::{solve_steady, BoundaryProfile};

/// Normalised excess above which a sample violates the differential
/// inequality.
pub const INEQUALITY_TOLERANCE: f64 = 1e-2;

const K_CONVENTION: &str = "k_mn is a rate in 1/s (the bound's constant divided by rho c_V); \
                            k_mn_unnormalized is the constant without that division";

/// Report of a `run`, with the trace that was written.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub trace: Option<FunctionalTrace>,
    pub csv: Option<Vec<u8>>,
}

fn problem_for(cfg: &RunConfig, nx: usize) -> Result<Problem> {
    let grid = cfg.grid.with_nx(nx).build()?;
    Problem::new(grid, cfg.material, &cfg.boundary, cfg.steady_tol)
}

fn monitor_for(cfg: &RunConfig) -> Monitor {
    Monitor { pair: cfg.exponents, l_values: cfg.l_values.clone() }
}

fn write_state(dir: &Path, label: &str, state: &PerturbationState) -> Result<()> {
    Snapshot::scalar(&format!("{label}_theta"), &state.theta, state.t).write(dir)?;
    Snapshot::scalar(&format!("{label}_pressure"), &state.pressure, state.t).write(dir)?;
    for s in Snapshot::velocity(label, &state.velocity, state.t) {
        s.write(dir)?;
    }
    Ok(())
}

fn finish(report: &mut RunReport, dir: Option<&Path>) {
    if let Some(dir) = dir {
        let res = fs::create_dir_all(dir).and_then(|_| fs::write(dir.join("summary.json"), report.to_json()));
        if let Err(e) = res {
            if report.error.is_none() {
                report.set_error(&Error::Io(e));
            }
        }
    }
}

/// Ratio `last / first` of a column, with columns that start at or below
/// `eps` counted as trivially decayed.
fn decay_ratio(first: f64, last: f64, eps: f64) -> (f64, bool) {
    if first.abs() <= eps {
        (0.0, last.abs() <= eps)
    } else {
        (last / first, true)
    }
}

fn ke_eps(problem: &Problem) -> f64 {
    1e-24 * problem.material.rho * problem.grid.area()
}

/// Criteria that depend on a single trace.
fn evaluate_trace(
    report: &mut RunReport,
    problem: &Problem,
    trace: &FunctionalTrace,
    cfg: &RunConfig,
    seconds: f64,
) -> Result<()> {
    let (first, last) = match (trace.samples.first(), trace.samples.last()) {
        (Some(a), Some(b)) if trace.samples.len() >= 3 => (a, b),
        _ => return Err(domain("trace needs at least three samples")),
    };
    let mat = &problem.material;
    let qeps = trace.meta.quad_eps;
    let keps = ke_eps(problem);
    let trivial = first.y_mn <= qeps && first.v_meq <= qeps && first.ke <= keps;
    let note = if trivial { "perturbation below quadrature epsilon; trivially satisfied" } else { "" };

    let rate = 2.0 * mat.mu / (problem.steady.poincare * mat.rho);
    let mut worst_env: f64 = 0.0;
    let mut env_ok = true;
    for s in &trace.samples {
        let env = first.ke * (-rate * s.t).exp() * 1.05;
        env_ok &= s.ke <= env + keps;
        if env > 0.0 {
            worst_env = worst_env.max(s.ke / env * 1.05);
        }
    }
    report.record(
        5,
        env_ok && seconds < 60.0,
        json!({"max_ke_over_envelope": worst_env, "decay_rate": rate, "seconds": seconds}),
        "KE(t) <= 1.05 KE(0) exp(-2 mu t / (C_P rho)), runtime < 60 s",
        note,
    );

    let (y_ratio, y_ok) = decay_ratio(first.y_mn, last.y_mn, qeps);
    let (ke_ratio, ke_ok) = decay_ratio(first.ke, last.ke, keps);
    report.record(
        8,
        y_ok && ke_ok && y_ratio < 0.01 && ke_ratio < 1e-6 && seconds < 60.0,
        json!({"y_ratio": y_ratio, "ke_ratio": ke_ratio, "t_end": last.t, "seconds": seconds}),
        "Y(t_end)/Y(0) < 0.01, KE(t_end)/KE(0) < 1e-6, runtime < 60 s",
        note,
    );

    match trace.meta.l_values.iter().position(|&l| l == 3) {
        Some(idx) => {
            let (r, ok) = decay_ratio(first.rel_entropy[idx], last.rel_entropy[idx], qeps / mat.theta_ref);
            report.record(9, ok && r < 0.01, json!({"ratio": r, "l": 3}), "final/initial < 0.01", note);
        }
        None => report.record(9, false, Value::Null, "final/initial < 0.01", "l = 3 is not among l_values"),
    }

    let y = trace.column(|s| s.y_mn);
    let h = trace.column(|s| s.h_mn);
    let k = trace.meta.k_mn;
    let decay = decay_hypothesis_check(&y, &h, |v| k * v, cfg.sample_interval, DecayThresholds::default())?;
    report.record(
        11,
        decay.passed,
        serde_json::to_value(&decay).unwrap_or(Value::Null),
        "plateau growth < 1e-3 over the final 10%, normalised violation <= 1e-8",
        format!("f(y) = K y with K = {k:e} 1/s"),
    );
    report
        .data
        .insert("energy_method".into(), serde_json::to_value(energy_method_diagnostic(trace)).unwrap_or(Value::Null));
    Ok(())
}

fn inequality_at(cfg: &RunConfig, nx: usize) -> Result<(usize, f64, f64)> {
    let problem = problem_for(cfg, nx)?;
    let initial = cfg.initial.build(&problem, cfg.step.eps_pos, cfg.seed)?;
    let out = run(&problem, initial, &cfg.step, &cfg.schedule(), &monitor_for(cfg)).map_err(|f| f.error)?;
    let rep = differential_inequality_check(&out.trace, INEQUALITY_TOLERANCE);
    Ok((nx, rep.violation_fraction, rep.max_normalized_excess))
}

/// Solves, integrates, samples and writes `trace.csv`, `summary.json`
/// and optional snapshots into the configured output directory.
pub fn run_experiment(cfg: &RunConfig) -> RunOutcome {
    let mut report = RunReport::new("run");
    report.meta("seed", cfg.seed);
    report.meta("config", serde_json::to_value(cfg).unwrap_or(Value::Null));
    report.meta("k_convention", K_CONVENTION);
    let dir = cfg.output.dir.clone();
    let dir = dir.as_deref();
    let mut outcome = RunOutcome { report, trace: None, csv: None };
    let report = &mut outcome.report;
    if let Err(e) = cfg.validate() {
        report.set_error(&e);
        finish(report, dir);
        return outcome;
    }
    let t0 = Instant::now();
    let problem = match problem_for(cfg, cfg.grid.nx) {
        Ok(p) => p,
        Err(e) => {
            report.set_error(&e);
            finish(report, dir);
            return outcome;
        }
    };
    report.timings.insert("steady".into(), t0.elapsed().as_secs_f64());
    report.meta("steady_iterations", problem.steady.iterations);
    report.meta("theta_hat_min", problem.steady.theta_min);
    report.meta("theta_hat_max", problem.steady.theta_max);
    report.meta("poincare_constant", problem.steady.poincare);
    let initial = match cfg.initial.build(&problem, cfg.step.eps_pos, cfg.seed) {
        Ok(s) => s,
        Err(e) => {
            report.set_error(&e);
            finish(report, dir);
            return outcome;
        }
    };
    let snap_dir = dir.filter(|_| cfg.output.snapshots).map(|d| d.join("snapshots"));
    let t1 = Instant::now();
    let result = run(&problem, initial.clone(), &cfg.step, &cfg.schedule(), &monitor_for(cfg));
    let integrate_secs = t1.elapsed().as_secs_f64();
    report.timings.insert("integrate".into(), integrate_secs);
    let (trace, final_state) = match result {
        Ok(out) => {
            report.meta("steps", out.steps);
            report.meta("max_divergence", out.max_divergence);
            report.meta("initial_cell_reynolds", out.initial_cell_reynolds);
            (out.trace, Some(out.final_state))
        }
        Err(fail) => {
            report.set_error(&fail.error);
            report.meta("failed_at", fail.last_state.t);
            if let Some(sd) = &snap_dir {
                let _ = write_state(sd, "last", &fail.last_state);
            }
            (fail.partial, None)
        }
    };
    report.meta("k_mn", trace.meta.k_mn);
    report.meta("k_mn_unnormalized", trace.meta.k_mn_unnormalized);
    report.meta("samples", trace.samples.len());
    let io = (|| -> Result<Vec<u8>> {
        let csv = trace_to_csv(&trace)?;
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
            fs::write(d.join("trace.csv"), &csv)?;
        }
        if let Some(sd) = &snap_dir {
            Snapshot::scalar("theta_hat", problem.theta_hat(), 0.0).write(sd)?;
            write_state(sd, "initial", &initial)?;
            if let Some(s) = &final_state {
                write_state(sd, "final", s)?;
            }
        }
        Ok(csv)
    })();
    match io {
        Ok(csv) => outcome.csv = Some(csv),
        Err(e) if report.error.is_none() => report.set_error(&e),
        Err(_) => {}
    }
    if report.error.is_none() {
        let t2 = Instant::now();
        if let Err(e) = evaluate_trace(report, &problem, &trace, cfg, integrate_secs) {
            report.set_error(&e);
        }
        let (nx0, ny0) = (cfg.grid.nx, cfg.grid.ny);
        let levels: Vec<usize> = (1..cfg.inequality_levels)
            .map(|k| 1usize << k)
            .take_while(|&f| nx0 % f == 0 && ny0 % f == 0 && nx0 / f >= 8 && ny0 / f >= 8)
            .map(|f| nx0 / f)
            .collect();
        let here = differential_inequality_check(&trace, INEQUALITY_TOLERANCE);
        let mut rows = vec![(cfg.grid.nx, here.violation_fraction, here.max_normalized_excess)];
        for &n in &levels {
            match inequality_at(cfg, n) {
                Ok(r) => rows.push(r),
                Err(e) => {
                    report.set_error(&e);
                    break;
                }
            }
        }
        rows.reverse();
        let monotone = rows.windows(2).all(|w| w[1].1 <= w[0].1);
        let finest = rows.last().map_or(1.0, |r| r.1);
        report.record(
            10,
            finest < 0.01 && monotone,
            json!({
                "levels": rows.iter().map(|r| json!({"nx": r.0, "violation_fraction": r.1, "max_normalized_excess": r.2})).collect::<Vec<_>>(),
                "violations_unnormalized_k": here.violations_unnormalized_k,
                "companion_violations": here.companion_violations,
            }),
            "violation fraction < 1% on the run grid, non-increasing under refinement",
            format!("a sample violates when the normalised excess exceeds {INEQUALITY_TOLERANCE}"),
        );
        report.timings.insert("criteria".into(), t2.elapsed().as_secs_f64());
    }
    outcome.trace = Some(trace);
    finish(report, dir);
    outcome
}

/// Boundary data drawn at random from every preset.
pub fn random_profile(rng: &mut ChaCha8Rng, grid: &Grid) -> BoundaryProfile {
    let mut t = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    match (t(0.0, 5.0)) as u32 {
        0 => BoundaryProfile::Constant { value: t(250.0, 350.0) },
        1 => BoundaryProfile::LinearX { base: t(250.0, 350.0), delta: t(-50.0, 50.0) },
        2 => {
            BoundaryProfile::SinusoidalArc { base: t(280.0, 320.0), amplitude: t(0.0, 30.0), modes: t(1.0, 5.0) as u32 }
        }
        3 => BoundaryProfile::TwoWall { hot: t(300.0, 350.0), cold: t(250.0, 300.0) },
        _ => {
            let mut side = |n: usize| (0..n).map(|_| rng.gen_range(250.0..350.0)).collect::<Vec<f64>>();
            BoundaryProfile::Tabulated {
                left: side(grid.ny),
                right: side(grid.ny),
                bottom: side(grid.nx),
                top: side(grid.nx),
            }
        }
    }
}

/// Linear-trace exactness and the maximum principle over random presets.
pub fn steady_checks(report: &mut RunReport, seed: u64, presets: usize) -> Result<()> {
    let g = Grid::new(24, 16, 2.0, 1.0)?;
    let lin = solve_steady(g, &BoundaryProfile::LinearX { base: 300.0, delta: 20.0 }, 1e-13)?;
    let exact = ScalarField::from_fn(g, |x, _| 300.0 + 10.0 * x);
    let lin_err = lin.theta_hat.zip_map(&exact, |a, b| a - b).max_abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_overshoot = f64::NEG_INFINITY;
    for _ in 0..presets {
        let grid =
            Grid::new(rng.gen_range(8..40), rng.gen_range(8..40), rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0))?;
        let profile = random_profile(&mut rng, &grid);
        let s = solve_steady(grid, &profile, 1e-12)?;
        let (lo, hi) = (s.walls.min(), s.walls.max());
        let over = s.theta_hat.data.iter().map(|&t| (t - hi).max(lo - t)).fold(f64::NEG_INFINITY, f64::max);
        worst_overshoot = worst_overshoot.max(over);
    }
    report.record(
        13,
        lin_err <= 1e-12 && worst_overshoot <= 0.0,
        json!({"linear_trace_max_error": lin_err, "presets": presets, "max_overshoot": worst_overshoot}),
        "linear trace error <= 1e-12, no cell outside the wall range",
        "overshoot is max over cells of the distance outside [min wall, max wall]; negative means inside",
    );
    Ok(())
}

/// Solves the steady problem of `cfg` and runs the steady checks.
pub fn steady_command(cfg: &RunConfig) -> RunReport {
    let mut report = RunReport::new("steady");
    report.meta("seed", cfg.seed);
    let dir = cfg.output.dir.clone();
    if let Err(e) = cfg.validate() {
        report.set_error(&e);
        finish(&mut report, dir.as_deref());
        return report;
    }
    let t = Instant::now();
    let res = (|| -> Result<()> {
        let grid = cfg.grid.build()?;
        let s = solve_steady(grid, &cfg.boundary, cfg.steady_tol)?;
        report.meta("iterations", s.iterations);
        report.meta("relative_residual", s.relative_residual);
        report.meta("theta_hat_min", s.theta_min);
        report.meta("theta_hat_max", s.theta_max);
        report.meta("grad_max", s.grad_max);
        report.meta("poincare_constant", s.poincare);
        if let Some(d) = &dir {
            Snapshot::scalar("theta_hat", &s.theta_hat, 0.0).write(d)?;
        }
        steady_checks(&mut report, cfg.seed, 20)
    })();
    if let Err(e) = res {
        report.set_error(&e);
    }
    report.timings.insert("total".into(), t.elapsed().as_secs_f64());
    finish(&mut report, dir.as_deref());
    report
}

/// Quantities compared across refinement levels at `t_probe`.
#[derive(Debug, Clone)]
pub struct ProbeLevel {
    pub nx: usize,
    pub dt: f64,
    /// Measured minus formula for the log, `m` and `n` functionals.
    pub mismatch: [f64; 3],
    pub relative: [f64; 3],
    /// `(KE(t+dt) - KE(t))/dt + dissipation(t)`.
    pub energy_residual: f64,
    pub dissipation: f64,
    /// Pointwise identity residual for the log and the `m` weights.
    pub pointwise: [ScalarField; 2],
    /// Integrated log source minus the log derivative formula at t = 0.
    pub source_gap: f64,
    /// Formula minus the exact semi-discrete rate at `t_probe`.
    pub semi_discrete_gap: [f64; 3],
    pub csv: Vec<u8>,
}

pub fn probe_level(cfg: &RunConfig, nx: usize, dt: f64) -> Result<ProbeLevel> {
    let problem = problem_for(cfg, nx)?;
    let initial = cfg.initial.build(&problem, cfg.step.eps_pos, cfg.seed)?;
    let source_gap = integrated_log_source(&problem, &initial)? - v_meq_dot_rhs(&problem, &initial)?.total();
    let control = StepControl { fixed_dt: Some(dt), ..cfg.step };
    let monitor = monitor_for(cfg);
    let schedule = Schedule { t_end: cfg.convergence.t_probe, sample_interval: 2.0 * dt };
    let out = run(&problem, initial, &control, &schedule, &monitor).map_err(|f| f.error)?;
    let mut trace = out.trace;
    let s0 = out.final_state;
    let (s1, _) = step(&problem, &s0, dt, &control)?;
    let (s2, _) = step(&problem, &s1, dt, &control)?;
    let d = [&s0, &s1, &s2].map(|s| dissipation(&problem, &s.velocity));
    let e_prev = trace.samples.last().map_or(0.0, |s| s.dissipated_energy);
    let e2 = e_prev + 0.5 * dt * (d[0] + 2.0 * d[1] + d[2]);
    trace.samples.push(sample(&problem, &s2, &monitor, d[2], e2)?);
    let k = trace.samples.len() - 2;
    let checks = derivative_checks(&trace, k).ok_or_else(|| domain("probe needs interior samples"))?;
    let exact = semi_discrete_derivatives(&problem, &s0, cfg.exponents)?;
    let semi_discrete_gap = [0, 1, 2].map(|i| checks[i].formula - exact[i]);
    let energy_residual = (kinetic_energy(&problem, &s1.velocity) - kinetic_energy(&problem, &s0.velocity)) / dt + d[0];
    let pointwise = [
        pointwise_residual_check(&problem, &s0, &s1, WeightChoice::Log)?,
        pointwise_residual_check(&problem, &s0, &s1, WeightChoice::Power { m: cfg.exponents.m })?,
    ];
    Ok(ProbeLevel {
        nx,
        dt,
        mismatch: checks.each_ref().map(|c| c.mismatch()),
        relative: checks.each_ref().map(|c| c.relative()),
        energy_residual,
        dissipation: d[0],
        pointwise,
        source_gap,
        semi_discrete_gap,
        csv: trace_to_csv(&trace)?,
    })
}

fn l2(f: &ScalarField) -> f64 {
    integrate(&f.map(|a| a * a)).sqrt()
}

/// Error reduction factors between consecutive levels: successive
/// differences when three or more levels exist, plain ratios otherwise.
pub fn reduction_ratios(e: &[f64]) -> Vec<f64> {
    if e.len() >= 3 {
        e.windows(3).map(|w| (w[0] - w[1]) / (w[1] - w[2])).collect()
    } else {
        e.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

/// Limit as `dt -> 0` of values at `dt`, `dt/2`, `dt/4` that behave like
/// `e0 + a dt + b dt^2`.
pub fn richardson(e: [f64; 3]) -> f64 {
    (8.0 * e[2] - 6.0 * e[1] + e[0]) / 3.0
}

fn in_band(r: &[f64], lo: f64, hi: f64) -> bool {
    !r.is_empty() && r.iter().all(|&x| x >= lo && x <= hi)
}

const NAMES: [&str; 3] = ["log", "power_m", "power_n"];

/// Time-step and grid refinement of short runs; criteria 6, 7, 12, 15.
pub fn convergence_study(cfg: &RunConfig) -> RunReport {
    let mut report = RunReport::new("converge");
    report.meta("seed", cfg.seed);
    report.meta("config", serde_json::to_value(cfg).unwrap_or(Value::Null));
    let dir = cfg.output.dir.clone();
    if let Err(e) = cfg.validate() {
        report.set_error(&e);
        finish(&mut report, dir.as_deref());
        return report;
    }
    if let Err(e) = convergence_inner(cfg, &mut report) {
        report.set_error(&e);
    }
    finish(&mut report, dir.as_deref());
    report
}

fn convergence_inner(cfg: &RunConfig, report: &mut RunReport) -> Result<()> {
    let conv = cfg.convergence;
    let t_dt = Instant::now();
    let dt_levels = conv.dt_levels();
    let by_dt = dt_levels.iter().map(|&dt| probe_level(cfg, conv.dt_grid, dt)).collect::<Result<Vec<_>>>()?;
    let t_dt_secs = t_dt.elapsed().as_secs_f64();
    report.timings.insert("dt_study".into(), t_dt_secs);

    let energy: Vec<f64> = by_dt.iter().map(|l| l.energy_residual.abs()).collect();
    let energy_ratios: Vec<f64> = energy.windows(2).map(|w| w[0] / w[1]).collect();
    report.record(
        6,
        in_band(&energy_ratios, 1.6, 2.4) && t_dt_secs < 120.0,
        json!({"dt": dt_levels, "residual": energy, "ratios": energy_ratios, "seconds": t_dt_secs}),
        "residual ratio per dt halving in [1.6, 2.4], runtime < 2 min",
        format!("|dKE/dt + int 2 mu D:D| after one step at t = {} on {} cells across", conv.t_probe, conv.dt_grid),
    );

    // At each grid the mismatch is extrapolated to dt -> 0 from dt_fine,
    // dt_fine/2 and dt_fine/4, leaving the operator error.
    let t_h = Instant::now();
    let h_levels = conv.h_levels();
    let by_h = h_levels
        .iter()
        .map(|&n| {
            [1.0, 0.5, 0.25].map(|f| probe_level(cfg, n, f * conv.dt_fine)).into_iter().collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let t_h_secs = t_h.elapsed().as_secs_f64();
    report.timings.insert("h_study".into(), t_h_secs);

    let mut rows = Vec::new();
    let mut ok = t_dt_secs + t_h_secs < 180.0;
    for (i, name) in NAMES.iter().enumerate() {
        let e_dt: Vec<f64> = by_dt.iter().map(|l| l.mismatch[i]).collect();
        let e_h: Vec<f64> =
            by_h.iter().map(|l| richardson([l[0].mismatch[i], l[1].mismatch[i], l[2].mismatch[i]])).collect();
        let semi: Vec<f64> = by_h.iter().map(|l| l[2].semi_discrete_gap[i]).collect();
        let r_dt = reduction_ratios(&e_dt);
        // the extrapolated mismatch tends to zero with h
        let r_h: Vec<f64> = e_h.windows(2).map(|w| w[0] / w[1]).collect();
        let finest = by_h.last().map_or(f64::NAN, |l| l[2].relative[i]);
        ok &= in_band(&r_dt, 1.6, 2.4) && in_band(&r_h, 3.2, 4.8) && finest < 0.02;
        rows.push(json!({
            "functional": name, "dt_mismatch": e_dt, "dt_ratios": r_dt,
            "h_mismatch_extrapolated": e_h, "h_ratios": r_h, "finest_relative": finest,
            "semi_discrete_gap": semi,
        }));
    }
    report.record(
        7,
        ok,
        Value::from(rows),
        "dt ratios in [1.6, 2.4], h ratios in [3.2, 4.8], finest relative mismatch < 2%, runtime < 3 min",
        "central difference of each functional against its derivative formula at t_probe; \
         the h study extrapolates each grid to dt -> 0 from three steps",
    );

    let diffs: Vec<f64> =
        by_dt.windows(2).map(|w| l2(&w[0].pointwise[0].zip_map(&w[1].pointwise[0], |a, b| a - b))).collect();
    let diffs_m: Vec<f64> =
        by_dt.windows(2).map(|w| l2(&w[0].pointwise[1].zip_map(&w[1].pointwise[1], |a, b| a - b))).collect();
    let ratio = |d: &[f64]| d.windows(2).map(|w| w[0] / w[1]).collect::<Vec<f64>>();
    report.data.insert(
        "pointwise_residual".into(),
        json!({
            "dt": dt_levels,
            "l2_log": by_dt.iter().map(|l| l2(&l.pointwise[0])).collect::<Vec<_>>(),
            "l2_power_m": by_dt.iter().map(|l| l2(&l.pointwise[1])).collect::<Vec<_>>(),
            "successive_difference_ratio_log": ratio(&diffs),
            "successive_difference_ratio_power_m": ratio(&diffs_m),
        }),
    );
    report.data.insert(
        "integrated_source_gap".into(),
        json!({
            "nx": h_levels,
            "gap": by_h.iter().map(|l| l[0].source_gap).collect::<Vec<_>>(),
        }),
    );
    report.data.insert("energy_dissipation".into(), json!(by_dt.iter().map(|l| l.dissipation).collect::<Vec<_>>()));

    let t_k = Instant::now();
    let korn_levels = [16, 32, 64];
    let korn = korn_study(&korn_levels, conv.korn_fields, cfg.seed);
    let finest = korn.iter().map(|r| r[2]).fold(0.0, f64::max);
    let ratios: Vec<Vec<f64>> = korn.iter().map(|r| r.windows(2).map(|w| w[0] / w[1]).collect()).collect();
    let ratio_ok = ratios.iter().all(|r| in_band(r, 3.2, 4.8));
    report.timings.insert("korn".into(), t_k.elapsed().as_secs_f64());
    report.record(
        12,
        finest < 0.01 && ratio_ok,
        json!({"nx": korn_levels, "relative": korn, "ratios": ratios, "max_relative_finest": finest}),
        "relative discrepancy < 1% at 64 x 64, ratio per halving in [3.2, 4.8]",
        "discrete 2 int D:D against Gauss quadrature of int |grad v|^2 + (div v)^2",
    );

    let again = probe_level(cfg, conv.dt_grid, dt_levels[0])?;
    let same = again.csv == by_dt[0].csv;
    report.record(
        15,
        same,
        json!({"bytes": again.csv.len(), "identical": same}),
        "byte-identical trace CSV",
        "coarsest time level run twice",
    );
    Ok(())
}
