//! Run configuration: JSON schema, defaults and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{InitialPerturbation, Schedule, StepControl, StreamMode, TemperatureInit};
use crate::grid::Grid;
use crate::steady::BoundaryProfile;
use crate::thermo::{ExponentPair, Material};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "unit")]
    pub lx: f64,
    #[serde(default = "unit")]
    pub ly: f64,
}

fn unit() -> f64 {
    1.0
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly).map_err(|e| Error::Config(format!("grid: {e}")))
    }

    /// Same domain with `nx` cells across and the aspect ratio kept.
    pub fn with_nx(&self, nx: usize) -> GridSpec {
        GridSpec { nx, ny: (nx * self.ny).div_ceil(self.nx), ..*self }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Write binary field snapshots of the initial and final states.
    #[serde(default)]
    pub snapshots: bool,
}

/// Levels of the refinement study run by `converge`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub levels: usize,
    /// Time at which the identities are compared, s.
    pub t_probe: f64,
    /// Coarsest step of the time study; halved per level.
    pub dt_coarse: f64,
    /// Cells across for the time study.
    pub dt_grid: usize,
    /// Coarsest grid of the space study; doubled per level.
    pub h_coarse: usize,
    /// Largest step of the space study; every grid also runs at a half
    /// and a quarter of it.
    pub dt_fine: f64,
    /// Random no-slip fields in the Korn comparison.
    pub korn_fields: usize,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            levels: 3,
            t_probe: 0.08,
            dt_coarse: 0.02,
            dt_grid: 32,
            h_coarse: 32,
            dt_fine: 0.0025,
            korn_fields: 8,
        }
    }
}

impl ConvergenceSpec {
    pub fn dt_levels(&self) -> Vec<f64> {
        (0..self.levels).map(|k| self.dt_coarse / f64::from(1u32 << k)).collect()
    }

    pub fn h_levels(&self) -> Vec<usize> {
        (0..self.levels).map(|k| self.h_coarse << k).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=6).contains(&self.levels) {
            return Err(Error::Config(format!("convergence.levels must lie in [2, 6] (got {})", self.levels)));
        }
        if self.h_coarse < 8 || self.dt_grid < 8 {
            return Err(Error::Config("convergence grids need at least 8 cells across".into()));
        }
        if self.korn_fields == 0 {
            return Err(Error::Config("convergence.korn_fields must be at least 1".into()));
        }
        if !(self.t_probe > 0.0 && self.t_probe.is_finite()) {
            return Err(Error::Config(format!("convergence.t_probe must be positive (got {})", self.t_probe)));
        }
        let mut steps = self.dt_levels();
        steps.push(0.25 * self.dt_fine);
        for dt in steps {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("convergence steps must be positive (got {dt})")));
            }
            let k = self.t_probe / (2.0 * dt);
            if (k - k.round()).abs() > 1e-9 * k || k.round() < 1.0 {
                return Err(Error::Config(format!(
                    "convergence.t_probe must be a whole multiple of twice every step (t_probe = {}, dt = {dt})",
                    self.t_probe
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub material: Material,
    pub boundary: BoundaryProfile,
    #[serde(default = "InitialPerturbation::rest")]
    pub initial: InitialPerturbation,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pair")]
    pub exponents: ExponentPair,
    #[serde(default = "default_l_values")]
    pub l_values: Vec<u32>,
    #[serde(default = "default_x_crit")]
    pub x_crit: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    #[serde(default)]
    pub step: StepControl,
    #[serde(default = "default_steady_tol")]
    pub steady_tol: f64,
    /// Grids used for the refinement trend of the differential
    /// inequality: the run grid and coarser halvings. 1 disables it.
    #[serde(default = "default_inequality_levels")]
    pub inequality_levels: usize,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
}

fn default_pair() -> ExponentPair {
    ExponentPair { m: 0.6, n: 0.9 }
}
fn default_l_values() -> Vec<u32> {
    vec![3]
}
fn default_x_crit() -> f64 {
    -5.0
}
fn default_t_end() -> f64 {
    2000.0
}
fn default_sample_interval() -> f64 {
    2.0
}
fn default_steady_tol() -> f64 {
    1e-10
}
fn default_inequality_levels() -> usize {
    3
}

impl RunConfig {
    /// Checks every invariant before any computation starts.
    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        self.material.validate()?;
        self.boundary.validate()?;
        self.initial.validate()?;
        self.exponents.validate()?;
        if self.l_values.is_empty() || self.l_values.iter().any(|&l| !(3..=16).contains(&l)) {
            return Err(Error::Config(format!(
                "l_values must be nonempty with entries in [3, 16] (got {:?})",
                self.l_values
            )));
        }
        if !(self.x_crit.is_finite() && self.x_crit < 0.0) {
            return Err(Error::Config(format!("x_crit must be negative (got {})", self.x_crit)));
        }
        self.schedule().validate()?;
        let k = self.t_end / self.sample_interval;
        if (k - k.round()).abs() > 1e-9 * k {
            return Err(Error::Config(format!(
                "t_end must be a whole multiple of sample_interval (got {} / {})",
                self.t_end, self.sample_interval
            )));
        }
        self.step.validate()?;
        if !(self.steady_tol > 0.0 && self.steady_tol <= 1e-4) {
            return Err(Error::Config(format!("steady_tol must lie in (0, 1e-4] (got {})", self.steady_tol)));
        }
        if !(1..=4).contains(&self.inequality_levels) {
            return Err(Error::Config(format!(
                "inequality_levels must lie in [1, 4] (got {})",
                self.inequality_levels
            )));
        }
        self.convergence.validate()
    }

    pub fn schedule(&self) -> Schedule {
        Schedule { t_end: self.t_end, sample_interval: self.sample_interval }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Parses and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// The reference scenario: unit square, 64 x 64, viscous water-like fluid,
/// sinusoidal wall temperature, one swirl and a warm bump.
pub fn default_scenario() -> RunConfig {
    RunConfig {
        grid: GridSpec { nx: 64, ny: 64, lx: 1.0, ly: 1.0 },
        material: Material { mu: 0.1, kappa_ref: 600.0, ..Material::default() },
        boundary: BoundaryProfile::SinusoidalArc { base: 300.0, amplitude: 20.0, modes: 1 },
        initial: InitialPerturbation {
            velocity_modes: vec![StreamMode { k: 1, l: 1, amplitude: 0.05 / std::f64::consts::PI }],
            random_velocity: None,
            temperature: TemperatureInit::Bump { center: [0.5, 0.5], width: 0.1, amplitude: 30.0 },
        },
        seed: 0,
        exponents: default_pair(),
        l_values: default_l_values(),
        x_crit: default_x_crit(),
        t_end: default_t_end(),
        sample_interval: default_sample_interval(),
        step: StepControl::default(),
        steady_tol: default_steady_tol(),
        inequality_levels: default_inequality_levels(),
        output: OutputSpec::default(),
        convergence: ConvergenceSpec::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(r#"{"grid": {"nx": 16, "ny": 16}, "boundary": {"preset": "constant", "value": 300}}"#)
            .unwrap();
        assert_eq!(cfg.material, Material::default());
        assert_eq!(cfg.material.mu, 1e-3);
        assert_eq!(cfg.exponents, ExponentPair { m: 0.6, n: 0.9 });
        assert_eq!(cfg.initial, InitialPerturbation::rest());
        assert_eq!(cfg.t_end, 2000.0);
    }

    #[test]
    fn invariant_violations_are_named() {
        let base = r#""grid": {"nx": 16, "ny": 16}, "boundary": {"preset": "constant", "value": 300}"#;
        let e = parse_config(&format!(r#"{{{base}, "exponents": {{"m": 0.3, "n": 0.8}}}}"#)).unwrap_err();
        assert!(e.to_string().contains("m > n/2 violated"), "{e}");
        let e = parse_config(r#"{"grid": {"nx": 16, "ny": 16}, "boundary": {"preset": "constant", "value": -3}}"#)
            .unwrap_err();
        assert!(e.to_string().contains("positive"), "{e}");
        let e = parse_config(&format!(r#"{{{base}, "t_end": 10, "sample_interval": 3}}"#)).unwrap_err();
        assert!(e.to_string().contains("whole multiple"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let e = parse_config("{\"grid\": {\"nx\": 16, \"ny\": 16},\n \"boundry\": {}}").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("boundry") && msg.contains("line 2"), "{msg}");
        assert!(matches!(e, Error::Parse(_)));
    }

    #[test]
    fn default_scenario_round_trips() {
        let cfg = default_scenario();
        cfg.validate().unwrap();
        assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
    }
}
