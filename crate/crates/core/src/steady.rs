//! Conductive steady state: harmonic temperature with prescribed wall
//! values and the fluid at rest.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{gradient, laplacian, laplacian_dirichlet, Grid, ScalarBc, ScalarField, WallData};
use crate::linalg::conjugate_gradient;

/// Wall temperature presets, in kelvin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryProfile {
    Constant {
        value: f64,
    },
    /// `base + delta x / lx`.
    LinearX {
        base: f64,
        delta: f64,
    },
    /// `base + amplitude sin(modes pi s)` with `s` the normalised arclength
    /// measured anticlockwise from the origin.
    SinusoidalArc {
        base: f64,
        amplitude: f64,
        #[serde(default = "one")]
        modes: u32,
    },
    /// Hot left wall, cold right wall, horizontal walls split at `x = lx/2`.
    TwoWall {
        hot: f64,
        cold: f64,
    },
    /// Values at the wall-face midpoints, one array per wall.
    Tabulated {
        left: Vec<f64>,
        right: Vec<f64>,
        bottom: Vec<f64>,
        top: Vec<f64>,
    },
}

fn one() -> u32 {
    1
}

impl BoundaryProfile {
    pub fn validate(&self) -> Result<()> {
        let lowest = match self {
            BoundaryProfile::Constant { value } => *value,
            BoundaryProfile::LinearX { base, delta } => base.min(base + delta),
            BoundaryProfile::SinusoidalArc { base, amplitude, modes } => {
                if *modes == 0 {
                    return Err(Error::Config("boundary.modes must be at least 1".into()));
                }
                base - amplitude.abs()
            }
            BoundaryProfile::TwoWall { hot, cold } => hot.min(*cold),
            BoundaryProfile::Tabulated { left, right, bottom, top } => left
                .iter()
                .chain(right)
                .chain(bottom)
                .chain(top)
                .fold(f64::INFINITY, |a, &b| if b.is_nan() { f64::NAN } else { a.min(b) }),
        };
        if !(lowest.is_finite() && lowest > 0.0) {
            return Err(Error::Config(format!(
                "boundary temperature must stay positive and finite (lowest value {lowest})"
            )));
        }
        Ok(())
    }

    /// Evaluates the profile at the wall-face midpoints of `grid`.
    pub fn wall_data(&self, grid: &Grid) -> Result<WallData> {
        self.validate()?;
        let (lx, ly) = (grid.lx, grid.ly);
        let walls = match self {
            BoundaryProfile::Constant { value } => WallData::from_fn(grid, |_, _| *value),
            BoundaryProfile::LinearX { base, delta } => WallData::from_fn(grid, |x, _| base + delta * x / lx),
            BoundaryProfile::SinusoidalArc { base, amplitude, modes } => {
                let per = 2.0 * (lx + ly);
                let k = f64::from(*modes);
                let at = |s: f64| base + amplitude * (k * std::f64::consts::PI * s / per).sin();
                WallData {
                    bottom: (0..grid.nx).map(|i| at(grid.xc(i))).collect(),
                    right: (0..grid.ny).map(|j| at(lx + grid.yc(j))).collect(),
                    top: (0..grid.nx).map(|i| at(lx + ly + (lx - grid.xc(i)))).collect(),
                    left: (0..grid.ny).map(|j| at(2.0 * lx + ly + (ly - grid.yc(j)))).collect(),
                }
            }
            BoundaryProfile::TwoWall { hot, cold } => {
                let mut w = WallData::from_fn(grid, |x, _| if x < 0.5 * lx { *hot } else { *cold });
                w.left.iter_mut().for_each(|a| *a = *hot);
                w.right.iter_mut().for_each(|a| *a = *cold);
                w
            }
            BoundaryProfile::Tabulated { left, right, bottom, top } => {
                let w = WallData { left: left.clone(), right: right.clone(), bottom: bottom.clone(), top: top.clone() };
                if !w.matches(grid) {
                    return Err(Error::Config(format!(
                        "tabulated boundary needs {} values on the vertical walls and {} on the horizontal walls",
                        grid.ny, grid.nx
                    )));
                }
                w
            }
        };
        Ok(walls)
    }
}

/// Conductive steady state on a grid.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub theta_hat: ScalarField,
    pub walls: WallData,
    /// Extremes over the cells and the wall data.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Largest face-normal difference quotient, wall faces included.
    pub grad_max: f64,
    pub poincare: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl SteadyState {
    pub fn bc(&self) -> ScalarBc<'_> {
        ScalarBc::Dirichlet(&self.walls)
    }

    /// Uniform steady temperature; no linear solve needed.
    pub fn uniform(grid: Grid, value: f64) -> Result<Self> {
        solve_steady(grid, &BoundaryProfile::Constant { value }, 1e-10)
    }
}

/// Poincare constant of the rectangle for zero wall values:
/// `1 / (pi^2 (1/lx^2 + 1/ly^2))`.
pub fn poincare_constant(grid: &Grid) -> f64 {
    let pi2 = std::f64::consts::PI.powi(2);
    1.0 / (pi2 * (1.0 / (grid.lx * grid.lx) + 1.0 / (grid.ly * grid.ly)))
}

/// Solves the discrete Laplace problem by conjugate gradients to relative
/// residual `tol`.
pub fn solve_steady(grid: Grid, profile: &BoundaryProfile, tol: f64) -> Result<SteadyState> {
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(domain(format!("steady tolerance must lie in (0, 1e-4] (got {tol})")));
    }
    let walls = profile.wall_data(&grid)?;
    // Solving for the deviation from the mid-range keeps rounding small.
    let shift = 0.5 * (walls.min() + walls.max());
    let shifted = WallData {
        left: walls.left.iter().map(|a| a - shift).collect(),
        right: walls.right.iter().map(|a| a - shift).collect(),
        bottom: walls.bottom.iter().map(|a| a - shift).collect(),
        top: walls.top.iter().map(|a| a - shift).collect(),
    };
    let b = laplacian_dirichlet(&ScalarField::zeros(grid), Some(&shifted));
    let apply = |x: &[f64], y: &mut [f64]| {
        let f = ScalarField { grid, data: x.to_vec() };
        let l = laplacian(&f, ScalarBc::Zero);
        y.iter_mut().zip(&l.data).for_each(|(a, b)| *a = -b);
    };
    let mut phi = vec![0.0; grid.n_cells()];
    let report = conjugate_gradient(apply, &b.data, &mut phi, tol, 10 * grid.n_cells(), false)?;
    let theta_hat = ScalarField { grid, data: phi.iter().map(|a| a + shift).collect() };
    let grad = gradient(&theta_hat, ScalarBc::Dirichlet(&walls));
    let grad_max = grad.max_abs();
    let theta_min = theta_hat.min().min(walls.min());
    let theta_max = theta_hat.max().max(walls.max());
    Ok(SteadyState {
        theta_hat,
        walls,
        theta_min,
        theta_max,
        grad_max,
        poincare: poincare_constant(&grid),
        iterations: report.iterations,
        relative_residual: report.relative_residual,
    })
}
