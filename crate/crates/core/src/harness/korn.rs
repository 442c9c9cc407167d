//! Discrete `2 int D:D` against the continuum `int |grad v|^2 + (div v)^2`
//! for random sine fields that vanish on the walls.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{double_dot, integrate, sym_grad, Grid, VectorField};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `u = sum a_kl sin(k pi x/lx) sin(l pi y/ly)` and likewise `v` with `b_kl`.
#[derive(Debug, Clone)]
pub struct SineField {
    pub modes: usize,
    pub lx: f64,
    pub ly: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl SineField {
    pub fn random(rng: &mut ChaCha8Rng, modes: usize, lx: f64, ly: f64) -> Self {
        let mut draw = || (0..modes * modes).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let a = draw();
        let b = draw();
        SineField { modes, lx, ly, a, b }
    }

    /// Values and first derivatives `(u, v, u_x, u_y, v_x, v_y)`.
    pub fn eval(&self, x: f64, y: f64) -> [f64; 6] {
        let mut out = [0.0; 6];
        for l in 1..=self.modes {
            let ky = l as f64 * PI / self.ly;
            let (sy, cy) = (ky * y).sin_cos();
            for k in 1..=self.modes {
                let kx = k as f64 * PI / self.lx;
                let (sx, cx) = (kx * x).sin_cos();
                let idx = (l - 1) * self.modes + (k - 1);
                let (a, b) = (self.a[idx], self.b[idx]);
                out[0] += a * sx * sy;
                out[1] += b * sx * sy;
                out[2] += a * kx * cx * sy;
                out[3] += a * ky * sx * cy;
                out[4] += b * kx * cx * sy;
                out[5] += b * ky * sx * cy;
            }
        }
        out
    }

    pub fn discretise(&self, grid: Grid) -> VectorField {
        let mut v = VectorField::from_fn(grid, |x, y| {
            let e = self.eval(x, y);
            (e[0], e[1])
        });
        v.enforce_no_penetration();
        v
    }

    /// `int |grad v|^2 + (div v)^2` by tensor Gauss quadrature.
    pub fn continuum_korn(&self, points: usize) -> f64 {
        let (x, w) = gauss_legendre(points);
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            for (yj, wj) in x.iter().zip(&w) {
                let e = self.eval(0.5 * self.lx * (xi + 1.0), 0.5 * self.ly * (yj + 1.0));
                let grad = e[2] * e[2] + e[3] * e[3] + e[4] * e[4] + e[5] * e[5];
                let div = e[2] + e[5];
                acc += wi * wj * (grad + div * div);
            }
        }
        acc * 0.25 * self.lx * self.ly
    }
}

/// Discrete `2 int D:D` for the field sampled on `grid`.
pub fn discrete_korn(field: &SineField, grid: Grid) -> f64 {
    2.0 * integrate(&double_dot(&sym_grad(&field.discretise(grid))))
}

/// Relative discrepancy per field (rows) and level (columns).
pub fn korn_study(levels: &[usize], fields: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..fields)
        .map(|_| {
            let f = SineField::random(&mut rng, 3, 1.0, 1.0);
            let exact = f.continuum_korn(40);
            levels
                .iter()
                .map(|&n| {
                    let g = Grid::unit_square(n).expect("valid level");
                    (discrete_korn(&f, g) - exact).abs() / exact
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let m14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((m14 - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn single_mode_matches_closed_form() {
        // u = sin(pi x) sin(pi y), v = 0: int |grad u|^2 = pi^2/2, int u_x^2 = pi^2/4
        let f = SineField { modes: 1, lx: 1.0, ly: 1.0, a: vec![1.0], b: vec![0.0] };
        let exact = PI * PI / 2.0 + PI * PI / 4.0;
        assert!((f.continuum_korn(20) - exact).abs() < 1e-12);
    }
}
