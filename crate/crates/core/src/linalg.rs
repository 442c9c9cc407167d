//! Linear solvers: matrix-free conjugate gradients and a direct Neumann
//! Poisson solve by fast diagonalisation.

use crate::error::{Error, Result};
use crate::grid::{laplacian, Grid, ScalarBc, ScalarField};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::grid::neumaier_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

fn remove_mean(x: &mut [f64]) {
    let mean = crate::grid::neumaier_sum(x.iter().copied()) / x.len() as f64;
    x.iter_mut().for_each(|a| *a -= mean);
}

/// Outcome of a converged CG solve.
#[derive(Debug, Clone)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive (semi-)definite operator.
/// With `project_mean` the iterates stay in the mean-zero subspace, which
/// is what a pure Neumann operator needs.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    project_mean: bool,
) -> Result<CgReport> {
    let n = b.len();
    let mut b = b.to_vec();
    if project_mean {
        remove_mean(&mut b);
        remove_mean(x);
    }
    let bnorm = dot(&b, &b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|a| *a = 0.0);
        return Ok(CgReport { iterations: 0, relative_residual: 0.0 });
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if project_mean {
        remove_mean(&mut r);
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut history = Vec::new();
    let mut ap = vec![0.0; n];
    for it in 0..=max_iter {
        let rel = rr.sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            return Ok(CgReport { iterations: it, relative_residual: rel });
        }
        if it == max_iter || !rel.is_finite() {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if project_mean {
            remove_mean(&mut r);
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    Err(Error::Solver {
        solver: "conjugate gradient",
        iterations: history.len().saturating_sub(1),
        last: *history.last().unwrap_or(&f64::NAN),
        history,
    })
}

/// Orthonormal eigenbasis of the 1D Neumann second difference on `n` cells:
/// `q_k(i) = c_k cos(k pi (i + 1/2) / n)`, eigenvalue `-4 sin^2(k pi / 2n) / h^2`.
fn neumann_basis(n: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut q = vec![0.0; n * n];
    let mut lam = vec![0.0; n];
    let nf = n as f64;
    for k in 0..n {
        let c = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            q[i * n + k] = c * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / nf).cos();
        }
        let s = (std::f64::consts::PI * k as f64 / (2.0 * nf)).sin();
        lam[k] = -4.0 * s * s / (h * h);
    }
    (q, lam)
}

/// Direct solver for the five-point Laplacian with zero-flux walls, fixed
/// to the mean-zero gauge.
#[derive(Debug, Clone)]
pub struct NeumannPoisson {
    grid: Grid,
    qx: Vec<f64>,
    qy: Vec<f64>,
    lx: Vec<f64>,
    ly: Vec<f64>,
}

impl NeumannPoisson {
    pub fn new(grid: Grid) -> Self {
        let (qx, lx) = neumann_basis(grid.nx, grid.hx());
        let (qy, ly) = neumann_basis(grid.ny, grid.hy());
        NeumannPoisson { grid, qx, qy, lx, ly }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Solves `L p = rhs` and returns `p` together with the relative
    /// residual. Falls back to CG polishing when the direct solve misses
    /// `tol`.
    pub fn solve(&self, rhs: &ScalarField, tol: f64) -> Result<(ScalarField, f64)> {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        // a[j][k] = sum_i rhs[j][i] qx[i][k]
        let mut a = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &rhs.data[j * nx..(j + 1) * nx];
            let out = &mut a[j * nx..(j + 1) * nx];
            for (i, &r) in row.iter().enumerate() {
                let q = &self.qx[i * nx..(i + 1) * nx];
                for k in 0..nx {
                    out[k] += r * q[k];
                }
            }
        }
        // b[l][k] = sum_j qy[j][l] a[j][k]
        let mut b = vec![0.0; nx * ny];
        for j in 0..ny {
            let src = &a[j * nx..(j + 1) * nx];
            for l in 0..ny {
                let w = self.qy[j * ny + l];
                let out = &mut b[l * nx..(l + 1) * nx];
                for k in 0..nx {
                    out[k] += w * src[k];
                }
            }
        }
        for l in 0..ny {
            for k in 0..nx {
                let lam = self.lx[k] + self.ly[l];
                b[l * nx + k] = if k == 0 && l == 0 { 0.0 } else { b[l * nx + k] / lam };
            }
        }
        // back: a[j][k] = sum_l qy[j][l] b[l][k]
        a.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..ny {
            let out = &mut a[j * nx..(j + 1) * nx];
            for l in 0..ny {
                let w = self.qy[j * ny + l];
                let src = &b[l * nx..(l + 1) * nx];
                for k in 0..nx {
                    out[k] += w * src[k];
                }
            }
        }
        // p[j][i] = sum_k qx[i][k] a[j][k]
        let mut p = ScalarField::zeros(g);
        for j in 0..ny {
            let src = &a[j * nx..(j + 1) * nx];
            for i in 0..nx {
                let q = &self.qx[i * nx..(i + 1) * nx];
                p.data[j * nx + i] = q.iter().zip(src).map(|(x, y)| x * y).sum();
            }
        }
        remove_mean(&mut p.data);
        let mut centred = rhs.data.clone();
        remove_mean(&mut centred);
        let res = self.relative_residual(&p, &centred);
        if res <= tol {
            return Ok((p, res));
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            let f = ScalarField { grid: g, data: x.to_vec() };
            let l = laplacian(&f, ScalarBc::Neumann);
            y.iter_mut().zip(&l.data).for_each(|(a, b)| *a = -b);
        };
        let neg: Vec<f64> = centred.iter().map(|a| -a).collect();
        let report = conjugate_gradient(apply, &neg, &mut p.data, tol, 10 * g.n_cells(), true)?;
        Ok((p, report.relative_residual))
    }

    fn relative_residual(&self, p: &ScalarField, rhs: &[f64]) -> f64 {
        let l = laplacian(p, ScalarBc::Neumann);
        let bn = dot(rhs, rhs).sqrt();
        if bn == 0.0 {
            return 0.0;
        }
        let r: Vec<f64> = l.data.iter().zip(rhs).map(|(a, b)| a - b).collect();
        dot(&r, &r).sqrt() / bn
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumann_solve_inverts_the_laplacian() {
        let g = Grid::new(12, 9, 1.0, 0.7).unwrap();
        let p0 = ScalarField::from_fn(g, |x, y| (2.0 * x).sin() + x * y - 0.3 * y * y);
        let mut p0c = p0.clone();
        remove_mean(&mut p0c.data);
        let rhs = laplacian(&p0, ScalarBc::Neumann);
        let (p, res) = NeumannPoisson::new(g).solve(&rhs, 1e-10).unwrap();
        assert!(res < 1e-12, "residual {res}");
        for (a, b) in p.data.iter().zip(&p0c.data) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_solves_small_spd_system() {
        let apply = |x: &[f64], y: &mut [f64]| {
            y[0] = 4.0 * x[0] + x[1];
            y[1] = x[0] + 3.0 * x[1];
        };
        let mut x = vec![0.0; 2];
        let rep = conjugate_gradient(apply, &[1.0, 2.0], &mut x, 1e-14, 10, false).unwrap();
        assert!(rep.iterations <= 3);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14 && (x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn cg_reports_history_when_capped() {
        let apply = |x: &[f64], y: &mut [f64]| {
            for k in 0..x.len() {
                y[k] = (k + 1) as f64 * x[k];
            }
        };
        let mut x = vec![0.0; 50];
        let err = conjugate_gradient(apply, &vec![1.0; 50], &mut x, 1e-14, 3, false).unwrap_err();
        match err {
            Error::Solver { history, iterations, .. } => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 4);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
