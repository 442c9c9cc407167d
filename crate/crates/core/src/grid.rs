//! Uniform MAC grid on a rectangle, staggered fields and the discrete
//! operators built on them.
//!
//! Scalars live at cell centres. The velocity component `u` lives on the
//! vertical faces and `v` on the horizontal faces. The shear entry of the
//! symmetric gradient lives on cell corners. Wall values of a Dirichlet
//! scalar enter through the ghost value `2 g - f_interior`, and tangential
//! velocity uses the same reflection about the prescribed wall velocity.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(domain(format!("grid needs nx, ny >= 4 (got {nx} x {ny})")));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(domain(format!("domain lengths must be positive (got {lx} x {ly})")));
        }
        Ok(Grid { nx, ny, lx, ly })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Grid::new(n, n, 1.0, 1.0)
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_v(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    pub fn n_corners(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn u_at(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn v_at(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn corner(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Cell-centre coordinates.
    #[inline]
    pub fn xc(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    #[inline]
    pub fn yc(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }

    /// Node (face or corner) coordinates.
    #[inline]
    pub fn xn(&self, i: usize) -> f64 {
        i as f64 * self.hx()
    }

    #[inline]
    pub fn yn(&self, j: usize) -> f64 {
        j as f64 * self.hy()
    }

    /// Same domain with both resolutions doubled.
    pub fn refined(&self) -> Grid {
        Grid { nx: 2 * self.nx, ny: 2 * self.ny, ..*self }
    }
}

/// Values of a scalar at the midpoints of the wall faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallData {
    /// x = 0, indexed by row j.
    pub left: Vec<f64>,
    /// x = lx, indexed by row j.
    pub right: Vec<f64>,
    /// y = 0, indexed by column i.
    pub bottom: Vec<f64>,
    /// y = ly, indexed by column i.
    pub top: Vec<f64>,
}

impl WallData {
    pub fn zeros(grid: &Grid) -> Self {
        WallData {
            left: vec![0.0; grid.ny],
            right: vec![0.0; grid.ny],
            bottom: vec![0.0; grid.nx],
            top: vec![0.0; grid.nx],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        WallData {
            left: (0..grid.ny).map(|j| f(0.0, grid.yc(j))).collect(),
            right: (0..grid.ny).map(|j| f(grid.lx, grid.yc(j))).collect(),
            bottom: (0..grid.nx).map(|i| f(grid.xc(i), 0.0)).collect(),
            top: (0..grid.nx).map(|i| f(grid.xc(i), grid.ly)).collect(),
        }
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.left.len() == grid.ny
            && self.right.len() == grid.ny
            && self.bottom.len() == grid.nx
            && self.top.len() == grid.nx
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.left.iter().chain(&self.right).chain(&self.bottom).chain(&self.top).copied()
    }

    pub fn min(&self) -> f64 {
        self.iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Boundary treatment for scalar gradients and Laplacians.
#[derive(Debug, Clone, Copy)]
pub enum ScalarBc<'a> {
    /// Homogeneous Dirichlet: the ghost value is `-f_interior`.
    Zero,
    Dirichlet(&'a WallData),
    /// Zero normal derivative on every wall.
    Neumann,
}

impl ScalarBc<'_> {
    #[inline]
    fn ghost(&self, interior: f64, wall: impl FnOnce(&WallData) -> f64) -> f64 {
        match self {
            ScalarBc::Zero => -interior,
            ScalarBc::Dirichlet(w) => 2.0 * wall(w) - interior,
            ScalarBc::Neumann => interior,
        }
    }
}

/// Tangential wall velocity sampled at the corners along each wall.
/// No-slip walls use all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentialWalls {
    /// `u` along y = 0 at x = i hx, i in 0..=nx.
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
    /// `v` along x = 0 at y = j hy, j in 0..=ny.
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl TangentialWalls {
    pub fn no_slip(grid: &Grid) -> Self {
        TangentialWalls {
            bottom: vec![0.0; grid.nx + 1],
            top: vec![0.0; grid.nx + 1],
            left: vec![0.0; grid.ny + 1],
            right: vec![0.0; grid.ny + 1],
        }
    }

    /// Samples a prescribed velocity field along the walls.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        TangentialWalls {
            bottom: (0..=grid.nx).map(|i| f(grid.xn(i), 0.0).0).collect(),
            top: (0..=grid.nx).map(|i| f(grid.xn(i), grid.ly).0).collect(),
            left: (0..=grid.ny).map(|j| f(0.0, grid.yn(j)).1).collect(),
            right: (0..=grid.ny).map(|j| f(grid.lx, grid.yn(j)).1).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField { grid, data: vec![0.0; grid.n_cells()] }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField { grid, data: vec![value; grid.n_cells()] }
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.xc(i), grid.yc(j)));
            }
        }
        ScalarField { grid, data }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.n_cells() {
            return Err(domain(format!("scalar field needs {} values, got {}", grid.n_cells(), data.len())));
        }
        Ok(ScalarField { grid, data })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.cell(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid, data: self.data.iter().map(|&a| f(a)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField { grid: self.grid, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }
}

/// Face-centred vector field. Faces on the walls are stored but carry the
/// normal velocity, which is zero for admissible flows.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField { grid, u: vec![0.0; grid.n_u()], v: vec![0.0; grid.n_v()] }
    }

    /// Samples `f` at the face midpoints; wall faces keep the sampled
    /// normal component.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut out = VectorField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                out.u[grid.u_at(i, j)] = f(grid.xn(i), grid.yc(j)).0;
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                out.v[grid.v_at(i, j)] = f(grid.xc(i), grid.yn(j)).1;
            }
        }
        out
    }

    /// Discrete curl of a corner streamfunction. The result is exactly
    /// divergence free, and wall faces vanish when `psi` vanishes on the
    /// boundary.
    pub fn from_streamfunction(grid: Grid, psi: impl Fn(f64, f64) -> f64) -> Self {
        let (hx, hy) = (grid.hx(), grid.hy());
        let mut corner = vec![0.0; grid.n_corners()];
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                corner[grid.corner(i, j)] = psi(grid.xn(i), grid.yn(j));
            }
        }
        let mut out = VectorField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                out.u[grid.u_at(i, j)] = (corner[grid.corner(i, j + 1)] - corner[grid.corner(i, j)]) / hy;
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                out.v[grid.v_at(i, j)] = -(corner[grid.corner(i + 1, j)] - corner[grid.corner(i, j)]) / hx;
            }
        }
        out
    }

    /// Sets the normal velocity on every wall face to zero.
    pub fn enforce_no_penetration(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            self.u[g.u_at(0, j)] = 0.0;
            self.u[g.u_at(g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.v[g.v_at(i, 0)] = 0.0;
            self.v[g.v_at(i, g.ny)] = 0.0;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|a| a.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        self.u.iter_mut().chain(self.v.iter_mut()).for_each(|a| *a *= s);
    }
}

/// Symmetric part of the discrete velocity gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SymGradField {
    pub grid: Grid,
    /// Cell centres.
    pub d11: Vec<f64>,
    pub d22: Vec<f64>,
    /// Cell corners.
    pub d12: Vec<f64>,
}

/// Compensated sum; keeps quadratures reproducible and accurate when
/// large and small contributions mix.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Midpoint quadrature over the domain.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid.cell_area() * neumaier_sum(f.data.iter().copied())
}

/// Trapezoid weight of face index `k` out of `0..=n` along its normal.
#[inline]
fn face_weight(k: usize, n: usize) -> f64 {
    if k == 0 || k == n {
        0.5
    } else {
        1.0
    }
}

/// Weighted face inner product `sum w a.b hx hy`. Wall faces carry half
/// weight, which makes it the exact integral of the centre-averaged
/// product.
pub fn face_dot(a: &VectorField, b: &VectorField) -> f64 {
    let g = a.grid;
    let mut terms = Vec::with_capacity(g.n_u() + g.n_v());
    for j in 0..g.ny {
        for i in 0..=g.nx {
            let k = g.u_at(i, j);
            terms.push(face_weight(i, g.nx) * a.u[k] * b.u[k]);
        }
    }
    for j in 0..=g.ny {
        for i in 0..g.nx {
            let k = g.v_at(i, j);
            terms.push(face_weight(j, g.ny) * a.v[k] * b.v[k]);
        }
    }
    g.cell_area() * neumaier_sum(terms)
}

/// Face-normal derivatives of a cell-centred scalar, wall faces included.
pub fn gradient(f: &ScalarField, bc: ScalarBc) -> VectorField {
    let g = f.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        let left_ghost = bc.ghost(f.at(0, j), |w| w.left[j]);
        out.u[g.u_at(0, j)] = (f.at(0, j) - left_ghost) / hx;
        for i in 1..g.nx {
            out.u[g.u_at(i, j)] = (f.at(i, j) - f.at(i - 1, j)) / hx;
        }
        let right_ghost = bc.ghost(f.at(g.nx - 1, j), |w| w.right[j]);
        out.u[g.u_at(g.nx, j)] = (right_ghost - f.at(g.nx - 1, j)) / hx;
    }
    for i in 0..g.nx {
        let bottom_ghost = bc.ghost(f.at(i, 0), |w| w.bottom[i]);
        out.v[g.v_at(i, 0)] = (f.at(i, 0) - bottom_ghost) / hy;
        for j in 1..g.ny {
            out.v[g.v_at(i, j)] = (f.at(i, j) - f.at(i, j - 1)) / hy;
        }
        let top_ghost = bc.ghost(f.at(i, g.ny - 1), |w| w.top[i]);
        out.v[g.v_at(i, g.ny)] = (top_ghost - f.at(i, g.ny - 1)) / hy;
    }
    out
}

/// Face values of a cell-centred scalar (arithmetic mean, wall value on
/// wall faces).
pub fn face_values(f: &ScalarField, bc: ScalarBc) -> VectorField {
    let g = f.grid;
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        let left_ghost = bc.ghost(f.at(0, j), |w| w.left[j]);
        out.u[g.u_at(0, j)] = 0.5 * (f.at(0, j) + left_ghost);
        for i in 1..g.nx {
            out.u[g.u_at(i, j)] = 0.5 * (f.at(i, j) + f.at(i - 1, j));
        }
        let right_ghost = bc.ghost(f.at(g.nx - 1, j), |w| w.right[j]);
        out.u[g.u_at(g.nx, j)] = 0.5 * (right_ghost + f.at(g.nx - 1, j));
    }
    for i in 0..g.nx {
        let bottom_ghost = bc.ghost(f.at(i, 0), |w| w.bottom[i]);
        out.v[g.v_at(i, 0)] = 0.5 * (f.at(i, 0) + bottom_ghost);
        for j in 1..g.ny {
            out.v[g.v_at(i, j)] = 0.5 * (f.at(i, j) + f.at(i, j - 1));
        }
        let top_ghost = bc.ghost(f.at(i, g.ny - 1), |w| w.top[i]);
        out.v[g.v_at(i, g.ny)] = 0.5 * (top_ghost + f.at(i, g.ny - 1));
    }
    out
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.data[g.cell(i, j)] =
                (v.u[g.u_at(i + 1, j)] - v.u[g.u_at(i, j)]) / hx + (v.v[g.v_at(i, j + 1)] - v.v[g.v_at(i, j)]) / hy;
        }
    }
    out
}

/// Centre average of a face-normal quantity: `(a_w a_e)/2 + (a_s a_n)/2`
/// per component, applied to the products `a * b`.
pub fn face_product_to_centre(a: &VectorField, b: &VectorField) -> ScalarField {
    let g = a.grid;
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (w, e) = (g.u_at(i, j), g.u_at(i + 1, j));
            let (s, n) = (g.v_at(i, j), g.v_at(i, j + 1));
            out.data[g.cell(i, j)] = 0.5 * (a.u[w] * b.u[w] + a.u[e] * b.u[e] + a.v[s] * b.v[s] + a.v[n] * b.v[n]);
        }
    }
    out
}

/// Cell-centred `v . grad f`, averaging the two face contributions in each
/// direction. For a divergence-free `v` this equals the flux form
/// `div(v f)` and sums by parts without remainder.
pub fn advect_scalar(v: &VectorField, f: &ScalarField, bc: ScalarBc) -> ScalarField {
    face_product_to_centre(v, &gradient(f, bc))
}

/// Five-point Laplacian with Dirichlet ghosts; `None` means zero wall data.
pub fn laplacian_dirichlet(f: &ScalarField, walls: Option<&WallData>) -> ScalarField {
    let bc = walls.map_or(ScalarBc::Zero, ScalarBc::Dirichlet);
    laplacian(f, bc)
}

pub fn laplacian(f: &ScalarField, bc: ScalarBc) -> ScalarField {
    let g = f.grid;
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = f.at(i, j);
            let w = if i > 0 { f.at(i - 1, j) } else { bc.ghost(c, |d| d.left[j]) };
            let e = if i + 1 < g.nx { f.at(i + 1, j) } else { bc.ghost(c, |d| d.right[j]) };
            let s = if j > 0 { f.at(i, j - 1) } else { bc.ghost(c, |d| d.bottom[i]) };
            let n = if j + 1 < g.ny { f.at(i, j + 1) } else { bc.ghost(c, |d| d.top[i]) };
            out.data[g.cell(i, j)] = (w - 2.0 * c + e) * ihx2 + (s - 2.0 * c + n) * ihy2;
        }
    }
    out
}

/// `du/dy` and `dv/dx` at every corner, with wall ghosts reflected about
/// the prescribed tangential velocity.
pub fn corner_shear(v: &VectorField, walls: &TangentialWalls) -> (Vec<f64>, Vec<f64>) {
    let g = v.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut uy = vec![0.0; g.n_corners()];
    let mut vx = vec![0.0; g.n_corners()];
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let above = if j < g.ny { v.u[g.u_at(i, j)] } else { 2.0 * walls.top[i] - v.u[g.u_at(i, g.ny - 1)] };
            let below = if j > 0 { v.u[g.u_at(i, j - 1)] } else { 2.0 * walls.bottom[i] - v.u[g.u_at(i, 0)] };
            uy[g.corner(i, j)] = (above - below) / hy;
            let right = if i < g.nx { v.v[g.v_at(i, j)] } else { 2.0 * walls.right[j] - v.v[g.v_at(g.nx - 1, j)] };
            let left = if i > 0 { v.v[g.v_at(i - 1, j)] } else { 2.0 * walls.left[j] - v.v[g.v_at(0, j)] };
            vx[g.corner(i, j)] = (right - left) / hx;
        }
    }
    (uy, vx)
}

/// Symmetric gradient for a no-slip velocity.
pub fn sym_grad(v: &VectorField) -> SymGradField {
    sym_grad_with_walls(v, &TangentialWalls::no_slip(&v.grid))
}

pub fn sym_grad_with_walls(v: &VectorField, walls: &TangentialWalls) -> SymGradField {
    let g = v.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut d11 = vec![0.0; g.n_cells()];
    let mut d22 = vec![0.0; g.n_cells()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            d11[c] = (v.u[g.u_at(i + 1, j)] - v.u[g.u_at(i, j)]) / hx;
            d22[c] = (v.v[g.v_at(i, j + 1)] - v.v[g.v_at(i, j)]) / hy;
        }
    }
    let (uy, vx) = corner_shear(v, walls);
    let d12 = uy.iter().zip(&vx).map(|(a, b)| 0.5 * (a + b)).collect();
    SymGradField { grid: g, d11, d22, d12 }
}

#[inline]
fn corner_mean(g: &Grid, c: &[f64], i: usize, j: usize) -> f64 {
    0.25 * (c[g.corner(i, j)] + c[g.corner(i + 1, j)] + c[g.corner(i, j + 1)] + c[g.corner(i + 1, j + 1)])
}

/// Cell-centred `D:D = D11^2 + D22^2 + 2 <D12^2>` where `<.>` is the mean
/// over the four corners of the cell.
pub fn double_dot(d: &SymGradField) -> ScalarField {
    let g = d.grid;
    let sq: Vec<f64> = d.d12.iter().map(|a| a * a).collect();
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            out.data[c] = d.d11[c] * d.d11[c] + d.d22[c] * d.d22[c] + 2.0 * corner_mean(&g, &sq, i, j);
        }
    }
    out
}

/// Cell-centred `|grad v|^2` assembled from the same differences as
/// [`sym_grad`].
pub fn grad_sq(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let (uy, vx) = corner_shear(v, &TangentialWalls::no_slip(&g));
    let cross: Vec<f64> = uy.iter().zip(&vx).map(|(a, b)| a * a + b * b).collect();
    let d = sym_grad(v);
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            out.data[c] = d.d11[c] * d.d11[c] + d.d22[c] * d.d22[c] + corner_mean(&g, &cross, i, j);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine_field(grid: Grid) -> VectorField {
        VectorField::from_fn(grid, |x, y| {
            (
                (PI * x).sin() * (2.0 * PI * y).sin() + 0.3 * (2.0 * PI * x).sin() * (PI * y).sin(),
                (3.0 * PI * x).sin() * (PI * y).sin(),
            )
        })
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
    }

    #[test]
    fn integrate_constant_and_linear_exactly() {
        let g = Grid::new(8, 6, 2.0, 1.5).unwrap();
        assert!((integrate(&ScalarField::constant(g, 1.0)) - 3.0).abs() < 1e-15);
        // 2x - y + 1 over [0,2] x [0,1.5] integrates to 6 - 2.25 + 3.
        let lin = ScalarField::from_fn(g, |x, y| 2.0 * x - y + 1.0);
        assert!((integrate(&lin) - 6.75).abs() < 1e-13);
    }

    #[test]
    fn divergence_of_streamfunction_velocity_vanishes() {
        let g = Grid::new(16, 12, 1.0, 0.8).unwrap();
        let v = VectorField::from_streamfunction(g, |x, y| (PI * x).sin().powi(2) * (PI * y / 0.8).sin());
        assert!(divergence(&v).max_abs() < 1e-12);
    }

    #[test]
    fn gradient_is_minus_adjoint_of_divergence() {
        let g = Grid::unit_square(12).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x).cos() + x * y * y);
        let mut v = sine_field(g);
        v.enforce_no_penetration();
        let lhs = integrate(&f.zip_map(&divergence(&v), |a, b| a * b));
        let rhs = -face_dot(&gradient(&f, ScalarBc::Neumann), &v);
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn pure_shear_has_constant_double_dot() {
        let g = Grid::unit_square(8).unwrap();
        let gamma = 0.7;
        let field = |_x: f64, y: f64| (gamma * y, 0.0);
        let v = VectorField::from_fn(g, field);
        let d = sym_grad_with_walls(&v, &TangentialWalls::from_fn(&g, field));
        for dd in double_dot(&d).data {
            assert!((dd - gamma * gamma / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_motions_have_zero_strain() {
        let g = Grid::unit_square(8).unwrap();
        let rotation = |x: f64, y: f64| (-(y - 0.5), x - 0.5);
        let translation = |_x: f64, _y: f64| (0.4, -0.2);
        for field in [&rotation as &dyn Fn(f64, f64) -> (f64, f64), &translation] {
            let v = VectorField::from_fn(g, field);
            let d = sym_grad_with_walls(&v, &TangentialWalls::from_fn(&g, field));
            assert!(double_dot(&d).max_abs() < 1e-24);
        }
    }

    #[test]
    fn discrete_korn_identity_is_exact_for_wall_vanishing_fields() {
        let g = Grid::new(10, 14, 1.0, 1.3).unwrap();
        let mut v = sine_field(g);
        v.enforce_no_penetration();
        let lhs = 2.0 * integrate(&double_dot(&sym_grad(&v)));
        let div = divergence(&v);
        let rhs = integrate(&grad_sq(&v)) + integrate(&div.map(|a| a * a));
        assert!((lhs - rhs).abs() < 1e-12 * lhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn dirichlet_laplacian_reproduces_linear_data() {
        let g = Grid::new(9, 7, 1.0, 2.0).unwrap();
        let lin = |x: f64, y: f64| 300.0 + 20.0 * x - 3.0 * y;
        let walls = WallData::from_fn(&g, lin);
        let f = ScalarField::from_fn(g, lin);
        assert!(laplacian_dirichlet(&f, Some(&walls)).max_abs() < 1e-8);
    }

    #[test]
    fn sine_mode_is_discrete_eigenvector() {
        let n = 16;
        let g = Grid::unit_square(n).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin());
        let h = g.hx();
        let lambda = 2.0 * 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        let lap = laplacian_dirichlet(&f, None);
        for (a, b) in lap.data.iter().zip(&f.data) {
            assert!((a + lambda * b).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_converges_at_second_order_in_the_interior() {
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = Grid::unit_square(n).unwrap();
            let f = ScalarField::from_fn(g, |x, y| (2.0 * x).sin() * (y * 3.0).cos());
            let grad = gradient(&f, ScalarBc::Neumann);
            let mut err: f64 = 0.0;
            for j in 0..n {
                for i in 1..n {
                    let (x, y) = (g.xn(i), g.yc(j));
                    let exact = 2.0 * (2.0 * x).cos() * (3.0 * y).cos();
                    err = err.max((grad.u[g.u_at(i, j)] - exact).abs());
                }
            }
            errs.push(err);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn neumaier_sum_recovers_cancelled_terms() {
        assert_eq!(neumaier_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
    }
}
