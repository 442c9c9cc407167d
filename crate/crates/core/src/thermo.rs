//! Constitutive relations for a linear Fourier fluid with constant heat
//! capacity, together with the power-law change of temperature scale
//! `vartheta / vartheta_ref = (theta / theta_ref)^(1 - m)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Missing keys take the water-like defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Material {
    /// Density, kg/m^3.
    pub rho: f64,
    /// Dynamic viscosity, Pa s.
    pub mu: f64,
    /// Specific heat at constant volume, J/(kg K).
    pub cv_ref: f64,
    /// Thermal conductivity, W/(m K).
    pub kappa_ref: f64,
    /// Reference temperature, K.
    pub theta_ref: f64,
    /// Reference value on the alternative scale; defaults to `theta_ref`.
    #[serde(default)]
    pub vartheta_ref: Option<f64>,
}

impl Default for Material {
    /// Water-like properties at room temperature.
    fn default() -> Self {
        Material { rho: 1000.0, mu: 1e-3, cv_ref: 4180.0, kappa_ref: 0.6, theta_ref: 300.0, vartheta_ref: None }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        for (name, val) in [
            ("rho", self.rho),
            ("mu", self.mu),
            ("cv_ref", self.cv_ref),
            ("kappa_ref", self.kappa_ref),
            ("theta_ref", self.theta_ref),
            ("vartheta_ref", self.vartheta_ref()),
        ] {
            if !(val.is_finite() && val > 0.0) {
                return Err(Error::Config(format!("material.{name} must be positive and finite (got {val})")));
            }
        }
        Ok(())
    }

    pub fn vartheta_ref(&self) -> f64 {
        self.vartheta_ref.unwrap_or(self.theta_ref)
    }

    /// `rho c_V`, J/(m^3 K).
    pub fn heat_capacity(&self) -> f64 {
        self.rho * self.cv_ref
    }

    pub fn kinematic_viscosity(&self) -> f64 {
        self.mu / self.rho
    }

    pub fn thermal_diffusivity(&self) -> f64 {
        self.kappa_ref / self.heat_capacity()
    }
}

/// Exponents of the power-type functionals, `n/2 < m < n < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentPair {
    pub m: f64,
    pub n: f64,
}

impl ExponentPair {
    pub fn new(m: f64, n: f64) -> Result<Self> {
        let p = ExponentPair { m, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.m, self.n);
        if !(m.is_finite() && n.is_finite() && 0.0 < m && m < n && n < 1.0) {
            return Err(Error::Config(format!("exponents need 0 < m < n < 1 (got m = {m}, n = {n})")));
        }
        if m <= n / 2.0 {
            return Err(Error::Config(format!("exponents: m > n/2 violated (m = {m}, n/2 = {})", n / 2.0)));
        }
        Ok(())
    }
}

fn positive(what: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{what} must be positive and finite (got {x})")))
    }
}

fn alt_exponent(m: f64) -> Result<()> {
    if m.is_finite() && 0.0 < m && m < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("scale exponent must lie in (0, 1) (got {m})")))
    }
}

/// Specific Helmholtz free energy `-c_V theta (ln(theta/theta_ref) - 1)`.
pub fn helmholtz(theta: f64, mat: &Material) -> Result<f64> {
    positive("temperature", theta)?;
    Ok(-mat.cv_ref * theta * ((theta / mat.theta_ref).ln() - 1.0))
}

/// Specific entropy `c_V ln(theta/theta_ref)`.
pub fn entropy(theta: f64, mat: &Material) -> Result<f64> {
    positive("temperature", theta)?;
    Ok(mat.cv_ref * (theta / mat.theta_ref).ln())
}

pub fn internal_energy(theta: f64, mat: &Material) -> Result<f64> {
    positive("temperature", theta)?;
    Ok(mat.cv_ref * theta)
}

/// Entropy difference `c_V ln(1 + theta_tilde/theta_hat)` between the
/// perturbed and the steady state.
pub fn relative_entropy(theta_tilde: f64, theta_hat: f64, mat: &Material) -> Result<f64> {
    positive("steady temperature", theta_hat)?;
    let x = theta_tilde / theta_hat;
    if !(x > -1.0) {
        return Err(domain(format!("1 + theta_tilde/theta_hat must be positive (got {})", 1.0 + x)));
    }
    Ok(mat.cv_ref * x.ln_1p())
}

/// `vartheta_ref (theta/theta_ref)^(1-m)`.
pub fn alt_scale(theta: f64, m: f64, mat: &Material) -> Result<f64> {
    positive("temperature", theta)?;
    alt_exponent(m)?;
    Ok(mat.vartheta_ref() * (theta / mat.theta_ref).powf(1.0 - m))
}

/// Perturbation on the alternative scale,
/// `vartheta(theta_hat + theta_tilde) - vartheta(theta_hat)`, evaluated
/// without subtracting two nearly equal values.
pub fn alt_perturbation(theta_tilde: f64, theta_hat: f64, m: f64, mat: &Material) -> Result<f64> {
    let base = alt_scale(theta_hat, m, mat)?;
    let x = theta_tilde / theta_hat;
    if !(x > -1.0) {
        return Err(domain(format!("1 + theta_tilde/theta_hat must be positive (got {})", 1.0 + x)));
    }
    Ok(base * ((1.0 - m) * x.ln_1p()).exp_m1())
}

pub fn alt_scale_inverse(vartheta: f64, m: f64, mat: &Material) -> Result<f64> {
    positive("temperature", vartheta)?;
    alt_exponent(m)?;
    Ok(mat.theta_ref * (vartheta / mat.vartheta_ref()).powf(1.0 / (1.0 - m)))
}

/// Conductivity seen on the alternative scale; makes the heat flux
/// `kappa(vartheta) grad vartheta` equal to `kappa_ref grad theta`.
pub fn alt_kappa(vartheta: f64, m: f64, mat: &Material) -> Result<f64> {
    positive("temperature", vartheta)?;
    alt_exponent(m)?;
    let u = vartheta / mat.vartheta_ref();
    Ok(mat.kappa_ref / (1.0 - m) * (mat.theta_ref / mat.vartheta_ref()) * u.powf(m / (1.0 - m)))
}

pub fn alt_cv(vartheta: f64, m: f64, mat: &Material) -> Result<f64> {
    positive("temperature", vartheta)?;
    alt_exponent(m)?;
    let u = vartheta / mat.vartheta_ref();
    Ok(mat.cv_ref / (1.0 - m) * (mat.theta_ref / mat.vartheta_ref()) * u.powf(m / (1.0 - m)))
}

pub fn alt_entropy(vartheta: f64, m: f64, mat: &Material) -> Result<f64> {
    positive("temperature", vartheta)?;
    alt_exponent(m)?;
    let u = vartheta / mat.vartheta_ref();
    Ok(mat.cv_ref * (mat.theta_ref / mat.vartheta_ref()) * ((m / (1.0 - m)) * u.ln()).exp_m1() / m)
}

pub fn alt_internal_energy(vartheta: f64, m: f64, mat: &Material) -> Result<f64> {
    positive("temperature", vartheta)?;
    alt_exponent(m)?;
    let u = vartheta / mat.vartheta_ref();
    Ok(mat.cv_ref * mat.theta_ref * u.powf(1.0 / (1.0 - m)))
}

pub fn alt_helmholtz(vartheta: f64, m: f64, mat: &Material) -> Result<f64> {
    positive("temperature", vartheta)?;
    alt_exponent(m)?;
    let u = vartheta / mat.vartheta_ref();
    Ok(-mat.cv_ref * mat.theta_ref / m * ((1.0 - m) * u.powf(1.0 / (1.0 - m)) - u))
}
