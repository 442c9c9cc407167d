//! Scalar inequalities behind the power-type functionals.
//!
//! `gap_f` is the integrand of `Y^{m,n}` per unit `rho c_V theta_hat`,
//! written in terms of `x = theta_tilde / theta_hat`. `gap_g` is the
//! combination whose sign controls the gradient estimate. Both are
//! evaluated through `r = 1 + x` in forms that avoid cancellation near
//! `r = 1` and overflow for large `r`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

fn check_pair(m: f64, n: f64) -> Result<()> {
    if m.is_finite() && n.is_finite() && 0.0 < m && m < n && n < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("exponents need 0 < m < n < 1 (got m = {m}, n = {n})")))
    }
}

fn check_ratio(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("1 + x must be positive and finite (got {r})")))
    }
}

/// `(r^p - 1)/p` without cancellation near `r = 1`.
#[inline]
pub(crate) fn pow_m1_over(r: f64, p: f64) -> f64 {
    (p * r.ln()).exp_m1() / p
}

/// `(1+x)^n/n - (1+x)^m/m + (n-m)/(mn)`, nonnegative with a single zero
/// at `x = 0`.
pub fn gap_f(x: f64, m: f64, n: f64) -> Result<f64> {
    gap_f_at_ratio(1.0 + x, m, n)
}

pub fn gap_f_at_ratio(r: f64, m: f64, n: f64) -> Result<f64> {
    check_pair(m, n)?;
    check_ratio(r)?;
    Ok(gap_f_unchecked(r, m, n))
}

#[inline]
pub(crate) fn gap_f_unchecked(r: f64, m: f64, n: f64) -> f64 {
    let l = r.ln();
    if l.abs() < 0.1 {
        // sum_{k>=2} (n^{k-1} - m^{k-1}) l^k / k!; the two first-order
        // terms cancel exactly
        let (mut pn, mut pm, mut lk, mut sum) = (1.0, 1.0, l, 0.0);
        for k in 2..=16 {
            pn *= n;
            pm *= m;
            lk *= l / k as f64;
            sum += (pn - pm) * lk;
        }
        sum
    } else {
        pow_m1_over(r, n) - pow_m1_over(r, m)
    }
}

/// `-((1+x)^{m/2} - 1)^2 - ((1+x)^{n/2} - 1)^2 + n gap_f(x)`.
pub fn gap_g(x: f64, m: f64, n: f64) -> Result<f64> {
    gap_g_at_ratio(1.0 + x, m, n)
}

/// Same as [`gap_g`] with `r = 1 + x` as the argument, so points much
/// closer to `x = -1` than `f64` resolution around `-1` are reachable.
pub fn gap_g_at_ratio(r: f64, m: f64, n: f64) -> Result<f64> {
    check_pair(m, n)?;
    check_ratio(r)?;
    if (0.25..=4.0).contains(&r) {
        let a = (0.5 * m * r.ln()).exp_m1();
        let b = (0.5 * n * r.ln()).exp_m1();
        Ok(-a * a - b * b + n * gap_f_unchecked(r, m, n))
    } else {
        // The r^n terms cancel exactly; expanding keeps large r finite.
        Ok(-(1.0 + n / m) * r.powf(m) + 2.0 * r.powf(0.5 * m) + 2.0 * r.powf(0.5 * n) + n / m - 3.0)
    }
}

/// Limit of [`gap_g`] as `x -> -1+`.
pub fn gap_g_lower_limit(m: f64, n: f64) -> f64 {
    n / m - 3.0
}

/// Positive root of `ln(1+x)^2 = x - ln(1+x)`. Below the root
/// `-ln(1+x)^2 <= -(x - ln(1+x))` holds; above it the inequality fails.
pub fn log_crossing() -> f64 {
    let phi = |x: f64| x.ln_1p().powi(2) - (x - x.ln_1p());
    let (mut lo, mut hi) = (1.0, 10.0);
    debug_assert!(phi(lo) > 0.0 && phi(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Whether `-ln(1+x)^2 <= -(x - ln(1+x))` holds at `x`.
pub fn log_square_bound_holds(x: f64) -> bool {
    -x.ln_1p().powi(2) <= -(x - x.ln_1p())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundBranch {
    /// The Taylor coefficient bound already holds down to `x_crit`.
    Direct,
    /// The bound is rescaled so that it meets `f` at `x_crit`.
    Flattened,
}

/// Constant `1/L` with `|x|^l / L <= e^{nx}/n - e^{mx}/m + (n-m)/(mn)` on
/// `[x_crit, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBound {
    pub inv_l: f64,
    pub x_int: f64,
    pub coefficient: f64,
    pub branch: BoundBranch,
}

/// `e^{nx}/n - e^{mx}/m + (n-m)/(mn)` as a function of `x = ln r`.
#[inline]
pub(crate) fn exp_gap(x: f64, m: f64, n: f64) -> f64 {
    (n * x).exp_m1() / n - (m * x).exp_m1() / m
}

fn factorial(l: u32) -> f64 {
    (1..=l).map(f64::from).product()
}

pub fn power_bound_constant(m: f64, n: f64, l: u32, x_crit: f64) -> Result<PowerBound> {
    check_pair(m, n)?;
    if m <= n / 2.0 {
        return Err(domain(format!("power bound needs m > n/2 (got m = {m}, n = {n})")));
    }
    if l < 3 {
        return Err(domain(format!("power bound needs l >= 3 (got {l})")));
    }
    if !(x_crit.is_finite() && x_crit < 0.0) {
        return Err(domain(format!("x_crit must be negative and finite (got {x_crit})")));
    }
    let c = (n.powi(l as i32 - 1) - m.powi(l as i32 - 1)) / factorial(l);
    let diff = |x: f64| exp_gap(x, m, n) - c * x.abs().powi(l as i32);
    let mut reach = (2.0 * x_crit.abs()).max(10.0);
    let (mut a, mut b) = (f64::NAN, f64::NAN);
    'search: for _ in 0..40 {
        let mut prev = 0.0;
        for k in 1..=1000 {
            let x = -reach * k as f64 / 1000.0;
            if diff(x) < 0.0 {
                a = x;
                b = prev;
                break 'search;
            }
            prev = x;
        }
        reach *= 2.0;
    }
    if a.is_nan() {
        return Err(domain("no crossing of the power bound found"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if diff(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let x_int = 0.5 * (a + b);
    Ok(if x_int <= x_crit {
        PowerBound { inv_l: c, x_int, coefficient: c, branch: BoundBranch::Direct }
    } else {
        PowerBound {
            inv_l: exp_gap(x_int, m, n) / x_crit.abs().powi(l as i32),
            x_int,
            coefficient: c,
            branch: BoundBranch::Flattened,
        }
    })
}

/// Thresholds applied by [`decay_hypothesis_check`].
#[derive(Debug, Clone, Copy)]
pub struct DecayThresholds {
    /// Allowed relative growth of the running integrals over the final
    /// tenth of the window.
    pub plateau: f64,
    /// Allowed normalised excess in the sampled integral inequality.
    pub violation: f64,
}

impl Default for DecayThresholds {
    fn default() -> Self {
        DecayThresholds { plateau: 1e-3, violation: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub integral_y: f64,
    pub integral_h: f64,
    pub plateau_y: f64,
    pub plateau_h: f64,
    /// Largest `y(t) - y(s) - int_s^t f(y) - int_s^t h` over sample pairs.
    pub max_violation: f64,
    pub max_normalized_violation: f64,
    /// Largest `y` over the final tenth divided by the largest `y` overall.
    pub tail_ratio: f64,
    pub integrable: bool,
    pub inequality_holds: bool,
    pub passed: bool,
}

fn running_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

fn plateau(running: &[f64], from: usize) -> f64 {
    let total = *running.last().unwrap_or(&0.0);
    if total.abs() <= f64::MIN_POSITIVE {
        return 0.0;
    }
    (total - running[from]) / total.abs()
}

/// Checks the hypotheses of the abstract decay lemma on uniformly sampled
/// `y`, `h` with the nonnegative rate function `f`.
pub fn decay_hypothesis_check(
    y: &[f64],
    h: &[f64],
    f: impl Fn(f64) -> f64,
    dt: f64,
    thresholds: DecayThresholds,
) -> Result<DecayReport> {
    if y.len() != h.len() || y.len() < 2 {
        return Err(domain("decay check needs two equally long series with at least two samples"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(domain(format!("sample spacing must be positive (got {dt})")));
    }
    let fy: Vec<f64> = y.iter().map(|&v| f(v)).collect();
    let iy = running_trapezoid(y, dt);
    let ih = running_trapezoid(h, dt);
    let ify = running_trapezoid(&fy, dt);
    let last = y.len() - 1;
    let from = (0.9 * last as f64).floor() as usize;
    // y(t) - y(s) - (F(t) - F(s)) - (H(t) - H(s)) = G(t) - G(s)
    let mut max_violation = f64::NEG_INFINITY;
    let mut min_g = f64::INFINITY;
    for k in 0..y.len() {
        let gk = y[k] - ify[k] - ih[k];
        if k > 0 {
            max_violation = max_violation.max(gk - min_g);
        }
        min_g = min_g.min(gk);
    }
    let ymax = y.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let scale = ymax + ify[last].abs() + ih[last].abs() + f64::MIN_POSITIVE;
    let max_normalized_violation = max_violation / scale;
    let tail = y[from..].iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let tail_ratio = if ymax > 0.0 { tail / ymax } else { 0.0 };
    let plateau_y = plateau(&iy, from);
    let plateau_h = plateau(&ih, from);
    let integrable = plateau_y < thresholds.plateau && plateau_h < thresholds.plateau;
    let inequality_holds = max_normalized_violation <= thresholds.violation;
    Ok(DecayReport {
        integral_y: iy[last],
        integral_h: ih[last],
        plateau_y,
        plateau_h,
        max_violation,
        max_normalized_violation,
        tail_ratio,
        integrable,
        inequality_holds,
        passed: integrable && inequality_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_f_vanishes_only_at_zero() {
        assert_eq!(gap_f(0.0, 0.6, 0.9).unwrap(), 0.0);
        for x in [-0.999, -0.5, -1e-6, 1e-6, 3.0, 1e3] {
            assert!(gap_f(x, 0.6, 0.9).unwrap() > 0.0, "x = {x}");
        }
    }

    #[test]
    fn gap_f_matches_direct_formula_away_from_zero() {
        let (m, n) = (0.6, 0.9);
        for x in [-0.7, 0.4, 12.0] {
            let r: f64 = 1.0 + x;
            let direct = r.powf(n) / n - r.powf(m) / m + (n - m) / (m * n);
            assert!((gap_f(x, m, n).unwrap() - direct).abs() < 1e-13 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn gap_g_forms_agree_at_the_switch() {
        let (m, n) = (0.55, 0.8);
        for r in [0.25, 4.0] {
            let a = (0.5 * m * f64::ln(r)).exp_m1();
            let b = (0.5 * n * f64::ln(r)).exp_m1();
            let small = -a * a - b * b + n * gap_f_unchecked(r, m, n);
            assert!((gap_g_at_ratio(r, m, n).unwrap() - small).abs() < 1e-13);
        }
    }

    #[test]
    fn gap_g_lower_limit_and_decay() {
        let (m, n) = (0.7, 0.8);
        let g0 = gap_g_at_ratio(f64::MIN_POSITIVE, m, n).unwrap();
        assert!((g0 - gap_g_lower_limit(m, n)).abs() < 1e-6);
        for (m, n) in [(m, n), (0.6, 0.9)] {
            assert!(gap_g(1e6, m, n).unwrap() < -1e3, "({m}, {n})");
        }
    }

    #[test]
    fn domain_errors() {
        assert!(gap_f(-1.0, 0.6, 0.9).is_err());
        assert!(gap_g(0.0, 0.9, 0.6).is_err());
        assert!(power_bound_constant(0.3, 0.9, 3, -5.0).is_err());
        assert!(power_bound_constant(0.6, 0.9, 2, -5.0).is_err());
    }

    #[test]
    fn log_crossing_separates_hold_and_fail() {
        let xc = log_crossing();
        assert!((xc - 5.009_142_941_081_864).abs() < 1e-12);
        assert!(log_square_bound_holds(xc - 0.01));
        assert!(!log_square_bound_holds(xc + 0.01));
        assert!(log_square_bound_holds(-0.5));
    }

    #[test]
    fn power_bound_reference_values() {
        let b3 = power_bound_constant(0.375, 0.5, 3, -5.0).unwrap();
        assert_eq!(b3.branch, BoundBranch::Flattened);
        assert!((b3.inv_l / 0.001_119_367_134_755_809_4 - 1.0).abs() < 1e-10);
        assert!((b3.x_int + 1.972_597_975_184_34).abs() < 1e-10);
        let b4 = power_bound_constant(0.375, 0.5, 4, -5.0).unwrap();
        assert!((b4.inv_l / 0.000_397_861_402_152_021_06 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn power_bound_direct_branch_when_crossing_is_far() {
        let b = power_bound_constant(0.375, 0.5, 3, -1.0).unwrap();
        assert_eq!(b.branch, BoundBranch::Direct);
        assert_eq!(b.inv_l, b.coefficient);
    }

    #[test]
    fn decay_check_accepts_exponential_and_flags_harmonic() {
        let dt = 0.01;
        let y: Vec<f64> = (0..5001).map(|k| (-(k as f64) * dt).exp()).collect();
        let h = vec![0.0; y.len()];
        let rep = decay_hypothesis_check(&y, &h, |v| v, dt, DecayThresholds::default()).unwrap();
        assert!(rep.passed, "{rep:?}");
        let dt = 1.0;
        let y: Vec<f64> = (0..1001).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let h = vec![0.0; y.len()];
        let rep = decay_hypothesis_check(&y, &h, |v| v, dt, DecayThresholds::default()).unwrap();
        assert!(!rep.integrable);
    }

    #[test]
    fn decay_check_detects_growth_beyond_bound() {
        let dt = 0.1;
        let y: Vec<f64> = (0..101).map(|k| 1.0 + k as f64 * dt).collect();
        let h = vec![0.0; y.len()];
        let rep = decay_hypothesis_check(&y, &h, |_| 0.0, dt, DecayThresholds::default()).unwrap();
        assert!(!rep.inequality_holds);
        assert!((rep.max_violation - 10.0).abs() < 1e-9);
    }
}
