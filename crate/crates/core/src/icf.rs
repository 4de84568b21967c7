//! The parametric intrinsic covariance function
//!
//! ```text
//! phi_kappa(h; r) = sum_{l >= kappa} (2l + 1) / (4 pi) r^l P_l(cos h)
//! ```
//!
//! and its closed-form parent (the `kappa = 0` Poisson-kernel sum).

use crate::error::{Error, Result};
use crate::scalar::{cst, from_usize, to_f64, Real};
use crate::sphere::legendre_unchecked;

/// Default truncation tolerance of the Legendre series.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Largest series cutoff ever used.
pub const MAX_L: usize = 2000;
/// Upper cap applied to the decay parameter in evaluation and fitting.
pub const R_MAX: f64 = 0.999;

/// Exact tail `sum_{l > big_l} (2l + 1) r^l / (4 pi)` of the `P_l = 1` series.
fn tail_sum(r: f64, big_l: usize) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let lead = r.powi(big_l as i32 + 1);
    let a = (2 * big_l + 3) as f64 / (1.0 - r);
    let b = 2.0 * r / ((1.0 - r) * (1.0 - r));
    lead * (a + b) / (4.0 * std::f64::consts::PI)
}

fn check_decay<T: Real>(r: T) -> Result<T> {
    if !r.is_finite() || r < T::zero() || r >= T::one() {
        return Err(Error::Decay(to_f64(r)));
    }
    Ok(r)
}

/// `phi_kappa(.; r)` with its series cutoff fixed at construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcfModel<T> {
    kappa: usize,
    r: T,
    l_max: usize,
    tol: T,
    series: bool,
}

impl<T: Real> IcfModel<T> {
    pub fn new(kappa: usize, r: T) -> Result<Self> {
        Self::with_tol(kappa, r, cst(DEFAULT_TOL))
    }

    /// Chooses the smallest cutoff `L >= kappa` whose exact tail is below
    /// `tol`. When that needs more than [`MAX_L`] terms the model evaluates
    /// through the closed form minus the head terms instead.
    pub fn with_tol(kappa: usize, r: T, tol: T) -> Result<Self> {
        let r = check_decay(r)?;
        if !(tol > T::zero()) {
            return Err(Error::Invalid(format!("tolerance must be positive, got {}", to_f64(tol))));
        }
        let r = if r > cst(R_MAX) {
            log::debug!("decay parameter {} capped at {R_MAX}", to_f64(r));
            cst(R_MAX)
        } else {
            r
        };
        let rf = to_f64(r);
        let tolf = to_f64(tol);
        let found = (kappa..=MAX_L.max(kappa)).find(|&l| tail_sum(rf, l) < tolf);
        let (l_max, series) = match found {
            Some(l) => (l, true),
            None => (MAX_L.max(kappa), false),
        };
        Ok(Self { kappa, r, l_max, tol, series })
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn tol(&self) -> T {
        self.tol
    }

    /// Whether evaluation uses the truncated series (otherwise the closed
    /// form minus head terms).
    pub fn uses_series(&self) -> bool {
        self.series
    }

    /// Same model family with a different truncation degree.
    pub fn with_kappa(&self, kappa: usize) -> Result<Self> {
        Self::with_tol(kappa, self.r, self.tol)
    }

    /// `phi_kappa(h)`; `h` is clamped to `[0, pi]`.
    pub fn eval(&self, h: T) -> T {
        let h = h.clamp(T::zero(), T::pi());
        self.eval_cos(h.cos())
    }

    /// `phi_kappa` as a function of `cos h`.
    pub fn eval_cos(&self, c: T) -> T {
        let c = c.clamp(-T::one(), T::one());
        if self.series {
            series_sum(self.r, self.kappa, self.l_max, c)
        } else {
            closed_form_cos(self.r, c) - head_sum(self.r, self.kappa, c)
        }
    }
}

/// `sum_{l=from}^{to} (2l + 1) / (4 pi) r^l P_l(c)`.
fn series_sum<T: Real>(r: T, from: usize, to: usize, c: T) -> T {
    let four_pi = cst::<T>(4.0) * T::pi();
    let mut acc = T::zero();
    let mut rl = T::one();
    let mut p_prev = T::one();
    let mut p_cur = c;
    for l in 0..=to {
        let p = match l {
            0 => T::one(),
            1 => c,
            _ => {
                let lf: T = from_usize(l);
                let next = ((lf + lf - T::one()) * c * p_cur - (lf - T::one()) * p_prev) / lf;
                p_prev = p_cur;
                p_cur = next;
                next
            }
        };
        if l >= from {
            acc += from_usize::<T>(2 * l + 1) * rl * p;
        }
        rl *= r;
    }
    acc / four_pi
}

fn head_sum<T: Real>(r: T, kappa: usize, c: T) -> T {
    if kappa == 0 {
        return T::zero();
    }
    series_sum(r, 0, kappa - 1, c)
}

fn closed_form_cos<T: Real>(r: T, c: T) -> T {
    let four_pi = cst::<T>(4.0) * T::pi();
    let base = T::one() - (r + r) * c + r * r;
    (T::one() - r * r) / (four_pi * base * base.sqrt())
}

/// Series evaluation of `phi_kappa(h)` for a lag in `[0, pi]`.
pub fn icf_eval<T: Real>(model: &IcfModel<T>, h: T) -> Result<T> {
    check_lag(h)?;
    Ok(model.eval(h))
}

/// `(1 - r^2) / (4 pi) (1 - 2 r cos h + r^2)^(-3/2)`, the `kappa = 0` sum.
pub fn icf_closed_form<T: Real>(r: T, h: T) -> Result<T> {
    let r = check_decay(r)?;
    Ok(closed_form_cos(r, h.cos()))
}

/// The closed form minus the `l < kappa` head terms; an evaluation route
/// independent of the series cutoff.
pub fn icf_truncated_via_subtraction<T: Real>(r: T, kappa: usize, h: T) -> Result<T> {
    let r = check_decay(r)?;
    let c = h.cos();
    Ok(closed_form_cos(r, c) - head_sum(r, kappa, c))
}

fn check_lag<T: Real>(h: T) -> Result<()> {
    if !h.is_finite() || h < T::zero() || h > T::pi() + cst(1e-12) {
        return Err(Error::Invalid(format!("lag {} is outside [0, pi]", to_f64(h))));
    }
    Ok(())
}

/// `(2l + 1) / (4 pi) r^l P_l(cos h)`, one term of the series.
pub fn icf_term<T: Real>(r: T, l: usize, h: T) -> T {
    let four_pi = cst::<T>(4.0) * T::pi();
    from_usize::<T>(2 * l + 1) * r.powi(l as i32) * legendre_unchecked(l, h.cos()) / four_pi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn zero_decay_truncated_is_identically_zero() {
        for kappa in 1..5 {
            let m = IcfModel::new(kappa, 0.0).unwrap();
            for i in 0..20 {
                assert_eq!(m.eval(i as f64 * PI / 19.0), 0.0);
            }
        }
        let m0 = IcfModel::new(0, 0.0).unwrap();
        assert_abs_diff_eq!(m0.eval(1.0), 1.0 / (4.0 * PI), epsilon = 1e-16);
    }

    #[test]
    fn geometric_series_value_at_zero_lag() {
        let m = IcfModel::new(0, 0.75).unwrap();
        // (1 + r) / (4 pi (1 - r)^2)
        let expect = 1.75 / (4.0 * PI * 0.0625);
        assert_abs_diff_eq!(expect, 2.228169203286535, epsilon = 1e-15);
        assert_abs_diff_eq!(icf_eval(&m, 0.0).unwrap(), expect, epsilon = 1e-11);
        assert_abs_diff_eq!(icf_closed_form(0.75, 0.0).unwrap(), expect, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_examples() {
        assert_abs_diff_eq!(icf_closed_form(0.0, 2.0).unwrap(), 1.0 / (4.0 * PI), epsilon = 1e-16);
        // cos h = -1: (1 - r^2) / (4 pi (1 + r)^3) = (1 - r) / (4 pi (1 + r)^2)
        let antipodal = 0.25 / (4.0 * PI * 1.75 * 1.75);
        assert_abs_diff_eq!(antipodal, 0.006496120126199809, epsilon = 1e-17);
        assert_abs_diff_eq!(icf_closed_form(0.75, PI).unwrap(), antipodal, epsilon = 1e-16);
        assert!(icf_closed_form(1.0, 0.0).is_err());
        assert!(icf_closed_form(-0.1, 0.0).is_err());
    }

    #[test]
    fn subtraction_examples() {
        for h in [0.0, 0.3, 2.0] {
            assert_eq!(
                icf_truncated_via_subtraction(0.75, 0, h).unwrap(),
                icf_closed_form(0.75, h).unwrap()
            );
        }
        // 2.228169203 - (1 + 3 * 0.75) / (4 pi)
        assert_abs_diff_eq!(
            icf_truncated_via_subtraction(0.75, 2, 0.0).unwrap(),
            1.9695424207622052,
            epsilon = 1e-13
        );
        let m = IcfModel::new(3, 0.75).unwrap();
        let tol = m.tol();
        assert!((icf_truncated_via_subtraction(0.75, 3, PI / 2.0).unwrap() - m.eval(PI / 2.0)).abs() < 2.0 * tol);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(IcfModel::new(1, 1.0), Err(Error::Decay(_))));
        assert!(matches!(IcfModel::new(1, -0.5), Err(Error::Decay(_))));
        assert!(IcfModel::with_tol(1, 0.5, 0.0).is_err());
        let m = IcfModel::new(1, 0.5).unwrap();
        assert!(icf_eval(&m, -0.1).is_err());
        assert!(icf_eval(&m, 3.5).is_err());
    }

    #[test]
    fn cutoff_satisfies_tail_bound() {
        for r in [0.1, 0.5, 0.75, 0.9, 0.95] {
            for kappa in 0..4 {
                let m = IcfModel::new(kappa, r).unwrap();
                assert!(m.uses_series());
                assert!(m.l_max() >= kappa);
                assert!(tail_sum(r, m.l_max()) < DEFAULT_TOL);
                if m.l_max() > kappa {
                    assert!(tail_sum(r, m.l_max() - 1) >= DEFAULT_TOL);
                }
            }
        }
    }

    #[test]
    fn near_unit_decay_is_capped_and_uses_closed_form() {
        let m = IcfModel::new(2, 0.9995).unwrap();
        assert_eq!(m.r(), R_MAX);
        assert!(!m.uses_series());
        let expect = icf_truncated_via_subtraction(R_MAX, 2, 0.7).unwrap();
        assert_abs_diff_eq!(m.eval(0.7), expect, epsilon = 1e-12);
    }

    #[test]
    fn series_agrees_with_closed_form_minus_head() {
        for r in [0.1, 0.5, 0.75, 0.9] {
            for kappa in 0..=4 {
                let m = IcfModel::new(kappa, r).unwrap();
                for i in 0..50 {
                    let h = PI * i as f64 / 49.0;
                    let a = icf_eval(&m, h).unwrap();
                    let b = icf_truncated_via_subtraction(r, kappa, h).unwrap();
                    assert!((a - b).abs() < 2.0 * m.tol(), "r={r} kappa={kappa} h={h}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn zero_lag_dominates() {
        for r in [0.1, 0.5, 0.75, 0.9] {
            for kappa in 0..=4 {
                let m = IcfModel::new(kappa, r).unwrap();
                let at_zero = m.eval(0.0);
                for i in 1..200 {
                    assert!(m.eval(PI * i as f64 / 199.0).abs() <= at_zero + 1e-12);
                }
            }
        }
    }

    #[test]
    fn successive_truncations_differ_by_one_term() {
        for r in [0.1f64, 0.5, 0.75, 0.9] {
            for kappa in 0..6 {
                let a = IcfModel::new(kappa, r).unwrap().eval(0.0);
                let b = IcfModel::new(kappa + 1, r).unwrap().eval(0.0);
                let expect = (2 * kappa + 1) as f64 / (4.0 * PI) * r.powi(kappa as i32);
                assert!((a - b - expect).abs() < DEFAULT_TOL);
                assert_abs_diff_eq!(icf_term(r, kappa, 0.0), expect, epsilon = 1e-15);
            }
        }
    }
}
