//! Weighted least-squares estimation of the decay parameter `r` of the
//! intrinsic covariance, minimizing
//!
//! ```text
//! sum_i |N_{h_i}| ( G(kappa, h_i) / phi_kappa(h_i; r) - 1 )^2
//! ```
//!
//! over `r` in `[0, 0.999]`, zero-lag bin included. By default only the
//! leading positive lobe of `G(kappa, .)` enters the fit.

use crate::empirical::LagProfile;
use crate::error::{Error, Result};
use crate::icf::{IcfModel, R_MAX};
use crate::scalar::{cst, from_usize, Real};

/// Bins where `|phi_kappa(h_i; r)|` falls below this are left out at that `r`.
pub const GUARD: f64 = 1e-8;
/// Coarse grid size of the search.
pub const GRID_POINTS: usize = 200;
/// Final bracket width of the golden-section refinement.
pub const REFINE_WIDTH: f64 = 1e-6;

/// Which bins of the profile enter the fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BinSelection {
    /// Zero lag up to, not including, the first bin where `G(kappa, h)` is not
    /// positive. Falls back to [`BinSelection::All`] when that leaves fewer than
    /// two bins.
    #[default]
    LeadingLobe,
    /// Every bin that has an estimate.
    All,
}

impl BinSelection {
    /// Number of leading bins kept.
    pub fn extent<T: Real>(self, profile: &LagProfile<T>) -> usize {
        let all = profile.g.len();
        match self {
            BinSelection::All => all,
            BinSelection::LeadingLobe => {
                let end = profile.g.iter().skip(1).position(|g| !matches!(g, Some(v) if *v > T::zero())).map_or(all, |p| p + 1);
                if end < 2 {
                    log::warn!("leading lobe of the profile holds {end} bin(s); fitting on all bins");
                    all
                } else {
                    end
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WlsFit<T> {
    pub r_hat: T,
    pub objective_value: T,
    /// Bin indices (0 = zero lag) that entered the objective at `r_hat`.
    pub bins_used: Vec<usize>,
    pub kappa: usize,
    /// More than one grid point attained the minimum.
    pub flat: bool,
}

/// Objective value and the bins that entered it.
fn objective_parts<T: Real>(profile: &LagProfile<T>, r: T) -> Result<(T, Vec<usize>)> {
    let icf = IcfModel::new(profile.kappa, r)?;
    let guard: T = cst(GUARD);
    let mut total = T::zero();
    let mut used = Vec::new();
    for (i, ((h, count), g)) in profile.lags.iter().zip(&profile.counts).zip(&profile.g).enumerate() {
        let Some(g) = *g else { continue };
        if *count == 0 {
            continue;
        }
        let phi = icf.eval(*h);
        if phi.abs() < guard {
            continue;
        }
        let dev = g / phi - T::one();
        total += from_usize::<T>(*count) * dev * dev;
        used.push(i);
    }
    if used.is_empty() {
        return Err(Error::AllBinsGuarded);
    }
    Ok((total, used))
}

fn check_profile<T: Real>(profile: &LagProfile<T>) -> Result<()> {
    if profile.lags.len() != profile.counts.len() || profile.lags.len() != profile.g.len() {
        return Err(Error::LengthMismatch { left: profile.lags.len(), right: profile.g.len() });
    }
    Ok(())
}

/// WLS objective at decay parameter `r`.
pub fn wls_objective<T: Real>(profile: &LagProfile<T>, r: T) -> Result<T> {
    check_profile(profile)?;
    objective_parts(profile, r).map(|(v, _)| v)
}

fn objective_or_inf<T: Real>(profile: &LagProfile<T>, r: T) -> T {
    match objective_parts(profile, r) {
        Ok((v, _)) if v.is_finite() => v,
        _ => T::max_value().unwrap_or_else(|| cst(f64::MAX)),
    }
}

/// [`fit_r_with`] on the leading lobe.
pub fn fit_r<T: Real>(profile: &LagProfile<T>) -> Result<WlsFit<T>> {
    fit_r_with(profile, BinSelection::default())
}

/// Minimizes the objective over the selected bins on a 200-point grid over
/// `[0, 0.999]` and refines the best cell by golden-section search.
pub fn fit_r_with<T: Real>(profile: &LagProfile<T>, selection: BinSelection) -> Result<WlsFit<T>> {
    check_profile(profile)?;
    let k = selection.extent(profile);
    let restricted;
    let profile = if k < profile.g.len() {
        restricted = LagProfile {
            kappa: profile.kappa,
            lags: profile.lags[..k].to_vec(),
            counts: profile.counts[..k].to_vec(),
            g: profile.g[..k].to_vec(),
        };
        &restricted
    } else {
        profile
    };
    let upper: T = cst(R_MAX);
    let step = upper / from_usize(GRID_POINTS - 1);
    let inf = T::max_value().unwrap_or_else(|| cst(f64::MAX));
    let grid: Vec<(T, T)> = (0..GRID_POINTS)
        .map(|k| {
            let r = if k == GRID_POINTS - 1 { upper } else { from_usize::<T>(k) * step };
            (r, objective_or_inf(profile, r))
        })
        .collect();
    let (best, &(r_best, f_best)) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("grid is non-empty");
    if f_best >= inf {
        return Err(Error::AllBinsGuarded);
    }
    let ties = grid.iter().filter(|(_, f)| (*f - f_best).abs() <= cst(1e-12)).count();
    let flat = ties > 1;
    if flat {
        log::warn!("WLS objective is flat: {ties} grid points share the minimum");
    }

    let lo = grid[best.saturating_sub(1)].0;
    let hi = grid[(best + 1).min(GRID_POINTS - 1)].0;
    let (r_ref, f_ref) = golden_section(|r| objective_or_inf(profile, r), lo, hi, cst(REFINE_WIDTH));
    let r_hat = if f_ref <= f_best { r_ref } else { r_best };
    let (objective_value, bins_used) = objective_parts(profile, r_hat)?;
    Ok(WlsFit { r_hat, objective_value, bins_used, kappa: profile.kappa, flat })
}

/// Golden-section minimization on `[lo, hi]` until the bracket is narrower
/// than `width`; returns the best point seen.
fn golden_section<T: Real, F: Fn(T) -> T>(f: F, mut lo: T, mut hi: T, width: T) -> (T, T) {
    let inv_phi: T = cst((5f64.sqrt() - 1.0) / 2.0);
    let mut c = hi - (hi - lo) * inv_phi;
    let mut d = lo + (hi - lo) * inv_phi;
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > width {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - (hi - lo) * inv_phi;
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + (hi - lo) * inv_phi;
            fd = f(d);
        }
    }
    let mid = (lo + hi) * cst(0.5);
    let fm = f(mid);
    [(c, fc), (d, fd), (mid, fm)]
        .into_iter()
        .fold((mid, fm), |best, cand| if cand.1 < best.1 { cand } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::LagGrid;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(kappa: usize, r: f64, noise: f64, seed: u64) -> LagProfile<f64> {
        let lags = LagGrid::<f64>::uniform(30).unwrap().lags();
        let icf = IcfModel::new(kappa, r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = lags
            .iter()
            .map(|h| Some(icf.eval(*h) * (1.0 + noise * (2.0 * rng.random::<f64>() - 1.0))))
            .collect();
        let counts = (0..lags.len()).map(|i| if i == 0 { 1350 } else { 20_000 + 500 * i }).collect();
        LagProfile { kappa, lags, counts, g }
    }

    #[test]
    fn perfect_fit_has_zero_objective() {
        let p = synthetic(2, 0.6, 0.0, 0);
        assert!(wls_objective(&p, 0.6).unwrap().abs() < 1e-18);
        assert!(wls_objective(&p, 0.5).unwrap() > 0.0);
    }

    #[test]
    fn objective_is_linear_in_counts() {
        let p = synthetic(1, 0.7, 0.05, 1);
        let mut doubled = p.clone();
        doubled.counts.iter_mut().for_each(|c| *c *= 2);
        for r in [0.3, 0.7, 0.9] {
            assert_abs_diff_eq!(
                wls_objective(&doubled, r).unwrap(),
                2.0 * wls_objective(&p, r).unwrap(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn recovers_generating_decay_without_noise() {
        for kappa in 0..4 {
            let lobe = fit_r(&synthetic(kappa, 0.6, 0.0, 0)).unwrap();
            assert!((lobe.r_hat - 0.6).abs() < 1e-4, "kappa={kappa}: {}", lobe.r_hat);
            let fit = fit_r_with(&synthetic(kappa, 0.6, 0.0, 0), BinSelection::All).unwrap();
            assert!((fit.r_hat - 0.6).abs() < 1e-4, "kappa={kappa}: {}", fit.r_hat);
            assert_eq!(fit.kappa, kappa);
            assert!(!fit.flat);
            assert_abs_diff_eq!(fit.objective_value, wls_objective(&synthetic(kappa, 0.6, 0.0, 0), fit.r_hat).unwrap());
        }
    }

    #[test]
    fn guard_drops_vanishing_bins() {
        // kappa >= 1 with r = 0 makes every phi vanish
        let p = synthetic(2, 0.5, 0.0, 0);
        assert!(matches!(wls_objective(&p, 0.0), Err(Error::AllBinsGuarded)));
        let fit = fit_r_with(&p, BinSelection::All).unwrap();
        assert!(fit.bins_used.contains(&0));
        let mut empty = p.clone();
        empty.g.iter_mut().for_each(|g| *g = None);
        assert!(matches!(fit_r(&empty), Err(Error::AllBinsGuarded)));
    }

    #[test]
    fn flat_objective_is_flagged() {
        let mut p = synthetic(0, 0.5, 0.0, 0);
        // a single zero estimate contributes |N| (0 / phi - 1)^2 = |N| at every r
        p.g.iter_mut().for_each(|g| *g = None);
        p.g[0] = Some(0.0);
        let fit = fit_r(&p).unwrap();
        assert_abs_diff_eq!(fit.objective_value, 1350.0);
        assert!(fit.flat);
    }

    /// The grid plus golden-section result matches a brute-force scan of the
    /// objective at step 1e-5.
    #[test]
    fn matches_exhaustive_scan() {
        for seed in 0..5u64 {
            let kappa = (seed % 3 + 1) as usize;
            let r0 = 0.55 + 0.07 * seed as f64;
            let p = synthetic(kappa, r0, 0.1, seed);
            let fit = fit_r_with(&p, BinSelection::All).unwrap();
            let mut best = (0.0, f64::INFINITY);
            let steps = (R_MAX / 1e-5).round() as usize;
            for k in 0..=steps {
                let r = k as f64 * 1e-5;
                if let Ok(v) = wls_objective(&p, r) {
                    if v < best.1 {
                        best = (r, v);
                    }
                }
            }
            assert!((fit.r_hat - best.0).abs() < 1e-4, "seed {seed}: {} vs scan {}", fit.r_hat, best.0);
        }
    }

    #[test]
    fn leading_lobe_stops_before_first_non_positive_bin() {
        let mut p = synthetic(0, 0.5, 0.0, 0);
        assert_eq!(BinSelection::LeadingLobe.extent(&p), p.g.len());
        p.g[5] = Some(-0.1);
        assert_eq!(BinSelection::LeadingLobe.extent(&p), 5);
        p.g[3] = None;
        assert_eq!(BinSelection::LeadingLobe.extent(&p), 3);
        assert_eq!(BinSelection::All.extent(&p), p.g.len());
        p.g[1] = Some(0.0);
        assert_eq!(BinSelection::LeadingLobe.extent(&p), p.g.len());

        let p = synthetic(2, 0.6, 0.0, 0);
        let fit = fit_r(&p).unwrap();
        let end = BinSelection::LeadingLobe.extent(&p);
        assert!(end < p.g.len());
        assert_eq!(fit.bins_used, (0..end).collect::<Vec<_>>());
        assert!((fit.r_hat - 0.6).abs() < 1e-4);
    }

    /// An estimate a few percent of the zero-lag value below a near-zero model
    /// value drags the all-bins fit away from the generating decay.
    #[test]
    fn lobe_fit_is_robust_to_a_noisy_crossing() {
        let mut p = synthetic(2, 0.75, 0.0, 0);
        let icf = IcfModel::new(2, 0.75).unwrap();
        let crossing = (1..p.lags.len()).min_by(|&a, &b| icf.eval(p.lags[a]).abs().total_cmp(&icf.eval(p.lags[b]).abs())).unwrap();
        p.g[crossing] = Some(icf.eval(p.lags[crossing]) - 0.05);
        assert!(p.g[crossing].unwrap() < 0.0);
        let lobe = fit_r(&p).unwrap();
        assert!((lobe.r_hat - 0.75).abs() < 1e-4, "{}", lobe.r_hat);
        let all = fit_r_with(&p, BinSelection::All).unwrap();
        assert!((all.r_hat - 0.75).abs() > 0.05, "{}", all.r_hat);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x: f64| (x - 0.3141).powi(2), 0.0, 1.0, 1e-8);
        assert_abs_diff_eq!(x, 0.3141, epsilon = 1e-7);
        assert!(fx < 1e-13);
    }
}
