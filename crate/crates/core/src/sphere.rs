//! Geometry on the unit sphere, Legendre functions and the real spherical
//! harmonic basis.
//!
//! Points are `(psi, zeta)` with `psi` the longitude in `[0, 2pi)` and `zeta`
//! the colatitude in `[0, pi]` measured from the north pole. Associated
//! Legendre functions carry the Condon-Shortley phase `(-1)^m`. Harmonics of
//! degree below `j` are enumerated with `l` ascending and, within a degree,
//! `m` running from `-l` to `l`, so `Y_l^m` sits in column `l^2 + l + m`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{cst, from_usize, to_f64, Real};

/// Slack allowed on `|t| <= 1` before a Legendre argument is rejected.
const DOMAIN_SLACK: f64 = 1e-12;

/// A location on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePoint<T> {
    psi: T,
    zeta: T,
}

impl<T: Real> SpherePoint<T> {
    /// Builds a point, reducing `psi` modulo `2pi` and rejecting a colatitude
    /// outside `[0, pi]`.
    pub fn new(psi: T, zeta: T) -> Result<Self> {
        if !psi.is_finite() || !zeta.is_finite() {
            return Err(Error::NonFinite);
        }
        if zeta < T::zero() || zeta > T::pi() {
            return Err(Error::Colatitude(to_f64(zeta)));
        }
        let two_pi = T::two_pi();
        let mut psi = psi - two_pi * (psi / two_pi).floor();
        if psi >= two_pi || psi < T::zero() {
            psi = T::zero();
        }
        Ok(Self { psi, zeta })
    }

    /// Builds a point from longitude and latitude in degrees.
    pub fn from_degrees(lon_deg: T, lat_deg: T) -> Result<Self> {
        let to_rad = T::pi() / cst(180.0);
        Self::new(lon_deg * to_rad, T::frac_pi_2() - lat_deg * to_rad)
    }

    pub fn psi(&self) -> T {
        self.psi
    }

    pub fn zeta(&self) -> T {
        self.zeta
    }

    /// Cartesian coordinates on the unit sphere.
    pub fn unit_vector(&self) -> [T; 3] {
        let (sz, cz) = self.zeta.sin_cos();
        let (sp, cp) = self.psi.sin_cos();
        [sz * cp, sz * sp, cz]
    }
}

/// Great-circle distance in `[0, pi]`.
pub fn great_circle_distance<T: Real>(x: &SpherePoint<T>, y: &SpherePoint<T>) -> T {
    unit_vector_distance(&x.unit_vector(), &y.unit_vector())
}

/// Angle between two unit vectors as `atan2(|u x v|, u . v)`, which keeps
/// full relative precision near `0` and `pi` and is exactly symmetric.
pub fn unit_vector_distance<T: Real>(u: &[T; 3], v: &[T; 3]) -> T {
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    let cross = (cx * cx + cy * cy + cz * cz).sqrt();
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    cross.atan2(dot)
}

/// Degree/order pair of a real spherical harmonic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HarmonicIndex {
    l: usize,
    m: i64,
}

impl HarmonicIndex {
    pub fn new(l: usize, m: i64) -> Result<Self> {
        if m.unsigned_abs() as usize > l {
            return Err(Error::HarmonicIndex { l, m });
        }
        Ok(Self { l, m })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> i64 {
        self.m
    }

    /// Column of this harmonic in [`design_matrix`].
    pub fn column(&self) -> usize {
        ((self.l * self.l + self.l) as i64 + self.m) as usize
    }

    /// Inverse of [`HarmonicIndex::column`].
    pub fn from_column(col: usize) -> Self {
        let l = (col as f64).sqrt().floor() as usize;
        // guard against sqrt rounding for large columns
        let l = if (l + 1) * (l + 1) <= col { l + 1 } else { l };
        let m = col as i64 - (l * l + l) as i64;
        Self { l, m }
    }
}

fn check_domain<T: Real>(t: T) -> Result<T> {
    if !t.is_finite() || t.abs() > T::one() + cst(DOMAIN_SLACK) {
        return Err(Error::Domain(to_f64(t)));
    }
    Ok(t.clamp(-T::one(), T::one()))
}

/// Legendre polynomial `P_l(t)` by the three-term recurrence.
pub fn legendre_p<T: Real>(l: usize, t: T) -> Result<T> {
    let t = check_domain(t)?;
    Ok(legendre_unchecked(l, t))
}

pub(crate) fn legendre_unchecked<T: Real>(l: usize, t: T) -> T {
    let mut prev = T::one();
    if l == 0 {
        return prev;
    }
    let mut cur = t;
    for k in 2..=l {
        let kf: T = from_usize(k);
        let next = ((kf + kf - T::one()) * t * cur - (kf - T::one()) * prev) / kf;
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[l] = P_l(t)` for `l = 0..out.len()`.
pub fn legendre_table<T: Real>(t: T, out: &mut [T]) {
    if out.is_empty() {
        return;
    }
    out[0] = T::one();
    if out.len() == 1 {
        return;
    }
    out[1] = t;
    for k in 2..out.len() {
        let kf: T = from_usize(k);
        out[k] = ((kf + kf - T::one()) * t * out[k - 1] - (kf - T::one()) * out[k - 2]) / kf;
    }
}

/// Associated Legendre function `P_l^m(t)` for `0 <= m <= l`, including the
/// Condon-Shortley phase.
pub fn assoc_legendre_p<T: Real>(l: usize, m: usize, t: T) -> Result<T> {
    if m > l {
        return Err(Error::HarmonicIndex { l, m: m as i64 });
    }
    let t = check_domain(t)?;
    let s = ((T::one() - t) * (T::one() + t)).max(T::zero()).sqrt();
    Ok(assoc_legendre_unchecked(l, m, t, s))
}

/// `P_l^m(t)` given `s = sqrt(1 - t^2)`.
fn assoc_legendre_unchecked<T: Real>(l: usize, m: usize, t: T, s: T) -> T {
    // P_m^m = (-1)^m (2m-1)!! s^m
    let mut pmm = T::one();
    for k in 1..=m {
        let odd: T = from_usize(2 * k - 1);
        pmm = -pmm * odd * s;
    }
    if l == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = t * from_usize::<T>(2 * m + 1) * pmm;
    for k in (m + 2)..=l {
        let a: T = from_usize(2 * k - 1);
        let b: T = from_usize(k + m - 1);
        let next = (a * t * cur - b * prev) / from_usize::<T>(k - m);
        prev = cur;
        cur = next;
    }
    cur
}

/// `sqrt((l-m)!/(l+m)!)`, accumulated in `f64` so `f32` does not overflow.
fn factorial_ratio_sqrt(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0f64;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    ratio.sqrt()
}

/// Normalization of the real harmonic of degree `l` and order `|m| = m`.
fn harmonic_norm<T: Real>(l: usize, m: usize) -> T {
    let base = (2 * l + 1) as f64;
    if m == 0 {
        cst((base / (4.0 * std::f64::consts::PI)).sqrt())
    } else {
        cst((base / (2.0 * std::f64::consts::PI)).sqrt() * factorial_ratio_sqrt(l, m))
    }
}

/// Real spherical harmonic `Y_l^m` at `x`: cosine branch for `m > 0`, zonal
/// for `m = 0`, sine branch for `m < 0`.
pub fn sph_harmonic<T: Real>(idx: HarmonicIndex, x: &SpherePoint<T>) -> T {
    let l = idx.l;
    let m = idx.m.unsigned_abs() as usize;
    let (s, t) = x.zeta.sin_cos();
    let p = assoc_legendre_unchecked(l, m, t, s);
    let norm: T = harmonic_norm(l, m);
    let mf: T = from_usize(m);
    match idx.m {
        0 => norm * p,
        mm if mm > 0 => norm * p * (mf * x.psi).cos(),
        _ => norm * p * (mf * x.psi).sin(),
    }
}

/// All harmonics of degree `< j` at `x`, in column order, written to `out`
/// (which must hold `j^2` values).
pub fn harmonic_row<T: Real>(x: &SpherePoint<T>, j: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), j * j);
    if j == 0 {
        return;
    }
    let (s, t) = x.zeta.sin_cos();
    for m in 0..j {
        let mf: T = from_usize(m);
        let (sin_m, cos_m) = (mf * x.psi).sin_cos();
        // walk l upward for fixed m with the same recurrence as assoc_legendre_unchecked
        let mut pmm = T::one();
        for k in 1..=m {
            pmm = -pmm * from_usize::<T>(2 * k - 1) * s;
        }
        let mut prev = T::zero();
        let mut cur = pmm;
        for l in m..j {
            if l == m + 1 {
                prev = cur;
                cur = t * from_usize::<T>(2 * m + 1) * pmm;
            } else if l > m + 1 {
                let next = (from_usize::<T>(2 * l - 1) * t * cur - from_usize::<T>(l + m - 1) * prev)
                    / from_usize::<T>(l - m);
                prev = cur;
                cur = next;
            }
            let norm: T = harmonic_norm(l, m);
            let base = l * l + l;
            if m == 0 {
                out[base] = norm * cur;
            } else {
                out[base + m] = norm * cur * cos_m;
                out[base - m] = norm * cur * sin_m;
            }
        }
    }
}

/// The `n x j^2` matrix of harmonics of degree `< j` evaluated at `points`.
pub fn design_matrix<T: Real>(points: &[SpherePoint<T>], j: usize) -> DMatrix<T> {
    let cols = j * j;
    let mut mat = DMatrix::zeros(points.len(), cols);
    let mut row = vec![T::zero(); cols];
    for (i, p) in points.iter().enumerate() {
        harmonic_row(p, j, &mut row);
        for (c, v) in row.iter().enumerate() {
            mat[(i, c)] = *v;
        }
    }
    mat
}
