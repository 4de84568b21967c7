//! Moment estimation of truncated-process covariances and the criterion used
//! to pick the degree of non-homogeneity.
//!
//! For each truncation degree `j` the observations are regressed on the
//! harmonics of degree `< j`; the residuals give the binned moment estimator
//!
//! ```text
//! G(j, h_i) = mean over pairs (x, y) in bin i of  res_j(x) res_j(y)
//! ```
//!
//! with bin 0 holding the self-pairs. Once `j` reaches the true degree the
//! difference `G(j, .) - G(j + 1, .)` is proportional to `P_j(cos h)`, so
//!
//! ```text
//! M(j) = sum_{i >= 1} ( G(j,h_i) - G(j+1,h_i) - {G(j,0) - G(j+1,0)} P_j(cos h_i) )^2
//! ```
//!
//! becomes and stays small.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::scalar::{cst, from_usize, to_f64, Real};
use crate::sphere::{design_matrix, legendre_unchecked, unit_vector_distance, SpherePoint};

/// Default number of equal-width lag bins over `(0, pi]`.
pub const DEFAULT_BINS: usize = 30;
/// Default largest truncation degree examined by the criterion.
pub const DEFAULT_JMAX: usize = 7;
/// Default ratio for [`select_kappa`].
pub const DEFAULT_THRESHOLD: f64 = 10.0;

/// Observed field values `w_i = Z(x_i) + e_i` with measurement-error variance
/// `sigma2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    points: Vec<SpherePoint<T>>,
    values: Vec<T>,
    sigma2: T,
}

impl<T: Real> Dataset<T> {
    pub fn new(points: Vec<SpherePoint<T>>, values: Vec<T>, sigma2: T) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::LengthMismatch { left: points.len(), right: values.len() });
        }
        if points.is_empty() {
            return Err(Error::Invalid("a dataset needs at least one observation".into()));
        }
        if !(sigma2 >= T::zero()) || !sigma2.is_finite() {
            return Err(Error::Invalid(format!("sigma2 must be non-negative, got {}", to_f64(sigma2))));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("observation {i} is not finite")));
        }
        Ok(Self { points, values, sigma2 })
    }

    pub fn points(&self) -> &[SpherePoint<T>] {
        &self.points
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_sigma2(mut self, sigma2: T) -> Result<Self> {
        if !(sigma2 >= T::zero()) {
            return Err(Error::Invalid(format!("sigma2 must be non-negative, got {}", to_f64(sigma2))));
        }
        self.sigma2 = sigma2;
        Ok(self)
    }

    /// Observations at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let values = indices.iter().map(|&i| self.values[i]).collect();
        Self::new(points, values, self.sigma2)
    }
}

/// Lag bins `[e_0, e_1), [e_1, e_2), ..., [e_{m-1}, e_m]` plus the implicit
/// zero-lag bin of self-pairs. Each bin is represented by its midpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct LagGrid<T> {
    edges: Vec<T>,
}

impl<T: Real> LagGrid<T> {
    /// `m` equal-width bins covering `(0, pi]`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Invalid("at least one lag bin is required".into()));
        }
        let width = T::pi() / from_usize(m);
        let mut edges: Vec<T> = (0..=m).map(|k| from_usize::<T>(k) * width).collect();
        edges[m] = T::pi();
        Ok(Self { edges })
    }

    pub fn from_edges(edges: Vec<T>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Invalid("a lag grid needs at least two edges".into()));
        }
        if edges[0] < T::zero() || edges[edges.len() - 1] > T::pi() + cst(1e-12) {
            return Err(Error::Invalid("lag edges must lie in [0, pi]".into()));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invalid("lag edges must be strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    /// Number of positive-lag bins `m`.
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// `h_0 = 0` followed by the `m` bin midpoints.
    pub fn lags(&self) -> Vec<T> {
        let half: T = cst(0.5);
        std::iter::once(T::zero())
            .chain(self.edges.windows(2).map(|w| (w[0] + w[1]) * half))
            .collect()
    }

    /// Positive-lag bin (1-based) holding distance `d`, if any.
    pub fn locate(&self, d: T) -> Option<usize> {
        let m = self.bins();
        if d < self.edges[0] || d > self.edges[m] {
            return None;
        }
        let k = self.edges.partition_point(|e| *e <= d);
        Some(k.clamp(1, m))
    }
}

/// Unordered point pairs grouped by lag bin. Bin 0 holds the `n` self-pairs
/// implicitly.
#[derive(Clone, Debug)]
pub struct BinnedPairs {
    n: usize,
    pairs: Vec<Vec<(u32, u32)>>,
}

impl BinnedPairs {
    pub fn n_points(&self) -> usize {
        self.n
    }

    /// `|N_{h_i}|` for `i = 0..=m`.
    pub fn counts(&self) -> Vec<usize> {
        std::iter::once(self.n).chain(self.pairs.iter().map(Vec::len)).collect()
    }

    /// Pairs in positive-lag bin `i` (1-based).
    pub fn pairs(&self, i: usize) -> &[(u32, u32)] {
        &self.pairs[i - 1]
    }

    pub fn bins(&self) -> usize {
        self.pairs.len()
    }
}

/// Assigns every unordered pair to the bin holding its great-circle distance.
/// Pairs outside the grid are discarded; an empty positive-lag bin is an error.
pub fn bin_pairs<T: Real>(points: &[SpherePoint<T>], grid: &LagGrid<T>) -> Result<BinnedPairs> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientData { n, needed: 1 });
    }
    if n > u32::MAX as usize {
        return Err(Error::Invalid("too many points to bin".into()));
    }
    let units: Vec<[T; 3]> = points.iter().map(SpherePoint::unit_vector).collect();
    let mut pairs = vec![Vec::new(); grid.bins()];
    for i in 0..n {
        for k in (i + 1)..n {
            let d = unit_vector_distance(&units[i], &units[k]);
            if let Some(bin) = grid.locate(d) {
                pairs[bin - 1].push((i as u32, k as u32));
            }
        }
    }
    if let Some(empty) = pairs.iter().position(Vec::is_empty) {
        return Err(Error::EmptyBin {
            bin: empty + 1,
            lo: to_f64(grid.edges[empty]),
            hi: to_f64(grid.edges[empty + 1]),
        });
    }
    Ok(BinnedPairs { n, pairs })
}

/// Residuals of the observations after least-squares regression on the
/// harmonics of degree `< j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualField<T> {
    j: usize,
    residuals: Vec<T>,
    coefficients: Vec<T>,
}

impl<T: Real> ResidualField<T> {
    pub fn degree(&self) -> usize {
        self.j
    }

    pub fn residuals(&self) -> &[T] {
        &self.residuals
    }

    /// Fitted harmonic coefficients in design-matrix column order.
    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }
}

/// Least-squares residuals of `values` on the design columns, rejecting a
/// numerically rank-deficient design.
fn regress<T: Real>(design: DMatrix<T>, values: &[T], j: usize) -> Result<ResidualField<T>> {
    let (n, cols) = design.shape();
    let y = DVector::from_column_slice(values);
    if cols == 0 {
        return Ok(ResidualField { j, residuals: values.to_vec(), coefficients: Vec::new() });
    }
    let svd = SVD::new(design.clone(), true, true);
    let smax = svd.singular_values.max();
    let eps = smax * from_usize::<T>(n.max(cols)) * T::default_epsilon();
    let rank = svd.rank(eps);
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    let beta = svd.solve(&y, eps).map_err(|e| Error::Invalid(e.to_string()))?;
    let residuals = &y - &design * &beta;
    Ok(ResidualField { j, residuals: residuals.as_slice().to_vec(), coefficients: beta.as_slice().to_vec() })
}

/// Residual process of `data` regressed on the harmonics of degree `< j`.
pub fn residual_field<T: Real>(data: &Dataset<T>, j: usize) -> Result<ResidualField<T>> {
    let n = data.len();
    if n <= j * j {
        return Err(Error::InsufficientData { n, needed: j * j });
    }
    regress(design_matrix(data.points(), j), data.values(), j)
}

/// Binned moment estimator `G(j, h_i)` for `i = 0..=m`; `None` marks a bin
/// without pairs.
pub fn g_estimator<T: Real>(res: &ResidualField<T>, bins: &BinnedPairs) -> Result<Vec<Option<T>>> {
    let z = res.residuals();
    if z.len() != bins.n_points() {
        return Err(Error::LengthMismatch { left: z.len(), right: bins.n_points() });
    }
    let mut out = Vec::with_capacity(bins.bins() + 1);
    let self_sum = z.iter().fold(T::zero(), |acc, v| acc + *v * *v);
    out.push(Some(self_sum / from_usize(z.len())));
    for i in 1..=bins.bins() {
        let pairs = bins.pairs(i);
        if pairs.is_empty() {
            out.push(None);
            continue;
        }
        let sum = pairs
            .iter()
            .fold(T::zero(), |acc, &(a, b)| acc + z[a as usize] * z[b as usize]);
        out.push(Some(sum / from_usize(pairs.len())));
    }
    Ok(out)
}

/// Binned moment estimates at one truncation degree, the input of the
/// covariance fit.
#[derive(Clone, Debug, PartialEq)]
pub struct LagProfile<T> {
    pub kappa: usize,
    /// `h_0 = 0, h_1, ..., h_m`.
    pub lags: Vec<T>,
    /// `|N_{h_i}|`.
    pub counts: Vec<usize>,
    /// `G(kappa, h_i)`.
    pub g: Vec<Option<T>>,
}

/// `G(kappa, .)` computed directly from data.
pub fn lag_profile<T: Real>(
    data: &Dataset<T>,
    grid: &LagGrid<T>,
    bins: &BinnedPairs,
    kappa: usize,
) -> Result<LagProfile<T>> {
    let res = residual_field(data, kappa)?;
    Ok(LagProfile { kappa, lags: grid.lags(), counts: bins.counts(), g: g_estimator(&res, bins)? })
}

/// `M(j)` for `j = 0..j_max` together with the `G(j, h_i)` values behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct CriterionTable<T> {
    lags: Vec<T>,
    counts: Vec<usize>,
    g: Vec<Vec<Option<T>>>,
    m: Vec<T>,
}

impl<T: Real> CriterionTable<T> {
    /// Builds the table from `G` rows for `j = 0..=j_max`; `lags` and
    /// `counts` include the zero-lag entry.
    pub fn from_parts(lags: Vec<T>, counts: Vec<usize>, g: Vec<Vec<Option<T>>>) -> Result<Self> {
        if g.len() < 2 {
            return Err(Error::Invalid("the criterion needs G rows for at least two degrees".into()));
        }
        if lags.len() != counts.len() {
            return Err(Error::LengthMismatch { left: lags.len(), right: counts.len() });
        }
        if let Some(row) = g.iter().find(|row| row.len() != lags.len()) {
            return Err(Error::LengthMismatch { left: row.len(), right: lags.len() });
        }
        if g.iter().any(|row| row[0].is_none()) {
            return Err(Error::Invalid("zero-lag estimate missing".into()));
        }
        let m = (0..g.len() - 1).map(|j| criterion_value(&lags, &g[j], &g[j + 1], j)).collect();
        Ok(Self { lags, counts, g, m })
    }

    /// `h_0 = 0, h_1, ..., h_m`.
    pub fn lags(&self) -> &[T] {
        &self.lags
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `G(j, h_i)` for `j = 0..=j_max`.
    pub fn g(&self, j: usize) -> Option<&[Option<T>]> {
        self.g.get(j).map(Vec::as_slice)
    }

    /// `M(j)` for `j = 0..j_max`.
    pub fn m_values(&self) -> &[T] {
        &self.m
    }

    /// `(j, M(j))` rows.
    pub fn rows(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.m.iter().copied().enumerate()
    }

    pub fn j_max(&self) -> usize {
        self.m.len()
    }

    /// `G(kappa, .)` as the input of the covariance fit.
    pub fn profile(&self, kappa: usize) -> Result<LagProfile<T>> {
        let g = self.g.get(kappa).ok_or_else(|| {
            Error::Invalid(format!("criterion table holds degrees up to {}, not {kappa}", self.g.len() - 1))
        })?;
        Ok(LagProfile { kappa, lags: self.lags.clone(), counts: self.counts.clone(), g: g.clone() })
    }
}

fn criterion_value<T: Real>(lags: &[T], gj: &[Option<T>], gnext: &[Option<T>], j: usize) -> T {
    let zero_drop = gj[0].unwrap_or_else(T::zero) - gnext[0].unwrap_or_else(T::zero);
    lags.iter()
        .zip(gj.iter().zip(gnext))
        .skip(1)
        .filter_map(|(h, (a, b))| Some((*h, (*a)?, (*b)?)))
        .fold(T::zero(), |acc, (h, a, b)| {
            let dev = a - b - zero_drop * legendre_unchecked(j, h.cos());
            acc + dev * dev
        })
}

/// Computes `M(j)` for `j = 0..j_max` from residual fields of degree
/// `0..=j_max`.
pub fn criterion<T: Real>(data: &Dataset<T>, grid: &LagGrid<T>, j_max: usize) -> Result<CriterionTable<T>> {
    let bins = bin_pairs(data.points(), grid)?;
    criterion_with_bins(data, grid, &bins, j_max)
}

/// [`criterion`] reusing an existing pair binning of `data`.
pub fn criterion_with_bins<T: Real>(
    data: &Dataset<T>,
    grid: &LagGrid<T>,
    bins: &BinnedPairs,
    j_max: usize,
) -> Result<CriterionTable<T>> {
    if j_max == 0 {
        return Err(Error::Invalid("the largest degree must be at least 1".into()));
    }
    let n = data.len();
    if n <= j_max * j_max {
        return Err(Error::InsufficientData { n, needed: j_max * j_max });
    }
    if bins.n_points() != n || bins.bins() != grid.bins() {
        return Err(Error::Invalid("pair binning does not match the dataset and grid".into()));
    }
    // The degree < j columns are the leading j^2 columns of the full design.
    let full = design_matrix(data.points(), j_max);
    let mut g = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let design = full.columns(0, j * j).into_owned();
        let res = regress(design, data.values(), j)?;
        g.push(g_estimator(&res, bins)?);
    }
    CriterionTable::from_parts(grid.lags(), bins.counts(), g)
}

/// Outcome of the plateau rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KappaEstimate {
    pub kappa: usize,
    /// Set when the whole table sits on the plateau, so a homogeneous field
    /// cannot be told apart from a flat criterion.
    pub ambiguous: bool,
}

/// How [`select_kappa_with`] reads the criterion table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SelectionRule {
    /// `kappa` is the degree right after the largest one-step drop
    /// `M(j - 1) / M(j)`, provided that drop reaches the ratio threshold.
    #[default]
    LargestDrop,
    /// Smallest `j` such that every `M(j')` with `j' >= j` is within the ratio
    /// threshold times the table minimum.
    Plateau,
}

/// [`select_kappa_with`] under the default rule.
pub fn select_kappa<T: Real>(table: &CriterionTable<T>, ratio_threshold: T) -> Result<KappaEstimate> {
    select_kappa_with(table, ratio_threshold, SelectionRule::default())
}

pub fn select_kappa_with<T: Real>(
    table: &CriterionTable<T>,
    ratio_threshold: T,
    rule: SelectionRule,
) -> Result<KappaEstimate> {
    let m = table.m_values();
    if m.len() < 2 {
        return Err(Error::Invalid("kappa selection needs at least two criterion rows".into()));
    }
    if !(ratio_threshold > T::one()) {
        return Err(Error::Invalid(format!(
            "ratio threshold must exceed 1, got {}",
            to_f64(ratio_threshold)
        )));
    }
    let kappa = match rule {
        SelectionRule::Plateau => {
            let floor = m.iter().copied().fold(m[0], |a, b| a.min(b)) * ratio_threshold;
            m.iter().rposition(|v| !(*v <= floor)).map_or(0, |last| last + 1)
        }
        SelectionRule::LargestDrop => {
            let mut best = (0, T::one());
            for j in 1..m.len() {
                let (hi, lo) = (m[j - 1], m[j]);
                let ratio = if lo > T::zero() {
                    hi / lo
                } else if hi > T::zero() {
                    T::max_value().unwrap_or_else(|| cst(f64::MAX))
                } else {
                    T::one()
                };
                if ratio > best.1 {
                    best = (j, ratio);
                }
            }
            if best.1 >= ratio_threshold {
                best.0
            } else {
                0
            }
        }
    };
    let ambiguous = kappa == 0;
    if ambiguous {
        log::warn!("criterion shows no decisive drop; the field looks homogeneous (kappa = 0)");
    }
    Ok(KappaEstimate { kappa, ambiguous })
}

/// `4 pi / (2j + 1) (G(j, 0) - G(j + 1, 0))`, the estimate of `a_j`.
pub fn a_hat<T: Real>(table: &CriterionTable<T>, j: usize) -> Result<T> {
    let zero = |k: usize| -> Result<T> {
        table
            .g(k)
            .and_then(|row| row[0])
            .ok_or_else(|| Error::Invalid(format!("criterion table has no degree {k}")))
    };
    let drop = zero(j)? - zero(j + 1)?;
    let value = cst::<T>(4.0) * T::pi() / from_usize(2 * j + 1) * drop;
    if value < T::zero() {
        log::warn!("a_hat({j}) is negative; degree {j} lies below the plateau");
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{sph_harmonic, HarmonicIndex};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_points(n: usize, seed: u64) -> Vec<SpherePoint<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let psi = rng.random::<f64>() * 2.0 * PI;
                let zeta = (1.0 - 2.0 * rng.random::<f64>()).acos();
                SpherePoint::new(psi, zeta).unwrap()
            })
            .collect()
    }

    fn noise_dataset(n: usize, seed: u64) -> Dataset<f64> {
        let pts = random_points(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let vals = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        Dataset::new(pts, vals, 0.0).unwrap()
    }

    #[test]
    fn dataset_validation() {
        let p = random_points(3, 1);
        assert!(Dataset::new(p.clone(), vec![1.0, 2.0], 0.0).is_err());
        assert!(Dataset::new(vec![], vec![], 0.0).is_err());
        assert!(Dataset::new(p.clone(), vec![1.0; 3], -1.0).is_err());
        assert!(Dataset::new(p.clone(), vec![1.0, f64::NAN, 0.0], 0.0).is_err());
        let d = Dataset::new(p, vec![1.0, 2.0, 3.0], 0.5).unwrap();
        let s = d.subset(&[2, 0]).unwrap();
        assert_eq!(s.values(), &[3.0, 1.0]);
        assert_eq!(s.sigma2(), 0.5);
    }

    #[test]
    fn grid_geometry() {
        let g = LagGrid::<f64>::uniform(4).unwrap();
        assert_eq!(g.bins(), 4);
        let lags = g.lags();
        assert_eq!(lags.len(), 5);
        assert_eq!(lags[0], 0.0);
        assert_abs_diff_eq!(lags[1], PI / 8.0, epsilon = 1e-15);
        assert_eq!(g.locate(0.0), Some(1));
        assert_eq!(g.locate(PI), Some(4));
        assert_eq!(g.locate(PI / 4.0), Some(2));
        assert!(LagGrid::from_edges(vec![0.0, 0.5, 0.5]).is_err());
        assert!(LagGrid::from_edges(vec![0.0, 4.0]).is_err());
        let partial = LagGrid::from_edges(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(partial.locate(1.5), None);
    }

    #[test]
    fn antipodal_pair_lands_in_last_bin() {
        let pts = vec![SpherePoint::new(0.0, 0.0).unwrap(), SpherePoint::new(0.0, PI).unwrap()];
        let grid = LagGrid::from_edges(vec![0.0, PI]).unwrap();
        let b = bin_pairs(&pts, &grid).unwrap();
        assert_eq!(b.counts(), vec![2, 1]);
        // finer grid leaves the first bin empty
        let fine = LagGrid::<f64>::uniform(3).unwrap();
        assert!(matches!(bin_pairs(&pts, &fine), Err(Error::EmptyBin { bin: 1, .. })));
    }

    #[test]
    fn pairs_beyond_last_edge_are_discarded() {
        let pts = random_points(60, 9);
        let grid = LagGrid::from_edges(vec![0.0, 1.0, 2.0]).unwrap();
        let b = bin_pairs(&pts, &grid).unwrap();
        let total: usize = b.counts()[1..].iter().sum();
        assert!(total < 60 * 59 / 2);
        assert_eq!(b.counts()[0], 60);
    }

    #[test]
    fn every_pair_binned_once_on_full_grid() {
        let pts = random_points(1500, 4);
        let b = bin_pairs(&pts, &LagGrid::uniform(DEFAULT_BINS).unwrap()).unwrap();
        let counts = b.counts();
        assert_eq!(counts[0], 1500);
        assert!(counts[1..].iter().all(|&c| c > 0));
        assert_eq!(counts[1..].iter().sum::<usize>(), 1500 * 1499 / 2);
    }

    #[test]
    fn residual_examples() {
        let d = noise_dataset(40, 2);
        let r0 = residual_field(&d, 0).unwrap();
        assert_eq!(r0.residuals(), d.values());
        let r1 = residual_field(&d, 1).unwrap();
        let mean = d.values().iter().sum::<f64>() / 40.0;
        for (r, v) in r1.residuals().iter().zip(d.values()) {
            assert_abs_diff_eq!(*r, v - mean, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(r1.coefficients()[0], mean * (4.0 * PI).sqrt(), epsilon = 1e-12);

        let idx = HarmonicIndex::new(1, 0).unwrap();
        let vals = d.points().iter().map(|p| sph_harmonic(idx, p)).collect();
        let exact = Dataset::new(d.points().to_vec(), vals, 0.0).unwrap();
        let r2 = residual_field(&exact, 2).unwrap();
        assert!(r2.residuals().iter().all(|r| r.abs() < 1e-10));
        assert_abs_diff_eq!(r2.coefficients()[idx.column()], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn residual_errors() {
        let d = noise_dataset(9, 3);
        assert!(matches!(residual_field(&d, 3), Err(Error::InsufficientData { .. })));
        // all points on the equator: Y_1^0 vanishes identically
        let pts: Vec<_> = (0..20).map(|i| SpherePoint::new(i as f64 * 0.3, PI / 2.0).unwrap()).collect();
        let flat = Dataset::new(pts, vec![1.0; 20], 0.0).unwrap();
        assert!(matches!(residual_field(&flat, 2), Err(Error::RankDeficient { rank: 3, cols: 4 })));
    }

    #[test]
    fn residuals_are_orthogonal_to_design() {
        let d = noise_dataset(500, 5);
        let scale = d.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for j in 0..=7 {
            let res = residual_field(&d, j).unwrap();
            let x = design_matrix(d.points(), j);
            let xtr = x.transpose() * DVector::from_column_slice(res.residuals());
            let worst = xtr.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(worst < 1e-8 * scale, "j={j}: {worst}");
        }
    }

    #[test]
    fn g_estimator_examples() {
        let pts = random_points(200, 6);
        let grid = LagGrid::uniform(10).unwrap();
        let bins = bin_pairs(&pts, &grid).unwrap();
        let d = Dataset::new(pts, vec![1.5; 200], 0.0).unwrap();
        let g = g_estimator(&residual_field(&d, 0).unwrap(), &bins).unwrap();
        for v in &g {
            assert_abs_diff_eq!(v.unwrap(), 2.25, epsilon = 1e-12);
        }
        let noisy = noise_dataset(200, 6);
        let res = residual_field(&noisy, 2).unwrap();
        let g = g_estimator(&res, &bins).unwrap();
        let mean_sq = res.residuals().iter().map(|r| r * r).sum::<f64>() / 200.0;
        assert_abs_diff_eq!(g[0].unwrap(), mean_sq, epsilon = 1e-14);
        let short = residual_field(&noise_dataset(10, 1), 0).unwrap();
        assert!(g_estimator(&short, &bins).is_err());
    }

    #[test]
    fn exact_legendre_differences_give_zero_criterion() {
        let grid = LagGrid::<f64>::uniform(12).unwrap();
        let lags = grid.lags();
        let j_max = 5;
        // G(j, h) = sum_{l >= j} c_l P_l(cos h) with arbitrary positive c_l
        let coef = [3.0, 1.7, 0.9, 0.4, 0.22, 0.1, 0.05];
        let g: Vec<Vec<Option<f64>>> = (0..=j_max)
            .map(|j| {
                lags.iter()
                    .map(|h| Some((j..coef.len()).map(|l| coef[l] * legendre_unchecked(l, h.cos())).sum()))
                    .collect()
            })
            .collect();
        let counts = vec![10; lags.len()];
        let table = CriterionTable::from_parts(lags, counts, g).unwrap();
        assert_eq!(table.j_max(), j_max);
        for (_, m) in table.rows() {
            assert!(m.abs() < 1e-25);
        }
    }

    fn table_from_m(m: &[f64]) -> CriterionTable<f64> {
        CriterionTable { lags: vec![0.0], counts: vec![1], g: vec![vec![Some(0.0)]; m.len() + 1], m: m.to_vec() }
    }

    #[test]
    fn plateau_rule_examples() {
        let plateau = |t: &CriterionTable<f64>| select_kappa_with(t, 10.0, SelectionRule::Plateau).unwrap();
        let t = table_from_m(&[1e4, 1e3, 2.1, 2.0, 1.9, 2.2]);
        assert_eq!(plateau(&t), KappaEstimate { kappa: 2, ambiguous: false });
        assert_eq!(plateau(&table_from_m(&[3.0; 6])), KappaEstimate { kappa: 0, ambiguous: true });
        // a late excursion above the band pushes the estimate past it
        assert_eq!(plateau(&table_from_m(&[1e4, 2.0, 2.0, 500.0, 2.0, 2.0])).kappa, 4);
        // so does a plateau that sinks by more than the ratio
        assert_eq!(plateau(&table_from_m(&[1e4, 1e3, 8.0, 4.0, 2.0, 0.5])).kappa, 3);
    }

    #[test]
    fn largest_drop_rule_examples() {
        let t = table_from_m(&[1e4, 1e3, 2.1, 2.0, 1.9, 2.2]);
        assert_eq!(select_kappa(&t, 10.0).unwrap(), KappaEstimate { kappa: 2, ambiguous: false });
        let flat = table_from_m(&[3.0; 6]);
        assert_eq!(select_kappa(&flat, 10.0).unwrap(), KappaEstimate { kappa: 0, ambiguous: true });
        assert_eq!(select_kappa(&table_from_m(&[1e4, 1e3, 8.0, 4.0, 2.0, 0.5]), 10.0).unwrap().kappa, 2);
        // an accidentally small M(0) is irrelevant
        assert_eq!(select_kappa(&table_from_m(&[1e-4, 0.5, 5e-3, 8e-3, 3e-3, 1e-3]), 10.0).unwrap().kappa, 2);
        // drops short of the ratio do not count
        assert_eq!(select_kappa(&table_from_m(&[5.0, 1.0, 0.6, 0.2, 0.1]), 10.0).unwrap().kappa, 0);
        assert_eq!(select_kappa(&table_from_m(&[1.0, 0.0, 0.0]), 10.0).unwrap().kappa, 1);
        assert_eq!(select_kappa(&table_from_m(&[0.0, 0.0]), 10.0).unwrap().kappa, 0);
        assert!(select_kappa(&table_from_m(&[1.0]), 10.0).is_err());
        assert!(select_kappa(&t, 1.0).is_err());
    }

    #[test]
    fn a_hat_examples() {
        let mut t = table_from_m(&[1.0, 1.0, 1.0]);
        t.g[2][0] = Some(2.0);
        t.g[3][0] = Some(1.5);
        assert_abs_diff_eq!(a_hat(&t, 2).unwrap(), 4.0 * PI / 5.0 * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a_hat(&t, 2).unwrap(), 1.2566370614359172, epsilon = 1e-12);
        t.g[1][0] = Some(1.5);
        t.g[2][0] = Some(1.5);
        assert_eq!(a_hat(&t, 1).unwrap(), 0.0);
        assert!(a_hat(&t, 3).is_err());
    }

    #[test]
    fn zero_lag_estimate_does_not_increase_with_degree() {
        let d = noise_dataset(400, 8);
        let t = criterion(&d, &LagGrid::uniform(12).unwrap(), 6).unwrap();
        for j in 0..6 {
            let a = t.g(j).unwrap()[0].unwrap();
            let b = t.g(j + 1).unwrap()[0].unwrap();
            assert!(a >= 0.0 && b <= a + 1e-12);
        }
        assert!(t.m_values().iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn criterion_preconditions() {
        let d = noise_dataset(30, 1);
        let g = LagGrid::uniform(4).unwrap();
        assert!(matches!(criterion(&d, &g, 6), Err(Error::InsufficientData { .. })));
        assert!(criterion(&d, &g, 0).is_err());
    }
}
