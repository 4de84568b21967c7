//! Gaussian simulation of intrinsic random functions of order `kappa`.
//!
//! The covariance is the reproducing kernel anchored at `kappa^2` points
//! `tau_nu` with the Lagrange basis `p_nu` of the nil space (harmonics of
//! degree `< kappa`, `p_nu(tau_mu) = delta`):
//!
//! ```text
//! H(x, y) = phi(x, y)
//!         - sum_nu [ phi(x, tau_nu) p_nu(y) + phi(y, tau_nu) p_nu(x) ]
//!         + sum_nu sum_mu phi(tau_nu, tau_mu) p_nu(x) p_mu(y)
//!         + sum_nu p_nu(x) p_nu(y)
//! ```
//!
//! with `phi(x, y) = phi_kappa(d(x, y))`. This is the covariance of
//! `Z(x) - sum_nu Z(tau_nu) p_nu(x) + sum_nu xi_nu p_nu(x)` for a homogeneous
//! `Z` with covariance `phi_kappa` and independent standard normal `xi`.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::empirical::Dataset;
use crate::error::{Error, Result};
use crate::icf::IcfModel;
use crate::rng::{stream_rng, STREAM_NORMALS, STREAM_POINTS, STREAM_SPLIT, STREAM_TAU};
use crate::scalar::{cst, from_usize, to_f64, Real};
use crate::sphere::{design_matrix, great_circle_distance, harmonic_row, unit_vector_distance, SpherePoint};

/// Default cap on the condition number of the anchor interpolation matrix.
pub const DEFAULT_CONDITION_CAP: f64 = 1e10;
/// Condition cap used when anchors are drawn at random.
pub const RANDOM_TAU_CONDITION_CAP: f64 = 1e6;
/// Largest diagonal jitter, relative to the mean variance, before giving up.
pub const JITTER_CAP: f64 = 1e-6;

/// Lagrange basis `p_1..p_{kappa^2}` of the nil space at anchors `tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct NilSpaceBasis<T: Real> {
    kappa: usize,
    tau: Vec<SpherePoint<T>>,
    /// `coeff[(u, nu)]` is the weight of harmonic column `u` in `p_nu`.
    coeff: DMatrix<T>,
    condition: T,
}

impl<T: Real> NilSpaceBasis<T> {
    pub fn new(kappa: usize, tau: Vec<SpherePoint<T>>) -> Result<Self> {
        Self::with_condition_cap(kappa, tau, cst(DEFAULT_CONDITION_CAP))
    }

    /// Inverts the anchor interpolation matrix `B[(mu, u)] = Y_u(tau_mu)`,
    /// rejecting it when its condition number exceeds `cap`.
    pub fn with_condition_cap(kappa: usize, tau: Vec<SpherePoint<T>>, cap: T) -> Result<Self> {
        let k = kappa * kappa;
        if tau.len() != k {
            return Err(Error::Invalid(format!("order {kappa} needs {k} anchor points, got {}", tau.len())));
        }
        if k == 0 {
            return Ok(Self { kappa, tau, coeff: DMatrix::zeros(0, 0), condition: T::one() });
        }
        let b = design_matrix(&tau, kappa);
        let sv = b.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > T::zero() { smax / smin } else { T::max_value().unwrap_or_else(|| cst(f64::MAX)) };
        if !(condition < cap) {
            return Err(Error::SingularConfiguration(to_f64(condition)));
        }
        let coeff = b.try_inverse().ok_or(Error::SingularConfiguration(f64::INFINITY))?;
        Ok(Self { kappa, tau, coeff, condition })
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn tau(&self) -> &[SpherePoint<T>] {
        &self.tau
    }

    pub fn coefficients(&self) -> &DMatrix<T> {
        &self.coeff
    }

    pub fn condition_number(&self) -> T {
        self.condition
    }

    /// `(p_1(x), ..., p_{kappa^2}(x))`.
    pub fn eval(&self, x: &SpherePoint<T>) -> Vec<T> {
        let k = self.kappa * self.kappa;
        let mut y = vec![T::zero(); k];
        harmonic_row(x, self.kappa, &mut y);
        (0..k)
            .map(|nu| (0..k).fold(T::zero(), |acc, u| acc + y[u] * self.coeff[(u, nu)]))
            .collect()
    }
}

/// Anchor points used for orders 2 and 3 in the reference study. The pairs
/// are listed there as (colatitude, longitude).
pub fn study_tau<T: Real>(kappa: usize) -> Option<Vec<SpherePoint<T>>> {
    use std::f64::consts::PI;
    let pairs: &[(f64, f64)] = match kappa {
        2 => &[(PI / 9.0, PI / 3.0), (PI / 3.0, 5.0 * PI / 6.0), (2.0 * PI / 3.0, 6.0 * PI / 5.0), (8.0 * PI / 9.0, 5.0 * PI / 3.0)],
        3 => &[
            (PI / 12.0, PI / 6.0),
            (PI / 9.0, PI / 3.0),
            (PI / 6.0, 2.0 * PI / 3.0),
            (PI / 3.0, 5.0 * PI / 6.0),
            (PI / 2.0, PI),
            (2.0 * PI / 3.0, 6.0 * PI / 5.0),
            (5.0 * PI / 6.0, 3.0 * PI / 2.0),
            (8.0 * PI / 9.0, 5.0 * PI / 3.0),
            (11.0 * PI / 12.0, 9.0 * PI / 5.0),
        ],
        _ => return None,
    };
    Some(
        pairs
            .iter()
            .map(|&(zeta, psi)| SpherePoint::new(cst(psi), cst(zeta)).expect("study anchors are valid"))
            .collect(),
    )
}

/// The study anchors for orders 2 and 3; otherwise uniform random anchors
/// redrawn until the interpolation matrix is well conditioned.
pub fn default_tau<T: Real>(kappa: usize, seed: u64) -> Result<Vec<SpherePoint<T>>> {
    if let Some(tau) = study_tau(kappa) {
        return Ok(tau);
    }
    let k = kappa * kappa;
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut rng = stream_rng(seed, STREAM_TAU);
    for _ in 0..1000 {
        let tau = sample_uniform(k, &mut rng);
        if NilSpaceBasis::with_condition_cap(kappa, tau.clone(), cst(RANDOM_TAU_CONDITION_CAP)).is_ok() {
            return Ok(tau);
        }
    }
    Err(Error::SingularConfiguration(RANDOM_TAU_CONDITION_CAP))
}

/// Reproducing-kernel covariance `H(x, y)`.
pub fn repkernel<T: Real>(icf: &IcfModel<T>, basis: &NilSpaceBasis<T>, x: &SpherePoint<T>, y: &SpherePoint<T>) -> T {
    let phi = |a: &SpherePoint<T>, b: &SpherePoint<T>| icf.eval(great_circle_distance(a, b));
    let px = basis.eval(x);
    let py = basis.eval(y);
    let tau = basis.tau();
    let mut h = phi(x, y);
    for nu in 0..tau.len() {
        h -= phi(x, &tau[nu]) * py[nu] + phi(y, &tau[nu]) * px[nu];
        for mu in 0..tau.len() {
            h += phi(&tau[nu], &tau[mu]) * px[nu] * py[mu];
        }
        h += px[nu] * py[nu];
    }
    h
}

/// `H` evaluated at every pair of `points`, assembled in matrix form.
pub fn covariance_matrix<T: Real>(icf: &IcfModel<T>, basis: &NilSpaceBasis<T>, points: &[SpherePoint<T>]) -> DMatrix<T> {
    let n = points.len();
    let units: Vec<[T; 3]> = points.iter().map(SpherePoint::unit_vector).collect();
    let mut h = DMatrix::zeros(n, n);
    let phi0 = icf.eval(T::zero());
    for i in 0..n {
        h[(i, i)] = phi0;
        for j in (i + 1)..n {
            let v = icf.eval(unit_vector_distance(&units[i], &units[j]));
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let k = basis.tau().len();
    if k == 0 {
        return h;
    }
    let tau_units: Vec<[T; 3]> = basis.tau().iter().map(SpherePoint::unit_vector).collect();
    let p = design_matrix(points, basis.kappa()) * basis.coefficients();
    let phi_xt = DMatrix::from_fn(n, k, |i, nu| icf.eval(unit_vector_distance(&units[i], &tau_units[nu])));
    let phi_tt = DMatrix::from_fn(k, k, |nu, mu| icf.eval(unit_vector_distance(&tau_units[nu], &tau_units[mu])));
    let cross = &phi_xt * p.transpose();
    h -= &cross;
    h -= cross.transpose();
    h += &p * (phi_tt + DMatrix::identity(k, k)) * p.transpose();
    // exact symmetry after the rank-k updates
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (h[(i, j)] + h[(j, i)]) * cst(0.5);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Lower Cholesky factor of a covariance matrix, with escalating diagonal
/// jitter when rounding leaves the matrix slightly indefinite.
#[derive(Clone, Debug)]
pub struct GaussianSampler<T: Real> {
    factor: DMatrix<T>,
    jitter: T,
}

impl<T: Real> GaussianSampler<T> {
    pub fn new(cov: &DMatrix<T>) -> Result<Self> {
        let n = cov.nrows();
        if n == 0 || cov.ncols() != n {
            return Err(Error::Invalid("covariance must be a non-empty square matrix".into()));
        }
        let scale = (cov.trace() / from_usize(n)).abs().max(T::min_value().unwrap_or_else(T::zero));
        let mut jitter = T::zero();
        let mut next_rel: T = cst(1e-12);
        let cap = scale * cst(JITTER_CAP);
        loop {
            let mut m = cov.clone();
            if jitter > T::zero() {
                for i in 0..n {
                    m[(i, i)] += jitter;
                }
            }
            if let Some(ch) = Cholesky::new(m) {
                if jitter > T::zero() {
                    log::debug!("Cholesky needed diagonal jitter {:e}", to_f64(jitter));
                }
                return Ok(Self { factor: ch.unpack(), jitter });
            }
            if jitter >= cap {
                return Err(Error::Factorization(to_f64(jitter)));
            }
            jitter = (scale * next_rel).min(cap);
            next_rel *= cst(100.0);
        }
    }

    /// Diagonal jitter that was needed for the factorization.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// One draw `L z` with `z` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let n = self.dim();
        let z: Vec<T> = (0..n).map(|_| cst(rng.sample::<f64, _>(StandardNormal))).collect();
        (0..n)
            .map(|i| (0..=i).fold(T::zero(), |acc, k| acc + self.factor[(i, k)] * z[k]))
            .collect()
    }
}

fn sample_uniform<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<SpherePoint<T>> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let psi = 2.0 * std::f64::consts::PI * u;
            let zeta = (1.0 - 2.0 * v).clamp(-1.0, 1.0).acos();
            SpherePoint::new(cst(psi), cst(zeta)).expect("uniform draw is a valid point")
        })
        .collect()
}

/// `n` independent uniform locations: longitude uniform on `[0, 2pi)`, cosine
/// of colatitude uniform on `[-1, 1]`.
pub fn uniform_sphere_points<T: Real>(n: usize, seed: u64) -> Result<Vec<SpherePoint<T>>> {
    if n == 0 {
        return Err(Error::Invalid("at least one location is required".into()));
    }
    Ok(sample_uniform(n, &mut stream_rng(seed, STREAM_POINTS)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig<T> {
    pub kappa: usize,
    pub r: T,
    pub n: usize,
    pub seed: u64,
    /// Anchors; defaults to [`default_tau`].
    pub tau: Option<Vec<SpherePoint<T>>>,
    /// Coefficients of an added mean `sum_u beta_u Y_u`, in design-matrix
    /// column order (length must be a square).
    pub mean: Option<Vec<T>>,
}

impl<T: Real> SimulationConfig<T> {
    pub fn new(kappa: usize, r: T, n: usize, seed: u64) -> Self {
        Self { kappa, r, n, seed, tau: None, mean: None }
    }
}

/// A simulated field and the anchors behind its covariance.
#[derive(Clone, Debug)]
pub struct Simulation<T: Real> {
    pub data: Dataset<T>,
    pub tau: Vec<SpherePoint<T>>,
    pub jitter: T,
}

/// Simulates the field at `n` uniform locations.
pub fn simulate_field<T: Real>(config: &SimulationConfig<T>) -> Result<Simulation<T>> {
    if config.n == 0 {
        return Err(Error::Invalid("at least one location is required".into()));
    }
    let icf = IcfModel::new(config.kappa, config.r)?;
    let tau = match &config.tau {
        Some(t) => t.clone(),
        None => default_tau(config.kappa, config.seed)?,
    };
    let basis = NilSpaceBasis::new(config.kappa, tau)?;
    let points = uniform_sphere_points(config.n, config.seed)?;
    let sampler = GaussianSampler::new(&covariance_matrix(&icf, &basis, &points))?;
    let mut values = sampler.sample(&mut stream_rng(config.seed, STREAM_NORMALS));
    if let Some(beta) = &config.mean {
        let degree = (beta.len() as f64).sqrt().round() as usize;
        if degree * degree != beta.len() {
            return Err(Error::Invalid(format!("mean needs a square number of coefficients, got {}", beta.len())));
        }
        let mut row = vec![T::zero(); beta.len()];
        for (v, p) in values.iter_mut().zip(&points) {
            harmonic_row(p, degree, &mut row);
            *v += row.iter().zip(beta).fold(T::zero(), |a, (y, b)| a + *y * *b);
        }
    }
    Ok(Simulation { data: Dataset::new(points, values, T::zero())?, tau: basis.tau().to_vec(), jitter: sampler.jitter() })
}

/// Seeded split into `ceil(fraction n)` training and the remaining test
/// observations; both keep the original relative order.
pub fn train_test_split<T: Real>(data: &Dataset<T>, fraction: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Invalid(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n = data.len();
    let n_train = (fraction * n as f64).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Invalid(format!("a {fraction} split of {n} observations leaves one side empty")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, STREAM_SPLIT);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(train)?, data.subset(test)?))
}
