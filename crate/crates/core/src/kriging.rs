//! Universal kriging under an intrinsic covariance of order `kappa`.
//!
//! The weights `eta` and Lagrange multipliers `rho` solve the bordered system
//!
//! ```text
//! [ Psi + sigma2 I   Q ] [ eta ]   [ phi(x0) ]
//! [ Q^T              0 ] [ rho ] = [ q(x0)   ]
//! ```
//!
//! where `Psi_ij = phi_kappa(d(x_i, x_j))`, `phi(x0)_i = phi_kappa(d(x_i, x0))`
//! and the columns of `Q` are the `kappa^2` harmonics of degree `< kappa` at
//! the observation points. The prediction is `eta^T w`. Ordinary kriging is
//! the `kappa = 1` case.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::empirical::Dataset;
use crate::error::{Error, Result};
use crate::icf::IcfModel;
use crate::scalar::{cst, from_usize, to_f64, Real};
use crate::sphere::{design_matrix, harmonic_row, unit_vector_distance, SpherePoint};

/// Separation below which two observations count as the same location.
const COINCIDENT: f64 = 1e-12;

/// Kriging weights for one target location.
#[derive(Clone, Debug, PartialEq)]
pub struct KrigingWeights<T> {
    pub eta: Vec<T>,
    pub rho: Vec<T>,
}

/// Observations plus the factorized bordered system, reusable across targets.
#[derive(Clone, Debug)]
pub struct KrigingModel<T: Real> {
    data: Dataset<T>,
    icf: IcfModel<T>,
    units: Vec<[T; 3]>,
    system: DMatrix<T>,
    lu: LU<T, Dyn, Dyn>,
}

impl<T: Real> KrigingModel<T> {
    /// Assembles and factorizes the system for `kappa = icf.kappa()`.
    pub fn new(data: Dataset<T>, icf: IcfModel<T>) -> Result<Self> {
        let kappa = icf.kappa();
        let k = kappa * kappa;
        let n = data.len();
        if n < k {
            return Err(Error::InsufficientData { n, needed: k.saturating_sub(1) });
        }
        let units: Vec<[T; 3]> = data.points().iter().map(SpherePoint::unit_vector).collect();
        let sigma2 = data.sigma2();
        let size = n + k;
        let mut system = DMatrix::zeros(size, size);
        let phi0 = icf.eval(T::zero());
        for i in 0..n {
            system[(i, i)] = phi0 + sigma2;
            for j in (i + 1)..n {
                let d = unit_vector_distance(&units[i], &units[j]);
                if sigma2 == T::zero() && d < cst(COINCIDENT) {
                    return Err(Error::SingularSystem(format!(
                        "observations {i} and {j} share a location; remove duplicates or set sigma2 > 0"
                    )));
                }
                let v = icf.eval(d);
                system[(i, j)] = v;
                system[(j, i)] = v;
            }
        }
        if k > 0 {
            let q = design_matrix(data.points(), kappa);
            let sv = q.clone().singular_values();
            let smax = sv.max();
            let tol = smax * from_usize::<T>(n.max(k)) * T::default_epsilon();
            let rank = sv.iter().filter(|s| **s > tol).count();
            if rank < k {
                return Err(Error::SingularSystem(format!(
                    "the degree < {kappa} harmonics at the observations have rank {rank}, need {k}"
                )));
            }
            system.view_mut((0, n), (n, k)).copy_from(&q);
            system.view_mut((n, 0), (k, n)).copy_from(&q.transpose());
        }
        let lu = LU::new(system.clone());
        let diag = lu.u().diagonal();
        let umax = diag.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let umin = diag.iter().fold(umax, |a, v| a.min(v.abs()));
        if !(umin > umax * from_usize::<T>(size) * T::default_epsilon()) {
            return Err(Error::SingularSystem(format!(
                "bordered matrix is numerically singular (pivot ratio {:e})",
                to_f64(umin / umax)
            )));
        }
        Ok(Self { data, icf, units, system, lu })
    }

    pub fn kappa(&self) -> usize {
        self.icf.kappa()
    }

    pub fn icf(&self) -> &IcfModel<T> {
        &self.icf
    }

    pub fn data(&self) -> &Dataset<T> {
        &self.data
    }

    /// Order of the bordered system, `n + kappa^2`.
    pub fn system_size(&self) -> usize {
        self.system.nrows()
    }

    /// Right-hand side `(phi(x0); q(x0))`.
    fn rhs_into(&self, x0: &SpherePoint<T>, out: &mut [T]) {
        let n = self.units.len();
        let u0 = x0.unit_vector();
        for (o, u) in out[..n].iter_mut().zip(&self.units) {
            *o = self.icf.eval(unit_vector_distance(u, &u0));
        }
        harmonic_row(x0, self.kappa(), &mut out[n..]);
    }

    /// `q(x0)`, the degree `< kappa` harmonics at `x0`.
    pub fn constraint_target(&self, x0: &SpherePoint<T>) -> Vec<T> {
        let k = self.kappa();
        let mut q = vec![T::zero(); k * k];
        harmonic_row(x0, k, &mut q);
        q
    }

    /// LU solve followed by one step of iterative refinement.
    fn solve(&self, rhs: DMatrix<T>) -> Result<DMatrix<T>> {
        let fail = || Error::SingularSystem("LU solve failed".into());
        let mut x = self.lu.solve(&rhs).ok_or_else(fail)?;
        let residual = &rhs - &self.system * &x;
        x += self.lu.solve(&residual).ok_or_else(fail)?;
        Ok(x)
    }

    /// Prediction and weights at `x0`.
    pub fn krige_point(&self, x0: &SpherePoint<T>) -> Result<(T, KrigingWeights<T>)> {
        let n = self.units.len();
        let mut rhs = DMatrix::zeros(self.system_size(), 1);
        self.rhs_into(x0, rhs.as_mut_slice());
        let sol = self.solve(rhs)?;
        let eta: Vec<T> = sol.as_slice()[..n].to_vec();
        let rho = sol.as_slice()[n..].to_vec();
        let pred = eta.iter().zip(self.data.values()).fold(T::zero(), |a, (e, w)| a + *e * *w);
        Ok((pred, KrigingWeights { eta, rho }))
    }

    /// Predictions at many targets with one blocked solve.
    pub fn predict(&self, targets: &[SpherePoint<T>]) -> Result<Vec<T>> {
        if targets.is_empty() {
            return Ok(Vec::new());
        }
        let size = self.system_size();
        let n = self.units.len();
        let mut rhs = DMatrix::zeros(size, targets.len());
        for (c, x0) in targets.iter().enumerate() {
            self.rhs_into(x0, rhs.column_mut(c).as_mut_slice());
        }
        let sol = self.solve(rhs)?;
        let w = DVector::from_column_slice(self.data.values());
        let eta = sol.rows(0, n);
        Ok((eta.transpose() * w).iter().copied().collect())
    }
}

/// Builds a model and predicts at one location.
pub fn krige_point<T: Real>(model: &KrigingModel<T>, x0: &SpherePoint<T>) -> Result<(T, KrigingWeights<T>)> {
    model.krige_point(x0)
}

/// Ordinary kriging: universal kriging with the constant mean only.
pub fn ordinary_krige<T: Real>(data: &Dataset<T>, icf: &IcfModel<T>, x0: &SpherePoint<T>) -> Result<T> {
    let icf = if icf.kappa() == 1 { *icf } else { icf.with_kappa(1)? };
    KrigingModel::new(data.clone(), icf)?.krige_point(x0).map(|(p, _)| p)
}

/// Root mean squared difference.
pub fn rmse<T: Real>(predictions: &[T], truth: &[T]) -> Result<T> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: truth.len() });
    }
    if predictions.is_empty() {
        return Err(Error::Invalid("RMSE of an empty set".into()));
    }
    let ss = predictions.iter().zip(truth).fold(T::zero(), |a, (p, t)| a + (*p - *t) * (*p - *t));
    Ok((ss / from_usize(predictions.len())).sqrt())
}
