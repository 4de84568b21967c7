//! Intrinsic random functions on the sphere.
//!
//! The crate covers the full universal-kriging workflow for fields whose
//! low-frequency truncation is homogeneous:
//!
//! * [`sphere`]: great-circle geometry, Legendre functions and real
//!   spherical harmonics;
//! * [`icf`]: the parametric intrinsic covariance `phi_kappa(h; r)`;
//! * [`empirical`]: residual fields, binned moment estimates, the
//!   non-homogeneity criterion `M(j)` and the choice of `kappa`;
//! * [`fitting`]: weighted least-squares estimation of `r`;
//! * [`kriging`]: universal (and ordinary) kriging predictions;
//! * [`simulate`]: Gaussian simulation from the reproducing-kernel covariance;
//! * [`study`]: the ordinary-versus-universal kriging comparison;
//! * [`io`]: CSV, JSON and SVG formats.
//!
//! The numerical modules are generic over the scalar type ([`Real`]); the
//! aliases below fix it to `f64`, which is what the file formats use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod empirical;
pub mod error;
pub mod fitting;
pub mod icf;
pub mod io;
pub mod kriging;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod sphere;
pub mod study;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SpherePointF64 = sphere::SpherePoint<f64>;
pub type SpherePointF32 = sphere::SpherePoint<f32>;
pub type DatasetF64 = empirical::Dataset<f64>;
pub type LagGridF64 = empirical::LagGrid<f64>;
pub type LagProfileF64 = empirical::LagProfile<f64>;
pub type CriterionTableF64 = empirical::CriterionTable<f64>;
pub type IcfModelF64 = icf::IcfModel<f64>;
pub type IcfModelF32 = icf::IcfModel<f32>;
pub type WlsFitF64 = fitting::WlsFit<f64>;
pub type KrigingModelF64 = kriging::KrigingModel<f64>;
pub type SimulationConfigF64 = simulate::SimulationConfig<f64>;
