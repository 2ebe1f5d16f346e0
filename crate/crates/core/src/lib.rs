//! Exact conditional likelihood, analytic gradient and multi-start
//! calibration for VARMA models whose moving-average coefficients are
//! scalars,
//!
//! ```text
//! X_t = mu + X_{t-1} Phi_1 + ... + X_{t-p} Phi_p + eps_t + theta_1 eps_{t-1} + ... + theta_q eps_{t-q}
//! ```
//!
//! with observations stored as rows. The likelihood is evaluated through
//! FFT Toeplitz products and a `q x q` Woodbury kernel rather than a Kalman
//! filter or a dense `T x T` factorisation, so one evaluation costs
//! `O(k T log T + (kp + 1)^2 T)`.
//!
//! ```
//! use nalgebra::DMatrix;
//! use svarma::{profile_loglik, RegressorSet, SampleMatrix, ThetaPoly};
//!
//! let x = SampleMatrix::new(DMatrix::from_fn(40, 1, |r, _| ((r * 7) % 5) as f64), 1).unwrap();
//! let theta = ThetaPoly::from_tail(&[0.3]).unwrap();
//! let report = profile_loglik(&theta, &x, &RegressorSet::default()).unwrap();
//! assert!(report.loglik.is_finite());
//! ```

pub mod calibrate;
pub mod error;
pub mod gradient;
pub mod kernel;
pub mod likelihood;
mod optim;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod polyops;
pub mod roots;
pub mod simulate;

pub use calibrate::{fit, information_criteria, seed_grid, select_order, FitOptions, FitResult, SeedGrid};
pub use error::{Error, Result};
pub use gradient::{grad_chain, grad_profile_loglik, value_and_gradient, GradientReport};
pub use kernel::{build_kernel, BandedCholesky, build_lambda, build_sigma, szego_limit, KernelHandle, Lambda, SigmaBand};
pub use likelihood::{
    conditional_loglik, optimal_omega, optimal_regression, profile_loglik, residuals, LikelihoodReport, RegressorSet,
    VarmaSpec,
};
pub use polyops::{invert_series, theta_inverse_lags, toeplitz_apply, SampleMatrix, SeriesTruncation, ThetaPoly};
pub use roots::{invert_roots, is_invertible, roots_of, vieta, IRSelection, RootSet};
pub use simulate::{matrix_to_scalar, simulate_varma, MatrixVarma, NoiseConfig, ScalarForm};
