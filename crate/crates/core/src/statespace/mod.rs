//! Linear Gaussian state-space models: Kalman filtering with missing
//! observations, RTS smoothing and maximum-likelihood estimation.

mod filter;
mod lyapunov;
mod mle;
mod model;
mod smoother;

pub use filter::{kalman_filter, loglikelihood, FilterOutput};
pub use lyapunov::{initial_covariance, solve_discrete_lyapunov, spectral_radius, DIFFUSE_VARIANCE};
pub use mle::{
    ar2_from_unconstrained, ar2_to_unconstrained, bfgs_maximize, fit_mle, fit_mle_from, Entry, FreeParam, MleFit,
    ModelTemplate, OptimizerConfig, ParamMap, Transform,
};
pub use model::StateSpaceModel;
pub use smoother::{rts_smooth, SmootherOutput};
