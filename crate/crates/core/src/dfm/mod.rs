//! Two-step factor nowcasting: one common factor from a small monthly
//! panel, then a mixed-frequency bridge to quarterly growth with an
//! analytic Gaussian density.

mod bridge;
mod density;
mod factor;

pub use bridge::{
    aggregate, bridge_model, density_nowcast_dfm, factor_window, fit_bridge, nowcast_mean, nowcast_variance,
    variance_from_parts, BridgeSpec, AGGREGATION_VARIANCE_FACTOR, AGGREGATION_WEIGHTS,
};
pub use density::GaussianDensity;
pub use factor::{ar2_variance, fit_dfm, DfmConfig, DfmSpec, FactorScores};
