//! Whittle-likelihood inference: model of the expected periodogram, maximum
//! likelihood fits, profile scans and ensemble calibration.

pub mod ensemble;
pub mod fit;
pub mod model;
pub mod neldermead;
pub mod profile;
pub mod whittle;

pub use ensemble::{ensemble_validate, simulate_estimate, true_params, EnsembleConfig, EnsembleReport, EnsembleRun};
pub use fit::{mle_fit, FitOptions, FitResult, Likelihood, Param};
pub use model::{ObservationModel, RinSetting};
pub use profile::{
    credible_interval, density_from_nll, joint_density, joint_density_with, profile_scan, Interval, JointDensity, ProfileOptions, ProfileScan,
};
pub use whittle::{profile_nuisance, whittle_nll, FitWindow, NuisanceParams};
