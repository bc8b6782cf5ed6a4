//! Samplers for the limit processes of the centered empty-box count.

pub mod gaussian;
pub mod levy;
pub mod prm;
pub mod stable;
pub mod subordinator;

pub use gaussian::{sample_v, GaussianGridSample, VSampler};
pub use levy::{sample_frac_integral_levy, sample_levy_path, Driver, LevyPath};
pub use prm::{sample_prm, sample_r, sample_straddles, MarkedPoint, MarkedPointSet, StraddleSet};
pub use stable::{levy_driver_cf, sample_positive_stable, StableLaw};
pub use subordinator::{
    inverse_subordinator_eval, sample_frac_integral_inverse, sample_subordinator_path, InverseValue,
    SubordinatorPath,
};
