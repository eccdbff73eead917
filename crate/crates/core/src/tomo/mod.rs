//! Desk-scale CT experiments: phantoms, simulated data, filtered
//! backprojection and the variational reconstructions.

mod experiment;
mod fbp;
mod phantom;

pub use experiment::{
    assemble_problem, prepare_prior, reconstruct, simulate_data, ExperimentConfig, Method,
    Reconstruction,
};
pub use fbp::fbp;
pub use phantom::{ellipse_sum, pixel_center, shepp_logan, warped_shepp_logan, Ellipse, SHEPP_LOGAN};
