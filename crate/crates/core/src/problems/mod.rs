//! Objective function classes: TV-regularised denoising and deblurring of
//! random ellipse phantoms, plus small dense least-squares problems.

mod dataset;
mod objective;
mod operator;
mod phantom;
mod reference;
mod tv;

pub use dataset::{
    format_image, generate_dataset, generate_sample, load_dataset, parse_image, sample_seed,
    save_dataset, OperatorSpec, ProblemConfig, Sample,
};
pub use objective::{LeastSquares, Objective, TvObjective};
pub use operator::ForwardOperator;
pub use phantom::{add_noise, gaussian_kernel, generate_phantom};
pub use reference::{reference_minimum, MIN_REFERENCE_BUDGET};
pub use tv::{tv_gradient, tv_gradient_on, tv_value, tv_value_on};

#[cfg(test)]
mod tests;
