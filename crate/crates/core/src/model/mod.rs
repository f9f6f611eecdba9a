//! Model mathematics: latent recursion, probability transform, likelihood
//! and analytic derivatives.

pub mod derivatives;
pub mod latent;
pub mod likelihood;
pub mod probs;

pub use derivatives::{hessian_path, residual_path, score_path, PathStatistics, ResidualMatrix};
pub use latent::{
    compute_latent_path, latent_gradients, latent_path_with_gradients, LatentPath, DEFAULT_ETA0, FIRST_TERM,
};
pub use likelihood::{negative_log_likelihood, negative_log_likelihood_from_latent, Objective};
pub use probs::{adjacent_to_probs, LevelProbs};
