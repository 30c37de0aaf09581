//! Training pipeline: the focal/Eikonal/latent objective, query
//! sampling around the surface, Adam with serializable state, and the
//! deterministic resumable loop.

pub mod adam;
pub mod loss;
pub mod run;
pub mod sampler;

pub use adam::{AdamConfig, AdamState};
pub use loss::{
    eikonal_loss, focal, focal_scalar, latent_loss, surface_loss, total_loss, LossBreakdown,
    LossWeights, SurfaceStats, EPS_GRAD, FOCAL_CLAMP,
};
pub use run::{
    build_window, init_params, restore_training_state, step_on_window, train_loop, LogLine,
    StepOutcome, TrainOutcome, TrainSettings, MAX_BAD_STEPS,
};
pub use sampler::{
    perturbed_queries, sample_queries, subsample_surface, uniform_queries, QueryBatch,
    QUERY_SIGMA,
};
