//! Synthetic deformable-torus sequences: generation, occlusion
//! augmentation, and point-cloud I/O.

mod augment;
mod deform;
mod ply;
mod sequence;
mod torus;

pub use augment::{
    apply_spherical_masks, augment, resample_fixed, visibility_mask, MaskBall, PartialFrame,
    MASK_COUNT_RANGE, MASK_RADIUS_RANGE,
};
pub use deform::{
    warp_det, warp_jacobian, warp_normal, warp_point, DeformationParams, DeformationTrajectory,
    ParamTrajectory, Sinusoid, BEND_RANGE, STRETCH_RANGE, TWIST_RANGE,
};
pub use ply::{
    load_frame_ply, load_sequence, save_frame_ply, save_sequence, sequence_files, ManifestFrame,
    SequenceManifest, MANIFEST_NAME, MANIFEST_VERSION,
};
pub use sequence::{generate_sequence, DataConfig, Sequence, MAX_GENERATION_ATTEMPTS};
pub use torus::{
    analytic_torus_sdf, analytic_torus_sdf_gradient, random_unit_vector, rest_normal, rest_point,
    sample_torus_frame, unit_vector_for, CompleteFrame, MAJOR_RADIUS, MIN_FRAME_POINTS,
    TUBE_RADIUS,
};
