//! Robustness benchmarking of road-user trajectory predictors.
//!
//! The crate covers the whole evaluation loop: a scene data model
//! ([`scene`]), target-centric preprocessing ([`frames`]), disruptive input
//! perturbations ([`perturb`]), predictors ([`predict`]), from-scratch
//! training ([`train`]), displacement metrics ([`metrics`]) and a seeded
//! synthetic scene generator with its file format ([`synth`]).

pub mod error;
pub mod frames;
pub mod geom;
pub mod metrics;
pub mod nn;
pub mod perturb;
pub mod predict;
pub mod rng;
pub mod scene;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use frames::{fit_normalizer, from_target_frame, to_target_frame, Normalizer, PoseTransform};
pub use geom::{wrap_angle, Vec2};
pub use metrics::{degradation, delta_distribution, evaluate, min_ade, DeltaDistribution, Degradation, EvalResult};
pub use perturb::{augment_dataset, heading_noise, late_detection, offset_heading, remove_road, Perturbation, Scope};
pub use predict::{predict_cv, ConstantVelocity, ModelConfig, PredictionSet, Predictor, RecurrentModel};
pub use scene::{
    derive_kinematics, validate_scene, AgentId, AgentState, AgentTrack, AgentType, HorizonSet, Polyline, PolylineKind,
    RoadGraph, Scene, SceneId, Violation,
};
pub use synth::{generate_dataset, read_scenes, write_scenes, GenConfig};
pub use train::{grad_check, load_checkpoint, save_checkpoint, train, wta_loss, TrainConfig, TrainHistory};
