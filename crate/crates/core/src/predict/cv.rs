use super::{PredictionSet, Predictor};
use crate::error::{Error, Result};
use crate::scene::{AgentId, AgentState, HorizonSet, Scene};

/// `x + t * v` for every horizon `t`, from the current state alone.
pub fn predict_cv(state: &AgentState, horizons: &HorizonSet) -> Result<PredictionSet> {
    if !state.valid {
        return Err(Error::InvalidState("constant velocity needs a valid current state".into()));
    }
    let mode = horizons
        .horizons
        .iter()
        .map(|t| state.position + state.velocity * *t)
        .collect();
    Ok(PredictionSet {
        modes: vec![mode],
        probabilities: vec![1.0],
        covariances: None,
    })
}

/// Constant velocity baseline.
///
/// Extrapolation is equivariant under rigid transforms, so the model works
/// directly on world coordinates and skips the target-frame round trip. Its
/// output therefore depends only on the current position and velocity.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocity;

impl Predictor for ConstantVelocity {
    fn name(&self) -> &str {
        "cv"
    }

    fn predict(&self, scene: &Scene, target: AgentId, horizons: &HorizonSet) -> Result<PredictionSet> {
        if !scene.is_target(target) {
            return Err(Error::UnknownTarget(target));
        }
        let track = scene.track(target).ok_or(Error::UnknownTarget(target))?;
        predict_cv(track.current(), horizons)
    }
}
