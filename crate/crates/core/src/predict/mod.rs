//! Prediction models behind a common interface.

mod cv;
mod features;
mod recurrent;

pub use cv::{predict_cv, ConstantVelocity};
pub use features::{
    encode_history, encode_road, raw_features, RoadEncoding, FEATURE_DIM, PASSTHROUGH_COLUMNS, ROAD_FEATURE_DIM,
};
pub(crate) use recurrent::softmax_probabilities;
pub use recurrent::{ModelConfig, ModelOutput, PreparedSample, RecurrentModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::scene::{AgentId, HorizonSet, Scene};

/// `K` candidate trajectories with mode probabilities and optional per-step covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub modes: Vec<Vec<Vec2>>,
    pub probabilities: Vec<f64>,
    /// Row-major `[sxx, sxy, syx, syy]` per mode and step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariances: Option<Vec<Vec<[f64; 4]>>>,
}

impl PredictionSet {
    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn horizon_len(&self) -> usize {
        self.modes.first().map_or(0, Vec::len)
    }

    /// Checks shapes, probability normalization, finiteness and covariance PSD-ness.
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::ShapeMismatch("prediction has no modes".into()));
        }
        if self.probabilities.len() != self.modes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                found: self.probabilities.len(),
            });
        }
        let steps = self.horizon_len();
        if self.modes.iter().any(|m| m.len() != steps) {
            return Err(Error::ShapeMismatch("modes differ in length".into()));
        }
        if self.modes.iter().flatten().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("prediction positions"));
        }
        if self.probabilities.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidState("negative mode probability".into()));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidState(format!("mode probabilities sum to {total}")));
        }
        if let Some(cov) = &self.covariances {
            if cov.len() != self.modes.len() || cov.iter().any(|c| c.len() != steps) {
                return Err(Error::ShapeMismatch("covariance shape".into()));
            }
            for c in cov.iter().flatten() {
                let [a, b, c2, d] = *c;
                let psd = (b - c2).abs() <= 1e-12 && a >= 0.0 && d >= 0.0 && a * d - b * c2 >= -1e-12;
                if !psd {
                    return Err(Error::InvalidState("covariance is not symmetric PSD".into()));
                }
            }
        }
        Ok(())
    }
}

/// A trajectory predictor operating on world-frame scenes.
///
/// Learned models apply the target-centric preprocessing themselves and map
/// their output back to the world frame.
pub trait Predictor: Sync {
    fn name(&self) -> &str;

    fn predict(&self, scene: &Scene, target: AgentId, horizons: &HorizonSet) -> Result<PredictionSet>;
}
