//! Shared fixtures for the criterion benchmarks.

use trb_core::synth::GenConfig;
use trb_core::{generate_dataset, ModelConfig, Scene};

/// A small seeded dataset with the default behavior mix.
pub fn scenes(n: usize) -> Vec<Scene> {
    generate_dataset(&GenConfig {
        scenes: n,
        seed: 17,
        ..GenConfig::default()
    })
    .expect("valid generator config")
}

/// The model size used by the acceptance runs.
pub fn desk_model(env_aware: bool) -> ModelConfig {
    ModelConfig {
        layers: 1,
        ..ModelConfig::desk(env_aware)
    }
}
