//! Disruptive scene perturbations and dataset augmentation.
//!
//! All perturbations act on world-frame scenes, before any target-centric
//! preprocessing, so a corrupted heading also corrupts the frame rotation a
//! learned model sees. Each one touches only its documented fields.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::wrap_angle;
use crate::rng;
use crate::scene::{AgentId, AgentState, RoadGraph, Scene, SceneId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    TargetOnly,
    AllAgents,
}

fn default_offset() -> f64 {
    FRAC_PI_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    RemoveRoad,
    LateDetection {
        #[serde(default)]
        scope: Scope,
    },
    HeadingOffset {
        #[serde(default = "default_offset")]
        angle: f64,
    },
    HeadingNoise { sigma: f64, seed: u64 },
}

impl Perturbation {
    pub fn heading_offset() -> Self {
        Perturbation::HeadingOffset { angle: FRAC_PI_2 }
    }

    pub fn late_detection() -> Self {
        Perturbation::LateDetection { scope: Scope::TargetOnly }
    }

    /// Short stable name used in reports and derived scene ids.
    pub fn label(&self) -> String {
        match self {
            Perturbation::RemoveRoad => "remove_road".into(),
            Perturbation::LateDetection { scope: Scope::TargetOnly } => "late_detection".into(),
            Perturbation::LateDetection { scope: Scope::AllAgents } => "late_detection_all".into(),
            Perturbation::HeadingOffset { angle } if *angle == FRAC_PI_2 => "heading_offset".into(),
            Perturbation::HeadingOffset { angle } => format!("heading_offset_{:.4}", angle),
            Perturbation::HeadingNoise { sigma, .. } => format!("heading_noise_{:.4}", sigma),
        }
    }

    /// Applies the perturbation; per-target kinds act on every scene target.
    pub fn apply(&self, scene: &Scene) -> Result<Scene> {
        match self {
            Perturbation::RemoveRoad => Ok(remove_road(scene)),
            Perturbation::LateDetection { scope } => {
                let ids: Vec<AgentId> = match scope {
                    Scope::TargetOnly => scene.targets.clone(),
                    Scope::AllAgents => scene.tracks.iter().map(|t| t.id).collect(),
                };
                late_detection_any(scene, &ids)
            }
            Perturbation::HeadingOffset { angle } => {
                let mut out = scene.clone();
                for id in &scene.targets {
                    out = offset_heading(&out, *id, *angle)?;
                }
                Ok(out)
            }
            Perturbation::HeadingNoise { sigma, seed } => {
                let mut out = scene.clone();
                for id in &scene.targets {
                    out = heading_noise(&out, *id, *sigma, *seed)?;
                }
                Ok(out)
            }
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn remove_road(scene: &Scene) -> Scene {
    Scene {
        road: RoadGraph::default(),
        ..scene.clone()
    }
}

/// Invalidates every observed state before the current one for the named targets.
pub fn late_detection(scene: &Scene, targets: &[AgentId]) -> Result<Scene> {
    if let Some(id) = targets.iter().find(|id| !scene.is_target(**id)) {
        return Err(Error::UnknownTarget(*id));
    }
    late_detection_any(scene, targets)
}

fn late_detection_any(scene: &Scene, ids: &[AgentId]) -> Result<Scene> {
    let mut out = scene.clone();
    for id in ids {
        let track = out.track_mut(*id).ok_or(Error::UnknownTarget(*id))?;
        let cur = track.current_index;
        for s in &mut track.states[..cur] {
            *s = AgentState::invalid();
        }
        // stale kinematics would describe the removed history
        track.deltas = None;
    }
    Ok(out)
}

/// Adds `angle` to the target's current heading. Nothing else changes.
pub fn offset_heading(scene: &Scene, target: AgentId, angle: f64) -> Result<Scene> {
    if !scene.is_target(target) {
        return Err(Error::UnknownTarget(target));
    }
    if angle == 0.0 {
        return Ok(scene.clone());
    }
    let mut out = scene.clone();
    let track = out.track_mut(target).ok_or(Error::UnknownTarget(target))?;
    let s = track.current_mut();
    s.heading = wrap_angle(s.heading + angle);
    Ok(out)
}

/// Perturbs the target's current heading with a zero-mean Gaussian draw.
///
/// The draw comes from a stream keyed on `(seed, scene id, target id)`.
pub fn heading_noise(scene: &Scene, target: AgentId, sigma: f64, seed: u64) -> Result<Scene> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("heading noise sigma must be >= 0, got {sigma}")));
    }
    if !scene.is_target(target) {
        return Err(Error::UnknownTarget(target));
    }
    if sigma == 0.0 {
        return Ok(scene.clone());
    }
    let angle = heading_noise_draw(&scene.id, target, sigma, seed);
    offset_heading(scene, target, angle)
}

pub(crate) fn heading_noise_draw(scene: &SceneId, target: AgentId, sigma: f64, seed: u64) -> f64 {
    let mut r = rng::stream(seed, &[b"heading_noise", scene.0.as_bytes(), &target.0.to_le_bytes()]);
    Normal::new(0.0, sigma).expect("sigma checked by caller").sample(&mut r)
}

/// Originals followed by one perturbed copy of each scene.
pub fn augment_dataset(dataset: &[Scene], p: &Perturbation) -> Result<Vec<Scene>> {
    let mut out = Vec::with_capacity(dataset.len() * 2);
    out.extend(dataset.iter().cloned());
    for s in dataset {
        let mut copy = p.apply(s)?;
        copy.id = SceneId(format!("{}~{}", s.id, p.label()));
        out.push(copy);
    }
    Ok(out)
}
