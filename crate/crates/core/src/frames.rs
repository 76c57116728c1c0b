//! Target-centric rigid transform of a scene and z-score feature normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Vec2};
use crate::scene::{AgentId, AgentState, Scene};

/// Maps target-frame coordinates to world coordinates: `p_world = R(rotation) p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseTransform {
    pub translation: Vec2,
    pub rotation: f64,
}

impl PoseTransform {
    pub const IDENTITY: PoseTransform = PoseTransform {
        translation: Vec2::ZERO,
        rotation: 0.0,
    };

    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotate(self.rotation) + self.translation
    }

    pub fn apply_vector(&self, v: Vec2) -> Vec2 {
        v.rotate(self.rotation)
    }

    pub fn inverse(&self) -> PoseTransform {
        PoseTransform {
            translation: (-self.translation).rotate(-self.rotation),
            rotation: -self.rotation,
        }
    }

    /// World to target frame, translating first so the target lands exactly on the origin.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.translation).rotate(-self.rotation)
    }
}

fn localize_state(t: &PoseTransform, s: &AgentState) -> AgentState {
    if !s.valid {
        return *s;
    }
    AgentState {
        position: t.to_local(s.position),
        heading: wrap_angle(s.heading - t.rotation),
        velocity: s.velocity.rotate(-t.rotation),
        ..*s
    }
}

/// Re-expresses the whole scene in the frame of `target`'s current state.
///
/// Positions are translated by the target position and rotated by minus its
/// current heading, whatever that heading is. The returned transform maps
/// target-frame points back to the world.
pub fn to_target_frame(scene: &Scene, target: AgentId) -> Result<(Scene, PoseTransform)> {
    if !scene.is_target(target) {
        return Err(Error::UnknownTarget(target));
    }
    let track = scene.track(target).ok_or(Error::UnknownTarget(target))?;
    let cur = track.current();
    if !cur.valid {
        return Err(Error::InvalidCurrentState(target));
    }
    let tf = PoseTransform {
        translation: cur.position,
        rotation: cur.heading,
    };

    let mut out = scene.clone();
    for poly in out.road.polylines.iter_mut() {
        for p in poly.points.iter_mut() {
            *p = tf.to_local(*p);
        }
    }
    for tr in out.tracks.iter_mut() {
        for s in tr.states.iter_mut() {
            *s = localize_state(&tf, s);
        }
        if let Some(deltas) = tr.deltas.as_mut() {
            for d in deltas.iter_mut() {
                d.position = d.position.rotate(-tf.rotation);
            }
        }
        if let Some(truth) = tr.history_truth.as_mut() {
            for p in truth.iter_mut() {
                *p = tf.to_local(*p);
            }
        }
    }
    // exact post-state for the target, independent of rounding in the rotation
    if let Some(tr) = out.track_mut(target) {
        let s = tr.current_mut();
        s.position = Vec2::ZERO;
        s.heading = 0.0;
    }
    Ok((out, tf))
}

/// Maps target-frame positions back to the world frame.
pub fn from_target_frame(transform: &PoseTransform, positions: &[Vec2]) -> Vec<Vec2> {
    positions.iter().map(|p| transform.apply(*p)).collect()
}

/// Lower bound applied to every fitted standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Leaves the listed columns untouched (mean 0, std 1).
    pub fn with_passthrough(mut self, columns: &[usize]) -> Self {
        for &c in columns {
            self.mean[c] = 0.0;
            self.std[c] = 1.0;
        }
        self
    }

    pub fn normalize(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}

/// Fits mean and (population) standard deviation per column.
///
/// Callers pass only rows from valid states.
pub fn fit_normalizer<R: AsRef<[f64]>>(rows: &[R]) -> Result<Normalizer> {
    let first = rows.first().ok_or(Error::EmptyInput("feature rows"))?;
    let dim = first.as_ref().len();
    let mut mean = vec![0.0; dim];
    for r in rows {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    Ok(Normalizer { mean, std })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::scene::fixtures::*;
    use crate::scene::AgentId;

    #[test]
    fn pure_translation() {
        let mut s = two_agent_scene();
        let shift = Vec2::new(5.0, 3.0);
        for tr in s.tracks.iter_mut() {
            for st in tr.states.iter_mut() {
                st.position += shift;
            }
        }
        let (local, tf) = to_target_frame(&s, AgentId(1)).unwrap();
        assert_eq!(tf.translation, Vec2::new(5.0, 3.0));
        assert_eq!(local.tracks[0].current().position, Vec2::ZERO);
        for (a, b) in local.tracks[1].states.iter().zip(&s.tracks[1].states) {
            assert_eq!(a.position, b.position - shift);
            assert_eq!(a.heading, b.heading);
        }
    }

    #[test]
    fn quarter_turn() {
        let mut s = two_agent_scene();
        s.tracks[0].states[10].position = Vec2::ZERO;
        s.tracks[0].states[10].heading = FRAC_PI_2;
        s.tracks[1].states[10].position = Vec2::new(0.0, 10.0);
        let (local, _) = to_target_frame(&s, AgentId(1)).unwrap();
        let p = local.tracks[1].states[10].position;
        assert!((p.x - 10.0).abs() < 1e-12 && p.y.abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn errors() {
        let mut s = two_agent_scene();
        assert!(matches!(to_target_frame(&s, AgentId(2)), Err(Error::UnknownTarget(_))));
        s.tracks[0].states[10] = AgentState::invalid();
        assert!(matches!(to_target_frame(&s, AgentId(1)), Err(Error::InvalidCurrentState(_))));
    }

    #[test]
    fn inverse_identity_and_translation() {
        let pts = vec![Vec2::new(1.5, -2.0), Vec2::new(0.0, 0.0)];
        assert_eq!(from_target_frame(&PoseTransform::IDENTITY, &pts), pts);
        let t = PoseTransform {
            translation: Vec2::new(5.0, 3.0),
            rotation: 0.0,
        };
        assert_eq!(from_target_frame(&t, &[Vec2::ZERO]), vec![Vec2::new(5.0, 3.0)]);
    }

    #[test]
    fn round_trip_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let t = PoseTransform {
                translation: Vec2::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)),
                rotation: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            };
            let p = Vec2::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
            let back = from_target_frame(&t, &[t.to_local(p)])[0];
            worst = worst.max(back.distance(p));
            let via_inverse = t.inverse().apply(t.apply(p));
            worst = worst.max(via_inverse.distance(p));
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn two_point_statistics() {
        let n = fit_normalizer(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(n.mean, vec![1.0]);
        assert_eq!(n.std, vec![1.0]);
    }

    #[test]
    fn constant_column_is_floored() {
        let n = fit_normalizer(&[vec![3.0, 1.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(n.std[0], STD_FLOOR);
        assert_eq!(n.normalize(&[3.0, 1.5])[0], 0.0);
    }

    #[test]
    fn fit_errors() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(fit_normalizer(&empty), Err(Error::EmptyInput(_))));
        assert!(matches!(
            fit_normalizer(&[vec![1.0], vec![1.0, 2.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn standard_normal_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<[f64; 1]> = (0..10_000).map(|_| [rng.sample(StandardNormal)]).collect();
        let n = fit_normalizer(&rows).unwrap();
        assert!(n.mean[0].abs() < 0.05);
        assert!((n.std[0] - 1.0).abs() < 0.05);
    }

    #[test]
    fn normalizer_round_trip_and_mean() {
        let n = Normalizer {
            mean: vec![1.0, -4.0, 0.5],
            std: vec![2.0, 0.3, 1e-6],
        };
        let f = [3.7, -1.25, 0.5000001];
        let back = n.denormalize(&n.normalize(&f));
        for (a, b) in back.iter().zip(&f) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(n.normalize(&n.mean).iter().all(|z| *z == 0.0));
    }
}
