//! Per-step agent features and road point features for the learned models.

use crate::error::{Error, Result};
use crate::frames::Normalizer;
use crate::geom::Vec2;
use crate::scene::{AgentTrack, PolylineKind, RoadGraph};

/// Width of one agent feature row:
/// `x, y, cos θ, sin θ, vx, vy, u, w, l, ν, τ(5), Δx, Δy, Δθ, Δu, Δν`.
pub const FEATURE_DIM: usize = 20;
pub(crate) const COL_VALID: usize = 9;
const COL_TYPE: usize = 10;
const COL_DELTA: usize = 15;
pub(crate) const COL_DELTA_VALID: usize = 19;

/// Flag and one-hot columns excluded from z-scoring.
pub const PASSTHROUGH_COLUMNS: [usize; 7] = [COL_VALID, 10, 11, 12, 13, 14, COL_DELTA_VALID];

/// `x, y, cos, sin, one-hot kind(3), valid`.
pub const ROAD_FEATURE_DIM: usize = 8;

/// Unnormalized feature rows for the observed window; invalid steps are all zero.
pub fn raw_features(track: &AgentTrack) -> Result<Vec<[f64; FEATURE_DIM]>> {
    let deltas = track.deltas.as_ref().ok_or(Error::MissingKinematics(track.id))?;
    let observed = track.observed();
    if deltas.len() != observed.len() {
        return Err(Error::MissingKinematics(track.id));
    }
    let one_hot = track.agent_type.one_hot();
    Ok(observed
        .iter()
        .zip(deltas)
        .map(|(s, d)| {
            let mut f = [0.0; FEATURE_DIM];
            if !s.valid {
                return f;
            }
            let (sin, cos) = s.heading.sin_cos();
            f[..COL_TYPE].copy_from_slice(&[
                s.position.x,
                s.position.y,
                cos,
                sin,
                s.velocity.x,
                s.velocity.y,
                s.speed,
                s.width,
                s.length,
                1.0,
            ]);
            f[COL_TYPE..COL_DELTA].copy_from_slice(&one_hot);
            f[COL_DELTA..].copy_from_slice(&[d.position.x, d.position.y, d.heading, d.speed, f64::from(d.valid)]);
            f
        })
        .collect())
}

/// Normalized history encoding; invalid rows stay zero, including their flag.
pub fn encode_history(track: &AgentTrack, normalizer: &Normalizer) -> Result<Vec<[f64; FEATURE_DIM]>> {
    if normalizer.dim() != FEATURE_DIM {
        return Err(Error::DimensionMismatch {
            expected: FEATURE_DIM,
            found: normalizer.dim(),
        });
    }
    let mut rows = raw_features(track)?;
    for r in rows.iter_mut().filter(|r| r[COL_VALID] != 0.0) {
        for ((x, m), s) in r.iter_mut().zip(&normalizer.mean).zip(&normalizer.std) {
            *x = (*x - m) / s;
        }
    }
    Ok(rows)
}

/// Fixed-size set of the road points closest to the origin of the target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadEncoding {
    pub points: Vec<[f64; ROAD_FEATURE_DIM]>,
}

impl RoadEncoding {
    pub fn valid_points(&self) -> impl Iterator<Item = &[f64; ROAD_FEATURE_DIM]> {
        self.points.iter().filter(|p| p[ROAD_FEATURE_DIM - 1] != 0.0)
    }

    pub fn zeroed(budget: usize) -> Self {
        Self {
            points: vec![[0.0; ROAD_FEATURE_DIM]; budget],
        }
    }
}

/// Selects up to `budget` polyline points nearest the origin and pads with
/// zero rows. Ties in distance keep polyline order.
pub fn encode_road(road: &RoadGraph, budget: usize) -> RoadEncoding {
    let mut candidates: Vec<(f64, Vec2, Vec2, PolylineKind)> = Vec::with_capacity(road.point_count());
    for poly in &road.polylines {
        let pts = &poly.points;
        for (i, p) in pts.iter().enumerate() {
            let dir = if i + 1 < pts.len() {
                pts[i + 1] - *p
            } else if i > 0 {
                *p - pts[i - 1]
            } else {
                Vec2::new(1.0, 0.0)
            };
            candidates.push((p.norm(), *p, dir, poly.kind));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut enc = RoadEncoding::zeroed(budget);
    for (slot, (_, p, dir, kind)) in enc.points.iter_mut().zip(candidates) {
        let a = dir.angle();
        slot[0] = p.x;
        slot[1] = p.y;
        slot[2] = a.cos();
        slot[3] = a.sin();
        slot[4 + kind.index()] = 1.0;
        slot[ROAD_FEATURE_DIM - 1] = 1.0;
    }
    enc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{fit_normalizer, to_target_frame};
    use crate::perturb::late_detection;
    use crate::scene::fixtures::*;
    use crate::scene::{derive_kinematics, derive_scene_kinematics, AgentId, Polyline};

    #[test]
    fn target_current_row_is_canonical() {
        let s = two_agent_scene();
        let (local, _) = to_target_frame(&s, AgentId(1)).unwrap();
        let local = derive_scene_kinematics(&local);
        let rows = raw_features(local.track(AgentId(1)).unwrap()).unwrap();
        let cur = rows[10];
        assert_eq!(&cur[..4], &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(cur[COL_VALID], 1.0);
        assert_eq!(&cur[COL_TYPE..COL_DELTA], &[0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn requires_kinematics() {
        let s = two_agent_scene();
        assert!(matches!(raw_features(&s.tracks[0]), Err(Error::MissingKinematics(_))));
    }

    #[test]
    fn late_detected_history_is_zero() {
        let s = late_detection(&two_agent_scene(), &[AgentId(1)]).unwrap();
        let t = derive_kinematics(s.track(AgentId(1)).unwrap());
        let norm = Normalizer::identity(FEATURE_DIM);
        let rows = encode_history(&t, &norm).unwrap();
        assert!(rows[..10].iter().all(|r| r.iter().all(|x| *x == 0.0)));
        assert_eq!(rows[10][COL_VALID], 1.0);
        assert_eq!(rows[10][COL_DELTA_VALID], 1.0);
    }

    #[test]
    fn normalized_history_round_trips() {
        let s = derive_scene_kinematics(&two_agent_scene());
        let all: Vec<_> = s.tracks.iter().flat_map(|t| raw_features(t).unwrap()).collect();
        let norm = fit_normalizer(&all).unwrap().with_passthrough(&PASSTHROUGH_COLUMNS);
        let raw = raw_features(&s.tracks[1]).unwrap();
        let enc = encode_history(&s.tracks[1], &norm).unwrap();
        for (r, e) in raw.iter().zip(&enc) {
            let back = norm.denormalize(e);
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn empty_road_encodes_to_zeros() {
        let e = encode_road(&RoadGraph::default(), 16);
        assert_eq!(e.points.len(), 16);
        assert!(e.points.iter().all(|p| p.iter().all(|x| *x == 0.0)));
    }

    fn brute_force_nearest(road: &RoadGraph, budget: usize) -> Vec<Vec2> {
        let mut all: Vec<Vec2> = road.polylines.iter().flat_map(|p| p.points.clone()).collect();
        let mut out = Vec::new();
        while out.len() < budget && !all.is_empty() {
            let mut best = 0;
            for i in 1..all.len() {
                if all[i].norm() < all[best].norm() {
                    best = i;
                }
            }
            out.push(all.remove(best));
        }
        out
    }

    #[test]
    fn straight_lane_nearest_points() {
        let road = RoadGraph {
            polylines: vec![Polyline {
                kind: PolylineKind::LaneCenter,
                points: (0..21).map(|i| Vec2::new(i as f64 * 2.0 - 12.7, 0.0)).collect(),
            }],
        };
        let full = encode_road(&road, 21);
        let expect = brute_force_nearest(&road, 21);
        let got: Vec<Vec2> = full.valid_points().map(|p| Vec2::new(p[0], p[1])).collect();
        assert_eq!(got, expect);

        let small = encode_road(&road, 5);
        assert_eq!(small.valid_points().count(), 5);
        let got: Vec<Vec2> = small.valid_points().map(|p| Vec2::new(p[0], p[1])).collect();
        assert_eq!(got, brute_force_nearest(&road, 5));
        let cutoff = got.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let excluded = road.polylines[0].points.iter().filter(|p| !got.contains(p));
        assert!(excluded.into_iter().all(|p| p.norm() > cutoff));
        assert!(small.points.iter().all(|p| p[2] == 1.0 && p[4] == 1.0));
    }
}
