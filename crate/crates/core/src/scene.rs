//! Scene, agent and road data model plus derived per-step kinematics.
//!
//! A [`Scene`] is one prediction instance. Every [`AgentTrack`] holds a fixed
//! window of states at 10 Hz: the observed part (history plus the current
//! state at `current_index`) followed by the ground-truth future. Invalid
//! states are always zero-filled so downstream encoders never need a second
//! missing-data path.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Vec2};

/// Sampling period shared by every scene.
pub const DT: f64 = 0.1;
/// Default number of observed states (1 s of history plus the current state).
pub const DEFAULT_HISTORY_LEN: usize = 11;
/// Default number of future states (8 s).
pub const DEFAULT_FUTURE_LEN: usize = 80;

const SPEED_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SceneId(pub String);

impl fmt::Display for SceneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SceneId {
    fn from(s: &str) -> Self {
        SceneId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    #[default]
    Unset,
    Vehicle,
    Pedestrian,
    Cyclist,
    Other,
}

impl AgentType {
    pub const ALL: [AgentType; 5] = [
        AgentType::Unset,
        AgentType::Vehicle,
        AgentType::Pedestrian,
        AgentType::Cyclist,
        AgentType::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f64; 5] {
        let mut v = [0.0; 5];
        v[self.index()] = 1.0;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    /// Radians, counterclockwise from +x, in `(-pi, pi]`.
    pub heading: f64,
    pub velocity: Vec2,
    pub speed: f64,
    pub width: f64,
    pub length: f64,
    pub valid: bool,
}

impl AgentState {
    /// Builds a valid state; speed is taken from the velocity norm.
    pub fn new(position: Vec2, heading: f64, velocity: Vec2, width: f64, length: f64) -> Self {
        Self {
            position,
            heading,
            velocity,
            speed: velocity.norm(),
            width,
            length,
            valid: true,
        }
    }

    /// The canonical invalid state: every numeric field zero.
    pub const fn invalid() -> Self {
        Self {
            position: Vec2::ZERO,
            heading: 0.0,
            velocity: Vec2::ZERO,
            speed: 0.0,
            width: 0.0,
            length: 0.0,
            valid: false,
        }
    }

    fn is_zero_filled(&self) -> bool {
        *self == Self::invalid()
    }
}

/// Change of a state with respect to the previous observed step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateDelta {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    /// `valid_t - valid_{t-1}`, one of -1, 0, 1.
    pub valid: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub id: AgentId,
    pub agent_type: AgentType,
    /// Observed states `0..=current_index`, then the future.
    pub states: Vec<AgentState>,
    pub current_index: usize,
    /// Per observed step, filled by [`derive_kinematics`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<StateDelta>>,
    /// Noise-free positions of the observed window, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_truth: Option<Vec<Vec2>>,
}

impl AgentTrack {
    pub fn current(&self) -> &AgentState {
        &self.states[self.current_index]
    }

    pub fn current_mut(&mut self) -> &mut AgentState {
        &mut self.states[self.current_index]
    }

    pub fn history_len(&self) -> usize {
        self.current_index + 1
    }

    pub fn future_len(&self) -> usize {
        self.states.len() - self.history_len()
    }

    pub fn observed(&self) -> &[AgentState] {
        &self.states[..=self.current_index]
    }

    pub fn future(&self) -> &[AgentState] {
        &self.states[self.current_index + 1..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolylineKind {
    LaneCenter,
    RoadEdge,
    Crosswalk,
}

impl PolylineKind {
    pub const ALL: [PolylineKind; 3] = [
        PolylineKind::LaneCenter,
        PolylineKind::RoadEdge,
        PolylineKind::Crosswalk,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub kind: PolylineKind,
    pub points: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoadGraph {
    pub polylines: Vec<Polyline>,
}

impl RoadGraph {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.polylines.iter().map(|p| p.points.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: SceneId,
    pub road: RoadGraph,
    pub tracks: Vec<AgentTrack>,
    pub targets: Vec<AgentId>,
    pub dt: f64,
}

impl Scene {
    pub fn track(&self, id: AgentId) -> Option<&AgentTrack> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn track_mut(&mut self, id: AgentId) -> Option<&mut AgentTrack> {
        self.tracks.iter_mut().find(|t| t.id == id)
    }

    pub fn is_target(&self, id: AgentId) -> bool {
        self.targets.contains(&id)
    }
}

/// Ordered prediction horizons in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSet {
    pub horizons: Vec<f64>,
}

impl HorizonSet {
    /// `{k * dt | 1 <= k <= steps}` with each horizon computed as `k / 10`.
    pub fn uniform(steps: usize) -> Self {
        Self {
            horizons: (1..=steps).map(|k| k as f64 / 10.0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.horizons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizons.is_empty()
    }

    /// Index into the future window for each horizon.
    pub fn step_indices(&self) -> Vec<usize> {
        self.horizons
            .iter()
            .map(|h| ((h / DT).round() as usize).saturating_sub(1))
            .collect()
    }
}

impl Default for HorizonSet {
    fn default() -> Self {
        Self::uniform(DEFAULT_FUTURE_LEN)
    }
}

/// One broken invariant, located as precisely as possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub track: Option<AgentId>,
    pub state_index: Option<usize>,
    pub field: String,
    pub message: String,
}

impl Violation {
    fn scene(field: &str, message: impl Into<String>) -> Self {
        Self {
            track: None,
            state_index: None,
            field: field.to_owned(),
            message: message.into(),
        }
    }

    fn state(track: AgentId, index: usize, field: &str, message: impl Into<String>) -> Self {
        Self {
            track: Some(track),
            state_index: Some(index),
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.track, self.state_index) {
            (Some(t), Some(i)) => write!(f, "track {t} state {i} {}: {}", self.field, self.message),
            (Some(t), None) => write!(f, "track {t} {}: {}", self.field, self.message),
            _ => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

fn check_state(track: AgentId, index: usize, s: &AgentState, out: &mut Vec<Violation>) {
    if !s.valid {
        if !s.is_zero_filled() {
            out.push(Violation::state(track, index, "valid", "invalid state is not zero-filled"));
        }
        return;
    }
    let finite = s.position.is_finite()
        && s.heading.is_finite()
        && s.velocity.is_finite()
        && s.speed.is_finite()
        && s.width.is_finite()
        && s.length.is_finite();
    if !finite {
        out.push(Violation::state(track, index, "state", "non-finite field"));
        return;
    }
    if s.width <= 0.0 || s.length <= 0.0 {
        out.push(Violation::state(track, index, "dimensions", "width and length must be positive"));
    }
    if (s.speed - s.velocity.norm()).abs() > SPEED_TOLERANCE {
        out.push(Violation::state(
            track,
            index,
            "speed",
            format!("speed {} differs from |velocity| {}", s.speed, s.velocity.norm()),
        ));
    }
    if !(s.heading > -std::f64::consts::PI && s.heading <= std::f64::consts::PI) {
        out.push(Violation::state(track, index, "heading", "heading outside (-pi, pi]"));
    }
}

/// Checks every data-model invariant. An empty result means the scene is well formed.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    if (scene.dt - DT).abs() > 1e-12 {
        out.push(Violation::scene("dt", format!("sampling period {} is not {DT}", scene.dt)));
    }
    if scene.targets.is_empty() {
        out.push(Violation::scene("targets", "no prediction targets"));
    }

    let mut seen = HashSet::new();
    for t in &scene.tracks {
        if !seen.insert(t.id) {
            out.push(Violation {
                track: Some(t.id),
                state_index: None,
                field: "id".into(),
                message: "duplicate agent id".into(),
            });
        }
    }

    for id in &scene.targets {
        match scene.track(*id) {
            None => out.push(Violation {
                track: Some(*id),
                state_index: None,
                field: "targets".into(),
                message: format!("target {id} has no track"),
            }),
            Some(t) if t.current_index < t.states.len() && !t.current().valid => {
                out.push(Violation::state(*id, t.current_index, "valid", "target has no current observation"))
            }
            _ => {}
        }
    }

    let window = scene.tracks.first().map(|t| (t.states.len(), t.current_index));
    for t in &scene.tracks {
        if Some((t.states.len(), t.current_index)) != window {
            out.push(Violation {
                track: Some(t.id),
                state_index: None,
                field: "states".into(),
                message: "window length differs from the rest of the scene".into(),
            });
        }
        if t.current_index >= t.states.len() {
            out.push(Violation {
                track: Some(t.id),
                state_index: None,
                field: "current_index".into(),
                message: "current index outside the state window".into(),
            });
            continue;
        }
        for (i, s) in t.states.iter().enumerate() {
            check_state(t.id, i, s, &mut out);
        }
        if let Some(d) = &t.deltas {
            if d.len() != t.history_len() {
                out.push(Violation {
                    track: Some(t.id),
                    state_index: None,
                    field: "deltas".into(),
                    message: "kinematics length differs from the observed window".into(),
                });
            }
        }
    }

    for (i, p) in scene.road.polylines.iter().enumerate() {
        if p.points.len() < 2 {
            out.push(Violation::scene("road", format!("polyline {i} has fewer than 2 points")));
        }
        if p.points.iter().any(|q| !q.is_finite()) {
            out.push(Violation::scene("road", format!("polyline {i} has a non-finite point")));
        }
    }
    out
}

/// Attaches per-step deltas for the observed window and fills missing speeds.
pub fn derive_kinematics(track: &AgentTrack) -> AgentTrack {
    let mut out = track.clone();
    for s in out.states.iter_mut().filter(|s| s.valid) {
        let norm = s.velocity.norm();
        if !s.speed.is_finite() || (s.speed == 0.0 && norm > 0.0) {
            s.speed = norm;
        }
    }
    let observed = &out.states[..=out.current_index];
    let mut deltas = Vec::with_capacity(observed.len());
    for t in 0..observed.len() {
        if t == 0 {
            deltas.push(StateDelta::default());
            continue;
        }
        let (prev, cur) = (&observed[t - 1], &observed[t]);
        let valid = cur.valid as i8 - prev.valid as i8;
        if prev.valid && cur.valid {
            deltas.push(StateDelta {
                position: cur.position - prev.position,
                heading: wrap_angle(cur.heading - prev.heading),
                speed: cur.speed - prev.speed,
                valid,
            });
        } else {
            deltas.push(StateDelta {
                valid,
                ..StateDelta::default()
            });
        }
    }
    out.deltas = Some(deltas);
    out
}

/// Applies [`derive_kinematics`] to every track of the scene.
pub fn derive_scene_kinematics(scene: &Scene) -> Scene {
    let mut out = scene.clone();
    for t in out.tracks.iter_mut() {
        *t = derive_kinematics(t);
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn straight_track(id: u64, start: Vec2, velocity: Vec2, history: usize, future: usize) -> AgentTrack {
        let n = history + future;
        let current = history - 1;
        let states = (0..n)
            .map(|i| {
                let t = (i as f64 - current as f64) * DT;
                AgentState::new(start + velocity * t, velocity.angle(), velocity, 2.0, 4.5)
            })
            .collect();
        AgentTrack {
            id: AgentId(id),
            agent_type: AgentType::Vehicle,
            states,
            current_index: current,
            deltas: None,
            history_truth: None,
        }
    }

    pub fn two_agent_scene() -> Scene {
        Scene {
            id: SceneId::from("fixture"),
            road: RoadGraph {
                polylines: vec![Polyline {
                    kind: PolylineKind::LaneCenter,
                    points: vec![Vec2::new(-50.0, 0.0), Vec2::new(50.0, 0.0)],
                }],
            },
            tracks: vec![
                straight_track(1, Vec2::new(0.0, 0.0), Vec2::new(5.0, 0.0), 11, 80),
                straight_track(2, Vec2::new(10.0, 3.5), Vec2::new(4.0, 0.0), 11, 80),
            ],
            targets: vec![AgentId(1)],
            dt: DT,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn well_formed_scene_has_no_violations() {
        assert!(validate_scene(&two_agent_scene()).is_empty());
    }

    #[test]
    fn missing_target_is_reported() {
        let mut s = two_agent_scene();
        s.targets.push(AgentId(99));
        let v = validate_scene(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].track, Some(AgentId(99)));
    }

    #[test]
    fn inconsistent_speed_is_reported_at_its_index() {
        let mut s = two_agent_scene();
        let st = &mut s.tracks[1].states[4];
        st.speed = st.velocity.norm() + 1.0;
        let v = validate_scene(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].track, Some(AgentId(2)));
        assert_eq!(v[0].state_index, Some(4));
        assert_eq!(v[0].field, "speed");
    }

    #[test]
    fn non_zero_invalid_state_and_bad_dt() {
        let mut s = two_agent_scene();
        s.tracks[1].states[0].valid = false;
        s.dt = 0.2;
        let v = validate_scene(&s);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn invalid_current_target_and_short_polyline() {
        let mut s = two_agent_scene();
        s.tracks[0].states[10] = AgentState::invalid();
        s.road.polylines[0].points.truncate(1);
        assert_eq!(validate_scene(&s).len(), 2);
    }

    #[test]
    fn agent_type_one_hot() {
        for t in AgentType::ALL {
            let h = t.one_hot();
            assert_eq!(h.iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(h.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn default_horizons() {
        let h = HorizonSet::default();
        assert_eq!(h.len(), 80);
        assert_eq!(h.horizons[0], 0.1);
        assert_eq!(h.horizons[79], 8.0);
        assert_eq!(h.step_indices(), (0..80).collect::<Vec<_>>());
    }

    #[test]
    fn constant_motion_deltas() {
        let t = derive_kinematics(&straight_track(1, Vec2::ZERO, Vec2::new(1.0, 0.0), 11, 5));
        let d = t.deltas.unwrap();
        assert_eq!(d.len(), 11);
        assert_eq!(d[0], StateDelta::default());
        for s in &d[1..] {
            assert!((s.position.x - 0.1).abs() < 1e-12 && s.position.y.abs() < 1e-12);
            assert_eq!(s.heading, 0.0);
            assert_eq!(s.speed, 0.0);
            assert_eq!(s.valid, 0);
        }
    }

    #[test]
    fn heading_delta_wraps() {
        let mut t = straight_track(1, Vec2::ZERO, Vec2::new(1.0, 0.0), 2, 1);
        t.states[0].heading = 3.1;
        t.states[1].heading = -3.1;
        let d = derive_kinematics(&t).deltas.unwrap();
        let oracle = {
            let a: f64 = -3.1 - 3.1;
            a.sin().atan2(a.cos())
        };
        assert!((d[1].heading - oracle).abs() < 1e-12);
        assert!((d[1].heading - 0.083_185_307_179_586_23).abs() < 1e-12);
    }

    #[test]
    fn validity_transitions() {
        let mut t = straight_track(1, Vec2::ZERO, Vec2::new(1.0, 0.0), 4, 1);
        t.states[1] = AgentState::invalid();
        let d = derive_kinematics(&t).deltas.unwrap();
        assert_eq!(d[1].valid, -1);
        assert_eq!(d[1].position, Vec2::ZERO);
        assert_eq!(d[2].valid, 1);
        assert_eq!(d[2].position, Vec2::ZERO);
        assert_eq!(d[3].valid, 0);
    }

    #[test]
    fn fills_missing_speed() {
        let mut t = straight_track(1, Vec2::ZERO, Vec2::new(3.0, 4.0), 3, 1);
        t.states[1].speed = 0.0;
        let d = derive_kinematics(&t);
        assert_eq!(d.states[1].speed, 5.0);
    }
}
