//! Seeded synthetic driving scenes and the scene file format.
//!
//! Each scene picks a layout (straight road, bend or four-arm junction),
//! places agents on routes through it and simulates them with a simple
//! behavior model. Observed states carry Gaussian position and heading noise;
//! future states and [`AgentTrack::history_truth`] are exact. Velocities are
//! always exact, and headings follow the direction of motion.

mod io;
mod layout;

pub use io::{read_scenes, read_scenes_from, write_scenes, write_scenes_to, SCENE_FORMAT, SCENE_FORMAT_VERSION};

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Vec2};
use crate::rng;
use crate::scene::{AgentId, AgentState, AgentTrack, AgentType, Polyline, RoadGraph, Scene, SceneId, DT};
use layout::{Layout, Spawn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutMix {
    pub straight: f64,
    pub arc: f64,
    pub intersection: f64,
}

impl Default for LayoutMix {
    fn default() -> Self {
        Self {
            straight: 1.0,
            arc: 1.0,
            intersection: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorMix {
    pub constant_velocity: f64,
    pub accelerating: f64,
    pub turning: f64,
    pub lane_change: f64,
    pub crossing_pedestrian: f64,
}

impl Default for BehaviorMix {
    fn default() -> Self {
        Self {
            constant_velocity: 0.3,
            accelerating: 0.2,
            turning: 0.25,
            lane_change: 0.15,
            crossing_pedestrian: 0.1,
        }
    }
}

impl BehaviorMix {
    fn weights(&self) -> [f64; 5] {
        [
            self.constant_velocity,
            self.accelerating,
            self.turning,
            self.lane_change,
            self.crossing_pedestrian,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub scenes: usize,
    pub seed: u64,
    pub layouts: LayoutMix,
    pub behaviors: BehaviorMix,
    pub agents_min: usize,
    pub agents_max: usize,
    pub targets_per_scene: usize,
    /// Share of non-pedestrian agents simulated as cyclists.
    pub cyclist_fraction: f64,
    /// Per-axis observation noise on positions (m).
    pub position_noise: f64,
    /// Observation noise on headings (rad).
    pub heading_noise: f64,
    pub history_len: usize,
    pub future_len: usize,
    pub id_prefix: String,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            scenes: 2000,
            seed: 0,
            layouts: LayoutMix::default(),
            behaviors: BehaviorMix::default(),
            agents_min: 4,
            agents_max: 8,
            targets_per_scene: 3,
            cyclist_fraction: 0.1,
            position_noise: 0.05,
            heading_noise: 0.005,
            history_len: crate::scene::DEFAULT_HISTORY_LEN,
            future_len: crate::scene::DEFAULT_FUTURE_LEN,
            id_prefix: "scene-".into(),
        }
    }
}

impl GenConfig {
    /// Noise-free straight-line constant-velocity motion only.
    pub fn constant_velocity(scenes: usize, seed: u64) -> Self {
        Self {
            scenes,
            seed,
            behaviors: BehaviorMix {
                constant_velocity: 1.0,
                accelerating: 0.0,
                turning: 0.0,
                lane_change: 0.0,
                crossing_pedestrian: 0.0,
            },
            position_noise: 0.0,
            heading_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let layout = [self.layouts.straight, self.layouts.arc, self.layouts.intersection];
        for (name, w) in [("layout", &layout[..]), ("behavior", &self.behaviors.weights()[..])] {
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config(format!("{name} weights must be nonnegative with a positive sum")));
            }
        }
        if self.scenes == 0 || self.agents_min == 0 || self.targets_per_scene == 0 {
            return Err(Error::Config("scenes, agents_min and targets_per_scene must be at least 1".into()));
        }
        if self.agents_max < self.agents_min {
            return Err(Error::Config("agents_max must be >= agents_min".into()));
        }
        if self.history_len == 0 || self.future_len == 0 {
            return Err(Error::Config("history_len and future_len must be at least 1".into()));
        }
        for (name, v) in [
            ("position_noise", self.position_noise),
            ("heading_noise", self.heading_noise),
            ("cyclist_fraction", self.cyclist_fraction),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if self.cyclist_fraction > 1.0 {
            return Err(Error::Config("cyclist_fraction must be <= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Behavior {
    ConstantVelocity,
    Accelerating,
    Turning,
    LaneChange,
    Crossing,
}

const BEHAVIORS: [Behavior; 5] = [
    Behavior::ConstantVelocity,
    Behavior::Accelerating,
    Behavior::Turning,
    Behavior::LaneChange,
    Behavior::Crossing,
];

/// Longitudinal profile: arclength at time `t` with speed clamped to `[0, cap]`.
#[derive(Debug, Clone, Copy)]
struct Profile {
    s0: f64,
    u0: f64,
    accel: f64,
    cap: f64,
}

impl Profile {
    fn saturation_time(&self) -> f64 {
        if self.accel > 0.0 {
            (self.cap - self.u0) / self.accel
        } else if self.accel < 0.0 {
            -self.u0 / self.accel
        } else {
            f64::INFINITY
        }
    }

    fn speed(&self, t: f64) -> f64 {
        if t >= self.saturation_time() {
            if self.accel > 0.0 { self.cap } else { 0.0 }
        } else {
            self.u0 + self.accel * t
        }
    }

    fn distance(&self, t: f64) -> f64 {
        let ts = self.saturation_time();
        if t <= ts {
            self.s0 + self.u0 * t + 0.5 * self.accel * t * t
        } else {
            self.s0 + self.u0 * ts + 0.5 * self.accel * ts * ts + self.speed(t) * (t - ts)
        }
    }
}

/// Smooth lateral shift `D (1 - cos(pi tau)) / 2` over `[start, start + duration]`.
#[derive(Debug, Clone, Copy)]
struct Lateral {
    offset: f64,
    start: f64,
    duration: f64,
}

impl Lateral {
    fn at(&self, t: f64) -> (f64, f64) {
        let tau = (t - self.start) / self.duration;
        if tau <= 0.0 {
            (0.0, 0.0)
        } else if tau >= 1.0 {
            (self.offset, 0.0)
        } else {
            let a = std::f64::consts::PI * tau;
            (
                self.offset * (1.0 - a.cos()) / 2.0,
                self.offset * std::f64::consts::PI / (2.0 * self.duration) * a.sin(),
            )
        }
    }
}

struct AgentPlan<'a> {
    agent_type: AgentType,
    spawn: &'a Spawn,
    profile: Profile,
    lateral: Option<Lateral>,
    width: f64,
    length: f64,
}

impl AgentPlan<'_> {
    /// Exact state at time `t` (s, relative to the current step) in the layout frame.
    fn state(&self, t: f64) -> AgentState {
        let (p, tangent) = self.spawn.route.at(self.profile.distance(t));
        let mut velocity = tangent * self.profile.speed(t);
        let mut position = p;
        if let Some(l) = &self.lateral {
            let normal = Vec2::new(-tangent.y, tangent.x);
            let (d, dd) = l.at(t);
            position += normal * d;
            velocity += normal * dd;
        }
        let heading = if velocity.norm() > 0.0 { velocity.angle() } else { tangent.angle() };
        AgentState::new(position, heading, velocity, self.width, self.length)
    }
}

fn pick_behavior(config: &GenConfig, layout: &Layout, rng: &mut ChaCha8Rng) -> Behavior {
    let dist = WeightedIndex::new(config.behaviors.weights()).expect("validated weights");
    let b = BEHAVIORS[dist.sample(rng)];
    match b {
        Behavior::Turning if layout.turning.is_empty() => Behavior::Accelerating,
        Behavior::Crossing if layout.crossings.is_empty() => Behavior::ConstantVelocity,
        other => other,
    }
}

fn plan_agent<'a>(config: &GenConfig, layout: &'a Layout, rng: &mut ChaCha8Rng) -> AgentPlan<'a> {
    let behavior = pick_behavior(config, layout, rng);
    let pool = match behavior {
        Behavior::Turning => &layout.turning,
        Behavior::Crossing => &layout.crossings,
        _ => &layout.straight,
    };
    let spawn = &pool[rng.random_range(0..pool.len())];
    let s0 = rng.random_range(spawn.s_min..=spawn.s_max);

    let (agent_type, width, length) = if behavior == Behavior::Crossing {
        (AgentType::Pedestrian, rng.random_range(0.5..0.8), rng.random_range(0.5..0.8))
    } else if rng.random_bool(config.cyclist_fraction) {
        (AgentType::Cyclist, rng.random_range(0.6..0.8), rng.random_range(1.6..2.0))
    } else {
        (AgentType::Vehicle, rng.random_range(1.8..2.2), rng.random_range(4.2..5.2))
    };
    let (lo, hi): (f64, f64) = match agent_type {
        AgentType::Pedestrian => (0.8, 1.8),
        AgentType::Cyclist => (3.0, 7.0),
        _ => (5.0, 15.0),
    };
    let hi = hi.min(spawn.max_speed).max(lo + 0.5);
    let u0 = rng.random_range(lo..hi);
    let accel = if behavior == Behavior::Accelerating {
        let a: f64 = rng.random_range(0.5..2.0);
        if rng.random_bool(0.5) { a } else { -a }
    } else {
        0.0
    };
    let lateral = match (behavior, spawn.lane_change) {
        (Behavior::LaneChange, Some(offset)) => Some(Lateral {
            offset,
            start: rng.random_range(-1.0..3.0),
            duration: rng.random_range(3.0..5.0),
        }),
        _ => None,
    };
    AgentPlan {
        agent_type,
        spawn,
        profile: Profile {
            s0,
            u0,
            accel,
            cap: u0.max(20.0),
        },
        lateral,
        width,
        length,
    }
}

fn generate_scene(config: &GenConfig, index: usize) -> Scene {
    let mut rng = rng::stream(config.seed, &[b"scene", &(index as u64).to_le_bytes()]);
    let weights = [config.layouts.straight, config.layouts.arc, config.layouts.intersection];
    let layout = match WeightedIndex::new(weights).expect("validated weights").sample(&mut rng) {
        0 => layout::straight_road(&mut rng),
        1 => layout::arc_road(&mut rng),
        _ => layout::intersection(&mut rng),
    };
    let rotation = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let offset = Vec2::new(rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0));
    let to_world = |p: Vec2| p.rotate(rotation) + offset;

    let n_agents = rng.random_range(config.agents_min..=config.agents_max);
    let plans: Vec<AgentPlan> = (0..n_agents).map(|_| plan_agent(config, &layout, &mut rng)).collect();
    let pos_noise = Normal::new(0.0, config.position_noise).expect("validated noise");
    let head_noise = Normal::new(0.0, config.heading_noise).expect("validated noise");

    let h = config.history_len as i64;
    let tracks = plans
        .iter()
        .enumerate()
        .map(|(i, plan)| {
            let mut states = Vec::with_capacity(config.history_len + config.future_len);
            let mut truth = Vec::with_capacity(config.history_len);
            for k in (1 - h)..=(config.future_len as i64) {
                // same arithmetic as the uniform horizon set
                let t = k as f64 / 10.0;
                debug_assert!((t - k as f64 * DT).abs() < 1e-12);
                let s = plan.state(t);
                let mut world = AgentState::new(
                    to_world(s.position),
                    wrap_angle(s.heading + rotation),
                    s.velocity.rotate(rotation),
                    s.width,
                    s.length,
                );
                if k <= 0 {
                    truth.push(world.position);
                    let dx = pos_noise.sample(&mut rng);
                    let dy = pos_noise.sample(&mut rng);
                    world.position += Vec2::new(dx, dy);
                    world.heading = wrap_angle(world.heading + head_noise.sample(&mut rng));
                }
                states.push(world);
            }
            AgentTrack {
                id: AgentId(i as u64 + 1),
                agent_type: plan.agent_type,
                states,
                current_index: config.history_len - 1,
                deltas: None,
                history_truth: Some(truth),
            }
        })
        .collect();

    let n_targets = config.targets_per_scene.min(n_agents);
    let mut targets: Vec<AgentId> = sample(&mut rng, n_agents, n_targets)
        .into_iter()
        .map(|i| AgentId(i as u64 + 1))
        .collect();
    targets.sort();

    Scene {
        id: SceneId(format!("{}{:06}", config.id_prefix, index)),
        road: RoadGraph {
            polylines: layout
                .polylines
                .iter()
                .map(|p| Polyline {
                    kind: p.kind,
                    points: p.points.iter().map(|q| to_world(*q)).collect(),
                })
                .collect(),
        },
        tracks,
        targets,
        dt: DT,
    }
}

/// Generates `config.scenes` scenes; scene `i` depends only on `(seed, i)`.
pub fn generate_dataset(config: &GenConfig) -> Result<Vec<Scene>> {
    config.validate()?;
    Ok((0..config.scenes).into_par_iter().map(|i| generate_scene(config, i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::ConstantVelocity;
    use crate::scene::{validate_scene, HorizonSet, PolylineKind};

    fn small(seed: u64) -> GenConfig {
        GenConfig {
            scenes: 40,
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn scenes_are_valid() {
        for s in generate_dataset(&small(1)).unwrap() {
            assert_eq!(validate_scene(&s), vec![], "{}", s.id);
            assert!(!s.targets.is_empty());
            assert!(s.tracks.iter().all(|t| t.states.len() == 91));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate_dataset(&small(5)).unwrap(), generate_dataset(&small(5)).unwrap());
        assert_ne!(generate_dataset(&small(5)).unwrap(), generate_dataset(&small(6)).unwrap());
    }

    #[test]
    fn prefix_is_stable_when_count_grows() {
        let a = generate_dataset(&small(2)).unwrap();
        let b = generate_dataset(&GenConfig { scenes: 60, ..small(2) }).unwrap();
        assert_eq!(a[..], b[..40]);
    }

    #[test]
    fn headings_follow_motion() {
        let cfg = GenConfig {
            heading_noise: 0.0,
            position_noise: 0.0,
            ..small(3)
        };
        for s in generate_dataset(&cfg).unwrap() {
            for st in s.tracks.iter().flat_map(|t| &t.states) {
                if st.speed > 0.5 {
                    assert!(crate::geom::wrap_angle(st.heading - st.velocity.angle()).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn cv_dataset_is_exact_for_cv() {
        let data = generate_dataset(&GenConfig::constant_velocity(30, 9)).unwrap();
        let r = crate::metrics::evaluate(&ConstantVelocity, &data, None, &HorizonSet::default());
        assert!(r.failures.is_empty());
        assert!(r.aggregate < 1e-9, "{}", r.aggregate);
    }

    fn distance_to_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
        let ab = b - a;
        let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
        p.distance(a + ab * t)
    }

    #[test]
    fn turning_agents_stay_near_lanes() {
        let cfg = GenConfig {
            scenes: 60,
            seed: 4,
            layouts: LayoutMix {
                straight: 0.0,
                arc: 1.0,
                intersection: 1.0,
            },
            behaviors: BehaviorMix {
                constant_velocity: 0.0,
                accelerating: 0.0,
                turning: 1.0,
                lane_change: 0.0,
                crossing_pedestrian: 0.0,
            },
            ..GenConfig::default()
        };
        for s in generate_dataset(&cfg).unwrap() {
            let lanes: Vec<&Vec<Vec2>> = s
                .road
                .polylines
                .iter()
                .filter(|p| p.kind == PolylineKind::LaneCenter)
                .map(|p| &p.points)
                .collect();
            for t in &s.tracks {
                for st in t.future() {
                    let d = lanes
                        .iter()
                        .flat_map(|l| l.windows(2).map(|w| distance_to_segment(st.position, w[0], w[1])))
                        .fold(f64::INFINITY, f64::min);
                    assert!(d < 2.0, "{} agent {} is {d} m off-lane", s.id, t.id);
                }
            }
        }
    }

    #[test]
    fn observation_noise_has_rayleigh_mean() {
        let cfg = GenConfig {
            scenes: 300,
            seed: 8,
            position_noise: 0.1,
            ..GenConfig::default()
        };
        let (mut sum, mut n) = (0.0, 0usize);
        for s in generate_dataset(&cfg).unwrap() {
            for t in &s.tracks {
                let truth = t.history_truth.as_ref().unwrap();
                for (st, g) in t.observed().iter().zip(truth) {
                    sum += st.position.distance(*g);
                    n += 1;
                }
            }
        }
        let expect = 0.1 * (std::f64::consts::PI / 2.0).sqrt();
        let mean = sum / n as f64;
        assert!((mean / expect - 1.0).abs() < 0.1, "{mean} vs {expect}");
    }

    #[test]
    fn rejects_invalid_config() {
        let bad = GenConfig {
            behaviors: BehaviorMix {
                constant_velocity: 0.0,
                accelerating: 0.0,
                turning: 0.0,
                lane_change: 0.0,
                crossing_pedestrian: 0.0,
            },
            ..GenConfig::default()
        };
        assert!(generate_dataset(&bad).is_err());
        assert!(generate_dataset(&GenConfig { scenes: 0, ..GenConfig::default() }).is_err());
        assert!(generate_dataset(&GenConfig { agents_max: 1, ..GenConfig::default() }).is_err());
    }
}
