//! LSTM encoder-decoder predictor with an optional environment-aware context.
//!
//! The encoder runs stacked LSTM cells over the target's normalized history.
//! When `env_aware` is set, a per-point road embedding and the shared history
//! encoder applied to the nearest neighbors are max-pooled and fused with the
//! encoder summary. The decoder unrolls one step per future sample; its input
//! at each step is the previous per-step displacement of all `K` modes, and a
//! linear head emits the next displacements, which accumulate into positions.
//! Mode probabilities come from a softmax over logits computed from the fused
//! context.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{encode_history, encode_road, raw_features, RoadEncoding, FEATURE_DIM, ROAD_FEATURE_DIM};
use super::{PredictionSet, Predictor};
use crate::error::{Error, Result};
use crate::frames::{to_target_frame, Normalizer, PoseTransform};
use crate::geom::Vec2;
use crate::nn::{ParamId, ParamStore, Tape, Var};
use crate::scene::{derive_scene_kinematics, AgentId, HorizonSet, Scene, DEFAULT_FUTURE_LEN, DEFAULT_HISTORY_LEN};

/// Road coordinates are divided by this before entering the network (m).
const ROAD_SCALE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub modes: usize,
    pub env_aware: bool,
    pub road_budget: usize,
    pub max_neighbors: usize,
    pub history_len: usize,
    pub future_len: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk(false)
    }
}

impl ModelConfig {
    /// Three layers of 128 units.
    pub fn paper(env_aware: bool) -> Self {
        Self {
            hidden: 128,
            ..Self::desk(env_aware)
        }
    }

    pub fn desk(env_aware: bool) -> Self {
        Self {
            layers: 3,
            hidden: 32,
            modes: 6,
            env_aware,
            road_budget: 64,
            max_neighbors: 8,
            history_len: DEFAULT_HISTORY_LEN,
            future_len: DEFAULT_FUTURE_LEN,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("modes", self.modes),
            ("history_len", self.history_len),
            ("future_len", self.future_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model {name} must be positive")));
            }
        }
        if self.env_aware && self.road_budget == 0 {
            return Err(Error::Config("road_budget must be positive for env-aware models".into()));
        }
        Ok(())
    }

    fn fused_width(&self) -> usize {
        let env = if self.env_aware { 2 * self.hidden } else { 0 };
        self.hidden + FEATURE_DIM + env
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    encoder: Vec<Dense>,
    road: Option<Dense>,
    fuse: Dense,
    decoder_init: Vec<Dense>,
    decoder: Vec<Dense>,
    head: Dense,
    logits: Dense,
}

fn dense(store: &mut ParamStore, name: &str, rows: usize, cols: usize) -> Dense {
    Dense {
        w: store.add(format!("{name}.w"), rows, cols),
        b: store.add(format!("{name}.b"), rows, 1),
    }
}

fn build_layout(cfg: &ModelConfig, store: &mut ParamStore) -> Layout {
    let h = cfg.hidden;
    let k = cfg.modes;
    let encoder = (0..cfg.layers)
        .map(|l| {
            let input = if l == 0 { FEATURE_DIM } else { h };
            dense(store, &format!("encoder.{l}"), 4 * h, input + h)
        })
        .collect();
    let road = cfg.env_aware.then(|| dense(store, "road", h, ROAD_FEATURE_DIM));
    let fuse = dense(store, "fuse", h, cfg.fused_width());
    let decoder_init = (0..cfg.layers)
        .map(|l| dense(store, &format!("decoder_init.{l}"), h, h))
        .collect();
    let decoder = (0..cfg.layers)
        .map(|l| {
            let input = if l == 0 { 2 * k } else { h };
            dense(store, &format!("decoder.{l}"), 4 * h, input + h)
        })
        .collect();
    let head = dense(store, "head", 2 * k, 2 * h);
    let logits = dense(store, "logits", k, h);
    Layout {
        encoder,
        road,
        fuse,
        decoder_init,
        decoder,
        head,
        logits,
    }
}

/// Everything a forward pass needs for one (scene, target) pair.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub history: Vec<[f64; FEATURE_DIM]>,
    pub neighbors: Vec<Vec<[f64; FEATURE_DIM]>>,
    pub road: Option<RoadEncoding>,
    pub transform: PoseTransform,
    /// Ground-truth future in the target frame.
    pub future: Vec<Vec2>,
    pub future_valid: Vec<bool>,
}

/// Tape handles for the decoded positions (target frame, one `2K` node per
/// step, mode-major pairs) and the mode logits.
pub struct ModelOutput {
    pub positions: Vec<Var>,
    pub logits: Var,
}

#[derive(Debug, Clone)]
pub struct RecurrentModel {
    config: ModelConfig,
    params: ParamStore,
    normalizer: Normalizer,
    layout: Layout,
}

struct LstmState {
    h: Vec<Var>,
    c: Vec<Var>,
}

pub(crate) fn softmax_probabilities(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

impl RecurrentModel {
    /// Fresh model: weights uniform in `±1/sqrt(fan_in)`, forget-gate biases at 1.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let layout = build_layout(&config, &mut params);
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        for i in 0..params.specs().len() {
            let id = ParamId(i);
            let spec = params.spec(id).clone();
            let fan_in = if spec.cols == 1 {
                // biases share the fan-in of their weight matrix
                params.spec(ParamId(i - 1)).cols
            } else {
                spec.cols
            };
            params.init_uniform(id, 1.0 / (fan_in as f64).sqrt(), &mut rng);
        }
        let h = config.hidden;
        for d in layout.encoder.iter().chain(&layout.decoder) {
            params.slice_mut(d.b)[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        }
        Ok(Self {
            normalizer: Normalizer::identity(FEATURE_DIM),
            config,
            params,
            layout,
        })
    }

    /// Reassembles a model from checkpointed parts, verifying the parameter layout.
    pub fn from_parts(config: ModelConfig, normalizer: Normalizer, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let mut expected = ParamStore::new();
        let layout = build_layout(&config, &mut expected);
        if expected.specs() != params.specs() {
            return Err(Error::Config("parameter layout does not match the model configuration".into()));
        }
        if normalizer.dim() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                found: normalizer.dim(),
            });
        }
        Ok(Self {
            config,
            params,
            normalizer,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<()> {
        if normalizer.dim() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                found: normalizer.dim(),
            });
        }
        self.normalizer = normalizer;
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    fn localize(&self, scene: &Scene, target: AgentId) -> Result<(Scene, PoseTransform)> {
        let (local, tf) = to_target_frame(scene, target)?;
        Ok((derive_scene_kinematics(&local), tf))
    }

    fn neighbor_ids(&self, local: &Scene, target: AgentId) -> Vec<AgentId> {
        if !self.config.env_aware || self.config.max_neighbors == 0 {
            return Vec::new();
        }
        let mut near: Vec<(f64, AgentId)> = local
            .tracks
            .iter()
            .filter(|t| t.id != target && t.current().valid)
            .map(|t| (t.current().position.norm(), t.id))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        near.truncate(self.config.max_neighbors);
        near.into_iter().map(|(_, id)| id).collect()
    }

    /// Raw (unnormalized) valid feature rows this model would read for the sample.
    pub fn feature_rows(&self, scene: &Scene, target: AgentId) -> Result<Vec<[f64; FEATURE_DIM]>> {
        let (local, _) = self.localize(scene, target)?;
        let mut ids = vec![target];
        ids.extend(self.neighbor_ids(&local, target));
        let mut rows = Vec::new();
        for id in ids {
            let track = local.track(id).ok_or(Error::UnknownTarget(id))?;
            rows.extend(raw_features(track)?.into_iter().filter(|r| r[super::features::COL_VALID] != 0.0));
        }
        Ok(rows)
    }

    /// Perturbation-agnostic preprocessing: target frame, kinematics, encodings.
    pub fn prepare(&self, scene: &Scene, target: AgentId) -> Result<PreparedSample> {
        let (local, transform) = self.localize(scene, target)?;
        let track = local.track(target).ok_or(Error::UnknownTarget(target))?;
        if track.history_len() != self.config.history_len {
            return Err(Error::DimensionMismatch {
                expected: self.config.history_len,
                found: track.history_len(),
            });
        }
        if track.future_len() < self.config.future_len {
            return Err(Error::DimensionMismatch {
                expected: self.config.future_len,
                found: track.future_len(),
            });
        }
        let history = encode_history(track, &self.normalizer)?;
        let mut neighbors = Vec::new();
        for id in self.neighbor_ids(&local, target) {
            let n = local.track(id).ok_or(Error::UnknownTarget(id))?;
            neighbors.push(encode_history(n, &self.normalizer)?);
        }
        let road = self
            .config
            .env_aware
            .then(|| encode_road(&local.road, self.config.road_budget));
        let fut = &track.future()[..self.config.future_len];
        Ok(PreparedSample {
            history,
            neighbors,
            road,
            transform,
            future: fut.iter().map(|s| s.position).collect(),
            future_valid: fut.iter().map(|s| s.valid).collect(),
        })
    }

    fn lstm_step(&self, tape: &mut Tape, cells: &[Dense], state: &mut LstmState, input: Var) -> Var {
        let h = self.config.hidden;
        let mut x = input;
        for (l, cell) in cells.iter().enumerate() {
            let xin = tape.concat(&[x, state.h[l]]);
            let gates = tape.linear(cell.w, Some(cell.b), xin);
            let i = tape.slice(gates, 0, h);
            let f = tape.slice(gates, h, h);
            let g = tape.slice(gates, 2 * h, h);
            let o = tape.slice(gates, 3 * h, h);
            let i = tape.sigmoid(i);
            let f = tape.sigmoid(f);
            let g = tape.tanh(g);
            let o = tape.sigmoid(o);
            let keep = tape.mul(f, state.c[l]);
            let write = tape.mul(i, g);
            let c = tape.add(keep, write);
            let tc = tape.tanh(c);
            let hn = tape.mul(o, tc);
            state.h[l] = hn;
            state.c[l] = c;
            x = hn;
        }
        x
    }

    fn encode_sequence(&self, tape: &mut Tape, rows: &[[f64; FEATURE_DIM]], zero: Var) -> Var {
        let mut state = LstmState {
            h: vec![zero; self.config.layers],
            c: vec![zero; self.config.layers],
        };
        let mut top = zero;
        for r in rows {
            let x = tape.input(r);
            top = self.lstm_step(tape, &self.layout.encoder, &mut state, x);
        }
        top
    }

    /// Records the full forward pass for one prepared sample.
    pub fn forward(&self, tape: &mut Tape, sample: &PreparedSample) -> Result<ModelOutput> {
        let cfg = &self.config;
        if sample.history.len() != cfg.history_len {
            return Err(Error::DimensionMismatch {
                expected: cfg.history_len,
                found: sample.history.len(),
            });
        }
        let (h, k) = (cfg.hidden, cfg.modes);
        let zero = tape.zeros(h);
        let summary = self.encode_sequence(tape, &sample.history, zero);
        let current = tape.input(&sample.history[cfg.history_len - 1]);
        let mut fused = vec![summary, current];

        if let Some(road_cell) = self.layout.road {
            let road = sample
                .road
                .as_ref()
                .ok_or_else(|| Error::ShapeMismatch("env-aware model needs road features".into()))?;
            let mut embedded = Vec::new();
            for p in road.valid_points() {
                let mut x = *p;
                x[0] /= ROAD_SCALE;
                x[1] /= ROAD_SCALE;
                let xi = tape.input(&x);
                let e = tape.linear(road_cell.w, Some(road_cell.b), xi);
                embedded.push(tape.relu(e));
            }
            fused.push(if embedded.is_empty() { zero } else { tape.max(&embedded) });

            let encoded: Vec<Var> = sample
                .neighbors
                .iter()
                .map(|n| self.encode_sequence(tape, n, zero))
                .collect();
            fused.push(if encoded.is_empty() { zero } else { tape.max(&encoded) });
        }

        let fused = tape.concat(&fused);
        let ctx = tape.linear(self.layout.fuse.w, Some(self.layout.fuse.b), fused);
        let ctx = tape.tanh(ctx);

        let mut state = LstmState {
            h: self
                .layout
                .decoder_init
                .iter()
                .map(|d| {
                    let v = tape.linear(d.w, Some(d.b), ctx);
                    tape.tanh(v)
                })
                .collect(),
            c: vec![zero; cfg.layers],
        };
        let mut pos = tape.zeros(2 * k);
        let mut disp = pos;
        let mut positions = Vec::with_capacity(cfg.future_len);
        for _ in 0..cfg.future_len {
            let top = self.lstm_step(tape, &self.layout.decoder, &mut state, disp);
            let head_in = tape.concat(&[top, ctx]);
            disp = tape.linear(self.layout.head.w, Some(self.layout.head.b), head_in);
            pos = tape.add(pos, disp);
            positions.push(pos);
        }
        debug_assert_eq!(tape.dim(ctx), h);
        let logits = tape.linear(self.layout.logits.w, Some(self.layout.logits.b), ctx);
        Ok(ModelOutput { positions, logits })
    }

    /// Forward pass returning target-frame mode trajectories and probabilities.
    pub fn predict_local(&self, sample: &PreparedSample) -> Result<(Vec<Vec<Vec2>>, Vec<f64>)> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward(&mut tape, sample)?;
        let k = self.config.modes;
        let mut modes = vec![Vec::with_capacity(out.positions.len()); k];
        for p in &out.positions {
            let v = tape.value(*p);
            for (m, mode) in modes.iter_mut().enumerate() {
                mode.push(Vec2::new(v[2 * m], v[2 * m + 1]));
            }
        }
        Ok((modes, softmax_probabilities(tape.value(out.logits))))
    }

    pub fn predict_prepared(&self, sample: &PreparedSample, horizons: &HorizonSet) -> Result<PredictionSet> {
        let steps = horizons.step_indices();
        if let Some(bad) = steps.iter().find(|s| **s >= self.config.future_len) {
            return Err(Error::ShapeMismatch(format!(
                "horizon step {} beyond the decoded {} steps",
                bad + 1,
                self.config.future_len
            )));
        }
        let (local, probabilities) = self.predict_local(sample)?;
        let modes = local
            .iter()
            .map(|m| steps.iter().map(|s| sample.transform.apply(m[*s])).collect())
            .collect();
        Ok(PredictionSet {
            modes,
            probabilities,
            covariances: None,
        })
    }
}

impl Predictor for RecurrentModel {
    fn name(&self) -> &str {
        if self.config.env_aware {
            "recurrent_env"
        } else {
            "recurrent"
        }
    }

    fn predict(&self, scene: &Scene, target: AgentId, horizons: &HorizonSet) -> Result<PredictionSet> {
        let sample = self.prepare(scene, target)?;
        self.predict_prepared(&sample, horizons)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::remove_road;
    use crate::scene::fixtures::*;

    fn small(env: bool) -> ModelConfig {
        ModelConfig {
            layers: 2,
            hidden: 8,
            modes: 3,
            env_aware: env,
            road_budget: 8,
            future_len: 80,
            ..ModelConfig::desk(env)
        }
    }

    #[test]
    fn fresh_model_output_contract() {
        for env in [false, true] {
            let m = RecurrentModel::new(small(env)).unwrap();
            let p = m.predict(&two_agent_scene(), AgentId(1), &HorizonSet::default()).unwrap();
            p.validate().unwrap();
            assert_eq!(p.num_modes(), 3);
            assert_eq!(p.horizon_len(), 80);
        }
    }

    #[test]
    fn parameter_count_is_deterministic() {
        let a = RecurrentModel::new(small(true)).unwrap();
        let b = RecurrentModel::new(ModelConfig { init_seed: 9, ..small(true) }).unwrap();
        assert_eq!(a.num_parameters(), b.num_parameters());
        assert_ne!(a.params().data(), b.params().data());
        let h = 8;
        let k = 3;
        let lstm = |i: usize| 4 * h * (i + h) + 4 * h;
        let expected = lstm(FEATURE_DIM) + lstm(h)
            + (h * ROAD_FEATURE_DIM + h)
            + (h * (h + FEATURE_DIM + 2 * h) + h)
            + 2 * (h * h + h)
            + lstm(2 * k) + lstm(h)
            + (2 * k * 2 * h + 2 * k)
            + (k * h + k);
        assert_eq!(a.num_parameters(), expected);
    }

    #[test]
    fn unaware_model_ignores_road() {
        let m = RecurrentModel::new(small(false)).unwrap();
        let s = two_agent_scene();
        let h = HorizonSet::default();
        assert_eq!(m.predict(&s, AgentId(1), &h).unwrap(), m.predict(&remove_road(&s), AgentId(1), &h).unwrap());
    }

    #[test]
    fn removed_road_equals_zeroed_road_features() {
        let m = RecurrentModel::new(small(true)).unwrap();
        let s = two_agent_scene();
        let h = HorizonSet::default();
        let from_removed = m.predict(&remove_road(&s), AgentId(1), &h).unwrap();
        let mut sample = m.prepare(&s, AgentId(1)).unwrap();
        sample.road = Some(RoadEncoding::zeroed(8));
        assert_eq!(m.predict_prepared(&sample, &h).unwrap(), from_removed);
        let with_road = m.predict(&s, AgentId(1), &h).unwrap();
        assert_ne!(with_road, from_removed);
    }

    #[test]
    fn horizon_beyond_decoder_is_rejected() {
        let m = RecurrentModel::new(ModelConfig { future_len: 5, ..small(false) }).unwrap();
        assert!(m.predict(&two_agent_scene(), AgentId(1), &HorizonSet::default()).is_err());
        assert!(m.predict(&two_agent_scene(), AgentId(1), &HorizonSet::uniform(5)).is_ok());
    }
}
