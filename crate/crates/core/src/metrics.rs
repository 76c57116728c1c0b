//! Displacement metrics, degradation measures and per-trajectory delta distributions.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::perturb::Perturbation;
use crate::predict::{PredictionSet, Predictor};
use crate::scene::{AgentId, HorizonSet, Scene, SceneId};

/// Minimum over modes of the mean L2 error over horizons, with an explicit
/// validity mask on the ground truth. Returns `(value, winning mode, valid steps)`.
///
/// `future` is indexed by future step; `horizons` select which steps are scored.
pub fn min_ade_masked(
    prediction: &PredictionSet,
    future: &[Vec2],
    valid: &[bool],
    horizons: &HorizonSet,
) -> Result<(f64, usize, usize)> {
    let steps = horizons.step_indices();
    if prediction.modes.is_empty() {
        return Err(Error::ShapeMismatch("prediction has no modes".into()));
    }
    if let Some(m) = prediction.modes.iter().find(|m| m.len() != steps.len()) {
        return Err(Error::ShapeMismatch(format!(
            "mode has {} positions for {} horizons",
            m.len(),
            steps.len()
        )));
    }
    if future.len() != valid.len() || steps.iter().any(|s| *s >= future.len()) {
        return Err(Error::ShapeMismatch("ground truth does not cover every horizon".into()));
    }
    let scored: Vec<(usize, usize)> = steps.iter().enumerate().filter(|(_, s)| valid[**s]).map(|(i, s)| (i, *s)).collect();
    if scored.is_empty() {
        return Err(Error::InvalidState("no valid ground-truth step".into()));
    }
    let mut best = (f64::INFINITY, 0);
    for (k, mode) in prediction.modes.iter().enumerate() {
        let mut sum = 0.0;
        for &(i, s) in &scored {
            let (p, g) = (mode[i], future[s]);
            if !p.is_finite() || !g.is_finite() {
                return Err(Error::NonFinite("min_ade input"));
            }
            sum += p.distance(g);
        }
        let ade = sum / scored.len() as f64;
        if ade < best.0 {
            best = (ade, k);
        }
    }
    Ok((best.0, best.1, scored.len()))
}

/// Mean over horizons of the Euclidean error of the closest mode.
pub fn min_ade(prediction: &PredictionSet, future: &[Vec2], horizons: &HorizonSet) -> Result<f64> {
    let valid = vec![true; future.len()];
    min_ade_masked(prediction, future, &valid, horizons).map(|r| r.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub scene_id: SceneId,
    pub agent_id: AgentId,
    pub min_ade: f64,
    pub valid_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub scene_id: SceneId,
    pub agent_id: AgentId,
    pub message: String,
}

/// Per-trajectory and aggregate minADE of one model on one dataset condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_trajectory: Vec<TrajectoryError>,
    pub aggregate: f64,
    pub count: usize,
    /// Mean error of the selected mode at each horizon.
    pub per_horizon: Vec<f64>,
    pub failures: Vec<EvalFailure>,
}

impl EvalResult {
    pub fn from_trajectories(per_trajectory: Vec<TrajectoryError>, per_horizon: Vec<f64>, failures: Vec<EvalFailure>) -> Self {
        let count = per_trajectory.len();
        let aggregate = if count == 0 {
            0.0
        } else {
            per_trajectory.iter().map(|t| t.min_ade).sum::<f64>() / count as f64
        };
        Self {
            per_trajectory,
            aggregate,
            count,
            per_horizon,
            failures,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "scene_id,agent_id,min_ade,valid_steps")?;
        for t in &self.per_trajectory {
            writeln!(w, "{},{},{},{}", t.scene_id, t.agent_id, t.min_ade, t.valid_steps)?;
        }
        Ok(())
    }
}

struct TrajectoryEval {
    error: TrajectoryError,
    per_horizon: Vec<f64>,
}

fn evaluate_target(
    model: &dyn Predictor,
    scene: &Scene,
    target: AgentId,
    horizons: &HorizonSet,
) -> Result<TrajectoryEval> {
    let track = scene.track(target).ok_or(Error::UnknownTarget(target))?;
    let future: Vec<Vec2> = track.future().iter().map(|s| s.position).collect();
    let valid: Vec<bool> = track.future().iter().map(|s| s.valid).collect();
    let pred = model.predict(scene, target, horizons)?;
    pred.validate()?;
    let (ade, k, n) = min_ade_masked(&pred, &future, &valid, horizons)?;
    let per_horizon = horizons
        .step_indices()
        .iter()
        .enumerate()
        .map(|(i, s)| if valid[*s] { pred.modes[k][i].distance(future[*s]) } else { f64::NAN })
        .collect();
    Ok(TrajectoryEval {
        error: TrajectoryError {
            scene_id: scene.id.clone(),
            agent_id: target,
            min_ade: ade,
            valid_steps: n,
        },
        per_horizon,
    })
}

/// Perturbs (optionally), predicts and scores every target of every scene.
///
/// Per-scene failures are collected instead of aborting the run. Results keep
/// dataset order regardless of how many worker threads run.
pub fn evaluate(
    model: &dyn Predictor,
    dataset: &[Scene],
    perturbation: Option<&Perturbation>,
    horizons: &HorizonSet,
) -> EvalResult {
    let per_scene: Vec<Vec<std::result::Result<TrajectoryEval, EvalFailure>>> = dataset
        .par_iter()
        .map(|scene| {
            let input = match perturbation.map(|p| p.apply(scene)).transpose() {
                Ok(s) => s,
                Err(e) => {
                    return scene
                        .targets
                        .iter()
                        .map(|t| {
                            Err(EvalFailure {
                                scene_id: scene.id.clone(),
                                agent_id: *t,
                                message: e.to_string(),
                            })
                        })
                        .collect()
                }
            };
            let input = input.as_ref().unwrap_or(scene);
            scene
                .targets
                .iter()
                .map(|t| {
                    evaluate_target(model, input, *t, horizons).map_err(|e| EvalFailure {
                        scene_id: scene.id.clone(),
                        agent_id: *t,
                        message: e.to_string(),
                    })
                })
                .collect()
        })
        .collect();

    let mut trajectories = Vec::new();
    let mut failures = Vec::new();
    let mut horizon_sum = vec![0.0; horizons.len()];
    let mut horizon_n = vec![0usize; horizons.len()];
    for r in per_scene.into_iter().flatten() {
        match r {
            Ok(t) => {
                for (i, e) in t.per_horizon.iter().enumerate() {
                    if !e.is_nan() {
                        horizon_sum[i] += e;
                        horizon_n[i] += 1;
                    }
                }
                trajectories.push(t.error);
            }
            Err(f) => failures.push(f),
        }
    }
    let per_horizon = horizon_sum
        .iter()
        .zip(&horizon_n)
        .map(|(s, n)| if *n == 0 { 0.0 } else { s / *n as f64 })
        .collect();
    EvalResult::from_trajectories(trajectories, per_horizon, failures)
}

/// Absolute and relative increase of aggregate minADE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub delta: f64,
    /// `delta / original`; `None` when the original error is zero.
    pub relative: Option<f64>,
}

impl Degradation {
    pub fn between(original: f64, perturbed: f64) -> Self {
        let delta = perturbed - original;
        Self {
            delta,
            relative: (original > 0.0).then(|| delta / original),
        }
    }

    /// Percentage with two decimals and explicit sign, or `n/a`.
    pub fn percent_label(&self) -> String {
        match self.relative {
            Some(r) => format!("{:+.2}%", r * 100.0),
            None => "n/a".into(),
        }
    }
}

pub fn degradation(original: &EvalResult, perturbed: &EvalResult) -> Degradation {
    Degradation::between(original.aggregate, perturbed.aggregate)
}

/// Linear interpolation between order statistics: position `(n - 1) p`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            min: -2.0,
            max: 2.0,
            bins: 40,
        }
    }
}

/// Fixed-width bins; values outside the range fall into the first or last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(values: &[f64], spec: &HistogramSpec) -> Result<Self> {
        if spec.bins == 0 || !(spec.max > spec.min) {
            return Err(Error::Config(format!("bad histogram range {spec:?}")));
        }
        let width = (spec.max - spec.min) / spec.bins as f64;
        let edges = (0..=spec.bins).map(|i| spec.min + i as f64 * width).collect();
        let mut counts = vec![0u64; spec.bins];
        for v in values {
            let i = ((v - spec.min) / width).floor();
            let i = if i.is_nan() { 0 } else { (i.max(0.0) as usize).min(spec.bins - 1) };
            counts[i] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_left,bin_right,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{},{}", self.edges[i], self.edges[i + 1], c)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyedDelta {
    pub scene_id: SceneId,
    pub agent_id: AgentId,
    pub delta: f64,
}

/// Per-trajectory change of minADE with summary quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaDistribution {
    pub deltas: Vec<KeyedDelta>,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub histogram: Histogram,
}

impl DeltaDistribution {
    pub fn from_values(deltas: Vec<KeyedDelta>, spec: &HistogramSpec) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::EmptyInput("delta distribution"));
        }
        let mut sorted: Vec<f64> = deltas.iter().map(|d| d.delta).collect();
        sorted.sort_by(f64::total_cmp);
        let histogram = Histogram::build(&sorted, spec)?;
        Ok(Self {
            median: quantile(&sorted, 0.5),
            p25: quantile(&sorted, 0.25),
            p75: quantile(&sorted, 0.75),
            histogram,
            deltas,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "scene_id,agent_id,delta")?;
        for d in &self.deltas {
            writeln!(w, "{},{},{}", d.scene_id, d.agent_id, d.delta)?;
        }
        Ok(())
    }
}

/// `perturbed - original` per (scene, agent); both results must cover the same keys.
pub fn delta_distribution(original: &EvalResult, perturbed: &EvalResult, spec: &HistogramSpec) -> Result<DeltaDistribution> {
    let lookup: HashMap<(&SceneId, AgentId), f64> = perturbed
        .per_trajectory
        .iter()
        .map(|t| ((&t.scene_id, t.agent_id), t.min_ade))
        .collect();
    if lookup.len() != original.per_trajectory.len() {
        return Err(Error::KeyMismatch(format!(
            "{} original trajectories vs {} perturbed",
            original.per_trajectory.len(),
            lookup.len()
        )));
    }
    let mut deltas = Vec::with_capacity(lookup.len());
    for t in &original.per_trajectory {
        let p = lookup
            .get(&(&t.scene_id, t.agent_id))
            .ok_or_else(|| Error::KeyMismatch(format!("({}, {}) missing from perturbed result", t.scene_id, t.agent_id)))?;
        deltas.push(KeyedDelta {
            scene_id: t.scene_id.clone(),
            agent_id: t.agent_id,
            delta: p - t.min_ade,
        });
    }
    DeltaDistribution::from_values(deltas, spec)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn pred(modes: Vec<Vec<Vec2>>) -> PredictionSet {
        let k = modes.len();
        PredictionSet {
            modes,
            probabilities: vec![1.0 / k as f64; k],
            covariances: None,
        }
    }

    fn line(n: usize, y: f64) -> Vec<Vec2> {
        (0..n).map(|i| Vec2::new(i as f64, y)).collect()
    }

    #[test]
    fn exact_mode_gives_zero() {
        let gt = line(80, 0.0);
        let p = pred(vec![line(80, 3.0), gt.clone(), line(80, -1.0)]);
        assert_eq!(min_ade(&p, &gt, &HorizonSet::default()).unwrap(), 0.0);
    }

    #[test]
    fn uniform_offset() {
        let gt = line(80, 0.0);
        let p = pred(vec![line(80, 0.5)]);
        assert_eq!(min_ade(&p, &gt, &HorizonSet::default()).unwrap(), 0.5);
    }

    #[test]
    fn random_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let gt: Vec<Vec2> = (0..80).map(|_| Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0))).collect();
            let modes: Vec<Vec<Vec2>> = (0..6)
                .map(|_| (0..80).map(|_| Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0))).collect())
                .collect();
            let mut best = f64::INFINITY;
            for m in &modes {
                let mut s = 0.0;
                for t in 0..80 {
                    s += ((m[t].x - gt[t].x).powi(2) + (m[t].y - gt[t].y).powi(2)).sqrt();
                }
                best = best.min(s / 80.0);
            }
            let got = min_ade(&pred(modes), &gt, &HorizonSet::default()).unwrap();
            assert!((got - best).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let gt = line(80, 0.0);
        assert!(min_ade(&pred(vec![line(79, 0.0)]), &gt, &HorizonSet::default()).is_err());
        assert!(min_ade(&pred(vec![line(80, 0.0)]), &gt[..70], &HorizonSet::default()).is_err());
        let mut bad = line(80, 0.0);
        bad[3].x = f64::NAN;
        assert!(matches!(min_ade(&pred(vec![bad]), &gt, &HorizonSet::default()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn masked_mean_uses_valid_steps_only() {
        let gt = line(4, 0.0);
        let p = pred(vec![vec![Vec2::new(0.0, 1.0), Vec2::new(1.0, 3.0), Vec2::new(2.0, 1.0), Vec2::new(3.0, 1.0)]]);
        let (v, _, n) = min_ade_masked(&p, &gt, &[true, false, true, true], &HorizonSet::uniform(4)).unwrap();
        assert_eq!((v, n), (1.0, 3));
    }

    #[test]
    fn degradation_arithmetic() {
        let d = Degradation::between(1.0, 2.1079);
        assert!((d.relative.unwrap() - 1.1079).abs() < 1e-12);
        assert_eq!(d.percent_label(), "+110.79%");
        let same = Degradation::between(0.7, 0.7);
        assert_eq!((same.delta, same.relative), (0.0, Some(0.0)));
        let better = Degradation::between(1.0, 0.985);
        assert_eq!(better.percent_label(), "-1.50%");
        assert_eq!(Degradation::between(0.0, 1.0).relative, None);
    }

    fn result(values: &[f64]) -> EvalResult {
        EvalResult::from_trajectories(
            values
                .iter()
                .enumerate()
                .map(|(i, v)| TrajectoryError {
                    scene_id: SceneId(format!("s{i}")),
                    agent_id: AgentId(1),
                    min_ade: *v,
                    valid_steps: 80,
                })
                .collect(),
            vec![],
            vec![],
        )
    }

    #[test]
    fn identical_results_have_zero_deltas() {
        let r = result(&[0.5, 1.5, 3.0]);
        let d = delta_distribution(&r, &r, &HistogramSpec::default()).unwrap();
        assert!(d.deltas.iter().all(|x| x.delta == 0.0));
        assert_eq!((d.median, d.p25, d.p75), (0.0, 0.0, 0.0));
    }

    #[test]
    fn three_point_quantiles() {
        let a = result(&[1.0, 1.0, 1.0]);
        let b = result(&[0.0, 1.0, 2.0]);
        let d = delta_distribution(&a, &b, &HistogramSpec::default()).unwrap();
        assert_eq!((d.median, d.p25, d.p75), (0.0, -0.5, 0.5));
        assert_eq!(d.histogram.counts.iter().sum::<u64>(), 3);
    }

    #[test]
    fn outliers_are_counted() {
        let a = result(&[0.0; 4]);
        let b = result(&[-10.0, 0.0, 1.999, 50.0]);
        let d = delta_distribution(&a, &b, &HistogramSpec { min: -2.0, max: 2.0, bins: 4 }).unwrap();
        assert_eq!(d.histogram.counts, vec![1, 0, 1, 2]);
        assert_eq!(d.histogram.edges, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn key_mismatch() {
        let a = result(&[1.0, 2.0]);
        let b = result(&[1.0]);
        assert!(matches!(delta_distribution(&a, &b, &HistogramSpec::default()), Err(Error::KeyMismatch(_))));
    }
}
