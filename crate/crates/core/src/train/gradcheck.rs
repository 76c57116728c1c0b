use serde::{Deserialize, Serialize};

use super::sample_terms;
use crate::error::{Error, Result};
use crate::predict::RecurrentModel;
use crate::scene::{AgentId, Scene};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-8)
}

/// Max relative error between `analytic` and central differences of `f` at `x`.
pub fn check_gradients<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], analytic: &[f64], step: f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = f(&probe);
        probe[i] = x[i] - step;
        let minus = f(&probe);
        probe[i] = x[i];
        worst = worst.max(relative_error(analytic[i], (plus - minus) / (2.0 * step)));
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `name[index]` of the worst parameter.
    pub worst_parameter: Option<String>,
    pub checked: usize,
    /// Parameters whose finite-difference probe changed the winning mode.
    pub skipped: usize,
    /// The sample sits at a winner-takes-all tie; nothing was checked.
    pub tie: bool,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        !self.tie && self.max_relative_error < tolerance
    }
}

/// Compares the analytic loss gradient of one sample with central differences
/// over every parameter.
pub fn grad_check(model: &RecurrentModel, scene: &Scene, target: AgentId) -> Result<GradCheckReport> {
    grad_check_with_step(model, scene, target, FD_STEP)
}

/// [`grad_check`] with a custom central-difference step.
pub fn grad_check_with_step(model: &RecurrentModel, scene: &Scene, target: AgentId, step: f64) -> Result<GradCheckReport> {
    let sample = model.prepare(scene, target)?;
    let mut analytic = vec![0.0; model.num_parameters()];
    let base = super::sample_gradient(model, &sample, &mut analytic)?
        .ok_or_else(|| Error::InvalidState("sample has no valid future step".into()))?;
    if base.margin <= 1e-12 {
        return Ok(GradCheckReport {
            max_relative_error: 0.0,
            worst_parameter: None,
            checked: 0,
            skipped: analytic.len(),
            tie: true,
        });
    }

    let mut store = model.params().clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: None,
        checked: 0,
        skipped: 0,
        tie: false,
    };
    let specs = model.params().specs().to_vec();
    for spec in &specs {
        for j in 0..spec.len() {
            let i = spec.offset + j;
            let x = store.data()[i];
            store.data_mut()[i] = x + step;
            let plus = sample_terms(model, &store, &sample)?.expect("valid future checked above");
            store.data_mut()[i] = x - step;
            let minus = sample_terms(model, &store, &sample)?.expect("valid future checked above");
            store.data_mut()[i] = x;
            if plus.winner != base.winner || minus.winner != base.winner {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            let e = relative_error(analytic[i], (plus.loss - minus.loss) / (2.0 * step));
            if e > report.max_relative_error {
                report.max_relative_error = e;
                report.worst_parameter = Some(format!("{}[{}]", spec.name, j));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::ModelConfig;
    use crate::scene::fixtures::*;

    #[test]
    fn linear_model_is_exact() {
        let w = [0.5, -1.5, 2.0, 0.25];
        let inputs = [[1.0, 2.0, -1.0, 0.5], [0.3, -0.2, 0.9, 4.0]];
        let loss = |p: &[f64]| -> f64 { inputs.iter().map(|x| x.iter().zip(p).map(|(a, b)| a * b).sum::<f64>()).sum() };
        let analytic: Vec<f64> = (0..4).map(|j| inputs.iter().map(|x| x[j]).sum()).collect();
        assert!(check_gradients(loss, &w, &analytic, FD_STEP) < 1e-7);
    }

    #[test]
    fn small_recurrent_model() {
        for env in [false, true] {
            let cfg = ModelConfig {
                layers: 2,
                hidden: 6,
                modes: 2,
                road_budget: 6,
                max_neighbors: 2,
                future_len: 5,
                init_seed: 11,
                ..ModelConfig::desk(env)
            };
            let m = RecurrentModel::new(cfg).unwrap();
            let r = grad_check(&m, &two_agent_scene(), AgentId(1)).unwrap();
            assert!(!r.tie);
            assert!(r.checked > 0);
            assert!(r.max_relative_error < 1e-4, "{r:?}");
        }
    }
}
