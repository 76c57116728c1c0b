use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::predict::PredictionSet;

/// Weight of the winner's negative log-probability.
pub const CLASSIFICATION_WEIGHT: f64 = 0.1;

/// Winner-takes-all loss on a world- or local-frame prediction.
///
/// Mean displacement of the closest mode over all steps plus
/// `0.1 * -ln p(winner)`. Ties go to the lowest mode index.
pub fn wta_loss(prediction: &PredictionSet, gt: &[Vec2]) -> Result<f64> {
    if prediction.modes.is_empty() || prediction.probabilities.len() != prediction.modes.len() {
        return Err(Error::ShapeMismatch("prediction modes and probabilities disagree".into()));
    }
    if prediction.modes.iter().any(|m| m.len() != gt.len()) || gt.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "prediction of {} steps against {} ground-truth steps",
            prediction.horizon_len(),
            gt.len()
        )));
    }
    let mut best = (f64::INFINITY, 0);
    for (k, m) in prediction.modes.iter().enumerate() {
        let ade = m.iter().zip(gt).map(|(p, g)| p.distance(*g)).sum::<f64>() / gt.len() as f64;
        if ade < best.0 {
            best = (ade, k);
        }
    }
    Ok(best.0 - CLASSIFICATION_WEIGHT * prediction.probabilities[best.1].ln())
}

/// Loss value and its gradient with respect to the raw network outputs.
#[derive(Debug, Clone)]
pub(crate) struct WtaTerms {
    pub loss: f64,
    pub winner: usize,
    /// Displacement gap between the winner and the runner-up mode.
    pub margin: f64,
    /// One `2K` gradient row per decoded step.
    pub position_grad: Vec<Vec<f64>>,
    pub logit_grad: Vec<f64>,
}

/// `positions[t]` holds mode-major `(x, y)` pairs; only valid steps are scored.
pub(crate) fn wta_terms(positions: &[&[f64]], logits: &[f64], future: &[Vec2], valid: &[bool]) -> Option<WtaTerms> {
    let k = logits.len();
    let steps: Vec<usize> = (0..positions.len()).filter(|t| valid[*t]).collect();
    if steps.is_empty() {
        return None;
    }
    let n = steps.len() as f64;
    let mut ade = vec![0.0; k];
    for &t in &steps {
        for (m, a) in ade.iter_mut().enumerate() {
            let p = Vec2::new(positions[t][2 * m], positions[t][2 * m + 1]);
            *a += p.distance(future[t]);
        }
    }
    ade.iter_mut().for_each(|a| *a /= n);
    let mut winner = 0;
    for m in 1..k {
        if ade[m] < ade[winner] {
            winner = m;
        }
    }
    let margin = (0..k)
        .filter(|m| *m != winner)
        .map(|m| ade[m] - ade[winner])
        .fold(f64::INFINITY, f64::min);

    let probs = crate::predict::softmax_probabilities(logits);
    let loss = ade[winner] - CLASSIFICATION_WEIGHT * probs[winner].ln();

    let mut position_grad = vec![vec![0.0; 2 * k]; positions.len()];
    for &t in &steps {
        let d = Vec2::new(positions[t][2 * winner], positions[t][2 * winner + 1]) - future[t];
        let r = d.norm();
        if r > 0.0 {
            position_grad[t][2 * winner] = d.x / (r * n);
            position_grad[t][2 * winner + 1] = d.y / (r * n);
        }
    }
    let logit_grad = probs
        .iter()
        .enumerate()
        .map(|(m, p)| CLASSIFICATION_WEIGHT * (p - if m == winner { 1.0 } else { 0.0 }))
        .collect();
    Some(WtaTerms {
        loss,
        winner,
        margin,
        position_grad,
        logit_grad,
    })
}
