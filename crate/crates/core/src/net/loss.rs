use super::{backward, forward_trace, Fingerprint, NetworkParams, TrainingPair};
use crate::error::{Error, Result};

/// Euclidean distance between two fingerprints.
pub fn embedding_distance(f1: &Fingerprint, f2: &Fingerprint) -> Result<f64> {
    if f1.dim() != f2.dim() {
        return Err(Error::DimensionMismatch {
            expected: f1.dim(),
            actual: f2.dim(),
        });
    }
    Ok(f1
        .values()
        .iter()
        .zip(f2.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// `Y·½d² + (1−Y)·½·max(0, m − d)²` with `Y = 1` for similar pairs.
pub fn contrastive_loss(similar: bool, d_w: f64, margin: f64) -> f64 {
    if similar {
        0.5 * d_w * d_w
    } else {
        let gap = (margin - d_w).max(0.0);
        0.5 * gap * gap
    }
}

/// Same place iff `d_w ≤ τ`.
pub fn classify(d_w: f64, tau: f64) -> bool {
    d_w <= tau
}

#[derive(Debug, Clone)]
pub struct PairEvaluation {
    pub loss: f64,
    pub d_w: f64,
    pub gradients: NetworkParams,
}

/// Loss, embedding distance and parameter gradients for one pair.
pub fn loss_gradients(params: &NetworkParams, pair: &TrainingPair) -> Result<PairEvaluation> {
    let mut gradients = NetworkParams::zeros(params.config())?;
    let (loss, d_w) = accumulate_gradients(params, pair, &mut gradients)?;
    Ok(PairEvaluation {
        loss,
        d_w,
        gradients,
    })
}

/// Adds this pair's gradients into `grads`; returns (loss, d_w).
pub(crate) fn accumulate_gradients(
    params: &NetworkParams,
    pair: &TrainingPair,
    grads: &mut NetworkParams,
) -> Result<(f64, f64)> {
    let margin = params.config().margin;
    let t1 = forward_trace(params, &pair.r1)?;
    let t2 = forward_trace(params, &pair.r2)?;
    let diff: Vec<f64> = t1.output.iter().zip(&t2.output).map(|(a, b)| a - b).collect();
    let d_w = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    let loss = contrastive_loss(pair.similar, d_w, margin);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            layer: "loss".into(),
        });
    }
    // dL/df1 = dL/dD · (f1 − f2)/D; taken as zero at D = 0
    let scale = if pair.similar {
        1.0
    } else if d_w > 0.0 && d_w < margin {
        -(margin - d_w) / d_w
    } else {
        0.0
    };
    if scale != 0.0 {
        let g1: Vec<f64> = diff.iter().map(|v| scale * v).collect();
        let g2: Vec<f64> = g1.iter().map(|v| -v).collect();
        backward(params, &t1, &g1, grads)?;
        backward(params, &t2, &g2, grads)?;
    }
    Ok((loss, d_w))
}
