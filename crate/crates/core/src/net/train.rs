use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::accumulate_gradients;
use super::{NetworkConfig, NetworkParams, TrainingPair};
use crate::error::{Error, Result};

/// Mini-batch SGD with classical momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 30,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean pair loss over the epoch, measured before each batch's update.
    pub mean_loss: f64,
    pub positive_mean_dw: f64,
    pub negative_mean_dw: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub params: NetworkParams,
    pub history: Vec<EpochStats>,
}

pub fn train(pairs: &[TrainingPair], config: &NetworkConfig, opt: &TrainOptions) -> Result<TrainingOutcome> {
    if pairs.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    if opt.batch_size == 0 || !(opt.learning_rate > 0.0) || !(0.0..1.0).contains(&opt.momentum) {
        return Err(Error::Config(format!("invalid optimizer settings {opt:?}")));
    }
    let mut params = NetworkParams::init(config)?;
    let mut velocity = NetworkParams::zeros(config)?;
    let mut grads = NetworkParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(opt.epochs);

    for epoch in 1..=opt.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let (mut pos_sum, mut pos_n, mut neg_sum, mut neg_n) = (0.0, 0usize, 0.0, 0usize);
        for batch in order.chunks(opt.batch_size) {
            grads.fill(0.0);
            for &k in batch {
                let (loss, d_w) = accumulate_gradients(&params, &pairs[k], &mut grads)?;
                loss_sum += loss;
                if pairs[k].similar {
                    pos_sum += d_w;
                    pos_n += 1;
                } else {
                    neg_sum += d_w;
                    neg_n += 1;
                }
            }
            // v ← μv − η·mean(g);  w ← w + v
            for (v, g) in velocity.values_mut().zip(grads.values()) {
                *v = opt.momentum * *v - opt.learning_rate * g / batch.len() as f64;
            }
            params.add_scaled(&velocity, 1.0);
        }
        let mean_loss = loss_sum / pairs.len() as f64;
        if !mean_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: mean_loss,
            });
        }
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        history.push(EpochStats {
            epoch,
            mean_loss,
            positive_mean_dw: mean(pos_sum, pos_n),
            negative_mean_dw: mean(neg_sum, neg_n),
        });
    }
    Ok(TrainingOutcome { params, history })
}

/// Training log CSV: `epoch,mean_loss,positive_mean_dw,negative_mean_dw`.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,mean_loss,positive_mean_dw,negative_mean_dw\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch, h.mean_loss, h.positive_mean_dw, h.negative_mean_dw
        ));
    }
    out
}
