//! Mini-batch Adam training of the attention model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::dataset::TrainingExample;
use crate::policy::loss::{loss_and_grad, LossBreakdown, DEFAULT_GAMMA1, DEFAULT_GAMMA2};
use crate::policy::model::{backward, encode_sample, forward, ModelConfig, ModelWeights, OUT_DIM};
use crate::policy::tensor::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub seed: u64,
    pub model: ModelConfig,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch: 16,
            epochs: 20,
            gamma1: DEFAULT_GAMMA1,
            gamma2: DEFAULT_GAMMA2,
            seed: 0,
            model: ModelConfig::default(),
            max_steps: None,
            lr_decay: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch == 0 || self.epochs == 0 {
            return Err(Error::validation("lr, batch and epochs must be positive"));
        }
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0) {
            return Err(Error::validation("loss weights must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.lr_decay > 0.0) {
            return Err(Error::validation("invalid optimizer constants"));
        }
        self.model.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    /// Mean total loss per epoch, measured on the batches as they were seen.
    pub loss_curve: Vec<f64>,
    /// Mean target loss per epoch.
    pub tar_curve: Vec<f64>,
    pub steps: usize,
}

fn example_grad(
    weights: &ModelWeights,
    ex: &TrainingExample,
    gamma1: f64,
    gamma2: f64,
) -> Result<(LossBreakdown, ModelWeights)> {
    let input = encode_sample(&ex.sample, &weights.config)?;
    let rows = input.vehicles.rows;
    if ex.aux_future.len() != rows {
        return Err(Error::shape("auxiliary ground truth rows", rows, ex.aux_future.len()));
    }
    ex.target_future.validate()?;
    let mut aux_gt = Mat::zeros(rows, OUT_DIM);
    for (r, t) in ex.aux_future.iter().enumerate() {
        t.validate()?;
        aux_gt.row_mut(r).copy_from_slice(&t.flatten());
    }
    let (pred, aux, cache) = forward(weights, input)?;
    let (b, d_pred, d_aux) = loss_and_grad(&pred, &ex.target_future.flatten(), &aux, &aux_gt, gamma1, gamma2);
    Ok((b, backward(weights, &cache, &d_pred, &d_aux)))
}

fn mean_breakdown(parts: &[LossBreakdown], gamma1: f64, gamma2: f64) -> LossBreakdown {
    let n = parts.len().max(1) as f64;
    let l_tar = parts.iter().map(|b| b.l_tar).sum::<f64>() / n;
    let l_aux = parts.iter().map(|b| b.l_aux).sum::<f64>() / n;
    LossBreakdown {
        l_tar,
        l_aux,
        total: gamma1 * l_tar + gamma2 * l_aux,
        gamma1,
        gamma2,
    }
}

/// Mean loss over `examples` and its exact gradient. Per-example work runs in
/// parallel but is reduced in input order, so results are bitwise stable.
pub fn loss_and_gradient(
    weights: &ModelWeights,
    examples: &[&TrainingExample],
    gamma1: f64,
    gamma2: f64,
) -> Result<(LossBreakdown, ModelWeights)> {
    if examples.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let per: Vec<(LossBreakdown, ModelWeights)> = examples
        .par_iter()
        .map(|ex| example_grad(weights, ex, gamma1, gamma2))
        .collect::<Result<_>>()?;
    let scale = 1.0 / examples.len() as f64;
    let mut grad = weights.zeros_like();
    {
        let mut acc = grad.tensors_mut();
        for (_, g) in &per {
            for (a, (_, _, src)) in acc.iter_mut().zip(g.tensors()) {
                for (x, y) in a.iter_mut().zip(src) {
                    *x += y * scale;
                }
            }
        }
    }
    let parts: Vec<LossBreakdown> = per.iter().map(|(b, _)| *b).collect();
    Ok((mean_breakdown(&parts, gamma1, gamma2), grad))
}

/// Mean loss without gradients.
pub fn evaluate_loss(
    weights: &ModelWeights,
    examples: &[&TrainingExample],
    gamma1: f64,
    gamma2: f64,
) -> Result<LossBreakdown> {
    let parts: Vec<LossBreakdown> = examples
        .par_iter()
        .map(|ex| {
            let input = encode_sample(&ex.sample, &weights.config)?;
            let mut aux_gt = Mat::zeros(input.vehicles.rows, OUT_DIM);
            if ex.aux_future.len() != aux_gt.rows {
                return Err(Error::shape("auxiliary ground truth rows", aux_gt.rows, ex.aux_future.len()));
            }
            for (r, t) in ex.aux_future.iter().enumerate() {
                aux_gt.row_mut(r).copy_from_slice(&t.flatten());
            }
            let (pred, aux, _) = forward(weights, input)?;
            Ok(loss_and_grad(&pred, &ex.target_future.flatten(), &aux, &aux_gt, gamma1, gamma2).0)
        })
        .collect::<Result<_>>()?;
    Ok(mean_breakdown(&parts, gamma1, gamma2))
}

/// Adam with bias-corrected moments, one state vector per weight tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(weights: &ModelWeights, beta1: f64, beta2: f64, eps: f64) -> Self {
        let shapes: Vec<usize> = weights.tensors().iter().map(|(_, _, d)| d.len()).collect();
        Adam {
            m: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, weights: &mut ModelWeights, grad: &ModelWeights, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let grads = grad.tensors();
        for (k, w) in weights.tensors_mut().into_iter().enumerate() {
            let g = grads[k].2;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..w.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

pub fn train(data: &[TrainingExample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let weights = ModelWeights::init(cfg.model.clone(), cfg.seed)?;
    train_from(weights, data, cfg)
}

/// Continues training from existing weights.
pub fn train_from(mut weights: ModelWeights, data: &[TrainingExample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F7A41);
    let mut adam = Adam::new(&weights, cfg.beta1, cfg.beta2, cfg.eps);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_curve = Vec::new();
    let mut tar_curve = Vec::new();
    let mut steps = 0;
    let mut lr = cfg.lr;
    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut sum_tar, mut n) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch) {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let batch: Vec<&TrainingExample> = chunk.iter().map(|i| &data[*i]).collect();
            let (b, grad) = loss_and_gradient(&weights, &batch, cfg.gamma1, cfg.gamma2)?;
            if !b.total.is_finite() {
                return Err(Error::Diverged { step: steps, loss: b.total });
            }
            adam.step(&mut weights, &grad, lr);
            steps += 1;
            sum += b.total * batch.len() as f64;
            sum_tar += b.l_tar * batch.len() as f64;
            n += batch.len();
        }
        if n > 0 {
            loss_curve.push(sum / n as f64);
            tar_curve.push(sum_tar / n as f64);
            log::debug!("epoch {epoch}: loss {:.6}", sum / n as f64);
        }
        lr *= cfg.lr_decay;
        if cfg.max_steps.is_some_and(|m| steps >= m) {
            break 'epochs;
        }
    }
    Ok(TrainOutcome {
        weights,
        loss_curve,
        tar_curve,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::dataset::{generate_dataset, DatasetConfig};
    use rand::Rng;

    fn examples(n: usize) -> Vec<TrainingExample> {
        let (data, _) = generate_dataset(2, 3, &DatasetConfig::default()).unwrap();
        data.into_iter().step_by(15).take(n).collect()
    }

    fn perturbed(cfg: ModelConfig, seed: u64) -> ModelWeights {
        let mut w = ModelWeights::init(cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for t in w.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        w
    }

    fn total(w: &ModelWeights, ex: &[&TrainingExample]) -> f64 {
        evaluate_loss(w, ex, DEFAULT_GAMMA1, DEFAULT_GAMMA2).unwrap().total
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = examples(2);
        let ex: Vec<&TrainingExample> = data.iter().collect();
        let w = perturbed(ModelConfig::small(8, 1, 2), 7);
        let (_, g) = loss_and_gradient(&w, &ex, DEFAULT_GAMMA1, DEFAULT_GAMMA2).unwrap();
        let grads: Vec<Vec<f64>> = g.tensors().into_iter().map(|(_, _, d)| d.to_vec()).collect();
        let h = 1e-3;
        let mut worst = 0.0f64;
        for (k, gk) in grads.iter().enumerate() {
            // every 7th entry keeps the unit test quick
            for i in (0..gk.len()).step_by(7) {
                let at = |d: f64| {
                    let mut p = w.clone();
                    p.tensors_mut()[k][i] += d;
                    total(&p, &ex)
                };
                let num = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
                let rel = (gk[i] - num).abs() / gk[i].abs().max(num.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut w = ModelWeights::zeros(ModelConfig::small(8, 1, 2)).unwrap();
        let mut g = w.zeros_like();
        g.tensors_mut()[0][0] = 3.0;
        g.tensors_mut()[0][1] = -0.01;
        let mut adam = Adam::new(&w, 0.9, 0.999, 1e-12);
        adam.step(&mut w, &g, 0.1);
        let t = w.tensors();
        assert!((t[0].2[0] + 0.1).abs() < 1e-9);
        assert!((t[0].2[1] - 0.1).abs() < 1e-9);
        assert_eq!(t[0].2[2], 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = examples(4);
        let cfg = TrainConfig {
            batch: 2,
            epochs: 3,
            model: ModelConfig::small(8, 1, 2),
            ..Default::default()
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.steps, 6);
    }

    #[test]
    fn max_steps_stops_early() {
        let data = examples(4);
        let cfg = TrainConfig {
            batch: 1,
            epochs: 10,
            max_steps: Some(5),
            model: ModelConfig::small(8, 1, 2),
            ..Default::default()
        };
        assert_eq!(train(&data, &cfg).unwrap().steps, 5);
        assert!(train(&[], &cfg).is_err());
    }

    #[test]
    fn memorizes_one_sample() {
        let data = examples(1);
        let cfg = TrainConfig {
            lr: 5e-3,
            batch: 1,
            epochs: 600,
            model: ModelConfig::small(32, 1, 4),
            seed: 1,
            ..Default::default()
        };
        let out = train(&data, &cfg).unwrap();
        let p = crate::policy::predict(&out.weights, &data[0].sample).unwrap();
        let got: Vec<f64> = p.target.frames.iter().flat_map(|f| f.as_array()).collect();
        let want = data[0].target_future.flatten();
        let mse = got.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / got.len() as f64;
        assert!(mse < 1e-3, "mse {mse}");
    }
}
