//! Time-weighted imitation loss over the target and auxiliary trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::model::{OUT_CHANNELS, OUT_DIM};
use crate::policy::tensor::Mat;
use crate::policy::PlannedTrajectory;
use crate::sample::T_FUT;

pub const DEFAULT_GAMMA1: f64 = 1.0;
pub const DEFAULT_GAMMA2: f64 = 0.5;

/// `e^((t - 40) / t) + 1` for future frame `t` in `1..=40`.
pub fn lambda_weight(t: usize) -> Result<f64> {
    if t == 0 || t > T_FUT {
        return Err(Error::validation(format!("frame index {t} outside 1..={T_FUT}")));
    }
    let t = t as f64;
    Ok(((t - T_FUT as f64) / t).exp() + 1.0)
}

fn lambdas() -> [f64; T_FUT] {
    std::array::from_fn(|i| lambda_weight(i + 1).expect("in range"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_tar: f64,
    pub l_aux: f64,
    pub total: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl LossBreakdown {
    fn new(l_tar: f64, l_aux: f64, gamma1: f64, gamma2: f64) -> Self {
        LossBreakdown {
            l_tar,
            l_aux,
            total: gamma1 * l_tar + gamma2 * l_aux,
            gamma1,
            gamma2,
        }
    }
}

pub fn loss(
    pred: &PlannedTrajectory,
    gt: &PlannedTrajectory,
    aux_preds: &[PlannedTrajectory],
    aux_gts: &[PlannedTrajectory],
    gamma1: f64,
    gamma2: f64,
) -> Result<LossBreakdown> {
    pred.validate()?;
    gt.validate()?;
    if aux_preds.len() != aux_gts.len() {
        return Err(Error::shape("auxiliary trajectories", aux_gts.len(), aux_preds.len()));
    }
    let mut aux = Mat::zeros(aux_preds.len(), OUT_DIM);
    let mut aux_gt = Mat::zeros(aux_gts.len(), OUT_DIM);
    for (r, (p, g)) in aux_preds.iter().zip(aux_gts).enumerate() {
        p.validate()?;
        g.validate()?;
        aux.row_mut(r).copy_from_slice(&p.flatten());
        aux_gt.row_mut(r).copy_from_slice(&g.flatten());
    }
    let (b, _, _) = loss_and_grad(&pred.flatten(), &gt.flatten(), &aux, &aux_gt, gamma1, gamma2);
    Ok(b)
}

/// Loss together with its gradient w.r.t. the flat target prediction and the
/// auxiliary prediction rows.
pub(crate) fn loss_and_grad(
    pred: &[f64],
    gt: &[f64],
    aux: &Mat,
    aux_gt: &Mat,
    gamma1: f64,
    gamma2: f64,
) -> (LossBreakdown, Vec<f64>, Mat) {
    let lam = lambdas();
    let tf = T_FUT as f64;
    let mut l_tar = 0.0;
    let mut d_pred = vec![0.0; pred.len()];
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        let w = lam[i / OUT_CHANNELS] / tf;
        let e = p - g;
        l_tar += w * e * e;
        d_pred[i] = gamma1 * 2.0 * w * e;
    }
    let mut d_aux = Mat::zeros(aux.rows, aux.cols);
    let mut l_aux = 0.0;
    if aux.rows > 0 {
        let norm = 1.0 / (aux.rows as f64 * tf);
        for ((d, p), g) in d_aux.data.iter_mut().zip(&aux.data).zip(&aux_gt.data) {
            let e = p - g;
            l_aux += norm * e * e;
            *d = gamma2 * 2.0 * norm * e;
        }
    }
    (LossBreakdown::new(l_tar, l_aux, gamma1, gamma2), d_pred, d_aux)
}
