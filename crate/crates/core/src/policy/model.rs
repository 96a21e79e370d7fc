//! Attention trajectory model.
//!
//! Vehicle histories and road polylines are flattened and embedded to width
//! `D`; the vehicle set attends to itself, then (as queries) to the road
//! tokens; a linear head on the target's row emits its 4 s trajectory and an
//! auxiliary head emits one for every vehicle row. Each attention block is
//! followed by a residual connection and a parameter-free layer norm. There
//! is no positional encoding across vehicles, so non-target rows form a set.
//!
//! Forward and backward passes are written out by hand; `forward` keeps the
//! activations that `backward` needs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::tensor::Mat;
use crate::policy::PlannedTrajectory;
use crate::sample::{Sample, CHANNELS, D_V, NEIGHBOR_FEATURES, ROAD_POINTS, T_FUT, T_HIS};
use crate::types::PlannedFrame;

/// Supervised output channels per future frame: x, y, theta, speed.
pub const OUT_CHANNELS: usize = 4;
pub const OUT_DIM: usize = T_FUT * OUT_CHANNELS;
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub self_layers: usize,
    pub cross_layers: usize,
    pub heads: usize,
    pub d_v: usize,
    pub t_his: usize,
    pub road_points: usize,
    pub channels: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            self_layers: 2,
            cross_layers: 2,
            heads: 4,
            d_v: D_V,
            t_his: T_HIS,
            road_points: ROAD_POINTS,
            channels: CHANNELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ModelConfig {
    pub fn small(d_model: usize, layers: usize, heads: usize) -> Self {
        ModelConfig {
            d_model,
            self_layers: layers,
            cross_layers: layers,
            heads,
            ..Default::default()
        }
    }

    pub fn vehicle_input(&self) -> usize {
        self.d_v * self.t_his
    }

    pub fn road_input(&self) -> usize {
        self.road_points * 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::validation(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.channels.len() != self.d_v {
            return Err(Error::shape("channel list", self.d_v, self.channels.len()));
        }
        if self.d_v < NEIGHBOR_FEATURES || self.t_his == 0 || self.road_points == 0 {
            return Err(Error::validation("input dimensions too small"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// in x out
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Linear {
    fn zeros(input: usize, output: usize) -> Self {
        Linear {
            w: Mat::zeros(input, output),
            b: vec![0.0; output],
        }
    }

    fn xavier(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: xavier(input, output, rng),
            b: vec![0.0; output],
        }
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = x.matmul(&self.w);
        y.add_row_vector(&self.b);
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionBlock {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
}

impl AttentionBlock {
    fn zeros(d: usize) -> Self {
        AttentionBlock {
            wq: Mat::zeros(d, d),
            wk: Mat::zeros(d, d),
            wv: Mat::zeros(d, d),
            wo: Mat::zeros(d, d),
        }
    }

    fn xavier(d: usize, rng: &mut ChaCha8Rng) -> Self {
        AttentionBlock {
            wq: xavier(d, d, rng),
            wk: xavier(d, d, rng),
            wv: xavier(d, d, rng),
            wo: xavier(d, d, rng),
        }
    }
}

fn xavier(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Mat {
    let limit = (6.0 / (input + output) as f64).sqrt();
    Mat::from_vec(
        input,
        output,
        (0..input * output).map(|_| rng.random_range(-limit..limit)).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub vehicle_embed: Linear,
    pub road_embed: Linear,
    pub self_attn: Vec<AttentionBlock>,
    pub cross_attn: Vec<AttentionBlock>,
    pub out_head: Linear,
    pub aux_head: Linear,
}

impl ModelWeights {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        Ok(ModelWeights {
            vehicle_embed: Linear::zeros(config.vehicle_input(), d),
            road_embed: Linear::zeros(config.road_input(), d),
            self_attn: (0..config.self_layers).map(|_| AttentionBlock::zeros(d)).collect(),
            cross_attn: (0..config.cross_layers).map(|_| AttentionBlock::zeros(d)).collect(),
            out_head: Linear::zeros(d, OUT_DIM),
            aux_head: Linear::zeros(d, OUT_DIM),
            config,
        })
    }

    /// Xavier-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        Ok(ModelWeights {
            vehicle_embed: Linear::xavier(config.vehicle_input(), d, &mut rng),
            road_embed: Linear::xavier(config.road_input(), d, &mut rng),
            self_attn: (0..config.self_layers).map(|_| AttentionBlock::xavier(d, &mut rng)).collect(),
            cross_attn: (0..config.cross_layers).map(|_| AttentionBlock::xavier(d, &mut rng)).collect(),
            out_head: Linear::xavier(d, OUT_DIM, &mut rng),
            aux_head: Linear::xavier(d, OUT_DIM, &mut rng),
            config,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelWeights::zeros(self.config.clone()).expect("config already validated")
    }

    /// Every tensor with its name and shape, in serialization order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        fn push_linear<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, name: &str, l: &'a Linear) {
            out.push((format!("{name}.w"), vec![l.w.rows, l.w.cols], &l.w.data));
            out.push((format!("{name}.b"), vec![l.b.len()], &l.b));
        }
        fn push_block<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, name: &str, b: &'a AttentionBlock) {
            for (n, m) in [("wq", &b.wq), ("wk", &b.wk), ("wv", &b.wv), ("wo", &b.wo)] {
                out.push((format!("{name}.{n}"), vec![m.rows, m.cols], &m.data));
            }
        }
        push_linear(&mut out, "vehicle_embed", &self.vehicle_embed);
        push_linear(&mut out, "road_embed", &self.road_embed);
        for (i, b) in self.self_attn.iter().enumerate() {
            push_block(&mut out, &format!("self_attn.{i}"), b);
        }
        for (i, b) in self.cross_attn.iter().enumerate() {
            push_block(&mut out, &format!("cross_attn.{i}"), b);
        }
        push_linear(&mut out, "out_head", &self.out_head);
        push_linear(&mut out, "aux_head", &self.aux_head);
        out
    }

    /// Mutable views in the same order as [`ModelWeights::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(&mut self.vehicle_embed.w.data);
        out.push(&mut self.vehicle_embed.b);
        out.push(&mut self.road_embed.w.data);
        out.push(&mut self.road_embed.b);
        for b in self.self_attn.iter_mut().chain(self.cross_attn.iter_mut()) {
            out.push(&mut b.wq.data);
            out.push(&mut b.wk.data);
            out.push(&mut b.wv.data);
            out.push(&mut b.wo.data);
        }
        out.push(&mut self.out_head.w.data);
        out.push(&mut self.out_head.b);
        out.push(&mut self.aux_head.w.data);
        out.push(&mut self.aux_head.b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }
}

/// Flattened model inputs for one sample: row 0 is the target.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub vehicles: Mat,
    pub road: Mat,
}

/// Fixed per-channel divisors bringing every vehicle channel to roughly unit
/// range. Neighbour rows use the first [`NEIGHBOR_FEATURES`] entries.
pub const VEHICLE_SCALE: [f64; D_V] = [5.0, 2.0, 0.2, 3.0, 0.5, 1.0, 1.0, 1.0, 0.2, 5.0, 0.5, 2.0, 10.0];
/// Divisors for road point `(x, y)`.
pub const ROAD_SCALE: [f64; 2] = [20.0, 2.0];

pub fn encode_sample(sample: &Sample, config: &ModelConfig) -> Result<ModelInput> {
    if config.d_v != D_V || config.t_his != T_HIS {
        return Err(Error::shape(
            "vehicle features (d_v x t_his)",
            format!("{D_V}x{T_HIS}"),
            format!("{}x{}", config.d_v, config.t_his),
        ));
    }
    for (i, line) in sample.road.iter().enumerate() {
        if line.len() != config.road_points {
            return Err(Error::shape(format!("road polyline {i} points"), config.road_points, line.len()));
        }
    }
    let n = 1 + sample.neighbors.len();
    let width = config.vehicle_input();
    let mut vehicles = Mat::zeros(n, width);
    for (k, frame) in sample.target_history.iter().enumerate() {
        for (c, v) in frame.iter().enumerate() {
            vehicles.row_mut(0)[k * D_V + c] = v / VEHICLE_SCALE[c];
        }
    }
    for (i, nb) in sample.neighbors.iter().enumerate() {
        let row = vehicles.row_mut(i + 1);
        for (k, f) in nb.history.iter().enumerate() {
            for (c, v) in f.iter().enumerate() {
                row[k * D_V + c] = v / VEHICLE_SCALE[c];
            }
        }
    }
    let mut road = Mat::zeros(sample.road.len(), config.road_input());
    for (i, line) in sample.road.iter().enumerate() {
        for (j, p) in line.iter().enumerate() {
            road.row_mut(i)[2 * j] = p[0] / ROAD_SCALE[0];
            road.row_mut(i)[2 * j + 1] = p[1] / ROAD_SCALE[1];
        }
    }
    Ok(ModelInput { vehicles, road })
}

fn check_input(weights: &ModelWeights, input: &ModelInput) -> Result<()> {
    if input.vehicles.cols != weights.vehicle_embed.w.rows {
        return Err(Error::shape("vehicle input width", weights.vehicle_embed.w.rows, input.vehicles.cols));
    }
    if input.road.cols != weights.road_embed.w.rows {
        return Err(Error::shape("road input width", weights.road_embed.w.rows, input.road.cols));
    }
    if input.vehicles.rows == 0 || input.road.rows == 0 {
        return Err(Error::validation("model input needs at least one vehicle and one road token"));
    }
    Ok(())
}

/// Vehicle and road embeddings `(F_v, F_r)`.
pub fn embed(weights: &ModelWeights, sample: &Sample) -> Result<(Mat, Mat)> {
    let input = encode_sample(sample, &weights.config)?;
    check_input(weights, &input)?;
    Ok((weights.vehicle_embed.forward(&input.vehicles), weights.road_embed.forward(&input.road)))
}

struct MhaCache {
    q: Mat,
    k: Mat,
    v: Mat,
    attn: Vec<Mat>,
    o: Mat,
}

struct LayerCache {
    input: Mat,
    mha: MhaCache,
    ln_y: Mat,
    ln_inv: Vec<f64>,
}

fn mha_forward(blk: &AttentionBlock, xq: &Mat, xkv: &Mat, heads: usize) -> (Mat, MhaCache) {
    let q = xq.matmul(&blk.wq);
    let k = xkv.matmul(&blk.wk);
    let v = xkv.matmul(&blk.wv);
    let d = q.cols;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (nq, nk) = (q.rows, k.rows);
    let mut o = Mat::zeros(nq, d);
    let mut attn = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let mut a = Mat::zeros(nq, nk);
        for i in 0..nq {
            let qi = &q.row(i)[cols.clone()];
            let row = a.row_mut(i);
            for j in 0..nk {
                row[j] = scale * qi.iter().zip(&k.row(j)[cols.clone()]).map(|(x, y)| x * y).sum::<f64>();
            }
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for s in row.iter_mut() {
                *s = (*s - m).exp();
                z += *s;
            }
            for s in row.iter_mut() {
                *s /= z;
            }
            let orow = &mut o.row_mut(i)[cols.clone()];
            for j in 0..nk {
                let w = a.at(i, j);
                for (oc, vc) in orow.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *oc += w * vc;
                }
            }
        }
        attn.push(a);
    }
    let y = o.matmul(&blk.wo);
    (y, MhaCache { q, k, v, attn, o })
}

/// Returns `(d_xq, d_xkv)` and accumulates weight gradients into `g`.
fn mha_backward(
    blk: &AttentionBlock,
    c: &MhaCache,
    xq: &Mat,
    xkv: &Mat,
    dy: &Mat,
    heads: usize,
    g: &mut AttentionBlock,
) -> (Mat, Mat) {
    g.wo.add_assign(&c.o.t_matmul(dy));
    let d_o = dy.matmul_t(&blk.wo);
    let d = c.q.cols;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (nq, nk) = (c.q.rows, c.k.rows);
    let mut dq = Mat::zeros(nq, d);
    let mut dk = Mat::zeros(nk, d);
    let mut dv = Mat::zeros(nk, d);
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let a = &c.attn[h];
        for i in 0..nq {
            let doi = &d_o.row(i)[cols.clone()];
            let da: Vec<f64> = (0..nk)
                .map(|j| doi.iter().zip(&c.v.row(j)[cols.clone()]).map(|(x, y)| x * y).sum())
                .collect();
            let dot: f64 = (0..nk).map(|j| a.at(i, j) * da[j]).sum();
            for j in 0..nk {
                let aij = a.at(i, j);
                for (dvc, oc) in dv.row_mut(j)[cols.clone()].iter_mut().zip(doi) {
                    *dvc += aij * oc;
                }
                let ds = aij * (da[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for (dqc, kc) in dq.row_mut(i)[cols.clone()].iter_mut().zip(&c.k.row(j)[cols.clone()]) {
                    *dqc += ds * kc;
                }
                for (dkc, qc) in dk.row_mut(j)[cols.clone()].iter_mut().zip(&c.q.row(i)[cols.clone()]) {
                    *dkc += ds * qc;
                }
            }
        }
    }
    g.wq.add_assign(&xq.t_matmul(&dq));
    g.wk.add_assign(&xkv.t_matmul(&dk));
    g.wv.add_assign(&xkv.t_matmul(&dv));
    let dxq = dq.matmul_t(&blk.wq);
    let mut dxkv = dk.matmul_t(&blk.wk);
    dxkv.add_assign(&dv.matmul_t(&blk.wv));
    (dxq, dxkv)
}

fn layer_norm(z: &Mat) -> (Mat, Vec<f64>) {
    let mut y = z.clone();
    let mut inv = Vec::with_capacity(z.rows);
    let n = z.cols as f64;
    for r in 0..z.rows {
        let row = y.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let s = 1.0 / (var + LN_EPS).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * s;
        }
        inv.push(s);
    }
    (y, inv)
}

fn layer_norm_backward(y: &Mat, inv: &[f64], dy: &Mat) -> Mat {
    let mut dz = Mat::zeros(y.rows, y.cols);
    let n = y.cols as f64;
    for r in 0..y.rows {
        let (yr, gr) = (y.row(r), dy.row(r));
        let mean_g = gr.iter().sum::<f64>() / n;
        let mean_gy = gr.iter().zip(yr).map(|(g, y)| g * y).sum::<f64>() / n;
        for ((o, g), yv) in dz.row_mut(r).iter_mut().zip(gr).zip(yr) {
            *o = inv[r] * (g - mean_g - yv * mean_gy);
        }
    }
    dz
}

/// Attention maps per layer and head, recorded by [`attention_forward_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub self_maps: Vec<Vec<Mat>>,
    pub cross_maps: Vec<Vec<Mat>>,
}

struct Encoded {
    h: Mat,
    self_layers: Vec<LayerCache>,
    cross_layers: Vec<LayerCache>,
}

fn encode(weights: &ModelWeights, fv: &Mat, fr: &Mat) -> Encoded {
    let heads = weights.config.heads;
    let mut h = fv.clone();
    let mut self_layers = Vec::with_capacity(weights.self_attn.len());
    for blk in &weights.self_attn {
        let (mut z, mha) = mha_forward(blk, &h, &h, heads);
        z.add_assign(&h);
        let (y, inv) = layer_norm(&z);
        self_layers.push(LayerCache {
            input: std::mem::replace(&mut h, y.clone()),
            mha,
            ln_y: y,
            ln_inv: inv,
        });
    }
    let mut cross_layers = Vec::with_capacity(weights.cross_attn.len());
    for blk in &weights.cross_attn {
        let (mut z, mha) = mha_forward(blk, &h, fr, heads);
        z.add_assign(&h);
        let (y, inv) = layer_norm(&z);
        cross_layers.push(LayerCache {
            input: std::mem::replace(&mut h, y.clone()),
            mha,
            ln_y: y,
            ln_inv: inv,
        });
    }
    Encoded {
        h,
        self_layers,
        cross_layers,
    }
}

fn check_embeddings(weights: &ModelWeights, fv: &Mat, fr: &Mat) -> Result<()> {
    let d = weights.config.d_model;
    if fv.cols != d || fr.cols != d {
        return Err(Error::shape("embedding width", d, format!("{} / {}", fv.cols, fr.cols)));
    }
    if fv.rows == 0 || fr.rows == 0 {
        return Err(Error::validation("attention needs at least one vehicle and one road token"));
    }
    Ok(())
}

/// Self-attention over vehicles followed by cross-attention to the road.
pub fn attention_forward(weights: &ModelWeights, fv: &Mat, fr: &Mat) -> Result<Mat> {
    check_embeddings(weights, fv, fr)?;
    Ok(encode(weights, fv, fr).h)
}

pub fn attention_forward_traced(weights: &ModelWeights, fv: &Mat, fr: &Mat) -> Result<(Mat, AttentionTrace)> {
    check_embeddings(weights, fv, fr)?;
    let enc = encode(weights, fv, fr);
    let trace = AttentionTrace {
        self_maps: enc.self_layers.iter().map(|l| l.mha.attn.clone()).collect(),
        cross_maps: enc.cross_layers.iter().map(|l| l.mha.attn.clone()).collect(),
    };
    Ok((enc.h, trace))
}

pub(crate) struct ForwardCache {
    input: ModelInput,
    enc: Encoded,
}

/// Raw head outputs: the target's flattened trajectory and one row per vehicle
/// from the auxiliary head.
pub(crate) fn forward(weights: &ModelWeights, input: ModelInput) -> Result<(Vec<f64>, Mat, ForwardCache)> {
    check_input(weights, &input)?;
    let fv = weights.vehicle_embed.forward(&input.vehicles);
    let fr = weights.road_embed.forward(&input.road);
    let enc = encode(weights, &fv, &fr);
    let target_row = Mat::from_vec(1, enc.h.cols, enc.h.row(0).to_vec());
    let pred = weights.out_head.forward(&target_row).data;
    let aux = weights.aux_head.forward(&enc.h);
    Ok((pred, aux, ForwardCache { input, enc }))
}

/// Gradients of a scalar loss given its derivatives w.r.t. the head outputs.
pub(crate) fn backward(weights: &ModelWeights, cache: &ForwardCache, d_pred: &[f64], d_aux: &Mat) -> ModelWeights {
    let mut g = weights.zeros_like();
    let heads = weights.config.heads;
    let h = &cache.enc.h;
    let d = h.cols;

    let mut dh = d_aux.matmul_t(&weights.aux_head.w);
    g.aux_head.w.add_assign(&h.t_matmul(d_aux));
    for (b, s) in g.aux_head.b.iter_mut().zip(d_aux.column_sums()) {
        *b += s;
    }
    {
        let w = &weights.out_head.w;
        let row0 = dh.row_mut(0);
        for (i, acc) in row0.iter_mut().enumerate() {
            *acc += w.row(i).iter().zip(d_pred).map(|(a, b)| a * b).sum::<f64>();
        }
        for i in 0..d {
            let hi = h.at(0, i);
            for (gw, dp) in g.out_head.w.row_mut(i).iter_mut().zip(d_pred) {
                *gw += hi * dp;
            }
        }
        for (b, dp) in g.out_head.b.iter_mut().zip(d_pred) {
            *b += dp;
        }
    }

    let fr = weights.road_embed.forward(&cache.input.road);
    let mut dfr = Mat::zeros(fr.rows, fr.cols);
    for (l, layer) in cache.enc.cross_layers.iter().enumerate().rev() {
        let dz = layer_norm_backward(&layer.ln_y, &layer.ln_inv, &dh);
        let (dxq, dxkv) = mha_backward(
            &weights.cross_attn[l],
            &layer.mha,
            &layer.input,
            &fr,
            &dz,
            heads,
            &mut g.cross_attn[l],
        );
        dh = dz;
        dh.add_assign(&dxq);
        dfr.add_assign(&dxkv);
    }
    for (l, layer) in cache.enc.self_layers.iter().enumerate().rev() {
        let dz = layer_norm_backward(&layer.ln_y, &layer.ln_inv, &dh);
        let (dxq, dxkv) = mha_backward(
            &weights.self_attn[l],
            &layer.mha,
            &layer.input,
            &layer.input,
            &dz,
            heads,
            &mut g.self_attn[l],
        );
        dh = dz;
        dh.add_assign(&dxq);
        dh.add_assign(&dxkv);
    }

    g.vehicle_embed.w.add_assign(&cache.input.vehicles.t_matmul(&dh));
    for (b, s) in g.vehicle_embed.b.iter_mut().zip(dh.column_sums()) {
        *b += s;
    }
    g.road_embed.w.add_assign(&cache.input.road.t_matmul(&dfr));
    for (b, s) in g.road_embed.b.iter_mut().zip(dfr.column_sums()) {
        *b += s;
    }
    g
}

pub fn decode_trajectory(flat: &[f64]) -> PlannedTrajectory {
    PlannedTrajectory {
        frames: flat
            .chunks_exact(OUT_CHANNELS)
            .map(|c| PlannedFrame::from_array([c[0], c[1], c[2], c[3]]))
            .collect(),
    }
}

/// Model output in the target's local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub target: PlannedTrajectory,
    /// One trajectory per vehicle row, target first.
    pub aux: Vec<PlannedTrajectory>,
}

pub fn predict(weights: &ModelWeights, sample: &Sample) -> Result<Prediction> {
    let input = encode_sample(sample, &weights.config)?;
    let (pred, aux, _) = forward(weights, input)?;
    Ok(Prediction {
        target: decode_trajectory(&pred),
        aux: (0..aux.rows).map(|r| decode_trajectory(aux.row(r))).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::RoadGeometry;
    use crate::sample::{build_sample, Snapshot};
    use crate::types::{Lane, StyleLabel, VehicleState};

    fn sample_with(n_neighbors: usize) -> Sample {
        let mut s = Snapshot::new();
        s.insert(1, VehicleState::new(60.0, 0.0, 0.0, 2.5, StyleLabel::Offensive, Lane::Main));
        for i in 0..n_neighbors {
            // alternate ahead in lane and alongside on the ramp
            let v = if i % 2 == 0 {
                VehicleState::new(66.0 + 0.9 * i as f64, 0.1 * i as f64, 0.0, 2.0, StyleLabel::Friendly, Lane::Main)
            } else {
                VehicleState::new(58.0 + 0.3 * i as f64, -3.5, 0.0, 1.5, StyleLabel::Friendly, Lane::Merge)
            };
            s.insert(2 + i as u32, v);
        }
        build_sample(&[s], 1, &RoadGeometry::default()).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_embeddings_and_output() {
        let w = ModelWeights::zeros(ModelConfig::default()).unwrap();
        let (fv, fr) = embed(&w, &sample_with(3)).unwrap();
        assert!(fv.data.iter().chain(&fr.data).all(|v| *v == 0.0));
        let p = predict(&w, &sample_with(3)).unwrap();
        assert!(p.target.frames.iter().all(|f| f.as_array() == [0.0; 4]));
    }

    #[test]
    fn identity_embedding_reproduces_input() {
        let cfg = ModelConfig {
            d_model: D_V * T_HIS,
            heads: 1,
            ..Default::default()
        };
        let mut w = ModelWeights::zeros(cfg).unwrap();
        w.vehicle_embed.w = Mat::identity(D_V * T_HIS);
        let s = sample_with(0);
        let (fv, _) = embed(&w, &s).unwrap();
        let flat: Vec<f64> = s
            .target_history
            .iter()
            .flat_map(|f| f.iter().zip(VEHICLE_SCALE).map(|(v, k)| v / k))
            .collect();
        assert_eq!(fv.row(0), &flat[..]);
    }

    #[test]
    fn embedding_is_linear_without_bias() {
        let w = ModelWeights::init(ModelConfig::default(), 4).unwrap();
        let s = sample_with(2);
        let mut doubled = s.clone();
        for f in doubled.target_history.iter_mut() {
            for v in f.iter_mut() {
                *v *= 2.0;
            }
        }
        for n in doubled.neighbors.iter_mut() {
            for f in n.history.iter_mut() {
                for v in f.iter_mut() {
                    *v *= 2.0;
                }
            }
        }
        let (a, _) = embed(&w, &s).unwrap();
        let (b, _) = embed(&w, &doubled).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((2.0 * x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let cfg = ModelConfig {
            road_points: 7,
            ..Default::default()
        };
        let w = ModelWeights::zeros(cfg).unwrap();
        let err = embed(&w, &sample_with(1)).unwrap_err().to_string();
        assert!(err.contains("expected 7") && err.contains("got 20"), "{err}");
    }

    #[test]
    fn single_token_attention_is_value_path() {
        let cfg = ModelConfig::small(8, 1, 2);
        let w = ModelWeights::init(cfg, 9).unwrap();
        let fv = Mat::from_vec(1, 8, (0..8).map(|i| 0.1 * i as f64 - 0.3).collect());
        let fr = Mat::from_vec(1, 8, (0..8).map(|i| 0.05 * i as f64).collect());
        let (out, trace) = attention_forward_traced(&w, &fv, &fr).unwrap();
        for m in trace.self_maps.iter().chain(&trace.cross_maps).flatten() {
            assert_eq!(m.data, vec![1.0]);
        }
        // LN(x + x Wv Wo), then LN(h + fr Wv Wo)
        let blk = &w.self_attn[0];
        let mut z = fv.matmul(&blk.wv).matmul(&blk.wo);
        z.add_assign(&fv);
        let (h, _) = layer_norm(&z);
        let blk = &w.cross_attn[0];
        let mut z = fr.matmul(&blk.wv).matmul(&blk.wo);
        z.add_assign(&h);
        let (expected, _) = layer_norm(&z);
        for (a, b) in out.data.iter().zip(&expected.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let w = ModelWeights::init(ModelConfig::default(), 2).unwrap();
        let (fv, fr) = embed(&w, &sample_with(6)).unwrap();
        let (_, trace) = attention_forward_traced(&w, &fv, &fr).unwrap();
        for m in trace.self_maps.iter().chain(&trace.cross_maps).flatten() {
            for r in 0..m.rows {
                assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_shape_independent_of_neighbor_count() {
        let w = ModelWeights::init(ModelConfig::default(), 1).unwrap();
        for n in 0..=15 {
            let p = predict(&w, &sample_with(n)).unwrap();
            assert_eq!(p.target.frames.len(), T_FUT);
            assert_eq!(p.aux.len(), 1 + p.aux.len() - 1);
        }
    }

    #[test]
    fn tensor_views_line_up() {
        let mut w = ModelWeights::init(ModelConfig::small(8, 1, 2), 0).unwrap();
        let lens: Vec<usize> = w.tensors().iter().map(|(_, _, d)| d.len()).collect();
        let lens_mut: Vec<usize> = w.tensors_mut().iter().map(|d| d.len()).collect();
        assert_eq!(lens, lens_mut);
        assert_eq!(lens.iter().sum::<usize>(), w.parameter_count());
    }
}
