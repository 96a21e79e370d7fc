//! Full-covariance Gaussian mixture over 2-D feature points, fitted by EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2 = [f64; 2];
pub type Cov2 = [[f64; 2]; 2];

/// Added to covariance diagonals after every M-step.
pub const COV_REGULARIZATION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    /// (avg speed m/s, avg gap m) per component.
    pub means: Vec<Point2>,
    pub covariances: Vec<Cov2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            k: 3,
            max_iter: 200,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihood: f64,
    /// Log-likelihood of the parameters entering each EM iteration, followed
    /// by that of the returned model.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn det(c: &Cov2) -> f64 {
    c[0][0] * c[1][1] - c[0][1] * c[1][0]
}

fn log_gaussian(x: Point2, mean: Point2, c: &Cov2) -> f64 {
    let d = det(c);
    let dx = [x[0] - mean[0], x[1] - mean[1]];
    // inverse of a 2x2 symmetric matrix
    let q = (c[1][1] * dx[0] * dx[0] - 2.0 * c[0][1] * dx[0] * dx[1] + c[0][0] * dx[1] * dx[1]) / d;
    -0.5 * q - 0.5 * d.ln() - (2.0 * std::f64::consts::PI).ln()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GmmModel {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0
            || self.weights.len() != self.k
            || self.means.len() != self.k
            || self.covariances.len() != self.k
        {
            return Err(Error::validation("gmm component arrays must all have length k >= 1"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::validation(format!("gmm weights must form a simplex, sum = {sum}")));
        }
        for c in &self.covariances {
            if !(det(c) > 0.0) || c[0][0] <= 0.0 || (c[0][1] - c[1][0]).abs() > 1e-12 {
                return Err(Error::validation("gmm covariance must be symmetric positive-definite"));
            }
        }
        Ok(())
    }

    fn weighted_log_densities(&self, x: Point2) -> Vec<f64> {
        (0..self.k)
            .map(|j| self.weights[j].ln() + log_gaussian(x, self.means[j], &self.covariances[j]))
            .collect()
    }

    /// Posterior component probabilities for one point.
    pub fn responsibilities(&self, x: Point2) -> Vec<f64> {
        let l = self.weighted_log_densities(x);
        let z = log_sum_exp(&l);
        l.iter().map(|v| (v - z).exp()).collect()
    }

    pub fn log_likelihood(&self, points: &[Point2]) -> f64 {
        points.iter().map(|p| log_sum_exp(&self.weighted_log_densities(*p))).sum()
    }

    /// Index of the maximum-responsibility component.
    pub fn predict(&self, x: Point2) -> usize {
        let l = self.weighted_log_densities(x);
        l.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if *v > best.1 { (i, *v) } else { best })
            .0
    }
}

fn sq_dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn kmeans_pp(points: &[Point2], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point2> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(*p, *c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            centers.push(points[rng.random_range(0..points.len())]);
            continue;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        centers.push(points[pick]);
    }
    centers
}

fn m_step(points: &[Point2], resp: &[Vec<f64>], k: usize) -> GmmModel {
    let n = points.len() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = resp.iter().map(|r| r[j]).sum();
        let nk_safe = nk.max(f64::MIN_POSITIVE);
        let mut m = [0.0; 2];
        for (p, r) in points.iter().zip(resp) {
            m[0] += r[j] * p[0];
            m[1] += r[j] * p[1];
        }
        m = [m[0] / nk_safe, m[1] / nk_safe];
        let mut c = [[0.0; 2]; 2];
        for (p, r) in points.iter().zip(resp) {
            let d = [p[0] - m[0], p[1] - m[1]];
            c[0][0] += r[j] * d[0] * d[0];
            c[0][1] += r[j] * d[0] * d[1];
            c[1][1] += r[j] * d[1] * d[1];
        }
        c[0][0] = c[0][0] / nk_safe + COV_REGULARIZATION;
        c[1][1] = c[1][1] / nk_safe + COV_REGULARIZATION;
        c[0][1] /= nk_safe;
        c[1][0] = c[0][1];
        weights.push(nk / n);
        means.push(m);
        covariances.push(c);
    }
    // Keep the simplex exact and every component alive.
    let floor = 1e-12;
    for w in weights.iter_mut() {
        *w = w.max(floor);
    }
    let s: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= s;
    }
    GmmModel {
        k,
        weights,
        means,
        covariances,
    }
}

/// Expectation-maximisation with k-means++ seeding.
pub fn fit_gmm(points: &[Point2], cfg: &GmmConfig) -> Result<GmmFit> {
    let k = cfg.k;
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::validation(format!(
            "need at least k = {k} points, got {}",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("gmm input contains non-finite values"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers = kmeans_pp(points, k, &mut rng);

    // hard assignment to the seeded centers gives the starting responsibilities
    let init: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let best = (0..k)
                .min_by(|a, b| sq_dist(*p, centers[*a]).total_cmp(&sq_dist(*p, centers[*b])))
                .unwrap_or(0);
            (0..k).map(|j| if j == best { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    let mut model = m_step(points, &init, k);

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let mut ll = 0.0;
        let resp: Vec<Vec<f64>> = points
            .iter()
            .map(|p| {
                let l = model.weighted_log_densities(*p);
                let z = log_sum_exp(&l);
                ll += z;
                l.iter().map(|v| (v - z).exp()).collect()
            })
            .collect();
        if let Some(prev) = history.last() {
            if ll - prev < cfg.tol {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        model = m_step(points, &resp, k);
        iterations += 1;
    }
    let log_likelihood = model.log_likelihood(points);
    if !converged {
        history.push(log_likelihood);
    }
    Ok(GmmFit {
        model,
        log_likelihood,
        history,
        iterations,
        converged,
    })
}
