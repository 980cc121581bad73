//! Multinomial logistic regression over hashed sparse features, trained with
//! AdamW (decoupled weight decay) on seeded mini-batches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::TrainConfig;
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    classes: usize,
    dim: usize,
    /// Row-major by feature: `weights[feature * classes + class]`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub samples: usize,
    pub steps: usize,
    /// Mean training cross-entropy after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl SoftmaxRegression {
    pub fn new(classes: usize, dim: usize) -> Self {
        SoftmaxRegression { classes, dim, weights: vec![0.0; classes * dim], bias: vec![0.0; classes] }
    }

    pub fn from_parts(classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != classes * dim || bias.len() != classes {
            return Err(Error::InvalidModel("weight buffer does not match classes x dim".into()));
        }
        Ok(SoftmaxRegression { classes, dim, weights, bias })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Class weights of one feature.
    pub fn row(&self, feature: usize) -> &[f64] {
        &self.weights[feature * self.classes..(feature + 1) * self.classes]
    }

    pub fn logits(&self, x: &FeatureVector) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (f, v) in x.iter() {
            for (zc, w) in z.iter_mut().zip(self.row(f)) {
                *zc += v * w;
            }
        }
        z
    }

    /// Mean cross-entropy over `samples`.
    pub fn loss(&self, samples: &[(FeatureVector, usize)]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let total: f64 = samples
            .iter()
            .map(|(x, y)| {
                let z = self.logits(x);
                log_sum_exp(&z) - z[*y]
            })
            .sum();
        total / samples.len() as f64
    }

    /// Dense gradient of [`SoftmaxRegression::loss`] with respect to the
    /// weights and the bias.
    pub fn gradient(&self, samples: &[(FeatureVector, usize)]) -> (Vec<f64>, Vec<f64>) {
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.classes];
        let mut touched = Vec::new();
        self.accumulate(samples.iter(), samples.len(), &mut gw, &mut gb, &mut touched);
        (gw, gb)
    }

    fn accumulate<'a>(
        &self,
        batch: impl Iterator<Item = &'a (FeatureVector, usize)>,
        batch_len: usize,
        gw: &mut [f64],
        gb: &mut [f64],
        touched: &mut Vec<u32>,
    ) {
        let scale = 1.0 / batch_len.max(1) as f64;
        let c = self.classes;
        for (x, y) in batch {
            let z = self.logits(x);
            let lse = log_sum_exp(&z);
            let dz: Vec<f64> = z
                .iter()
                .enumerate()
                .map(|(k, zk)| ((zk - lse).exp() - if k == *y { 1.0 } else { 0.0 }) * scale)
                .collect();
            for (gbk, d) in gb.iter_mut().zip(&dz) {
                *gbk += d;
            }
            for (f, v) in x.iter() {
                touched.push(f as u32);
                for (g, d) in gw[f * c..(f + 1) * c].iter_mut().zip(&dz) {
                    *g += v * d;
                }
            }
        }
    }

    /// Trains in place. Untouched features keep zero weights and zero
    /// optimizer moments, so updates only visit features seen so far; this is
    /// exactly equivalent to dense AdamW.
    pub fn fit(&mut self, samples: &[(FeatureVector, usize)], config: &TrainConfig) -> Result<TrainReport> {
        config.validate()?;
        if samples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if let Some((_, y)) = samples.iter().find(|(_, y)| *y >= self.classes) {
            return Err(Error::InvalidConfig(format!("class {y} outside alphabet of {}", self.classes)));
        }
        let c = self.classes;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut m_w = vec![0.0; self.weights.len()];
        let mut v_w = vec![0.0; self.weights.len()];
        let mut m_b = vec![0.0; c];
        let mut v_b = vec![0.0; c];
        let mut g_w = vec![0.0; self.weights.len()];
        let mut g_b = vec![0.0; c];
        let mut seen = vec![false; self.dim];
        let mut active: Vec<usize> = Vec::new();
        let mut touched = Vec::new();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut report = TrainReport { samples: samples.len(), ..Default::default() };
        let lr = config.learning_rate;
        let decay = 1.0 - lr * config.weight_decay;

        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size) {
                touched.clear();
                g_b.iter_mut().for_each(|g| *g = 0.0);
                self.accumulate(chunk.iter().map(|&i| &samples[i]), chunk.len(), &mut g_w, &mut g_b, &mut touched);
                for &f in &touched {
                    let f = f as usize;
                    if !seen[f] {
                        seen[f] = true;
                        active.push(f);
                    }
                }
                report.steps += 1;
                let t = report.steps as i32;
                let bc1 = 1.0 - BETA1.powi(t);
                let bc2 = 1.0 - BETA2.powi(t);

                for &f in &active {
                    for i in f * c..(f + 1) * c {
                        let g = g_w[i];
                        m_w[i] = BETA1 * m_w[i] + (1.0 - BETA1) * g;
                        v_w[i] = BETA2 * v_w[i] + (1.0 - BETA2) * g * g;
                        self.weights[i] *= decay;
                        self.weights[i] -= lr * (m_w[i] / bc1) / ((v_w[i] / bc2).sqrt() + EPSILON);
                    }
                }
                for k in 0..c {
                    let g = g_b[k];
                    m_b[k] = BETA1 * m_b[k] + (1.0 - BETA1) * g;
                    v_b[k] = BETA2 * v_b[k] + (1.0 - BETA2) * g * g;
                    self.bias[k] -= lr * (m_b[k] / bc1) / ((v_b[k] / bc2).sqrt() + EPSILON);
                }
                for &f in &touched {
                    let f = f as usize;
                    g_w[f * c..(f + 1) * c].iter_mut().for_each(|g| *g = 0.0);
                }
            }
            report.epoch_losses.push(self.loss(samples));
        }
        Ok(report)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_problem(rng: &mut ChaCha8Rng, dim: usize, classes: usize, n: usize) -> (SoftmaxRegression, Vec<(FeatureVector, usize)>) {
        let weights = (0..dim * classes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias = (0..classes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = SoftmaxRegression::from_parts(classes, dim, weights, bias).unwrap();
        let samples = (0..n)
            .map(|_| {
                let pairs = (0..rng.gen_range(1..5)).map(|_| (rng.gen_range(0..dim as u32), rng.gen_range(0.5..2.0))).collect();
                (FeatureVector::new(pairs), rng.gen_range(0..classes))
            })
            .collect();
        (model, samples)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (model, samples) = random_problem(&mut rng, 12, 4, 6);
            let (gw, gb) = model.gradient(&samples);
            let h = 1e-5;
            for (i, &g) in gw.iter().enumerate() {
                let mut plus = model.clone();
                plus.weights_mut()[i] += h;
                let mut minus = model.clone();
                minus.weights_mut()[i] -= h;
                let fd = (plus.loss(&samples) - minus.loss(&samples)) / (2.0 * h);
                let denom = fd.abs().max(g.abs()).max(1e-8);
                assert!((fd - g).abs() / denom < 1e-4 || (fd - g).abs() < 1e-9, "weight {i}: {fd} vs {g}");
            }
            for (k, &g) in gb.iter().enumerate() {
                let mut plus = model.clone();
                plus.bias_mut()[k] += h;
                let mut minus = model.clone();
                minus.bias_mut()[k] -= h;
                let fd = (plus.loss(&samples) - minus.loss(&samples)) / (2.0 * h);
                assert!((fd - g).abs() / fd.abs().max(1e-8) < 1e-4);
            }
        }
    }

    #[test]
    fn separable_data_is_learned() {
        let samples: Vec<_> = (0..20)
            .map(|i| (FeatureVector::new(vec![(i % 2, 1.0), (10 + i, 1.0)]), (i % 2) as usize))
            .collect();
        let mut model = SoftmaxRegression::new(2, 64);
        let config = TrainConfig { learning_rate: 0.1, batch_size: 4, epochs: 20, ..Default::default() };
        let report = model.fit(&samples, &config).unwrap();
        assert!(samples.iter().all(|(x, y)| crate::types::argmax(&model.logits(x)) == *y));
        assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
        assert_eq!(report.steps, 20 * 5);
    }

    #[test]
    fn empty_training_set() {
        let mut model = SoftmaxRegression::new(2, 8);
        assert!(matches!(model.fit(&[], &TrainConfig::default()), Err(Error::EmptyTrainingSet)));
    }
}
