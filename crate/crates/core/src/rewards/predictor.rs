//! Shared-bottom CTR/CTCVR predictor.
//!
//! One tanh hidden layer feeds two logistic heads. The CTCVR estimate is the
//! product of the two heads, so it never exceeds the CTR estimate. Training
//! minimizes, over the entire impression space, the binary cross-entropy of
//! the CTR head against clicks plus that of the product against conversions.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PredictorConfig;
use crate::env::{dot, read_json, sigmoid, write_json, CtcvrScorer, LabeledRow, OracleDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtcvrPredictor {
    pub input_dim: usize,
    pub hidden: usize,
    /// Training seed (informational).
    pub seed: u64,
    /// `hidden x input_dim`, row-major.
    pub w_hidden: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub w_ctr: Vec<f64>,
    pub b_ctr: f64,
    pub w_cvr: Vec<f64>,
    pub b_cvr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorOutput {
    pub ctr: f64,
    pub cvr: f64,
    pub ctcvr: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Entire-space loss of one row given the two head logits.
fn row_loss(z_ctr: f64, z_cvr: f64, click: bool, conversion: bool) -> f64 {
    let log_p1 = -softplus(-z_ctr);
    let log_1m_p1 = -softplus(z_ctr);
    let log_q = log_p1 - softplus(-z_cvr);
    let q = log_q.exp();
    let ctr_term = if click { -log_p1 } else { -log_1m_p1 };
    let cvr_term = if conversion { -log_q } else { -(-q).ln_1p() };
    ctr_term + cvr_term
}

impl CtcvrPredictor {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            seed: 0,
            w_hidden: vec![0.0; hidden * input_dim],
            b_hidden: vec![0.0; hidden],
            w_ctr: vec![0.0; hidden],
            b_ctr: 0.0,
            w_cvr: vec![0.0; hidden],
            b_cvr: 0.0,
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        let a = (6.0 / (input_dim + hidden) as f64).sqrt();
        p.w_hidden.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
        let b = (6.0 / (hidden + 1) as f64).sqrt();
        p.w_ctr.iter_mut().for_each(|w| *w = rng.random_range(-b..b));
        p.w_cvr.iter_mut().for_each(|w| *w = rng.random_range(-b..b));
        p
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: features.len(),
            });
        }
        Ok(())
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|j| {
                let row = &self.w_hidden[j * self.input_dim..(j + 1) * self.input_dim];
                (dot(row, x) + self.b_hidden[j]).tanh()
            })
            .collect()
    }

    fn logits(&self, h: &[f64]) -> (f64, f64) {
        (dot(&self.w_ctr, h) + self.b_ctr, dot(&self.w_cvr, h) + self.b_cvr)
    }

    pub fn forward(&self, features: &[f64]) -> Result<PredictorOutput> {
        self.check_dim(features)?;
        let h = self.hidden_activations(features);
        let (z1, z2) = self.logits(&h);
        let ctr = sigmoid(z1);
        let cvr = sigmoid(z2);
        Ok(PredictorOutput {
            ctr,
            cvr,
            ctcvr: ctr * cvr,
        })
    }

    pub fn predict_ctcvr(&self, features: &[f64]) -> Result<f64> {
        Ok(self.forward(features)?.ctcvr)
    }

    pub fn num_params(&self) -> usize {
        self.w_hidden.len() + self.b_hidden.len() + 2 * self.hidden + 2
    }

    /// Parameters flattened as `[w_hidden, b_hidden, w_ctr, b_ctr, w_cvr, b_cvr]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend(&self.w_hidden);
        v.extend(&self.b_hidden);
        v.extend(&self.w_ctr);
        v.push(self.b_ctr);
        v.extend(&self.w_cvr);
        v.push(self.b_cvr);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let (wh, rest) = flat.split_at(self.w_hidden.len());
        let (bh, rest) = rest.split_at(self.hidden);
        let (wc, rest) = rest.split_at(self.hidden);
        let (bc, rest) = rest.split_at(1);
        let (wv, bv) = rest.split_at(self.hidden);
        self.w_hidden.copy_from_slice(wh);
        self.b_hidden.copy_from_slice(bh);
        self.w_ctr.copy_from_slice(wc);
        self.b_ctr = bc[0];
        self.w_cvr.copy_from_slice(wv);
        self.b_cvr = bv[0];
    }

    /// Mean entire-space loss over `rows`.
    pub fn loss(&self, rows: &[LabeledRow]) -> Result<f64> {
        let mut total = 0.0;
        for row in rows {
            self.check_dim(&row.features)?;
            let h = self.hidden_activations(&row.features);
            let (z1, z2) = self.logits(&h);
            total += row_loss(z1, z2, row.click, row.conversion);
        }
        Ok(total / rows.len().max(1) as f64)
    }

    /// Mean loss over `rows` and its gradient in [`Self::to_flat`] layout.
    pub fn loss_and_grad(&self, rows: &[LabeledRow]) -> Result<(f64, Vec<f64>)> {
        let (d, hn) = (self.input_dim, self.hidden);
        let mut grad = vec![0.0; self.num_params()];
        let off_bh = hn * d;
        let off_wc = off_bh + hn;
        let off_bc = off_wc + hn;
        let off_wv = off_bc + 1;
        let off_bv = off_wv + hn;
        let mut total = 0.0;
        for row in rows {
            self.check_dim(&row.features)?;
            let x = &row.features;
            let h = self.hidden_activations(x);
            let (z1, z2) = self.logits(&h);
            total += row_loss(z1, z2, row.click, row.conversion);

            let p1 = sigmoid(z1);
            let p2 = sigmoid(z2);
            let q = p1 * p2;
            let c = f64::from(u8::from(row.click));
            let y = f64::from(u8::from(row.conversion));
            // d/dz of BCE(q, y) where log q = log p1 + log p2
            let shared = (y - q) / (1.0 - q);
            let dz1 = (p1 - c) - (1.0 - p1) * shared;
            let dz2 = -(1.0 - p2) * shared;

            for j in 0..hn {
                grad[off_wc + j] += dz1 * h[j];
                grad[off_wv + j] += dz2 * h[j];
                let dh = dz1 * self.w_ctr[j] + dz2 * self.w_cvr[j];
                let dpre = dh * (1.0 - h[j] * h[j]);
                grad[off_bh + j] += dpre;
                for (i, xi) in x.iter().enumerate() {
                    grad[j * d + i] += dpre * xi;
                }
            }
            grad[off_bc] += dz1;
            grad[off_bv] += dz2;
        }
        let n = rows.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((total / n, grad))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

impl CtcvrScorer for CtcvrPredictor {
    fn score(&self, features: &[f64]) -> Result<f64> {
        self.predict_ctcvr(features)
    }
}

/// Fits a predictor with minibatch Adam on shuffled rows.
pub fn train_ctcvr_predictor(
    dataset: &OracleDataset,
    config: &PredictorConfig,
    seed: u64,
) -> Result<CtcvrPredictor> {
    let first = dataset
        .rows
        .first()
        .ok_or_else(|| Error::Precondition("predictor training needs a nonempty dataset".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = CtcvrPredictor::init(first.features.len(), config.hidden, &mut rng);
    model.seed = seed;

    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut params = model.to_flat();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut t = 0i32;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset.rows[i].clone()));
            model.set_flat(&params);
            let (loss, grad) = model.loss_and_grad(&batch)?;
            t += 1;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    step: t as usize,
                    loss,
                });
            }
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            for k in 0..params.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
                params[k] -= config.learning_rate * (m[k] / bc1) / ((v[k] / bc2).sqrt() + eps);
            }
        }
    }
    model.set_flat(&params);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_predict_half_and_quarter() {
        let p = CtcvrPredictor::zeros(6, 4);
        let out = p.forward(&[0.3, -0.2, 1.0, 0.0, 0.5, 0.9]).unwrap();
        assert_eq!(out.ctr, 0.5);
        assert_eq!(out.ctcvr, 0.25);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = CtcvrPredictor::zeros(6, 4);
        assert!(matches!(
            p.predict_ctcvr(&[0.0; 5]),
            Err(Error::Dimension { expected: 6, got: 5 })
        ));
    }

    #[test]
    fn flat_layout_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = CtcvrPredictor::init(6, 5, &mut rng);
        let mut q = CtcvrPredictor::zeros(6, 5);
        q.set_flat(&p.to_flat());
        assert_eq!(q, p);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let err = train_ctcvr_predictor(&OracleDataset::default(), &PredictorConfig::default(), 0);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn all_negative_clicks_drive_ctr_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = (0..2000)
            .map(|_| LabeledRow {
                features: (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
                click: false,
                conversion: false,
            })
            .collect();
        let ds = OracleDataset { rows };
        let cfg = PredictorConfig {
            epochs: 10,
            learning_rate: 0.02,
            ..PredictorConfig::default()
        };
        let model = train_ctcvr_predictor(&ds, &cfg, 3).unwrap();
        for row in ds.rows.iter().take(200) {
            assert!(model.forward(&row.features).unwrap().ctr < 0.05);
        }
    }

    #[test]
    fn predictor_checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = CtcvrPredictor::init(6, 3, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictor.json");
        p.save(&path).unwrap();
        assert_eq!(CtcvrPredictor::load(&path).unwrap(), p);
    }
}
