use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{FeatureRow, LstmModel};
use crate::clock::Ppm;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPolicy {
    pub lr: f64,
    /// Epochs of the initial fit.
    pub n_initial: usize,
    /// Epochs over each batch of newly arrived points.
    pub n_online: usize,
    /// Minutes between online updates (and resynchronizations).
    pub dt_online_min: usize,
    /// Windows per Adam step; gradients are averaged over the batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainPolicy {
    fn default() -> Self {
        Self { lr: 0.001, n_initial: 25, n_online: 6, dt_online_min: 25, batch_size: 16, seed: 0 }
    }
}

impl TrainPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if self.n_initial == 0 || self.n_online == 0 || self.dt_online_min == 0 || self.batch_size == 0 {
            return Err(Error::invalid("n_initial, n_online, dt_online_min and batch_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    /// Mean loss over the training windows before the first epoch.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub samples: usize,
}

/// Rows `i` that end a full window and carry a target.
pub fn window_ends(targets: &[Option<f64>], seq_len: usize) -> Vec<usize> {
    (seq_len.saturating_sub(1)..targets.len()).filter(|&i| targets[i].is_some()).collect()
}

struct Batch {
    x: Vec<Vec<f64>>,
    t: Vec<f64>,
}

impl LstmModel {
    fn prepare(&self, features: &[FeatureRow], targets: &[Option<f64>]) -> Result<Batch> {
        if features.len() != targets.len() {
            return Err(Error::invalid(format!("{} feature rows but {} targets", features.len(), targets.len())));
        }
        let l = self.config.seq_len;
        let ends = window_ends(targets, l);
        let mut x = Vec::with_capacity(ends.len());
        let mut t = Vec::with_capacity(ends.len());
        for i in ends {
            x.push(self.normalize_window(&features[i + 1 - l..=i])?);
            t.push(self.normalize_target(targets[i].expect("filtered")));
        }
        Ok(Batch { x, t })
    }

    fn mean_loss(&self, b: &Batch) -> f64 {
        let s: f64 = b.x.iter().zip(&b.t).map(|(x, t)| (self.forward_normalized(x) - t).powi(2)).sum();
        s / b.t.len() as f64
    }

    fn epoch(&mut self, b: &Batch, policy: &TrainPolicy) {
        let mut order: Vec<usize> = (0..b.t.len()).collect();
        order.shuffle(&mut rng::stream(policy.seed, self.shuffle_counter));
        self.shuffle_counter += 1;
        let mut grad = vec![0.0; self.params.len()];
        for chunk in order.chunks(policy.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &k in chunk {
                let g = self.backward_normalized(&b.x[k], b.t[k]);
                grad.iter_mut().zip(&g.values).for_each(|(a, v)| *a += v);
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            self.adam.update(&mut self.params, &grad, policy.lr);
        }
    }

    /// Fit normalization on the given data (first call only), then run
    /// `n_initial` shuffled epochs of Adam over every full window.
    pub fn train_initial(
        &mut self,
        features: &[FeatureRow],
        targets: &[Option<f64>],
        policy: &TrainPolicy,
    ) -> Result<TrainReport> {
        policy.validate()?;
        if features.len() < self.config.seq_len + 1 || window_ends(targets, self.config.seq_len).is_empty() {
            return Err(Error::invalid(format!(
                "initial training needs at least {} rows with targets",
                self.config.seq_len + 1
            )));
        }
        if !self.fitted {
            self.fit_normalization(features, targets)?;
        }
        let b = self.prepare(features, targets)?;
        let initial_loss = self.mean_loss(&b);
        for _ in 0..policy.n_initial {
            self.epoch(&b, policy);
        }
        Ok(TrainReport { initial_loss, final_loss: self.mean_loss(&b), samples: b.t.len() })
    }

    /// `n_online` epochs over the windows ending at rows that carry a target.
    /// Leading rows without targets only supply history. Returns the number
    /// of windows trained on; zero means nothing changed.
    pub fn online_update(
        &mut self,
        features: &[FeatureRow],
        targets: &[Option<f64>],
        policy: &TrainPolicy,
    ) -> Result<usize> {
        policy.validate()?;
        if !self.fitted {
            return Err(Error::invalid("online update before the initial fit"));
        }
        let b = self.prepare(features, targets)?;
        if b.t.is_empty() {
            return Ok(0);
        }
        for _ in 0..policy.n_online {
            self.epoch(&b, policy);
        }
        Ok(b.t.len())
    }

    /// One prediction per full window: element `k` covers rows
    /// `k..k + seq_len` and predicts the last of them.
    pub fn predict_series(&self, features: &[FeatureRow]) -> Result<Vec<Ppm>> {
        let l = self.config.seq_len;
        if features.len() < l {
            return Err(Error::invalid(format!("horizon of {} rows is shorter than the lag {l}", features.len())));
        }
        features.windows(l).map(|w| self.forward(w)).collect()
    }
}
