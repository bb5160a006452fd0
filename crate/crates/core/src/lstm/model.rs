use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use crate::clock::Ppm;
use crate::error::{Error, Result};
use crate::estimate::SECONDS_PER_DAY;
use crate::rng;

/// Raw per-minute predictor inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub temperature_c: f64,
    pub seconds_of_day: f64,
}

/// How the time of day enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeEncoding {
    /// Seconds since midnight scaled to `[0, 1)`.
    #[default]
    Linear,
    /// `sin` and `cos` of the day angle.
    Cyclic,
}

impl TimeEncoding {
    pub fn input_size(self) -> usize {
        match self {
            TimeEncoding::Linear => 2,
            TimeEncoding::Cyclic => 3,
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            TimeEncoding::Linear => 0,
            TimeEncoding::Cyclic => 1,
        }
    }

    pub(crate) fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(TimeEncoding::Linear),
            1 => Some(TimeEncoding::Cyclic),
            _ => None,
        }
    }

    fn encode(self, row: &FeatureRow, out: &mut [f64]) {
        out[0] = row.temperature_c;
        let day = row.seconds_of_day / SECONDS_PER_DAY;
        match self {
            TimeEncoding::Linear => out[1] = day,
            TimeEncoding::Cyclic => {
                let a = 2.0 * std::f64::consts::PI * day;
                out[1] = a.sin();
                out[2] = a.cos();
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub seq_len: usize,
    pub time_encoding: TimeEncoding,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden_size: 24, seq_len: 5, time_encoding: TimeEncoding::Linear }
    }
}

/// Per-input affine normalization plus the target's, frozen at the first fit.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Normalization {
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Normalization {
    fn identity(n: usize) -> Self {
        Self { feat_mean: vec![0.0; n], feat_std: vec![1.0; n], target_mean: 0.0, target_std: 1.0 }
    }
}

/// Offsets of each tensor in the flat parameter vector.
///
/// `W` is `4H × (I + H)` row-major with gate blocks in the order input,
/// forget, cell, output; its first `I` columns act on the input and the rest
/// on the previous hidden state. Then the `4H` gate biases, the `H` head
/// weights and the head bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub input: usize,
    pub hidden: usize,
}

impl Layout {
    pub fn cols(&self) -> usize {
        self.input + self.hidden
    }
    pub fn w(&self) -> usize {
        0
    }
    pub fn b(&self) -> usize {
        4 * self.hidden * self.cols()
    }
    pub fn head_w(&self) -> usize {
        self.b() + 4 * self.hidden
    }
    pub fn head_b(&self) -> usize {
        self.head_w() + self.hidden
    }
    pub fn len(&self) -> usize {
        self.head_b() + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Loss and parameter gradient for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// Squared error in normalized target units.
    pub loss: f64,
    /// Same layout as [`LstmModel::params`].
    pub values: Vec<f64>,
}

/// Single-layer LSTM regressor with a linear head on the last hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub(crate) config: ModelConfig,
    pub(crate) layout: Layout,
    pub(crate) params: Vec<f64>,
    pub(crate) norm: Normalization,
    pub(crate) fitted: bool,
    pub(crate) adam: Adam,
    pub(crate) shuffle_counter: u64,
}

struct StepCache {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>, // i, f, g, o after activation
    c: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmModel {
    /// Fresh model: weights uniform in ±1/√H, forget-gate bias +1, the
    /// rest zero, identity normalization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.hidden_size == 0 || config.seq_len == 0 {
            return Err(Error::invalid("hidden_size and seq_len must be at least 1"));
        }
        let layout = Layout { input: config.time_encoding.input_size(), hidden: config.hidden_size };
        let h = config.hidden_size;
        let bound = 1.0 / (h as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut r = rng::stream(seed, 0x1571);
        let mut params = vec![0.0; layout.len()];
        for p in &mut params[..layout.b()] {
            *p = r.sample(dist);
        }
        for p in &mut params[layout.b() + h..layout.b() + 2 * h] {
            *p = 1.0;
        }
        for p in &mut params[layout.head_w()..layout.head_b()] {
            *p = r.sample(dist);
        }
        let n = layout.len();
        Ok(Self {
            config,
            layout,
            params,
            norm: Normalization::identity(layout.input),
            fitted: false,
            adam: Adam::new(n),
            shuffle_counter: 0,
        })
    }

    pub fn config(&self) -> ModelConfig {
        self.config
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Direct parameter access, for hand-built models and tests.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn adam_step(&self) -> u64 {
        self.adam.step
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().chain(&self.adam.m).chain(&self.adam.v).all(|v| v.is_finite())
    }

    /// Fit feature and target normalization. Allowed once.
    pub fn fit_normalization(&mut self, features: &[FeatureRow], targets: &[Option<f64>]) -> Result<()> {
        if self.fitted {
            return Err(Error::invalid("normalization statistics are frozen after the initial fit"));
        }
        if features.is_empty() {
            return Err(Error::invalid("cannot fit normalization on no data"));
        }
        let ni = self.layout.input;
        let mut sum = vec![0.0; ni];
        let mut sq = vec![0.0; ni];
        let mut x = vec![0.0; ni];
        for row in features {
            self.config.time_encoding.encode(row, &mut x);
            for k in 0..ni {
                sum[k] += x[k];
                sq[k] += x[k] * x[k];
            }
        }
        let n = features.len() as f64;
        let (mean, std) = (0..ni)
            .map(|k| {
                let m = sum[k] / n;
                (m, floor_std((sq[k] / n - m * m).max(0.0).sqrt()))
            })
            .unzip();
        let t: Vec<f64> = targets.iter().flatten().copied().collect();
        if t.is_empty() {
            return Err(Error::invalid("cannot fit normalization without targets"));
        }
        let tm = t.iter().sum::<f64>() / t.len() as f64;
        let tv = t.iter().map(|v| (v - tm).powi(2)).sum::<f64>() / t.len() as f64;
        self.norm = Normalization { feat_mean: mean, feat_std: std, target_mean: tm, target_std: floor_std(tv.sqrt()) };
        self.fitted = true;
        Ok(())
    }

    /// Encoded and normalized inputs of a window, `seq_len × input` row-major.
    pub fn normalize_window(&self, window: &[FeatureRow]) -> Result<Vec<f64>> {
        if window.len() != self.config.seq_len {
            return Err(Error::invalid(format!(
                "window has {} rows, model expects {}",
                window.len(),
                self.config.seq_len
            )));
        }
        let ni = self.layout.input;
        let mut x = vec![0.0; window.len() * ni];
        for (row, chunk) in window.iter().zip(x.chunks_mut(ni)) {
            self.config.time_encoding.encode(row, chunk);
            for ((v, m), s) in chunk.iter_mut().zip(&self.norm.feat_mean).zip(&self.norm.feat_std) {
                *v = (*v - m) / s;
            }
        }
        Ok(x)
    }

    pub(crate) fn normalize_target(&self, t: f64) -> f64 {
        (t - self.norm.target_mean) / self.norm.target_std
    }

    fn denormalize(&self, y: f64) -> f64 {
        y * self.norm.target_std + self.norm.target_mean
    }

    fn run(&self, x: &[f64], cache: Option<&mut Vec<StepCache>>) -> (f64, Vec<f64>) {
        let Layout { input: ni, hidden: h } = self.layout;
        let cols = self.layout.cols();
        let p = &self.params;
        let (w, b) = (&p[..self.layout.b()], &p[self.layout.b()..self.layout.head_w()]);
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut z = vec![0.0; 4 * h];
        let mut xh = vec![0.0; cols];
        let mut cache = cache;
        for xt in x.chunks(ni) {
            xh[..ni].copy_from_slice(xt);
            xh[ni..].copy_from_slice(&hs);
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &w[r * cols..(r + 1) * cols];
                *zr = b[r] + row.iter().zip(&xh).map(|(a, v)| a * v).sum::<f64>();
            }
            let mut gates = vec![0.0; 4 * h];
            let c_prev = cs.clone();
            for j in 0..h {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[h + j]);
                let g = z[2 * h + j].tanh();
                let o = sigmoid(z[3 * h + j]);
                cs[j] = f * cs[j] + i * g;
                hs[j] = o * cs[j].tanh();
                gates[j] = i;
                gates[h + j] = f;
                gates[2 * h + j] = g;
                gates[3 * h + j] = o;
            }
            if let Some(c) = cache.as_deref_mut() {
                c.push(StepCache { xh: xh.clone(), c_prev, gates, c: cs.clone() });
            }
        }
        let head = &p[self.layout.head_w()..self.layout.head_b()];
        let y = p[self.layout.head_b()] + head.iter().zip(&hs).map(|(a, v)| a * v).sum::<f64>();
        (y, hs)
    }

    /// Network output for already-normalized inputs, in normalized units.
    pub fn forward_normalized(&self, x: &[f64]) -> f64 {
        self.run(x, None).0
    }

    /// Predicted ppm for one window of raw feature rows.
    pub fn forward(&self, window: &[FeatureRow]) -> Result<Ppm> {
        let x = self.normalize_window(window)?;
        let y = self.denormalize(self.forward_normalized(&x));
        Ppm::new(y).map_err(|e| Error::invalid(format!("prediction out of range: {e}")))
    }

    /// Squared-error loss and its gradient by backpropagation through time,
    /// for normalized inputs and a normalized target.
    pub fn backward_normalized(&self, x: &[f64], target: f64) -> Gradient {
        let Layout { hidden: h, .. } = self.layout;
        let cols = self.layout.cols();
        let mut steps = Vec::with_capacity(self.config.seq_len);
        let (y, h_last) = self.run(x, Some(&mut steps));
        let err = y - target;
        let dy = 2.0 * err;

        let mut g = vec![0.0; self.layout.len()];
        let (ow, ob) = (self.layout.head_w(), self.layout.head_b());
        for j in 0..h {
            g[ow + j] = dy * h_last[j];
        }
        g[ob] = dy;
        let w = &self.params[..self.layout.b()];
        let mut dh: Vec<f64> = self.params[ow..ob].iter().map(|v| dy * v).collect();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let bo = self.layout.b();
        for s in steps.iter().rev() {
            for j in 0..h {
                let (i, f, gg, o) = (s.gates[j], s.gates[h + j], s.gates[2 * h + j], s.gates[3 * h + j]);
                let tc = s.c[j].tanh();
                let d_o = dh[j] * tc;
                dc[j] += dh[j] * o * (1.0 - tc * tc);
                dz[j] = dc[j] * gg * i * (1.0 - i);
                dz[h + j] = dc[j] * s.c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc[j] * i * (1.0 - gg * gg);
                dz[3 * h + j] = d_o * o * (1.0 - o);
                dc[j] *= f;
            }
            let ni = self.layout.input;
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                let row = r * cols;
                for (k, &v) in s.xh.iter().enumerate() {
                    g[row + k] += dzr * v;
                }
                g[bo + r] += dzr;
                for j in 0..h {
                    dh[j] += w[row + ni + j] * dzr;
                }
            }
        }
        Gradient { loss: err * err, values: g }
    }

    /// Loss and gradient for one window of raw rows and a ppm target.
    pub fn backward(&self, window: &[FeatureRow], target: Ppm) -> Result<Gradient> {
        let x = self.normalize_window(window)?;
        Ok(self.backward_normalized(&x, self.normalize_target(target.value())))
    }
}

fn floor_std(s: f64) -> f64 {
    if s > 1e-12 {
        s
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> Vec<FeatureRow> {
        (0..n)
            .map(|i| FeatureRow { temperature_c: 10.0 + (i as f64 * 0.7).sin() * 5.0, seconds_of_day: 60.0 * i as f64 })
            .collect()
    }

    #[test]
    fn parameter_count() {
        let m = LstmModel::new(ModelConfig::default(), 0).unwrap();
        assert_eq!(m.params().len(), 4 * 24 * 26 + 4 * 24 + 24 + 1);
        let l = m.layout();
        assert!(m.params()[l.b() + 24..l.b() + 48].iter().all(|&v| v == 1.0));
        assert!(m.params()[..l.b()].iter().all(|v| v.abs() <= 1.0 / 24f64.sqrt()));
    }

    #[test]
    fn zero_weights_predict_bias() {
        let mut m = LstmModel::new(ModelConfig::default(), 1).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let hb = m.layout().head_b();
        m.params_mut()[hb] = 0.123;
        assert_eq!(m.forward(&rows(5)).unwrap().value(), 0.123);
    }

    #[test]
    fn forward_is_pure() {
        let m = LstmModel::new(ModelConfig::default(), 2).unwrap();
        let w = rows(5);
        assert_eq!(m.forward(&w).unwrap(), m.forward(&w.clone()).unwrap());
    }

    #[test]
    fn wrong_window_shape() {
        let m = LstmModel::new(ModelConfig::default(), 3).unwrap();
        assert!(matches!(m.forward(&rows(4)), Err(Error::InvalidArgument(_))));
        assert!(m.backward(&rows(6), Ppm::ZERO).is_err());
    }

    #[test]
    fn hand_computed_two_step_model() {
        // H = 2, I = 2, L = 2; every weight set by hand, reference recurrence
        // written out independently below
        let cfg = ModelConfig { hidden_size: 2, seq_len: 2, time_encoding: TimeEncoding::Linear };
        let mut m = LstmModel::new(cfg, 0).unwrap();
        let p: Vec<f64> = (0..m.params().len()).map(|k| ((k as f64) * 0.37).sin() * 0.5).collect();
        m.params_mut().copy_from_slice(&p);
        let x = [0.3, -0.2, 0.5, 0.1];

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let wrow = |r: usize| &p[r * 4..r * 4 + 4];
        let b = |r: usize| p[32 + r];
        let (mut h, mut c) = ([0.0f64; 2], [0.0f64; 2]);
        for t in 0..2 {
            let xh = [x[2 * t], x[2 * t + 1], h[0], h[1]];
            let pre = |r: usize| b(r) + wrow(r).iter().zip(&xh).map(|(a, v)| a * v).sum::<f64>();
            let mut nh = [0.0; 2];
            for j in 0..2 {
                let i = sig(pre(j));
                let f = sig(pre(2 + j));
                let g = pre(4 + j).tanh();
                let o = sig(pre(6 + j));
                c[j] = f * c[j] + i * g;
                nh[j] = o * c[j].tanh();
            }
            h = nh;
        }
        let want = p[42] + p[40] * h[0] + p[41] * h[1];
        assert!((m.forward_normalized(&x) - want).abs() < 1e-15);
    }

    fn random_model(seed: u64) -> (LstmModel, Vec<f64>) {
        let cfg = ModelConfig { hidden_size: 4, seq_len: 3, time_encoding: TimeEncoding::Linear };
        let mut m = LstmModel::new(cfg, seed).unwrap();
        // widen the weights so every gate is far from its linear regime
        let mut r = rng::stream(seed, 9);
        for p in m.params_mut() {
            *p = r.random_range(-1.0..1.0);
        }
        let x: Vec<f64> = (0..6).map(|_| r.random_range(-2.0..2.0)).collect();
        (m, x)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..3 {
            let (m, x) = random_model(seed);
            let target = 0.4;
            let g = m.backward_normalized(&x, target);
            let eps = 1e-5;
            let mut worst: f64 = 0.0;
            for k in 0..m.params().len() {
                let mut a = m.clone();
                a.params_mut()[k] += eps;
                let mut b = m.clone();
                b.params_mut()[k] -= eps;
                let la = (a.forward_normalized(&x) - target).powi(2);
                let lb = (b.forward_normalized(&x) - target).powi(2);
                let fd = (la - lb) / (2.0 * eps);
                let rel = (g.values[k] - fd).abs() / fd.abs().max(g.values[k].abs()).max(1e-6);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-4, "seed {seed}: {worst}");
        }
    }

    #[test]
    fn zero_error_gives_zero_head_gradient() {
        let (m, x) = random_model(5);
        let y = m.forward_normalized(&x);
        let g = m.backward_normalized(&x, y);
        assert_eq!(g.loss, 0.0);
        let l = m.layout();
        assert!(g.values[l.head_w()..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let r = rows(50);
        let scaled: Vec<FeatureRow> =
            r.iter().map(|f| FeatureRow { temperature_c: f.temperature_c * 3.5, ..*f }).collect();
        let t = vec![Some(0.1); 50];
        let mut a = LstmModel::new(ModelConfig::default(), 4).unwrap();
        let mut b = a.clone();
        a.fit_normalization(&r, &t).unwrap();
        b.fit_normalization(&scaled, &t).unwrap();
        let xa = a.normalize_window(&r[10..15]).unwrap();
        let xb = b.normalize_window(&scaled[10..15]).unwrap();
        for (u, v) in xa.iter().zip(&xb) {
            assert!((u - v).abs() < 1e-12);
        }
        let pa = a.forward(&r[10..15]).unwrap().value();
        let pb = b.forward(&scaled[10..15]).unwrap().value();
        assert!((pa - pb).abs() < 1e-12);
        assert!(a.fit_normalization(&r, &t).is_err());
    }

    #[test]
    fn cyclic_encoding_has_three_inputs() {
        let cfg = ModelConfig { time_encoding: TimeEncoding::Cyclic, ..Default::default() };
        let m = LstmModel::new(cfg, 0).unwrap();
        assert_eq!(m.layout().input, 3);
        let x = m.normalize_window(&rows(5)).unwrap();
        assert_eq!(x.len(), 15);
        assert!((x[1] - 0.0).abs() < 1e-12 && (x[2] - 1.0).abs() < 1e-12);
    }
}
