use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::clock::{integrate_offsets, OffsetSeries, Ppm};
use crate::dataset::MeasurementRecord;
use crate::error::{Error, Result};
use crate::lstm::{FeatureRow, LstmModel, ModelConfig, TrainPolicy};

/// One day of minutes.
pub const DAY_MINUTES: usize = 1440;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompMethod {
    /// Free-running clock.
    None,
    /// Hold the latest tone measurement from each resync.
    ConstantTone,
    /// Hold the latest LTE measurement from each resync.
    ConstantLte,
    /// LSTM prediction, updated online at every resync.
    OnlineLstm,
    /// Predicts the true ppm; a reference ceiling.
    Oracle,
}

impl CompMethod {
    pub const PRIMARY: [CompMethod; 4] =
        [CompMethod::None, CompMethod::ConstantTone, CompMethod::ConstantLte, CompMethod::OnlineLstm];

    pub fn name(self) -> &'static str {
        match self {
            CompMethod::None => "none",
            CompMethod::ConstantTone => "constant-tone",
            CompMethod::ConstantLte => "constant-lte",
            CompMethod::OnlineLstm => "online-lstm",
            CompMethod::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for CompMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            CompMethod::None,
            CompMethod::ConstantTone,
            CompMethod::ConstantLte,
            CompMethod::OnlineLstm,
            CompMethod::Oracle,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::invalid(format!("unknown compensation method `{s}`")))
    }
}

/// Per-minute outcome of one method over the test horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensationRun {
    pub method: CompMethod,
    pub dt_online_min: usize,
    pub predicted: Vec<Ppm>,
    /// `truth − predicted`.
    pub residual: Vec<Ppm>,
    pub offsets: OffsetSeries,
    pub policy: TrainPolicy,
}

impl CompensationRun {
    pub fn mean_abs_offset_us(&self) -> f64 {
        self.offsets.mean_abs_us()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Minutes at the start used only for initial training.
    pub initial_minutes: usize,
    pub model: ModelConfig,
    pub policy: TrainPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { initial_minutes: DAY_MINUTES, model: ModelConfig::default(), policy: TrainPolicy::default() }
    }
}

/// A dataset prepared for repeated compensation runs. The initially trained
/// model depends only on the first day and the policy's initial settings, so
/// it is trained once and cloned into every online run.
#[derive(Debug)]
pub struct Evaluator {
    config: EvalConfig,
    features: Vec<FeatureRow>,
    lte: Vec<Option<f64>>,
    tone: Vec<Option<f64>>,
    truth: Vec<f64>,
    initial: OnceLock<std::result::Result<LstmModel, String>>,
}

impl Evaluator {
    /// `truth` is `true_ppm` where present and the tone measurement
    /// otherwise; rows with neither are rejected.
    pub fn new(records: &[MeasurementRecord], config: EvalConfig) -> Result<Self> {
        config.policy.validate()?;
        let l = config.model.seq_len;
        if config.initial_minutes < l + 1 {
            return Err(Error::invalid(format!(
                "initial block of {} minutes is shorter than lag + 1",
                config.initial_minutes
            )));
        }
        if records.len() <= config.initial_minutes + l {
            return Err(Error::invalid(format!(
                "{} records do not cover {} training minutes plus a test horizon",
                records.len(),
                config.initial_minutes
            )));
        }
        let truth = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.true_ppm.or(r.tone_ppm).map(|p| p.value()).ok_or_else(|| {
                    Error::invalid(format!("record {i} has neither a true nor a tone ppm to score against"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            features: records
                .iter()
                .map(|r| FeatureRow { temperature_c: r.temperature_c, seconds_of_day: r.timestamp_s })
                .collect(),
            lte: records.iter().map(|r| r.lte_ppm.map(|p| p.value())).collect(),
            tone: records.iter().map(|r| r.tone_ppm.map(|p| p.value())).collect(),
            truth,
            initial: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    pub fn horizon_len(&self) -> usize {
        self.truth.len() - self.config.initial_minutes
    }

    /// Measured LTE ppm per minute, as used for training.
    pub fn lte_series(&self) -> &[Option<f64>] {
        &self.lte
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    /// The model after initial training on the first block.
    pub fn initial_model(&self) -> Result<&LstmModel> {
        self.initial
            .get_or_init(|| {
                let n = self.config.initial_minutes;
                let mut m = LstmModel::new(self.config.model, self.config.policy.seed).map_err(|e| e.to_string())?;
                m.train_initial(&self.features[..n], &self.lte[..n], &self.config.policy).map_err(|e| e.to_string())?;
                Ok(m)
            })
            .as_ref()
            .map_err(|e| Error::invalid(format!("initial training failed: {e}")))
    }

    fn held(series: &[Option<f64>], before: usize) -> Option<f64> {
        series[..before].iter().rev().find_map(|v| *v)
    }

    /// Run `method` over the test horizon with resyncs every `dt` minutes.
    /// `n_online` overrides the policy's epochs per online update.
    pub fn run(&self, method: CompMethod, dt: usize, n_online: usize) -> Result<CompensationRun> {
        let policy = TrainPolicy { dt_online_min: dt, n_online, ..self.config.policy };
        policy.validate()?;
        let start = self.config.initial_minutes;
        let n = self.truth.len();
        let mut predicted = Vec::with_capacity(n - start);
        match method {
            CompMethod::None => predicted.resize(n - start, 0.0),
            CompMethod::Oracle => predicted.extend_from_slice(&self.truth[start..]),
            CompMethod::ConstantTone | CompMethod::ConstantLte => {
                let series = if method == CompMethod::ConstantTone { &self.tone } else { &self.lte };
                let mut hold = 0.0;
                for s in (start..n).step_by(dt) {
                    hold = Self::held(series, s).unwrap_or(hold);
                    predicted.extend(std::iter::repeat_n(hold, dt.min(n - s)));
                }
            }
            CompMethod::OnlineLstm => {
                let mut model = self.initial_model()?.clone();
                let l = self.config.model.seq_len;
                for s in (start..n).step_by(dt) {
                    if s > start {
                        // window that just closed, with lag-1 rows of history
                        let lo = s - dt;
                        let ctx = lo + 1 - l;
                        let mut targets = vec![None; s - ctx];
                        targets[lo - ctx..].copy_from_slice(&self.lte[lo..s]);
                        model.online_update(&self.features[ctx..s], &targets, &policy)?;
                    }
                    for i in s..(s + dt).min(n) {
                        predicted.push(model.forward(&self.features[i + 1 - l..=i])?.value());
                    }
                }
            }
        }
        let to_ppm = |v: f64| Ppm::new(v).map_err(|e| Error::invalid(e.to_string()));
        let residual =
            self.truth[start..].iter().zip(&predicted).map(|(t, p)| to_ppm(t - p)).collect::<Result<Vec<_>>>()?;
        let offsets = integrate_offsets(&residual, dt)?;
        Ok(CompensationRun {
            method,
            dt_online_min: dt,
            predicted: predicted.into_iter().map(to_ppm).collect::<Result<_>>()?,
            residual,
            offsets,
            policy,
        })
    }
}
