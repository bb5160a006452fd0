//! The `clocklab` command line.
//!
//! Settings resolve as flag, then `CLOCKLAB_*` environment variable, then the
//! `--config` TOML file, then the built-in default. Every command writes the
//! fully resolved settings to `manifest.json` in its output directory, and
//! `clocklab replay <manifest>` reruns the command from that file alone.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (missing or malformed input, failed measurement), 3 internal error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clock::Ppm;
use crate::dataset::{self, write_atomic, Manifest};
use crate::error::Error;
use crate::estimate::{estimate_lte_ppm, estimate_tone_ppm, EstimatorConfig, PpmMeasurement};
use crate::eval::{
    cdf_of, gen_synthetic_dataset, resync_interval_for, run_sweep, sweep_n_online, CompMethod, Estimator, EvalConfig,
    Evaluator, IntervalQuery, OscillatorProfile, SweepConfig, SyntheticConfig, TemperatureModel,
};
use crate::lstm::{pacf, ModelConfig, TrainPolicy};
use crate::signal::{gen_pss_train, gen_single_tone, make_pss_template, read_iq, write_iq, ChannelConfig, IqMetadata};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// SNR in dB, or `none` for a noiseless channel. Serialized as a number or
/// the string `"none"` since TOML has no null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr(pub Option<f64>);

impl std::str::FromStr for Snr {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(Snr(None));
        }
        s.parse::<f64>().map(|v| Snr(Some(v))).map_err(|_| format!("`{s}` is neither a number nor `none`"))
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("none"),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Snr(Some(v))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    pub duration_h: f64,
    pub start_s: f64,
    pub aging_ppm_per_day: f64,
    pub profile: OscillatorProfile,
    pub temperature: TemperatureModel,
}

impl Default for DataSettings {
    fn default() -> Self {
        let s = SyntheticConfig::default();
        Self {
            duration_h: s.duration_h,
            start_s: s.start_s,
            aging_ppm_per_day: s.aging_ppm_per_day,
            profile: s.profile,
            temperature: s.temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSettings {
    /// Signal to synthesize and estimator to apply.
    pub signal: Estimator,
    /// Receiver skew for `gen-iq`.
    pub ppm: f64,
    pub snr_db: Snr,
    pub duration_s: f64,
    pub pss_root: u32,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self { signal: s.estimator, ppm: 0.0, snr_db: Snr(s.snr_db), duration_s: s.duration_s, pss_root: s.pss_root }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub start_ppm: f64,
    pub stop_ppm: f64,
    pub step_ppm: f64,
    pub reps: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self { start_ppm: s.start_ppm, stop_ppm: s.stop_ppm, step_ppm: s.step_ppm, reps: s.reps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub initial_minutes: usize,
    pub threshold_us: f64,
    pub prob: f64,
    pub cap_min: usize,
    pub n_grid: Vec<usize>,
    pub pacf: bool,
    pub pacf_max_lag: usize,
    pub oracle: bool,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        let q = IntervalQuery::default();
        Self {
            initial_minutes: EvalConfig::default().initial_minutes,
            threshold_us: q.threshold_us,
            prob: q.prob,
            cap_min: q.cap_min,
            n_grid: (2..=10).collect(),
            pacf: false,
            pacf_max_lag: 25,
            oracle: false,
        }
    }
}

/// Fully resolved settings of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Dataset CSV for `evaluate`, IQ file for `estimate`.
    pub input: Option<PathBuf>,
    pub data: DataSettings,
    pub channel: ChannelSettings,
    pub estimator: EstimatorConfig,
    pub sweep: SweepSettings,
    pub model: ModelConfig,
    pub policy: TrainPolicy,
    pub evaluate: EvaluateSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            input: None,
            data: DataSettings::default(),
            channel: ChannelSettings::default(),
            estimator: EstimatorConfig::default(),
            sweep: SweepSettings::default(),
            model: ModelConfig::default(),
            policy: TrainPolicy::default(),
            evaluate: EvaluateSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            duration_h: self.data.duration_h,
            start_s: self.data.start_s,
            profile: self.data.profile,
            temperature: self.data.temperature,
            aging_ppm_per_day: self.data.aging_ppm_per_day,
            seed: self.seed,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            estimator: self.channel.signal,
            start_ppm: self.sweep.start_ppm,
            stop_ppm: self.sweep.stop_ppm,
            step_ppm: self.sweep.step_ppm,
            reps: self.sweep.reps,
            snr_db: self.channel.snr_db.0,
            duration_s: self.channel.duration_s,
            pss_root: self.channel.pss_root,
            estimator_config: self.estimator.clone(),
            seed: self.seed,
        }
    }

    pub fn channel_config(&self) -> Result<ChannelConfig, CliError> {
        Ok(ChannelConfig {
            ppm: Ppm::new(self.channel.ppm).map_err(usage)?,
            snr_db: self.channel.snr_db.0,
            include_carrier_offset: self.estimator.include_carrier_offset,
            f_carrier_nom: self.estimator.f_carrier_nom,
            seed: self.seed,
        })
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig { initial_minutes: self.evaluate.initial_minutes, model: self.model, policy: self.policy }
    }

    pub fn interval_query(&self) -> IntervalQuery {
        IntervalQuery {
            threshold_us: self.evaluate.threshold_us,
            prob: self.evaluate.prob,
            cap_min: self.evaluate.cap_min,
            n_online: self.policy.n_online,
        }
    }

    /// Checks what a command needs before it touches any file.
    pub fn validate(&self, cmd: CommandKind) -> Result<(), CliError> {
        let r = || -> crate::Result<()> {
            self.estimator.validate()?;
            match cmd {
                CommandKind::GenData => {
                    self.data.profile.validate()?;
                    self.data.temperature.validate()?;
                }
                CommandKind::SweepPpm => {
                    self.sweep_config().grid()?;
                    self.channel_config_checked()?;
                }
                CommandKind::GenIq => self.channel_config_checked()?,
                CommandKind::Estimate => {}
                CommandKind::Evaluate => {
                    self.policy.validate()?;
                    let e = &self.evaluate;
                    if !(e.threshold_us > 0.0) || !(e.prob > 0.0 && e.prob < 1.0) || e.cap_min == 0 {
                        return Err(Error::invalid("evaluate needs threshold > 0, 0 < prob < 1 and cap ≥ 1"));
                    }
                    if e.n_grid.is_empty() || e.n_grid.contains(&0) {
                        return Err(Error::invalid("n_grid must be non-empty with entries ≥ 1"));
                    }
                    if self.model.hidden_size == 0 || self.model.seq_len == 0 {
                        return Err(Error::invalid("model needs hidden_size and seq_len ≥ 1"));
                    }
                }
            }
            Ok(())
        };
        r().map_err(usage)
    }

    fn channel_config_checked(&self) -> crate::Result<()> {
        if !(self.channel.duration_s > 0.0) || !self.channel.duration_s.is_finite() {
            return Err(Error::invalid(format!("capture duration {} s must be positive", self.channel.duration_s)));
        }
        let ppm = Ppm::new(self.channel.ppm)?;
        ChannelConfig {
            ppm,
            snr_db: self.channel.snr_db.0,
            include_carrier_offset: self.estimator.include_carrier_offset,
            f_carrier_nom: self.estimator.f_carrier_nom,
            seed: self.seed,
        }
        .validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    GenData,
    SweepPpm,
    Evaluate,
    GenIq,
    Estimate,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::GenData => "gen-data",
            CommandKind::SweepPpm => "sweep-ppm",
            CommandKind::Evaluate => "evaluate",
            CommandKind::GenIq => "gen-iq",
            CommandKind::Estimate => "estimate",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::GenData, Self::SweepPpm, Self::Evaluate, Self::GenIq, Self::Estimate].into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Parser)]
#[command(name = "clocklab", version, about = "Oscillator skew measurement and drift-compensation experiments")]
pub struct Cli {
    /// TOML settings file; flags and CLOCKLAB_* variables override it
    #[arg(long, global = true, env = "CLOCKLAB_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic per-minute measurement dataset (dataset.csv)
    GenData {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Sweep the receiver skew and tabulate estimator bias and precision (sweep.csv)
    SweepPpm {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        channel: ChannelArgs,
        /// Repetitions per grid point [default: 10]
        #[arg(long, env = "CLOCKLAB_REPS")]
        reps: Option<usize>,
    },
    /// Compare compensation methods on a dataset (cdf.csv, resync_intervals.csv, n_online_sweep.csv)
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Synthesize an IQ capture (capture.iq plus JSON sidecar)
    GenIq {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Estimate the skew of an IQ capture (estimate.csv)
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// IQ file written by gen-iq (sidecar expected next to it)
        #[arg(long, env = "CLOCKLAB_INPUT")]
        input: Option<PathBuf>,
        /// Estimator: tone or lte [default: lte]
        #[arg(long, env = "CLOCKLAB_ESTIMATOR")]
        estimator: Option<Estimator>,
        /// Include the carrier frequency offset in the tone model [default: false]
        #[arg(long, env = "CLOCKLAB_INCLUDE_CARRIER_OFFSET", num_args = 0..=1, default_missing_value = "true")]
        include_carrier_offset: Option<bool>,
    },
    /// Rerun a command from its manifest
    Replay {
        manifest: PathBuf,
        /// Write outputs here instead of the recorded directory
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Master seed [default: 0]
    #[arg(long, env = "CLOCKLAB_SEED")]
    pub seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long, env = "CLOCKLAB_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset length in hours [default: 70]
    #[arg(long, env = "CLOCKLAB_DURATION_H")]
    pub duration_h: Option<f64>,
    /// Diurnal temperature amplitude in °C [default: 8]
    #[arg(long, env = "CLOCKLAB_TEMP_AMPLITUDE_C")]
    pub temp_amplitude_c: Option<f64>,
    /// Standard deviation of the slow temperature term in °C [default: 3]
    #[arg(long, env = "CLOCKLAB_TEMP_AR_STD_C")]
    pub temp_ar_std_c: Option<f64>,
    /// Oscillator aging in ppm per day [default: 0.03]
    #[arg(long, env = "CLOCKLAB_AGING_PPM_PER_DAY")]
    pub aging_ppm_per_day: Option<f64>,
    /// Noise of the LTE ppm column [default: 0.0166]
    #[arg(long, env = "CLOCKLAB_LTE_NOISE_STD")]
    pub lte_noise_std: Option<f64>,
    /// Noise of the tone ppm column [default: 0.0004]
    #[arg(long, env = "CLOCKLAB_TONE_NOISE_STD")]
    pub tone_noise_std: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ChannelArgs {
    /// Estimator and signal: tone or lte [default: lte]
    #[arg(long, env = "CLOCKLAB_ESTIMATOR")]
    pub estimator: Option<Estimator>,
    /// Receiver skew in ppm (gen-iq) [default: 0]
    #[arg(long, env = "CLOCKLAB_PPM", allow_negative_numbers = true)]
    pub ppm: Option<f64>,
    /// SNR in dB, or `none` for noiseless captures [default: 20]
    #[arg(long, env = "CLOCKLAB_SNR_DB", allow_negative_numbers = true)]
    pub snr_db: Option<Snr>,
    /// Capture length in seconds [default: 1]
    #[arg(long, env = "CLOCKLAB_DURATION_S")]
    pub duration_s: Option<f64>,
    /// Tone estimator FFT length, a power of two [default: 4194304]
    #[arg(long, env = "CLOCKLAB_FFT_SIZE")]
    pub fft_size: Option<usize>,
    /// Include the carrier frequency offset in the channel and tone model [default: false]
    #[arg(long, env = "CLOCKLAB_INCLUDE_CARRIER_OFFSET", num_args = 0..=1, default_missing_value = "true")]
    pub include_carrier_offset: Option<bool>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset CSV to evaluate
    #[arg(long, env = "CLOCKLAB_DATASET")]
    pub dataset: Option<PathBuf>,
    /// Minutes between resyncs and online updates [default: 25]
    #[arg(long, env = "CLOCKLAB_DT_ONLINE_MIN")]
    pub dt_online_min: Option<usize>,
    /// Epochs per online update [default: 6]
    #[arg(long, env = "CLOCKLAB_N_ONLINE")]
    pub n_online: Option<usize>,
    /// Clock offset budget in µs [default: 10]
    #[arg(long, env = "CLOCKLAB_THRESHOLD_US")]
    pub threshold_us: Option<f64>,
    /// Fraction of minutes that must meet the budget [default: 0.9]
    #[arg(long, env = "CLOCKLAB_PROB")]
    pub prob: Option<f64>,
    /// Longest resync interval scanned, minutes [default: 120]
    #[arg(long, env = "CLOCKLAB_CAP_MIN")]
    pub cap_min: Option<usize>,
    /// Also write pacf.csv for the LTE ppm column [default: false]
    #[arg(long, env = "CLOCKLAB_PACF", num_args = 0..=1, default_missing_value = "true")]
    pub pacf: Option<bool>,
    /// Add a predictor fed the true ppm as a reference [default: false]
    #[arg(long, env = "CLOCKLAB_ORACLE", num_args = 0..=1, default_missing_value = "true")]
    pub oracle: Option<bool>,
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

impl CommonArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.out_dir, self.out_dir);
    }
}

impl DataArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.data.duration_h, self.duration_h);
        set(&mut cfg.data.temperature.amplitude_c, self.temp_amplitude_c);
        set(&mut cfg.data.temperature.ar_std_c, self.temp_ar_std_c);
        set(&mut cfg.data.aging_ppm_per_day, self.aging_ppm_per_day);
        set(&mut cfg.data.profile.lte_noise_std, self.lte_noise_std);
        set(&mut cfg.data.profile.tone_noise_std, self.tone_noise_std);
    }
}

impl ChannelArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.channel.signal, self.estimator);
        set(&mut cfg.channel.ppm, self.ppm);
        set(&mut cfg.channel.snr_db, self.snr_db);
        set(&mut cfg.channel.duration_s, self.duration_s);
        set(&mut cfg.estimator.fft_size, self.fft_size);
        set(&mut cfg.estimator.include_carrier_offset, self.include_carrier_offset);
    }
}

impl EvalArgs {
    fn apply(self, cfg: &mut RunConfig) {
        if self.dataset.is_some() {
            cfg.input = self.dataset;
        }
        set(&mut cfg.policy.dt_online_min, self.dt_online_min);
        set(&mut cfg.policy.n_online, self.n_online);
        set(&mut cfg.evaluate.threshold_us, self.threshold_us);
        set(&mut cfg.evaluate.prob, self.prob);
        set(&mut cfg.evaluate.cap_min, self.cap_min);
        set(&mut cfg.evaluate.pacf, self.pacf);
        set(&mut cfg.evaluate.oracle, self.oracle);
    }
}

/// What a command produced, for the caller to report.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub command: CommandKind,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

/// Parse arguments, run, print, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("clocklab: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    let kind = match cli.command {
        Command::Replay { manifest, out_dir } => return replay(&manifest, out_dir),
        Command::GenData { common, data } => {
            common.apply(&mut cfg);
            data.apply(&mut cfg);
            CommandKind::GenData
        }
        Command::SweepPpm { common, channel, reps } => {
            common.apply(&mut cfg);
            channel.apply(&mut cfg);
            set(&mut cfg.sweep.reps, reps);
            CommandKind::SweepPpm
        }
        Command::Evaluate { common, eval } => {
            common.apply(&mut cfg);
            eval.apply(&mut cfg);
            CommandKind::Evaluate
        }
        Command::GenIq { common, channel } => {
            common.apply(&mut cfg);
            channel.apply(&mut cfg);
            CommandKind::GenIq
        }
        Command::Estimate { common, input, estimator, include_carrier_offset } => {
            common.apply(&mut cfg);
            if input.is_some() {
                cfg.input = input;
            }
            set(&mut cfg.channel.signal, estimator);
            set(&mut cfg.estimator.include_carrier_offset, include_carrier_offset);
            CommandKind::Estimate
        }
    };
    execute(kind, cfg)
}

/// Run `kind` with fully resolved settings and write its manifest.
pub fn execute(kind: CommandKind, mut cfg: RunConfig) -> Result<Outcome, CliError> {
    cfg.policy.seed = cfg.seed;
    cfg.validate(kind)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let mut out = match kind {
        CommandKind::GenData => cmd_gen_data(&cfg)?,
        CommandKind::SweepPpm => cmd_sweep_ppm(&cfg)?,
        CommandKind::Evaluate => cmd_evaluate(&cfg)?,
        CommandKind::GenIq => cmd_gen_iq(&cfg)?,
        CommandKind::Estimate => cmd_estimate(&cfg)?,
    };
    let config = serde_json::to_value(&cfg).map_err(|e| CliError::Internal(e.to_string()))?;
    let seeds = BTreeMap::from([("seed".to_owned(), cfg.seed), ("policy".to_owned(), cfg.policy.seed)]);
    let path = cfg.out_dir.join(MANIFEST_FILE);
    Manifest::new(kind.name(), config, seeds).write(&path)?;
    out.files.push(path);
    Ok(out)
}

pub fn replay(manifest: &Path, out_dir: Option<PathBuf>) -> Result<Outcome, CliError> {
    let m = Manifest::read(manifest)?;
    let kind = CommandKind::from_name(&m.command).ok_or_else(|| Error::Parse {
        path: manifest.to_path_buf(),
        line: 0,
        msg: format!("unknown command `{}`", m.command),
    })?;
    let mut cfg: RunConfig = serde_json::from_value(m.config).map_err(|e| Error::Parse {
        path: manifest.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    if m.version != dataset::VERSION {
        eprintln!("clocklab: manifest written by {}, replaying with {}", m.version, dataset::VERSION);
    }
    if let Some(dir) = out_dir {
        cfg.out_dir = dir;
    }
    execute(kind, cfg)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> crate::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let err = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::invalid(e.to_string()))
}

fn write_csv(
    out: &mut Outcome,
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> crate::Result<()> {
    let path = dir.join(name);
    write_atomic(&path, &csv_bytes(header, rows)?)?;
    out.files.push(path);
    Ok(())
}

fn outcome(command: CommandKind) -> Outcome {
    Outcome { command, files: Vec::new(), summary: Vec::new() }
}

fn cmd_gen_data(cfg: &RunConfig) -> crate::Result<Outcome> {
    let mut out = outcome(CommandKind::GenData);
    let d = gen_synthetic_dataset(&cfg.synthetic())?;
    let path = cfg.out_dir.join("dataset.csv");
    dataset::write_dataset(&d.records, &path)?;
    out.files.push(path);
    out.summary.push(format!("{} records over {} h", d.records.len(), cfg.data.duration_h));
    Ok(out)
}

fn cmd_sweep_ppm(cfg: &RunConfig) -> crate::Result<Outcome> {
    let mut out = outcome(CommandKind::SweepPpm);
    let t = run_sweep(&cfg.sweep_config())?;
    let rows = t.rows.iter().map(|r| {
        vec![r.ppm.to_string(), r.bias.to_string(), r.precision.to_string(), r.n_ok.to_string(), r.n_failed.to_string()]
    });
    write_csv(&mut out, &cfg.out_dir, "sweep.csv", &["ppm", "bias", "precision", "n_ok", "n_failed"], rows)?;
    let pooled = vec![vec![t.pooled_bias.to_string(), t.pooled_std.to_string(), t.failures.to_string()]];
    write_csv(&mut out, &cfg.out_dir, "sweep_pooled.csv", &["pooled_bias", "pooled_std", "failures"], pooled)?;
    out.summary.push(format!(
        "{} points x {} reps: pooled bias {:.3e} ppm, pooled std {:.3e} ppm, {} failures",
        t.rows.len(),
        cfg.sweep.reps,
        t.pooled_bias,
        t.pooled_std,
        t.failures
    ));
    Ok(out)
}

fn cmd_evaluate(cfg: &RunConfig) -> crate::Result<Outcome> {
    let mut out = outcome(CommandKind::Evaluate);
    let input = cfg.input.as_deref().ok_or_else(|| Error::invalid("evaluate needs a dataset (--dataset)"))?;
    let records = dataset::read_dataset(input)?;
    let ev = Evaluator::new(&records, cfg.eval_config())?;
    let mut methods = CompMethod::PRIMARY.to_vec();
    if cfg.evaluate.oracle {
        methods.push(CompMethod::Oracle);
    }
    let q = cfg.interval_query();
    let dt = cfg.policy.dt_online_min;

    let mut interval_rows = Vec::new();
    let mut cdf_rows = Vec::new();
    for &m in &methods {
        let r = resync_interval_for(&ev, m, &q)?;
        out.summary.push(format!("{:>14}: resync every {} min (P = {:.3})", m.name(), r.minutes, r.prob));
        interval_rows.push(vec![
            m.name().to_owned(),
            r.minutes.to_string(),
            r.prob.to_string(),
            r.diagnostic.unwrap_or_default(),
        ]);
        let run = ev.run(m, dt, cfg.policy.n_online)?;
        for (v, p) in cdf_of(&run)?.points() {
            cdf_rows.push(vec![m.name().to_owned(), v.to_string(), p.to_string()]);
        }
    }
    write_csv(
        &mut out,
        &cfg.out_dir,
        "resync_intervals.csv",
        &["method", "interval_min", "prob_within", "diagnostic"],
        interval_rows,
    )?;
    write_csv(&mut out, &cfg.out_dir, "cdf.csv", &["method", "abs_offset_us", "cdf"], cdf_rows)?;

    let curve = sweep_n_online(&ev, dt, &cfg.evaluate.n_grid)?;
    let rows = curve.iter().map(|(n, v)| vec![n.to_string(), v.to_string()]);
    write_csv(&mut out, &cfg.out_dir, "n_online_sweep.csv", &["n_online", "mean_abs_offset_us"], rows)?;

    if cfg.evaluate.pacf {
        let series: Vec<f64> = records.iter().filter_map(|r| r.lte_ppm.map(|p| p.value())).collect();
        let p = pacf(&series, cfg.evaluate.pacf_max_lag)?;
        let rows = p.values.iter().enumerate().map(|(k, v)| {
            vec![k.to_string(), v.to_string(), p.confidence.to_string(), (k > 0 && p.is_significant(k)).to_string()]
        });
        write_csv(&mut out, &cfg.out_dir, "pacf.csv", &["lag", "pacf", "confidence", "significant"], rows)?;
        out.summary.push(format!("pacf: selected lag {}", p.selected_lag));
    }
    Ok(out)
}

fn cmd_gen_iq(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut out = outcome(CommandKind::GenIq);
    let ch = cfg.channel_config()?;
    let est = &cfg.estimator;
    let buf = match cfg.channel.signal {
        Estimator::Tone => gen_single_tone(est.f_sine_nom, &ch, est.f_s_nom, cfg.channel.duration_s)?,
        Estimator::Lte => {
            gen_pss_train(&make_pss_template(cfg.channel.pss_root, est.f_s_nom)?, &ch, cfg.channel.duration_s)?
        }
    };
    let meta = IqMetadata {
        f_s_nom: buf.f_s_nom,
        ppm: cfg.channel.ppm,
        snr_db: cfg.channel.snr_db.0,
        seed: cfg.seed,
        duration_s: buf.duration_s,
    };
    let path = cfg.out_dir.join("capture.iq");
    write_iq(&path, &buf, &meta)?;
    out.summary.push(format!("{} samples at {} ppm", buf.len(), cfg.channel.ppm));
    out.files.push(crate::signal::sidecar_path(&path));
    out.files.push(path);
    Ok(out)
}

fn cmd_estimate(cfg: &RunConfig) -> crate::Result<Outcome> {
    let mut out = outcome(CommandKind::Estimate);
    let input = cfg.input.as_deref().ok_or_else(|| Error::invalid("estimate needs an IQ file (--input)"))?;
    let (buf, _meta) = read_iq(input)?;
    let m: PpmMeasurement = match cfg.channel.signal {
        Estimator::Tone => estimate_tone_ppm(&buf, &cfg.estimator)?,
        Estimator::Lte => {
            estimate_lte_ppm(&buf, &make_pss_template(cfg.channel.pss_root, buf.f_s_nom)?, &cfg.estimator)?
        }
    };
    let name = match cfg.channel.signal {
        Estimator::Tone => "tone",
        Estimator::Lte => "lte",
    };
    let row = vec![name.to_owned(), m.ppm.value().to_string(), m.quality.to_string(), m.degraded.to_string()];
    write_csv(&mut out, &cfg.out_dir, "estimate.csv", &["estimator", "ppm", "quality", "degraded"], [row])?;
    out.summary.push(format!("{name}: {} ppm", m.ppm.value()));
    Ok(out)
}
