//! Experiment plumbing: config files, presets, single runs, sweeps over the
//! scaling coefficient, and schedule ladders.
//!
//! Configs are TOML with a closed schema: unknown keys are hard errors.
//! Results are JSONL (one record per epoch, then one summary line) plus a
//! CSV table for sweeps. Reruns with the same config and seed reproduce
//! every metric byte-for-byte; only wall-time fields differ.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{generate, load_idx, Dataset, SyntheticSpec};
use crate::metrics::RunRecord;
use crate::model::{full_gradient, LossKind, Model, ModelKind};
use crate::optim::{run, OptimizerConfig, OptimizerState, RunOptions, Variant};
use crate::privacy::{account_epsilon, calibrate_sigma_for_budget};
use crate::rng::{derive_seed, stream_rng, STREAM_BATCH, STREAM_INIT, STREAM_NOISE, STREAM_SPLIT};
use crate::scaling::ScalingRule;
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Number of bins used for the per-epoch similarity histograms.
pub const SIMILARITY_BINS: usize = 20;

const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Where the training and evaluation data come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "source", rename_all = "kebab-case")]
pub enum DatasetSpec {
    /// Explicit IDX file quadruple.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    /// Standard MNIST file names under a directory. Resolution order:
    /// `dir`, then `$MNIST_DATA_DIR`, then `data/mnist` relative to the
    /// current directory and to the workspace root.
    Mnist {
        #[serde(default)]
        dir: Option<PathBuf>,
    },
    /// Generated data with a seeded holdout split.
    Synthetic {
        spec: SyntheticSpec,
        #[serde(default = "default_holdout")]
        holdout_fraction: f64,
    },
}

fn default_holdout() -> f64 {
    0.2
}

fn mnist_dir(explicit: Option<&Path>) -> Result<PathBuf> {
    let mut candidates: Vec<PathBuf> = Vec::new();
    if let Some(dir) = explicit {
        candidates.push(dir.to_path_buf());
    } else {
        if let Ok(dir) = std::env::var("MNIST_DATA_DIR") {
            candidates.push(PathBuf::from(dir));
        }
        candidates.push(PathBuf::from("data/mnist"));
        candidates.push(
            Path::new(env!("CARGO_MANIFEST_DIR"))
                .join("../..")
                .join("data/mnist"),
        );
    }
    for dir in &candidates {
        if MNIST_FILES.iter().all(|f| dir.join(f).is_file()) {
            return Ok(dir.clone());
        }
    }
    Err(Error::Config(format!(
        "MNIST files not found; searched {:?} for {:?}",
        candidates, MNIST_FILES
    )))
}

impl DatasetSpec {
    /// Loads or generates the (train, test) pair.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => Ok((
                load_idx(train_images, train_labels)?,
                load_idx(test_images, test_labels)?,
            )),
            DatasetSpec::Mnist { dir } => {
                let dir = mnist_dir(dir.as_deref())?;
                Ok((
                    load_idx(&dir.join(MNIST_FILES[0]), &dir.join(MNIST_FILES[1]))?,
                    load_idx(&dir.join(MNIST_FILES[2]), &dir.join(MNIST_FILES[3]))?,
                ))
            }
            DatasetSpec::Synthetic {
                spec,
                holdout_fraction,
            } => {
                let full = generate(spec)?;
                let (train, test) = full.split(*holdout_fraction, derive_seed(seed, STREAM_SPLIT))?;
                Ok((train, test))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub loss: LossKind,
}

/// Either a budget to calibrate against or an explicit noise multiplier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl PrivacyConfig {
    pub fn validate(&self) -> Result<()> {
        match (self.epsilon, self.sigma) {
            (Some(_), Some(_)) => Err(Error::Config(
                "privacy: give either epsilon or sigma, not both".into(),
            )),
            (None, None) => Err(Error::Config(
                "privacy: one of epsilon or sigma is required".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub rule: ScalingRule,
    pub variant: Variant,
    pub privacy: PrivacyConfig,
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.privacy.validate()?;
        config.model.kind.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Table-driven MNIST presets sharing the common hyperparameters
/// (epsilon, delta) = (3, 1e-5), B = 512, 20 epochs, C = 0.3, r = 1e-4.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (rule, variant) = match name {
        "mnist-sgd" => (ScalingRule::vanilla_clip(0.3, 1e-4)?, Variant::Plain),
        "mnist-autos" => (ScalingRule::auto_s(0.3, 1e-4)?, Variant::Plain),
        "mnist-psac" => (ScalingRule::psac(0.3, 1e-4)?, Variant::Plain),
        "mnist-psasc" => (ScalingRule::psasc(0.3, 1e-4, 0.9)?, Variant::Plain),
        "mnist-psasc-star" => (
            ScalingRule::psasc(0.3, 1e-4, 0.9)?,
            Variant::InnerOuterSgd {
                gamma0: 0.5,
                gamma1: 0.9,
                k0: 1,
            },
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; expected one of mnist-sgd, mnist-autos, \
                 mnist-psac, mnist-psasc, mnist-psasc-star"
            )))
        }
    };
    Ok(ExperimentConfig {
        name: name.to_string(),
        dataset: DatasetSpec::Mnist { dir: None },
        model: ModelSpec {
            kind: ModelKind::LogisticRegression {
                input_dim: 784,
                num_classes: 10,
            },
            loss: LossKind::CrossEntropy,
        },
        rule,
        variant,
        privacy: PrivacyConfig {
            epsilon: Some(3.0),
            delta: 1e-5,
            sigma: None,
        },
        eta: 2.0,
        batch_size: 512,
        epochs: 20,
        seed: 0,
    })
}

/// Everything derived from a config before the first step.
pub struct ResolvedExperiment {
    pub train: Dataset,
    pub test: Dataset,
    pub model: Model,
    pub optimizer: OptimizerConfig,
    pub sigma: f64,
    pub certified_epsilon: Option<f64>,
    pub steps_per_epoch: usize,
}

pub fn resolve(config: &ExperimentConfig, seed: u64) -> Result<ResolvedExperiment> {
    config.privacy.validate()?;
    let (train, test) = config.dataset.load(seed)?;
    if train.feature_dim() != config.model.kind.input_dim() {
        return Err(Error::Config(format!(
            "dataset feature dim {} does not match model input dim {}",
            train.feature_dim(),
            config.model.kind.input_dim()
        )));
    }
    let model = Model::init_random(config.model.kind.clone(), &mut stream_rng(seed, STREAM_INIT))?;

    let n = train.len();
    let (steps_per_epoch, batch_size, sampling_rate) = match config.variant {
        Variant::MomentumGd { .. } => (1, n, 1.0),
        _ => (
            n.div_ceil(config.batch_size),
            config.batch_size,
            config.batch_size as f64 / n as f64,
        ),
    };
    let steps = steps_per_epoch * config.epochs;
    if steps == 0 {
        return Err(Error::Config("epochs must be >= 1".into()));
    }

    let sigma = match config.privacy.sigma {
        Some(sigma) => sigma,
        None => calibrate_sigma_for_budget(
            config.privacy.epsilon.expect("validated"),
            config.privacy.delta,
            sampling_rate,
            steps,
        )?,
    };
    let certified = if sigma > 0.0 {
        let eps = account_epsilon(sigma, sampling_rate, steps, config.privacy.delta)?;
        eps.is_finite().then_some(eps)
    } else {
        None
    };

    let optimizer = OptimizerConfig {
        rule: config.rule,
        eta: config.eta,
        batch_size,
        steps,
        noise_std: config.rule.sensitivity() * sigma,
        variant: config.variant,
    };
    Ok(ResolvedExperiment {
        train,
        test,
        model,
        optimizer,
        sigma,
        certified_epsilon: certified,
        steps_per_epoch,
    })
}

/// Final line of every results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub seed: u64,
    pub version: String,
    pub final_train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_test_accuracy: Option<f64>,
    pub sigma: f64,
    /// Accountant epsilon for the executed run; absent when the bound is
    /// vacuous or sigma is zero.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified_epsilon: Option<f64>,
    /// Excluded from reproducibility comparisons.
    pub wall_time_seconds: f64,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum JsonlLine {
    Epoch(RunRecord),
    Summary(ExperimentSummary),
}

/// Runs one experiment end to end. `seed_override` replaces the config's
/// seed (sweeps and repeats derive per-point seeds); `out` receives the
/// JSONL results when given.
pub fn run_experiment(
    config: &ExperimentConfig,
    seed_override: Option<u64>,
    out: Option<&Path>,
) -> Result<(Vec<RunRecord>, ExperimentSummary)> {
    let seed = seed_override.unwrap_or(config.seed);
    let start = Instant::now();
    let resolved = resolve(config, seed)?;
    let options = RunOptions {
        eval: Some(&resolved.test),
        similarity_bins: Some(SIMILARITY_BINS),
    };
    let records = run(
        &resolved.optimizer,
        &resolved.train,
        resolved.model,
        config.model.loss,
        seed,
        options,
    )?;
    let last = records.last().ok_or_else(|| Error::Config("run produced no records".into()))?;
    let summary = ExperimentSummary {
        name: config.name.clone(),
        seed,
        version: VERSION.to_string(),
        final_train_loss: last.train_loss,
        final_test_accuracy: last.test_accuracy,
        sigma: resolved.sigma,
        certified_epsilon: resolved.certified_epsilon,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        config: config.clone(),
    };
    if let Some(path) = out {
        write_jsonl(path, &records, &summary)?;
    }
    Ok((records, summary))
}

fn write_jsonl(path: &Path, records: &[RunRecord], summary: &ExperimentSummary) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = fs::File::create(path)?;
    for record in records {
        let line = serde_json::to_string(&JsonlLine::Epoch(record.clone()))
            .map_err(|e| Error::Config(e.to_string()))?;
        writeln!(file, "{line}")?;
    }
    let line = serde_json::to_string(&JsonlLine::Summary(summary.clone()))
        .map_err(|e| Error::Config(e.to_string()))?;
    writeln!(file, "{line}")?;
    Ok(())
}

/// Reads back a results file written by [`run_experiment`].
pub fn read_jsonl(path: &Path) -> Result<(Vec<RunRecord>, ExperimentSummary)> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    let mut summary = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str(line).map_err(|e| Error::Config(e.to_string()))? {
            JsonlLine::Epoch(r) => records.push(r),
            JsonlLine::Summary(s) => summary = Some(s),
        }
    }
    let summary = summary.ok_or_else(|| {
        Error::Config(format!("{}: missing summary line", path.display()))
    })?;
    Ok((records, summary))
}

/// One grid point's outcome. Failing points carry the error text and never
/// touch sibling outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub s: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_test_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    /// Rows ranked by final test accuracy, best first; failed points last.
    pub ranked: Vec<SweepRow>,
    /// Whether the best s lies strictly inside the grid. Absent when fewer
    /// than three points succeeded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interior_argmax: Option<bool>,
}

/// Runs the base config once per value of the scaling coefficient s.
/// Point i uses the seed derived from (base.seed, i) and writes
/// `sweep-s{value}.jsonl` under `out_dir` when given; a ranked
/// `sweep-summary.csv` accompanies the points.
pub fn run_sweep(
    base: &ExperimentConfig,
    s_values: &[f64],
    out_dir: Option<&Path>,
) -> Result<SweepSummary> {
    if s_values.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(s_values.len());
    for (i, &s) in s_values.iter().enumerate() {
        let seed = derive_seed(base.seed, i as u64);
        let point = (|| -> Result<f64> {
            let mut config = base.clone();
            config.rule = ScalingRule::psasc(base.rule.c, base.rule.r, s)?;
            config.name = format!("{}-s{s}", base.name);
            let out = out_dir.map(|d| d.join(format!("sweep-s{s}.jsonl")));
            let (_, summary) = run_experiment(&config, Some(seed), out.as_deref())?;
            summary
                .final_test_accuracy
                .ok_or_else(|| Error::Config("sweep point reported no accuracy".into()))
        })();
        rows.push(match point {
            Ok(acc) => SweepRow {
                index: i,
                s,
                seed,
                final_test_accuracy: Some(acc),
                error: None,
            },
            Err(e) => SweepRow {
                index: i,
                s,
                seed,
                final_test_accuracy: None,
                error: Some(e.to_string()),
            },
        });
    }

    let interior_argmax = {
        let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_none()).collect();
        if ok.len() < 3 {
            None
        } else {
            let best = ok
                .iter()
                .max_by(|a, b| {
                    a.final_test_accuracy
                        .partial_cmp(&b.final_test_accuracy)
                        .unwrap()
                })
                .unwrap();
            Some(best.index != 0 && best.index != s_values.len() - 1)
        }
    };

    let mut ranked = rows;
    ranked.sort_by(|a, b| {
        b.final_test_accuracy
            .partial_cmp(&a.final_test_accuracy)
            .unwrap()
            .then(a.index.cmp(&b.index))
    });
    let summary = SweepSummary {
        ranked,
        interior_argmax,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut csv = String::from("rank,index,s,seed,final_test_accuracy,error\n");
        for (rank, row) in summary.ranked.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rank + 1,
                row.index,
                row.s,
                row.seed,
                row.final_test_accuracy
                    .map(|a| a.to_string())
                    .unwrap_or_default(),
                row.error.as_deref().unwrap_or("").replace(',', ";"),
            ));
        }
        fs::write(dir.join("sweep-summary.csv"), csv)?;
    }
    Ok(summary)
}

/// Doubling-ladder experiment testing the scheduled-hyperparameter
/// convergence trend: r ~ T^-1/2, s ~ T^-1/4, gamma ~ T^-1/4, eta ~ T^-3/4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Step-count ladder, ascending (typically doubling).
    pub t_values: Vec<usize>,
    pub c_r: f64,
    pub c_s: f64,
    pub c_gamma: f64,
    pub c_eta: f64,
    /// Weight bound of the scaling rule.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Quadratic objective: sample count, dimension, Hessian conditioning.
    pub n: usize,
    pub dim: usize,
    pub condition_number: f64,
    pub seed: u64,
    /// Full-batch momentum when true; plain minibatch steps otherwise.
    pub momentum: bool,
    /// Minibatch size for the plain variant (sampling noise source).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Per-step Gaussian noise std, usually 0 for the trend experiment.
    #[serde(default)]
    pub noise_std: f64,
    /// Gaussian label perturbation making the quadratic nonrealizable, so
    /// per-sample gradients stay nonzero at the optimum and minibatch
    /// sampling has variance there.
    #[serde(default)]
    pub label_noise: f64,
}

fn default_c() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    pub t: usize,
    pub r: f64,
    pub s: f64,
    pub gamma: f64,
    pub eta: f64,
    /// min over k of the full-gradient norm at w_{k-1}.
    pub min_grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub points: Vec<SchedulePoint>,
    /// Least-squares slope of ln(min_grad_norm) against ln(T).
    pub slope: f64,
    /// RMS residual of that fit.
    pub residual: f64,
    /// min_grad_norm at the largest T.
    pub terminal: f64,
}

/// Ordinary least squares on (x, y); returns (slope, intercept, rms residual).
pub fn log_log_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("need >= 2 points to fit".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    Ok((slope, intercept, (rss / n).sqrt()))
}

pub fn run_schedule_experiment(schedule: &ScheduleConfig) -> Result<ScheduleReport> {
    if schedule.t_values.len() < 2 {
        return Err(Error::Config("t_values needs at least two entries".into()));
    }
    if !schedule.t_values.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config("t_values must be strictly ascending".into()));
    }
    let spec = SyntheticSpec {
        kind: crate::data::SyntheticKind::QuadraticBowl {
            condition_number: schedule.condition_number,
        },
        n: schedule.n,
        dim: schedule.dim,
        seed: schedule.seed,
    };
    let mut dataset = generate(&spec)?;
    if schedule.label_noise > 0.0 {
        dataset = dataset.with_noisy_labels(schedule.label_noise, derive_seed(schedule.seed, 1))?;
    }
    let loss = LossKind::SquaredError;
    let all: Vec<(&[f64], f64)> = dataset.samples().collect();

    let mut points = Vec::with_capacity(schedule.t_values.len());
    for &t in &schedule.t_values {
        let tf = t as f64;
        let r = schedule.c_r * tf.powf(-0.5);
        let s = schedule.c_s * tf.powf(-0.25);
        let gamma = schedule.c_gamma * tf.powf(-0.25);
        let eta = schedule.c_eta * tf.powf(-0.75);
        if !(0.0 < s && s <= 1.0) || !(0.0 < gamma && gamma <= 1.0) {
            return Err(Error::Config(format!(
                "schedule constants give s = {s}, gamma = {gamma} at T = {t}; \
                 both must lie in (0, 1]"
            )));
        }
        let rule = ScalingRule::psasc(schedule.c, r, s)?;
        let (variant, batch_size) = if schedule.momentum {
            (Variant::MomentumGd { gamma }, dataset.len())
        } else {
            (
                Variant::Plain,
                schedule.batch_size.unwrap_or(dataset.len()),
            )
        };
        let config = OptimizerConfig {
            rule,
            eta,
            batch_size,
            steps: t,
            noise_std: schedule.noise_std,
            variant,
        };
        let model = Model::zeros(ModelKind::LinearRegression { input_dim: schedule.dim })?;
        let mut state = OptimizerState::new(config, model, loss, dataset.len())?;
        let mut batch_rng = stream_rng(schedule.seed, STREAM_BATCH);
        let mut noise_rng = stream_rng(schedule.seed, STREAM_NOISE);
        let mut min_norm = f64::INFINITY;
        for _ in 0..t {
            let g = full_gradient(state.model(), loss, &all)?;
            min_norm = min_norm.min(g.norm());
            state.step(&dataset, &mut batch_rng, &mut noise_rng)?;
        }
        points.push(SchedulePoint {
            t,
            r,
            s,
            gamma,
            eta,
            min_grad_norm: min_norm,
        });
    }

    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|p| ((p.t as f64).ln(), p.min_grad_norm.max(1e-300).ln()))
        .collect();
    let (slope, _, residual) = log_log_fit(&xy)?;
    Ok(ScheduleReport {
        terminal: points.last().unwrap().min_grad_norm,
        points,
        slope,
        residual,
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput("mean_and_se over empty list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Runs `repeats` independent repetitions with seeds derived from the
/// config's master seed, returning each repetition's summary.
pub fn run_repeats(
    config: &ExperimentConfig,
    repeats: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<ExperimentSummary>> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    let mut summaries = Vec::with_capacity(repeats);
    for rep in 0..repeats {
        let seed = derive_seed(config.seed, rep as u64);
        let out = out_dir.map(|d| d.join(format!("{}-rep{rep}.jsonl", config.name)));
        let (_, summary) = run_experiment(config, Some(seed), out.as_deref())?;
        summaries.push(summary);
    }
    Ok(summaries)
}
