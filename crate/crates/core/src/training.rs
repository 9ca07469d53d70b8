//! Mini-batch Adam training with L2, validation early stopping and
//! per-epoch checkpoints.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::data::{DatasetSplit, Vocabulary};
use crate::error::{ModelError, TrainError};
use crate::eval::{evaluate, MetricsReport};
use crate::model::{backward, forward_batch, DropoutSource, ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStopMetric {
    Mrr20,
    Hit20,
    ValidationLoss,
}

impl EarlyStopMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            EarlyStopMetric::Mrr20 => "mrr@20",
            EarlyStopMetric::Hit20 => "hit@20",
            EarlyStopMetric::ValidationLoss => "loss",
        }
    }

    fn value(&self, report: &MetricsReport) -> f64 {
        match self {
            EarlyStopMetric::Mrr20 => report.mrr(20).unwrap_or(0.0),
            EarlyStopMetric::Hit20 => report.hit(20).unwrap_or(0.0),
            EarlyStopMetric::ValidationLoss => report.mean_loss,
        }
    }

    fn improves(&self, candidate: f64, best: f64) -> bool {
        match self {
            EarlyStopMetric::ValidationLoss => candidate < best,
            _ => candidate > best,
        }
    }
}

impl fmt::Display for EarlyStopMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EarlyStopMetric {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mrr@20" | "mrr20" => Ok(Self::Mrr20),
            "hit@20" | "hit20" => Ok(Self::Hit20),
            "loss" | "validation-loss" => Ok(Self::ValidationLoss),
            _ => Err(TrainError::InvalidConfig(format!(
                "unknown early-stop metric `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub early_stop_metric: EarlyStopMetric,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 100,
            max_epochs: 50,
            patience: 5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            early_stop_metric: EarlyStopMetric::Mrr20,
            rng_seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a non-negative finite number");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        let open_unit = |b: f64| b > 0.0 && b < 1.0;
        if !open_unit(self.adam_beta1) || !open_unit(self.adam_beta2) {
            return bad("adam betas must lie in (0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            first_moment: ModelParams::zeros_like(params),
            second_moment: ModelParams::zeros_like(params),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update with the L2 term `λθ` folded into the gradient.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
    l2: f64,
) -> Result<(), TrainError> {
    for (name, _, g) in grads.tensors() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient {
                tensor: name,
                step: state.step + 1,
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let lr = cfg.learning_rate;
    let eps = cfg.adam_epsilon;

    let grad_tensors = grads.tensors();
    let ms = state.first_moment.tensors_mut();
    let vs = state.second_moment.tensors_mut();
    for (((theta, (_, _, g)), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grad_tensors)
        .zip(ms)
        .zip(vs)
    {
        for i in 0..theta.len() {
            let gi = g[i] + l2 * theta[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Shuffles `0..n` deterministically for `(seed, epoch)` and chunks it;
/// the last batch may be short.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

fn mix_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    // splitmix64 over the packed triple
    let mut z = seed
        ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (batch as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Value of the early-stopping metric on validation.
    pub metric: f64,
    pub validation_hit20: f64,
    pub validation_mrr20: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Diverged,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max-epochs",
            StopReason::Patience => "patience",
            StopReason::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch of the best validation metric (0 if none completed).
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub metric: EarlyStopMetric,
}

impl TrainReport {
    pub fn log_line(r: &EpochRecord) -> String {
        format!(
            "{}\t{}\t{}\t{:.3}",
            r.epoch, r.train_loss, r.metric, r.seconds
        )
    }

    /// `epoch<TAB>loss<TAB>metric<TAB>seconds`, one line per epoch.
    pub fn to_log(&self) -> String {
        self.epochs
            .iter()
            .map(|r| Self::log_line(r) + "\n")
            .collect()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where `epoch-<k>.ckpt`, `best.ckpt` and `train.log` are written.
    pub checkpoint_dir: Option<PathBuf>,
    /// Starting parameters; fresh initialization when absent.
    pub initial: Option<ModelParams>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub report: TrainReport,
}

#[derive(Debug)]
pub struct TrainFailure {
    pub error: TrainError,
    pub report: TrainReport,
    /// Best checkpoint seen before the failure, if any epoch completed.
    pub last_good: Option<Checkpoint>,
}

fn save(dir: &Option<PathBuf>, name: &str, ck: &Checkpoint) -> Result<(), TrainError> {
    if let Some(dir) = dir {
        ck.save(&dir.join(name))?;
    }
    Ok(())
}

fn append_log(dir: &Option<PathBuf>, line: &str) -> Result<(), TrainError> {
    if let Some(dir) = dir {
        let path = dir.join("train.log");
        let io = |source| {
            TrainError::Model(ModelError::Io {
                path: path.clone(),
                source,
            })
        };
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        writeln!(f, "{line}").map_err(io)?;
    }
    Ok(())
}

fn prepare_dir(dir: &Option<PathBuf>) -> Result<(), TrainError> {
    if let Some(dir) = dir {
        let io = |source| {
            TrainError::Model(ModelError::Io {
                path: dir.clone(),
                source,
            })
        };
        fs::create_dir_all(dir).map_err(io)?;
        let log: &Path = &dir.join("train.log");
        if log.exists() {
            fs::remove_file(log).map_err(io)?;
        }
    }
    Ok(())
}

/// Trains until `max_epochs` or until the validation metric fails to
/// improve for `patience` consecutive epochs; returns the best epoch.
pub fn train(
    split: &DatasetSplit,
    vocabulary: &Vocabulary,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    options: TrainOptions,
) -> Result<TrainOutcome, Box<TrainFailure>> {
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
        metric: train_cfg.early_stop_metric,
    };
    let fail = |error: TrainError, report: &TrainReport, last_good: Option<Checkpoint>| {
        Box::new(TrainFailure {
            error,
            report: report.clone(),
            last_good,
        })
    };

    let setup = || -> Result<ModelParams, TrainError> {
        model_cfg.validate()?;
        train_cfg.validate()?;
        if split.train.is_empty() {
            return Err(TrainError::EmptySet("training"));
        }
        if split.validation.is_empty() {
            return Err(TrainError::EmptySet("validation"));
        }
        prepare_dir(&options.checkpoint_dir)?;
        match &options.initial {
            Some(p) => Ok(p.clone()),
            None => Ok(ModelParams::init(model_cfg, vocabulary.len())?),
        }
    };
    let mut params = setup().map_err(|e| fail(e, &report, None))?;
    let mut adam = AdamState::new(&params);
    let mut best: Option<Checkpoint> = None;
    let mut best_metric = f64::NAN;
    let mut stale = 0;
    let l2 = model_cfg.l2_coefficient;

    for epoch in 1..=train_cfg.max_epochs {
        let started = Instant::now();
        let batches = make_batches(
            split.train.len(),
            train_cfg.batch_size,
            train_cfg.rng_seed,
            epoch,
        );
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let prefixes: Vec<&[usize]> = batch
                .iter()
                .map(|&i| split.train[i].prefix.as_slice())
                .collect();
            let labels: Vec<usize> = batch.iter().map(|&i| split.train[i].label).collect();
            let mut dropout = DropoutSource::new(
                model_cfg.dropout_rate,
                mix_seed(train_cfg.rng_seed, epoch, b),
            );
            let step = || -> Result<(f64, ModelParams), TrainError> {
                let trace = forward_batch(
                    &params,
                    &prefixes,
                    Some(&labels),
                    model_cfg.max_window,
                    Some(&mut dropout),
                )?;
                if !trace.loss.is_finite() {
                    return Err(TrainError::Diverged {
                        epoch,
                        loss: trace.loss,
                    });
                }
                let grads = backward(&params, &trace)?;
                Ok((trace.loss, grads))
            }()
            .and_then(|(loss, grads)| {
                adam_step(&mut params, &grads, &mut adam, train_cfg, l2)?;
                Ok(loss)
            });
            match step {
                Ok(loss) => loss_sum += loss * batch.len() as f64,
                Err(e) => {
                    report.stop_reason = StopReason::Diverged;
                    return Err(fail(e, &report, best));
                }
            }
        }
        let train_loss = loss_sum / split.train.len() as f64;
        if !params.is_finite() {
            report.stop_reason = StopReason::Diverged;
            return Err(fail(
                TrainError::Diverged {
                    epoch,
                    loss: train_loss,
                },
                &report,
                best,
            ));
        }

        let validation = evaluate(&params, model_cfg.max_window, &split.validation, &[20])
            .map_err(|e| match e {
                crate::error::EvalError::Model(m) => TrainError::Model(m),
                other => TrainError::InvalidConfig(other.to_string()),
            });
        let validation = match validation {
            Ok(v) => v,
            Err(e) => return Err(fail(e, &report, best)),
        };
        let metric = train_cfg.early_stop_metric.value(&validation);
        let record = EpochRecord {
            epoch,
            train_loss,
            metric,
            validation_hit20: validation.hit(20).unwrap_or(0.0),
            validation_mrr20: validation.mrr(20).unwrap_or(0.0),
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {train_loss:.5} val {} {metric:.5} ({:.1}s)",
            train_cfg.early_stop_metric,
            record.seconds
        );

        let ck = Checkpoint {
            config: model_cfg.clone(),
            epoch: epoch as u32,
            vocabulary: vocabulary.clone(),
            params: params.clone(),
        };
        let improved = best.is_none() || train_cfg.early_stop_metric.improves(metric, best_metric);
        let io = (|| {
            append_log(&options.checkpoint_dir, &TrainReport::log_line(&record))?;
            save(&options.checkpoint_dir, &format!("epoch-{epoch}.ckpt"), &ck)?;
            if improved {
                save(&options.checkpoint_dir, "best.ckpt", &ck)?;
            }
            Ok(())
        })();
        report.epochs.push(record);
        if improved {
            best_metric = metric;
            report.best_epoch = epoch;
            best = Some(ck);
            stale = 0;
        } else {
            stale += 1;
        }
        if let Err(e) = io {
            return Err(fail(e, &report, best));
        }
        if stale >= train_cfg.patience {
            report.stop_reason = StopReason::Patience;
            break;
        }
    }

    match best {
        Some(best) => Ok(TrainOutcome { best, report }),
        None => Err(fail(
            TrainError::InvalidConfig("max_epochs is 0".into()),
            &report,
            None,
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn batches_sizes_and_determinism() {
        let b = make_batches(10, 3, 1, 1);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        assert_eq!(b, make_batches(10, 3, 1, 1));
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn batches_differ_between_epochs() {
        let e1 = make_batches(20, 20, 9, 1);
        let e2 = make_batches(20, 20, 9, 2);
        assert_ne!(e1, e2);
    }

    fn tiny() -> ModelParams {
        let cfg = ModelConfig {
            embed_dim: 2,
            ..ModelConfig::default()
        };
        ModelParams::init(&cfg, 3).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = tiny();
        let orig = p.clone();
        let g = ModelParams::zeros_like(&p);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &TrainConfig::default(), 0.0).unwrap();
        assert_eq!(p, orig);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = tiny();
        let before = p.embeddings.get(0, 0);
        let mut g = ModelParams::zeros_like(&p);
        g.embeddings.as_mut_slice()[0] = 1.0;
        let cfg = TrainConfig::default();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &cfg, 0.0).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction
        let expected = before - cfg.learning_rate / (1.0 + cfg.adam_epsilon);
        assert_eq!(p.embeddings.get(0, 0), expected);
        assert!((st.first_moment.embeddings.get(0, 0) - 0.1).abs() < 1e-15);
        assert!((st.second_moment.embeddings.get(0, 0) - 0.001).abs() < 1e-18);
    }

    #[test]
    fn weight_decay_shrinks_norm() {
        let mut p = tiny();
        let g = ModelParams::zeros_like(&p);
        let mut st = AdamState::new(&p);
        let norm = |p: &ModelParams| -> f64 {
            p.tensors()
                .iter()
                .flat_map(|(_, _, t)| t.iter())
                .map(|v| v * v)
                .sum()
        };
        let mut last = norm(&p);
        for _ in 0..20 {
            adam_step(&mut p, &g, &mut st, &TrainConfig::default(), 0.1).unwrap();
            let n = norm(&p);
            assert!(n < last);
            last = n;
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = tiny();
        let mut g = ModelParams::zeros_like(&p);
        g.decoder.w_k.as_mut_slice()[1] = f64::NAN;
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut st, &TrainConfig::default(), 0.0).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteGradient { tensor, .. } if tensor == "decoder.w_k"));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("MRR@20".parse::<EarlyStopMetric>().unwrap(), EarlyStopMetric::Mrr20);
        assert!(EarlyStopMetric::ValidationLoss.improves(0.5, 0.6));
        assert!(!EarlyStopMetric::Hit20.improves(0.5, 0.5));
    }
}
