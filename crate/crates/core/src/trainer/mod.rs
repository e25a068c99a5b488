//! Two-stage training with Charbonnier loss, Adam and per-epoch checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod data;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array4, ArrayBase, Data, Dimension, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffops::Graph;
use crate::error::{shape_err, GavnError, Result};
use crate::reconstructor::{GavnModel, OutputPath, HEAD1_PREFIX, IDENTITY_PREFIX, RECON_PREFIX, TEMPORAL_PREFIX};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{file_sha256, Checkpoint, CheckpointHeader, CheckpointMeta, TensorEntry};
pub use data::{assemble_windows, learned_heatmaps, oracle_heatmaps, sliding_windows, TrainingClip};

/// Mean of `sqrt((pred - gt)^2 + eps^2)`.
pub fn charbonnier_loss<S1, S2, D>(pred: &ArrayBase<S1, D>, gt: &ArrayBase<S2, D>, eps: f64) -> Result<f64>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    D: Dimension,
{
    if pred.shape() != gt.shape() {
        return Err(shape_err!("charbonnier: {:?} vs {:?}", pred.shape(), gt.shape()));
    }
    if !(eps > 0.0) {
        return Err(GavnError::InvalidArgument(format!("charbonnier eps must be > 0, got {eps}")));
    }
    let mut acc = 0.0;
    Zip::from(pred).and(gt).for_each(|&p, &q| acc += ((p - q) * (p - q) + eps * eps).sqrt());
    Ok(acc / pred.len().max(1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage1Config {
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage2Config {
    pub warmup_epochs: usize,
    pub warmup_lr: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config { epochs: 20, lr: 4e-4 }
    }
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            warmup_epochs: 5,
            warmup_lr: 4e-4,
            finetune_epochs: 15,
            finetune_lr: 2e-4,
        }
    }
}

/// Desk-scale replacements for the default epoch counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskOverrides {
    pub stage1_epochs: Option<usize>,
    pub warmup_epochs: Option<usize>,
    pub finetune_epochs: Option<usize>,
    pub steps_per_epoch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub adam: AdamConfig,
    pub charbonnier_eps: f64,
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub seed: u64,
    #[serde(default)]
    pub desk_scale_overrides: Option<DeskOverrides>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            adam: AdamConfig::default(),
            charbonnier_eps: 1e-3,
            batch_size: 2,
            steps_per_epoch: 50,
            seed: 0,
            desk_scale_overrides: None,
        }
    }
}

impl TrainConfig {
    /// Applies the desk overrides, if any.
    pub fn effective(&self) -> TrainConfig {
        let mut c = self.clone();
        if let Some(o) = self.desk_scale_overrides {
            c.stage1.epochs = o.stage1_epochs.unwrap_or(c.stage1.epochs);
            c.stage2.warmup_epochs = o.warmup_epochs.unwrap_or(c.stage2.warmup_epochs);
            c.stage2.finetune_epochs = o.finetune_epochs.unwrap_or(c.stage2.finetune_epochs);
            c.steps_per_epoch = o.steps_per_epoch.unwrap_or(c.steps_per_epoch);
        }
        c.desk_scale_overrides = None;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.effective();
        let lrs = [c.stage1.lr, c.stage2.warmup_lr, c.stage2.finetune_lr];
        if lrs.iter().any(|&lr| !(lr > 0.0)) {
            return Err(GavnError::Config("all learning rates must be > 0".into()));
        }
        if c.stage1.epochs == 0 || c.stage2.warmup_epochs == 0 || c.stage2.finetune_epochs == 0 {
            return Err(GavnError::Config("all epoch counts must be >= 1".into()));
        }
        if c.batch_size == 0 || c.steps_per_epoch == 0 {
            return Err(GavnError::Config("batch_size and steps_per_epoch must be >= 1".into()));
        }
        if !(c.charbonnier_eps > 0.0) {
            return Err(GavnError::Config("charbonnier_eps must be > 0".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        let c = self.effective();
        (c.stage1.epochs + c.stage2.warmup_epochs + c.stage2.finetune_epochs) * c.steps_per_epoch
    }
}

/// What gets trained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainPlan {
    /// Stage 1 (temporal + head), then stage 2 warm-up and fine-tuning.
    #[default]
    TwoStage,
    /// The temporal module and its head only, over the same epoch schedule.
    TemporalOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase {
    pub stage: &'static str,
    pub name: &'static str,
    pub epochs: usize,
    pub lr: f64,
    pub trainable: Vec<&'static str>,
    pub path: OutputPath,
}

pub fn phases(cfg: &TrainConfig, plan: TrainPlan) -> Vec<Phase> {
    let c = cfg.effective();
    let stage1 = Phase {
        stage: "stage1",
        name: "main",
        epochs: c.stage1.epochs,
        lr: c.stage1.lr,
        trainable: vec![TEMPORAL_PREFIX, HEAD1_PREFIX],
        path: OutputPath::TemporalOnly,
    };
    match plan {
        TrainPlan::TwoStage => vec![
            stage1,
            Phase {
                stage: "stage2",
                name: "warmup",
                epochs: c.stage2.warmup_epochs,
                lr: c.stage2.warmup_lr,
                trainable: vec![IDENTITY_PREFIX, RECON_PREFIX],
                path: OutputPath::Full,
            },
            Phase {
                stage: "stage2",
                name: "finetune",
                epochs: c.stage2.finetune_epochs,
                lr: c.stage2.finetune_lr,
                trainable: vec![TEMPORAL_PREFIX, IDENTITY_PREFIX, RECON_PREFIX],
                path: OutputPath::Full,
            },
        ],
        TrainPlan::TemporalOnly => vec![
            stage1.clone(),
            Phase {
                stage: "stage2",
                name: "warmup",
                epochs: c.stage2.warmup_epochs,
                lr: c.stage2.warmup_lr,
                ..stage1.clone()
            },
            Phase {
                stage: "stage2",
                name: "finetune",
                epochs: c.stage2.finetune_epochs,
                lr: c.stage2.finetune_lr,
                ..stage1
            },
        ],
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    /// `step` or `epoch`.
    pub event: String,
    pub step: u64,
    pub stage: String,
    pub phase: String,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Directory for checkpoints and logs; nothing is written when `None`.
    pub run_dir: Option<PathBuf>,
    /// Continue from `checkpoints/last.ckpt` when it exists.
    pub resume: bool,
    /// Return after this many epochs in total (simulates an interruption).
    pub stop_after_epochs: Option<usize>,
    pub plan: TrainPlan,
    /// Stored in every checkpoint header.
    pub config_echo: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub completed: bool,
    pub log: Vec<LogEvent>,
    pub stage1_checkpoint: Option<Checkpoint>,
    pub final_checkpoint: Checkpoint,
}

pub const LAST_CHECKPOINT: &str = "checkpoints/last.ckpt";
pub const STAGE1_CHECKPOINT: &str = "checkpoints/stage1.ckpt";
pub const FINAL_CHECKPOINT: &str = "checkpoints/final.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const TIMING_LOG: &str = "timing.jsonl";

fn epoch_rng(seed: u64, phase: usize, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((phase as u64) << 32) | epoch as u64);
    rng
}

/// `(clip, first output frame)` pairs for one epoch.
fn epoch_batches(
    data: &[TrainingClip],
    cfg: &TrainConfig,
    window: usize,
    outputs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<(usize, usize)>>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut cursor = 0;
    let mut batches = Vec::with_capacity(cfg.steps_per_epoch);
    for _ in 0..cfg.steps_per_epoch {
        let mut items = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let ci = order[cursor % order.len()];
            cursor += 1;
            let t = data[ci].num_frames();
            if t < window {
                return Err(shape_err!("clip `{}` has {t} frames, a window needs {window}", data[ci].name));
            }
            // Crops stay inside the clip: the window spans first-2 ..= first+outputs+1.
            let first = rng.random_range(2..=t - outputs - 2);
            items.push((ci, first));
        }
        batches.push(items);
    }
    Ok(batches)
}

/// Loss of one batch; records the graph and returns it with the loss node.
fn batch_loss(model: &GavnModel, data: &[TrainingClip], items: &[(usize, usize)], path: OutputPath, eps: f64) -> Result<(Graph, crate::diffops::Var)> {
    let layout = model.layout();
    let (input, targets) = assemble_windows(data, items, &layout)?;
    let mut g = Graph::new();
    let outs = model.forward(&mut g, &input, path)?;
    let tv: Vec<_> = targets.into_iter().map(|t| g.constant(t)).collect();
    let pred = g.concat(&outs)?;
    let gt = g.concat(&tv)?;
    let loss = g.charbonnier(pred, gt, eps)?;
    Ok((g, loss))
}

fn append_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| GavnError::io(path, e))?;
    let mut buf = String::new();
    for it in items {
        buf.push_str(&serde_json::to_string(it)?);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| GavnError::io(path, e))
}

fn read_log(path: &Path) -> Result<Vec<LogEvent>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| GavnError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(GavnError::from))
        .collect()
}

fn write_log(path: &Path, events: &[LogEvent]) -> Result<()> {
    let _ = fs::remove_file(path);
    append_lines(path, events)
}

/// Runs the schedule for `plan`, optionally resuming and writing artifacts.
pub fn train(model: &mut GavnModel, data: &[TrainingClip], cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(GavnError::InvalidArgument("training needs at least one clip".into()));
    }
    let eff = cfg.effective();
    let plan = phases(cfg, opts.plan);
    let layout = model.layout();
    let run_dir = opts.run_dir.as_deref();
    if let Some(dir) = run_dir {
        fs::create_dir_all(dir.join("checkpoints")).map_err(|e| GavnError::io(dir, e))?;
    }

    let mut start_phase = 0;
    let mut start_epoch = 0;
    let mut step: u64 = 0;
    let mut adam = AdamState::new();
    let mut log: Vec<LogEvent> = Vec::new();
    let mut stage1_checkpoint = None;

    if let (true, Some(dir)) = (opts.resume, run_dir) {
        let last = dir.join(LAST_CHECKPOINT);
        if last.exists() {
            let ck = Checkpoint::load(&last)?;
            let pi = plan
                .iter()
                .position(|p| p.stage == ck.header.stage && p.name == ck.header.phase)
                .ok_or_else(|| {
                    GavnError::Checkpoint(format!(
                        "checkpoint phase {}/{} is not part of this schedule",
                        ck.header.stage, ck.header.phase
                    ))
                })?;
            ck.restore_params(&mut model.store, true)?;
            step = ck.header.step;
            if ck.header.epoch >= plan[pi].epochs {
                start_phase = pi + 1;
                start_epoch = 0;
            } else {
                start_phase = pi;
                start_epoch = ck.header.epoch;
                adam = ck.restore_adam(&model.store)?;
            }
            log = read_log(&dir.join(TRAIN_LOG))?;
            log.retain(|e| e.step <= step);
            write_log(&dir.join(TRAIN_LOG), &log)?;
            let s1 = dir.join(STAGE1_CHECKPOINT);
            if s1.exists() {
                stage1_checkpoint = Some(Checkpoint::load(&s1)?);
            }
        } else {
            write_log(&dir.join(TRAIN_LOG), &[])?;
        }
    } else if let Some(dir) = run_dir {
        write_log(&dir.join(TRAIN_LOG), &[])?;
        let _ = fs::remove_file(dir.join(TIMING_LOG));
    }

    let meta = |phase: &Phase, epoch: usize, step: u64| CheckpointMeta {
        stage: phase.stage.to_string(),
        phase: phase.name.to_string(),
        epoch,
        step,
        seed: eff.seed,
        config: opts.config_echo.clone(),
    };

    let mut epochs_run = 0usize;
    let started = Instant::now();
    for (pi, phase) in plan.iter().enumerate().skip(start_phase) {
        model.store.train_only(&phase.trainable);
        let first_epoch = if pi == start_phase { start_epoch } else { 0 };
        if first_epoch == 0 {
            adam.reset();
        }
        for epoch in first_epoch..phase.epochs {
            let mut rng = epoch_rng(eff.seed, pi, epoch);
            let batches = epoch_batches(data, &eff, layout.input_count(), layout.output_count(), &mut rng)?;
            let mut epoch_events = Vec::with_capacity(batches.len() + 1);
            let mut timing = Vec::new();
            let mut sum = 0.0;
            for items in &batches {
                let (mut g, loss) = batch_loss(model, data, items, phase.path, eff.charbonnier_eps)?;
                let lv = g.scalar(loss);
                if !lv.is_finite() {
                    let hint = run_dir
                        .map(|d| format!("; last good checkpoint: {}", d.join(LAST_CHECKPOINT).display()))
                        .unwrap_or_default();
                    return Err(GavnError::Numerical(format!(
                        "non-finite loss at step {} ({} {}){hint}",
                        step + 1,
                        phase.stage,
                        phase.name
                    )));
                }
                model.store.zero_grad();
                g.backward(loss)?;
                g.accumulate_param_grads(&mut model.store)?;
                adam_step(&mut model.store, &mut adam, phase.lr, &eff.adam)?;
                step += 1;
                sum += lv;
                epoch_events.push(LogEvent {
                    event: "step".into(),
                    step,
                    stage: phase.stage.into(),
                    phase: phase.name.into(),
                    epoch,
                    lr: phase.lr,
                    loss: lv,
                });
                timing.push(serde_json::json!({"step": step, "wall_time": started.elapsed().as_secs_f64()}));
            }
            epoch_events.push(LogEvent {
                event: "epoch".into(),
                step,
                stage: phase.stage.into(),
                phase: phase.name.into(),
                epoch,
                lr: phase.lr,
                loss: sum / batches.len() as f64,
            });
            if let Some(dir) = run_dir {
                append_lines(&dir.join(TRAIN_LOG), &epoch_events)?;
                append_lines(&dir.join(TIMING_LOG), &timing)?;
                Checkpoint::capture(&model.store, Some(&adam), meta(phase, epoch + 1, step)).save(&dir.join(LAST_CHECKPOINT))?;
            }
            log.extend(epoch_events);
            epochs_run += 1;
            let last_of_phase = epoch + 1 == phase.epochs;
            if last_of_phase && phase.stage == "stage1" {
                let ck = Checkpoint::capture(&model.store, None, meta(phase, epoch + 1, step));
                if let Some(dir) = run_dir {
                    ck.save(&dir.join(STAGE1_CHECKPOINT))?;
                }
                stage1_checkpoint = Some(ck);
            }
            if opts.stop_after_epochs.is_some_and(|n| epochs_run >= n) && !(last_of_phase && pi + 1 == plan.len()) {
                model.store.unfreeze_all();
                let ck = Checkpoint::capture(&model.store, Some(&adam), meta(phase, epoch + 1, step));
                return Ok(TrainOutcome {
                    completed: false,
                    log,
                    stage1_checkpoint,
                    final_checkpoint: ck,
                });
            }
        }
    }
    model.store.unfreeze_all();
    let last = plan.last().expect("nonempty schedule");
    let final_checkpoint = Checkpoint::capture(&model.store, None, meta(last, last.epochs, step));
    if let Some(dir) = run_dir {
        final_checkpoint.save(&dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(TrainOutcome {
        completed: true,
        log,
        stage1_checkpoint,
        final_checkpoint,
    })
}

fn run_subset(model: &mut GavnModel, data: &[TrainingClip], cfg: &TrainConfig, keep: &[usize]) -> Result<Vec<LogEvent>> {
    cfg.validate()?;
    let eff = cfg.effective();
    let plan = phases(cfg, TrainPlan::TwoStage);
    let mut log = Vec::new();
    let mut step = 0u64;
    let layout = model.layout();
    for &pi in keep {
        let phase = &plan[pi];
        model.store.train_only(&phase.trainable);
        let mut adam = AdamState::new();
        for epoch in 0..phase.epochs {
            let mut rng = epoch_rng(eff.seed, pi, epoch);
            for items in epoch_batches(data, &eff, layout.input_count(), layout.output_count(), &mut rng)? {
                let (mut g, loss) = batch_loss(model, data, &items, phase.path, eff.charbonnier_eps)?;
                let lv = g.scalar(loss);
                model.store.zero_grad();
                g.backward(loss)?;
                g.accumulate_param_grads(&mut model.store)?;
                adam_step(&mut model.store, &mut adam, phase.lr, &eff.adam)?;
                step += 1;
                log.push(LogEvent {
                    event: "step".into(),
                    step,
                    stage: phase.stage.into(),
                    phase: phase.name.into(),
                    epoch,
                    lr: phase.lr,
                    loss: lv,
                });
            }
        }
    }
    model.store.unfreeze_all();
    Ok(log)
}

/// Stage 1 alone: temporal module and temporal-only head.
pub fn train_stage1(model: &mut GavnModel, data: &[TrainingClip], cfg: &TrainConfig) -> Result<(Checkpoint, Vec<LogEvent>)> {
    let log = run_subset(model, data, cfg, &[0])?;
    let eff = cfg.effective();
    let ck = Checkpoint::capture(
        &model.store,
        None,
        CheckpointMeta {
            stage: "stage1".into(),
            phase: "main".into(),
            epoch: eff.stage1.epochs,
            step: log.len() as u64,
            seed: eff.seed,
            config: serde_json::Value::Null,
        },
    );
    Ok((ck, log))
}

/// Stage 2 from a stage-1 checkpoint: warm-up on identity + reconstruction,
/// then fine-tuning of everything.
pub fn train_stage2(
    model: &mut GavnModel,
    data: &[TrainingClip],
    cfg: &TrainConfig,
    stage1: &Checkpoint,
) -> Result<(Checkpoint, Vec<LogEvent>)> {
    if stage1.header.stage != "stage1" {
        return Err(GavnError::Checkpoint(format!(
            "stage 2 needs a stage1 checkpoint, got stage `{}`",
            stage1.header.stage
        )));
    }
    stage1.restore_params(&mut model.store, true)?;
    let log = run_subset(model, data, cfg, &[1, 2])?;
    let eff = cfg.effective();
    let ck = Checkpoint::capture(
        &model.store,
        None,
        CheckpointMeta {
            stage: "stage2".into(),
            phase: "finetune".into(),
            epoch: eff.stage2.finetune_epochs,
            step: stage1.header.step + log.len() as u64,
            seed: eff.seed,
            config: serde_json::Value::Null,
        },
    );
    Ok((ck, log))
}

/// Restores every frame of a clip with sliding windows (unclamped output).
pub fn restore_frames(model: &GavnModel, clip: &TrainingClip, path: OutputPath) -> Result<Array4<f64>> {
    let layout = model.layout();
    let starts = sliding_windows(clip.num_frames(), &layout)?;
    let mut out = Array4::zeros(clip.degraded.raw_dim());
    let clips = std::slice::from_ref(clip);
    for chunk in starts.chunks(4) {
        let items: Vec<(usize, usize)> = chunk.iter().map(|&s| (0, s)).collect();
        let (input, _) = assemble_windows(clips, &items, &layout)?;
        let frames = model.infer(&input, path)?;
        for (bi, &s) in chunk.iter().enumerate() {
            for (o, f) in frames.iter().enumerate() {
                out.index_axis_mut(ndarray::Axis(0), s + o).assign(&f.index_axis(ndarray::Axis(0), bi));
            }
        }
    }
    Ok(out)
}

/// Mean per-frame PSNR of restored (clamped) frames against ground truth.
pub fn mean_restored_psnr(model: &GavnModel, data: &[TrainingClip], path: OutputPath) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for clip in data {
        let out = restore_frames(model, clip, path)?.mapv(|v| v.clamp(0.0, 1.0));
        for t in 0..clip.num_frames() {
            let a = out.index_axis(ndarray::Axis(0), t);
            let b = clip.gt.index_axis(ndarray::Axis(0), t);
            total += crate::metrics::psnr(&a, &b, 1.0)?;
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}

/// Mean per-frame PSNR of the degraded inputs against ground truth.
pub fn mean_degraded_psnr(data: &[TrainingClip]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for clip in data {
        for t in 0..clip.num_frames() {
            let a = clip.degraded.index_axis(ndarray::Axis(0), t);
            let b = clip.gt.index_axis(ndarray::Axis(0), t);
            total += crate::metrics::psnr(&a, &b, 1.0)?;
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charbonnier_closed_forms() {
        let a = Array4::from_elem((1, 1, 2, 2), 0.3);
        assert!((charbonnier_loss(&a, &a, 1e-3).unwrap() - 1e-3).abs() < 1e-15);
        let b = a.mapv(|v| v + 0.003);
        let expected = (9e-6f64 + 1e-6).sqrt();
        assert!((charbonnier_loss(&a, &b, 1e-3).unwrap() - expected).abs() < 1e-12);
        assert!(charbonnier_loss(&a, &Array4::zeros((1, 1, 2, 1)), 1e-3).is_err());
    }

    #[test]
    fn default_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.stage1, Stage1Config { epochs: 20, lr: 4e-4 });
        assert_eq!(c.stage2.warmup_epochs, 5);
        assert_eq!(c.stage2.finetune_epochs, 15);
        assert_eq!(c.stage2.finetune_lr, 2e-4);
        assert_eq!((c.adam.beta1, c.adam.beta2), (0.9, 0.999));
    }

    #[test]
    fn overrides_apply() {
        let c = TrainConfig {
            desk_scale_overrides: Some(DeskOverrides {
                stage1_epochs: Some(2),
                steps_per_epoch: Some(3),
                ..Default::default()
            }),
            ..Default::default()
        };
        let e = c.effective();
        assert_eq!((e.stage1.epochs, e.steps_per_epoch, e.stage2.warmup_epochs), (2, 3, 5));
    }
}
