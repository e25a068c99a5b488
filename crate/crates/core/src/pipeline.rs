//! Run configuration and the end-to-end commands: data generation,
//! degradation, training, restoration and evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clip_io::{quantize_frames, read_clip, write_clip, write_json, ClipManifest};
use crate::degrade::{degrade_clip, DegradationSpec};
use crate::error::{GavnError, Result};
use crate::landmark::{
    landmark_samples, train_landmark_net, LandmarkNet, LandmarkNetConfig, LandmarkSource, LandmarkTrainConfig,
    LandmarkTrainReport,
};
use crate::metrics::{reports_to_csv, MetricReport};
use crate::reconstructor::{GavnConfig, GavnModel, OutputPath};
use crate::synthclip::{gen_clip, Clip, SceneParams};
use crate::trainer::{
    file_sha256, learned_heatmaps, oracle_heatmaps, restore_frames, train, Checkpoint, CheckpointMeta, TrainConfig,
    TrainOptions, TrainOutcome, TrainPlan, TrainingClip, FINAL_CHECKPOINT,
};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const LANDMARK_CHECKPOINT: &str = "landmark.ckpt";
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub count: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.start..self.start + self.count
    }

    fn overlaps(&self, other: &SeedRange) -> bool {
        self.count > 0 && other.count > 0 && self.start < other.start + other.count && other.start < self.start + self.count
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Clip duration in seconds.
    pub duration: f64,
    pub train: SeedRange,
    pub val: SeedRange,
    pub test: SeedRange,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            duration: 2.0,
            train: SeedRange { start: 1000, count: 8 },
            val: SeedRange { start: 2000, count: 2 },
            test: SeedRange { start: 3000, count: 2 },
        }
    }
}

impl DataConfig {
    pub fn split(&self, name: &str) -> Option<&SeedRange> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// Audio windows replaced by zeros.
    NoAudio,
    /// Temporal module and its head only.
    NoIdentity,
}

impl std::str::FromStr for Ablation {
    type Err = GavnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "no-audio" => Ok(Self::NoAudio),
            "no-identity" => Ok(Self::NoIdentity),
            other => Err(GavnError::InvalidArgument(format!(
                "unknown ablation `{other}` (expected no-audio or no-identity)"
            ))),
        }
    }
}

impl Ablation {
    pub fn zero_audio(self) -> bool {
        self == Ablation::NoAudio
    }

    pub fn output_path(self) -> OutputPath {
        match self {
            Ablation::NoIdentity => OutputPath::TemporalOnly,
            _ => OutputPath::Full,
        }
    }

    pub fn plan(self) -> TrainPlan {
        match self {
            Ablation::NoIdentity => TrainPlan::TemporalOnly,
            _ => TrainPlan::TwoStage,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandmarkSettings {
    pub channels: usize,
    pub hidden: usize,
    pub train: LandmarkTrainConfig,
}

impl Default for LandmarkSettings {
    fn default() -> Self {
        LandmarkSettings {
            channels: 8,
            hidden: 64,
            train: LandmarkTrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data_dir: PathBuf,
    pub degraded_dir: PathBuf,
    pub run_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            data_dir: "out/data".into(),
            degraded_dir: "out/degraded".into(),
            run_dir: "out/run".into(),
        }
    }
}

/// The single declarative configuration of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub scene: SceneParams,
    pub data: DataConfig,
    /// Grid applied by `degrade`.
    pub degradations: Vec<DegradationSpec>,
    /// The grid entry used for training.
    pub train_degradation: DegradationSpec,
    pub model: GavnConfig,
    pub train: TrainConfig,
    pub landmark: LandmarkSettings,
    pub ablation: Ablation,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scene: SceneParams::default(),
            data: DataConfig::default(),
            degradations: vec![
                DegradationSpec::compression(0.15),
                DegradationSpec::blur(7),
                DegradationSpec::low_resolution(4.0),
            ],
            train_degradation: DegradationSpec::blur(7),
            model: GavnConfig::default(),
            train: TrainConfig::default(),
            landmark: LandmarkSettings::default(),
            ablation: Ablation::None,
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(GavnError::MissingPaths(vec![path.to_path_buf()]));
        }
        let text = fs::read_to_string(path).map_err(|e| GavnError::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| GavnError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copies the master seed into every seeded component.
    pub fn resolve(mut self) -> Result<Self> {
        self.model.init_seed = self.seed;
        self.train.seed = self.seed;
        self.landmark.train.seed = self.seed;
        self.model.height = self.scene.height;
        self.model.width = self.scene.width;
        self.model.num_landmarks = self.scene.num_landmarks;
        self.model.fps = self.scene.fps;
        self.model.sample_rate = self.scene.sample_rate;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if !(self.data.duration > 0.0) {
            return Err(GavnError::Config("data.duration must be > 0".into()));
        }
        let ranges = [("train", &self.data.train), ("val", &self.data.val), ("test", &self.data.test)];
        for (i, (a, ra)) in ranges.iter().enumerate() {
            for (b, rb) in &ranges[i + 1..] {
                if ra.overlaps(rb) {
                    return Err(GavnError::Config(format!("{a} and {b} seed ranges overlap")));
                }
            }
        }
        for d in self.degradations.iter().chain(std::iter::once(&self.train_degradation)) {
            d.validate().map_err(|e| GavnError::Config(e.to_string()))?;
        }
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(RESOLVED_CONFIG), self)
    }
}

/// Refuses non-empty output directories unless `force`, in which case they are cleared.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| GavnError::io(dir, e))?.next().is_some();
        if non_empty {
            if !force {
                return Err(GavnError::InvalidArgument(format!(
                    "{} is not empty (use --force to overwrite)",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir).map_err(|e| GavnError::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| GavnError::io(dir, e))
}

pub fn clip_dir_name(seed: u64) -> String {
    format!("clip_{seed:06}")
}

/// Writes train/val/test clips with disjoint seed ranges.
pub fn gen_data(cfg: &RunConfig, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    prepare_out_dir(out_dir, force)?;
    let mut written = Vec::new();
    for split in SPLITS {
        for seed in cfg.data.split(split).expect("known split").seeds() {
            let clip = gen_clip(&cfg.scene, cfg.data.duration, seed)?;
            let dir = out_dir.join(split).join(clip_dir_name(seed));
            write_clip(&dir, &clip, &ClipManifest::for_clip(&clip))?;
            written.push(dir);
        }
    }
    cfg.write_resolved(out_dir)?;
    Ok(written)
}

/// Clip directories (those holding a manifest) below `root`, as relative paths, sorted.
pub fn find_clip_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.exists() {
        return Err(GavnError::MissingPaths(vec![root.to_path_buf()]));
    }
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let dir = root.join(&rel);
        if dir.join("manifest.json").exists() {
            out.push(rel);
            continue;
        }
        for entry in fs::read_dir(&dir).map_err(|e| GavnError::io(&dir, e))? {
            let entry = entry.map_err(|e| GavnError::io(&dir, e))?;
            if entry.file_type().map_err(|e| GavnError::io(entry.path(), e))?.is_dir() {
                let name = entry.file_name();
                if name == "metrics" {
                    continue;
                }
                stack.push(rel.join(name));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// The clip directories `gen_data` produces for `cfg`.
pub fn expected_clip_dirs(cfg: &RunConfig, root: &Path) -> Vec<PathBuf> {
    SPLITS
        .iter()
        .flat_map(|split| {
            cfg.data
                .split(split)
                .expect("known split")
                .seeds()
                .map(move |s| root.join(split).join(clip_dir_name(s)))
        })
        .collect()
}

/// Applies every grid entry to every clip: `<out>/<tag>/<split>/<clip>`.
pub fn degrade_dataset(cfg: &RunConfig, in_dir: &Path, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let inputs = expected_clip_dirs(cfg, in_dir);
    let missing: Vec<PathBuf> = inputs
        .iter()
        .flat_map(|d| crate::clip_io::required_paths(d))
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(GavnError::MissingPaths(missing));
    }
    prepare_out_dir(out_dir, force)?;
    let mut written = Vec::new();
    for dir in &inputs {
        let (clip, manifest) = read_clip(dir)?;
        let rel = dir.strip_prefix(in_dir).expect("built under in_dir");
        for spec in &cfg.degradations {
            let spec = spec.with_seed(spec.seed ^ clip.seed);
            let mut out = degrade_clip(&clip, &spec)?;
            out.frames = quantize_frames(&out.frames);
            let mut m = manifest.clone();
            m.degradation = Some(spec);
            let dst = out_dir.join(spec_tag(&spec)).join(rel);
            write_clip(&dst, &out, &m)?;
            written.push(dst);
        }
    }
    cfg.write_resolved(out_dir)?;
    Ok(written)
}

/// Directory tag of a grid entry (seed excluded).
pub fn spec_tag(spec: &DegradationSpec) -> String {
    spec.tag()
}

/// Reads the ground-truth and degraded clips of one split.
pub fn load_split(cfg: &RunConfig, split: &str) -> Result<Vec<(String, Clip, Clip)>> {
    let range = cfg
        .data
        .split(split)
        .ok_or_else(|| GavnError::InvalidArgument(format!("unknown split `{split}`")))?;
    let deg_root = cfg.paths.degraded_dir.join(spec_tag(&cfg.train_degradation));
    range
        .seeds()
        .map(|s| {
            let name = clip_dir_name(s);
            let (gt, _) = read_clip(&cfg.paths.data_dir.join(split).join(&name))?;
            let (deg, _) = read_clip(&deg_root.join(split).join(&name))?;
            Ok((name, gt, deg))
        })
        .collect()
}

pub fn landmark_net_config(model: &GavnConfig, settings: &LandmarkSettings, seed: u64) -> LandmarkNetConfig {
    LandmarkNetConfig {
        height: model.height,
        width: model.width,
        num_landmarks: model.num_landmarks,
        audio_len: model.audio_len(),
        audio_bins: model.audio_bins,
        channels: settings.channels,
        hidden: settings.hidden,
        init_seed: seed,
    }
}

/// Trains the landmark regressor on `(ground truth, degraded)` pairs.
pub fn fit_landmark_net(
    model: &GavnConfig,
    settings: &LandmarkSettings,
    pairs: &[(&Clip, &Clip)],
    zero_audio: bool,
) -> Result<(LandmarkNet, LandmarkTrainReport)> {
    let mut net = LandmarkNet::new(landmark_net_config(model, settings, settings.train.seed))?;
    let mut samples = Vec::new();
    for (gt, deg) in pairs {
        samples.extend(landmark_samples(gt, deg, model.audio_half_width, zero_audio)?);
    }
    let report = train_landmark_net(&mut net, &samples, &settings.train)?;
    Ok((net, report))
}

/// Builds model-ready clips with heatmaps from the configured landmark source.
pub fn prepare_clips(
    model: &GavnConfig,
    clips: &[(String, Clip, Clip)],
    net: Option<&LandmarkNet>,
    zero_audio: bool,
) -> Result<Vec<TrainingClip>> {
    clips
        .iter()
        .map(|(name, gt, deg)| {
            let hm = match (model.landmarks, net) {
                (LandmarkSource::Oracle, _) => oracle_heatmaps(gt, model.heatmap_sigma)?,
                (LandmarkSource::Learned, Some(net)) => {
                    learned_heatmaps(net, deg, model.audio_half_width, zero_audio, model.heatmap_sigma)?
                }
                (LandmarkSource::Learned, None) => {
                    return Err(GavnError::InvalidArgument("learned landmarks need a trained regressor".into()))
                }
            };
            TrainingClip::new(name, gt, deg, hm, model.audio_half_width, zero_audio)
        })
        .collect()
}

/// Summary of a `train` command.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub outcome: TrainOutcome,
    pub landmark_report: Option<LandmarkTrainReport>,
}

/// Trains from on-disk data into `cfg.paths.run_dir`.
///
/// An existing run directory with the same resolved config is resumed from
/// its last checkpoint; a different config is rejected unless `force`.
pub fn train_run(cfg: &RunConfig, force: bool, stop_after_epochs: Option<usize>) -> Result<TrainRun> {
    cfg.validate()?;
    let run_dir = &cfg.paths.run_dir;
    let resolved = run_dir.join(RESOLVED_CONFIG);
    let mut resume = false;
    if force {
        prepare_out_dir(run_dir, true)?;
    } else if resolved.exists() {
        let previous: RunConfig = crate::clip_io::read_json(&resolved)?;
        if &previous != cfg {
            return Err(GavnError::InvalidArgument(format!(
                "{} holds a run with a different config (use --force to start over)",
                run_dir.display()
            )));
        }
        resume = true;
    } else {
        prepare_out_dir(run_dir, false)?;
    }
    cfg.write_resolved(run_dir)?;

    let clips = load_split(cfg, "train")?;
    let zero_audio = cfg.ablation.zero_audio();
    let (net, landmark_report) = if cfg.model.landmarks == LandmarkSource::Learned {
        let ck_path = run_dir.join("checkpoints").join(LANDMARK_CHECKPOINT);
        if resume && ck_path.exists() {
            let mut net = LandmarkNet::new(landmark_net_config(&cfg.model, &cfg.landmark, cfg.landmark.train.seed))?;
            Checkpoint::load(&ck_path)?.restore_params(&mut net.store, true)?;
            (Some(net), None)
        } else {
            let pairs: Vec<(&Clip, &Clip)> = clips.iter().map(|(_, g, d)| (g, d)).collect();
            let (net, report) = fit_landmark_net(&cfg.model, &cfg.landmark, &pairs, zero_audio)?;
            let meta = CheckpointMeta {
                stage: "landmark".into(),
                phase: "main".into(),
                epoch: cfg.landmark.train.epochs,
                step: 0,
                seed: cfg.seed,
                config: serde_json::to_value(&net.config)?,
            };
            Checkpoint::capture(&net.store, None, meta).save(&ck_path)?;
            (Some(net), Some(report))
        }
    } else {
        (None, None)
    };
    let data = prepare_clips(&cfg.model, &clips, net.as_ref(), zero_audio)?;
    let mut model = GavnModel::new(cfg.model.clone())?;
    let opts = TrainOptions {
        run_dir: Some(run_dir.clone()),
        resume,
        stop_after_epochs,
        plan: cfg.ablation.plan(),
        config_echo: cfg.to_json()?,
    };
    let outcome = train(&mut model, &data, &cfg.train, &opts)?;
    Ok(TrainRun {
        outcome,
        landmark_report,
    })
}

/// Rebuilds a model (and regressor, if needed) from a checkpoint written by `train`.
pub fn load_trained(checkpoint: &Path) -> Result<(RunConfig, GavnModel, Option<LandmarkNet>)> {
    let ck = Checkpoint::load(checkpoint)?;
    let cfg: RunConfig = serde_json::from_value(ck.header.config.clone())
        .map_err(|e| GavnError::Checkpoint(format!("checkpoint config is not a run config: {e}")))?;
    let mut model = GavnModel::new(cfg.model.clone())?;
    ck.restore_params(&mut model.store, true)?;
    let net = if cfg.model.landmarks == LandmarkSource::Learned {
        let path = checkpoint.with_file_name(LANDMARK_CHECKPOINT);
        let mut net = LandmarkNet::new(landmark_net_config(&cfg.model, &cfg.landmark, cfg.landmark.train.seed))?;
        Checkpoint::load(&path)?.restore_params(&mut net.store, true)?;
        Some(net)
    } else {
        None
    };
    Ok((cfg, model, net))
}

/// A trained model ready for restoration.
pub struct Restorer {
    pub config: RunConfig,
    pub model: GavnModel,
    pub landmark_net: Option<LandmarkNet>,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
}

impl Restorer {
    pub fn load(checkpoint: &Path) -> Result<Self> {
        let (config, model, landmark_net) = load_trained(checkpoint)?;
        Ok(Restorer {
            config,
            model,
            landmark_net,
            checkpoint: checkpoint.to_path_buf(),
            checkpoint_sha256: file_sha256(checkpoint)?,
        })
    }

    /// Restores a clip in memory; output frames are clamped to `[0, 1]`.
    pub fn restore(&self, clip: &Clip) -> Result<Clip> {
        let mc = &self.config.model;
        if (clip.height(), clip.width()) != (mc.height, mc.width) {
            return Err(GavnError::Shape(format!(
                "clip is {}x{}, model expects {}x{}",
                clip.height(),
                clip.width(),
                mc.height,
                mc.width
            )));
        }
        let zero_audio = self.config.ablation.zero_audio();
        // Degraded clips keep the pristine landmarks, so the oracle source stays available.
        let prepared = prepare_clips(
            mc,
            &[("clip".into(), clip.clone(), clip.clone())],
            self.landmark_net.as_ref(),
            zero_audio,
        )?;
        let frames = restore_frames(&self.model, &prepared[0], self.config.ablation.output_path())?;
        let mut out = clip.clone();
        out.frames = frames.mapv(|v| v.clamp(0.0, 1.0));
        Ok(out)
    }

    /// Restores one clip directory into `out_dir` (which must not exist or be empty).
    pub fn restore_dir(&self, clip_dir: &Path, out_dir: &Path) -> Result<()> {
        let (clip, mut manifest) = read_clip(clip_dir)?;
        let mut out = self.restore(&clip)?;
        out.frames = quantize_frames(&out.frames);
        manifest.provenance = Some(serde_json::json!({
            "checkpoint": self.checkpoint.display().to_string(),
            "checkpoint_sha256": self.checkpoint_sha256,
            "config": self.config.to_json()?,
        }));
        write_clip(out_dir, &out, &manifest)
    }
}

/// Restores `clip_dir`, or every clip below it, mirroring the layout under `out_dir`.
pub fn restore_tree(checkpoint: &Path, clip_dir: &Path, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    let rels = find_clip_dirs(clip_dir)?;
    if rels.is_empty() {
        return Err(GavnError::MissingPaths(vec![clip_dir.join("manifest.json")]));
    }
    let restorer = Restorer::load(checkpoint)?;
    prepare_out_dir(out_dir, force)?;
    let mut written = Vec::new();
    for rel in rels {
        let dst = out_dir.join(&rel);
        restorer.restore_dir(&clip_dir.join(&rel), &dst)?;
        written.push(dst);
    }
    Ok(written)
}

/// Writes a zero-trained (freshly initialized) checkpoint for `cfg`.
pub fn write_init_checkpoint(cfg: &RunConfig, path: &Path) -> Result<()> {
    let model = GavnModel::new(cfg.model.clone())?;
    let meta = CheckpointMeta {
        stage: "init".into(),
        phase: "main".into(),
        epoch: 0,
        step: 0,
        seed: cfg.seed,
        config: cfg.to_json()?,
    };
    Checkpoint::capture(&model.store, None, meta).save(path)
}

/// Scores every clip under `restored_dir` against the same relative path under `gt_dir`.
pub fn eval_dirs(gt_dir: &Path, restored_dir: &Path, method: &str, out_dir: &Path) -> Result<Vec<MetricReport>> {
    let rels = find_clip_dirs(restored_dir)?;
    if rels.is_empty() {
        return Err(GavnError::InvalidArgument(format!("no clips found under {}", restored_dir.display())));
    }
    let mut reports = Vec::new();
    for rel in &rels {
        let (out, _) = read_clip(&restored_dir.join(rel))?;
        let gt_path = locate_gt(gt_dir, rel)?;
        let (gt, _) = read_clip(&gt_path)?;
        if gt.num_frames() != out.num_frames() {
            return Err(GavnError::Shape(format!(
                "{}: ground truth has {} frames, restored has {}",
                rel.display(),
                gt.num_frames(),
                out.num_frames()
            )));
        }
        let name = if rel.as_os_str().is_empty() {
            gt_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        } else {
            rel.display().to_string()
        };
        reports.push(MetricReport::compute(&name, method, &gt.frames, &out.frames, &gt.landmarks)?);
    }
    fs::create_dir_all(out_dir).map_err(|e| GavnError::io(out_dir, e))?;
    for (i, r) in reports.iter().enumerate() {
        write_json(&out_dir.join(format!("report_{i:03}.json")), r)?;
    }
    let csv = out_dir.join("summary.csv");
    fs::write(&csv, reports_to_csv(&reports)).map_err(|e| GavnError::io(&csv, e))?;
    Ok(reports)
}

/// Finds the ground-truth clip for a restored clip: the same relative path,
/// or its trailing `<split>/<clip>` components when the restored tree carries
/// a degradation tag in front.
fn locate_gt(gt_dir: &Path, rel: &Path) -> Result<PathBuf> {
    let direct = gt_dir.join(rel);
    if direct.join("manifest.json").exists() {
        return Ok(direct);
    }
    let comps: Vec<_> = rel.components().collect();
    for skip in 1..comps.len() {
        let cand: PathBuf = comps[skip..].iter().collect();
        let p = gt_dir.join(&cand);
        if p.join("manifest.json").exists() {
            return Ok(p);
        }
    }
    Err(GavnError::MissingPaths(vec![direct.join("manifest.json")]))
}

/// Path of the final checkpoint of a run directory.
pub fn final_checkpoint(run_dir: &Path) -> PathBuf {
    run_dir.join(FINAL_CHECKPOINT)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlapping_ranges_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.data.val = SeedRange { start: 1004, count: 2 };
        assert!(matches!(cfg.validate(), Err(GavnError::Config(_))));
    }

    #[test]
    fn default_split_sizes() {
        let cfg = RunConfig::default();
        assert_eq!((cfg.data.train.count, cfg.data.val.count, cfg.data.test.count), (8, 2, 2));
        cfg.validate().unwrap();
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default().resolve().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
