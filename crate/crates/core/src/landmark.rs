//! Landmarks for degraded frames: heatmap rendering and a small
//! audio-conditioned regressor trained against the analytic oracle.

use ndarray::{Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffops::{sigmoid, Graph, Init, ParamStore, Var};
use crate::error::{shape_err, GavnError, Result};
use crate::nn::ConvLayer;
use crate::synthclip::{audio_window, lm, Clip};
use crate::trainer::adam::{adam_step, AdamConfig, AdamState};

/// Where the identity module's landmarks come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkSource {
    #[default]
    Oracle,
    Learned,
}

impl std::str::FromStr for LandmarkSource {
    type Err = GavnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "learned" => Ok(Self::Learned),
            other => Err(GavnError::InvalidArgument(format!(
                "unknown landmark source `{other}` (expected oracle or learned)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: Vec<[f64; 2]>,
    pub confidence: Vec<f64>,
}

impl LandmarkSet {
    pub fn oracle(points: Vec<[f64; 2]>) -> Self {
        let confidence = vec![1.0; points.len()];
        LandmarkSet { points, confidence }
    }

    /// Landmarks of frame `t` of a clip.
    pub fn from_clip(clip: &Clip, t: usize) -> Self {
        let k = clip.num_landmarks();
        Self::oracle((0..k).map(|i| [clip.landmarks[[t, i, 0]], clip.landmarks[[t, i, 1]]]).collect())
    }
}

pub const DEFAULT_HEATMAP_SIGMA: f64 = 2.0;

/// One Gaussian bump per landmark, each scaled so its maximum is 1.
pub fn render_heatmaps(points: &[[f64; 2]], h: usize, w: usize, sigma: f64) -> Result<Array3<f64>> {
    if !(sigma > 0.0) {
        return Err(GavnError::InvalidArgument(format!("heatmap sigma must be > 0, got {sigma}")));
    }
    let mut maps = Array3::zeros((points.len(), h, w));
    let s2 = 2.0 * sigma * sigma;
    for (k, p) in points.iter().enumerate() {
        let mut map = maps.index_axis_mut(Axis(0), k);
        for y in 0..h {
            let dy = y as f64 - p[1];
            for x in 0..w {
                let dx = x as f64 - p[0];
                map[[y, x]] = (-(dx * dx + dy * dy) / s2).exp();
            }
        }
        let peak = map.fold(0.0f64, |a, &b| a.max(b));
        if peak > 0.0 {
            map.mapv_inplace(|v| v / peak);
        }
    }
    Ok(maps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkNetConfig {
    pub height: usize,
    pub width: usize,
    pub num_landmarks: usize,
    pub audio_len: usize,
    pub audio_bins: usize,
    pub channels: usize,
    pub hidden: usize,
    pub init_seed: u64,
}

/// Three strided convs over the frame, a pooled audio embedding, two dense
/// layers and a sigmoid head over normalized `(x, y)` pairs.
#[derive(Clone, Debug)]
pub struct LandmarkNet {
    pub config: LandmarkNetConfig,
    pub store: ParamStore,
    convs: [ConvLayer; 3],
    audio_fc: ConvLayer,
    fc: ConvLayer,
    head: ConvLayer,
}

pub const LANDMARK_PREFIX: &str = "landmark.";
const AUDIO_EMBED: usize = 16;

impl LandmarkNet {
    pub fn new(config: LandmarkNetConfig) -> Result<Self> {
        let c = config.channels;
        if config.height % 8 != 0 || config.width % 8 != 0 {
            return Err(GavnError::Config(format!(
                "landmark regressor needs frame sizes divisible by 8, got {}x{}",
                config.height, config.width
            )));
        }
        if config.audio_bins == 0 || config.audio_len % config.audio_bins != 0 {
            return Err(GavnError::Config("audio window does not split into bins".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let s = &mut store;
        let r = &mut rng;
        let convs = [
            ConvLayer::new(s, r, "landmark.conv1", 3, c, 3, 2, Init::He)?,
            ConvLayer::new(s, r, "landmark.conv2", c, 2 * c, 3, 2, Init::He)?,
            ConvLayer::new(s, r, "landmark.conv3", 2 * c, 2 * c, 3, 2, Init::He)?,
        ];
        let flat = 2 * c * (config.height / 8) * (config.width / 8);
        let audio_fc = ConvLayer::dense(s, r, "landmark.audio", config.audio_bins, AUDIO_EMBED, Init::He)?;
        let fc = ConvLayer::dense(s, r, "landmark.fc", flat + AUDIO_EMBED, config.hidden, Init::He)?;
        let head = ConvLayer::dense(s, r, "landmark.head", config.hidden, 2 * config.num_landmarks, Init::Zeros)?;
        Ok(LandmarkNet {
            config,
            store,
            convs,
            audio_fc,
            fc,
            head,
        })
    }

    /// `frames (B,3,H,W)`, `audio (B,1,1,S)` to normalized coordinates `(B, 2K, 1, 1)`.
    pub fn forward(&self, g: &mut Graph, frames: Var, audio: Var) -> Result<Var> {
        let cfg = &self.config;
        let (b, c, h, w) = g.shape(frames);
        if (c, h, w) != (3, cfg.height, cfg.width) {
            return Err(shape_err!("landmark net: frames {:?}", g.shape(frames)));
        }
        if g.shape(audio) != (b, 1, 1, cfg.audio_len) {
            return Err(shape_err!("landmark net: audio {:?}", g.shape(audio)));
        }
        let st = &self.store;
        let mut x = frames;
        for conv in &self.convs {
            x = conv.forward_act(g, st, x)?;
        }
        let (_, xc, xh, xw) = g.shape(x);
        let flat = g.reshape(x, (b, xc * xh * xw, 1, 1))?;
        let pooled = g.abs_pool(audio, cfg.audio_len / cfg.audio_bins)?;
        let a = self.audio_fc.forward_act(g, st, pooled)?;
        let cat = g.concat(&[flat, a])?;
        let hdn = self.fc.forward_act(g, st, cat)?;
        let out = self.head.forward(g, st, hdn)?;
        Ok(g.sigmoid(out))
    }

    /// Pixel-space landmarks for a single frame.
    pub fn predict(&self, frame: &Array3<f64>, audio: &[f64]) -> Result<LandmarkSet> {
        let cfg = &self.config;
        let mut g = Graph::new();
        let f = g.constant(frame.clone().insert_axis(Axis(0)));
        let a = g.constant(Array4::from_shape_vec((1, 1, 1, audio.len()), audio.to_vec()).map_err(|e| shape_err!("{e}"))?);
        let out = self.forward(&mut g, f, a)?;
        let v = g.value(out);
        let (sx, sy) = ((cfg.width - 1) as f64, (cfg.height - 1) as f64);
        let mut points = Vec::with_capacity(cfg.num_landmarks);
        let mut confidence = Vec::with_capacity(cfg.num_landmarks);
        for k in 0..cfg.num_landmarks {
            let (u, w) = (v[[0, 2 * k, 0, 0]], v[[0, 2 * k + 1, 0, 0]]);
            points.push([u * sx, w * sy]);
            // Margin of the bounded head: 1 at the frame centre, 0 at the border.
            confidence.push((4.0 * u * (1.0 - u)).min(4.0 * w * (1.0 - w)));
        }
        Ok(LandmarkSet { points, confidence })
    }
}

/// One regression example: a degraded frame, its audio window and the
/// pristine-frame landmarks.
#[derive(Clone, Debug)]
pub struct LandmarkSample {
    pub frame: Array3<f64>,
    pub audio: Vec<f64>,
    pub target: Vec<[f64; 2]>,
}

/// Pairs each degraded frame with the oracle landmarks of the pristine clip.
pub fn landmark_samples(gt: &Clip, degraded: &Clip, m: usize, zero_audio: bool) -> Result<Vec<LandmarkSample>> {
    if gt.frames.dim() != degraded.frames.dim() {
        return Err(shape_err!("pristine {:?} vs degraded {:?}", gt.frames.dim(), degraded.frames.dim()));
    }
    (0..gt.num_frames())
        .map(|t| {
            let win = audio_window(degraded, t, m)?;
            let audio = if zero_audio { vec![0.0; win.samples.len()] } else { win.samples };
            Ok(LandmarkSample {
                frame: degraded.frame(t),
                audio,
                target: LandmarkSet::from_clip(gt, t).points,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandmarkTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LandmarkTrainConfig {
    fn default() -> Self {
        LandmarkTrainConfig {
            epochs: 30,
            lr: 1e-3,
            batch_size: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LandmarkTrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

fn batch_tensors(net: &LandmarkNet, batch: &[&LandmarkSample]) -> (Array4<f64>, Array4<f64>, Array4<f64>) {
    let cfg = &net.config;
    let b = batch.len();
    let mut frames = Array4::zeros((b, 3, cfg.height, cfg.width));
    let mut audio = Array4::zeros((b, 1, 1, cfg.audio_len));
    let mut target = Array4::zeros((b, 2 * cfg.num_landmarks, 1, 1));
    let (sx, sy) = ((cfg.width - 1) as f64, (cfg.height - 1) as f64);
    for (i, s) in batch.iter().enumerate() {
        frames.index_axis_mut(Axis(0), i).assign(&s.frame);
        for (j, &v) in s.audio.iter().enumerate() {
            audio[[i, 0, 0, j]] = v;
        }
        for (k, p) in s.target.iter().enumerate() {
            target[[i, 2 * k, 0, 0]] = p[0] / sx;
            target[[i, 2 * k + 1, 0, 0]] = p[1] / sy;
        }
    }
    (frames, audio, target)
}

/// Mean squared normalized-coordinate error over `samples`.
pub fn landmark_loss(net: &LandmarkNet, samples: &[LandmarkSample]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(16) {
        let refs: Vec<&LandmarkSample> = chunk.iter().collect();
        let (f, a, t) = batch_tensors(net, &refs);
        let mut g = Graph::new();
        let (f, a, t) = (g.constant(f), g.constant(a), g.constant(t));
        let out = net.forward(&mut g, f, a)?;
        let l = g.mse(out, t)?;
        total += g.scalar(l) * chunk.len() as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Minimizes the coordinate MSE with Adam; deterministic under `cfg.seed`.
pub fn train_landmark_net(
    net: &mut LandmarkNet,
    samples: &[LandmarkSample],
    cfg: &LandmarkTrainConfig,
) -> Result<LandmarkTrainReport> {
    if samples.is_empty() || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(GavnError::InvalidArgument(
            "landmark training needs samples, batch_size >= 1 and lr > 0".into(),
        ));
    }
    let initial_loss = landmark_loss(net, samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new();
    let adam_cfg = AdamConfig::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LandmarkSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (f, a, t) = batch_tensors(net, &batch);
            let mut g = Graph::new();
            let (f, a, t) = (g.constant(f), g.constant(a), g.constant(t));
            let out = net.forward(&mut g, f, a)?;
            let loss = g.mse(out, t)?;
            let lv = g.scalar(loss);
            if !lv.is_finite() {
                return Err(GavnError::Numerical(format!("landmark loss diverged at epoch {epoch}: {lv}")));
            }
            acc += lv * chunk.len() as f64;
            net.store.zero_grad();
            g.backward(loss)?;
            g.accumulate_param_grads(&mut net.store)?;
            adam_step(&mut net.store, &mut adam, cfg.lr, &adam_cfg)?;
        }
        epoch_losses.push(acc / samples.len() as f64);
    }
    let final_loss = landmark_loss(net, samples)?;
    Ok(LandmarkTrainReport {
        initial_loss,
        final_loss,
        epoch_losses,
    })
}

/// Mean pixel distance between predictions and targets, over all points or
/// over the listed landmark indices.
pub fn mean_pixel_error(net: &LandmarkNet, samples: &[LandmarkSample], indices: Option<&[usize]>) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in samples {
        let pred = net.predict(&s.frame, &s.audio)?;
        let all: Vec<usize> = (0..s.target.len()).collect();
        for &k in indices.unwrap_or(&all) {
            let d = [pred.points[k][0] - s.target[k][0], pred.points[k][1] - s.target[k][1]];
            total += (d[0] * d[0] + d[1] * d[1]).sqrt();
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}

/// Error of always predicting the frame centre.
pub fn center_baseline_error(samples: &[LandmarkSample], h: usize, w: usize) -> f64 {
    let c = [(w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0];
    let mut total = 0.0;
    let mut count = 0usize;
    for s in samples {
        for p in &s.target {
            total += ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
            count += 1;
        }
    }
    total / count.max(1) as f64
}

/// Mouth-top and mouth-bottom indices.
pub const MOUTH_VERTICAL: [usize; 2] = [lm::MOUTH_TOP, lm::MOUTH_BOTTOM];

/// The `sigmoid` applied to a zero head, in pixels: the frame centre.
pub fn center_point(h: usize, w: usize) -> [f64; 2] {
    [sigmoid(0.0) * (w - 1) as f64, sigmoid(0.0) * (h - 1) as f64]
}
