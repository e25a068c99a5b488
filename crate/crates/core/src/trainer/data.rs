use ndarray::{s, Array2, Array4, Axis};

use crate::diffops::Grid4;
use crate::error::{shape_err, GavnError, Result};
use crate::landmark::{render_heatmaps, LandmarkNet};
use crate::reconstructor::WindowInput;
use crate::synthclip::{audio_window, Clip};
use crate::temporal::WindowLayout;

/// A clip prepared for training or restoration: degraded input, ground truth,
/// one audio window and one heatmap stack per frame.
#[derive(Clone, Debug)]
pub struct TrainingClip {
    pub name: String,
    /// `(T, 3, H, W)`.
    pub gt: Array4<f64>,
    /// `(T, 3, H, W)`.
    pub degraded: Array4<f64>,
    /// `(T, S)`.
    pub audio: Array2<f64>,
    /// `(T, K, H, W)`.
    pub heatmaps: Array4<f64>,
    /// `(T, K, 2)` ground-truth landmarks, used for region metrics.
    pub landmarks: ndarray::Array3<f64>,
}

/// Heatmaps of the clip's own (pristine) landmarks.
pub fn oracle_heatmaps(clip: &Clip, sigma: f64) -> Result<Array4<f64>> {
    let (t, _, h, w) = clip.frames.dim();
    let k = clip.num_landmarks();
    let mut out = Array4::zeros((t, k, h, w));
    for f in 0..t {
        let pts: Vec<[f64; 2]> = (0..k).map(|i| [clip.landmarks[[f, i, 0]], clip.landmarks[[f, i, 1]]]).collect();
        out.index_axis_mut(Axis(0), f).assign(&render_heatmaps(&pts, h, w, sigma)?);
    }
    Ok(out)
}

/// Heatmaps of regressor predictions on the degraded frames.
pub fn learned_heatmaps(net: &LandmarkNet, degraded: &Clip, m: usize, zero_audio: bool, sigma: f64) -> Result<Array4<f64>> {
    let (t, _, h, w) = degraded.frames.dim();
    let k = net.config.num_landmarks;
    let mut out = Array4::zeros((t, k, h, w));
    for f in 0..t {
        let win = audio_window(degraded, f, m)?;
        let audio = if zero_audio { vec![0.0; win.samples.len()] } else { win.samples };
        let pred = net.predict(&degraded.frame(f), &audio)?;
        out.index_axis_mut(Axis(0), f).assign(&render_heatmaps(&pred.points, h, w, sigma)?);
    }
    Ok(out)
}

impl TrainingClip {
    pub fn new(name: &str, gt: &Clip, degraded: &Clip, heatmaps: Array4<f64>, m: usize, zero_audio: bool) -> Result<Self> {
        if gt.frames.dim() != degraded.frames.dim() {
            return Err(shape_err!("ground truth {:?} vs degraded {:?}", gt.frames.dim(), degraded.frames.dim()));
        }
        let (t, _, h, w) = gt.frames.dim();
        if heatmaps.dim() != (t, gt.num_landmarks(), h, w) {
            return Err(shape_err!("heatmaps {:?} do not match clip", heatmaps.dim()));
        }
        let len = crate::synthclip::audio_window_len(degraded.fps, degraded.sample_rate, m);
        let mut audio = Array2::zeros((t, len));
        if !zero_audio {
            for f in 0..t {
                let win = audio_window(degraded, f, m)?;
                audio.row_mut(f).assign(&ndarray::Array1::from(win.samples));
            }
        }
        Ok(TrainingClip {
            name: name.to_string(),
            gt: gt.frames.clone(),
            degraded: degraded.frames.clone(),
            audio,
            heatmaps,
            landmarks: gt.landmarks.clone(),
        })
    }

    pub fn num_frames(&self) -> usize {
        self.gt.dim().0
    }
}

/// Frame index feeding window position `p` when the first output frame is
/// `first`; positions outside the clip replicate the edge frame.
pub fn source_frame(first: usize, p: usize, t: usize) -> usize {
    (first as isize - 2 + p as isize).clamp(0, t as isize - 1) as usize
}

/// Builds a batch of windows; `items` holds `(clip, first output frame)`.
/// Returns the model input and the `2N+1` ground-truth targets.
pub fn assemble_windows(clips: &[TrainingClip], items: &[(usize, usize)], layout: &WindowLayout) -> Result<(WindowInput, Vec<Grid4>)> {
    let first_clip = clips
        .get(items.first().ok_or_else(|| GavnError::InvalidArgument("empty batch".into()))?.0)
        .ok_or_else(|| GavnError::InvalidArgument("clip index out of range".into()))?;
    let (_, _, h, w) = first_clip.gt.dim();
    let k = first_clip.heatmaps.dim().1;
    let sl = first_clip.audio.dim().1;
    let b = items.len();
    let mut frames = vec![Array4::zeros((b, 3, h, w)); layout.input_count()];
    let mut audio = vec![Array4::zeros((b, 1, 1, sl)); layout.output_count()];
    let mut heatmaps = vec![Array4::zeros((b, k, h, w)); layout.output_count()];
    let mut targets = vec![Array4::zeros((b, 3, h, w)); layout.output_count()];
    for (bi, &(ci, first)) in items.iter().enumerate() {
        let clip = clips
            .get(ci)
            .ok_or_else(|| GavnError::InvalidArgument(format!("clip index {ci} out of range")))?;
        let t = clip.num_frames();
        if first + layout.output_count() > t {
            return Err(shape_err!("window starting at {first} overruns {t} frames"));
        }
        for (p, fr) in frames.iter_mut().enumerate() {
            let src = source_frame(first, p, t);
            fr.index_axis_mut(Axis(0), bi).assign(&clip.degraded.index_axis(Axis(0), src));
        }
        for o in 0..layout.output_count() {
            let src = first + o;
            audio[o].slice_mut(s![bi, 0, 0, ..]).assign(&clip.audio.row(src));
            heatmaps[o].index_axis_mut(Axis(0), bi).assign(&clip.heatmaps.index_axis(Axis(0), src));
            targets[o].index_axis_mut(Axis(0), bi).assign(&clip.gt.index_axis(Axis(0), src));
        }
    }
    Ok((
        WindowInput {
            frames,
            audio,
            heatmaps,
        },
        targets,
    ))
}

/// First output frames of the sliding windows that cover `0..t` in strides of
/// `2N+1`; the last window is shifted back to end at `t - 1`.
pub fn sliding_windows(t: usize, layout: &WindowLayout) -> Result<Vec<usize>> {
    let n_out = layout.output_count();
    if t < n_out {
        return Err(shape_err!("clip of {t} frames is shorter than one output block of {n_out}"));
    }
    let mut starts: Vec<usize> = (0..t).step_by(n_out).filter(|s| s + n_out <= t).collect();
    if starts.last().map(|s| s + n_out) != Some(t) {
        starts.push(t - n_out);
    }
    Ok(starts)
}
