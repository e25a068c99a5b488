//! Synthetic talking-face clips.
//!
//! Mouth opening is a deterministic function of the audio envelope, so the
//! audio track genuinely carries information about the mouth region. All
//! geometry is analytic, so landmarks are exact.

use std::f64::consts::PI;

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GavnError, Result};

pub const DEFAULT_FPS: u32 = 25;
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
/// Audio window half-width in frames.
pub const DEFAULT_AUDIO_HALF_WIDTH: usize = 2;

/// Landmark slots. Indices beyond `CHIN` are extra points on the head outline.
pub mod lm {
    pub const LEFT_EYE: usize = 0;
    pub const RIGHT_EYE: usize = 1;
    pub const MOUTH_LEFT: usize = 2;
    pub const MOUTH_RIGHT: usize = 3;
    pub const MOUTH_TOP: usize = 4;
    pub const MOUTH_BOTTOM: usize = 5;
    pub const NOSE: usize = 6;
    pub const CHIN: usize = 7;
    pub const MIN_COUNT: usize = 8;
}

/// A clip: ground-truth frames, mono audio, and per-frame landmarks.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    /// `(T, 3, H, W)` in `[0, 1]`.
    pub frames: Array4<f64>,
    /// Mono samples in `[-1, 1]`; `len = T * sample_rate / fps`.
    pub audio: Vec<f32>,
    /// Per-frame audio envelope in `[0, 1]`.
    pub envelope: Vec<f64>,
    pub fps: u32,
    pub sample_rate: u32,
    /// `(T, K, 2)` pixel coordinates `(x, y)`.
    pub landmarks: Array3<f64>,
    pub seed: u64,
}

impl Clip {
    pub fn num_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn height(&self) -> usize {
        self.frames.dim().2
    }

    pub fn width(&self) -> usize {
        self.frames.dim().3
    }

    pub fn num_landmarks(&self) -> usize {
        self.landmarks.dim().1
    }

    pub fn samples_per_frame(&self) -> usize {
        (self.sample_rate / self.fps) as usize
    }

    /// Frame `t` as a `(3, H, W)` array.
    pub fn frame(&self, t: usize) -> Array3<f64> {
        self.frames.index_axis(ndarray::Axis(0), t).to_owned()
    }

    /// Checks the container invariants.
    pub fn validate(&self) -> Result<()> {
        let t = self.num_frames();
        if self.fps == 0 || self.sample_rate % self.fps != 0 {
            return Err(GavnError::InvalidArgument(format!(
                "sample_rate {} must be a multiple of fps {}",
                self.sample_rate, self.fps
            )));
        }
        if self.audio.len() != t * self.samples_per_frame() {
            return Err(GavnError::Shape(format!(
                "audio has {} samples, expected {}",
                self.audio.len(),
                t * self.samples_per_frame()
            )));
        }
        if self.envelope.len() != t || self.landmarks.dim().0 != t || self.landmarks.dim().2 != 2 {
            return Err(GavnError::Shape("envelope/landmarks do not match frame count".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    pub num_landmarks: usize,
    /// Maximum head displacement in pixels.
    pub head_amplitude: f64,
    /// Blink events per second.
    pub blink_rate: f64,
    pub texture_seed: u64,
    pub fps: u32,
    pub sample_rate: u32,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            height: 64,
            width: 64,
            num_landmarks: lm::MIN_COUNT,
            head_amplitude: 3.0,
            blink_rate: 0.3,
            texture_seed: 7,
            fps: DEFAULT_FPS,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl SceneParams {
    pub fn with_size(height: usize, width: usize) -> Self {
        SceneParams {
            height,
            width,
            head_amplitude: 0.05 * height.min(width) as f64,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 32 || self.width < 32 {
            return Err(GavnError::InvalidArgument(format!(
                "frame size {}x{} below the 32x32 minimum",
                self.height, self.width
            )));
        }
        if self.num_landmarks < lm::MIN_COUNT {
            return Err(GavnError::InvalidArgument(format!(
                "need at least {} landmarks, got {}",
                lm::MIN_COUNT,
                self.num_landmarks
            )));
        }
        let limit = 0.1 * self.height.min(self.width) as f64;
        if !(0.0..=limit).contains(&self.head_amplitude) {
            return Err(GavnError::InvalidArgument(format!(
                "head_amplitude {} outside [0, {limit}]",
                self.head_amplitude
            )));
        }
        if self.fps == 0 || self.sample_rate % self.fps != 0 {
            return Err(GavnError::InvalidArgument(format!(
                "sample_rate {} must be a multiple of fps {}",
                self.sample_rate, self.fps
            )));
        }
        Ok(())
    }

    /// Mouth opening in pixels at full envelope.
    pub fn aperture_max(&self) -> f64 {
        (0.12 * self.height as f64).round().max(2.0)
    }
}

/// Options for [`gen_audio`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AudioOptions {
    /// `(start, end)` spans in seconds with the envelope forced to zero.
    pub silence: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AudioTrack {
    pub samples: Vec<f32>,
    /// Per-frame envelope in `[0, 1]`.
    pub envelope: Vec<f64>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(stream))
}

pub fn num_frames_for(duration: f64, fps: u32) -> usize {
    (duration * fps as f64).round() as usize
}

/// A voiced waveform built from randomly placed smooth bursts.
pub fn gen_audio(duration: f64, sample_rate: u32, fps: u32, seed: u64, opts: &AudioOptions) -> Result<AudioTrack> {
    if !(duration > 0.0) {
        return Err(GavnError::InvalidArgument(format!("duration must be > 0, got {duration}")));
    }
    if fps == 0 || sample_rate % fps != 0 {
        return Err(GavnError::InvalidArgument(format!(
            "sample_rate {sample_rate} must be a multiple of fps {fps}"
        )));
    }
    let frames = num_frames_for(duration, fps).max(1);
    let spf = (sample_rate / fps) as usize;
    let n = frames * spf;
    let sr = sample_rate as f64;
    let mut rng = stream_rng(seed, 1);

    let mut env = vec![0.0f64; n];
    let total = n as f64 / sr;
    let mut t = rng.random_range(0.0..0.3);
    while t < total {
        let dur = rng.random_range(0.12..0.35);
        let amp = rng.random_range(0.5..1.0);
        let start = (t * sr) as usize;
        let len = (dur * sr) as usize;
        for i in 0..len {
            let idx = start + i;
            if idx >= n {
                break;
            }
            let phase = PI * i as f64 / len as f64;
            env[idx] += amp * phase.sin().powi(2);
        }
        t += dur + rng.random_range(0.05..0.4);
    }
    for (lo, hi) in &opts.silence {
        let a = ((lo * sr).max(0.0) as usize).min(n);
        let b = ((hi * sr).max(0.0) as usize).min(n);
        env[a..b.max(a)].iter_mut().for_each(|v| *v = 0.0);
    }
    env.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));

    let f0 = rng.random_range(110.0..220.0);
    let phi1 = rng.random_range(0.0..2.0 * PI);
    let phi2 = rng.random_range(0.0..2.0 * PI);
    let vibrato = rng.random_range(3.0..6.0);
    let samples = (0..n)
        .map(|i| {
            let ts = i as f64 / sr;
            let f = f0 * (1.0 + 0.02 * (2.0 * PI * vibrato * ts).sin());
            let ph = 2.0 * PI * f * ts;
            let carrier = (ph.sin() + 0.5 * (2.0 * ph + phi1).sin() + 0.25 * (3.0 * ph + phi2).sin()) / 1.75;
            (0.95 * env[i] * carrier) as f32
        })
        .collect();
    let envelope = (0..frames)
        .map(|f| env[f * spf..(f + 1) * spf].iter().sum::<f64>() / spf as f64)
        .collect();
    Ok(AudioTrack { samples, envelope })
}

/// Head offset and eye state for one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameState {
    pub dx: f64,
    pub dy: f64,
    pub eye_openness: f64,
    pub env: f64,
}

/// Analytic face geometry for one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceGeometry {
    pub center: (f64, f64),
    pub head_radii: (f64, f64),
    pub eye_offset: (f64, f64),
    pub eye_radii: (f64, f64),
    pub nose: (f64, f64),
    pub nose_radii: (f64, f64),
    pub mouth_center: (f64, f64),
    pub mouth_half_width: f64,
    /// Opening height in whole pixels.
    pub aperture: f64,
}

impl FaceGeometry {
    pub fn new(params: &SceneParams, state: &FrameState) -> Self {
        let (w, h) = (params.width as f64, params.height as f64);
        let center = (w / 2.0 + state.dx, h / 2.0 + state.dy);
        FaceGeometry {
            center,
            head_radii: (0.30 * w, 0.38 * h),
            eye_offset: (0.12 * w, -0.08 * h),
            eye_radii: (0.06 * w, 0.035 * h * state.eye_openness),
            nose: (center.0, center.1 + 0.06 * h),
            nose_radii: (0.025 * w, 0.04 * h),
            mouth_center: (center.0, center.1 + 0.2 * h),
            mouth_half_width: 0.11 * w,
            aperture: (params.aperture_max() * state.env.clamp(0.0, 1.0)).round(),
        }
    }

    /// Landmarks `(K, 2)` as `(x, y)` pairs.
    pub fn landmarks(&self, k: usize) -> Vec<[f64; 2]> {
        let (cx, cy) = self.center;
        let (mx, my) = self.mouth_center;
        let half = self.aperture / 2.0;
        let mut pts = vec![
            [cx - self.eye_offset.0, cy + self.eye_offset.1],
            [cx + self.eye_offset.0, cy + self.eye_offset.1],
            [mx - self.mouth_half_width, my],
            [mx + self.mouth_half_width, my],
            [mx, my - half],
            [mx, my + half],
            [self.nose.0, self.nose.1],
            [cx, cy + self.head_radii.1],
        ];
        let extra = k.saturating_sub(lm::MIN_COUNT);
        for i in 0..extra {
            // points on the upper half of the head outline
            let theta = PI + PI * (i as f64 + 1.0) / (extra as f64 + 1.0);
            pts.push([cx + self.head_radii.0 * theta.cos(), cy + self.head_radii.1 * theta.sin()]);
        }
        pts
    }

    /// Bounding box `(x0, y0, x1, y1)` of the mouth opening plus lips.
    pub fn mouth_bbox(&self) -> (f64, f64, f64, f64) {
        let (mx, my) = self.mouth_center;
        let half = self.aperture / 2.0;
        (
            mx - self.mouth_half_width,
            my - half,
            mx + self.mouth_half_width,
            my + half,
        )
    }
}

/// Signed ellipse distance approximation in pixels (negative inside).
fn ellipse_sd(x: f64, y: f64, c: (f64, f64), r: (f64, f64)) -> f64 {
    if r.0 <= 0.0 || r.1 <= 0.0 {
        return f64::INFINITY;
    }
    let nx = (x - c.0) / r.0;
    let ny = (y - c.1) / r.1;
    ((nx * nx + ny * ny).sqrt() - 1.0) * r.0.min(r.1)
}

/// One-pixel anti-aliased coverage from a signed distance.
fn coverage(sd: f64) -> f64 {
    (0.5 - sd).clamp(0.0, 1.0)
}

fn blend(dst: &mut [f64; 3], src: [f64; 3], alpha: f64) {
    for i in 0..3 {
        dst[i] = dst[i] * (1.0 - alpha) + src[i] * alpha;
    }
}

/// Smooth low-frequency texture shared by background and skin.
#[derive(Clone, Debug)]
struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    fn new(seed: u64, size: f64) -> Self {
        let mut rng = stream_rng(seed, 11);
        let waves = (0..4)
            .map(|_| {
                let theta = rng.random_range(0.0..2.0 * PI);
                let freq = rng.random_range(0.5..2.0) * 2.0 * PI / size;
                (freq * theta.cos(), freq * theta.sin(), rng.random_range(0.0..2.0 * PI), rng.random_range(0.01..0.025))
            })
            .collect();
        Texture { waves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.waves.iter().map(|(fx, fy, ph, a)| a * (fx * x + fy * y + ph).sin()).sum()
    }
}

/// Renders one `(3, H, W)` frame.
pub fn render_frame(params: &SceneParams, geom: &FaceGeometry) -> Array3<f64> {
    let (h, w) = (params.height, params.width);
    let size = h.min(w) as f64;
    let bg_tex = Texture::new(params.texture_seed, size);
    let skin_tex = Texture::new(params.texture_seed.wrapping_add(1), size);
    let mut out = Array3::zeros((3, h, w));
    let (mx, my) = geom.mouth_center;
    let half = geom.aperture / 2.0;
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let g = fy / h as f64;
            let t = bg_tex.at(fx, fy);
            let mut px = [0.20 + 0.10 * g + t, 0.25 + 0.10 * g + t, 0.38 + 0.12 * g + t];

            let head = coverage(ellipse_sd(fx, fy, geom.center, geom.head_radii));
            if head > 0.0 {
                let st = skin_tex.at(fx - geom.center.0, fy - geom.center.1);
                blend(&mut px, [0.85 + st, 0.66 + st, 0.55 + st], head);
            }
            let nose = coverage(ellipse_sd(fx, fy, geom.nose, geom.nose_radii));
            blend(&mut px, [0.72, 0.52, 0.44], nose * 0.8);
            for side in [-1.0, 1.0] {
                let c = (geom.center.0 + side * geom.eye_offset.0, geom.center.1 + geom.eye_offset.1);
                let eye = coverage(ellipse_sd(fx, fy, c, geom.eye_radii));
                blend(&mut px, [0.12, 0.09, 0.08], eye);
            }
            let lips = coverage(ellipse_sd(fx, fy, (mx, my), (geom.mouth_half_width + 0.5, half + 1.0)));
            blend(&mut px, [0.70, 0.30, 0.30], lips);
            if geom.aperture > 0.0 {
                let open = coverage(ellipse_sd(fx, fy, (mx, my), (geom.mouth_half_width, half)));
                if open > 0.0 {
                    let phase = (fx - mx).rem_euclid(3.0);
                    let v = if phase < 1.0 { 0.92 } else { 0.08 };
                    blend(&mut px, [v, v, v * 0.95], open);
                }
            }
            for c in 0..3 {
                out[[c, y, x]] = px[c].clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Per-frame head motion and blink state (the envelope is filled by the caller).
pub fn frame_states(params: &SceneParams, frames: usize, seed: u64) -> Vec<FrameState> {
    let mut rng = stream_rng(seed, 2);
    let fps = params.fps as f64;
    let mut motion = |scale: f64| {
        let f1 = rng.random_range(0.3..1.2);
        let f2 = rng.random_range(0.3..1.2);
        let p1 = rng.random_range(0.0..2.0 * PI);
        let p2 = rng.random_range(0.0..2.0 * PI);
        move |t: f64| scale * (0.6 * (2.0 * PI * f1 * t + p1).sin() + 0.4 * (2.0 * PI * f2 * t + p2).sin())
    };
    let mx = motion(params.head_amplitude);
    let my = motion(0.5 * params.head_amplitude);
    let mut blink_rng = stream_rng(seed, 3);
    let p_blink = (params.blink_rate / fps).clamp(0.0, 1.0);
    let mut closed_for = 0usize;
    (0..frames)
        .map(|f| {
            let t = f as f64 / fps;
            if closed_for == 0 && blink_rng.random_bool(p_blink) {
                closed_for = 2;
            }
            let eye_openness = if closed_for > 0 {
                closed_for -= 1;
                0.15
            } else {
                1.0
            };
            FrameState {
                dx: mx(t),
                dy: my(t),
                eye_openness,
                env: 0.0,
            }
        })
        .collect()
}

/// Generates a full clip; deterministic in `(params, duration, seed)`.
pub fn gen_clip(params: &SceneParams, duration: f64, seed: u64) -> Result<Clip> {
    gen_clip_with(params, duration, seed, &AudioOptions::default())
}

pub fn gen_clip_with(params: &SceneParams, duration: f64, seed: u64, audio_opts: &AudioOptions) -> Result<Clip> {
    params.validate()?;
    let audio = gen_audio(duration, params.sample_rate, params.fps, seed, audio_opts)?;
    let t = audio.envelope.len();
    let mut states = frame_states(params, t, seed);
    let k = params.num_landmarks;
    let mut frames = Array4::zeros((t, 3, params.height, params.width));
    let mut landmarks = Array3::zeros((t, k, 2));
    for (f, state) in states.iter_mut().enumerate() {
        state.env = audio.envelope[f];
        let geom = FaceGeometry::new(params, state);
        frames.index_axis_mut(ndarray::Axis(0), f).assign(&render_frame(params, &geom));
        for (i, p) in geom.landmarks(k).iter().enumerate() {
            landmarks[[f, i, 0]] = p[0];
            landmarks[[f, i, 1]] = p[1];
        }
    }
    Ok(Clip {
        frames,
        audio: audio.samples,
        envelope: audio.envelope,
        fps: params.fps,
        sample_rate: params.sample_rate,
        landmarks,
        seed,
    })
}

/// Recomputes the analytic geometry of frame `t` of a clip generated by [`gen_clip`].
pub fn clip_geometry(params: &SceneParams, clip: &Clip, t: usize) -> FaceGeometry {
    let mut state = frame_states(params, clip.num_frames(), clip.seed)[t];
    state.env = clip.envelope[t];
    FaceGeometry::new(params, &state)
}

/// Audio samples spanning frames `[t - m, t + m]` (zero-padded) and the matching
/// per-frame envelope values.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioWindow {
    pub samples: Vec<f64>,
    pub envelope: Vec<f64>,
}

pub fn audio_window(clip: &Clip, t: usize, m: usize) -> Result<AudioWindow> {
    let frames = clip.num_frames();
    if t >= frames {
        return Err(GavnError::InvalidArgument(format!("frame {t} out of range 0..{frames}")));
    }
    let spf = clip.samples_per_frame();
    let span = 2 * m + 1;
    let mut samples = vec![0.0; span * spf];
    let mut envelope = vec![0.0; span];
    for (slot, f) in (t as isize - m as isize..=t as isize + m as isize).enumerate() {
        if f < 0 || f as usize >= frames {
            continue;
        }
        let f = f as usize;
        for (dst, &src) in samples[slot * spf..(slot + 1) * spf]
            .iter_mut()
            .zip(&clip.audio[f * spf..(f + 1) * spf])
        {
            *dst = src as f64;
        }
        envelope[slot] = clip.envelope[f];
    }
    Ok(AudioWindow { samples, envelope })
}

pub fn audio_window_len(fps: u32, sample_rate: u32, m: usize) -> usize {
    (2 * m + 1) * (sample_rate / fps) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneParams {
        SceneParams::with_size(32, 32)
    }

    #[test]
    fn audio_is_deterministic_and_bounded() {
        let a = gen_audio(1.0, 16_000, 25, 5, &AudioOptions::default()).unwrap();
        let b = gen_audio(1.0, 16_000, 25, 5, &AudioOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.envelope.iter().all(|e| (0.0..=1.0).contains(e)));
        assert!(a.samples.iter().all(|s| (-1.0..=1.0).contains(s)));
        assert_eq!(a.samples.len(), 25 * 640);
    }

    #[test]
    fn forced_silence_zeroes_envelope() {
        let opts = AudioOptions {
            silence: vec![(0.2, 0.6)],
        };
        let a = gen_audio(1.0, 16_000, 25, 9, &opts).unwrap();
        for f in 5..15 {
            assert_eq!(a.envelope[f], 0.0, "frame {f}");
        }
        assert!(a.samples[3200..9600].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn closed_mouth_landmarks_coincide() {
        let p = small();
        let state = FrameState {
            dx: 0.7,
            dy: -0.3,
            eye_openness: 1.0,
            env: 0.0,
        };
        let lms = FaceGeometry::new(&p, &state).landmarks(8);
        assert_eq!(lms[lm::MOUTH_TOP], lms[lm::MOUTH_BOTTOM]);
    }

    #[test]
    fn rigid_translation_moves_all_landmarks() {
        let p = small();
        let s0 = FrameState {
            dx: 0.25,
            dy: 0.5,
            eye_openness: 1.0,
            env: 0.6,
        };
        let s1 = FrameState { dx: 2.25, dy: -0.5, ..s0 };
        let a = FaceGeometry::new(&p, &s0).landmarks(10);
        let b = FaceGeometry::new(&p, &s1).landmarks(10);
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pb[0] - pa[0], 2.0);
            assert_eq!(pb[1] - pa[1], -1.0);
        }
    }

    #[test]
    fn clip_is_deterministic_and_in_range() {
        let p = small();
        let a = gen_clip(&p, 0.4, 3).unwrap();
        let b = gen_clip(&p, 0.4, 3).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert!(a.frames.iter().all(|v| (0.0..=1.0).contains(v)));
        for f in 0..a.num_frames() {
            for k in 0..a.num_landmarks() {
                let (x, y) = (a.landmarks[[f, k, 0]], a.landmarks[[f, k, 1]]);
                assert!(x >= 0.0 && x <= 31.0 && y >= 0.0 && y <= 31.0, "({x}, {y})");
            }
        }
    }

    #[test]
    fn aperture_is_monotone_in_envelope() {
        let p = SceneParams::default();
        let mut last = -1.0;
        for i in 0..=100 {
            let env = i as f64 / 100.0;
            let g = FaceGeometry::new(
                &p,
                &FrameState {
                    dx: 0.0,
                    dy: 0.0,
                    eye_openness: 1.0,
                    env,
                },
            );
            assert!(g.aperture >= last);
            assert!((g.aperture - p.aperture_max() * env).abs() <= 0.5);
            last = g.aperture;
        }
        assert_eq!(last, p.aperture_max());
    }

    #[test]
    fn mouth_intensity_contrast() {
        let p = SceneParams::default();
        let mk = |env| {
            let g = FaceGeometry::new(
                &p,
                &FrameState {
                    dx: 0.0,
                    dy: 0.0,
                    eye_openness: 1.0,
                    env,
                },
            );
            (render_frame(&p, &g), g)
        };
        let (closed, _) = mk(0.0);
        let (open, g) = mk(1.0);
        let (x0, y0, x1, y1) = g.mouth_bbox();
        let mean = |f: &Array3<f64>| {
            let mut acc = 0.0;
            let mut n = 0;
            for y in y0.floor() as usize..=y1.ceil() as usize {
                for x in x0.floor() as usize..=x1.ceil() as usize {
                    acc += (0..3).map(|c| f[[c, y, x]]).sum::<f64>() / 3.0;
                    n += 1;
                }
            }
            acc / n as f64
        };
        assert!((mean(&closed) - mean(&open)).abs() >= 0.1);
    }

    #[test]
    fn audio_window_padding_and_length() {
        let clip = gen_clip(&small(), 0.4, 1).unwrap();
        let w0 = audio_window(&clip, 0, 2).unwrap();
        assert_eq!(w0.samples.len(), 3200);
        assert_eq!(audio_window_len(25, 16_000, 2), 3200);
        assert!(w0.samples[..1280].iter().all(|&s| s == 0.0));
        let w = audio_window(&clip, 4, 2).unwrap();
        let expect: Vec<f64> = clip.audio[2 * 640..7 * 640].iter().map(|&s| s as f64).collect();
        assert_eq!(w.samples, expect);
        assert_eq!(w.envelope, clip.envelope[2..7].to_vec());
    }

    #[test]
    fn stored_landmarks_match_geometry() {
        let p = small();
        let clip = gen_clip(&p, 0.4, 21).unwrap();
        for t in 0..clip.num_frames() {
            let g = clip_geometry(&p, &clip, t);
            for (k, pt) in g.landmarks(8).iter().enumerate() {
                assert_eq!(clip.landmarks[[t, k, 0]], pt[0]);
                assert_eq!(clip.landmarks[[t, k, 1]], pt[1]);
            }
        }
    }
}
