//! On-disk clip container.
//!
//! ```text
//! <dir>/manifest.json      fps, sample_rate, T, H, W, K, seed, envelope, ...
//! <dir>/frames/%06d.png    8-bit RGB
//! <dir>/audio.wav          mono 32-bit float
//! <dir>/landmarks.json     T x K x 2
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::degrade::DegradationSpec;
use crate::error::{GavnError, Result};
use crate::synthclip::Clip;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub fps: u32,
    pub sample_rate: u32,
    #[serde(rename = "T")]
    pub frames: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "K")]
    pub landmarks: usize,
    pub seed: u64,
    pub envelope: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degradation: Option<DegradationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl ClipManifest {
    pub fn for_clip(clip: &Clip) -> Self {
        ClipManifest {
            fps: clip.fps,
            sample_rate: clip.sample_rate,
            frames: clip.num_frames(),
            height: clip.height(),
            width: clip.width(),
            landmarks: clip.num_landmarks(),
            seed: clip.seed,
            envelope: clip.envelope.clone(),
            degradation: None,
            provenance: None,
        }
    }
}

pub fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("frames").join(format!("{t:06}.png"))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| GavnError::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| GavnError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `clip` with the given manifest (which must describe the clip).
pub fn write_clip(dir: &Path, clip: &Clip, manifest: &ClipManifest) -> Result<()> {
    clip.validate()?;
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| GavnError::io(&frames_dir, e))?;
    write_json(&dir.join("manifest.json"), manifest)?;

    let (t, _, h, w) = clip.frames.dim();
    for f in 0..t {
        let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            Rgb([
                to_u8(clip.frames[[f, 0, y, x]]),
                to_u8(clip.frames[[f, 1, y, x]]),
                to_u8(clip.frames[[f, 2, y, x]]),
            ])
        });
        img.save(frame_path(dir, f))?;
    }

    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let wav_path = dir.join("audio.wav");
    let mut writer = hound::WavWriter::create(&wav_path, spec)?;
    for &s in &clip.audio {
        writer.write_sample(s)?;
    }
    writer.finalize()?;

    let lms: Vec<Vec<[f64; 2]>> = (0..t)
        .map(|f| {
            (0..clip.num_landmarks())
                .map(|k| [clip.landmarks[[f, k, 0]], clip.landmarks[[f, k, 1]]])
                .collect()
        })
        .collect();
    write_json(&dir.join("landmarks.json"), &lms)
}

/// Paths a clip directory must contain, given its manifest.
pub fn required_paths(dir: &Path) -> Vec<PathBuf> {
    vec![dir.join("manifest.json"), dir.join("audio.wav"), dir.join("landmarks.json")]
}

pub fn read_manifest(dir: &Path) -> Result<ClipManifest> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(GavnError::MissingPaths(vec![path]));
    }
    read_json(&path)
}

pub fn read_clip(dir: &Path) -> Result<(Clip, ClipManifest)> {
    let missing: Vec<PathBuf> = required_paths(dir).into_iter().filter(|p| !p.exists()).collect();
    if !missing.is_empty() {
        return Err(GavnError::MissingPaths(missing));
    }
    let manifest = read_manifest(dir)?;
    let (t, h, w, k) = (manifest.frames, manifest.height, manifest.width, manifest.landmarks);
    let mut frames = Array4::zeros((t, 3, h, w));
    for f in 0..t {
        let path = frame_path(dir, f);
        if !path.exists() {
            return Err(GavnError::MissingPaths(vec![path]));
        }
        let img = image::open(&path)?.to_rgb8();
        if img.dimensions() != (w as u32, h as u32) {
            return Err(GavnError::Shape(format!(
                "{} is {:?}, manifest says {w}x{h}",
                path.display(),
                img.dimensions()
            )));
        }
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                frames[[f, c, y as usize, x as usize]] = px[c] as f64 / 255.0;
            }
        }
    }
    let mut reader = hound::WavReader::open(dir.join("audio.wav"))?;
    let audio: Vec<f32> = reader.samples::<f32>().collect::<std::result::Result<_, _>>()?;

    let lms: Vec<Vec<[f64; 2]>> = read_json(&dir.join("landmarks.json"))?;
    if lms.len() != t || lms.iter().any(|f| f.len() != k) {
        return Err(GavnError::Shape(format!("landmarks.json does not match T={t}, K={k}")));
    }
    let landmarks = Array3::from_shape_fn((t, k, 2), |(f, i, c)| lms[f][i][c]);
    let clip = Clip {
        frames,
        audio,
        envelope: manifest.envelope.clone(),
        fps: manifest.fps,
        sample_rate: manifest.sample_rate,
        landmarks,
        seed: manifest.seed,
    };
    clip.validate()?;
    Ok((clip, manifest))
}

/// Rounds frames onto the 8-bit lattice used by the container.
pub fn quantize_frames(frames: &Array4<f64>) -> Array4<f64> {
    frames.mapv(|v| to_u8(v) as f64 / 255.0)
}

/// Extracts frame `t` into a fresh `(3, H, W)` array.
pub fn frame_at(frames: &Array4<f64>, t: usize) -> Array3<f64> {
    frames.index_axis(ndarray::Axis(0), t).to_owned()
}
