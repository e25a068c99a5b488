//! Frame distortions used to build the degradation grid.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{GavnError, Result};
use crate::synthclip::Clip;

/// Kernel-size range of the Gaussian blur at 224x224.
pub const FULL_SCALE_BLUR_RANGE: (usize, usize) = (15, 25);
/// Default scaled range for 64x64 frames.
pub const DESK_BLUR_RANGE: (usize, usize) = (5, 9);
pub const DCT_BLOCK: usize = 8;
/// Level grids for distortion sweeps, mildest first.
pub const QUALITY_STEP_GRID: [f64; 3] = [0.05, 0.15, 0.3];
pub const FULL_SCALE_BLUR_GRID: [usize; 3] = [15, 21, 25];
pub const DOWNSAMPLE_GRID: [f64; 3] = [2.0, 4.0, 8.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    Compression,
    Blur,
    LowResolution,
}

impl DegradationKind {
    pub fn name(self) -> &'static str {
        match self {
            DegradationKind::Compression => "compression",
            DegradationKind::Blur => "blur",
            DegradationKind::LowResolution => "low_resolution",
        }
    }
}

/// One distortion: quantization step, kernel size, or downsampling factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub level: f64,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn compression(quality_step: f64) -> Self {
        DegradationSpec {
            kind: DegradationKind::Compression,
            level: quality_step,
            seed: 0,
        }
    }

    pub fn blur(kernel_size: usize) -> Self {
        DegradationSpec {
            kind: DegradationKind::Blur,
            level: kernel_size as f64,
            seed: 0,
        }
    }

    pub fn low_resolution(factor: f64) -> Self {
        DegradationSpec {
            kind: DegradationKind::LowResolution,
            level: factor,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DegradationKind::Compression if !(self.level > 0.0) => Err(GavnError::InvalidArgument(format!(
                "compression quality step must be > 0, got {}",
                self.level
            ))),
            DegradationKind::Blur => {
                let k = self.level;
                if k.fract() != 0.0 || k < 1.0 || (k as usize) % 2 == 0 {
                    Err(GavnError::InvalidArgument(format!("blur kernel size must be odd, got {k}")))
                } else {
                    Ok(())
                }
            }
            DegradationKind::LowResolution if !(2.0..=8.0).contains(&self.level) => Err(
                GavnError::InvalidArgument(format!("downsampling factor {} outside [2, 8]", self.level)),
            ),
            _ => Ok(()),
        }
    }

    /// Short directory-friendly tag, e.g. `blur_k7`.
    pub fn tag(&self) -> String {
        match self.kind {
            DegradationKind::Compression => format!("compression_q{}", self.level),
            DegradationKind::Blur => format!("blur_k{}", self.level),
            DegradationKind::LowResolution => format!("low_resolution_x{}", self.level),
        }
    }
}

/// Maps a 224-scale kernel size onto `range` linearly, rounding to the nearest odd size.
pub fn scaled_kernel_size(full_k: usize, range: (usize, usize)) -> usize {
    let (p0, p1) = FULL_SCALE_BLUR_RANGE;
    let t = (full_k as f64 - p0 as f64) / (p1 - p0) as f64;
    let k = range.0 as f64 + t * (range.1 - range.0) as f64;
    let odd = 2.0 * ((k - 1.0) / 2.0).round() + 1.0;
    (odd.max(1.0) as usize).clamp(range.0.min(range.1), range.0.max(range.1))
}

/// Periodic mirror index, valid for any `i`.
fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

pub fn gaussian_sigma(kernel_size: usize) -> f64 {
    0.3 * ((kernel_size as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalized 1-D Gaussian taps for `kernel_size`.
pub fn gaussian_kernel_1d(kernel_size: usize) -> Result<Vec<f64>> {
    if kernel_size % 2 == 0 {
        return Err(GavnError::InvalidArgument(format!(
            "blur kernel size must be odd, got {kernel_size}"
        )));
    }
    let sigma = gaussian_sigma(kernel_size);
    let half = (kernel_size / 2) as f64;
    let raw: Vec<f64> = (0..kernel_size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / sum).collect())
}

/// Separable correlation of every channel plane with per-axis tap tables.
fn separable(frame: &Array3<f64>, taps: &[f64]) -> Array3<f64> {
    let (c, h, w) = frame.dim();
    let half = (taps.len() / 2) as isize;
    let mut tmp = Array3::<f64>::zeros((c, h, w));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                tmp[[ch, y, x]] = taps
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t * frame[[ch, y, mirror(x as isize + i as isize - half, w)]])
                    .sum::<f64>();
            }
        }
    }
    let mut out = Array3::<f64>::zeros((c, h, w));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[[ch, y, x]] = taps
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t * tmp[[ch, mirror(y as isize + i as isize - half, h), x]])
                    .sum::<f64>();
            }
        }
    }
    out
}

/// Gaussian blur with reflect padding.
pub fn gaussian_blur(frame: &Array3<f64>, kernel_size: usize) -> Result<Array3<f64>> {
    let taps = gaussian_kernel_1d(kernel_size)?;
    Ok(separable(frame, &taps))
}

/// Catmull-Rom cubic (`a = -0.5`).
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Resampling matrix `(out, in)` for one axis; the kernel widens when downsampling.
fn resize_weights(n_in: usize, n_out: usize) -> Array2<f64> {
    let scale = n_in as f64 / n_out as f64;
    let stretch = scale.max(1.0);
    let support = 2.0 * stretch;
    let mut m = Array2::zeros((n_out, n_in));
    for o in 0..n_out {
        let center = (o as f64 + 0.5) * scale - 0.5;
        let lo = (center - support).floor() as isize;
        let hi = (center + support).ceil() as isize;
        let mut taps = Vec::new();
        let mut sum = 0.0;
        for j in lo..=hi {
            let wt = cubic_kernel((j as f64 - center) / stretch);
            if wt != 0.0 {
                taps.push((mirror(j, n_in), wt));
                sum += wt;
            }
        }
        for (j, wt) in taps {
            m[[o, j]] += wt / sum;
        }
    }
    m
}

/// Bicubic resize to an explicit size.
pub fn resize_to(frame: &Array3<f64>, out_h: usize, out_w: usize) -> Result<Array3<f64>> {
    if out_h < 8 || out_w < 8 {
        return Err(GavnError::InvalidArgument(format!(
            "resize output {out_h}x{out_w} smaller than 8x8"
        )));
    }
    let (c, h, w) = frame.dim();
    let wy = resize_weights(h, out_h);
    let wx = resize_weights(w, out_w);
    let mut out = Array3::zeros((c, out_h, out_w));
    for ch in 0..c {
        let plane = frame.index_axis(Axis(0), ch);
        let rows = wy.dot(&plane);
        out.index_axis_mut(Axis(0), ch).assign(&rows.dot(&wx.t()));
    }
    Ok(out)
}

/// Resize by `scale`: output is `round(H / scale) x round(W / scale)`, so
/// `scale > 1` downsamples and `scale < 1` upsamples.
pub fn bicubic_resize(frame: &Array3<f64>, scale: f64) -> Result<Array3<f64>> {
    if !(scale > 0.0) {
        return Err(GavnError::InvalidArgument(format!("scale must be > 0, got {scale}")));
    }
    let (_, h, w) = frame.dim();
    let oh = (h as f64 / scale).round() as usize;
    let ow = (w as f64 / scale).round() as usize;
    resize_to(frame, oh, ow)
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn dct_basis() -> Array2<f64> {
    let n = DCT_BLOCK;
    Array2::from_shape_fn((n, n), |(k, i)| {
        let a = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        a * (PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n as f64)).cos()
    })
}

/// Block-DCT coefficients of every 8x8 block of a plane whose sides are multiples of 8.
pub fn block_dct(plane: &Array2<f64>) -> Array2<f64> {
    let d = dct_basis();
    let mut out = Array2::zeros(plane.dim());
    let (h, w) = plane.dim();
    for by in (0..h).step_by(DCT_BLOCK) {
        for bx in (0..w).step_by(DCT_BLOCK) {
            let blk = plane.slice(ndarray::s![by..by + DCT_BLOCK, bx..bx + DCT_BLOCK]);
            let c = d.dot(&blk).dot(&d.t());
            out.slice_mut(ndarray::s![by..by + DCT_BLOCK, bx..bx + DCT_BLOCK]).assign(&c);
        }
    }
    out
}

pub fn block_idct(coeffs: &Array2<f64>) -> Array2<f64> {
    let d = dct_basis();
    let mut out = Array2::zeros(coeffs.dim());
    let (h, w) = coeffs.dim();
    for by in (0..h).step_by(DCT_BLOCK) {
        for bx in (0..w).step_by(DCT_BLOCK) {
            let blk = coeffs.slice(ndarray::s![by..by + DCT_BLOCK, bx..bx + DCT_BLOCK]);
            let p = d.t().dot(&blk).dot(&d);
            out.slice_mut(ndarray::s![by..by + DCT_BLOCK, bx..bx + DCT_BLOCK]).assign(&p);
        }
    }
    out
}

/// Block-transform quantization standing in for a lossy video codec.
pub fn compress_proxy(frame: &Array3<f64>, quality_step: f64) -> Result<Array3<f64>> {
    if !(quality_step > 0.0) {
        return Err(GavnError::InvalidArgument(format!(
            "quality step must be > 0, got {quality_step}"
        )));
    }
    let (c, h, w) = frame.dim();
    let ph = h.div_ceil(DCT_BLOCK) * DCT_BLOCK;
    let pw = w.div_ceil(DCT_BLOCK) * DCT_BLOCK;
    let mut out = Array3::zeros((c, h, w));
    for ch in 0..c {
        let padded = Array2::from_shape_fn((ph, pw), |(y, x)| {
            frame[[ch, mirror(y as isize, h), mirror(x as isize, w)]]
        });
        let mut coeffs = block_dct(&padded);
        coeffs.mapv_inplace(|v| (v / quality_step).round() * quality_step);
        let rec = block_idct(&coeffs);
        for y in 0..h {
            for x in 0..w {
                out[[ch, y, x]] = rec[[y, x]].clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Applies one distortion to a single `(3, H, W)` frame at its original size.
pub fn degrade_frame(frame: &Array3<f64>, spec: &DegradationSpec) -> Result<Array3<f64>> {
    spec.validate()?;
    match spec.kind {
        DegradationKind::Compression => compress_proxy(frame, spec.level),
        DegradationKind::Blur => gaussian_blur(frame, spec.level as usize),
        DegradationKind::LowResolution => {
            let (_, h, w) = frame.dim();
            let small = bicubic_resize(frame, spec.level)?;
            resize_to(&small, h, w)
        }
    }
}

/// Degrades every frame; audio, envelope and landmarks are copied unchanged.
pub fn degrade_clip(clip: &Clip, spec: &DegradationSpec) -> Result<Clip> {
    spec.validate()?;
    let mut out = clip.clone();
    for t in 0..clip.num_frames() {
        let f = degrade_frame(&clip.frame(t), spec)?;
        out.frames.index_axis_mut(Axis(0), t).assign(&f);
    }
    Ok(out)
}
