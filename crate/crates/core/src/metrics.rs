//! PSNR, SSIM, MS-SSIM and landmark-region PSNR.

use std::collections::BTreeMap;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis, Dimension, ArrayBase, Data, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, GavnError, Result};
use crate::synthclip::lm;

/// Reported PSNR for identical inputs.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const REGION_DILATION: f64 = 4.0;

fn mse<S1, S2, D>(a: &ArrayBase<S1, D>, b: &ArrayBase<S2, D>) -> Result<f64>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    D: Dimension,
{
    if a.shape() != b.shape() {
        return Err(shape_err!("metric inputs differ in shape: {:?} vs {:?}", a.shape(), b.shape()));
    }
    if a.is_empty() {
        return Err(shape_err!("metric inputs are empty"));
    }
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| acc += (x - y) * (x - y));
    Ok(acc / a.len() as f64)
}

/// `10·log10(range² / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr<S1, S2, D>(a: &ArrayBase<S1, D>, b: &ArrayBase<S2, D>, data_range: f64) -> Result<f64>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
    D: Dimension,
{
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (data_range * data_range / m).log10()).min(PSNR_CAP))
}

/// Channel mean of a `(C, H, W)` image.
pub fn to_gray(img: &ArrayView3<f64>) -> Array2<f64> {
    img.mean_axis(Axis(0)).expect("at least one channel")
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable valid-region filtering with the SSIM window.
fn filter_valid(x: &Array2<f64>, win: &[f64]) -> Array2<f64> {
    let (h, w) = x.dim();
    let k = win.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = Array2::<f64>::zeros((h, ow));
    for y in 0..h {
        for xo in 0..ow {
            tmp[[y, xo]] = (0..k).map(|i| win[i] * x[[y, xo + i]]).sum();
        }
    }
    let mut out = Array2::<f64>::zeros((oh, ow));
    for yo in 0..oh {
        for xo in 0..ow {
            out[[yo, xo]] = (0..k).map(|i| win[i] * tmp[[yo + i, xo]]).sum();
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term on grayscale images, `L = 1`.
fn ssim_terms(a: &Array2<f64>, b: &Array2<f64>) -> Result<(f64, f64)> {
    if a.dim() != b.dim() {
        return Err(shape_err!("ssim: {:?} vs {:?}", a.dim(), b.dim()));
    }
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(shape_err!("ssim: {h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"));
    }
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    let win = gaussian_window();
    let mu_a = filter_valid(a, &win);
    let mu_b = filter_valid(b, &win);
    let saa = filter_valid(&(a * a), &win);
    let sbb = filter_valid(&(b * b), &win);
    let sab = filter_valid(&(a * b), &win);
    let n = mu_a.len() as f64;
    let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
    Zip::from(&mu_a)
        .and(&mu_b)
        .and(&saa)
        .and(&sbb)
        .and(&sab)
        .for_each(|&ma, &mb, &xaa, &xbb, &xab| {
            let va = xaa - ma * ma;
            let vb = xbb - mb * mb;
            let cov = xab - ma * mb;
            let cs = (2.0 * cov + c2) / (va + vb + c2);
            let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            ssim_sum += l * cs;
            cs_sum += cs;
        });
    Ok((ssim_sum / n, cs_sum / n))
}

pub fn ssim_gray(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    ssim_terms(a, b).map(|(s, _)| s)
}

/// SSIM of two `(C, H, W)` images on channel-mean grayscale.
pub fn ssim(a: &ArrayView3<f64>, b: &ArrayView3<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(shape_err!("ssim: {:?} vs {:?}", a.dim(), b.dim()));
    }
    ssim_gray(&to_gray(a), &to_gray(b))
}

fn downsample2(x: &Array2<f64>) -> Array2<f64> {
    let (h, w) = x.dim();
    Array2::from_shape_fn((h / 2, w / 2), |(y, xx)| {
        0.25 * (x[[2 * y, 2 * xx]] + x[[2 * y, 2 * xx + 1]] + x[[2 * y + 1, 2 * xx]] + x[[2 * y + 1, 2 * xx + 1]])
    })
}

/// Scales usable for a `h x w` image: the coarsest must still fit the window.
pub fn ms_ssim_levels(h: usize, w: usize) -> usize {
    let mut levels = 1;
    let (mut h, mut w) = (h, w);
    while levels < MS_SSIM_WEIGHTS.len() && h / 2 >= SSIM_WINDOW && w / 2 >= SSIM_WINDOW {
        h /= 2;
        w /= 2;
        levels += 1;
    }
    levels
}

/// Multi-scale SSIM with explicit weights (one per scale).
pub fn ms_ssim_weighted(a: &ArrayView2<f64>, b: &ArrayView2<f64>, weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(GavnError::InvalidArgument("ms_ssim needs at least one weight".into()));
    }
    let (mut x, mut y) = (a.to_owned(), b.to_owned());
    if weights.len() == 1 {
        return ssim_gray(&x, &y);
    }
    let mut out = 1.0;
    for (i, &wgt) in weights.iter().enumerate() {
        let (s, cs) = ssim_terms(&x, &y)?;
        if i + 1 == weights.len() {
            out *= s.max(0.0).powf(wgt);
        } else {
            out *= cs.max(0.0).powf(wgt);
            x = downsample2(&x);
            y = downsample2(&y);
        }
    }
    Ok(out)
}

/// MS-SSIM with the standard weights, reduced and renormalized for small images.
pub fn ms_ssim(a: &ArrayView3<f64>, b: &ArrayView3<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(shape_err!("ms_ssim: {:?} vs {:?}", a.dim(), b.dim()));
    }
    let (_, h, w) = a.dim();
    let levels = ms_ssim_levels(h, w);
    let total: f64 = MS_SSIM_WEIGHTS[..levels].iter().sum();
    let weights: Vec<f64> = MS_SSIM_WEIGHTS[..levels].iter().map(|v| v / total).collect();
    ms_ssim_weighted(&to_gray(a).view(), &to_gray(b).view(), &weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Mouth,
    Eyes,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Mouth => "mouth",
            Region::Eyes => "eyes",
        }
    }

    pub fn landmark_indices(self) -> &'static [usize] {
        match self {
            Region::Mouth => &[lm::MOUTH_LEFT, lm::MOUTH_RIGHT, lm::MOUTH_TOP, lm::MOUTH_BOTTOM],
            Region::Eyes => &[lm::LEFT_EYE, lm::RIGHT_EYE],
        }
    }
}

/// Inclusive pixel box `(x0, y0, x1, y1)` around the region's landmarks,
/// dilated by [`REGION_DILATION`] and clipped to the frame.
pub fn region_box(landmarks: &[[f64; 2]], region: Region, h: usize, w: usize) -> Result<(usize, usize, usize, usize)> {
    let idx = region.landmark_indices();
    if idx.iter().any(|&i| i >= landmarks.len()) {
        return Err(GavnError::InvalidArgument(format!(
            "{} region needs landmark indices {idx:?}, got {} landmarks",
            region.name(),
            landmarks.len()
        )));
    }
    let xs = idx.iter().map(|&i| landmarks[i][0]);
    let ys = idx.iter().map(|&i| landmarks[i][1]);
    let x0 = xs.clone().fold(f64::INFINITY, f64::min) - REGION_DILATION;
    let x1 = xs.fold(f64::NEG_INFINITY, f64::max) + REGION_DILATION;
    let y0 = ys.clone().fold(f64::INFINITY, f64::min) - REGION_DILATION;
    let y1 = ys.fold(f64::NEG_INFINITY, f64::max) + REGION_DILATION;
    let cx = |v: f64| v.round().clamp(0.0, (w - 1) as f64) as usize;
    let cy = |v: f64| v.round().clamp(0.0, (h - 1) as f64) as usize;
    let b = (cx(x0), cy(y0), cx(x1), cy(y1));
    if b.2 + 1 - b.0 < 4 || b.3 + 1 - b.1 < 4 {
        return Err(GavnError::InvalidArgument(format!("degenerate {} box {b:?}", region.name())));
    }
    Ok(b)
}

/// PSNR inside the region box of two `(C, H, W)` images.
pub fn region_psnr(a: &ArrayView3<f64>, b: &ArrayView3<f64>, landmarks: &[[f64; 2]], region: Region) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(shape_err!("region_psnr: {:?} vs {:?}", a.dim(), b.dim()));
    }
    let (_, h, w) = a.dim();
    let (x0, y0, x1, y1) = region_box(landmarks, region, h, w)?;
    let sa = a.slice(s![.., y0..=y1, x0..=x1]);
    let sb = b.slice(s![.., y0..=y1, x0..=x1]);
    psnr(&sa, &sb, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub region_psnr: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    pub data_range: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ms_ssim_weights: Vec<f64>,
    pub psnr_cap: f64,
    pub region_dilation: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            data_range: 1.0,
            ssim_window: SSIM_WINDOW,
            ssim_sigma: SSIM_SIGMA,
            ms_ssim_weights: MS_SSIM_WEIGHTS.to_vec(),
            psnr_cap: PSNR_CAP,
            region_dilation: REGION_DILATION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub clip: String,
    pub method: String,
    pub frames: Vec<FrameMetrics>,
    pub mean: FrameMetrics,
    pub settings: MetricSettings,
}

fn mean_of(frames: &[FrameMetrics]) -> FrameMetrics {
    let n = frames.len().max(1) as f64;
    let avg = |f: &dyn Fn(&FrameMetrics) -> f64| frames.iter().map(f).sum::<f64>() / n;
    let mut region = BTreeMap::new();
    if let Some(first) = frames.first() {
        for key in first.region_psnr.keys() {
            region.insert(key.clone(), avg(&|m: &FrameMetrics| m.region_psnr[key]));
        }
    }
    FrameMetrics {
        psnr: avg(&|m| m.psnr),
        ssim: avg(&|m| m.ssim),
        ms_ssim: avg(&|m| m.ms_ssim),
        region_psnr: region,
    }
}

impl MetricReport {
    /// Scores `(T, 3, H, W)` frames against ground truth with per-frame landmarks `(T, K, 2)`.
    pub fn compute(
        clip: &str,
        method: &str,
        gt: &ndarray::Array4<f64>,
        out: &ndarray::Array4<f64>,
        landmarks: &Array3<f64>,
    ) -> Result<Self> {
        if gt.dim() != out.dim() {
            return Err(shape_err!("eval: ground truth {:?} vs restored {:?}", gt.dim(), out.dim()));
        }
        if landmarks.dim().0 != gt.dim().0 {
            return Err(shape_err!("eval: {} landmark frames for {} frames", landmarks.dim().0, gt.dim().0));
        }
        let mut frames = Vec::with_capacity(gt.dim().0);
        for t in 0..gt.dim().0 {
            let a = gt.index_axis(Axis(0), t);
            let b = out.index_axis(Axis(0), t);
            let pts: Vec<[f64; 2]> = (0..landmarks.dim().1)
                .map(|k| [landmarks[[t, k, 0]], landmarks[[t, k, 1]]])
                .collect();
            let mut region = BTreeMap::new();
            for r in [Region::Mouth, Region::Eyes] {
                region.insert(r.name().to_string(), region_psnr(&a, &b, &pts, r)?);
            }
            frames.push(FrameMetrics {
                psnr: psnr(&a, &b, 1.0)?,
                ssim: ssim(&a, &b)?,
                ms_ssim: ms_ssim(&a, &b)?,
                region_psnr: region,
            });
        }
        let mean = mean_of(&frames);
        Ok(MetricReport {
            clip: clip.to_string(),
            method: method.to_string(),
            frames,
            mean,
            settings: MetricSettings::default(),
        })
    }

    /// Recomputes the clip mean from the stored per-frame values.
    pub fn recomputed_mean(&self) -> FrameMetrics {
        mean_of(&self.frames)
    }
}

pub const CSV_HEADER: &str = "clip,method,psnr,ssim,ms_ssim,mouth_psnr,eyes_psnr";

/// One CSV row per report, in the given order.
pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let m = &r.mean;
        let region = |k: &str| m.region_psnr.get(k).copied().unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            r.clip,
            r.method,
            m.psnr,
            m.ssim,
            m.ms_ssim,
            region("mouth"),
            region("eyes")
        ));
    }
    out
}
