//! Reconstruction module and the assembled GAVN forward pass.

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffops::{Graph, Grid4, Init, ParamStore, Var, LEAKY_SLOPE};
use crate::error::{shape_err, GavnError, Result};
use crate::identity::{IdentityConfig, IdentityModule};
use crate::landmark::LandmarkSource;
use crate::nn::ConvLayer;
use crate::synthclip::audio_window_len;
use crate::temporal::{AttentionTarget, TemporalConfig, TemporalModule, WindowLayout};

pub const TEMPORAL_PREFIX: &str = "temporal.";
pub const IDENTITY_PREFIX: &str = "identity.";
pub const RECON_PREFIX: &str = "recon.";
pub const HEAD1_PREFIX: &str = "head1.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GavnConfig {
    pub n: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub num_landmarks: usize,
    /// Audio window half-width `m`, in frames.
    pub audio_half_width: usize,
    pub fps: u32,
    pub sample_rate: u32,
    pub audio_bins: usize,
    pub align_levels: usize,
    pub attention_target: AttentionTarget,
    pub landmarks: LandmarkSource,
    pub heatmap_sigma: f64,
    /// Seed for parameter initialization.
    pub init_seed: u64,
}

impl Default for GavnConfig {
    fn default() -> Self {
        GavnConfig {
            n: 1,
            channels: 16,
            height: 64,
            width: 64,
            num_landmarks: 8,
            audio_half_width: 2,
            fps: 25,
            sample_rate: 16000,
            audio_bins: 20,
            align_levels: 2,
            attention_target: AttentionTarget::Paper,
            landmarks: LandmarkSource::Oracle,
            heatmap_sigma: 2.0,
            init_seed: 0,
        }
    }
}

impl GavnConfig {
    pub fn layout(&self) -> WindowLayout {
        WindowLayout { n: self.n }
    }

    pub fn audio_len(&self) -> usize {
        audio_window_len(self.fps, self.sample_rate, self.audio_half_width)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GavnError::Config(m));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if self.channels == 0 {
            return bad("channels must be >= 1".into());
        }
        if self.height % 4 != 0 || self.width % 4 != 0 || self.height < 8 || self.width < 8 {
            return bad(format!("frame size {}x{} must be >= 8 and divisible by 4", self.height, self.width));
        }
        if self.num_landmarks == 0 {
            return bad("num_landmarks must be >= 1".into());
        }
        if self.fps == 0 || self.sample_rate % self.fps != 0 {
            return bad(format!("sample_rate {} is not a multiple of fps {}", self.sample_rate, self.fps));
        }
        if self.audio_bins == 0 || self.audio_len() % self.audio_bins != 0 {
            return bad(format!(
                "audio window of {} samples does not split into {} bins",
                self.audio_len(),
                self.audio_bins
            ));
        }
        if self.align_levels == 0 {
            return bad("align_levels must be >= 1".into());
        }
        if !(self.heatmap_sigma > 0.0) {
            return bad("heatmap_sigma must be > 0".into());
        }
        Ok(())
    }
}

/// `conv(C→4C) → pixel_shuffle(2) → leaky → conv(C→C)`.
#[derive(Clone, Debug)]
pub struct UpBlock {
    expand: ConvLayer,
    conv: ConvLayer,
}

impl UpBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, c: usize) -> Result<Self> {
        Ok(UpBlock {
            expand: ConvLayer::new(store, rng, &format!("{prefix}.expand"), c, 4 * c, 3, 1, Init::He)?,
            conv: ConvLayer::new(store, rng, &format!("{prefix}.conv"), c, c, 3, 1, Init::He)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.expand.forward(g, store, x)?;
        let y = g.pixel_shuffle(y, 2)?;
        let y = g.leaky_relu(y, LEAKY_SLOPE);
        self.conv.forward(g, store, y)
    }
}

/// `Φ_UP(carrier ⊙ Conv(I) + Conv(I))`.
#[derive(Clone, Debug)]
pub struct FuseLevel {
    mul: ConvLayer,
    add: ConvLayer,
    pub up: UpBlock,
}

impl FuseLevel {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, c: usize) -> Result<Self> {
        Ok(FuseLevel {
            mul: ConvLayer::new(store, rng, &format!("{prefix}.mul"), c, c, 3, 1, Init::He)?,
            add: ConvLayer::new(store, rng, &format!("{prefix}.add"), c, c, 3, 1, Init::He)?,
            up: UpBlock::new(store, rng, &format!("{prefix}.up"), c)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, carrier: Var, identity: Var) -> Result<Var> {
        if g.shape(carrier) != g.shape(identity) {
            return Err(shape_err!(
                "fuse_level: carrier {:?} vs identity {:?}",
                g.shape(carrier),
                g.shape(identity)
            ));
        }
        let m = self.mul.forward(g, store, identity)?;
        let a = self.add.forward(g, store, identity)?;
        let prod = g.mul(carrier, m)?;
        let z = g.add(prod, a)?;
        self.up.forward(g, store, z)
    }
}

/// Zero-initialized `C → 3` projection added to the input frame.
#[derive(Clone, Debug)]
pub struct ResidualProjection {
    pub conv: ConvLayer,
}

impl ResidualProjection {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, c: usize) -> Result<Self> {
        Ok(ResidualProjection {
            conv: ConvLayer::new(store, rng, &format!("{prefix}.proj"), c, 3, 3, 1, Init::Zeros)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, features: Var, frame: Var) -> Result<Var> {
        let (fb, _, fh, fw) = g.shape(features);
        let (xb, _, xh, xw) = g.shape(frame);
        if (fb, fh, fw) != (xb, xh, xw) {
            return Err(shape_err!(
                "project_residual: features {:?} vs frame {:?}",
                g.shape(features),
                g.shape(frame)
            ));
        }
        let r = self.conv.forward(g, store, features)?;
        g.add(r, frame)
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionModule {
    pub level2: FuseLevel,
    pub level1: FuseLevel,
    pub projection: ResidualProjection,
}

impl ReconstructionModule {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, c: usize) -> Result<Self> {
        Ok(ReconstructionModule {
            level2: FuseLevel::new(store, rng, &format!("{prefix}.level2"), c)?,
            level1: FuseLevel::new(store, rng, &format!("{prefix}.level1"), c)?,
            projection: ResidualProjection::new(store, rng, prefix, c)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, t: Var, i1: Var, i2: Var, frame: Var) -> Result<Var> {
        let up2 = self.level2.forward(g, store, t, i2)?;
        let up1 = self.level1.forward(g, store, up2, i1)?;
        self.projection.forward(g, store, up1, frame)
    }
}

/// Temporal-only output head used in stage 1 and by the identity ablation.
#[derive(Clone, Debug)]
pub struct TemporalHead {
    pub up1: UpBlock,
    pub up2: UpBlock,
    pub projection: ResidualProjection,
}

impl TemporalHead {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, c: usize) -> Result<Self> {
        Ok(TemporalHead {
            up1: UpBlock::new(store, rng, &format!("{prefix}.up1"), c)?,
            up2: UpBlock::new(store, rng, &format!("{prefix}.up2"), c)?,
            projection: ResidualProjection::new(store, rng, prefix, c)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, t: Var, frame: Var) -> Result<Var> {
        let y = self.up1.forward(g, store, t)?;
        let y = self.up2.forward(g, store, y)?;
        self.projection.forward(g, store, y, frame)
    }
}

/// Which output path a forward pass uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputPath {
    /// Identity branch and reconstruction head on top of the temporal features.
    Full,
    /// Temporal module and the temporal-only head.
    TemporalOnly,
}

/// One batch of windows. Every array has the batch on axis 0.
#[derive(Clone, Debug)]
pub struct WindowInput {
    /// `2N+5` arrays of shape `(B, 3, H, W)`.
    pub frames: Vec<Grid4>,
    /// `2N+1` arrays of shape `(B, 1, 1, S)`, one per output frame.
    pub audio: Vec<Grid4>,
    /// `2N+1` arrays of shape `(B, K, H, W)`.
    pub heatmaps: Vec<Grid4>,
}

impl WindowInput {
    pub fn batch_size(&self) -> usize {
        self.frames.first().map(|f| f.dim().0).unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct GavnModel {
    pub config: GavnConfig,
    pub store: ParamStore,
    pub temporal: TemporalModule,
    pub identity: IdentityModule,
    pub recon: ReconstructionModule,
    pub head1: TemporalHead,
}

fn strip(prefix: &str) -> &str {
    prefix.trim_end_matches('.')
}

impl GavnModel {
    pub fn new(config: GavnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let c = config.channels;
        let temporal = TemporalModule::new(
            &mut store,
            &mut rng,
            strip(TEMPORAL_PREFIX),
            TemporalConfig {
                channels: c,
                align_levels: config.align_levels,
                attention_target: config.attention_target,
            },
        )?;
        let identity = IdentityModule::new(
            &mut store,
            &mut rng,
            strip(IDENTITY_PREFIX),
            IdentityConfig {
                channels: c,
                num_landmarks: config.num_landmarks,
                audio_len: config.audio_len(),
                audio_bins: config.audio_bins,
            },
        )?;
        let recon = ReconstructionModule::new(&mut store, &mut rng, strip(RECON_PREFIX), c)?;
        let head1 = TemporalHead::new(&mut store, &mut rng, strip(HEAD1_PREFIX), c)?;
        Ok(GavnModel {
            config,
            store,
            temporal,
            identity,
            recon,
            head1,
        })
    }

    pub fn layout(&self) -> WindowLayout {
        self.config.layout()
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Checks counts and shapes; returns the batch size.
    pub fn validate_input(&self, input: &WindowInput) -> Result<usize> {
        let layout = self.layout();
        let cfg = &self.config;
        if input.frames.len() != layout.input_count() {
            return Err(shape_err!(
                "window has {} frames, expected 2N+5 = {}",
                input.frames.len(),
                layout.input_count()
            ));
        }
        let b = input.batch_size();
        for f in &input.frames {
            if f.dim() != (b, 3, cfg.height, cfg.width) {
                return Err(shape_err!(
                    "frame {:?}, expected ({b}, 3, {}, {})",
                    f.dim(),
                    cfg.height,
                    cfg.width
                ));
            }
        }
        for (what, list) in [("audio windows", &input.audio), ("heatmap stacks", &input.heatmaps)] {
            if list.len() != layout.output_count() {
                return Err(shape_err!(
                    "{} {what}, expected 2N+1 = {}",
                    list.len(),
                    layout.output_count()
                ));
            }
        }
        for a in &input.audio {
            if a.dim() != (b, 1, 1, cfg.audio_len()) {
                return Err(shape_err!("audio window {:?}, expected ({b}, 1, 1, {})", a.dim(), cfg.audio_len()));
            }
        }
        for h in &input.heatmaps {
            if h.dim() != (b, cfg.num_landmarks, cfg.height, cfg.width) {
                return Err(shape_err!("heatmaps {:?}", h.dim()));
            }
        }
        Ok(b)
    }

    /// Records the forward pass; returns the `2N+1` restored frames.
    pub fn forward(&self, g: &mut Graph, input: &WindowInput, path: OutputPath) -> Result<Vec<Var>> {
        self.validate_input(input)?;
        let layout = self.layout();
        let store = &self.store;
        let frames: Vec<Var> = input.frames.iter().map(|f| g.constant(f.clone())).collect();
        let t_feats = self.temporal.forward(g, store, &frames, &layout)?;
        let mut out = Vec::with_capacity(layout.output_count());
        for (k, pos) in layout.output_positions().enumerate() {
            let x = frames[pos];
            let y = match path {
                OutputPath::TemporalOnly => self.head1.forward(g, store, t_feats[k], x)?,
                OutputPath::Full => {
                    let hm = g.constant(input.heatmaps[k].clone());
                    let au = g.constant(input.audio[k].clone());
                    let ident = self.identity.forward(g, store, x, hm, au)?;
                    if g.shape(ident.i2) != g.shape(t_feats[k]) {
                        return Err(shape_err!(
                            "I2 {:?} does not match T {:?}",
                            g.shape(ident.i2),
                            g.shape(t_feats[k])
                        ));
                    }
                    self.recon.forward(g, store, t_feats[k], ident.i1, ident.i2, x)?
                }
            };
            out.push(y);
        }
        Ok(out)
    }

    /// Forward pass without gradients; returns owned arrays (unclamped).
    pub fn infer(&self, input: &WindowInput, path: OutputPath) -> Result<Vec<Grid4>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, input, path)?;
        Ok(out.iter().map(|&v| g.value(v).clone()).collect())
    }
}

/// One row of the committed golden configuration table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenRow {
    pub n: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub num_params: usize,
    pub output_frames: usize,
    pub temporal_feature: [usize; 3],
}

impl GoldenRow {
    pub fn measure(config: &GavnConfig) -> Result<Self> {
        let model = GavnModel::new(config.clone())?;
        let c = config.channels;
        Ok(GoldenRow {
            n: config.n,
            channels: c,
            height: config.height,
            width: config.width,
            num_params: model.num_params(),
            output_frames: config.layout().output_count(),
            temporal_feature: [c, config.height / 4, config.width / 4],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        let cfg = GavnConfig {
            height: 30,
            ..GavnConfig::default()
        };
        assert!(GavnModel::new(cfg).is_err());
    }

    #[test]
    fn parameter_names_are_prefixed() {
        let cfg = GavnConfig {
            channels: 4,
            height: 16,
            width: 16,
            ..GavnConfig::default()
        };
        let m = GavnModel::new(cfg).unwrap();
        for (_, p) in m.store.iter() {
            assert!(
                [TEMPORAL_PREFIX, IDENTITY_PREFIX, RECON_PREFIX, HEAD1_PREFIX]
                    .iter()
                    .any(|pre| p.name.starts_with(pre)),
                "{}",
                p.name
            );
        }
    }
}
