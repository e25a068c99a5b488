//! Intra-frame identity module: frame and landmark features at two levels plus
//! an audio embedding, fused with spatial attention.

use rand::Rng;

use crate::diffops::{Graph, Init, ParamStore, Var};
use crate::error::{shape_err, Result};
use crate::nn::ConvLayer;

#[derive(Clone, Debug)]
pub struct IdentityConfig {
    pub channels: usize,
    pub num_landmarks: usize,
    /// Samples in one audio window.
    pub audio_len: usize,
    /// Pooled envelope bins the audio window is reduced to.
    pub audio_bins: usize,
}

/// Two strided conv blocks producing features at 1/2 and 1/4 resolution.
#[derive(Clone, Debug)]
pub struct TwoLevelEncoder {
    l1: ConvLayer,
    l2: ConvLayer,
}

impl TwoLevelEncoder {
    fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, c_in: usize, c: usize) -> Result<Self> {
        Ok(TwoLevelEncoder {
            l1: ConvLayer::new(store, rng, &format!("{prefix}.l1"), c_in, c, 3, 2, Init::He)?,
            l2: ConvLayer::new(store, rng, &format!("{prefix}.l2"), c, c, 3, 2, Init::He)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<[Var; 2]> {
        let (_, _, h, w) = g.shape(x);
        if h % 4 != 0 || w % 4 != 0 {
            return Err(shape_err!("identity encoder: {h}x{w} is not divisible by 4"));
        }
        let f1 = self.l1.forward_act(g, store, x)?;
        let f2 = self.l2.forward_act(g, store, f1)?;
        Ok([f1, f2])
    }

    pub fn first_layer(&self) -> &ConvLayer {
        &self.l1
    }
}

/// Pooled-envelope audio encoder with one head per level.
#[derive(Clone, Debug)]
pub struct AudioEncoder {
    hidden: ConvLayer,
    heads: [ConvLayer; 2],
    audio_len: usize,
    hop: usize,
}

impl AudioEncoder {
    fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, cfg: &IdentityConfig) -> Result<Self> {
        if cfg.audio_bins == 0 || cfg.audio_len % cfg.audio_bins != 0 {
            return Err(crate::GavnError::Config(format!(
                "audio window of {} samples does not split into {} bins",
                cfg.audio_len, cfg.audio_bins
            )));
        }
        let c = cfg.channels;
        Ok(AudioEncoder {
            hidden: ConvLayer::dense(store, rng, &format!("{prefix}.hidden"), cfg.audio_bins, c, Init::He)?,
            heads: [
                ConvLayer::dense(store, rng, &format!("{prefix}.head1"), c, c, Init::He)?,
                ConvLayer::dense(store, rng, &format!("{prefix}.head2"), c, c, Init::He)?,
            ],
            audio_len: cfg.audio_len,
            hop: cfg.audio_len / cfg.audio_bins,
        })
    }

    /// `(B, 1, 1, S)` windows to one `(B, C, 1, 1)` vector per level.
    pub fn embed(&self, g: &mut Graph, store: &ParamStore, audio: Var) -> Result<[Var; 2]> {
        let (_, c, h, s) = g.shape(audio);
        if (c, h, s) != (1, 1, self.audio_len) {
            return Err(shape_err!(
                "audio window {:?}, expected (B, 1, 1, {})",
                g.shape(audio),
                self.audio_len
            ));
        }
        let pooled = g.abs_pool(audio, self.hop)?;
        let hdn = self.hidden.forward_act(g, store, pooled)?;
        let a1 = self.heads[0].forward(g, store, hdn)?;
        let a2 = self.heads[1].forward(g, store, hdn)?;
        Ok([a1, a2])
    }
}

/// Attention fusion at one level.
#[derive(Clone, Debug)]
pub struct IdentityFusion {
    att_landmark: ConvLayer,
    att_audio: ConvLayer,
    out: ConvLayer,
}

impl IdentityFusion {
    fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, c: usize) -> Result<Self> {
        Ok(IdentityFusion {
            att_landmark: ConvLayer::new(store, rng, &format!("{prefix}.att_landmark"), 2 * c, c, 3, 1, Init::He)?,
            att_audio: ConvLayer::new(store, rng, &format!("{prefix}.att_audio"), 2 * c, c, 3, 1, Init::He)?,
            out: ConvLayer::new(store, rng, &format!("{prefix}.out"), 3 * c, c, 3, 1, Init::He)?,
        })
    }

    /// `I = Conv([F_l ⊙ σ(Conv[F_l, F_f]), F_f, F_a ⊙ σ(Conv[F_a, F_f])])`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, frame: Var, landmark: Var, audio: Var) -> Result<Var> {
        let s = g.shape(frame);
        for (what, v) in [("landmark", landmark), ("audio", audio)] {
            let o = g.shape(v);
            if (o.0, o.2, o.3) != (s.0, s.2, s.3) {
                return Err(shape_err!("fuse_identity: {what} features {o:?} vs frame features {s:?}"));
            }
        }
        let gated = |g: &mut Graph, conv: &ConvLayer, feat: Var| -> Result<Var> {
            let cat = g.concat(&[feat, frame])?;
            let a = conv.forward(g, store, cat)?;
            let a = g.sigmoid(a);
            g.mul(feat, a)
        };
        let l_hat = gated(g, &self.att_landmark, landmark)?;
        let a_hat = gated(g, &self.att_audio, audio)?;
        let cat = g.concat(&[l_hat, frame, a_hat])?;
        self.out.forward(g, store, cat)
    }

    pub fn attention_layers(&self) -> [&ConvLayer; 2] {
        [&self.att_landmark, &self.att_audio]
    }

    pub fn out_layer(&self) -> &ConvLayer {
        &self.out
    }
}

/// Identity features `I¹` (1/2 resolution) and `I²` (1/4 resolution).
#[derive(Clone, Copy, Debug)]
pub struct IdentityFeatures {
    pub i1: Var,
    pub i2: Var,
}

#[derive(Clone, Debug)]
pub struct IdentityModule {
    pub frame: TwoLevelEncoder,
    pub landmark: TwoLevelEncoder,
    pub audio: AudioEncoder,
    pub fusion: [IdentityFusion; 2],
    pub config: IdentityConfig,
}

impl IdentityModule {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, config: IdentityConfig) -> Result<Self> {
        let c = config.channels;
        Ok(IdentityModule {
            frame: TwoLevelEncoder::new(store, rng, &format!("{prefix}.frame"), 3, c)?,
            landmark: TwoLevelEncoder::new(store, rng, &format!("{prefix}.landmark"), config.num_landmarks, c)?,
            audio: AudioEncoder::new(store, rng, &format!("{prefix}.audio"), &config)?,
            fusion: [
                IdentityFusion::new(store, rng, &format!("{prefix}.fuse1"), c)?,
                IdentityFusion::new(store, rng, &format!("{prefix}.fuse2"), c)?,
            ],
            config,
        })
    }

    /// Audio embeddings tiled to the sizes of the two frame-feature levels.
    pub fn audio_features(&self, g: &mut Graph, store: &ParamStore, audio: Var, frame_feats: &[Var; 2]) -> Result<[Var; 2]> {
        let [a1, a2] = self.audio.embed(g, store, audio)?;
        let (_, _, h1, w1) = g.shape(frame_feats[0]);
        let (_, _, h2, w2) = g.shape(frame_feats[1]);
        Ok([g.tile(a1, h1, w1)?, g.tile(a2, h2, w2)?])
    }

    /// `frame (B,3,H,W)`, `heatmaps (B,K,H,W)`, `audio (B,1,1,S)`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, frame: Var, heatmaps: Var, audio: Var) -> Result<IdentityFeatures> {
        let (fb, _, fh, fw) = g.shape(frame);
        let (hb, hk, hh, hw) = g.shape(heatmaps);
        if (hb, hh, hw) != (fb, fh, fw) || hk != self.config.num_landmarks {
            return Err(shape_err!(
                "heatmaps {:?} do not match frame {:?} with K={}",
                g.shape(heatmaps),
                g.shape(frame),
                self.config.num_landmarks
            ));
        }
        let ff = self.frame.forward(g, store, frame)?;
        let fl = self.landmark.forward(g, store, heatmaps)?;
        let fa = self.audio_features(g, store, audio, &ff)?;
        let i1 = self.fusion[0].forward(g, store, ff[0], fl[0], fa[0])?;
        let i2 = self.fusion[1].forward(g, store, ff[1], fl[1], fa[1])?;
        Ok(IdentityFeatures { i1, i2 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn module(c: usize) -> (ParamStore, IdentityModule) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let cfg = IdentityConfig {
            channels: c,
            num_landmarks: 8,
            audio_len: 3200,
            audio_bins: 20,
        };
        let m = IdentityModule::new(&mut store, &mut rng, "identity", cfg).unwrap();
        (store, m)
    }

    #[test]
    fn level_shapes() {
        let (store, m) = module(4);
        let mut g = Graph::new();
        let x = g.constant(Array4::from_elem((1, 3, 32, 32), 0.3));
        let hm = g.constant(Array4::zeros((1, 8, 32, 32)));
        let a = g.constant(Array4::zeros((1, 1, 1, 3200)));
        let f = m.forward(&mut g, &store, x, hm, a).unwrap();
        assert_eq!(g.shape(f.i1), (1, 4, 16, 16));
        assert_eq!(g.shape(f.i2), (1, 4, 8, 8));
    }

    #[test]
    fn silent_window_embeds_to_zero_and_tiles() {
        let (store, m) = module(4);
        let mut g = Graph::new();
        let a = g.constant(Array4::zeros((1, 1, 1, 3200)));
        let emb = m.audio.embed(&mut g, &store, a).unwrap();
        assert!(g.value(emb[0]).iter().all(|&v| v == 0.0));
        let a = g.constant(Array4::from_shape_fn((1, 1, 1, 3200), |(_, _, _, s)| (s as f64 * 0.01).sin()));
        let x = g.constant(Array4::from_elem((1, 3, 16, 16), 0.5));
        let ff = m.frame.forward(&mut g, &store, x).unwrap();
        let fa = m.audio_features(&mut g, &store, a, &ff).unwrap();
        let v = g.value(fa[0]);
        for c in 0..4 {
            let first = v[[0, c, 0, 0]];
            assert!(v.slice(ndarray::s![0, c, .., ..]).iter().all(|&x| x == first));
        }
    }

    #[test]
    fn wrong_window_length_is_rejected() {
        let (store, m) = module(4);
        let mut g = Graph::new();
        let a = g.constant(Array4::zeros((1, 1, 1, 3000)));
        assert!(m.audio.embed(&mut g, &store, a).is_err());
    }
}
