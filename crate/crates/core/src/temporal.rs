//! Inter-frame temporal module: predeblur pyramids, four directional
//! deformable alignment chains and attention fusion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffops::{Graph, Init, ParamId, ParamStore, Var};
use crate::error::{shape_err, GavnError, Result};
use crate::nn::ConvLayer;

/// Which tensor the fusion attention map multiplies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionTarget {
    /// `Ỹ = AF ⊙ σ(Conv(Y) ⊙ Conv(AF))`.
    #[default]
    Paper,
    /// `Ỹ = Y ⊙ σ(Conv(Y) ⊙ Conv(AF))`.
    PerBranch,
}

impl std::str::FromStr for AttentionTarget {
    type Err = GavnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "per_branch" | "per-branch" => Ok(Self::PerBranch),
            other => Err(GavnError::InvalidArgument(format!(
                "unknown attention target `{other}` (expected paper or per_branch)"
            ))),
        }
    }
}

/// The five aligned-feature kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainKind {
    /// Forward adjacent.
    FA,
    /// Backward adjacent.
    BA,
    /// Forward skip-frame.
    FS,
    /// Backward skip-frame.
    BS,
    /// Self alignment.
    AF,
}

impl ChainKind {
    pub const ALL: [ChainKind; 5] = [ChainKind::FA, ChainKind::BA, ChainKind::FS, ChainKind::BS, ChainKind::AF];

    pub fn name(self) -> &'static str {
        match self {
            ChainKind::FA => "fa",
            ChainKind::BA => "ba",
            ChainKind::FS => "fs",
            ChainKind::BS => "bs",
            ChainKind::AF => "af",
        }
    }
}

/// Frame bookkeeping for a window centred on `t`.
///
/// Window positions run `0..2N+5`; the centre frame `t` sits at `N + 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowLayout {
    pub n: usize,
}

impl WindowLayout {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(GavnError::InvalidArgument("N must be >= 1".into()));
        }
        Ok(WindowLayout { n })
    }

    pub fn input_count(&self) -> usize {
        2 * self.n + 5
    }

    pub fn output_count(&self) -> usize {
        2 * self.n + 1
    }

    pub fn chain_count(&self) -> usize {
        2 * self.n + 3
    }

    pub fn center(&self) -> usize {
        self.n + 2
    }

    /// Window positions of the chain frames `t-N-1 ..= t+N+1`.
    pub fn chain_positions(&self) -> std::ops::RangeInclusive<usize> {
        1..=2 * self.n + 3
    }

    /// Window positions of the output frames `t-N ..= t+N`.
    pub fn output_positions(&self) -> std::ops::RangeInclusive<usize> {
        2..=2 * self.n + 2
    }

    /// Signed offset of a window position from `t`.
    pub fn relative(&self, pos: usize) -> isize {
        pos as isize - self.center() as isize
    }
}

/// State of one aligned-feature slot.
#[derive(Clone, Debug, PartialEq)]
pub enum Entry<F> {
    Present(F),
    /// Would need a frame outside the window.
    Absent,
    /// Not needed by any output frame.
    NotComputed,
}

impl<F> Entry<F> {
    pub fn present(&self) -> Option<&F> {
        match self {
            Entry::Present(f) => Some(f),
            _ => None,
        }
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, Entry::Absent)
    }
}

/// Aligned features of one chain frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedFeatureSet<F> {
    pub fa: Entry<F>,
    pub ba: Entry<F>,
    pub fs: Entry<F>,
    pub bs: Entry<F>,
    pub af: Entry<F>,
}

impl<F> AlignedFeatureSet<F> {
    fn empty() -> Self {
        AlignedFeatureSet {
            fa: Entry::NotComputed,
            ba: Entry::NotComputed,
            fs: Entry::NotComputed,
            bs: Entry::NotComputed,
            af: Entry::NotComputed,
        }
    }

    pub fn get(&self, kind: ChainKind) -> &Entry<F> {
        match kind {
            ChainKind::FA => &self.fa,
            ChainKind::BA => &self.ba,
            ChainKind::FS => &self.fs,
            ChainKind::BS => &self.bs,
            ChainKind::AF => &self.af,
        }
    }

    fn slot(&mut self, kind: ChainKind) -> &mut Entry<F> {
        match kind {
            ChainKind::FA => &mut self.fa,
            ChainKind::BA => &mut self.ba,
            ChainKind::FS => &mut self.fs,
            ChainKind::BS => &mut self.bs,
            ChainKind::AF => &mut self.af,
        }
    }
}

/// Anything that can align a neighbour feature to a reference feature.
pub trait Aligner {
    type Feature: Clone;
    fn align(&mut self, kind: ChainKind, reference: &Self::Feature, neighbor: &Self::Feature) -> Result<Self::Feature>;
}

/// Runs the four directional chains and the self alignment.
///
/// `features[i]` is `F` at window position `i`. The result is indexed by chain
/// frame, i.e. entry `0` is window position `1` (`t-N-1`).
pub fn build_chains<A: Aligner>(
    aligner: &mut A,
    features: &[A::Feature],
    layout: &WindowLayout,
) -> Result<Vec<AlignedFeatureSet<A::Feature>>> {
    let count = layout.input_count();
    if features.len() != count {
        return Err(shape_err!(
            "build_chains: expected {count} frame features, got {}",
            features.len()
        ));
    }
    let first = *layout.output_positions().start();
    let last = *layout.output_positions().end();
    let mut sets: Vec<AlignedFeatureSet<A::Feature>> =
        layout.chain_positions().map(|_| AlignedFeatureSet::empty()).collect();
    let at = |pos: usize| pos - 1;
    let put = |sets: &mut Vec<AlignedFeatureSet<A::Feature>>, pos: usize, kind, f| {
        *sets[at(pos)].slot(kind) = Entry::Present(f);
    };
    let get = |sets: &Vec<AlignedFeatureSet<A::Feature>>, pos: usize, kind| -> A::Feature {
        sets[at(pos)].get(kind).present().expect("chain order").clone()
    };

    // Forward adjacent: base at t-N-1 from F_{j-1}, then chained.
    let base = *layout.chain_positions().start();
    let f = aligner.align(ChainKind::FA, &features[base], &features[base - 1])?;
    put(&mut sets, base, ChainKind::FA, f);
    for j in base + 1..=last {
        let prev = get(&sets, j - 1, ChainKind::FA);
        let f = aligner.align(ChainKind::FA, &features[j], &prev)?;
        put(&mut sets, j, ChainKind::FA, f);
    }

    // Backward adjacent, mirrored.
    let base = *layout.chain_positions().end();
    let f = aligner.align(ChainKind::BA, &features[base], &features[base + 1])?;
    put(&mut sets, base, ChainKind::BA, f);
    for j in (first..base).rev() {
        let next = get(&sets, j + 1, ChainKind::BA);
        let f = aligner.align(ChainKind::BA, &features[j], &next)?;
        put(&mut sets, j, ChainKind::BA, f);
    }

    // Forward skip: bases at t-N and t-N+1 from F_{j-2}, then chained on FS_{j-2}.
    sets[at(*layout.chain_positions().start())].fs = Entry::Absent;
    for j in first..=last {
        let f = if j < first + 2 {
            aligner.align(ChainKind::FS, &features[j], &features[j - 2])?
        } else {
            let prev = get(&sets, j - 2, ChainKind::FS);
            aligner.align(ChainKind::FS, &features[j], &prev)?
        };
        put(&mut sets, j, ChainKind::FS, f);
    }

    // Backward skip, mirrored.
    sets[at(*layout.chain_positions().end())].bs = Entry::Absent;
    for j in (first..=last).rev() {
        let f = if j + 2 > last {
            aligner.align(ChainKind::BS, &features[j], &features[j + 2])?
        } else {
            let next = get(&sets, j + 2, ChainKind::BS);
            aligner.align(ChainKind::BS, &features[j], &next)?
        };
        put(&mut sets, j, ChainKind::BS, f);
    }

    for j in first..=last {
        let f = aligner.align(ChainKind::AF, &features[j], &features[j])?;
        put(&mut sets, j, ChainKind::AF, f);
    }
    Ok(sets)
}

/// Predeblur output for one frame (or one batch of frames at the same
/// window position).
#[derive(Clone, Copy, Debug)]
pub struct FeaturePyramid {
    /// Levels at 1/1, 1/2 and 1/4 resolution.
    pub levels: [Var; 3],
}

impl FeaturePyramid {
    /// The 1/4-resolution alignment feature.
    pub fn top(&self) -> Var {
        self.levels[2]
    }
}

#[derive(Clone, Debug)]
pub struct TemporalConfig {
    pub channels: usize,
    /// Pyramid levels inside each alignment (including the finest).
    pub align_levels: usize,
    pub attention_target: AttentionTarget,
}

/// Coarse-to-fine deformable alignment for one chain kind.
#[derive(Clone, Debug)]
pub struct AlignModule {
    coarse: ConvLayer,
    refine: Vec<ConvLayer>,
    deform_w: ParamId,
    deform_b: ParamId,
    levels: usize,
}

pub const ALIGN_KERNEL: usize = 3;
const OFFSET_CHANNELS: usize = 2 * ALIGN_KERNEL * ALIGN_KERNEL;

impl AlignModule {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, c: usize, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(GavnError::Config("align_levels must be >= 1".into()));
        }
        let coarse = ConvLayer::new(store, rng, &format!("{prefix}.offset0"), 2 * c, OFFSET_CHANNELS, 3, 1, Init::Zeros)?;
        let refine = (1..levels)
            .map(|l| {
                ConvLayer::new(
                    store,
                    rng,
                    &format!("{prefix}.offset{l}"),
                    2 * c + OFFSET_CHANNELS,
                    OFFSET_CHANNELS,
                    3,
                    1,
                    Init::Zeros,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let k = ALIGN_KERNEL;
        let deform_w = store.create(format!("{prefix}.deform.weight"), (c, c, k, k), c * k * k, Init::He, rng)?;
        let deform_b = store.create(format!("{prefix}.deform.bias"), (1, c, 1, 1), 1, Init::Zeros, rng)?;
        Ok(AlignModule {
            coarse,
            refine,
            deform_w,
            deform_b,
            levels,
        })
    }

    /// Levels actually usable for a `h x w` map: each coarser level halves the
    /// size and must stay even-sized and at least 2 pixels.
    pub fn usable_levels(&self, h: usize, w: usize) -> usize {
        let (mut h, mut w, mut n) = (h, w, 1);
        while n < self.levels && h % 2 == 0 && w % 2 == 0 && h / 2 >= 2 && w / 2 >= 2 {
            h /= 2;
            w /= 2;
            n += 1;
        }
        n
    }

    /// Predicts offsets coarse to fine and applies one deformable convolution
    /// to `nbr` at the finest level.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, reference: Var, nbr: Var) -> Result<(Var, Var)> {
        let (_, _, h, w) = g.shape(reference);
        if g.shape(nbr) != g.shape(reference) {
            return Err(shape_err!(
                "align: reference {:?} vs neighbour {:?}",
                g.shape(reference),
                g.shape(nbr)
            ));
        }
        let levels = self.usable_levels(h, w);
        let mut refs = vec![reference];
        let mut nbrs = vec![nbr];
        for _ in 1..levels {
            let r = g.avg_pool2(*refs.last().expect("nonempty"))?;
            let n = g.avg_pool2(*nbrs.last().expect("nonempty"))?;
            refs.push(r);
            nbrs.push(n);
        }
        let coarsest = levels - 1;
        let cat = g.concat(&[refs[coarsest], nbrs[coarsest]])?;
        let mut offsets = self.coarse.forward(g, store, cat)?;
        for l in (0..coarsest).rev() {
            let up = g.upsample2(offsets, 2.0);
            let cat = g.concat(&[refs[l], nbrs[l], up])?;
            let delta = self.refine[coarsest - 1 - l].forward(g, store, cat)?;
            offsets = g.add(up, delta)?;
        }
        let limit = h.max(w) as f64 / 4.0;
        let offsets = g.clamp(offsets, -limit, limit);
        let wv = g.param(store, self.deform_w);
        let bv = g.param(store, self.deform_b);
        let out = g.deform_conv2d(nbr, offsets, wv, Some(bv))?;
        Ok((out, offsets))
    }

    pub fn deform_weight(&self) -> ParamId {
        self.deform_w
    }

    pub fn offset_params(&self) -> Vec<ParamId> {
        let mut ids = self.coarse.params();
        for r in &self.refine {
            ids.extend(r.params());
        }
        ids
    }
}

/// Attention fusion of the five aligned branches.
#[derive(Clone, Debug)]
pub struct FusionModule {
    branch: Vec<(ChainKind, ConvLayer)>,
    af_shared: ConvLayer,
    out: ConvLayer,
    target: AttentionTarget,
}

/// Branch order inside the fused concatenation.
pub const FUSION_ORDER: [ChainKind; 5] = [ChainKind::FS, ChainKind::FA, ChainKind::AF, ChainKind::BA, ChainKind::BS];

impl FusionModule {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        c: usize,
        target: AttentionTarget,
    ) -> Result<Self> {
        let branch = FUSION_ORDER
            .iter()
            .map(|&k| {
                ConvLayer::new(store, rng, &format!("{prefix}.att_{}", k.name()), c, c, 3, 1, Init::He).map(|l| (k, l))
            })
            .collect::<Result<Vec<_>>>()?;
        let af_shared = ConvLayer::new(store, rng, &format!("{prefix}.att_ref"), c, c, 3, 1, Init::He)?;
        let out = ConvLayer::new(store, rng, &format!("{prefix}.out"), 5 * c, c, 3, 1, Init::He)?;
        Ok(FusionModule {
            branch,
            af_shared,
            out,
            target,
        })
    }

    /// Fuses one output frame's aligned set into `T_j`. Absent branches take AF.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, set: &AlignedFeatureSet<Var>) -> Result<Var> {
        let af = *set
            .af
            .present()
            .ok_or_else(|| GavnError::InvalidArgument("fuse_temporal: AF is required".into()))?;
        let af_att = self.af_shared.forward(g, store, af)?;
        let mut branches = Vec::with_capacity(5);
        for (kind, conv) in &self.branch {
            let y = set.get(*kind).present().copied().unwrap_or(af);
            let a = conv.forward(g, store, y)?;
            let prod = g.mul(a, af_att)?;
            let att = g.sigmoid(prod);
            let carrier = match self.target {
                AttentionTarget::Paper => af,
                AttentionTarget::PerBranch => y,
            };
            branches.push(g.mul(carrier, att)?);
        }
        let cat = g.concat(&branches)?;
        self.out.forward(g, store, cat)
    }

    pub fn out_layer(&self) -> &ConvLayer {
        &self.out
    }

    pub fn attention_layers(&self) -> Vec<&ConvLayer> {
        let mut v: Vec<&ConvLayer> = self.branch.iter().map(|(_, l)| l).collect();
        v.push(&self.af_shared);
        v
    }
}

/// Predeblur pyramid followed by the alignment chains and their fusion.
#[derive(Clone, Debug)]
pub struct TemporalModule {
    predeblur: [ConvLayer; 3],
    aligners: Vec<(ChainKind, AlignModule)>,
    pub fusion: FusionModule,
    pub config: TemporalConfig,
}

impl TemporalModule {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, prefix: &str, config: TemporalConfig) -> Result<Self> {
        let c = config.channels;
        let predeblur = [
            ConvLayer::new(store, rng, &format!("{prefix}.predeblur.l0"), 3, c, 3, 1, Init::He)?,
            ConvLayer::new(store, rng, &format!("{prefix}.predeblur.l1"), c, c, 3, 2, Init::He)?,
            ConvLayer::new(store, rng, &format!("{prefix}.predeblur.l2"), c, c, 3, 2, Init::He)?,
        ];
        let aligners = ChainKind::ALL
            .iter()
            .map(|&k| {
                AlignModule::new(store, rng, &format!("{prefix}.align_{}", k.name()), c, config.align_levels)
                    .map(|m| (k, m))
            })
            .collect::<Result<Vec<_>>>()?;
        let fusion = FusionModule::new(store, rng, &format!("{prefix}.fusion"), c, config.attention_target)?;
        Ok(TemporalModule {
            predeblur,
            aligners,
            fusion,
            config,
        })
    }

    pub fn aligner(&self, kind: ChainKind) -> &AlignModule {
        &self.aligners.iter().find(|(k, _)| *k == kind).expect("all kinds built").1
    }

    pub fn predeblur_layers(&self) -> &[ConvLayer; 3] {
        &self.predeblur
    }

    /// `(B, 3, H, W)` frames to a 3-level pyramid.
    pub fn predeblur(&self, g: &mut Graph, store: &ParamStore, frames: Var) -> Result<FeaturePyramid> {
        let (_, c, h, w) = g.shape(frames);
        if c != 3 {
            return Err(shape_err!("predeblur: expected 3-channel frames, got {c}"));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(shape_err!("predeblur: frame size {h}x{w} is not divisible by 4"));
        }
        let l0 = self.predeblur[0].forward_act(g, store, frames)?;
        let l1 = self.predeblur[1].forward_act(g, store, l0)?;
        let l2 = self.predeblur[2].forward_act(g, store, l1)?;
        Ok(FeaturePyramid { levels: [l0, l1, l2] })
    }

    /// Maps the `2N+5` window frames to the `2N+1` temporal features `T_{t±N}`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, frames: &[Var], layout: &WindowLayout) -> Result<Vec<Var>> {
        if frames.len() != layout.input_count() {
            return Err(shape_err!(
                "temporal: expected {} frames, got {}",
                layout.input_count(),
                frames.len()
            ));
        }
        let feats = frames
            .iter()
            .map(|&f| self.predeblur(g, store, f).map(|p| p.top()))
            .collect::<Result<Vec<_>>>()?;
        let mut aligner = NetAligner {
            g: &mut *g,
            store,
            module: self,
        };
        let sets = build_chains(&mut aligner, &feats, layout)?;
        layout
            .output_positions()
            .map(|pos| self.fusion.forward(g, store, &sets[pos - 1]))
            .collect()
    }
}

/// The learned aligner, recording onto a graph.
pub struct NetAligner<'a> {
    pub g: &'a mut Graph,
    pub store: &'a ParamStore,
    pub module: &'a TemporalModule,
}

impl Aligner for NetAligner<'_> {
    type Feature = Var;
    fn align(&mut self, kind: ChainKind, reference: &Var, neighbor: &Var) -> Result<Var> {
        let m = self.module.aligner(kind);
        m.forward(self.g, self.store, *reference, *neighbor).map(|(out, _)| out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Symbolic(Vec<String>);

    impl Aligner for Symbolic {
        type Feature = String;
        fn align(&mut self, kind: ChainKind, r: &String, n: &String) -> Result<String> {
            let s = format!("{kind:?}({r},{n})");
            self.0.push(s.clone());
            Ok(s)
        }
    }

    fn names(n: usize) -> Vec<String> {
        let layout = WindowLayout::new(n).unwrap();
        (0..layout.input_count())
            .map(|i| format!("F{:+}", layout.relative(i)))
            .collect()
    }

    #[test]
    fn layout_counts() {
        for n in 1..4 {
            let l = WindowLayout::new(n).unwrap();
            assert_eq!(l.input_count(), 2 * n + 5);
            assert_eq!(l.output_positions().count(), l.output_count());
            assert_eq!(l.chain_positions().count(), l.chain_count());
        }
        assert!(WindowLayout::new(0).is_err());
    }

    #[test]
    fn chain_bases_for_one() {
        let layout = WindowLayout::new(1).unwrap();
        let mut a = Symbolic(vec![]);
        let sets = build_chains(&mut a, &names(1), &layout).unwrap();
        assert_eq!(sets[0].fa.present().unwrap(), "FA(F-2,F-3)");
        assert_eq!(sets[2].fs.present().unwrap(), "FS(F+0,F-2)");
        assert!(sets[0].fs.is_absent());
        assert!(sets[4].bs.is_absent());
        assert_eq!(sets[4].fs, Entry::NotComputed);
    }

    #[test]
    fn wrong_feature_count_is_rejected() {
        let layout = WindowLayout::new(1).unwrap();
        let mut a = Symbolic(vec![]);
        assert!(build_chains(&mut a, &names(1)[..6], &layout).is_err());
    }

    #[test]
    fn zero_offsets_make_align_a_plain_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let m = AlignModule::new(&mut store, &mut rng, "a", 4, 2).unwrap();
        let mut g = Graph::new();
        let r = g.constant(Array4::from_shape_fn((1, 4, 8, 8), |(_, c, y, x)| ((c * 7 + y * 3 + x) as f64).sin()));
        let n = g.constant(Array4::from_shape_fn((1, 4, 8, 8), |(_, c, y, x)| ((c + y * 5 + x * 2) as f64).cos()));
        let (out, off) = m.forward(&mut g, &store, r, n).unwrap();
        assert!(g.value(off).iter().all(|&v| v == 0.0));
        let w = g.param(&store, m.deform_w);
        let b = g.param(&store, m.deform_b);
        let plain = g.conv2d(n, w, Some(b), 1, 1).unwrap();
        let diff = (g.value(out) - g.value(plain)).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn usable_levels_shrink_for_small_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let m = AlignModule::new(&mut store, &mut rng, "a", 2, 3).unwrap();
        assert_eq!(m.usable_levels(16, 16), 3);
        assert_eq!(m.usable_levels(4, 4), 2);
        assert_eq!(m.usable_levels(6, 6), 2);
        assert_eq!(m.usable_levels(5, 8), 1);
    }
}
