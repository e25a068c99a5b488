//! Reverse-mode tape over [`Grid4`] values.
//!
//! Each operator records its inputs on the tape; [`Graph::backward`] walks the
//! tape once in reverse. Parameters enter through [`Graph::param`] and their
//! gradients are accumulated back into the [`ParamStore`] afterwards.

use std::collections::HashMap;

use ndarray::{Array4, Axis, Zip};

use super::kernels;
use super::param::{ParamId, ParamStore};
use crate::error::{shape_err, GavnError, Result};

/// A `(batch, channel, height, width)` array.
pub type Grid4 = Array4<f64>;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    DeformConv2d {
        x: Var,
        offsets: Var,
        w: Var,
        b: Option<Var>,
    },
    BilinearSample {
        feat: Var,
        coords: Var,
    },
    PixelShuffle {
        x: Var,
        r: usize,
    },
    PixelUnshuffle {
        x: Var,
        r: usize,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Sigmoid {
        x: Var,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale {
        x: Var,
        factor: f64,
    },
    Concat {
        xs: Vec<Var>,
    },
    Tile {
        x: Var,
    },
    AvgPool2 {
        x: Var,
    },
    Upsample2 {
        x: Var,
        factor: f64,
    },
    Clamp {
        x: Var,
        lo: f64,
        hi: f64,
    },
    Reshape {
        x: Var,
    },
    AbsPool {
        x: Var,
        hop: usize,
    },
    Charbonnier {
        a: Var,
        b: Var,
        eps: f64,
    },
    Mse {
        a: Var,
        b: Var,
    },
    Sum {
        x: Var,
    },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, .. } | Op::DeformConv2d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                if let Op::DeformConv2d { offsets, .. } = self {
                    v.push(*offsets);
                }
                v.extend(b.iter().copied());
                v
            }
            Op::BilinearSample { feat, coords } => vec![*feat, *coords],
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Charbonnier { a, b, .. } | Op::Mse { a, b } => vec![*a, *b],
            Op::Concat { xs } => xs.clone(),
            Op::PixelShuffle { x, .. }
            | Op::PixelUnshuffle { x, .. }
            | Op::LeakyRelu { x, .. }
            | Op::Sigmoid { x }
            | Op::Scale { x, .. }
            | Op::Tile { x }
            | Op::AvgPool2 { x }
            | Op::Upsample2 { x, .. }
            | Op::Clamp { x, .. }
            | Op::Reshape { x }
            | Op::AbsPool { x, .. }
            | Op::Sum { x } => vec![*x],
        }
    }
}

struct Node {
    value: Grid4,
    op: Op,
    requires_grad: bool,
}

/// The tape. One graph per forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Grid4>>,
    params: HashMap<ParamId, Var>,
}

fn check_finite(value: &Grid4, what: &str) -> Result<()> {
    if let Some(pos) = value.iter().position(|v| !v.is_finite()) {
        return Err(GavnError::Numerical(format!(
            "{what} produced a non-finite value at flat index {pos}"
        )));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Grid4, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.push_with(value, op, requires_grad)
    }

    fn push_with(&mut self, value: Grid4, op: Op, requires_grad: bool) -> Var {
        let value = if value.is_standard_layout() {
            value
        } else {
            value.as_standard_layout().into_owned()
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input value.
    pub fn input(&mut self, value: Grid4, requires_grad: bool) -> Var {
        self.push_with(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Grid4) -> Var {
        self.input(value, false)
    }

    /// Records a parameter once per graph; frozen parameters do not require grad.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.input(store.get(id).data.clone(), !store.is_frozen(id));
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Grid4 {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize, usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last [`Graph::backward`] target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Grid4> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.iter().next().copied().unwrap_or(f64::NAN)
    }

    // ---------------------------------------------------------------- ops

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (_, c, h, wd) = self.shape(x);
        let (o, ci, k, k2) = self.shape(w);
        if ci != c {
            return Err(shape_err!("conv2d: input has {c} channels, weight expects {ci}"));
        }
        if k != k2 || k % 2 == 0 {
            return Err(shape_err!("conv2d: kernel must be square and odd, got {k}x{k2}"));
        }
        if stride == 0 {
            return Err(GavnError::InvalidArgument("conv2d: stride must be >= 1".into()));
        }
        if pad >= h.max(2) || pad >= wd.max(2) || (pad > 0 && (h == 1 || wd == 1)) {
            return Err(shape_err!("conv2d: reflect pad {pad} too large for {h}x{wd}"));
        }
        if h + 2 * pad < k || wd + 2 * pad < k {
            return Err(shape_err!("conv2d: {h}x{wd} input smaller than kernel {k}"));
        }
        if let Some(b) = b {
            if self.shape(b) != (1, o, 1, 1) {
                return Err(shape_err!("conv2d: bias shape {:?}, expected (1, {o}, 1, 1)", self.shape(b)));
            }
        }
        let bias = b.map(|b| &self.nodes[b.0].value);
        let out = kernels::conv2d_forward(self.value(x), self.value(w), bias, stride, pad);
        Ok(self.push(out, Op::Conv2d { x, w, b, stride, pad }))
    }

    pub fn deform_conv2d(&mut self, x: Var, offsets: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (bsz, c, h, wd) = self.shape(x);
        let (o, ci, k, k2) = self.shape(w);
        if ci != c || k != k2 || k % 2 == 0 {
            return Err(shape_err!(
                "deform_conv2d: weight {:?} incompatible with {c}-channel input",
                self.shape(w)
            ));
        }
        let expected = (bsz, 2 * k * k, h, wd);
        if self.shape(offsets) != expected {
            return Err(shape_err!(
                "deform_conv2d: offsets {:?}, expected {:?} (2*k*k channels)",
                self.shape(offsets),
                expected
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != (1, o, 1, 1) {
                return Err(shape_err!("deform_conv2d: bias shape {:?}", self.shape(b)));
            }
        }
        let bias = b.map(|b| &self.nodes[b.0].value);
        let out = kernels::deform_forward(self.value(x), self.value(offsets), self.value(w), bias);
        Ok(self.push(out, Op::DeformConv2d { x, offsets, w, b }))
    }

    pub fn bilinear_sample(&mut self, feat: Var, coords: Var) -> Result<Var> {
        let (b, _, _, _) = self.shape(feat);
        let (cb, cc, _, _) = self.shape(coords);
        if cb != b || cc != 2 {
            return Err(shape_err!(
                "bilinear_sample: coords {:?} must be ({b}, 2, H', W')",
                self.shape(coords)
            ));
        }
        let out = kernels::bilinear_forward(self.value(feat), self.value(coords));
        Ok(self.push(out, Op::BilinearSample { feat, coords }))
    }

    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let (_, c, _, _) = self.shape(x);
        if r == 0 || c % (r * r) != 0 {
            return Err(shape_err!("pixel_shuffle: {c} channels not divisible by r^2 = {}", r * r));
        }
        let out = kernels::pixel_shuffle(self.value(x), r);
        Ok(self.push(out, Op::PixelShuffle { x, r }))
    }

    pub fn pixel_unshuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let (_, _, h, w) = self.shape(x);
        if r == 0 || h % r != 0 || w % r != 0 {
            return Err(shape_err!("pixel_unshuffle: {h}x{w} not divisible by {r}"));
        }
        let out = kernels::pixel_unshuffle(self.value(x), r);
        Ok(self.push(out, Op::PixelUnshuffle { x, r }))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).mapv(|v| if v >= 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu { x, slope })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(sigmoid);
        self.push(out, Op::Sigmoid { x })
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a) * self.value(b);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x) * factor;
        self.push(out, Op::Scale { x, factor })
    }

    /// Concatenates along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| shape_err!("concat: empty input list"))?;
        let (b, _, h, w) = self.shape(first);
        for &x in xs {
            let (xb, _, xh, xw) = self.shape(x);
            if (xb, xh, xw) != (b, h, w) {
                return Err(shape_err!("concat: {:?} vs {:?}", self.shape(first), self.shape(x)));
            }
        }
        let views: Vec<_> = xs.iter().map(|&x| self.value(x).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("shapes checked");
        Ok(self.push(out, Op::Concat { xs: xs.to_vec() }))
    }

    /// Broadcasts a `(B, C, 1, 1)` vector to `(B, C, h, w)`.
    pub fn tile(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let (b, c, xh, xw) = self.shape(x);
        if (xh, xw) != (1, 1) {
            return Err(shape_err!("tile: expected (B, C, 1, 1), got {:?}", self.shape(x)));
        }
        let out = self
            .value(x)
            .broadcast((b, c, h, w))
            .expect("1x1 broadcasts")
            .to_owned();
        Ok(self.push(out, Op::Tile { x }))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = self.shape(x);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err!("avg_pool2: {h}x{w} is not even"));
        }
        let xv = self.value(x);
        let out = Array4::from_shape_fn((b, c, h / 2, w / 2), |(bi, ci, y, xx)| {
            0.25 * (xv[[bi, ci, 2 * y, 2 * xx]]
                + xv[[bi, ci, 2 * y, 2 * xx + 1]]
                + xv[[bi, ci, 2 * y + 1, 2 * xx]]
                + xv[[bi, ci, 2 * y + 1, 2 * xx + 1]])
        });
        Ok(self.push(out, Op::AvgPool2 { x }))
    }

    /// Nearest-neighbour ×2 upsampling with the values multiplied by `factor`.
    pub fn upsample2(&mut self, x: Var, factor: f64) -> Var {
        let (b, c, h, w) = self.shape(x);
        let xv = self.value(x);
        let out = Array4::from_shape_fn((b, c, 2 * h, 2 * w), |(bi, ci, y, xx)| {
            factor * xv[[bi, ci, y / 2, xx / 2]]
        });
        self.push(out, Op::Upsample2 { x, factor })
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).mapv(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp { x, lo, hi })
    }

    /// Reinterprets the element order under a new shape of equal size.
    pub fn reshape(&mut self, x: Var, shape: (usize, usize, usize, usize)) -> Result<Var> {
        let v = self.value(x);
        if v.len() != shape.0 * shape.1 * shape.2 * shape.3 {
            return Err(shape_err!("reshape: {:?} -> {:?}", v.dim(), shape));
        }
        let out = Array4::from_shape_vec(shape, v.iter().copied().collect()).expect("size checked");
        Ok(self.push(out, Op::Reshape { x }))
    }

    /// `(B, 1, 1, S) -> (B, S / hop, 1, 1)`: mean absolute value per hop.
    pub fn abs_pool(&mut self, x: Var, hop: usize) -> Result<Var> {
        let (b, c, h, s) = self.shape(x);
        if c != 1 || h != 1 || hop == 0 || s % hop != 0 {
            return Err(shape_err!("abs_pool: {:?} with hop {hop}", self.shape(x)));
        }
        let l = s / hop;
        let xv = self.value(x);
        let out = Array4::from_shape_fn((b, l, 1, 1), |(bi, li, _, _)| {
            (0..hop).map(|i| xv[[bi, 0, 0, li * hop + i]].abs()).sum::<f64>() / hop as f64
        });
        Ok(self.push(out, Op::AbsPool { x, hop }))
    }

    /// Mean of `sqrt((a - b)^2 + eps^2)`, as a `(1, 1, 1, 1)` node.
    pub fn charbonnier(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        self.same_shape(a, b, "charbonnier")?;
        let n = self.value(a).len() as f64;
        let mut acc = 0.0;
        Zip::from(self.value(a)).and(self.value(b)).for_each(|&p, &q| {
            let d = p - q;
            acc += (d * d + eps * eps).sqrt();
        });
        Ok(self.push(Array4::from_elem((1, 1, 1, 1), acc / n), Op::Charbonnier { a, b, eps }))
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mse")?;
        let n = self.value(a).len() as f64;
        let mut acc = 0.0;
        Zip::from(self.value(a)).and(self.value(b)).for_each(|&p, &q| acc += (p - q) * (p - q));
        Ok(self.push(Array4::from_elem((1, 1, 1, 1), acc / n), Op::Mse { a, b }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Array4::from_elem((1, 1, 1, 1), s), Op::Sum { x })
    }

    // ----------------------------------------------------------- backward

    /// Back-propagates from a single-element node.
    pub fn backward(&mut self, target: Var) -> Result<()> {
        if self.value(target).len() != 1 {
            return Err(shape_err!("backward target must be a scalar, got {:?}", self.shape(target)));
        }
        check_finite(self.value(target), "loss")?;
        self.grads = vec![None; self.nodes.len()];
        self.grads[target.0] = Some(Array4::from_elem((1, 1, 1, 1), 1.0));
        for i in (0..=target.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gout) = self.grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &gout);
            self.grads[i] = Some(gout);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Grid4) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&mut self, i: usize, gout: &Grid4) {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, stride, pad } => {
                let need = (self.needs(x), self.needs(w), b.is_some_and(|b| self.needs(b)));
                let g = kernels::conv2d_backward(self.value(x), self.value(w), stride, pad, gout, need);
                if let Some(dx) = g.dx {
                    self.accumulate(x, dx);
                }
                if let Some(dw) = g.dw {
                    self.accumulate(w, dw);
                }
                if let (Some(b), Some(db)) = (b, g.db) {
                    self.accumulate(b, db);
                }
            }
            Op::DeformConv2d { x, offsets, w, b } => {
                let need = (
                    self.needs(x),
                    self.needs(offsets),
                    self.needs(w),
                    b.is_some_and(|b| self.needs(b)),
                );
                let g = kernels::deform_backward(
                    self.value(x),
                    self.value(offsets),
                    self.value(w),
                    gout,
                    need,
                );
                if let Some(dx) = g.dx {
                    self.accumulate(x, dx);
                }
                if let Some(d) = g.doff {
                    self.accumulate(offsets, d);
                }
                if let Some(dw) = g.dw {
                    self.accumulate(w, dw);
                }
                if let (Some(b), Some(db)) = (b, g.db) {
                    self.accumulate(b, db);
                }
            }
            Op::BilinearSample { feat, coords } => {
                let (df, dc) = kernels::bilinear_backward(self.value(feat), self.value(coords), gout);
                self.accumulate(feat, df);
                self.accumulate(coords, dc);
            }
            Op::PixelShuffle { x, r } => {
                let g = kernels::pixel_unshuffle(gout, r);
                self.accumulate(x, g);
            }
            Op::PixelUnshuffle { x, r } => {
                let g = kernels::pixel_shuffle(gout, r);
                self.accumulate(x, g);
            }
            Op::LeakyRelu { x, slope } => {
                let mut g = gout.clone();
                Zip::from(&mut g)
                    .and(self.value(x))
                    .for_each(|g, &v| if v < 0.0 { *g *= slope });
                self.accumulate(x, g);
            }
            Op::Sigmoid { x } => {
                let mut g = gout.clone();
                Zip::from(&mut g).and(&self.nodes[i].value).for_each(|g, &s| *g *= s * (1.0 - s));
                self.accumulate(x, g);
            }
            Op::Add(a, b) => {
                self.accumulate(a, gout.clone());
                self.accumulate(b, gout.clone());
            }
            Op::Mul(a, b) => {
                if self.needs(a) {
                    let g = gout * self.value(b);
                    self.accumulate(a, g);
                }
                if self.needs(b) {
                    let g = gout * self.value(a);
                    self.accumulate(b, g);
                }
            }
            Op::Scale { x, factor } => self.accumulate(x, gout * factor),
            Op::Concat { xs } => {
                let mut start = 0;
                for x in xs {
                    let c = self.shape(x).1;
                    if self.needs(x) {
                        let g = gout.slice(ndarray::s![.., start..start + c, .., ..]).to_owned();
                        self.accumulate(x, g);
                    }
                    start += c;
                }
            }
            Op::Tile { x } => {
                let g = gout
                    .sum_axis(Axis(3))
                    .sum_axis(Axis(2))
                    .insert_axis(Axis(2))
                    .insert_axis(Axis(3));
                self.accumulate(x, g);
            }
            Op::AvgPool2 { x } => {
                let g = Array4::from_shape_fn(self.shape(x), |(b, c, y, xx)| 0.25 * gout[[b, c, y / 2, xx / 2]]);
                self.accumulate(x, g);
            }
            Op::Upsample2 { x, factor } => {
                let (b, c, h, w) = self.shape(x);
                let g = Array4::from_shape_fn((b, c, h, w), |(bi, ci, y, xx)| {
                    factor
                        * (gout[[bi, ci, 2 * y, 2 * xx]]
                            + gout[[bi, ci, 2 * y, 2 * xx + 1]]
                            + gout[[bi, ci, 2 * y + 1, 2 * xx]]
                            + gout[[bi, ci, 2 * y + 1, 2 * xx + 1]])
                });
                self.accumulate(x, g);
            }
            Op::Clamp { x, lo, hi } => {
                let mut g = gout.clone();
                Zip::from(&mut g)
                    .and(self.value(x))
                    .for_each(|g, &v| if v < lo || v > hi { *g = 0.0 });
                self.accumulate(x, g);
            }
            Op::Reshape { x } => {
                let g = Array4::from_shape_vec(self.shape(x), gout.iter().copied().collect()).expect("same size");
                self.accumulate(x, g);
            }
            Op::AbsPool { x, hop } => {
                let xv = self.value(x);
                let g = Array4::from_shape_fn(xv.dim(), |(b, _, _, s)| {
                    let v = xv[[b, 0, 0, s]];
                    let sign = if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    sign * gout[[b, s / hop, 0, 0]] / hop as f64
                });
                self.accumulate(x, g);
            }
            Op::Charbonnier { a, b, eps } => {
                let scale = gout[[0, 0, 0, 0]] / self.value(a).len() as f64;
                let mut d = self.value(a) - self.value(b);
                d.mapv_inplace(|v| scale * v / (v * v + eps * eps).sqrt());
                if self.needs(b) {
                    self.accumulate(b, -&d);
                }
                self.accumulate(a, d);
            }
            Op::Mse { a, b } => {
                let scale = 2.0 * gout[[0, 0, 0, 0]] / self.value(a).len() as f64;
                let d = (self.value(a) - self.value(b)) * scale;
                if self.needs(b) {
                    self.accumulate(b, -&d);
                }
                self.accumulate(a, d);
            }
            Op::Sum { x } => {
                let g = Array4::from_elem(self.shape(x), gout[[0, 0, 0, 0]]);
                self.accumulate(x, g);
            }
        }
    }

    /// Adds the gradients of every trainable parameter on this graph into `store`.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) -> Result<()> {
        for (&id, &v) in &self.params {
            if store.is_frozen(id) {
                continue;
            }
            if let Some(g) = self.grad(v) {
                check_finite(g, &format!("gradient of `{}`", store.get(id).name))?;
                store.get_mut(id).grad += g;
            }
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
