//! Raw forward/backward kernels on contiguous `(batch, channel, height, width)` arrays.
//!
//! Everything here is shape-checked by the graph layer before it is called, so
//! the kernels assume standard (row-major) layout and consistent dimensions.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array4, ArrayView2, ArrayViewMut2};

/// Discrete reflect padding index (`-1 -> 1`, `n -> n-2`).
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    // a single reflection suffices because pad < n is enforced upstream
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Continuous reflect followed by a clamp to `[0, n-1]`.
/// Returns the mapped coordinate and its derivative with respect to the input.
#[inline]
pub(crate) fn reflect_clamp(p: f64, n: usize) -> (f64, f64) {
    if n == 1 {
        return (0.0, 0.0);
    }
    let m = (n - 1) as f64;
    let (mut q, mut d) = if p < 0.0 {
        (-p, -1.0)
    } else if p > m {
        (2.0 * m - p, -1.0)
    } else {
        (p, 1.0)
    };
    if q < 0.0 {
        q = 0.0;
        d = 0.0;
    } else if q > m {
        q = m;
        d = 0.0;
    }
    (q, d)
}

/// Clamp-only coordinate map used by the free-standing sampler.
#[inline]
pub(crate) fn clamp_coord(p: f64, n: usize) -> (f64, f64) {
    let m = (n.max(1) - 1) as f64;
    if p < 0.0 {
        (0.0, 0.0)
    } else if p > m {
        (m, 0.0)
    } else {
        (p, 1.0)
    }
}

/// Four-neighbour bilinear stencil at an in-range coordinate.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub idx: [usize; 4],
    pub wts: [f64; 4],
    pub dwdx: [f64; 4],
    pub dwdy: [f64; 4],
}

#[inline]
pub(crate) fn stencil(x: f64, y: f64, h: usize, w: usize) -> Stencil {
    let (x0, x1) = if w >= 2 {
        let x0 = (x.floor() as usize).min(w - 2);
        (x0, x0 + 1)
    } else {
        (0, 0)
    };
    let (y0, y1) = if h >= 2 {
        let y0 = (y.floor() as usize).min(h - 2);
        (y0, y0 + 1)
    } else {
        (0, 0)
    };
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    Stencil {
        idx: [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
        wts: [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ],
        dwdx: [-(1.0 - fy), 1.0 - fy, -fy, fy],
        dwdy: [-(1.0 - fx), -fx, 1.0 - fx, fx],
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    pub fn new(c_in: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        let h_out = (h + 2 * pad - k) / stride + 1;
        let w_out = (w + 2 * pad - k) / stride + 1;
        ConvGeom {
            c_in,
            h,
            w,
            k,
            stride,
            pad,
            h_out,
            w_out,
        }
    }

    fn tables(&self) -> (Vec<usize>, Vec<usize>) {
        let mut rows = vec![0; self.k * self.h_out];
        let mut cols = vec![0; self.k * self.w_out];
        for t in 0..self.k {
            for o in 0..self.h_out {
                let i = (o * self.stride + t) as isize - self.pad as isize;
                rows[t * self.h_out + o] = reflect_index(i, self.h);
            }
            for o in 0..self.w_out {
                let i = (o * self.stride + t) as isize - self.pad as isize;
                cols[t * self.w_out + o] = reflect_index(i, self.w);
            }
        }
        (rows, cols)
    }

    fn col_len(&self) -> usize {
        self.c_in * self.k * self.k * self.h_out * self.w_out
    }
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let (rows_t, cols_t) = g.tables();
    let hw_out = g.h_out * g.w_out;
    let mut row = 0;
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                let ct = &cols_t[kx * g.w_out..(kx + 1) * g.w_out];
                for oy in 0..g.h_out {
                    let src = &plane[rows_t[ky * g.h_out + oy] * g.w..];
                    let d = &mut dst[oy * g.w_out..(oy + 1) * g.w_out];
                    for (dv, &ix) in d.iter_mut().zip(ct) {
                        *dv = src[ix];
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (rows_t, cols_t) = g.tables();
    let hw_out = g.h_out * g.w_out;
    let mut row = 0;
    for c in 0..g.c_in {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                let ct = &cols_t[kx * g.w_out..(kx + 1) * g.w_out];
                for oy in 0..g.h_out {
                    let base = rows_t[ky * g.h_out + oy] * g.w;
                    let s = &src[oy * g.w_out..(oy + 1) * g.w_out];
                    for (&sv, &ix) in s.iter().zip(ct) {
                        plane[base + ix] += sv;
                    }
                }
                row += 1;
            }
        }
    }
}

fn view2(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("contiguous 2-d view")
}

fn view2_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("contiguous 2-d view")
}

/// `out[b] = W · cols(x[b]) + bias`.
pub(crate) fn conv2d_forward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    bias: Option<&Array4<f64>>,
    stride: usize,
    pad: usize,
) -> Array4<f64> {
    let (b, c, h, wd) = x.dim();
    let (o, _, k, _) = w.dim();
    let g = ConvGeom::new(c, h, wd, k, stride, pad);
    let hw = g.h_out * g.w_out;
    let xs = x.as_slice().expect("standard layout");
    let ws = w.as_slice().expect("standard layout");
    let mut out = Array4::<f64>::zeros((b, o, g.h_out, g.w_out));
    let os = out.as_slice_mut().unwrap();
    let mut cols = vec![0.0; g.col_len()];
    let kk = c * k * k;
    let wv = view2(ws, o, kk);
    for bi in 0..b {
        im2col(&xs[bi * c * h * wd..(bi + 1) * c * h * wd], &g, &mut cols);
        let dst = &mut os[bi * o * hw..(bi + 1) * o * hw];
        if let Some(bias) = bias {
            let bs = bias.as_slice().unwrap();
            for (oc, &bv) in bs.iter().enumerate() {
                dst[oc * hw..(oc + 1) * hw].fill(bv);
            }
            general_mat_mul(1.0, &wv, &view2(&cols, kk, hw), 1.0, &mut view2_mut(dst, o, hw));
        } else {
            general_mat_mul(1.0, &wv, &view2(&cols, kk, hw), 0.0, &mut view2_mut(dst, o, hw));
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub dx: Option<Array4<f64>>,
    pub dw: Option<Array4<f64>>,
    pub db: Option<Array4<f64>>,
}

pub(crate) fn conv2d_backward(
    x: &Array4<f64>,
    w: &Array4<f64>,
    stride: usize,
    pad: usize,
    gout: &Array4<f64>,
    need: (bool, bool, bool),
) -> ConvGrads {
    let (b, c, h, wd) = x.dim();
    let (o, _, k, _) = w.dim();
    let g = ConvGeom::new(c, h, wd, k, stride, pad);
    let hw = g.h_out * g.w_out;
    let kk = c * k * k;
    let xs = x.as_slice().unwrap();
    let ws = w.as_slice().unwrap();
    let gs = gout.as_slice().unwrap();
    let mut dx = need.0.then(|| Array4::<f64>::zeros((b, c, h, wd)));
    let mut dw = need.1.then(|| Array4::<f64>::zeros((o, c, k, k)));
    let mut cols = vec![0.0; g.col_len()];
    let wv = view2(ws, o, kk);
    for bi in 0..b {
        let go = view2(&gs[bi * o * hw..(bi + 1) * o * hw], o, hw);
        if let Some(dw) = dw.as_mut() {
            im2col(&xs[bi * c * h * wd..(bi + 1) * c * h * wd], &g, &mut cols);
            let dws = dw.as_slice_mut().unwrap();
            general_mat_mul(1.0, &go, &view2(&cols, kk, hw).t(), 1.0, &mut view2_mut(dws, o, kk));
        }
        if let Some(dx) = dx.as_mut() {
            general_mat_mul(1.0, &wv.t(), &go, 0.0, &mut view2_mut(&mut cols, kk, hw));
            let dxs = dx.as_slice_mut().unwrap();
            col2im(&cols, &g, &mut dxs[bi * c * h * wd..(bi + 1) * c * h * wd]);
        }
    }
    let db = need.2.then(|| {
        let mut db = Array4::<f64>::zeros((1, o, 1, 1));
        let dbs = db.as_slice_mut().unwrap();
        for bi in 0..b {
            for (oc, slot) in dbs.iter_mut().enumerate() {
                let start = (bi * o + oc) * hw;
                *slot += gs[start..start + hw].iter().sum::<f64>();
            }
        }
        db
    });
    ConvGrads { dx, dw, db }
}

/// Sampling position of tap `(ky, kx)` at output pixel `(oy, ox)` displaced by
/// `(dx, dy)`, reflected into the frame then clamped.
#[inline]
fn deform_position(
    oy: usize,
    ox: usize,
    ky: usize,
    kx: usize,
    pad: usize,
    dx: f64,
    dy: f64,
    h: usize,
    w: usize,
) -> (f64, f64, f64, f64) {
    let px = (ox + kx) as f64 - pad as f64 + dx;
    let py = (oy + ky) as f64 - pad as f64 + dy;
    let (qx, jx) = reflect_clamp(px, w);
    let (qy, jy) = reflect_clamp(py, h);
    (qx, qy, jx, jy)
}

fn deform_cols(x: &[f64], off: &[f64], c: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let hw = h * w;
    let pad = k / 2;
    let kk = k * k;
    for ky in 0..k {
        for kx in 0..k {
            let tap = ky * k + kx;
            let offx = &off[(2 * tap) * hw..(2 * tap + 1) * hw];
            let offy = &off[(2 * tap + 1) * hw..(2 * tap + 2) * hw];
            for oy in 0..h {
                for ox in 0..w {
                    let p = oy * w + ox;
                    let (qx, qy, _, _) = deform_position(oy, ox, ky, kx, pad, offx[p], offy[p], h, w);
                    let s = stencil(qx, qy, h, w);
                    for ci in 0..c {
                        let plane = &x[ci * hw..(ci + 1) * hw];
                        cols[(ci * kk + tap) * hw + p] = s.wts[0] * plane[s.idx[0]]
                            + s.wts[1] * plane[s.idx[1]]
                            + s.wts[2] * plane[s.idx[2]]
                            + s.wts[3] * plane[s.idx[3]];
                    }
                }
            }
        }
    }
}

/// Deformable convolution, stride 1, "same" output size.
/// Offsets carry `(dx, dy)` for tap `t` in channels `2t` and `2t + 1`.
pub(crate) fn deform_forward(
    x: &Array4<f64>,
    off: &Array4<f64>,
    w: &Array4<f64>,
    bias: Option<&Array4<f64>>,
) -> Array4<f64> {
    let (b, c, h, wd) = x.dim();
    let (o, _, k, _) = w.dim();
    let hw = h * wd;
    let kk = c * k * k;
    let xs = x.as_slice().unwrap();
    let offs = off.as_slice().unwrap();
    let ws = w.as_slice().unwrap();
    let oc2 = 2 * k * k;
    let mut out = Array4::<f64>::zeros((b, o, h, wd));
    let os = out.as_slice_mut().unwrap();
    let mut cols = vec![0.0; kk * hw];
    let wv = view2(ws, o, kk);
    for bi in 0..b {
        deform_cols(
            &xs[bi * c * hw..(bi + 1) * c * hw],
            &offs[bi * oc2 * hw..(bi + 1) * oc2 * hw],
            c,
            h,
            wd,
            k,
            &mut cols,
        );
        let dst = &mut os[bi * o * hw..(bi + 1) * o * hw];
        let beta = if let Some(bias) = bias {
            for (oc, &bv) in bias.as_slice().unwrap().iter().enumerate() {
                dst[oc * hw..(oc + 1) * hw].fill(bv);
            }
            1.0
        } else {
            0.0
        };
        general_mat_mul(1.0, &wv, &view2(&cols, kk, hw), beta, &mut view2_mut(dst, o, hw));
    }
    out
}

pub(crate) struct DeformGrads {
    pub dx: Option<Array4<f64>>,
    pub doff: Option<Array4<f64>>,
    pub dw: Option<Array4<f64>>,
    pub db: Option<Array4<f64>>,
}

pub(crate) fn deform_backward(
    x: &Array4<f64>,
    off: &Array4<f64>,
    w: &Array4<f64>,
    gout: &Array4<f64>,
    need: (bool, bool, bool, bool),
) -> DeformGrads {
    let (b, c, h, wd) = x.dim();
    let (o, _, k, _) = w.dim();
    let hw = h * wd;
    let kk = c * k * k;
    let ktaps = k * k;
    let pad = k / 2;
    let oc2 = 2 * ktaps;
    let xs = x.as_slice().unwrap();
    let offs = off.as_slice().unwrap();
    let ws = w.as_slice().unwrap();
    let gs = gout.as_slice().unwrap();
    let mut dx = need.0.then(|| Array4::<f64>::zeros((b, c, h, wd)));
    let mut doff = need.1.then(|| Array4::<f64>::zeros((b, oc2, h, wd)));
    let mut dw = need.2.then(|| Array4::<f64>::zeros((o, c, k, k)));
    let mut cols = vec![0.0; kk * hw];
    let mut dcols = vec![0.0; kk * hw];
    let wv = view2(ws, o, kk);
    for bi in 0..b {
        let xb = &xs[bi * c * hw..(bi + 1) * c * hw];
        let ob = &offs[bi * oc2 * hw..(bi + 1) * oc2 * hw];
        let go = view2(&gs[bi * o * hw..(bi + 1) * o * hw], o, hw);
        if let Some(dw) = dw.as_mut() {
            deform_cols(xb, ob, c, h, wd, k, &mut cols);
            general_mat_mul(
                1.0,
                &go,
                &view2(&cols, kk, hw).t(),
                1.0,
                &mut view2_mut(dw.as_slice_mut().unwrap(), o, kk),
            );
        }
        if !(need.0 || need.1) {
            continue;
        }
        general_mat_mul(1.0, &wv.t(), &go, 0.0, &mut view2_mut(&mut dcols, kk, hw));
        for ky in 0..k {
            for kx in 0..k {
                let tap = ky * k + kx;
                for oy in 0..h {
                    for ox in 0..wd {
                        let p = oy * wd + ox;
                        let ddx = ob[(2 * tap) * hw + p];
                        let ddy = ob[(2 * tap + 1) * hw + p];
                        let (qx, qy, jx, jy) = deform_position(oy, ox, ky, kx, pad, ddx, ddy, h, wd);
                        let s = stencil(qx, qy, h, wd);
                        let mut gx = 0.0;
                        let mut gy = 0.0;
                        for ci in 0..c {
                            let gcol = dcols[(ci * ktaps + tap) * hw + p];
                            if gcol == 0.0 {
                                continue;
                            }
                            if need.1 {
                                let plane = &xb[ci * hw..(ci + 1) * hw];
                                for n in 0..4 {
                                    let v = plane[s.idx[n]];
                                    gx += gcol * s.dwdx[n] * v;
                                    gy += gcol * s.dwdy[n] * v;
                                }
                            }
                            if let Some(dx) = dx.as_mut() {
                                let dxs = dx.as_slice_mut().unwrap();
                                let plane = &mut dxs[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                                for n in 0..4 {
                                    plane[s.idx[n]] += gcol * s.wts[n];
                                }
                            }
                        }
                        if let Some(doff) = doff.as_mut() {
                            let ds = doff.as_slice_mut().unwrap();
                            ds[(bi * oc2 + 2 * tap) * hw + p] += gx * jx;
                            ds[(bi * oc2 + 2 * tap + 1) * hw + p] += gy * jy;
                        }
                    }
                }
            }
        }
    }
    let db = need.3.then(|| {
        let mut db = Array4::<f64>::zeros((1, o, 1, 1));
        let dbs = db.as_slice_mut().unwrap();
        for bi in 0..b {
            for (oc, slot) in dbs.iter_mut().enumerate() {
                let start = (bi * o + oc) * hw;
                *slot += gs[start..start + hw].iter().sum::<f64>();
            }
        }
        db
    });
    DeformGrads { dx, doff, dw, db }
}

/// Samples `feat` at per-pixel `(x, y)` coordinates (channels 0 and 1 of `coords`).
pub(crate) fn bilinear_forward(feat: &Array4<f64>, coords: &Array4<f64>) -> Array4<f64> {
    let (b, c, h, w) = feat.dim();
    let (_, _, ho, wo) = coords.dim();
    let fs = feat.as_slice().unwrap();
    let cs = coords.as_slice().unwrap();
    let mut out = Array4::<f64>::zeros((b, c, ho, wo));
    let os = out.as_slice_mut().unwrap();
    let (hw, hwo) = (h * w, ho * wo);
    for bi in 0..b {
        for p in 0..hwo {
            let (qx, _) = clamp_coord(cs[(bi * 2) * hwo + p], w);
            let (qy, _) = clamp_coord(cs[(bi * 2 + 1) * hwo + p], h);
            let s = stencil(qx, qy, h, w);
            for ci in 0..c {
                let plane = &fs[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                os[(bi * c + ci) * hwo + p] = (0..4).map(|n| s.wts[n] * plane[s.idx[n]]).sum();
            }
        }
    }
    out
}

pub(crate) fn bilinear_backward(
    feat: &Array4<f64>,
    coords: &Array4<f64>,
    gout: &Array4<f64>,
) -> (Array4<f64>, Array4<f64>) {
    let (b, c, h, w) = feat.dim();
    let (_, _, ho, wo) = coords.dim();
    let fs = feat.as_slice().unwrap();
    let cs = coords.as_slice().unwrap();
    let gs = gout.as_slice().unwrap();
    let mut dfeat = Array4::<f64>::zeros(feat.dim());
    let mut dcoords = Array4::<f64>::zeros(coords.dim());
    let dfs = dfeat.as_slice_mut().unwrap();
    let dcs = dcoords.as_slice_mut().unwrap();
    let (hw, hwo) = (h * w, ho * wo);
    for bi in 0..b {
        for p in 0..hwo {
            let (qx, jx) = clamp_coord(cs[(bi * 2) * hwo + p], w);
            let (qy, jy) = clamp_coord(cs[(bi * 2 + 1) * hwo + p], h);
            let s = stencil(qx, qy, h, w);
            let (mut gx, mut gy) = (0.0, 0.0);
            for ci in 0..c {
                let g = gs[(bi * c + ci) * hwo + p];
                let base = (bi * c + ci) * hw;
                for n in 0..4 {
                    let v = fs[base + s.idx[n]];
                    gx += g * s.dwdx[n] * v;
                    gy += g * s.dwdy[n] * v;
                    dfs[base + s.idx[n]] += g * s.wts[n];
                }
            }
            dcs[(bi * 2) * hwo + p] += gx * jx;
            dcs[(bi * 2 + 1) * hwo + p] += gy * jy;
        }
    }
    (dfeat, dcoords)
}

/// `(B, C·r², H, W) -> (B, C, H·r, W·r)`.
pub(crate) fn pixel_shuffle(x: &Array4<f64>, r: usize) -> Array4<f64> {
    let (b, cr, h, w) = x.dim();
    let c = cr / (r * r);
    let mut out = Array4::<f64>::zeros((b, c, h * r, w * r));
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let src = ci * r * r + i * r + j;
                    for y in 0..h {
                        for xx in 0..w {
                            out[[bi, ci, y * r + i, xx * r + j]] = x[[bi, src, y, xx]];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`pixel_shuffle`].
pub(crate) fn pixel_unshuffle(x: &Array4<f64>, r: usize) -> Array4<f64> {
    let (b, c, hr, wr) = x.dim();
    let (h, w) = (hr / r, wr / r);
    let mut out = Array4::<f64>::zeros((b, c * r * r, h, w));
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let dst = ci * r * r + i * r + j;
                    for y in 0..h {
                        for xx in 0..w {
                            out[[bi, dst, y, xx]] = x[[bi, ci, y * r + i, xx * r + j]];
                        }
                    }
                }
            }
        }
    }
    out
}
