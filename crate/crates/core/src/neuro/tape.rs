//! Reverse-mode automatic differentiation over a per-sample tape.

use std::sync::atomic::{AtomicU64, Ordering};

use super::gemm::gemm;
use super::params::{Grads, ParamId, ParamStore};
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// A value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

/// Shape of a 2D convolution over a batch of `n` images laid out [n, c, h, w].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.k) / self.stride + 1
    }

    fn patch(&self) -> usize {
        self.c * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (oh, ow, p) = (self.out_h(), self.out_w(), self.positions());
        for ci in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            dst[oy * ow + ox] = if iy >= 0 && ix >= 0 && (iy as usize) < self.h && (ix as usize) < self.w {
                                x[(ci * self.h + iy as usize) * self.w + ix as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (oh, ow, p) = (self.out_h(), self.out_w(), self.positions());
        for ci in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && (ix as usize) < self.w {
                                dx[(ci * self.h + iy as usize) * self.w + ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    Conv2d { x: usize, w: usize, b: usize, geom: ConvGeom, cols: Vec<f64> },
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Add(usize, usize),
    Mul(usize, usize),
    /// rows×cols matrix times vector.
    MatVec { w: usize, x: usize, rows: usize, cols: usize },
    Slice { x: usize, start: usize },
    /// Mask entries are 0 or 1/(1−p).
    Dropout { x: usize, mask: Vec<f64> },
    Affine { x: usize, scale: f64 },
    /// [n, c, hw] → [n, c].
    GlobalAvgPool { x: usize, hw: usize },
}

#[derive(Debug)]
struct Node {
    /// Empty for parameter nodes, whose value lives in the store.
    value: Vec<f64>,
    len: usize,
    op: Op,
}

pub struct Tape<'p> {
    id: u64,
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed), params, nodes: Vec::new() }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::Graph("variable belongs to a different tape".into()));
        }
        Ok(v.idx)
    }

    fn val(&self, i: usize) -> &[f64] {
        match self.nodes[i].op {
            Op::Param(p) => &self.params.params[p].value,
            _ => &self.nodes[i].value,
        }
    }

    pub fn value(&self, v: Var) -> Result<&[f64]> {
        Ok(self.val(self.idx(v)?))
    }

    pub fn len(&self, v: Var) -> Result<usize> {
        Ok(self.nodes[self.idx(v)?].len)
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        let len = value.len();
        self.nodes.push(Node { value, len, op });
        Var { tape: self.id, idx: self.nodes.len() - 1 }
    }

    pub fn input(&mut self, data: Vec<f64>) -> Var {
        self.push(data, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let len = self.params.params[id.0].value.len();
        self.nodes.push(Node { value: Vec::new(), len, op: Op::Param(id.0) });
        Var { tape: self.id, idx: self.nodes.len() - 1 }
    }

    fn check_len(&self, i: usize, want: usize, what: &str) -> Result<()> {
        if self.nodes[i].len != want {
            return Err(Error::ShapeMismatch(format!("{what}: expected {want} values, got {}", self.nodes[i].len)));
        }
        Ok(())
    }

    /// Convolution with weight [out_c, c, k, k] and bias [out_c].
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeom) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        self.check_len(xi, geom.n * geom.c * geom.h * geom.w, "conv input")?;
        self.check_len(wi, geom.out_c * geom.patch(), "conv weight")?;
        self.check_len(bi, geom.out_c, "conv bias")?;
        let (kk, p) = (geom.patch(), geom.positions());
        let mut cols = vec![0.0; geom.n * kk * p];
        let mut out = vec![0.0; geom.n * geom.out_c * p];
        let img = geom.c * geom.h * geom.w;
        for n in 0..geom.n {
            let col = &mut cols[n * kk * p..(n + 1) * kk * p];
            geom.im2col(&self.val(xi)[n * img..(n + 1) * img], col);
            let o = &mut out[n * geom.out_c * p..(n + 1) * geom.out_c * p];
            for (oc, chunk) in o.chunks_mut(p).enumerate() {
                chunk.fill(self.val(bi)[oc]);
            }
            gemm(geom.out_c, kk, p, 1.0, self.val(wi), false, col, false, 1.0, o);
        }
        Ok(self.push(out, Op::Conv2d { x: xi, w: wi, b: bi, geom, cols }))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: impl Fn(usize) -> Op) -> Result<Var> {
        let xi = self.idx(x)?;
        let v = self.val(xi).iter().map(|&a| f(a)).collect();
        Ok(self.push(v, op(xi)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |a| a.max(0.0), Op::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |a| 1.0 / (1.0 + (-a).exp()), Op::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, f64::tanh, Op::Tanh)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.check_len(bi, self.nodes[ai].len, "add")?;
        let v = self.val(ai).iter().zip(self.val(bi)).map(|(x, y)| x + y).collect();
        Ok(self.push(v, Op::Add(ai, bi)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.check_len(bi, self.nodes[ai].len, "mul")?;
        let v = self.val(ai).iter().zip(self.val(bi)).map(|(x, y)| x * y).collect();
        Ok(self.push(v, Op::Mul(ai, bi)))
    }

    pub fn matvec(&mut self, w: Var, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (wi, xi) = (self.idx(w)?, self.idx(x)?);
        self.check_len(wi, rows * cols, "matvec weight")?;
        self.check_len(xi, cols, "matvec input")?;
        let mut out = vec![0.0; rows];
        gemm(rows, cols, 1, 1.0, self.val(wi), false, self.val(xi), false, 0.0, &mut out);
        Ok(self.push(out, Op::MatVec { w: wi, x: xi, rows, cols }))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xi = self.idx(x)?;
        if start + len > self.nodes[xi].len {
            return Err(Error::ShapeMismatch("slice out of range".into()));
        }
        let v = self.val(xi)[start..start + len].to_vec();
        Ok(self.push(v, Op::Slice { x: xi, start }))
    }

    /// Multiplies by a precomputed inverted-dropout mask.
    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let xi = self.idx(x)?;
        self.check_len(xi, mask.len(), "dropout mask")?;
        let v = self.val(xi).iter().zip(&mask).map(|(a, m)| a * m).collect();
        Ok(self.push(v, Op::Dropout { x: xi, mask }))
    }

    /// scale·x + shift, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let xi = self.idx(x)?;
        let v = self.val(xi).iter().map(|a| scale * a + shift).collect();
        Ok(self.push(v, Op::Affine { x: xi, scale }))
    }

    pub fn global_avg_pool(&mut self, x: Var, channels: usize, hw: usize) -> Result<Var> {
        let xi = self.idx(x)?;
        let len = self.nodes[xi].len;
        if hw == 0 || len % (channels * hw) != 0 {
            return Err(Error::ShapeMismatch("pooling shape".into()));
        }
        let v = self.val(xi).chunks(hw).map(|c| c.iter().sum::<f64>() / hw as f64).collect();
        Ok(self.push(v, Op::GlobalAvgPool { x: xi, hw }))
    }

    /// Back-propagates `seed` (dL/d`out`) and returns parameter gradients.
    pub fn backward(&self, out: Var, seed: &[f64]) -> Result<Grads> {
        let oi = self.idx(out)?;
        self.check_len(oi, seed.len(), "backward seed")?;
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); oi + 1];
        grads[oi] = seed.to_vec();
        let mut pg = self.params.zero_grads();

        fn acc<'a>(grads: &'a mut [Vec<f64>], i: usize, len: usize) -> &'a mut Vec<f64> {
            if grads[i].is_empty() {
                grads[i] = vec![0.0; len];
            }
            &mut grads[i]
        }

        for i in (0..=oi).rev() {
            let g = std::mem::take(&mut grads[i]);
            if g.is_empty() {
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    for (a, b) in pg.0[*p].iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                Op::Relu(x) => {
                    let xv = self.val(*x);
                    let d = acc(&mut grads, *x, xv.len());
                    for k in 0..g.len() {
                        if xv[k] > 0.0 {
                            d[k] += g[k];
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let d = acc(&mut grads, *x, g.len());
                    for k in 0..g.len() {
                        let s = node.value[k];
                        d[k] += g[k] * s * (1.0 - s);
                    }
                }
                Op::Tanh(x) => {
                    let d = acc(&mut grads, *x, g.len());
                    for k in 0..g.len() {
                        let t = node.value[k];
                        d[k] += g[k] * (1.0 - t * t);
                    }
                }
                Op::Add(a, b) => {
                    for &p in &[*a, *b] {
                        let d = acc(&mut grads, p, g.len());
                        for k in 0..g.len() {
                            d[k] += g[k];
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.val(*a).to_vec(), self.val(*b).to_vec());
                    let d = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        d[k] += g[k] * bv[k];
                    }
                    let d = acc(&mut grads, *b, g.len());
                    for k in 0..g.len() {
                        d[k] += g[k] * av[k];
                    }
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    let xv = self.val(*x);
                    let wv = self.val(*w);
                    let dw = acc(&mut grads, *w, rows * cols);
                    // outer product g ⊗ x
                    gemm(rows, 1, cols, 1.0, &g, false, xv, false, 1.0, dw);
                    let dx = acc(&mut grads, *x, cols);
                    gemm(1, rows, cols, 1.0, &g, false, wv, false, 1.0, dx);
                }
                Op::Slice { x, start } => {
                    let len = self.nodes[*x].len;
                    let d = acc(&mut grads, *x, len);
                    for k in 0..g.len() {
                        d[start + k] += g[k];
                    }
                }
                Op::Dropout { x, mask } => {
                    let d = acc(&mut grads, *x, g.len());
                    for k in 0..g.len() {
                        d[k] += g[k] * mask[k];
                    }
                }
                Op::Affine { x, scale } => {
                    let d = acc(&mut grads, *x, g.len());
                    for k in 0..g.len() {
                        d[k] += g[k] * scale;
                    }
                }
                Op::GlobalAvgPool { x, hw } => {
                    let len = self.nodes[*x].len;
                    let d = acc(&mut grads, *x, len);
                    let inv = 1.0 / *hw as f64;
                    for (k, gk) in g.iter().enumerate() {
                        for v in &mut d[k * hw..(k + 1) * hw] {
                            *v += gk * inv;
                        }
                    }
                }
                Op::Conv2d { x, w, b, geom, cols } => {
                    let (kk, p) = (geom.patch(), geom.positions());
                    let img = geom.c * geom.h * geom.w;
                    let wv = self.val(*w).to_vec();
                    {
                        let db = acc(&mut grads, *b, geom.out_c);
                        for n in 0..geom.n {
                            let go = &g[n * geom.out_c * p..(n + 1) * geom.out_c * p];
                            for (oc, chunk) in go.chunks(p).enumerate() {
                                db[oc] += chunk.iter().sum::<f64>();
                            }
                        }
                    }
                    {
                        let dw = acc(&mut grads, *w, geom.out_c * kk);
                        for n in 0..geom.n {
                            let go = &g[n * geom.out_c * p..(n + 1) * geom.out_c * p];
                            let col = &cols[n * kk * p..(n + 1) * kk * p];
                            gemm(geom.out_c, p, kk, 1.0, go, false, col, true, 1.0, dw);
                        }
                    }
                    if !matches!(self.nodes[*x].op, Op::Input) {
                        let mut dcol = vec![0.0; kk * p];
                        let dx = acc(&mut grads, *x, geom.n * img);
                        for n in 0..geom.n {
                            let go = &g[n * geom.out_c * p..(n + 1) * geom.out_c * p];
                            gemm(kk, geom.out_c, p, 1.0, &wv, true, go, false, 0.0, &mut dcol);
                            geom.col2im(&dcol, &mut dx[n * img..(n + 1) * img]);
                        }
                    }
                }
            }
        }
        Ok(pg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::params::Group;

    #[test]
    fn detached_variable_is_rejected() {
        let store = ParamStore::default();
        let mut a = Tape::new(&store);
        let b = Tape::new(&store);
        let v = a.input(vec![1.0, 2.0]);
        assert!(matches!(b.value(v), Err(Error::Graph(_))));
        assert!(b.backward(v, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut store = ParamStore::default();
        let geom = ConvGeom { n: 2, c: 2, h: 5, w: 6, out_c: 3, k: 3, stride: 2, pad: 1 };
        let wv: Vec<f64> = (0..3 * 2 * 9).map(|i| ((i * 7 % 11) as f64 - 5.0) / 7.0).collect();
        let w = store.add("w", vec![3, 2, 3, 3], Group::Early, true, wv.clone());
        let b = store.add("b", vec![3], Group::Early, false, vec![0.1, -0.2, 0.3]);
        let xv: Vec<f64> = (0..2 * 2 * 5 * 6).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut t = Tape::new(&store);
        let x = t.input(xv.clone());
        let (wp, bp) = (t.param(w), t.param(b));
        let y = t.conv2d(x, wp, bp, geom).unwrap();
        let out = t.value(y).unwrap();
        let (oh, ow) = (geom.out_h(), geom.out_w());
        assert_eq!((oh, ow), (3, 3));
        for n in 0..2 {
            for o in 0..3 {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = [0.1, -0.2, 0.3][o];
                        for c in 0..2 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = (oy * 2 + ky) as isize - 1;
                                    let ix = (ox * 2 + kx) as isize - 1;
                                    if iy >= 0 && ix >= 0 && iy < 5 && ix < 6 {
                                        s += wv[((o * 2 + c) * 3 + ky) * 3 + kx]
                                            * xv[((n * 2 + c) * 5 + iy as usize) * 6 + ix as usize];
                                    }
                                }
                            }
                        }
                        assert!((out[((n * 3 + o) * oh + oy) * ow + ox] - s).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
