//! A small reverse-mode differentiation tape over [`Tensor`]s.
//!
//! The forward pass records each operation together with its output. The
//! backward pass walks the records in reverse, pushing output gradients to
//! operation inputs and accumulating weight gradients into a [`Grads`]
//! buffer laid out like the [`ParamStore`].
//!
//! Supported operations: 2-D convolution (square odd kernel, zero padding
//! `k / 2`, any stride), leaky ReLU, nearest-neighbour upsampling,
//! elementwise addition and the logistic sigmoid.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// All trainable tensors of a model. `version` is bumped on every update so
/// a tape recorded against older weights can be detected.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub params: Vec<Param>,
    version: u64,
}

impl ParamStore {
    pub fn new(params: Vec<Param>) -> Self {
        Self { params, version: 0 }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump(&mut self) {
        self.version += 1;
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Mutable access to one scalar; bumps the version.
    pub fn scalar_mut(&mut self, tensor: usize, index: usize) -> &mut f32 {
        self.version += 1;
        &mut self.params[tensor].data[index]
    }
}

/// Gradients with the same layout as a [`ParamStore`], accumulated in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub tensors: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            tensors: params.params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            for x in t.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Conv {
        x: Var,
        weight: usize,
        bias: usize,
        kernel: usize,
        stride: usize,
    },
    LeakyRelu {
        x: Var,
        slope: f32,
    },
    Upsample {
        x: Var,
        factor: usize,
    },
    MaxPool {
        x: Var,
        // flat input index of each output's maximum
        argmax: Vec<usize>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sigmoid {
        x: Var,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    params_version: u64,
}

/// Geometry of a padded strided convolution along one axis.
#[derive(Clone, Copy)]
struct Axis {
    input: usize,
    output: usize,
}

impl Axis {
    fn new(input: usize, kernel: usize, stride: usize) -> Self {
        let pad = kernel / 2;
        Self {
            input,
            output: (input + 2 * pad - kernel) / stride + 1,
        }
    }
}

/// Column-deinterleaved copy of every input row: phase `ph` holds columns
/// `ph, ph + s, ph + 2s, …`. With it, the inner loop of a strided
/// convolution reads contiguous memory.
struct Phases {
    stride: usize,
    widths: Vec<usize>,
    // [channel][phase] -> rows × widths[phase]
    planes: Vec<Vec<f32>>,
}

impl Phases {
    fn new(x: &Tensor, stride: usize) -> Self {
        let widths: Vec<usize> = (0..stride).map(|ph| (x.cols + stride - 1 - ph) / stride).collect();
        let mut planes = Vec::with_capacity(x.channels * stride);
        for c in 0..x.channels {
            let src = x.plane(c);
            for (ph, &w) in widths.iter().enumerate() {
                let mut plane = Vec::with_capacity(x.rows * w);
                for r in 0..x.rows {
                    let row = &src[r * x.cols..(r + 1) * x.cols];
                    plane.extend(row.iter().skip(ph).step_by(stride));
                }
                planes.push(plane);
            }
        }
        Self {
            stride,
            widths,
            planes,
        }
    }

    fn zeros_like(&self) -> Vec<Vec<f32>> {
        self.planes.iter().map(|p| vec![0.0; p.len()]).collect()
    }

    fn interleave(&self, grads: &[Vec<f32>], channels: usize, rows: usize, cols: usize) -> Tensor {
        let mut out = Tensor::zeros(channels, rows, cols);
        let n = rows * cols;
        for c in 0..channels {
            let dst = &mut out.data[c * n..(c + 1) * n];
            for (ph, &w) in self.widths.iter().enumerate() {
                let src = &grads[c * self.stride + ph];
                for r in 0..rows {
                    for j in 0..w {
                        dst[r * cols + j * self.stride + ph] = src[r * w + j];
                    }
                }
            }
        }
        out
    }
}

/// Per-tap constants: kernel column `kx` reads phase `ph` shifted by `shift`
/// and is valid for output columns `lo..hi`.
#[derive(Clone, Copy)]
struct Tap {
    ph: usize,
    shift: isize,
    lo: usize,
    hi: usize,
}

fn taps(kernel: usize, stride: usize, cols: Axis, widths: &[usize]) -> Vec<Tap> {
    let pad = (kernel / 2) as isize;
    (0..kernel)
        .map(|kx| {
            let off = kx as isize - pad;
            let ph = off.rem_euclid(stride as isize) as usize;
            let shift = (off - ph as isize) / stride as isize;
            let w = widths[ph] as isize;
            let lo = (-shift).max(0) as usize;
            let hi = (w - shift).clamp(0, cols.output as isize) as usize;
            Tap { ph, shift, lo, hi: hi.max(lo) }
        })
        .collect()
}

#[inline]
fn input_row(oy: usize, ky: usize, kernel: usize, stride: usize, rows: usize) -> Option<usize> {
    let iy = (oy * stride + ky) as isize - (kernel / 2) as isize;
    (iy >= 0 && (iy as usize) < rows).then_some(iy as usize)
}

fn conv_forward(x: &Tensor, weight: &Param, bias: &Param, kernel: usize, stride: usize) -> Tensor {
    let c_out = weight.dims[0];
    let c_in = x.channels;
    let rows = Axis::new(x.rows, kernel, stride);
    let cols = Axis::new(x.cols, kernel, stride);
    let phases = Phases::new(x, stride);
    let taps = taps(kernel, stride, cols, &phases.widths);
    let mut out = Tensor::zeros(c_out, rows.output, cols.output);
    let n_out = rows.output * cols.output;
    for co in 0..c_out {
        let dst = &mut out.data[co * n_out..(co + 1) * n_out];
        dst.fill(bias.data[co]);
        for ci in 0..c_in {
            for ky in 0..kernel {
                for (kx, tap) in taps.iter().enumerate() {
                    let wv = weight.data[((co * c_in + ci) * kernel + ky) * kernel + kx];
                    let plane = &phases.planes[ci * stride + tap.ph];
                    let w = phases.widths[tap.ph];
                    for oy in 0..rows.output {
                        let Some(iy) = input_row(oy, ky, kernel, stride, rows.input) else {
                            continue;
                        };
                        let start = (iy * w) as isize + tap.shift;
                        let src = &plane[(start + tap.lo as isize) as usize..(start + tap.hi as isize) as usize];
                        let out_row = &mut dst[oy * cols.output + tap.lo..oy * cols.output + tap.hi];
                        for (o, s) in out_row.iter_mut().zip(src) {
                            *o += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns the input gradient (if requested) and accumulates weight/bias
/// gradients.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &Tensor,
    weight: &Param,
    kernel: usize,
    stride: usize,
    gout: &[f32],
    gw: &mut [f64],
    gb: &mut [f64],
    need_input: bool,
) -> Option<Tensor> {
    let c_out = weight.dims[0];
    let c_in = x.channels;
    let rows = Axis::new(x.rows, kernel, stride);
    let cols = Axis::new(x.cols, kernel, stride);
    let phases = Phases::new(x, stride);
    let taps = taps(kernel, stride, cols, &phases.widths);
    let n_out = rows.output * cols.output;
    let mut gphase = need_input.then(|| phases.zeros_like());

    for co in 0..c_out {
        let g = &gout[co * n_out..(co + 1) * n_out];
        gb[co] += g.iter().map(|&v| v as f64).sum::<f64>();
        for ci in 0..c_in {
            for ky in 0..kernel {
                for (kx, tap) in taps.iter().enumerate() {
                    let widx = ((co * c_in + ci) * kernel + ky) * kernel + kx;
                    let wv = weight.data[widx];
                    let plane_idx = ci * stride + tap.ph;
                    let plane = &phases.planes[plane_idx];
                    let w = phases.widths[tap.ph];
                    let mut acc = 0.0f64;
                    for oy in 0..rows.output {
                        let Some(iy) = input_row(oy, ky, kernel, stride, rows.input) else {
                            continue;
                        };
                        let start = (iy * w) as isize + tap.shift;
                        let a = (start + tap.lo as isize) as usize;
                        let b = (start + tap.hi as isize) as usize;
                        let g_row = &g[oy * cols.output + tap.lo..oy * cols.output + tap.hi];
                        let row_dot: f32 = plane[a..b].iter().zip(g_row).map(|(s, gv)| s * gv).sum();
                        acc += row_dot as f64;
                        if let Some(gp) = gphase.as_mut() {
                            for (d, gv) in gp[plane_idx][a..b].iter_mut().zip(g_row) {
                                *d += wv * gv;
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    gphase.map(|gp| phases.interleave(&gp, c_in, x.rows, x.cols))
}

impl Tape {
    pub fn new(params: &ParamStore) -> Self {
        Self {
            nodes: Vec::new(),
            params_version: params.version(),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, t)
    }

    /// Convolution with weight tensor `[c_out, c_in, k, k]` and bias `[c_out]`.
    pub fn conv(&mut self, params: &ParamStore, x: Var, weight: usize, bias: usize, stride: usize) -> Result<Var> {
        let w = &params.params[weight];
        let b = &params.params[bias];
        let xv = self.value(x);
        if w.dims.len() != 4 || w.dims[1] != xv.channels || w.dims[2] != w.dims[3] || w.dims[2] % 2 == 0 {
            return Err(Error::Contract(format!(
                "conv weight {} has dims {:?} for a {}-channel input",
                w.name, w.dims, xv.channels
            )));
        }
        if b.data.len() != w.dims[0] || stride == 0 {
            return Err(Error::Contract(format!("conv bias {} / stride {stride} mismatch", b.name)));
        }
        let kernel = w.dims[2];
        let out = conv_forward(xv, w, b, kernel, stride);
        Ok(self.push(
            Op::Conv {
                x,
                weight,
                bias,
                kernel,
                stride,
            },
            out,
        ))
    }

    /// Which side of every non-smooth point the recorded values fall on:
    /// the sign of each leaky-ReLU input and each max-pool winner. Two
    /// evaluations with equal patterns lie on the same smooth piece.
    pub fn branch_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::LeakyRelu { x, .. } => {
                    out.extend(self.value(*x).data.iter().map(|&v| usize::from(v < 0.0)));
                }
                Op::MaxPool { argmax, .. } => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let mut out = self.value(x).clone();
        for v in &mut out.data {
            if *v < 0.0 {
                *v *= slope;
            }
        }
        self.push(Op::LeakyRelu { x, slope }, out)
    }

    pub fn upsample(&mut self, x: Var, factor: usize) -> Var {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows * factor, xv.cols * factor);
        let mut out = Tensor::zeros(xv.channels, rows, cols);
        for c in 0..xv.channels {
            let src = xv.plane(c);
            let dst = &mut out.data[c * rows * cols..(c + 1) * rows * cols];
            for r in 0..rows {
                let s_row = &src[(r / factor) * xv.cols..(r / factor + 1) * xv.cols];
                for (j, d) in dst[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                    *d = s_row[j / factor];
                }
            }
        }
        self.push(Op::Upsample { x, factor }, out)
    }

    /// Non-overlapping `factor × factor` max pooling; trailing rows and
    /// columns that do not fill a window are dropped.
    pub fn max_pool(&mut self, x: Var, factor: usize) -> Var {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows / factor, xv.cols / factor);
        let mut out = Tensor::zeros(xv.channels, rows, cols);
        let mut argmax = Vec::with_capacity(out.data.len());
        for c in 0..xv.channels {
            let base = c * xv.plane_len();
            for r in 0..rows {
                for j in 0..cols {
                    let mut best = base + r * factor * xv.cols + j * factor;
                    for dr in 0..factor {
                        let row = base + (r * factor + dr) * xv.cols + j * factor;
                        for idx in row..row + factor {
                            if xv.data[idx] > xv.data[best] {
                                best = idx;
                            }
                        }
                    }
                    out.data[(c * rows + r) * cols + j] = xv.data[best];
                    argmax.push(best);
                }
            }
        }
        self.push(Op::MaxPool { x, argmax }, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(Error::Contract(format!(
                "add of {}x{}x{} and {}x{}x{}",
                av.channels, av.rows, av.cols, bv.channels, bv.rows, bv.cols
            )));
        }
        let mut out = av.clone();
        for (o, v) in out.data.iter_mut().zip(&bv.data) {
            *o += v;
        }
        Ok(self.push(Op::Add { a, b }, out))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in &mut out.data {
            *v = 1.0 / (1.0 + (-*v).exp());
        }
        self.push(Op::Sigmoid { x }, out)
    }

    /// Back-propagates `seeds` (gradients of the objective with respect to
    /// recorded values) and returns gradients for every parameter.
    pub fn backward(&self, params: &ParamStore, seeds: &[(Var, Tensor)]) -> Result<Grads> {
        if params.version() != self.params_version {
            return Err(Error::Contract(
                "tape was recorded against different weights; run forward again".into(),
            ));
        }
        let mut grads = Grads::zeros_like(params);
        let mut node_grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];

        fn accumulate(slot: &mut Option<Vec<f32>>, g: Vec<f32>) {
            match slot {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                None => *slot = Some(g),
            }
        }

        for (v, g) in seeds {
            let node = self.nodes.get(v.0).ok_or_else(|| Error::Contract("seed variable not on this tape".into()))?;
            if !node.value.same_shape(g) {
                return Err(Error::Contract("seed gradient shape does not match its value".into()));
            }
            accumulate(&mut node_grads[v.0], g.data.clone());
        }

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = node_grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Conv {
                    x,
                    weight,
                    bias,
                    kernel,
                    stride,
                } => {
                    let need_input = !matches!(self.nodes[x.0].op, Op::Input);
                    let (gw, gb) = if weight < bias {
                        let (lo, hi) = grads.tensors.split_at_mut(*bias);
                        (&mut lo[*weight], &mut hi[0])
                    } else {
                        let (lo, hi) = grads.tensors.split_at_mut(*weight);
                        (&mut hi[0], &mut lo[*bias])
                    };
                    let gin = conv_backward(
                        &self.nodes[x.0].value,
                        &params.params[*weight],
                        *kernel,
                        *stride,
                        &g,
                        gw,
                        gb,
                        need_input,
                    );
                    if let Some(gin) = gin {
                        accumulate(&mut node_grads[x.0], gin.data);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let xin = &self.nodes[x.0].value.data;
                    let gin = g
                        .iter()
                        .zip(xin)
                        .map(|(&gv, &xv)| if xv < 0.0 { gv * slope } else { gv })
                        .collect();
                    accumulate(&mut node_grads[x.0], gin);
                }
                Op::Upsample { x, factor } => {
                    let xv = &self.nodes[x.0].value;
                    let (rows, cols) = (node.value.rows, node.value.cols);
                    let mut gin = vec![0.0f32; xv.data.len()];
                    for c in 0..xv.channels {
                        let src = &g[c * rows * cols..(c + 1) * rows * cols];
                        let dst = &mut gin[c * xv.plane_len()..(c + 1) * xv.plane_len()];
                        for r in 0..rows {
                            let d_row = &mut dst[(r / factor) * xv.cols..(r / factor + 1) * xv.cols];
                            for (j, &gv) in src[r * cols..(r + 1) * cols].iter().enumerate() {
                                d_row[j / factor] += gv;
                            }
                        }
                    }
                    accumulate(&mut node_grads[x.0], gin);
                }
                Op::MaxPool { x, argmax } => {
                    let mut gin = vec![0.0f32; self.nodes[x.0].value.data.len()];
                    for (&i, &gv) in argmax.iter().zip(&g) {
                        gin[i] += gv;
                    }
                    accumulate(&mut node_grads[x.0], gin);
                }
                Op::Add { a, b } => {
                    accumulate(&mut node_grads[b.0], g.clone());
                    accumulate(&mut node_grads[a.0], g);
                }
                Op::Sigmoid { x } => {
                    let gin = g
                        .iter()
                        .zip(&node.value.data)
                        .map(|(&gv, &y)| gv * y * (1.0 - y))
                        .collect();
                    accumulate(&mut node_grads[x.0], gin);
                }
            }
        }
        Ok(grads)
    }
}
