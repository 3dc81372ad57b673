//! Convolution + dense Q-network: layout, initialisation, forward and
//! backward passes.
//!
//! Activations are stored per sample, channel-major (`[C, H, W]`), samples
//! back to back. Convolutions are lowered to matrix products through an
//! im2col buffer; all products go through one sgemm kernel so the reduction
//! order is fixed for a given machine.

use rand::Rng;
use thiserror::Error;

use super::params::{ParamError, ParameterSet};
use super::pool;
use crate::grid::{Action, Observation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid network layout: {0}")]
    InvalidSpec(String),
    #[error("parameters do not match the network layout")]
    Incompatible,
    #[error("input has {got} values, expected {expected} for a batch of {batch}")]
    InputShape { got: usize, expected: usize, batch: usize },
    #[error("target refers to sample {sample} output {output} outside the batch")]
    TargetOutOfRange { sample: usize, output: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Stride-1 square convolution.
    Conv {
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    Relu,
    /// Fully connected; flattens its input.
    Dense {
        out: usize,
    },
}

/// Input geometry plus an ordered layer list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_side: usize,
    pub layers: Vec<Layer>,
}

impl NetworkSpec {
    /// The default Q-network: two 3×3 convolutions, a hidden dense layer and
    /// one 4-wide head per controlled agent.
    pub fn standard(radius: usize, heads: usize) -> Self {
        Self::with_widths(Observation::CHANNELS * heads, radius, &[16, 32], 128, heads)
    }

    pub fn with_widths(input_channels: usize, radius: usize, conv: &[usize], hidden: usize, heads: usize) -> Self {
        let mut layers = Vec::new();
        for &c in conv {
            layers.push(Layer::Conv {
                out_channels: c,
                kernel: 3,
                padding: 1,
            });
            layers.push(Layer::Relu);
        }
        if hidden > 0 {
            layers.push(Layer::Dense { out: hidden });
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Dense {
            out: Action::COUNT * heads,
        });
        Self {
            input_channels,
            input_side: 2 * radius + 1,
            layers,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_side * self.input_side
    }

    pub fn output_width(&self) -> Result<usize, NetworkError> {
        Ok(self.compile()?.output_len)
    }

    /// Number of 4-action heads.
    pub fn heads(&self) -> Result<usize, NetworkError> {
        let w = self.output_width()?;
        if w % Action::COUNT != 0 {
            return Err(NetworkError::InvalidSpec(format!(
                "output width {w} is not a multiple of {}",
                Action::COUNT
            )));
        }
        Ok(w / Action::COUNT)
    }

    /// Names and shapes of the parameters, in order.
    pub fn parameter_shapes(&self) -> Result<Vec<(String, Vec<usize>)>, NetworkError> {
        let plan = self.compile()?;
        let mut out = Vec::new();
        for step in &plan.steps {
            match *step {
                Step::Conv(ref c) => {
                    out.push((format!("conv{}.weight", c.ordinal), vec![c.c_out, c.c_in, c.k, c.k]));
                    out.push((format!("conv{}.bias", c.ordinal), vec![c.c_out]));
                }
                Step::Dense(ref d) => {
                    out.push((format!("dense{}.weight", d.ordinal), vec![d.n_out, d.n_in]));
                    out.push((format!("dense{}.bias", d.ordinal), vec![d.n_out]));
                }
                Step::Relu | Step::Flatten { .. } => {}
            }
        }
        Ok(out)
    }

    /// Uniform ±√(6/(fan_in+fan_out)) weights, zero biases.
    pub fn init_params(&self, rng: &mut impl Rng) -> Result<ParameterSet, NetworkError> {
        let plan = self.compile()?;
        let mut params = ParameterSet::new();
        for step in &plan.steps {
            let (prefix, ordinal, shape, fan_in, fan_out, n_out) = match *step {
                Step::Conv(ref c) => (
                    "conv",
                    c.ordinal,
                    vec![c.c_out, c.c_in, c.k, c.k],
                    c.c_in * c.k * c.k,
                    c.c_out * c.k * c.k,
                    c.c_out,
                ),
                Step::Dense(ref d) => ("dense", d.ordinal, vec![d.n_out, d.n_in], d.n_in, d.n_out, d.n_out),
                Step::Relu | Step::Flatten { .. } => continue,
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
            params.push(format!("{prefix}{ordinal}.weight"), shape, values)?;
            params.push(format!("{prefix}{ordinal}.bias"), vec![n_out], vec![0.0; n_out])?;
        }
        Ok(params)
    }

    pub fn zero_params(&self) -> Result<ParameterSet, NetworkError> {
        let mut params = ParameterSet::new();
        for (name, shape) in self.parameter_shapes()? {
            let n = shape.iter().product();
            params.push(name, shape, vec![0.0; n])?;
        }
        Ok(params)
    }

    pub fn check_params(&self, params: &ParameterSet) -> Result<(), NetworkError> {
        let shapes = self.parameter_shapes()?;
        let ok = shapes.len() == params.len()
            && shapes
                .iter()
                .zip(params.entries())
                .all(|((n, s), p)| *n == p.name && *s == p.shape);
        if ok {
            Ok(())
        } else {
            Err(NetworkError::Incompatible)
        }
    }

    fn compile(&self) -> Result<Plan, NetworkError> {
        let bad = |m: String| Err(NetworkError::InvalidSpec(m));
        if self.input_channels == 0 || self.input_side == 0 {
            return bad("input must be non-empty".into());
        }
        let (mut channels, mut side) = (self.input_channels, self.input_side);
        let mut flat: Option<usize> = None;
        let mut steps = Vec::new();
        let mut param_index = 0;
        let (mut n_conv, mut n_dense) = (0, 0);
        for layer in &self.layers {
            match *layer {
                Layer::Conv {
                    out_channels,
                    kernel,
                    padding,
                } => {
                    if flat.is_some() {
                        return bad("convolution after a dense layer".into());
                    }
                    if out_channels == 0 || kernel == 0 || side + 2 * padding < kernel {
                        return bad(format!(
                            "convolution {kernel}x{kernel} does not fit a {side}x{side} input"
                        ));
                    }
                    let side_out = side + 2 * padding - kernel + 1;
                    n_conv += 1;
                    steps.push(Step::Conv(ConvStep {
                        ordinal: n_conv,
                        c_in: channels,
                        c_out: out_channels,
                        k: kernel,
                        pad: padding,
                        side_in: side,
                        side_out,
                        param: param_index,
                    }));
                    param_index += 2;
                    channels = out_channels;
                    side = side_out;
                }
                Layer::Relu => steps.push(Step::Relu),
                Layer::Dense { out } => {
                    if out == 0 {
                        return bad("dense layer with zero outputs".into());
                    }
                    let n_in = flat.unwrap_or(channels * side * side);
                    if flat.is_none() && n_conv > 0 {
                        steps.push(Step::Flatten {
                            channels,
                            pixels: side * side,
                        });
                    }
                    n_dense += 1;
                    steps.push(Step::Dense(DenseStep {
                        ordinal: n_dense,
                        n_in,
                        n_out: out,
                        param: param_index,
                    }));
                    param_index += 2;
                    flat = Some(out);
                }
            }
        }
        let output_len = flat.unwrap_or(channels * side * side);
        if !matches!(steps.last(), Some(Step::Dense(_))) {
            return bad("the last layer must be dense".into());
        }
        Ok(Plan { steps, output_len })
    }
}

#[derive(Debug, Clone)]
struct ConvStep {
    ordinal: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
    pad: usize,
    side_in: usize,
    side_out: usize,
    param: usize,
}

impl ConvStep {
    fn in_len(&self) -> usize {
        self.c_in * self.side_in * self.side_in
    }
    fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }
    fn pixels(&self) -> usize {
        self.side_out * self.side_out
    }
}

#[derive(Debug, Clone)]
struct DenseStep {
    ordinal: usize,
    n_in: usize,
    n_out: usize,
    param: usize,
}

#[derive(Debug, Clone)]
enum Step {
    Conv(ConvStep),
    Relu,
    /// `[C, B, P]` convolution maps to `[B, C·P]` rows.
    Flatten {
        channels: usize,
        pixels: usize,
    },
    Dense(DenseStep),
}

#[derive(Debug, Clone)]
struct Plan {
    steps: Vec<Step>,
    output_len: usize,
}

/// A squared-error target on one output of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub sample: usize,
    pub output: usize,
    pub value: f32,
}

/// `c = alpha·op(a)·op(b) + beta·c` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len(), "gemm: a out of range");
        assert!(last(k, n, rsb, csb) < b.len(), "gemm: b out of range");
    }
    assert!(last(m, n, rsc, 1) < c.len(), "gemm: c out of range");
    // SAFETY: every element addressed through the strides was bounds-checked
    // above, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Output columns `ox` whose tap `ox + kx − pad` lands inside a row of
/// length `side_in`, plus the matching first input column. The span is
/// empty when no tap lands inside.
fn tap_span(s: &ConvStep, kx: usize) -> (usize, usize, usize) {
    let lo = s.pad.saturating_sub(kx).min(s.side_out);
    let hi = (s.side_in + s.pad).saturating_sub(kx).min(s.side_out).max(lo);
    (lo, hi, (lo + kx).saturating_sub(s.pad).min(s.side_in))
}

/// Unfolds a batch stored as `[c_in, B, side_in²]` into patch columns
/// `[c_in·k·k, B·side_out²]`, appended to the empty `cols`.
fn im2col(s: &ConvStep, input: &[f32], batch: usize, cols: &mut Vec<f32>) {
    let (si, so, k, pad) = (s.side_in, s.side_out, s.k, s.pad);
    let pix_in = si * si;
    let zeros = |cols: &mut Vec<f32>, n: usize| cols.extend(std::iter::repeat_n(0.0, n));
    for c in 0..s.c_in {
        for ky in 0..k {
            for kx in 0..k {
                let (lo, hi, ix0) = tap_span(s, kx);
                for n in 0..batch {
                    let plane = &input[(c * batch + n) * pix_in..(c * batch + n + 1) * pix_in];
                    for oy in 0..so {
                        let iy = oy + ky;
                        if iy < pad || iy >= si + pad {
                            zeros(cols, so);
                            continue;
                        }
                        let src = &plane[(iy - pad) * si..(iy - pad + 1) * si];
                        zeros(cols, lo);
                        cols.extend_from_slice(&src[ix0..ix0 + hi - lo]);
                        zeros(cols, so - hi);
                    }
                }
            }
        }
    }
}

/// Adds patch-column gradients back onto a `[c_in, B, side_in²]` gradient.
fn col2im(s: &ConvStep, cols: &[f32], batch: usize, grad_in: &mut [f32]) {
    let (si, so, k, pad) = (s.side_in, s.side_out, s.k, s.pad);
    let (pix_in, pix_out) = (si * si, s.pixels());
    let width = batch * pix_out;
    for c in 0..s.c_in {
        for ky in 0..k {
            for kx in 0..k {
                let (lo, hi, ix0) = tap_span(s, kx);
                let row = (c * k + ky) * k + kx;
                let src_row = &cols[row * width..(row + 1) * width];
                for n in 0..batch {
                    let plane = &mut grad_in[(c * batch + n) * pix_in..(c * batch + n + 1) * pix_in];
                    let src = &src_row[n * pix_out..(n + 1) * pix_out];
                    for oy in 0..so {
                        let iy = oy + ky;
                        if iy < pad || iy >= si + pad {
                            continue;
                        }
                        let dst = &mut plane[(iy - pad) * si + ix0..(iy - pad) * si + ix0 + hi - lo];
                        for (d, &g) in dst.iter_mut().zip(&src[oy * so + lo..oy * so + hi]) {
                            *d += g;
                        }
                    }
                }
            }
        }
    }
}

/// `[B, C, P]` ⇄ `[C, B, P]`; the same routine swaps either way given the
/// outer sizes of the source.
fn swap_outer(x: &[f32], outer: usize, inner: usize, pixels: usize) -> Vec<f32> {
    let mut out = pool::take(x.len());
    for b in 0..inner {
        for a in 0..outer {
            out.extend_from_slice(&x[(a * inner + b) * pixels..(a * inner + b + 1) * pixels]);
        }
    }
    out
}

/// Convolution over a `[c_in, B, P]` batch, producing `[c_out, B, P']`.
/// With a cache the patch columns are kept for the backward pass.
fn conv_forward(
    s: &ConvStep,
    params: &ParameterSet,
    input: &[f32],
    batch: usize,
    cache: Option<&mut Vec<f32>>,
) -> Vec<f32> {
    let w = &params.entries()[s.param].values;
    let b = &params.entries()[s.param + 1].values;
    let (patch, width) = (s.patch(), batch * s.pixels());
    let mut scratch = None;
    let cols = match cache {
        Some(c) => c,
        None => scratch.insert(pool::take(patch * width)),
    };
    cols.clear();
    im2col(s, input, batch, cols);
    debug_assert_eq!(cols.len(), patch * width);
    let mut out = pool::take(s.c_out * width);
    for &bias in b {
        out.extend(std::iter::repeat_n(bias, width));
    }
    gemm(
        s.c_out,
        patch,
        width,
        w,
        (patch, 1),
        cols,
        (width, 1),
        1.0,
        &mut out,
        width,
    );
    if let Some(c) = scratch {
        pool::give(c);
    }
    out
}

/// Dense layer over `[B, n_in]`, producing `[B, n_out]`.
fn dense_forward(d: &DenseStep, params: &ParameterSet, input: &[f32], batch: usize) -> Vec<f32> {
    let w = &params.entries()[d.param].values;
    let b = &params.entries()[d.param + 1].values;
    let mut out = pool::take(batch * d.n_out);
    for _ in 0..batch {
        out.extend_from_slice(b);
    }
    // [B, in] · [in, out] where the right factor is Wᵀ.
    gemm(
        batch,
        d.n_in,
        d.n_out,
        input,
        (d.n_in, 1),
        w,
        (1, d.n_in),
        1.0,
        &mut out,
        d.n_out,
    );
    out
}

fn relu_in_place(x: &mut [f32]) {
    for v in x {
        *v = v.max(0.0);
    }
}

fn check_input(spec: &NetworkSpec, input: &[f32], batch: usize) -> Result<(), NetworkError> {
    let expected = batch * spec.input_len();
    if input.len() != expected {
        return Err(NetworkError::InputShape {
            got: input.len(),
            expected,
            batch,
        });
    }
    Ok(())
}

fn copied(x: &[f32]) -> Vec<f32> {
    let mut v = pool::take(x.len());
    v.extend_from_slice(x);
    v
}

/// Rearranges the caller's `[B, C, P]` input for the first layer.
fn entry_layout(spec: &NetworkSpec, plan: &Plan, input: &[f32], batch: usize) -> Vec<f32> {
    match plan.steps.first() {
        Some(Step::Conv(_)) => swap_outer(input, batch, spec.input_channels, spec.input_side * spec.input_side),
        _ => copied(input),
    }
}

/// Runs the layer stack. Each step's input is offered to `keep` (ReLU
/// steps work in place and offer an empty vector); whatever `keep` hands
/// back returns to the pool.
fn run_steps(
    plan: &Plan,
    params: &ParameterSet,
    mut x: Vec<f32>,
    batch: usize,
    mut cols: Option<&mut Vec<Vec<f32>>>,
    mut keep: impl FnMut(Vec<f32>) -> Option<Vec<f32>>,
) -> Vec<f32> {
    for (i, step) in plan.steps.iter().enumerate() {
        let y = match step {
            Step::Conv(c) => conv_forward(c, params, &x, batch, cols.as_deref_mut().map(|v| &mut v[i])),
            Step::Dense(d) => dense_forward(d, params, &x, batch),
            Step::Flatten { channels, pixels } => swap_outer(&x, *channels, batch, *pixels),
            Step::Relu => {
                relu_in_place(&mut x);
                keep(Vec::new());
                continue;
            }
        };
        if let Some(rejected) = keep(std::mem::replace(&mut x, y)) {
            pool::give(rejected);
        }
    }
    x
}

/// Q-values for a batch of flattened inputs, `batch × output_width`.
///
/// Each sample is laid out as `[channels, side, side]`, samples back to back.
pub fn forward(
    spec: &NetworkSpec,
    params: &ParameterSet,
    input: &[f32],
    batch: usize,
) -> Result<Vec<f32>, NetworkError> {
    let plan = spec.compile()?;
    spec.check_params(params)?;
    check_input(spec, input, batch)?;
    let x = entry_layout(spec, &plan, input, batch);
    let q = run_steps(&plan, params, x, batch, None, Some);
    let out = q.clone();
    pool::give(q);
    Ok(out)
}

/// Q-values for a batch of observations.
pub fn forward_observations(
    spec: &NetworkSpec,
    params: &ParameterSet,
    observations: &[&Observation],
) -> Result<Vec<f32>, NetworkError> {
    let mut input = pool::take(observations.len() * spec.input_len());
    for o in observations {
        o.extend_f32(&mut input);
    }
    let q = forward(spec, params, &input, observations.len());
    pool::give(input);
    q
}

/// Returns the storage of a gradient set produced by [`backward`] for reuse
/// by later passes on this thread.
pub fn recycle(grads: ParameterSet) {
    for p in grads.into_entries() {
        pool::give(p.values);
    }
}

/// Gradient of `loss = (1/B) Σ_targets (Q[sample, output] − value)²`.
///
/// `B` is the batch size, so with one target per sample this is the mean
/// squared TD error. Returns the gradient set and the loss.
pub fn backward(
    spec: &NetworkSpec,
    params: &ParameterSet,
    input: &[f32],
    batch: usize,
    targets: &[Target],
) -> Result<(ParameterSet, f32), NetworkError> {
    if batch == 0 {
        return Err(NetworkError::EmptyBatch);
    }
    let plan = spec.compile()?;
    spec.check_params(params)?;
    check_input(spec, input, batch)?;
    for t in targets {
        if t.sample >= batch || t.output >= plan.output_len {
            return Err(NetworkError::TargetOutOfRange {
                sample: t.sample,
                output: t.output,
            });
        }
    }

    // Forward, keeping every step's input and each convolution's patch
    // columns.
    let mut inputs: Vec<Vec<f32>> = Vec::with_capacity(plan.steps.len());
    let mut cols: Vec<Vec<f32>> = plan
        .steps
        .iter()
        .map(|s| match s {
            Step::Conv(c) => pool::take(c.patch() * batch * c.pixels()),
            _ => Vec::new(),
        })
        .collect();
    let x = entry_layout(spec, &plan, input, batch);
    let q = run_steps(&plan, params, x, batch, Some(&mut cols), |v| {
        inputs.push(v);
        None
    });

    let scale = 1.0 / batch as f32;
    let mut grad = pool::zeros(q.len());
    let mut loss = 0.0f64;
    for t in targets {
        let idx = t.sample * plan.output_len + t.output;
        let err = q[idx] - t.value;
        loss += f64::from(err) * f64::from(err);
        grad[idx] += 2.0 * err * scale;
    }
    let loss = (loss / batch as f64) as f32;
    pool::give(q);

    let mut grads = ParameterSet::new();
    for p in params.entries() {
        grads.push(p.name.clone(), p.shape.clone(), pool::zeros(p.values.len()))?;
    }
    for (i, step) in plan.steps.iter().enumerate().rev() {
        let x = &inputs[i];
        let need_input_grad = i > 0;
        let next = match step {
            Step::Relu => {
                // The ReLU output is the next step's input; it is zero
                // exactly where the pre-activation was non-positive.
                for (g, &v) in grad.iter_mut().zip(inputs[i + 1].iter()) {
                    *g = if v > 0.0 { *g } else { 0.0 };
                }
                None
            }
            Step::Flatten { channels, pixels } => Some(swap_outer(&grad, batch, *channels, *pixels)),
            Step::Dense(d) => {
                let w = &params.entries()[d.param].values;
                {
                    let gw = &mut grads.entries_mut()[d.param].values;
                    // dW[out, in] = dYᵀ · X
                    gemm(
                        d.n_out,
                        batch,
                        d.n_in,
                        &grad,
                        (1, d.n_out),
                        x,
                        (d.n_in, 1),
                        1.0,
                        gw,
                        d.n_in,
                    );
                }
                {
                    let gb = &mut grads.entries_mut()[d.param + 1].values;
                    for row in grad.chunks_exact(d.n_out) {
                        for (b, &g) in gb.iter_mut().zip(row) {
                            *b += g;
                        }
                    }
                }
                need_input_grad.then(|| {
                    let mut gx = pool::scratch(batch * d.n_in);
                    // dX[B, in] = dY · W
                    gemm(
                        batch,
                        d.n_out,
                        d.n_in,
                        &grad,
                        (d.n_out, 1),
                        w,
                        (d.n_in, 1),
                        0.0,
                        &mut gx,
                        d.n_in,
                    );
                    gx
                })
            }
            Step::Conv(s) => {
                let w = &params.entries()[s.param].values;
                let (patch, width) = (s.patch(), batch * s.pixels());
                let c = &cols[i];
                {
                    let gw = &mut grads.entries_mut()[s.param].values;
                    // dW[c_out, patch] = dY · colsᵀ
                    gemm(s.c_out, width, patch, &grad, (width, 1), c, (1, width), 1.0, gw, patch);
                }
                {
                    let gb = &mut grads.entries_mut()[s.param + 1].values;
                    for (b, row) in gb.iter_mut().zip(grad.chunks_exact(width)) {
                        *b += row.iter().sum::<f32>();
                    }
                }
                need_input_grad.then(|| {
                    let mut gcols = pool::scratch(patch * width);
                    // dcols[patch, B·P] = Wᵀ · dY
                    gemm(
                        patch,
                        s.c_out,
                        width,
                        w,
                        (1, patch),
                        &grad,
                        (width, 1),
                        0.0,
                        &mut gcols,
                        width,
                    );
                    let mut gx = pool::zeros(batch * s.in_len());
                    col2im(s, &gcols, batch, &mut gx);
                    pool::give(gcols);
                    gx
                })
            }
        };
        if let Some(g) = next {
            pool::give(std::mem::replace(&mut grad, g));
        }
    }
    pool::give(grad);
    for v in inputs.into_iter().chain(cols) {
        pool::give(v);
    }
    Ok((grads, loss))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
