//! Forward propagation, back-propagation of deltas and weight updates.
//!
//! Each pass exists twice:
//!
//! - a naive reference: the textbook loops, one accumulator, no tiling;
//! - a tiled variant that follows a fixed partitioning ([`TileScheme`]):
//!   - forward: stage 1 computes 32-wide partial dot products per neuron into
//!     a partials buffer (tail segment zero padded), stage 2 reduces each
//!     neuron's partials in ascending segment order, adds the bias weight and
//!     applies the activation;
//!   - deltas: stage 1 copies 32x32 patches of `W` into a scratch tile with
//!     row stride 33, zero pads rows and columns past the real neurons and
//!     emits partial transposed dot products, stage 2 sums the partials of
//!     all row patches in ascending order and multiplies by the activation
//!     derivative;
//!   - update: the upstream states plus a trailing constant 1.0 for the bias
//!     are staged once, then every row is updated in groups of 16 weights.
//!
//! Stage-1 work items are independent and run on the [`Engine`]'s lanes when
//! it has more than one. Every output element is produced by the same
//! sequence of floating-point operations regardless of the lane count, so
//! tiled results are bitwise reproducible.
//!
//! The loss is half the sum of squared errors against targets +1 for the
//! true class and -1 elsewhere.

use std::sync::Arc;

use rayon::prelude::*;
use twofloat::TwoFloat;

use crate::network::{
    scaled_tanh, scaled_tanh_derivative, size_check, Layer, Mlp, NetworkError, Real, TANH_A, TANH_B,
};

/// Largest supported segment / tile / update width.
pub const MAX_WIDTH: usize = 256;

/// Partitioning constants of the tiled kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TileScheme {
    /// Span of one forward partial dot product.
    pub segment: usize,
    /// Side of a back-propagation patch.
    pub tile: usize,
    /// Row stride of the staged patch, one more than `tile`.
    pub staged_stride: usize,
    /// Weights updated per group.
    pub update_width: usize,
}

impl Default for TileScheme {
    fn default() -> Self {
        Self { segment: 32, tile: 32, staged_stride: 33, update_width: 16 }
    }
}

impl TileScheme {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("segment", self.segment), ("tile", self.tile), ("update_width", self.update_width)] {
            if v == 0 || v > MAX_WIDTH {
                return Err(format!("{name} = {v} must be in 1..={MAX_WIDTH}"));
            }
        }
        if self.staged_stride < self.tile {
            return Err(format!("staged_stride {} is smaller than tile {}", self.staged_stride, self.tile));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Naive,
    Tiled,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(Variant::Naive),
            "tiled" => Ok(Variant::Tiled),
            other => Err(format!("unknown kernel variant {other:?} (naive|tiled)")),
        }
    }
}

/// Where kernels run: a tile scheme and an optional pool of lanes.
#[derive(Clone)]
pub struct Engine {
    scheme: TileScheme,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("scheme", &self.scheme).field("lanes", &self.lanes()).finish()
    }
}

impl Default for Engine {
    fn default() -> Self {
        Self::serial()
    }
}

impl Engine {
    pub fn serial() -> Self {
        Self { scheme: TileScheme::default(), pool: None }
    }

    /// An engine with `lanes` worker threads. One lane means serial.
    pub fn with_lanes(lanes: usize) -> Self {
        let pool = (lanes > 1).then(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(lanes)
                    .thread_name(|i| format!("deepmlp-lane-{i}"))
                    .build()
                    .expect("failed to start worker threads"),
            )
        });
        Self { scheme: TileScheme::default(), pool }
    }

    pub fn with_scheme(mut self, scheme: TileScheme) -> Self {
        scheme.validate().expect("invalid tile scheme");
        self.scheme = scheme;
        self
    }

    pub fn scheme(&self) -> &TileScheme {
        &self.scheme
    }

    pub fn lanes(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    pub fn is_parallel(&self) -> bool {
        self.pool.is_some()
    }

    /// `(0..n).map(f)` collected in index order, spread over the lanes.
    pub fn map_indexed<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
            None => (0..n).map(f).collect(),
        }
    }

    /// Runs `f` on every `chunk`-sized piece of `data` (with its chunk
    /// index).
    fn for_chunks<T, F>(&self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        match &self.pool {
            Some(pool) => pool.install(|| data.par_chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c))),
            None => data.chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c)),
        }
    }
}

/// Work granule for parallel splits, in multiply-adds.
const GRAIN: usize = 1 << 14;

// --- naive references --------------------------------------------------------

/// `a_j = sum_i w_ji x_i + w_j,bias`, `y_j = scaled_tanh(a_j)`.
pub fn forward_naive<T: Real>(layer: &Layer<T>, input: &[T]) -> Result<(Vec<T>, Vec<T>), NetworkError> {
    size_check("forward input", layer.fan_in(), input.len())?;
    let pre: Vec<T> = (0..layer.fan_out())
        .map(|j| {
            let row = layer.row(j);
            let mut acc = T::zero();
            for i in 0..layer.fan_in() {
                acc += row[i] * input[i];
            }
            acc + row[layer.fan_in()]
        })
        .collect();
    let out = pre.iter().map(|&a| scaled_tanh(a)).collect();
    Ok((pre, out))
}

/// `delta_i = f'(a_i) * sum_j w_ji delta_j`, bias column excluded.
pub fn backprop_deltas_naive<T: Real>(
    layer: &Layer<T>,
    downstream: &[T],
    upstream_pre: &[T],
) -> Result<Vec<T>, NetworkError> {
    size_check("downstream deltas", layer.fan_out(), downstream.len())?;
    size_check("upstream pre-activations", layer.fan_in(), upstream_pre.len())?;
    Ok((0..layer.fan_in())
        .map(|i| {
            let mut acc = T::zero();
            for (j, &d) in downstream.iter().enumerate() {
                acc += layer.weight(j, i) * d;
            }
            scaled_tanh_derivative(upstream_pre[i]) * acc
        })
        .collect())
}

/// `w_ji += eta * delta_j * y_i`, and `w_j,bias += eta * delta_j * 1.0`.
pub fn update_weights_naive<T: Real>(
    layer: &mut Layer<T>,
    deltas: &[T],
    upstream_out: &[T],
    eta: T,
) -> Result<(), NetworkError> {
    size_check("update deltas", layer.fan_out(), deltas.len())?;
    size_check("update states", layer.fan_in(), upstream_out.len())?;
    let (fan_in, stride) = (layer.fan_in(), layer.stride());
    let w = layer.weights_mut();
    for (j, &d) in deltas.iter().enumerate() {
        for i in 0..fan_in {
            w[j * stride + i] = w[j * stride + i] + eta * d * upstream_out[i];
        }
        w[j * stride + fan_in] = w[j * stride + fan_in] + eta * d * T::one();
    }
    Ok(())
}

// --- tiled variants ----------------------------------------------------------

/// Reusable buffers for the tiled kernels.
#[derive(Debug, Clone, Default)]
pub struct Scratch<T> {
    partials: Vec<T>,
    padded: Vec<T>,
    states: Vec<T>,
}

impl<T: Real> Scratch<T> {
    pub fn new() -> Self {
        Self { partials: Vec::new(), padded: Vec::new(), states: Vec::new() }
    }
}

/// Dot product with eight interleaved accumulators combined pairwise.
#[inline]
fn dot_lanes<T: Real>(w: &[T], x: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let wc = w.chunks_exact(8);
    let xc = x.chunks_exact(8);
    let (wr, xr) = (wc.remainder(), xc.remainder());
    for (a, b) in wc.zip(xc) {
        for l in 0..8 {
            acc[l] = acc[l] + a[l] * b[l];
        }
    }
    for (l, (&a, &b)) in wr.iter().zip(xr).enumerate() {
        acc[l] = acc[l] + a * b;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Tiled forward pass; see the module docs.
pub fn forward_tiled<T: Real>(
    layer: &Layer<T>,
    input: &[T],
    engine: &Engine,
) -> Result<(Vec<T>, Vec<T>), NetworkError> {
    let mut pre = vec![T::zero(); layer.fan_out()];
    let mut out = vec![T::zero(); layer.fan_out()];
    forward_tiled_into(layer, input, engine, &mut Scratch::new(), &mut pre, &mut out)?;
    Ok((pre, out))
}

pub fn forward_tiled_into<T: Real>(
    layer: &Layer<T>,
    input: &[T],
    engine: &Engine,
    scratch: &mut Scratch<T>,
    pre: &mut [T],
    out: &mut [T],
) -> Result<(), NetworkError> {
    size_check("forward input", layer.fan_in(), input.len())?;
    size_check("forward pre-activations", layer.fan_out(), pre.len())?;
    size_check("forward outputs", layer.fan_out(), out.len())?;
    let seg = engine.scheme.segment;
    let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
    let n_seg = fan_in.div_ceil(seg);
    let padded_len = n_seg * seg;

    scratch.padded.clear();
    scratch.padded.extend_from_slice(input);
    scratch.padded.resize(padded_len, T::zero());
    scratch.partials.clear();
    scratch.partials.resize(fan_out * n_seg, T::zero());

    // Stage 1: one partial per (neuron, segment).
    let x = &scratch.padded[..];
    let per_task = (GRAIN / padded_len.max(1)).max(1);
    engine.for_chunks(&mut scratch.partials, per_task * n_seg, |task, chunk| {
        let mut tail = [T::zero(); MAX_WIDTH];
        for (local, partials) in chunk.chunks_mut(n_seg).enumerate() {
            let j = task * per_task + local;
            let row = &layer.row(j)[..fan_in];
            for (s, p) in partials.iter_mut().enumerate() {
                let lo = s * seg;
                let xs = &x[lo..lo + seg];
                *p = if lo + seg <= fan_in {
                    dot_lanes(&row[lo..lo + seg], xs)
                } else {
                    let real = fan_in - lo;
                    tail[..real].copy_from_slice(&row[lo..]);
                    tail[real..seg].fill(T::zero());
                    dot_lanes(&tail[..seg], xs)
                };
            }
        }
    });

    // Stage 2: fixed-order reduction, bias, activation.
    let partials = &scratch.partials[..];
    for j in 0..fan_out {
        let mut a = T::zero();
        for &p in &partials[j * n_seg..(j + 1) * n_seg] {
            a += p;
        }
        a += layer.bias(j);
        pre[j] = a;
        out[j] = scaled_tanh(a);
    }
    Ok(())
}

/// Tiled delta back-propagation; see the module docs.
pub fn backprop_deltas_tiled<T: Real>(
    layer: &Layer<T>,
    downstream: &[T],
    upstream_pre: &[T],
    engine: &Engine,
) -> Result<Vec<T>, NetworkError> {
    let mut up = vec![T::zero(); layer.fan_in()];
    backprop_deltas_tiled_into(layer, downstream, upstream_pre, engine, &mut Scratch::new(), &mut up)?;
    Ok(up)
}

pub fn backprop_deltas_tiled_into<T: Real>(
    layer: &Layer<T>,
    downstream: &[T],
    upstream_pre: &[T],
    engine: &Engine,
    scratch: &mut Scratch<T>,
    upstream: &mut [T],
) -> Result<(), NetworkError> {
    size_check("downstream deltas", layer.fan_out(), downstream.len())?;
    size_check("upstream pre-activations", layer.fan_in(), upstream_pre.len())?;
    size_check("upstream deltas", layer.fan_in(), upstream.len())?;
    let TileScheme { tile, staged_stride, .. } = engine.scheme;
    let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
    let row_blocks = fan_out.div_ceil(tile);
    let col_blocks = fan_in.div_ceil(tile);

    // partials[cb][rb][c]: contiguous per column block.
    let strip = row_blocks * tile;
    scratch.partials.clear();
    scratch.partials.resize(col_blocks * strip, T::zero());

    let cols_per_task = (GRAIN / (tile * tile * row_blocks).max(1)).max(1);
    engine.for_chunks(&mut scratch.partials, cols_per_task * strip, |task, chunk| {
        let mut staged = vec![T::zero(); tile * staged_stride];
        let mut d = [T::zero(); MAX_WIDTH];
        for (local, col_strip) in chunk.chunks_mut(strip).enumerate() {
            let cb = task * cols_per_task + local;
            let c0 = cb * tile;
            for rb in 0..row_blocks {
                let r0 = rb * tile;
                for r in 0..tile {
                    let j = r0 + r;
                    d[r] = if j < fan_out { downstream[j] } else { T::zero() };
                    let dst = &mut staged[r * staged_stride..r * staged_stride + tile];
                    if j < fan_out {
                        let row = layer.row(j);
                        let real = tile.min(fan_in.saturating_sub(c0));
                        dst[..real].copy_from_slice(&row[c0..c0 + real]);
                        dst[real..].fill(T::zero());
                    } else {
                        dst.fill(T::zero());
                    }
                }
                let out = &mut col_strip[rb * tile..(rb + 1) * tile];
                for (c, o) in out.iter_mut().enumerate() {
                    let mut acc = T::zero();
                    for r in 0..tile {
                        acc = acc + staged[r * staged_stride + c] * d[r];
                    }
                    *o = acc;
                }
            }
        }
    });

    let partials = &scratch.partials[..];
    for (i, u) in upstream.iter_mut().enumerate() {
        let (cb, c) = (i / tile, i % tile);
        let mut acc = T::zero();
        for rb in 0..row_blocks {
            acc += partials[cb * strip + rb * tile + c];
        }
        *u = scaled_tanh_derivative(upstream_pre[i]) * acc;
    }
    Ok(())
}

/// Tiled weight update; see the module docs.
pub fn update_weights_tiled<T: Real>(
    layer: &mut Layer<T>,
    deltas: &[T],
    upstream_out: &[T],
    eta: T,
    engine: &Engine,
) -> Result<(), NetworkError> {
    update_weights_tiled_with(layer, deltas, upstream_out, eta, engine, &mut Scratch::new())
}

pub fn update_weights_tiled_with<T: Real>(
    layer: &mut Layer<T>,
    deltas: &[T],
    upstream_out: &[T],
    eta: T,
    engine: &Engine,
    scratch: &mut Scratch<T>,
) -> Result<(), NetworkError> {
    size_check("update deltas", layer.fan_out(), deltas.len())?;
    size_check("update states", layer.fan_in(), upstream_out.len())?;
    let width = engine.scheme.update_width;
    let stride = layer.stride();
    let groups = stride.div_ceil(width);

    scratch.states.clear();
    scratch.states.extend_from_slice(upstream_out);
    scratch.states.push(T::one());
    scratch.states.resize(groups * width, T::zero());
    let states = &scratch.states[..];

    let rows_per_task = (GRAIN / stride).max(1);
    engine.for_chunks(layer.weights_mut(), rows_per_task * stride, |task, chunk| {
        for (local, row) in chunk.chunks_mut(stride).enumerate() {
            let step = eta * deltas[task * rows_per_task + local];
            for (g, group) in row.chunks_mut(width).enumerate() {
                let s = &states[g * width..g * width + group.len()];
                for (w, &y) in group.iter_mut().zip(s) {
                    *w = *w + step * y;
                }
            }
        }
    });
    Ok(())
}

// --- loss and output deltas --------------------------------------------------

/// +1 for the true class, -1 elsewhere.
pub fn targets<T: Real>(n: usize, target: usize) -> Vec<T> {
    (0..n).map(|k| if k == target { T::one() } else { -T::one() }).collect()
}

/// `delta_j = (t_j - y_j) * f'(a_j)`.
pub fn output_deltas<T: Real>(outputs: &[T], pre: &[T], target: usize) -> Vec<T> {
    let mut d = vec![T::zero(); outputs.len()];
    output_deltas_into(outputs, pre, target, &mut d);
    d
}

fn output_deltas_into<T: Real>(outputs: &[T], pre: &[T], target: usize, deltas: &mut [T]) {
    for (k, d) in deltas.iter_mut().enumerate() {
        let t = if k == target { T::one() } else { -T::one() };
        *d = (t - outputs[k]) * scaled_tanh_derivative(pre[k]);
    }
}

/// `0.5 * sum_j (t_j - y_j)^2`.
pub fn loss<T: Real>(outputs: &[T], target: usize) -> T {
    let half = T::cast(0.5);
    outputs
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let t = if k == target { T::one() } else { -T::one() };
            half * (t - y) * (t - y)
        })
        .sum()
}

// --- full training step ------------------------------------------------------

/// Per-layer buffers for [`train_step`].
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    /// `states[0]` is the input, `states[l + 1]` the output of layer `l`.
    states: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    deltas: Vec<Vec<T>>,
    scratch: Scratch<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new(mlp: &Mlp<T>) -> Self {
        let sizes = mlp.architecture().sizes();
        Self {
            states: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            pre: sizes[1..].iter().map(|&n| vec![T::zero(); n]).collect(),
            deltas: sizes[1..].iter().map(|&n| vec![T::zero(); n]).collect(),
            scratch: Scratch::new(),
        }
    }

    pub fn outputs(&self) -> &[T] {
        self.states.last().unwrap()
    }

    pub fn deltas(&self) -> &[Vec<T>] {
        &self.deltas
    }

    pub fn pre_activations(&self) -> &[Vec<T>] {
        &self.pre
    }

    pub fn states(&self) -> &[Vec<T>] {
        &self.states
    }
}

/// Forward pass through every layer, filling the workspace.
pub fn forward_all<T: Real>(
    mlp: &Mlp<T>,
    input: &[T],
    engine: &Engine,
    variant: Variant,
    ws: &mut Workspace<T>,
) -> Result<(), NetworkError> {
    size_check("network input", mlp.architecture().input_size(), input.len())?;
    ws.states[0].copy_from_slice(input);
    for (l, layer) in mlp.layers().iter().enumerate() {
        let (before, after) = ws.states.split_at_mut(l + 1);
        let x = &before[l];
        match variant {
            Variant::Naive => {
                let (a, y) = forward_naive(layer, x)?;
                ws.pre[l].copy_from_slice(&a);
                after[0].copy_from_slice(&y);
            }
            Variant::Tiled => forward_tiled_into(layer, x, engine, &mut ws.scratch, &mut ws.pre[l], &mut after[0])?,
        }
    }
    Ok(())
}

/// Back-propagates deltas from the output layer down to the first hidden
/// layer. No weight is touched.
pub fn backward_all<T: Real>(
    mlp: &Mlp<T>,
    target: usize,
    engine: &Engine,
    variant: Variant,
    ws: &mut Workspace<T>,
) -> Result<(), NetworkError> {
    let n = mlp.layers().len();
    output_deltas_into(ws.states.last().unwrap(), &ws.pre[n - 1], target, &mut ws.deltas[n - 1]);
    for l in (1..n).rev() {
        let (lower, upper) = ws.deltas.split_at_mut(l);
        let layer = &mlp.layers()[l];
        match variant {
            Variant::Naive => {
                let up = backprop_deltas_naive(layer, &upper[0], &ws.pre[l - 1])?;
                lower[l - 1].copy_from_slice(&up);
            }
            Variant::Tiled => backprop_deltas_tiled_into(
                layer,
                &upper[0],
                &ws.pre[l - 1],
                engine,
                &mut ws.scratch,
                &mut lower[l - 1],
            )?,
        }
    }
    Ok(())
}

/// Applies the updates for every layer from the deltas in the workspace.
pub fn update_all<T: Real>(
    mlp: &mut Mlp<T>,
    eta: T,
    engine: &Engine,
    variant: Variant,
    ws: &mut Workspace<T>,
) -> Result<(), NetworkError> {
    for (l, layer) in mlp.layers_mut().iter_mut().enumerate() {
        match variant {
            Variant::Naive => update_weights_naive(layer, &ws.deltas[l], &ws.states[l], eta)?,
            Variant::Tiled => {
                update_weights_tiled_with(layer, &ws.deltas[l], &ws.states[l], eta, engine, &mut ws.scratch)?
            }
        }
    }
    Ok(())
}

/// One on-line step: full forward pass, then all deltas, then all weight
/// updates, as three separate phases. The outputs of the forward pass are
/// left in `ws.outputs()`.
pub fn train_step<T: Real>(
    mlp: &mut Mlp<T>,
    input: &[T],
    target: usize,
    eta: T,
    engine: &Engine,
    variant: Variant,
    ws: &mut Workspace<T>,
) -> Result<(), NetworkError> {
    let classes = mlp.architecture().output_size();
    if target >= classes {
        return Err(NetworkError::TargetOutOfRange { target, classes });
    }
    forward_all(mlp, input, engine, variant, ws)?;
    backward_all(mlp, target, engine, variant, ws)?;
    update_all(mlp, eta, engine, variant, ws)
}

// --- gradient check ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub n_weights: usize,
    /// `(layer, flat weight index)` of the worst entry.
    pub worst: (usize, usize),
}

/// Central-difference step used by [`gradient_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// `exp` in double-double: argument halved until tiny, Taylor series, then
/// repeated squaring.
fn exp_dd(z: TwoFloat) -> TwoFloat {
    let mag = z.hi().abs();
    let halvings = if mag < 1.0 / 256.0 { 0 } else { mag.log2().ceil() as i32 + 8 };
    let r = z / 2f64.powi(halvings);
    let (mut term, mut sum) = (TwoFloat::from(1.0), TwoFloat::from(1.0));
    for k in 1..=24 {
        term = term * r / f64::from(k);
        sum += term;
    }
    for _ in 0..halvings {
        sum = sum * sum;
    }
    sum
}

fn tanh_dd(z: TwoFloat) -> TwoFloat {
    if z.hi().abs() > 40.0 {
        return TwoFloat::from(z.hi().signum());
    }
    let e2 = exp_dd(z * 2.0);
    (e2 - 1.0) * recip_dd(e2 + 1.0)
}

/// `1 / x` by one Newton step from the `f64` reciprocal. `TwoFloat`'s own
/// division by a `TwoFloat` only keeps `f64` accuracy.
fn recip_dd(x: TwoFloat) -> TwoFloat {
    let y = TwoFloat::from(1.0 / x.hi());
    y + y * (1.0 - x * y)
}

/// Loss of `mlp` with weight `(layer, idx)` replaced by `w`, evaluated in
/// double-double arithmetic so that finite differences are not swamped by
/// rounding noise.
fn loss_dd(mlp: &Mlp<f64>, input: &[f64], target: usize, layer: usize, idx: usize, w: TwoFloat) -> TwoFloat {
    let zero = TwoFloat::from(0.0);
    let (a, b) = (TwoFloat::from(TANH_A), TwoFloat::from(TANH_B));
    let mut x: Vec<TwoFloat> = input.iter().map(|&v| TwoFloat::from(v)).collect();
    for (l, lay) in mlp.layers().iter().enumerate() {
        let weight = |k: usize| if l == layer && k == idx { w } else { TwoFloat::from(lay.weights()[k]) };
        let stride = lay.stride();
        x = (0..lay.fan_out())
            .map(|j| {
                let mut acc = weight(j * stride + lay.fan_in());
                for (i, &xi) in x.iter().enumerate() {
                    acc += weight(j * stride + i) * xi;
                }
                a * tanh_dd(b * acc)
            })
            .collect();
    }
    x.iter().enumerate().fold(zero, |sum, (k, &y)| {
        let t = TwoFloat::from(if k == target { 1.0 } else { -1.0 });
        sum + (t - y) * (t - y) * 0.5
    })
}

/// Compares back-propagated gradients of the loss with central finite
/// differences for every weight. Relative error per weight is
/// `|g_bp - g_fd| / max(|g_bp|, 1e-8)`. Back-propagation runs in `f64`;
/// the finite-difference oracle evaluates the loss in double-double
/// arithmetic.
pub fn gradient_check(mlp: &Mlp<f64>, input: &[f64], target: usize) -> Result<GradCheck, NetworkError> {
    let engine = Engine::serial();
    let mut ws = Workspace::new(mlp);
    forward_all(mlp, input, &engine, Variant::Naive, &mut ws)?;
    backward_all(mlp, target, &engine, Variant::Naive, &mut ws)?;

    let h = TwoFloat::from(GRAD_CHECK_STEP);
    let mut report = GradCheck { max_rel_error: 0.0, n_weights: 0, worst: (0, 0) };
    for (l, layer) in mlp.layers().iter().enumerate() {
        let (fan_in, stride) = (layer.fan_in(), layer.stride());
        for (idx, &w0) in layer.weights().iter().enumerate() {
            let (j, i) = (idx / stride, idx % stride);
            let state = if i == fan_in { 1.0 } else { ws.states[l][i] };
            let analytic = -ws.deltas[l][j] * state;

            let w0 = TwoFloat::from(w0);
            let up = loss_dd(mlp, input, target, l, idx, w0 + h);
            let down = loss_dd(mlp, input, target, l, idx, w0 - h);
            let numeric = f64::from((up - down) / (h * 2.0));

            let rel = (analytic - numeric).abs() / analytic.abs().max(1e-8);
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = rel;
                report.worst = (l, idx);
            }
            report.n_weights += 1;
        }
    }
    Ok(report)
}
