//! The MLP model: architecture, layers with a bias column, scaled tanh,
//! uniform initialization, ranking predictions and binary checkpoints.

use std::fmt::Debug;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deform::{NormImage, NORM_PIXELS};
use crate::kernels::{self, Engine};

/// Scaled tanh amplitude.
pub const TANH_A: f64 = 1.7159;
/// Scaled tanh slope.
pub const TANH_B: f64 = 0.6666;
/// Half-width of the uniform initialization interval.
pub const INIT_RANGE: f64 = 0.05;
pub const N_CLASSES: usize = 10;

/// Floating-point element type of weights and activations. Training runs
/// in `f32`; `f64` exists for gradient-check oracles.
pub trait Real:
    num_traits::Float + std::iter::Sum + std::ops::AddAssign + Default + Debug + Send + Sync + 'static
{
    fn cast(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn cast(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn cast(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// `A * tanh(B * a)`.
#[inline]
pub fn scaled_tanh<T: Real>(a: T) -> T {
    T::cast(TANH_A) * (T::cast(TANH_B) * a).tanh()
}

/// `A * B * (1 - tanh^2(B * a))`.
#[inline]
pub fn scaled_tanh_derivative<T: Real>(a: T) -> T {
    let t = (T::cast(TANH_B) * a).tanh();
    T::cast(TANH_A * TANH_B) * (T::one() - t * t)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("{what}: expected length {expected}, got {found}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("target class {target} out of range for {classes} outputs")]
    TargetOutOfRange { target: usize, classes: usize },
}

pub(crate) fn size_check(what: &'static str, expected: usize, found: usize) -> Result<(), NetworkError> {
    if expected == found {
        Ok(())
    } else {
        Err(NetworkError::SizeMismatch { what, expected, found })
    }
}

/// Neuron counts per layer, input first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Architecture(Vec<usize>);

impl Architecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self, NetworkError> {
        if layer_sizes.len() < 2 {
            return Err(NetworkError::InvalidArchitecture(format!(
                "need at least an input and an output layer, got {} sizes",
                layer_sizes.len()
            )));
        }
        if let Some(pos) = layer_sizes.iter().position(|&n| n == 0) {
            return Err(NetworkError::InvalidArchitecture(format!("layer {pos} has zero neurons")));
        }
        Ok(Self(layer_sizes))
    }

    /// 29x29 input, the given hidden layers, 10 outputs.
    pub fn mnist(hidden: &[usize]) -> Result<Self, NetworkError> {
        let mut sizes = vec![NORM_PIXELS];
        sizes.extend_from_slice(hidden);
        sizes.push(N_CLASSES);
        Self::new(sizes)
    }

    /// Checks the shape required for digit classification.
    pub fn require_mnist(&self) -> Result<(), NetworkError> {
        if self.input_size() != NORM_PIXELS || self.output_size() != N_CLASSES {
            return Err(NetworkError::InvalidArchitecture(format!(
                "{self} does not map {NORM_PIXELS} inputs to {N_CLASSES} outputs"
            )));
        }
        Ok(())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }

    pub fn input_size(&self) -> usize {
        self.0[0]
    }

    pub fn output_size(&self) -> usize {
        *self.0.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.0.len() - 1
    }

    /// `(fan_in, fan_out)` for every weight layer.
    pub fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }

    /// Total weights including one bias weight per neuron.
    pub fn count_weights(&self) -> usize {
        self.layer_shapes().map(|(nin, nout)| (nin + 1) * nout).sum()
    }

    /// Parses `"841,1000,500,10"` (commas or `x`/`-` separators).
    pub fn parse(s: &str) -> Result<Self, NetworkError> {
        let sizes = s
            .split(|c: char| c == ',' || c == '-' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<usize>().map_err(|e| NetworkError::InvalidArchitecture(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(sizes)
    }
}

impl TryFrom<Vec<usize>> for Architecture {
    type Error = NetworkError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Architecture> for Vec<usize> {
    fn from(a: Architecture) -> Self {
        a.0
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Weights of one fully connected layer, `fan_out` rows of `fan_in + 1`
/// entries. The last entry of each row multiplies the constant 1.0 bias
/// input.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    fan_in: usize,
    fan_out: usize,
    weights: Vec<T>,
}

impl<T: Real> Layer<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { fan_in, fan_out, weights: vec![T::zero(); (fan_in + 1) * fan_out] }
    }

    pub fn from_weights(fan_in: usize, fan_out: usize, weights: Vec<T>) -> Result<Self, NetworkError> {
        size_check("layer weights", (fan_in + 1) * fan_out, weights.len())?;
        Ok(Self { fan_in, fan_out, weights })
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    /// Row length including the bias weight.
    #[inline]
    pub fn stride(&self) -> usize {
        self.fan_in + 1
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[T] {
        let s = self.stride();
        &self.weights[j * s..(j + 1) * s]
    }

    #[inline]
    pub fn weight(&self, j: usize, i: usize) -> T {
        self.weights[j * self.stride() + i]
    }

    #[inline]
    pub fn bias(&self, j: usize) -> T {
        self.weights[j * self.stride() + self.fan_in]
    }

    pub fn set_weight(&mut self, j: usize, i: usize, w: T) {
        let s = self.stride();
        self.weights[j * s + i] = w;
    }

    pub fn convert<U: Real>(&self) -> Layer<U> {
        Layer {
            fan_in: self.fan_in,
            fan_out: self.fan_out,
            weights: self.weights.iter().map(|w| U::cast(w.as_f64())).collect(),
        }
    }
}

/// A stack of fully connected scaled-tanh layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T = f32> {
    arch: Architecture,
    layers: Vec<Layer<T>>,
}

impl<T: Real> Mlp<T> {
    /// Every weight, bias weights included, i.i.d. uniform in
    /// `[-0.05, 0.05]`, drawn layer by layer in row-major order.
    pub fn init(rng: &mut impl Rng, arch: &Architecture) -> Self {
        let layers = arch
            .layer_shapes()
            .map(|(nin, nout)| {
                let weights = (0..(nin + 1) * nout)
                    .map(|_| T::cast(crate::rng::uniform(rng, -INIT_RANGE, INIT_RANGE)))
                    .collect();
                Layer { fan_in: nin, fan_out: nout, weights }
            })
            .collect();
        Self { arch: arch.clone(), layers }
    }

    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            arch: arch.clone(),
            layers: arch.layer_shapes().map(|(i, o)| Layer::zeros(i, o)).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self, NetworkError> {
        let first = layers
            .first()
            .ok_or_else(|| NetworkError::InvalidArchitecture("no layers".into()))?;
        let mut sizes = vec![first.fan_in];
        for l in &layers {
            size_check("layer fan_in", *sizes.last().unwrap(), l.fan_in)?;
            sizes.push(l.fan_out);
        }
        Ok(Self { arch: Architecture::new(sizes)?, layers })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn count_weights(&self) -> usize {
        self.arch.count_weights()
    }

    /// Flat view over all weights, layer-major.
    pub fn flat_weights(&self) -> impl Iterator<Item = T> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().copied())
    }

    pub fn convert<U: Real>(&self) -> Mlp<U> {
        Mlp { arch: self.arch.clone(), layers: self.layers.iter().map(Layer::convert).collect() }
    }

    /// Output activations for `input`, using the serial tiled kernels.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>, NetworkError> {
        let engine = Engine::serial();
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = kernels::forward_tiled(layer, &x, &engine)?.1;
        }
        Ok(x)
    }
}

/// Output indices sorted by descending activation; ties go to the smaller
/// index.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking(pub Vec<(u8, f32)>);

impl Ranking {
    pub fn from_scores(scores: &[f32]) -> Self {
        let mut ranked: Vec<(u8, f32)> = scores.iter().enumerate().map(|(i, &s)| (i as u8, s)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ranking(ranked)
    }

    pub fn first(&self) -> u8 {
        self.0[0].0
    }

    pub fn second(&self) -> u8 {
        self.0[1].0
    }

    pub fn digits(&self) -> Vec<u8> {
        self.0.iter().map(|p| p.0).collect()
    }
}

/// Anything that scores a flattened 29x29 input. Implemented by [`Mlp`];
/// tests plug in stubs.
pub trait Classifier: Sync {
    fn input_len(&self) -> usize;
    fn scores(&self, input: &[f32]) -> Result<Vec<f32>, NetworkError>;

    fn rank(&self, input: &[f32]) -> Result<Ranking, NetworkError> {
        Ok(Ranking::from_scores(&self.scores(input)?))
    }
}

impl Classifier for Mlp<f32> {
    fn input_len(&self) -> usize {
        self.arch.input_size()
    }

    fn scores(&self, input: &[f32]) -> Result<Vec<f32>, NetworkError> {
        self.forward(input)
    }
}

/// Ranked digits for one image.
pub fn predict(model: &impl Classifier, input: &NormImage) -> Result<Ranking, NetworkError> {
    model.rank(input.as_slice())
}

// --- checkpoints -----------------------------------------------------------

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DMLP";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint header: {0}")]
    CorruptHeader(String),
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("checkpoint payload holds {found} bytes, architecture needs {expected}")]
    PayloadLengthMismatch { expected: usize, found: usize },
    #[error("checkpoint I/O on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A saved model with its training metadata.
///
/// On disk: `"DMLP"`, version `u16`, layer-size count `u32`, sizes `u32`
/// each, epoch `u32`, validation error `f64`, then all weights as `f32`,
/// layer-major and row-major within a layer. Everything little-endian.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: u32,
    pub validation_error: f64,
    pub mlp: Mlp<f32>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.mlp.arch.sizes();
        let mut out = Vec::with_capacity(22 + 4 * sizes.len() + 4 * self.mlp.count_weights());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for &s in sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.validation_error.to_le_bytes());
        for w in self.mlp.flat_weights() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::CorruptHeader("missing DMLP magic".into()));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let n = cur.u32()? as usize;
        if n > bytes.len() / 4 {
            return Err(CheckpointError::CorruptHeader(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| cur.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
        let arch = Architecture::new(sizes).map_err(|e| CheckpointError::CorruptHeader(e.to_string()))?;
        let epoch = cur.u32()?;
        let validation_error = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());

        let payload = &bytes[cur.pos..];
        let expected = arch.count_weights() * 4;
        if payload.len() != expected {
            return Err(CheckpointError::PayloadLengthMismatch { expected, found: payload.len() });
        }
        let mut floats = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let layers = arch
            .layer_shapes()
            .map(|(nin, nout)| Layer {
                fan_in: nin,
                fan_out: nout,
                weights: floats.by_ref().take((nin + 1) * nout).collect(),
            })
            .collect();
        Ok(Checkpoint { epoch, validation_error, mlp: Mlp { arch, layers } })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos + n;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| {
            CheckpointError::CorruptHeader(format!("header ends at byte {} (needed {end})", self.bytes.len()))
        })?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
