//! Throughput measurement for the kernels and the deformation pass.
//!
//! Every benchmark works on its own clone of the network and synthetic
//! inputs, so caller-visible state never changes.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::deform::{deform_epoch, DeformParams};
use crate::kernels::{backward_all, forward_all, train_step, update_all, Engine, TileScheme, Variant, Workspace};
use crate::mnist_io::{fixture, Split};
use crate::network::{Architecture, Mlp};
use crate::rng::{uniform, Purpose, Streams};

pub const WARMUP: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Host {
    pub cpu_model: String,
    pub logical_cpus: usize,
    pub arch: String,
    pub os: String,
}

impl Host {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        Self {
            cpu_model,
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            arch: std::env::consts::ARCH.into(),
            os: std::env::consts::OS.into(),
        }
    }
}

impl std::fmt::Display for Host {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} logical CPUs, {}-{})", self.cpu_model, self.logical_cpus, self.os, self.arch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    #[serde(rename = "train_step")]
    TrainStep,
    Forward,
    Backward,
    Deform,
}

impl std::str::FromStr for Op {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train_step" => Ok(Op::TrainStep),
            "forward" => Ok(Op::Forward),
            "backward" => Ok(Op::Backward),
            "deform" => Ok(Op::Deform),
            other => Err(format!("unknown op {other:?} (train_step|forward|backward|deform)")),
        }
    }
}

/// One line-delimited benchmark record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub op: Op,
    /// `naive-serial` or `tiled-parallel`.
    pub variant: String,
    pub lanes: usize,
    pub shape: String,
    pub repetitions: usize,
    /// Units of work per repetition (weights, connections or images).
    pub work_per_rep: u64,
    pub unit: String,
    pub throughput: f64,
    pub wall_seconds: f64,
    /// `naive_serial_time / this_time`.
    pub speedup: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub deform_share_percent: Option<f64>,
    pub host: Host,
}

impl BenchReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("bench report serializes")
    }
}

fn synthetic_input(n: usize, seed: u64) -> Vec<f32> {
    let mut r = Streams::new(seed).stream(Purpose::Synthetic, 0, 1);
    (0..n).map(|_| uniform(&mut r, -1.0, 1.0) as f32).collect()
}

fn time_reps(reps: usize, mut f: impl FnMut()) -> f64 {
    for _ in 0..WARMUP {
        f();
    }
    let t = Instant::now();
    for _ in 0..reps {
        f();
    }
    t.elapsed().as_secs_f64()
}

/// Options shared by the kernel benchmarks.
#[derive(Debug, Clone)]
pub struct KernelBench {
    pub arch: Architecture,
    pub repetitions: usize,
    pub lanes: usize,
    pub scheme: TileScheme,
    pub seed: u64,
}

impl KernelBench {
    pub fn new(arch: Architecture, repetitions: usize, lanes: usize) -> Self {
        Self { arch, repetitions, lanes, scheme: TileScheme::default(), seed: 0 }
    }

    /// Times `op` as naive-serial and tiled-parallel, in that order.
    pub fn run(&self, op: Op) -> Vec<BenchReport> {
        let host = Host::detect();
        let mlp: Mlp<f32> = Mlp::init(&mut Streams::new(self.seed).stream(Purpose::Init, 0, 0), &self.arch);
        let input = synthetic_input(self.arch.input_size(), self.seed);
        let weights = self.arch.count_weights() as u64;
        let (work, unit) = match op {
            Op::TrainStep => (weights, "weight-updates/s"),
            _ => (weights, "connections/s"),
        };
        let configs = [
            ("naive-serial", Variant::Naive, Engine::serial()),
            ("tiled-parallel", Variant::Tiled, Engine::with_lanes(self.lanes).with_scheme(self.scheme)),
        ];
        let mut out: Vec<BenchReport> = Vec::new();
        for (name, variant, engine) in configs {
            let mut net = mlp.clone();
            let mut ws = Workspace::new(&net);
            let target = 3 % self.arch.output_size();
            let secs = match op {
                Op::TrainStep => time_reps(self.repetitions, || {
                    train_step(&mut net, &input, target, 1e-4, &engine, variant, &mut ws).unwrap();
                }),
                Op::Forward => time_reps(self.repetitions, || forward_all(&net, &input, &engine, variant, &mut ws).unwrap()),
                Op::Backward => {
                    forward_all(&net, &input, &engine, variant, &mut ws).unwrap();
                    time_reps(self.repetitions, || {
                        backward_all(&net, target, &engine, variant, &mut ws).unwrap();
                        update_all(&mut net, 1e-4, &engine, variant, &mut ws).unwrap();
                    })
                }
                Op::Deform => panic!("use bench_deformation for the deform op"),
            };
            let base = out.first().map_or(secs, |b| b.wall_seconds);
            out.push(BenchReport {
                op,
                variant: name.into(),
                lanes: engine.lanes(),
                shape: self.arch.to_string(),
                repetitions: self.repetitions,
                work_per_rep: work,
                unit: unit.into(),
                throughput: work as f64 * self.repetitions as f64 / secs,
                wall_seconds: secs,
                speedup: base / secs,
                deform_share_percent: None,
                host: host.clone(),
            });
        }
        out
    }
}

pub fn bench_train_step(arch: &Architecture, repetitions: usize, lanes: usize) -> Vec<BenchReport> {
    KernelBench::new(arch.clone(), repetitions, lanes).run(Op::TrainStep)
}

/// Times one deformation pass over `n_images` synthetic digits. With a
/// measured `train_epoch_seconds` for the same images, the report carries
/// the deformation share `deform / (deform + train) * 100`.
pub fn bench_deformation(n_images: usize, lanes: usize, train_epoch_seconds: Option<f64>) -> BenchReport {
    let data = fixture::synthetic_dataset(&mut Streams::new(0).stream(Purpose::Synthetic, 0, 0), n_images, Split::Train);
    let engine = Engine::with_lanes(lanes);
    let params = DeformParams::default();
    let streams = Streams::new(1);
    let t = Instant::now();
    let out = deform_epoch(&streams, 0, &data, &params, &engine).expect("default parameters are valid");
    let secs = t.elapsed().as_secs_f64();
    debug_assert_eq!(out.len(), n_images);
    BenchReport {
        op: Op::Deform,
        variant: if engine.is_parallel() { "parallel" } else { "serial" }.into(),
        lanes: engine.lanes(),
        shape: format!("{n_images}x29x29"),
        repetitions: 1,
        work_per_rep: n_images as u64,
        unit: "images/s".into(),
        throughput: if n_images == 0 || secs == 0.0 { 0.0 } else { n_images as f64 / secs },
        wall_seconds: secs,
        speedup: 1.0,
        deform_share_percent: train_epoch_seconds.map(|tr| deform_share(secs, tr)),
        host: Host::detect(),
    }
}

pub fn deform_share(deform_seconds: f64, train_seconds: f64) -> f64 {
    let total = deform_seconds + train_seconds;
    if total > 0.0 {
        100.0 * deform_seconds / total
    } else {
        0.0
    }
}
