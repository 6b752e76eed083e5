//! The training protocol: fresh deformations every epoch, sequential
//! on-line updates, multiplicative learning-rate decay, validation on the
//! un-deformed training set and best-validation model selection.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deform::{deform_epoch, upscale_all, DeformError, DeformParams, NormImage};
use crate::kernels::{train_step, Engine, Variant, Workspace};
use crate::mnist_io::{Dataset, Label};
use crate::network::{Architecture, Checkpoint, CheckpointError, Classifier, Mlp, NetworkError};
use crate::rng::{Purpose, Streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub eta0: f64,
    pub eta_min: f64,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub decay: f64,
    pub max_epochs: u32,
    pub seed: u64,
    pub deform: DeformParams,
    /// When off, every epoch trains on the plain upscaled images.
    pub deformations: bool,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::mnist(&[500]).unwrap(),
            eta0: 1e-3,
            eta_min: 1e-6,
            decay: 0.993,
            max_epochs: 30,
            seed: 0,
            deform: DeformParams::default(),
            deformations: true,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.eta_min > 0.0 && self.eta_min <= self.eta0 && self.eta0.is_finite()) {
            return bad(format!("need 0 < eta_min <= eta0, got eta_min={} eta0={}", self.eta_min, self.eta0));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad(format!("decay must be in (0, 1), got {}", self.decay));
        }
        self.arch.require_mnist().map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        self.deform.validate()?;
        Ok(())
    }
}

/// `max(eta_min, eta0 * decay^epoch)`.
pub fn lr_schedule(epoch: u32, cfg: &TrainConfig) -> f64 {
    (cfg.eta0 * cfg.decay.powf(f64::from(epoch))).max(cfg.eta_min)
}

/// Order-sensitive FNV-1a hash over the bit patterns of a sample stream.
pub fn samples_checksum(samples: &[(NormImage, Label)]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    for (img, label) in samples {
        for v in img.as_slice() {
            v.to_bits().to_le_bytes().into_iter().for_each(&mut eat);
        }
        eat(label.digit());
    }
    h
}

/// Extra per-epoch evidence, recorded when instrumentation is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instrumentation {
    /// Checksum of the images the epoch was trained on.
    pub train_checksum: u64,
    /// Checksum of the images validation was computed on.
    pub validation_checksum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Completed epochs; 0 is the untrained network.
    pub epoch: u32,
    pub eta: f64,
    /// Error on the (deformed) training stream during the pass.
    pub train_error_percent: Option<f64>,
    pub validation_error_percent: f64,
    pub seconds: f64,
    pub deform_share_percent: f64,
    pub steps: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub instrumentation: Option<Instrumentation>,
}

impl std::fmt::Display for EpochStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let train = self.train_error_percent.map_or("-".to_string(), |e| format!("{e:.2}"));
        write!(
            f,
            "epoch={} eta={:.3e} train_err={} val_err={:.2} seconds={:.1} deform_share={:.1}",
            self.epoch, self.eta, train, self.validation_error_percent, self.seconds, self.deform_share_percent
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub best: Checkpoint,
    /// Epoch 0 (the initial network) first.
    pub history: Vec<EpochStats>,
    pub last: Mlp<f32>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Deform(#[from] DeformError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("training interrupted during epoch {epoch}; latest state saved to {}", saved.as_ref().map_or("<nowhere>".into(), |p| p.display().to_string()))]
    Interrupted { epoch: u32, saved: Option<PathBuf> },
}

/// Keeps the lowest validation error seen; ties keep the earlier epoch.
#[derive(Debug, Clone, Default)]
pub struct ModelSelector {
    best: Option<Checkpoint>,
}

impl ModelSelector {
    /// Returns true when the candidate became the new best.
    pub fn offer(&mut self, epoch: u32, validation_error: f64, mlp: &Mlp<f32>) -> bool {
        let better = self.best.as_ref().is_none_or(|b| validation_error < b.validation_error);
        if better {
            self.best = Some(Checkpoint { epoch, validation_error, mlp: mlp.clone() });
        }
        better
    }

    pub fn best(&self) -> Option<&Checkpoint> {
        self.best.as_ref()
    }

    pub fn into_best(self) -> Option<Checkpoint> {
        self.best
    }
}

/// Percentage of samples whose top-ranked digit is wrong. Forward passes
/// run in parallel over samples.
pub fn validate(model: &impl Classifier, samples: &[(NormImage, Label)], engine: &Engine) -> Result<f64, NetworkError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let wrong = engine.map_indexed(samples.len(), |i| {
        let (img, label) = &samples[i];
        model.rank(img.as_slice()).map(|r| r.first() != label.digit())
    });
    let mut n = 0usize;
    for w in wrong {
        n += usize::from(w?);
    }
    Ok(100.0 * n as f64 / samples.len() as f64)
}

/// Outcome of one pass over the training stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochPass {
    pub steps: u64,
    pub train_error_percent: f64,
}

/// One sequential on-line pass. Visits every sample exactly once, in a
/// shuffled order drawn from `(Shuffle, epoch)` when `shuffle` is set.
/// Checks `stop` every 256 samples.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    mlp: &mut Mlp<f32>,
    samples: &[(NormImage, Label)],
    eta: f32,
    streams: &Streams,
    epoch: u32,
    shuffle: bool,
    engine: &Engine,
    stop: Option<&AtomicBool>,
) -> Result<Option<EpochPass>, NetworkError> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if shuffle {
        order.shuffle(&mut streams.stream(Purpose::Shuffle, u64::from(epoch), 0));
    }
    let mut ws = Workspace::new(mlp);
    let mut wrong = 0u64;
    for (k, &i) in order.iter().enumerate() {
        if k % 256 == 0 && stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            return Ok(None);
        }
        let (img, label) = &samples[i];
        train_step(mlp, img.as_slice(), label.index(), eta, engine, Variant::Tiled, &mut ws)?;
        let out = ws.outputs();
        let guess = crate::network::Ranking::from_scores(out).first();
        wrong += u64::from(guess != label.digit());
    }
    let steps = order.len() as u64;
    let train_error_percent = if steps == 0 { 0.0 } else { 100.0 * wrong as f64 / steps as f64 };
    Ok(Some(EpochPass { steps, train_error_percent }))
}

/// Hooks and side outputs for [`train`].
#[derive(Default)]
pub struct TrainOptions<'a> {
    pub engine: Engine,
    /// Writes `best.dmlp` on every improvement, `latest.dmlp` on interrupt.
    pub checkpoint_dir: Option<PathBuf>,
    /// Line-delimited JSON, one record per epoch, appended.
    pub history_path: Option<PathBuf>,
    pub stop: Option<Arc<AtomicBool>>,
    /// Record sample checksums in every [`EpochStats`].
    pub instrument: bool,
    /// Deform epoch N+1 on a helper thread while epoch N trains.
    pub pipeline: bool,
    pub resume: Option<Checkpoint>,
    pub progress: Option<Box<dyn FnMut(&EpochStats) + 'a>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

fn append_history(path: &Path, stats: &EpochStats) -> Result<(), TrainError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    let line = serde_json::to_string(stats).expect("epoch stats serialize");
    writeln!(f, "{line}").map_err(io_err(path))
}

/// The full loop: deform, train, validate, keep the best.
pub fn train(cfg: &TrainConfig, train_set: &Dataset, mut options: TrainOptions<'_>) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    let engine = options.engine.clone();
    let streams = Streams::new(cfg.seed);
    if let Some(dir) = &options.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }

    let validation_set = upscale_all(train_set, &engine);
    let validation_checksum = options.instrument.then(|| samples_checksum(&validation_set));

    let (mut mlp, first_epoch) = match options.resume.take() {
        Some(ck) => {
            if ck.mlp.architecture() != &cfg.arch {
                return Err(TrainError::InvalidConfig(format!(
                    "checkpoint architecture {} does not match config {}",
                    ck.mlp.architecture(),
                    cfg.arch
                )));
            }
            (ck.mlp, ck.epoch)
        }
        None => (Mlp::init(&mut streams.stream(Purpose::Init, 0, 0), &cfg.arch), 0),
    };

    let emit = |stats: EpochStats, options: &mut TrainOptions<'_>| -> Result<EpochStats, TrainError> {
        if let Some(p) = &options.history_path {
            append_history(p, &stats)?;
        }
        if let Some(cb) = options.progress.as_mut() {
            cb(&stats);
        }
        Ok(stats)
    };

    let mut selector = ModelSelector::default();
    let mut history = Vec::new();
    let save_best = |best: &Checkpoint, options: &TrainOptions<'_>| -> Result<(), TrainError> {
        if let Some(dir) = &options.checkpoint_dir {
            best.save(&dir.join("best.dmlp"))?;
        }
        Ok(())
    };

    let t0 = Instant::now();
    let initial_err = validate(&mlp, &validation_set, &engine)?;
    selector.offer(first_epoch, initial_err, &mlp);
    save_best(selector.best().unwrap(), &options)?;
    history.push(emit(
        EpochStats {
            epoch: first_epoch,
            eta: 0.0,
            train_error_percent: None,
            validation_error_percent: initial_err,
            seconds: t0.elapsed().as_secs_f64(),
            deform_share_percent: 0.0,
            steps: 0,
            instrumentation: validation_checksum
                .map(|v| Instrumentation { train_checksum: 0, validation_checksum: v }),
        },
        &mut options,
    )?);

    let produce = |epoch: u32| -> Result<(Vec<(NormImage, Label)>, f64), DeformError> {
        let t = Instant::now();
        let s = deform_epoch(&streams, u64::from(epoch), train_set, &cfg.deform, &engine)?;
        Ok((s, t.elapsed().as_secs_f64()))
    };

    let mut pending: Option<(Vec<(NormImage, Label)>, f64)> = None;
    for epoch in first_epoch..cfg.max_epochs {
        let t_epoch = Instant::now();
        let (owned, deform_seconds) = if cfg.deformations {
            match pending.take() {
                Some(p) => (Some(p.0), p.1),
                None => {
                    let (s, d) = produce(epoch)?;
                    (Some(s), d)
                }
            }
        } else {
            (None, 0.0)
        };
        let samples: &[(NormImage, Label)] = owned.as_deref().unwrap_or(&validation_set);

        let eta = lr_schedule(epoch, cfg);
        let stop = options.stop.clone();
        let pipelined = cfg.deformations && options.pipeline && epoch + 1 < cfg.max_epochs;
        let t_train = Instant::now();
        let (pass, next) = std::thread::scope(|scope| {
            let helper = pipelined.then(|| scope.spawn(|| produce(epoch + 1)));
            let pass = train_epoch(&mut mlp, samples, eta as f32, &streams, epoch, cfg.shuffle, &engine, stop.as_deref());
            (pass, helper.map(|h| h.join().expect("deformation thread panicked")))
        });
        let train_seconds = t_train.elapsed().as_secs_f64();
        if let Some(next) = next {
            pending = Some(next?);
        }

        let Some(pass) = pass? else {
            let saved = match &options.checkpoint_dir {
                Some(dir) => {
                    let path = dir.join("latest.dmlp");
                    let err = selector.best().map_or(f64::NAN, |b| b.validation_error);
                    Checkpoint { epoch, validation_error: err, mlp: mlp.clone() }.save(&path)?;
                    Some(path)
                }
                None => None,
            };
            return Err(TrainError::Interrupted { epoch: epoch + 1, saved });
        };

        let val_err = validate(&mlp, &validation_set, &engine)?;
        let done = epoch + 1;
        if selector.offer(done, val_err, &mlp) {
            save_best(selector.best().unwrap(), &options)?;
        }
        let share = if deform_seconds + train_seconds > 0.0 {
            100.0 * deform_seconds / (deform_seconds + train_seconds)
        } else {
            0.0
        };
        let instrumentation = validation_checksum
            .map(|v| Instrumentation { train_checksum: samples_checksum(samples), validation_checksum: v });
        history.push(emit(
            EpochStats {
                epoch: done,
                eta,
                train_error_percent: Some(pass.train_error_percent),
                validation_error_percent: val_err,
                seconds: t_epoch.elapsed().as_secs_f64(),
                deform_share_percent: share,
                steps: pass.steps,
                instrumentation,
            },
            &mut options,
        )?);
    }

    Ok(TrainResult { best: selector.into_best().expect("initial network is always offered"), history, last: mlp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnist_io::{fixture, Split};
    use crate::network::Ranking;

    fn tiny_cfg(epochs: u32) -> TrainConfig {
        TrainConfig {
            arch: Architecture::mnist(&[12]).unwrap(),
            eta0: 5e-3,
            decay: 0.9,
            max_epochs: epochs,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    fn tiny_data(n: usize) -> Dataset {
        fixture::synthetic_dataset(&mut Streams::new(3).stream(Purpose::Synthetic, 0, 0), n, Split::Train)
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(0, &cfg), 1e-3);
        assert_eq!(lr_schedule(100_000, &cfg), 1e-6);
        let first = (0..).find(|&e| lr_schedule(e, &cfg) == cfg.eta_min).unwrap();
        let oracle = (1e-3f64).ln() / cfg.decay.ln();
        assert_eq!(first, oracle.ceil() as u32);
        assert!((f64::from(first) - 983.0).abs() <= 1.0);
        let mut prev = f64::INFINITY;
        for e in 0..2000 {
            let lr = lr_schedule(e, &cfg);
            assert!(lr <= prev && lr >= cfg.eta_min);
            prev = lr;
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { decay: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { eta_min: 1e-2, ..TrainConfig::default() }.validate().is_err());
        let arch = Architecture::new(vec![784, 10]).unwrap();
        assert!(TrainConfig { arch, ..TrainConfig::default() }.validate().is_err());
    }

    struct Stub(fn(&[f32]) -> u8);

    impl Classifier for Stub {
        fn input_len(&self) -> usize {
            841
        }
        fn scores(&self, input: &[f32]) -> Result<Vec<f32>, NetworkError> {
            let d = (self.0)(input);
            Ok((0..10).map(|k| if k == d { 1.0 } else { 0.0 }).collect())
        }
    }

    /// Samples whose first pixel encodes the label.
    fn coded_samples(n: usize) -> Vec<(NormImage, Label)> {
        (0..n)
            .map(|i| {
                let d = (i % 10) as u8;
                (NormImage::from_fn(|r, c| if r == 0 && c == 0 { f32::from(d) } else { -1.0 }), Label::new(d).unwrap())
            })
            .collect()
    }

    #[test]
    fn validate_stubs() {
        let samples = coded_samples(100);
        let perfect = Stub(|x| x[0] as u8);
        let constant = Stub(|_| 3);
        let e = Engine::serial();
        assert_eq!(validate(&perfect, &samples, &e).unwrap(), 0.0);
        assert_eq!(validate(&constant, &samples, &e).unwrap(), 90.0);
        assert_eq!(validate(&perfect, &samples, &Engine::with_lanes(3)).unwrap(), 0.0);
    }

    #[test]
    fn untrained_net_is_near_chance() {
        let data = upscale_all(&tiny_data(500), &Engine::serial());
        for seed in 0..3 {
            let mlp: Mlp<f32> = Mlp::init(&mut Streams::new(seed).stream(Purpose::Init, 0, 0), &Architecture::mnist(&[30]).unwrap());
            let err = validate(&mlp, &data, &Engine::serial()).unwrap();
            // Chance level for a balanced 10-class histogram is 90%.
            assert!((err - 90.0).abs() <= 10.0, "seed {seed}: {err}");
        }
    }

    #[test]
    fn selector_rules() {
        let mlp = Mlp::<f32>::zeros(&Architecture::new(vec![2, 2]).unwrap());
        let mut s = ModelSelector::default();
        for (e, v) in [5.0, 4.0, 3.0, 2.0].into_iter().enumerate() {
            assert!(s.offer(e as u32, v, &mlp));
        }
        assert_eq!(s.best().unwrap().epoch, 3);

        let mut s = ModelSelector::default();
        for (e, v) in [5.0, 2.0, 3.0, 2.0, 2.5].into_iter().enumerate() {
            s.offer(e as u32, v, &mlp);
        }
        assert_eq!(s.best().unwrap().epoch, 1);
        assert_eq!(s.best().unwrap().validation_error, 2.0);
    }

    #[test]
    fn zero_epochs_returns_initial_net() {
        let data = tiny_data(50);
        let cfg = tiny_cfg(0);
        let r = train(&cfg, &data, TrainOptions::default()).unwrap();
        let init: Mlp<f32> = Mlp::init(&mut Streams::new(cfg.seed).stream(Purpose::Init, 0, 0), &cfg.arch);
        assert_eq!(r.best.mlp, init);
        assert_eq!(r.best.epoch, 0);
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.best.validation_error, r.history[0].validation_error_percent);
    }

    #[test]
    fn zero_eta_epoch_keeps_weights() {
        let data = upscale_all(&tiny_data(40), &Engine::serial());
        let mut mlp: Mlp<f32> = Mlp::init(&mut Streams::new(1).stream(Purpose::Init, 0, 0), &Architecture::mnist(&[8]).unwrap());
        let before = mlp.clone();
        let pass = train_epoch(&mut mlp, &data, 0.0, &Streams::new(1), 0, true, &Engine::serial(), None).unwrap().unwrap();
        assert_eq!(mlp, before);
        assert_eq!(pass.steps, 40);
    }

    #[test]
    fn training_is_deterministic_and_selects_min() {
        let data = tiny_data(120);
        let cfg = tiny_cfg(3);
        let run = |lanes| {
            train(&cfg, &data, TrainOptions { engine: Engine::with_lanes(lanes), instrument: true, ..Default::default() })
                .unwrap()
        };
        let a = run(1);
        let b = run(2);
        assert_eq!(a.last, b.last);
        assert_eq!(a.best.mlp, b.best.mlp);
        assert_eq!(a.history.len(), 4);
        let min = a.history.iter().map(|h| h.validation_error_percent).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best.validation_error, min);
        let first_min = a.history.iter().find(|h| h.validation_error_percent == min).unwrap();
        assert_eq!(a.best.epoch, first_min.epoch);
        assert!(a.history[1..].iter().all(|h| h.steps == 120));

        let val = samples_checksum(&upscale_all(&data, &Engine::serial()));
        let ins: Vec<_> = a.history.iter().map(|h| h.instrumentation.unwrap()).collect();
        assert!(ins.iter().all(|i| i.validation_checksum == val));
        assert_ne!(ins[1].train_checksum, ins[2].train_checksum);
        assert_ne!(ins[2].train_checksum, ins[3].train_checksum);
        assert!(ins[1..].iter().all(|i| i.train_checksum != val));
    }

    #[test]
    fn pipelining_does_not_change_results() {
        let data = tiny_data(60);
        let cfg = tiny_cfg(3);
        let plain = train(&cfg, &data, TrainOptions::default()).unwrap();
        let piped =
            train(&cfg, &data, TrainOptions { engine: Engine::with_lanes(2), pipeline: true, ..Default::default() })
                .unwrap();
        assert_eq!(plain.last, piped.last);
    }

    #[test]
    fn checkpoints_history_and_interrupt() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_data(60);
        let cfg = tiny_cfg(2);
        let hist = dir.path().join("history.jsonl");
        let mut lines = Vec::new();
        let r = train(
            &cfg,
            &data,
            TrainOptions {
                checkpoint_dir: Some(dir.path().to_path_buf()),
                history_path: Some(hist.clone()),
                progress: Some(Box::new(|s: &EpochStats| lines.push(s.to_string()))),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("epoch=1 eta="));
        let records: Vec<EpochStats> = std::fs::read_to_string(&hist)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(records, r.history);
        let saved = Checkpoint::load(&dir.path().join("best.dmlp")).unwrap();
        assert_eq!(saved.mlp, r.best.mlp);
        assert_eq!(saved.epoch, r.best.epoch);

        // Resume continues from the saved epoch.
        let resumed = train(
            &TrainConfig { max_epochs: 3, ..cfg.clone() },
            &data,
            TrainOptions { resume: Some(saved.clone()), ..Default::default() },
        )
        .unwrap();
        assert_eq!(resumed.history[0].epoch, saved.epoch);

        let stop = Arc::new(AtomicBool::new(true));
        let err = train(
            &cfg,
            &data,
            TrainOptions { checkpoint_dir: Some(dir.path().to_path_buf()), stop: Some(stop), ..Default::default() },
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::Interrupted { saved: Some(_), .. }));
        assert!(dir.path().join("latest.dmlp").exists());
    }

    #[test]
    fn no_deformation_trains_on_upscaled_images() {
        let data = tiny_data(30);
        let cfg = TrainConfig { deformations: false, ..tiny_cfg(1) };
        let r = train(&cfg, &data, TrainOptions { instrument: true, ..Default::default() }).unwrap();
        let i = r.history[1].instrumentation.unwrap();
        assert_eq!(i.train_checksum, i.validation_checksum);
    }

    #[test]
    fn ranking_of_outputs_matches_train_error_rule() {
        assert_eq!(Ranking::from_scores(&[0.0, 0.5, 0.5]).first(), 1);
    }
}
