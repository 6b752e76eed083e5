//! Acceptance suite. Prints one line per criterion and a summary naming the
//! failed ones. With `DMLP_ACCEPTANCE_STRICT=1` any hard failure also makes
//! the process exit non-zero.
//!
//! MNIST is read from `$DMLP_DATA_DIR`, falling back to `<workspace>/data/mnist`.
//! Set `DMLP_SKIP_TRAINING=1` to skip the long training run.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use deepmlp::bench::{bench_deformation, Host, KernelBench, Op};
use deepmlp::deform::{deform_epoch, deform_image, sample_elastic_field, upscale_28_to_29, upscale_all};
use deepmlp::eval_report::{evaluate_samples, EvalReport};
use deepmlp::kernels::{
    backprop_deltas_naive, backprop_deltas_tiled, forward_naive, forward_tiled, gradient_check, update_weights_naive,
    update_weights_tiled,
};
use deepmlp::mnist_io::{data_dir_from_env, fixture, load_mnist};
use deepmlp::network::{scaled_tanh_derivative, Mlp};
use deepmlp::rng::{uniform, Purpose, StreamRng};
use deepmlp::trainer::{samples_checksum, ModelSelector, TrainOptions, TrainResult};
use deepmlp::*;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
    /// Soft criterion: reported, never fails the suite.
    Soft(bool, String),
}

fn rng(seed: u64) -> StreamRng {
    Streams::new(seed).stream(Purpose::Synthetic, 0, 0)
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn data_dir() -> PathBuf {
    data_dir_from_env().unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn lanes() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

// --- 1 ---------------------------------------------------------------------

fn truncated_millions(n: usize) -> String {
    let hundredths = n / 10_000;
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let rows: [(&[usize], &str); 5] = [
        (&[1000, 500], "1.34"),
        (&[1500, 1000, 500], "3.26"),
        (&[2000, 1500, 1000, 500], "6.69"),
        (&[2500, 2000, 1500, 1000, 500], "12.11"),
        (&[1000; 9], "8.86"),
    ];
    let mut shown = Vec::new();
    let mut ok = true;
    for (hidden, expected) in rows {
        let arch = Architecture::mnist(hidden).unwrap();
        // Independent count: (fan_in + 1) * fan_out per layer.
        let oracle: usize = arch.sizes().windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        let got = truncated_millions(arch.count_weights());
        ok &= arch.count_weights() == oracle && got == expected;
        shown.push(got);
    }
    let secs = t.elapsed().as_secs_f64();
    check(ok && secs < 1.0, format!("weights [millions] {} ({secs:.3} s)", shown.join(" ")))
}

// --- 2 ---------------------------------------------------------------------

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let archs: [&[usize]; 6] =
        [&[29, 20, 10], &[29, 40, 10], &[29, 15, 15, 10], &[64, 40, 10], &[841, 5, 10], &[29, 30, 20, 10]];
    let mut worst = 0.0f64;
    let mut sizes = Vec::new();
    for (k, sizes_k) in archs.iter().enumerate() {
        let arch = Architecture::new(sizes_k.to_vec()).unwrap();
        assert!(arch.count_weights() <= 5000);
        let mut r = rng(1000 + k as u64);
        let mlp: Mlp<f64> = Mlp::init(&mut r, &arch);
        let x: Vec<f64> = (0..arch.input_size()).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
        let target = k % arch.output_size();
        let g = gradient_check(&mlp, &x, target).unwrap();
        worst = worst.max(g.max_rel_error);
        sizes.push(arch.count_weights().to_string());
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst < 1e-6 && secs < 30.0,
        format!("{} nets ({} weights), max rel error {worst:.2e} ({secs:.1} s)", archs.len(), sizes.join("/")),
    )
}

// --- 3 ---------------------------------------------------------------------

/// `max_k |t_k - n_k| / max_k s_k`, where `s` bounds the magnitude of the
/// summed terms. For a plain vector `s = |n|`; for a reduction it is the
/// sum of absolute terms, the usual scale for matrix-vector products, which
/// keeps cancellation in a single output from dominating.
fn rel_scaled(t: &[f64], n: &[f64], scale: &[f64]) -> f64 {
    let num = t.iter().zip(n).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = scale.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f64s<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn layer_pair<T: Real>(fan_in: usize, fan_out: usize, seed: u64) -> (Layer<T>, Vec<T>, Vec<T>, Vec<T>) {
    let mut r = rng(seed);
    let mut v = |n: usize, s: f64| -> Vec<T> { (0..n).map(|_| T::cast(uniform(&mut r, -s, s))).collect() };
    let w = v((fan_in + 1) * fan_out, 0.05);
    let x = v(fan_in, 1.0);
    let d = v(fan_out, 1.0);
    let a = v(fan_in, 2.0);
    (Layer::from_weights(fan_in, fan_out, w).unwrap(), x, d, a)
}

/// Max relative errors (forward, backward, update) of tiled vs naive.
fn kernel_errors<T: Real>(fan_in: usize, fan_out: usize, engine: &Engine, seed: u64) -> [f64; 3] {
    let (layer, x, d, a) = layer_pair::<T>(fan_in, fan_out, seed);
    let w = |j: usize, i: usize| layer.weight(j, i).as_f64().abs();
    let fwd_scale: Vec<f64> = (0..fan_out)
        .map(|j| (0..fan_in).map(|i| w(j, i) * x[i].as_f64().abs()).sum::<f64>() + layer.bias(j).as_f64().abs())
        .collect();
    let deriv = |v: T| scaled_tanh_derivative(v.as_f64()).abs();
    let bwd_scale: Vec<f64> = (0..fan_in)
        .map(|i| deriv(a[i]) * (0..fan_out).map(|j| w(j, i) * d[j].as_f64().abs()).sum::<f64>())
        .collect();
    let (an, yn) = forward_naive(&layer, &x).unwrap();
    let (at, yt) = forward_tiled(&layer, &x, engine).unwrap();
    let out_scale: Vec<f64> = fwd_scale.iter().map(|s| s * network::TANH_A * network::TANH_B).collect();
    let fwd = rel_scaled(&f64s(&at), &f64s(&an), &fwd_scale).max(rel_scaled(&f64s(&yt), &f64s(&yn), &out_scale));
    let bwd = rel_scaled(
        &f64s(&backprop_deltas_tiled(&layer, &d, &a, engine).unwrap()),
        &f64s(&backprop_deltas_naive(&layer, &d, &a).unwrap()),
        &bwd_scale,
    );
    let (mut un, mut ut) = (layer.clone(), layer);
    let eta = T::cast(0.01);
    update_weights_naive(&mut un, &d, &x, eta).unwrap();
    update_weights_tiled(&mut ut, &d, &x, eta, engine).unwrap();
    let un = f64s(un.weights());
    [fwd, bwd, rel_scaled(&f64s(ut.weights()), &un, &un)]
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let grid = [1, 10, 31, 32, 33, 64, 500, 841, 1000];
    let engines = [Engine::serial(), Engine::with_lanes(4)];
    let (mut w32, mut w64) = ([0.0f64; 3], [0.0f64; 3]);
    let mut cases = 0;
    for (a, &fan_in) in grid.iter().enumerate() {
        for (b, &fan_out) in grid.iter().enumerate() {
            let seed = (a * 16 + b) as u64;
            for engine in &engines {
                let e32 = kernel_errors::<f32>(fan_in, fan_out, engine, seed);
                let e64 = kernel_errors::<f64>(fan_in, fan_out, engine, seed);
                for k in 0..3 {
                    w32[k] = w32[k].max(e32[k]);
                    w64[k] = w64[k].max(e64[k]);
                }
                cases += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = w32.iter().all(|&e| e <= 1e-5) && w64.iter().all(|&e| e <= 1e-12) && secs < 60.0;
    check(
        ok,
        format!(
            "{cases} layer/engine cases; f32 max rel err fwd {:.1e} bwd {:.1e} upd {:.1e}; f64 {:.1e} {:.1e} {:.1e} ({secs:.1} s)",
            w32[0], w32[1], w32[2], w64[0], w64[1], w64[2]
        ),
    )
}

// --- 4 ---------------------------------------------------------------------

fn criterion_4(images: &Dataset) -> Verdict {
    let t = Instant::now();
    let n = images.len().min(600);
    let subset = images.truncated(n);
    let identity = DeformParams::identity();
    let mut ok_identity = true;
    for (i, (img, label)) in subset.iter().enumerate() {
        let out = deform_image(&mut rng(i as u64), img, label, &identity);
        ok_identity &= out == upscale_28_to_29(img);
    }

    let mut ok_alpha = true;
    let mut r = rng(77);
    for _ in 0..500 {
        let alpha = uniform(&mut r, 0.0, 60.0);
        let sigma = uniform(&mut r, 3.0, 8.0);
        let f = sample_elastic_field(&mut r, sigma, alpha, 21).unwrap();
        ok_alpha &= f.max_abs() <= alpha as f32;
    }

    let params = DeformParams::default();
    let streams = Streams::new(5);
    let base = deform_epoch(&streams, 0, &subset, &params, &Engine::serial()).unwrap();
    let ok_range = base.iter().all(|(img, _)| img.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
    let ok_repro = [2, 4].iter().all(|&l| deform_epoch(&streams, 0, &subset, &params, &Engine::with_lanes(l)).unwrap() == base)
        && deform_epoch(&streams, 0, &subset, &params, &Engine::serial()).unwrap() == base;
    let secs = t.elapsed().as_secs_f64();
    check(
        ok_identity && ok_alpha && ok_range && ok_repro && secs < 30.0,
        format!(
            "identity {ok_identity}, |field| <= alpha {ok_alpha}, range [-1,1] {ok_range}, lanes 1/2/4 bitwise {ok_repro} on {n} images ({secs:.1} s)"
        ),
    )
}

// --- 5 ---------------------------------------------------------------------

struct Trained {
    deformed: TrainResult,
    plain: TrainResult,
    test_deformed: EvalReport,
    test_plain: EvalReport,
    validation_checksum: u64,
}

fn criterion_5(mnist: Option<&(Dataset, Dataset)>, trained: &mut Option<Trained>) -> Verdict {
    let Some((train_set, test_set)) = mnist else {
        return Verdict::Skip(format!("MNIST not found in {}", data_dir().display()));
    };
    if std::env::var_os("DMLP_SKIP_TRAINING").is_some() {
        return Verdict::Skip("DMLP_SKIP_TRAINING is set".into());
    }
    let t = Instant::now();
    let engine = Engine::with_lanes(lanes());
    let cfg = TrainConfig {
        arch: Architecture::mnist(&[500]).unwrap(),
        decay: 0.93,
        max_epochs: 30,
        seed: 1,
        ..TrainConfig::default()
    };
    let run = |cfg: &TrainConfig, name: &'static str| {
        let opts = TrainOptions {
            engine: engine.clone(),
            instrument: true,
            pipeline: engine.is_parallel(),
            progress: Some(Box::new(move |s: &trainer::EpochStats| println!("    {name} {s}"))),
            ..Default::default()
        };
        trainer::train(cfg, train_set, opts).unwrap()
    };
    let deformed = run(&cfg, "deformed");
    let plain = run(&TrainConfig { deformations: false, ..cfg.clone() }, "plain");
    let test_samples = upscale_all(test_set, &engine);
    let test_deformed = evaluate_samples(&deformed.best.mlp, &test_samples, &engine).unwrap();
    let test_plain = evaluate_samples(&plain.best.mlp, &test_samples, &engine).unwrap();
    let (ed, ep) = (test_deformed.error_percent, test_plain.error_percent);
    let detail = format!(
        "841-500-10, 30 epochs, decay 0.93: test error deformed {ed:.2}% (best epoch {}), plain {ep:.2}% (best epoch {}); need <= 2.00% and deformed <= plain + 0.30 ({:.0} s)",
        deformed.best.epoch,
        plain.best.epoch,
        t.elapsed().as_secs_f64()
    );
    *trained = Some(Trained {
        validation_checksum: samples_checksum(&upscale_all(train_set, &Engine::serial())),
        deformed,
        plain,
        test_deformed,
        test_plain,
    });
    check(ed <= 2.0 && ed <= ep + 0.3, detail)
}

// --- 6 ---------------------------------------------------------------------

fn criterion_6() -> Verdict {
    let host = Host::detect();
    let arch = Architecture::mnist(&[1000, 500]).unwrap();
    let want = 4;
    let used = if host.logical_cpus >= want { want } else { host.logical_cpus };
    let reports = KernelBench::new(arch.clone(), 200, used).run(Op::TrainStep);
    let speedup = reports[1].speedup;
    let deform = bench_deformation(2000, used, None);
    let detail = format!(
        "train_step {arch}: tiled x{} lanes {:.2e} upd/s vs naive-serial {:.2e} upd/s, speedup {speedup:.2}; deform {:.0} img/s; host {host}",
        reports[1].lanes, reports[1].throughput, reports[0].throughput, deform.throughput
    );
    if host.logical_cpus < want {
        Verdict::Skip(format!("soft, needs >= {want} cores but host has {}: {detail}", host.logical_cpus))
    } else {
        Verdict::Soft(speedup >= 3.0, format!("need speedup >= 3: {detail}"))
    }
}

// --- 7 ---------------------------------------------------------------------

fn selection_sound(r: &TrainResult) -> bool {
    let min = r.history.iter().map(|h| h.validation_error_percent).fold(f64::INFINITY, f64::min);
    let first = r.history.iter().find(|h| h.validation_error_percent == min).unwrap();
    r.best.validation_error == min && r.best.epoch == first.epoch
}

fn validation_undeformed(r: &TrainResult, expected: u64) -> bool {
    let ins: Vec<_> = r.history.iter().map(|h| h.instrumentation.unwrap()).collect();
    ins.iter().all(|i| i.validation_checksum == expected)
}

fn criterion_7(trained: Option<&Trained>) -> Verdict {
    // Tie rule on a stub sequence.
    let stub = Mlp::<f32>::zeros(&Architecture::new(vec![2, 2]).unwrap());
    let mut sel = ModelSelector::default();
    for (e, v) in [4.0, 3.0, 3.0, 3.5, 3.0].into_iter().enumerate() {
        sel.offer(e as u32, v, &stub);
    }
    let ties = sel.best().unwrap().epoch == 1;

    // A short instrumented run on synthetic digits.
    let data = fixture::synthetic_dataset(&mut rng(9), 300, Split::Train);
    let cfg = TrainConfig {
        arch: Architecture::mnist(&[20]).unwrap(),
        eta0: 5e-3,
        decay: 0.9,
        max_epochs: 4,
        seed: 3,
        ..TrainConfig::default()
    };
    let r = trainer::train(&cfg, &data, TrainOptions { instrument: true, ..Default::default() }).unwrap();
    let val = samples_checksum(&upscale_all(&data, &Engine::serial()));
    let ins: Vec<_> = r.history.iter().map(|h| h.instrumentation.unwrap()).collect();
    let fresh = ins[1].train_checksum != ins[2].train_checksum
        && ins[2].train_checksum != ins[3].train_checksum
        && ins[1].train_checksum != ins[3].train_checksum;
    let not_deformed_val = ins[1..].iter().all(|i| i.train_checksum != val);
    let mut ok = ties && selection_sound(&r) && validation_undeformed(&r, val) && fresh && not_deformed_val;
    let mut detail = format!(
        "ties->earliest {ties}, synthetic run best epoch {} = min {:.2}%, validation on un-deformed images {}, fresh deformations {fresh}",
        r.best.epoch,
        r.best.validation_error,
        validation_undeformed(&r, val) && not_deformed_val
    );
    if let Some(t) = trained {
        let real = selection_sound(&t.deformed)
            && selection_sound(&t.plain)
            && validation_undeformed(&t.deformed, t.validation_checksum)
            && validation_undeformed(&t.plain, t.validation_checksum);
        ok &= real;
        detail.push_str(&format!("; MNIST runs sound {real}"));
    }
    check(ok, detail)
}

// --- 8 ---------------------------------------------------------------------

fn second_guess_sound(r: &EvalReport) -> bool {
    r.misclassified.iter().all(|m| m.first != m.truth && m.second != m.first)
        && r.second_guess_correct <= r.errors()
        && r.second_guess_correct == r.misclassified.iter().filter(|m| m.second == m.truth).count()
}

fn criterion_8(trained: Option<&Trained>, test: &Dataset) -> Verdict {
    let samples = upscale_all(test, &Engine::serial());
    let mut reports = Vec::new();
    for seed in 0..3 {
        let mlp: Mlp<f32> = Mlp::init(&mut rng(seed), &Architecture::mnist(&[30]).unwrap());
        reports.push(evaluate_samples(&mlp, &samples, &Engine::serial()).unwrap());
    }
    let mut detail = format!("{} random-net evaluations on {} images", reports.len(), samples.len());
    if let Some(t) = trained {
        for (name, r) in [("deformed", &t.test_deformed), ("plain", &t.test_plain)] {
            detail.push_str(&format!(
                "; {name}: {} errors, second guess correct for {}",
                r.errors(),
                r.second_guess_correct
            ));
            reports.push(r.clone());
        }
    }
    check(reports.iter().all(second_guess_sound), detail)
}

fn main() {
    let mnist = load_mnist(&data_dir()).ok();
    let images = match &mnist {
        Some((train, _)) => train.clone(),
        None => fixture::synthetic_dataset(&mut rng(1), 600, Split::Train),
    };
    let test = match &mnist {
        Some((_, test)) => test.clone(),
        None => fixture::synthetic_dataset(&mut rng(2), 500, Split::Test),
    };
    println!("acceptance: data {}", if mnist.is_some() { "MNIST" } else { "synthetic (MNIST not found)" });

    let mut trained = None;
    let mut failed = Vec::new();
    let mut run = |id: u32, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed.push(id);
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
            Verdict::Soft(true, d) => ("PASS (soft)", d),
            Verdict::Soft(false, d) => ("FAIL (soft)", d),
        };
        println!("criterion {id} [{tag}] {name}: {detail}");
    };

    run(1, "parameter counts", &mut criterion_1);
    run(2, "gradient correctness", &mut criterion_2);
    run(3, "kernel equivalence", &mut criterion_3);
    run(4, "deformation identity and bounds", &mut || criterion_4(&images));
    run(5, "desk-scale training", &mut || criterion_5(mnist.as_ref(), &mut trained));
    run(6, "tiled-parallel throughput", &mut criterion_6);
    run(7, "validation protocol", &mut || criterion_7(trained.as_ref()));
    run(8, "second-guess analysis", &mut || criterion_8(trained.as_ref(), &test));

    if !failed.is_empty() {
        let ids: Vec<String> = failed.iter().map(u32::to_string).collect();
        println!("acceptance: {} criteria failed: {}", failed.len(), ids.join(", "));
        if std::env::var_os("DMLP_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
        return;
    }
    println!("acceptance: all hard criteria passed");
}
