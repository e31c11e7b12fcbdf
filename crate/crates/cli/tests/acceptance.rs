//! End-to-end acceptance checks. Runs every criterion in order, prints one
//! PASS/FAIL line per criterion and exits non-zero if any failed.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p bitcover --test acceptance -- 1 9 10`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bitcover_core::bitstream::extract_from_bytes;
use bitcover_core::dtw::{dtw_distance, Cost, DtwConfig};
use bitcover_core::model::{cross_entropy, Mode, ModelParams, TensorKind};
use bitcover_core::{extract_frame_sizes, FrameType, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};

type Criterion = (usize, &'static str, fn() -> String);

const CRITERIA: &[Criterion] = &[
    (1, "parser matches analyzer dumps on encoder fixtures", parser_fixtures),
    (2, "parser survives 10,000 random inputs", parser_fuzz),
    (3, "backward pass matches central differences", gradient_check),
    (4, "zeroed residual branch reproduces the shortcut exactly", residual_identity),
    (5, "synthetic presets classified at clip level", synthetic_classification),
    (6, "accuracy peaks at the training bitrate", bitrate_mismatch),
    (7, "accuracy grows with window length", input_size_trend),
    (8, "inter-class KLD dwarfs intra-class KLD", kld_separability),
    (9, "DTW equals brute-force path enumeration", dtw_oracle),
    (10, "DTW pair cost grows quadratically", dtw_scaling),
    (11, "neural classifier beats DTW on short clips", baseline_gap),
    (12, "reduced model runs 1000x faster than real time", throughput),
    (13, "pipeline reruns are byte-identical", determinism),
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for &(id, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(check);
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL {id:>2} {name}: {msg} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---- helpers ----

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn fixtures_dir() -> PathBuf {
    repo_path("crates/core/tests/fixtures")
}

fn config(name: &str) -> String {
    repo_path(&format!("configs/{name}.toml")).to_string_lossy().into_owned()
}

fn p(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

/// Runs the CLI and panics with its stderr if it fails.
fn bitcover(args: &[String]) {
    let out = Command::new(env!("CARGO_BIN_EXE_bitcover"))
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .expect("spawning bitcover");
    if !out.status.success() {
        panic!(
            "bitcover {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

macro_rules! run {
    ($($arg:expr),* $(,)?) => {
        bitcover(&[$(String::from($arg)),*])
    };
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

fn f64_at(v: &Value, pointer: &str) -> f64 {
    v.pointer(pointer).and_then(Value::as_f64).unwrap_or_else(|| panic!("missing {pointer}"))
}

fn f64s_at(v: &Value, pointer: &str) -> Vec<f64> {
    v.pointer(pointer)
        .and_then(Value::as_array)
        .unwrap_or_else(|| panic!("missing {pointer}"))
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn class_count(report: &Value) -> usize {
    report.pointer("/windows/class_names").and_then(Value::as_array).unwrap().len()
}

/// synth, dataset, train and eval with one config; returns the eval report.
fn train_and_eval(cfg: &str, dir: &Path, extra_global: &[String], dataset_args: &[&str]) -> Value {
    let clips = dir.join("clips");
    let data = dir.join("data");
    let model = dir.join("model.bcm");
    let report = dir.join("eval.json");
    let global = |cmd: &str| -> Vec<String> {
        let mut v = vec!["--config".to_string(), cfg.to_string()];
        v.extend_from_slice(extra_global);
        v.push(cmd.to_string());
        v
    };
    let with = |mut v: Vec<String>, rest: &[&str]| {
        v.extend(rest.iter().map(|s| s.to_string()));
        v
    };
    if !clips.join("manifest.csv").exists() {
        bitcover(&with(global("synth"), &["--out", &p(&clips)]));
    }
    let mut ds = with(global("dataset"), &["--manifest", &p(&clips.join("manifest.csv")), "--out", &p(&data)]);
    ds.extend(dataset_args.iter().map(|s| s.to_string()));
    bitcover(&ds);
    bitcover(&with(
        global("train"),
        &["--data", &p(&data.join("train.bct")), "--out", &p(&model), "--summary", &p(&dir.join("train.json"))],
    ));
    bitcover(&with(
        global("eval"),
        &["--model", &p(&model), "--data", &p(&data.join("test.bct")), "--out", &p(&report)],
    ));
    read_json(&report)
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

// ---- 1: parser fixtures ----

fn parser_fixtures() -> String {
    let start = Instant::now();
    let mut names = Vec::new();
    let mut frames = 0;
    for entry in fs::read_dir(fixtures_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("h264") {
            continue;
        }
        let series = extract_frame_sizes(&path).unwrap();
        let (sizes, types) = read_dump(&path.with_extension("csv"));
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        assert!(sizes.len() >= 25, "{name}: only {} frames in the dump", sizes.len());
        assert_eq!(series.values, sizes, "{name}: sizes differ from the dump");
        assert_eq!(series.frame_types, types, "{name}: picture types differ from the dump");
        let file_bits = 8 * fs::metadata(&path).unwrap().len();
        assert_eq!(series.total_bits(), file_bits, "{name}: sizes do not sum to the file length");
        frames += sizes.len();
        names.push(name);
    }
    let elapsed = start.elapsed();
    assert!(names.len() >= 3, "only {} fixtures", names.len());
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    names.sort();
    format!("{} fixtures ({}), {frames} frames, {:.0} ms", names.len(), names.join(", "), elapsed.as_secs_f64() * 1e3)
}

/// Reads a `frame_index,size_bytes,picture_type` dump as sizes in bits.
fn read_dump(path: &Path) -> (Vec<u64>, Vec<FrameType>) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let bytes: u64 = cols[1].parse().unwrap();
            let ty = FrameType::from_char(cols[2].chars().next().unwrap()).unwrap();
            (bytes * 8, ty)
        })
        .unzip()
}

// ---- 2: parser fuzz ----

fn parser_fuzz() -> String {
    let mut seeds = Vec::new();
    for entry in fs::read_dir(fixtures_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) == Some("h264") {
            seeds.push(fs::read(path).unwrap());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let start = Instant::now();
    let (mut ok, mut typed_err) = (0, 0);
    let quiet = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut crashes = Vec::new();
    for case in 0..10_000 {
        let len = rng.random_range(0..=64 * 1024);
        let bytes: Vec<u8> = match case % 3 {
            0 => (0..len).map(|_| rng.random()).collect(),
            // Random bytes with start codes sprinkled in so headers get parsed.
            1 => {
                let mut b: Vec<u8> = (0..len).map(|_| rng.random()).collect();
                let codes = rng.random_range(0..64);
                for _ in 0..codes {
                    if b.len() < 5 {
                        break;
                    }
                    let at = rng.random_range(0..b.len() - 4);
                    b[at..at + 4].copy_from_slice(&[0, 0, 1, rng.random()]);
                }
                b
            }
            // Mutated real streams: truncation and byte flips.
            _ => {
                let src = &seeds[rng.random_range(0..seeds.len())];
                let mut b = src[..rng.random_range(0..=src.len())].to_vec();
                let flips = rng.random_range(0..32);
                for _ in 0..flips {
                    if b.is_empty() {
                        break;
                    }
                    let at = rng.random_range(0..b.len());
                    b[at] = rng.random();
                }
                b.truncate(64 * 1024);
                b
            }
        };
        match panic::catch_unwind(AssertUnwindSafe(|| extract_from_bytes(&bytes, "fuzz"))) {
            Ok(Ok(ex)) => {
                if ex.series.total_bits() != 8 * bytes.len() as u64 && !ex.series.is_empty() {
                    crashes.push(format!("case {case}: sizes do not cover the stream"));
                }
                ok += 1;
            }
            Ok(Err(_)) => typed_err += 1,
            Err(_) => crashes.push(format!("case {case}: panicked on {} bytes", bytes.len())),
        }
    }
    panic::set_hook(quiet);
    let elapsed = start.elapsed();
    assert!(crashes.is_empty(), "{} failures, first: {}", crashes.len(), crashes[0]);
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    format!("{ok} parsed, {typed_err} typed errors, 0 panics in {:.1}s", elapsed.as_secs_f64())
}

// ---- 3: gradient check ----

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn gradient_check() -> String {
    let start = Instant::now();
    let (b, t, k) = (4, 16, 3);
    let cfg = ModelConfig::new(t, 1, k).with_filters([4, 8, 8]).with_seed(31);
    let mut params = ModelParams::<f64>::init(&cfg);
    // Move BN affine terms and conv biases off their initial values.
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    params.visit_mut(|spec, tensor| {
        for v in tensor.iter_mut() {
            match spec.kind {
                TensorKind::Gamma => *v = rng.random_range(0.5..1.5),
                TensorKind::Beta | TensorKind::Bias => *v = rng.random_range(-0.3..0.3),
                _ => {}
            }
        }
    });
    let x: Vec<f64> = (0..b * t).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut y = vec![0.0; b * k];
    for (i, c) in [0, 2, 1, 2].into_iter().enumerate() {
        y[i * k + c] = 1.0;
    }
    let loss = |q: &ModelParams<f64>| {
        let fwd = q.forward(&x, b, Mode::Train).unwrap();
        cross_entropy(&fwd.probs, &y, k)
    };
    let fwd = params.forward(&x, b, Mode::Train).unwrap();
    let analytic = params.backward(&fwd, &y);
    let specs: Vec<_> = params.tensor_specs().into_iter().filter(|s| s.kind.trainable()).collect();
    assert_eq!(specs.len(), analytic.tensors.len());

    // Small enough that no difference straddles a ReLU kink at these inputs.
    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for (ti, spec) in specs.iter().enumerate() {
        let mut numeric = vec![0.0; spec.len()];
        for (j, g) in numeric.iter_mut().enumerate() {
            let shifted = |delta: f64| {
                let mut q = params.clone();
                let mut seen = 0;
                q.visit_mut(|s, tensor| {
                    if s.kind.trainable() {
                        if seen == ti {
                            tensor[j] += delta;
                        }
                        seen += 1;
                    }
                });
                loss(&q)
            };
            *g = (shifted(h) - shifted(-h)) / (2.0 * h);
        }
        let a = &analytic.tensors[ti];
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        // Conv biases ahead of train-mode BN have an exactly zero gradient.
        // Their differences are pure rounding noise (~1e-11), which the
        // floor keeps from being divided by ~1e-16.
        let rel = norm(&diff) / norm(a).max(norm(&numeric)).max(1e-6);
        if rel > worst.0 {
            worst = (rel, spec.name.clone());
        }
        checked += spec.len();
    }
    let elapsed = start.elapsed();
    assert!(worst.0 < 1e-3, "{}: relative error {:e}", worst.1, worst.0);
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    format!(
        "{} tensors, {checked} elements, max relative error {:.2e} ({})",
        specs.len(),
        worst.0,
        worst.1
    )
}

// ---- 4: residual identity ----

fn residual_identity() -> String {
    let mut compared = 0;
    for seed in 0..8u64 {
        let cfg = ModelConfig::new(64, 1, 4).with_filters([8, 16, 16]).with_seed(seed);
        let mut params = ModelParams::<f32>::init(&cfg);
        for block in &mut params.blocks {
            for layer in &mut block.layers {
                layer.conv.weight.fill(0.0);
                layer.conv.bias.fill(0.0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x: Vec<f32> = (0..3 * 64).map(|_| rng.random_range(-3.0..3.0)).collect();
        let fwd = params.forward(&x, 3, Mode::Eval).unwrap();
        // Block 2 keeps its channel count, so its shortcut is the identity
        // and with F(x) = 0 the block returns relu(x) = x bit for bit.
        let input = fwd.block_output(1);
        let output = fwd.block_output(2);
        assert_eq!(input.len(), output.len());
        for (i, (a, b)) in input.iter().zip(output).enumerate() {
            assert_eq!(a.to_bits(), b.to_bits(), "seed {seed}, element {i}: {a} vs {b}");
        }
        assert!(input.iter().any(|&v| v != 0.0), "seed {seed}: shortcut carried no signal");
        compared += input.len();
    }
    format!("{compared} activations over 8 seeds, 0 ulp deviation")
}

// ---- 5: synthetic classification ----

fn synthetic_classification() -> String {
    let dir = tempdir();
    let start = Instant::now();
    let report = train_and_eval(&config("classify"), dir.path(), &[], &[]);
    let elapsed = start.elapsed();
    let clip_acc = f64_at(&report, "/clips/accuracy");
    let precision = f64s_at(&report, "/clips/precision");
    let recall = f64s_at(&report, "/clips/recall");
    let total = f64_at(&report, "/clips/total");
    assert_eq!(class_count(&report), 4);
    assert!(clip_acc >= 0.95, "clip accuracy {clip_acc:.3}");
    assert!(precision.iter().all(|&v| v >= 0.90), "clip precision {}", fmt(&precision));
    assert!(recall.iter().all(|&v| v >= 0.90), "clip recall {}", fmt(&recall));
    assert!(elapsed < Duration::from_secs(15 * 60), "took {elapsed:?}");
    format!(
        "{total} test clips, accuracy {clip_acc:.3} (windows {:.3}), precision {}, recall {}",
        f64_at(&report, "/windows/accuracy"),
        fmt(&precision),
        fmt(&recall)
    )
}

// ---- 6: bitrate mismatch ----

fn bitrate_mismatch() -> String {
    let cfg = config("bitrate");
    let b = 7200.0;
    let mut lines = Vec::new();
    for seed in [1u64, 2, 3] {
        let dir = tempdir();
        let global = vec!["--seed".to_string(), seed.to_string()];
        let on = train_and_eval(&cfg, dir.path(), &global, &[]);
        let chance = 1.0 / class_count(&on) as f64;
        let on_acc = f64_at(&on, "/windows/accuracy");
        let mut off = BTreeMap::new();
        for m in ["0.5", "1.5", "0.33"] {
            let target = m.parse::<f64>().unwrap() * b;
            let clips = dir.path().join(format!("clips_{m}"));
            let data = dir.path().join(format!("data_{m}"));
            let report = dir.path().join(format!("eval_{m}.json"));
            let seed_s = seed.to_string();
            run!("--config", &cfg, "--seed", &seed_s, "synth", "--out", p(&clips), "--target-bitrate", target.to_string());
            run!(
                "--config",
                &cfg,
                "--seed",
                &seed_s,
                "dataset",
                "--manifest",
                p(&clips.join("manifest.csv")),
                "--out",
                p(&data)
            );
            run!(
                "--config",
                &cfg,
                "eval",
                "--model",
                p(&dir.path().join("model.bcm")),
                "--data",
                p(&data.join("test.bct")),
                "--out",
                p(&report)
            );
            off.insert(m, f64_at(&read_json(&report), "/windows/accuracy"));
        }
        let line = format!(
            "seed {seed}: b {on_acc:.3}, 0.5b {:.3}, 1.5b {:.3}, 0.33b {:.3}",
            off["0.5"], off["1.5"], off["0.33"]
        );
        assert!(on_acc > off["0.5"] && on_acc > off["1.5"], "on-target not best, {line}");
        assert!(off["0.33"] < 1.5 * chance, "0.33b above 1.5x chance ({:.3}), {line}", 1.5 * chance);
        lines.push(line);
    }
    lines.join("; ")
}

// ---- 7: input size ----

/// Ranks with ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn input_size_trend() -> String {
    let cfg = config("input_size");
    let dir = tempdir();
    let clips = dir.path().join("clips");
    run!("--config", &cfg, "synth", "--out", p(&clips));
    let sizes = [120usize, 240, 480, 960];
    let mut acc = Vec::new();
    for t in sizes {
        let sub = dir.path().join(format!("t{t}"));
        fs::create_dir_all(&sub).unwrap();
        fs::create_dir_all(sub.join("clips")).unwrap();
        fs::copy(clips.join("manifest.csv"), sub.join("clips/manifest.csv")).unwrap();
        for entry in fs::read_dir(&clips).unwrap() {
            let path = entry.unwrap().path();
            fs::copy(&path, sub.join("clips").join(path.file_name().unwrap())).unwrap();
        }
        let report = train_and_eval(&cfg, &sub, &[], &["--window", &t.to_string()]);
        acc.push(f64_at(&report, "/windows/accuracy"));
    }
    let t: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let rho = spearman(&t, &acc);
    assert!(acc[0] <= acc[3], "T=120 {:.3} above T=960 {:.3}", acc[0], acc[3]);
    assert!(rho >= 0.6, "spearman {rho:.2}, accuracy {}", fmt(&acc));
    format!("accuracy at T={sizes:?}: {}, spearman {rho:.2}", fmt(&acc))
}

// ---- 8: KLD separability ----

fn kld_separability() -> String {
    let cfg = config("kld");
    let dir = tempdir();
    let clips = dir.path().join("clips");
    let out = dir.path().join("stats.json");
    run!("--config", &cfg, "synth", "--out", p(&clips));
    run!("--config", &cfg, "stats", "--manifest", p(&clips.join("manifest.csv")), "--out", p(&out));
    let stats = read_json(&out);
    let ratio = f64_at(&stats, "/report/separability_ratio");
    assert!(ratio >= 10.0, "separability ratio {ratio:.2}");
    format!(
        "min inter-class {:.4} / max intra-class {:.4} = {ratio:.1}",
        f64_at(&stats, "/report/offdiag_min"),
        f64_at(&stats, "/report/diag_max")
    )
}

// ---- 9: DTW oracle ----

/// Minimum cost over every monotone warping path, by explicit enumeration.
fn brute_force(a: &[f64], b: &[f64], cost: Cost) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, cost: Cost, best: &mut f64) {
        let d = a[i] - b[j];
        let acc = acc + if cost == Cost::Abs { d.abs() } else { d * d };
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, cost, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, cost, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, cost, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, cost, &mut best);
    best
}

fn dtw_oracle() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD7);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let cost = if case % 2 == 0 { Cost::Abs } else { Cost::Squared };
        let cfg = DtwConfig { window_radius: None, cost };
        let a: Vec<f64> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(-10.0..10.0)).collect();
        let dp = dtw_distance(&a, &b, &cfg).unwrap();
        let oracle = brute_force(&a, &b, cost);
        let err = (dp - oracle).abs() / oracle.max(1.0);
        assert!(err <= 1e-12, "case {case}: dp {dp} vs brute force {oracle} for {a:?} / {b:?}");
        worst = worst.max(err);
    }
    for case in 0..1000 {
        let cfg = DtwConfig { window_radius: None, cost: if case % 2 == 0 { Cost::Abs } else { Cost::Squared } };
        let x: Vec<f64> = (0..rng.random_range(1..=256)).map(|_| rng.random_range(-1e3..1e3)).collect();
        let d = dtw_distance(&x, &x, &cfg).unwrap();
        assert_eq!(d, 0.0, "case {case}: DTW(x, x) = {d}");
    }
    format!("1000 pairs of length <= 6 within {worst:.1e} of enumeration; DTW(x,x) = 0 on 1000 vectors")
}

// ---- 10: DTW scaling ----

fn dtw_scaling() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5CA1);
    let cfg = DtwConfig::default();
    let mut time_pair = |n: usize| {
        let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        dtw_distance(&a, &b, &cfg).unwrap();
        (0..7)
            .map(|_| {
                let start = Instant::now();
                std::hint::black_box(dtw_distance(std::hint::black_box(&a), &b, &cfg).unwrap());
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let t1 = time_pair(2048);
    let t2 = time_pair(4096);
    let ratio = t2 / t1;
    assert!((3.0..=5.5).contains(&ratio), "ratio {ratio:.2} ({t1:.4}s -> {t2:.4}s)");
    format!("{:.1} ms -> {:.1} ms, ratio {ratio:.2}", t1 * 1e3, t2 * 1e3)
}

// ---- 11: baseline gap ----

fn baseline_gap() -> String {
    let cfg = config("dtw_baseline");
    let dir = tempdir();
    let nn = train_and_eval(&cfg, dir.path(), &[], &[]);
    let data = dir.path().join("data");
    let dtw_out = dir.path().join("dtw.json");
    let bench_out = dir.path().join("bench.json");
    run!(
        "--config",
        &cfg,
        "dtw",
        "--train",
        p(&data.join("train.bct")),
        "--test",
        p(&data.join("test.bct")),
        "--max-queries",
        "400",
        "--out",
        p(&dtw_out)
    );
    let dtw = read_json(&dtw_out);

    // Every clip is one window, so clip votes identify the queried windows.
    let nn_votes: BTreeMap<String, (u64, u64)> = nn["votes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| (v["source_id"].as_str().unwrap().to_string(), (v["predicted"].as_u64().unwrap(), v["truth"].as_u64().unwrap())))
        .collect();
    let dtw_votes = dtw["votes"].as_array().unwrap();
    let mut nn_correct = 0;
    for v in dtw_votes {
        let (pred, truth) = nn_votes[v["source_id"].as_str().unwrap()];
        assert_eq!(truth, v["truth"].as_u64().unwrap());
        nn_correct += (pred == truth) as usize;
    }
    let queries = dtw_votes.len();
    let nn_acc = nn_correct as f64 / queries as f64;
    let dtw_acc = f64_at(&dtw, "/windows/accuracy");

    run!(
        "--config",
        &cfg,
        "bench",
        "--model",
        p(&dir.path().join("model.bcm")),
        "--data",
        p(&data.join("test.bct")),
        "--with-dtw",
        "--dtw-reference",
        p(&data.join("train.bct")),
        "--dtw-queries",
        "100",
        "--out",
        p(&bench_out)
    );
    let bench = read_json(&bench_out);
    let speed = f64_at(&bench, "/speed_ratio");
    let detail = format!(
        "{queries} queries against {} references: neural {nn_acc:.3} (all test windows {:.3}), DTW {dtw_acc:.3}, speed ratio {speed:.0}",
        f64_at(&bench, "/dtw/reference_windows"),
        f64_at(&nn, "/windows/accuracy")
    );
    assert!(queries >= 100, "{detail}");
    assert!(nn_acc - dtw_acc >= 0.10, "gap below 10 points: {detail}");
    assert!(speed >= 1e3, "speed ratio below 1000: {detail}");
    detail
}

// ---- 12: throughput ----

fn throughput() -> String {
    let cfg = config("throughput");
    let dir = tempdir();
    let clips = dir.path().join("clips");
    let data = dir.path().join("data");
    let model = dir.path().join("model.bcm");
    let out = dir.path().join("bench.json");
    run!("--config", &cfg, "synth", "--out", p(&clips));
    run!("--config", &cfg, "dataset", "--manifest", p(&clips.join("manifest.csv")), "--out", p(&data), "--no-split");
    run!("--config", &cfg, "train", "--data", p(&data.join("all.bct")), "--out", p(&model), "--summary", p(&dir.path().join("train.json")));
    run!("--config", &cfg, "bench", "--model", p(&model), "--data", p(&data.join("all.bct")), "--out", p(&out));
    let bench = read_json(&out);
    let windows = f64_at(&bench, "/neural/windows");
    let frames = f64_at(&bench, "/neural/frames");
    let rtf = f64_at(&bench, "/neural/real_time_factor");
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let detail = format!(
        "{windows} windows, {frames} frames in {:.2}s, {:.0} frames/s, {rtf:.0}x real time at 30 fps on {cores} core(s)",
        f64_at(&bench, "/neural/seconds"),
        f64_at(&bench, "/neural/frames_per_second")
    );
    assert_eq!(windows, 100.0, "{detail}");
    assert_eq!(frames, 300_000.0, "{detail}");
    assert!(rtf >= 1000.0, "real-time factor below 1000: {detail}");
    detail
}

// ---- 13: determinism ----

fn hash_tree(root: &Path, skip: &[&str]) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            if path.is_dir() {
                stack.push(path);
            } else if !skip.contains(&rel.as_str()) {
                let digest = Sha256::digest(fs::read(&path).unwrap());
                out.insert(rel, digest.iter().map(|b| format!("{b:02x}")).collect());
            }
        }
    }
    out
}

fn pipeline(dir: &Path) {
    let cfg = config("determinism");
    let d = |rel: &str| p(&dir.join(rel));
    let g = ["--config", cfg.as_str(), "--threads", "1"];
    let cmd = |rest: &[&str]| {
        let args: Vec<String> = g.iter().chain(rest).map(|s| s.to_string()).collect();
        bitcover(&args);
    };
    let fixtures = p(&fixtures_dir());
    cmd(&["extract", &fixtures, "--out", &d("series.jsonl"), "--summary", &d("extract_summary.json")]);
    fs::create_dir_all(dir.join("csv")).unwrap();
    cmd(&["extract", &fixtures, "--format", "csv", "--out", &d("csv"), "--summary", &d("extract_csv_summary.json")]);
    cmd(&["synth", "--out", &d("clips")]);
    cmd(&["dataset", "--manifest", &d("clips/manifest.csv"), "--out", &d("data")]);
    cmd(&["stats", "--manifest", &d("clips/manifest.csv"), "--out", &d("stats.json")]);
    cmd(&[
        "train",
        "--data",
        &d("data/train.bct"),
        "--out",
        &d("model.bcm"),
        "--history",
        &d("history.jsonl"),
        "--summary",
        &d("train_summary.json"),
    ]);
    cmd(&["eval", "--model", &d("model.bcm"), "--data", &d("data/test.bct"), "--out", &d("eval.json")]);
    cmd(&["dtw", "--train", &d("data/train.bct"), "--test", &d("data/test.bct"), "--out", &d("dtw.json")]);
}

fn determinism() -> String {
    // Summaries carry wall-clock timings; everything else must match.
    let timed = ["extract_summary.json", "extract_csv_summary.json", "train_summary.json"];
    let runs: Vec<BTreeMap<String, String>> = (0..2)
        .map(|_| {
            let dir = tempdir();
            pipeline(dir.path());
            hash_tree(dir.path(), &timed)
        })
        .collect();
    let (a, b) = (&runs[0], &runs[1]);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>(), "different artifact sets");
    let differing: Vec<&String> = a.keys().filter(|k| a[*k] != b[*k]).collect();
    assert!(differing.is_empty(), "artifacts differ: {differing:?}");
    for required in ["series.jsonl", "clips/manifest.csv", "data/train.bct", "data/test.bct", "model.bcm", "history.jsonl", "eval.json", "dtw.json", "stats.json"] {
        assert!(a.contains_key(required), "missing artifact {required}");
    }
    format!("{} artifacts hashed, all identical across two single-threaded runs", a.len())
}
