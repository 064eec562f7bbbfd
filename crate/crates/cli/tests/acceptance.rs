//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 3-5 need the UJIIndoorLoc files `trainingData.csv` and
//! `validationData.csv` in the directory named by `UJIINDOORLOC_DIR`. Without
//! them those criteria print FAIL with the reason but do not fail the run;
//! every criterion that could be evaluated and failed makes the run exit 1.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wifiloc_core::data::{
    generate_synthetic_floor_dataset, parse_ujiindoorloc, Dataset, Label, LabelCodec, SyntheticFloorConfig,
};
use wifiloc_core::eval::{default_weight_pairs, evaluate_model, run_trials, sweep_class_weights, DEFAULT_SWEEP_SEEDS};
use wifiloc_core::models::{
    load_model, save_model, train_model, validation_split, ClassWeights, ModelMode, PipelineConfig, TrainedModel,
};
use wifiloc_core::nn::{loss_value, Activation, LayerSpec, LossKind, Matrix, Network, NetworkSpec};
use wifiloc_service::{scan_from_record, serve_on, AppState, LoadedModel};

enum Outcome {
    Pass(String),
    Fail(String),
    /// Could not be evaluated in this environment.
    Unavailable(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

// ---------------------------------------------------------------------------
// 1. Gradients

const H: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

fn random_case(seed: u64, loss: LossKind) -> (Network, Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = [
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Identity,
    ];
    let input_dim = rng.random_range(1..=10);
    let depth = rng.random_range(1..=5);
    let mut layers: Vec<LayerSpec> = (0..depth - 1)
        .map(|_| LayerSpec::new(rng.random_range(1..=10), hidden[rng.random_range(0..4)]))
        .collect();
    let width = rng.random_range(2..=10);
    let out = match loss {
        LossKind::Mse => Activation::Sigmoid,
        LossKind::WeightedBce => Activation::Sigmoid,
        LossKind::CategoricalCe => Activation::Softmax,
    };
    layers.push(LayerSpec::new(width, out));
    let output_weights =
        (loss == LossKind::WeightedBce).then(|| (0..width).map(|_| rng.random_range(0.5..10.0)).collect());
    let net = Network::new(NetworkSpec {
        input_dim,
        layers,
        loss,
        output_weights,
        seed,
    })
    .unwrap();
    // Non-zero biases keep ReLU pre-activations off the kink, where the
    // central difference is one-sided.
    let biases = net
        .biases()
        .iter()
        .map(|b| b.iter().map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    let net = Network::from_parts(net.spec().clone(), net.weights().to_vec(), biases).unwrap();
    let batch = rng.random_range(1..=4);
    let x = Matrix::from_vec(
        batch,
        input_dim,
        (0..batch * input_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let mut t = Matrix::zeros(batch, width);
    for r in 0..batch {
        match loss {
            LossKind::Mse => (0..width).for_each(|c| t.set(r, c, rng.random_range(0.0..1.0))),
            LossKind::WeightedBce => (0..width).for_each(|c| t.set(r, c, f64::from(rng.random_bool(0.5)))),
            LossKind::CategoricalCe => t.set(r, rng.random_range(0..width), 1.0),
        }
    }
    (net, x, t)
}

fn max_fd_error(net: &Network, x: &Matrix, t: &Matrix) -> f64 {
    let loss_at = |n: &Network| {
        let out = n.forward(x).unwrap();
        loss_value(n.spec().loss, n.spec().output_weights.as_deref(), &out, t).unwrap()
    };
    let grads = net.gradients(x, t).unwrap();
    let mut worst = 0.0_f64;
    for layer in 0..net.layer_count() {
        for bias in [false, true] {
            let count = if bias {
                net.biases()[layer].len()
            } else {
                net.weights()[layer].as_slice().len()
            };
            for i in 0..count {
                let (mut plus, mut minus) = (net.clone(), net.clone());
                plus.perturb(layer, i, bias, H);
                minus.perturb(layer, i, bias, -H);
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * H);
                let analytic = if bias {
                    grads.biases[layer][i]
                } else {
                    grads.weights[layer].as_slice()[i]
                };
                worst = worst.max(rel_err(analytic, numeric));
            }
        }
    }
    worst
}

fn gradients() -> Outcome {
    let mut worst = 0.0_f64;
    for loss in [LossKind::Mse, LossKind::WeightedBce, LossKind::CategoricalCe] {
        for seed in 0..20 {
            let (net, x, t) = random_case(1000 + seed, loss);
            worst = worst.max(max_fd_error(&net, &x, &t));
        }
    }
    check(
        worst < 1e-4,
        format!("60 networks, max relative error {worst:.2e} (< 1e-4)"),
    )
}

// ---------------------------------------------------------------------------
// 2. Codec

fn bits(v: &[f64]) -> String {
    let s: String = v.iter().map(|&b| if b == 1.0 { '1' } else { '0' }).collect();
    format!("{}|{}", &s[..3], &s[3..])
}

fn codec() -> Outcome {
    let codec = LabelCodec::hierarchical(3, 5).unwrap();
    let mut round_trips = 0;
    for b in 0..3 {
        for f in 0..5 {
            let v = codec.encode_hierarchical(b, f).unwrap();
            if codec.decode_argmax_split(&v).unwrap() == (b, f) {
                round_trips += 1;
            }
        }
    }
    let example = bits(&codec.encode_hierarchical(2, 1).unwrap());
    let decoded = codec.decode_argmax_split(&[0., 0., 1., 0., 1., 0., 0., 0.]).unwrap();
    check(
        round_trips == 15 && example == "001|01000" && decoded == (2, 1),
        format!("{round_trips}/15 round trips, (2,1) -> {example}, 001|01000 -> {decoded:?}"),
    )
}

// ---------------------------------------------------------------------------
// 3-5. UJIIndoorLoc

struct Uji {
    train: Dataset,
    validation: Dataset,
}

fn uji() -> Result<Uji, String> {
    let dir = std::env::var_os("UJIINDOORLOC_DIR").ok_or("UJIINDOORLOC_DIR is not set")?;
    let dir = PathBuf::from(dir);
    let read = |name: &str| parse_ujiindoorloc(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    let train = read("trainingData.csv")?;
    let validation = read("validationData.csv")?;
    let validation = if validation.ap_order() == train.ap_order() {
        validation
    } else {
        validation.aligned_to(train.ap_order()).0
    };
    Ok(Uji { train, validation })
}

fn table_reproduction(data: &Result<Uji, String>) -> Outcome {
    let d = match data {
        Ok(d) => d,
        Err(e) => return Outcome::Unavailable(e.clone()),
    };
    let mut cfg = PipelineConfig::hierarchical(1);
    cfg.classifier.class_weights = ClassWeights::new(10.0, 1.0);
    let r = run_trials(
        ModelMode::Hierarchical,
        &d.train,
        Some(&d.validation),
        &cfg,
        &DEFAULT_SWEEP_SEEDS,
        jobs(),
    )
    .unwrap();
    let (b, f, o) = (r.building().unwrap().mean, r.floor().unwrap().mean, r.overall().mean);
    check(
        b >= 0.985 && f >= 0.90 && o >= 0.89,
        format!("weights 10:1, 3 seeds: building {b:.4} (>= 0.985), floor {f:.4} (>= 0.90), overall {o:.4} (>= 0.89)"),
    )
}

fn sweep_trend(data: &Result<Uji, String>) -> Outcome {
    let d = match data {
        Ok(d) => d,
        Err(e) => return Outcome::Unavailable(e.clone()),
    };
    let cfg = PipelineConfig::hierarchical(1);
    let result = sweep_class_weights(
        &d.train,
        Some(&d.validation),
        &cfg,
        &default_weight_pairs(),
        &DEFAULT_SWEEP_SEEDS,
        jobs(),
    )
    .unwrap();
    let summary = result.summary();
    let ok = summary
        .iter()
        .all(|s| s.building.mean >= s.floor.mean && s.building.mean >= 0.985);
    let detail = summary
        .iter()
        .map(|s| {
            format!(
                "{}:{} b {:.4} f {:.4}",
                s.building_weight, s.floor_weight, s.building.mean, s.floor.mean
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    check(
        ok,
        format!("building >= floor and building >= 0.985 for every pair: {detail}"),
    )
}

fn flattened(data: &Result<Uji, String>) -> Outcome {
    let d = match data {
        Ok(d) => d,
        Err(e) => return Outcome::Unavailable(e.clone()),
    };
    let cfg = PipelineConfig::flattened(1);
    let r = run_trials(
        ModelMode::Flattened,
        &d.train,
        Some(&d.validation),
        &cfg,
        &DEFAULT_SWEEP_SEEDS,
        jobs(),
    )
    .unwrap();
    let o = r.overall().mean;
    check(o >= 0.88, format!("13-class building-floor accuracy {o:.4} (>= 0.88)"))
}

// ---------------------------------------------------------------------------
// 6. Floor level

struct FloorRun {
    dataset: Dataset,
    model: TrainedModel,
    held_out: Dataset,
}

fn floor_run() -> FloorRun {
    let dataset = generate_synthetic_floor_dataset(&SyntheticFloorConfig::seven_rooms(600, 6.0, 1)).unwrap();
    let cfg = PipelineConfig::floor_level(1);
    let model = train_model(ModelMode::FloorLevel, &dataset, &cfg).unwrap();
    let held_out = validation_split(&dataset, &cfg).unwrap().1;
    FloorRun {
        dataset,
        model,
        held_out,
    }
}

fn nearest_neighbor(train: &Matrix, labels: &[Label], query: &[f64]) -> Label {
    let mut best = (f64::INFINITY, 0);
    for (i, row) in train.iter_rows().enumerate() {
        let d: f64 = row.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    labels[best.1].clone()
}

fn floor_level(run: &FloorRun) -> Outcome {
    let cfg = &run.model.config;
    let train = validation_split(&run.dataset, cfg).unwrap().0;
    let acc = evaluate_model(&run.model, &run.held_out).unwrap().overall_accuracy;
    let tx = cfg.normalizer.normalize(&train).unwrap();
    let hx = cfg.normalizer.normalize(&run.held_out).unwrap();
    let labels = train.labels();
    let preds = run.model.predict_dataset(&run.held_out).unwrap();
    let agree = hx
        .iter_rows()
        .zip(&preds)
        .filter(|(row, p)| nearest_neighbor(&tx, &labels, row) == p.label)
        .count() as f64
        / preds.len() as f64;
    check(
        acc >= 0.95 && agree >= 0.90,
        format!(
            "{} records, sigma 6 dB: held-out accuracy {acc:.4} (>= 0.95), nearest-neighbor agreement {agree:.4} (>= 0.90); \
             published-dataset comparison not applicable",
            run.dataset.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Online/offline equivalence

fn location_json(label: &Label) -> Value {
    match label {
        Label::Location(id) => json!({ "location_id": id }),
        Label::BuildingFloor { building, floor } => json!({ "building_id": building, "floor_id": floor }),
    }
}

fn online_offline(run: &FloorRun) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let model = run.model.clone();
    let records: Vec<_> = run
        .dataset
        .records()
        .iter()
        .step_by(run.dataset.len() / 500)
        .take(500)
        .cloned()
        .collect();
    let expected: Vec<Value> = records
        .iter()
        .map(|r| location_json(&model.predict(r).unwrap().label))
        .collect();
    let bodies: Vec<Value> = records
        .iter()
        .map(|r| json!({ "scans": scan_from_record(r, &model.ap_order) }))
        .collect();
    let store =
        wifiloc_core::data::FingerprintStore::open_or_create(dir.path().join("s.csv"), &model.ap_order).unwrap();
    let state = Arc::new(AppState::new(Some(LoadedModel::new(model).unwrap()), store));

    let rt = tokio::runtime::Runtime::new().unwrap();
    let (sequential, concurrent) = rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}/localize", listener.local_addr().unwrap());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(serve_on(listener, state, async {
            let _ = rx.await;
        }));
        let client = reqwest::Client::new();
        let call = |body: Value| {
            let req = client.post(&base).json(&body);
            async move { req.send().await.unwrap().json::<Value>().await.unwrap()["location"].clone() }
        };
        let mut sequential = 0;
        for (body, want) in bodies.iter().zip(&expected) {
            sequential += usize::from(call(body.clone()).await == *want);
        }
        let mut concurrent = 0;
        for wave in bodies.chunks(100).zip(expected.chunks(100)) {
            let tasks: Vec<_> = wave.0.iter().map(|b| tokio::spawn(call(b.clone()))).collect();
            for (t, want) in tasks.into_iter().zip(wave.1) {
                concurrent += usize::from(t.await.unwrap() == *want);
            }
        }
        tx.send(()).unwrap();
        server.await.unwrap().unwrap();
        (sequential, concurrent)
    });
    check(
        sequential == 500 && concurrent == 500,
        format!("{sequential}/500 sequential and {concurrent}/500 at 100-way concurrency match offline labels"),
    )
}

// ---------------------------------------------------------------------------
// 8. Determinism

fn wifiloc(args: &[&str], dir: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_wifiloc"))
        .args(args)
        .current_dir(dir)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism(run: &FloorRun) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = |out: &str| {
        wifiloc(
            &[
                "train",
                "--mode",
                "floor-level",
                "--data",
                "rooms.csv",
                "--seed",
                "7",
                "--out",
                out,
            ],
            d,
        )
    };
    let ran = wifiloc(
        &[
            "synth",
            "--out",
            "rooms.csv",
            "--samples",
            "600",
            "--sigma",
            "6",
            "--seed",
            "1",
        ],
        d,
    ) && train("a.json")
        && train("b.json");
    if !ran {
        return Outcome::Fail("wifiloc synth/train did not succeed".into());
    }
    let identical = std::fs::read(d.join("a.json")).unwrap() == std::fs::read(d.join("b.json")).unwrap();

    save_model(&run.model, d.join("c.json")).unwrap();
    let loaded = load_model(d.join("c.json")).unwrap();
    let before = run.model.predict_dataset(&run.dataset).unwrap();
    let after = loaded.predict_dataset(&run.dataset).unwrap();
    let bit_exact = before.iter().zip(&after).all(|(a, b)| {
        a.label == b.label
            && a.scores
                .iter()
                .map(|s| s.to_bits())
                .eq(b.scores.iter().map(|s| s.to_bits()))
    });
    check(
        identical && bit_exact,
        format!(
            "repeated CLI training byte-identical: {identical}; save/load predictions bit-exact on {} records: {bit_exact}",
            after.len()
        ),
    )
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let mut failed = false;
    let mut report = |n: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed = true;
                ("FAIL", d)
            }
            Outcome::Unavailable(d) => ("FAIL", format!("not evaluated: {d}")),
        };
        println!("{tag} criterion {n} ({name}): {detail} [{secs:.1}s]");
    };

    report(1, "gradient correctness", &mut gradients);
    report(2, "codec exactness", &mut codec);
    let data = uji();
    report(3, "building/floor reproduction", &mut || table_reproduction(&data));
    report(4, "class-weight trend", &mut || sweep_trend(&data));
    report(5, "flattened baseline", &mut || flattened(&data));
    let run = std::cell::OnceCell::new();
    report(6, "floor-level pipeline", &mut || {
        floor_level(run.get_or_init(floor_run))
    });
    let run = run.get_or_init(floor_run);
    report(7, "online/offline equivalence", &mut || online_offline(run));
    report(8, "determinism", &mut || determinism(run));

    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
