use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use wifiloc_core::data::{generate_synthetic_floor_dataset, load_store, Dataset, Label, SyntheticFloorConfig};
use wifiloc_core::models::{save_model, train_floor_level, PipelineConfig, TrainedModel};
use wifiloc_service::{scan_from_record, serve_on, AppState, ServiceConfig, StartupError};

fn fixture() -> &'static (TrainedModel, Dataset) {
    static FIXTURE: OnceLock<(TrainedModel, Dataset)> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let ds = generate_synthetic_floor_dataset(&SyntheticFloorConfig::seven_rooms(60, 4.0, 3)).unwrap();
        let mut cfg = PipelineConfig::floor_level(3);
        cfg.sae.epochs = 3;
        cfg.classifier.epochs = 10;
        (train_floor_level(&ds, &cfg).unwrap(), ds)
    })
}

struct Server {
    base: String,
    store: PathBuf,
    stop: Option<oneshot::Sender<()>>,
    handle: tokio::task::JoinHandle<Result<(), StartupError>>,
    _dir: tempfile::TempDir,
}

impl Server {
    async fn start(with_model: bool) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let model_path = dir.path().join("model.json");
        if with_model {
            save_model(&fixture().0, &model_path).unwrap();
        }
        let cfg = ServiceConfig {
            bind: "127.0.0.1:0".parse().unwrap(),
            model_path: with_model.then(|| model_path.clone()),
            store_path: dir.path().join("store.csv"),
            collection_only: !with_model,
        };
        let state = Arc::new(AppState::from_config(&cfg).unwrap());
        let listener = TcpListener::bind(cfg.bind).await.unwrap();
        let addr: SocketAddr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel::<()>();
        let handle = tokio::spawn(serve_on(listener, state, async {
            let _ = rx.await;
        }));
        Server {
            base: format!("http://{addr}"),
            store: cfg.store_path,
            stop: Some(tx),
            handle,
            _dir: dir,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn shutdown(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.handle.await.unwrap().unwrap();
    }
}

fn expected_json(label: &Label) -> Value {
    match label {
        Label::Location(id) => json!({ "location_id": id }),
        Label::BuildingFloor { building, floor } => json!({ "building_id": building, "floor_id": floor }),
    }
}

fn localize_body(model: &TrainedModel, i: usize) -> Value {
    let ds = &fixture().1;
    json!({ "scans": scan_from_record(&ds.records()[i], &model.ap_order) })
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn health_reports_mode_and_version() {
    let server = Server::start(true).await;
    let body: Value = reqwest::get(server.url("/health")).await.unwrap().json().await.unwrap();
    assert_eq!(body["status"], "ok");
    assert_eq!(body["mode"], "floor_level");
    assert_eq!(body["model_version"], fixture().0.model_version().unwrap());
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn localize_matches_offline_prediction() {
    let server = Server::start(true).await;
    let (model, ds) = fixture();
    let client = reqwest::Client::new();
    for i in (0..ds.len()).step_by(23) {
        let offline = model.predict(&ds.records()[i]).unwrap();
        let resp = client
            .post(server.url("/localize"))
            .json(&localize_body(model, i))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 200);
        let body: Value = resp.json().await.unwrap();
        assert_eq!(body["location"], expected_json(&offline.label));
        assert_eq!(body["dropped_aps"], 0);
        let names = model.codec.output_names();
        for (name, score) in names.iter().zip(&offline.scores) {
            assert_eq!(body["scores"][name].as_f64().unwrap(), *score);
        }
        let again: Value = client
            .post(server.url("/localize"))
            .json(&localize_body(model, i))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(again, body);
    }
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn localize_error_statuses() {
    let server = Server::start(true).await;
    let client = reqwest::Client::new();
    let post = |body: String| {
        client
            .post(server.url("/localize"))
            .header("content-type", "application/json")
            .body(body)
            .send()
    };
    assert_eq!(post("{not json".into()).await.unwrap().status(), 400);
    assert_eq!(post(r#"{"scans":[{"ap":"x"}]}"#.into()).await.unwrap().status(), 400);
    assert_eq!(
        post(r#"{"scans":[{"ap":"ghost","rss":-50}]}"#.into())
            .await
            .unwrap()
            .status(),
        422
    );
    assert_eq!(post(r#"{"scans":[]}"#.into()).await.unwrap().status(), 422);
    let known = &fixture().0.ap_order[0];
    let partial = json!({ "scans": [{ "ap": known, "rss": -60.0 }, { "ap": "ghost", "rss": -50.0 }] });
    let resp = client
        .post(server.url("/localize"))
        .json(&partial)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["dropped_aps"], 1);
    let locations = fixture().0.codec.output_names();
    assert!(locations.contains(&body["location"]["location_id"].as_str().unwrap().to_string()));
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn hundred_concurrent_requests_match_sequential_predictions() {
    let server = Server::start(true).await;
    let (model, ds) = fixture();
    let client = reqwest::Client::new();
    let tasks: Vec<_> = (0..100)
        .map(|k| {
            let i = (k * 4) % ds.len();
            let req = client.post(server.url("/localize")).json(&localize_body(model, i));
            tokio::spawn(async move { (i, req.send().await.unwrap().json::<Value>().await.unwrap()) })
        })
        .collect();
    for t in tasks {
        let (i, body) = t.await.unwrap();
        let offline = model.predict(&ds.records()[i]).unwrap();
        assert_eq!(body["location"], expected_json(&offline.label));
    }
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn collection_only_mode_refuses_localize_but_stores() {
    let server = Server::start(false).await;
    let client = reqwest::Client::new();
    let health: Value = reqwest::get(server.url("/health")).await.unwrap().json().await.unwrap();
    assert_eq!(health["mode"], Value::Null);
    let resp = client
        .post(server.url("/localize"))
        .json(&json!({ "scans": [{ "ap": "a", "rss": -50.0 }] }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 503);
    let resp = client
        .post(server.url("/fingerprints"))
        .json(&json!({ "label": "EB306", "device": "pixel-7", "timestamp": 1700000000, "scans": [{ "ap": "a", "rss": -57.0 }] }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 201);
    assert_eq!(resp.json::<Value>().await.unwrap(), json!({ "stored": true }));
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn submitted_fingerprints_are_exported_and_extend_the_header() {
    let server = Server::start(false).await;
    let client = reqwest::Client::new();
    let submit = |body: Value| client.post(server.url("/fingerprints")).json(&body).send();
    let first = json!({ "label": "EB306", "device": "pixel-7", "timestamp": 1700000000,
                        "scans": [{ "ap": "aa:01", "rss": -57.0 }, { "ap": "aa:02", "rss": -81.5 }] });
    let second = json!({ "label": "EE401", "timestamp": 1700000001,
                         "scans": [{ "ap": "aa:03", "rss": -40.0 }, { "ap": "aa:01", "rss": -66.0 }] });
    assert_eq!(submit(first).await.unwrap().status(), 201);
    assert_eq!(submit(second).await.unwrap().status(), 201);
    assert_eq!(submit(json!({ "label": "", "scans": [] })).await.unwrap().status(), 400);

    let resp = client.get(server.url("/fingerprints/export")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    assert!(resp
        .headers()
        .get("content-disposition")
        .unwrap()
        .to_str()
        .unwrap()
        .starts_with("attachment"));
    let text = resp.text().await.unwrap();
    assert_eq!(
        text,
        "location_id,device_id,timestamp,aa:01,aa:02,aa:03\n\
         EB306,pixel-7,1700000000,-57,-81.5,\n\
         EE401,,1700000001,-66,,-40\n"
    );
    let ds = load_store(&server.store).unwrap();
    assert_eq!(ds.len(), 2);
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_submissions_are_all_stored() {
    let server = Server::start(true).await;
    let client = reqwest::Client::new();
    let aps = fixture().0.ap_order.clone();
    let tasks: Vec<_> = (0..64)
        .map(|k| {
            let body = json!({
                "label": format!("L{}", k % 5),
                "scans": [{ "ap": aps[k % aps.len()], "rss": -50.0 - k as f64 / 4.0 },
                          { "ap": format!("new-{}", k % 3), "rss": -70.0 }],
            });
            let req = client.post(server.url("/fingerprints")).json(&body);
            tokio::spawn(async move { req.send().await.unwrap().status() })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), 201);
    }
    let ds = load_store(&server.store).unwrap();
    assert_eq!(ds.len(), 64);
    assert_eq!(ds.ap_order().len(), aps.len() + 3);
    server.shutdown().await;
}

#[test]
fn startup_requires_a_readable_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = |model: Option<&Path>, collection_only| ServiceConfig {
        bind: ServiceConfig::DEFAULT_BIND.parse().unwrap(),
        model_path: model.map(Path::to_path_buf),
        store_path: dir.path().join("s.csv"),
        collection_only,
    };
    assert!(matches!(
        AppState::from_config(&cfg(None, false)),
        Err(StartupError::MissingModel)
    ));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format\":").unwrap();
    assert!(matches!(
        AppState::from_config(&cfg(Some(&bad), false)),
        Err(StartupError::Model { .. })
    ));
    let missing = dir.path().join("missing.json");
    assert!(AppState::from_config(&cfg(Some(&missing), true))
        .unwrap()
        .model()
        .is_none());
}
