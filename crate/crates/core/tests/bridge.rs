use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use geopanel::assembly::assemble;
use geopanel::error::ForecastError;
use geopanel::features::spatial::SpatialContext;
use geopanel::features::{FeatureContext, Featurizer};
use geopanel::forecast::bridge::{BridgeSession, ExternalBackend, FitPredictPayload};
use geopanel::forecast::{predict, recursive_forecast, Backend, BackendSpec, PipelineConfig};
use geopanel::ingest::compute_distances;
use geopanel::model::{FeatureTable, RowKey};
use geopanel::synthetic::{generate, SyntheticSpec};
use geopanel::{Error, ErrorKind};

fn python() -> Option<&'static str> {
    let ok = Command::new("python3").arg("--version").output().map(|o| o.status.success()).unwrap_or(false);
    if ok {
        Some("python3")
    } else {
        eprintln!("python3 not found; skipping bridge test");
        None
    }
}

fn mock(mode: &str) -> Option<Vec<String>> {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mock_bridge.py");
    Some(vec![python()?.into(), script.display().to_string(), mode.into()])
}

fn backend(mode: &str, timeout: Duration) -> Option<ExternalBackend> {
    Some(ExternalBackend { command: mock(mode)?, timeout })
}

fn small_table() -> FeatureTable {
    let rows: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64, 1.0]).collect();
    let keys = (0..6).map(|t| RowKey { station: "A".into(), t }).collect();
    FeatureTable::new(vec!["x".into(), "one".into()], keys, rows, Some(vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]), 1).unwrap()
}

fn predict_with(mode: &str, timeout: Duration) -> Option<Result<Vec<f64>, ForecastError>> {
    let table = small_table();
    let state = match backend(mode, timeout)?.fit(&table, 0) {
        Ok(s) => s,
        Err(e) => return Some(Err(e)),
    };
    Some(predict(state.as_ref(), &table.without_target()))
}

#[test]
fn handshake_reports_the_mock() {
    let Some(command) = mock("ok") else { return };
    let session = BridgeSession::spawn(&command, Duration::from_secs(10)).unwrap();
    assert_eq!(session.hello["name"], "mock");
    assert_eq!(session.hello["mode"], "ok");
}

#[test]
fn predictions_come_back_in_row_order() {
    let Some(command) = mock("ok") else { return };
    let mut session = BridgeSession::spawn(&command, Duration::from_secs(10)).unwrap();
    let payload = FitPredictPayload {
        feature_names: vec!["a".into()],
        train_x: vec![vec![0.0], vec![1.0]],
        train_y: vec![2.0, 4.0],
        test_x: vec![vec![5.0], vec![6.0], vec![7.0]],
    };
    assert_eq!(session.fit_predict(&payload).unwrap(), vec![3.0; 3]);
    // a second request on the same session still works
    assert_eq!(session.fit_predict(&payload).unwrap().len(), 3);
}

#[test]
fn long_session_answers_every_request_in_order() {
    use rand::{Rng, SeedableRng};
    let Some(command) = mock("noisy") else { return };
    let mut session = BridgeSession::spawn(&command, Duration::from_secs(10)).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let p = rng.gen_range(1..5);
        let n_train = rng.gen_range(1..20);
        let n_test = rng.gen_range(1..8);
        let row = |rng: &mut rand_chacha::ChaCha8Rng| (0..p).map(|_| rng.gen_range(-1e3..1e3)).collect::<Vec<f64>>();
        let payload = FitPredictPayload {
            feature_names: (0..p).map(|c| format!("f{c}")).collect(),
            train_x: (0..n_train).map(|_| row(&mut rng)).collect(),
            train_y: (0..n_train).map(|_| f64::from(rng.gen_range(-1000..1000)) / 8.0).collect(),
            test_x: (0..n_test).map(|_| row(&mut rng)).collect(),
        };
        let expected = payload.train_y.iter().sum::<f64>() / n_train as f64;
        let got = session.fit_predict(&payload).unwrap();
        assert_eq!(got.len(), n_test);
        assert!(got.iter().all(|v| (v - expected).abs() <= 1e-12 * (1.0 + expected.abs())));
    }
}

#[test]
fn error_status_surfaces_the_message() {
    let Some(result) = predict_with("error", Duration::from_secs(10)) else { return };
    let err = result.unwrap_err();
    assert!(matches!(err, ForecastError::Backend(_)));
    assert!(err.to_string().contains("model exploded"), "{err}");
    assert_eq!(Error::from(err).kind(), ErrorKind::Backend);
}

#[test]
fn slow_bridge_times_out() {
    let Some(result) = predict_with("sleep", Duration::from_secs(1)) else { return };
    let err = result.unwrap_err();
    assert!(matches!(err, ForecastError::Timeout(1)), "{err:?}");
    assert_eq!(Error::from(err).kind(), ErrorKind::Backend);
}

#[test]
fn protocol_violations_are_backend_errors() {
    for (mode, needle) in [
        ("garbage", "malformed"),
        ("short", "5 predictions for 6 rows"),
        ("wrong_id", "answered id"),
        ("die", "closed"),
    ] {
        let Some(result) = predict_with(mode, Duration::from_secs(10)) else { return };
        let err = result.unwrap_err();
        assert!(matches!(err, ForecastError::Backend(_)), "{mode}: {err:?}");
        assert!(err.to_string().contains(needle), "{mode}: {err}");
    }
}

#[test]
fn missing_program_fails_cleanly() {
    let backend = ExternalBackend {
        command: vec!["/nonexistent/bridge-binary".into()],
        timeout: Duration::from_secs(1),
    };
    let err = backend.fit(&small_table(), 0).err().unwrap();
    assert!(err.to_string().contains("cannot launch"), "{err}");
}

#[test]
fn spec_builds_an_external_backend_from_a_command_line() {
    let spec: BackendSpec =
        serde_json::from_value(serde_json::json!({"id": "external", "command": "python3 bridge.py --fast", "timeout_secs": 9})).unwrap();
    let built = spec.build(12).unwrap();
    assert_eq!(built.id(), "external");
    assert_eq!(built.params()["command"], serde_json::json!(["python3", "bridge.py", "--fast"]));
    assert_eq!(built.params()["timeout_secs"], 9);
}

#[test]
fn recursive_forecast_through_the_bridge() {
    let Some(backend) = backend("ok", Duration::from_secs(30)) else { return };
    let (stations, panel) = generate(&SyntheticSpec { n_steps: 90, ..Default::default() }, 3);
    let spatial = SpatialContext::new(compute_distances(&stations), &stations.ids(), &Default::default()).unwrap();
    let pipeline = PipelineConfig::default();
    let out = recursive_forecast(&panel, &spatial, &pipeline, &backend, 3, 0).unwrap();

    let featurizer = Featurizer::new(&pipeline.features, panel.frequency(), panel.n_stations()).unwrap();
    let ctx = FeatureContext::new(&panel, &spatial).unwrap();
    let y = assemble(&ctx, &featurizer, 1).unwrap().target().unwrap().to_vec();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    for row in &out.forecast.predictions {
        assert_eq!(row.len(), 3);
        for v in row {
            assert!((v - mean).abs() < 1e-9 * mean.abs(), "{v} vs {mean}");
        }
    }
    assert_eq!(out.forecast.backend_id, "external");
}
