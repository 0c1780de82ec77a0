//! Client for an external tabular model running as a child process.
//!
//! The child speaks newline-delimited JSON on its standard streams. Each
//! request is `{"id", "op", "payload"}` with `op` one of `hello`,
//! `fit_predict`, `shutdown`; each response is `{"id", "status", "payload"}`
//! with `status` `ok` (payload `{"pred": [...]}` for `fit_predict`) or
//! `error` (payload `{"message": ...}`). At most one request is in flight.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{training_target, Backend, FitState};
use crate::error::ForecastError;
use crate::model::FeatureTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeOp {
    Hello,
    FitPredict,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub id: i64,
    pub op: BridgeOp,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    pub id: i64,
    pub status: BridgeStatus,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPredictPayload {
    pub feature_names: Vec<String>,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    pub test_x: Vec<Vec<f64>>,
}

/// Live child process with a line reader thread.
pub struct BridgeSession {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    next_id: i64,
    timeout: Duration,
    /// Reply to `hello`.
    pub hello: Value,
}

impl BridgeSession {
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self, ForecastError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ForecastError::Config("external backend command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ForecastError::Backend(format!("cannot launch {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut session =
            Self { child, stdin, lines: rx, next_id: 1, timeout, hello: Value::Null };
        session.hello = session.call(BridgeOp::Hello, json!({}))?;
        Ok(session)
    }

    /// Sends one request and waits for the response carrying its id.
    pub fn call(&mut self, op: BridgeOp, payload: Value) -> Result<Value, ForecastError> {
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_string(&BridgeRequest { id, op, payload })
            .map_err(|e| ForecastError::Backend(e.to_string()))?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| ForecastError::Backend(format!("bridge write failed: {e}")))?;

        loop {
            let raw = match self.lines.recv_timeout(self.timeout) {
                Ok(raw) => raw,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(ForecastError::Timeout(self.timeout.as_secs()))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ForecastError::Backend("bridge closed its output".into()))
                }
            };
            if raw.trim().is_empty() {
                continue;
            }
            let resp: BridgeResponse = serde_json::from_str(&raw)
                .map_err(|e| ForecastError::Backend(format!("malformed bridge response: {e}")))?;
            if resp.id != id {
                return Err(ForecastError::Backend(format!(
                    "bridge answered id {} to request {id}",
                    resp.id
                )));
            }
            return match resp.status {
                BridgeStatus::Ok => Ok(resp.payload),
                BridgeStatus::Error => Err(ForecastError::Backend(format!(
                    "bridge error: {}",
                    resp.payload.get("message").and_then(Value::as_str).unwrap_or("unspecified")
                ))),
            };
        }
    }

    pub fn fit_predict(&mut self, payload: &FitPredictPayload) -> Result<Vec<f64>, ForecastError> {
        let value = serde_json::to_value(payload).map_err(|e| ForecastError::Backend(e.to_string()))?;
        let reply = self.call(BridgeOp::FitPredict, value)?;
        let pred: Vec<f64> = reply
            .get("pred")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| ForecastError::Backend(format!("bad pred payload: {e}")))?
            .ok_or_else(|| ForecastError::Backend("response lacks pred".into()))?;
        if pred.len() != payload.test_x.len() {
            return Err(ForecastError::Backend(format!(
                "bridge returned {} predictions for {} rows",
                pred.len(),
                payload.test_x.len()
            )));
        }
        Ok(pred)
    }
}

impl Drop for BridgeSession {
    fn drop(&mut self) {
        let saved = self.timeout;
        self.timeout = Duration::from_secs(2).min(saved);
        let _ = self.call(BridgeOp::Shutdown, json!({}));
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub command: Vec<String>,
    pub timeout: Duration,
}

impl Backend for ExternalBackend {
    fn id(&self) -> &str {
        "external"
    }

    fn params(&self) -> serde_json::Value {
        json!({ "command": self.command, "timeout_secs": self.timeout.as_secs() })
    }

    /// Performs the handshake and caches the training table; the model
    /// itself is fit in context on every prediction request.
    fn fit(&self, train: &FeatureTable, _seed: u64) -> Result<Box<dyn FitState>, ForecastError> {
        let train_y = training_target(train)?.to_vec();
        let session = BridgeSession::spawn(&self.command, self.timeout)?;
        Ok(Box::new(ExternalState {
            schema: train.schema().to_vec(),
            train_x: train.rows().to_vec(),
            train_y,
            session: Mutex::new(session),
        }))
    }
}

pub struct ExternalState {
    schema: Vec<String>,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    session: Mutex<BridgeSession>,
}

impl ExternalState {
    pub fn hello(&self) -> Value {
        self.session.lock().expect("bridge session poisoned").hello.clone()
    }
}

impl FitState for ExternalState {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn predict_rows(&self, rows: &FeatureTable) -> Result<Vec<f64>, ForecastError> {
        let payload = FitPredictPayload {
            feature_names: self.schema.clone(),
            train_x: self.train_x.clone(),
            train_y: self.train_y.clone(),
            test_x: rows.rows().to_vec(),
        };
        self.session
            .lock()
            .map_err(|_| ForecastError::Backend("bridge session poisoned".into()))?
            .fit_predict(&payload)
    }
}
