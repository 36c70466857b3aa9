//! Client side of the external relation-classifier protocol.
//!
//! The plugin is a child process speaking newline-delimited JSON on its
//! standard streams. It announces itself with `{"ready":true,"protocol":1}`
//! and then answers each request line with one response line carrying the
//! same `id`. Responses may arrive in any order.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ClassifyError;
use crate::relation::{
    build_classifier_input, Classification, ClassifierInput, RelationClassifier, RelationLabel,
    SceneView,
};
use crate::scene::Detection;

pub const PROTOCOL_VERSION: u64 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginRequest {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub image_png_b64: String,
    pub bbox_a: [f64; 4],
    pub bbox_b: [f64; 4],
}

impl PluginRequest {
    pub fn from_input(id: u64, input: &ClassifierInput) -> Result<Self, ClassifyError> {
        let mut png = Vec::new();
        input
            .rgb
            .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .map_err(|e| ClassifyError::Input(format!("PNG encoding failed: {e}")))?;
        Ok(Self {
            id,
            width: input.width,
            height: input.height,
            image_png_b64: base64::engine::general_purpose::STANDARD.encode(png),
            bbox_a: input.bbox_a,
            bbox_b: input.bbox_b,
        })
    }
}

/// Parsed response line.
#[derive(Debug, Clone, PartialEq)]
pub enum PluginResponse {
    Label { id: u64, classification: Classification },
    Error { id: u64, message: String },
}

impl PluginResponse {
    pub fn id(&self) -> u64 {
        match self {
            PluginResponse::Label { id, .. } | PluginResponse::Error { id, .. } => *id,
        }
    }

    pub fn parse(line: &str) -> Result<Self, ClassifyError> {
        let protocol = |message: String| ClassifyError::Protocol {
            line: line.to_string(),
            message,
        };
        let value: Value =
            serde_json::from_str(line).map_err(|e| protocol(format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| protocol("response is not an object".into()))?;
        let id = obj
            .get("id")
            .and_then(Value::as_u64)
            .ok_or_else(|| protocol("missing or non-integer id".into()))?;
        if let Some(err) = obj.get("error") {
            let message = err
                .as_str()
                .ok_or_else(|| protocol("error field is not a string".into()))?
                .to_string();
            return Ok(PluginResponse::Error { id, message });
        }
        let label: RelationLabel = obj
            .get("label")
            .and_then(Value::as_str)
            .ok_or_else(|| protocol("missing label".into()))?
            .parse()
            .map_err(protocol)?;
        let classification = match obj.get("probs") {
            None | Some(Value::Null) => Classification::label(label),
            Some(Value::Object(probs)) => {
                let mut scores = [0.0; 5];
                for (key, v) in probs {
                    let l: RelationLabel = key.parse().map_err(protocol)?;
                    scores[l.index()] = v
                        .as_f64()
                        .ok_or_else(|| protocol(format!("probability for {key} is not a number")))?;
                }
                Classification::with_scores(label, scores).map_err(protocol)?
            }
            Some(_) => return Err(protocol("probs is not an object".into())),
        };
        Ok(PluginResponse::Label { id, classification })
    }
}

/// A running plugin process. One batch in flight at a time.
pub struct PluginSession {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: u64,
}

impl std::fmt::Debug for PluginSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PluginSession")
            .field("command", &self.command)
            .field("pid", &self.child.id())
            .finish()
    }
}

impl PluginSession {
    /// Runs `command` through `sh -c` and waits for the handshake.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, ClassifyError> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command);
        Self::spawn_command(cmd, command, timeout)
    }

    pub fn spawn_command(
        mut cmd: Command,
        label: &str,
        timeout: Duration,
    ) -> Result<Self, ClassifyError> {
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ClassifyError::Spawn {
                command: label.to_string(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut session = Self {
            command: label.to_string(),
            child,
            stdin,
            lines: rx,
            timeout,
            next_id: 0,
        };
        session.handshake()?;
        Ok(session)
    }

    fn handshake(&mut self) -> Result<(), ClassifyError> {
        let deadline = Instant::now() + self.timeout;
        let line = self.next_line(deadline)?;
        let value: Value = serde_json::from_str(&line).map_err(|e| ClassifyError::Protocol {
            line: line.clone(),
            message: format!("invalid handshake: {e}"),
        })?;
        let ready = value.get("ready").and_then(Value::as_bool) == Some(true);
        let version = value.get("protocol").and_then(Value::as_u64);
        if !ready || version != Some(PROTOCOL_VERSION) {
            return Err(ClassifyError::Protocol {
                line,
                message: format!("expected handshake {{\"ready\":true,\"protocol\":{PROTOCOL_VERSION}}}"),
            });
        }
        Ok(())
    }

    fn exit_description(&mut self) -> String {
        // Give a just-closed process a moment to be reaped.
        for _ in 0..50 {
            if let Ok(Some(status)) = self.child.try_wait() {
                return format!("'{}' terminated with {status}", self.command);
            }
            thread::sleep(Duration::from_millis(10));
        }
        format!("'{}' closed its output", self.command)
    }

    fn next_line(&mut self, deadline: Instant) -> Result<String, ClassifyError> {
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(remaining) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return Ok(line),
                Ok(Err(e)) => return Err(ClassifyError::Io(e)),
                Err(RecvTimeoutError::Timeout) => return Err(ClassifyError::Timeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ClassifyError::Exited(self.exit_description()))
                }
            }
        }
    }

    pub fn allocate_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Sends a batch and collects one response per request, returned in
    /// request order.
    pub fn request_batch(
        &mut self,
        requests: &[PluginRequest],
    ) -> Result<Vec<Classification>, ClassifyError> {
        let mut pending: HashMap<u64, usize> = HashMap::with_capacity(requests.len());
        for (i, r) in requests.iter().enumerate() {
            if pending.insert(r.id, i).is_some() {
                return Err(ClassifyError::Input(format!("duplicate request id {}", r.id)));
            }
        }
        {
            let stdin = self
                .stdin
                .as_mut()
                .ok_or_else(|| ClassifyError::Exited(format!("'{}' input closed", self.command)))?;
            let mut buf = Vec::new();
            for r in requests {
                serde_json::to_writer(&mut buf, r).expect("request serializes");
                buf.push(b'\n');
            }
            let written = stdin.write_all(&buf).and_then(|_| stdin.flush());
            if let Err(e) = written {
                if e.kind() == std::io::ErrorKind::BrokenPipe {
                    return Err(ClassifyError::Exited(self.exit_description()));
                }
                return Err(ClassifyError::Io(e));
            }
        }

        let deadline = Instant::now() + self.timeout;
        let mut out: Vec<Option<Classification>> = vec![None; requests.len()];
        while !pending.is_empty() {
            let line = self.next_line(deadline)?;
            let response = PluginResponse::parse(&line)?;
            let slot = pending
                .remove(&response.id())
                .ok_or_else(|| ClassifyError::Protocol {
                    line: line.clone(),
                    message: format!("unexpected response id {}", response.id()),
                })?;
            match response {
                PluginResponse::Label { classification, .. } => out[slot] = Some(classification),
                PluginResponse::Error { id, message } => {
                    return Err(ClassifyError::Remote { id, message })
                }
            }
        }
        Ok(out.into_iter().map(|c| c.expect("every slot answered")).collect())
    }
}

impl Drop for PluginSession {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let deadline = Instant::now() + Duration::from_millis(200);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Sends `requests` over an established session; one label per request.
pub fn external_classify(
    session: &mut PluginSession,
    requests: &[PluginRequest],
) -> Result<Vec<RelationLabel>, ClassifyError> {
    Ok(session
        .request_batch(requests)?
        .into_iter()
        .map(|c| c.label)
        .collect())
}

/// [`RelationClassifier`] backed by a plugin process.
#[derive(Debug)]
pub struct PluginClassifier {
    session: PluginSession,
}

impl PluginClassifier {
    pub fn new(session: PluginSession) -> Self {
        Self { session }
    }

    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, ClassifyError> {
        PluginSession::spawn(command, timeout).map(Self::new)
    }
}

impl RelationClassifier for PluginClassifier {
    fn classify_batch(
        &mut self,
        view: &SceneView<'_>,
        pairs: &[(&Detection, &Detection)],
    ) -> Result<Vec<Classification>, ClassifyError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let image = view.image.ok_or(ClassifyError::MissingImage)?;
        let requests = pairs
            .iter()
            .map(|(a, b)| {
                let input = build_classifier_input(image, &a.bbox, &b.bbox)?;
                PluginRequest::from_input(self.session.allocate_id(), &input)
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.session.request_batch(&requests)
    }
}
