//! Client for verifiers running in a child process.
//!
//! Newline-delimited JSON over the child's stdin/stdout, protocol version 1:
//!
//! ```text
//! -> {"hello":{"version":1,"dim":<d>}}
//! <- {"hello":{"version":1,"name":"<id>","parallel":<bool>}}
//! -> {"id":<int>,"context":"<string>","sample":[<d floats>]}
//! <- {"id":<int>,"score":<float>}   or   {"id":<int>,"error":"<message>"}
//! -> {"bye":true}
//! ```
//!
//! One connection is a serial channel: requests are answered in order.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ScoreRequest, Verifier, VerifierScore};
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u64 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

/// How to launch the verifier process.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessEndpoint {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ProcessEndpoint {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// Splits a command line on whitespace. No shell quoting is interpreted.
    pub fn parse(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace().map(String::from);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty external verifier command".into()))?;
        Ok(Self::new(program, parts.collect()))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub version: u64,
    pub name: String,
    pub parallel: bool,
}

#[derive(Serialize)]
struct HelloOut {
    hello: HelloBody,
}

#[derive(Serialize)]
struct HelloBody {
    version: u64,
    dim: usize,
}

#[derive(Deserialize)]
struct HelloIn {
    hello: Handshake,
}

#[derive(Serialize)]
struct RequestLine<'a> {
    id: u64,
    context: &'a str,
    sample: &'a [f64],
}

struct Connection {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl Connection {
    fn send(&mut self, line: &str) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::transport("connection already closed", line))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::transport(format!("write to verifier failed: {e}"), line))
    }

    fn recv(&mut self) -> Result<String> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::transport(format!("read from verifier failed: {e}"), "")),
            Err(RecvTimeoutError::Timeout) => Err(Error::transport(
                format!("no response within {:?}", self.timeout),
                "",
            )),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.try_wait().ok().flatten();
                Err(Error::transport(format!("verifier process exited ({status:?})"), ""))
            }
        }
    }

    fn close(&mut self) -> Option<std::process::ExitStatus> {
        if self.stdin.is_some() {
            let _ = self.send(r#"{"bye":true}"#);
            self.stdin = None;
        }
        let deadline = Instant::now() + SHUTDOWN_GRACE;
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => {
                    let _ = self.child.kill();
                    return self.child.wait().ok();
                }
            }
        }
    }
}

/// A connected out-of-process verifier.
pub struct ExternalVerifier {
    handshake: Handshake,
    conn: Mutex<Connection>,
}

impl ExternalVerifier {
    /// Spawns the process and performs the handshake for samples of length `dim`.
    pub fn connect(endpoint: &ProcessEndpoint, dim: usize) -> Result<Self> {
        let mut child = Command::new(&endpoint.program)
            .args(&endpoint.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::transport(format!("cannot start {:?}: {e}", endpoint.program), ""))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout was piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut conn = Connection {
            child,
            stdin,
            lines: rx,
            timeout: endpoint.timeout,
        };

        let hello = serde_json::to_string(&HelloOut {
            hello: HelloBody {
                version: PROTOCOL_VERSION,
                dim,
            },
        })?;
        let handshake = conn.send(&hello).and_then(|_| conn.recv()).and_then(|raw| {
            let parsed: HelloIn = serde_json::from_str(&raw)
                .map_err(|e| Error::transport(format!("malformed handshake: {e}"), raw.clone()))?;
            if parsed.hello.version != PROTOCOL_VERSION {
                return Err(Error::transport(
                    format!("protocol version {} not supported", parsed.hello.version),
                    raw,
                ));
            }
            Ok(parsed.hello)
        });
        match handshake {
            Ok(handshake) => Ok(Self {
                handshake,
                conn: Mutex::new(conn),
            }),
            Err(e) => {
                conn.close();
                Err(e)
            }
        }
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    /// Sends `bye` and waits for the process to exit (killing it after 5 s).
    pub fn shutdown(mut self) -> Option<std::process::ExitStatus> {
        let conn = self.conn.get_mut().unwrap_or_else(|p| p.into_inner());
        conn.close()
    }

    /// Scores one request; the response must echo `req.request_id`.
    pub fn score_external(&self, req: &ScoreRequest) -> Result<VerifierScore> {
        let line = serde_json::to_string(&RequestLine {
            id: req.request_id,
            context: &req.context,
            sample: &req.sample,
        })?;
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        conn.send(&line)?;
        let raw = conn.recv()?;
        drop(conn);
        parse_response(&raw, req.request_id).map(|value| VerifierScore {
            value,
            verifier_name: self.handshake.name.clone(),
        })
    }
}

fn parse_response(raw: &str, expected_id: u64) -> Result<f64> {
    let v: Value = serde_json::from_str(raw)
        .map_err(|e| Error::transport(format!("malformed response: {e}"), raw))?;
    let id = v
        .get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::transport("response without integer id", raw))?;
    if id != expected_id {
        return Err(Error::transport(
            format!("response id {id} does not match request id {expected_id}"),
            raw,
        ));
    }
    if let Some(msg) = v.get("error") {
        return Err(Error::transport(format!("verifier reported error: {msg}"), raw));
    }
    match v.get("score").and_then(Value::as_f64) {
        Some(s) if s.is_finite() => Ok(s),
        _ => Err(Error::transport("response without finite score", raw)),
    }
}

impl Verifier for ExternalVerifier {
    fn name(&self) -> &str {
        &self.handshake.name
    }

    fn score(&self, req: &ScoreRequest) -> Result<VerifierScore> {
        self.score_external(req)
    }
}

impl Drop for ExternalVerifier {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            if conn.stdin.is_some() {
                conn.close();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_parsing() {
        assert_eq!(parse_response(r#"{"id":3,"score":0.5}"#, 3).unwrap(), 0.5);
        assert!(parse_response(r#"{"id":4,"score":0.5}"#, 3).is_err());
        assert!(parse_response(r#"{"id":3,"error":"boom"}"#, 3).is_err());
        assert!(parse_response(r#"{"id":3}"#, 3).is_err());
        match parse_response("not json", 3) {
            Err(Error::Transport { raw, .. }) => assert_eq!(raw, "not json"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn request_line_layout() {
        let line = serde_json::to_string(&RequestLine {
            id: 7,
            context: "a hat",
            sample: &[0.1, -2.0],
        })
        .unwrap();
        assert_eq!(line, r#"{"id":7,"context":"a hat","sample":[0.1,-2.0]}"#);
        let hello = serde_json::to_string(&HelloOut {
            hello: HelloBody { version: 1, dim: 4 },
        })
        .unwrap();
        assert_eq!(hello, r#"{"hello":{"version":1,"dim":4}}"#);
    }

    #[test]
    fn endpoint_parsing() {
        let e = ProcessEndpoint::parse("python3 bridge.py --scorer echo").unwrap();
        assert_eq!(e.program, "python3");
        assert_eq!(e.args, vec!["bridge.py", "--scorer", "echo"]);
        assert!(ProcessEndpoint::parse("   ").is_err());
    }
}
