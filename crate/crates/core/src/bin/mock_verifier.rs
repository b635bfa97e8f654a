//! Minimal protocol-v1 verifier used by the integration tests.
//!
//! `its-mock-verifier <mode> [target...]` where mode is one of
//! `echo`, `distance`, `wrong-id`, `garbage`, `exit-after-hello`, `silent`,
//! `bad-version`, `error-on-negative`.

use std::io::{self, BufRead, Write};

use serde_json::{json, Value};

fn main() {
    let mut args = std::env::args().skip(1);
    let mode = args.next().unwrap_or_else(|| "echo".into());
    let target: Vec<f64> = args.map(|a| a.parse().expect("numeric target")).collect();

    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut lines = stdin.lock().lines();

    let Some(Ok(hello)) = lines.next() else { return };
    let hello: Value = serde_json::from_str(&hello).expect("hello json");
    assert!(hello.get("hello").is_some());
    let version = if mode == "bad-version" { 2 } else { 1 };
    writeln!(out, "{}", json!({"hello": {"version": version, "name": format!("mock-{mode}"), "parallel": false}})).unwrap();
    out.flush().unwrap();
    if mode == "exit-after-hello" {
        return;
    }

    for line in lines {
        let Ok(line) = line else { break };
        let msg: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if msg.get("bye").is_some() {
            break;
        }
        let id = msg.get("id").and_then(Value::as_u64).unwrap_or(0);
        let sample: Vec<f64> = msg
            .get("sample")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        let reply = match mode.as_str() {
            "echo" => json!({"id": id, "score": sample.first().copied().unwrap_or(0.0)}),
            "distance" => {
                let d: f64 = sample.iter().zip(&target).map(|(x, t)| (x - t) * (x - t)).sum();
                json!({"id": id, "score": -d})
            }
            "wrong-id" => json!({"id": id + 1, "score": 0.0}),
            "error-on-negative" if sample.first().is_some_and(|x| *x < 0.0) => {
                json!({"id": id, "error": "negative sample"})
            }
            "error-on-negative" => json!({"id": id, "score": 1.0}),
            "garbage" => {
                writeln!(out, "this is not json").unwrap();
                out.flush().unwrap();
                continue;
            }
            "silent" => continue,
            _ => json!({"id": id, "score": 0.0}),
        };
        writeln!(out, "{reply}").unwrap();
        out.flush().unwrap();
    }
}
