//! Replays recorded protocol transcripts against a scorer.
//!
//! A transcript is plain text: `> ` lines are requests, `< ` lines are the
//! expected replies, `#` lines and blank lines are ignored. Replies are
//! compared as JSON; numbers compare after rounding to `f32`, and for
//! `error` replies only `type` and `job` must match since messages are
//! free-form.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::time::Duration;

use serde_json::Value;

use super::Scorer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub request: String,
    pub expected: String,
}

pub fn parse_transcript(text: &str) -> Result<Vec<Exchange>> {
    let mut out = Vec::new();
    let mut pending: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(req) = line.strip_prefix("> ") {
            if pending.replace(req.to_string()).is_some() {
                return Err(Error::Protocol(format!(
                    "transcript line {}: request without a recorded reply before it",
                    i + 1
                )));
            }
        } else if let Some(resp) = line.strip_prefix("< ") {
            let request = pending.take().ok_or_else(|| {
                Error::Protocol(format!("transcript line {}: reply without request", i + 1))
            })?;
            out.push(Exchange {
                request,
                expected: resp.to_string(),
            });
        } else {
            return Err(Error::Protocol(format!(
                "transcript line {}: expected `> ` or `< ` prefix",
                i + 1
            )));
        }
    }
    if pending.is_some() {
        return Err(Error::Protocol("transcript ends with an unanswered request".into()));
    }
    Ok(out)
}

fn json_matches(expected: &Value, actual: &Value) -> bool {
    match (expected, actual) {
        (Value::Number(a), Value::Number(b)) => match (a.as_f64(), b.as_f64()) {
            (Some(a), Some(b)) => (a as f32) == (b as f32),
            _ => false,
        },
        (Value::Array(a), Value::Array(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| json_matches(x, y))
        }
        (Value::Object(a), Value::Object(b)) => {
            if a.get("type") == Some(&Value::String("error".into())) {
                return b.get("type") == a.get("type") && b.get("job") == a.get("job");
            }
            a.len() == b.len()
                && a
                    .iter()
                    .all(|(k, v)| b.get(k).is_some_and(|w| json_matches(v, w)))
        }
        _ => expected == actual,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub index: usize,
    pub passed: bool,
    pub detail: String,
}

/// Sends each recorded request through `exchange` and checks the reply.
pub fn run_transcript(
    exchanges: &[Exchange],
    mut exchange: impl FnMut(&str) -> Result<String>,
) -> Result<Vec<StepOutcome>> {
    let mut outcomes = Vec::new();
    for (index, ex) in exchanges.iter().enumerate() {
        let expected: Value = serde_json::from_str(&ex.expected).map_err(|e| {
            Error::Protocol(format!("transcript reply {index} is not JSON: {e}"))
        })?;
        let outcome = match exchange(&ex.request) {
            Err(e) => StepOutcome {
                index,
                passed: false,
                detail: format!("exchange failed: {e}"),
            },
            Ok(raw) => match serde_json::from_str::<Value>(&raw) {
                Err(e) => StepOutcome {
                    index,
                    passed: false,
                    detail: format!("reply is not JSON ({e}): {}", super::protocol::excerpt(&raw)),
                },
                Ok(actual) if json_matches(&expected, &actual) => StepOutcome {
                    index,
                    passed: true,
                    detail: String::new(),
                },
                Ok(_) => StepOutcome {
                    index,
                    passed: false,
                    detail: format!(
                        "expected {}, got {}",
                        super::protocol::excerpt(&ex.expected),
                        super::protocol::excerpt(&raw)
                    ),
                },
            },
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Replays a transcript against an in-process scorer.
pub fn check_in_process(exchanges: &[Exchange], scorer: &mut dyn Scorer) -> Result<Vec<StepOutcome>> {
    run_transcript(exchanges, |line| Ok(super::respond_line(line, scorer)))
}

/// Line-oriented connection to a scorer subprocess, without the handshake
/// logic of [`super::ProcessScorer`].
pub struct RawProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl RawProcess {
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::InvalidParameter("empty scorer command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(format!("launching `{program}`"), e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
            timeout,
        })
    }

    pub fn exchange(&mut self, line: &str) -> Result<String> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::io("writing to scorer", e))?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::io("reading from scorer", e)),
            Err(_) => Err(Error::Protocol(format!("no reply within {:?}", self.timeout))),
        }
    }
}

impl Drop for RawProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_malformed_transcripts() {
        let t = "# hello\n> {\"a\":1}\n< {\"b\":2}\n\n";
        assert_eq!(parse_transcript(t).unwrap().len(), 1);
        assert!(parse_transcript("> {}\n> {}\n< {}").is_err());
        assert!(parse_transcript("< {}").is_err());
        assert!(parse_transcript("> {}").is_err());
        assert!(parse_transcript("{}").is_err());
    }

    #[test]
    fn json_comparison_rules() {
        let v = |s: &str| serde_json::from_str::<Value>(s).unwrap();
        assert!(json_matches(&v("[0.1]"), &v("[0.10000000149011612]")));
        assert!(!json_matches(&v("[0.1]"), &v("[0.2]")));
        assert!(json_matches(
            &v(r#"{"type":"error","job":3,"message":"x"}"#),
            &v(r#"{"type":"error","job":3,"message":"something else"}"#)
        ));
        assert!(!json_matches(
            &v(r#"{"type":"error","job":3,"message":"x"}"#),
            &v(r#"{"type":"error","job":4,"message":"x"}"#)
        ));
        assert!(!json_matches(&v(r#"{"a":1}"#), &v(r#"{"a":1,"b":2}"#)));
    }
}
