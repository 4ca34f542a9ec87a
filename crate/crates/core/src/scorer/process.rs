use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::protocol::{self, Request, Response};
use super::{check_rows, Scorer, ScorerInfo};
use crate::{Error, ImageBuffer, Result};

/// A scorer subprocess driven over stdin/stdout, one job in flight.
pub struct ProcessScorer {
    command: Vec<String>,
    handshake_timeout: Duration,
    job_timeout: Duration,
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    info: ScorerInfo,
    next_job: u64,
}

struct Spawned {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

fn spawn(command: &[String]) -> Result<Spawned> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("empty scorer command".into()))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::io(format!("launching scorer `{program}`"), e))?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, lines) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    Ok(Spawned {
        child,
        stdin,
        lines,
    })
}

impl ProcessScorer {
    /// Launches the command and performs the hello/info handshake.
    pub fn launch(command: Vec<String>, handshake_timeout: Duration, job_timeout: Duration) -> Result<Self> {
        let Spawned {
            child,
            stdin,
            lines,
        } = spawn(&command)?;
        let mut scorer = Self {
            command,
            handshake_timeout,
            job_timeout,
            child,
            stdin,
            lines,
            info: ScorerInfo {
                classes: Vec::new(),
                input: super::InputSpec {
                    channels: 1,
                    height: 1,
                    width: 1,
                },
                identity: String::new(),
            },
            next_job: 0,
        };
        scorer.info = scorer.handshake()?;
        Ok(scorer)
    }

    fn handshake(&mut self) -> Result<ScorerInfo> {
        self.send(&protocol::hello())?;
        match self.recv(self.handshake_timeout, true)? {
            Response::Info {
                protocol: version,
                classes,
                input,
                identity,
            } => {
                if version != protocol::PROTOCOL_VERSION {
                    return Err(Error::Protocol(format!(
                        "scorer speaks protocol {version}, expected {}",
                        protocol::PROTOCOL_VERSION
                    )));
                }
                let info = ScorerInfo {
                    classes,
                    input,
                    identity,
                };
                info.validate()?;
                Ok(info)
            }
            other => Err(Error::Protocol(format!(
                "expected info in reply to hello, got {other:?}"
            ))),
        }
    }

    fn send(&mut self, req: &Request) -> Result<()> {
        let mut line = serde_json::to_string(req)?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::io("writing to scorer", e))
    }

    fn recv(&mut self, timeout: Duration, handshake: bool) -> Result<Response> {
        let line = match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::io("reading from scorer", e)),
            Err(RecvTimeoutError::Timeout) if handshake => {
                return Err(Error::HandshakeTimeout(timeout))
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Protocol(format!("no reply within {timeout:?}")))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Protocol("scorer closed its output".into()))
            }
        };
        let resp: Response = serde_json::from_str(&line).map_err(|e| {
            Error::Protocol(format!("malformed message ({e}): {}", protocol::excerpt(&line)))
        })?;
        if let Response::Error { message, .. } = &resp {
            return Err(Error::Protocol(format!(
                "scorer reported: {}",
                protocol::excerpt(message)
            )));
        }
        Ok(resp)
    }
}

impl Scorer for ProcessScorer {
    fn info(&self) -> &ScorerInfo {
        &self.info
    }

    fn score_batch(&mut self, images: &[ImageBuffer], ids: &[String]) -> Result<Vec<Vec<f32>>> {
        let job = self.next_job;
        self.next_job += 1;
        self.send(&protocol::encode_batch(job, images, ids)?)?;
        match self.recv(self.job_timeout, false)? {
            Response::Scores { job: got, values } => {
                if got != job {
                    return Err(Error::Protocol(format!(
                        "reply for job {got} while waiting for job {job}"
                    )));
                }
                check_rows(&values, ids, &self.info.classes)?;
                Ok(values)
            }
            other => Err(Error::Protocol(format!(
                "expected scores for job {job}, got {other:?}"
            ))),
        }
    }

    fn reset(&mut self) -> Result<()> {
        let _ = self.child.kill();
        let _ = self.child.wait();
        let Spawned {
            child,
            stdin,
            lines,
        } = spawn(&self.command)?;
        self.child = child;
        self.stdin = stdin;
        self.lines = lines;
        let info = self.handshake()?;
        if info != self.info {
            return Err(Error::Protocol(
                "scorer declared a different identity after restart".into(),
            ));
        }
        Ok(())
    }
}

impl Drop for ProcessScorer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
