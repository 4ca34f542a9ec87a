use std::io::{BufRead, Write};

use super::protocol::{self, Request, Response};
use super::{InputSpec, Scorer};
use crate::{Error, Result};

/// Runs the scorer side of the protocol until `input` closes.
///
/// Malformed or failing requests get an `error` message and the loop keeps
/// going; only I/O failures end it.
pub fn serve(input: impl BufRead, mut output: impl Write, scorer: &mut dyn Scorer) -> Result<()> {
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("reading request", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle(&line, scorer);
        let mut text = serde_json::to_string(&resp)?;
        text.push('\n');
        output
            .write_all(text.as_bytes())
            .and_then(|_| output.flush())
            .map_err(|e| Error::io("writing response", e))?;
    }
    Ok(())
}

/// Answers one request line; the reply is a single JSON line without the
/// trailing newline.
pub fn respond_line(line: &str, scorer: &mut dyn Scorer) -> String {
    serde_json::to_string(&handle(line, scorer)).expect("responses serialize")
}

fn handle(line: &str, scorer: &mut dyn Scorer) -> Response {
    let req: Request = match serde_json::from_str(line) {
        Ok(req) => req,
        Err(e) => {
            return Response::Error {
                job: None,
                message: format!("malformed request ({e}): {}", protocol::excerpt(line)),
            }
        }
    };
    match req {
        Request::Hello { protocol: version } if version == protocol::PROTOCOL_VERSION => {
            Response::info(scorer.info())
        }
        Request::Hello { protocol: version } => Response::Error {
            job: None,
            message: format!(
                "unsupported protocol {version}, this scorer speaks {}",
                protocol::PROTOCOL_VERSION
            ),
        },
        Request::Score {
            job,
            ids,
            shape,
            dtype,
            data,
        } => {
            let result = protocol::decode_batch(shape, &dtype, &data).and_then(|images| {
                if images.len() != ids.len() {
                    return Err(Error::Protocol(format!(
                        "{} ids for {} images",
                        ids.len(),
                        images.len()
                    )));
                }
                let expected = scorer.info().input;
                if let Some(img) = images.iter().find(|img| InputSpec::of(img) != expected) {
                    return Err(Error::Protocol(format!(
                        "image shape {:?} does not match declared input {:?}",
                        InputSpec::of(img),
                        expected
                    )));
                }
                scorer.score_batch(&images, &ids)
            });
            match result {
                Ok(values) => Response::Scores { job, values },
                Err(e) => Response::Error {
                    job: Some(job),
                    message: e.to_string(),
                },
            }
        }
    }
}
