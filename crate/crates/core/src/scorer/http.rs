use std::time::Duration;

use super::protocol::{self, Request, Response};
use super::{check_rows, Scorer, ScorerInfo};
use crate::{Error, ImageBuffer, Result};

/// Same JSON bodies as the stdio protocol, one POST per message.
pub struct HttpScorer {
    url: String,
    agent: ureq::Agent,
    info: ScorerInfo,
    next_job: u64,
}

impl HttpScorer {
    pub fn connect(url: &str, timeout: Duration) -> Result<Self> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut scorer = Self {
            url: url.to_string(),
            agent,
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
        match scorer.post(&protocol::hello())? {
            Response::Info {
                protocol: version,
                classes,
                input,
                identity,
            } if version == protocol::PROTOCOL_VERSION => {
                scorer.info = ScorerInfo {
                    classes,
                    input,
                    identity,
                };
                scorer.info.validate()?;
                Ok(scorer)
            }
            other => Err(Error::Protocol(format!(
                "expected protocol {} info, got {other:?}",
                protocol::PROTOCOL_VERSION
            ))),
        }
    }

    fn post(&self, req: &Request) -> Result<Response> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(req)
            .map_err(|e| Error::Protocol(format!("POST {} failed: {e}", self.url)))?;
        let status = resp.status();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Protocol(format!("reading reply from {}: {e}", self.url)))?;
        if !status.is_success() {
            return Err(Error::Protocol(format!(
                "HTTP {status}: {}",
                protocol::excerpt(&body)
            )));
        }
        let resp: Response = serde_json::from_str(&body).map_err(|e| {
            Error::Protocol(format!("malformed message ({e}): {}", protocol::excerpt(&body)))
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

impl Scorer for HttpScorer {
    fn info(&self) -> &ScorerInfo {
        &self.info
    }

    fn score_batch(&mut self, images: &[ImageBuffer], ids: &[String]) -> Result<Vec<Vec<f32>>> {
        let job = self.next_job;
        self.next_job += 1;
        match self.post(&protocol::encode_batch(job, images, ids)?)? {
            Response::Scores { job: got, values } if got == job => {
                check_rows(&values, ids, &self.info.classes)?;
                Ok(values)
            }
            other => Err(Error::Protocol(format!(
                "expected scores for job {job}, got {other:?}"
            ))),
        }
    }
}
