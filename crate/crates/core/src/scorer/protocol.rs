//! NDJSON scorer protocol, version 1.
//!
//! One JSON object per line over the scorer's stdin/stdout (or as HTTP POST
//! bodies). Harness to scorer:
//!
//! ```json
//! {"type":"hello","protocol":1}
//! {"type":"score","job":3,"ids":["a","b"],"shape":[2,1,64,64],"dtype":"f32le","data":"<base64>"}
//! ```
//!
//! `data` is the base64 (standard alphabet, padded) encoding of the batch as
//! little-endian IEEE-754 float32 values in NCHW order, pixel values in
//! `[0, 1]`. Scorer to harness:
//!
//! ```json
//! {"type":"info","protocol":1,"classes":["a","b"],"input":{"channels":1,"height":64,"width":64},"identity":"model@sha"}
//! {"type":"scores","job":3,"values":[[0.1,0.9],[0.4,0.2]]}
//! {"type":"error","job":3,"message":"..."}
//! ```

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{InputSpec, ScorerInfo};
use crate::{Error, ImageBuffer, Result};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Hello {
        protocol: u32,
    },
    Score {
        job: u64,
        ids: Vec<String>,
        shape: [usize; 4],
        dtype: String,
        data: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Response {
    Info {
        protocol: u32,
        classes: Vec<String>,
        input: InputSpec,
        #[serde(default)]
        identity: String,
    },
    Scores {
        job: u64,
        values: Vec<Vec<f32>>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        job: Option<u64>,
        message: String,
    },
}

impl Response {
    pub fn info(info: &ScorerInfo) -> Self {
        Response::Info {
            protocol: PROTOCOL_VERSION,
            classes: info.classes.clone(),
            input: info.input,
            identity: info.identity.clone(),
        }
    }
}

pub fn hello() -> Request {
    Request::Hello {
        protocol: PROTOCOL_VERSION,
    }
}

/// Packs same-shaped images into a score request.
pub fn encode_batch(job: u64, images: &[ImageBuffer], ids: &[String]) -> Result<Request> {
    if images.len() != ids.len() {
        return Err(Error::Alignment(format!(
            "{} images but {} ids",
            images.len(),
            ids.len()
        )));
    }
    let Some(first) = images.first() else {
        return Err(Error::InvalidParameter("empty batch".into()));
    };
    let spec = InputSpec::of(first);
    let mut bytes = Vec::with_capacity(images.len() * first.pixels().len() * 4);
    for img in images {
        if InputSpec::of(img) != spec {
            return Err(Error::InvalidImage(
                "all images in a batch must share one shape".into(),
            ));
        }
        for v in img.to_chw() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(Request::Score {
        job,
        ids: ids.to_vec(),
        shape: [images.len(), spec.channels, spec.height, spec.width],
        dtype: DTYPE.to_string(),
        data: STANDARD.encode(bytes),
    })
}

/// Unpacks the images of a score request.
pub fn decode_batch(shape: [usize; 4], dtype: &str, data: &str) -> Result<Vec<ImageBuffer>> {
    if dtype != DTYPE {
        return Err(Error::Protocol(format!(
            "unsupported dtype `{dtype}`, expected `{DTYPE}`"
        )));
    }
    let bytes = STANDARD
        .decode(data)
        .map_err(|e| Error::Protocol(format!("bad base64 payload: {e}")))?;
    let [n, c, h, w] = shape;
    let per_image = c * h * w;
    if bytes.len() != n * per_image * 4 {
        return Err(Error::Protocol(format!(
            "payload has {} bytes, shape {:?} needs {}",
            bytes.len(),
            shape,
            n * per_image * 4
        )));
    }
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    floats
        .chunks_exact(per_image.max(1))
        .take(n)
        .map(|chunk| ImageBuffer::from_chw(c, h, w, chunk))
        .collect()
}

/// First 200 characters of a raw message, for error reports.
pub fn excerpt(raw: &str) -> String {
    let mut s: String = raw.chars().take(200).collect();
    if raw.chars().count() > 200 {
        s.push('…');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format_is_stable() {
        let hello = serde_json::to_string(&hello()).unwrap();
        assert_eq!(hello, r#"{"type":"hello","protocol":1}"#);

        let img = ImageBuffer::new(1, 1, 2, vec![0.0, 1.0]).unwrap();
        let req = encode_batch(7, &[img], &["a".into()]).unwrap();
        let json = serde_json::to_string(&req).unwrap();
        // 0.0f32 = 00 00 00 00, 1.0f32 = 00 00 80 3f
        assert_eq!(
            json,
            r#"{"type":"score","job":7,"ids":["a"],"shape":[1,1,1,2],"dtype":"f32le","data":"AAAAAAAAgD8="}"#
        );

        let resp: Response =
            serde_json::from_str(r#"{"type":"scores","job":7,"values":[[0.25,0.5]]}"#).unwrap();
        assert_eq!(
            resp,
            Response::Scores {
                job: 7,
                values: vec![vec![0.25, 0.5]]
            }
        );
    }

    #[test]
    fn batch_round_trip_is_nchw() {
        let a = ImageBuffer::new(3, 1, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let b = ImageBuffer::filled(3, 1, 2, 0.75).unwrap();
        let req = encode_batch(1, &[a.clone(), b.clone()], &["a".into(), "b".into()]).unwrap();
        let Request::Score {
            shape, dtype, data, ..
        } = req
        else {
            unreachable!()
        };
        assert_eq!(shape, [2, 3, 1, 2]);
        let raw = STANDARD.decode(&data).unwrap();
        let first_plane: Vec<f32> = raw[..8]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        assert_eq!(first_plane, vec![0.1, 0.4]);
        assert_eq!(decode_batch(shape, &dtype, &data).unwrap(), vec![a, b]);
    }

    #[test]
    fn decode_rejects_bad_payloads() {
        assert!(decode_batch([1, 1, 1, 1], "f64", "AAAAAA==").is_err());
        assert!(decode_batch([1, 1, 1, 2], DTYPE, "AAAAAA==").is_err());
        assert!(decode_batch([1, 1, 1, 1], DTYPE, "***").is_err());
        assert!(encode_batch(0, &[], &[]).is_err());
    }
}
