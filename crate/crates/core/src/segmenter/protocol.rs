//! JSON control messages of the bridge protocol.
//!
//! Every message is one frame holding UTF-8 JSON. A message that announces
//! `payload_bytes` is followed by exactly one raw frame of that size:
//! RGB bytes for images, little-endian `f32` in `(H, W, C)` order for
//! features, and one `0`/`1` byte per pixel for masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BinaryMask, FeatureMap, Polarity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Ping,
    Embed {
        width: usize,
        height: usize,
        payload_bytes: usize,
    },
    Decode {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        embedding_id: Option<u64>,
        /// Stateless mode: the features follow as a raw frame.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inline: Option<TensorHeader>,
        points: Vec<WirePoint>,
        #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
        box_prompt: Option<[usize; 4]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mask_prompt: Option<MaskHeader>,
        k: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WirePoint {
    pub x: usize,
    pub y: usize,
    pub label: Polarity,
}

/// Geometry of a feature tensor: feature grid `(height, width, channels)`,
/// the cell stride, and the size of the embedded image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub stride: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub payload_bytes: usize,
}

impl TensorHeader {
    pub fn of(features: &FeatureMap) -> Self {
        let (image_width, image_height) = features.image_dims();
        Self {
            height: features.rows(),
            width: features.cols(),
            channels: features.channels(),
            stride: features.stride(),
            image_width,
            image_height,
            payload_bytes: features.data().len() * 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub width: usize,
    pub height: usize,
    pub payload_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OkReply {
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedReply {
    pub ok: bool,
    pub embedding_id: u64,
    #[serde(flatten)]
    pub tensor: TensorHeader,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeReply {
    pub ok: bool,
    pub scores: Vec<f64>,
    pub width: usize,
    pub height: usize,
    /// Size of each of the `scores.len()` mask frames that follow.
    pub payload_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// In-band error codes.
pub mod codes {
    pub const BAD_REQUEST: &str = "bad_request";
    pub const UNKNOWN_EMBEDDING: &str = "unknown_embedding";
    pub const TRUNCATED: &str = "truncated";
    pub const OVERSIZE: &str = "oversize";
    pub const NO_OBJECT: &str = "no_object";
    pub const INVALID_PROMPT: &str = "invalid_prompt";
    pub const BACKEND_FAILURE: &str = "backend_failure";
}

pub fn features_to_bytes(data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 4);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn features_from_bytes(header: &TensorHeader, bytes: &[u8]) -> Result<FeatureMap> {
    let expected = header.height * header.width * header.channels * 4;
    if bytes.len() != expected || header.payload_bytes != expected {
        return Err(Error::InvalidArgument(format!(
            "feature payload has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureMap::new(
        header.height,
        header.width,
        header.channels,
        data,
        header.stride,
        header.image_width,
        header.image_height,
    )
}

pub fn mask_to_bytes(mask: &BinaryMask) -> Vec<u8> {
    mask.bits().iter().map(|&b| b as u8).collect()
}

pub fn mask_from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<BinaryMask> {
    if let Some(b) = bytes.iter().find(|&&b| b > 1) {
        return Err(Error::InvalidArgument(format!("mask byte {b} is not 0 or 1")));
    }
    BinaryMask::new(width, height, bytes.iter().map(|&b| b == 1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_json_shapes() {
        assert_eq!(serde_json::to_string(&Request::Ping).unwrap(), r#"{"op":"ping"}"#);
        let req = Request::Decode {
            embedding_id: Some(3),
            inline: None,
            points: vec![WirePoint {
                x: 1,
                y: 2,
                label: Polarity::Negative,
            }],
            box_prompt: Some([0, 0, 4, 4]),
            mask_prompt: None,
            k: 3,
        };
        let json = serde_json::to_string(&req).unwrap();
        assert_eq!(
            json,
            r#"{"op":"decode","embedding_id":3,"points":[{"x":1,"y":2,"label":"negative"}],"box":[0,0,4,4],"k":3}"#
        );
        assert_eq!(serde_json::from_str::<Request>(&json).unwrap(), req);
    }

    #[test]
    fn embed_reply_is_flat() {
        let fm = FeatureMap::new(2, 2, 1, vec![0.0; 4], 8.0, 16, 16).unwrap();
        let reply = EmbedReply {
            ok: true,
            embedding_id: 7,
            tensor: TensorHeader::of(&fm),
        };
        let v: serde_json::Value = serde_json::to_value(&reply).unwrap();
        assert_eq!(v["height"], 2);
        assert_eq!(v["channels"], 1);
        assert_eq!(v["payload_bytes"], 16);
        assert_eq!(v["embedding_id"], 7);
    }

    #[test]
    fn tensor_bytes_round_trip() {
        let fm = FeatureMap::new(1, 2, 2, vec![1.5, -0.25, 3.0, 0.0], 1.0, 2, 1).unwrap();
        let bytes = features_to_bytes(fm.data());
        assert_eq!(&bytes[..4], &1.5f32.to_le_bytes());
        assert_eq!(features_from_bytes(&TensorHeader::of(&fm), &bytes).unwrap(), fm);
        assert!(features_from_bytes(&TensorHeader::of(&fm), &bytes[1..]).is_err());
        assert!(mask_from_bytes(2, 1, &[0, 2]).is_err());
        assert_eq!(mask_from_bytes(2, 1, &[0, 1]).unwrap().count(), 1);
    }
}
