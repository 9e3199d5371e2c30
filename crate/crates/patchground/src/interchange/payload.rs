//! Grounding payload JSON.
//!
//! ```json
//! {
//!   "class_name": "bean_leaf",
//!   "text_prompt": "a bean leaf",
//!   "points": [{ "x_norm": 0.1, "y_norm": 0.2, "label": 1, "score": 0.93 }],
//!   "image_w": 1536,
//!   "image_h": 1536,
//!   "degraded_to_text_only": false
//! }
//! ```
//!
//! Numbers use the shortest representation that round-trips the stored
//! `f64` coordinates and `f32` scores exactly.

use std::path::Path;

use patchground_core::{GroundingPayload, PayloadPoint};
use serde::{Deserialize, Serialize};

use super::{read_file, write_file, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointJson {
    x_norm: f64,
    y_norm: f64,
    label: u8,
    score: f32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PayloadJson {
    class_name: String,
    text_prompt: String,
    points: Vec<PointJson>,
    image_w: u32,
    image_h: u32,
    degraded_to_text_only: bool,
}

/// Serializes a payload, forcing the text-only flag to match the point list.
pub fn write_payload(payload: &GroundingPayload) -> Result<String> {
    let mut p = payload.clone();
    p.degraded_to_text_only = p.points.is_empty();
    p.validate()?;
    let json = PayloadJson {
        class_name: p.class_name,
        text_prompt: p.text_prompt,
        points: p
            .points
            .iter()
            .map(|q| PointJson {
                x_norm: q.x_norm,
                y_norm: q.y_norm,
                label: q.label,
                score: q.score,
            })
            .collect(),
        image_w: p.image_w,
        image_h: p.image_h,
        degraded_to_text_only: p.degraded_to_text_only,
    };
    let mut s = serde_json::to_string_pretty(&json)?;
    s.push('\n');
    Ok(s)
}

pub fn read_payload(text: &str) -> Result<GroundingPayload> {
    let j: PayloadJson = serde_json::from_str(text)?;
    let p = GroundingPayload {
        class_name: j.class_name,
        text_prompt: j.text_prompt,
        points: j
            .points
            .into_iter()
            .map(|q| PayloadPoint {
                x_norm: q.x_norm,
                y_norm: q.y_norm,
                label: q.label,
                score: q.score,
            })
            .collect(),
        image_w: j.image_w,
        image_h: j.image_h,
        degraded_to_text_only: j.degraded_to_text_only,
    };
    p.validate()?;
    Ok(p)
}

pub fn write_payload_file(payload: &GroundingPayload, path: &Path) -> Result<()> {
    write_file(path, write_payload(payload)?.as_bytes())
}

pub fn read_payload_file(path: &Path) -> Result<GroundingPayload> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| super::FormatError::Malformed("payload is not UTF-8".into()))?;
    read_payload(&text)
}
