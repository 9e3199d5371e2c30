//! Joint text + point payload assembly.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tsg::PromptSet;

/// Class identifier with its display form (underscores become spaces).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassName {
    raw: String,
    display: String,
}

impl ClassName {
    pub fn new(raw: &str) -> Result<Self> {
        let display = raw.replace('_', " ");
        if display.trim().is_empty() {
            return Err(Error::EmptyName);
        }
        Ok(Self {
            raw: raw.into(),
            display,
        })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn display(&self) -> &str {
        &self.display
    }
}

/// `"an <name>"` when the display name starts with a vowel letter, else
/// `"a <name>"`.
pub fn format_text_prompt(name: &ClassName) -> String {
    let first = name.display.chars().next().map(|c| c.to_ascii_lowercase());
    let article = match first {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    };
    format!("{article} {}", name.display)
}

/// Keeps prompts whose score is at least `tau_v`, preserving order.
pub fn validate_prompts(ps: &PromptSet, tau_v: f32) -> Result<PromptSet> {
    if !(tau_v > 0.0 && tau_v < 1.0) {
        return Err(Error::InvalidThreshold(tau_v));
    }
    Ok(PromptSet {
        prompts: ps
            .prompts
            .iter()
            .filter(|p| p.score >= tau_v)
            .copied()
            .collect(),
        image_w: ps.image_w,
        image_h: ps.image_h,
    })
}

/// One foreground point in unit-square coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadPoint {
    pub x_norm: f64,
    pub y_norm: f64,
    pub label: u8,
    pub score: f32,
}

/// Text prompt plus validated foreground points for one class and image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingPayload {
    pub class_name: String,
    pub text_prompt: String,
    pub points: Vec<PayloadPoint>,
    pub image_w: u32,
    pub image_h: u32,
    /// Set exactly when `points` is empty: the segmenter should run text-only.
    pub degraded_to_text_only: bool,
}

impl GroundingPayload {
    pub fn validate(&self) -> Result<()> {
        if self.image_w == 0 || self.image_h == 0 {
            return Err(Error::InvalidPayload("image dimensions must be positive"));
        }
        if self.degraded_to_text_only != self.points.is_empty() {
            return Err(Error::InvalidPayload(
                "degraded_to_text_only must be set iff there are no points",
            ));
        }
        for p in &self.points {
            if p.label != 1 {
                return Err(Error::InvalidPayload("point labels must all be 1"));
            }
            if !(0.0..=1.0).contains(&p.x_norm) || !(0.0..=1.0).contains(&p.y_norm) {
                return Err(Error::InvalidPayload("point outside the unit square"));
            }
            if !(-1.0..=1.0).contains(&p.score) {
                return Err(Error::InvalidPayload("point score outside [-1, 1]"));
            }
        }
        if self.points.windows(2).any(|w| w[0].score < w[1].score) {
            return Err(Error::InvalidPayload("points must be sorted by score"));
        }
        Ok(())
    }
}

/// Normalizes validated prompts to the unit square and sets the text-only
/// flag when none survive.
pub fn build_payload(
    name: &ClassName,
    validated: &PromptSet,
    image_w: u32,
    image_h: u32,
) -> Result<GroundingPayload> {
    if image_w == 0 || image_h == 0 {
        return Err(Error::InvalidPayload("image dimensions must be positive"));
    }
    let points: Vec<PayloadPoint> = validated
        .prompts
        .iter()
        .map(|p| PayloadPoint {
            x_norm: p.x / f64::from(image_w),
            y_norm: p.y / f64::from(image_h),
            label: 1,
            score: p.score,
        })
        .collect();
    Ok(GroundingPayload {
        class_name: name.raw.clone(),
        text_prompt: format_text_prompt(name),
        degraded_to_text_only: points.is_empty(),
        points,
        image_w,
        image_h,
    })
}
