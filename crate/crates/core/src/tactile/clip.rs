use serde::{Deserialize, Serialize};

use super::{ssim, PressStream, TactileFrame};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;

pub const CLIP_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactCriteria {
    pub ssim_threshold: f64,
    /// Mean marker travel that must be exceeded, px. `None` disables the
    /// marker check.
    pub marker_disp_threshold: Option<f64>,
}

impl ContactCriteria {
    /// Gate used for the sensor-collected fine-tuning and evaluation data.
    pub const COLLECTION: ContactCriteria = ContactCriteria { ssim_threshold: 0.96, marker_disp_threshold: Some(2.0) };
    /// Gate used for the pretraining corpus.
    pub const PRETRAIN: ContactCriteria = ContactCriteria { ssim_threshold: 0.90, marker_disp_threshold: None };

    pub fn validate(&self) -> Result<()> {
        if !(self.ssim_threshold > 0.0 && self.ssim_threshold <= 1.0) {
            return Err(Error::invalid("SSIM threshold must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn is_met(&self, frame: &TactileFrame, reference: &TactileFrame) -> Result<bool> {
        if ssim(&frame.image, &reference.image)? > self.ssim_threshold {
            return Ok(false);
        }
        Ok(match self.marker_disp_threshold {
            Some(t) => frame.mean_marker_displacement(reference) > t,
            None => true,
        })
    }
}

/// Index of the first frame meeting the contact criteria, or `None` when the
/// press never registers contact.
pub fn detect_contact(
    frames: &[TactileFrame],
    reference: &TactileFrame,
    criteria: &ContactCriteria,
) -> Result<Option<usize>> {
    criteria.validate()?;
    if frames.is_empty() {
        return Err(Error::invalid("empty press stream"));
    }
    for (i, f) in frames.iter().enumerate() {
        if criteria.is_met(f, reference)? {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TactileClip {
    pub frames: Vec<TactileFrame>,
    pub reference: TactileFrame,
    pub contact_index: usize,
}

impl TactileClip {
    /// Rounds every image to 8-bit intensities, matching what a PNG round
    /// trip stores.
    pub fn quantized(mut self) -> TactileClip {
        let q = |img: &mut GrayImage| img.data.iter_mut().for_each(|v| *v = v.round().clamp(0.0, 255.0));
        q(&mut self.reference.image);
        for f in self.frames.iter_mut() {
            q(&mut f.image);
        }
        self
    }
}

/// The eight frames starting at the contact index.
pub fn capture_clip(stream: &PressStream, contact_index: usize) -> Result<TactileClip> {
    let end = contact_index + CLIP_LEN;
    if end > stream.frames.len() {
        return Err(Error::NotEnoughFrames { required: end, got: stream.frames.len() });
    }
    Ok(TactileClip {
        frames: stream.frames[contact_index..end].to_vec(),
        reference: stream.reference.clone(),
        contact_index,
    })
}

/// 1-based clip positions used for a sequence of length `t`.
pub fn frame_positions(t: usize) -> Result<&'static [usize]> {
    match t {
        2 => Ok(&[2, 8]),
        4 => Ok(&[2, 4, 6, 8]),
        _ => Err(Error::invalid(format!("sequence length must be 2 or 4, got {t}"))),
    }
}

/// Difference images of the selected frames against the first contact frame.
pub fn select_frames(clip: &TactileClip, t: usize) -> Result<Vec<GrayImage>> {
    let first = &clip.frames[0].image;
    frame_positions(t)?
        .iter()
        .map(|&p| clip.frames[p - 1].image.sub(first))
        .collect()
}

/// Commanded depths of a clip relative to first contact.
pub fn relative_depths(clip: &TactileClip) -> Vec<f64> {
    clip.frames.iter().map(|f| f.depth - clip.frames[0].depth).collect()
}
