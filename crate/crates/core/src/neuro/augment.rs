use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::model::ModelConfig;
use crate::error::Result;
use crate::imaging::GrayImage;
use crate::seeding::{self, stream, Rng};
use crate::tactile::{frame_positions, TactileClip};

pub const JITTER: f64 = 0.10;
pub const HUE_JITTER: f64 = 0.01;

/// Photometric and geometric jitter for one training sample. Saturation and
/// hue are drawn for stream stability but leave a grayscale image unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub flip: bool,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams =
        AugmentParams { flip: false, brightness: 1.0, contrast: 1.0, saturation: 1.0, hue: 0.0 };

    pub fn sample(rng: &mut Rng) -> Self {
        AugmentParams {
            flip: rng.gen_bool(0.5),
            brightness: rng.gen_range(1.0 - JITTER..=1.0 + JITTER),
            contrast: rng.gen_range(1.0 - JITTER..=1.0 + JITTER),
            saturation: rng.gen_range(1.0 - JITTER..=1.0 + JITTER),
            hue: rng.gen_range(-HUE_JITTER..=HUE_JITTER),
        }
    }

    pub fn apply(&self, img: &GrayImage) -> GrayImage {
        let mut out = if self.flip { img.flip_horizontal() } else { img.clone() };
        for v in &mut out.data {
            *v *= self.brightness;
        }
        if self.contrast != 1.0 {
            let mean = out.data.iter().sum::<f64>() / out.data.len().max(1) as f64;
            for v in &mut out.data {
                *v = (*v - mean) * self.contrast + mean;
            }
        }
        for v in &mut out.data {
            *v = v.clamp(0.0, 255.0);
        }
        out
    }
}

pub fn augment(img: &GrayImage, seed: u64) -> GrayImage {
    AugmentParams::sample(&mut seeding::rng(seed, &[stream::AUGMENT])).apply(img)
}

/// Builds the network input for a clip: the selected frames minus the first
/// frame, resized to the model resolution and scaled. The same jitter is
/// applied to every frame before differencing.
pub fn prepare_input(clip: &TactileClip, cfg: &ModelConfig, aug: &AugmentParams) -> Result<Vec<f64>> {
    let base = aug.apply(&clip.frames[0].image);
    let mut out = Vec::with_capacity(cfg.sample_len());
    for &p in frame_positions(cfg.frames)? {
        let mut d = aug.apply(&clip.frames[p - 1].image).sub(&base)?;
        if d.width != cfg.input_size || d.height != cfg.input_size {
            d = d.resize(cfg.input_size, cfg.input_size);
        }
        out.extend(d.data.iter().map(|v| v * cfg.input_scale));
    }
    Ok(out)
}
