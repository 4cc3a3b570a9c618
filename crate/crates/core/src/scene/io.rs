use std::fs;
use std::path::Path;

use super::{RgbdFrame, Scene};
use crate::error::Result;

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(scene)?)?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let scene: Scene = serde_json::from_slice(&fs::read(path)?)?;
    scene.validate()?;
    Ok(scene)
}

pub fn save_color_png(frame: &RgbdFrame, path: &Path) -> Result<()> {
    color_image(frame).save(path)?;
    Ok(())
}

/// The colour image encoded as PNG, in memory.
pub fn color_png_bytes(frame: &RgbdFrame) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    color_image(frame).write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn color_image(frame: &RgbdFrame) -> image::RgbImage {
    image::RgbImage::from_fn(frame.width as u32, frame.height as u32, |x, y| {
        image::Rgb(frame.color[y as usize * frame.width + x as usize])
    })
}

/// 16-bit grayscale PNG holding depth in whole millimetres.
pub fn save_depth_png(frame: &RgbdFrame, path: &Path) -> Result<()> {
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_fn(
        frame.width as u32,
        frame.height as u32,
        |x, y| {
            let d = frame.depth[y as usize * frame.width + x as usize];
            image::Luma([d.round().clamp(0.0, u16::MAX as f64) as u16])
        },
    );
    img.save(path)?;
    Ok(())
}
