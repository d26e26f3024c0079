//! PNG codecs for images and label maps.

use std::path::Path;

use anyhow::{bail, Context};
use image::{ColorType, GrayImage, ImageReader, RgbImage};

use uosam_core::{ClassId, Image, LabelMap};

pub fn read_image(path: &Path) -> anyhow::Result<Image> {
    let img = image::open(path)
        .with_context(|| format!("reading image {}", path.display()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Image::new(w as usize, h as usize, img.into_raw())?)
}

pub fn write_image(path: &Path, image: &Image) -> anyhow::Result<()> {
    let buf = RgbImage::from_raw(image.width() as u32, image.height() as u32, image.data().to_vec())
        .expect("buffer length matches dimensions");
    buf.save(path)
        .with_context(|| format!("writing image {}", path.display()))
}

/// True if `path` is an 8-bit single-channel PNG, the only layout accepted
/// for label maps. Only the header is read.
pub fn is_label_png(path: &Path) -> bool {
    ImageReader::open(path)
        .ok()
        .and_then(|r| r.with_guessed_format().ok())
        .and_then(|r| r.into_decoder().ok())
        .map(|d| image::ImageDecoder::color_type(&d) == ColorType::L8)
        .unwrap_or(false)
}

pub fn read_label_map(path: &Path, ignore_id: ClassId) -> anyhow::Result<LabelMap> {
    let img = image::open(path).with_context(|| format!("reading label map {}", path.display()))?;
    if img.color() != ColorType::L8 {
        bail!(
            "{}: label maps must be 8-bit grayscale, found {:?}",
            path.display(),
            img.color()
        );
    }
    let g = img.into_luma8();
    let (w, h) = g.dimensions();
    Ok(LabelMap::new(w as usize, h as usize, g.into_raw())?.with_ignore_id(ignore_id))
}

pub fn write_label_map(path: &Path, map: &LabelMap) -> anyhow::Result<()> {
    let buf = GrayImage::from_raw(map.width() as u32, map.height() as u32, map.labels().to_vec())
        .expect("buffer length matches dimensions");
    buf.save(path)
        .with_context(|| format!("writing label map {}", path.display()))
}
