use std::io::Cursor;
use std::path::Path;

use earmatch_core::raster::{GrayRaster, Raster};
use image::{ExtendedColorType, ImageEncoder};

use crate::fsutil::{read, write_atomic};
use crate::{Error, Result};

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Decodes any supported image into 8-bit RGB; gray and alpha channels are
/// expanded or dropped.
pub fn read_image(path: &Path) -> Result<Raster> {
    let bytes = read(path)?;
    let img = image::load_from_memory(&bytes).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(Raster::from_rgb(w, h, rgb.into_raw()).expect("decoder returns w·h·3 bytes"))
}

fn encode(bytes: &[u8], w: u32, h: u32, color: ExtendedColorType, path: &Path) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
        .write_image(bytes, w, h, color)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(out)
}

pub fn write_png(path: &Path, img: &Raster) -> Result<()> {
    let png = encode(
        img.as_bytes(),
        img.width(),
        img.height(),
        ExtendedColorType::Rgb8,
        path,
    )?;
    write_atomic(path, &png)
}

pub fn write_gray_png(path: &Path, img: &GrayRaster) -> Result<()> {
    let png = encode(
        img.as_bytes(),
        img.width(),
        img.height(),
        ExtendedColorType::L8,
        path,
    )?;
    write_atomic(path, &png)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trips_and_gray_expands_to_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Raster::new(5, 3);
        img.put(4, 2, [10, 200, 30]);
        let p = dir.path().join("a.png");
        write_png(&p, &img).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);

        let mut g = GrayRaster::new(4, 4);
        g.put(1, 2, 77);
        let p = dir.path().join("g.png");
        write_gray_png(&p, &g).unwrap();
        assert_eq!(read_image(&p).unwrap(), g.to_rgb());
    }

    #[test]
    fn undecodable_file_is_an_image_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"nope").unwrap();
        assert!(matches!(read_image(&p), Err(Error::Image { .. })));
    }
}
