use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ExtendedColorType, ImageFormat, ImageReader};
use rayon::prelude::*;

use super::Sample;
use crate::error::{io_err, Error, Result};
use crate::tensor::{Shape4, Tensor4};
use crate::train::GroundTruth;

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Mask rule: values above 127 are crack.
pub fn binarize(plane: &[u8]) -> Vec<u8> {
    plane.iter().map(|&v| u8::from(v > 127)).collect()
}

/// Image files in `dir` keyed by file stem.
pub fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
            return Err(Error::Format {
                path,
                reason: format!("stem also used by {}", prev.display()),
            });
        }
    }
    Ok(out)
}

/// Matches files across directories by stem. Every directory must hold
/// exactly the same stems.
pub fn pair_stems(dirs: &[&Path]) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let listings = dirs.iter().map(|d| list_images(d)).collect::<Result<Vec<_>>>()?;
    for a in &listings {
        for (j, b) in listings.iter().enumerate() {
            if let Some(stem) = a.keys().find(|s| !b.contains_key(*s)) {
                return Err(Error::Pairing {
                    stem: stem.clone(),
                    dir: dirs[j].to_path_buf(),
                });
            }
        }
    }
    let Some(first) = listings.first() else {
        return Ok(Vec::new());
    };
    Ok(first
        .keys()
        .map(|stem| (stem.clone(), listings.iter().map(|l| l[stem].clone()).collect()))
        .collect())
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    let format_err = |e: &dyn std::fmt::Display| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(|e| format_err(&e))
}

/// Decodes an 8-bit image as a (1, 3, H, W) tensor scaled to [0, 1].
pub fn read_image(path: &Path) -> Result<Tensor4<f32>> {
    let rgb = decode(path)?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.as_raw();
    Ok(Tensor4::from_fn(Shape4::new(1, 3, h, w), |_, c, y, x| {
        raw[(y * w + x) * 3 + c] as f32 / 255.0
    }))
}

/// Decodes a single-channel mask and binarizes it.
pub fn read_mask(path: &Path) -> Result<GroundTruth> {
    let luma = decode(path)?.to_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    GroundTruth::new(Shape4::new(1, 1, h, w), binarize(luma.as_raw()))
}

/// Decodes to 8-bit grayscale, returning `(height, width, pixels)`.
pub fn read_gray(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let luma = decode(path)?.to_luma8();
    Ok((luma.height() as usize, luma.width() as usize, luma.into_raw()))
}

/// Loads every image/mask pair, sorted by stem.
pub fn load_pairs(image_dir: &Path, mask_dir: &Path) -> Result<Vec<Sample>> {
    let pairs = pair_stems(&[image_dir, mask_dir])?;
    pairs
        .par_iter()
        .map(|(_, paths)| {
            let image = read_image(&paths[0])?;
            let mask = read_mask(&paths[1])?;
            Sample::new(image, mask).map_err(|e| Error::Format {
                path: paths[1].clone(),
                reason: e.to_string(),
            })
        })
        .collect()
}

fn write_atomic(path: &Path, data: &[u8], w: usize, h: usize, color: ExtendedColorType) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    image::save_buffer_with_format(&tmp, data, w as u32, h as u32, color, ImageFormat::Png).map_err(|e| {
        Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Writes an 8-bit grayscale PNG.
pub fn write_gray_png(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Shape(format!("{} pixels for a {width}x{height} PNG", pixels.len())));
    }
    write_atomic(path, pixels, width, height, ExtendedColorType::L8)
}

/// Writes a (1, 3, H, W) tensor in [0, 1] as an 8-bit RGB PNG, rounding
/// half up.
pub fn write_rgb_png(path: &Path, image: &Tensor4<f32>) -> Result<()> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::Shape(format!("RGB PNG needs (1, 3, H, W), got {s}")));
    }
    let mut buf = Vec::with_capacity(3 * s.plane());
    for i in 0..s.plane() {
        for c in 0..3 {
            let v = image.plane(0, c)[i].clamp(0.0, 1.0) as f64;
            buf.push((v * 255.0 + 0.5).floor() as u8);
        }
    }
    write_atomic(path, &buf, s.w, s.h, ExtendedColorType::Rgb8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_boundary() {
        assert_eq!(binarize(&[0, 60, 127, 128, 255]), vec![0, 0, 0, 1, 1]);
    }

    fn write_pair(dir: &Path, stem: &str, h: usize, w: usize) {
        let img = Tensor4::from_fn(Shape4::new(1, 3, h, w), |_, c, y, x| ((y * w + x + c) % 256) as f32 / 255.0);
        write_rgb_png(&dir.join("img").join(format!("{stem}.png")), &img).unwrap();
        let mask: Vec<u8> = (0..h * w).map(|i| if i % 3 == 0 { 255 } else { 0 }).collect();
        write_gray_png(&dir.join("msk").join(format!("{stem}.png")), w, h, &mask).unwrap();
    }

    #[test]
    fn pairs_load_in_stem_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("img")).unwrap();
        fs::create_dir(dir.path().join("msk")).unwrap();
        write_pair(dir.path(), "b", 4, 6);
        write_pair(dir.path(), "a", 2, 2);
        let s = load_pairs(&dir.path().join("img"), &dir.path().join("msk")).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].image.shape(), Shape4::new(1, 3, 2, 2));
        assert_eq!(s[1].image.shape(), Shape4::new(1, 3, 4, 6));
        assert_eq!(s[1].image.get(0, 1, 1, 2), 9.0 / 255.0);
        assert_eq!(s[1].mask.data()[..4], [1, 0, 0, 1]);
    }

    #[test]
    fn image_without_mask_is_pairing_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("img")).unwrap();
        fs::create_dir(dir.path().join("msk")).unwrap();
        write_pair(dir.path(), "a", 2, 2);
        fs::remove_file(dir.path().join("msk/a.png")).unwrap();
        match load_pairs(&dir.path().join("img"), &dir.path().join("msk")) {
            Err(Error::Pairing { stem, .. }) => assert_eq!(stem, "a"),
            other => panic!("expected pairing error, got {other:?}"),
        }
    }

    #[test]
    fn undecodable_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("img")).unwrap();
        fs::create_dir(dir.path().join("msk")).unwrap();
        write_pair(dir.path(), "a", 2, 2);
        fs::write(dir.path().join("img/a.png"), b"not a png").unwrap();
        assert!(matches!(
            load_pairs(&dir.path().join("img"), &dir.path().join("msk")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn pavement_sized_image_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        write_rgb_png(&path, &Tensor4::zeros(Shape4::new(1, 3, 600, 800))).unwrap();
        assert_eq!(read_image(&path).unwrap().shape(), Shape4::new(1, 3, 600, 800));
    }
}
