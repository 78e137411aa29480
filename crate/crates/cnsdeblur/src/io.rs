//! Image files (PNG, binary PGM/PPM) and the plain-text grid format used
//! for kernels and AR coefficient grids.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{DynamicImage, ExtendedColorType};

use crate::error::{Error, Result};
use crate::image::{ImagePlane, Kernel, MultiChannelImage};

fn io_err(path: &Path, reason: impl ToString) -> Error {
    Error::Io {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Loads an 8- or 16-bit grayscale/RGB image scaled to [0, 1].
pub fn load_image(path: impl AsRef<Path>) -> Result<MultiChannelImage> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .with_guessed_format()
        .map_err(|e| io_err(path, e))?;
    let img = reader.decode().map_err(|e| io_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let planes = |n: usize, samples: Vec<f64>| -> Result<MultiChannelImage> {
        let channels = (0..n)
            .map(|c| {
                let data = samples.iter().skip(c).step_by(n).copied().collect();
                ImagePlane::new(w, h, data)
            })
            .collect::<Result<Vec<_>>>()?;
        MultiChannelImage::new(channels)
    };
    match img {
        DynamicImage::ImageLuma8(b) => planes(1, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgb8(b) => planes(3, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => planes(1, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageRgb16(b) => planes(3, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        other => Err(Error::Format(format!(
            "{}: unsupported color layout {:?}; expected 8/16-bit gray or RGB",
            path.display(),
            other.color()
        ))),
    }
}

/// Clamps to [0, 1] and rounds half up onto the 8-bit grid.
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes PNG, PGM or PPM depending on the file extension.
pub fn save_image(img: &MultiChannelImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width(), img.height());
    let n = img.channels().len();
    let mut bytes = Vec::with_capacity(w * h * n);
    for i in 0..w * h {
        for ch in img.channels() {
            bytes.push(quantize_u8(ch.data()[i]));
        }
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => {
            let color = if n == 1 {
                ExtendedColorType::L8
            } else {
                ExtendedColorType::Rgb8
            };
            image::save_buffer_with_format(path, &bytes, w as u32, h as u32, color, image::ImageFormat::Png)
                .map_err(|e| io_err(path, e))
        }
        "pgm" | "ppm" => {
            let magic = match (ext.as_str(), n) {
                ("pgm", 1) => "P5",
                ("ppm", 3) => "P6",
                _ => {
                    return Err(Error::Format(format!(
                        "{}: {n}-channel image cannot be written as .{ext}",
                        path.display()
                    )))
                }
            };
            let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(&bytes);
            fs::write(path, out).map_err(|e| io_err(path, e))
        }
        _ => Err(Error::Format(format!(
            "{}: unknown extension, use .png, .pgm or .ppm",
            path.display()
        ))),
    }
}

/// Text form of a grid: a header line with the two dimensions, then one
/// line per row with every value printed to 17 significant digits.
pub fn grid_to_text(rows: usize, cols: usize, data: &[f64]) -> String {
    let mut s = format!("{rows} {cols}\n");
    for r in 0..rows {
        let line: Vec<String> = data[r * cols..(r + 1) * cols]
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn grid_from_text(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("header '{header}': {e}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(Error::Parse(format!("header must hold two integers, got '{header}'")));
    }
    let (rows, cols) = (dims[0], dims[1]);
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("row {i}: '{t}': {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != cols {
            return Err(Error::Parse(format!("row {i} has {} values, expected {cols}", vals.len())));
        }
        data.extend(vals);
    }
    if data.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {rows} rows, found {}",
            data.len() / cols.max(1)
        )));
    }
    Ok((rows, cols, data))
}

pub fn kernel_to_text(k: &Kernel) -> String {
    grid_to_text(k.rows(), k.cols(), k.data())
}

pub fn kernel_from_text(text: &str) -> Result<Kernel> {
    let (rows, cols, data) = grid_from_text(text)?;
    Kernel::new(rows, cols, data)
}

pub fn write_kernel(k: &Kernel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, kernel_to_text(k)).map_err(|e| io_err(path, e))
}

pub fn read_kernel(path: impl AsRef<Path>) -> Result<Kernel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    kernel_from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_half_up_and_clamps() {
        assert_eq!(quantize_u8(0.5), 128);
        assert_eq!(quantize_u8(1.7), 255);
        assert_eq!(quantize_u8(-0.2), 0);
        assert_eq!(quantize_u8(1.0), 255);
    }

    #[test]
    fn kernel_text_round_trip_is_exact() {
        let k = Kernel::from_fn(3, 5, |a, b| ((a * 7 + b) as f64).sin() / 3.0).unwrap();
        let back = kernel_from_text(&kernel_to_text(&k)).unwrap();
        assert_eq!(k, back);
    }

    #[test]
    fn grid_text_rejects_ragged_rows() {
        assert!(grid_from_text("2 2\n1 2\n3\n").is_err());
        assert!(grid_from_text("2 2\n1 2\n").is_err());
        assert!(grid_from_text("x 2\n").is_err());
    }
}
