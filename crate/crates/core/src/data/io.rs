//! Frame images and box files on disk.

use std::fs;
use std::path::Path;

use image::imageops::FilterType;
use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use tavp_tensor::Tensor;

use crate::error::{Error, Result};

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `[C, H, W]` in [0, 1], C 1 or 3, as an 8-bit image.
pub fn to_image(frame: &Tensor) -> Result<DynamicImage> {
    let s = frame.shape();
    if s.len() != 3 || !(s[0] == 1 || s[0] == 3) {
        return Err(Error::Input(format!("cannot write a frame of shape {s:?} as an image")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let d = frame.data();
    Ok(if c == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([to_u8(d[y as usize * w + x as usize])])))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let i = y as usize * w + x as usize;
            image::Rgb([to_u8(d[i]), to_u8(d[h * w + i]), to_u8(d[2 * h * w + i])])
        }))
    })
}

pub fn from_image(img: &DynamicImage, channels: usize) -> Result<Tensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match channels {
        1 => img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        3 => {
            let raw = img.to_rgb8().into_raw();
            (0..3).flat_map(|c| (0..h * w).map(move |i| (c, i))).map(|(c, i)| raw[i * 3 + c] as f64 / 255.0).collect()
        }
        _ => return Err(Error::Input(format!("unsupported channel count {channels}"))),
    };
    Ok(Tensor::new([channels, h, w], data)?)
}

/// Write a frame; the format follows the extension (`pgm`/`ppm`/`pnm`/`png`).
pub fn write_frame(path: &Path, frame: &Tensor) -> Result<()> {
    let img = to_image(frame)?;
    let fmt = ImageFormat::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    img.save_with_format(path, fmt).map_err(|e| Error::data(path, e.to_string()))
}

/// Read a frame into `[channels, H, W]`, resized to `size = (h, w)` when given.
pub fn read_frame(path: &Path, channels: usize, size: Option<(usize, usize)>) -> Result<Tensor> {
    let mut img = image::open(path).map_err(|e| Error::data(path, e.to_string()))?;
    if let Some((h, w)) = size {
        if img.width() as usize != w || img.height() as usize != h {
            img = img.resize_exact(w as u32, h as u32, FilterType::Triangle);
        }
    }
    from_image(&img, channels)
}

pub fn image_size(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|e| Error::data(path, e.to_string()))?;
    Ok((h as usize, w as usize))
}

/// Layout of the four numbers on a box line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxFormat {
    /// `x,y,w,h` with `(x, y)` the top-left corner; the annotation convention.
    TopLeft,
    /// `cx,cy,w,h`, as used internally.
    Center,
}

/// Center-format `[L, 4]` boxes as text lines.
pub fn format_boxes(boxes: &Tensor, fmt: BoxFormat) -> String {
    let mut out = String::new();
    for t in 0..boxes.shape()[0] {
        let [cx, cy, w, h] = [0, 1, 2, 3].map(|k| boxes.get(&[t, k]));
        let (x, y) = match fmt {
            BoxFormat::TopLeft => (cx - w / 2.0, cy - h / 2.0),
            BoxFormat::Center => (cx, cy),
        };
        out.push_str(&format!("{x},{y},{w},{h}\n"));
    }
    out
}

pub fn write_boxes(path: &Path, boxes: &Tensor, fmt: BoxFormat) -> Result<()> {
    fs::write(path, format_boxes(boxes, fmt)).map_err(|e| Error::data(path, e.to_string()))
}

/// Parse box lines into center format; a line with any NaN is `None`.
/// Commas, tabs or spaces separate fields.
pub fn parse_boxes(path: &Path, text: &str, fmt: BoxFormat) -> Result<Vec<Option<[f64; 4]>>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let vals: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        let vals = match vals {
            Some(v) if v.len() == 4 => v,
            _ => return Err(Error::data(path, format!("line {}: expected four numbers x,y,w,h, got `{line}`", n + 1))),
        };
        if vals.iter().any(|v| v.is_nan()) {
            out.push(None);
        } else {
            out.push(Some(match fmt {
                BoxFormat::TopLeft => [vals[0] + vals[2] / 2.0, vals[1] + vals[3] / 2.0, vals[2], vals[3]],
                BoxFormat::Center => [vals[0], vals[1], vals[2], vals[3]],
            }));
        }
    }
    Ok(out)
}

pub fn read_boxes(path: &Path, fmt: BoxFormat) -> Result<Vec<Option<[f64; 4]>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::data(path, e.to_string()))?;
    parse_boxes(path, &text, fmt)
}

/// Draw a one-pixel box outline of `color` on a `[C, H, W]` frame, returned as RGB.
pub fn overlay(frame: &Tensor, bx: [f64; 4], color: [f64; 3]) -> Result<Tensor> {
    let s = frame.shape();
    let (h, w) = (s[1], s[2]);
    let mut rgb = if s[0] == 3 {
        frame.clone()
    } else {
        Tensor::stack(&[frame.index_axis0(0), frame.index_axis0(0), frame.index_axis0(0)])?
    };
    let clampi = |v: f64, n: usize| (v.round().max(0.0) as usize).min(n - 1);
    let x0 = clampi(bx[0] - bx[2] / 2.0, w);
    let x1 = clampi(bx[0] + bx[2] / 2.0, w);
    let y0 = clampi(bx[1] - bx[3] / 2.0, h);
    let y1 = clampi(bx[1] + bx[3] / 2.0, h);
    for i in y0..=y1 {
        for j in x0..=x1 {
            if i == y0 || i == y1 || j == x0 || j == x1 {
                for (c, &v) in color.iter().enumerate() {
                    rgb.set(&[c, i, j], v);
                }
            }
        }
    }
    Ok(rgb)
}
