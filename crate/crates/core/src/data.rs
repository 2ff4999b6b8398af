//! Training data: image folders, raw tensor files, procedurally drawn
//! digits, and image grids for inspecting samples.
//!
//! Pixel intensities map linearly from `[0, 255]` to `[-1, 1]`.
//!
//! Raw tensor files hold a text header then little-endian `f64` values:
//!
//! ```text
//! EBM-TENSOR
//! shape=1000,1,28,28
//!
//! <values>
//! ```

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const TENSOR_MAGIC: &str = "EBM-TENSOR";
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "pnm", "ppm"];

/// A batch of training samples `[n, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Tensor,
    pub labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.batch_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_shape(&self) -> &[usize] {
        self.samples.sample_shape()
    }
}

/// How image files are turned into tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageOptions {
    /// Side of the square the center crop is resized to.
    pub size: usize,
    /// 1 for grayscale, 3 for RGB.
    pub channels: usize,
}

impl Default for ImageOptions {
    fn default() -> Self {
        Self { size: 28, channels: 1 }
    }
}

pub fn to_unit(p: u8) -> f64 {
    p as f64 / 127.5 - 1.0
}

pub fn to_pixel(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Loads a raw tensor file, or every image in a directory (sorted by name).
pub fn load_dataset(path: &Path, opts: ImageOptions) -> Result<Dataset> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let samples = if meta.is_dir() {
        load_image_dir(path, opts)?
    } else {
        load_tensor(path)?
    };
    if samples.shape().len() < 2 {
        return Err(Error::Dataset(format!("{} holds no sample axis", path.display())));
    }
    Ok(Dataset { samples, labels: None })
}

fn load_image_dir(dir: &Path, opts: ImageOptions) -> Result<Tensor> {
    if opts.size == 0 || !(opts.channels == 1 || opts.channels == 3) {
        return Err(Error::Config("image size must be positive and channels 1 or 3".into()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|x| x.to_str())
                .is_some_and(|x| IMAGE_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("no images in {}", dir.display())));
    }
    let s = opts.size as u32;
    let mut data = Vec::with_capacity(files.len() * opts.channels * opts.size * opts.size);
    for f in &files {
        let img = image::open(f).map_err(|e| Error::Format {
            path: f.clone(),
            reason: e.to_string(),
        })?;
        let img = center_square(img).resize_exact(s, s, FilterType::Triangle);
        if opts.channels == 1 {
            data.extend(img.to_luma8().pixels().map(|p| to_unit(p.0[0])));
        } else {
            let rgb = img.to_rgb8();
            for c in 0..3 {
                data.extend(rgb.pixels().map(|p| to_unit(p.0[c])));
            }
        }
    }
    Tensor::new(vec![files.len(), opts.channels, opts.size, opts.size], data)
}

fn center_square(img: DynamicImage) -> DynamicImage {
    let (w, h) = (img.width(), img.height());
    let side = w.min(h);
    img.crop_imm((w - side) / 2, (h - side) / 2, side, side)
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let split = buf
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| bad("missing header terminator".into()))?;
    let header = std::str::from_utf8(&buf[..split]).map_err(|_| bad("header is not utf-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some(TENSOR_MAGIC) {
        return Err(bad("not a tensor file".into()));
    }
    let shape: Vec<usize> = lines
        .find_map(|l| l.strip_prefix("shape="))
        .ok_or_else(|| bad("missing shape".into()))?
        .split(',')
        .map(|d| d.trim().parse::<usize>().map_err(|_| bad(format!("bad dimension `{d}`"))))
        .collect::<Result<_>>()?;
    let body = &buf[split + 2..];
    let n: usize = shape.iter().product();
    if body.len() != 8 * n {
        return Err(bad(format!("expected {} value bytes, found {}", 8 * n, body.len())));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(shape, data).map_err(|e| bad(e.to_string()))
}

pub fn save_tensor(t: &Tensor, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let f = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(f);
    let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    write!(w, "{TENSOR_MAGIC}\nshape={}\n\n", dims.join(",")).map_err(io)?;
    for v in t.data() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Stroke skeletons of the ten digits in a unit box, `y` pointing down.
fn glyph(d: u8) -> Vec<Vec<(f64, f64)>> {
    let arc = |cx: f64, cy: f64, rx: f64, ry: f64, a0: f64, a1: f64| -> Vec<(f64, f64)> {
        (0..=16)
            .map(|k| {
                let t = (a0 + (a1 - a0) * k as f64 / 16.0).to_radians();
                (cx + rx * t.cos(), cy + ry * t.sin())
            })
            .collect()
    };
    match d {
        0 => vec![arc(0.5, 0.5, 0.28, 0.4, 0.0, 360.0)],
        1 => vec![vec![(0.35, 0.25), (0.55, 0.1), (0.55, 0.9)]],
        2 => {
            let mut top = arc(0.5, 0.33, 0.27, 0.23, 200.0, 380.0);
            top.extend([(0.25, 0.9), (0.8, 0.9)]);
            vec![top]
        }
        3 => vec![arc(0.48, 0.3, 0.25, 0.2, 200.0, 450.0), arc(0.48, 0.69, 0.28, 0.21, 270.0, 520.0)],
        4 => vec![vec![(0.65, 0.9), (0.65, 0.1), (0.2, 0.65), (0.82, 0.65)]],
        5 => {
            let mut s = vec![(0.75, 0.1), (0.3, 0.1), (0.27, 0.45)];
            s.extend(arc(0.48, 0.64, 0.28, 0.25, 235.0, 490.0));
            vec![s]
        }
        6 => {
            let mut s = arc(0.6, 0.45, 0.35, 0.38, 260.0, 180.0);
            s.extend(arc(0.5, 0.67, 0.25, 0.23, 180.0, 540.0));
            vec![s]
        }
        7 => vec![vec![(0.2, 0.1), (0.8, 0.1), (0.42, 0.9)]],
        8 => vec![arc(0.5, 0.3, 0.22, 0.2, 0.0, 360.0), arc(0.5, 0.7, 0.27, 0.2, 0.0, 360.0)],
        _ => {
            let mut s = arc(0.5, 0.33, 0.25, 0.23, 0.0, 360.0);
            s.extend([(0.75, 0.33), (0.68, 0.9)]);
            vec![s]
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Renders one digit on a `size x size` canvas with a random similarity
/// transform and stroke width, values in `[-1, 1]`.
pub fn draw_digit<R: Rng + ?Sized>(digit: u8, size: usize, rng: &mut R) -> Vec<f64> {
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let angle = (jitter.sample(rng) * 8.0f64).clamp(-15.0, 15.0) * PI / 180.0;
    let scale = rng.random_range(0.62..0.78) * size as f64;
    let shift = (
        rng.random_range(-1.5..1.5) + 0.5 * size as f64,
        rng.random_range(-1.5..1.5) + 0.5 * size as f64,
    );
    let width = rng.random_range(1.0..1.8) * size as f64 / 28.0;
    let slant = rng.random_range(-0.15..0.15);
    let (c, s) = (angle.cos(), angle.sin());
    let strokes: Vec<Vec<(f64, f64)>> = glyph(digit % 10)
        .into_iter()
        .map(|st| {
            st.into_iter()
                .map(|(x, y)| {
                    let (u, v) = (x - 0.5 + slant * (0.5 - y), y - 0.5);
                    (shift.0 + scale * (c * u - s * v), shift.1 + scale * (s * u + c * v))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(size * size);
    for py in 0..size {
        for px in 0..size {
            let p = (px as f64 + 0.5, py as f64 + 0.5);
            let d = strokes
                .iter()
                .flat_map(|st| st.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let ink = (width + 0.5 - d).clamp(0.0, 1.0);
            out.push(2.0 * ink - 1.0);
        }
    }
    out
}

/// `n` drawn digits `[n, 1, size, size]`, labels cycling through 0..9.
pub fn synthetic_digits<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 || size < 8 {
        return Err(Error::Config("synthetic digits need n >= 1 and size >= 8".into()));
    }
    let mut data = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let d = (i % 10) as u8;
        labels.push(d);
        data.extend(draw_digit(d, size, rng));
    }
    Ok(Dataset {
        samples: Tensor::new(vec![n, 1, size, size], data)?,
        labels: Some(labels),
    })
}

/// Tiles a batch `[n, C, H, W]` (C = 1 or 3) into a grid image with `cols`
/// columns and a one-pixel border.
pub fn image_grid(batch: &Tensor, cols: usize) -> Result<DynamicImage> {
    let shape = batch.shape();
    if shape.len() != 4 || !(shape[1] == 1 || shape[1] == 3) || cols == 0 {
        return Err(Error::dim("image grid", &[batch.batch_len(), 1, 28, 28], shape));
    }
    let (n, ch, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let cols = cols.min(n);
    let rows = n.div_ceil(cols);
    let (gw, gh) = ((cols * (w + 1) + 1) as u32, (rows * (h + 1) + 1) as u32);
    let plane = h * w;
    let at = |i: usize, c: usize, y: usize, x: usize| to_pixel(batch.sample(i)[c * plane + y * w + x]);
    let origin = |i: usize| ((i % cols) * (w + 1) + 1, (i / cols) * (h + 1) + 1);
    if ch == 1 {
        let mut img: GrayImage = ImageBuffer::from_pixel(gw, gh, Luma([128]));
        for i in 0..n {
            let (ox, oy) = origin(i);
            for y in 0..h {
                for x in 0..w {
                    img.put_pixel((ox + x) as u32, (oy + y) as u32, Luma([at(i, 0, y, x)]));
                }
            }
        }
        Ok(DynamicImage::ImageLuma8(img))
    } else {
        let mut img: RgbImage = ImageBuffer::from_pixel(gw, gh, Rgb([128, 128, 128]));
        for i in 0..n {
            let (ox, oy) = origin(i);
            for y in 0..h {
                for x in 0..w {
                    let px = Rgb([at(i, 0, y, x), at(i, 1, y, x), at(i, 2, y, x)]);
                    img.put_pixel((ox + x) as u32, (oy + y) as u32, px);
                }
            }
        }
        Ok(DynamicImage::ImageRgb8(img))
    }
}

pub fn save_image_grid(batch: &Tensor, cols: usize, path: &Path) -> Result<()> {
    image_grid(batch, cols)?.save(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Upscales a grid by an integer factor for viewing.
pub fn upscale(img: &DynamicImage, factor: u32) -> DynamicImage {
    DynamicImage::from(imageops::resize(img, img.width() * factor, img.height() * factor, FilterType::Nearest))
}
