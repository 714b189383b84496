//! Grayscale image I/O and synthetic test data.
//!
//! Images are vectors of intensities in [0, 1], stored row-major. On disk they
//! are PGM files (both the ASCII `P2` and binary `P5` flavors), scaled to the
//! file's maxval. Masks are 0/1 text grids.

use std::io::{Read, Write};
use std::path::Path;

use crate::rng::{streams, SplitMix64};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("pgm format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Image { rows, cols, data }
    }
}

/// A piecewise-constant test image: background plus rectangles and a disk at
/// fixed fractional positions. Deterministic in the shape alone.
pub fn synthetic_image(rows: usize, cols: usize) -> Image {
    let mut data = vec![0.2; rows * cols];
    let frac = |lo: f64, hi: f64, n: usize| -> (usize, usize) {
        (((lo * n as f64) as usize).min(n - 1), ((hi * n as f64) as usize).min(n))
    };
    // bright rectangle
    let (r0, r1) = frac(0.10, 0.45, rows);
    let (c0, c1) = frac(0.12, 0.55, cols);
    for i in r0..r1 {
        for j in c0..c1 {
            data[i * cols + j] = 0.85;
        }
    }
    // mid-gray rectangle
    let (r0, r1) = frac(0.55, 0.90, rows);
    let (c0, c1) = frac(0.50, 0.92, cols);
    for i in r0..r1 {
        for j in c0..c1 {
            data[i * cols + j] = 0.55;
        }
    }
    // dark disk
    let (cy, cx) = (0.68 * rows as f64, 0.28 * cols as f64);
    let radius = 0.16 * rows.min(cols) as f64;
    for i in 0..rows {
        for j in 0..cols {
            let dy = i as f64 - cy;
            let dx = j as f64 - cx;
            if (dy * dy + dx * dx).sqrt() <= radius {
                data[i * cols + j] = 0.05;
            }
        }
    }
    Image::new(rows, cols, data)
}

/// Add seeded Gaussian noise with the given standard deviation (Box-Muller
/// over the noise stream of `seed`). Intensities are left unclipped; PGM
/// output clamps at write time.
pub fn add_gaussian_noise(img: &Image, std: f64, seed: u64) -> Image {
    let mut rng = SplitMix64::with_stream(seed, streams::NOISE);
    let data = img.data.iter().map(|v| v + std * rng.normal()).collect();
    Image::new(img.rows, img.cols, data)
}

/// Mask keeping one row out of every `k` (the classic structured-missing
/// pattern for inpainting demos).
pub fn every_kth_row_mask(rows: usize, cols: usize, k: usize) -> Vec<u8> {
    assert!(k >= 1);
    let mut bits = vec![0u8; rows * cols];
    for i in (0..rows).step_by(k) {
        for j in 0..cols {
            bits[i * cols + j] = 1;
        }
    }
    bits
}

/// Random mask keeping approximately `keep_fraction` of the pixels.
pub fn random_mask(rows: usize, cols: usize, keep_fraction: f64, seed: u64) -> Vec<u8> {
    assert!((0.0..=1.0).contains(&keep_fraction));
    let mut rng = SplitMix64::with_stream(seed, streams::DATA);
    (0..rows * cols)
        .map(|_| if rng.uniform01() < keep_fraction { 1 } else { 0 })
        .collect()
}

/// Apply a 0/1 mask to an image (lost pixels read as 0).
pub fn apply_mask(img: &Image, bits: &[u8]) -> Image {
    assert_eq!(img.data.len(), bits.len());
    let data = img
        .data
        .iter()
        .zip(bits)
        .map(|(v, &b)| if b == 1 { *v } else { 0.0 })
        .collect();
    Image::new(img.rows, img.cols, data)
}

/// Write a PGM file; binary selects `P5`, otherwise ASCII `P2`. Intensities
/// are clamped to [0, 1] and scaled to maxval 255.
pub fn write_pgm(path: &Path, img: &Image, binary: bool) -> Result<(), ImageError> {
    let mut file = std::fs::File::create(path)?;
    let levels: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    if binary {
        write!(file, "P5\n{} {}\n255\n", img.cols, img.rows)?;
        file.write_all(&levels)?;
    } else {
        write!(file, "P2\n{} {}\n255\n", img.cols, img.rows)?;
        for chunk in levels.chunks(16) {
            let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
            writeln!(file, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

/// Read a `P2` or `P5` PGM file, scaling intensities to [0, 1].
pub fn read_pgm(path: &Path) -> Result<Image, ImageError> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    parse_pgm(&raw)
}

fn parse_pgm(raw: &[u8]) -> Result<Image, ImageError> {
    let mut pos = 0usize;
    let mut token = |raw: &[u8]| -> Result<String, ImageError> {
        // skip whitespace and comment lines
        loop {
            while pos < raw.len() && raw[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < raw.len() && raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Format("unexpected end of file".into()));
        }
        Ok(String::from_utf8_lossy(&raw[start..pos]).into_owned())
    };

    let magic = token(raw)?;
    if magic != "P2" && magic != "P5" {
        return Err(ImageError::Format(format!("unsupported magic {magic:?}")));
    }
    let cols: usize = token(raw)?
        .parse()
        .map_err(|_| ImageError::Format("bad width".into()))?;
    let rows: usize = token(raw)?
        .parse()
        .map_err(|_| ImageError::Format("bad height".into()))?;
    let maxval: f64 = token(raw)?
        .parse()
        .map_err(|_| ImageError::Format("bad maxval".into()))?;
    if maxval <= 0.0 || maxval > 255.0 {
        return Err(ImageError::Format(format!("unsupported maxval {maxval}")));
    }

    let n = rows * cols;
    let mut data = Vec::with_capacity(n);
    if magic == "P5" {
        let start = pos + 1; // single whitespace after maxval
        if raw.len() < start + n {
            return Err(ImageError::Format("truncated P5 payload".into()));
        }
        for &b in &raw[start..start + n] {
            data.push(b as f64 / maxval);
        }
    } else {
        for _ in 0..n {
            let v: f64 = token(raw)?
                .parse()
                .map_err(|_| ImageError::Format("bad pixel".into()))?;
            data.push(v / maxval);
        }
    }
    Ok(Image::new(rows, cols, data))
}

/// Serialize a mask as a 0/1 text grid.
pub fn mask_to_text(bits: &[u8], rows: usize, cols: usize) -> String {
    assert_eq!(bits.len(), rows * cols);
    let mut out = String::new();
    for i in 0..rows {
        let line: Vec<&str> = bits[i * cols..(i + 1) * cols]
            .iter()
            .map(|&b| if b == 1 { "1" } else { "0" })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
