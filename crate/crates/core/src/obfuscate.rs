//! Classic image obfuscation baselines: pixelation, Gaussian blurring and
//! the P3 split of quantized DCT coefficients into a public image and a
//! secret part.

use std::f64::consts::PI;
use std::sync::OnceLock;

use thiserror::Error;

use crate::image::Image;

#[derive(Debug, Error)]
pub enum ObfuscateError {
    #[error("pixelation factor must be at least 1")]
    BadFactor,
    #[error("P3 threshold must be at least 1")]
    BadThreshold,
    #[error("inconsistent P3 package: {0}")]
    Inconsistent(String),
    #[error("malformed P3 stream: {0}")]
    Malformed(String),
}

pub type Result<T, E = ObfuscateError> = std::result::Result<T, E>;

/// Replaces each `factor`×`factor` grid by its per-channel mean, rounded
/// half up. Grids along the right and bottom edges may be smaller.
pub fn pixelate(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(ObfuscateError::BadFactor);
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = img.clone();
    for gy in (0..h).step_by(factor) {
        for gx in (0..w).step_by(factor) {
            let (ye, xe) = ((gy + factor).min(h), (gx + factor).min(w));
            let count = ((ye - gy) * (xe - gx)) as u64;
            for c in 0..ch {
                let mut sum = 0u64;
                for y in gy..ye {
                    for x in gx..xe {
                        sum += u64::from(img.get(x, y, c));
                    }
                }
                let mean = ((2 * sum + count) / (2 * count)) as u8;
                for y in gy..ye {
                    for x in gx..xe {
                        out.set(x, y, c, mean);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius` with
/// `sigma = radius / 2`.
pub fn gaussian_kernel(radius: usize) -> Vec<f64> {
    if radius == 0 {
        return vec![1.0];
    }
    let sigma = radius as f64 / 2.0;
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Mirror index without repeating the edge sample (`d c b | a b c d | c b a`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable Gaussian blur with reflect padding; the result is rounded and
/// clamped to 8 bits.
pub fn gaussian_blur(img: &Image, radius: usize) -> Image {
    if radius == 0 {
        return img.clone();
    }
    let k = gaussian_kernel(radius);
    let r = radius as isize;
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut horiz = vec![0.0; w * h * ch];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, &kv) in k.iter().enumerate() {
                    let sx = reflect(x as isize + t as isize - r, w);
                    acc += kv * f64::from(img.get(sx, y, c));
                }
                horiz[(y * w + x) * ch + c] = acc;
            }
        }
    }
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, &kv) in k.iter().enumerate() {
                    let sy = reflect(y as isize + t as isize - r, h);
                    acc += kv * horiz[(sy * w + x) * ch + c];
                }
                out.set(x, y, c, acc.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

/// Standard JPEG luminance quantization table (the quality-50 base table),
/// row-major by vertical then horizontal frequency.
pub const LUMINANCE_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// `basis[u][x] = c(u)/2 · cos((2x+1)uπ/16)`, so a 2-D transform is
/// `F = B f Bᵀ` and its inverse `f = Bᵀ F B`.
fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let cu = if u == 0 { 0.5f64.sqrt() } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = cu / 2.0 * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

pub fn forward_dct(block: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for u in 0..8 {
        for x in 0..8 {
            tmp[u * 8 + x] = (0..8).map(|y| b[u][y] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            out[u * 8 + v] = (0..8).map(|x| tmp[u * 8 + x] * b[v][x]).sum();
        }
    }
    out
}

pub fn inverse_dct(coeffs: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for v in 0..8 {
            tmp[y * 8 + v] = (0..8).map(|u| b[u][y] * coeffs[u * 8 + v]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| tmp[y * 8 + v] * b[v][x]).sum();
        }
    }
    out
}

/// Quantized coefficients of every 8×8 block of every channel, with the
/// image padded by edge replication to multiples of 8.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientGrid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// `blocks · 64` values; block id `c·blocks_per_channel + by·blocks_x + bx`.
    pub coefficients: Vec<i16>,
}

impl CoefficientGrid {
    pub fn blocks_per_channel(&self) -> usize {
        self.blocks_x * self.blocks_y
    }

    pub fn block_count(&self) -> usize {
        self.blocks_per_channel() * self.channels
    }

    pub fn block(&self, id: usize) -> &[i16] {
        &self.coefficients[id * 64..(id + 1) * 64]
    }

    fn from_image(img: &Image) -> Self {
        let (w, h, ch) = (img.width(), img.height(), img.channels());
        let (bx_n, by_n) = (w.div_ceil(8), h.div_ceil(8));
        let mut coefficients = Vec::with_capacity(ch * bx_n * by_n * 64);
        for c in 0..ch {
            for by in 0..by_n {
                for bx in 0..bx_n {
                    let mut block = [0.0; 64];
                    for y in 0..8 {
                        for x in 0..8 {
                            let px = img.get((bx * 8 + x).min(w - 1), (by * 8 + y).min(h - 1), c);
                            block[y * 8 + x] = f64::from(px) - 128.0;
                        }
                    }
                    let f = forward_dct(&block);
                    coefficients.extend(
                        f.iter()
                            .zip(LUMINANCE_QUANT.iter())
                            .map(|(&v, &q)| (v / f64::from(q)).round() as i16),
                    );
                }
            }
        }
        Self {
            width: w,
            height: h,
            channels: ch,
            blocks_x: bx_n,
            blocks_y: by_n,
            coefficients,
        }
    }

    /// Dequantizes, inverts the transform, and crops the padding.
    pub fn render(&self) -> Image {
        let (w, h, ch) = (self.width, self.height, self.channels);
        let mut img = Image::filled(w, h, ch, 0).expect("grid dimensions are positive");
        for c in 0..ch {
            for by in 0..self.blocks_y {
                for bx in 0..self.blocks_x {
                    let id = c * self.blocks_per_channel() + by * self.blocks_x + bx;
                    let mut f = [0.0; 64];
                    for (i, (&q, &t)) in self.block(id).iter().zip(LUMINANCE_QUANT.iter()).enumerate() {
                        f[i] = f64::from(q) * f64::from(t);
                    }
                    let pixels = inverse_dct(&f);
                    for y in 0..8 {
                        for x in 0..8 {
                            let (px, py) = (bx * 8 + x, by * 8 + y);
                            if px < w && py < h {
                                let v = (pixels[y * 8 + x] + 128.0).round().clamp(0.0, 255.0) as u8;
                                img.set(px, py, c, v);
                            }
                        }
                    }
                }
            }
        }
        img
    }
}

pub fn quantized_coefficients(img: &Image) -> CoefficientGrid {
    CoefficientGrid::from_image(img)
}

/// The image as represented by its quantized coefficients alone; what any
/// P3 split decodes back to.
pub fn p3_reference(img: &Image) -> Image {
    CoefficientGrid::from_image(img).render()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecretEntry {
    pub block: u32,
    pub coefficient: u8,
    pub value: i16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P3Package {
    /// Rendering of the public coefficients.
    pub public_image: Image,
    /// Coefficient stream of the public part, secret positions zeroed.
    pub public: CoefficientGrid,
    pub secret: Vec<SecretEntry>,
    pub threshold: u32,
}

/// Takes the DC coefficient and every AC coefficient with magnitude
/// strictly above `threshold` out of `block`, returning `(index, value)`.
pub fn split_block(block: &mut [i16], threshold: u32) -> Vec<(u8, i16)> {
    let mut taken = Vec::new();
    for (k, q) in block.iter_mut().enumerate() {
        if k == 0 || u32::from(q.unsigned_abs()) > threshold {
            taken.push((k as u8, *q));
            *q = 0;
        }
    }
    taken
}

pub fn p3_encode(img: &Image, threshold: u32) -> Result<P3Package> {
    if threshold == 0 {
        return Err(ObfuscateError::BadThreshold);
    }
    let mut public = CoefficientGrid::from_image(img);
    let mut secret = Vec::new();
    for (block, chunk) in public.coefficients.chunks_mut(64).enumerate() {
        secret.extend(split_block(chunk, threshold).into_iter().map(|(coefficient, value)| SecretEntry {
            block: block as u32,
            coefficient,
            value,
        }));
    }
    Ok(P3Package {
        public_image: public.render(),
        public,
        secret,
        threshold,
    })
}

/// Re-inserts the secret entries into the public coefficient stream.
pub fn p3_merge(public: &CoefficientGrid, secret: &[SecretEntry]) -> Result<CoefficientGrid> {
    let mut grid = public.clone();
    let blocks = grid.block_count();
    for e in secret {
        if e.block as usize >= blocks || e.coefficient >= 64 {
            return Err(ObfuscateError::Inconsistent(format!(
                "entry at block {} coefficient {} outside {blocks} blocks",
                e.block, e.coefficient
            )));
        }
        let slot = &mut grid.coefficients[e.block as usize * 64 + e.coefficient as usize];
        if *slot != 0 {
            return Err(ObfuscateError::Inconsistent(format!(
                "block {} coefficient {} is set in both parts",
                e.block, e.coefficient
            )));
        }
        *slot = e.value;
    }
    Ok(grid)
}

pub fn p3_decode(pkg: &P3Package) -> Result<Image> {
    let g = &pkg.public;
    if g.width != pkg.public_image.width()
        || g.height != pkg.public_image.height()
        || g.channels != pkg.public_image.channels()
        || g.blocks_x != g.width.div_ceil(8)
        || g.blocks_y != g.height.div_ceil(8)
        || g.coefficients.len() != g.block_count() * 64
    {
        return Err(ObfuscateError::Inconsistent("grid metadata disagrees with the public image".into()));
    }
    Ok(p3_merge(g, &pkg.secret)?.render())
}

const SECRET_RECORD_BYTES: usize = 7;
const PUBLIC_COEFFICIENT_BYTES: usize = 2;

/// Share of bytes held by the secret: each secret record takes 7 bytes and
/// each coefficient left in the public stream 2 bytes (headers excluded).
pub fn secret_proportion(pkg: &P3Package) -> f64 {
    let secret = pkg.secret.len() * SECRET_RECORD_BYTES;
    let public = (pkg.public.coefficients.len() - pkg.secret.len()) * PUBLIC_COEFFICIENT_BYTES;
    secret as f64 / (secret + public) as f64
}

pub const SECRET_MAGIC: [u8; 4] = *b"P3SK";
pub const SECRET_VERSION: u16 = 1;
const SECRET_HEADER_BYTES: usize = 4 + 2 + 4 + 4 + 1 + 4;

/// Header (magic, version, width, height, channels, threshold) followed by
/// `(block: u32, coefficient: u8, value: i16)` records, all little-endian.
pub fn serialize_secret(pkg: &P3Package) -> Vec<u8> {
    let mut out = Vec::with_capacity(SECRET_HEADER_BYTES + pkg.secret.len() * SECRET_RECORD_BYTES);
    out.extend_from_slice(&SECRET_MAGIC);
    out.extend_from_slice(&SECRET_VERSION.to_le_bytes());
    out.extend_from_slice(&(pkg.public.width as u32).to_le_bytes());
    out.extend_from_slice(&(pkg.public.height as u32).to_le_bytes());
    out.push(pkg.public.channels as u8);
    out.extend_from_slice(&pkg.threshold.to_le_bytes());
    for e in &pkg.secret {
        out.extend_from_slice(&e.block.to_le_bytes());
        out.push(e.coefficient);
        out.extend_from_slice(&e.value.to_le_bytes());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretFile {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub threshold: u32,
    pub entries: Vec<SecretEntry>,
}

pub fn deserialize_secret(bytes: &[u8]) -> Result<SecretFile> {
    let bad = |m: &str| ObfuscateError::Malformed(m.into());
    if bytes.len() < SECRET_HEADER_BYTES {
        return Err(bad("shorter than the header"));
    }
    if bytes[..4] != SECRET_MAGIC {
        return Err(bad("wrong magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SECRET_VERSION {
        return Err(ObfuscateError::Malformed(format!("unsupported version {version}")));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (width, height, channels, threshold) = (u32_at(6) as usize, u32_at(10) as usize, bytes[14] as usize, u32_at(15));
    let body = &bytes[SECRET_HEADER_BYTES..];
    if !body.len().is_multiple_of(SECRET_RECORD_BYTES) {
        return Err(bad("trailing partial record"));
    }
    let entries = body
        .chunks_exact(SECRET_RECORD_BYTES)
        .map(|r| SecretEntry {
            block: u32::from_le_bytes(r[..4].try_into().unwrap()),
            coefficient: r[4],
            value: i16::from_le_bytes([r[5], r[6]]),
        })
        .collect();
    Ok(SecretFile {
        width,
        height,
        channels,
        threshold,
        entries,
    })
}

/// Restores the full image from the public coefficient stream and a
/// deserialized secret.
pub fn p3_restore(public: &CoefficientGrid, secret: &SecretFile) -> Result<Image> {
    if (secret.width, secret.height, secret.channels) != (public.width, public.height, public.channels) {
        return Err(ObfuscateError::Inconsistent("secret header does not match the public part".into()));
    }
    Ok(p3_merge(public, &secret.entries)?.render())
}

pub const PUBLIC_MAGIC: [u8; 4] = *b"P3PC";
const PUBLIC_HEADER_BYTES: usize = 4 + 2 + 4 + 4 + 1;

/// The public coefficient stream: header (magic, version, width, height,
/// channels) followed by every quantized coefficient as little-endian i16
/// in block order.
pub fn serialize_public(grid: &CoefficientGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(PUBLIC_HEADER_BYTES + 2 * grid.coefficients.len());
    out.extend_from_slice(&PUBLIC_MAGIC);
    out.extend_from_slice(&SECRET_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.width as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height as u32).to_le_bytes());
    out.push(grid.channels as u8);
    for q in &grid.coefficients {
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn deserialize_public(bytes: &[u8]) -> Result<CoefficientGrid> {
    let bad = |m: String| ObfuscateError::Malformed(m);
    if bytes.len() < PUBLIC_HEADER_BYTES || bytes[..4] != PUBLIC_MAGIC {
        return Err(bad("not a public coefficient stream".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SECRET_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (width, height, channels) = (u32_at(6), u32_at(10), bytes[14] as usize);
    if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
        return Err(bad(format!("bad geometry {width}x{height}x{channels}")));
    }
    let (blocks_x, blocks_y) = (width.div_ceil(8), height.div_ceil(8));
    let expected = blocks_x * blocks_y * channels * 64;
    let body = &bytes[PUBLIC_HEADER_BYTES..];
    if body.len() != 2 * expected {
        return Err(bad(format!("{} coefficient bytes, expected {}", body.len(), 2 * expected)));
    }
    Ok(CoefficientGrid {
        width,
        height,
        channels,
        blocks_x,
        blocks_y,
        coefficients: body.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Image {
        Image::from_fn(w, h, 1, |x, y, _| f(x, y)).unwrap()
    }

    fn textured(w: usize, h: usize, ch: usize, seed: u32) -> Image {
        Image::from_fn(w, h, ch, |x, y, c| {
            let v = (x as u32 * 37 + y as u32 * 91 + c as u32 * 13 + seed).wrapping_mul(2_654_435_761) >> 24;
            ((v as usize + 4 * x + 3 * y) % 256) as u8
        })
        .unwrap()
    }

    #[test]
    fn pixelate_examples() {
        let img = gray(2, 2, |x, y| [0, 2, 4, 6][y * 2 + x]);
        assert_eq!(pixelate(&img, 2).unwrap().pixels(), &[3, 3, 3, 3]);
        let t = textured(7, 5, 3, 1);
        assert_eq!(pixelate(&t, 1).unwrap(), t);
        assert!(matches!(pixelate(&t, 0), Err(ObfuscateError::BadFactor)));
    }

    #[test]
    fn pixelate_matches_brute_force_grid_average() {
        let img = gray(4, 4, |x, y| (y * 4 + x) as u8 * 10);
        let out = pixelate(&img, 2).unwrap();
        for (qx, qy) in [(0, 0), (2, 0), (0, 2), (2, 2)] {
            let vals: Vec<f64> = (0..4).map(|i| img.get(qx + i % 2, qy + i / 2, 0) as f64).collect();
            let mean = vals.iter().sum::<f64>() / 4.0;
            let expect = (mean + 0.5).floor() as u8;
            for i in 0..4 {
                assert_eq!(out.get(qx + i % 2, qy + i / 2, 0), expect);
            }
        }
        // edge grids cover only their real extent
        let odd = gray(3, 1, |x, _| [10, 20, 101][x]);
        assert_eq!(pixelate(&odd, 2).unwrap().pixels(), &[15, 15, 101]);
    }

    #[test]
    fn pixelate_rounds_half_up() {
        let img = gray(2, 1, |x, _| [1, 2][x]);
        assert_eq!(pixelate(&img, 2).unwrap().pixels(), &[2, 2]);
    }

    #[test]
    fn blur_identity_and_constant() {
        let t = textured(9, 6, 3, 2);
        assert_eq!(gaussian_blur(&t, 0), t);
        let c = Image::filled(10, 7, 3, 77).unwrap();
        for r in [1, 3, 16] {
            assert_eq!(gaussian_blur(&c, r), c);
        }
    }

    #[test]
    fn blur_impulse_equals_scaled_kernel() {
        let radius = 3;
        let (n, v) = (15usize, 250.0);
        let mut img = Image::filled(n, n, 1, 0).unwrap();
        img.set(7, 7, 0, 250);
        let out = gaussian_blur(&img, radius);
        // independent evaluation of the separable kernel
        let sigma = radius as f64 / 2.0;
        let g = |d: f64| (-d * d / (2.0 * sigma * sigma)).exp();
        let z: f64 = (-3..=3).map(|d| g(d as f64)).sum();
        for y in 0..n {
            for x in 0..n {
                let (dx, dy) = (x as f64 - 7.0, y as f64 - 7.0);
                let expect = if dx.abs() <= 3.0 && dy.abs() <= 3.0 {
                    (v * g(dx) * g(dy) / (z * z)).round() as u8
                } else {
                    0
                };
                assert_eq!(out.get(x, y, 0), expect, "at ({x},{y})");
            }
        }
    }

    #[test]
    fn reflect_padding_skips_edge_sample() {
        assert_eq!(reflect(-1, 4), 1);
        assert_eq!(reflect(-3, 4), 3);
        assert_eq!(reflect(4, 4), 2);
        assert_eq!(reflect(9, 4), 3);
        assert_eq!(reflect(-5, 1), 0);
    }

    #[test]
    fn dct_round_trip_and_constant_block() {
        let block: [f64; 64] = std::array::from_fn(|i| ((i * 17) % 255) as f64 - 128.0);
        let back = inverse_dct(&forward_dct(&block));
        for (a, b) in block.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        let flat = forward_dct(&[10.0; 64]);
        assert!((flat[0] - 80.0).abs() < 1e-9);
        assert!(flat[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn strict_threshold_rule_on_crafted_block() {
        let mut block = [0i16; 64];
        block[..3].copy_from_slice(&[80, 5, 1]);
        assert_eq!(split_block(&mut block, 1), vec![(0, 80), (1, 5)]);
        assert_eq!(&block[..3], &[0, 0, 1]);
        let mut block = [0i16; 64];
        block[..4].copy_from_slice(&[-3, 4, -4, 2]);
        assert_eq!(split_block(&mut block, 4), vec![(0, -3)]);
    }

    #[test]
    fn constant_image_keeps_only_dc_and_public_is_mid_gray() {
        let img = Image::filled(16, 8, 1, 200).unwrap();
        let pkg = p3_encode(&img, 1).unwrap();
        assert_eq!(pkg.secret.len(), 2);
        assert!(pkg.secret.iter().all(|e| e.coefficient == 0));
        assert!(pkg.public_image.pixels().iter().all(|&p| p == 128));
        let blocks = 2.0;
        let expect = 7.0 * blocks / (7.0 * blocks + 2.0 * (64.0 * blocks - blocks));
        assert!((secret_proportion(&pkg) - expect).abs() < 1e-15);
    }

    #[test]
    fn decode_is_threshold_invariant_and_exact() {
        for (i, img) in [textured(20, 13, 1, 3), textured(17, 9, 3, 4)].iter().enumerate() {
            let reference = p3_reference(img);
            for t in [1, 2, 10, 20, 1000] {
                let pkg = p3_encode(img, t).unwrap();
                assert_eq!(p3_decode(&pkg).unwrap(), reference, "image {i} threshold {t}");
                let withheld = P3Package {
                    secret: vec![],
                    ..pkg.clone()
                };
                assert_eq!(p3_decode(&withheld).unwrap(), pkg.public_image);
            }
        }
    }

    #[test]
    fn partition_property_and_monotone_proportion() {
        let img = textured(24, 16, 1, 5);
        let full = quantized_coefficients(&img);
        let mut last = f64::INFINITY;
        for t in [1, 5, 10, 20, 40] {
            let pkg = p3_encode(&img, t).unwrap();
            for (k, (&all, &public)) in full.coefficients.iter().zip(&pkg.public.coefficients).enumerate() {
                let in_secret = pkg
                    .secret
                    .iter()
                    .find(|e| e.block as usize * 64 + e.coefficient as usize == k);
                match in_secret {
                    Some(e) => {
                        assert_eq!(public, 0);
                        assert_eq!(e.value, all);
                        assert!(e.coefficient == 0 || u32::from(e.value.unsigned_abs()) > t);
                    }
                    None => {
                        assert_eq!(public, all);
                        assert!(k % 64 != 0);
                    }
                }
            }
            let p = secret_proportion(&pkg);
            assert!(p <= last && p > 0.0 && p <= 1.0);
            last = p;
        }
    }

    #[test]
    fn proportion_is_one_when_everything_is_secret() {
        let grid = CoefficientGrid {
            width: 8,
            height: 8,
            channels: 1,
            blocks_x: 1,
            blocks_y: 1,
            coefficients: vec![0; 64],
        };
        let pkg = P3Package {
            public_image: grid.render(),
            secret: (0..64)
                .map(|k| SecretEntry {
                    block: 0,
                    coefficient: k,
                    value: 9,
                })
                .collect(),
            public: grid,
            threshold: 1,
        };
        assert_eq!(secret_proportion(&pkg), 1.0);
    }

    #[test]
    fn secret_serialization_round_trip() {
        let img = textured(12, 10, 3, 6);
        let pkg = p3_encode(&img, 10).unwrap();
        let bytes = serialize_secret(&pkg);
        assert_eq!(bytes.len(), 19 + 7 * pkg.secret.len());
        let file = deserialize_secret(&bytes).unwrap();
        assert_eq!(file.entries, pkg.secret);
        assert_eq!((file.width, file.height, file.channels, file.threshold), (12, 10, 3, 10));
        assert_eq!(p3_restore(&pkg.public, &file).unwrap(), p3_reference(&img));
        let public = deserialize_public(&serialize_public(&pkg.public)).unwrap();
        assert_eq!(public, pkg.public);
        assert_eq!(p3_restore(&public, &file).unwrap(), p3_reference(&img));
        assert!(deserialize_public(&serialize_public(&pkg.public)[..40]).is_err());
        assert!(deserialize_secret(&bytes[..bytes.len() - 1]).is_err());
        assert!(deserialize_secret(b"nope").is_err());
    }

    #[test]
    fn zero_threshold_rejected() {
        assert!(matches!(p3_encode(&textured(8, 8, 1, 0), 0), Err(ObfuscateError::BadThreshold)));
    }
}
