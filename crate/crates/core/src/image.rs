//! 8-bit raster images and their binary netpbm (P5/P6) encoding.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {width}x{height}x{channels}")]
    BadDimensions {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("pixel buffer holds {got} bytes, expected {expected}")]
    BufferSize { expected: usize, got: usize },
}

/// Row-major interleaved 8-bit pixels with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(ImageError::BadDimensions {
                width,
                height,
                channels,
            });
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(ImageError::BufferSize {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

#[derive(Debug, Error)]
pub enum PixmapError {
    #[error("unsupported pixmap format `{0}` (only binary P5 and P6 are read)")]
    UnsupportedFormat(String),
    #[error("unsupported maxval {0} (only 255)")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel payload: expected {expected} bytes, found {got}")]
    Truncated { expected: usize, got: usize },
    #[error("malformed pixmap header: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Splits the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &data[start..*pos])
}

fn header_number(data: &[u8], pos: &mut usize, what: &str) -> Result<usize, PixmapError> {
    let tok = next_token(data, pos).ok_or_else(|| PixmapError::Malformed(format!("missing {what}")))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PixmapError::Malformed(format!("bad {what} `{}`", String::from_utf8_lossy(tok))))
}

pub fn decode_pixmap(data: &[u8]) -> Result<Image, PixmapError> {
    let mut pos = 0;
    let magic = next_token(data, &mut pos).ok_or_else(|| PixmapError::Malformed("empty file".into()))?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(PixmapError::UnsupportedFormat(String::from_utf8_lossy(other).into_owned())),
    };
    let width = header_number(data, &mut pos, "width")?;
    let height = header_number(data, &mut pos, "height")?;
    let maxval = header_number(data, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(PixmapError::UnsupportedMaxval(maxval as u32));
    }
    if width == 0 || height == 0 {
        return Err(PixmapError::Malformed(format!("zero dimension {width}x{height}")));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(PixmapError::Truncated {
            expected: width * height * channels,
            got: 0,
        });
    }
    pos += 1;
    let expected = width * height * channels;
    let payload = &data[pos..];
    if payload.len() < expected {
        return Err(PixmapError::Truncated {
            expected,
            got: payload.len(),
        });
    }
    Image::new(width, height, channels, payload[..expected].to_vec())
        .map_err(|e| PixmapError::Malformed(e.to_string()))
}

pub fn encode_pixmap(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn load_pixmap(path: impl AsRef<Path>) -> Result<Image, PixmapError> {
    decode_pixmap(&fs::read(path)?)
}

pub fn save_pixmap(img: &Image, path: impl AsRef<Path>) -> Result<(), PixmapError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pixmap(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_round_trip() {
        let img = Image::from_fn(5, 3, 3, |x, y, c| (x * 40 + y * 7 + c) as u8).unwrap();
        let back = decode_pixmap(&encode_pixmap(&img)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut data = b"P5\n# made by hand\n2 1\n# max\n255\n".to_vec();
        data.extend_from_slice(&[7, 9]);
        let img = decode_pixmap(&data).unwrap();
        assert_eq!(img.pixels(), &[7, 9]);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(decode_pixmap(b"P4\n1 1\n"), Err(PixmapError::UnsupportedFormat(_))));
        assert!(matches!(decode_pixmap(b"P7\nWIDTH 1\n"), Err(PixmapError::UnsupportedFormat(_))));
        assert!(matches!(
            decode_pixmap(b"P5\n1 1\n65535\n\0\0"),
            Err(PixmapError::UnsupportedMaxval(65535))
        ));
        assert!(matches!(
            decode_pixmap(b"P6\n2 2\n255\n\x01\x02"),
            Err(PixmapError::Truncated { expected: 12, got: 2 })
        ));
        assert!(matches!(decode_pixmap(b"P5\nx 1\n255\n"), Err(PixmapError::Malformed(_))));
    }

    #[test]
    fn image_rejects_bad_buffers() {
        assert!(Image::new(2, 2, 1, vec![0; 3]).is_err());
        assert!(Image::new(2, 2, 2, vec![0; 8]).is_err());
    }
}
