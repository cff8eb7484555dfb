//! Minimal PGM (portable graymap) reader/writer.
//!
//! Reads both the ASCII (P2) and binary (P5) encodings with maxval 255,
//! tolerating comments and arbitrary whitespace in the header. Writing always
//! produces the canonical binary form `P5\n<w> <h>\n255\n<pixels>`, so a file
//! in that form survives a load/save cycle byte for byte, and load-save-load
//! is a fixpoint for every valid input.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {detail}")]
    MalformedHeader { detail: String },
    #[error("truncated pixel data: expected {expected} values, got {got}")]
    TruncatedData { expected: usize, got: usize },
}

fn malformed(detail: impl Into<String>) -> PgmError {
    PgmError::MalformedHeader { detail: detail.into() }
}

/// 8-bit grayscale raster, row-major from the top-left corner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<GrayImage, PgmError> {
        if width == 0 || height == 0 {
            return Err(malformed(format!("degenerate size {width}x{height}")));
        }
        if width * height != pixels.len() {
            return Err(malformed(format!(
                "size {width}x{height} disagrees with {} pixels",
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Pixel at column x, row y (row 0 is the top).
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

struct Tokenizer<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokenizer<'a> {
    fn new(bytes: &'a [u8]) -> Tokenizer<'a> {
        Tokenizer { bytes, pos: 0 }
    }

    /// Skip whitespace and `#` comments (which run to the end of the line).
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        if self.pos > start {
            Some(&self.bytes[start..self.pos])
        } else {
            None
        }
    }

    fn integer(&mut self, what: &str) -> Result<usize, PgmError> {
        let tok = self.token().ok_or_else(|| malformed(format!("missing {what}")))?;
        let text = std::str::from_utf8(tok).map_err(|_| malformed(format!("non-ASCII {what}")))?;
        text.parse().map_err(|_| malformed(format!("cannot parse {what} from {text:?}")))
    }
}

/// Decode a PGM byte stream (P2 or P5, maxval 255).
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let mut tok = Tokenizer::new(bytes);
    let magic = tok.token().ok_or_else(|| malformed("empty input"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(malformed(format!(
                "unsupported magic {:?} (expected P2 or P5)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = tok.integer("width")?;
    let height = tok.integer("height")?;
    let maxval = tok.integer("maxval")?;
    if maxval != 255 {
        return Err(malformed(format!("unsupported maxval {maxval} (only 255)")));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| malformed("image size overflows"))?;

    let pixels = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if tok.pos >= bytes.len() || !bytes[tok.pos].is_ascii_whitespace() {
            return Err(malformed("missing separator before binary raster"));
        }
        let start = tok.pos + 1;
        let got = bytes.len().saturating_sub(start);
        if got < count {
            return Err(PgmError::TruncatedData { expected: count, got });
        }
        bytes[start..start + count].to_vec()
    } else {
        let mut pixels = Vec::with_capacity(count);
        while pixels.len() < count {
            let Some(word) = tok.token() else {
                return Err(PgmError::TruncatedData { expected: count, got: pixels.len() });
            };
            let text = std::str::from_utf8(word)
                .map_err(|_| malformed("non-ASCII pixel value"))?;
            let value: u32 = text
                .parse()
                .map_err(|_| malformed(format!("cannot parse pixel value {text:?}")))?;
            if value > 255 {
                return Err(malformed(format!("pixel value {value} exceeds maxval 255")));
            }
            pixels.push(value as u8);
        }
        pixels
    };
    GrayImage::new(width, height, pixels)
}

/// Encode to the canonical binary form.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width, image.height);
    let mut out = header.into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, PgmError> {
    parse_pgm(&fs::read(path)?)
}

pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<(), PgmError> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}
