//! Grayscale image <-> nodal field conversion for 2D denoising runs.
//!
//! Pixel value p maps to u = max(floor, p/255), so 0 is black and 1 is white;
//! the floor keeps the state strictly positive, which the scheme requires.
//! The torus axes are (row, column) with spacing h = 1/max(width, height):
//! square cells on a possibly non-square node count.

use entrodiff::TorusGrid;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::pgm::GrayImage;

/// Default positivity floor applied to black pixels.
pub const DEFAULT_IMAGE_FLOOR: f64 = 1e-2;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("positivity floor must lie in (0, 0.5), got {floor}")]
    BadFloor { floor: f64 },
    #[error("expected a 2D grid, got {ndim} axes")]
    NotTwoDimensional { ndim: usize },
    #[error("grid is {expected} nodes but the field has {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("image {width}x{height} is too small; the stencil needs at least 3 nodes per axis")]
    TooSmall { width: usize, height: usize },
}

/// Image as a strictly positive field on its natural torus grid.
pub fn image_to_field(image: &GrayImage, floor: f64) -> Result<(TorusGrid, Vec<f64>), ImageError> {
    if !(floor > 0.0 && floor < 0.5) {
        return Err(ImageError::BadFloor { floor });
    }
    let h = 1.0 / image.width().max(image.height()) as f64;
    let grid = TorusGrid::new(&[image.height(), image.width()], h).map_err(|_| {
        ImageError::TooSmall { width: image.width(), height: image.height() }
    })?;
    let u = image
        .pixels()
        .iter()
        .map(|&p| (p as f64 / 255.0).max(floor))
        .collect();
    Ok((grid, u))
}

/// Field back to 8-bit grayscale: clamp to [0, 1], then round to 255 u.
pub fn field_to_image(u: &[f64], grid: &TorusGrid) -> Result<GrayImage, ImageError> {
    if grid.ndim() != 2 {
        return Err(ImageError::NotTwoDimensional { ndim: grid.ndim() });
    }
    if u.len() != grid.len() {
        return Err(ImageError::SizeMismatch { expected: grid.len(), got: u.len() });
    }
    let pixels = u
        .iter()
        .map(|&x| (255.0 * x.clamp(0.0, 1.0)).round() as u8)
        .collect();
    let (height, width) = (grid.dims()[0], grid.dims()[1]);
    Ok(GrayImage::new(width, height, pixels).expect("grid size matches pixel count"))
}

/// Squared forward-difference energy h^d sum |grad u|^2; a smoothing flow
/// drives the high-frequency (noise) part of this down quickly.
pub fn high_frequency_energy(u: &[f64], grid: &TorusGrid) -> f64 {
    let h = grid.h();
    let vol = grid.cell_volume();
    let mut total = 0.0;
    for i in 0..grid.len() {
        for axis in 0..grid.ndim() {
            let d = (u[grid.up(i, axis)] - u[i]) / h;
            total += d * d;
        }
    }
    vol * total
}

/// Deterministic 77x100 test picture: a bright plate and a disk on a dark
/// background, plus salt-and-pepper speckle. Integer-only arithmetic keeps
/// the bytes identical on every platform.
pub fn synthetic_test_image() -> GrayImage {
    const WIDTH: usize = 77;
    const HEIGHT: usize = 100;
    const BACKGROUND: u8 = 40;
    const PLATE: u8 = 220;
    const DISK: u8 = 170;

    let mut pixels = vec![BACKGROUND; WIDTH * HEIGHT];
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let idx = y * WIDTH + x;
            if (12..46).contains(&x) && (18..52).contains(&y) {
                pixels[idx] = PLATE;
            }
            let (dx, dy) = (x as i64 - 48, y as i64 - 72);
            if dx * dx + dy * dy <= 18 * 18 {
                pixels[idx] = DISK;
            }
        }
    }
    // ~6% salt and ~6% pepper speckle from a fixed stream.
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a57_e2a1);
    for p in pixels.iter_mut() {
        let roll = rng.next_u32() % 100;
        if roll < 6 {
            *p = 255;
        } else if roll < 12 {
            *p = 0;
        }
    }
    GrayImage::new(WIDTH, HEIGHT, pixels).expect("dimensions match")
}
