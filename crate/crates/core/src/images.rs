//! Binary PGM/PPM encoders for reconstruction maps.
//!
//! Images are `nx` pixels wide and `ny` tall; row `y` holds `map[[x, y]]`
//! for increasing `x`.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::metrics::ReconMaps;

/// `round(255 * v)` with halves rounded up, after clamping to `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    (255.0 * v + 0.5).floor() as u8
}

/// Normal component to channel value: `round(255 (n + 1) / 2)`.
pub fn encode_normal_component(n: f64) -> u8 {
    quantize((n + 1.0) / 2.0)
}

pub fn encode_pgm(map: &Array2<f64>) -> Vec<u8> {
    let (nx, ny) = map.dim();
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for y in 0..ny {
        for x in 0..nx {
            out.push(quantize(map[[x, y]]));
        }
    }
    out
}

/// `rgb` has shape `(nx, ny, 3)` with values already in `[0, 1]`.
pub fn encode_ppm(rgb: &Array3<f64>) -> Vec<u8> {
    let (nx, ny, _) = rgb.dim();
    let mut out = format!("P6\n{nx} {ny}\n255\n").into_bytes();
    for y in 0..ny {
        for x in 0..nx {
            for c in 0..3 {
                out.push(quantize(rgb[[x, y, c]]));
            }
        }
    }
    out
}

pub fn albedo_image(maps: &ReconMaps) -> Vec<u8> {
    encode_pgm(&maps.albedo)
}

/// Depth scaled so that `max_depth` maps to white; background is black.
pub fn depth_image(maps: &ReconMaps, max_depth: f64) -> Vec<u8> {
    let scaled = Array2::from_shape_fn(maps.depth.dim(), |(x, y)| {
        if maps.mask[[x, y]] && max_depth > 0.0 {
            maps.depth[[x, y]] / max_depth
        } else {
            0.0
        }
    });
    encode_pgm(&scaled)
}

pub fn normal_image(maps: &ReconMaps) -> Vec<u8> {
    let (nx, ny) = maps.mask.dim();
    let mut out = format!("P6\n{nx} {ny}\n255\n").into_bytes();
    for y in 0..ny {
        for x in 0..nx {
            for c in 0..3 {
                out.push(if maps.mask[[x, y]] {
                    encode_normal_component(maps.normal[[x, y, c]])
                } else {
                    0
                });
            }
        }
    }
    out
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
