//! WebAssembly bindings for a static page that shows a synthetic scene next
//! to a degraded copy and the blur kernel behind it.
//!
//! Pixel buffers cross the boundary as RGBA bytes, row-major, ready for
//! `ImageData`. The plain-Rust functions below the bindings carry the logic
//! so they can be tested natively.

use gando::degrade::{DistortionPool, Family, Level};
use gando::synthkit::{render_scene, BoxLabel, SceneSpec};
use gando::Image;
use wasm_bindgen::prelude::*;

/// One rendered scene and its most recent degraded copy.
#[wasm_bindgen]
pub struct Demo {
    clean: Image,
    labels: Vec<BoxLabel>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        scene(seed).map_err(|e| JsError::new(&e))
    }

    pub fn size(&self) -> usize {
        self.clean.width()
    }

    pub fn rgba(&self) -> Vec<u8> {
        to_rgba(&self.clean)
    }

    /// Ground truth as `[class, x1, y1, x2, y2, ...]` in pixels.
    pub fn boxes(&self) -> Vec<f64> {
        let s = self.size() as f64;
        self.labels
            .iter()
            .flat_map(|l| {
                let (x1, y1, x2, y2) = l.bbox.corners();
                [l.class_id as f64, x1 * s, y1 * s, x2 * s, y2 * s]
            })
            .collect()
    }

    /// The scene at 1-based `level` of `family`.
    pub fn degrade(&self, family: &str, level: usize, seed: u32) -> Result<Vec<u8>, JsError> {
        degrade(&self.clean, family, level, seed).map_err(|e| JsError::new(&e))
    }
}

/// Number of levels in a family's pool.
#[wasm_bindgen]
pub fn pool_len(family: &str) -> Result<usize, JsError> {
    pool(family, 0).map(|p| p.len()).map_err(|e| JsError::new(&e))
}

/// Heat map of the kernel at `level` as a square RGBA image of side
/// `kernel_side`. Noise levels have no kernel and are rejected.
#[wasm_bindgen]
pub fn kernel_rgba(family: &str, level: usize, seed: u32) -> Result<Vec<u8>, JsError> {
    kernel_view(family, level, seed).map(|(_, px)| px).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn kernel_side(family: &str, level: usize, seed: u32) -> Result<usize, JsError> {
    kernel_view(family, level, seed).map(|(s, _)| s).map_err(|e| JsError::new(&e))
}

pub fn scene(seed: u32) -> Result<Demo, String> {
    let (clean, labels) = render_scene(&SceneSpec::default(), seed as u64).map_err(|e| e.to_string())?;
    Ok(Demo { clean, labels })
}

fn parse_family(name: &str) -> Result<Family, String> {
    Family::parse(name).ok_or_else(|| format!("unknown family '{name}'"))
}

fn pool(family: &str, seed: u32) -> Result<DistortionPool, String> {
    Ok(DistortionPool::standard(parse_family(family)?, seed as u64))
}

pub fn to_rgba(img: &Image) -> Vec<u8> {
    img.to_rgb8()
        .chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect()
}

pub fn degrade(img: &Image, family: &str, level: usize, seed: u32) -> Result<Vec<u8>, String> {
    let p = pool(family, seed)?;
    let out = p.apply_level(img, level, seed as u64).map_err(|e| e.to_string())?;
    Ok(to_rgba(&out))
}

/// Kernel side and RGBA pixels, brightest at the largest tap.
pub fn kernel_view(family: &str, level: usize, seed: u32) -> Result<(usize, Vec<u8>), String> {
    let p = pool(family, seed)?;
    let n = p.len();
    let k = match level.checked_sub(1).and_then(|i| p.levels().get(i)) {
        Some(Level::Blur(k)) => k,
        Some(_) => return Err(format!("{family} levels are noise, not kernels")),
        None => return Err(format!("level {level} is outside [1, {n}]")),
    };
    let max = k.taps().iter().cloned().fold(0.0, f64::max);
    let px = k
        .taps()
        .iter()
        .flat_map(|&t| {
            let v = (255.0 * (t / max).sqrt()).round() as u8;
            [v, v / 2, 255 - v, 255]
        })
        .collect();
    Ok((k.side(), px))
}
