use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::rng::Rng;

/// Background texture: a per-scene jittered base color plus per-channel
/// multi-octave value noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub base_color: [f32; 3],
    /// Uniform per-channel jitter applied to the base color for each scene.
    pub color_jitter: f32,
    pub octaves: usize,
    /// Peak deviation contributed by the coarsest octave.
    pub amplitude: f32,
    /// Lattice spacing of the coarsest octave in pixels.
    pub base_cell: usize,
}

impl Default for Background {
    fn default() -> Self {
        Self {
            base_color: [0.45, 0.45, 0.45],
            color_jitter: 0.15,
            octaves: 4,
            amplitude: 0.18,
            base_cell: 24,
        }
    }
}

fn smoothstep(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

/// Value noise on a square lattice with spacing `cell`, sampled at pixel centers.
fn value_noise(rng: &mut Rng, size: usize, cell: usize, out: &mut [f32], amplitude: f32) {
    let cell = cell.max(1);
    let n = size / cell + 2;
    let lattice: Vec<f32> = (0..n * n).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
    let inv = 1.0 / cell as f32;
    for y in 0..size {
        let fy = (y as f32 + 0.5) * inv;
        let iy = fy as usize;
        let ty = smoothstep(fy - iy as f32);
        for x in 0..size {
            let fx = (x as f32 + 0.5) * inv;
            let ix = fx as usize;
            let tx = smoothstep(fx - ix as f32);
            let a = lattice[iy * n + ix];
            let b = lattice[iy * n + ix + 1];
            let c = lattice[(iy + 1) * n + ix];
            let d = lattice[(iy + 1) * n + ix + 1];
            let top = a + (b - a) * tx;
            let bottom = c + (d - c) * tx;
            out[y * size + x] += amplitude * (top + (bottom - top) * ty);
        }
    }
}

impl Background {
    pub fn render(&self, size: usize, rng: &mut Rng) -> Image {
        let mut img = Image::new(size, size, 3);
        let mut field = vec![0.0f32; size * size];
        for c in 0..3 {
            let base = (self.base_color[c]
                + (rng.random::<f32>() * 2.0 - 1.0) * self.color_jitter)
                .clamp(0.0, 1.0);
            field.iter_mut().for_each(|v| *v = base);
            let mut amp = self.amplitude;
            let mut cell = self.base_cell;
            for _ in 0..self.octaves {
                value_noise(rng, size, cell, &mut field, amp);
                amp *= 0.5;
                cell = (cell / 2).max(1);
            }
            for (i, v) in field.iter().enumerate() {
                img.set(i % size, i / size, c, v.clamp(0.0, 1.0));
            }
        }
        img
    }
}
