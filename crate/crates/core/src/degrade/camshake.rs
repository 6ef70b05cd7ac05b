use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::kernel::Kernel;
use super::Family;
use crate::rng::rng_from;

pub const DEFAULT_CAMSHAKE_SIZE: usize = 21;
const TRAJECTORY_SAMPLES: usize = 200;

fn catmull_rom(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2], p3: [f64; 2], t: f64) -> [f64; 2] {
    let t2 = t * t;
    let t3 = t2 * t;
    let f = |a: f64, b: f64, c: f64, d: f64| {
        0.5 * (2.0 * b + (c - a) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 + (3.0 * b - a - 3.0 * c + d) * t3)
    };
    [f(p0[0], p1[0], p2[0], p3[0]), f(p0[1], p1[1], p2[1], p3[1])]
}

/// Camera-shake blur: a seeded 2D Gaussian random walk of 4-8 control points,
/// smoothed with a Catmull-Rom spline into 200 samples, centered, scaled to a
/// random fraction of the support and splatted bilinearly onto the grid.
///
/// `size` must be odd and at least 5.
pub fn camshake_kernel(seed: u64, size: usize) -> Kernel {
    assert!(size % 2 == 1 && size >= 5, "camshake kernel size must be odd and >= 5");
    let mut rng = rng_from(seed);
    let n_ctrl = rng.random_range(4..=8usize);
    let mut ctrl = Vec::with_capacity(n_ctrl);
    let mut p = [0.0f64, 0.0];
    // Momentum keeps the walk from folding back on itself too often.
    let mut heading = [0.0f64, 0.0];
    for _ in 0..n_ctrl {
        ctrl.push(p);
        let nx: f64 = StandardNormal.sample(&mut rng);
        let ny: f64 = StandardNormal.sample(&mut rng);
        heading = [0.6 * heading[0] + nx, 0.6 * heading[1] + ny];
        p = [p[0] + heading[0], p[1] + heading[1]];
    }

    let segments = n_ctrl - 1;
    let get = |i: isize| ctrl[i.clamp(0, n_ctrl as isize - 1) as usize];
    let mut path = Vec::with_capacity(TRAJECTORY_SAMPLES);
    for s in 0..TRAJECTORY_SAMPLES {
        let t = s as f64 / (TRAJECTORY_SAMPLES - 1) as f64 * segments as f64;
        let seg = (t.floor() as usize).min(segments - 1);
        let local = t - seg as f64;
        let i = seg as isize;
        path.push(catmull_rom(get(i - 1), get(i), get(i + 1), get(i + 2), local));
    }

    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for q in &path {
        for d in 0..2 {
            lo[d] = lo[d].min(q[d]);
            hi[d] = hi[d].max(q[d]);
        }
    }
    let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let extent = (0.5 * (hi[0] - lo[0])).max(0.5 * (hi[1] - lo[1])).max(1e-9);
    let half = (size / 2) as f64 - 1.0;
    let scale = rng.random_range(0.35..=1.0) * half / extent;

    let c = (size / 2) as f64;
    let mut taps = vec![0.0f64; size * size];
    for q in &path {
        let x = c + (q[0] - mid[0]) * scale;
        let y = c + (q[1] - mid[1]) * scale;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        for (dx, dy, w) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            taps[(y0 + dy) * size + x0 + dx] += w;
        }
    }
    Kernel::from_weights(size, taps, Family::Camshake, 1, half)
}
