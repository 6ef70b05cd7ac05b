use super::kernel::Kernel;
use crate::image::Image;

/// 2D convolution `out(x, y) = Σ k(u, v) · in(x - u, y - v)` per channel, with
/// edge-replicate padding and the result clipped to [0, 1]. The quality tag of
/// the input is carried over unchanged.
pub fn convolve2d(image: &Image, kernel: &Kernel) -> Image {
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let r = kernel.radius();
    if r == 0 {
        let k = kernel.taps()[0];
        let mut out = image.clone();
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = (*v as f64 * k).clamp(0.0, 1.0) as f32);
        return out;
    }
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    let mut padded = vec![0.0f64; pw * ph];
    let mut acc = vec![0.0f64; w * h];
    let mut out = Image::new(w, h, ch).with_tag(image.tag);
    let side = kernel.side();
    let nonzero: Vec<(usize, usize, f64)> = kernel
        .taps()
        .iter()
        .enumerate()
        .filter(|(_, &t)| t != 0.0)
        .map(|(i, &t)| (i % side, i / side, t))
        .collect();

    for c in 0..ch {
        for py in 0..ph {
            let sy = (py as isize - r as isize).clamp(0, h as isize - 1) as usize;
            for px in 0..pw {
                let sx = (px as isize - r as isize).clamp(0, w as isize - 1) as usize;
                padded[py * pw + px] = image.get(sx, sy, c) as f64;
            }
        }
        acc.iter_mut().for_each(|v| *v = 0.0);
        // Tap at grid (i, j) is offset (u, v) = (i - r, j - r); convolution reads
        // in(x - u, y - v), i.e. padded column x + r - u = x + 2r - i.
        for &(i, j, t) in &nonzero {
            let ox = 2 * r - i;
            let oy = 2 * r - j;
            for y in 0..h {
                let src = &padded[(y + oy) * pw + ox..(y + oy) * pw + ox + w];
                let dst = &mut acc[y * w..(y + 1) * w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += t * s;
                }
            }
        }
        for (i, v) in acc.iter().enumerate() {
            out.set(i % w, i / w, c, v.clamp(0.0, 1.0) as f32);
        }
    }
    out
}
