use ndarray::{Array2, ArrayView2, Axis};

use super::encode::EncodedTargets;
use super::loss::{detection_loss_with_grad, LossConfig, LossParts};
use super::params::{
    block_weight, Activation, ArchConfig, DetectorParams, Downsample, Layer, H1_BOX_W, H1_CLS_W, H2_BOX_W,
    H2_CLS_W,
};
use super::Real;
use crate::error::{Error, Result};
use crate::image::Image;

/// Raw head outputs: `class_logits` is `anchors × (classes + 1)` with the
/// background logit in column 0, `box_offsets` is `anchors × 4`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionOutput<T> {
    pub class_logits: Array2<T>,
    pub box_offsets: Array2<T>,
}

impl<T: Real> DetectionOutput<T> {
    pub fn zeros(num_anchors: usize, num_logits: usize) -> Self {
        Self {
            class_logits: Array2::zeros((num_anchors, num_logits)),
            box_offsets: Array2::zeros((num_anchors, 4)),
        }
    }

    pub fn num_anchors(&self) -> usize {
        self.class_logits.nrows()
    }

    /// Logits then offsets, row-major.
    pub fn flatten(&self) -> Vec<T> {
        self.class_logits.iter().chain(self.box_offsets.iter()).copied().collect()
    }

    pub fn flat_len(&self) -> usize {
        self.class_logits.len() + self.box_offsets.len()
    }

    /// Inverse of [`flatten`](Self::flatten) for an output of the same shape.
    pub fn unflatten_like(&self, flat: &[T]) -> Self {
        let n = self.class_logits.len();
        Self {
            class_logits: Array2::from_shape_vec(self.class_logits.raw_dim(), flat[..n].to_vec())
                .expect("matching shape"),
            box_offsets: Array2::from_shape_vec(self.box_offsets.raw_dim(), flat[n..].to_vec())
                .expect("matching shape"),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.class_logits.iter().chain(self.box_offsets.iter()).all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.class_logits += &other.class_logits;
        self.box_offsets += &other.box_offsets;
    }
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    blocks: Vec<BlockCache<T>>,
    head_cols: [Array2<T>; 2],
}

#[derive(Clone, Debug)]
struct BlockCache<T> {
    side: usize,
    cols: Array2<T>,
    pre: Array2<T>,
    /// Max-pool winner (flat index into the pre-pool map) per output cell.
    argmax: Vec<usize>,
}

/// `(C, H·W)` → `(C·9, H·W)` for a 3×3 kernel with zero padding 1.
fn im2col<T: Real>(input: &ArrayView2<T>, side: usize) -> Array2<T> {
    let c = input.nrows();
    let hw = side * side;
    let mut cols = Array2::<T>::zeros((c * 9, hw));
    let src = input.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let dst = cols.as_slice_mut().expect("standard layout");
    for ch in 0..c {
        let plane = &src[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut dst[(ch * 9 + ky * 3 + kx) * hw..(ch * 9 + ky * 3 + kx + 1) * hw];
                for y in 0..side {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= side as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let (x0, x1) = match kx {
                        0 => (1, side),
                        1 => (0, side),
                        _ => (0, side - 1),
                    };
                    let sx0 = x0 + kx - 1;
                    row[y * side + x0..y * side + x1].copy_from_slice(&plane[sy * side + sx0..sy * side + sx0 + (x1 - x0)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<T: Real>(cols: &Array2<T>, channels: usize, side: usize) -> Array2<T> {
    let hw = side * side;
    let mut out = Array2::<T>::zeros((channels, hw));
    let src = cols.as_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("standard layout");
    for ch in 0..channels {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &src[(ch * 9 + ky * 3 + kx) * hw..(ch * 9 + ky * 3 + kx + 1) * hw];
                for y in 0..side {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= side as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let (x0, x1) = match kx {
                        0 => (1, side),
                        1 => (0, side),
                        _ => (0, side - 1),
                    };
                    let sx0 = x0 + kx - 1;
                    let d = &mut dst[ch * hw + sy * side + sx0..ch * hw + sy * side + sx0 + (x1 - x0)];
                    for (a, b) in d.iter_mut().zip(&row[y * side + x0..y * side + x1]) {
                        *a += *b;
                    }
                }
            }
        }
    }
    out
}

fn weight_view<'a, T: Real>(params: &'a DetectorParams<T>, idx: usize) -> ArrayView2<'a, T> {
    let shape = &params.info[idx].shape;
    ArrayView2::from_shape((shape[0], shape[1] * 9), params.tensor(idx)).expect("conv weight shape")
}

fn conv_forward<T: Real>(params: &DetectorParams<T>, w_idx: usize, cols: &Array2<T>) -> Array2<T> {
    let mut out = weight_view(params, w_idx).dot(cols);
    let bias = params.tensor(w_idx + 1);
    for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(bias) {
        row.mapv_inplace(|v| v + b);
    }
    out
}

/// Accumulates weight/bias gradients; returns the gradient w.r.t. the
/// im2col matrix when `need_input` is set.
fn conv_backward<T: Real>(
    params: &DetectorParams<T>,
    w_idx: usize,
    cols: &Array2<T>,
    dout: &Array2<T>,
    grads: &mut DetectorParams<T>,
    need_input: bool,
) -> Option<Array2<T>> {
    let dw = dout.dot(&cols.t());
    for (g, d) in grads.tensor_mut(w_idx).iter_mut().zip(dw.iter()) {
        *g += *d;
    }
    let db = dout.sum_axis(Axis(1));
    for (g, d) in grads.tensor_mut(w_idx + 1).iter_mut().zip(db.iter()) {
        *g += *d;
    }
    need_input.then(|| weight_view(params, w_idx).t().dot(dout))
}

fn activate<T: Real>(arch: &ArchConfig, v: T) -> T {
    if v > T::zero() {
        v
    } else {
        match arch.activation {
            Activation::Relu => T::zero(),
            Activation::LeakyRelu => v * T::lit(arch.leaky_slope),
        }
    }
}

fn activation_grad<T: Real>(arch: &ArchConfig, pre: T) -> T {
    if pre > T::zero() {
        T::one()
    } else {
        match arch.activation {
            Activation::Relu => T::zero(),
            Activation::LeakyRelu => T::lit(arch.leaky_slope),
        }
    }
}

/// 2×2 stride-2 pooling of an activated map `(C, side²)`.
fn pool<T: Real>(arch: &ArchConfig, act: &Array2<T>, side: usize) -> (Array2<T>, Vec<usize>) {
    let half = side / 2;
    let c = act.nrows();
    let mut out = Array2::<T>::zeros((c, half * half));
    let mut argmax = Vec::new();
    let quarter = T::lit(0.25);
    for ch in 0..c {
        let plane = act.row(ch);
        for y in 0..half {
            for x in 0..half {
                let idx = [
                    2 * y * side + 2 * x,
                    2 * y * side + 2 * x + 1,
                    (2 * y + 1) * side + 2 * x,
                    (2 * y + 1) * side + 2 * x + 1,
                ];
                out[[ch, y * half + x]] = match arch.downsample {
                    Downsample::MaxPool => {
                        let mut best = idx[0];
                        for &i in &idx[1..] {
                            if plane[i] > plane[best] {
                                best = i;
                            }
                        }
                        argmax.push(best);
                        plane[best]
                    }
                    Downsample::AvgPool => idx.iter().map(|&i| plane[i]).fold(T::zero(), |a, b| a + b) * quarter,
                };
            }
        }
    }
    (out, argmax)
}

fn unpool<T: Real>(arch: &ArchConfig, dout: &Array2<T>, side: usize, argmax: &[usize]) -> Array2<T> {
    let half = side / 2;
    let c = dout.nrows();
    let mut d = Array2::<T>::zeros((c, side * side));
    let quarter = T::lit(0.25);
    for ch in 0..c {
        for y in 0..half {
            for x in 0..half {
                let g = dout[[ch, y * half + x]];
                match arch.downsample {
                    Downsample::MaxPool => {
                        let i = argmax[ch * half * half + y * half + x];
                        d[[ch, i]] += g;
                    }
                    Downsample::AvgPool => {
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let i = (2 * y + dy) * side + 2 * x + dx;
                            d[[ch, i]] += g * quarter;
                        }
                    }
                }
            }
        }
    }
    d
}

fn image_to_input<T: Real>(arch: &ArchConfig, image: &Image) -> Result<Array2<T>> {
    let s = arch.image_size;
    if image.width() != s || image.height() != s || image.channels() != arch.in_channels {
        return Err(Error::Shape(format!(
            "detector expects {s}x{s}x{} images, got {}x{}x{}",
            arch.in_channels,
            image.width(),
            image.height(),
            image.channels()
        )));
    }
    let c = arch.in_channels;
    let mut x = Array2::<T>::zeros((c, s * s));
    for (i, px) in image.data().chunks_exact(c).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            x[[ch, i]] = T::lit(v as f64 - 0.5);
        }
    }
    Ok(x)
}

/// Scatters head maps `(A·K, g²)` into per-anchor rows starting at `offset`.
fn scatter_head<T: Real>(map: &Array2<T>, per_anchor: usize, a: usize, offset: usize, dst: &mut Array2<T>) {
    let cells = map.ncols();
    for p in 0..cells {
        for ai in 0..a {
            let row = offset + p * a + ai;
            for k in 0..per_anchor {
                dst[[row, k]] = map[[ai * per_anchor + k, p]];
            }
        }
    }
}

fn gather_head<T: Real>(src: &Array2<T>, per_anchor: usize, a: usize, offset: usize, cells: usize) -> Array2<T> {
    let mut map = Array2::<T>::zeros((a * per_anchor, cells));
    for p in 0..cells {
        for ai in 0..a {
            let row = offset + p * a + ai;
            for k in 0..per_anchor {
                map[[ai * per_anchor + k, p]] = src[[row, k]];
            }
        }
    }
    map
}

pub fn forward_train<T: Real>(params: &DetectorParams<T>, image: &Image) -> Result<(DetectionOutput<T>, ForwardCache<T>)> {
    let arch = &params.arch;
    let mut x = image_to_input::<T>(arch, image)?;
    let mut side = arch.image_size;
    let mut blocks = Vec::with_capacity(4);
    let mut features = Vec::with_capacity(2);
    for b in 0..4 {
        let cols = im2col(&x.view(), side);
        let pre = conv_forward(params, block_weight(b), &cols);
        let act = pre.mapv(|v| activate(arch, v));
        let (pooled, argmax) = pool(arch, &act, side);
        blocks.push(BlockCache { side, cols, pre, argmax });
        side /= 2;
        x = pooled;
        if b >= 2 {
            features.push((x.clone(), side));
        }
    }

    let a = arch.anchors_per_cell();
    let k = arch.num_logits();
    let mut out = DetectionOutput::zeros(arch.num_anchors(), k);
    let mut head_cols = Vec::with_capacity(2);
    let mut offset = 0;
    for (h, (feat, side)) in features.iter().enumerate() {
        let cols = im2col(&feat.view(), *side);
        let (cls_w, box_w) = if h == 0 { (H1_CLS_W, H1_BOX_W) } else { (H2_CLS_W, H2_BOX_W) };
        let cls = conv_forward(params, cls_w, &cols);
        let bx = conv_forward(params, box_w, &cols);
        scatter_head(&cls, k, a, offset, &mut out.class_logits);
        scatter_head(&bx, 4, a, offset, &mut out.box_offsets);
        offset += side * side * a;
        head_cols.push(cols);
    }
    let head_cols: [Array2<T>; 2] = head_cols.try_into().expect("two heads");
    Ok((out, ForwardCache { blocks, head_cols }))
}

/// Deterministic inference pass.
pub fn forward<T: Real>(params: &DetectorParams<T>, image: &Image) -> Result<DetectionOutput<T>> {
    forward_train(params, image).map(|(o, _)| o)
}

/// Backpropagates `grad_out` (dLoss/dOutput) and accumulates into `grads`.
pub fn backward<T: Real>(
    params: &DetectorParams<T>,
    cache: &ForwardCache<T>,
    grad_out: &DetectionOutput<T>,
    grads: &mut DetectorParams<T>,
) {
    let arch = &params.arch;
    let a = arch.anchors_per_cell();
    let k = arch.num_logits();
    let [g1, g2] = arch.grids();
    let [_, _, c3, c4] = arch.channels;

    let mut feat_grads = Vec::with_capacity(2);
    let mut offset = 0;
    for (h, (g, c)) in [(g1, c3), (g2, c4)].into_iter().enumerate() {
        let cells = g * g;
        let dcls = gather_head(&grad_out.class_logits, k, a, offset, cells);
        let dbox = gather_head(&grad_out.box_offsets, 4, a, offset, cells);
        let (cls_w, box_w) = if h == 0 { (H1_CLS_W, H1_BOX_W) } else { (H2_CLS_W, H2_BOX_W) };
        let cols = &cache.head_cols[h];
        let mut dcols = conv_backward(params, cls_w, cols, &dcls, grads, true).expect("requested");
        dcols += &conv_backward(params, box_w, cols, &dbox, grads, true).expect("requested");
        feat_grads.push(col2im(&dcols, c, g));
        offset += cells * a;
    }

    // Block 4 output feeds head 2; block 3 output feeds head 1 and block 4.
    let mut dpooled = feat_grads.pop().expect("head 2");
    for b in (0..4).rev() {
        let bc = &cache.blocks[b];
        let dact = unpool(arch, &dpooled, bc.side, &bc.argmax);
        let mut dpre = dact;
        dpre.zip_mut_with(&bc.pre, |d, &p| *d *= activation_grad(arch, p));
        let cin = if b == 0 { arch.in_channels } else { arch.channels[b - 1] };
        let dcols = conv_backward(params, block_weight(b), &bc.cols, &dpre, grads, b > 0);
        if let Some(dcols) = dcols {
            dpooled = col2im(&dcols, cin, bc.side);
            if b == 3 {
                dpooled += &feat_grads[0];
            }
        }
    }
}

/// Mean detection loss over a batch and its gradient with respect to every
/// parameter tensor. Tensors outside the trainable set (`freeze_after`)
/// receive exactly zero gradient.
pub fn loss_gradients<T: Real>(
    params: &DetectorParams<T>,
    images: &[&Image],
    targets: &[&EncodedTargets],
    cfg: &LossConfig,
    freeze_after: Option<Layer>,
) -> Result<(LossParts, DetectorParams<T>)> {
    if images.len() != targets.len() {
        return Err(Error::Shape("images and targets differ in length".into()));
    }
    let passes = images
        .iter()
        .map(|img| forward_train(params, img))
        .collect::<Result<Vec<_>>>()?;
    let outputs: Vec<&DetectionOutput<T>> = passes.iter().map(|(o, _)| o).collect();
    let (parts, grads_out) = detection_loss_with_grad(&outputs, targets, cfg);
    let mut grads = params.zeros_like();
    for ((_, cache), g) in passes.iter().zip(&grads_out) {
        backward(params, cache, g, &mut grads);
    }
    mask_frozen(params, &mut grads, freeze_after);
    Ok((parts, grads))
}

pub(crate) fn mask_frozen<T: Real>(params: &DetectorParams<T>, grads: &mut DetectorParams<T>, freeze_after: Option<Layer>) {
    for i in 0..grads.num_tensors() {
        if !params.trainable(i, freeze_after) {
            grads.tensor_mut(i).iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthkit::{render_scene, SceneSpec};

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let side = 5;
        let x = Array2::from_shape_fn((2, side * side), |(c, i)| (c * 31 + i * 7) as f64 % 5.0 - 2.0);
        let y = Array2::from_shape_fn((18, side * side), |(r, i)| ((r * 13 + i * 3) % 7) as f64 - 3.0);
        let lhs: f64 = (im2col(&x.view(), side) * &y).sum();
        let rhs: f64 = (&x * &col2im(&y, 2, side)).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn forward_shape_and_determinism() {
        let arch = ArchConfig::default();
        let p = DetectorParams::<f32>::init(&arch, 1).unwrap();
        let (img, _) = render_scene(&SceneSpec::default(), 5).unwrap();
        let a = forward(&p, &img).unwrap();
        let b = forward(&p, &img).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_anchors(), 540);
        assert_eq!(a.class_logits.ncols(), 4);
        assert_eq!(a.box_offsets.ncols(), 4);
        assert!(a.all_finite());
    }

    #[test]
    fn zero_heads_give_zero_logits() {
        let arch = ArchConfig::default();
        let mut p = DetectorParams::<f32>::init(&arch, 1).unwrap();
        for name in ["head1.cls.weight", "head1.cls.bias", "head2.cls.weight", "head2.cls.bias"] {
            p.tensor_by_name_mut(name).unwrap().iter_mut().for_each(|v| *v = 0.0);
        }
        let (img, _) = render_scene(&SceneSpec::default(), 5).unwrap();
        let out = forward(&p, &img).unwrap();
        assert!(out.class_logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_image_size_is_shape_error() {
        let p = DetectorParams::<f32>::init(&ArchConfig::default(), 1).unwrap();
        let img = Image::new(64, 64, 3);
        assert!(matches!(forward(&p, &img), Err(Error::Shape(_))));
    }

    #[test]
    fn flatten_round_trip() {
        let p = DetectorParams::<f32>::init(&ArchConfig::default(), 1).unwrap();
        let (img, _) = render_scene(&SceneSpec::default(), 5).unwrap();
        let out = forward(&p, &img).unwrap();
        let flat = out.flatten();
        assert_eq!(flat.len(), 540 * 8);
        assert_eq!(out.unflatten_like(&flat), out);
    }
}
