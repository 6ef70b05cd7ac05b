use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::texture::Background;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoxCoords};
use crate::image::Image;
use crate::rng::{derive_seed, rng_from};

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
const MAX_PAIR_IOU: f64 = 0.3;
const MIN_COLOR_CONTRAST: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Circle,
    Square,
    Triangle,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Circle, ShapeClass::Square, ShapeClass::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Circle => "circle",
            ShapeClass::Square => "square",
            ShapeClass::Triangle => "triangle",
        }
    }

    /// Point-in-shape test in box-local coordinates `u, v ∈ [0, 1]`.
    fn contains(self, u: f64, v: f64) -> bool {
        match self {
            ShapeClass::Circle => {
                let (du, dv) = (u - 0.5, v - 0.5);
                du * du + dv * dv <= 0.25
            }
            ShapeClass::Square => (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v),
            // Apex at top center, base along the bottom edge.
            ShapeClass::Triangle => {
                (0.0..=1.0).contains(&v) && (u - 0.5).abs() <= 0.5 * v
            }
        }
    }
}

/// Ground-truth object: class index into the scene's class set plus a
/// normalized center-form box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxLabel {
    pub class_id: usize,
    pub bbox: BoxCoords,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub image_size: usize,
    /// Upper bound on objects per scene; each scene draws its count
    /// uniformly from `1..=num_objects`.
    pub num_objects: usize,
    pub class_set: Vec<ShapeClass>,
    pub background: Background,
    pub min_object_side: usize,
    pub max_object_side: usize,
    /// Largest allowed width/height ratio (and its inverse).
    pub max_aspect: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            image_size: 96,
            num_objects: 4,
            class_set: ShapeClass::ALL.to_vec(),
            background: Background::default(),
            min_object_side: 24,
            max_object_side: 48,
            max_aspect: 1.25,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::SceneSpec(m.to_string()));
        if self.image_size < 16 {
            return fail("image_size must be at least 16");
        }
        if !(1..=4).contains(&self.num_objects) {
            return fail("num_objects must be in [1, 4]");
        }
        if self.class_set.is_empty() {
            return fail("class_set must not be empty");
        }
        for (i, c) in self.class_set.iter().enumerate() {
            if self.class_set[..i].contains(c) {
                return fail("class_set entries must be distinct");
            }
        }
        if self.min_object_side == 0
            || self.min_object_side > self.max_object_side
            || self.max_object_side > self.image_size
        {
            return fail("need 0 < min_object_side <= max_object_side <= image_size");
        }
        if !(self.max_aspect >= 1.0) {
            return fail("max_aspect must be >= 1");
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_set.len()
    }
}

/// Renders one scene. Output depends only on `(spec, seed)`.
pub fn render_scene(spec: &SceneSpec, seed: u64) -> Result<(Image, Vec<BoxLabel>)> {
    spec.validate()?;
    let size = spec.image_size;
    let sizef = size as f64;
    let mut bg_rng = rng_from(derive_seed(seed, &[0]));
    let mut img = spec.background.render(size, &mut bg_rng);
    let bg_mean = img.channel_means();

    let mut rng = rng_from(derive_seed(seed, &[1]));
    let count = rng.random_range(1..=spec.num_objects);
    let (lo, hi) = (spec.min_object_side as f64, spec.max_object_side as f64);
    let log_aspect = spec.max_aspect.ln();

    let mut placed: Vec<BoxCoords> = Vec::with_capacity(count);
    let mut attempts = 0;
    while placed.len() < count {
        if attempts == MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::Placement { seed, attempts });
        }
        attempts += 1;
        let w = rng.random_range(lo..=hi);
        let aspect = if log_aspect > 0.0 {
            rng.random_range(-log_aspect..=log_aspect).exp()
        } else {
            1.0
        };
        let h = (w * aspect).clamp(lo, hi);
        let cx = rng.random_range(0.5 * w..=sizef - 0.5 * w);
        let cy = rng.random_range(0.5 * h..=sizef - 0.5 * h);
        let candidate = BoxCoords::new(cx / sizef, cy / sizef, w / sizef, h / sizef);
        if !candidate.inside_unit() {
            continue;
        }
        if placed.iter().all(|p| iou(p, &candidate) < MAX_PAIR_IOU) {
            placed.push(candidate);
        }
    }

    let mut labels = Vec::with_capacity(count);
    for bbox in placed {
        let class_id = rng.random_range(0..spec.class_set.len());
        let color = loop {
            let c: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            if c.iter()
                .zip(&bg_mean)
                .any(|(a, b)| (a - b).abs() >= MIN_COLOR_CONTRAST)
            {
                break c;
            }
        };
        paint_shape(&mut img, spec.class_set[class_id], &bbox, color);
        labels.push(BoxLabel { class_id, bbox });
    }
    Ok((img, labels))
}

/// Fills a shape with 2x2 supersampled coverage.
fn paint_shape(img: &mut Image, shape: ShapeClass, bbox: &BoxCoords, color: [f64; 3]) {
    let size = img.width() as f64;
    let (x1, y1, x2, y2) = bbox.corners();
    let (px1, py1, px2, py2) = (x1 * size, y1 * size, x2 * size, y2 * size);
    let (bw, bh) = (px2 - px1, py2 - py1);
    let xs = px1.floor().max(0.0) as usize;
    let ys = py1.floor().max(0.0) as usize;
    let xe = (px2.ceil() as usize).min(img.width());
    let ye = (py2.ceil() as usize).min(img.height());
    const OFFSETS: [f64; 2] = [0.25, 0.75];
    for y in ys..ye {
        for x in xs..xe {
            let mut hits = 0;
            for oy in OFFSETS {
                for ox in OFFSETS {
                    let u = (x as f64 + ox - px1) / bw;
                    let v = (y as f64 + oy - py1) / bh;
                    if shape.contains(u, v) {
                        hits += 1;
                    }
                }
            }
            if hits == 0 {
                continue;
            }
            let a = hits as f32 / 4.0;
            for (c, &col) in color.iter().enumerate() {
                let old = img.get(x, y, c);
                img.set(x, y, c, old + (col as f32 - old) * a);
            }
        }
    }
}
