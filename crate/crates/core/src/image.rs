use serde::{Deserialize, Serialize};

use crate::degrade::Family;
use crate::error::{Error, Result};

/// Records whether an image is clean or which distortion level produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityTag {
    pub is_clean: bool,
    pub family: Option<Family>,
    /// 1-based index into the family's pool.
    pub level_index: Option<usize>,
}

impl QualityTag {
    pub const CLEAN: QualityTag = QualityTag {
        is_clean: true,
        family: None,
        level_index: None,
    };

    pub fn distorted(family: Family, level_index: usize) -> Self {
        Self {
            is_clean: false,
            family: Some(family),
            level_index: Some(level_index),
        }
    }
}

impl Default for QualityTag {
    fn default() -> Self {
        Self::CLEAN
    }
}

/// Dense interleaved (row-major, channel-last) pixel grid with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
    pub tag: QualityTag,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
            tag: QualityTag::CLEAN,
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{}x{}x{} image needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            tag: QualityTag::CLEAN,
        })
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn with_tag(mut self, tag: QualityTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn channel_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        let n = (self.width * self.height) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_vec(
            width,
            height,
            3,
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }

    /// Writes the image as an 8-bit RGB PNG.
    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        if self.channels != 3 {
            return Err(Error::Shape("png export expects 3 channels".into()));
        }
        ::image::save_buffer(
            path,
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            ::image::ExtendedColorType::Rgb8,
        )?;
        Ok(())
    }

    pub fn load_png(path: &std::path::Path) -> Result<Self> {
        let img = ::image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_rgb8(w as usize, h as usize, img.as_raw())
    }
}
