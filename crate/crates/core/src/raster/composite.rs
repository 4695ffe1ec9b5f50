use std::path::Path;

use image::{ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};

use super::{BandStack, GeoRef, IndexPlane, PixelRect};
use crate::error::{Error, Result};

/// Percentile pair used for a linear contrast stretch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stretch {
    pub lower_pct: f64,
    pub upper_pct: f64,
}

impl Stretch {
    pub const IDENTITY: Stretch = Stretch {
        lower_pct: 0.0,
        upper_pct: 100.0,
    };

    pub fn new(lower_pct: f64, upper_pct: f64) -> Result<Self> {
        if !(0.0..=100.0).contains(&lower_pct)
            || !(0.0..=100.0).contains(&upper_pct)
            || lower_pct >= upper_pct
        {
            return Err(Error::InvalidParameter(format!(
                "stretch percentiles must satisfy 0 <= lower < upper <= 100, got ({lower_pct}, {upper_pct})"
            )));
        }
        Ok(Stretch {
            lower_pct,
            upper_pct,
        })
    }
}

/// Value range actually mapped onto 0..=255 for one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStretch {
    pub low: f64,
    pub high: f64,
}

/// Three 8-bit planes ready for PNG output.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbComposite {
    pub width: usize,
    pub height: usize,
    pub channels: [Vec<u8>; 3],
    /// Band indices of the source stack, when built by [`compose`].
    pub source_bands: Option<[usize; 3]>,
    pub stretch: Option<(Stretch, [ChannelStretch; 3])>,
}

impl RgbComposite {
    pub fn from_channels(width: usize, height: usize, channels: [Vec<u8>; 3]) -> Result<Self> {
        if width == 0 || height == 0 || channels.iter().any(|c| c.len() != width * height) {
            return Err(Error::InvalidParameter(format!(
                "channel planes do not match {width}x{height}"
            )));
        }
        Ok(RgbComposite {
            width,
            height,
            channels,
            source_bands: None,
            stretch: None,
        })
    }

    pub fn from_gray(width: usize, height: usize, gray: Vec<u8>) -> Result<Self> {
        Self::from_channels(width, height, [gray.clone(), gray.clone(), gray])
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = row * self.width + col;
        [
            self.channels[0][i],
            self.channels[1][i],
            self.channels[2][i],
        ]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = row * self.width + col;
        for (c, v) in self.channels.iter_mut().zip(rgb) {
            c[i] = v;
        }
    }

    pub fn crop(&self, rect: PixelRect) -> Result<RgbComposite> {
        if !rect.fits_in(self.width, self.height) {
            return Err(Error::OutOfBounds(format!(
                "crop {:?} exceeds {}x{} image",
                rect, self.width, self.height
            )));
        }
        let channels = std::array::from_fn(|i| {
            let plane = &self.channels[i];
            let mut out = Vec::with_capacity(rect.width * rect.height);
            for r in rect.row..rect.row_end() {
                out.extend_from_slice(
                    &plane[r * self.width + rect.col..r * self.width + rect.col_end()],
                );
            }
            out
        });
        RgbComposite::from_channels(rect.width, rect.height, channels)
    }

    /// Three `f32` bands named R, G, B, for segmentation.
    pub fn to_stack(&self, geo: GeoRef) -> Result<BandStack> {
        let bands = self
            .channels
            .iter()
            .map(|c| c.iter().map(|&v| v as f32).collect())
            .collect();
        let names = ["R", "G", "B"].map(String::from).to_vec();
        BandStack::new(self.width, self.height, bands, names, geo, None)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.width * self.height * 3);
        for i in 0..self.width * self.height {
            buf.extend([
                self.channels[0][i],
                self.channels[1][i],
                self.channels[2][i],
            ]);
        }
        let img: ImageBuffer<Rgb<u8>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, buf)
                .expect("buffer sized to image");
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<RgbComposite> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = image::open(path)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut channels = [
            Vec::with_capacity(w * h),
            Vec::with_capacity(w * h),
            Vec::with_capacity(w * h),
        ];
        for p in img.pixels() {
            for (c, v) in channels.iter_mut().zip(p.0) {
                c.push(v);
            }
        }
        RgbComposite::from_channels(w, h, channels)
    }
}

/// Linear-interpolated percentile of sorted data (`pct` in 0..=100).
pub(crate) fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn stretch_band(stack: &BandStack, band: usize, stretch: Stretch) -> (Vec<u8>, ChannelStretch) {
    let plane = stack.band(band);
    let mut valid: Vec<f64> = plane
        .iter()
        .filter(|v| !v.is_nan() && !stack.is_nodata(**v))
        .map(|&v| v as f64)
        .collect();
    if valid.is_empty() {
        return (
            vec![0; plane.len()],
            ChannelStretch {
                low: 0.0,
                high: 0.0,
            },
        );
    }
    valid.sort_by(|a, b| a.total_cmp(b));
    let low = percentile_sorted(&valid, stretch.lower_pct);
    let high = percentile_sorted(&valid, stretch.upper_pct);
    let span = high - low;
    let out = plane
        .iter()
        .map(|&v| {
            if span <= 0.0 || v.is_nan() || stack.is_nodata(v) {
                0
            } else {
                ((v as f64 - low) / span * 255.0).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    (out, ChannelStretch { low, high })
}

/// Three-band color composition with a per-channel percentile stretch.
/// Constant channels map to 0.
pub fn compose(
    stack: &BandStack,
    band_indices: [usize; 3],
    stretch: Stretch,
) -> Result<RgbComposite> {
    for &b in &band_indices {
        stack.check_band(b)?;
    }
    if band_indices[0] == band_indices[1]
        || band_indices[0] == band_indices[2]
        || band_indices[1] == band_indices[2]
    {
        return Err(Error::InvalidParameter(format!(
            "repeated band index in {band_indices:?}"
        )));
    }
    let stretch = Stretch::new(stretch.lower_pct, stretch.upper_pct)?;
    let [(c0, s0), (c1, s1), (c2, s2)] = band_indices.map(|b| stretch_band(stack, b, stretch));
    Ok(RgbComposite {
        width: stack.width(),
        height: stack.height(),
        channels: [c0, c1, c2],
        source_bands: Some(band_indices),
        stretch: Some((stretch, [s0, s1, s2])),
    })
}

/// Gray rendering of a normalized-difference plane: −1 → 0, +1 → 255, nodata → 0.
pub fn render_index(plane: &IndexPlane) -> RgbComposite {
    let gray = plane
        .values
        .iter()
        .zip(&plane.nodata)
        .map(|(&v, &nd)| {
            if nd {
                0
            } else {
                ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    RgbComposite::from_gray(plane.width, plane.height, gray).expect("plane dims are valid")
}

/// Boolean plane as a black/white image (true → white).
pub fn render_labels_gray(width: usize, height: usize, mask: &[bool]) -> Result<RgbComposite> {
    RgbComposite::from_gray(
        width,
        height,
        mask.iter().map(|&m| if m { 255 } else { 0 }).collect(),
    )
}
