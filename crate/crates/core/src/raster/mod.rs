//! Multiband raster model, file I/O, cropping/resampling and band math.

mod composite;
pub mod container;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use composite::{compose, render_index, render_labels_gray, RgbComposite, Stretch};
pub use container::{DType, GeoRef, Header};

/// Axis-aligned pixel rectangle; `row`/`col` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl PixelRect {
    pub fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        PixelRect {
            row,
            col,
            height,
            width,
        }
    }

    pub fn row_end(&self) -> usize {
        self.row + self.height
    }

    pub fn col_end(&self) -> usize {
        self.col + self.width
    }

    pub fn contains(&self, other: &PixelRect) -> bool {
        other.row >= self.row
            && other.col >= self.col
            && other.row_end() <= self.row_end()
            && other.col_end() <= self.col_end()
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.width > 0 && self.height > 0 && self.col_end() <= width && self.row_end() <= height
    }

    /// Grow by `margin` on every side, clipped to a `width`×`height` image.
    pub fn expand_clipped(&self, margin: usize, width: usize, height: usize) -> PixelRect {
        let row = self.row.saturating_sub(margin);
        let col = self.col.saturating_sub(margin);
        let row_end = (self.row_end() + margin).min(height);
        let col_end = (self.col_end() + margin).min(width);
        PixelRect::new(row, col, row_end - row, col_end - col)
    }
}

/// Georeferenced multiband raster. Planes are row-major `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStack {
    width: usize,
    height: usize,
    bands: Vec<Vec<f32>>,
    band_names: Vec<String>,
    geo: GeoRef,
    nodata: Option<f64>,
}

impl BandStack {
    pub fn new(
        width: usize,
        height: usize,
        bands: Vec<Vec<f32>>,
        band_names: Vec<String>,
        geo: GeoRef,
        nodata: Option<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidHeader(format!(
                "raster must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(geo.pixel_size > 0.0) || !geo.pixel_size.is_finite() {
            return Err(Error::InvalidHeader(format!(
                "pixel_size must be positive, got {}",
                geo.pixel_size
            )));
        }
        if bands.is_empty() {
            return Err(Error::InvalidHeader("no bands".into()));
        }
        if bands.len() != band_names.len() {
            return Err(Error::InvalidHeader(format!(
                "{} bands but {} band names",
                bands.len(),
                band_names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &band_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateBandName(name.clone()));
            }
        }
        for (i, band) in bands.iter().enumerate() {
            if band.len() != width * height {
                return Err(Error::InvalidHeader(format!(
                    "band {i} has {} values, expected {}",
                    band.len(),
                    width * height
                )));
            }
        }
        Ok(BandStack {
            width,
            height,
            bands,
            band_names,
            geo,
            nodata,
        })
    }

    /// Stack with default georeferencing and band names `B1..Bn`.
    pub fn from_bands(width: usize, height: usize, bands: Vec<Vec<f32>>) -> Result<Self> {
        let names = (1..=bands.len()).map(|i| format!("B{i}")).collect();
        Self::new(width, height, bands, names, GeoRef::default(), None)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn band(&self, index: usize) -> &[f32] {
        &self.bands[index]
    }

    pub fn bands(&self) -> &[Vec<f32>] {
        &self.bands
    }

    pub fn band_names(&self) -> &[String] {
        &self.band_names
    }

    pub fn band_index(&self, name: &str) -> Option<usize> {
        self.band_names.iter().position(|n| n == name)
    }

    pub fn geo(&self) -> &GeoRef {
        &self.geo
    }

    pub fn pixel_size(&self) -> f64 {
        self.geo.pixel_size
    }

    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.bands[band][row * self.width + col]
    }

    /// All band values of one pixel, in band order, widened to `f64`.
    pub fn pixel(&self, index: usize) -> Vec<f64> {
        self.bands.iter().map(|b| b[index] as f64).collect()
    }

    pub fn is_nodata(&self, value: f32) -> bool {
        match self.nodata {
            Some(nd) => (value as f64) == nd || (nd.is_nan() && value.is_nan()),
            None => false,
        }
    }

    fn check_band(&self, index: usize) -> Result<()> {
        if index >= self.bands.len() {
            return Err(Error::InvalidParameter(format!(
                "band index {index} out of range for {}-band stack",
                self.bands.len()
            )));
        }
        Ok(())
    }
}

pub fn load_band_stack(path: &Path) -> Result<BandStack> {
    let (header, payload) = container::read_container(path)?;
    container::expect_dtype(&header, DType::F32Le)?;
    let plane = header.width * header.height;
    let bands = payload
        .chunks_exact(plane * 4)
        .map(|chunk| {
            chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        })
        .collect();
    let geo = header.geo();
    BandStack::new(
        header.width,
        header.height,
        bands,
        header.band_names,
        geo,
        header.nodata,
    )
}

pub fn save_band_stack(stack: &BandStack, path: &Path) -> Result<()> {
    let header = Header {
        width: stack.width,
        height: stack.height,
        band_names: stack.band_names.clone(),
        pixel_size: stack.geo.pixel_size,
        origin: stack.geo.origin,
        crs: stack.geo.crs.clone(),
        nodata: stack.nodata,
        dtype: DType::F32Le,
    };
    let mut payload = Vec::with_capacity(header.payload_len() as usize);
    for band in &stack.bands {
        for v in band {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    container::write_container(path, &header, &payload)
}

/// Relation between a source and target pixel size: nearest-neighbor
/// sampling picks source index `i * step` (coarsening) or `i / step` (refining).
enum Resample {
    Coarsen(usize),
    Refine(usize),
}

fn integer_ratio(x: f64) -> Option<usize> {
    let r = x.round();
    if r >= 1.0 && (x - r).abs() <= 1e-9 * x.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

/// Crop `window` (source pixel coordinates) and resample to `target_pixel_size`
/// by nearest neighbor. The target must be an integer multiple or divisor of the
/// source pixel size.
pub fn crop_resample(
    stack: &BandStack,
    window: PixelRect,
    target_pixel_size: f64,
) -> Result<BandStack> {
    if !(target_pixel_size > 0.0) || !target_pixel_size.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "target pixel size must be positive, got {target_pixel_size}"
        )));
    }
    if !window.fits_in(stack.width, stack.height) {
        return Err(Error::OutOfBounds(format!(
            "window {:?} exceeds {}x{} stack",
            window, stack.width, stack.height
        )));
    }
    let src = stack.geo.pixel_size;
    let mode = if let Some(step) = integer_ratio(target_pixel_size / src) {
        Resample::Coarsen(step)
    } else if let Some(step) = integer_ratio(src / target_pixel_size) {
        Resample::Refine(step)
    } else {
        return Err(Error::InvalidParameter(format!(
            "target pixel size {target_pixel_size} is neither a multiple nor a divisor of {src}"
        )));
    };
    let (out_w, out_h, pick): (usize, usize, Box<dyn Fn(usize) -> usize + Sync>) = match mode {
        Resample::Coarsen(step) => (
            window.width.div_ceil(step),
            window.height.div_ceil(step),
            Box::new(move |i| i * step),
        ),
        Resample::Refine(step) => (
            window.width * step,
            window.height * step,
            Box::new(move |i| i / step),
        ),
    };
    let bands = stack
        .bands
        .par_iter()
        .map(|band| {
            let mut out = Vec::with_capacity(out_w * out_h);
            for r in 0..out_h {
                let sr = window.row + pick(r);
                for c in 0..out_w {
                    let sc = window.col + pick(c);
                    out.push(band[sr * stack.width + sc]);
                }
            }
            out
        })
        .collect();
    let geo = GeoRef {
        pixel_size: target_pixel_size,
        origin: [
            stack.geo.origin[0] + window.col as f64 * src,
            stack.geo.origin[1] - window.row as f64 * src,
        ],
        crs: stack.geo.crs.clone(),
    };
    BandStack::new(
        out_w,
        out_h,
        bands,
        stack.band_names.clone(),
        geo,
        stack.nodata,
    )
}

/// Per-pixel normalized-difference plane with a nodata mask.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexPlane {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub nodata: Vec<bool>,
}

impl IndexPlane {
    pub fn nodata_count(&self) -> usize {
        self.nodata.iter().filter(|&&m| m).count()
    }
}

/// Normalized difference of two non-negative values; `None` when both are zero.
#[inline]
pub fn normalized_difference(nir: f64, red: f64) -> Option<f64> {
    let denom = nir + red;
    if denom == 0.0 {
        None
    } else {
        Some((nir - red) / denom)
    }
}

/// NDVI = (NIR − Red)/(NIR + Red). Pixels with a zero denominator, or whose
/// inputs carry the stack's nodata value, read 0 and are flagged nodata.
pub fn ndvi(stack: &BandStack, red_index: usize, nir_index: usize) -> Result<IndexPlane> {
    stack.check_band(red_index)?;
    stack.check_band(nir_index)?;
    let red = stack.band(red_index);
    let nir = stack.band(nir_index);
    if let Some(i) = (0..red.len()).find(|&i| {
        !stack.is_nodata(red[i]) && !stack.is_nodata(nir[i]) && (red[i] < 0.0 || nir[i] < 0.0)
    }) {
        return Err(Error::InvalidParameter(format!(
            "negative reflectance at pixel {i} (red {}, nir {})",
            red[i], nir[i]
        )));
    }
    let (values, nodata): (Vec<f64>, Vec<bool>) = red
        .par_iter()
        .zip(nir.par_iter())
        .map(|(&r, &n)| {
            if stack.is_nodata(r) || stack.is_nodata(n) {
                return (0.0, true);
            }
            match normalized_difference(n as f64, r as f64) {
                Some(v) => (v, false),
                None => (0.0, true),
            }
        })
        .unzip();
    Ok(IndexPlane {
        width: stack.width,
        height: stack.height,
        values,
        nodata,
    })
}
