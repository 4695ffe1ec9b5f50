//! The `.bsj`/`.bsd` raster container.
//!
//! A raster is stored as two sibling files sharing a stem: a JSON header
//! (`<name>.bsj`) and a raw little-endian payload (`<name>.bsd`) laid out
//! band-major, then row-major. The same container carries reflectance
//! stacks (`f32le`), segment label planes (`i32le`) and class-code planes
//! (`u8`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "f32le")]
    F32Le,
    #[serde(rename = "i32le")]
    I32Le,
    #[serde(rename = "u8")]
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32Le | DType::I32Le => 4,
            DType::U8 => 1,
        }
    }
}

/// Geographic placement shared by every raster of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoRef {
    /// Meters per (square) pixel.
    pub pixel_size: f64,
    /// Easting/northing of the top-left corner, meters.
    pub origin: [f64; 2],
    pub crs: String,
}

impl Default for GeoRef {
    fn default() -> Self {
        GeoRef {
            pixel_size: 30.0,
            origin: [0.0, 0.0],
            crs: "EPSG:32720".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub width: usize,
    pub height: usize,
    pub band_names: Vec<String>,
    pub pixel_size: f64,
    pub origin: [f64; 2],
    pub crs: String,
    pub nodata: Option<f64>,
    pub dtype: DType,
}

impl Header {
    pub fn geo(&self) -> GeoRef {
        GeoRef {
            pixel_size: self.pixel_size,
            origin: self.origin,
            crs: self.crs.clone(),
        }
    }

    pub fn payload_len(&self) -> u64 {
        self.width as u64
            * self.height as u64
            * self.band_names.len() as u64
            * self.dtype.size() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidHeader(format!(
                "raster must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.pixel_size > 0.0) || !self.pixel_size.is_finite() {
            return Err(Error::InvalidHeader(format!(
                "pixel_size must be positive, got {}",
                self.pixel_size
            )));
        }
        if self.band_names.is_empty() {
            return Err(Error::InvalidHeader("no bands declared".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &self.band_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateBandName(name.clone()));
            }
        }
        Ok(())
    }
}

/// Resolve `(header, payload)` paths from any of `name`, `name.bsj` or `name.bsd`.
pub fn container_paths(path: &Path) -> (PathBuf, PathBuf) {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bsj") | Some("bsd") => (path.with_extension("bsj"), path.with_extension("bsd")),
        _ => {
            let mut header = path.as_os_str().to_owned();
            header.push(".bsj");
            let mut payload = path.as_os_str().to_owned();
            payload.push(".bsd");
            (PathBuf::from(header), PathBuf::from(payload))
        }
    }
}

pub fn read_container(path: &Path) -> Result<(Header, Vec<u8>)> {
    let (hpath, dpath) = container_paths(path);
    let text = fs::read_to_string(&hpath).map_err(|e| Error::io(&hpath, e))?;
    let header: Header =
        serde_json::from_str(&text).map_err(|e| Error::json(hpath.display().to_string(), e))?;
    header.validate()?;
    let payload = fs::read(&dpath).map_err(|e| Error::io(&dpath, e))?;
    let expected = header.payload_len();
    if payload.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: payload.len() as u64,
        });
    }
    Ok((header, payload))
}

pub fn write_container(path: &Path, header: &Header, payload: &[u8]) -> Result<()> {
    header.validate()?;
    if payload.len() as u64 != header.payload_len() {
        return Err(Error::SizeMismatch {
            expected: header.payload_len(),
            actual: payload.len() as u64,
        });
    }
    let (hpath, dpath) = container_paths(path);
    if let Some(dir) = hpath.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(header)
        .map_err(|e| Error::json(hpath.display().to_string(), e))?;
    text.push('\n');
    fs::write(&hpath, text).map_err(|e| Error::io(&hpath, e))?;
    fs::write(&dpath, payload).map_err(|e| Error::io(&dpath, e))?;
    Ok(())
}

pub(crate) fn expect_dtype(header: &Header, dtype: DType) -> Result<()> {
    if header.dtype != dtype {
        return Err(Error::InvalidHeader(format!(
            "expected dtype {:?}, found {:?}",
            dtype, header.dtype
        )));
    }
    Ok(())
}

/// Single-band `i32le` plane, used for segment labels.
pub fn write_i32_plane(
    path: &Path,
    width: usize,
    height: usize,
    name: &str,
    geo: &GeoRef,
    values: &[i32],
) -> Result<()> {
    let header = Header {
        width,
        height,
        band_names: vec![name.to_string()],
        pixel_size: geo.pixel_size,
        origin: geo.origin,
        crs: geo.crs.clone(),
        nodata: Some(-1.0),
        dtype: DType::I32Le,
    };
    let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_container(path, &header, &payload)
}

pub fn read_i32_plane(path: &Path) -> Result<(Header, Vec<i32>)> {
    let (header, payload) = read_container(path)?;
    expect_dtype(&header, DType::I32Le)?;
    if header.band_names.len() != 1 {
        return Err(Error::InvalidHeader(
            "label plane must have exactly one band".into(),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, values))
}

/// Single-band `u8` plane, used for class-code maps and binary masks.
pub fn write_u8_plane(
    path: &Path,
    width: usize,
    height: usize,
    name: &str,
    geo: &GeoRef,
    values: &[u8],
) -> Result<()> {
    let header = Header {
        width,
        height,
        band_names: vec![name.to_string()],
        pixel_size: geo.pixel_size,
        origin: geo.origin,
        crs: geo.crs.clone(),
        nodata: None,
        dtype: DType::U8,
    };
    write_container(path, &header, values)
}

pub fn read_u8_plane(path: &Path) -> Result<(Header, Vec<u8>)> {
    let (header, payload) = read_container(path)?;
    expect_dtype(&header, DType::U8)?;
    if header.band_names.len() != 1 {
        return Err(Error::InvalidHeader(
            "code plane must have exactly one band".into(),
        ));
    }
    Ok((header, payload))
}
