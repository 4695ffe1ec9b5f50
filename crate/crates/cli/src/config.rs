//! Campaign configuration: one JSON file, overridden by flags.

use std::path::{Path, PathBuf};

use foresteyes_core::consensus::DEFAULT_REDUNDANCY;
use foresteyes_core::tasks::PanelKind;
use foresteyes_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Slic,
    IftSlic,
    MaskSlic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub algorithm: Algorithm,
    pub n_segments: usize,
    pub compactness: f64,
    pub iterations: usize,
    /// IFT-SLIC color weight and exponent.
    pub alpha: f64,
    pub beta: f64,
    /// MaskSLIC pixels per requested segment.
    pub target_region_px: usize,
    /// MaskSLIC exclusion plane (u8, nonzero = masked).
    pub mask: Option<PathBuf>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            algorithm: Algorithm::Slic,
            n_segments: 100,
            compactness: 10.0,
            iterations: 10,
            alpha: 0.5,
            beta: 12.0,
            target_region_px: 70,
            mask: None,
        }
    }
}

/// How to render one task panel from the input raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    pub kind: PanelKind,
    /// Zero-based band indices for R, G, B. Ignored for NDVI panels.
    #[serde(default)]
    pub bands: Option<[usize; 3]>,
    /// Zero-based red and near-infrared band indices for NDVI panels.
    #[serde(default)]
    pub ndvi: Option<[usize; 2]>,
    #[serde(default = "default_stretch")]
    pub stretch: [f64; 2],
}

fn default_stretch() -> [f64; 2] {
    [2.0, 98.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub workflow_id: String,
    pub raster: Option<PathBuf>,
    pub classmap: Option<PathBuf>,
    pub classmap_legend: Option<PathBuf>,
    /// Legend names that count as Forest.
    pub forest_classes: Vec<String>,
    pub segmentation: SegmentationConfig,
    pub panels: Vec<PanelConfig>,
    pub redundancy: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            workflow_id: "workflow".into(),
            raster: None,
            classmap: None,
            classmap_legend: None,
            forest_classes: vec!["Forest".into()],
            segmentation: SegmentationConfig::default(),
            panels: vec![
                PanelConfig {
                    kind: PanelKind::Rgb,
                    bands: Some([3, 2, 1]),
                    ndvi: None,
                    stretch: default_stretch(),
                },
                PanelConfig {
                    kind: PanelKind::False753,
                    bands: Some([6, 4, 2]),
                    ndvi: None,
                    stretch: default_stretch(),
                },
            ],
            redundancy: DEFAULT_REDUNDANCY,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.redundancy == 0 {
            return Err(Error::InvalidParameter(
                "redundancy must be at least 1".into(),
            ));
        }
        let id = &self.workflow_id;
        if id.is_empty()
            || !id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            || id.starts_with('.')
        {
            return Err(Error::InvalidParameter(format!(
                "workflow_id {id:?} must be non-empty and use only letters, digits, '-', '_' or '.'"
            )));
        }
        Ok(())
    }

    /// `<out>/<workflow_id>`.
    pub fn campaign_dir(&self) -> PathBuf {
        self.out.join(&self.workflow_id)
    }
}
