//! Campaign engine for citizen-science deforestation monitoring.
//!
//! The crate covers both halves of a campaign:
//!
//! * preparing tasks: multiband rasters ([`raster`]) are reduced to a
//!   pseudo-RGB composite ([`decompose`]), split into superpixels
//!   ([`segment`]), compared against reference maps ([`groundtruth`]) and
//!   rendered into volunteer tasks ([`tasks`]);
//! * analysing answers: volunteer logs are aggregated into consensus labels
//!   with entropy-based difficulty ([`consensus`]), volunteers are scored
//!   ([`scoring`]), and consensus maps from two epochs are compared
//!   ([`changedetect`]). [`simulate`] generates synthetic answer logs and
//!   [`report`] renders campaign tables.

pub mod changedetect;
pub mod consensus;
pub mod decompose;
pub mod error;
pub mod groundtruth;
pub mod label;
pub mod raster;
pub mod report;
pub mod rng;
pub mod scoring;
pub mod segment;
pub mod simulate;
pub mod tasks;

pub use error::{Error, Result};
pub use label::{Answer, Cover, SegmentLabel};
pub use raster::{BandStack, PixelRect, RgbComposite};
pub use segment::{SegmentId, Segmentation};
