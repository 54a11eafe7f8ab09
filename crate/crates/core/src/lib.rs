//! Retinal fundus image pipeline for ROP stage work: preprocessing,
//! annotation handling, dataset building, pluggable detection backends,
//! stage extraction, and the evaluation suite.
//!
//! Module map:
//!
//! - [`img`] — pixel rasters, grayscale conversion, bilinear resize,
//!   cropping and zooming, PNG I/O.
//! - [`enhance`] — histograms, global equalization, CLAHE,
//!   standardization.
//! - [`annot`] — stage labels, VIA polygon annotations, rasterization,
//!   binary masks with RLE coding.
//! - [`dataset`] — manifests, seeded 6:3:1 splitting, class augmentation,
//!   materialization, mask-channel fusion and its file format.
//! - [`detect`] — the detection-backend contract (oracle / null / file
//!   backends) and stage extraction from detections.
//! - [`metrics`] — IoU, detection matching, PR curves, average precision,
//!   confusion matrices, classification reports.
//! - [`fixture`] — synthetic end-to-end test data generator.

pub mod annot;
pub mod dataset;
pub mod detect;
pub mod enhance;
pub mod fixture;
pub mod img;
pub mod metrics;
