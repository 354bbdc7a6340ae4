//! Point-annotation weak supervision for anomaly localization.
//!
//! The crate turns annotated points into lower/upper confidence-bound
//! heatmaps, scores dense predictions against them with the Window Loss,
//! trains a small feature-pyramid network on those targets, and evaluates
//! the resulting heatmaps with image-level AUROC and point-level FROC.
//!
//! Module map:
//!
//! - [`annotations`]: manifests, image records and the pad-and-resize
//!   coordinate transform.
//! - [`supervision`]: distance fields, bound heatmaps and disk masks.
//! - [`windowloss`]: the piecewise loss, its gradient and the pyramid total.
//! - [`tinynet`]: reverse-mode tape, pyramid network, Adam and training.
//! - [`synthgen`]: seeded synthetic crack images.
//! - [`evalmetrics`]: AUROC, connected components and FROC.
//! - [`io`]: PGM and raw float grid files.

pub mod annotations;
pub mod error;
pub mod evalmetrics;
pub mod grid;
pub mod io;
pub mod supervision;
pub mod synthgen;
pub mod tinynet;
pub mod windowloss;

pub use annotations::{Dataset, ImageRecord, InputTransform, Point, Split};
pub use error::{Error, Result};
pub use grid::Heatmap;
pub use supervision::{BoundPair, BoundParams};
pub use windowloss::Divergence;
