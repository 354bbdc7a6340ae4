//! Point-annotated image corpora.
//!
//! A manifest is a UTF-8 JSON document:
//!
//! ```json
//! {"input_size": 128,
//!  "records": [{"image": "img_000.pgm", "width": 128, "height": 128,
//!               "split": "train", "points": [[50.0, 50.0]]}]}
//! ```
//!
//! Points are `[x, y]` in original-image pixels: `x` is the column, `y` the
//! row, the origin is the top-left pixel center. An empty `points` list marks
//! an image-level negative.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Heatmap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    #[serde(rename = "image")]
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    pub split: Split,
    pub points: Vec<Point>,
}

impl ImageRecord {
    pub fn is_positive(&self) -> bool {
        !self.points.is_empty()
    }

    /// Image-level label: 1 when at least one point is annotated.
    pub fn label(&self) -> u8 {
        u8::from(self.is_positive())
    }

    /// File name without directories or extension; used to name derived
    /// artifacts.
    pub fn stem(&self) -> String {
        Path::new(&self.image_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.image_path.clone())
    }

    pub fn transform(&self, input_size: u32) -> InputTransform {
        InputTransform::new(self.width, self.height, input_size)
    }

    /// Annotation points mapped into model-input space.
    pub fn input_points(&self, input_size: u32) -> Vec<Point> {
        let t = self.transform(input_size);
        self.points.iter().map(|p| t.apply(*p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub input_size: u32,
    pub records: Vec<ImageRecord>,
}

/// One broken invariant, located as precisely as possible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub record: Option<usize>,
    pub image: Option<String>,
    pub point: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = self.record {
            write!(f, "record {r}")?;
            if let Some(img) = &self.image {
                write!(f, " ({img})")?;
            }
            if let Some(p) = self.point {
                write!(f, " point {p}")?;
            }
            f.write_str(": ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        Err(Error::Validation(msgs.join("; ")))
    }
}

impl Dataset {
    /// Parses and validates a manifest.
    pub fn from_manifest(bytes: &[u8]) -> Result<Self> {
        let dataset: Dataset = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        dataset.validate().into_result()?;
        Ok(dataset)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_manifest(&bytes)
    }

    /// Pretty-printed manifest JSON with a trailing newline.
    pub fn to_manifest(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_manifest()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.input_size == 0 {
            report.violations.push(Violation {
                record: None,
                image: None,
                point: None,
                message: "input_size must be positive".into(),
            });
        }
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, rec) in self.records.iter().enumerate() {
            let at = |point: Option<usize>, message: String| Violation {
                record: Some(i),
                image: Some(rec.image_path.clone()),
                point,
                message,
            };
            if let Some(first) = seen.insert(rec.image_path.as_str(), i) {
                report
                    .violations
                    .push(at(None, format!("duplicate image path (first used by record {first})")));
            }
            if rec.width == 0 || rec.height == 0 {
                report
                    .violations
                    .push(at(None, format!("empty image size {}x{}", rec.width, rec.height)));
            }
            for (k, p) in rec.points.iter().enumerate() {
                let inside = p.x.is_finite()
                    && p.y.is_finite()
                    && p.x >= 0.0
                    && p.y >= 0.0
                    && p.x < rec.width as f64
                    && p.y < rec.height as f64;
                if !inside {
                    report.violations.push(at(
                        Some(k),
                        format!(
                            "point ({}, {}) outside {}x{} image",
                            p.x, p.y, rec.width, rec.height
                        ),
                    ));
                }
            }
        }
        report
    }

    /// Checks that `input_size` is divisible by the coarsest model stride.
    pub fn check_stride(&self, max_stride: u32) -> Result<()> {
        if max_stride == 0 || self.input_size % max_stride != 0 {
            return Err(Error::Validation(format!(
                "input_size {} is not divisible by stride {max_stride}",
                self.input_size
            )));
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Resolves a record's image path relative to the manifest directory.
    pub fn image_path(manifest_dir: &Path, record: &ImageRecord) -> PathBuf {
        manifest_dir.join(&record.image_path)
    }
}

/// The affine map induced by padding an image symmetrically to a square and
/// resizing it to `input_size`.
///
/// When the padding is odd the extra pixel goes on the trailing side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputTransform {
    pub pad_x: f64,
    pub pad_y: f64,
    pub scale: f64,
}

impl InputTransform {
    pub fn new(width: u32, height: u32, input_size: u32) -> Self {
        let side = width.max(height);
        Self {
            pad_x: ((side - width) / 2) as f64,
            pad_y: ((side - height) / 2) as f64,
            scale: input_size as f64 / side as f64,
        }
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        Point::new((p.x + self.pad_x) * self.scale, (p.y + self.pad_y) * self.scale)
    }

    #[inline]
    pub fn invert(&self, p: Point) -> Point {
        Point::new(p.x / self.scale - self.pad_x, p.y / self.scale - self.pad_y)
    }

    /// Resamples an original image into the square input frame. Padding is
    /// filled with zeros; interior samples are bilinear.
    pub fn warp_image(&self, image: &Heatmap, input_size: u32) -> Heatmap {
        let n = input_size as usize;
        let (h, w) = (image.rows() as f64, image.cols() as f64);
        Heatmap::from_fn(n, n, |i, j| {
            let src = self.invert(Point::new(j as f64, i as f64));
            if src.x < -0.5 || src.y < -0.5 || src.x > w - 0.5 || src.y > h - 0.5 {
                0.0
            } else {
                image.sample_bilinear(src.y, src.x)
            }
        })
    }
}

/// Maps an original-image point into model-input coordinates.
pub fn to_input_space(p: Point, width: u32, height: u32, input_size: u32) -> Result<Point> {
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64) {
        return Err(Error::Contract(format!(
            "point ({}, {}) outside {width}x{height} image",
            p.x, p.y
        )));
    }
    Ok(InputTransform::new(width, height, input_size).apply(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest(points: &str, w: u32, h: u32) -> String {
        format!(
            r#"{{"input_size": 128, "records": [{{"image": "a.pgm", "width": {w}, "height": {h}, "split": "train", "points": {points}}}]}}"#
        )
    }

    #[test]
    fn parses_positive_record() {
        let d = Dataset::from_manifest(manifest("[[50,50]]", 128, 128).as_bytes()).unwrap();
        assert_eq!(d.records.len(), 1);
        assert!(d.records[0].is_positive());
        assert_eq!(d.records[0].points, vec![Point::new(50.0, 50.0)]);
    }

    #[test]
    fn parses_negative_record() {
        let d = Dataset::from_manifest(manifest("[]", 128, 128).as_bytes()).unwrap();
        assert_eq!(d.records[0].label(), 0);
    }

    #[test]
    fn out_of_bounds_point_names_record() {
        let err = Dataset::from_manifest(manifest("[[200,10]]", 128, 128).as_bytes()).unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("record 0") && msg.contains("a.pgm"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = Dataset::from_manifest(b"{\"input_size\": 128,\n \"records\": [}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = Dataset::from_manifest(
            br#"{"input_size": 128, "records": [{"image": "a", "width": 4, "split": "val", "points": []}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("height"), "{err}");
    }

    #[test]
    fn bad_split_is_parse_error() {
        let text = manifest("[]", 8, 8).replace("train", "holdout");
        assert!(matches!(Dataset::from_manifest(text.as_bytes()), Err(Error::Parse { .. })));
    }

    fn record(path: &str, points: Vec<Point>) -> ImageRecord {
        ImageRecord {
            image_path: path.into(),
            width: 100,
            height: 100,
            split: Split::Test,
            points,
        }
    }

    #[test]
    fn validate_reports() {
        let good = Dataset {
            input_size: 128,
            records: vec![record("a", vec![Point::new(1.0, 2.0)]), record("b", vec![])],
        };
        assert!(good.validate().is_empty());

        let dup = Dataset {
            input_size: 128,
            records: vec![record("a", vec![]), record("a", vec![])],
        };
        assert_eq!(dup.validate().violations.len(), 1);

        let neg = Dataset {
            input_size: 128,
            records: vec![record("a", vec![Point::new(3.0, 3.0), Point::new(-1.0, 4.0)])],
        };
        let report = neg.validate();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].record, Some(0));
        assert_eq!(report.violations[0].point, Some(1));
    }

    #[test]
    fn stride_divisibility() {
        let d = Dataset { input_size: 128, records: vec![] };
        assert!(d.check_stride(16).is_ok());
        assert!(d.check_stride(48).is_err());
    }

    #[test]
    fn input_space_examples() {
        let p = to_input_space(Point::new(50.0, 50.0), 128, 128, 128).unwrap();
        assert_eq!(p, Point::new(50.0, 50.0));
        let p = to_input_space(Point::new(0.0, 0.0), 100, 200, 200).unwrap();
        assert_eq!(p, Point::new(50.0, 0.0));
        let p = to_input_space(Point::new(10.0, 10.0), 100, 100, 200).unwrap();
        assert_eq!(p, Point::new(20.0, 20.0));
        assert!(to_input_space(Point::new(100.0, 0.0), 100, 100, 200).is_err());
    }

    #[test]
    fn odd_padding_goes_trailing() {
        let t = InputTransform::new(97, 100, 100);
        assert_eq!(t.pad_x, 1.0);
        assert_eq!(t.pad_y, 0.0);
    }

    #[test]
    fn warp_of_square_identity_size_is_identity() {
        let img = Heatmap::from_fn(8, 8, |r, c| (r * 8 + c) as f64 / 64.0);
        let t = InputTransform::new(8, 8, 8);
        assert_eq!(t.warp_image(&img, 8), img);
    }

    #[test]
    fn warp_pads_with_zeros() {
        let img = Heatmap::filled(4, 2, 1.0);
        let out = InputTransform::new(2, 4, 4).warp_image(&img, 4);
        for r in 0..4 {
            assert_eq!(out.get(r, 0), 0.0);
            assert_eq!(out.get(r, 1), 1.0);
            assert_eq!(out.get(r, 2), 1.0);
            assert_eq!(out.get(r, 3), 0.0);
        }
    }

    fn dims() -> impl Strategy<Value = (u32, u32, u32)> {
        (1u32..2000, 1u32..2000, 1u32..2048)
    }

    proptest! {
        #[test]
        fn transform_round_trip((w, h, n) in dims(), fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
            let p = Point::new(fx * w as f64, fy * h as f64);
            let t = InputTransform::new(w, h, n);
            let q = t.invert(t.apply(p));
            prop_assert!((q.x - p.x).abs() < 1e-9 && (q.y - p.y).abs() < 1e-9);
            let m = t.apply(p);
            prop_assert!(m.x >= 0.0 && m.x < n as f64 + 1e-9);
            prop_assert!(m.y >= 0.0 && m.y < n as f64 + 1e-9);
        }

        #[test]
        fn transform_is_order_preserving((w, h, n) in dims(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let t = InputTransform::new(w, h, n);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(lo < hi);
            let p = t.apply(Point::new(lo * w as f64, lo * h as f64));
            let q = t.apply(Point::new(hi * w as f64, hi * h as f64));
            prop_assert!(p.x < q.x && p.y < q.y);
        }

        #[test]
        fn manifest_round_trip(
            pts in prop::collection::vec(prop::collection::vec((0.0f64..64.0, 0.0f64..32.0), 0..4), 1..5),
            split in 0usize..3,
        ) {
            let records = pts.into_iter().enumerate().map(|(i, ps)| ImageRecord {
                image_path: format!("img_{i}.pgm"),
                width: 64,
                height: 32,
                split: [Split::Train, Split::Val, Split::Test][split],
                points: ps.into_iter().map(|(x, y)| Point::new(x, y)).collect(),
            }).collect();
            let d = Dataset { input_size: 64, records };
            let back = Dataset::from_manifest(d.to_manifest().as_bytes()).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
