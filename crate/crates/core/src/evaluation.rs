//! Per-point scoring of a change prediction and the on-disk report.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Label, PointCloud};
use crate::grouping::{ChangeKind, Correspondence, MatchMatrix};
use crate::segmentation::{export_segments, Segment, SegmentId};
use crate::spatial::HashGrid;

pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const MATCH_MATRIX_FILE: &str = "match_matrix.csv";
pub const SEGMENTS_DIR: &str = "segments";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Written as a number, or the string `"undefined"` for 0/0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Defined(f64),
    Undefined,
}

impl Ratio {
    pub fn of(num: u64, den: u64) -> Self {
        if den == 0 {
            Ratio::Undefined
        } else {
            Ratio::Defined(num as f64 / den as f64)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Ratio::Defined(v) => Some(*v),
            Ratio::Undefined => None,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Defined(v) => write!(f, "{v:.3}"),
            Ratio::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Defined(v) => s.serialize_f64(*v),
            Ratio::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Ratio::Defined(v)),
            Raw::Text(t) if t == "undefined" => Ok(Ratio::Undefined),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"undefined\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub precision: Ratio,
    pub recall: Ratio,
    pub specificity: Ratio,
    pub f_score: Ratio,
    pub iou: Ratio,
}

pub fn compute_metrics(c: ConfusionCounts) -> MetricsReport {
    let precision = Ratio::of(c.tp, c.tp + c.fp);
    let recall = Ratio::of(c.tp, c.tp + c.fn_);
    let f_score = match (precision, recall) {
        (Ratio::Defined(p), Ratio::Defined(r)) if p + r > 0.0 => Ratio::Defined(2.0 * p * r / (p + r)),
        (Ratio::Defined(_), Ratio::Defined(_)) => Ratio::Defined(0.0),
        _ => Ratio::Undefined,
    };
    MetricsReport {
        counts: c,
        precision,
        recall,
        specificity: Ratio::of(c.tn, c.tn + c.fp),
        f_score,
        iou: Ratio::of(c.tp, c.tp + c.fp + c.fn_),
    }
}

impl MetricsReport {
    /// Rows shaped like a per-point evaluation table.
    pub fn table(&self) -> String {
        format!(
            "Precision  Recall  Specificity  F-Score  IoU\n{:<9}  {:<6}  {:<11}  {:<7}  {}\n",
            self.precision.to_string(),
            self.recall.to_string(),
            self.specificity.to_string(),
            self.f_score.to_string(),
            self.iou.to_string()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    /// A mission point counts as predicted changed when a predicted point
    /// lies within this distance.
    pub match_radius: f64,
    /// Points with these ground-truth labels are not scored.
    pub exclude_labels: BTreeSet<Label>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            match_radius: 0.05,
            exclude_labels: BTreeSet::from([crate::scenegen::GROUND_LABEL]),
        }
    }
}

/// Tallies every labelled point of `mission` except those whose label is in
/// `exclude`.
pub fn label_points(
    predicted: &PointCloud,
    mission: &PointCloud,
    gt_changed: &BTreeSet<Label>,
    match_radius: f64,
    exclude: &BTreeSet<Label>,
) -> Result<ConfusionCounts> {
    let labels = mission.labels.as_ref().ok_or(Error::MissingLabels)?;
    if !(match_radius > 0.0) {
        return Err(Error::InvalidArgument(format!("match radius must be positive, got {match_radius}")));
    }
    let grid = HashGrid::new(&predicted.points, match_radius);
    mission
        .points
        .par_iter()
        .zip(labels.par_iter())
        .filter(|(_, l)| !exclude.contains(l))
        .map(|(p, l)| {
            let pred = grid.any_within(p, match_radius);
            let truth = gt_changed.contains(l);
            let mut c = ConfusionCounts::default();
            match (pred, truth) {
                (true, true) => c.tp = 1,
                (true, false) => c.fp = 1,
                (false, true) => c.fn_ = 1,
                (false, false) => c.tn = 1,
            }
            Ok(c)
        })
        .try_reduce(ConfusionCounts::default, |a, b| Ok(a + b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformRecord {
    /// Unit quaternion as `[w, x, y, z]`.
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrespondenceRecord {
    pub kind: ChangeKind,
    pub class: usize,
    pub object_a: Option<SegmentId>,
    pub object_b: Option<SegmentId>,
    pub weighted_distance: Option<f64>,
    pub pair_confidence: Option<f64>,
    pub cluster_confidence: f64,
    pub transform: Option<TransformRecord>,
}

impl CorrespondenceRecord {
    pub fn new(c: &Correspondence, cluster_confidence: f64) -> Self {
        Self {
            kind: c.kind,
            class: c.class,
            object_a: c.object_a,
            object_b: c.object_b,
            weighted_distance: c.weighted_distance,
            pair_confidence: c.pair_confidence,
            cluster_confidence,
            transform: c.transform.as_ref().map(|t| {
                let q = t.quaternion();
                TransformRecord {
                    quaternion: [q.w, q.i, q.j, q.k],
                    translation: [t.translation().x, t.translation().y, t.translation().z],
                }
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSummary {
    pub k: usize,
    pub wcss_curve: Vec<f64>,
    pub mean_distance: Vec<f64>,
    pub confidence: Vec<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeReport {
    pub mission_a: u32,
    pub mission_b: u32,
    pub changed_voxels: usize,
    pub clusters: Option<ClusterSummary>,
    pub correspondences: Vec<CorrespondenceRecord>,
}

impl ChangeReport {
    /// Every id named by a correspondence must belong to `segments` with
    /// the right mission.
    pub fn check_ids(&self, segments: &[Segment]) -> Result<()> {
        let has = |id: SegmentId, m: u32| segments.iter().any(|s| s.id == id && s.mission == m);
        for c in &self.correspondences {
            if let Some(a) = c.object_a {
                if !has(a, self.mission_a) {
                    return Err(Error::UnknownSegment(a));
                }
            }
            if let Some(b) = c.object_b {
                if !has(b, self.mission_b) {
                    return Err(Error::UnknownSegment(b));
                }
            }
        }
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses JSON, naming the offending key path on schema errors.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let key = e.path().to_string();
        let context = if key == "." { context.to_string() } else { format!("{context} at `{key}`") };
        Error::Json {
            context,
            source: e.into_inner(),
        }
    })?;
    de.end().map_err(|e| Error::Json {
        context: context.to_string(),
        source: e,
    })?;
    Ok(value)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, &path.display().to_string())
}

/// Writes `report.json`, `match_matrix.csv`, the segment clouds and, when
/// given, `metrics.json` into `dir`.
pub fn write_report(
    dir: impl AsRef<Path>,
    report: &ChangeReport,
    matrix: &MatchMatrix,
    segments: &[Segment],
    metrics: Option<&MetricsReport>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(REPORT_FILE), report)?;
    matrix.write_csv(dir.join(MATCH_MATRIX_FILE))?;
    export_segments(dir.join(SEGMENTS_DIR), segments)?;
    if let Some(m) = metrics {
        write_metrics(dir, m)?;
    }
    Ok(())
}

pub fn write_metrics(dir: impl AsRef<Path>, metrics: &MetricsReport) -> Result<()> {
    write_json(&dir.as_ref().join(METRICS_FILE), metrics)
}

pub fn read_report(dir: impl AsRef<Path>) -> Result<ChangeReport> {
    read_json(&dir.as_ref().join(REPORT_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    fn mission() -> PointCloud {
        let pts = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        PointCloud::with_labels(pts, vec![0, 1, 1, 2, 2, 3, 3, 3, 4, 4]).unwrap()
    }

    #[test]
    fn exact_prediction() {
        let m = mission();
        let gt = BTreeSet::from([2, 3]);
        let pred = m.filter(|i, _| gt.contains(&m.labels.as_ref().unwrap()[i]));
        let c = label_points(&pred, &m, &gt, 0.05, &BTreeSet::new()).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 5, fp: 0, tn: 5, fn_: 0 });
    }

    #[test]
    fn empty_prediction() {
        let m = mission();
        let c = label_points(&PointCloud::default(), &m, &BTreeSet::from([2]), 0.05, &BTreeSet::from([0])).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 0, tn: 7, fn_: 2 });
        let r = compute_metrics(c);
        assert_eq!(r.precision, Ratio::Undefined);
        assert_eq!(r.recall, Ratio::Defined(0.0));
    }

    #[test]
    fn missing_labels() {
        let m = PointCloud::new(vec![Point3::origin()]);
        assert!(matches!(
            label_points(&m, &m, &BTreeSet::new(), 0.1, &BTreeSet::new()),
            Err(Error::MissingLabels)
        ));
    }

    #[test]
    fn all_zero_is_undefined() {
        let r = compute_metrics(ConfusionCounts::default());
        for v in [r.precision, r.recall, r.specificity, r.f_score, r.iou] {
            assert_eq!(v, Ratio::Undefined);
        }
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"undefined\""));
        assert_eq!(serde_json::from_str::<MetricsReport>(&json).unwrap(), r);
    }

    #[test]
    fn json_errors_name_the_key() {
        let err = parse_json::<EvalParams>(r#"{"match_radius": "x"}"#, "eval").unwrap_err();
        assert!(err.to_string().contains("`match_radius`"), "{err}");
    }

    #[test]
    fn table_two_style_counts() {
        let r = compute_metrics(ConfusionCounts { tp: 68, fp: 8, tn: 10_000, fn_: 32 });
        assert!((r.precision.value().unwrap() - 0.89).abs() < 0.005);
        assert!((r.recall.value().unwrap() - 0.68).abs() < 1e-12);
    }
}
