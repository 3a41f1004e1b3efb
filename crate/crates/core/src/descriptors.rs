//! Rigid-motion invariant object signatures.
//!
//! Layout of the 16 slots before normalisation:
//!
//! | slots  | content                                                     |
//! |--------|-------------------------------------------------------------|
//! | 0..8   | histogram of distance to centroid / radius, range `[0, 2]`  |
//! | 8..11  | eigenvalue ratios λ2/λ1, λ3/λ1, λ3/λ2 (λ1 ≥ λ2 ≥ λ3)        |
//! | 11..15 | histogram of angle to the principal axis, folded to `[0, π/2]` |
//! | 15     | `log1p(point count)`, min-max scaled                        |

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{mean_of, sorted_eigen, KahanSum};
use crate::segmentation::{Segment, SegmentId};

pub const DESCRIPTOR_DIM: usize = 16;
const DIST_BINS: usize = 8;
const ANGLE_BINS: usize = 4;

/// Unit-length 16-vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptor([f64; DESCRIPTOR_DIM]);

impl Descriptor {
    /// Normalises `values`; fails on non-finite input or a zero vector.
    pub fn new(values: [f64; DESCRIPTOR_DIM]) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                location: "descriptor".into(),
            });
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("descriptor has zero length".into()));
        }
        Ok(Self(values.map(|v| v / norm)))
    }

    pub fn values(&self) -> &[f64; DESCRIPTOR_DIM] {
        &self.0
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    /// Root-mean-square distance to the centroid.
    Rms,
    /// Largest distance to the centroid.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescribeParams {
    pub radius_mode: RadiusMode,
    /// Upper edge of the distance histogram in radius units; farther points
    /// land in the last bin.
    pub distance_range: f64,
    /// Point counts mapped to 0 and 1 in the count slot when describing a
    /// single segment. Batches use their own extremes.
    pub count_range: [f64; 2],
    pub min_points: usize,
}

impl Default for DescribeParams {
    fn default() -> Self {
        Self {
            radius_mode: RadiusMode::Rms,
            distance_range: 2.0,
            count_range: [10.0, 100_000.0],
            min_points: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescribedObject {
    pub segment: Segment,
    pub descriptor: Descriptor,
}

/// Shape slots (everything but the count slot), unnormalised.
fn shape_slots(seg: &Segment, params: &DescribeParams) -> Result<[f64; DESCRIPTOR_DIM - 1]> {
    let pts = &seg.cloud.points;
    let n = pts.len();
    if n < params.min_points.max(1) {
        return Err(Error::SegmentTooSmall {
            got: n,
            need: params.min_points.max(1),
        });
    }
    let c = mean_of(pts);
    let mut cov = [[KahanSum::default(); 3]; 3];
    let mut r2 = KahanSum::default();
    let mut rmax = 0.0f64;
    for p in pts {
        let d = p.coords - c;
        for a in 0..3 {
            for b in a..3 {
                cov[a][b].add(d[a] * d[b]);
            }
        }
        r2.add(d.norm_squared());
        rmax = rmax.max(d.norm());
    }
    let m = Matrix3::from_fn(|a, b| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        cov[a][b].value() / n as f64
    });
    let radius = match params.radius_mode {
        RadiusMode::Rms => (r2.value() / n as f64).sqrt(),
        RadiusMode::Max => rmax,
    };
    let (vals, vecs) = sorted_eigen(&m);
    let (l1, l2, l3) = (vals[2].max(0.0), vals[1].max(0.0), vals[0].max(0.0));
    let axis: Vector3<f64> = vecs.column(2).into_owned();

    let mut dist_hist = [0usize; DIST_BINS];
    let mut angle_hist = [0usize; ANGLE_BINS];
    let mut angled = 0usize;
    for p in pts {
        let d = p.coords - c;
        let len = d.norm();
        let r = if radius > 0.0 { len / radius } else { 0.0 };
        let bin = ((r / params.distance_range) * DIST_BINS as f64) as usize;
        dist_hist[bin.min(DIST_BINS - 1)] += 1;
        if len > 0.0 {
            let cos = (axis.dot(&d) / len).abs().min(1.0);
            let angle = cos.acos();
            let bin = (angle / std::f64::consts::FRAC_PI_2 * ANGLE_BINS as f64) as usize;
            angle_hist[bin.min(ANGLE_BINS - 1)] += 1;
            angled += 1;
        }
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let mut out = [0.0; DESCRIPTOR_DIM - 1];
    for (o, h) in out.iter_mut().zip(dist_hist) {
        *o = h as f64 / n as f64;
    }
    out[8] = ratio(l2, l1);
    out[9] = ratio(l3, l1);
    out[10] = ratio(l3, l2);
    for (o, h) in out[11..].iter_mut().zip(angle_hist) {
        *o = if angled > 0 { h as f64 / angled as f64 } else { 0.0 };
    }
    Ok(out)
}

fn count_slot(n: usize, lo: f64, hi: f64) -> f64 {
    let v = (n as f64).ln_1p();
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

fn assemble(shape: [f64; DESCRIPTOR_DIM - 1], count: f64) -> Result<Descriptor> {
    let mut v = [0.0; DESCRIPTOR_DIM];
    v[..DESCRIPTOR_DIM - 1].copy_from_slice(&shape);
    v[DESCRIPTOR_DIM - 1] = count;
    Descriptor::new(v)
}

/// Descriptor of one segment, with the count slot scaled by
/// `params.count_range`.
pub fn describe(segment: &Segment, params: &DescribeParams) -> Result<Descriptor> {
    let shape = shape_slots(segment, params)?;
    let [lo, hi] = params.count_range.map(|c| c.ln_1p());
    assemble(shape, count_slot(segment.len(), lo, hi))
}

/// Describes a batch in order. The count slot is min-max scaled over the
/// batch. Failures are collected with their indices.
pub fn describe_all(segments: &[Segment], params: &DescribeParams) -> Result<Vec<DescribedObject>> {
    let shapes: Vec<Result<[f64; DESCRIPTOR_DIM - 1]>> = segments.par_iter().map(|s| shape_slots(s, params)).collect();
    let mut errors = Vec::new();
    let mut ok = Vec::with_capacity(segments.len());
    for (i, r) in shapes.into_iter().enumerate() {
        match r {
            Ok(s) => ok.push(s),
            Err(e) => errors.push((i, e)),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Batch(errors));
    }
    let logs: Vec<f64> = segments.iter().map(|s| (s.len() as f64).ln_1p()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    segments
        .iter()
        .zip(ok)
        .map(|(s, shape)| {
            Ok(DescribedObject {
                segment: s.clone(),
                descriptor: assemble(shape, count_slot(s.len(), lo, hi))?,
            })
        })
        .collect()
}

/// Writes `segment_id v1 … v16` rows.
pub fn export_descriptors(path: impl AsRef<Path>, rows: &[(SegmentId, Descriptor)]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (id, d) in rows {
        let _ = write!(text, "{id}");
        for v in d.values() {
            let _ = write!(text, " {v}");
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads `segment_id v1 … v16` rows separated by whitespace or commas,
/// normalising each descriptor. When `known` is given, ids outside it are
/// rejected. Blank lines and `#` comments are skipped.
pub fn import_descriptors(path: impl AsRef<Path>, known: Option<&BTreeSet<SegmentId>>) -> Result<Vec<(SegmentId, Descriptor)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = i + 1;
        let mut tok = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty());
        let id: SegmentId = tok
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(path, format!("line {row}"), "bad segment id"))?;
        let vals: Vec<f64> = tok
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, format!("line {row}"), "bad number"))?;
        if vals.len() != DESCRIPTOR_DIM {
            return Err(Error::DescriptorDimension {
                row,
                expected: DESCRIPTOR_DIM,
                got: vals.len(),
            });
        }
        if let Some(k) = known {
            if !k.contains(&id) {
                return Err(Error::UnknownSegment(id));
            }
        }
        let mut arr = [0.0; DESCRIPTOR_DIM];
        arr.copy_from_slice(&vals);
        out.push((id, Descriptor::new(arr)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, PointCloud};

    fn seg(pts: Vec<Point3>) -> Segment {
        Segment::new(0, 1, PointCloud::new(pts)).unwrap()
    }

    #[test]
    fn unit_length() {
        let pts = (0..200).map(|i| Point3::new(i as f64 * 0.01, (i % 7) as f64 * 0.1, (i % 3) as f64)).collect();
        let d = describe(&seg(pts), &DescribeParams::default()).unwrap();
        assert!((d.values().iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_small_segment() {
        let err = describe(&seg(vec![Point3::origin(); 5]), &DescribeParams::default()).unwrap_err();
        assert!(matches!(err, Error::SegmentTooSmall { got: 5, need: 10 }));
    }

    #[test]
    fn batch_reports_indices() {
        let good = seg((0..50).map(|i| Point3::new(i as f64, (i * i % 11) as f64, 0.3 * i as f64)).collect());
        let bad = seg(vec![Point3::origin(); 3]);
        match describe_all(&[good.clone(), bad, good], &DescribeParams::default()) {
            Err(Error::Batch(v)) => assert_eq!(v.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1]),
            other => panic!("{other:?}"),
        }
        assert!(describe_all(&[], &DescribeParams::default()).unwrap().is_empty());
    }

    #[test]
    fn file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.txt");
        let mut a = [0.0; 16];
        a[3] = 2.0;
        a[7] = 1.0;
        let rows = vec![(4, Descriptor::new(a).unwrap()), (9, Descriptor::new([0.25; 16]).unwrap())];
        export_descriptors(&p, &rows).unwrap();
        let back = import_descriptors(&p, None).unwrap();
        assert_eq!(back.len(), 2);
        for ((ia, da), (ib, db)) in back.iter().zip(&rows) {
            assert_eq!(ia, ib);
            assert!(da.distance(db) < 1e-15);
        }
        let known = BTreeSet::from([4]);
        assert!(matches!(import_descriptors(&p, Some(&known)), Err(Error::UnknownSegment(9))));
        fs::write(&p, format!("1 {}\n", vec!["0.5"; 15].join(" "))).unwrap();
        assert!(matches!(
            import_descriptors(&p, None),
            Err(Error::DescriptorDimension { row: 1, expected: 16, got: 15 })
        ));
    }
}
