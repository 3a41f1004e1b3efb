use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::DescribedObject;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::segmentation::SegmentId;

/// Classes up to this size are paired by exhaustive search.
pub const EXACT_CLASS_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    /// Weight of the physical (centroid) distance.
    pub alpha: f64,
    /// Weight of the descriptor distance.
    pub beta: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.5 }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "weights must be non-negative with a positive sum, got alpha {} beta {}",
                self.alpha, self.beta
            )))
        }
    }
}

/// Raw physical and descriptor distances of a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawDistance {
    pub physical: f64,
    pub descriptor: f64,
}

impl RawDistance {
    pub fn between(a: &DescribedObject, b: &DescribedObject) -> Self {
        Self {
            physical: (a.segment.centroid - b.segment.centroid).norm(),
            descriptor: a.descriptor.distance(&b.descriptor),
        }
    }
}

/// Extremes of the raw distances over a candidate set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormContext {
    pub physical: (f64, f64),
    pub descriptor: (f64, f64),
}

impl NormContext {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a RawDistance>) -> Self {
        let mut ctx = NormContext {
            physical: (f64::INFINITY, f64::NEG_INFINITY),
            descriptor: (f64::INFINITY, f64::NEG_INFINITY),
        };
        for r in pairs {
            ctx.physical = (ctx.physical.0.min(r.physical), ctx.physical.1.max(r.physical));
            ctx.descriptor = (ctx.descriptor.0.min(r.descriptor), ctx.descriptor.1.max(r.descriptor));
        }
        ctx
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedDistance {
    pub value: f64,
    /// A term was dropped because its range over the candidates is empty.
    pub degenerate: bool,
}

fn minmax(x: f64, (lo, hi): (f64, f64)) -> Option<f64> {
    (hi > lo).then(|| (x - lo) / (hi - lo))
}

/// `alpha · minmax(physical) + beta · minmax(descriptor)`; a term whose
/// range is empty contributes 0.
pub fn weighted_value(raw: &RawDistance, w: &Weights, ctx: &NormContext) -> WeightedDistance {
    let p = minmax(raw.physical, ctx.physical);
    let d = minmax(raw.descriptor, ctx.descriptor);
    WeightedDistance {
        value: w.alpha * p.unwrap_or(0.0) + w.beta * d.unwrap_or(0.0),
        degenerate: p.is_none() || d.is_none(),
    }
}

pub fn weighted_distance(a: &DescribedObject, b: &DescribedObject, w: &Weights, ctx: &NormContext) -> WeightedDistance {
    weighted_value(&RawDistance::between(a, b), w, ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Moved,
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub kind: ChangeKind,
    pub class: usize,
    pub object_a: Option<SegmentId>,
    pub object_b: Option<SegmentId>,
    pub weighted_distance: Option<f64>,
    pub pair_confidence: Option<f64>,
    /// Maps the first mission's instance onto the second's.
    pub transform: Option<RigidTransform>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub class: usize,
    pub object_a: SegmentId,
    pub object_b: SegmentId,
    pub confidence: f64,
}

/// Pair confidences of every cross-mission candidate, per class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchMatrix {
    pub entries: Vec<MatchEntry>,
}

impl MatchMatrix {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("classA_id,classB_id,confidence\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{}", e.object_a, e.object_b, e.confidence);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pub correspondences: Vec<Correspondence>,
    pub matrix: MatchMatrix,
}

/// Minimum total cost pairing that matches every row (rows ≤ cols).
/// Ties resolve deterministically.
fn exact_rows(cost: &[Vec<f64>]) -> Vec<usize> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    let full = 1usize << cols;
    // best[mask] for the first popcount(mask) rows.
    let mut best = vec![f64::INFINITY; full];
    let mut from = vec![usize::MAX; full];
    best[0] = 0.0;
    for mask in 0..full {
        let r = mask.count_ones() as usize;
        if r >= rows || !best[mask].is_finite() {
            continue;
        }
        for c in 0..cols {
            if mask & (1 << c) != 0 {
                continue;
            }
            let next = mask | (1 << c);
            let v = best[mask] + cost[r][c];
            if v < best[next] {
                best[next] = v;
                from[next] = c;
            }
        }
    }
    let end = (0..full)
        .filter(|m| m.count_ones() as usize == rows)
        .min_by(|&a, &b| best[a].total_cmp(&best[b]))
        .expect("rows <= cols");
    let mut out = vec![0; rows];
    let mut mask = end;
    for r in (0..rows).rev() {
        let c = from[mask];
        out[r] = c;
        mask &= !(1 << c);
    }
    out
}

/// Repeatedly takes the cheapest unused pair.
fn greedy(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut cells: Vec<(f64, usize, usize)> = Vec::new();
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            cells.push((c, i, j));
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut ru, mut cu) = (vec![false; cost.len()], vec![false; cost.first().map_or(0, |r| r.len())]);
    let mut out = Vec::new();
    for (_, i, j) in cells {
        if !ru[i] && !cu[j] {
            ru[i] = true;
            cu[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

/// Minimum-cost pairs between `rows` and `cols` that match every element of
/// the smaller side.
pub fn min_cost_pairs(cost: &[Vec<f64>], exact: bool) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if !exact {
        return greedy(cost);
    }
    if rows <= cols {
        exact_rows(cost).into_iter().enumerate().collect()
    } else {
        let t: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        let mut out: Vec<(usize, usize)> = exact_rows(&t).into_iter().enumerate().map(|(j, i)| (i, j)).collect();
        out.sort_unstable();
        out
    }
}

/// In a class with an odd number of instances, the member of the larger
/// mission side whose summed weighted distance to every other member is
/// largest. Distances here are normalised over all pairs of the class.
/// Returns `(true, i)` for the i-th A member, `(false, j)` for B.
pub fn odd_one_out(a: &[&DescribedObject], b: &[&DescribedObject], w: &Weights) -> Option<(bool, usize)> {
    let n = a.len() + b.len();
    if n % 2 == 0 {
        return None;
    }
    let all: Vec<&DescribedObject> = a.iter().chain(b.iter()).copied().collect();
    let mut raw = vec![vec![RawDistance { physical: 0.0, descriptor: 0.0 }; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            raw[i][j] = RawDistance::between(all[i], all[j]);
            raw[j][i] = raw[i][j];
        }
    }
    let ctx = NormContext::from_pairs((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| &raw[i][j]));
    let score = |i: usize| -> f64 { (0..n).filter(|&j| j != i).map(|j| weighted_value(&raw[i][j], w, &ctx).value).sum() };
    let range = if a.len() > b.len() { 0..a.len() } else { a.len()..n };
    let mut best = (range.start, f64::NEG_INFINITY);
    for i in range {
        let s = score(i);
        if s > best.1 {
            best = (i, s);
        }
    }
    Some(if best.0 < a.len() { (true, best.0) } else { (false, best.0 - a.len()) })
}

struct ClassResult {
    correspondences: Vec<Correspondence>,
    entries: Vec<MatchEntry>,
}

fn assign_class(class: usize, a: &[&DescribedObject], b: &[&DescribedObject], w: &Weights) -> ClassResult {
    let raw: Vec<Vec<RawDistance>> = a.iter().map(|x| b.iter().map(|y| RawDistance::between(x, y)).collect()).collect();
    let ctx = NormContext::from_pairs(raw.iter().flatten());
    let weighted: Vec<Vec<f64>> = raw.iter().map(|row| row.iter().map(|r| weighted_value(r, w, &ctx).value).collect()).collect();
    let lo = weighted.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = weighted.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let confidence = |v: f64| if hi > lo { 1.0 - (v - lo) / (hi - lo) } else { 1.0 };

    let mut entries = Vec::new();
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            entries.push(MatchEntry {
                class,
                object_a: x.segment.id,
                object_b: y.segment.id,
                confidence: confidence(weighted[i][j]),
            });
        }
    }

    let (mut live_a, mut live_b): (Vec<usize>, Vec<usize>) = ((0..a.len()).collect(), (0..b.len()).collect());
    match odd_one_out(a, b, w) {
        Some((true, i)) => live_a.retain(|&x| x != i),
        Some((false, j)) => live_b.retain(|&x| x != j),
        None => {}
    }
    let cost: Vec<Vec<f64>> = live_a.iter().map(|&i| live_b.iter().map(|&j| weighted[i][j]).collect()).collect();
    let exact = a.len() + b.len() <= EXACT_CLASS_LIMIT;
    let pairs: Vec<(usize, usize)> = min_cost_pairs(&cost, exact).into_iter().map(|(i, j)| (live_a[i], live_b[j])).collect();

    let mut out = Vec::new();
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    for &(i, j) in &pairs {
        used_a[i] = true;
        used_b[j] = true;
        out.push(Correspondence {
            kind: ChangeKind::Moved,
            class,
            object_a: Some(a[i].segment.id),
            object_b: Some(b[j].segment.id),
            weighted_distance: Some(weighted[i][j]),
            pair_confidence: Some(confidence(weighted[i][j])),
            transform: None,
        });
    }
    for (_, x) in a.iter().enumerate().filter(|(i, _)| !used_a[*i]) {
        out.push(Correspondence {
            kind: ChangeKind::Removed,
            class,
            object_a: Some(x.segment.id),
            object_b: None,
            weighted_distance: None,
            pair_confidence: None,
            transform: None,
        });
    }
    for (_, y) in b.iter().enumerate().filter(|(j, _)| !used_b[*j]) {
        out.push(Correspondence {
            kind: ChangeKind::Added,
            class,
            object_a: None,
            object_b: Some(y.segment.id),
            weighted_distance: None,
            pair_confidence: None,
            transform: None,
        });
    }
    ClassResult {
        correspondences: out,
        entries,
    }
}

/// Pairs objects of two missions within each descriptor class.
///
/// `classes` holds the class of every object of `a` followed by every
/// object of `b`. Classes with an odd member count first set aside their
/// outlier (see [`odd_one_out`]); the rest is paired by minimum total
/// weighted distance, exactly for classes of at most
/// [`EXACT_CLASS_LIMIT`] members and greedily above. Anything left over is
/// reported as removed (first mission) or added (second mission).
pub fn assign_correspondences(a: &[DescribedObject], b: &[DescribedObject], classes: &[usize], w: &Weights) -> Result<Assignment> {
    w.validate()?;
    if classes.len() != a.len() + b.len() {
        return Err(Error::InvalidArgument(format!(
            "{} class labels for {} objects",
            classes.len(),
            a.len() + b.len()
        )));
    }
    let k = classes.iter().copied().max().map_or(0, |m| m + 1);
    let results: Vec<ClassResult> = (0..k)
        .into_par_iter()
        .map(|c| {
            let ma: Vec<&DescribedObject> = a.iter().zip(classes).filter(|(_, &x)| x == c).map(|(o, _)| o).collect();
            let mb: Vec<&DescribedObject> = b.iter().zip(&classes[a.len()..]).filter(|(_, &x)| x == c).map(|(o, _)| o).collect();
            assign_class(c, &ma, &mb, w)
        })
        .collect();
    let mut out = Assignment::default();
    for r in results {
        out.correspondences.extend(r.correspondences);
        out.matrix.entries.extend(r.entries);
    }
    Ok(out)
}
