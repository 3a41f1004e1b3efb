use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const RESTARTS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorClustering {
    pub k: usize,
    /// Cluster index per input row.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    /// WCSS after each Lloyd iteration.
    pub history: Vec<f64>,
    /// WCSS for K = 1..=k_max when chosen by [`select_k_elbow`].
    pub wcss_curve: Vec<f64>,
    /// Set when the elbow rule could not be applied.
    pub degenerate: bool,
}

impl DescriptorClustering {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == cluster).collect()
    }
}

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = d2(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn check<V: AsRef<[f64]>>(data: &[V], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
    }
    if k > data.len() {
        return Err(Error::TooManyClusters { k, n: data.len() });
    }
    let dim = data[0].as_ref().len();
    for (i, v) in data.iter().enumerate() {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::DescriptorDimension {
                row: i,
                expected: dim,
                got: v.len(),
            });
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("clustering row {i}"),
            });
        }
    }
    Ok(dim)
}

fn plus_plus<V: AsRef<[f64]>>(data: &[V], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = data.iter().map(|v| d2(v.as_ref(), data[chosen[0]].as_ref())).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if *d > 0.0 && r < *d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            // Rounding can leave `r` past the last positive weight.
            if dist[pick] == 0.0 {
                pick = dist.iter().rposition(|d| *d > 0.0).expect("total > 0");
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        for (i, v) in data.iter().enumerate() {
            dist[i] = dist[i].min(d2(v.as_ref(), data[pick].as_ref()));
        }
    }
    chosen.iter().map(|&i| data[i].as_ref().to_vec()).collect()
}

fn lloyd<V: AsRef<[f64]>>(data: &[V], k: usize, dim: usize, rng: &mut ChaCha8Rng) -> DescriptorClustering {
    let mut centroids = plus_plus(data, k, rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..MAX_ITER {
        let next: Vec<usize> = data.iter().map(|v| nearest(v.as_ref(), &centroids).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &c) in data.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v.as_ref()) {
                *s += x;
            }
        }
        for c in 0..k {
            // An empty cluster keeps its previous centre.
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        history.push(wcss_of(data, &assignments, &centroids));
    }
    let wcss = history.last().copied().unwrap_or(0.0);
    DescriptorClustering {
        k,
        assignments,
        centroids,
        wcss,
        history,
        wcss_curve: Vec::new(),
        degenerate: false,
    }
}

fn wcss_of<V: AsRef<[f64]>>(data: &[V], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    data.iter().zip(assignments).map(|(v, &c)| d2(v.as_ref(), &centroids[c])).sum()
}

/// Lloyd's algorithm from k-means++ seeds. Iterates to an assignment fixpoint
/// or 100 rounds; centroids are the means of their members at exit.
pub fn kmeans<V: AsRef<[f64]>>(data: &[V], k: usize, seed: u64) -> Result<DescriptorClustering> {
    let dim = check(data, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(lloyd(data, k, dim, &mut rng))
}

fn best_of<V: AsRef<[f64]> + Sync>(data: &[V], k: usize, dim: usize, seed: u64) -> DescriptorClustering {
    (0..RESTARTS)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 * RESTARTS + r);
            lloyd(data, k, dim, &mut rng)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.wcss < a.wcss { b } else { a })
        .expect("at least one restart")
}

/// Picks K by the elbow of the WCSS curve over `1..=k_max`.
///
/// Both axes are scaled to `[0, 1]` and K* is the interior point farthest
/// below the chord from the first to the last point. With fewer than three
/// candidates, or a flat curve, K = 1 is returned with `degenerate` set.
pub fn select_k_elbow<V: AsRef<[f64]> + Sync>(data: &[V], k_max: usize, seed: u64) -> Result<DescriptorClustering> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot cluster an empty set".into()));
    }
    let dim = check(data, k_max.max(1))?;
    let runs: Vec<DescriptorClustering> = (1..=k_max).map(|k| best_of(data, k, dim, seed)).collect();
    let curve: Vec<f64> = runs.iter().map(|r| r.wcss).collect();
    let pick = elbow(&curve);
    let mut out = runs.into_iter().nth(pick.unwrap_or(1) - 1).expect("k within range");
    out.wcss_curve = curve;
    out.degenerate = pick.is_none();
    if pick.is_none() {
        log::warn!("elbow undefined for {} candidates; using a single cluster", k_max);
    }
    Ok(out)
}

/// 1-based K at the elbow, `None` when undefined.
pub fn elbow(curve: &[f64]) -> Option<usize> {
    let m = curve.len();
    if m < 3 {
        return None;
    }
    let (first, last) = (curve[0], curve[m - 1]);
    if !(first - last > 0.0) {
        return None;
    }
    let mut best = (1usize, f64::NEG_INFINITY);
    for (i, w) in curve.iter().enumerate().take(m - 1).skip(1) {
        let x = i as f64 / (m - 1) as f64;
        let y = (w - last) / (first - last);
        let below = 1.0 - x - y;
        if below > best.1 {
            best = (i + 1, below);
        }
    }
    Some(best.0)
}
