use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pca, Point3, PointCloud};
use crate::spatial::HashGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlsParams {
    pub radius: f64,
    /// 1 = local plane, 2 = quadratic height field.
    pub order: u8,
}

impl Default for MlsParams {
    fn default() -> Self {
        Self { radius: 0.15, order: 2 }
    }
}

/// Moving least squares projection.
///
/// Each point is moved onto a surface fitted to its radius neighbourhood
/// with Gaussian weights: a weighted PCA plane, refined by a height
/// polynomial of the requested order over that plane. Points with fewer
/// neighbours than the polynomial has coefficients fall back to the plane;
/// points with fewer than three neighbours stay where they are.
pub fn mls_smooth(cloud: &PointCloud, params: &MlsParams) -> Result<PointCloud> {
    if !(params.radius > 0.0) {
        return Err(Error::InvalidArgument(format!("MLS radius must be positive, got {}", params.radius)));
    }
    if !(1..=2).contains(&params.order) {
        return Err(Error::InvalidArgument(format!("MLS order must be 1 or 2, got {}", params.order)));
    }
    let grid = HashGrid::new(&cloud.points, params.radius);
    let h2 = params.radius * params.radius;
    let points = cloud
        .points
        .par_iter()
        .map(|q| {
            let mut nb = Vec::new();
            grid.for_each_within(q, params.radius, |i, d2| nb.push((i, (-d2 / h2).exp())));
            project(&cloud.points, q, &nb, params.order)
        })
        .collect();
    Ok(PointCloud {
        points,
        labels: cloud.labels.clone(),
        origin: cloud.origin,
    })
}

fn project(points: &[Point3], q: &Point3, nb: &[(usize, f64)], order: u8) -> Point3 {
    if nb.len() < 3 {
        return *q;
    }
    let Some(pca) = Pca::weighted(nb.iter().map(|&(i, w)| (&points[i], w))) else {
        return *q;
    };
    if pca.eigenvalues[1] <= 1e-12 * pca.eigenvalues[2].max(f64::MIN_POSITIVE) {
        // Collinear neighbourhood: no surface to project onto.
        return *q;
    }
    let n = pca.normal();
    let u = pca.eigenvectors.column(2).into_owned();
    let v = n.cross(&u);
    // Local frame origin: the query projected onto the plane.
    let origin = q.coords - n * n.dot(&(q.coords - pca.mean));
    let coeffs = if order == 1 { 1 } else { 6 };
    if coeffs == 1 || nb.len() < coeffs {
        return Point3::from(origin);
    }
    let mut a = DMatrix::zeros(nb.len(), coeffs);
    let mut b = DVector::zeros(nb.len());
    for (r, &(i, w)) in nb.iter().enumerate() {
        let d: Vector3<f64> = points[i].coords - origin;
        let (x, y, z) = (d.dot(&u), d.dot(&v), d.dot(&n));
        let sw = w.sqrt();
        let row = [1.0, x, y, x * x, x * y, y * y];
        for (c, val) in row.iter().enumerate() {
            a[(r, c)] = val * sw;
        }
        b[r] = z * sw;
    }
    match a.svd(true, true).solve(&b, 1e-12) {
        Ok(c) if c[0].is_finite() => Point3::from(origin + n * c[0]),
        _ => Point3::from(origin),
    }
}
