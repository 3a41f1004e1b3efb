use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::Point3;

/// Mean, covariance and sorted eigen-decomposition of a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pca {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    /// Ascending.
    pub eigenvalues: Vector3<f64>,
    /// Column `c` belongs to `eigenvalues[c]`.
    pub eigenvectors: Matrix3<f64>,
}

impl Pca {
    pub fn of<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let pts: Vec<&Point3> = points.into_iter().collect();
        Self::weighted(pts.iter().map(|p| (*p, 1.0)))
    }

    /// Weighted variant; weights need not be normalised.
    pub fn weighted<'a>(points: impl IntoIterator<Item = (&'a Point3, f64)>) -> Option<Self> {
        let pts: Vec<(&Point3, f64)> = points.into_iter().collect();
        let wsum: f64 = pts.iter().map(|p| p.1).sum();
        if pts.is_empty() || !(wsum > 0.0) {
            return None;
        }
        let mean = pts.iter().fold(Vector3::zeros(), |a, (p, w)| a + p.coords * *w) / wsum;
        let mut covariance = Matrix3::zeros();
        for (p, w) in &pts {
            let d = p.coords - mean;
            covariance += d * d.transpose() * *w;
        }
        covariance /= wsum;
        let (eigenvalues, eigenvectors) = sorted_eigen(&covariance);
        Some(Self {
            mean,
            covariance,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Direction of least variance.
    pub fn normal(&self) -> Vector3<f64> {
        self.eigenvectors.column(0).into_owned()
    }

    /// Direction of greatest variance.
    pub fn principal_axis(&self) -> Vector3<f64> {
        self.eigenvectors.column(2).into_owned()
    }

    /// Surface variation `λ0 / (λ0 + λ1 + λ2)`; zero for degenerate sets.
    pub fn curvature(&self) -> f64 {
        let s = self.eigenvalues.sum();
        if s > 0.0 {
            self.eigenvalues[0].max(0.0) / s
        } else {
            0.0
        }
    }
}

/// Eigenpairs of a symmetric matrix with eigenvalues ascending.
pub fn sorted_eigen(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let e = SymmetricEigen::new(*m);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = Vector3::new(e.eigenvalues[idx[0]], e.eigenvalues[idx[1]], e.eigenvalues[idx[2]]);
    let vecs = Matrix3::from_columns(&[e.eigenvectors.column(idx[0]), e.eigenvectors.column(idx[1]), e.eigenvectors.column(idx[2])]);
    (vals, vecs)
}
