//! Principal-component reduction of the economic/population feature block.
//!
//! Fitting mean-centers the columns and eigendecomposes XᵀX with a cyclic
//! Jacobi solver (the block is at most a handful of columns wide).
//! Components are ordered by descending eigenvalue and sign-fixed so each
//! component's largest-magnitude entry is positive, making the transform
//! deterministic. Reproducing published example projections requires
//! min-max scaling the columns *before* the fit; [`crate::pipeline`] wires
//! that order.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted orthogonal projection: column means, component matrix (columns
/// are components), eigenvalues in descending order, and how many leading
/// components projection keeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    pub column_means: Vec<f64>,
    #[serde(with = "crate::document::serde_matrix")]
    pub components: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub selected_count: usize,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (unsorted) and eigenvectors as columns.
fn jacobi_eigen(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let k = a.nrows();
    let mut v = Array2::eye(k);
    for _sweep in 0..120 {
        let off: f64 = (0..k)
            .flat_map(|p| ((p + 1)..k).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum();
        let scale: f64 = (0..k).map(|i| a[[i, i]].abs()).sum::<f64>().max(1e-300);
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = a[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = c * aip - s * aiq;
                    a[[i, q]] = s * aip + c * aiq;
                }
                for i in 0..k {
                    let api = a[[p, i]];
                    let aqi = a[[q, i]];
                    a[[p, i]] = c * api - s * aqi;
                    a[[q, i]] = s * api + c * aqi;
                }
                for i in 0..k {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    ((0..k).map(|i| a[[i, i]]).collect(), v)
}

/// Fits the transform on a feature matrix (rows = observations). All
/// components are selected initially; call [`PcaTransform::select_by_pve`]
/// to trim.
pub fn fit_pca(matrix: ArrayView2<'_, f64>) -> Result<PcaTransform> {
    let (n, k) = matrix.dim();
    if n < 2 {
        return Err(Error::domain(format!(
            "principal components need at least 2 rows, got {n}"
        )));
    }
    if k == 0 {
        return Err(Error::domain("principal components need at least 1 column"));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite value in the component fit matrix"));
    }
    let means: Array1<f64> = matrix.mean_axis(ndarray::Axis(0)).expect("n >= 2 rows");
    let centered = &matrix - &means;
    let gram = centered.t().dot(&centered);
    let (eigenvalues, vectors) = jacobi_eigen(gram);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .expect("finite eigenvalues")
            .then_with(|| {
                let col_a: Vec<f64> = vectors.column(a).to_vec();
                let col_b: Vec<f64> = vectors.column(b).to_vec();
                col_a.partial_cmp(&col_b).expect("finite eigenvectors")
            })
    });

    let mut components = Array2::zeros((k, k));
    let mut sorted_eigenvalues = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let lambda = eigenvalues[src];
        if lambda < -1e-10 {
            return Err(Error::numeric(
                "component eigenvalues",
                format!("negative eigenvalue {lambda} from a Gram matrix"),
            ));
        }
        sorted_eigenvalues.push(lambda.max(0.0));
        let col = vectors.column(src);
        // sign convention: the entry of largest magnitude ends up positive
        let lead = col
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.abs().partial_cmp(&y.abs()).expect("finite"))
            .map(|(i, _)| i)
            .expect("k >= 1");
        let flip = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..k {
            components[[i, dst]] = flip * col[i];
        }
    }
    let transform = PcaTransform {
        column_means: means.to_vec(),
        components,
        eigenvalues: sorted_eigenvalues,
        selected_count: k,
    };
    transform.check()?;
    Ok(transform)
}

impl PcaTransform {
    pub fn input_width(&self) -> usize {
        self.column_means.len()
    }

    pub fn check(&self) -> Result<()> {
        let k = self.input_width();
        if self.components.dim() != (k, k) {
            return Err(Error::shape(format!(
                "component matrix is {:?}, expected ({k}, {k})",
                self.components.dim()
            )));
        }
        if self.eigenvalues.len() != k {
            return Err(Error::shape(format!(
                "{} eigenvalues for {k} columns",
                self.eigenvalues.len()
            )));
        }
        if !(1..=k).contains(&self.selected_count) {
            return Err(Error::consistency(format!(
                "selected component count {} outside 1..={k}",
                self.selected_count
            )));
        }
        for w in self.eigenvalues.windows(2) {
            if w[1] > w[0] {
                return Err(Error::consistency(
                    "eigenvalues are not in descending order",
                ));
            }
        }
        if self.eigenvalues.iter().any(|&l| l < 0.0) {
            return Err(Error::consistency("negative eigenvalue"));
        }
        let gram = self.components.t().dot(&self.components);
        let eye: Array2<f64> = Array2::eye(k);
        let max_dev = (&gram - &eye).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_dev >= 1e-8 {
            return Err(Error::numeric(
                "component matrix",
                format!("columns deviate from orthonormality by {max_dev}"),
            ));
        }
        Ok(())
    }

    /// Fraction of total variance carried by the first `t` components.
    pub fn proportion_variance_explained(&self, t: usize) -> Result<f64> {
        let k = self.input_width();
        if !(1..=k).contains(&t) {
            return Err(Error::domain(format!("component count {t} outside 1..={k}")));
        }
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain(
                "all eigenvalues are zero (constant data); variance fractions are undefined",
            ));
        }
        Ok(self.eigenvalues[..t].iter().sum::<f64>() / total)
    }

    /// Shrinks `selected_count` to the smallest `t` whose explained-variance
    /// fraction reaches `threshold`; returns the chosen count.
    pub fn select_by_pve(&mut self, threshold: f64) -> Result<usize> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::domain(format!(
                "variance threshold {threshold} outside (0, 1]"
            )));
        }
        for t in 1..=self.input_width() {
            if self.proportion_variance_explained(t)? >= threshold - 1e-12 {
                self.selected_count = t;
                return Ok(t);
            }
        }
        // PVE(k) = 1, so the loop always returns
        unreachable!("variance fractions reach 1.0 at t = k");
    }

    /// Mean-shifts by the stored means, multiplies by the component matrix,
    /// and keeps the first `selected_count` columns.
    pub fn project(&self, matrix: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if matrix.ncols() != self.input_width() {
            return Err(Error::shape(format!(
                "projecting {} columns through a {}-column transform",
                matrix.ncols(),
                self.input_width()
            )));
        }
        let means = Array1::from(self.column_means.clone());
        let centered = &matrix - &means;
        let full = centered.dot(&self.components);
        Ok(full.slice(ndarray::s![.., ..self.selected_count]).to_owned())
    }

    pub fn project_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let matrix = Array2::from_shape_vec((1, row.len()), row.to_vec())
            .expect("1×n from an n-slice");
        Ok(self.project(matrix.view())?.row(0).to_vec())
    }
}
