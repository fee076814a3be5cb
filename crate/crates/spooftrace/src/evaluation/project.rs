//! 2-D projection of embedding sets for scatter plots.
//!
//! The built-in method is exact top-2 PCA via a Jacobi eigensolver, so
//! output is deterministic down to the bit. Nonlinear methods are
//! delegated: `External` dumps the raw matrix in a plot-tool-friendly
//! CSV along with the reference neighborhood setting.

use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::protocol::{read_embeddings, EmbeddingSet};
use crate::tsv::Sidecar;
use crate::{Error, Result};

/// Neighborhood size recorded for external UMAP runs.
pub const EXTERNAL_N_NEIGHBORS: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Pca,
    External,
}

impl ProjectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ProjectionMethod::Pca => "pca",
            ProjectionMethod::External => "external",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(ProjectionMethod::Pca),
            "external" => Ok(ProjectionMethod::External),
            other => Err(Error::InvalidInput(format!(
                "unknown projection method `{other}` (expected pca or external)"
            ))),
        }
    }
}

/// Planar coordinates per utterance, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<(String, f64, f64)>,
    /// Set when the input had no variance (all points identical); all
    /// coordinates are zero in that case.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSummary {
    pub method: ProjectionMethod,
    pub n_points: usize,
    pub degenerate: bool,
}

/// Exact top-2 principal components of an embedding set.
///
/// When the dimension exceeds the point count the eigenproblem is solved
/// on the Gram matrix instead of the covariance, which is equivalent and
/// much smaller. Component signs follow a fixed convention: the largest
/// magnitude loading is made positive.
pub fn pca_2d(set: &EmbeddingSet) -> Result<Projection> {
    let n = set.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "pca needs at least 3 points, got {n}"
        )));
    }
    let d = set.dim();
    let ids: Vec<String> = set.ids().map(str::to_string).collect();
    let mut x = Array2::zeros((n, d));
    for (i, (_, v)) in set.iter().enumerate() {
        for (j, &val) in v.iter().enumerate() {
            x[[i, j]] = val;
        }
    }
    let mean = x.sum_axis(ndarray::Axis(0)) / n as f64;
    for mut row in x.rows_mut() {
        row -= &mean;
    }

    let mean_scale = mean.dot(&mean).max(1.0);
    let total_var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if total_var <= 1e-24 * mean_scale {
        return Ok(Projection {
            coords: ids.into_iter().map(|id| (id, 0.0, 0.0)).collect(),
            degenerate: true,
        });
    }

    // Principal directions in feature space, columns of `basis`.
    let basis = if d <= n {
        let cov = x.t().dot(&x) / n as f64;
        let (vals, vecs) = jacobi_eigen(cov);
        top2_columns(&vals, &vecs)
    } else {
        // Gram trick: eigenvectors u of (X Xᵀ)/n map to Xᵀu, normalized.
        let gram = x.dot(&x.t()) / n as f64;
        let (vals, vecs) = jacobi_eigen(gram);
        let u2 = top2_columns(&vals, &vecs);
        let mut basis = x.t().dot(&u2);
        for mut col in basis.columns_mut() {
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                col /= norm;
            }
        }
        basis
    };
    let basis = fix_signs(basis);

    let proj = x.dot(&basis);
    Ok(Projection {
        coords: ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, proj[[i, 0]], proj[[i, 1]]))
            .collect(),
        degenerate: false,
    })
}

/// Columns of `vecs` for the two largest eigenvalues (earlier index wins
/// ties), zero-padded when fewer than two exist.
fn top2_columns(vals: &[f64], vecs: &Array2<f64>) -> Array2<f64> {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).expect("finite eigenvalues"));
    let d = vecs.nrows();
    let mut out = Array2::zeros((d, 2));
    for (k, &idx) in order.iter().take(2).enumerate() {
        out.column_mut(k).assign(&vecs.column(idx));
    }
    out
}

/// Flip each column so its largest-magnitude entry is positive.
fn fix_signs(mut basis: Array2<f64>) -> Array2<f64> {
    for mut col in basis.columns_mut() {
        let mut lead = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    basis
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and matching eigenvector columns, unsorted.
fn jacobi_eigen(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let d = a.nrows();
    assert_eq!(d, a.ncols(), "matrix must be square");
    let mut v: Array2<f64> = Array2::eye(d);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if (2.0 * off).sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- Jᵀ A J with J rotating the (p, q) plane.
                for k in 0..d {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..d).map(|i| a[[i, i]]).collect(), v)
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Project an "EMB1" file to a coordinates CSV (`id,x,y`), or dump the
/// matrix for an external nonlinear tool. A sidecar records the method
/// and, for external runs, the reference neighborhood size.
pub fn project_2d(
    embedding_file: &Path,
    method: ProjectionMethod,
    out: &Path,
) -> Result<ProjectionSummary> {
    let set = read_embeddings(embedding_file)?;
    let mut body = String::new();
    let mut sidecar = Sidecar::new();
    sidecar.push("method", method.as_str());
    let summary = match method {
        ProjectionMethod::Pca => {
            let projection = pca_2d(&set)?;
            body.push_str("id,x,y\n");
            for (id, x, y) in &projection.coords {
                body.push_str(&format!("{},{x},{y}\n", csv_field(id)));
            }
            sidecar.push("degenerate", if projection.degenerate { "1" } else { "0" });
            ProjectionSummary {
                method,
                n_points: projection.coords.len(),
                degenerate: projection.degenerate,
            }
        }
        ProjectionMethod::External => {
            body.push_str("id");
            for j in 0..set.dim() {
                body.push_str(&format!(",e{j}"));
            }
            body.push('\n');
            for (id, v) in set.iter() {
                body.push_str(&csv_field(id));
                for val in v {
                    body.push_str(&format!(",{val}"));
                }
                body.push('\n');
            }
            sidecar.push("n_neighbors", EXTERNAL_N_NEIGHBORS.to_string());
            ProjectionSummary {
                method,
                n_points: set.len(),
                degenerate: false,
            }
        }
    };
    crate::tsv::write_file(out, &body)?;
    sidecar.write(&crate::tsv::sidecar_path(out))?;
    Ok(summary)
}
