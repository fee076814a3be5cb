//! K-means on the unit sphere with cosine dissimilarity.

use std::collections::BTreeMap;

use rand::Rng;

use crate::{seeds, Error, Result};

use super::embeddings::EmbeddingSet;

/// Tolerance for the non-increasing-inertia contract.
const MONOTONE_EPS: f64 = 1e-9;

/// Result of clustering an embedding set into voices.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceClustering {
    pub k: usize,
    /// Utterance id → cluster index in `[0, k)`.
    pub assignment: BTreeMap<String, usize>,
    /// Unit-norm cluster directions.
    pub centroids: Vec<Vec<f64>>,
    /// Sum over points of `1 - cos` to the assigned centroid.
    pub inertia: f64,
    /// Inertia before iterating, then after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

impl VoiceClustering {
    /// Recompute inertia from the stored assignment and centroids.
    pub fn recompute_inertia(&self, emb: &EmbeddingSet) -> Result<f64> {
        let normalized = emb.normalized()?;
        let mut total = 0.0;
        for (id, &cluster) in &self.assignment {
            let v = normalized.get(id).ok_or_else(|| {
                Error::InvalidInput(format!("clustering refers to unknown id `{id}`"))
            })?;
            total += 1.0 - dot(v, &self.centroids[cluster]);
        }
        Ok(total.max(0.0))
    }
}

/// Cluster unit-normalized embeddings into `k` voices, seeding centroids
/// with a distance-weighted (k-means++ style) draw.
///
/// Assignment maximizes cosine similarity (ties to the lowest index);
/// centroids are renormalized member means; a cluster left empty is
/// reseeded from the point farthest from its assigned centroid. Iteration
/// stops at `max_iter` or when one pass improves inertia by less than
/// `tol`.
pub fn spherical_kmeans(
    emb: &EmbeddingSet,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<VoiceClustering> {
    let (ids, x) = prepare(emb, k)?;
    let init = plus_plus_init(&x, k, seed);
    run_lloyd(ids, x, init, max_iter, tol)
}

/// As [`spherical_kmeans`] but starting from caller-supplied centroids.
///
/// The initial centroids are normalized here; their count fixes `k`.
pub fn spherical_kmeans_from(
    emb: &EmbeddingSet,
    initial_centroids: &[Vec<f64>],
    max_iter: usize,
    tol: f64,
) -> Result<VoiceClustering> {
    let k = initial_centroids.len();
    let (ids, x) = prepare(emb, k)?;
    let mut init = Vec::with_capacity(k);
    for c in initial_centroids {
        if c.len() != emb.dim() {
            return Err(Error::InvalidInput(format!(
                "initial centroid has length {}, expected {}",
                c.len(),
                emb.dim()
            )));
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(Error::InvalidInput("initial centroid has zero norm".into()));
        }
        init.push(c.iter().map(|v| v / norm).collect());
    }
    run_lloyd(ids, x, init, max_iter, tol)
}

fn prepare(emb: &EmbeddingSet, k: usize) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be positive".into()));
    }
    if k > emb.len() {
        return Err(Error::InvalidInput(format!(
            "K={k} exceeds the {} available vectors",
            emb.len()
        )));
    }
    let normalized = emb.normalized()?;
    let mut ids = Vec::with_capacity(normalized.len());
    let mut x = Vec::with_capacity(normalized.len());
    for (id, v) in normalized.iter() {
        ids.push(id.to_string());
        x.push(v.to_vec());
    }
    Ok((ids, x))
}

/// Distance-weighted seeding: first centroid uniform, each further one
/// drawn with probability proportional to `1 - cos` to the nearest chosen
/// centroid. Falls back to a uniform draw when every weight is zero.
fn plus_plus_init(x: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeds::rng(seed, "kmeans-init", k as u64);
    let n = x.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centroids.push(x[first].clone());
    let mut best_sim: Vec<f64> = x.iter().map(|v| dot(v, &centroids[0])).collect();
    while centroids.len() < k {
        let weights: Vec<f64> = best_sim.iter().map(|&s| (1.0 - s).max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(x[pick].clone());
        for (i, v) in x.iter().enumerate() {
            let s = dot(v, centroids.last().expect("just pushed"));
            if s > best_sim[i] {
                best_sim[i] = s;
            }
        }
    }
    centroids
}

fn run_lloyd(
    ids: Vec<String>,
    x: Vec<Vec<f64>>,
    mut centroids: Vec<Vec<f64>>,
    max_iter: usize,
    tol: f64,
) -> Result<VoiceClustering> {
    let k = centroids.len();
    let mut assignment = assign(&x, &centroids);
    let mut inertia = inertia_of(&x, &assignment, &centroids);
    let mut history = vec![inertia];
    for _ in 0..max_iter {
        centroids = update_centroids(&x, &assignment, &centroids);
        let new_assignment = assign(&x, &centroids);
        let new_inertia = inertia_of(&x, &new_assignment, &centroids);
        if new_inertia > inertia + MONOTONE_EPS {
            return Err(Error::Diverged(format!(
                "inertia rose from {inertia} to {new_inertia}"
            )));
        }
        let improvement = inertia - new_inertia;
        assignment = new_assignment;
        inertia = new_inertia;
        history.push(inertia);
        if improvement < tol {
            break;
        }
    }
    Ok(VoiceClustering {
        k,
        assignment: ids.into_iter().zip(assignment).collect(),
        centroids,
        inertia: inertia.max(0.0),
        inertia_history: history,
    })
}

fn assign(x: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    x.iter()
        .map(|v| {
            let mut best = 0;
            let mut best_sim = dot(v, &centroids[0]);
            for (j, c) in centroids.iter().enumerate().skip(1) {
                let s = dot(v, c);
                if s > best_sim {
                    best_sim = s;
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn inertia_of(x: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    x.iter()
        .zip(assignment)
        .map(|(v, &a)| 1.0 - dot(v, &centroids[a]))
        .sum()
}

/// Renormalized member means; empty (or degenerate zero-sum) clusters are
/// reseeded from the point farthest from its assigned centroid, each
/// donor used at most once per pass, ties to the lowest point index.
fn update_centroids(x: &[Vec<f64>], assignment: &[usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = old.len();
    let dim = x[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &a) in x.iter().zip(assignment) {
        for (s, &vi) in sums[a].iter_mut().zip(v) {
            *s += vi;
        }
        counts[a] += 1;
    }
    let mut used_donor = vec![false; x.len()];
    let mut centroids = Vec::with_capacity(k);
    for j in 0..k {
        let norm = sums[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if counts[j] == 0 || norm <= 1e-12 {
            let mut donor = None;
            let mut worst = f64::NEG_INFINITY;
            for (i, v) in x.iter().enumerate() {
                if used_donor[i] {
                    continue;
                }
                let d = 1.0 - dot(v, &old[assignment[i]]);
                if d > worst {
                    worst = d;
                    donor = Some(i);
                }
            }
            let donor = donor.expect("k <= n leaves a donor");
            used_donor[donor] = true;
            centroids.push(x[donor].clone());
        } else {
            centroids.push(sums[j].iter().map(|v| v / norm).collect());
        }
    }
    centroids
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inertia curve with the selected grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct KneeReport {
    pub chosen_k: usize,
    /// `(K, inertia)` per grid point, in grid order.
    pub curve: Vec<(usize, f64)>,
    /// Set when the curve has no pronounced elbow and the grid midpoint
    /// was returned instead.
    pub no_elbow: bool,
}

/// Cluster at every grid K and pick the knee of the inertia curve.
pub fn select_k_elbow(emb: &EmbeddingSet, k_grid: &[usize], seed: u64) -> Result<KneeReport> {
    if k_grid.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "elbow selection needs at least 3 grid points, got {}",
            k_grid.len()
        )));
    }
    if !k_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput(
            "K grid must be strictly ascending".into(),
        ));
    }
    let mut curve = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let clustering = spherical_kmeans(emb, k, seeds::derive(seed, "elbow", k as u64), 100, 1e-6)?;
        curve.push((k, clustering.inertia));
    }
    let (idx, no_elbow) = knee_from_curve(&curve)?;
    Ok(KneeReport {
        chosen_k: curve[idx].0,
        curve,
        no_elbow,
    })
}

/// Index of the curve point with maximal perpendicular distance to the
/// chord joining the endpoints, both axes normalized to `[0, 1]` first.
///
/// A flat or perfectly linear curve has no knee; the midpoint index is
/// returned with the flag set.
pub fn knee_from_curve(curve: &[(usize, f64)]) -> Result<(usize, bool)> {
    if curve.len() < 3 {
        return Err(Error::InvalidInput(
            "knee detection needs at least 3 points".into(),
        ));
    }
    let x0 = curve[0].0 as f64;
    let xn = curve[curve.len() - 1].0 as f64;
    let (ymin, ymax) = curve
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| {
            (lo.min(y), hi.max(y))
        });
    let x_span = xn - x0;
    let y_span = ymax - ymin;
    if x_span <= 0.0 || y_span <= 1e-300 {
        return Ok(((curve.len() - 1) / 2, true));
    }
    let norm: Vec<(f64, f64)> = curve
        .iter()
        .map(|&(x, y)| ((x as f64 - x0) / x_span, (y - ymin) / y_span))
        .collect();
    let (ax, ay) = norm[0];
    let (bx, by) = norm[norm.len() - 1];
    let chord = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
    let mut best = 0;
    let mut best_d = 0.0;
    for (i, &(px, py)) in norm.iter().enumerate() {
        let d = ((bx - ax) * (ay - py) - (ax - px) * (by - ay)).abs() / chord;
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    if best_d < 1e-12 {
        return Ok(((curve.len() - 1) / 2, true));
    }
    Ok((best, false))
}
