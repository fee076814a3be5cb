//! Large-margin cosine loss for attribute embeddings.
//!
//! Both embeddings and class weights are L2-normalized inside the loss,
//! so only angles matter. The target class's cosine is penalized by a
//! fixed margin before scaling, which pushes same-class embeddings into
//! tighter cones than plain softmax would.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Scale and margin for the cosine loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmclParams {
    /// Multiplier on cosines before the softmax. Larger values sharpen
    /// the distribution; without it the loss saturates near ln(C).
    pub scale: f64,
    /// Cosine subtracted from the target class only.
    pub margin: f64,
}

impl Default for LmclParams {
    fn default() -> Self {
        LmclParams {
            scale: 30.0,
            margin: 0.35,
        }
    }
}

impl LmclParams {
    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lmcl scale must be positive, got {}",
                self.scale
            )));
        }
        if !self.margin.is_finite() || !(0.0..1.0).contains(&self.margin) {
            return Err(Error::InvalidConfig(format!(
                "lmcl margin must lie in [0, 1), got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

fn row_norms(m: &Array2<f64>, what: &str) -> Result<Array1<f64>> {
    let mut norms = Array1::zeros(m.nrows());
    for (i, row) in m.rows().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if !n.is_finite() || n <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "{what} row {i} has zero or non-finite norm"
            )));
        }
        norms[i] = n;
    }
    Ok(norms)
}

/// Mean margin-cosine cross-entropy and its gradients.
///
/// `embeddings` is `[N, D]`, `weights` is `[C, D]` (one row per class),
/// `labels[i]` indexes the target class of sample `i`. Returns
/// `(loss, d_embeddings, d_weights)` where the gradients are with respect
/// to the *unnormalized* inputs.
pub fn lmcl_loss(
    embeddings: &Array2<f64>,
    labels: &[usize],
    weights: &Array2<f64>,
    params: &LmclParams,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    params.validate()?;
    let (n, d) = embeddings.dim();
    let (c, wd) = weights.dim();
    if n == 0 {
        return Err(Error::InvalidInput("lmcl_loss needs at least one sample".into()));
    }
    if d != wd {
        return Err(Error::InvalidInput(format!(
            "embedding dim {d} does not match weight dim {wd}"
        )));
    }
    if labels.len() != n {
        return Err(Error::InvalidInput(format!(
            "{n} embeddings but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {c} classes"
        )));
    }

    let x_norms = row_norms(embeddings, "embedding")?;
    let w_norms = row_norms(weights, "weight")?;
    let mut x_hat = embeddings.clone();
    for (mut row, &nrm) in x_hat.rows_mut().into_iter().zip(x_norms.iter()) {
        row /= nrm;
    }
    let mut w_hat = weights.clone();
    for (mut row, &nrm) in w_hat.rows_mut().into_iter().zip(w_norms.iter()) {
        row /= nrm;
    }

    let cos = x_hat.dot(&w_hat.t()); // [N, C]
    let mut loss = 0.0;
    // g[i][j] = (softmax_ij - onehot_ij) / N, the gradient w.r.t. the
    // scaled margin logits.
    let mut g = Array2::zeros((n, c));
    for i in 0..n {
        let y = labels[i];
        let logit = |j: usize| {
            let m = if j == y { params.margin } else { 0.0 };
            params.scale * (cos[[i, j]] - m)
        };
        let max = (0..c).map(logit).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..c {
            denom += (logit(j) - max).exp();
        }
        loss -= (logit(y) - max) - denom.ln();
        for j in 0..c {
            let softmax = (logit(j) - max).exp() / denom;
            g[[i, j]] = (softmax - if j == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    loss /= n as f64;

    // Chain through the normalizations: for u = x/|x|,
    // d cos_ij / d x_i = (w_hat_j - cos_ij * x_hat_i) / |x_i|.
    let mut d_emb = Array2::zeros((n, d));
    let mut d_w = Array2::zeros((c, d));
    for i in 0..n {
        for j in 0..c {
            let coeff = g[[i, j]] * params.scale;
            if coeff == 0.0 {
                continue;
            }
            let cos_ij = cos[[i, j]];
            for k in 0..d {
                d_emb[[i, k]] += coeff * (w_hat[[j, k]] - cos_ij * x_hat[[i, k]]) / x_norms[i];
                d_w[[j, k]] += coeff * (x_hat[[i, k]] - cos_ij * w_hat[[j, k]]) / w_norms[j];
            }
        }
    }
    Ok((loss, d_emb, d_w))
}

/// Scaled cosine similarities for inference; the margin is a training
/// device and is dropped here.
pub fn lmcl_inference_logits(
    embeddings: &Array2<f64>,
    weights: &Array2<f64>,
    scale: f64,
) -> Result<Array2<f64>> {
    if embeddings.ncols() != weights.ncols() {
        return Err(Error::InvalidInput(format!(
            "embedding dim {} does not match weight dim {}",
            embeddings.ncols(),
            weights.ncols()
        )));
    }
    let x_norms = row_norms(embeddings, "embedding")?;
    let w_norms = row_norms(weights, "weight")?;
    let mut logits = embeddings.dot(&weights.t());
    for i in 0..logits.nrows() {
        for j in 0..logits.ncols() {
            logits[[i, j]] *= scale / (x_norms[i] * w_norms[j]);
        }
    }
    Ok(logits)
}

/// Rescale every row to unit L2 norm in place.
///
/// Keeps the weight matrix on the unit sphere between optimizer steps so
/// its norms never drift into the gradient denominators.
pub fn renormalize_rows(m: &mut Array2<f64>) -> Result<()> {
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if !n.is_finite() || n <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "cannot normalize row {i}: zero or non-finite norm"
            )));
        }
        row /= n;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = seeds::rng(seed, "lmcl-test", 0);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn aligned_two_class_case_matches_closed_form() {
        // One sample sitting exactly on its class weight, with the other
        // class orthogonal: cos_y = 1, cos_other = 0.
        let emb = ndarray::arr2(&[[2.0, 0.0]]); // norm irrelevant
        let w = ndarray::arr2(&[[0.5, 0.0], [0.0, 3.0]]);
        let params = LmclParams::default();
        let (loss, _, _) = lmcl_loss(&emb, &[0], &w, &params).unwrap();
        let s: f64 = 30.0;
        let m: f64 = 0.35;
        let expected = -((s * (1.0 - m)).exp() / ((s * (1.0 - m)).exp() + 1.0)).ln();
        assert!((loss - expected).abs() < 1e-12, "loss {loss} vs {expected}");
    }

    #[test]
    fn zero_margin_unit_scale_reduces_to_cosine_cross_entropy() {
        let emb = random_matrix(6, 4, 1);
        let w = random_matrix(3, 4, 2);
        let labels = [0, 1, 2, 0, 1, 2];
        let params = LmclParams {
            scale: 1.0,
            margin: 0.0,
        };
        let (loss, _, _) = lmcl_loss(&emb, &labels, &w, &params).unwrap();

        // Direct cross-entropy over plain cosine logits.
        let mut expected = 0.0;
        for i in 0..6 {
            let xi = emb.row(i);
            let xn = xi.dot(&xi).sqrt();
            let cosines: Vec<f64> = (0..3)
                .map(|j| {
                    let wj = w.row(j);
                    xi.dot(&wj) / (xn * wj.dot(&wj).sqrt())
                })
                .collect();
            let denom: f64 = cosines.iter().map(|c| c.exp()).sum();
            expected -= cosines[labels[i]] - denom.ln();
        }
        expected /= 6.0;
        assert!((loss - expected).abs() < 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let emb = random_matrix(4, 3, 5);
        let w = random_matrix(3, 3, 6);
        let labels = [0, 2, 1, 0];
        let params = LmclParams {
            scale: 8.0,
            margin: 0.2,
        };
        let (_, d_emb, d_w) = lmcl_loss(&emb, &labels, &w, &params).unwrap();
        let h = 1e-6;

        for probe in [(0, 0), (1, 2), (3, 1)] {
            let mut e2 = emb.clone();
            e2[probe] += h;
            let up = lmcl_loss(&e2, &labels, &w, &params).unwrap().0;
            e2[probe] -= 2.0 * h;
            let down = lmcl_loss(&e2, &labels, &w, &params).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let an = d_emb[probe];
            assert!(
                (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8) < 1e-5,
                "emb{probe:?}: fd {fd} vs {an}"
            );
        }
        for probe in [(0, 1), (2, 0), (1, 2)] {
            let mut w2 = w.clone();
            w2[probe] += h;
            let up = lmcl_loss(&emb, &labels, &w2, &params).unwrap().0;
            w2[probe] -= 2.0 * h;
            let down = lmcl_loss(&emb, &labels, &w2, &params).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let an = d_w[probe];
            assert!(
                (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8) < 1e-5,
                "w{probe:?}: fd {fd} vs {an}"
            );
        }
    }

    #[test]
    fn inference_logits_ignore_vector_norms() {
        let emb = random_matrix(3, 4, 9);
        let w = random_matrix(2, 4, 10);
        let base = lmcl_inference_logits(&emb, &w, 30.0).unwrap();
        let scaled = lmcl_inference_logits(&(&emb * 5.0), &(&w * 0.1), 30.0).unwrap();
        for (a, b) in base.iter().zip(scaled.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let emb = ndarray::arr2(&[[0.0, 0.0]]);
        let w = ndarray::arr2(&[[1.0, 0.0]]);
        assert!(lmcl_loss(&emb, &[0], &w, &LmclParams::default()).is_err());

        let emb = ndarray::arr2(&[[1.0, 0.0]]);
        assert!(lmcl_loss(&emb, &[5], &w, &LmclParams::default()).is_err());
        assert!(lmcl_loss(&emb, &[0, 1], &w, &LmclParams::default()).is_err());

        let bad = LmclParams {
            scale: -1.0,
            margin: 0.0,
        };
        assert!(lmcl_loss(&emb, &[0], &w, &bad).is_err());
        let bad = LmclParams {
            scale: 30.0,
            margin: 1.0,
        };
        assert!(lmcl_loss(&emb, &[0], &w, &bad).is_err());
    }

    #[test]
    fn renormalize_puts_rows_on_unit_sphere() {
        let mut m = random_matrix(4, 5, 11);
        renormalize_rows(&mut m).unwrap();
        for row in m.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }
        let mut zero = Array2::zeros((1, 3));
        assert!(renormalize_rows(&mut zero).is_err());
    }

    #[test]
    fn margin_raises_loss_for_correct_predictions() {
        // With the sample on its own class weight, a margin strictly
        // increases the loss relative to the margin-free case.
        let emb = ndarray::arr2(&[[1.0, 0.0]]);
        let w = ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let no_margin = lmcl_loss(
            &emb,
            &[0],
            &w,
            &LmclParams {
                scale: 4.0,
                margin: 0.0,
            },
        )
        .unwrap()
        .0;
        let with_margin = lmcl_loss(
            &emb,
            &[0],
            &w,
            &LmclParams {
                scale: 4.0,
                margin: 0.5,
            },
        )
        .unwrap()
        .0;
        assert!(with_margin > no_margin);
    }
}
