//! Classifier heads over fixed embeddings, plus softmax/CE utilities.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::nn::{Linear, Tensors};
use crate::{Error, Result};

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            denom += *v;
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    out
}

/// Mean cross-entropy and its logit gradient `(softmax - onehot) / N`.
pub fn ce_loss(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, c) = logits.dim();
    if n == 0 {
        return Err(Error::InvalidInput("ce_loss needs at least one sample".into()));
    }
    if labels.len() != n {
        return Err(Error::InvalidInput(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let probs = softmax(logits);
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        loss -= probs[[i, y]].max(1e-300).ln();
        grad[[i, y]] -= 1.0;
    }
    grad /= n as f64;
    Ok((loss / n as f64, grad))
}

/// Row-wise argmax; ties resolve to the lowest index.
pub fn predict_from_logits(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Linear (optionally one-hidden-layer) classifier over embeddings.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    class_names: Vec<String>,
    in_dim: usize,
    hidden: Option<usize>,
    pub params: Tensors,
}

/// Activations the backward pass needs; empty for the linear head.
pub struct HeadCache {
    hidden_out: Option<Array2<f64>>,
}

impl ClassifierHead {
    pub fn new(
        in_dim: usize,
        class_names: &[String],
        hidden: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if in_dim == 0 {
            return Err(Error::InvalidConfig("head input dim must be positive".into()));
        }
        if class_names.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "head needs at least 2 classes, got {}",
                class_names.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in class_names {
            if name.is_empty() || !seen.insert(name) {
                return Err(Error::InvalidConfig(format!(
                    "class names must be unique and non-empty; offender: `{name}`"
                )));
            }
        }
        if hidden == Some(0) {
            return Err(Error::InvalidConfig("hidden width must be positive".into()));
        }
        let head = ClassifierHead {
            class_names: class_names.to_vec(),
            in_dim,
            hidden,
            params: Tensors::new(),
        };
        let mut params = Tensors::new();
        if let Some(hl) = head.hidden_layer() {
            hl.init(&mut params, rng);
        }
        head.out_layer().init(&mut params, rng);
        Ok(ClassifierHead { params, ..head })
    }

    /// Rebuild from checkpointed parameters.
    pub fn from_parts(
        in_dim: usize,
        class_names: Vec<String>,
        hidden: Option<usize>,
        params: Tensors,
    ) -> Result<Self> {
        let head = ClassifierHead {
            class_names,
            in_dim,
            hidden,
            params,
        };
        // Every expected tensor must be present with the right shape.
        let mut expected = vec![head.out_layer()];
        if let Some(hl) = head.hidden_layer() {
            expected.push(hl);
        }
        for layer in expected {
            for (name, rows, cols) in [
                (format!("{}.w", layer.name), layer.out_dim, layer.in_dim),
            ] {
                let got = head
                    .params
                    .0
                    .get(&name)
                    .ok_or_else(|| Error::InvalidInput(format!("checkpoint lacks `{name}`")))?;
                if got.shape() != [rows, cols] {
                    return Err(Error::InvalidInput(format!(
                        "`{name}` has shape {:?}, expected [{rows}, {cols}]",
                        got.shape()
                    )));
                }
            }
            let bname = format!("{}.b", layer.name);
            let got = head
                .params
                .0
                .get(&bname)
                .ok_or_else(|| Error::InvalidInput(format!("checkpoint lacks `{bname}`")))?;
            if got.shape() != [layer.out_dim] {
                return Err(Error::InvalidInput(format!(
                    "`{bname}` has shape {:?}, expected [{}]",
                    got.shape(),
                    layer.out_dim
                )));
            }
        }
        Ok(head)
    }

    fn hidden_layer(&self) -> Option<Linear> {
        self.hidden.map(|h| Linear {
            name: "head.hidden".into(),
            in_dim: self.in_dim,
            out_dim: h,
        })
    }

    fn out_layer(&self) -> Linear {
        Linear {
            name: "head.fc".into(),
            in_dim: self.hidden.unwrap_or(self.in_dim),
            out_dim: self.class_names.len(),
        }
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden_dim(&self) -> Option<usize> {
        self.hidden
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, HeadCache) {
        match self.hidden_layer() {
            None => (self.out_layer().forward(&self.params, x), HeadCache { hidden_out: None }),
            Some(hl) => {
                let mut h = hl.forward(&self.params, x);
                h.mapv_inplace(|v| if v.is_nan() { v } else { v.max(0.0) });
                let logits = self.out_layer().forward(&self.params, &h);
                (logits, HeadCache { hidden_out: Some(h) })
            }
        }
    }

    /// Accumulates parameter gradients; the input gradient is discarded
    /// because embeddings are fixed in two-stage training.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        cache: &HeadCache,
        dlogits: &Array2<f64>,
        grads: &mut Tensors,
    ) {
        match (&cache.hidden_out, self.hidden_layer()) {
            (None, None) => {
                self.out_layer().backward(&self.params, x, dlogits, grads);
            }
            (Some(h), Some(hl)) => {
                let mut dh = self.out_layer().backward(&self.params, h, dlogits, grads);
                dh.zip_mut_with(h, |g, &hv| {
                    if hv <= 0.0 {
                        *g = 0.0;
                    }
                });
                hl.backward(&self.params, x, &dh, grads);
            }
            _ => unreachable!("cache shape always matches head shape"),
        }
    }
}

/// Class scores for a batch of embeddings.
pub fn head_logits(head: &ClassifierHead, x: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != head.in_dim() {
        return Err(Error::InvalidInput(format!(
            "head expects dim {}, got {}",
            head.in_dim(),
            x.ncols()
        )));
    }
    Ok(head.forward(x).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use rand::Rng;

    #[test]
    fn softmax_of_spread_logits() {
        let probs = softmax(&ndarray::arr2(&[[3.0, -1.0]]));
        // e^3 / (e^3 + e^-1) and its complement.
        assert!((probs[[0, 0]] - 0.9820137900379085).abs() < 1e-12);
        assert!((probs[[0, 1]] - 0.0179862099620915).abs() < 1e-12);
        // Rows always sum to one, even for extreme inputs.
        let extreme = softmax(&ndarray::arr2(&[[1e6, 0.0, -1e6]]));
        assert!((extreme.row(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_cost_ln_c() {
        for c in [2, 5, 9] {
            let logits = Array2::zeros((4, c));
            let labels = vec![0usize; 4];
            let (loss, grad) = ce_loss(&logits, &labels).unwrap();
            assert!((loss - (c as f64).ln()).abs() < 1e-12);
            // Gradient rows sum to zero.
            for row in grad.rows() {
                assert!(row.sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let mut rng = seeds::rng(3, "head-test", 0);
        let logits = Array2::from_shape_fn((3, 4), |_| rng.random_range(-2.0..2.0));
        let labels = [1, 3, 0];
        let (_, grad) = ce_loss(&logits, &labels).unwrap();
        let h = 1e-6;
        for probe in [(0, 0), (1, 3), (2, 2)] {
            let mut l2 = logits.clone();
            l2[probe] += h;
            let up = ce_loss(&l2, &labels).unwrap().0;
            l2[probe] -= 2.0 * h;
            let down = ce_loss(&l2, &labels).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[probe]).abs() < 1e-8, "probe {probe:?}");
        }
    }

    #[test]
    fn prediction_ties_go_to_lowest_index() {
        let logits = ndarray::arr2(&[[1.0, 5.0, 5.0], [2.0, 2.0, 2.0], [0.0, -1.0, 3.0]]);
        assert_eq!(predict_from_logits(&logits), vec![1, 0, 2]);
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("class{i}")).collect()
    }

    #[test]
    fn linear_head_learns_a_separable_problem() {
        // Two clusters on opposite sides of the origin; a few plain
        // gradient steps should classify them perfectly.
        let mut rng = seeds::rng(7, "head-train", 0);
        let mut x = Array2::zeros((20, 3));
        let mut labels = Vec::new();
        for i in 0..20 {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            for j in 0..3 {
                x[[i, j]] = sign * 2.0 + rng.random_range(-0.3..0.3);
            }
            labels.push(if sign > 0.0 { 0 } else { 1 });
        }
        let mut head = ClassifierHead::new(3, &names(2), None, &mut rng).unwrap();
        for _ in 0..50 {
            let (logits, cache) = head.forward(&x);
            let (_, dlogits) = ce_loss(&logits, &labels).unwrap();
            let mut grads = Tensors::new();
            head.backward(&x, &cache, &dlogits, &mut grads);
            for (name, g) in grads.iter() {
                let p = head.params.0.get_mut(name).unwrap();
                *p -= &(g * 0.5);
            }
        }
        let preds = predict_from_logits(&head_logits(&head, &x).unwrap());
        assert_eq!(preds, labels);
    }

    #[test]
    fn hidden_head_gradients_match_finite_differences() {
        let mut rng = seeds::rng(11, "head-fd", 0);
        let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let labels = [0, 1, 2, 1, 0];
        let mut head = ClassifierHead::new(4, &names(3), Some(6), &mut rng).unwrap();

        let (logits, cache) = head.forward(&x);
        let (_, dlogits) = ce_loss(&logits, &labels).unwrap();
        let mut grads = Tensors::new();
        head.backward(&x, &cache, &dlogits, &mut grads);

        let h = 1e-6;
        for (name, idx) in [
            ("head.hidden.w", 3),
            ("head.hidden.b", 2),
            ("head.fc.w", 7),
            ("head.fc.b", 1),
        ] {
            let original = head.params.get(name).as_slice().unwrap()[idx];
            head.params.0.get_mut(name).unwrap().as_slice_mut().unwrap()[idx] = original + h;
            let up = ce_loss(&head.forward(&x).0, &labels).unwrap().0;
            head.params.0.get_mut(name).unwrap().as_slice_mut().unwrap()[idx] = original - h;
            let down = ce_loss(&head.forward(&x).0, &labels).unwrap().0;
            head.params.0.get_mut(name).unwrap().as_slice_mut().unwrap()[idx] = original;
            let fd = (up - down) / (2.0 * h);
            let an = grads.get(name).as_slice().unwrap()[idx];
            assert!(
                (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8) < 1e-5,
                "{name}[{idx}]: fd {fd} vs {an}"
            );
        }
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        let mut rng = seeds::rng(1, "head-guard", 0);
        assert!(ClassifierHead::new(0, &names(2), None, &mut rng).is_err());
        assert!(ClassifierHead::new(4, &names(1), None, &mut rng).is_err());
        assert!(ClassifierHead::new(4, &names(2), Some(0), &mut rng).is_err());
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(ClassifierHead::new(4, &dup, None, &mut rng).is_err());
        let head = ClassifierHead::new(4, &names(2), None, &mut rng).unwrap();
        let wrong_width = Array2::zeros((1, 5));
        assert!(head_logits(&head, &wrong_width).is_err());
    }

    #[test]
    fn from_parts_round_trips_and_validates() {
        let mut rng = seeds::rng(2, "head-parts", 0);
        let head = ClassifierHead::new(4, &names(3), Some(5), &mut rng).unwrap();
        let rebuilt = ClassifierHead::from_parts(
            4,
            head.class_names().to_vec(),
            Some(5),
            head.params.clone(),
        )
        .unwrap();
        let x = Array2::from_shape_fn((2, 4), |(i, j)| (i + j) as f64 * 0.1);
        assert_eq!(head.forward(&x).0, rebuilt.forward(&x).0);

        // Dropping a tensor or lying about shapes fails loudly.
        let mut missing = head.params.clone();
        missing.0.remove("head.fc.b");
        assert!(ClassifierHead::from_parts(4, head.class_names().to_vec(), Some(5), missing).is_err());
        assert!(ClassifierHead::from_parts(4, head.class_names().to_vec(), None, head.params.clone()).is_err());
    }
}
