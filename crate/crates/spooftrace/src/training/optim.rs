//! Adaptive-moment gradient descent over named tensor stores.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use crate::models::nn::Tensors;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction. Moment estimates are keyed by tensor name,
/// so one optimizer can drive several parameter stores as long as their
/// tensor names never collide.
pub struct Adam {
    lr: f64,
    t: u64,
    m: BTreeMap<String, ArrayD<f64>>,
    v: BTreeMap<String, ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update over every (parameters, gradients) group. The step
    /// counter advances once per call, not once per group.
    pub fn step(&mut self, groups: &mut [(&mut Tensors, &Tensors)]) {
        self.t += 1;
        let scale = self.lr * (1.0 - BETA2.powi(self.t as i32)).sqrt()
            / (1.0 - BETA1.powi(self.t as i32));
        for (params, grads) in groups.iter_mut() {
            for (name, grad) in grads.iter() {
                let m = self
                    .m
                    .entry(name.to_string())
                    .or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
                let v = self
                    .v
                    .entry(name.to_string())
                    .or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
                m.zip_mut_with(grad, |mv, &g| *mv = BETA1 * *mv + (1.0 - BETA1) * g);
                v.zip_mut_with(grad, |vv, &g| *vv = BETA2 * *vv + (1.0 - BETA2) * g * g);
                let p = params
                    .0
                    .get_mut(name)
                    .unwrap_or_else(|| panic!("gradient for unknown parameter `{name}`"));
                ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|pv, &mv, &vv| {
                    *pv -= scale * mv / (vv.sqrt() + ADAM_EPS);
                });
            }
        }
    }
}
