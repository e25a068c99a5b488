use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::diffops::{to_f32_lattice, ParamStore};
use crate::error::{GavnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter, plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    /// Indexed by parameter position in the store; `None` until first touched.
    pub moments: Vec<Option<(Array4<f64>, Array4<f64>)>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// One bias-corrected Adam update of every unfrozen parameter.
///
/// Parameters and moments are rounded onto the `f32` lattice afterwards.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    for (id, p) in store.iter() {
        if store.is_frozen(id) {
            continue;
        }
        if let Some(pos) = p.grad.iter().position(|v| !v.is_finite()) {
            return Err(GavnError::Numerical(format!(
                "non-finite gradient in parameter `{}` at flat index {pos}",
                p.name
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    if state.moments.len() < store.len() {
        state.moments.resize(store.len(), None);
    }
    let ids: Vec<_> = store.ids().filter(|&id| !store.is_frozen(id)).collect();
    for id in ids {
        let idx = id.0;
        let p = store.get_mut(id);
        let (m, v) = state.moments[idx].get_or_insert_with(|| (Array4::zeros(p.data.raw_dim()), Array4::zeros(p.data.raw_dim())));
        ndarray::Zip::from(&mut p.data)
            .and(&p.grad)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| {
                let mn = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                let vn = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = mn / bc1;
                let v_hat = vn / bc2;
                *w = to_f32_lattice(*w - lr * m_hat / (v_hat.sqrt() + cfg.eps));
                *m = to_f32_lattice(mn);
                *v = to_f32_lattice(vn);
            });
    }
    Ok(())
}
