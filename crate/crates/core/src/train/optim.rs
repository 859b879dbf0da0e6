//! AdamW with decoupled weight decay, and the cosine learning-rate schedule.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, ParamValue};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// First and second moments per parameter, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl AdamState {
    pub fn zeros_like(params: &ParamStore) -> Self {
        let zeros = |s: &ParamStore| {
            let mut z = ParamStore::new();
            for (name, p) in s.iter() {
                z.insert(name, ParamValue::new(&p.shape, vec![0.0; p.data.len()]));
            }
            z
        };
        AdamState { t: 0, m: zeros(params), v: zeros(params) }
    }

    /// Moments as one store with `m/` and `v/` name prefixes.
    pub fn to_store(&self) -> ParamStore {
        let mut out = ParamStore::new();
        for (prefix, s) in [("m/", &self.m), ("v/", &self.v)] {
            for (name, p) in s.iter() {
                out.insert(format!("{prefix}{name}"), p.clone());
            }
        }
        out
    }

    pub fn from_store(store: &ParamStore, t: u64) -> Self {
        let mut m = ParamStore::new();
        let mut v = ParamStore::new();
        for (name, p) in store.iter() {
            if let Some(n) = name.strip_prefix("m/") {
                m.insert(n, p.clone());
            } else if let Some(n) = name.strip_prefix("v/") {
                v.insert(n, p.clone());
            }
        }
        AdamState { t, m, v }
    }
}

/// One AdamW update in place. Missing gradients count as zero.
///
/// The decay `p <- p * (1 - lr * wd)` is applied before the bias-corrected
/// moment step.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Vec<f64>>,
    state: &mut AdamState,
    lr: f64,
    hp: &AdamHyper,
) -> Result<()> {
    params.check_compatible(&state.m)?;
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    let decay = 1.0 - lr * hp.weight_decay;
    for (name, p) in params.iter_mut() {
        let g = grads.get(name);
        if let Some(g) = g {
            if g.len() != p.data.len() {
                return Err(Error::Config(format!("gradient for `{name}` has {} values", g.len())));
            }
        }
        let m = &mut state.m.get_mut(name).unwrap().data;
        let v = &mut state.v.get_mut(name).unwrap().data;
        for i in 0..p.data.len() {
            let gi = g.map_or(0.0, |g| g[i]);
            p.data[i] *= decay;
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            p.data[i] -= lr * mh / (vh.sqrt() + hp.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineSchedule {
    pub lr0: f64,
    pub t_max: usize,
    pub eta_min: f64,
}

impl CosineSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) || self.t_max == 0 || !(self.eta_min >= 0.0) {
            return Err(Error::Config(format!(
                "schedule needs lr0 > 0, T_max >= 1, eta_min >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Learning rate at epoch `t`; constant at `eta_min` past `t_max`.
pub fn cosine_lr(t: usize, s: &CosineSchedule) -> f64 {
    let frac = t.min(s.t_max) as f64 / s.t_max as f64;
    s.eta_min + (s.lr0 - s.eta_min) * (1.0 + (PI * frac).cos()) / 2.0
}
