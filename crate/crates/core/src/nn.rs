//! Parameter initialization and lookup helpers shared by the network parts.

use crate::error::Result;
use crate::rng::{self, Rng};
use crate::tensor::{Bindings, ParamStore, ParamValue, Tensor};

/// Join a prefix and a leaf name with a dot.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn insert_const(store: &mut ParamStore, name: String, shape: &[usize], value: f64) {
    let n = shape.iter().product();
    store.insert(name, ParamValue::new(shape, vec![value; n]));
}

pub fn insert_normal(store: &mut ParamStore, name: String, shape: &[usize], std: f64, rng: &mut Rng) {
    let n = shape.iter().product();
    let data = (0..n).map(|_| std * rng::normal(rng)).collect();
    store.insert(name, ParamValue::new(shape, data));
}

pub fn insert_uniform(store: &mut ParamStore, name: String, shape: &[usize], bound: f64, rng: &mut Rng) {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng::uniform(rng, -bound, bound)).collect();
    store.insert(name, ParamValue::new(shape, data));
}

/// Dense layer `[d_in, d_out]` with an optional bias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearInit {
    /// Uniform in `±1/sqrt(d_in)`.
    Uniform,
    /// Normal with the given std.
    Normal(f64),
    Zero,
}

pub fn init_linear(
    store: &mut ParamStore,
    prefix: &str,
    d_in: usize,
    d_out: usize,
    bias: bool,
    init: LinearInit,
    rng: &mut Rng,
) {
    let w = join(prefix, "weight");
    match init {
        LinearInit::Uniform => insert_uniform(store, w, &[d_in, d_out], 1.0 / (d_in as f64).sqrt(), rng),
        LinearInit::Normal(std) => insert_normal(store, w, &[d_in, d_out], std, rng),
        LinearInit::Zero => insert_const(store, w, &[d_in, d_out], 0.0),
    }
    if bias {
        insert_const(store, join(prefix, "bias"), &[d_out], 0.0);
    }
}

pub fn linear(p: &Bindings, prefix: &str, x: &Tensor, bias: bool) -> Result<Tensor> {
    let w = p.get(&join(prefix, "weight"))?;
    if bias {
        x.linear(w, Some(p.get(&join(prefix, "bias"))?))
    } else {
        x.linear(w, None)
    }
}

/// Affine `gamma = 1`, `beta = 0` for a norm over `c` channels.
pub fn init_norm(store: &mut ParamStore, prefix: &str, c: usize) {
    insert_const(store, join(prefix, "gamma"), &[c], 1.0);
    insert_const(store, join(prefix, "beta"), &[c], 0.0);
}

pub const NORM_EPS: f64 = 1e-5;

pub fn layer_norm(p: &Bindings, prefix: &str, x: &Tensor) -> Result<Tensor> {
    x.layer_norm(p.get(&join(prefix, "gamma"))?, p.get(&join(prefix, "beta"))?, NORM_EPS)
}

pub fn group_norm(p: &Bindings, prefix: &str, x: &Tensor, groups: usize) -> Result<Tensor> {
    x.group_norm(groups, p.get(&join(prefix, "gamma"))?, p.get(&join(prefix, "beta"))?, NORM_EPS)
}
