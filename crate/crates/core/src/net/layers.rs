//! Token-grid building blocks: patch embedding, merging, expanding and the
//! visual state-space block.

use super::ssm::{init_ssm, ss2d, SsmDims};
use crate::error::{Error, Result};
use crate::nn::{self, join, LinearInit};
use crate::rng::{self, Rng};
use crate::tensor::{Bindings, ParamStore, ParamValue, Tensor};

const LINEAR_STD: f64 = 0.02;

/// Mid-grey of the windowed input range.
pub const INPUT_MID: f64 = 0.5;

pub fn init_patch_embed(store: &mut ParamStore, prefix: &str, p: usize, c_in: usize, c_out: usize, rng: &mut Rng) {
    let fan_in = p * p * c_in;
    let bound = 1.0 / (fan_in as f64).sqrt();
    nn::insert_uniform(store, join(prefix, "proj.weight"), &[p, p, c_in, c_out], bound, rng);
    // Bias is uniform noise minus the response to a mid-grey patch, so the
    // embedding sees intensities relative to 0.5.
    let w = &store.get(&join(prefix, "proj.weight")).expect("just inserted").data;
    let mut bias: Vec<f64> = (0..c_out).map(|o| -INPUT_MID * (0..fan_in).map(|k| w[k * c_out + o]).sum::<f64>()).collect();
    for b in bias.iter_mut() {
        *b += rng::uniform(rng, -bound, bound);
    }
    store.insert(join(prefix, "proj.bias"), ParamValue::new(&[c_out], bias));
    nn::init_norm(store, &join(prefix, "norm"), c_out);
}

/// Non-overlapping `p x p` convolution followed by LayerNorm.
pub fn patch_embed(params: &Bindings, prefix: &str, x: &Tensor, p: usize) -> Result<Tensor> {
    let [h, w, _] = x.dims3("patch_embed")?;
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::shape("patch_embed", format!("{h}x{w} not divisible by patch size {p}")));
    }
    let y = x
        .conv2d(params.get(&join(prefix, "proj.weight"))?, p, 0)?
        .add_channel(params.get(&join(prefix, "proj.bias"))?)?;
    nn::layer_norm(params, &join(prefix, "norm"), &y)
}

pub fn init_patch_merge(store: &mut ParamStore, prefix: &str, c: usize, rng: &mut Rng) {
    nn::init_linear(store, &join(prefix, "reduction"), 4 * c, 2 * c, false, LinearInit::Normal(LINEAR_STD), rng);
    nn::init_norm(store, &join(prefix, "norm"), 2 * c);
}

/// Gather each 2x2 neighbourhood into `4c` channels, ordered
/// `(0,0), (1,0), (0,1), (1,1)` by (row, column) offset.
pub fn space_to_depth2(x: &Tensor) -> Result<Tensor> {
    let [h, w, c] = x.dims3("patch_merge")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape("patch_merge", format!("{h}x{w} has an odd side")));
    }
    x.reshape(&[h / 2, 2, w / 2, 2, c])?
        .permute(&[0, 2, 3, 1, 4])?
        .reshape(&[h / 2, w / 2, 4 * c])
}

/// `[h, w, c] -> [h/2, w/2, 2c]`.
pub fn patch_merge(params: &Bindings, prefix: &str, x: &Tensor) -> Result<Tensor> {
    let y = nn::linear(params, &join(prefix, "reduction"), &space_to_depth2(x)?, false)?;
    nn::layer_norm(params, &join(prefix, "norm"), &y)
}

/// `[h, w, f*f*c] -> [f*h, f*w, c]`, channel blocks laid out row by row.
pub fn depth_to_space(x: &Tensor, f: usize) -> Result<Tensor> {
    let [h, w, cc] = x.dims3("patch_expand")?;
    if f == 0 || cc % (f * f) != 0 {
        return Err(Error::shape("patch_expand", format!("{cc} channels not divisible by {}", f * f)));
    }
    let c = cc / (f * f);
    x.reshape(&[h, w, f, f, c])?
        .permute(&[0, 2, 1, 3, 4])?
        .reshape(&[f * h, f * w, c])
}

pub fn init_patch_expand(store: &mut ParamStore, prefix: &str, c_in: usize, f: usize, c_out: usize, rng: &mut Rng) {
    nn::init_linear(store, &join(prefix, "expand"), c_in, f * f * c_out, false, LinearInit::Normal(LINEAR_STD), rng);
    nn::init_norm(store, &join(prefix, "norm"), c_out);
}

/// Linear `c -> f*f*c_out`, pixel rearrange to `[f*h, f*w, c_out]`, LayerNorm.
pub fn patch_expand(params: &Bindings, prefix: &str, x: &Tensor, f: usize) -> Result<Tensor> {
    let y = nn::linear(params, &join(prefix, "expand"), x, false)?;
    nn::layer_norm(params, &join(prefix, "norm"), &depth_to_space(&y, f)?)
}

/// Width and scan sizes of one VSS block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VssDims {
    pub dim: usize,
    pub ssm: SsmDims,
}

impl VssDims {
    pub fn new(dim: usize, expand: usize, d_state: usize) -> Self {
        VssDims {
            dim,
            ssm: SsmDims::new(dim, expand, d_state),
        }
    }
}

pub fn init_vss(store: &mut ParamStore, prefix: &str, dims: VssDims, rng: &mut Rng) {
    let di = dims.ssm.d_inner;
    nn::init_norm(store, &join(prefix, "norm"), dims.dim);
    nn::init_linear(store, &join(prefix, "in_proj"), dims.dim, 2 * di, false, LinearInit::Normal(LINEAR_STD), rng);
    let kernel = (0..9 * di).map(|_| rng::uniform(rng, -1.0 / 3.0, 1.0 / 3.0)).collect();
    store.insert(join(prefix, "conv.kernel"), ParamValue::new(&[3, 3, di], kernel));
    nn::insert_uniform(store, join(prefix, "conv.bias"), &[di], 1.0 / 3.0, rng);
    init_ssm(store, &join(prefix, "ssm"), dims.ssm, rng);
    nn::init_norm(store, &join(prefix, "out_norm"), di);
    nn::init_linear(store, &join(prefix, "out_proj"), di, dims.dim, false, LinearInit::Normal(LINEAR_STD), rng);
}

/// `x + out_proj(out_norm(ss2d(silu(dwconv(xp)))) * silu(z))` with
/// `[xp, z] = in_proj(LayerNorm(x))`.
pub fn vss_block(params: &Bindings, prefix: &str, dims: VssDims, x: &Tensor) -> Result<Tensor> {
    let di = dims.ssm.d_inner;
    let n = nn::layer_norm(params, &join(prefix, "norm"), x)?;
    let xz = nn::linear(params, &join(prefix, "in_proj"), &n, false)?;
    let parts = xz.split(2, &[di, di])?;
    let xp = parts[0]
        .depthwise_conv2d(params.get(&join(prefix, "conv.kernel"))?)?
        .add_channel(params.get(&join(prefix, "conv.bias"))?)?
        .silu()?;
    let y = ss2d(params, &join(prefix, "ssm"), dims.ssm, &xp)?;
    let y = nn::layer_norm(params, &join(prefix, "out_norm"), &y)?.mul(&parts[1].silu()?)?;
    nn::linear(params, &join(prefix, "out_proj"), &y, false)?.add(x)
}
