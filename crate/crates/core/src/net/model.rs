//! The U-shaped segmentation network.

use super::config::ModelConfig;
use super::layers::{
    init_patch_embed, init_patch_expand, init_patch_merge, init_vss, patch_embed, patch_expand, patch_merge,
    vss_block, VssDims,
};
use super::ssm::SCAN_DIRECTIONS;
use crate::error::{Error, Result};
use crate::mfe::{Mfe, MfeInit};
use crate::nn::{self, LinearInit};
use crate::rng;
use crate::tensor::{Bindings, ParamStore, Tensor};
use crate::windowing::{tri_window_stack, TriWindowConfig};

/// Shape bookkeeping for a configured network. Weights live in a
/// [`ParamStore`] and are passed to [`Wemf::forward`] as bound leaves.
#[derive(Clone, Debug, PartialEq)]
pub struct Wemf {
    pub cfg: ModelConfig,
}

/// Intermediate maps of one forward pass, for inspection and tests.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub skips: Vec<Tensor>,
    pub bottleneck: Tensor,
    /// Per decoder level (deepest first): `(expanded, fused, output)`.
    pub decoder: Vec<(Tensor, Tensor, Tensor)>,
    pub logits: Tensor,
}

impl Wemf {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Wemf { cfg })
    }

    fn vss_dims(&self, level: usize) -> VssDims {
        VssDims::new(self.cfg.dims[level], self.cfg.ssm_expand, self.cfg.d_state)
    }

    pub fn mfe(&self, level: usize) -> Result<Mfe> {
        let s = self.cfg.side(level);
        Mfe::new(format!("mfe.{level}"), s, s, self.cfg.dims[level], self.cfg.mfe_ffn_ratio)
    }

    /// Fresh weights drawn from `seed`.
    pub fn init(&self, seed: u64) -> ParamStore {
        self.init_with(seed, MfeInit { dw_noise_std: self.cfg.mfe_dw_noise })
    }

    pub fn init_with(&self, seed: u64, mfe_init: MfeInit) -> ParamStore {
        let c = &self.cfg;
        let mut s = ParamStore::new();
        let mut r = rng::seeded(rng::derive(seed, 0));
        let levels = c.levels();
        init_patch_embed(&mut s, "embed", c.patch_size, c.in_channels, c.dims[0], &mut r);
        for l in 0..levels {
            for i in 0..c.depths[l] {
                init_vss(&mut s, &format!("enc.{l}.blk.{i}"), self.vss_dims(l), &mut r);
            }
            if l + 1 < levels {
                init_patch_merge(&mut s, &format!("enc.{l}.merge"), c.dims[l], &mut r);
            }
        }
        for l in (0..levels - 1).rev() {
            init_patch_expand(&mut s, &format!("dec.{l}.expand"), c.dims[l + 1], 2, c.dims[l], &mut r);
            for i in 0..c.depths[l] {
                init_vss(&mut s, &format!("dec.{l}.blk.{i}"), self.vss_dims(l), &mut r);
            }
        }
        if c.mfe_enabled {
            let mut mr = rng::seeded(rng::derive(seed, 1));
            for l in 0..levels - 1 {
                self.mfe(l).expect("validated config").init(&mut s, mfe_init, &mut mr);
            }
        }
        init_patch_expand(&mut s, "head.expand", c.dims[0], c.patch_size, c.dims[0], &mut r);
        nn::init_linear(&mut s, "head.proj", c.dims[0], c.num_classes, true, LinearInit::Normal(0.02), &mut r);
        s
    }

    pub fn check_weights(&self, store: &ParamStore) -> Result<()> {
        self.init(0).check_compatible(store)
    }

    /// Logits `[H, W, num_classes]` for a `[H, W, in_channels]` input.
    pub fn forward(&self, p: &Bindings, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(p, x)?.logits)
    }

    pub fn forward_trace(&self, p: &Bindings, x: &Tensor) -> Result<ForwardTrace> {
        let c = &self.cfg;
        let expect = [c.img_size, c.img_size, c.in_channels];
        if x.shape() != expect {
            return Err(Error::shape("forward", format!("input {:?}, model expects {expect:?}", x.shape())));
        }
        let levels = c.levels();
        let mut h = patch_embed(p, "embed", x, c.patch_size)?;
        let mut skips = Vec::with_capacity(levels - 1);
        for l in 0..levels {
            for i in 0..c.depths[l] {
                h = vss_block(p, &format!("enc.{l}.blk.{i}"), self.vss_dims(l), &h)?;
            }
            if l + 1 < levels {
                skips.push(h.clone());
                h = patch_merge(p, &format!("enc.{l}.merge"), &h)?;
            }
        }
        let bottleneck = h.clone();
        let mut decoder = Vec::with_capacity(levels - 1);
        for l in (0..levels - 1).rev() {
            let up = patch_expand(p, &format!("dec.{l}.expand"), &h, 2)?;
            let skip = if c.mfe_enabled {
                self.mfe(l)?.forward(p, &skips[l])?
            } else {
                skips[l].clone()
            };
            let fused = up.add(&skip)?;
            h = fused.clone();
            for i in 0..c.depths[l] {
                h = vss_block(p, &format!("dec.{l}.blk.{i}"), self.vss_dims(l), &h)?;
            }
            decoder.push((up, fused, h.clone()));
        }
        let full = patch_expand(p, "head.expand", &h, c.patch_size)?;
        let logits = nn::linear(p, "head.proj", &full, true)?;
        Ok(ForwardTrace {
            skips,
            bottleneck,
            decoder,
            logits,
        })
    }

    /// Window a HU slice `[H, W]` (row-major) into three channels and run the network.
    pub fn forward_hu(&self, p: &Bindings, hu: &[f64], windows: &TriWindowConfig) -> Result<Tensor> {
        let s = self.cfg.img_size;
        let x = tri_window_stack(hu, s, s, windows)?;
        self.forward(p, &x)
    }
}

pub fn count_params(store: &ParamStore) -> usize {
    store.count()
}

/// Floating-point operation estimate for one forward pass.
///
/// Conventions: linear and convolution layers count `2 * MACs`; each
/// length-`N` pass of a 2D DFT counts `5 N log2 N`, inverse included; the
/// selective scan counts 9 flops per (step, channel, state). Norms,
/// activations and elementwise ops are not counted.
pub fn estimate_flops(cfg: &ModelConfig) -> Result<u64> {
    cfg.validate()?;
    let lin = |tokens: usize, i: usize, o: usize| 2 * (tokens * i * o) as u64;
    let fft = |n: usize, count: usize| {
        if n <= 1 {
            0
        } else {
            (5.0 * n as f64 * (n as f64).log2() * count as f64).round() as u64
        }
    };
    let levels = cfg.levels();
    let mut total = 0u64;
    let s0 = cfg.side(0);
    total += lin(s0 * s0, cfg.patch_size * cfg.patch_size * cfg.in_channels, cfg.dims[0]);

    let vss = |l: usize| -> u64 {
        let s = cfg.side(l);
        let t = s * s;
        let d = cfg.dims[l];
        let dims = VssDims::new(d, cfg.ssm_expand, cfg.d_state);
        let (di, n, r) = (dims.ssm.d_inner, dims.ssm.d_state, dims.ssm.dt_rank);
        let mut f = lin(t, d, 2 * di) + 2 * 9 * (t * di) as u64 + lin(t, di, d);
        f += SCAN_DIRECTIONS as u64 * (lin(t, di, r + 2 * n) + lin(t, r, di) + 9 * (t * di * n) as u64);
        f
    };
    for l in 0..levels {
        total += cfg.depths[l] as u64 * vss(l);
        if l + 1 < levels {
            let s = cfg.side(l + 1);
            total += lin(s * s, 4 * cfg.dims[l], 2 * cfg.dims[l]);
        }
    }
    for l in (0..levels - 1).rev() {
        let s = cfg.side(l + 1);
        total += lin(s * s, cfg.dims[l + 1], 4 * cfg.dims[l]);
        total += cfg.depths[l] as u64 * vss(l);
        if cfg.mfe_enabled {
            let side = cfg.side(l);
            let c = cfg.dims[l];
            let q = c / 4;
            // forward and inverse transform of each view, two passes each
            let hw = fft(side, side * q) * 2;
            let cw = fft(q, side * side) + fft(side, side * q);
            let ch = cw;
            total += 2 * (hw + cw + ch);
            total += 2 * 9 * (side * side * q) as u64;
            total += lin(side * side, c, cfg.mfe_ffn_ratio * c) + lin(side * side, cfg.mfe_ffn_ratio * c, c);
        }
    }
    let p = cfg.patch_size;
    total += lin(s0 * s0, cfg.dims[0], p * p * cfg.dims[0]);
    total += lin(cfg.img_size * cfg.img_size, cfg.dims[0], cfg.num_classes);
    Ok(total)
}
