//! Finite-difference gradient suite and kernel microbenchmarks.

use std::hint::black_box;
use std::time::{Duration, Instant};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mfe::{Mfe, MfeInit};
use crate::net::layers::{init_patch_embed, init_patch_expand, init_patch_merge, init_vss};
use crate::net::ssm::init_ssm;
use crate::net::{patch_embed, patch_expand, patch_merge, scan_core, selective_scan, ss2d, vss_block, ModelConfig, SsmDims, VssDims, Wemf};
use crate::rng::{self, Rng};
use crate::tensor::{dft2, dft2_direct, grad_check, grad_check_at, idft2, Bindings, ComplexTensor, ParamStore, Tensor};
use crate::train::{dice_ce_loss, LossWeights};

pub const GRAD_TOL: f64 = 1e-4;
pub const NETWORK_GRAD_TOL: f64 = 1e-3;
const EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

fn randn(shape: &[usize], r: &mut Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| scale * rng::normal(r)).collect()).expect("valid shape")
}

/// `sum(y * probe)` with a fixed random probe, so every output entry matters.
fn project(y: &Tensor, seed: u64) -> Result<Tensor> {
    let probe = randn(y.shape(), &mut rng::seeded(seed), 1.0);
    Ok(y.mul(&probe)?.sum())
}

struct Suite {
    results: Vec<GradCheck>,
    rng: Rng,
}

impl Suite {
    fn record(&mut self, name: impl Into<String>, err: f64, tol: f64) {
        self.results.push(GradCheck { name: name.into(), max_rel_err: err, tol, passed: err < tol });
    }

    fn op<F>(&mut self, name: &str, shape: &[usize], f: F) -> Result<()>
    where
        F: Fn(&Tensor) -> Result<Tensor>,
    {
        let x = randn(shape, &mut self.rng, 1.0);
        let seed = self.rng.next_u64();
        let err = grad_check(|x| project(&f(x)?, seed), &x, EPS)?;
        self.record(name, err, GRAD_TOL);
        Ok(())
    }

    /// Check a module with respect to its input and each named parameter.
    fn module<F>(&mut self, name: &str, store: &ParamStore, x: &Tensor, f: F) -> Result<()>
    where
        F: Fn(&Bindings, &Tensor) -> Result<Tensor>,
    {
        let base = store.bind(false)?;
        let seed = self.rng.next_u64();
        let err = grad_check(|x| project(&f(&base, x)?, seed), x, EPS)?;
        self.record(format!("{name}/input"), err, GRAD_TOL);
        for pname in store.names() {
            let value = base.get(pname)?.clone();
            let err = grad_check(
                |w| {
                    let mut b = base.clone();
                    b.set(pname, w.clone());
                    project(&f(&b, x)?, seed)
                },
                &value,
                EPS,
            )?;
            self.record(format!("{name}/{pname}"), err, GRAD_TOL);
        }
        Ok(())
    }
}

/// Parameters perturbed away from their initial values so no check sits on a
/// symmetric point such as zero weights or unit gains.
fn jitter(store: &mut ParamStore, r: &mut Rng, scale: f64) {
    for (_, v) in store.iter_mut() {
        for x in &mut v.data {
            *x += scale * rng::normal(r);
        }
    }
}

/// Every differentiable operation and module, checked against central
/// differences.
pub fn grad_suite() -> Result<Vec<GradCheck>> {
    let mut s = Suite { results: Vec::new(), rng: rng::seeded(0x6772_6164) };
    let r = &mut rng::seeded(17);
    let b23 = randn(&[2, 3], r, 1.0);
    let c3 = randn(&[3], r, 1.0);
    let pos23 = randn(&[2, 3], r, 0.3).add_scalar(2.0)?;

    s.op("add", &[2, 3], |x| x.add(&b23))?;
    s.op("sub", &[2, 3], |x| b23.sub(x))?;
    s.op("mul", &[2, 3], |x| x.mul(&b23))?;
    s.op("div/numerator", &[2, 3], |x| x.div(&pos23))?;
    s.op("div/denominator", &[2, 3], |x| b23.div(&x.scale(0.1)?.add_scalar(2.0)?))?;
    s.op("scale", &[2, 3], |x| x.scale(-1.7))?;
    s.op("add_scalar", &[2, 3], |x| x.add_scalar(0.4))?;
    s.op("add_channel/x", &[2, 2, 3], |x| x.add_channel(&c3))?;
    s.op("add_channel/bias", &[3], |b| Tensor::full(&[2, 3], 0.5).add_channel(b))?;
    s.op("mul_channel/x", &[2, 2, 3], |x| x.mul_channel(&c3))?;
    s.op("mul_channel/scale", &[3], |c| b23.mul_channel(c))?;
    s.op("neg", &[4], |x| x.neg())?;
    s.op("exp", &[4], |x| x.exp())?;
    s.op("silu", &[6], |x| x.silu())?;
    s.op("gelu", &[6], |x| x.gelu())?;
    s.op("softplus", &[6], |x| x.softplus())?;
    s.op("sum", &[2, 3], |x| Ok(x.sum()))?;
    s.op("mean", &[2, 3], |x| Ok(x.mean()))?;
    s.op("sum_sq", &[2, 3], |x| Ok(x.sum_sq()))?;
    s.op("sum_to_channels", &[2, 2, 3], |x| x.sum_to_channels())?;
    s.op("log_softmax", &[3, 4], |x| x.log_softmax())?;
    s.op("reshape", &[2, 6], |x| x.reshape(&[3, 4]))?;
    s.op("permute", &[2, 3, 4], |x| x.permute(&[2, 0, 1]))?;
    s.op("flip", &[3, 4], |x| x.flip(1))?;
    s.op("narrow", &[3, 5], |x| x.narrow(1, 1, 3))?;
    s.op("split", &[2, 5], |x| {
        let parts = x.split(1, &[2, 3])?;
        parts[0].sum_to_channels()?.sum().add(&parts[1].exp()?.sum())
    })?;
    s.op("concat", &[2, 3], |x| Tensor::concat(&[x.clone(), b23.clone(), x.scale(2.0)?], 0))?;
    s.op("upsample_nearest", &[2, 3, 2], |x| x.upsample_nearest(2))?;
    s.op("resize_bilinear", &[3, 4, 2], |x| x.resize_bilinear(5, 7))?;

    let m34 = randn(&[3, 4], r, 1.0);
    let w42 = randn(&[4, 2], r, 1.0);
    let b2 = randn(&[2], r, 1.0);
    s.op("matmul/lhs", &[2, 3], |x| x.matmul(&m34))?;
    s.op("matmul/rhs", &[3, 4], |w| b23.matmul(w))?;
    s.op("linear/x", &[2, 3, 4], |x| x.linear(&w42, Some(&b2)))?;
    s.op("linear/weight", &[4, 2], |w| m34.linear(w, Some(&b2)))?;
    s.op("linear/bias", &[2], |b| m34.linear(&w42, Some(b)))?;

    let img = randn(&[5, 6, 2], r, 1.0);
    let k = randn(&[3, 3, 2, 3], r, 0.5);
    let dk = randn(&[3, 3, 2], r, 0.5);
    s.op("conv2d/x", &[5, 6, 2], |x| x.conv2d(&k, 2, 1))?;
    s.op("conv2d/kernel", &[3, 3, 2, 3], |k| img.conv2d(k, 2, 1))?;
    s.op("conv2d/patchify", &[8, 8, 2], |x| x.conv2d(&randn(&[4, 4, 2, 3], &mut rng::seeded(3), 0.5), 4, 0))?;
    s.op("depthwise_conv2d/x", &[5, 6, 2], |x| x.depthwise_conv2d(&dk))?;
    s.op("depthwise_conv2d/kernel", &[3, 3, 2], |k| img.depthwise_conv2d(k))?;

    let g8 = randn(&[8], r, 0.3).add_scalar(1.0)?;
    let b8 = randn(&[8], r, 0.3);
    let x8 = randn(&[3, 2, 8], r, 1.0);
    s.op("group_standardize", &[3, 2, 8], |x| x.group_standardize(4, 1e-5))?;
    s.op("group_norm/x", &[3, 2, 8], |x| x.group_norm(4, &g8, &b8, 1e-5))?;
    s.op("group_norm/gamma", &[8], |g| x8.group_norm(4, g, &b8, 1e-5))?;
    s.op("group_norm/beta", &[8], |b| x8.group_norm(4, &g8, b, 1e-5))?;
    s.op("layer_norm/x", &[3, 2, 8], |x| x.layer_norm(&g8, &b8, 1e-5))?;
    s.op("layer_norm/gamma", &[8], |g| x8.layer_norm(g, &b8, 1e-5))?;

    // Spectral filtering: dft2, complex product, inverse transform (real part).
    let fw = ComplexTensor::new(randn(&[4, 6, 2], r, 1.0), randn(&[4, 6, 2], r, 1.0))?;
    let fx = randn(&[4, 6, 2], r, 1.0);
    let filter = |x: &Tensor, w: &ComplexTensor| -> Result<Tensor> {
        idft2(&dft2(x, (0, 1))?.mul(w)?, (0, 1))
    };
    s.op("dft2+filter+idft2/x", &[4, 6, 2], |x| filter(x, &fw))?;
    s.op("dft2+filter+idft2/w.re", &[4, 6, 2], |re| filter(&fx, &ComplexTensor::new(re.clone(), fw.im.clone())?))?;
    s.op("dft2+filter+idft2/w.im", &[4, 6, 2], |im| filter(&fx, &ComplexTensor::new(fw.re.clone(), im.clone())?))?;
    s.op("dft2/re", &[3, 5, 2], |x| Ok(dft2(x, (1, 0))?.re))?;
    s.op("dft2/im", &[3, 5, 2], |x| Ok(dft2(x, (2, 1))?.im))?;

    // Selective scan kernel, one input at a time.
    let (l, d, n) = (6, 3, 2);
    let u = randn(&[l, d], r, 1.0);
    let delta = randn(&[l, d], r, 0.2).add_scalar(0.5)?;
    let a = randn(&[d, n], r, 0.2).add_scalar(-1.0)?;
    let bm = randn(&[l, n], r, 1.0);
    let cm = randn(&[l, n], r, 1.0);
    let skip = randn(&[d], r, 1.0);
    s.op("scan_core/u", &[l, d], |x| scan_core(x, &delta, &a, &bm, &cm, &skip))?;
    s.op("scan_core/delta", &[l, d], |x| scan_core(&u, &x.scale(0.2)?.add_scalar(0.5)?, &a, &bm, &cm, &skip))?;
    s.op("scan_core/a", &[d, n], |x| scan_core(&u, &delta, &x.scale(0.2)?.add_scalar(-1.0)?, &bm, &cm, &skip))?;
    s.op("scan_core/b", &[l, n], |x| scan_core(&u, &delta, &a, x, &cm, &skip))?;
    s.op("scan_core/c", &[l, n], |x| scan_core(&u, &delta, &a, &bm, x, &skip))?;
    s.op("scan_core/skip", &[d], |x| scan_core(&u, &delta, &a, &bm, &cm, x))?;

    let dims = SsmDims::new(4, 2, 2);
    let mut store = ParamStore::new();
    init_ssm(&mut store, "ssm", dims, &mut rng::seeded(21));
    jitter(&mut store, r, 0.05);
    let seq = randn(&[5, dims.d_inner], r, 1.0);
    s.module("selective_scan", &store, &seq, |p, x| selective_scan(p, "ssm", 1, dims, x))?;
    let grid = randn(&[3, 2, dims.d_inner], r, 1.0);
    s.module("ss2d", &store, &grid, |p, x| ss2d(p, "ssm", dims, x))?;

    let mut store = ParamStore::new();
    init_patch_embed(&mut store, "pe", 2, 3, 8, &mut rng::seeded(22));
    jitter(&mut store, r, 0.05);
    s.module("patch_embed", &store, &randn(&[4, 4, 3], r, 1.0), |p, x| patch_embed(p, "pe", x, 2))?;

    let mut store = ParamStore::new();
    init_patch_merge(&mut store, "pm", 4, &mut rng::seeded(23));
    jitter(&mut store, r, 0.05);
    s.module("patch_merge", &store, &randn(&[4, 2, 4], r, 1.0), |p, x| patch_merge(p, "pm", x))?;

    let mut store = ParamStore::new();
    init_patch_expand(&mut store, "px", 8, 2, 4, &mut rng::seeded(24));
    jitter(&mut store, r, 0.05);
    s.module("patch_expand", &store, &randn(&[2, 3, 8], r, 1.0), |p, x| patch_expand(p, "px", x, 2))?;

    let vdims = VssDims::new(4, 2, 2);
    let mut store = ParamStore::new();
    init_vss(&mut store, "vss", vdims, &mut rng::seeded(25));
    jitter(&mut store, r, 0.05);
    s.module("vss_block", &store, &randn(&[3, 3, 4], r, 1.0), |p, x| vss_block(p, "vss", vdims, x))?;

    let mfe = Mfe::new("mfe", 4, 4, 8, 2)?;
    let mut store = ParamStore::new();
    mfe.init(&mut store, MfeInit::default(), &mut rng::seeded(26));
    jitter(&mut store, r, 0.05);
    s.module("mfe", &store, &randn(&[4, 4, 8], r, 1.0), |p, x| mfe.forward(p, x))?;

    let labels: Vec<u8> = (0..16).map(|i| ((i * 5) % 3) as u8).collect();
    let x = randn(&[4, 4, 3], r, 1.0);
    let err = grad_check(|x| Ok(dice_ce_loss(x, &labels, LossWeights::default())?.total), &x, EPS)?;
    s.record("dice_ce_loss", err, GRAD_TOL);

    network_check(&mut s)?;
    Ok(s.results)
}

/// Tiny configuration used for the end-to-end network check.
pub fn gradcheck_model() -> ModelConfig {
    ModelConfig {
        img_size: 32,
        patch_size: 4,
        depths: vec![1, 1, 1],
        dims: vec![8, 16, 32],
        d_state: 2,
        ..ModelConfig::desk()
    }
}

/// End-to-end 32x32 network through the loss, on sampled coordinates of the
/// input and of every parameter tensor.
fn network_check(s: &mut Suite) -> Result<()> {
    let model = Wemf::new(gradcheck_model())?;
    let mut store = model.init(31);
    jitter(&mut store, &mut rng::seeded(32), 0.02);
    let r = &mut rng::seeded(33);
    let x = Tensor::new(&[32, 32, 3], (0..32 * 32 * 3).map(|_| rng::uniform(r, 0.0, 1.0)).collect())?;
    let labels: Vec<u8> = (0..32 * 32).map(|i| (((i % 32) / 11 + (i / 32) / 13) % 3) as u8).collect();
    let base = store.bind(false)?;
    let loss = |p: &Bindings, x: &Tensor| Ok(dice_ce_loss(&model.forward(p, x)?, &labels, LossWeights::default())?.total);
    let pick = |n: usize, k: usize, r: &mut Rng| -> Vec<usize> {
        use rand::seq::index::sample;
        sample(r, n, k.min(n)).into_vec()
    };
    let idx = pick(x.numel(), 24, r);
    let err = grad_check_at(|x| loss(&base, x), &x, EPS, &idx)?;
    s.record("network32/input", err, NETWORK_GRAD_TOL);
    let mut worst = 0.0f64;
    let mut worst_name = String::new();
    for pname in store.names() {
        let value = base.get(pname)?.clone();
        let idx = pick(value.numel(), 2, r);
        let err = grad_check_at(
            |w| {
                let mut b = base.clone();
                b.set(pname, w.clone());
                loss(&b, &x)
            },
            &value,
            EPS,
            &idx,
        )?;
        if err >= worst {
            worst = err;
            worst_name = pname.to_string();
        }
    }
    s.record(format!("network32/params (worst: {worst_name})"), worst, NETWORK_GRAD_TOL);
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTiming {
    pub name: String,
    pub shape: String,
    pub ns_per_op: f64,
    pub flops: f64,
    pub gflop_per_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub kernels: Vec<KernelTiming>,
    /// Direct-summation time over FFT time for the 256x256 transform.
    pub fft_speedup: f64,
}

/// Median wall time per call over `reps` runs after one warm-up.
fn time<F: FnMut() -> Result<()>>(reps: usize, mut f: F) -> Result<Duration> {
    f()?;
    let mut v = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        v.push(t.elapsed());
    }
    v.sort();
    Ok(v[v.len() / 2])
}

fn timing(name: &str, shape: &str, d: Duration, flops: f64) -> KernelTiming {
    let ns = d.as_secs_f64() * 1e9;
    KernelTiming { name: name.into(), shape: shape.into(), ns_per_op: ns, flops, gflop_per_s: flops / ns }
}

/// Time the main kernels at fixed shapes. Flop counts are nominal: `5 N log2 N`
/// per complex FFT, one multiply-add pair per term for direct sums.
pub fn bench(reps: usize) -> Result<BenchReport> {
    let r = &mut rng::seeded(99);
    let mut kernels = Vec::new();

    let n = 256usize;
    let img = randn(&[n, n, 1], r, 1.0);
    let fft = time(reps, || {
        black_box(dft2(&img, (0, 1))?);
        Ok(())
    })?;
    let points = (n * n) as f64;
    kernels.push(timing("dft2_fft", "256x256x1", fft, 5.0 * points * points.log2()));
    let direct = time(reps.min(3), || {
        black_box(dft2_direct(&img, (0, 1))?);
        Ok(())
    })?;
    kernels.push(timing("dft2_direct", "256x256x1", direct, 8.0 * points * (2 * n) as f64));

    let (l, d, st) = (256, 64, 8);
    let u = randn(&[l, d], r, 1.0);
    let delta = randn(&[l, d], r, 0.1).add_scalar(0.1)?.softplus()?;
    let a = randn(&[d, st], r, 0.1).add_scalar(-1.0)?;
    let b = randn(&[l, st], r, 1.0);
    let c = randn(&[l, st], r, 1.0);
    let skip = randn(&[d], r, 1.0);
    let scan = time(reps, || {
        black_box(scan_core(&u, &delta, &a, &b, &c, &skip)?);
        Ok(())
    })?;
    kernels.push(timing("selective_scan", "L256 D64 N8", scan, (l * d * st) as f64 * 6.0));

    let fm = randn(&[64, 64, 64], r, 1.0);
    let k = randn(&[3, 3, 64], r, 0.3);
    let dw = time(reps, || {
        black_box(fm.depthwise_conv2d(&k)?);
        Ok(())
    })?;
    kernels.push(timing("depthwise_conv2d", "64x64x64 k3", dw, (64 * 64 * 64 * 9 * 2) as f64));

    let cfg = ModelConfig::desk();
    let model = Wemf::new(cfg.clone())?;
    let p = model.init(1).bind(false)?;
    let x = randn(&[cfg.img_size, cfg.img_size, 3], r, 0.3);
    let fwd = time(reps.min(5), || {
        black_box(model.forward(&p, &x)?);
        Ok(())
    })?;
    let flops = crate::net::estimate_flops(&cfg)? as f64;
    kernels.push(timing("forward", "desk 64x64", fwd, flops));

    Ok(BenchReport { kernels, fft_speedup: direct.as_secs_f64() / fft.as_secs_f64() })
}
