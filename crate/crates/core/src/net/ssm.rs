//! Selective state-space scan and its four-direction 2D form.

use crate::error::{Error, Result};
use crate::nn::{self, join};
use crate::rng::{self, Rng};
use crate::tensor::{Bindings, ParamStore, ParamValue, Tensor};

/// Fused recurrence over `L` steps for `D` channels with `N` states each:
///
/// ```text
/// h[t, d, n] = exp(delta[t, d] * a[d, n]) * h[t-1, d, n] + delta[t, d] * b[t, n] * u[t, d]
/// y[t, d]    = sum_n c[t, n] * h[t, d, n] + skip[d] * u[t, d]
/// ```
///
/// Shapes: `u, delta: [L, D]`, `a: [D, N]`, `b, c: [L, N]`, `skip: [D]`.
pub fn scan_core(u: &Tensor, delta: &Tensor, a: &Tensor, b: &Tensor, c: &Tensor, skip: &Tensor) -> Result<Tensor> {
    let &[l, d] = u.shape() else {
        return Err(Error::shape("selective_scan", format!("u {:?} is not [L, D]", u.shape())));
    };
    let &[ad, n] = a.shape() else {
        return Err(Error::shape("selective_scan", format!("A {:?} is not [D, N]", a.shape())));
    };
    if l == 0 || n == 0 {
        return Err(Error::shape("selective_scan", "empty sequence or state"));
    }
    if delta.shape() != [l, d] || ad != d || b.shape() != [l, n] || c.shape() != [l, n] || skip.shape() != [d] {
        return Err(Error::shape(
            "selective_scan",
            format!(
                "u {:?}, delta {:?}, A {:?}, B {:?}, C {:?}, D {:?}",
                u.shape(),
                delta.shape(),
                a.shape(),
                b.shape(),
                c.shape(),
                skip.shape()
            ),
        ));
    }

    // decay[t, d, n] and h[t, d, n], kept for the reverse pass
    let (uv, dv, av, bv, cv, sv) = (u.data(), delta.data(), a.data(), b.data(), c.data(), skip.data());
    let mut decay = vec![0.0; l * d * n];
    let mut hs = vec![0.0; l * d * n];
    let mut y = vec![0.0; l * d];
    for ch in 0..d {
        let mut h = vec![0.0; n];
        for t in 0..l {
            let dt = dv[t * d + ch];
            let ut = uv[t * d + ch];
            let base = (t * d + ch) * n;
            let mut acc = sv[ch] * ut;
            for s in 0..n {
                let e = (dt * av[ch * n + s]).exp();
                h[s] = e * h[s] + dt * bv[t * n + s] * ut;
                decay[base + s] = e;
                hs[base + s] = h[s];
                acc += cv[t * n + s] * h[s];
            }
            y[t * d + ch] = acc;
        }
    }

    let parents = vec![u.clone(), delta.clone(), a.clone(), b.clone(), c.clone(), skip.clone()];
    Tensor::from_op("selective_scan", vec![l, d], y, parents, move |ctx| {
        let (uv, dv, av, bv, cv, sv) = (
            ctx.parents[0].data(),
            ctx.parents[1].data(),
            ctx.parents[2].data(),
            ctx.parents[3].data(),
            ctx.parents[4].data(),
            ctx.parents[5].data(),
        );
        let gy = ctx.grad;
        let mut gu = vec![0.0; l * d];
        let mut gdelta = vec![0.0; l * d];
        let mut ga = vec![0.0; d * n];
        let mut gb = vec![0.0; l * n];
        let mut gc = vec![0.0; l * n];
        let mut gskip = vec![0.0; d];
        let mut gh = vec![0.0; n];
        for ch in 0..d {
            gh.iter_mut().for_each(|g| *g = 0.0);
            for t in (0..l).rev() {
                let idx = t * d + ch;
                let (dt, ut, g) = (dv[idx], uv[idx], gy[idx]);
                let base = idx * n;
                let next = (t + 1 < l).then(|| (idx + d) * n);
                let mut g_dt = 0.0;
                let mut g_u = g * sv[ch];
                gskip[ch] += g * ut;
                for s in 0..n {
                    let carry = next.map_or(0.0, |nb| decay[nb + s] * gh[s]);
                    let ght = cv[t * n + s] * g + carry;
                    gh[s] = ght;
                    gc[t * n + s] += g * hs[base + s];
                    let prev = if t > 0 { hs[base - d * n + s] } else { 0.0 };
                    let e = decay[base + s];
                    let g_decay = ght * prev;
                    let a_ds = av[ch * n + s];
                    g_dt += g_decay * e * a_ds + ght * bv[t * n + s] * ut;
                    ga[ch * n + s] += g_decay * e * dt;
                    gb[t * n + s] += ght * dt * ut;
                    g_u += ght * dt * bv[t * n + s];
                }
                gdelta[idx] += g_dt;
                gu[idx] += g_u;
            }
        }
        vec![Some(gu), Some(gdelta), Some(ga), Some(gb), Some(gc), Some(gskip)]
    })
}

/// Sizes of the per-direction scan parameters for a block of width `d_model`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SsmDims {
    pub d_inner: usize,
    pub d_state: usize,
    pub dt_rank: usize,
}

impl SsmDims {
    pub fn new(d_model: usize, expand: usize, d_state: usize) -> Self {
        SsmDims {
            d_inner: expand * d_model,
            d_state,
            dt_rank: d_model.div_ceil(16),
        }
    }
}

pub const SCAN_DIRECTIONS: usize = 4;

/// Parameters of direction `k` under `prefix`:
/// `x_proj.k.weight [d_inner, dt_rank + 2N]`, `dt_proj.k.{weight [dt_rank, d_inner], bias [d_inner]}`,
/// `a_log.k [d_inner, N]`, `d.k [d_inner]`.
pub fn init_ssm(store: &mut ParamStore, prefix: &str, dims: SsmDims, rng: &mut Rng) {
    let SsmDims { d_inner, d_state, dt_rank } = dims;
    for k in 0..SCAN_DIRECTIONS {
        nn::insert_uniform(
            store,
            join(prefix, &format!("x_proj.{k}.weight")),
            &[d_inner, dt_rank + 2 * d_state],
            1.0 / (d_inner as f64).sqrt(),
            rng,
        );
        nn::insert_uniform(
            store,
            join(prefix, &format!("dt_proj.{k}.weight")),
            &[dt_rank, d_inner],
            1.0 / (dt_rank as f64).sqrt(),
            rng,
        );
        // softplus(bias) is log-uniform in [1e-3, 1e-1]
        let bias = (0..d_inner)
            .map(|_| {
                let dt = (rng::uniform(rng, (1e-3f64).ln(), (1e-1f64).ln())).exp().max(1e-4);
                dt + (-(-dt).exp_m1()).ln()
            })
            .collect();
        store.insert(join(prefix, &format!("dt_proj.{k}.bias")), ParamValue::new(&[d_inner], bias));
        let a_log = (0..d_inner)
            .flat_map(|_| (1..=d_state).map(|s| (s as f64).ln()))
            .collect();
        store.insert(join(prefix, &format!("a_log.{k}")), ParamValue::new(&[d_inner, d_state], a_log));
        nn::insert_const(store, join(prefix, &format!("d.{k}")), &[d_inner], 1.0);
    }
}

/// One direction's scan over a token sequence `u: [L, d_inner]`.
pub fn selective_scan(p: &Bindings, prefix: &str, k: usize, dims: SsmDims, u: &Tensor) -> Result<Tensor> {
    let SsmDims { d_state, dt_rank, .. } = dims;
    let xdbl = u.linear(p.get(&join(prefix, &format!("x_proj.{k}.weight")))?, None)?;
    let parts = xdbl.split(1, &[dt_rank, d_state, d_state])?;
    let delta = parts[0]
        .linear(
            p.get(&join(prefix, &format!("dt_proj.{k}.weight")))?,
            Some(p.get(&join(prefix, &format!("dt_proj.{k}.bias")))?),
        )?
        .softplus()?;
    let a = p.get(&join(prefix, &format!("a_log.{k}")))?.exp()?.neg()?;
    scan_core(u, &delta, &a, &parts[1], &parts[2], p.get(&join(prefix, &format!("d.{k}")))?)
}

/// Flatten `x: [h, w, c]` in scan order `k` to `[h*w, c]`.
pub fn scan_order(x: &Tensor, k: usize) -> Result<Tensor> {
    let [h, w, c] = x.dims3("ss2d")?;
    let seq = match k {
        0 | 1 => x.reshape(&[h * w, c])?,
        2 | 3 => x.permute(&[1, 0, 2])?.reshape(&[h * w, c])?,
        _ => return Err(Error::shape("ss2d", format!("no scan order {k}"))),
    };
    if k % 2 == 1 {
        seq.flip(0)
    } else {
        Ok(seq)
    }
}

/// Inverse of [`scan_order`].
pub fn unscan_order(seq: &Tensor, k: usize, h: usize, w: usize) -> Result<Tensor> {
    let c = seq.shape()[1];
    let seq = if k % 2 == 1 { seq.flip(0)? } else { seq.clone() };
    match k {
        0 | 1 => seq.reshape(&[h, w, c]),
        2 | 3 => seq.reshape(&[w, h, c])?.permute(&[1, 0, 2]),
        _ => Err(Error::shape("ss2d", format!("no scan order {k}"))),
    }
}

/// Output of each scan direction, mapped back onto the `[h, w, c]` grid.
pub fn ss2d_directions(p: &Bindings, prefix: &str, dims: SsmDims, x: &Tensor) -> Result<Vec<Tensor>> {
    let [h, w, c] = x.dims3("ss2d")?;
    if c != dims.d_inner {
        return Err(Error::shape("ss2d", format!("{c} channels, scan built for {}", dims.d_inner)));
    }
    (0..SCAN_DIRECTIONS)
        .map(|k| {
            let y = selective_scan(p, prefix, k, dims, &scan_order(x, k)?)?;
            unscan_order(&y, k, h, w)
        })
        .collect()
}

/// Sum of the four directional scans.
pub fn ss2d(p: &Bindings, prefix: &str, dims: SsmDims, x: &Tensor) -> Result<Tensor> {
    let outs = ss2d_directions(p, prefix, dims, x)?;
    outs[1..].iter().try_fold(outs[0].clone(), |acc, y| acc.add(y))
}
