//! Spatial convolutions over channel-last `[H, W, C]` maps.

use super::Tensor;
use crate::error::{Error, Result};

impl Tensor {
    /// Dense 2D convolution. `kernel` is `[kh, kw, c_in, c_out]`; zero padding.
    pub fn conv2d(&self, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
        let [h, w, cin] = self.dims3("conv2d")?;
        let &[kh, kw, kcin, cout] = kernel.shape() else {
            return Err(Error::shape("conv2d", format!("kernel {:?}", kernel.shape())));
        };
        if kcin != cin {
            return Err(Error::shape("conv2d", format!("input has {cin} channels, kernel {kcin}")));
        }
        if stride == 0 || h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape("conv2d", "kernel larger than padded input"));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let src = move |oi: usize, a: usize, n: usize| -> Option<usize> {
            let p = (oi * stride + a) as isize - padding as isize;
            (p >= 0 && (p as usize) < n).then_some(p as usize)
        };

        let x = self.data();
        let k = kernel.data();
        let mut out = vec![0.0; oh * ow * cout];
        for oi in 0..oh {
            for oj in 0..ow {
                let o = &mut out[(oi * ow + oj) * cout..(oi * ow + oj + 1) * cout];
                for a in 0..kh {
                    let Some(yi) = src(oi, a, h) else { continue };
                    for b in 0..kw {
                        let Some(xj) = src(oj, b, w) else { continue };
                        let xin = &x[(yi * w + xj) * cin..(yi * w + xj + 1) * cin];
                        for (ci, &xv) in xin.iter().enumerate() {
                            let krow = &k[((a * kw + b) * cin + ci) * cout..][..cout];
                            o.iter_mut().zip(krow).for_each(|(o, &kv)| *o += xv * kv);
                        }
                    }
                }
            }
        }

        Tensor::from_op("conv2d", vec![oh, ow, cout], out, vec![self.clone(), kernel.clone()], move |ctx| {
            let x = ctx.parents[0].data();
            let k = ctx.parents[1].data();
            let mut gx = vec![0.0; x.len()];
            let mut gk = vec![0.0; k.len()];
            for oi in 0..oh {
                for oj in 0..ow {
                    let g = &ctx.grad[(oi * ow + oj) * cout..(oi * ow + oj + 1) * cout];
                    for a in 0..kh {
                        let Some(yi) = src(oi, a, h) else { continue };
                        for b in 0..kw {
                            let Some(xj) = src(oj, b, w) else { continue };
                            let base = (yi * w + xj) * cin;
                            for ci in 0..cin {
                                let kidx = ((a * kw + b) * cin + ci) * cout;
                                let xv = x[base + ci];
                                let mut acc = 0.0;
                                for co in 0..cout {
                                    acc += g[co] * k[kidx + co];
                                    gk[kidx + co] += g[co] * xv;
                                }
                                gx[base + ci] += acc;
                            }
                        }
                    }
                }
            }
            vec![Some(gx), Some(gk)]
        })
    }

    /// Per-channel convolution with `kernel[kh, kw, C]`, zero "same" padding.
    pub fn depthwise_conv2d(&self, kernel: &Tensor) -> Result<Tensor> {
        let [h, w, c] = self.dims3("depthwise_conv2d")?;
        let &[kh, kw, kc] = kernel.shape() else {
            return Err(Error::shape("depthwise_conv2d", format!("kernel {:?}", kernel.shape())));
        };
        if kc != c {
            return Err(Error::shape("depthwise_conv2d", format!("input has {c} channels, kernel {kc}")));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::shape("depthwise_conv2d", format!("kernel extents {kh}x{kw} must be odd")));
        }
        let (ph, pw) = (kh / 2, kw / 2);
        // (output row, kernel row) -> input row, skipping padding
        let taps = move |o: usize, a: usize, p: usize, n: usize| -> Option<usize> {
            let s = (o + a) as isize - p as isize;
            (s >= 0 && (s as usize) < n).then_some(s as usize)
        };

        let x = self.data();
        let k = kernel.data();
        let mut out = vec![0.0; h * w * c];
        for i in 0..h {
            for j in 0..w {
                let o = &mut out[(i * w + j) * c..(i * w + j + 1) * c];
                for a in 0..kh {
                    let Some(si) = taps(i, a, ph, h) else { continue };
                    for b in 0..kw {
                        let Some(sj) = taps(j, b, pw, w) else { continue };
                        let xin = &x[(si * w + sj) * c..(si * w + sj + 1) * c];
                        let kr = &k[(a * kw + b) * c..(a * kw + b + 1) * c];
                        for ((o, &xv), &kv) in o.iter_mut().zip(xin).zip(kr) {
                            *o += xv * kv;
                        }
                    }
                }
            }
        }

        Tensor::from_op("depthwise_conv2d", vec![h, w, c], out, vec![self.clone(), kernel.clone()], move |ctx| {
            let x = ctx.parents[0].data();
            let k = ctx.parents[1].data();
            let mut gx = vec![0.0; x.len()];
            let mut gk = vec![0.0; k.len()];
            for i in 0..h {
                for j in 0..w {
                    let g = &ctx.grad[(i * w + j) * c..(i * w + j + 1) * c];
                    for a in 0..kh {
                        let Some(si) = taps(i, a, ph, h) else { continue };
                        for b in 0..kw {
                            let Some(sj) = taps(j, b, pw, w) else { continue };
                            let xb = (si * w + sj) * c;
                            let kb = (a * kw + b) * c;
                            for ch in 0..c {
                                gx[xb + ch] += g[ch] * k[kb + ch];
                                gk[kb + ch] += g[ch] * x[xb + ch];
                            }
                        }
                    }
                }
            }
            vec![Some(gx), Some(gk)]
        })
    }
}
