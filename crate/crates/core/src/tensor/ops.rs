//! Elementwise arithmetic, activations, reductions and index-shuffling ops.

use super::{numel, strides, Tensor};
use crate::error::{Error, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl Tensor {
    fn unary<F, G>(&self, op: &'static str, f: F, df: G) -> Result<Tensor>
    where
        F: Fn(f64) -> f64,
        G: Fn(f64, f64) -> f64 + 'static,
    {
        let data = self.data().iter().map(|&v| f(v)).collect();
        Tensor::from_op(op, self.shape().to_vec(), data, vec![self.clone()], move |ctx| {
            let x = ctx.parents[0].data();
            let g = ctx
                .grad
                .iter()
                .zip(x)
                .zip(ctx.out)
                .map(|((g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(g)]
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Tensor::from_op("add", self.shape().to_vec(), data, vec![self.clone(), other.clone()], |ctx| {
            vec![Some(ctx.grad.to_vec()), Some(ctx.grad.to_vec())]
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Tensor::from_op("sub", self.shape().to_vec(), data, vec![self.clone(), other.clone()], |ctx| {
            vec![Some(ctx.grad.to_vec()), Some(ctx.grad.iter().map(|g| -g).collect())]
        })
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        Tensor::from_op("mul", self.shape().to_vec(), data, vec![self.clone(), other.clone()], |ctx| {
            let a = ctx.parents[0].data();
            let b = ctx.parents[1].data();
            let ga = ctx.grad.iter().zip(b).map(|(g, b)| g * b).collect();
            let gb = ctx.grad.iter().zip(a).map(|(g, a)| g * a).collect();
            vec![Some(ga), Some(gb)]
        })
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("div", self, other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a / b).collect();
        Tensor::from_op("div", self.shape().to_vec(), data, vec![self.clone(), other.clone()], |ctx| {
            let b = ctx.parents[1].data();
            let ga = ctx.grad.iter().zip(b).map(|(g, b)| g / b).collect();
            let gb = ctx.grad.iter().zip(ctx.out).zip(b).map(|((g, y), b)| -g * y / b).collect();
            vec![Some(ga), Some(gb)]
        })
    }

    pub fn scale(&self, s: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v * s).collect();
        Tensor::from_op("scale", self.shape().to_vec(), data, vec![self.clone()], move |ctx| {
            vec![Some(ctx.grad.iter().map(|g| g * s).collect())]
        })
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v + s).collect();
        Tensor::from_op("add_scalar", self.shape().to_vec(), data, vec![self.clone()], |ctx| {
            vec![Some(ctx.grad.to_vec())]
        })
    }

    /// `self + bias` with `bias` broadcast over every leading index of the last axis.
    pub fn add_channel(&self, bias: &Tensor) -> Result<Tensor> {
        let c = *self.shape().last().unwrap();
        if bias.shape() != [c] {
            return Err(Error::shape("add_channel", format!("bias {:?} for {c} channels", bias.shape())));
        }
        let b = bias.data();
        let data = self
            .data()
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(b).map(|(x, b)| x + b))
            .collect();
        Tensor::from_op("add_channel", self.shape().to_vec(), data, vec![self.clone(), bias.clone()], move |ctx| {
            let mut gb = vec![0.0; c];
            for row in ctx.grad.chunks_exact(c) {
                gb.iter_mut().zip(row).for_each(|(a, g)| *a += g);
            }
            vec![Some(ctx.grad.to_vec()), Some(gb)]
        })
    }

    /// `self * scale` with `scale` broadcast along the last axis.
    pub fn mul_channel(&self, scale: &Tensor) -> Result<Tensor> {
        let c = *self.shape().last().unwrap();
        if scale.shape() != [c] {
            return Err(Error::shape("mul_channel", format!("scale {:?} for {c} channels", scale.shape())));
        }
        let s = scale.data();
        let data = self
            .data()
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(s).map(|(x, s)| x * s))
            .collect();
        Tensor::from_op("mul_channel", self.shape().to_vec(), data, vec![self.clone(), scale.clone()], move |ctx| {
            let x = ctx.parents[0].data();
            let s = ctx.parents[1].data();
            let mut gs = vec![0.0; c];
            let mut gx = Vec::with_capacity(x.len());
            for (grow, xrow) in ctx.grad.chunks_exact(c).zip(x.chunks_exact(c)) {
                for j in 0..c {
                    gs[j] += grow[j] * xrow[j];
                    gx.push(grow[j] * s[j]);
                }
            }
            vec![Some(gx), Some(gs)]
        })
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.scale(-1.0)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn silu(&self) -> Result<Tensor> {
        self.unary(
            "silu",
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Result<Tensor> {
        self.unary(
            "gelu",
            |x| 0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh()),
            |x, _| {
                let inner = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
                let t = inner.tanh();
                let dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            },
        )
    }

    pub fn softplus(&self) -> Result<Tensor> {
        self.unary("softplus", softplus, |x, _| sigmoid(x))
    }

    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op("sum", vec![1], vec![s], vec![self.clone()], move |ctx| {
            vec![Some(vec![ctx.grad[0]; n])]
        })
        .expect("sum of finite values overflowed")
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel() as f64;
        self.sum().scale(1.0 / n).expect("finite")
    }

    pub fn sum_sq(&self) -> Tensor {
        let s: f64 = self.data().iter().map(|v| v * v).sum();
        Tensor::from_op("sum_sq", vec![1], vec![s], vec![self.clone()], |ctx| {
            let g = ctx.grad[0];
            vec![Some(ctx.parents[0].data().iter().map(|x| 2.0 * g * x).collect())]
        })
        .expect("sum of squares overflowed")
    }

    /// Sum over every axis except the last, giving shape `[C]`.
    pub fn sum_to_channels(&self) -> Result<Tensor> {
        let c = *self.shape().last().unwrap();
        let mut acc = vec![0.0; c];
        for row in self.data().chunks_exact(c) {
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        let n = self.numel();
        Tensor::from_op("sum_to_channels", vec![c], acc, vec![self.clone()], move |ctx| {
            let g: Vec<f64> = (0..n).map(|i| ctx.grad[i % c]).collect();
            vec![Some(g)]
        })
    }

    /// Log-softmax over the last axis using log-sum-exp.
    pub fn log_softmax(&self) -> Result<Tensor> {
        let c = *self.shape().last().unwrap();
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks_exact(c) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|v| v - lse));
        }
        Tensor::from_op("log_softmax", self.shape().to_vec(), data, vec![self.clone()], move |ctx| {
            let mut g = Vec::with_capacity(ctx.grad.len());
            for (grow, yrow) in ctx.grad.chunks_exact(c).zip(ctx.out.chunks_exact(c)) {
                let gs: f64 = grow.iter().sum();
                g.extend(grow.iter().zip(yrow).map(|(g, y)| g - y.exp() * gs));
            }
            vec![Some(g)]
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(Error::shape("reshape", format!("{:?} -> {shape:?}", self.shape())));
        }
        Tensor::from_op("reshape", shape.to_vec(), self.to_vec(), vec![self.clone()], |ctx| {
            vec![Some(ctx.grad.to_vec())]
        })
    }

    /// Output element `i` is input element `index[i]`; backward scatter-adds.
    pub(crate) fn gather(&self, op: &'static str, shape: Vec<usize>, index: Vec<usize>) -> Result<Tensor> {
        debug_assert_eq!(numel(&shape), index.len());
        let src = self.data();
        let data = index.iter().map(|&i| src[i]).collect();
        let n = self.numel();
        Tensor::from_op(op, shape, data, vec![self.clone()], move |ctx| {
            let mut g = vec![0.0; n];
            for (&i, &gv) in index.iter().zip(ctx.grad) {
                g[i] += gv;
            }
            vec![Some(g)]
        })
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let r = self.rank();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..r).collect::<Vec<_>>() {
            return Err(Error::axis("permute", format!("{perm:?} is not a permutation of 0..{r}")));
        }
        let in_strides = strides(self.shape());
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape()[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let index = strided_index(&out_shape, &src_strides, 0);
        self.gather("permute", out_shape, index)
    }

    /// Reverse the order of elements along `axis`.
    pub fn flip(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::axis("flip", format!("axis {axis} for rank {}", self.rank())));
        }
        let shape = self.shape().to_vec();
        let st = strides(&shape);
        let n = shape[axis];
        let index = (0..self.numel())
            .map(|i| {
                let k = (i / st[axis]) % n;
                i - k * st[axis] + (n - 1 - k) * st[axis]
            })
            .collect();
        self.gather("flip", shape, index)
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::axis("narrow", format!("axis {axis} for rank {}", self.rank())));
        }
        if len == 0 || start + len > self.shape()[axis] {
            return Err(Error::shape(
                "narrow",
                format!("[{start}, {}) outside extent {}", start + len, self.shape()[axis]),
            ));
        }
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = len;
        let st = strides(self.shape());
        let index = strided_index(&out_shape, &st, start * st[axis]);
        self.gather("narrow", out_shape, index)
    }

    /// Split along `axis` into consecutive pieces of the given sizes.
    pub fn split(&self, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor>> {
        if axis >= self.rank() {
            return Err(Error::axis("split", format!("axis {axis} for rank {}", self.rank())));
        }
        if sizes.iter().sum::<usize>() != self.shape()[axis] {
            return Err(Error::shape("split", format!("{sizes:?} do not sum to {}", self.shape()[axis])));
        }
        let mut start = 0;
        sizes
            .iter()
            .map(|&s| {
                let t = self.narrow(axis, start, s);
                start += s;
                t
            })
            .collect()
    }

    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::axis("concat", format!("axis {axis} for rank {rank}")));
        }
        for p in parts {
            let ok = p.rank() == rank
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", format!("{:?} vs {:?}", p.shape(), first.shape())));
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let blocks: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
        let total: usize = blocks.iter().sum();
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = total / inner;

        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (p, &b) in parts.iter().zip(&blocks) {
                data.extend_from_slice(&p.data()[o * b..(o + 1) * b]);
            }
        }
        Tensor::from_op("concat", out_shape, data, parts.to_vec(), move |ctx| {
            let mut grads: Vec<Vec<f64>> = blocks.iter().map(|b| Vec::with_capacity(b * outer)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (g, &b) in grads.iter_mut().zip(&blocks) {
                    g.extend_from_slice(&ctx.grad[off..off + b]);
                    off += b;
                }
            }
            grads.into_iter().map(Some).collect()
        })
    }

    /// Nearest-neighbour upsampling of an `[H, W, C]` map by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Result<Tensor> {
        let [h, w, c] = self.dims3("upsample_nearest")?;
        if factor == 0 {
            return Err(Error::shape("upsample_nearest", "factor 0"));
        }
        let (oh, ow) = (h * factor, w * factor);
        let mut index = Vec::with_capacity(oh * ow * c);
        for i in 0..oh {
            for j in 0..ow {
                let base = ((i / factor) * w + j / factor) * c;
                index.extend(base..base + c);
            }
        }
        self.gather("upsample_nearest", vec![oh, ow, c], index)
    }

    /// Bilinear resize of an `[H, W, C]` map (half-pixel centres, edge clamped).
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Tensor> {
        let [h, w, c] = self.dims3("resize_bilinear")?;
        if out_h == 0 || out_w == 0 {
            return Err(Error::shape("resize_bilinear", "zero output extent"));
        }
        let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
            (0..n_out)
                .map(|o| {
                    let src = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
                    let i0 = (src.floor() as usize).min(n_in - 1);
                    let i1 = (i0 + 1).min(n_in - 1);
                    (i0, i1, src - i0 as f64)
                })
                .collect()
        };
        let ty = taps(h, out_h);
        let tx = taps(w, out_w);
        let x = self.data();
        let mut data = vec![0.0; out_h * out_w * c];
        for (oi, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (oj, &(x0, x1, fx)) in tx.iter().enumerate() {
                let o = (oi * out_w + oj) * c;
                for ch in 0..c {
                    let v = |yy: usize, xx: usize| x[(yy * w + xx) * c + ch];
                    data[o + ch] = (1.0 - fy) * ((1.0 - fx) * v(y0, x0) + fx * v(y0, x1))
                        + fy * ((1.0 - fx) * v(y1, x0) + fx * v(y1, x1));
                }
            }
        }
        Tensor::from_op("resize_bilinear", vec![out_h, out_w, c], data, vec![self.clone()], move |ctx| {
            let mut g = vec![0.0; h * w * c];
            for (oi, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (oj, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let o = (oi * out_w + oj) * c;
                    for ch in 0..c {
                        let gv = ctx.grad[o + ch];
                        g[(y0 * w + x0) * c + ch] += gv * (1.0 - fy) * (1.0 - fx);
                        g[(y0 * w + x1) * c + ch] += gv * (1.0 - fy) * fx;
                        g[(y1 * w + x0) * c + ch] += gv * fy * (1.0 - fx);
                        g[(y1 * w + x1) * c + ch] += gv * fy * fx;
                    }
                }
            }
            vec![Some(g)]
        })
    }

    pub(crate) fn dims3(&self, op: &'static str) -> Result<[usize; 3]> {
        match *self.shape() {
            [a, b, c] => Ok([a, b, c]),
            _ => Err(Error::shape(op, format!("expected rank 3, got {:?}", self.shape()))),
        }
    }
}

/// Flat source offsets for walking `shape` with the given source strides.
fn strided_index(shape: &[usize], src_strides: &[usize], base: usize) -> Vec<usize> {
    let n = numel(shape);
    let mut out = Vec::with_capacity(n);
    let mut counter = vec![0usize; shape.len()];
    let mut off = base;
    for _ in 0..n {
        out.push(off);
        for ax in (0..shape.len()).rev() {
            counter[ax] += 1;
            off += src_strides[ax];
            if counter[ax] < shape[ax] {
                break;
            }
            off -= src_strides[ax] * shape[ax];
            counter[ax] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    fn t(shape: &[usize], seed: u64) -> Tensor {
        let n = numel(shape);
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let data = (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect();
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn permute_matches_index_arithmetic() {
        let x = t(&[2, 3, 4], 1);
        let y = x.permute(&[2, 0, 1]).unwrap();
        assert_eq!(y.shape(), &[4, 2, 3]);
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    assert_eq!(y.data()[(c * 2 + a) * 3 + b], x.data()[(a * 3 + b) * 4 + c]);
                }
            }
        }
    }

    #[test]
    fn split_concat_identity() {
        let x = t(&[3, 2, 8], 2);
        let parts = x.split(2, &[2, 2, 4]).unwrap();
        let back = Tensor::concat(&parts, 2).unwrap();
        assert_eq!(back.data(), x.data());
        assert!(x.split(2, &[3, 3]).is_err());
    }

    #[test]
    fn flip_twice_is_identity() {
        let x = t(&[3, 5], 3);
        assert_eq!(x.flip(1).unwrap().flip(1).unwrap().data(), x.data());
        assert_eq!(x.flip(0).unwrap().data()[0], x.data()[10]);
    }

    #[test]
    fn log_softmax_rows_normalise() {
        let x = t(&[4, 3], 4);
        let y = x.log_softmax().unwrap();
        for row in y.data().chunks(3) {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn div_gradients() {
        let b = t(&[2, 3], 7).add_scalar(3.0).unwrap();
        let x = t(&[2, 3], 6);
        let e = grad_check(|x| Ok(x.div(&b)?.sum_sq()), &x, 1e-6).unwrap();
        assert!(e < 1e-6, "{e}");
        let e = grad_check(|d| Ok(b.div(&d.add_scalar(3.0)?)?.sum_sq()), &x, 1e-6).unwrap();
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn bilinear_identity_when_same_size() {
        let x = t(&[3, 4, 2], 5);
        let y = x.resize_bilinear(3, 4).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn primitive_gradients() {
        type F = Box<dyn Fn(&Tensor) -> crate::Result<Tensor>>;
        let other = t(&[2, 3, 4], 99);
        let bias = t(&[4], 98);
        let cases: Vec<(&str, Vec<usize>, F)> = vec![
            ("sum", vec![2, 3], Box::new(|x: &Tensor| Ok(x.sum()))),
            ("silu", vec![2, 3], Box::new(|x: &Tensor| Ok(x.silu()?.sum()))),
            ("gelu", vec![2, 3], Box::new(|x: &Tensor| Ok(x.gelu()?.sum_sq()))),
            ("softplus", vec![5], Box::new(|x: &Tensor| Ok(x.softplus()?.sum_sq()))),
            ("exp", vec![5], Box::new(|x: &Tensor| Ok(x.exp()?.sum()))),
            ("mul", vec![2, 3, 4], {
                let o = other.clone();
                Box::new(move |x: &Tensor| Ok(x.mul(&o)?.mul(x)?.sum()))
            }),
            ("sub", vec![2, 3, 4], {
                let o = other.clone();
                Box::new(move |x: &Tensor| Ok(o.sub(x)?.sum_sq()))
            }),
            ("add_channel", vec![2, 3, 4], {
                let b = bias.clone();
                Box::new(move |x: &Tensor| Ok(x.add_channel(&b)?.sum_sq()))
            }),
            ("mul_channel", vec![4], {
                let o = other.clone();
                Box::new(move |s: &Tensor| Ok(o.mul_channel(s)?.sum_sq()))
            }),
            ("log_softmax", vec![3, 4], Box::new(|x: &Tensor| Ok(x.log_softmax()?.narrow(1, 1, 1)?.sum_sq()))),
            ("permute", vec![2, 3, 4], {
                let o = other.permute(&[1, 2, 0]).unwrap();
                Box::new(move |x: &Tensor| Ok(x.permute(&[1, 2, 0])?.mul(&o)?.sum()))
            }),
            ("flip", vec![2, 3, 4], {
                let o = other.clone();
                Box::new(move |x: &Tensor| Ok(x.flip(1)?.mul(&o)?.sum()))
            }),
            ("concat", vec![2, 3, 4], Box::new(|x: &Tensor| {
                let y = Tensor::concat(&[x.clone(), x.silu()?], 1)?;
                Ok(y.sum_sq())
            })),
            ("split", vec![2, 3, 4], Box::new(|x: &Tensor| {
                let p = x.split(2, &[1, 3])?;
                Ok(p[0].sum_sq().add(&p[1].sum())?)
            })),
            ("reshape", vec![2, 3, 4], {
                let o = other.reshape(&[6, 4]).unwrap();
                Box::new(move |x: &Tensor| Ok(x.reshape(&[6, 4])?.mul(&o)?.sum_sq()))
            }),
            ("sum_to_channels", vec![2, 3, 4], Box::new(|x: &Tensor| Ok(x.sum_to_channels()?.sum_sq()))),
            ("upsample_nearest", vec![2, 3, 2], Box::new(|x: &Tensor| Ok(x.upsample_nearest(2)?.sum_sq()))),
            ("resize_bilinear", vec![3, 3, 2], Box::new(|x: &Tensor| Ok(x.resize_bilinear(5, 4)?.sum_sq()))),
        ];
        for (i, (name, shape, f)) in cases.into_iter().enumerate() {
            let x = t(&shape, 10 + i as u64);
            let err = grad_check(|x: &Tensor| f(x), &x, 1e-5).unwrap();
            assert!(err < 1e-6, "{name}: {err:e}");
        }
    }
}
