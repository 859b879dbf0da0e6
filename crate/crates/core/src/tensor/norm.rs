use super::Tensor;
use crate::error::{Error, Result};

/// Standardize `values` in place, returning `1/sqrt(var + eps)`.
fn standardize(values: &mut [f64], eps: f64) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    values.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    inv
}

/// Gradient of standardization for one set: `inv * (g - mean(g) - y*mean(g*y))`.
fn standardize_grad(g: &[f64], y: &[f64], inv: f64, out: &mut [f64]) {
    let n = g.len() as f64;
    let mg = g.iter().sum::<f64>() / n;
    let mgy = g.iter().zip(y).map(|(g, y)| g * y).sum::<f64>() / n;
    for ((o, g), y) in out.iter_mut().zip(g).zip(y) {
        *o = inv * (g - mg - y * mgy);
    }
}

impl Tensor {
    /// Zero-mean, unit-variance per channel group, statistics pooled over all
    /// leading positions. No affine.
    pub fn group_standardize(&self, groups: usize, eps: f64) -> Result<Tensor> {
        let c = *self.shape().last().unwrap();
        if groups == 0 || c % groups != 0 {
            return Err(Error::shape("group_norm", format!("{c} channels not divisible into {groups} groups")));
        }
        if eps <= 0.0 {
            return Err(Error::shape("group_norm", "eps must be positive"));
        }
        let cg = c / groups;
        let rows = self.numel() / c;
        let gather = move |src: &[f64], grp: usize| -> Vec<f64> {
            let mut v = Vec::with_capacity(rows * cg);
            for r in 0..rows {
                v.extend_from_slice(&src[r * c + grp * cg..r * c + (grp + 1) * cg]);
            }
            v
        };
        let scatter = move |dst: &mut [f64], grp: usize, v: &[f64]| {
            for r in 0..rows {
                dst[r * c + grp * cg..r * c + (grp + 1) * cg].copy_from_slice(&v[r * cg..(r + 1) * cg]);
            }
        };

        let mut out = vec![0.0; self.numel()];
        let mut invs = Vec::with_capacity(groups);
        for grp in 0..groups {
            let mut v = gather(self.data(), grp);
            invs.push(standardize(&mut v, eps));
            scatter(&mut out, grp, &v);
        }
        Tensor::from_op("group_norm", self.shape().to_vec(), out, vec![self.clone()], move |ctx| {
            let mut gx = vec![0.0; ctx.grad.len()];
            let mut buf = vec![0.0; rows * cg];
            for (grp, &inv) in invs.iter().enumerate() {
                let g = gather(ctx.grad, grp);
                let y = gather(ctx.out, grp);
                standardize_grad(&g, &y, inv, &mut buf);
                scatter(&mut gx, grp, &buf);
            }
            vec![Some(gx)]
        })
    }

    /// Group normalization over the last (channel) axis with per-channel affine.
    pub fn group_norm(&self, groups: usize, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        self.group_standardize(groups, eps)?.mul_channel(gamma)?.add_channel(beta)
    }

    /// Layer normalization of each position's channel vector, with affine.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let c = *self.shape().last().unwrap();
        let mut out = self.to_vec();
        let invs: Vec<f64> = out.chunks_exact_mut(c).map(|row| standardize(row, eps)).collect();
        let y = Tensor::from_op("layer_norm", self.shape().to_vec(), out, vec![self.clone()], move |ctx| {
            let mut gx = vec![0.0; ctx.grad.len()];
            for (((o, g), y), &inv) in gx
                .chunks_exact_mut(c)
                .zip(ctx.grad.chunks_exact(c))
                .zip(ctx.out.chunks_exact(c))
                .zip(&invs)
            {
                standardize_grad(g, y, inv, o);
            }
            vec![Some(gx)]
        })?;
        y.mul_channel(gamma)?.add_channel(beta)
    }
}
