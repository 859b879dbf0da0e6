use super::Tensor;
use crate::error::{Error, Result};

/// `a[m,k] @ b[k,n]`, i-k-j loop order.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            row.iter_mut().zip(brow).for_each(|(o, &bv)| *o += av * bv);
        }
    }
    out
}

/// `a[m,k]^T`-free product `a^T[k,m] @ g[m,n]` giving `[k,n]`.
fn matmul_at_b(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            out[p * n..(p + 1) * n].iter_mut().zip(grow).for_each(|(o, &gv)| *o += av * gv);
        }
    }
    out
}

/// `g[m,n] @ b[k,n]^T` giving `[m,k]`.
fn matmul_a_bt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

impl Tensor {
    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (&[m, k], &[k2, n]) = (self.shape(), other.shape()) else {
            return Err(Error::shape("matmul", format!("{:?} @ {:?}", self.shape(), other.shape())));
        };
        if k != k2 {
            return Err(Error::shape("matmul", format!("{:?} @ {:?}", self.shape(), other.shape())));
        }
        let data = matmul_raw(self.data(), other.data(), m, k, n);
        Tensor::from_op("matmul", vec![m, n], data, vec![self.clone(), other.clone()], move |ctx| {
            let a = ctx.parents[0].data();
            let b = ctx.parents[1].data();
            let ga = ctx.parents[0].requires_grad().then(|| matmul_a_bt(ctx.grad, b, m, k, n));
            let gb = ctx.parents[1].requires_grad().then(|| matmul_at_b(a, ctx.grad, m, k, n));
            vec![ga, gb]
        })
    }

    /// Affine map over the last axis: `x[..., in] @ w[in, out] + b[out]`.
    pub fn linear(&self, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let (&[din, dout], Some(&last)) = (weight.shape(), self.shape().last()) else {
            return Err(Error::shape("linear", format!("weight {:?}", weight.shape())));
        };
        if last != din {
            return Err(Error::shape("linear", format!("input {:?} vs weight {:?}", self.shape(), weight.shape())));
        }
        let rows = self.numel() / din;
        let y = self.reshape(&[rows, din])?.matmul(weight)?;
        let y = match bias {
            Some(b) => y.add_channel(b)?,
            None => y,
        };
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = dout;
        y.reshape(&shape)
    }
}
