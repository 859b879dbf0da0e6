//! Multi-Frequency Enhancement on skip connections.
//!
//! The skip map is group-normalized and split into four channel blocks. The
//! first three are filtered in the frequency domain over three different
//! axis pairs, `(H, W)`, `(C, W)` and `(C, H)`, each with its own learnable
//! complex weight; the fourth goes through a 3x3 depthwise convolution. The
//! blocks are concatenated and added to the input, then a normalized
//! pointwise feed-forward layer is applied with a second residual.

use crate::error::{Error, Result};
use crate::nn::{self, join, LinearInit};
use crate::rng::{self, Rng};
use crate::tensor::{dft2, idft2, Bindings, ComplexTensor, ParamStore, ParamValue, Tensor};

pub const MFE_GROUPS: usize = 4;

/// Axis pair a frequency branch transforms over, for a `[H, W, C]` map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    HW,
    CW,
    CH,
}

impl View {
    pub fn axes(self) -> (usize, usize) {
        match self {
            View::HW => (0, 1),
            View::CW => (2, 1),
            View::CH => (2, 0),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            View::HW => "w_hw",
            View::CW => "w_cw",
            View::CH => "w_ch",
        }
    }
}

const VIEWS: [View; 3] = [View::HW, View::CW, View::CH];

/// Four contiguous channel blocks.
pub fn mfe_split(x: &Tensor) -> Result<[Tensor; 4]> {
    let [_, _, c] = x.dims3("mfe_split")?;
    if c % 4 != 0 {
        return Err(Error::shape("mfe_split", format!("{c} channels not divisible by 4")));
    }
    let parts = x.split(2, &[c / 4; 4])?;
    Ok(parts.try_into().unwrap())
}

/// `idft2(dft2(xi) * w)` over the view's axes, real part.
pub fn freq_filter_branch(xi: &Tensor, w: &ComplexTensor, view: View) -> Result<Tensor> {
    if w.shape() != xi.shape() {
        return Err(Error::shape(
            "freq_filter_branch",
            format!("weight {:?} does not match spectrum {:?}", w.shape(), xi.shape()),
        ));
    }
    let s = dft2(xi, view.axes())?;
    idft2(&s.mul(w)?, view.axes())
}

pub fn local_branch(x4: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    if kernel.shape().len() != 3 || kernel.shape()[..2] != [3, 3] {
        return Err(Error::shape("local_branch", format!("kernel {:?} is not 3x3", kernel.shape())));
    }
    x4.depthwise_conv2d(kernel)
}

/// `concat(branches) + x`.
pub fn mfe_fuse(branches: &[Tensor; 4], x: &Tensor) -> Result<Tensor> {
    let z = Tensor::concat(branches, 2)?;
    if z.shape() != x.shape() {
        return Err(Error::shape("mfe_fuse", format!("{:?} vs {:?}", z.shape(), x.shape())));
    }
    z.add(x)
}

/// How the module starts out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MfeInit {
    /// Std of the noise added to the identity depthwise kernel.
    pub dw_noise_std: f64,
}

impl MfeInit {
    pub const EXACT_IDENTITY: MfeInit = MfeInit { dw_noise_std: 0.0 };
}

impl Default for MfeInit {
    fn default() -> Self {
        MfeInit { dw_noise_std: 1e-3 }
    }
}

/// Shape information for one MFE instance; weights live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mfe {
    pub prefix: String,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub ffn_ratio: usize,
}

impl Mfe {
    pub fn new(prefix: impl Into<String>, h: usize, w: usize, c: usize, ffn_ratio: usize) -> Result<Self> {
        if c % 4 != 0 || c % MFE_GROUPS != 0 {
            return Err(Error::Config(format!("MFE needs channels divisible by 4, got {c}")));
        }
        if h == 0 || w == 0 || ffn_ratio == 0 {
            return Err(Error::Config("MFE extents must be positive".into()));
        }
        Ok(Mfe {
            prefix: prefix.into(),
            h,
            w,
            c,
            ffn_ratio,
        })
    }

    fn name(&self, leaf: &str) -> String {
        join(&self.prefix, leaf)
    }

    pub fn init(&self, store: &mut ParamStore, init: MfeInit, rng: &mut Rng) {
        let q = self.c / 4;
        nn::init_norm(store, &self.name("norm1"), self.c);
        for view in VIEWS {
            nn::insert_const(store, self.name(&format!("{}.re", view.tag())), &[self.h, self.w, q], 1.0);
            nn::insert_const(store, self.name(&format!("{}.im", view.tag())), &[self.h, self.w, q], 0.0);
        }
        let mut kernel = vec![0.0; 9 * q];
        for (i, k) in kernel.iter_mut().enumerate() {
            let centre = if i / q == 4 { 1.0 } else { 0.0 };
            *k = centre + init.dw_noise_std * rng::normal(rng);
        }
        store.insert(self.name("dw.kernel"), ParamValue::new(&[3, 3, q], kernel));
        nn::init_norm(store, &self.name("norm2"), self.c);
        let hidden = self.ffn_ratio * self.c;
        nn::init_linear(store, &self.name("ffn.fc1"), self.c, hidden, true, LinearInit::Normal(0.02), rng);
        nn::init_linear(store, &self.name("ffn.fc2"), hidden, self.c, true, LinearInit::Zero, rng);
    }

    pub fn weight(&self, p: &Bindings, view: View) -> Result<ComplexTensor> {
        ComplexTensor::new(
            p.get(&self.name(&format!("{}.re", view.tag())))?.clone(),
            p.get(&self.name(&format!("{}.im", view.tag())))?.clone(),
        )
    }

    /// Branch outputs concatenated and added to the input, before the FFN.
    pub fn fused(&self, p: &Bindings, x: &Tensor) -> Result<Tensor> {
        let shape = [self.h, self.w, self.c];
        if x.shape() != shape {
            return Err(Error::shape("mfe", format!("input {:?}, module built for {shape:?}", x.shape())));
        }
        let normed = nn::group_norm(p, &self.name("norm1"), x, MFE_GROUPS)?;
        let [x1, x2, x3, x4] = mfe_split(&normed)?;
        let branches = [
            freq_filter_branch(&x1, &self.weight(p, View::HW)?, View::HW)?,
            freq_filter_branch(&x2, &self.weight(p, View::CW)?, View::CW)?,
            freq_filter_branch(&x3, &self.weight(p, View::CH)?, View::CH)?,
            local_branch(&x4, p.get(&self.name("dw.kernel"))?)?,
        ];
        mfe_fuse(&branches, x)
    }

    pub fn forward(&self, p: &Bindings, x: &Tensor) -> Result<Tensor> {
        let z = self.fused(p, x)?;
        let n = nn::group_norm(p, &self.name("norm2"), &z, MFE_GROUPS)?;
        let hdn = nn::linear(p, &self.name("ffn.fc1"), &n, true)?.gelu()?;
        nn::linear(p, &self.name("ffn.fc2"), &hdn, true)?.add(&z)
    }
}

pub fn mfe_forward(x: &Tensor, p: &Bindings, module: &Mfe) -> Result<Tensor> {
    module.forward(p, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    fn rand(shape: &[usize], seed: u64, scale: f64) -> Tensor {
        let mut r = rng::seeded(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| scale * rng::normal(&mut r)).collect()).unwrap()
    }

    fn module(init: MfeInit) -> (Mfe, ParamStore) {
        let m = Mfe::new("mfe.0", 4, 4, 8, 4).unwrap();
        let mut s = ParamStore::new();
        m.init(&mut s, init, &mut rng::seeded(5));
        (m, s)
    }

    #[test]
    fn split_sizes_and_inverse() {
        let x = rand(&[3, 3, 64], 1, 1.0);
        let parts = mfe_split(&x).unwrap();
        assert!(parts.iter().all(|p| p.shape() == [3, 3, 16]));
        assert_eq!(Tensor::concat(&parts, 2).unwrap().data(), x.data());
        assert!(mfe_split(&rand(&[2, 2, 6], 1, 1.0)).is_err());
    }

    #[test]
    fn unit_and_zero_filters() {
        let x = rand(&[4, 5, 3], 2, 1.0);
        for view in VIEWS {
            let y = freq_filter_branch(&x, &ComplexTensor::full(&[4, 5, 3], 1.0, 0.0), view).unwrap();
            assert!(y.data().iter().zip(x.data()).all(|(a, b)| (a - b).abs() < 1e-8));
            let y = freq_filter_branch(&x, &ComplexTensor::full(&[4, 5, 3], 0.0, 0.0), view).unwrap();
            assert!(y.data().iter().all(|v| *v == 0.0));
        }
        assert!(freq_filter_branch(&x, &ComplexTensor::full(&[4, 5, 2], 1.0, 0.0), View::HW).is_err());
    }

    #[test]
    fn views_are_permuted_hw_branch() {
        let x = rand(&[4, 6, 3], 3, 1.0);
        let w = ComplexTensor::new(rand(&[4, 6, 3], 4, 1.0), rand(&[4, 6, 3], 5, 1.0)).unwrap();
        // (C, W) view: move C to the front, filter over the first two axes
        let perm = [2, 1, 0];
        let a = freq_filter_branch(&x, &w, View::CW).unwrap();
        let wp = ComplexTensor::new(w.re.permute(&perm).unwrap(), w.im.permute(&perm).unwrap()).unwrap();
        let b = freq_filter_branch(&x.permute(&perm).unwrap(), &wp, View::HW)
            .unwrap()
            .permute(&perm)
            .unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| (p - q).abs() < 1e-12));
        // (C, H) view: [C, H, W]
        let perm = [2, 0, 1];
        let inv = [1, 2, 0];
        let a = freq_filter_branch(&x, &w, View::CH).unwrap();
        let wp = ComplexTensor::new(w.re.permute(&perm).unwrap(), w.im.permute(&perm).unwrap()).unwrap();
        let b = freq_filter_branch(&x.permute(&perm).unwrap(), &wp, View::HW)
            .unwrap()
            .permute(&inv)
            .unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn zero_branches_fuse_to_input() {
        let x = rand(&[2, 2, 8], 6, 1.0);
        let zeros = [(); 4].map(|_| Tensor::zeros(&[2, 2, 2]));
        assert_eq!(mfe_fuse(&zeros, &x).unwrap().data(), x.data());
    }

    #[test]
    fn identity_start() {
        let (m, s) = module(MfeInit::EXACT_IDENTITY);
        let p = s.bind(false).unwrap();
        let x = rand(&[4, 4, 8], 7, 3.0);
        let y = m.forward(&p, &x).unwrap();
        let norm = x.group_standardize(4, nn::NORM_EPS).unwrap().add(&x).unwrap();
        let err = y.data().iter().zip(norm.data()).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
        assert!(err < 1e-6, "{err:e}");
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn finite_on_large_inputs() {
        let (m, s) = module(MfeInit::default());
        let p = s.bind(false).unwrap();
        let y = m.forward(&p, &rand(&[4, 4, 8], 8, 1e3)).unwrap();
        assert!(y.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradients_reach_every_parameter() {
        let (m, mut s) = module(MfeInit::default());
        // move away from the zero FFN output so every path carries signal
        let mut r = rng::seeded(9);
        for (_, v) in s.iter_mut() {
            v.data.iter_mut().for_each(|x| *x += 0.1 * rng::normal(&mut r));
        }
        let p = s.bind(true).unwrap();
        let x = rand(&[4, 4, 8], 10, 1.0);
        let w = rand(&[4, 4, 8], 11, 1.0);
        m.forward(&p, &x).unwrap().mul(&w).unwrap().sum().backward().unwrap();
        for (name, g) in p.grads() {
            assert!(g.iter().any(|v| *v != 0.0), "{name} got no gradient");
        }
    }

    #[test]
    fn module_grad_check() {
        let (m, s) = module(MfeInit::default());
        let p = s.bind(false).unwrap();
        let x = rand(&[4, 4, 8], 12, 1.0);
        let w = rand(&[4, 4, 8], 13, 1.0);
        let e = grad_check(|x| Ok(m.forward(&p, x)?.mul(&w)?.sum()), &x, 1e-5).unwrap();
        assert!(e < 1e-4, "{e:e}");
    }
}
