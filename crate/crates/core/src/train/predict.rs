//! Training samples, argmax inference and slice-stacked volume prediction.

use crate::ct::{slice_iter, Dataset, HounsfieldVolume, LabelVolume, Split};
use crate::error::{Error, Result};
use crate::metrics::{confusion, dice};
use crate::net::Wemf;
use crate::tensor::{Bindings, Tensor};
use crate::windowing::{tri_window_stack, TriWindowConfig};

/// One windowed axial slice with its reference labels.
#[derive(Clone, Debug)]
pub struct Sample {
    pub case: String,
    pub index: usize,
    /// `[H, W, 3]` network input.
    pub input: Tensor,
    pub labels: Vec<u8>,
}

impl Sample {
    pub fn foreground(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}

/// Window every axial slice of a volume.
pub fn volume_samples(
    case: &str,
    hu: &HounsfieldVolume,
    labels: &LabelVolume,
    windows: &TriWindowConfig,
) -> Result<Vec<Sample>> {
    slice_iter(hu, labels)?
        .map(|s| {
            let values: Vec<f64> = s.hu.iter().map(|&v| v as f64).collect();
            Ok(Sample {
                case: case.to_string(),
                index: s.index,
                input: tri_window_stack(&values, s.shape[0], s.shape[1], windows)?,
                labels: s.labels,
            })
        })
        .collect()
}

/// Samples for every case in `split`, in manifest order.
pub fn split_samples(data: &Dataset, split: Split, windows: &TriWindowConfig) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for id in data.ids(split) {
        let (hu, labels) = data.load(id)?;
        out.extend(volume_samples(id, &hu, &labels, windows)?);
    }
    Ok(out)
}

/// Per-position argmax over the class axis; ties go to the lower class.
pub fn argmax_labels(logits: &Tensor) -> Vec<u8> {
    let c = *logits.shape().last().unwrap();
    logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for k in 1..c {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}

pub fn predict_sample(model: &Wemf, p: &Bindings, input: &Tensor) -> Result<Vec<u8>> {
    Ok(argmax_labels(&model.forward(p, input)?))
}

/// Segment a volume slice by slice.
pub fn predict_volume(model: &Wemf, p: &Bindings, hu: &HounsfieldVolume, windows: &TriWindowConfig) -> Result<LabelVolume> {
    let [nx, ny, nz] = hu.dims();
    let s = model.cfg.img_size;
    if nx != s || ny != s {
        return Err(Error::InvalidVolume(format!("slices are {ny}x{nx}, model expects {s}x{s}")));
    }
    let plane = nx * ny;
    let mut out = Vec::with_capacity(plane * nz);
    for k in 0..nz {
        let values: Vec<f64> = hu.hu()[k * plane..(k + 1) * plane].iter().map(|&v| v as f64).collect();
        out.extend(predict_sample(model, p, &tri_window_stack(&values, ny, nx, windows)?)?);
    }
    LabelVolume::new(*hu.geometry(), out)
}

/// Mean over cases of the foreground Dice pooled over each case's slices.
pub fn foreground_dsc(model: &Wemf, p: &Bindings, samples: &[Sample]) -> Result<f64> {
    let mut cases: Vec<(&str, Vec<u8>, Vec<u8>)> = Vec::new();
    for s in samples {
        let pred = predict_sample(model, p, &s.input)?;
        match cases.iter_mut().find(|c| c.0 == s.case) {
            Some(c) => {
                c.1.extend(pred);
                c.2.extend(&s.labels);
            }
            None => cases.push((&s.case, pred, s.labels.clone())),
        }
    }
    if cases.is_empty() {
        return Err(Error::InvalidSplit("no samples to score".into()));
    }
    let fg = |v: &[u8]| v.iter().map(|&l| (l != 0) as u8).collect::<Vec<u8>>();
    let mut total = 0.0;
    for (_, pred, reference) in &cases {
        total += dice(&confusion(&fg(pred), &fg(reference), 1)?);
    }
    Ok(total / cases.len() as f64)
}
