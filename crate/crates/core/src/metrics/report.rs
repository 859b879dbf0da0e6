//! Per-case scoring and dataset-level aggregation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::confusion::{dice, iou, ConfusionCounts};
use super::surface::{hd95, nsd, surface_distances, SurfaceDistances};
use crate::ct::{LabelVolume, CYST, TUMOR};
use crate::error::{Error, Result};

pub const DEFAULT_TAU_MM: f64 = 1.0;

/// Metrics for one binary mask pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskMetrics {
    pub dsc: f64,
    pub iou: f64,
    /// `None` when exactly one mask is empty.
    pub hd95_mm: Option<f64>,
    pub nsd: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub specificity: f64,
    pub precision: f64,
    pub counts: ConfusionCounts,
}

pub fn evaluate_masks(
    pred: &[bool],
    reference: &[bool],
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    tau_mm: f64,
) -> Result<MaskMetrics> {
    if !(tau_mm > 0.0) {
        return Err(Error::Config(format!("NSD tolerance must be positive, got {tau_mm}")));
    }
    let counts = ConfusionCounts::from_masks(pred, reference)?;
    let (hd, ns) = if counts.both_empty() {
        (Some(0.0), 1.0)
    } else {
        match surface_distances(pred, reference, dims, spacing_mm)? {
            SurfaceDistances::Defined(s) => (Some(hd95(&s)), nsd(&s, tau_mm)),
            SurfaceDistances::Undefined { .. } => (None, 0.0),
        }
    };
    Ok(MaskMetrics {
        dsc: dice(&counts),
        iou: iou(&counts),
        hd95_mm: hd,
        nsd: ns,
        accuracy: counts.accuracy(),
        recall: counts.recall(),
        specificity: counts.specificity(),
        precision: counts.precision(),
        counts,
    })
}

/// Tumor, cyst, and foreground-union scores for one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub id: String,
    pub tumor: MaskMetrics,
    pub cyst: MaskMetrics,
    pub overall: MaskMetrics,
}

pub fn evaluate_case(id: &str, pred: &LabelVolume, reference: &LabelVolume, tau_mm: f64) -> Result<CaseMetrics> {
    if pred.dims() != reference.dims() {
        return Err(Error::InvalidVolume(format!(
            "prediction dims {:?} differ from reference {:?}",
            pred.dims(),
            reference.dims()
        )));
    }
    let dims = reference.dims();
    let spacing = reference.spacing();
    let mask = |v: &LabelVolume, f: &dyn Fn(u8) -> bool| v.labels().iter().map(|&l| f(l)).collect::<Vec<bool>>();
    let score = |f: &dyn Fn(u8) -> bool| evaluate_masks(&mask(pred, f), &mask(reference, f), dims, spacing, tau_mm);
    Ok(CaseMetrics {
        id: id.to_string(),
        tumor: score(&|l| l == TUMOR)?,
        cyst: score(&|l| l == CYST)?,
        overall: score(&|l| l != 0)?,
    })
}

/// Means over cases. HD95 averages only cases where it is defined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub dsc: f64,
    pub iou: f64,
    pub hd95_mm: Option<f64>,
    pub hd95_undefined: usize,
    pub nsd: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub specificity: f64,
    pub precision: f64,
}

impl MeanMetrics {
    pub fn from_rows(rows: &[&MaskMetrics]) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&MaskMetrics) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        let defined: Vec<f64> = rows.iter().filter_map(|r| r.hd95_mm).collect();
        MeanMetrics {
            dsc: mean(&|r| r.dsc),
            iou: mean(&|r| r.iou),
            hd95_mm: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
            hd95_undefined: rows.len() - defined.len(),
            nsd: mean(&|r| r.nsd),
            accuracy: mean(&|r| r.accuracy),
            recall: mean(&|r| r.recall),
            specificity: mean(&|r| r.specificity),
            precision: mean(&|r| r.precision),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tau_mm: f64,
    pub params: Option<usize>,
    pub flops: Option<u64>,
    pub tumor: MeanMetrics,
    pub cyst: MeanMetrics,
    pub overall: MeanMetrics,
    pub cases: Vec<CaseMetrics>,
}

impl MetricsReport {
    /// Aggregate in case-id order so the means do not depend on input order.
    pub fn aggregate(mut cases: Vec<CaseMetrics>, tau_mm: f64) -> Self {
        cases.sort_by(|a, b| a.id.cmp(&b.id));
        let col = |f: fn(&CaseMetrics) -> &MaskMetrics| cases.iter().map(f).collect::<Vec<_>>();
        MetricsReport {
            tau_mm,
            params: None,
            flops: None,
            tumor: MeanMetrics::from_rows(&col(|c| &c.tumor)),
            cyst: MeanMetrics::from_rows(&col(|c| &c.cyst)),
            overall: MeanMetrics::from_rows(&col(|c| &c.overall)),
            cases,
        }
    }

    pub fn rows(&self) -> [(&'static str, &MeanMetrics); 3] {
        [("Tumor", &self.tumor), ("Cyst", &self.cyst), ("Overall", &self.overall)]
    }

    /// Aligned text table, rates in percent.
    pub fn table(&self, title: &str) -> String {
        let mut s = String::new();
        writeln!(s, "{title}").unwrap();
        writeln!(s, "{}", table_header("Class")).unwrap();
        for (name, m) in self.rows() {
            writeln!(s, "{}", table_row(name, m)).unwrap();
        }
        let undefined = self.overall.hd95_undefined;
        if undefined > 0 {
            writeln!(s, "HD95 undefined (one mask empty) in {undefined} case(s); excluded from the mean").unwrap();
        }
        if let Some(p) = self.params {
            writeln!(s, "Params: {:.2} M", p as f64 / 1e6).unwrap();
        }
        if let Some(f) = self.flops {
            writeln!(s, "FLOPs: {:.2} G", f as f64 / 1e9).unwrap();
        }
        s
    }
}

pub fn table_header(first: &str) -> String {
    format!(
        "{first:<24} {:>8} {:>8} {:>9} {:>8} {:>8} {:>9} {:>9} {:>9}",
        "DSC(%)", "IoU(%)", "HD95(mm)", "NSD(%)", "Acc(%)", "Recall(%)", "Spec(%)", "Prec(%)"
    )
}

pub fn table_row(name: &str, m: &MeanMetrics) -> String {
    let hd = m.hd95_mm.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
    format!(
        "{name:<24} {:>8.2} {:>8.2} {:>9} {:>8.2} {:>8.2} {:>9.2} {:>9.2} {:>9.2}",
        100.0 * m.dsc,
        100.0 * m.iou,
        hd,
        100.0 * m.nsd,
        100.0 * m.accuracy,
        100.0 * m.recall,
        100.0 * m.specificity,
        100.0 * m.precision
    )
}

/// Score many cases in parallel; output follows case-id order.
pub fn evaluate_cases(pairs: &[(String, LabelVolume, LabelVolume)], tau_mm: f64) -> Result<MetricsReport> {
    let cases = pairs
        .par_iter()
        .map(|(id, pred, reference)| evaluate_case(id, pred, reference, tau_mm))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::aggregate(cases, tau_mm))
}
