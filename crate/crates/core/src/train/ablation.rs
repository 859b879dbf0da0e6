//! The windows x MFE component grid: train each configuration, score it on
//! the test split, and average over seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::predict::{predict_volume, split_samples, Sample};
use super::trainer::Trainer;
use crate::config::RunConfig;
use crate::ct::{Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_cases, table_header, table_row, MeanMetrics, MetricsReport};
use crate::net::{count_params, estimate_flops, Wemf};
use crate::windowing::{TriWindowConfig, WindowSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationRow {
    pub tri_window: bool,
    pub mfe: bool,
}

impl AblationRow {
    pub const DEFAULT_WINDOW: AblationRow = AblationRow { tri_window: false, mfe: false };
    pub const DEFAULT_WINDOW_MFE: AblationRow = AblationRow { tri_window: false, mfe: true };
    pub const TRI_WINDOW: AblationRow = AblationRow { tri_window: true, mfe: false };
    pub const TRI_WINDOW_MFE: AblationRow = AblationRow { tri_window: true, mfe: true };
    pub const GRID: [AblationRow; 4] =
        [Self::DEFAULT_WINDOW, Self::DEFAULT_WINDOW_MFE, Self::TRI_WINDOW, Self::TRI_WINDOW_MFE];

    pub fn label(&self) -> &'static str {
        match (self.tri_window, self.mfe) {
            (false, false) => "Default window",
            (false, true) => "Default window + MFE",
            (true, false) => "Tri-window",
            (true, true) => "Tri-window + MFE",
        }
    }

    pub fn slug(&self) -> &'static str {
        match (self.tri_window, self.mfe) {
            (false, false) => "default",
            (false, true) => "default_mfe",
            (true, false) => "tri",
            (true, true) => "tri_mfe",
        }
    }

    /// The single default window replicated into all three channels, or the
    /// configured tri-window stack.
    pub fn windows(&self, tri: &TriWindowConfig) -> TriWindowConfig {
        if self.tri_window {
            *tri
        } else {
            TriWindowConfig::replicated(WindowSpec::DEFAULT)
        }
    }

    pub fn apply(&self, base: &RunConfig, seed: u64) -> RunConfig {
        let mut cfg = base.clone();
        cfg.windows = self.windows(&base.windows);
        cfg.model.mfe_enabled = self.mfe;
        cfg.train.seed = seed;
        cfg.train.init_seed = None;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub row: AblationRow,
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub best_val_dsc: Option<f64>,
    pub train_seconds: f64,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub row: AblationRow,
    pub label: String,
    pub seeds: usize,
    pub overall: MeanMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
    pub rows: Vec<AblationSummary>,
}

impl AblationReport {
    pub fn summary(&self, row: AblationRow) -> Option<&AblationSummary> {
        self.rows.iter().find(|r| r.row == row)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", table_header("Configuration")).unwrap();
        for r in &self.rows {
            writeln!(s, "{}", table_row(&r.label, &r.overall)).unwrap();
        }
        s
    }
}

/// Field-wise mean; HD95 averages the runs where it is defined.
pub fn mean_of(rows: &[&MeanMetrics]) -> MeanMetrics {
    let n = rows.len().max(1) as f64;
    let m = |f: &dyn Fn(&MeanMetrics) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
    let hd: Vec<f64> = rows.iter().filter_map(|r| r.hd95_mm).collect();
    MeanMetrics {
        dsc: m(&|r| r.dsc),
        iou: m(&|r| r.iou),
        hd95_mm: (!hd.is_empty()).then(|| hd.iter().sum::<f64>() / hd.len() as f64),
        hd95_undefined: rows.iter().map(|r| r.hd95_undefined).sum(),
        nsd: m(&|r| r.nsd),
        accuracy: m(&|r| r.accuracy),
        recall: m(&|r| r.recall),
        specificity: m(&|r| r.specificity),
        precision: m(&|r| r.precision),
    }
}

/// Train one configuration and score its best-validation weights (final
/// weights when there is no validation split) on `cfg.eval.split`.
pub fn train_and_evaluate(
    data: &Dataset,
    cfg: &RunConfig,
    train: &[Sample],
    val: &[Sample],
    out: Option<PathBuf>,
) -> Result<(MetricsReport, Option<usize>, Option<f64>)> {
    let model = Wemf::new(cfg.model.clone())?;
    if let Some(dir) = &out {
        cfg.write_resolved(dir)?;
    }
    let trainer = Trainer { model: &model, cfg: cfg.train.clone(), train, val, out: out.clone() };
    let (state, _) = trainer.run()?;
    let params = state.best.as_ref().unwrap_or(&state.params);
    let bound = params.bind(false)?;
    let mut pairs = Vec::new();
    for id in data.ids(cfg.eval.split) {
        let (hu, labels) = data.load(id)?;
        pairs.push((id.clone(), predict_volume(&model, &bound, &hu, &cfg.windows)?, labels));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidSplit(format!("split {:?} is empty", cfg.eval.split)));
    }
    let mut report = evaluate_cases(&pairs, cfg.eval.tau_mm)?;
    report.params = Some(count_params(params));
    report.flops = Some(estimate_flops(&cfg.model)?);
    if let Some(dir) = &out {
        let path = dir.join("metrics.json");
        fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok((report, state.progress.best_epoch, state.progress.best_val_dsc))
}

/// Run `rows` x `seeds`. With `out`, each run gets `out/<row>/seed<k>/`.
pub fn run_ablation(
    data: &Dataset,
    base: &RunConfig,
    rows: &[AblationRow],
    seeds: &[u64],
    out: Option<&Path>,
    mut progress: impl FnMut(&AblationRun),
) -> Result<AblationReport> {
    let mut cache: Vec<(TriWindowConfig, Vec<Sample>, Vec<Sample>)> = Vec::new();
    let mut runs = Vec::new();
    for &seed in seeds {
        for row in rows {
            let cfg = row.apply(base, seed);
            if !cache.iter().any(|c| c.0 == cfg.windows) {
                let train = split_samples(data, Split::Train, &cfg.windows)?;
                let val = split_samples(data, Split::Val, &cfg.windows)?;
                cache.push((cfg.windows, train, val));
            }
            let (_, train, val) = cache.iter().find(|c| c.0 == cfg.windows).unwrap();
            let dir = out.map(|o| o.join(row.slug()).join(format!("seed{seed}")));
            let start = Instant::now();
            let (report, best_epoch, best_val_dsc) = train_and_evaluate(data, &cfg, train, val, dir)?;
            let run = AblationRun {
                row: *row,
                seed,
                best_epoch,
                best_val_dsc,
                train_seconds: start.elapsed().as_secs_f64(),
                report,
            };
            progress(&run);
            runs.push(run);
        }
    }
    let summaries = rows
        .iter()
        .map(|row| {
            let mine: Vec<&MeanMetrics> = runs.iter().filter(|r| r.row == *row).map(|r| &r.report.overall).collect();
            AblationSummary { row: *row, label: row.label().to_string(), seeds: mine.len(), overall: mean_of(&mine) }
        })
        .collect();
    let report = AblationReport { runs, rows: summaries };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("ablation.json");
        fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("ablation.txt");
        fs::write(&path, report.table()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rows_configure_model_and_windows() {
        let base = RunConfig::default();
        let c = AblationRow::DEFAULT_WINDOW.apply(&base, 3);
        assert!(!c.model.mfe_enabled);
        assert_eq!(c.windows, TriWindowConfig::replicated(WindowSpec::DEFAULT));
        assert_eq!(c.train.seed, 3);
        let c = AblationRow::TRI_WINDOW_MFE.apply(&base, 4);
        assert!(c.model.mfe_enabled);
        assert_eq!(c.windows, TriWindowConfig::default());
        let labels: Vec<&str> = AblationRow::GRID.iter().map(|r| r.label()).collect();
        assert_eq!(labels.len(), 4);
    }

    #[test]
    fn mean_skips_undefined_hd95() {
        let a = MeanMetrics {
            dsc: 0.5,
            iou: 0.4,
            hd95_mm: Some(2.0),
            hd95_undefined: 0,
            nsd: 0.5,
            accuracy: 0.9,
            recall: 0.5,
            specificity: 0.99,
            precision: 0.5,
        };
        let b = MeanMetrics { dsc: 0.7, hd95_mm: None, hd95_undefined: 2, ..a.clone() };
        let m = mean_of(&[&a, &b]);
        assert!((m.dsc - 0.6).abs() < 1e-15);
        assert_eq!(m.hd95_mm, Some(2.0));
        assert_eq!(m.hd95_undefined, 2);
    }
}
