//! The `wemf` command line.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, RESOLVED_CONFIG};
use crate::ct::{generate_dataset, read_nrrd, write_nrrd, Dataset, LesionClass, NrrdVolume, Split, Voxels};
use crate::diagnostics::{bench, grad_suite};
use crate::error::Error;
use crate::metrics::{evaluate_cases, MetricsReport};
use crate::net::{count_params, estimate_flops, Wemf};
use crate::tensor::read_checkpoint;
use crate::train::{predict_volume, run_ablation, split_samples, AblationRow, Trainer, BEST, LAST};
use crate::windowing::{to_uchar, CHANNEL_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Worker-count override for the thread pool.
pub const THREADS_ENV: &str = "WEMF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "wemf", version, about = "Window-enhanced multi-frequency CT lesion segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom dataset.
    Phantom(PhantomArgs),
    /// Write the three windowed views of a volume.
    Window(WindowArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Train and score the window x MFE component grid.
    Ablate(AblateArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Time the core kernels.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub class: Option<LesionClass>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output prefix; files are `<prefix>.<channel>.nrrd`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from `<out>/last.*`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_unless_present = "ref_as_pred")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Defaults to the `config.json` next to the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Score the reference labels against themselves.
    #[arg(long)]
    pub ref_as_pred: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Generated from the config's data section under `<out>/data` when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `windows×mfe` (also `windowsxmfe`), `windows` or `mfe`.
    #[arg(long, default_value = "windows×mfe", value_parser = parse_grid)]
    pub grid: Grid,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Also write the results as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Rows of an ablation sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<AblationRow>);

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let key: String = s.to_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
    match key.as_str() {
        "windows×mfe" | "windowsxmfe" | "windows*mfe" | "full" => Ok(Grid(AblationRow::GRID.to_vec())),
        "windows" => Ok(Grid(vec![AblationRow::DEFAULT_WINDOW, AblationRow::TRI_WINDOW])),
        "mfe" => Ok(Grid(vec![AblationRow::TRI_WINDOW, AblationRow::TRI_WINDOW_MFE])),
        _ => Err(format!("unknown grid `{s}` (expected windows×mfe, windows or mfe)")),
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_data_error() { EXIT_DATA } else { EXIT_NUMERIC };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    RunConfig::load(path).map_err(|e| CliError::usage(format!("config: {e}")))
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    Error::io(path, e).into()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(|e| io(path, e))
}

/// Size the global pool from `WEMF_THREADS`; all cores when unset.
pub fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // A pool that already exists (tests, embedding) is left alone.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match init_threads().and_then(|_| execute(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn execute(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Window(a) => cmd_window(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn cmd_phantom(a: PhantomArgs) -> CliResult<i32> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(n) = a.cases {
        cfg.data.cases = n;
    }
    if let Some(s) = a.seed {
        cfg.data.seed = s;
    }
    if let Some(c) = a.class {
        cfg.data.class = c;
    }
    if cfg.data.cases == 0 {
        return Err(CliError::usage("--cases must be at least 1"));
    }
    let manifest = generate_dataset(&a.out, &cfg.data)?;
    cfg.write_resolved(&a.out)?;
    let [tr, va, te] = manifest.splits.sizes();
    println!("{} cases in {} (train {tr}, val {va}, test {te})", manifest.cases.len(), a.out.display());
    Ok(EXIT_OK)
}

fn cmd_window(a: WindowArgs) -> CliResult<i32> {
    let cfg = load_config(a.config.as_deref())?;
    let hu = read_nrrd(&a.input)?.into_hounsfield()?;
    let values: Vec<f64> = hu.hu().iter().map(|&v| v as f64).collect();
    let prefix = a.out.to_string_lossy().into_owned();
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    let mut channels = Vec::with_capacity(3);
    for (spec, name) in cfg.windows.windows.iter().zip(CHANNEL_NAMES) {
        let bytes: Vec<u8> = spec.apply(&values).into_iter().map(to_uchar).collect();
        let path = PathBuf::from(format!("{prefix}.{name}.nrrd"));
        write_nrrd(NrrdVolume { geometry: *hu.geometry(), voxels: Voxels::UChar(bytes.clone()) }, &path)?;
        println!("{}", path.display());
        channels.push(bytes);
    }
    let [w, h, d] = hu.dims();
    let z = d / 2;
    let mut ppm = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in z * w * h..(z + 1) * w * h {
        ppm.extend(channels.iter().map(|c| c[i]));
    }
    let path = PathBuf::from(format!("{prefix}.preview.ppm"));
    fs::write(&path, ppm).map_err(|e| io(&path, e))?;
    let path = PathBuf::from(format!("{prefix}.{RESOLVED_CONFIG}"));
    fs::write(&path, cfg.to_json() + "\n").map_err(|e| io(&path, e))?;
    Ok(EXIT_OK)
}

fn cmd_train(a: TrainArgs) -> CliResult<i32> {
    let cfg = load_config(a.config.as_deref())?;
    let data = Dataset::open(&a.data)?;
    let model = Wemf::new(cfg.model.clone())?;
    let train = split_samples(&data, Split::Train, &cfg.windows)?;
    let val = split_samples(&data, Split::Val, &cfg.windows)?;
    if train.is_empty() {
        return Err(Error::InvalidSplit("the train split is empty".into()).into());
    }
    cfg.write_resolved(&a.out)?;
    let trainer = Trainer { model: &model, cfg: cfg.train.clone(), train: &train, val: &val, out: Some(a.out.clone()) };
    let (state, outcome) = if a.resume { trainer.resume()? } else { trainer.run()? };
    for e in &outcome.epochs {
        let val = e.val_dsc.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        println!("epoch {:>4}  step {:>6}  loss {:.5}  lr {:.3e}  val_dsc {val}", e.epoch, e.step, e.loss, e.lr);
    }
    println!(
        "{} parameters; checkpoints {}/{{{LAST},{BEST}}}.wemf; best epoch {}",
        count_params(&state.params),
        a.out.display(),
        state.progress.best_epoch.map_or_else(|| "n/a".to_string(), |e| e.to_string())
    );
    Ok(EXIT_OK)
}

fn cmd_eval(a: EvalArgs) -> CliResult<i32> {
    let config_path = a.config.clone().or_else(|| {
        let p = a.checkpoint.as_ref()?.parent()?.join(RESOLVED_CONFIG);
        p.exists().then_some(p)
    });
    let mut cfg = load_config(config_path.as_deref())?;
    if let Some(t) = a.tau {
        cfg.eval.tau_mm = t;
    }
    if let Some(s) = a.split {
        cfg.eval.split = s;
    }
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let data = Dataset::open(&a.data)?;
    let ids = data.ids(cfg.eval.split);
    if ids.is_empty() {
        return Err(Error::InvalidSplit(format!("split {:?} is empty", cfg.eval.split)).into());
    }
    let loaded = match (&a.checkpoint, a.ref_as_pred) {
        (Some(path), false) => {
            let model = Wemf::new(cfg.model.clone())?;
            let store = read_checkpoint(path)?;
            model.check_weights(&store)?;
            Some((model, store))
        }
        _ => None,
    };
    let bound = loaded.as_ref().map(|(_, s)| s.bind(false)).transpose()?;
    let mut pairs = Vec::with_capacity(ids.len());
    for id in ids {
        let (hu, labels) = data.load(id)?;
        let pred = match (&loaded, &bound) {
            (Some((model, _)), Some(p)) => predict_volume(model, p, &hu, &cfg.windows)?,
            _ => labels.clone(),
        };
        pairs.push((id.clone(), pred, labels));
    }
    let mut report: MetricsReport = evaluate_cases(&pairs, cfg.eval.tau_mm)?;
    if let Some((_, store)) = &loaded {
        report.params = Some(count_params(store));
        report.flops = Some(estimate_flops(&cfg.model)?);
    }
    print!("{}", report.table(&format!("{:?} split, {} case(s), tau {} mm", cfg.eval.split, pairs.len(), cfg.eval.tau_mm)));
    if let Some(dir) = &a.out {
        cfg.write_resolved(dir)?;
        write_json(&dir.join("metrics.json"), &report)?;
    }
    Ok(EXIT_OK)
}

fn cmd_ablate(a: AblateArgs) -> CliResult<i32> {
    let cfg = load_config(a.config.as_deref())?;
    if a.seeds.is_empty() {
        return Err(CliError::usage("--seeds needs at least one seed"));
    }
    let data_dir = match &a.data {
        Some(d) => d.clone(),
        None => {
            let d = a.out.join("data");
            generate_dataset(&d, &cfg.data)?;
            d
        }
    };
    let data = Dataset::open(&data_dir)?;
    cfg.write_resolved(&a.out)?;
    let report = run_ablation(&data, &cfg, &a.grid.0, &a.seeds, Some(&a.out), |run| {
        println!(
            "{:<24} seed {:<4} test DSC {:>6.2}%  ({:.0} s)",
            run.row.label(),
            run.seed,
            100.0 * run.report.overall.dsc,
            run.train_seconds
        );
        let _ = std::io::stdout().flush();
    })?;
    print!("{}", report.table());
    Ok(EXIT_OK)
}

fn cmd_gradcheck(a: GradcheckArgs) -> CliResult<i32> {
    let checks = grad_suite()?;
    let mut failed = 0;
    for c in &checks {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        println!("{tag} {:<40} max rel err {:.3e} (tol {:.0e})", c.name, c.max_rel_err, c.tol);
        failed += usize::from(!c.passed);
    }
    println!("{} checks, {failed} failed", checks.len());
    if let Some(path) = &a.json {
        write_json(path, &checks)?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_NUMERIC })
}

fn cmd_bench(a: BenchArgs) -> CliResult<i32> {
    if a.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let report = bench(a.reps)?;
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    println!("{text}");
    if let Some(path) = &a.out {
        fs::write(path, text + "\n").map_err(|e| io(path, e))?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spellings() {
        assert_eq!(parse_grid("windows×mfe").unwrap().0.len(), 4);
        assert_eq!(parse_grid("Windows x MFE").unwrap().0.len(), 4);
        assert_eq!(parse_grid("mfe").unwrap().0, vec![AblationRow::TRI_WINDOW, AblationRow::TRI_WINDOW_MFE]);
        assert!(parse_grid("depth").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["wemf", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["wemf", "phantom"]), EXIT_USAGE);
        assert_eq!(run(["wemf", "--help"]), EXIT_OK);
        assert_eq!(run(["wemf", "eval", "--data", "x"]), EXIT_USAGE);
    }
}
