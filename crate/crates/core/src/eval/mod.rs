//! k-fold benchmark harness, redundancy sweeps and inference timing.
//!
//! Per fold, the supervised model trains on the fold's training tasks (its
//! annotator statistics come from those tasks only) and early-stops on the
//! validation tasks. Test truths are removed from the dataset every method
//! sees; they are used for scoring only.

pub mod config;
mod metrics;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::baselines::{
    majority_vote, Aggregator, DawidSkene, DsParams, Wawa, ZenCrowd, ZeroBasedSkill,
};
use crate::dataset::{kfold_split, write_lines, Dataset, FoldSplit};
use crate::error::{Error, Result};
use crate::model::{SuperLa, TrainConfig};
use crate::Predictions;

pub use metrics::{accuracy, macro_f1};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    MajorityVote,
    Wawa,
    ZeroBasedSkill,
    DawidSkene,
    ZenCrowd,
    SuperLa,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::MajorityVote,
        Method::Wawa,
        Method::ZeroBasedSkill,
        Method::DawidSkene,
        Method::ZenCrowd,
        Method::SuperLa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MajorityVote => "mv",
            Method::Wawa => "wawa",
            Method::ZeroBasedSkill => "zbs",
            Method::DawidSkene => "ds",
            Method::ZenCrowd => "zc",
            Method::SuperLa => "superla",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|m| m.name()).collect()
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == lower)
            .ok_or_else(|| Error::UnknownMethod {
                name: s.to_owned(),
                available: Self::names(),
            })
    }
}

/// How the unsupervised baselines see the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineMode {
    /// Fit and score on the test fold's annotations only.
    #[default]
    TestOnly,
    /// Fit on every annotation of the dataset, score the test fold.
    Whole,
    /// Like `TestOnly`, but DS and ZC start from parameters estimated on the
    /// training and validation truths.
    HistoryInit,
}

impl BaselineMode {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::TestOnly => "test-only",
            BaselineMode::Whole => "whole",
            BaselineMode::HistoryInit => "history-init",
        }
    }
}

impl FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test-only" => Ok(BaselineMode::TestOnly),
            "whole" => Ok(BaselineMode::Whole),
            "history-init" => Ok(BaselineMode::HistoryInit),
            _ => Err(Error::Config(format!(
                "unknown baseline mode `{s}`; expected test-only, whole or history-init"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub folds: usize,
    pub seed: u64,
    pub mode: BaselineMode,
    pub train: TrainConfig,
    /// Repetitions of each timed inference; the median is reported.
    pub timing_runs: usize,
    /// Where to write per-task prediction dumps, if anywhere.
    pub dump_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            folds: 4,
            seed: 0,
            mode: BaselineMode::TestOnly,
            train: TrainConfig::default(),
            timing_runs: 3,
            dump_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedDataset {
    pub name: String,
    pub data: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub infer_seconds: f64,
    pub predictions: Predictions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub dataset: String,
    pub method: String,
    pub folds: Vec<FoldResult>,
}

impl BenchResult {
    pub fn mean_accuracy(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.accuracy))
    }

    pub fn std_accuracy(&self) -> f64 {
        population_std(self.folds.iter().map(|f| f.accuracy))
    }

    pub fn mean_f1(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.macro_f1))
    }

    pub fn std_f1(&self) -> f64 {
        population_std(self.folds.iter().map(|f| f.macro_f1))
    }

    pub fn mean_seconds(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.infer_seconds))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn population_std(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = mean(xs.clone());
    mean(xs.map(|x| (x - m) * (x - m))).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellError {
    pub dataset: String,
    pub method: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub results: Vec<BenchResult>,
    pub errors: Vec<CellError>,
}

impl BenchReport {
    pub fn get(&self, dataset: &str, method: &str) -> Option<&BenchResult> {
        self.results
            .iter()
            .find(|r| r.dataset == dataset && r.method == method)
    }
}

/// Runs `f` `runs` times (at least once) and returns the first result with
/// the median wall-clock duration in seconds.
pub fn time_median<T>(runs: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let mut secs = Vec::with_capacity(runs.max(1));
    let mut first = None;
    for _ in 0..runs.max(1) {
        let start = Instant::now();
        let out = f()?;
        secs.push(start.elapsed().as_secs_f64());
        first.get_or_insert(out);
    }
    secs.sort_by(f64::total_cmp);
    Ok((first.expect("ran at least once"), secs[secs.len() / 2]))
}

/// Wall-clock seconds of one method's inference on a fold's test tasks, median
/// of `runs`. Baselines include their whole fitting procedure; the supervised
/// model includes feature construction but not training.
pub fn time_inference(
    method: Method,
    ds: &Dataset,
    fold: &FoldSplit,
    model: Option<&SuperLa>,
    mode: BaselineMode,
    runs: usize,
) -> Result<f64> {
    Ok(infer_fold(method, ds, fold, model, mode, runs)?.1)
}

/// Predictions for `fold.test_tasks` and the median inference time.
/// `ds` must not carry the test truths.
fn infer_fold(
    method: Method,
    ds: &Dataset,
    fold: &FoldSplit,
    model: Option<&SuperLa>,
    mode: BaselineMode,
    runs: usize,
) -> Result<(Predictions, f64)> {
    let test = &fold.test_tasks;
    let all: Vec<usize>;
    let scope: &[usize] = match mode {
        BaselineMode::Whole => {
            all = (0..ds.num_tasks()).collect();
            &all
        }
        _ => test,
    };
    let history: Vec<usize> = fold
        .train_tasks
        .iter()
        .chain(&fold.val_tasks)
        .copied()
        .collect();

    let (preds, secs) = match method {
        Method::SuperLa => {
            let model = model.ok_or_else(|| Error::Config("no trained model for fold".into()))?;
            time_median(runs, || Ok(model.infer(ds, test)?.predictions))?
        }
        Method::MajorityVote => time_median(runs, || Ok(majority_vote(ds, scope)))?,
        Method::Wawa => time_median(runs, || Ok(Wawa::default().aggregate(ds, scope)))?,
        Method::ZeroBasedSkill => {
            time_median(runs, || Ok(ZeroBasedSkill::default().aggregate(ds, scope)))?
        }
        Method::DawidSkene => time_median(runs, || {
            let mut dsm = DawidSkene::default();
            if mode == BaselineMode::HistoryInit {
                dsm.init = Some(DsParams::from_history(ds, &history));
            }
            Ok(dsm.aggregate(ds, scope))
        })?,
        Method::ZenCrowd => time_median(runs, || {
            let mut zc = ZenCrowd::default();
            if mode == BaselineMode::HistoryInit {
                zc = zc.with_history(ds, &history);
            }
            Ok(zc.aggregate(ds, scope))
        })?,
    };
    let preds = preds
        .into_iter()
        .filter(|(t, _)| test.binary_search(t).is_ok())
        .collect();
    Ok((preds, secs))
}

/// Evaluates every `dataset x method` cell over `config.folds` folds. Failing
/// cells are reported in `errors` and do not stop the grid.
pub fn run_benchmark(
    datasets: &[NamedDataset],
    methods: &[String],
    config: &BenchConfig,
) -> BenchReport {
    let mut report = BenchReport::default();
    let (methods, unknown) = resolve_methods(methods);
    for named in datasets {
        for (name, err) in &unknown {
            report.errors.push(CellError {
                dataset: named.name.clone(),
                method: name.clone(),
                message: err.clone(),
            });
        }
        match run_dataset(named, &methods, config) {
            Ok((results, errors)) => {
                report.results.extend(results);
                report.errors.extend(errors);
            }
            Err(e) => {
                for m in &methods {
                    report.errors.push(CellError {
                        dataset: named.name.clone(),
                        method: m.name().to_owned(),
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    report
}

fn resolve_methods(names: &[String]) -> (Vec<Method>, Vec<(String, String)>) {
    let mut known = Vec::new();
    let mut unknown = Vec::new();
    for n in names {
        match n.parse::<Method>() {
            Ok(m) if !known.contains(&m) => known.push(m),
            Ok(_) => {}
            Err(e) => unknown.push((n.clone(), e.to_string())),
        }
    }
    (known, unknown)
}

fn train_for_fold(ds: &Dataset, fold: &FoldSplit, config: &BenchConfig) -> Result<SuperLa> {
    let mut train_cfg = config.train.clone();
    train_cfg.seed = train_cfg.seed.wrapping_add(fold.fold_index as u64);
    let (model, history) = SuperLa::train(ds, &fold.train_tasks, &fold.val_tasks, &train_cfg)?;
    log::info!(
        "fold {}: {} epochs, best epoch {}",
        fold.fold_index,
        history.epochs.len(),
        history.best_epoch
    );
    Ok(model)
}

type CellOutcome = Result<Vec<FoldResult>>;

fn run_dataset(
    named: &NamedDataset,
    methods: &[Method],
    config: &BenchConfig,
) -> Result<(Vec<BenchResult>, Vec<CellError>)> {
    let ds = &named.data;
    ds.validate_choices()?;
    let folds = kfold_split(ds, config.folds, config.seed)?;
    let mut cells: Vec<CellOutcome> = methods.iter().map(|_| Ok(Vec::new())).collect();

    for fold in &folds {
        let visible = ds.hiding_truths(&fold.test_tasks);
        let model = if methods.contains(&Method::SuperLa) {
            Some(train_for_fold(&visible, fold, config))
        } else {
            None
        };
        for (cell, &method) in cells.iter_mut().zip(methods) {
            let Ok(done) = cell else { continue };
            let model_ref = match (&model, method) {
                (Some(Err(e)), Method::SuperLa) => {
                    *cell = Err(Error::Config(format!("training failed: {e}")));
                    continue;
                }
                (Some(Ok(m)), _) => Some(m),
                _ => None,
            };
            let outcome = infer_fold(
                method,
                &visible,
                fold,
                model_ref,
                config.mode,
                config.timing_runs,
            )
            .and_then(|(preds, secs)| {
                if let Some(dir) = &config.dump_dir {
                    let path = dump_path(dir, &named.name, method.name(), fold.fold_index, None);
                    write_predictions(&path, ds, &preds)?;
                }
                Ok(FoldResult {
                    fold: fold.fold_index,
                    accuracy: accuracy(&preds, ds.truths()),
                    macro_f1: macro_f1(&preds, ds.truths(), ds.num_choices()),
                    infer_seconds: secs,
                    predictions: preds,
                })
            });
            match outcome {
                Ok(r) => done.push(r),
                Err(e) => *cell = Err(e),
            }
        }
    }

    let mut results = Vec::new();
    let mut errors = Vec::new();
    for (cell, method) in cells.into_iter().zip(methods) {
        match cell {
            Ok(folds) => results.push(BenchResult {
                dataset: named.name.clone(),
                method: method.name().to_owned(),
                folds,
            }),
            Err(e) => errors.push(CellError {
                dataset: named.name.clone(),
                method: method.name().to_owned(),
                message: e.to_string(),
            }),
        }
    }
    Ok((results, errors))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub level: usize,
    pub result: BenchResult,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepResult>,
    pub errors: Vec<CellError>,
}

/// For every redundancy level `r`, the test tasks keep only their first `r`
/// annotations (canonical order). The supervised model is trained once per
/// fold on the full training annotations; baselines are re-run on the reduced
/// data.
pub fn redundancy_sweep(
    named: &NamedDataset,
    methods: &[String],
    levels: &[usize],
    config: &BenchConfig,
) -> SweepReport {
    let mut report = SweepReport::default();
    let (methods, unknown) = resolve_methods(methods);
    for (name, message) in unknown {
        report.errors.push(CellError {
            dataset: named.name.clone(),
            method: name,
            message,
        });
    }
    let ds = &named.data;
    let folds = match ds.validate_choices().and_then(|_| kfold_split(ds, config.folds, config.seed)) {
        Ok(f) => f,
        Err(e) => {
            for m in &methods {
                report.errors.push(CellError {
                    dataset: named.name.clone(),
                    method: m.name().to_owned(),
                    message: e.to_string(),
                });
            }
            return report;
        }
    };

    let mut cells: Vec<Vec<Result<Vec<FoldResult>>>> = levels
        .iter()
        .map(|_| methods.iter().map(|_| Ok(Vec::new())).collect())
        .collect();
    for fold in &folds {
        let visible = ds.hiding_truths(&fold.test_tasks);
        let model = methods
            .contains(&Method::SuperLa)
            .then(|| train_for_fold(&visible, fold, config));
        for (li, &level) in levels.iter().enumerate() {
            let reduced = visible.truncated(&fold.test_tasks, level);
            for (mi, &method) in methods.iter().enumerate() {
                let cell = &mut cells[li][mi];
                let Ok(done) = cell else { continue };
                let model_ref = match (&model, method) {
                    (Some(Err(e)), Method::SuperLa) => {
                        *cell = Err(Error::Config(format!("training failed: {e}")));
                        continue;
                    }
                    (Some(Ok(m)), _) => Some(m),
                    _ => None,
                };
                let outcome = infer_fold(
                    method,
                    &reduced,
                    fold,
                    model_ref,
                    config.mode,
                    config.timing_runs,
                )
                .and_then(|(preds, secs)| {
                    if let Some(dir) = &config.dump_dir {
                        let path =
                            dump_path(dir, &named.name, method.name(), fold.fold_index, Some(level));
                        write_predictions(&path, ds, &preds)?;
                    }
                    Ok(FoldResult {
                        fold: fold.fold_index,
                        accuracy: accuracy(&preds, ds.truths()),
                        macro_f1: macro_f1(&preds, ds.truths(), ds.num_choices()),
                        infer_seconds: secs,
                        predictions: preds,
                    })
                });
                match outcome {
                    Ok(r) => done.push(r),
                    Err(e) => *cell = Err(e),
                }
            }
        }
    }

    for (li, row) in cells.into_iter().enumerate() {
        for (cell, method) in row.into_iter().zip(&methods) {
            match cell {
                Ok(folds) => report.rows.push(SweepResult {
                    level: levels[li],
                    result: BenchResult {
                        dataset: named.name.clone(),
                        method: method.name().to_owned(),
                        folds,
                    },
                }),
                Err(e) => report.errors.push(CellError {
                    dataset: named.name.clone(),
                    method: format!("{}@{}", method.name(), levels[li]),
                    message: e.to_string(),
                }),
            }
        }
    }
    report
}

pub const RESULTS_HEADER: &str = "dataset,method,fold,accuracy,macro_f1,infer_seconds";
pub const SWEEP_HEADER: &str = "dataset,method,level,fold,accuracy,macro_f1,infer_seconds";

/// One row per fold, then one `error` row per failed cell. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn results_csv(report: &BenchReport) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for r in &report.results {
        for f in &r.folds {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.dataset, r.method, f.fold, f.accuracy, f.macro_f1, f.infer_seconds
            );
        }
    }
    for e in &report.errors {
        let _ = writeln!(s, "{},{},error,,,", e.dataset, e.method);
    }
    s
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for row in &report.rows {
        let r = &row.result;
        for f in &r.folds {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.dataset, r.method, row.level, f.fold, f.accuracy, f.macro_f1, f.infer_seconds
            );
        }
    }
    for e in &report.errors {
        let _ = writeln!(s, "{},{},,error,,,", e.dataset, e.method);
    }
    s
}

/// Aligned text table of fold means (percent) with population spread.
pub fn summary_table(results: &[BenchResult]) -> String {
    let rows: Vec<[String; 5]> = results
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                r.method.clone(),
                format!("{:.2} ± {:.2}", 100.0 * r.mean_accuracy(), 100.0 * r.std_accuracy()),
                format!("{:.2} ± {:.2}", 100.0 * r.mean_f1(), 100.0 * r.std_f1()),
                format!("{:.5}", r.mean_seconds()),
            ]
        })
        .collect();
    let header = ["dataset", "method", "accuracy %", "macro-F1 %", "infer s"];
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let fmt_row = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_owned()
    };
    let mut out = fmt_row(&header.map(String::from));
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in &rows {
        out.push_str(&fmt_row(row));
        out.push('\n');
    }
    out
}

pub fn dump_path(
    dir: &Path,
    dataset: &str,
    method: &str,
    fold: usize,
    level: Option<usize>,
) -> PathBuf {
    match level {
        Some(l) => dir.join(format!("{dataset}__{method}__r{l}__fold{fold}.txt")),
        None => dir.join(format!("{dataset}__{method}__fold{fold}.txt")),
    }
}

/// `<task> <label>` per line, using the dataset's original names.
pub fn write_predictions(path: &Path, ds: &Dataset, preds: &Predictions) -> Result<()> {
    write_lines(path, |w| {
        use std::io::Write;
        for (&t, &l) in preds {
            writeln!(w, "{} {}", ds.task_name(t), ds.label_name(l))?;
        }
        Ok(())
    })
}

/// Reads a prediction dump back into indices of `ds`.
pub fn read_predictions(path: &Path, ds: &Dataset) -> Result<Predictions> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Predictions::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                expected: 2,
                found: fields.len(),
            });
        }
        let task = ds
            .task_index(fields[0])
            .ok_or_else(|| Error::Config(format!("unknown task `{}` in {}", fields[0], path.display())))?;
        let label = ds.label_index_of(fields[1]).ok_or_else(|| Error::UnknownLabel {
            label: fields[1].to_owned(),
            context: Some(path.display().to_string()),
        })?;
        out.insert(task, label);
    }
    Ok(out)
}
