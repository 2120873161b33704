//! Answer/truth file ingestion, integer id interning and k-fold splits.
//!
//! Files are plain text, one record per line, fields separated by tabs or runs
//! of spaces. `#` comments and blank lines are skipped.
//!
//! ```text
//! # answers: <task> <annotator> <label>
//! t1  w1  A
//! # truths: <task> <label>
//! t1  A
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Annotation {
    pub task: usize,
    pub annotator: usize,
    pub label: usize,
}

/// String interner assigning indices in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn from_names(names: Vec<String>) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Interner { names, index }
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

/// Options for [`Dataset::load_annotations_with`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Closed label vocabulary. When set, label indices follow this order and
    /// any other label string is rejected.
    pub labels: Option<Vec<String>>,
    /// Override for the number of choices `K`. Must not be smaller than the
    /// number of labels observed.
    pub num_choices: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    tasks: Interner,
    annotators: Interner,
    labels: Interner,
    labels_closed: bool,
    num_choices: usize,
    annotations: Vec<Annotation>,
    /// Annotations grouped per task, ascending annotator index.
    by_task: Vec<Vec<Annotation>>,
    truths: Vec<Option<usize>>,
    l_max: usize,
}

impl Dataset {
    /// Builds a dataset from index-level data. Names are synthesised as
    /// `t<i>`, `w<i>` and `<k>`.
    pub fn from_indices(
        num_tasks: usize,
        num_annotators: usize,
        num_choices: usize,
        annotations: Vec<Annotation>,
        truths: Vec<Option<usize>>,
    ) -> Result<Self> {
        let tasks = Interner::from_names((0..num_tasks).map(|i| format!("t{i}")).collect());
        let annotators =
            Interner::from_names((0..num_annotators).map(|i| format!("w{i}")).collect());
        let labels = Interner::from_names((0..num_choices).map(|k| k.to_string()).collect());
        if truths.len() != num_tasks {
            return Err(Error::Config(format!(
                "{} truth slots for {num_tasks} tasks",
                truths.len()
            )));
        }
        for (t, truth) in truths.iter().enumerate() {
            if let Some(l) = truth {
                if *l >= num_choices {
                    return Err(Error::Config(format!(
                        "truth {l} of task {t} is outside [0, {num_choices})"
                    )));
                }
            }
        }
        let mut ds = Dataset {
            tasks,
            annotators,
            labels,
            labels_closed: false,
            num_choices,
            annotations: Vec::with_capacity(annotations.len()),
            by_task: vec![Vec::new(); num_tasks],
            truths,
            l_max: 0,
        };
        for a in annotations {
            if a.task >= num_tasks || a.annotator >= num_annotators || a.label >= num_choices {
                return Err(Error::Config(format!("annotation {a:?} is out of range")));
            }
            ds.push(a)?;
        }
        ds.finish();
        Ok(ds)
    }

    pub fn load_annotations(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_annotations_with(path, &LoadOptions::default())
    }

    pub fn load_annotations_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let (labels, labels_closed) = match &opts.labels {
            Some(names) => (Interner::from_names(names.clone()), true),
            None => (Interner::default(), false),
        };
        let mut ds = Dataset {
            tasks: Interner::default(),
            annotators: Interner::default(),
            labels,
            labels_closed,
            num_choices: 0,
            annotations: Vec::new(),
            by_task: Vec::new(),
            truths: Vec::new(),
            l_max: 0,
        };
        for_each_record(path, 3, |fields| {
            let label = ds.label_index(fields[2], "answer file")?;
            let task = ds.tasks.intern(fields[0]);
            let annotator = ds.annotators.intern(fields[1]);
            if task == ds.by_task.len() {
                ds.by_task.push(Vec::new());
                ds.truths.push(None);
            }
            ds.push(Annotation {
                task,
                annotator,
                label,
            })
        })?;
        ds.num_choices = ds.labels.names.len();
        if let Some(k) = opts.num_choices {
            if k < ds.num_choices {
                return Err(Error::Config(format!(
                    "num_choices override {k} is below the {} labels observed",
                    ds.num_choices
                )));
            }
            ds.extend_choices(k);
        }
        ds.finish();
        Ok(ds)
    }

    /// Reads `<task> <label>` lines. Tasks absent from the answers are
    /// skipped with a warning since there is nothing to aggregate for them.
    pub fn load_truths(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut skipped = 0usize;
        for_each_record(path, 2, |fields| {
            let Some(task) = self.tasks.get(fields[0]) else {
                skipped += 1;
                log::warn!("truth for unannotated task `{}` skipped", fields[0]);
                return Ok(());
            };
            let label = self.labels.get(fields[1]).ok_or_else(|| Error::UnknownLabel {
                label: fields[1].to_owned(),
                context: Some(format!("truth of task `{}`", fields[0])),
            })?;
            self.truths[task] = Some(label);
            Ok(())
        })?;
        if skipped > 0 {
            log::warn!("{skipped} truths referenced unannotated tasks");
        }
        Ok(self)
    }

    /// Fails unless the dataset has at least two choices.
    pub fn validate_choices(&self) -> Result<()> {
        if self.num_choices < 2 {
            return Err(Error::TooFewChoices(self.num_choices));
        }
        Ok(())
    }

    fn label_index(&mut self, name: &str, context: &str) -> Result<usize> {
        if self.labels_closed {
            self.labels.get(name).ok_or_else(|| Error::UnknownLabel {
                label: name.to_owned(),
                context: Some(context.to_owned()),
            })
        } else {
            Ok(self.labels.intern(name))
        }
    }

    fn extend_choices(&mut self, k: usize) {
        let mut next = 0usize;
        while self.labels.names.len() < k {
            let name = format!("label{next}");
            if self.labels.get(&name).is_none() {
                self.labels.intern(&name);
            }
            next += 1;
        }
        self.num_choices = k;
    }

    fn push(&mut self, a: Annotation) -> Result<()> {
        let row = &mut self.by_task[a.task];
        match row.binary_search_by_key(&a.annotator, |x| x.annotator) {
            Ok(_) => Err(Error::DuplicateAnnotation {
                task: self.tasks.names[a.task].clone(),
                annotator: self.annotators.names[a.annotator].clone(),
            }),
            Err(pos) => {
                row.insert(pos, a);
                self.annotations.push(a);
                Ok(())
            }
        }
    }

    fn finish(&mut self) {
        self.l_max = self.by_task.iter().map(Vec::len).max().unwrap_or(0);
    }

    pub fn num_tasks(&self) -> usize {
        self.by_task.len()
    }

    pub fn num_annotators(&self) -> usize {
        self.annotators.names.len()
    }

    pub fn num_choices(&self) -> usize {
        self.num_choices
    }

    /// All annotations in ingestion order.
    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    /// Annotations of one task in canonical (ascending annotator) order.
    pub fn task_annotations(&self, task: usize) -> &[Annotation] {
        &self.by_task[task]
    }

    pub fn truth(&self, task: usize) -> Option<usize> {
        self.truths[task]
    }

    pub fn truths(&self) -> &[Option<usize>] {
        &self.truths
    }

    /// Tasks with a known truth, ascending.
    pub fn truthed_tasks(&self) -> Vec<usize> {
        (0..self.num_tasks())
            .filter(|&t| self.truths[t].is_some())
            .collect()
    }

    pub fn num_truths(&self) -> usize {
        self.truths.iter().filter(|t| t.is_some()).count()
    }

    /// Maximum number of annotations on a single task.
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Maximum annotation count over the given tasks.
    pub fn l_max_over(&self, tasks: &[usize]) -> usize {
        tasks.iter().map(|&t| self.by_task[t].len()).max().unwrap_or(0)
    }

    pub fn task_name(&self, task: usize) -> &str {
        &self.tasks.names[task]
    }

    pub fn annotator_name(&self, annotator: usize) -> &str {
        &self.annotators.names[annotator]
    }

    pub fn label_name(&self, label: usize) -> &str {
        &self.labels.names[label]
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.tasks.get(name)
    }

    pub fn annotator_index(&self, name: &str) -> Option<usize> {
        self.annotators.get(name)
    }

    pub fn label_index_of(&self, name: &str) -> Option<usize> {
        self.labels.get(name)
    }

    pub fn label_names(&self) -> &[String] {
        &self.labels.names
    }

    pub fn annotator_names(&self) -> &[String] {
        &self.annotators.names
    }

    /// Copy in which each of `tasks` keeps only its first `keep` annotations in
    /// canonical order. Indices, names and truths are unchanged.
    pub fn truncated(&self, tasks: &[usize], keep: usize) -> Dataset {
        let mut out = self.clone();
        for &t in tasks {
            out.by_task[t].truncate(keep);
        }
        out.annotations = self
            .annotations
            .iter()
            .filter(|a| {
                out.by_task[a.task]
                    .binary_search_by_key(&a.annotator, |x| x.annotator)
                    .is_ok()
            })
            .copied()
            .collect();
        out.l_max = out.by_task.iter().map(Vec::len).max().unwrap_or(0);
        out
    }

    /// Copy without any truths.
    pub fn without_truths(&self) -> Dataset {
        let mut out = self.clone();
        out.truths.iter_mut().for_each(|t| *t = None);
        out
    }

    /// Copy in which the truths of `tasks` are removed.
    pub fn hiding_truths(&self, tasks: &[usize]) -> Dataset {
        let mut out = self.clone();
        for &t in tasks {
            out.truths[t] = None;
        }
        out
    }

    /// Copy in which the truths of `tasks` are replaced.
    pub fn with_truths(&self, replacements: &[(usize, usize)]) -> Dataset {
        let mut out = self.clone();
        for &(t, l) in replacements {
            out.truths[t] = Some(l);
        }
        out
    }

    pub fn write_answers(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_lines(path, |w| {
            for a in &self.annotations {
                writeln!(
                    w,
                    "{}\t{}\t{}",
                    self.task_name(a.task),
                    self.annotator_name(a.annotator),
                    self.label_name(a.label)
                )?;
            }
            Ok(())
        })
    }

    pub fn write_truths(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_lines(path, |w| {
            for (t, truth) in self.truths.iter().enumerate() {
                if let Some(l) = truth {
                    writeln!(w, "{}\t{}", self.task_name(t), self.label_name(*l))?;
                }
            }
            Ok(())
        })
    }
}

fn for_each_record(
    path: &Path,
    expected: usize,
    mut f: impl FnMut(&[&str]) -> Result<()>,
) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != expected {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                expected,
                found: fields.len(),
            });
        }
        f(&fields)?;
    }
    Ok(())
}

pub(crate) fn write_lines(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Train/validation/test partition of ground-truthed tasks for one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_tasks: Vec<usize>,
    pub val_tasks: Vec<usize>,
    pub test_tasks: Vec<usize>,
}

/// Fraction of each fold's non-test tasks held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Shuffles the ground-truthed tasks with a seeded PRNG and cuts them into
/// `folds` test blocks. For each fold the remaining tasks are split 20/80 into
/// validation and training (validation size rounded down).
pub fn kfold_split(ds: &Dataset, folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if folds < 2 {
        return Err(Error::Split(format!("need at least 2 folds, got {folds}")));
    }
    let mut tasks = ds.truthed_tasks();
    if tasks.len() < folds {
        return Err(Error::Split(format!(
            "{} ground-truthed tasks for {folds} folds",
            tasks.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tasks.shuffle(&mut rng);
    let n = tasks.len();
    let bounds: Vec<usize> = (0..=folds).map(|f| f * n / folds).collect();

    Ok((0..folds)
        .map(|f| {
            let test = tasks[bounds[f]..bounds[f + 1]].to_vec();
            let rest: Vec<usize> = tasks[..bounds[f]]
                .iter()
                .chain(&tasks[bounds[f + 1]..])
                .copied()
                .collect();
            let (val, train) = holdout(&rest, VALIDATION_FRACTION);
            FoldSplit {
                fold_index: f,
                train_tasks: sorted(train),
                val_tasks: sorted(val),
                test_tasks: sorted(test),
            }
        })
        .collect())
}

/// Seeded shuffle followed by a validation holdout, for training on every
/// ground-truthed task. Returns `(train, val)`.
pub fn train_val_split(ds: &Dataset, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut tasks = ds.truthed_tasks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tasks.shuffle(&mut rng);
    let (val, train) = holdout(&tasks, val_fraction);
    (sorted(train), sorted(val))
}

fn holdout(tasks: &[usize], fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n_val = (tasks.len() as f64 * fraction).floor() as usize;
    (tasks[..n_val].to_vec(), tasks[n_val..].to_vec())
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}
