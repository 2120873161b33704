use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use superla::dataset::train_val_split;
use superla::eval::config::GridFile;
use superla::eval::{
    redundancy_sweep, results_csv, run_benchmark, summary_table, sweep_csv, write_predictions,
    BaselineMode, BenchConfig, CellError, Method, NamedDataset,
};
use superla::synth::{generate, AccuracyLaw, SynthConfig};
use superla::{Dataset, SuperLa, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "superla", version, about = "Supervised label aggregation for crowdsourced annotations")]
struct Cli {
    /// Seed for splits, initialization and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on every ground-truthed task, holding out 20% for early stopping.
    Train {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        truths: PathBuf,
        #[arg(long, default_value = "model.json")]
        model: PathBuf,
        #[arg(long, default_value = "history.csv")]
        history: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Label every annotated task with a trained model.
    Infer {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "predictions.txt")]
        out: PathBuf,
    },
    /// Run a dataset x method grid described by a TOML file.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results.csv")]
        results: PathBuf,
        /// Write per-fold prediction dumps under `<out-dir>/predictions`.
        #[arg(long)]
        dump_predictions: bool,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Generate a synthetic answer file, truth file and annotator accuracies.
    Simulate {
        #[arg(long, default_value_t = 1000)]
        tasks: usize,
        #[arg(long, default_value_t = 50)]
        annotators: usize,
        #[arg(long, default_value_t = 2)]
        choices: usize,
        #[arg(long, default_value_t = 5)]
        redundancy: usize,
        /// `uniform:lo:hi`, `fixed:p` or `two-point:p1:p2:mix`.
        #[arg(long, default_value = "uniform:0.55:0.95")]
        accuracy: AccuracyLaw,
    },
    /// Accuracy as test tasks keep only their first r annotations.
    Redundancy {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        truths: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "mv,wawa,zbs,ds,zc,superla")]
        methods: Vec<String>,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        #[arg(long, default_value = "test-only")]
        mode: BaselineMode,
        #[arg(long, default_value = "sweep.csv")]
        results: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
}

/// Flat hyperparameter overrides, one flag per training key.
#[derive(Args, Debug, Default)]
struct TrainOverrides {
    #[arg(long, alias = "learning-rate")]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    replication: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden1: Option<usize>,
    #[arg(long)]
    hidden2: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$target = v; })*
            };
        }
        set!(
            lr => learning_rate,
            batch_size => batch_size,
            weight_decay => weight_decay,
            dropout => dropout,
            patience => patience,
            replication => replication,
            max_epochs => max_epochs,
            embed_dim => embed_dim,
            hidden1 => hidden1,
            hidden2 => hidden2
        );
    }
}

fn echo(section: &str, entries: &[(&str, String)]) {
    for (k, v) in entries {
        println!("# {section}.{k} = {v}");
    }
}

fn echo_train(cfg: &TrainConfig) {
    echo("train", &cfg.entries());
}

fn load_labelled(answers: &Path, truths: &Path) -> Result<Dataset> {
    let ds = Dataset::load_annotations(answers)?.load_truths(truths)?;
    log::info!(
        "{} tasks, {} annotators, {} choices, {} truths",
        ds.num_tasks(),
        ds.num_annotators(),
        ds.num_choices(),
        ds.num_truths()
    );
    Ok(ds)
}

fn resolve_train(cli_seed: Option<u64>, base: TrainConfig, overrides: &TrainOverrides) -> Result<TrainConfig> {
    let mut cfg = base;
    overrides.apply(&mut cfg);
    if let Some(s) = cli_seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the command; `Ok(false)` means it completed but produced error rows.
fn run(cli: Cli) -> Result<bool> {
    let out = &cli.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    echo(
        "run",
        &[
            ("out_dir", out.display().to_string()),
            ("seed", cli.seed.map_or("default".into(), |s| s.to_string())),
        ],
    );

    match cli.command {
        Command::Train {
            answers,
            truths,
            model,
            history,
            overrides,
        } => {
            let cfg = resolve_train(cli.seed, TrainConfig::default(), &overrides)?;
            echo_train(&cfg);
            let ds = load_labelled(&answers, &truths)?;
            if ds.num_truths() == 0 {
                bail!("no ground-truthed tasks in {}", truths.display());
            }
            let (train, val) = train_val_split(&ds, superla::dataset::VALIDATION_FRACTION, cfg.seed);
            let (m, hist) = SuperLa::train(&ds, &train, &val, &cfg)?;
            let model_path = out.join(model);
            m.save(&model_path)?;
            let hist_path = out.join(history);
            fs::write(&hist_path, hist.to_csv()).with_context(|| format!("writing {}", hist_path.display()))?;
            println!(
                "trained {} epochs (best {} with validation loss {:.6}); wrote {} and {}",
                hist.epochs.len(),
                hist.best_epoch,
                hist.best_val_loss,
                model_path.display(),
                hist_path.display()
            );
            Ok(true)
        }
        Command::Infer {
            answers,
            model,
            out: preds,
        } => {
            echo(
                "infer",
                &[
                    ("answers", answers.display().to_string()),
                    ("model", model.display().to_string()),
                ],
            );
            let m = SuperLa::load(&model)?;
            let ds = m.load_answers(&answers)?;
            let inference = m.infer_all(&ds)?;
            let path = out.join(preds);
            write_predictions(&path, &ds, &inference.predictions)?;
            println!("{} predictions written to {}", inference.predictions.len(), path.display());
            Ok(true)
        }
        Command::Benchmark {
            config,
            results,
            dump_predictions,
            overrides,
        } => {
            let grid = GridFile::read(&config)?;
            let mut bench = grid.bench_config()?;
            bench.train = resolve_train(None, bench.train, &overrides)?;
            if let Some(s) = cli.seed {
                bench.seed = s;
                bench.train.seed = s;
            }
            if dump_predictions {
                let dir = out.join("predictions");
                fs::create_dir_all(&dir)?;
                bench.dump_dir = Some(dir);
            }
            echo_bench(&bench, &grid.methods);
            let base = config.parent().unwrap_or(Path::new("."));
            let datasets = grid.load_datasets(base)?;
            let report = run_benchmark(&datasets, &grid.methods, &bench);
            let path = out.join(results);
            fs::write(&path, results_csv(&report)).with_context(|| format!("writing {}", path.display()))?;
            print!("{}", summary_table(&report.results));
            write_errors(&path, &report.errors)?;
            Ok(report.errors.is_empty())
        }
        Command::Simulate {
            tasks,
            annotators,
            choices,
            redundancy,
            accuracy,
        } => {
            let cfg = SynthConfig {
                num_tasks: tasks,
                num_annotators: annotators,
                num_choices: choices,
                redundancy,
                accuracy,
                seed: cli.seed.unwrap_or(0),
            };
            echo(
                "simulate",
                &[
                    ("tasks", tasks.to_string()),
                    ("annotators", annotators.to_string()),
                    ("choices", choices.to_string()),
                    ("redundancy", redundancy.to_string()),
                    ("accuracy", cfg.accuracy.to_string()),
                    ("seed", cfg.seed.to_string()),
                ],
            );
            let s = generate(&cfg)?;
            s.dataset.write_answers(out.join("answers.txt"))?;
            s.dataset.write_truths(out.join("truths.txt"))?;
            let acc: String = s
                .accuracies
                .iter()
                .enumerate()
                .map(|(i, a)| format!("{}\t{a}\n", s.dataset.annotator_name(i)))
                .collect();
            fs::write(out.join("accuracies.txt"), acc)?;
            println!(
                "wrote {} annotations over {} tasks to {}",
                s.dataset.annotations().len(),
                tasks,
                out.display()
            );
            Ok(true)
        }
        Command::Redundancy {
            answers,
            truths,
            levels,
            methods,
            folds,
            mode,
            results,
            overrides,
        } => {
            let mut bench = BenchConfig {
                folds,
                mode,
                ..BenchConfig::default()
            };
            bench.train = resolve_train(cli.seed, bench.train, &overrides)?;
            bench.seed = cli.seed.unwrap_or(0);
            echo_bench(&bench, &methods);
            echo(
                "redundancy",
                &[(
                    "levels",
                    levels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(","),
                )],
            );
            let ds = load_labelled(&answers, &truths)?;
            let name = answers
                .file_stem()
                .map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
            let report = redundancy_sweep(&NamedDataset { name, data: ds }, &methods, &levels, &bench);
            let path = out.join(results);
            fs::write(&path, sweep_csv(&report))?;
            for row in &report.rows {
                println!(
                    "r={:<3} {:<8} {:.2}",
                    row.level,
                    row.result.method,
                    100.0 * row.result.mean_accuracy()
                );
            }
            write_errors(&path, &report.errors)?;
            Ok(report.errors.is_empty())
        }
    }
}

/// Failed cells go to stderr and, when there are any, to `<results>.errors.txt`.
fn write_errors(results: &Path, errors: &[CellError]) -> Result<()> {
    if errors.is_empty() {
        return Ok(());
    }
    let mut text = String::new();
    for e in errors {
        eprintln!("error in {} / {}: {}", e.dataset, e.method, e.message);
        text.push_str(&format!("{}\t{}\t{}\n", e.dataset, e.method, e.message));
    }
    let path = results.with_extension("errors.txt");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn echo_bench(bench: &BenchConfig, methods: &[String]) {
    echo(
        "bench",
        &[
            ("folds", bench.folds.to_string()),
            ("seed", bench.seed.to_string()),
            ("mode", bench.mode.name().to_owned()),
            ("methods", methods.join(",")),
            ("timing_runs", bench.timing_runs.to_string()),
            ("registry", Method::names().join(",")),
        ],
    );
    echo_train(&bench.train);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
