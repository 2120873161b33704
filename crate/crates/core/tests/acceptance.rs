//! Acceptance gate. Every test prints exactly one line
//! `criterion <n> <PASS|FAIL|SKIP> <name>: <measurements>` and fails when the
//! criterion does not hold. Run with `--nocapture` to see the lines.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use superla::baselines::DawidSkene;
use superla::eval::{results_csv, run_benchmark, BenchConfig, BenchReport, NamedDataset};
use superla::features::{build_accuracy_feature, build_task_features, compute_stats, Vocabulary};
use superla::model::network::mean_loss;
use superla::model::{loss_and_grad, ModelDims, ModelParams};
use superla::synth::{generate, AccuracyLaw, SynthConfig};
use superla::{Dataset, SuperLa, TrainConfig};

const SUM_TOL: f64 = 1e-12;
const STD_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-3;
const EM_SLACK: f64 = 1e-9;
const ROW_SUM_TOL: f64 = 1e-9;
const MV_MARGIN_POINTS: f64 = 1.0;
const DS_MARGIN_POINTS: f64 = 1.0;
const CHANCE_BAND_POINTS: f64 = 5.0;
const LINEAR_RATIO: (f64, f64) = (0.5, 2.0);
const FOLD_8K_SECONDS: f64 = 2.0;

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n} {tag} {name}: {detail}");
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn synth(tasks: usize, annotators: usize, k: usize, redundancy: usize, law: AccuracyLaw, seed: u64) -> Dataset {
    generate(&SynthConfig {
        num_tasks: tasks,
        num_annotators: annotators,
        num_choices: k,
        redundancy,
        accuracy: law,
        seed,
    })
    .expect("valid synthetic config")
    .dataset
}

fn all_tasks(ds: &Dataset) -> Vec<usize> {
    (0..ds.num_tasks()).collect()
}

fn mean_acc(report: &BenchReport, dataset: &str, method: &str) -> f64 {
    100.0 * report.get(dataset, method).expect("cell present").mean_accuracy()
}

#[test]
fn c1_feature_correctness() {
    let mut slots = 0usize;
    let mut worst_sum: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    for seed in 0..4u64 {
        // 250 tasks x 4 answers = 1,000 annotations per dataset.
        let k = 2 + seed as usize;
        let ds = synth(250, 20, k, 4, AccuracyLaw::Uniform { lo: 0.05, hi: 1.0 }, seed);
        assert_eq!(ds.annotations().len(), 1000);
        let history: Vec<usize> = (0..125).collect();
        let stats = compute_stats(&ds, &history);
        for t in all_tasks(&ds) {
            let block = build_accuracy_feature(t, &ds, &stats, ds.l_max()).unwrap();
            for (slot, a) in block.chunks(k + 1).zip(ds.task_annotations(t)) {
                slots += 1;
                let sum: f64 = slot[..k].iter().sum();
                worst_sum = worst_sum.max((sum - 1.0).abs());
                let acc = stats.acc[a.annotator];
                let expected_std = (acc * (1.0 - acc)).sqrt();
                worst_std = worst_std.max((stats.std[a.annotator] - expected_std).abs());
                worst_std = worst_std.max((slot[k] - expected_std).abs());
            }
        }
    }
    report(
        1,
        "feature correctness",
        slots == 4000 && worst_sum <= SUM_TOL && worst_std <= STD_TOL,
        &format!("{slots} slots, max |sum-1| = {worst_sum:.2e}, max std error = {worst_std:.2e}"),
    );
}

#[test]
fn c2_gradient_fidelity() {
    let ds = synth(60, 20, 3, 4, AccuracyLaw::Uniform { lo: 0.3, hi: 0.95 }, 5);
    let stats = compute_stats(&ds, &all_tasks(&ds));
    let vocab = Vocabulary::identity(20);
    let dims = ModelDims {
        num_choices: 3,
        vocab_size: vocab.size(),
        l_max: 4,
        embed_dim: 8,
        hidden1: 16,
        hidden2: 8,
    };
    assert_eq!(ds.l_max(), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = ModelParams::init(dims, &mut rng);
    let feats: Vec<_> = (0..16)
        .map(|t| build_task_features(t, &ds, &stats, &vocab, &dims.layout()).unwrap())
        .collect();
    let batch: Vec<_> = feats
        .iter()
        .enumerate()
        .map(|(t, f)| (f, ds.truth(t).unwrap()))
        .collect();
    let (_, grads) = loss_and_grad(&params, &batch, None).unwrap();

    let chosen = sample(&mut rng, params.data.len(), 100);
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for i in chosen.iter() {
        let mut plus = params.clone();
        plus.data[i] += FD_STEP;
        let mut minus = params.clone();
        minus.data[i] -= FD_STEP;
        let numeric = (mean_loss(&plus, &batch).unwrap() - mean_loss(&minus, &batch).unwrap())
            / (2.0 * FD_STEP);
        let scale = grads[i].abs().max(numeric.abs());
        if scale > 0.0 {
            nonzero += 1;
            worst = worst.max((grads[i] - numeric).abs() / scale);
        }
    }
    report(
        2,
        "gradient fidelity",
        worst < FD_REL_TOL,
        &format!("100 parameters ({nonzero} with nonzero gradient), max relative error {worst:.2e}"),
    );
}

#[test]
fn c3_em_soundness() {
    let mut worst_drop: f64 = 0.0;
    let mut worst_row: f64 = 0.0;
    let mut iterations = 0;
    for seed in 0..20u64 {
        let k = 2 + (seed % 3) as usize;
        let ds = synth(300, 25, k, 5, AccuracyLaw::Uniform { lo: 0.3, hi: 0.95 }, 100 + seed);
        let fit = DawidSkene::default().fit(&ds, &all_tasks(&ds));
        iterations += fit.log_likelihoods.len();
        for w in fit.log_likelihoods.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        for p in fit.posteriors.values() {
            worst_row = worst_row.max((p.iter().sum::<f64>() - 1.0).abs());
        }
        worst_row = worst_row.max((fit.params.prior.iter().sum::<f64>() - 1.0).abs());
        for cm in &fit.params.confusions {
            for g in 0..k {
                worst_row = worst_row.max((cm.row(g).iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    report(
        3,
        "EM soundness",
        worst_drop <= EM_SLACK && worst_row <= ROW_SUM_TOL,
        &format!(
            "20 datasets, {iterations} E-steps, largest log-likelihood drop {worst_drop:.2e}, max |row sum - 1| {worst_row:.2e}"
        ),
    );
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        max_epochs: 30,
        ..TrainConfig::default()
    }
}

fn trained_model(seed: u64) -> (Dataset, SuperLa) {
    let ds = synth(1000, 50, 2, 5, AccuracyLaw::Uniform { lo: 0.55, hi: 0.95 }, seed);
    let (train, val): (Vec<usize>, Vec<usize>) = all_tasks(&ds).into_iter().partition(|t| t % 5 != 0);
    let (model, _) = SuperLa::train(&ds, &train, &val, &quick_config()).unwrap();
    (ds, model)
}

fn param_bytes(model: &SuperLa) -> Vec<u8> {
    model
        .params
        .data
        .iter()
        .flat_map(|x| x.to_le_bytes())
        .collect()
}

#[test]
fn c4_inference_purity() {
    let (_, model) = trained_model(40);
    let before = param_bytes(&model);
    let pending = synth(10_000, 50, 2, 5, AccuracyLaw::Uniform { lo: 0.55, hi: 0.95 }, 41).without_truths();
    let out = model.infer_all(&pending).unwrap();
    let after = param_bytes(&model);
    report(
        4,
        "inference purity",
        before == after && out.predictions.len() == 10_000,
        &format!(
            "{} tasks inferred, {} parameter bytes unchanged: {}",
            out.predictions.len(),
            before.len(),
            before == after
        ),
    );
}

#[test]
fn c5_oracle_superiority() {
    let methods: Vec<String> = ["mv", "ds", "superla"].map(String::from).to_vec();
    let config = BenchConfig {
        timing_runs: 1,
        ..BenchConfig::default()
    };
    let (mut mv, mut dsm, mut sl) = (0.0, 0.0, 0.0);
    let seeds = [1u64, 2, 3];
    for &seed in &seeds {
        let data = synth(2000, 50, 2, 5, AccuracyLaw::Uniform { lo: 0.55, hi: 0.95 }, seed);
        let name = format!("synthetic-{seed}");
        let rep = run_benchmark(
            &[NamedDataset { name: name.clone(), data }],
            &methods,
            &BenchConfig { seed, ..config.clone() },
        );
        assert!(rep.errors.is_empty(), "{:?}", rep.errors);
        mv += mean_acc(&rep, &name, "mv") / seeds.len() as f64;
        dsm += mean_acc(&rep, &name, "ds") / seeds.len() as f64;
        sl += mean_acc(&rep, &name, "superla") / seeds.len() as f64;
    }
    report(
        5,
        "oracle superiority",
        sl >= mv + MV_MARGIN_POINTS && sl >= dsm - DS_MARGIN_POINTS,
        &format!("mean accuracy over 3 seeds: superla {sl:.2}, mv {mv:.2}, ds {dsm:.2}"),
    );
}

#[test]
fn c6_chance_floor() {
    let data = synth(2000, 50, 2, 5, AccuracyLaw::Fixed(0.5), 6);
    let methods: Vec<String> = superla::eval::Method::names().into_iter().map(String::from).collect();
    let rep = run_benchmark(
        &[NamedDataset { name: "chance".into(), data }],
        &methods,
        &BenchConfig {
            timing_runs: 1,
            ..BenchConfig::default()
        },
    );
    assert!(rep.errors.is_empty(), "{:?}", rep.errors);
    let scores: Vec<(String, f64)> = rep
        .results
        .iter()
        .map(|r| (r.method.clone(), 100.0 * r.mean_accuracy()))
        .collect();
    let pass = scores.len() == methods.len()
        && scores.iter().all(|(_, a)| (a - 50.0).abs() <= CHANCE_BAND_POINTS);
    let detail = scores
        .iter()
        .map(|(m, a)| format!("{m} {a:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(6, "chance floor", pass, &detail);
}

/// Results CSV without the wall-clock column.
fn timeless(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn c7_determinism() {
    let run = || {
        let sets = vec![
            NamedDataset {
                name: "a".into(),
                data: synth(400, 30, 3, 4, AccuracyLaw::Uniform { lo: 0.4, hi: 0.9 }, 70),
            },
            NamedDataset {
                name: "b".into(),
                data: synth(300, 20, 2, 3, AccuracyLaw::TwoPoint { p1: 0.9, p2: 0.55, mix: 0.3 }, 71),
            },
        ];
        let methods: Vec<String> = superla::eval::Method::names().into_iter().map(String::from).collect();
        run_benchmark(
            &sets,
            &methods,
            &BenchConfig {
                seed: 7,
                timing_runs: 1,
                train: quick_config(),
                ..BenchConfig::default()
            },
        )
    };
    let (first, second) = (run(), run());
    let same_cells = timeless(&results_csv(&first)) == timeless(&results_csv(&second));
    let same_preds = first
        .results
        .iter()
        .zip(&second.results)
        .all(|(a, b)| a.folds.iter().zip(&b.folds).all(|(x, y)| x.predictions == y.predictions));
    let cells: usize = first.results.iter().map(|r| r.folds.len()).sum();
    report(
        7,
        "determinism",
        first.errors.is_empty() && cells == 48 && same_cells && same_preds,
        &format!("{cells} fold cells, identical metrics {same_cells}, identical predictions {same_preds}"),
    );
}

fn median_infer_seconds(model: &SuperLa, ds: &Dataset, runs: usize) -> f64 {
    let mut secs: Vec<f64> = (0..runs)
        .map(|_| {
            let start = Instant::now();
            let out = model.infer_all(ds).unwrap();
            let s = start.elapsed().as_secs_f64();
            assert_eq!(out.predictions.len(), ds.num_tasks());
            s
        })
        .collect();
    secs.sort_by(f64::total_cmp);
    secs[runs / 2]
}

#[test]
fn c8_scaling() {
    let (_, model) = trained_model(80);
    let law = AccuracyLaw::Uniform { lo: 0.55, hi: 0.95 };
    let small = synth(1_000, 50, 2, 5, law, 81).without_truths();
    let large = synth(10_000, 50, 2, 5, law, 82).without_truths();
    let fold = synth(8_000, 50, 2, 5, law, 83).without_truths();
    // Warm up allocator and caches.
    median_infer_seconds(&model, &small, 1);
    let t_small = median_infer_seconds(&model, &small, 7);
    let t_large = median_infer_seconds(&model, &large, 5);
    let t_fold = median_infer_seconds(&model, &fold, 3);
    let ratio = t_large / (10.0 * t_small);
    report(
        8,
        "scaling",
        ratio >= LINEAR_RATIO.0 && ratio <= LINEAR_RATIO.1 && t_fold < FOLD_8K_SECONDS,
        &format!(
            "1k {t_small:.4}s, 10k {t_large:.4}s, ratio to linear {ratio:.2}, 8k fold {t_fold:.4}s"
        ),
    );
}

/// Public datasets are looked up under `$SUPERLA_DATA_DIR/<name>/` (default
/// `data/` at the workspace root) as `answer.csv` and `truth.csv`.
fn public_dataset(name: &str) -> Option<Dataset> {
    let root = std::env::var_os("SUPERLA_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    let dir = root.join(name);
    let answers = dir.join("answer.csv");
    let truths = dir.join("truth.csv");
    if !answers.exists() || !truths.exists() {
        return None;
    }
    Some(
        Dataset::load_annotations(&answers)
            .and_then(|d| d.load_truths(&truths))
            .expect("dataset files parse"),
    )
}

fn public_benchmark(name: &str) -> Option<BenchReport> {
    let data = public_dataset(name)?;
    let methods: Vec<String> = ["mv", "ds", "superla"].map(String::from).to_vec();
    let rep = run_benchmark(
        &[NamedDataset { name: name.into(), data }],
        &methods,
        &BenchConfig {
            timing_runs: 1,
            ..BenchConfig::default()
        },
    );
    assert!(rep.errors.is_empty(), "{:?}", rep.errors);
    Some(rep)
}

fn skip(n: u32, name: &str) {
    println!("criterion {n} SKIP {name}: dataset files not present");
}

#[test]
fn c9_rte() {
    let Some(rep) = public_benchmark("rte") else {
        return skip(9, "rte reproduction");
    };
    let (mv, dsm, sl) = (mean_acc(&rep, "rte", "mv"), mean_acc(&rep, "rte", "ds"), mean_acc(&rep, "rte", "superla"));
    report(
        9,
        "rte reproduction",
        (mv - 87.50).abs() <= 2.0 && (dsm - 92.25).abs() <= 2.0 && (sl - 92.13).abs() <= 3.0,
        &format!("mv {mv:.2}, ds {dsm:.2}, superla {sl:.2}"),
    );
}

#[test]
fn c10_duck() {
    let Some(rep) = public_benchmark("duck") else {
        return skip(10, "duck reproduction");
    };
    let (mv, sl) = (mean_acc(&rep, "duck", "mv"), mean_acc(&rep, "duck", "superla"));
    report(
        10,
        "duck reproduction",
        (sl - 89.81).abs() <= 4.0 && sl - mv >= 8.0,
        &format!("superla {sl:.2}, mv {mv:.2}"),
    );
}

#[test]
fn c11_bird() {
    let Some(rep) = public_benchmark("bird") else {
        return skip(11, "bird reproduction");
    };
    let sl = mean_acc(&rep, "bird", "superla");
    report(11, "bird reproduction", (sl - 87.96).abs() <= 4.0, &format!("superla {sl:.2}"));
}
