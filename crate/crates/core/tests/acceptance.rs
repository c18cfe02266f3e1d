//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line to
//! stderr (uncaptured) before asserting.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use randomhar::data::{generate_synthetic, loso_splits, slide_windows, Window};
use randomhar::ensemble::mode_vote;
use randomhar::experiment::{self, ExperimentConfig};
use randomhar::metrics::{accuracy, confusion, macro_f1, EvalReport};
use randomhar::nn::{Architecture, Classifier, ConvBlock, ModelConfig};
use randomhar::selection::{
    brute_force_search, gradient_estimate, rl_search, sample_theta, topk_select_table, RlConfig, SearchMean,
    VoteTable,
};

fn verdict(n: u32, name: &str, ok: bool, detail: String) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[{tag}] criterion {n}: {name}: {detail}");
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

#[test]
fn c1_vote_matches_frequency_counter() {
    let start = Instant::now();
    let classes = 3usize;
    let mut checked = 0;
    let mut mismatches = 0;
    for len in 1..=5u32 {
        for code in 0..classes.pow(len) {
            let labels: Vec<usize> = (0..len).map(|i| code / classes.pow(i) % classes).collect();
            let mut freq: HashMap<usize, usize> = HashMap::new();
            for &l in &labels {
                *freq.entry(l).or_default() += 1;
            }
            let top = *freq.values().max().unwrap();
            let expected = *freq.iter().filter(|(_, &c)| c == top).map(|(l, _)| l).min().unwrap();
            if mode_vote(&labels).unwrap() != expected {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "voting oracle",
        mismatches == 0 && elapsed < Duration::from_secs(1),
        format!("{checked} tuples, {mismatches} mismatches, {elapsed:.2?}"),
    );
}

fn random_model(rng: &mut ChaCha8Rng, cnn: bool) -> (ModelConfig, Vec<Window>) {
    loop {
        let channels = rng.random_range(1..=3);
        let width = rng.random_range(6..=10);
        let classes = rng.random_range(2..=4);
        let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=6)).collect();
        let architecture = if cnn {
            Architecture::Cnn1d {
                conv: vec![ConvBlock {
                    filters: rng.random_range(1..=3),
                    kernel: rng.random_range(2..=3),
                    pool: rng.random_range(1..=2),
                }],
                hidden,
            }
        } else {
            Architecture::Mlp { hidden }
        };
        let cfg = ModelConfig::new(architecture, channels, width, classes);
        if cfg.num_parameters().unwrap() > 500 {
            continue;
        }
        let batch = (0..3)
            .map(|_| {
                let data = (0..channels * width).map(|_| rng.random_range(-1.0..1.0)).collect();
                Window::new(data, channels, width, rng.random_range(0..classes), 0).unwrap()
            })
            .collect();
        return (cfg, batch);
    }
}

#[test]
fn c2_gradient_check() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut instances = 0;
    for cnn in [false, true] {
        for i in 0..20 {
            let (cfg, batch) = random_model(&mut rng, cnn);
            let init = Classifier::init(cfg.clone(), i).unwrap();
            // perturb so biases are non-zero
            let params: Vec<f64> = init.parameters().iter().map(|p| p + rng.random_range(-0.3..0.3)).collect();
            let model = Classifier::from_parameters(cfg.clone(), params.clone()).unwrap();
            let (_, grad) = model.loss_and_grad(&batch).unwrap();
            for j in 0..params.len() {
                let mut plus = params.clone();
                plus[j] += h;
                let mut minus = params.clone();
                minus[j] -= h;
                let lp = Classifier::from_parameters(cfg.clone(), plus).unwrap().loss_and_grad(&batch).unwrap().0;
                let lm = Classifier::from_parameters(cfg.clone(), minus).unwrap().loss_and_grad(&batch).unwrap().0;
                let numeric = (lp - lm) / (2.0 * h);
                let scale = grad[j].abs().max(numeric.abs());
                // both sides vanish (dead unit): exact agreement
                let rel = if scale < 1e-10 { 0.0 } else { (grad[j] - numeric).abs() / scale };
                worst = worst.max(rel);
            }
            instances += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        "gradient check",
        worst < 1e-4 && elapsed < Duration::from_secs(30),
        format!("{instances} instances (20 MLP, 20 CNN), max rel error {worst:.2e}, {elapsed:.2?}"),
    );
}

/// Mean and standard error of single-sample gradient estimates.
fn estimator_moments(mu: &SearchMean, reward: impl Fn(&[f64]) -> f64, draws: u64) -> (Vec<f64>, Vec<f64>) {
    let k = mu.0.len();
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    for d in 0..draws {
        let mut s = sample_theta(mu, d);
        s.reward = Some(reward(&s.theta));
        let g = gradient_estimate(mu, std::slice::from_ref(&s)).unwrap();
        for j in 0..k {
            sum[j] += g[j];
            sum_sq[j] += g[j] * g[j];
        }
    }
    let n = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = (0..k)
        .map(|j| ((sum_sq[j] / n - mean[j] * mean[j]) * n / (n - 1.0) / n).sqrt())
        .collect();
    (mean, se)
}

#[test]
fn c3_estimator_sanity() {
    let mu = SearchMean(vec![0.5, -0.3, 1.2, 0.0, 0.7]);
    let w = [1.0, -2.0, 0.5, 0.0, 3.0];
    let (mean, se) = estimator_moments(&mu, |t| w.iter().zip(t).map(|(a, b)| a * b).sum(), 100_000);
    let linear_ok = (0..w.len()).all(|j| (mean[j] - w[j]).abs() <= 3.0 * se[j]);
    let linear_z: Vec<String> = (0..w.len()).map(|j| format!("{:.2}", (mean[j] - w[j]) / se[j])).collect();

    let (mean0, se0) = estimator_moments(&mu, |_| 0.8, 100_000);
    let const_ok = (0..w.len()).all(|j| mean0[j].abs() <= 3.0 * se0[j]);
    let const_z: Vec<String> = (0..w.len()).map(|j| format!("{:.2}", mean0[j] / se0[j])).collect();
    verdict(
        3,
        "estimator sanity",
        linear_ok && const_ok,
        format!("10^5 draws; linear z-scores [{}], constant z-scores [{}]", linear_z.join(", "), const_z.join(", ")),
    );
}

#[test]
fn c4_selector_finds_planted_subset() {
    let k = 6;
    let target = [true, false, true, true, false, true];
    let reward = |bits: &[bool]| {
        let agree = bits.iter().zip(&target).filter(|(a, b)| a == b).count();
        agree as f64 / k as f64
    };
    let (best, best_reward) = brute_force_search(k, reward).unwrap();
    let optima = (1u32..1 << k)
        .filter(|m| {
            let bits: Vec<bool> = (0..k).map(|i| m >> (k - 1 - i) & 1 == 1).collect();
            reward(&bits) == best_reward
        })
        .count();
    let unique = best == target && optima == 1;

    let start = Instant::now();
    let hits = (0..10u64)
        .filter(|&seed| {
            let rc = RlConfig {
                iterations: 200,
                seed,
                ..RlConfig::default()
            };
            rl_search(k, &rc, reward).unwrap().bits == target
        })
        .count();
    let elapsed = start.elapsed();
    verdict(
        4,
        "selector vs oracle",
        unique && hits >= 9 && elapsed < Duration::from_secs(10),
        format!("unique optimum over 63 subsets: {unique}; {hits}/10 runs optimal; {elapsed:.2?}"),
    );
}

#[test]
fn c5_topk_matches_sort() {
    let n = 40;
    // member i is right on `correct[i]` windows; all counts distinct
    let correct = [17usize, 33, 8, 25, 40, 12, 29, 3, 36, 21];
    let truth: Vec<usize> = (0..n).map(|w| w % 3).collect();
    let predictions: Vec<Vec<usize>> = correct
        .iter()
        .map(|&c| truth.iter().enumerate().map(|(w, &t)| if w < c { t } else { (t + 1) % 3 }).collect())
        .collect();
    let table = VoteTable::new(predictions, truth, 3).unwrap();
    let chosen = topk_select_table(&table, 5).unwrap();

    let mut order: Vec<usize> = (0..correct.len()).collect();
    order.sort_by(|&a, &b| correct[b].cmp(&correct[a]));
    let mut expected = vec![false; correct.len()];
    for &i in &order[..5] {
        expected[i] = true;
    }
    let picked: Vec<usize> = (0..chosen.len()).filter(|&i| chosen[i]).collect();
    verdict(
        5,
        "TopK oracle",
        chosen == expected,
        format!("top-5 members {picked:?}, independent sort {:?}", {
            let mut t = order[..5].to_vec();
            t.sort();
            t
        }),
    );
}

fn quickstart_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/quickstart.toml")
}

struct QuickstartRuns {
    first: EvalReport,
    second: EvalReport,
    first_json: String,
    second_json: String,
    elapsed: Duration,
}

/// The quick-start config run twice: once on the default pool, once with
/// a single worker. Shared by criteria 6 and 9.
fn quickstart_runs() -> &'static QuickstartRuns {
    static RUNS: OnceLock<QuickstartRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let cfg = ExperimentConfig::load(quickstart_path()).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let first = experiment::run(&cfg, dir_a.path(), None).unwrap();
        let elapsed = start.elapsed();
        let second = experiment::run(&cfg, dir_b.path(), Some(1)).unwrap();
        let read = |d: &tempfile::TempDir| std::fs::read_to_string(d.path().join(experiment::REPORT_FILE)).unwrap();
        QuickstartRuns {
            first_json: read(&dir_a),
            second_json: read(&dir_b),
            first,
            second,
            elapsed,
        }
    })
}

#[test]
fn c6_desk_scale_ordering() {
    let runs = quickstart_runs();
    let cfg = ExperimentConfig::load(quickstart_path()).unwrap();
    let spec = cfg.data.synthetic.as_ref().unwrap();
    let report = &runs.first;
    let f1 = |m: &str| report.aggregate[m].macro_f1.mean;
    let (base, all, rl) = (f1("base"), f1("all"), f1("rl"));
    let shape_ok = spec.channels.len() == 8 && spec.n_subjects == 6 && spec.num_classes == 4 && report.seeds.len() == 5;
    let ok = shape_ok && rl >= all && rl >= base && rl - base >= 0.02 && runs.elapsed < Duration::from_secs(600);
    verdict(
        6,
        "ordering at desk scale",
        ok,
        format!(
            "macro-F1 base {base:.4}, topk {:.4}, all {all:.4}, rl {rl:.4}; rl-base {:+.4}, rl-all {:+.4}; {} cells in {:.1?}",
            f1("topk"),
            rl - base,
            rl - all,
            report.folds.len() / report.methods.len(),
            runs.elapsed
        ),
    );
}

#[test]
fn c7_metric_ground_truth() {
    let cm = confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
    let f1 = macro_f1(&cm);
    let acc = accuracy(&cm);
    verdict(
        7,
        "metric ground truth",
        (f1 - 11.0 / 15.0).abs() < 1e-9 && (acc - 0.75).abs() < 1e-12,
        format!("macro-F1 {f1:.12} (11/15 = {:.12}), accuracy {acc}", 11.0 / 15.0),
    );
}

#[test]
fn c8_loso_hygiene() {
    let cfg = ExperimentConfig::load(quickstart_path()).unwrap();
    let d = generate_synthetic(cfg.data.synthetic.as_ref().unwrap(), 3).unwrap();
    let wd = slide_windows(&d, 32, 16).unwrap();
    let plan = loso_splits(&wd, 0.1, 5).unwrap();
    let subjects = wd.subjects();
    let mut tested = vec![0usize; 6];
    let mut overlaps = 0;
    let mut coverage = vec![0usize; wd.len()];
    for fold in &plan.folds {
        let s = fold.test_subject.unwrap();
        tested[s] += 1;
        overlaps += fold.test.iter().filter(|&&i| subjects[i] != s).count();
        overlaps += fold.train.iter().chain(&fold.validation).filter(|&&i| subjects[i] == s).count();
        for &i in &fold.test {
            coverage[i] += 1;
        }
    }
    let ok = plan.folds.len() == 6 && tested.iter().all(|&t| t == 1) && overlaps == 0 && coverage.iter().all(|&c| c == 1);
    verdict(
        8,
        "LOSO split hygiene",
        ok,
        format!(
            "{} folds, tests per subject {tested:?}, {overlaps} leaked windows, every window tested once: {}",
            plan.folds.len(),
            coverage.iter().all(|&c| c == 1)
        ),
    );
}

#[test]
fn c9_determinism() {
    let runs = quickstart_runs();
    let strip = |s: &str| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_str(s).unwrap();
        v.as_object_mut().unwrap().remove("created_at");
        v
    };
    let same_json = strip(&runs.first_json) == strip(&runs.second_json);
    let timestamp_only = {
        let mut a = runs.first.clone();
        a.created_at = runs.second.created_at.clone();
        a == runs.second
    };
    let text_equal = runs
        .first_json
        .lines()
        .zip(runs.second_json.lines())
        .filter(|(a, b)| a != b)
        .all(|(a, _)| a.trim_start().starts_with("\"created_at\""));
    verdict(
        9,
        "determinism",
        same_json && timestamp_only && text_equal,
        format!(
            "report JSON identical apart from created_at: {}; second run used 1 worker",
            same_json && text_equal
        ),
    );
}
