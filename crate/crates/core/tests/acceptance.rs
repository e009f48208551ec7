//! Acceptance criteria, one verdict line each. Exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ladder_laws::analysis::{ablate_by_flops, pearson, sd_last_n, AblationTarget};
use ladder_laws::curves::{curve_chain_params, fit_curve, LRSchedule};
use ladder_laws::laws::{
    chain_params, eval_log_sigmoid, eval_power_law, eval_sigmoid, fit_flops_law, fit_sigmoid, fit_single_step,
    fit_step1_records, fit_step2, step1_objective, AccuracyPoint, LogSigmoidParams, LossPoint,
};
use ladder_laws::metrics::relative_error;
use ladder_laws::optim::{min_eigenvalue, numerical_hessian, Objective};
use ladder_laws::presets;
use ladder_laws::synth::{checkpoint_steps, generate, GeneratorSpec, NoiseSpec};
use ladder_laws::types::{CheckpointRecord, FitConfig, LadderEntry, LadderSpec, PowerLawParams, SigmoidParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const N_7B: u64 = 6_887_575_552;
const D_7B: f64 = 3.95e12;

fn published(task: &str) -> (PowerLawParams, SigmoidParams) {
    let fit = &presets::published_fits()[task];
    (fit.step1, fit.step2)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn refs(records: &[CheckpointRecord]) -> Vec<&CheckpointRecord> {
    records.iter().collect()
}

fn synth_spec(step1: PowerLawParams, step2: SigmoidParams, ladder: LadderSpec) -> GeneratorSpec {
    let mut spec = GeneratorSpec::new(step1, step2, ladder);
    spec.task = "synthetic".into();
    spec
}

/// Printed MMLU fits chained at the 7B-4T target.
fn criterion_1() -> Verdict {
    let (s1, s2) = published("mmlu");
    let (loss, acc) = chain_params(&s1, &s2, N_7B as f64, D_7B);
    let pred = acc * 100.0;
    verdict(
        (pred - 48.4).abs() <= 2.0,
        format!("chained accuracy {pred:.2} (loss {loss:.4}) vs 48.4 +/- 2.0"),
    )
}

/// Relative error recomputed from the printed Pred/Actual columns.
fn criterion_2() -> Verdict {
    // (task, pred, actual, printed %) for 7B-4T then 13B-5T
    let table = [
        ("MMLU", [(48.4, 49.0, 1.3), (51.3, 51.6, 0.7)]),
        ("HellaSwag", [(82.5, 81.3, 1.4), (85.3, 83.2, 2.5)]),
        ("ARC-Challenge", [(51.5, 61.9, 16.9), (52.7, 63.8, 17.5)]),
        ("ARC-Easy", [(76.6, 84.6, 9.4), (77.2, 87.2, 11.4)]),
        ("PIQA", [(81.2, 82.0, 1.0), (82.1, 83.0, 1.1)]),
        ("CommonsenseQA", [(75.7, 72.6, 4.2), (77.6, 74.1, 4.7)]),
        ("Social IQa", [(58.7, 59.9, 2.0), (59.9, 61.6, 2.7)]),
        ("OpenBookQA", [(44.2, 49.4, 10.6), (44.9, 48.6, 7.8)]),
    ];
    let mut misses = Vec::new();
    let mut worst: f64 = 0.0;
    for (task, cells) in table {
        for (target, (pred, actual, printed)) in ["7B-4T", "13B-5T"].iter().zip(cells) {
            let got = relative_error(pred, actual).unwrap();
            let gap = (got - printed).abs();
            worst = worst.max(gap);
            if gap > 0.15 {
                misses.push(format!("{task} {target}: {got:.3} vs {printed}"));
            }
        }
    }
    let detail = if misses.is_empty() {
        format!("16/16 cells within 0.15 (largest gap {worst:.3})")
    } else {
        format!("{}/16 cells within 0.15; off: {}", 16 - misses.len(), misses.join(", "))
    };
    verdict(misses.is_empty(), detail)
}

/// Final checkpoints of the published 16-model grid, one per run.
fn grid_records(truth: PowerLawParams, sigma: f64, seed: u64) -> Vec<CheckpointRecord> {
    let mut spec = synth_spec(truth, published("mmlu").1, presets::ladder());
    spec.checkpoints_per_run = 1;
    spec.noise = NoiseSpec {
        loss_lognormal_sigma: sigma,
        acc_gaussian_sigma: 0.0,
    };
    spec.seed = seed;
    generate(&spec).unwrap()
}

fn random_power_law(rng: &mut ChaCha8Rng) -> PowerLawParams {
    let (n0, d0) = (190_354_176f64, 3_807_083_520f64);
    let size_exp = rng.gen_range(0.1..=0.8);
    let data_exp = rng.gen_range(0.1..=0.8);
    // each reducible term contributes 0.2 to 1.5 at the smallest ladder point
    PowerLawParams {
        size_coef: rng.gen_range(0.2..1.5) * n0.powf(size_exp),
        size_exp,
        data_coef: rng.gen_range(0.2..1.5) * d0.powf(data_exp),
        data_exp,
        irreducible: rng.gen_range(0.2..1.0),
    }
}

/// Step-1 extrapolation to 30x the largest grid point under 0.5% noise.
fn criterion_3() -> Verdict {
    let cfg = FitConfig::default();
    let (n_big, d_big) = (30.0 * 1_279_395_840f64, 30.0 * 255_879_168_000f64);
    let mut ok = 0;
    let mut errs = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let truth = random_power_law(&mut rng);
        let recs = grid_records(truth, 0.005, seed);
        let fit = fit_step1_records(&refs(&recs), &cfg).unwrap();
        let want = eval_power_law(&truth, n_big, d_big);
        let err = relative_error(eval_power_law(&fit.params, n_big, d_big), want).unwrap();
        errs.push(err);
        if err <= 2.0 {
            ok += 1;
        }
    }
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    verdict(ok >= 18, format!("{ok}/20 seeds within 2% (worst {worst:.3}%)"))
}

/// Sigmoid recovery from 1400 noisy points.
fn criterion_4() -> Verdict {
    let cfg = FitConfig::default();
    let truth = published("hellaswag").1;
    let (lo, hi) = (0.5, 1.5);
    let mut worst: f64 = 0.0;
    let mut ok = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let noise = Normal::new(0.0, 0.005).unwrap();
        let pairs: Vec<(f64, f64)> = (0..1400)
            .map(|_| {
                let l = rng.gen_range(lo..hi);
                (l, eval_sigmoid(&truth, l) + noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_sigmoid(&pairs, &cfg).unwrap();
        let dev = (0..=200)
            .map(|i| {
                let l = lo + (hi - lo) * i as f64 / 200.0;
                (eval_sigmoid(&fit.params, l) - eval_sigmoid(&truth, l)).abs()
            })
            .fold(0.0, f64::max);
        worst = worst.max(dev);
        if dev <= 0.01 {
            ok += 1;
        }
    }
    verdict(ok == 20, format!("{ok}/20 seeds within 0.01 (worst {worst:.4})"))
}

/// Curvature of the step-1 objective at random feasible points.
fn criterion_5() -> Verdict {
    let recs = grid_records(published("mmlu").0, 0.005, 5);
    let points: Vec<LossPoint> = recs
        .iter()
        .map(|r| LossPoint::new(r.model_id.clone(), r.n_params, r.tokens_seen, r.loss))
        .collect();
    let obj = step1_objective(&points, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut min_eig = f64::INFINITY;
    let mut negative = 0;
    for _ in 0..20 {
        let x = [
            rng.gen_range(0.0..8.0),
            rng.gen_range(0.0..8.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..2.0),
        ];
        let e = min_eigenvalue(&numerical_hessian(|p| obj.value(p), &x, 1e-5));
        if e < -1e-6 {
            negative += 1;
        }
        min_eig = min_eig.min(e);
    }
    verdict(
        negative == 0,
        format!("{negative}/20 points with an eigenvalue below -1e-6 (minimum {min_eig:.4})"),
    )
}

/// Loss-curve law fitted on cosine runs, extrapolated to a larger run.
fn criterion_6() -> Verdict {
    let (mmlu1, mmlu2) = published("mmlu");
    let cfg = FitConfig::default();
    let truth_f = 0.1;
    let mut spec = synth_spec(mmlu1, mmlu2, presets::ladder());
    spec.truth_decay_coef = truth_f;
    spec.schedules = presets::ladder_schedules(true);
    spec.checkpoints_per_run = 40;
    spec.noise = NoiseSpec {
        loss_lognormal_sigma: 0.005,
        acc_gaussian_sigma: 0.005,
    };
    spec.seed = 6;
    let recs = generate(&spec).unwrap();
    let r = refs(&recs);
    let fit = fit_curve(&r, &spec.schedules, None, &cfg).unwrap();
    let s2 = fit_step2(&r, &cfg).unwrap();

    let entry = LadderEntry {
        model_id: "3B-5xC".into(),
        // a whole number of batches at 5xC
        n_params: 3_019_898_880,
        chinchilla_multiplier: 5.0,
        batch_tokens: Some(4_194_304),
    };
    let mut held = synth_spec(mmlu1, mmlu2, LadderSpec {
        entries: vec![entry.clone()],
        tokens_per_param: 20.0,
    });
    held.truth_decay_coef = truth_f;
    held.checkpoints_per_run = 40;
    let (batch, steps) = held.run_shape(&entry).unwrap();
    let schedule = LRSchedule::cosine(4e-4, 1000, steps);
    held.schedules = BTreeMap::from([(entry.model_id.clone(), schedule)]);
    let truth = generate(&held).unwrap();

    let steps_at = checkpoint_steps(steps, 40);
    let pred = curve_chain_params(&fit.params, &s2.params, entry.n_params, &schedule, batch, &steps_at).unwrap();
    let (mut loss_err, mut acc_err) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(&truth) {
        assert_eq!(p.step, t.step);
        let loss = p.loss;
        loss_err += relative_error(loss, t.loss).unwrap();
        acc_err += relative_error(eval_sigmoid(&s2.params, loss), t.accuracy.unwrap()).unwrap();
    }
    let m = pred.len() as f64;
    let (loss_err, acc_err) = (loss_err / m, acc_err / m);
    verdict(
        loss_err <= 1.0 && acc_err <= 2.0,
        format!(
            "held-out loss {loss_err:.3}% (<= 1%), accuracy {acc_err:.3}% (<= 2%); fitted F {:.4} vs {truth_f}",
            fit.params.decay_coef
        ),
    )
}

/// Correlation between loss spread and prediction error across tasks.
fn criterion_7() -> Verdict {
    let sd10 = [0.0115, 0.0068, 0.0056, 0.0047, 0.0045, 0.0037, 0.0026, 0.0024, 0.0019, 0.0007];
    let err = [23.7, 4.3, 1.0, 8.2, 4.5, 7.6, 0.3, 4.7, 2.3, 1.1];
    let (r, p) = pearson(&sd10, &err).unwrap();
    let c = (9.0f64 / 10.0).sqrt();
    let series: Vec<f64> = (0..10).map(|i| 1.0 + if i % 2 == 0 { 0.0026 * c } else { -0.0026 * c }).collect();
    let (sd, rel) = sd_last_n(&series, 10).unwrap();
    let ok = (r - 0.821).abs() <= 0.01 && (p - 0.004).abs() <= 0.002 && (rel - 0.26).abs() < 1e-9;
    verdict(ok, format!("r = {r:.4}, p = {p:.4}; constructed SD {sd:.4}, relative {rel:.4}%"))
}

/// Chained error with the full ladder against the smallest usable prefix.
fn criterion_8() -> Verdict {
    let (mmlu1, mmlu2) = published("mmlu");
    let cfg = FitConfig::default();
    let target = AblationTarget {
        n_params: N_7B,
        tokens: D_7B as u64,
        actual_loss: eval_power_law(&mmlu1, N_7B as f64, D_7B),
        actual_acc: chain_params(&mmlu1, &mmlu2, N_7B as f64, D_7B).1,
    };
    let (mut first, mut full, mut seeds) = (0.0, 0.0, 0);
    for seed in 0..10u64 {
        let mut spec = synth_spec(mmlu1, mmlu2, presets::ladder());
        spec.checkpoints_per_run = 20;
        spec.noise = NoiseSpec {
            loss_lognormal_sigma: 0.01,
            acc_gaussian_sigma: 0.01,
        };
        spec.seed = 800 + seed;
        let recs = generate(&spec).unwrap();
        let sweep = ablate_by_flops(&refs(&recs), &target, &cfg).unwrap();
        let (Some(a), Some(b)) = (sweep.points.first(), sweep.points.last()) else {
            continue;
        };
        first += a.chained_rel_err;
        full += b.chained_rel_err;
        seeds += 1;
    }
    let (first, full) = (first / seeds as f64, full / seeds as f64);
    verdict(
        seeds == 10 && full < first,
        format!("mean chained error {full:.3}% with the full ladder vs {first:.3}% with the smallest valid prefix over {seeds} seeds"),
    )
}

/// Compute-only collision, single-step degeneracy and log-sigmoid limits.
fn criterion_9() -> Verdict {
    let cfg = FitConfig::default();
    // two runs share C = 6ND but differ in loss
    let pts = vec![
        LossPoint::new("a", 100_000_000, 4_000_000_000, 1.30),
        LossPoint::new("b", 200_000_000, 2_000_000_000, 1.20),
        LossPoint::new("c", 200_000_000, 8_000_000_000, 1.05),
        LossPoint::new("d", 400_000_000, 8_000_000_000, 0.98),
        LossPoint::new("e", 800_000_000, 16_000_000_000, 0.90),
    ];
    let flops = fit_flops_law(&pts, &cfg).unwrap();
    let (pa, pb) = (flops.points[0].predicted, flops.points[1].predicted);
    let collision = pa == pb && flops.points[0].rel_error > 0.0 && flops.points[1].rel_error > 0.0;

    let mut acc_points = Vec::new();
    for (i, n) in [1e8, 2e8, 4e8, 8e8].iter().enumerate() {
        for (j, d) in [2e9, 5e9, 2e10].iter().enumerate() {
            acc_points.push(AccuracyPoint {
                model_id: format!("{i}-{j}"),
                n_params: *n as u64,
                tokens: *d as u64,
                accuracy: 0.3 + 0.05 * j as f64,
            });
        }
    }
    let single = fit_single_step(&acc_points, &cfg).unwrap();

    let ls = LogSigmoidParams {
        amplitude: -0.3,
        steepness: 3.0,
        midpoint: 1.2,
    };
    let low = (eval_log_sigmoid(&ls, -1e3) - 1.0).abs();
    let mid = (eval_log_sigmoid(&ls, 1.2) - (1.0 + ls.amplitude * std::f64::consts::LN_2)).abs();
    let limits = low <= 1e-9 && mid <= 1e-9;
    verdict(
        collision && single.degenerate && limits,
        format!(
            "collision predictions {pa:.6} / {pb:.6}, single-step degenerate = {}, log-sigmoid limit gaps {low:.1e} / {mid:.1e}",
            single.degenerate
        ),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_ladder-laws"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn dir_snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Every command run twice in fresh directories with identical inputs.
fn criterion_10() -> Verdict {
    let (mmlu1, mmlu2) = published("mmlu");
    let mut spec = synth_spec(mmlu1, mmlu2, presets::ladder());
    spec.checkpoints_per_run = 20;
    spec.schedules = presets::ladder_schedules(true);
    spec.truth_decay_coef = 0.05;
    spec.noise = NoiseSpec {
        loss_lognormal_sigma: 0.01,
        acc_gaussian_sigma: 0.01,
    };
    let spec_json = serde_json::to_string(&spec).unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["synth", "--spec", "spec.json", "--seed", "3", "--out", "data"],
        vec!["fit", "--records", "data/records.jsonl", "--out", "fit"],
        vec!["predict", "--records", "data/records.jsonl", "--out", "pred", "--preset-targets"],
        vec!["predict", "--fits", "fit", "--tasks", "synthetic", "--out", "pred2", "--target", "t:7e9:4e12::0.5"],
        vec!["chain", "--published", "--preset-targets", "--out", "pub"],
        vec!["variance", "--records", "data/records.jsonl", "--out", "var"],
        vec!["ablate", "--records", "data/records.jsonl", "--out", "abl", "--target", "t:6887575552:3.95e12:0.75:0.5"],
        vec!["curve", "--records", "data/records.jsonl", "--out", "curve", "--holdout", "1.3B-10xC"],
    ];
    let mut snapshots = Vec::new();
    let mut failures = Vec::new();
    for round in 0..2 {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(tmp.path().join("spec.json"), &spec_json).unwrap();
        let mut stdouts = Vec::new();
        for c in &commands {
            let (code, stdout) = run_cli(c, tmp.path());
            if code != 0 && round == 0 {
                failures.push(format!("{} exited {code}", c[0]));
            }
            stdouts.push(stdout);
        }
        snapshots.push((dir_snapshot(tmp.path()), stdouts));
    }
    let files = snapshots[0].0.len();
    let same = snapshots[0] == snapshots[1];
    let mut differing: Vec<String> = snapshots[0]
        .0
        .iter()
        .filter(|(k, v)| snapshots[1].0.get(*k) != Some(v))
        .map(|(k, _)| k.clone())
        .collect();
    differing.truncate(5);
    verdict(
        same && failures.is_empty() && files > 10,
        format!(
            "{} commands, {files} output files, identical = {same}{}{}",
            commands.len(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) },
            if differing.is_empty() { String::new() } else { format!("; differing: {}", differing.join(", ")) },
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict, u64); 10] = [
        (1, "published-fit oracle", criterion_1, 1),
        (2, "relative-error table", criterion_2, 1),
        (3, "step-1 recovery", criterion_3, 30),
        (4, "step-2 recovery", criterion_4, 10),
        (5, "step-1 convexity", criterion_5, 10),
        (6, "loss-curve extrapolation", criterion_6, 60),
        (7, "variance analysis", criterion_7, 1),
        (8, "ablation trend", criterion_8, 120),
        (9, "variant coverage", criterion_9, 10),
        (10, "determinism", criterion_10, 60),
    ];
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(budget);
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {name}: {} | {} | {:.2}s of {budget}s",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
