//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 8 to 10 run the full default experiment twice in temporary
//! directories. The process exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::thread;

use mlos_core::binfmt::read_json;
use mlos_core::classifier::{compute_gradients, mean_loss, pit_loss, LossKind, MlpParams, Sample};
use mlos_core::dataset_plan::{compute_openness, make_split_variants, ClassVocabulary, OpennessMode, SubsetTag};
use mlos_core::eval::{average_precision, macro_f1, mean_average_precision, micro_f1};
use mlos_core::experiment::{load_checkpoint, run_all, ExperimentConfig, ModelKind, Report, RunOptions};
use mlos_core::openset::{fit_weibull_tail, openmax_recalibrate, WeibullTailModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn c1_openness() -> Outcome {
    for (c_tr, want) in [(72, "0.05"), (71, "0.06"), (54, "0.13"), (53, "0.14")] {
        let o = compute_openness(c_tr, 89).map_err(|e| e.to_string())?.o_star;
        let got = format!("{o:.2}");
        ensure(got == want, || format!("({c_tr}, 89) gave {got}, want {want}"))?;
    }
    Ok("(72,89)=0.05 (71,89)=0.06 (54,89)=0.13 (53,89)=0.14".into())
}

fn c2_split_table() -> Outcome {
    use SubsetTag::{KK, KU, UU};
    let low = [
        [KK, KK, KK, KU, UU],
        [UU, KK, KK, KK, KU],
        [KU, UU, KK, KK, KK],
        [KK, KU, UU, KK, KK],
        [KK, KK, KU, UU, KK],
    ];
    let high = [
        [KK, KK, KK, UU, UU],
        [UU, KK, KK, KK, UU],
        [UU, UU, KK, KK, KK],
        [KK, UU, UU, KK, KK],
        [KK, KK, UU, UU, KK],
    ];
    let vocab = ClassVocabulary::uniform(89).map_err(|e| e.to_string())?;
    for (mode, table) in [(OpennessMode::Low, low), (OpennessMode::High, high)] {
        let splits = make_split_variants(&vocab, 5, mode).map_err(|e| e.to_string())?;
        ensure(splits.len() == 5, || format!("{mode:?}: {} variants", splits.len()))?;
        for (v, (split, row)) in splits.iter().zip(table).enumerate() {
            for (s, want) in row.iter().enumerate() {
                ensure(split.assignment[s] == *want, || {
                    format!("{mode:?} variant {} subset {}: {:?} != {want:?}", v + 1, s + 1, split.assignment[s])
                })?;
            }
            let c_tr = split.known_classes().len();
            ensure(split.n_classes() == 89, || "classes lost".into())?;
            let expected = match mode {
                OpennessMode::Low => [71, 72],
                OpennessMode::High => [53, 54],
            };
            ensure(expected.contains(&c_tr), || format!("{mode:?} variant {} has C_tr {c_tr}", v + 1))?;
        }
    }
    Ok("50 cells match for both modes".into())
}

fn max_rel_error(params: &MlpParams, batch: &[Sample], kind: LossKind) -> Result<f64, String> {
    const H: f64 = 1e-5;
    let (_, grads) = compute_gradients(params, batch, kind).map_err(|e| e.to_string())?;
    let analytic: Vec<f64> = grads.values().copied().collect();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = params.clone();
        *plus.values_mut().nth(i).unwrap() += H;
        let mut minus = params.clone();
        *minus.values_mut().nth(i).unwrap() -= H;
        let lp = mean_loss(&plus, batch, kind).map_err(|e| e.to_string())?;
        let lm = mean_loss(&minus, batch, kind).map_err(|e| e.to_string())?;
        let numeric = (lp - lm) / (2.0 * H);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn c3_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (dim, n_out) = (8, 5);
    let params = MlpParams::init(dim, &[8], n_out, &mut rng);
    ensure(params.layers.len() == 2, || "expected a 2-layer head".into())?;
    let input = |rng: &mut ChaCha8Rng| (0..dim).map(|_| normal(rng)).collect::<Vec<f64>>();
    let bce: Vec<Sample> = (0..6)
        .map(|_| {
            let labels = (0..n_out).filter(|_| rng.random_bool(0.4)).collect();
            Sample::single(input(&mut rng), labels)
        })
        .collect();
    let ce: Vec<Sample> = (0..6)
        .map(|_| Sample::single(input(&mut rng), vec![rng.random_range(0..n_out)]))
        .collect();
    let pit = |m: usize, rng: &mut ChaCha8Rng| -> Vec<Sample> {
        (0..4)
            .map(|_| {
                let mut classes: Vec<usize> = (0..n_out).collect();
                classes.shuffle(rng);
                Sample {
                    inputs: (0..m).map(|_| input(rng)).collect(),
                    labels: classes[..m].to_vec(),
                }
            })
            .collect()
    };
    let pit2 = pit(2, &mut rng);
    let pit3 = pit(3, &mut rng);
    let mut parts = Vec::new();
    for (name, batch, kind) in [
        ("bce", &bce, LossKind::Bce),
        ("ce", &ce, LossKind::Ce),
        ("pit m=2", &pit2, LossKind::Pit),
        ("pit m=3", &pit3, LossKind::Pit),
    ] {
        let worst = max_rel_error(&params, batch, kind)?;
        ensure(worst < 1e-4, || format!("{name}: max relative error {worst:.2e}"))?;
        parts.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("max relative error: {}", parts.join(", ")))
}

fn oracle_ce(v: &[f64], k: usize) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    lse - v[k]
}

fn oracle_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in oracle_permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn c4_pit_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=4);
        let n = rng.random_range(2..=8);
        let logits: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| 3.0 * normal(&mut rng)).collect()).collect();
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
        let got = pit_loss(&logits, &labels).map_err(|e| e.to_string())?;
        let oracle = oracle_permutations(m)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| oracle_ce(&logits[j], labels[i])).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((got.loss - oracle).abs());
        ensure((got.loss - oracle).abs() <= 1e-9, || format!("pit {} vs oracle {oracle}", got.loss))?;
        let mut shuffled = logits.clone();
        shuffled.shuffle(&mut rng);
        let again = pit_loss(&shuffled, &labels).map_err(|e| e.to_string())?;
        ensure((again.loss - got.loss).abs() <= 1e-9, || {
            format!("row permutation changed loss {} -> {}", got.loss, again.loss)
        })?;
    }
    Ok(format!("1000 instances, max deviation {worst:.1e}"))
}

fn oracle_weibull_ll(xs: &[f64], kappa: f64, sigma: f64) -> f64 {
    xs.iter()
        .map(|&x| kappa.ln() - sigma.ln() + (kappa - 1.0) * (x / sigma).ln() - (x / sigma).powf(kappa))
        .sum()
}

fn c5_weibull() -> Outcome {
    let (mut kappa_sum, mut sigma_sum) = (0.0, 0.0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let xs: Vec<f64> = (0..2000)
            .map(|_| (-(1.0 - rng.random::<f64>()).ln()).sqrt())
            .collect();
        let fit = fit_weibull_tail(&xs, xs.len()).map_err(|e| e.to_string())?;
        kappa_sum += fit.kappa;
        sigma_sum += fit.sigma;
        let best = oracle_weibull_ll(&xs, fit.kappa, fit.sigma);
        for i in 0..100 {
            let k = fit.kappa * (0.5 + i as f64 / 99.0);
            for j in 0..100 {
                let s = fit.sigma * (0.5 + j as f64 / 99.0);
                let ll = oracle_weibull_ll(&xs, k, s);
                ensure(best >= ll - 1e-9, || {
                    format!("seed {seed}: grid point ({k:.4}, {s:.4}) ll {ll} beats fit {best}")
                })?;
            }
        }
    }
    let (kappa, sigma) = (kappa_sum / 20.0, sigma_sum / 20.0);
    ensure((kappa - 2.0).abs() <= 0.2, || format!("mean kappa {kappa:.4}"))?;
    ensure((sigma - 1.0).abs() <= 0.05, || format!("mean sigma {sigma:.4}"))?;
    Ok(format!("mean kappa {kappa:.4}, mean sigma {sigma:.4}; fit beats all 100x100 grid points"))
}

fn tail_model(class_id: usize, mav: Vec<f64>, kappa: f64, sigma: f64) -> WeibullTailModel {
    WeibullTailModel {
        class_id,
        mav,
        kappa,
        sigma,
        tau: 20,
    }
}

fn c6_openmax() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=12);
        let v: Vec<f64> = (0..n).map(|_| 5.0 * normal(&mut rng)).collect();
        let alpha = rng.random_range(1..=n);
        let kappa = rng.random_range(0.5..5.0);
        let sigma = rng.random_range(0.5..10.0);

        let at_mav: Vec<WeibullTailModel> = (0..n).map(|j| tail_model(j, v.clone(), kappa, sigma)).collect();
        let (v_w, v0) = openmax_recalibrate(&v, &at_mav, alpha).map_err(|e| e.to_string())?;
        ensure(v_w == v && v0 == 0.0, || format!("zero distance changed logits: v0 {v0}"))?;

        let models: Vec<WeibullTailModel> = (0..n)
            .map(|j| tail_model(j, (0..n).map(|_| 5.0 * normal(&mut rng)).collect(), kappa, sigma))
            .collect();
        let (v_w, v0) = openmax_recalibrate(&v, &models, alpha).map_err(|e| e.to_string())?;
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
        let top = &ranked[..alpha];
        for j in &ranked[alpha..] {
            ensure(v_w[*j] == v[*j], || format!("logit {j} outside the top {alpha} changed"))?;
        }
        let before: f64 = top.iter().map(|&j| v[j]).sum();
        let after: f64 = v0 + top.iter().map(|&j| v_w[j]).sum::<f64>();
        worst = worst.max((after - before).abs());
        ensure((after - before).abs() <= 1e-12, || format!("mass {before} -> {after}"))?;
    }
    Ok(format!("identity holds; 1000 instances, max mass error {worst:.1e}"))
}

fn oracle_f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn oracle_counts(pred: &[Vec<usize>], truth: &[Vec<usize>], class: usize) -> (usize, usize, usize) {
    let mut c = (0, 0, 0);
    for (p, t) in pred.iter().zip(truth) {
        match (p.contains(&class), t.contains(&class)) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => {}
        }
    }
    c
}

fn oracle_ap(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let above = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
    let positives: Vec<usize> = (0..scores.len()).filter(|&i| truth[i]).collect();
    if positives.is_empty() {
        return None;
    }
    let total: f64 = positives
        .iter()
        .map(|&i| {
            let rank = 1 + (0..scores.len()).filter(|&j| above(i, j)).count();
            let hits = 1 + positives.iter().filter(|&&j| above(i, j)).count();
            hits as f64 / rank as f64
        })
        .sum();
    Some(total / positives.len() as f64)
}

fn c7_metrics() -> Outcome {
    // rank-by-rank (1/1 + 2/3) / 2; 5/6 itself has no exact double
    let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).ok_or("no AP")?;
    ensure(ap == (1.0 / 1.0 + 2.0 / 3.0) / 2.0 && (ap - 5.0 / 6.0).abs() <= f64::EPSILON, || {
        format!("worked example gave {ap:?}")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n_clips = rng.random_range(1..=10);
        let n_classes = rng.random_range(2..=6);
        let subset = |rng: &mut ChaCha8Rng| (0..n_classes).filter(|_| rng.random_bool(0.35)).collect::<Vec<_>>();
        let pred: Vec<Vec<usize>> = (0..n_clips).map(|_| subset(&mut rng)).collect();
        let truth: Vec<Vec<usize>> = (0..n_clips).map(|_| subset(&mut rng)).collect();
        let scores: Vec<Vec<f64>> = (0..n_clips)
            .map(|_| (0..n_classes).map(|_| f64::from(rng.random_range(0..5u8)) / 4.0).collect())
            .collect();
        let classes: Vec<usize> = (0..n_classes).collect();

        let counts: Vec<_> = classes.iter().map(|&c| oracle_counts(&pred, &truth, c)).collect();
        let pooled = counts.iter().fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
        let micro = oracle_f1(pooled.0, pooled.1, pooled.2);
        let macro_ = counts.iter().map(|c| oracle_f1(c.0, c.1, c.2)).sum::<f64>() / n_classes as f64;
        let aps: Vec<f64> = classes
            .iter()
            .filter_map(|&c| {
                let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
                let t: Vec<bool> = truth.iter().map(|t| t.contains(&c)).collect();
                oracle_ap(&s, &t)
            })
            .collect();

        let got_micro = micro_f1(&pred, &truth).map_err(|e| e.to_string())?;
        let got_macro = macro_f1(&pred, &truth, &classes).map_err(|e| e.to_string())?;
        for (name, got, want) in [("micro-F1", got_micro, micro), ("macro-F1", got_macro, macro_)] {
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() <= 1e-12, || format!("{name} {got} vs {want}"))?;
        }
        match mean_average_precision(&scores, &truth, n_classes) {
            Ok(r) => {
                let want = aps.iter().sum::<f64>() / aps.len() as f64;
                worst = worst.max((r.map - want).abs());
                ensure(!aps.is_empty() && (r.map - want).abs() <= 1e-12, || format!("mAP {} vs {want}", r.map))?;
            }
            Err(_) => ensure(aps.is_empty(), || "mAP failed with positives present".into())?,
        }
    }
    Ok(format!("AP example = 5/6; 1000 instances, max deviation {worst:.1e}"))
}

fn run_default(dir: &Path) -> Result<PathBuf, String> {
    let config = ExperimentConfig {
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    };
    run_all(&config, RunOptions::default()).map_err(|e| e.to_string())?;
    Ok(config.output_dir)
}

fn mean(report: &Report, model: ModelKind, pick: impl Fn(&mlos_core::experiment::ReportRow) -> f64) -> Result<f64, String> {
    report.row(model).map(pick).ok_or_else(|| format!("{model} missing from report"))
}

fn c8_trends(root: &Path) -> Outcome {
    let report: Report = read_json(&root.join("report").join("report.json")).map_err(|e| e.to_string())?;
    let order = [
        ModelKind::OracleMulticlass,
        ModelKind::OraclePit,
        ModelKind::MultiLabel,
        ModelKind::EstimatesPit,
    ];
    let majority = report.majority_baseline.mean;
    let mut msp = Vec::new();
    for m in ModelKind::ALL {
        let acc = mean(&report, m, |r| r.msp.mean)?;
        ensure(acc >= majority + 0.05, || {
            format!("{m} MSP {:.1} is not 5 points above majority {:.1}", 100.0 * acc, 100.0 * majority)
        })?;
    }
    for pair in order.windows(2) {
        let (a, b) = (mean(&report, pair[0], |r| r.msp.mean)?, mean(&report, pair[1], |r| r.msp.mean)?);
        ensure(a - b >= -0.01, || {
            format!("MSP {} {:.1} < {} {:.1}", pair[0], 100.0 * a, pair[1], 100.0 * b)
        })?;
    }
    for m in order {
        msp.push(format!("{:.1}", 100.0 * mean(&report, m, |r| r.msp.mean)?));
    }
    let metrics: [(&str, fn(&mlos_core::experiment::ReportRow) -> f64); 3] = [
        ("micro-F1", |r| r.micro_f1.mean),
        ("macro-F1", |r| r.macro_f1.mean),
        ("mAP", |r| r.map.mean),
    ];
    for (name, pick) in metrics {
        for pair in order.windows(2) {
            let (a, b) = (mean(&report, pair[0], pick)?, mean(&report, pair[1], pick)?);
            ensure(a - b >= -0.01, || format!("{name} {} {a:.3} < {} {b:.3}", pair[0], pair[1]))?;
        }
    }
    for v in &report.variants {
        for m in ModelKind::ALL {
            let path = root.join(format!("variant-{v}")).join("train").join(format!("{m}.bin"));
            let (_, meta) = load_checkpoint(&path).map_err(|e| e.to_string())?;
            let first = meta.history.first().ok_or("empty training history")?.train_loss;
            let best = meta
                .history
                .iter()
                .find(|h| h.epoch == meta.epoch)
                .ok_or("best epoch missing from history")?
                .train_loss;
            ensure(meta.epoch == 1 || best < first, || {
                format!("variant {v} {m}: train loss {best} at epoch {} not below {first}", meta.epoch)
            })?;
        }
    }
    Ok(format!(
        "MSP % (oracle-mc, oracle-pit, multi-label, estimates-pit) = {}; majority {:.1}",
        msp.join(", "),
        100.0 * majority
    ))
}

fn c9_openmax_vs_msp(root: &Path) -> Outcome {
    let report: Report = read_json(&root.join("report").join("report.json")).map_err(|e| e.to_string())?;
    let row = report.row(ModelKind::OraclePit).ok_or("oracle-pit missing from report")?;
    let openmax = row.openmax.as_ref().ok_or("no OpenMax result for oracle-pit")?;
    let per_seed: Vec<String> = row
        .msp
        .per_variant
        .iter()
        .zip(&openmax.per_variant)
        .map(|(&(v, m), &(_, o))| format!("v{v} {:.1}/{:.1}", 100.0 * m, 100.0 * o))
        .collect();
    let detail = format!(
        "oracle-pit MSP {:.2} vs OpenMax {:.2}; per variant MSP/OpenMax: {}",
        100.0 * row.msp.mean,
        100.0 * openmax.mean,
        per_seed.join(", ")
    );
    ensure(openmax.mean >= row.msp.mean - 0.005, || detail.clone())?;
    Ok(detail)
}

fn c10_reproducible(a: &Path, b: &Path) -> Outcome {
    for table in ["table2.txt", "table3.txt"] {
        let read = |root: &Path| std::fs::read(root.join("report").join(table)).map_err(|e| e.to_string());
        ensure(read(a)? == read(b)?, || format!("{table} differs between runs"))?;
    }
    Ok("table2.txt and table3.txt are byte-identical across two runs".into())
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let (dir_a, dir_b) = (tmp.path().join("run-a"), tmp.path().join("run-b"));
    let second = {
        let dir_b = dir_b.clone();
        thread::spawn(move || run_default(&dir_b))
    };

    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "openness values", c1_openness()),
        (2, "split rotation table", c2_split_table()),
        (3, "gradient check", c3_gradients()),
        (4, "PIT oracle", c4_pit_oracle()),
        (5, "Weibull recovery", c5_weibull()),
        (6, "OpenMax identities", c6_openmax()),
        (7, "metric oracles", c7_metrics()),
    ];
    let first = run_default(&dir_a);
    let second = second.join().unwrap_or_else(|_| Err("second run panicked".into()));
    match &first {
        Ok(root) => {
            results.push((8, "end-to-end trends", c8_trends(root)));
            results.push((9, "OpenMax vs MSP on oracle PIT", c9_openmax_vs_msp(root)));
        }
        Err(e) => {
            results.push((8, "end-to-end trends", Err(format!("run failed: {e}"))));
            results.push((9, "OpenMax vs MSP on oracle PIT", Err(format!("run failed: {e}"))));
        }
    }
    let c10 = match (&first, &second) {
        (Ok(a), Ok(b)) => c10_reproducible(a, b),
        (Err(e), _) | (_, Err(e)) => Err(format!("run failed: {e}")),
    };
    results.push((10, "reproducibility", c10));

    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
