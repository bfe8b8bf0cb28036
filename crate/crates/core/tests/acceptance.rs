//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints its own PASS/FAIL line; exits nonzero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meterwatch::baselines::{
    compare_on_detection, elastic_net_kkt_residual, fit_elastic_net, fit_gbr, ElasticNetConfig, FlatSample,
    GbrConfig,
};
use meterwatch::classifier::{make_sample, recurrence_plot, InputMode, Merge, Readout, RpMode, TsRpConfig, TsRpModel};
use meterwatch::config::RunConfig;
use meterwatch::detector::{first_alarm, DetectionParams};
use meterwatch::eval::{pr_auc, roc_auc};
use meterwatch::nn::gradcheck::grad_check;
use meterwatch::nn::loss::{bce_with_logits, mse};
use meterwatch::nn::{Params, Tensor};
use meterwatch::pipeline::{self, CvReport, DetectionSummary};
use meterwatch::predictor::{build_features, make_windows, split_train_test, LstmRegressor, FEATURE_DIM};
use meterwatch::simgen::{generate_area, make_labeled_corpus, AreaConfig, CorpusConfig, Label, LabelsFile};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1 ------------------------------------------------------------------------

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn check_lstm_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = LstmRegressor::new(FEATURE_DIM, [30, 30], 3);
    let xs: Vec<Tensor> = (0..3).map(|_| random_tensor(&mut rng, vec![5, FEATURE_DIM])).collect();
    let ys: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |m: &LstmRegressor| -> meterwatch::Result<f64> {
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            total += mse(&[m.forward(x)?.0], &[*y]).0;
        }
        Ok(total / xs.len() as f64)
    };
    let mut grads = model.zeros_like();
    for (x, y) in xs.iter().zip(&ys) {
        let (p, trace) = model.forward(x).map_err(e2s)?;
        let g = mse(&[p], &[*y]).1[0];
        model.backward(&trace, g / xs.len() as f64, &mut grads).map_err(e2s)?;
    }
    let r = grad_check(&model, &grads, loss, 1e-5, 1e-4).map_err(e2s)?;
    ensure(
        r.passed(),
        format!("lstm 2x30+dense: {} entries, max rel err {:.2e}, {} kinks", r.checked, r.max_rel_error, r.skipped_kinks),
    )
}

fn check_tsrp_gradients(name: &str, cfg: &TsRpConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = TsRpModel::new(cfg, 5).map_err(e2s)?;
    let samples: Vec<_> = (0..3)
        .map(|k| {
            let vals: Vec<f64> = (0..cfg.series_len).map(|_| rng.gen_range(0.0..10.0)).collect();
            let label = if k % 2 == 0 { Label::Inaccurate } else { Label::Accurate };
            make_sample("a", &format!("m{k}"), &vals, label, cfg.series_len, cfg.rp_mode).unwrap()
        })
        .collect();
    let loss = |m: &TsRpModel| -> meterwatch::Result<f64> {
        let mut total = 0.0;
        for s in &samples {
            total += bce_with_logits(m.logit(s)?, s.label.as_f64()).0;
        }
        Ok(total / samples.len() as f64)
    };
    let mut grads = model.zeros_like();
    for s in &samples {
        let (z, trace) = model.forward(s).map_err(e2s)?;
        let dz = bce_with_logits(z, s.label.as_f64()).1;
        model.backward(&trace, dz / samples.len() as f64, &mut grads).map_err(e2s)?;
    }
    let r = grad_check(&model, &grads, loss, 1e-5, 1e-4).map_err(e2s)?;
    ensure(
        r.passed(),
        format!("{name}: {} entries, max rel err {:.2e}, {} kinks", r.checked, r.max_rel_error, r.skipped_kinks),
    )
}

fn criterion_1() -> Check {
    let small = TsRpConfig {
        series_len: 16,
        ..TsRpConfig::default()
    };
    let mut variants = vec![
        ("dual/add".to_string(), small.clone()),
        (
            "dual/concat".into(),
            TsRpConfig {
                merge: Merge::Concat,
                ..small.clone()
            },
        ),
        ("sequence_only".into(), small.with_inputs(InputMode::SequenceOnly)),
        ("matrix_only".into(), small.with_inputs(InputMode::MatrixOnly)),
    ];
    for readout in [Readout::Flatten, Readout::GlobalAvg] {
        let mut c = small.clone();
        c.sequence_branch.readout = readout;
        variants.push((format!("dual/seq-{readout:?}"), c));
    }
    let mut details = vec![check_lstm_gradients()?];
    for (name, cfg) in &variants {
        details.push(check_tsrp_gradients(name, cfg)?);
    }
    Ok(details.join("; "))
}

// 2 ------------------------------------------------------------------------

fn criterion_2() -> Check {
    let cfg = CorpusConfig {
        noise_sigma_n: Some(0.0),
        seed: 7,
        ..CorpusConfig::default()
    };
    let corpus = make_labeled_corpus(&cfg).map_err(e2s)?;
    let mut checked = 0usize;
    let mut max_err: f64 = 0.0;
    for area in &corpus {
        for (d, v) in &area.clean_dataset.master {
            if area.dataset.master[d].to_bits() != v.to_bits() {
                return Err(format!("{}: master changed on {d}", area.dataset.area_id));
            }
        }
        for (meter, &s) in &area.spec.targets {
            let before: Vec<f64> = area.clean_dataset.submeters[meter].values().copied().collect();
            let after: Vec<f64> = area.dataset.submeters[meter].values().copied().collect();
            for (i, (b, a)) in before.iter().zip(&after).enumerate() {
                let expect = if i < s { *b } else { (1.0 + cfg.alpha * (i - s) as f64) * b };
                max_err = max_err.max((a - expect).abs());
                checked += 1;
            }
        }
    }
    ensure(
        max_err <= 1e-12 && checked > 0,
        format!("{checked} injected readings, max |error| {max_err:.1e}; masters bit-identical"),
    )
}

// 3 ------------------------------------------------------------------------

fn criterion_3() -> Check {
    let ds = generate_area("w", &AreaConfig::default()).map_err(e2s)?;
    let table = build_features(&ds).map_err(e2s)?;
    let windows = make_windows(&table, 40).map_err(e2s)?;
    let (train, test) = split_train_test(&windows, 27).map_err(e2s)?;
    ensure(
        table.len() == 770 && windows.len() == 730 && train.len() == 703 && test.len() == 27,
        format!(
            "{} days -> {} windows -> {}/{}",
            table.len(),
            windows.len(),
            train.len(),
            test.len()
        ),
    )
}

// 4 and 7 share one fixture run ---------------------------------------------

fn fixture_config(dir: &Path) -> RunConfig {
    let mut c = RunConfig::from_json(
        r#"{
            "simgen": {"seed": 7},
            "predictor": {"epochs": 40, "samples_per_epoch": 1000},
            "ablations": ["sequence_only"],
            "baselines": {"thresholds": []}
        }"#,
    )
    .unwrap();
    c.paths.data_dir = dir.join("data");
    c.paths.output_dir = dir.join("out");
    c
}

fn criterion_4(config: &RunConfig) -> Check {
    for stage in [pipeline::generate, pipeline::clean, pipeline::train_predictor_stage, pipeline::detect] {
        stage(config).map_err(e2s)?;
    }
    let layout = pipeline::Layout::new(config);
    let text = std::fs::read_to_string(layout.detect_summary()).map_err(e2s)?;
    let summary: DetectionSummary = serde_json::from_str(&text).map_err(e2s)?;
    let mut problems = Vec::new();
    let mut lags = Vec::new();
    let mut injected = 0;
    for d in &summary.detections {
        let labels: LabelsFile = serde_json::from_str(
            &std::fs::read_to_string(layout.labels().join(format!("{}.json", d.area_id))).map_err(e2s)?,
        )
        .map_err(e2s)?;
        let malfunctioning = labels.labels.values().any(|&l| l == Label::Inaccurate);
        if malfunctioning {
            injected += 1;
            match (d.flagged, d.lag) {
                (true, Some(lag)) if (0..=90).contains(&lag) => lags.push(lag),
                _ => problems.push(format!("{} flagged={} lag={:?}", d.area_id, d.flagged, d.lag)),
            }
        } else if d.flagged {
            problems.push(format!("clean {} flagged at {:?}", d.area_id, d.predicted_start));
        }
    }
    lags.sort();
    ensure(
        problems.is_empty() && injected == 10 && summary.detections.len() == 20,
        format!(
            "{injected} injected of {} areas; lags {:?}{}",
            summary.detections.len(),
            lags,
            if problems.is_empty() {
                String::new()
            } else {
                format!("; problems: {}", problems.join(", "))
            }
        ),
    )
}

fn criterion_7(config: &RunConfig) -> Check {
    pipeline::train_classifier_stage(config).map_err(e2s)?;
    let layout = pipeline::Layout::new(config);
    let report: CvReport =
        serde_json::from_str(&std::fs::read_to_string(layout.cv_report()).map_err(e2s)?).map_err(e2s)?;
    let get = |name: &str| report.architectures.iter().find(|a| a.architecture == name).cloned();
    let (Some(dual), Some(seq)) = (get("dual"), get("sequence_only")) else {
        return Err("cv report lacks dual or sequence_only".into());
    };
    let margin = dual.mean_roc_auc - seq.mean_roc_auc;
    ensure(
        dual.mean_roc_auc >= 0.75 && margin >= 0.10,
        format!(
            "{} meters ({} inaccurate): dual ROC {} (PR {}), sequence-only ROC {}, margin {:.3}",
            report.n_samples, report.n_inaccurate, dual.roc_auc, dual.pr_auc, seq.roc_auc, margin
        ),
    )
}

// 5 ------------------------------------------------------------------------

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut comparisons = 0usize;
    for case in 0..1000 {
        let n = rng.gen_range(8..120);
        let level = rng.gen_range(0.2..1.5);
        let dpe: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..level)).collect();
        let t = rng.gen_range(0.05..1.2);
        let t_low = t * rng.gen_range(0.0..1.0f64).max(0.01);
        let l = rng.gen_range(1..=8);
        let l_low = rng.gen_range(1..=l);
        let at = |t: f64, l: usize| first_alarm(&dpe, &DetectionParams { t, l }).unwrap();
        if let Some(s) = at(t, l) {
            match at(t_low, l) {
                Some(s2) if s2 <= s => {}
                other => return Err(format!("case {case}: t {t} flags at {s}, t' {t_low} gives {other:?}")),
            }
            match at(t, l_low) {
                Some(s2) if s2 <= s => {}
                other => return Err(format!("case {case}: L {l} flags at {s}, L' {l_low} gives {other:?}")),
            }
            comparisons += 2;
        }
    }
    ensure(comparisons > 200, format!("1000 series, {comparisons} implications checked"))
}

// 6 ------------------------------------------------------------------------

fn brute_roc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice = 0usize;
    let (mut p, mut n) = (0usize, 0usize);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    (twice as f64 / 2.0) / (p as f64 * n as f64)
}

fn brute_pr(scores: &[f64], labels: &[bool]) -> f64 {
    let p = labels.iter().filter(|&&l| l).count();
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for &tau in &thresholds {
        let tp = (0..scores.len()).filter(|&i| scores[i] >= tau && labels[i]).count();
        let fp = (0..scores.len()).filter(|&i| scores[i] >= tau && !labels[i]).count();
        if tp > prev_tp {
            ap += ((tp - prev_tp) as f64 / p as f64) * (tp as f64 / (tp + fp) as f64);
        }
        prev_tp = tp;
    }
    ap
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..200 {
        let n = rng.gen_range(2..=50);
        let levels = rng.gen_range(2..12);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let (r, br) = (roc_auc(&scores, &labels).map_err(e2s)?, brute_roc(&scores, &labels));
        let (a, ba) = (pr_auc(&scores, &labels).map_err(e2s)?, brute_pr(&scores, &labels));
        if r != br || a != ba {
            return Err(format!("case {case}: roc {r} vs {br}, pr {a} vs {ba}"));
        }
    }
    Ok("200 instances with ties, ROC and PR AUC bit-identical to exhaustive recomputation".into())
}

// 8 ------------------------------------------------------------------------

fn criterion_8() -> Check {
    let corpus = CorpusConfig {
        seed: 7,
        ..CorpusConfig::default()
    };
    let rows = pipeline::proportion_sweep(&corpus, &TsRpConfig::default(), &[0.5, 0.7, 0.9]).map_err(e2s)?;
    let text: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.1}: {:.3} ± {:.3}", r.accurate_proportion, r.mean_roc_auc, r.std_roc_auc))
        .collect();
    ensure(rows.iter().all(|r| r.mean_roc_auc >= 0.70), format!("dual ROC AUC by accurate proportion {}", text.join(", ")))
}

// 9 ------------------------------------------------------------------------

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..100 {
        let n = rng.gen_range(2..60);
        // values on a 1/1024 grid so shifting by an integer is exact
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-4096..4096) as f64 / 1024.0).collect();
        let c = rng.gen_range(-50..50) as f64;
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let k = rng.gen_range(0.1..10.0);
        let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
        for mode in [RpMode::Binary { percentile: 10.0 }, RpMode::Grayscale] {
            let m = recurrence_plot(&x, mode).map_err(e2s)?;
            for i in 0..n {
                for j in 0..n {
                    if m.get(i, j) != m.get(j, i) {
                        return Err(format!("case {case}: {mode:?} not symmetric at ({i},{j})"));
                    }
                }
                if matches!(mode, RpMode::Binary { .. }) && m.get(i, i) != 1.0 {
                    return Err(format!("case {case}: binary diagonal {} at {i}", m.get(i, i)));
                }
            }
            if recurrence_plot(&shifted, mode).map_err(e2s)? != m {
                return Err(format!("case {case}: {mode:?} changed under shift {c}"));
            }
            if mode == RpMode::Grayscale {
                let ms = recurrence_plot(&scaled, mode).map_err(e2s)?;
                let worst = ms.matrix.iter().zip(&m.matrix).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if worst > 1e-12 {
                    return Err(format!("case {case}: grayscale moved by {worst:.1e} under scale {k}"));
                }
            }
        }
    }
    Ok("100 series: symmetric, unit binary diagonal, exact shift invariance, grayscale scale invariance within 1e-12".into())
}

// 10 -----------------------------------------------------------------------

fn random_system(rng: &mut ChaCha8Rng, n: usize, p: usize, noise: f64) -> Vec<FlatSample> {
    let beta: Vec<f64> = (0..p).map(|_| rng.gen_range(-3.0..3.0)).collect();
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = 0.7 + x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + noise * rng.gen_range(-1.0..1.0);
            FlatSample { x, y }
        })
        .collect()
}

fn ols(samples: &[FlatSample]) -> Vec<f64> {
    let p = samples[0].x.len();
    let x = DMatrix::from_fn(samples.len(), p + 1, |i, j| if j == 0 { 1.0 } else { samples[i].x[j - 1] });
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.y));
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    xtx.cholesky().expect("well conditioned").solve(&xty).iter().copied().collect()
}

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ols_err: f64 = 0.0;
    for _ in 0..20 {
        let s = random_system(&mut rng, 40, 5, 0.3);
        let fit = fit_elastic_net(
            &s,
            &ElasticNetConfig {
                lambda1: 0.0,
                lambda2: 0.0,
                ..ElasticNetConfig::default()
            },
        )
        .map_err(e2s)?;
        let reference = ols(&s);
        ols_err = ols_err.max((fit.model.intercept - reference[0]).abs());
        for (c, r) in fit.model.coef.iter().zip(&reference[1..]) {
            ols_err = ols_err.max((c - r).abs());
        }
    }
    let mut kkt: f64 = 0.0;
    for k in 0..20 {
        let s = random_system(&mut rng, 20, 5, 1.0);
        let cfg = ElasticNetConfig {
            lambda1: [0.1, 1.0, 5.0, 20.0][k % 4],
            lambda2: [0.0, 0.5, 2.0][k % 3],
            ..ElasticNetConfig::default()
        };
        let fit = fit_elastic_net(&s, &cfg).map_err(e2s)?;
        kkt = kkt.max(elastic_net_kkt_residual(&s, &fit.model, &cfg));
    }
    let s = random_system(&mut rng, 200, 6, 1.0);
    let gbr = fit_gbr(&s, &GbrConfig::default()).map_err(e2s)?;
    let gbr_ok = gbr.stage_mse.windows(2).all(|w| w[1] <= w[0]);

    let observed: Vec<f64> = (0..72).map(|_| rng.gen_range(0.0..20.0)).collect();
    let preds: Vec<(String, Vec<f64>)> = (0..4)
        .map(|m| {
            let spread = 2.0 * (m + 1) as f64;
            (format!("model{m}"), observed.iter().map(|o| o + rng.gen_range(-spread..spread)).collect())
        })
        .collect();
    let thresholds: Vec<f64> = (0..40).map(|k| k as f64 * 0.25).collect();
    let rows = compare_on_detection(&preds, &observed, &thresholds).map_err(e2s)?;
    let antitone = preds.iter().all(|(name, _)| {
        let rates: Vec<f64> = rows.iter().filter(|r| &r.model == name).map(|r| r.target_rate_pct).collect();
        rates.windows(2).all(|w| w[1] <= w[0])
    });
    ensure(
        ols_err < 1e-6 && kkt < 1e-6 && gbr_ok && antitone,
        format!(
            "OLS max diff {ols_err:.1e}, max KKT residual {kkt:.1e}, GBR stage MSE nonincreasing: {gbr_ok}, target rate antitone: {antitone}"
        ),
    )
}

// 11 -----------------------------------------------------------------------

const DETERMINISM_CONFIG: &str = r#"{
  "simgen": {"n_areas": 4, "malfunctioning_areas": 2, "area": {"n_days": 200}},
  "reference_areas": 2,
  "predictor": {"window_size": 10, "epochs": 3, "n_test": 5},
  "classifier": {"series_len": 32, "epochs": 3, "folds": 2},
  "target_rate_horizon": 30,
  "window_sweep": [5, 10],
  "proportion_sweep": [0.7]
}"#;

fn run_pipeline_in(dir: &Path) -> std::result::Result<(), String> {
    std::fs::write(dir.join("config.json"), DETERMINISM_CONFIG).map_err(e2s)?;
    let out = Command::new(env!("CARGO_BIN_EXE_meterwatch"))
        .current_dir(dir)
        .args(["--config", "config.json", "pipeline", "--seed", "11", "--format", "csv"])
        .output()
        .map_err(e2s)?;
    if !out.status.success() {
        return Err(format!("pipeline exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_11() -> Check {
    let a = tempfile::tempdir().map_err(e2s)?;
    let b = tempfile::tempdir().map_err(e2s)?;
    run_pipeline_in(a.path())?;
    run_pipeline_in(b.path())?;
    let fa = files_under(a.path());
    if fa != files_under(b.path()) {
        return Err("the two runs wrote different file sets".into());
    }
    let mut compared = 0;
    for rel in &fa {
        let (x, y) = (std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap());
        if rel.ends_with("manifest.json") {
            let strip = |bytes: &[u8]| {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                let o = v.as_object_mut().unwrap();
                o.remove("started_at");
                o.remove("finished_at");
                v
            };
            if strip(&x) != strip(&y) {
                return Err("manifests differ beyond timestamps".into());
            }
        } else if x != y {
            return Err(format!("{} differs", rel.display()));
        }
        compared += 1;
    }
    Ok(format!("{compared} files identical across two seeded pipeline runs (manifest timestamps excluded)"))
}

// --------------------------------------------------------------------------

fn main() -> ExitCode {
    let fixture = tempfile::tempdir().expect("tempdir");
    let config = fixture_config(fixture.path());

    type Criterion<'a> = (usize, &'static str, Duration, Box<dyn Fn() -> Check + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "gradient correctness", Duration::from_secs(60), Box::new(criterion_1)),
        (2, "drift injection exactness", Duration::from_secs(60), Box::new(criterion_2)),
        (3, "windowing arithmetic", Duration::from_secs(5), Box::new(criterion_3)),
        (4, "detector on fixture corpus", Duration::from_secs(600), Box::new(|| criterion_4(&config))),
        (5, "detector monotonicity", Duration::from_secs(10), Box::new(criterion_5)),
        (6, "AUC oracle equivalence", Duration::from_secs(10), Box::new(criterion_6)),
        (7, "classifier headline analogue", Duration::from_secs(900), Box::new(|| criterion_7(&config))),
        (8, "proportion-sweep stability", Duration::from_secs(1800), Box::new(criterion_8)),
        (9, "recurrence-plot properties", Duration::from_secs(5), Box::new(criterion_9)),
        (10, "baseline sanity", Duration::from_secs(60), Box::new(criterion_10)),
        (11, "pipeline determinism", Duration::from_secs(900), Box::new(criterion_11)),
    ];

    let mut failed = 0;
    for (id, name, budget, run) in &criteria {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if took <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; exceeded the {budget:?} budget")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name} ({:.1}s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
