//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! The property criteria always run. The ModelNet40 criteria run only when
//! `POINTHOP_MODELNET40` points at either a converted dataset (with
//! `train.tsv`) or the raw `<class>/<split>/*.off` tree. Set
//! `POINTHOP_MODELNET40_ALL_CASES=1` to also fit the 20-branch ensemble.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::env;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use oracles::{
    ac_covariance, brute_knn, dot, exhaustive_fps, jacobi_eigen, min_dist_to, random_points, shape_dataset, shape_names,
};
use pointhop::geometry::octant_descriptor_into;
use pointhop::rng::Stream;
use pointhop::{
    farthest_point_sample, fit_pointhop_with_features, fit_saab, AttributeMatrix, Classifier, ClassifierParams,
    FeatureLayout, PointHopConfig, Pooling, SpatialIndex,
};
use pointhop_cli::commands::{self, AblateArgs, ConvertArgs, EvalArgs, FitArgs};
use pointhop_cli::config::Precision;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn knn_oracle() -> Check {
    let start = Instant::now();
    let mut rng = Stream::new(101);
    let mut queries = 0;
    for trial in 0..200 {
        let n = 1 + rng.below(512) as usize;
        let k = 1 + rng.below(64.min(n as u64)) as usize;
        let mut pts = random_points(&mut rng, n);
        if trial % 4 == 0 {
            for p in &mut pts {
                *p = p.map(|x| (x * 4.0).round() / 4.0);
            }
        }
        let index = SpatialIndex::build(&pts);
        for _ in 0..10 {
            let c = rng.below(n as u64) as usize;
            let got = index.knn(c, k).map_err(|e| e.to_string())?;
            ensure(got.neighbor_indices == brute_knn(&pts, c, k), || {
                format!("trial {trial}: n={n} k={k} center {c}")
            })?;
            queries += 1;
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "200 clouds, {queries} queries match, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn fps_oracle() -> Check {
    let start = Instant::now();
    let mut rng = Stream::new(102);
    for trial in 0..100 {
        let n = 1 + rng.below(50) as usize;
        let m = 1 + rng.below(n as u64) as usize;
        let pts = random_points(&mut rng, n);
        let got = farthest_point_sample(&pts, m).map_err(|e| e.to_string())?;
        ensure(got == exhaustive_fps(&pts, m), || {
            format!("trial {trial}: oracle mismatch")
        })?;
        for t in 1..got.len() {
            let chosen = min_dist_to(&pts, got[t], &got[..t]);
            let best = (0..n)
                .filter(|i| !got[..t].contains(i))
                .map(|i| min_dist_to(&pts, i, &got[..t]))
                .fold(0.0, f64::max);
            ensure(chosen >= best, || {
                format!("trial {trial}: pick {t} is not the farthest")
            })?;
        }
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("100 trials exact, {:.2} s", start.elapsed().as_secs_f64()))
}

fn saab_samples(rng: &mut Stream, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..5).map(|_| rng.normal()).collect()).collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..5).map(|j| rng.normal() * (5 - j) as f64).collect();
            (0..d).map(|i| dot(&mix[i], &z) + 0.1 * rng.normal() - 0.5).collect()
        })
        .collect()
}

fn saab_criteria() -> Check {
    let mut rng = Stream::new(103);
    let (mut worst_ortho, mut worst_cos, mut worst_const) = (0.0f64, 0.0f64, 0.0f64);
    let mut checked = 0usize;
    for &(n, d, n_ac) in &[(400, 12, 6), (600, 24, 15), (800, 40, 20)] {
        let x = saab_samples(&mut rng, n, d);
        let bank = fit_saab(&AttributeMatrix::from_rows(&x), n_ac).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = (0..bank.output_dim()).map(|k| bank.filter(k).to_vec()).collect();
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst_ortho = worst_ortho.max((dot(&rows[i], &rows[j]) - want).abs());
            }
        }
        let (values, vectors) = jacobi_eigen(&ac_covariance(&x, true));
        for (k, a) in bank.ac_filters().enumerate() {
            if values[k] - values[k + 1] > 1e-6 * values[0] {
                worst_cos = worst_cos.max((dot(a, &vectors[k]).abs() - 1.0).abs());
            }
        }
        for r in &x {
            let y = bank.apply(r).map_err(|e| e.to_string())?;
            ensure(y.iter().all(|&v| v >= 0.0), || {
                "negative response on a training vector".into()
            })?;
            checked += 1;
        }
        let y = bank.apply(&vec![0.3; d]).map_err(|e| e.to_string())?;
        for v in &y[1..] {
            worst_const = worst_const.max((v - bank.bias()).abs());
        }
    }
    ensure(worst_ortho <= 1e-6, || format!("off-orthonormality {worst_ortho:e}"))?;
    ensure(worst_cos <= 1e-6, || format!("eigenvector mismatch {worst_cos:e}"))?;
    ensure(worst_const <= 1e-9, || {
        format!("constant-vector AC deviation {worst_const:e}")
    })?;
    Ok(format!(
        "orthonormality {worst_ortho:.1e}, oracle {worst_cos:.1e}, {checked}/{checked} non-negative, constant AC {worst_const:.1e}"
    ))
}

fn permutation_invariance() -> Check {
    let mut rng = Stream::new(104);
    for case in 0..50 {
        let n = 2 + rng.below(64) as usize;
        let pts = random_points(&mut rng, n);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
        let attrs = AttributeMatrix::from_rows(&rows);
        let neighbors: Vec<usize> = (0..n).collect();
        let mut base = vec![0.0; 24];
        octant_descriptor_into(&pts[0], &neighbors, &pts, &attrs, &mut base).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let mut perm = neighbors.clone();
            rng.shuffle(&mut perm);
            let mut out = vec![0.0; 24];
            octant_descriptor_into(&pts[0], &perm, &pts, &attrs, &mut out).map_err(|e| e.to_string())?;
            let same = out.iter().zip(&base).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, || format!("case {case}: descriptor changed under permutation"))?;
        }
    }
    Ok("50 cases x 100 permutations bit-identical".into())
}

fn dimension_chain() -> Check {
    let c = PointHopConfig::default();
    c.validate().map_err(|e| e.to_string())?;
    let desc = c.descriptor_dims();
    let units = c.unit_dims();
    let four = FeatureLayout::new(&c).len();
    let mean = FeatureLayout::new(&PointHopConfig {
        poolings: vec![Pooling::Mean],
        ..c.clone()
    })
    .len();
    ensure(desc == [24, 128, 208, 328], || format!("descriptor dims {desc:?}"))?;
    ensure(units == [16, 26, 41, 81], || format!("unit dims {units:?}"))?;
    ensure(mean == 164 && four == 656, || {
        format!("feature lengths {mean} / {four}")
    })?;
    Ok(format!(
        "descriptors {desc:?}, units {units:?}, features {mean} / {four}"
    ))
}

fn synthetic_end_to_end() -> Check {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    pool.install(|| {
        let start = Instant::now();
        let (train, train_labels) = shape_dataset(150, 256, 201);
        let (test, test_labels) = shape_dataset(50, 256, 202);
        let config = PointHopConfig::points_256().with_seed(7);
        let fitted = fit_pointhop_with_features(&train, &config).map_err(|e| e.to_string())?;
        let clf = Classifier::fit(&fitted.features, &train_labels, &ClassifierParams::default(), 8)
            .map_err(|e| e.to_string())?;
        let feats = fitted.model.extract_many(&test, None).map_err(|e| e.to_string())?;
        let report = pointhop::evaluate(&clf, &feats, &test_labels, &shape_names()).map_err(|e| e.to_string())?;
        let acc = report.overall_accuracy;
        ensure(acc >= 0.90, || format!("accuracy {:.2}%", 100.0 * acc))?;
        within(start.elapsed(), 120.0)?;
        Ok(format!(
            "4 shapes, 600/200 clouds, accuracy {:.2}%, {:.1} s on 1 thread",
            100.0 * acc,
            start.elapsed().as_secs_f64()
        ))
    })
}

/// Converted ModelNet40 root and a scratch directory for bundles and configs.
struct Dataset {
    root: PathBuf,
    scratch: PathBuf,
}

fn dataset() -> Option<Result<Dataset, String>> {
    let raw = PathBuf::from(env::var_os("POINTHOP_MODELNET40")?);
    Some((|| {
        let scratch = env::temp_dir().join("pointhop-acceptance");
        fs::create_dir_all(&scratch).map_err(|e| e.to_string())?;
        if raw.join("train.tsv").is_file() {
            return Ok(Dataset { root: raw, scratch });
        }
        let root = scratch.join("converted");
        if !root.join("test.tsv").is_file() {
            let args = ConvertArgs {
                input: raw.clone(),
                output: root.clone(),
                seed: 2048,
                points: 2048,
                skip_invalid: true,
            };
            commands::convert(&args, &mut io::sink()).map_err(|e| e.to_string())?;
        }
        Ok(Dataset { root, scratch })
    })())
}

fn config_file(ds: &Dataset, name: &str, text: &str) -> PathBuf {
    let path = ds.scratch.join(name);
    fs::write(&path, text).expect("scratch directory is writable");
    path
}

fn fit_args(ds: &Dataset, config: &Path, bundle: &str) -> FitArgs {
    FitArgs {
        config: Some(config.to_path_buf()),
        data: Some(ds.root.clone()),
        bundle: ds.scratch.join(bundle),
        seed: 1,
        precision: Some(Precision::F32),
        report: None,
        skip_eval: false,
    }
}

const POINTS256: &str = include_str!("../configs/points256.toml");
const POINTS1024: &str = include_str!("../configs/points1024.toml");
const ROTATIONS: &str = include_str!("../configs/rotations.toml");
const ALL_CASES: &str = include_str!("../configs/all-variations.toml");

fn gated(ds: &Option<Result<Dataset, String>>, f: impl FnOnce(&Dataset) -> Check) -> Verdict {
    match ds {
        None => Verdict::Skip("set POINTHOP_MODELNET40 to run".into()),
        Some(Err(e)) => Verdict::Fail(format!("dataset unavailable: {e}")),
        Some(Ok(ds)) => verdict(f(ds)),
    }
}

fn verdict(c: Check) -> Verdict {
    match c {
        Ok(s) => Verdict::Pass(s),
        Err(s) => Verdict::Fail(s),
    }
}

fn modelnet_256(ds: &Dataset) -> Check {
    let cfg = config_file(ds, "points256.toml", POINTS256);
    let out = commands::fit(&fit_args(ds, &cfg, "points256.phb"), &mut io::sink()).map_err(|e| e.to_string())?;
    let acc = out.bundle.report.as_ref().ok_or("no test report")?.overall_accuracy;
    let fit_s = out.timings.total().as_secs_f64();
    ensure(acc >= 0.840, || format!("accuracy {:.2}% < 84.0%", 100.0 * acc))?;
    ensure(fit_s <= 1800.0, || format!("fit took {fit_s:.0} s"))?;
    Ok(format!("accuracy {:.2}%, {fit_s:.0} s", 100.0 * acc))
}

/// Fits the 1,024-point baseline once; later criteria reuse its bundle.
fn modelnet_1024(ds: &Dataset) -> Check {
    let cfg = config_file(ds, "points1024.toml", POINTS1024);
    let out = commands::fit(&fit_args(ds, &cfg, "points1024.phb"), &mut io::sink()).map_err(|e| e.to_string())?;
    let acc = out.bundle.report.as_ref().ok_or("no test report")?.overall_accuracy;
    let fit_s = out.timings.total().as_secs_f64();
    ensure(acc >= 0.865, || format!("accuracy {:.2}% < 86.5%", 100.0 * acc))?;
    ensure(fit_s <= 5400.0, || format!("fit took {fit_s:.0} s"))?;
    Ok(format!("accuracy {:.2}%, {fit_s:.0} s", 100.0 * acc))
}

fn ensemble_accuracy(ds: &Dataset, name: &str, text: &str) -> Result<(f64, f64), String> {
    let cfg = config_file(ds, &format!("{name}.toml"), text);
    let out = commands::ensemble_fit(&fit_args(ds, &cfg, &format!("{name}.phb")), true, &mut io::sink())
        .map_err(|e| e.to_string())?;
    let acc = out.fit.bundle.report.as_ref().ok_or("no test report")?.overall_accuracy;
    let single = out.baselines.first().ok_or("no branch baselines")?.accuracy;
    Ok((acc, single))
}

fn modelnet_rotations(ds: &Dataset) -> Check {
    let (acc, single) = ensemble_accuracy(ds, "rotations", ROTATIONS)?;
    ensure(acc >= 0.860, || format!("accuracy {:.2}% < 86.0%", 100.0 * acc))?;
    ensure(acc > single, || {
        format!(
            "ensemble {:.2}% not above its first branch {:.2}%",
            100.0 * acc,
            100.0 * single
        )
    })?;
    Ok(format!(
        "ensemble {:.2}%, first branch alone {:.2}%",
        100.0 * acc,
        100.0 * single
    ))
}

fn modelnet_all_cases(ds: &Dataset) -> Verdict {
    if env::var_os("POINTHOP_MODELNET40_ALL_CASES").is_none() {
        return Verdict::Skip("set POINTHOP_MODELNET40_ALL_CASES=1 to fit all 20 branches".into());
    }
    match ensemble_accuracy(ds, "all-variations", ALL_CASES) {
        // Reported only: which reading of the combined table entry is right is open.
        Ok((acc, single)) => Verdict::Pass(format!(
            "report only: {:.2}% (first branch {:.2}%)",
            100.0 * acc,
            100.0 * single
        )),
        Err(e) => Verdict::Fail(e),
    }
}

fn modelnet_pooling_trend(ds: &Dataset) -> Check {
    let cfg = config_file(ds, "points256.toml", POINTS256);
    let args = AblateArgs {
        config: Some(cfg),
        data: Some(ds.root.clone()),
        seed: 1,
        preset: Some("poolings".into()),
        input_points: vec![256, 1024],
        ..AblateArgs::default()
    };
    let rows = commands::ablate(&args, &mut io::sink()).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for n in [256, 1024] {
        let at: Vec<_> = rows.iter().filter(|r| r.input_points == n).collect();
        let all = at
            .iter()
            .find(|r| r.row.poolings.len() == 4)
            .ok_or("missing all-pooling row")?
            .overall;
        let best_single = at
            .iter()
            .filter(|r| r.row.poolings.len() == 1)
            .map(|r| r.overall)
            .fold(0.0, f64::max);
        ensure(all >= best_single, || {
            format!(
                "at {n} points all four {:.2}% < best single {:.2}%",
                100.0 * all,
                100.0 * best_single
            )
        })?;
        summary.push(format!(
            "{n}: all {:.2}% vs best single {:.2}%",
            100.0 * all,
            100.0 * best_single
        ));
    }
    Ok(summary.join("; "))
}

fn modelnet_density(ds: &Dataset) -> Check {
    let bundle = ds.scratch.join("points1024.phb");
    ensure(bundle.is_file(), || "1,024-point bundle missing".into())?;
    let args = EvalArgs {
        bundle,
        data: Some(ds.root.clone()),
        points: vec![256, 512, 768, 1024],
        split: pointhop::Split::Test,
        report: Some(ds.scratch.join("density.json")),
    };
    let out = commands::eval(&args, &mut io::sink()).map_err(|e| e.to_string())?;
    let accs: Vec<f64> = out.reports.iter().map(|(_, r)| r.overall_accuracy).collect();
    ensure(accs[0] >= 0.7 * accs[3], || {
        format!(
            "test-256 {:.2}% below 70% of test-1024 {:.2}%",
            100.0 * accs[0],
            100.0 * accs[3]
        )
    })?;
    Ok(format!(
        "test 256/512/768/1024: {}",
        accs.iter()
            .map(|a| format!("{:.2}%", 100.0 * a))
            .collect::<Vec<_>>()
            .join(" / ")
    ))
}

fn modelnet_flower_pot(ds: &Dataset) -> Check {
    let bundle = pointhop_cli::RunBundle::load(&ds.scratch.join("points1024.phb")).map_err(|e| e.to_string())?;
    let report = bundle.report.ok_or("bundle carries no report")?;
    let worst: Vec<&str> = report
        .worst_classes()
        .into_iter()
        .take(3)
        .map(|i| report.class_names[i].as_str())
        .collect();
    ensure(worst.contains(&"flower_pot"), || format!("bottom three are {worst:?}"))?;
    Ok(format!("bottom three {worst:?}"))
}

fn main() -> ExitCode {
    let mut lines: Vec<(&str, Verdict)> = vec![
        ("knn-oracle", verdict(knn_oracle())),
        ("fps-oracle", verdict(fps_oracle())),
        ("saab-bank", verdict(saab_criteria())),
        ("descriptor-permutation", verdict(permutation_invariance())),
        ("dimension-chain", verdict(dimension_chain())),
        ("synthetic-end-to-end", verdict(synthetic_end_to_end())),
    ];
    let ds = dataset();
    lines.push(("modelnet40-256", gated(&ds, modelnet_256)));
    lines.push(("modelnet40-1024", gated(&ds, modelnet_1024)));
    lines.push(("modelnet40-rotation-ensemble", gated(&ds, modelnet_rotations)));
    lines.push((
        "modelnet40-all-cases-ensemble",
        match &ds {
            Some(Ok(d)) => modelnet_all_cases(d),
            _ => gated(&ds, |_| unreachable!()),
        },
    ));
    lines.push(("modelnet40-pooling-trend", gated(&ds, modelnet_pooling_trend)));
    lines.push(("modelnet40-density", gated(&ds, modelnet_density)));
    lines.push(("modelnet40-flower-pot", gated(&ds, modelnet_flower_pot)));

    let mut failed = 0;
    for (name, v) in &lines {
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name}: {detail}");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
