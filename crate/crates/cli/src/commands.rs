//! The work behind each subcommand. Human-readable progress goes to `out`;
//! results are also returned so callers (and tests) can inspect them.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use pointhop::classify::argmax;
use pointhop::ensemble::{fit_branches, FittedBranch};
use pointhop::pcio::{manifest_file_name, PcioError};
use pointhop::rng::{derive_seed, fnv1a};
use pointhop::{
    fit_pointhop_with_features, load_manifest, load_manifest_with_classes, load_point_set, normalize_cloud, parse_off,
    random_dropout, sample_mesh_surface, write_point_set, Classifier, ClassifierParams, DatasetManifest, EnsembleModel,
    EvalReport, FeatureStages, PointCloud, PointHopConfig, PointHopModel, PointSetFormat, Pooling, Real, Reduction,
    Sampling, Split,
};
use rayon::prelude::*;
use serde_json::json;

use crate::bundle::{ensemble_body, single_body, RunBundle};
use crate::config::{parse_reduction, parse_sampling, reduction_name, sampling_name, ExperimentFile, Precision};
use crate::data::{load_split, LoadedSplit};
use crate::error::{CliError, Result};
use crate::report::{report_json, report_text, to_json_string};

/// Wall-clock durations of named stages, in execution order.
#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub stages: Vec<(String, Duration)>,
}

impl Timings {
    pub fn time<R>(&mut self, name: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let r = f();
        self.stages.push((name.to_string(), start.elapsed()));
        r
    }

    pub fn total(&self) -> Duration {
        self.stages.iter().map(|s| s.1).sum()
    }

    pub fn print(&self, out: &mut dyn Write) -> Result<()> {
        for (name, d) in &self.stages {
            emit(out, &format!("  {name:<24} {:>10.2} s", d.as_secs_f64()))?;
        }
        emit(
            out,
            &format!("  {:<24} {:>10.2} s", "total", self.total().as_secs_f64()),
        )
    }
}

fn emit(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| CliError::data(format!("write failed: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn classifier_seed(seed: u64) -> u64 {
    derive_seed(seed, 1)
}

// ---------------------------------------------------------------- convert

#[derive(Debug, Clone)]
pub struct ConvertArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub seed: u64,
    pub points: usize,
    pub skip_invalid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvertSummary {
    pub train: usize,
    pub test: usize,
    pub skipped: Vec<PathBuf>,
}

fn convert_one(path: &Path, points: usize, seed: u64) -> Result<PointCloud<f64>, PcioError> {
    let cloud = if path.extension().is_some_and(|e| e == "off") {
        let bytes = fs::read(path).map_err(|source| PcioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        sample_mesh_surface(&parse_off(&bytes)?, points, seed)?
    } else {
        let pc: PointCloud<f64> = load_point_set(path)?;
        random_dropout(&pc, points, seed).map_err(|_| PcioError::TruncatedFile {
            what: "point set",
            expected: points,
            found: pc.len(),
        })?
    };
    Ok(normalize_cloud(&cloud))
}

/// Sample every mesh of both splits to `points` normalized points and write
/// packed point sets plus `train.tsv` / `test.tsv` under `output`.
pub fn convert(args: &ConvertArgs, out: &mut dyn Write) -> Result<ConvertSummary> {
    if args.points == 0 {
        return Err(CliError::usage("--points must be positive"));
    }
    let train = load_manifest(&args.input, Split::Train)?;
    let test = load_manifest_with_classes(&args.input, Split::Test, Some(&train.class_names))?;
    let mut skipped = Vec::new();
    let mut counts = [0usize; 2];
    for (slot, manifest) in [&train, &test].into_iter().enumerate() {
        let split = manifest.split.as_str();
        let results: Vec<(PathBuf, u32, Result<PathBuf, PcioError>)> = manifest
            .entries
            .par_iter()
            .map(|(path, class)| {
                let name = &manifest.class_names[*class as usize];
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud");
                let rel = PathBuf::from(name).join(split).join(format!("{stem}.php"));
                let key = format!("{}/{split}/{stem}", name);
                let seed = derive_seed(args.seed, fnv1a(key.as_bytes()));
                let result = convert_one(path, args.points, seed).and_then(|pc| {
                    let dest = args.output.join(&rel);
                    let bytes = write_point_set(&pc, PointSetFormat::PackedBinary);
                    if let Some(dir) = dest.parent() {
                        fs::create_dir_all(dir).map_err(|source| PcioError::Io {
                            path: dir.to_path_buf(),
                            source,
                        })?;
                    }
                    fs::write(&dest, bytes).map_err(|source| PcioError::Io {
                        path: dest.clone(),
                        source,
                    })?;
                    Ok(dest)
                });
                (path.clone(), *class, result)
            })
            .collect();
        let mut entries = Vec::with_capacity(results.len());
        for (src, class, r) in results {
            match r {
                Ok(dest) => entries.push((dest, class)),
                Err(e) if args.skip_invalid => {
                    log::warn!("skipping {}: {e}", src.display());
                    skipped.push(src);
                }
                Err(e) => return Err(CliError::from(e).context(src.display())),
            }
        }
        counts[slot] = entries.len();
        let converted = DatasetManifest {
            entries,
            class_names: manifest.class_names.clone(),
            split: manifest.split,
        };
        write_file(
            &args.output.join(manifest_file_name(manifest.split)),
            converted.to_tsv(&args.output).as_bytes(),
        )?;
        emit(out, &format!("{split}: {} clouds", counts[slot]))?;
    }
    if !skipped.is_empty() {
        emit(out, &format!("skipped {} invalid files", skipped.len()))?;
    }
    Ok(ConvertSummary {
        train: counts[0],
        test: counts[1],
        skipped,
    })
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub config: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub bundle: PathBuf,
    pub seed: u64,
    pub precision: Option<Precision>,
    pub report: Option<PathBuf>,
    pub skip_eval: bool,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub bundle: RunBundle,
    pub timings: Timings,
}

fn resolve_root(flag: &Option<PathBuf>, file: &ExperimentFile) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| file.dataset.root.clone())
        .ok_or_else(|| CliError::usage("no dataset given (use --data or [dataset] root)"))
}

/// The test split if the dataset has one at all.
fn maybe_test<T: Real>(root: &Path, classes: &[String]) -> Result<Option<LoadedSplit<T>>> {
    if !has_split(root, Split::Test) {
        return Ok(None);
    }
    load_split(root, Split::Test, Some(classes)).map(Some)
}

fn has_split(root: &Path, split: Split) -> bool {
    // A single manifest file names one split only.
    if root.is_file() {
        return false;
    }
    if root.join(manifest_file_name(split)).is_file() {
        return true;
    }
    fs::read_dir(root)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .any(|e| e.path().join(split.as_str()).is_dir())
        })
        .unwrap_or(false)
}

fn prepare(args: &FitArgs, ensemble: bool) -> Result<(ExperimentFile, crate::config::ExperimentConfig, PathBuf)> {
    let mut file = ExperimentFile::load(args.config.as_deref())?;
    if let Some(p) = args.precision {
        file.run.precision = p.name().into();
    }
    let cfg = file.resolve(args.seed)?;
    match (ensemble, cfg.ensemble.is_some()) {
        (false, true) => return Err(CliError::usage("config has an [ensemble] section; use ensemble-fit")),
        (true, false) => {
            return Err(CliError::usage(
                "ensemble-fit needs an [ensemble] section in the config",
            ))
        }
        _ => {}
    }
    let root = resolve_root(&args.data, &file)?;
    Ok((file, cfg, root))
}

pub fn fit(args: &FitArgs, out: &mut dyn Write) -> Result<FitOutcome> {
    let (file, cfg, root) = prepare(args, false)?;
    match cfg.precision {
        Precision::F32 => fit_typed::<f32>(args, &file, &cfg.pipeline, &cfg.classifier, cfg.precision, &root, out),
        Precision::F64 => fit_typed::<f64>(args, &file, &cfg.pipeline, &cfg.classifier, cfg.precision, &root, out),
    }
}

fn fit_typed<T: Real>(
    args: &FitArgs,
    file: &ExperimentFile,
    pipeline: &PointHopConfig,
    params: &ClassifierParams,
    precision: Precision,
    root: &Path,
    out: &mut dyn Write,
) -> Result<FitOutcome> {
    let mut t = Timings::default();
    let train: LoadedSplit<T> = t.time("load train split", || load_split(root, Split::Train, None))?;
    emit(
        out,
        &format!(
            "train: {} clouds, {} classes",
            train.clouds.len(),
            train.manifest.class_names.len()
        ),
    )?;
    let fitted = t.time("fit pipeline", || fit_pointhop_with_features(&train.clouds, pipeline))?;
    let clf = t.time("fit classifier", || {
        Classifier::fit(&fitted.features, &train.labels, params, classifier_seed(args.seed))
    })?;
    let classes = &train.manifest.class_names;
    let report = if args.skip_eval {
        None
    } else {
        match t.time("load test split", || maybe_test::<T>(root, classes))? {
            Some(test) => {
                let feats = t.time("extract test features", || {
                    fitted.model.extract_many(&test.clouds, None)
                })?;
                Some(t.time("evaluate", || pointhop::evaluate(&clf, &feats, &test.labels, classes))?)
            }
            None => {
                log::warn!("no test split under {}; bundle carries no report", root.display());
                None
            }
        }
    };
    let bundle = RunBundle {
        config_toml: file.to_toml(),
        seed: args.seed,
        precision,
        class_names: classes.clone(),
        body: single_body(&fitted.model, &clf),
        report,
    };
    finish_fit(args, bundle, t, out)
}

fn finish_fit(args: &FitArgs, bundle: RunBundle, timings: Timings, out: &mut dyn Write) -> Result<FitOutcome> {
    write_file(&args.bundle, &bundle.to_bytes())?;
    emit(out, "stage timings:")?;
    timings.print(out)?;
    if let Some(rep) = &bundle.report {
        write!(out, "{}", report_text(rep)).map_err(|e| CliError::data(e.to_string()))?;
        if let Some(path) = &args.report {
            write_file(path, to_json_string(&report_json(rep)).as_bytes())?;
        }
    }
    emit(out, &format!("bundle written to {}", args.bundle.display()))?;
    Ok(FitOutcome { bundle, timings })
}

// ---------------------------------------------------------------- ensemble-fit

#[derive(Debug, Clone)]
pub struct BranchBaseline {
    pub angle: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub fit: FitOutcome,
    /// Accuracy of each branch with its own classifier, when requested.
    pub baselines: Vec<BranchBaseline>,
}

pub fn ensemble_fit(args: &FitArgs, baselines: bool, out: &mut dyn Write) -> Result<EnsembleOutcome> {
    let (file, cfg, root) = prepare(args, true)?;
    let spec = cfg.ensemble.clone().expect("checked in prepare");
    match cfg.precision {
        Precision::F32 => ensemble_typed::<f32>(
            args,
            &file,
            &spec,
            &cfg.classifier,
            cfg.precision,
            &root,
            baselines,
            out,
        ),
        Precision::F64 => ensemble_typed::<f64>(
            args,
            &file,
            &spec,
            &cfg.classifier,
            cfg.precision,
            &root,
            baselines,
            out,
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn ensemble_typed<T: Real>(
    args: &FitArgs,
    file: &ExperimentFile,
    spec: &pointhop::EnsembleSpec,
    params: &ClassifierParams,
    precision: Precision,
    root: &Path,
    want_baselines: bool,
    out: &mut dyn Write,
) -> Result<EnsembleOutcome> {
    let mut t = Timings::default();
    let train: LoadedSplit<T> = t.time("load train split", || load_split(root, Split::Train, None))?;
    emit(
        out,
        &format!(
            "train: {} clouds, {} branches, {} fusion",
            train.clouds.len(),
            spec.branches.len(),
            spec.fusion
        ),
    )?;
    let (branches, train_feats) = t.time("fit branches", || fit_branches(spec, &train.clouds))?;
    let seed = classifier_seed(args.seed);
    let head = t.time("fit fusion classifier", || {
        EnsembleModel::fit_head(spec.fusion, &train_feats, &train.labels, params, seed)
    })?;
    let model = EnsembleModel::from_parts(branches, head)?;
    let classes = &train.manifest.class_names;
    let mut baselines = Vec::new();
    let report = if args.skip_eval {
        None
    } else {
        match t.time("load test split", || maybe_test::<T>(root, classes))? {
            Some(test) => {
                let test_feats = t.time("extract test features", || {
                    model
                        .branches
                        .iter()
                        .map(|b| b.extract_many(&test.clouds))
                        .collect::<Result<Vec<_>, _>>()
                })?;
                let report = t.time("evaluate", || -> Result<EvalReport> {
                    let predicted = (0..test.clouds.len())
                        .into_par_iter()
                        .map(|i| {
                            let sample: Vec<Vec<T>> = test_feats.iter().map(|rows| rows[i].clone()).collect();
                            Ok(argmax(&model.predict_proba_from_features(&sample)?) as u32)
                        })
                        .collect::<Result<Vec<u32>, pointhop::EnsembleError>>()?;
                    Ok(EvalReport::from_predictions(&predicted, &test.labels, classes)?)
                })?;
                if want_baselines {
                    baselines = t.time("branch baselines", || {
                        branch_baselines(
                            &model.branches,
                            &train_feats,
                            &train.labels,
                            &test_feats,
                            &test.labels,
                            classes,
                            params,
                            seed,
                        )
                    })?;
                    for (i, b) in baselines.iter().enumerate() {
                        emit(
                            out,
                            &format!("branch {} (angle {}): {:.2}%", i + 1, b.angle, 100.0 * b.accuracy),
                        )?;
                    }
                }
                Some(report)
            }
            None => None,
        }
    };
    let bundle = RunBundle {
        config_toml: file.to_toml(),
        seed: args.seed,
        precision,
        class_names: classes.clone(),
        body: ensemble_body(&model),
        report,
    };
    let fit = finish_fit(args, bundle, t, out)?;
    Ok(EnsembleOutcome { fit, baselines })
}

#[allow(clippy::too_many_arguments)]
fn branch_baselines<T: Real>(
    branches: &[FittedBranch<T>],
    train_feats: &[Vec<Vec<T>>],
    train_labels: &[u32],
    test_feats: &[Vec<Vec<T>>],
    test_labels: &[u32],
    classes: &[String],
    params: &ClassifierParams,
    seed: u64,
) -> Result<Vec<BranchBaseline>> {
    branches
        .iter()
        .zip(train_feats)
        .zip(test_feats)
        .map(|((b, tr), te)| {
            let clf = Classifier::fit(tr, train_labels, params, seed)?;
            let r = pointhop::evaluate(&clf, te, test_labels, classes)?;
            Ok(BranchBaseline {
                angle: b.angle,
                accuracy: r.overall_accuracy,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub bundle: PathBuf,
    pub data: Option<PathBuf>,
    /// Test-time input point counts; empty means the trained count.
    pub points: Vec<usize>,
    pub split: Split,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// `(input points or None for the trained count, report)`.
    pub reports: Vec<(Option<usize>, EvalReport)>,
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<EvalOutcome> {
    let bundle = RunBundle::load(&args.bundle)?;
    let file = ExperimentFile::parse(&bundle.config_toml)?;
    let root = resolve_root(&args.data, &file)?;
    let outcome = match bundle.precision {
        Precision::F32 => eval_typed::<f32>(args, &bundle, &root)?,
        Precision::F64 => eval_typed::<f64>(args, &bundle, &root)?,
    };
    for (points, rep) in &outcome.reports {
        match points {
            Some(n) => emit(out, &format!("== {n} input points"))?,
            None => emit(out, "== trained input points")?,
        }
        write!(out, "{}", report_text(rep)).map_err(|e| CliError::data(e.to_string()))?;
    }
    if let Some(path) = &args.report {
        let value = if args.points.is_empty() {
            report_json(&outcome.reports[0].1)
        } else {
            json!({
                "curve": outcome.reports.iter().map(|(n, r)| {
                    let mut v = report_json(r);
                    v["input_points"] = json!(n);
                    v
                }).collect::<Vec<_>>()
            })
        };
        write_file(path, to_json_string(&value).as_bytes())?;
    }
    Ok(outcome)
}

fn eval_typed<T: Real>(args: &EvalArgs, bundle: &RunBundle, root: &Path) -> Result<EvalOutcome> {
    let split: LoadedSplit<T> = load_split(root, args.split, Some(&bundle.class_names))?;
    let classes = &bundle.class_names;
    let densities: Vec<Option<usize>> = if args.points.is_empty() {
        vec![None]
    } else {
        args.points.iter().map(|&n| Some(n)).collect()
    };
    let mut reports = Vec::new();
    if let Some((model, clf)) = bundle.single::<T>()? {
        for n in densities {
            let feats = model.extract_many(&split.clouds, n)?;
            reports.push((n, pointhop::evaluate(&clf, &feats, &split.labels, classes)?));
        }
    } else if let Some(model) = bundle.ensemble::<T>()? {
        if !args.points.is_empty() {
            return Err(CliError::usage("--points is only supported for single-model bundles"));
        }
        reports.push((None, model.evaluate(&split.clouds, &split.labels, classes)?));
    }
    Ok(EvalOutcome { reports })
}

// ---------------------------------------------------------------- ablate

/// One configuration of the ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub features: FeatureStages,
    pub sampling: Sampling,
    pub poolings: Vec<Pooling>,
    pub classifier: String,
    pub reduction: Reduction,
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub input_points: usize,
    pub row: AblationRow,
    pub overall: f64,
    pub average: f64,
}

fn row(
    features: FeatureStages,
    sampling: Sampling,
    poolings: &[Pooling],
    classifier: &str,
    reduction: Reduction,
) -> AblationRow {
    AblationRow {
        features,
        sampling,
        poolings: poolings.to_vec(),
        classifier: classifier.to_string(),
        reduction,
    }
}

/// The ablation grid over features used, FPS, pooling, classifier and reduction.
pub fn component_rows() -> Vec<AblationRow> {
    use FeatureStages::{All, Last};
    use Pooling::{Max, Mean, L1, L2};
    use Reduction::{Pca, Saab};
    use Sampling::{Fps, Random};
    vec![
        row(Last, Fps, &[Max], "linear", Saab),
        row(All, Random, &[Max], "linear", Saab),
        row(All, Fps, &[Max], "linear", Saab),
        row(All, Random, &[Max], "rf", Saab),
        row(All, Fps, &[Max], "rf", Saab),
        row(All, Fps, &[Mean], "rf", Saab),
        row(All, Fps, &[L1], "rf", Saab),
        row(All, Fps, &[L2], "rf", Saab),
        row(All, Fps, &[Max, Mean], "rf", Saab),
        row(All, Fps, &[Max, L1], "rf", Saab),
        row(All, Fps, &[Max, L2], "rf", Saab),
        row(All, Fps, &Pooling::ALL, "rf", Saab),
        row(All, Fps, &Pooling::ALL, "rf", Pca),
    ]
}

/// Single poolings, the three pairs with max, and all four.
pub fn pooling_rows() -> Vec<AblationRow> {
    use Pooling::{Max, Mean, L1, L2};
    let sets: [&[Pooling]; 8] = [
        &[Max],
        &[Mean],
        &[L1],
        &[L2],
        &[Max, Mean],
        &[Max, L1],
        &[Max, L2],
        &Pooling::ALL,
    ];
    sets.iter()
        .map(|p| row(FeatureStages::All, Sampling::Fps, p, "rf", Reduction::Saab))
        .collect()
}

/// `max+mean`, `all`, or a single pooling name.
pub fn parse_pooling_set(s: &str) -> Result<Vec<Pooling>> {
    if s == "all" {
        return Ok(Pooling::ALL.to_vec());
    }
    let mut set: Vec<Pooling> = s
        .split('+')
        .map(|p| p.trim().parse::<Pooling>().map_err(CliError::Usage))
        .collect::<Result<_>>()?;
    set.sort_by_key(|p| Pooling::ALL.iter().position(|q| q == p));
    set.dedup();
    Ok(set)
}

#[derive(Debug, Clone, Default)]
pub struct AblateArgs {
    pub config: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub seed: u64,
    /// `components` or `poolings`; when absent the axes below form a full grid.
    pub preset: Option<String>,
    pub features: Vec<String>,
    pub fps: Vec<String>,
    pub poolings: Vec<String>,
    pub classifier: Vec<String>,
    pub reduction: Vec<String>,
    /// Input point counts to sweep; empty means the config's count.
    pub input_points: Vec<usize>,
    pub output: Option<PathBuf>,
}

fn grid_rows(args: &AblateArgs, base: &PointHopConfig, default_classifier: &str) -> Result<Vec<AblationRow>> {
    let or = |v: &Vec<String>, d: String| if v.is_empty() { vec![d] } else { v.clone() };
    let features = or(
        &args.features,
        match base.features {
            FeatureStages::All => "all".into(),
            FeatureStages::Last => "last".into(),
        },
    );
    let fps = or(&args.fps, sampling_name(base.sampling).into());
    let poolings = or(
        &args.poolings,
        base.poolings.iter().map(|p| p.name()).collect::<Vec<_>>().join("+"),
    );
    let classifiers = or(&args.classifier, default_classifier.into());
    let reductions = or(&args.reduction, reduction_name(base.reduction).into());
    let mut rows = Vec::new();
    for f in &features {
        let fs = match f.as_str() {
            "all" => FeatureStages::All,
            "last" => FeatureStages::Last,
            other => {
                return Err(CliError::usage(format!(
                    "unknown features value {other:?} (all or last)"
                )))
            }
        };
        for s in &fps {
            let sampling = parse_sampling(s)?;
            for p in &poolings {
                let set = parse_pooling_set(p)?;
                for c in &classifiers {
                    for r in &reductions {
                        rows.push(row(fs, sampling, &set, c, parse_reduction(r)?));
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn select_columns<T: Copy>(rows: &[Vec<T>], cols: &[usize]) -> Vec<Vec<T>> {
    rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect()
}

pub fn ablate(args: &AblateArgs, out: &mut dyn Write) -> Result<Vec<AblationResult>> {
    let file = ExperimentFile::load(args.config.as_deref())?;
    let cfg = file.resolve(args.seed)?;
    let root = resolve_root(&args.data, &file)?;
    match cfg.precision {
        Precision::F32 => ablate_typed::<f32>(args, &file, &cfg.pipeline, &root, out),
        Precision::F64 => ablate_typed::<f64>(args, &file, &cfg.pipeline, &root, out),
    }
}

fn ablate_typed<T: Real>(
    args: &AblateArgs,
    file: &ExperimentFile,
    base: &PointHopConfig,
    root: &Path,
    out: &mut dyn Write,
) -> Result<Vec<AblationResult>> {
    let rows = match args.preset.as_deref() {
        Some("components") => component_rows(),
        Some("poolings") => pooling_rows(),
        Some(other) => {
            return Err(CliError::usage(format!(
                "unknown ablation preset {other:?} (components or poolings)"
            )))
        }
        None => grid_rows(args, base, &file.classifier.kind)?,
    };
    let train: LoadedSplit<T> = load_split(root, Split::Train, None)?;
    let classes = train.manifest.class_names.clone();
    let test: LoadedSplit<T> = load_split(root, Split::Test, Some(&classes))?;
    let densities = if args.input_points.is_empty() {
        vec![base.input_points]
    } else {
        args.input_points.clone()
    };
    let seed = classifier_seed(args.seed);
    emit(
        out,
        &format!(
            "{:>6}  {:<5} {:<6} {:<16} {:<6} {:<5} {:>8} {:>8}",
            "points", "feat", "fps", "pooling", "clf", "red", "overall", "average"
        ),
    )?;
    let mut results = Vec::new();
    for &n in &densities {
        let mut slots: Vec<Option<AblationResult>> = vec![None; rows.len()];
        // One fit per (sampling, reduction); every row is a column slice of it.
        let mut groups: Vec<(Sampling, Reduction)> = Vec::new();
        for r in &rows {
            if !groups.contains(&(r.sampling, r.reduction)) {
                groups.push((r.sampling, r.reduction));
            }
        }
        for (sampling, reduction) in groups {
            let mut unit_points = base.unit_points.clone();
            // A first unit that keeps every input point follows the sweep.
            unit_points[0] = if base.unit_points[0] == base.input_points {
                n
            } else {
                unit_points[0].min(n)
            };
            let config = PointHopConfig {
                input_points: n,
                unit_points,
                sampling,
                reduction,
                features: FeatureStages::All,
                poolings: Pooling::ALL.to_vec(),
                ..base.clone()
            };
            config.validate()?;
            let fitted = fit_pointhop_with_features(&train.clouds, &config)?;
            let test_feats = fitted.model.extract_many(&test.clouds, None)?;
            for (i, r) in rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r.sampling == sampling && r.reduction == reduction)
            {
                let units = match r.features {
                    FeatureStages::All => (0..config.n_units()).collect::<Vec<_>>(),
                    FeatureStages::Last => vec![config.n_units() - 1],
                };
                let cols = fitted.model.layout().columns(&units, &r.poolings);
                let params = file.classifier.resolve_kind(&r.classifier)?;
                let clf = Classifier::fit(&select_columns(&fitted.features, &cols), &train.labels, &params, seed)?;
                let rep = pointhop::evaluate(&clf, &select_columns(&test_feats, &cols), &test.labels, &classes)?;
                slots[i] = Some(AblationResult {
                    input_points: n,
                    row: r.clone(),
                    overall: rep.overall_accuracy,
                    average: rep.average_accuracy,
                });
            }
        }
        for result in slots.into_iter().flatten() {
            emit(out, &format_result(&result))?;
            results.push(result);
        }
    }
    if let Some(path) = &args.output {
        let rows: Vec<_> = results
            .iter()
            .map(|r| {
                json!({
                    "input_points": r.input_points,
                    "features": match r.row.features { FeatureStages::All => "all", FeatureStages::Last => "last" },
                    "sampling": sampling_name(r.row.sampling),
                    "poolings": r.row.poolings.iter().map(|p| p.name()).collect::<Vec<_>>(),
                    "classifier": r.row.classifier,
                    "reduction": reduction_name(r.row.reduction),
                    "overall_accuracy": r.overall,
                    "average_accuracy": r.average,
                })
            })
            .collect();
        write_file(path, to_json_string(&json!({ "rows": rows })).as_bytes())?;
    }
    Ok(results)
}

pub fn format_result(r: &AblationResult) -> String {
    format!(
        "{:>6}  {:<5} {:<6} {:<16} {:<6} {:<5} {:>7.2}% {:>7.2}%",
        r.input_points,
        match r.row.features {
            FeatureStages::All => "all",
            FeatureStages::Last => "last",
        },
        sampling_name(r.row.sampling),
        r.row.poolings.iter().map(|p| p.name()).collect::<Vec<_>>().join("+"),
        r.row.classifier,
        reduction_name(r.row.reduction),
        100.0 * r.overall,
        100.0 * r.average
    )
}

// ---------------------------------------------------------------- inspect

#[derive(Debug, Clone)]
pub struct InspectArgs {
    pub bundle: PathBuf,
    pub cloud: PathBuf,
    /// 1-based unit number.
    pub unit: usize,
    /// 0-based channel; channel 0 is the DC response.
    pub channel: usize,
    /// Ensemble branch (0-based); ignored for single-model bundles.
    pub branch: usize,
    pub output: Option<PathBuf>,
}

/// `x y z response` lines, the response min-max normalized to [0, 1].
pub fn inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<String> {
    let bundle = RunBundle::load(&args.bundle)?;
    let text = match bundle.precision {
        Precision::F32 => inspect_typed::<f32>(args, &bundle)?,
        Precision::F64 => inspect_typed::<f64>(args, &bundle)?,
    };
    match &args.output {
        Some(path) => {
            write_file(path, text.as_bytes())?;
            emit(out, &format!("responses written to {}", path.display()))?;
        }
        None => write!(out, "{text}").map_err(|e| CliError::data(e.to_string()))?,
    }
    Ok(text)
}

fn inspect_typed<T: Real>(args: &InspectArgs, bundle: &RunBundle) -> Result<String> {
    let (model, cloud): (PointHopModel<T>, PointCloud<T>) = {
        let cloud = load_point_set::<T>(&args.cloud).map_err(|e| CliError::from(e).context(args.cloud.display()))?;
        if let Some((m, _)) = bundle.single::<T>()? {
            (m, cloud)
        } else {
            let e = bundle.ensemble::<T>()?.expect("bundle is single or ensemble");
            let n = e.branches.len();
            let b = e
                .branches
                .into_iter()
                .nth(args.branch)
                .ok_or_else(|| CliError::usage(format!("branch {} out of range ({n} branches)", args.branch)))?;
            let rotated = pointhop::ensemble::rotate_cloud_about(&cloud, b.angle, b.axis);
            (b.model, rotated)
        }
    };
    if args.unit == 0 || args.unit > model.config().n_units() {
        return Err(CliError::usage(format!(
            "unit {} out of range (1..={})",
            args.unit,
            model.config().n_units()
        )));
    }
    let responses = model.channel_response(&cloud, args.unit - 1, args.channel)?;
    let vals: Vec<f64> = responses.iter().map(|(_, v)| v.to_f64_lossy()).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut s = String::new();
    for ((p, _), v) in responses.iter().zip(&vals) {
        let r = if span > 0.0 { (v - lo) / span } else { 0.0 };
        s.push_str(&format!("{} {} {} {r}\n", p[0], p[1], p[2]));
    }
    Ok(s)
}
