//! Experiment configuration files (TOML) and their resolution into library types.

use std::path::{Path, PathBuf};

use pointhop::{
    Axis, BranchSpec, ClassifierParams, EnsembleSpec, FeatureStages, ForestParams, Fusion, InitialAttributes,
    LinearParams, MaxFeatures, PointHopConfig, Pooling, Reduction, Sampling,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// The configuration shipped as `configs/default.toml`.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub schema_version: u32,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub input_points: usize,
    pub unit_points: Vec<usize>,
    pub k: Vec<usize>,
    pub n_ac: Vec<usize>,
    pub poolings: Vec<String>,
    pub attributes: String,
    pub sampling: String,
    pub reduction: String,
    pub features: String,
    pub center_ac: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self::from_config(&PointHopConfig::default())
    }
}

impl PipelineSection {
    pub fn from_config(c: &PointHopConfig) -> Self {
        Self {
            input_points: c.input_points,
            unit_points: c.unit_points.clone(),
            k: c.k_values.clone(),
            n_ac: c.n_ac.clone(),
            poolings: c.poolings.iter().map(|p| p.name().to_string()).collect(),
            attributes: match c.initial_attributes {
                InitialAttributes::Xyz => "xyz",
                InitialAttributes::XyzRgb => "xyzrgb",
            }
            .into(),
            sampling: sampling_name(c.sampling).into(),
            reduction: reduction_name(c.reduction).into(),
            features: match c.features {
                FeatureStages::All => "all",
                FeatureStages::Last => "last",
            }
            .into(),
            center_ac: c.center_ac,
        }
    }

    pub fn resolve(&self, seed: u64) -> Result<PointHopConfig> {
        let poolings = self
            .poolings
            .iter()
            .map(|p| p.parse::<Pooling>().map_err(CliError::Usage))
            .collect::<Result<Vec<_>>>()?;
        let config = PointHopConfig {
            input_points: self.input_points,
            unit_points: self.unit_points.clone(),
            k_values: self.k.clone(),
            n_ac: self.n_ac.clone(),
            poolings,
            initial_attributes: match self.attributes.as_str() {
                "xyz" => InitialAttributes::Xyz,
                "xyzrgb" => InitialAttributes::XyzRgb,
                other => return Err(CliError::usage(format!("unknown attributes {other:?} (xyz or xyzrgb)"))),
            },
            sampling: parse_sampling(&self.sampling)?,
            reduction: parse_reduction(&self.reduction)?,
            features: match self.features.as_str() {
                "all" => FeatureStages::All,
                "last" => FeatureStages::Last,
                other => return Err(CliError::usage(format!("unknown features {other:?} (all or last)"))),
            },
            center_ac: self.center_ac,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

pub fn sampling_name(s: Sampling) -> &'static str {
    match s {
        Sampling::Fps => "fps",
        Sampling::Random => "random",
    }
}

pub fn reduction_name(r: Reduction) -> &'static str {
    match r {
        Reduction::Saab => "saab",
        Reduction::Pca => "pca",
    }
}

pub fn parse_sampling(s: &str) -> Result<Sampling> {
    match s {
        "fps" | "on" => Ok(Sampling::Fps),
        "random" | "off" => Ok(Sampling::Random),
        other => Err(CliError::usage(format!("unknown sampling {other:?} (fps or random)"))),
    }
}

pub fn parse_reduction(s: &str) -> Result<Reduction> {
    match s {
        "saab" => Ok(Reduction::Saab),
        "pca" => Ok(Reduction::Pca),
        other => Err(CliError::usage(format!("unknown reduction {other:?} (saab or pca)"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    /// `rf` or `linear`.
    pub kind: String,
    pub n_trees: usize,
    /// 0 means unlimited.
    pub max_depth: usize,
    pub min_leaf: usize,
    /// `sqrt`, `all`, or a count.
    pub max_features: String,
    pub c: f64,
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let f = ForestParams::default();
        let l = LinearParams::default();
        Self {
            kind: "rf".into(),
            n_trees: f.n_trees,
            max_depth: 0,
            min_leaf: f.min_leaf,
            max_features: "sqrt".into(),
            c: l.c,
            tol: l.tol,
            max_epochs: l.max_epochs,
        }
    }
}

impl ClassifierSection {
    pub fn resolve(&self) -> Result<ClassifierParams> {
        self.resolve_kind(&self.kind)
    }

    /// Resolve with the classifier kind replaced (used by ablation sweeps).
    pub fn resolve_kind(&self, kind: &str) -> Result<ClassifierParams> {
        match kind {
            "rf" => {
                if self.n_trees == 0 {
                    return Err(CliError::usage("n_trees must be positive"));
                }
                let max_features = match self.max_features.as_str() {
                    "sqrt" => MaxFeatures::Sqrt,
                    "all" => MaxFeatures::All,
                    n => MaxFeatures::Count(
                        n.parse()
                            .map_err(|_| CliError::usage(format!("max_features {n:?} is not sqrt, all or a count")))?,
                    ),
                };
                Ok(ClassifierParams::Forest(ForestParams {
                    n_trees: self.n_trees,
                    max_depth: (self.max_depth > 0).then_some(self.max_depth),
                    min_leaf: self.min_leaf.max(1),
                    max_features,
                    bootstrap: true,
                }))
            }
            "linear" | "svm" => {
                if self.c.is_nan() || self.c <= 0.0 {
                    return Err(CliError::usage("c must be positive"));
                }
                Ok(ClassifierParams::Linear(LinearParams {
                    c: self.c,
                    tol: self.tol,
                    max_epochs: self.max_epochs.max(1),
                    seed: 0,
                }))
            }
            other => Err(CliError::usage(format!("unknown classifier {other:?} (rf or linear)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSection {
    #[serde(default)]
    pub angle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_points: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ac: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    /// `rotations`, `filter-counts`, `neighborhood-sizes`, `unit-points` or `all`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default = "default_fusion")]
    pub fusion: String,
    #[serde(default = "default_axis")]
    pub axis: String,
    /// Explicit branches, used when no preset is given.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branch: Vec<BranchSection>,
}

fn default_fusion() -> String {
    "feature".into()
}

fn default_axis() -> String {
    "z".into()
}

impl EnsembleSection {
    pub fn resolve(&self, base: &PointHopConfig) -> Result<EnsembleSpec> {
        let mut spec = match self.preset.as_deref() {
            Some("rotations") => EnsembleSpec::rotations(base),
            Some("filter-counts") => EnsembleSpec::filter_counts(base),
            Some("neighborhood-sizes") => EnsembleSpec::neighborhood_sizes(base),
            Some("unit-points") => EnsembleSpec::unit_point_counts(base),
            Some("all") => EnsembleSpec::all_cases(base),
            Some(other) => return Err(CliError::usage(format!("unknown ensemble preset {other:?}"))),
            None => EnsembleSpec {
                branches: self
                    .branch
                    .iter()
                    .map(|b| BranchSpec {
                        config: PointHopConfig {
                            unit_points: b.unit_points.clone().unwrap_or_else(|| base.unit_points.clone()),
                            k_values: b.k.clone().unwrap_or_else(|| base.k_values.clone()),
                            n_ac: b.n_ac.clone().unwrap_or_else(|| base.n_ac.clone()),
                            ..base.clone()
                        },
                        angle: b.angle,
                    })
                    .collect(),
                fusion: Fusion::Feature,
                axis: Axis::Z,
            },
        };
        if self.preset.is_some() && !self.branch.is_empty() {
            return Err(CliError::usage(
                "an ensemble takes either a preset or explicit branches, not both",
            ));
        }
        spec.fusion = self.fusion.parse().map_err(CliError::Usage)?;
        spec.axis = self.axis.parse().map_err(CliError::Usage)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision {other:?} (f32 or f64)")),
        }
    }
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub precision: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            precision: Precision::F64.name().into(),
        }
    }
}

/// A fully resolved experiment. The seed always comes from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub file: ExperimentFile,
    pub dataset_root: Option<PathBuf>,
    pub pipeline: PointHopConfig,
    pub classifier: ClassifierParams,
    pub ensemble: Option<EnsembleSpec>,
    pub precision: Precision,
    pub seed: u64,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ExperimentFile =
            toml::from_str(text).map_err(|e| CliError::usage(format!("config: {}", e.message())))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(CliError::usage(format!(
                "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Self::parse(DEFAULT_CONFIG),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| e.context(p.display()))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, seed: u64) -> Result<ExperimentConfig> {
        let pipeline = self.pipeline.resolve(seed)?;
        let classifier = self.classifier.resolve()?;
        let ensemble = self.ensemble.as_ref().map(|e| e.resolve(&pipeline)).transpose()?;
        Ok(ExperimentConfig {
            file: self.clone(),
            dataset_root: self.dataset.root.clone(),
            pipeline,
            classifier,
            ensemble,
            precision: self.run.precision.parse().map_err(CliError::Usage)?,
            seed,
        })
    }
}
