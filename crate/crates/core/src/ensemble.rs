//! Ensembles of PointHop pipelines.
//!
//! Each branch is an independent [`PointHopConfig`] applied to the input after
//! a rotation about a coordinate axis. Branches are fused either by
//! concatenating their feature vectors in front of one classifier, or by
//! concatenating per-branch class-probability vectors in front of a
//! second-stage classifier.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::classify::{Classifier, ClassifierParams, ClassifyError, EvalReport};
use crate::pcio::PointCloud;
use crate::pipeline::{fit_pointhop_with_features, PipelineError, PointHopConfig, PointHopModel};
use crate::rng::derive_seed;
use crate::scalar::{cast, Real};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("an ensemble needs at least one branch")]
    NoBranches,
    #[error("rotation angle {0} is outside [0, 360)")]
    AngleOutOfRange(f64),
    #[error("{found} branch models for {expected} branches")]
    BranchCount { expected: usize, found: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

pub type Result<T, E = EnsembleError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Axis {
    X,
    Y,
    #[default]
    Z,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(format!("unknown axis {other:?}")),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// Rotate about the z axis through the origin by `degrees`.
pub fn rotate_cloud<T: Real>(pc: &PointCloud<T>, degrees: f64) -> PointCloud<T> {
    rotate_cloud_about(pc, degrees, Axis::Z)
}

pub fn rotate_cloud_about<T: Real>(pc: &PointCloud<T>, degrees: f64, axis: Axis) -> PointCloud<T> {
    if degrees == 0.0 {
        return pc.clone();
    }
    let (s, c) = degrees.to_radians().sin_cos();
    // (first, second) coordinates of the rotation plane, right-handed about the axis.
    let (a, b) = match axis {
        Axis::X => (1, 2),
        Axis::Y => (2, 0),
        Axis::Z => (0, 1),
    };
    let points = pc
        .points
        .iter()
        .map(|p| {
            let u = p[a].to_f64_lossy();
            let v = p[b].to_f64_lossy();
            let mut q = *p;
            q[a] = cast(c * u - s * v);
            q[b] = cast(s * u + c * v);
            q
        })
        .collect();
    PointCloud {
        points,
        colors: pc.colors.clone(),
        label: pc.label,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fusion {
    #[default]
    Feature,
    Decision,
}

impl FromStr for Fusion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "feature" => Ok(Fusion::Feature),
            "decision" => Ok(Fusion::Decision),
            other => Err(format!("unknown fusion {other:?}")),
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Feature => "feature",
            Fusion::Decision => "decision",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpec {
    pub config: PointHopConfig,
    /// Rotation in degrees, within [0, 360).
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub branches: Vec<BranchSpec>,
    pub fusion: Fusion,
    pub axis: Axis,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(EnsembleError::NoBranches);
        }
        for b in &self.branches {
            if !(b.angle.is_finite() && (0.0..360.0).contains(&b.angle)) {
                return Err(EnsembleError::AngleOutOfRange(b.angle));
            }
            b.config.validate()?;
        }
        Ok(())
    }

    fn from_configs(configs: Vec<PointHopConfig>) -> Self {
        Self {
            branches: configs
                .into_iter()
                .map(|config| BranchSpec { config, angle: 0.0 })
                .collect(),
            fusion: Fusion::Feature,
            axis: Axis::Z,
        }
    }

    /// Five rotations of `base`: 0, 45, 90, 135 and 180 degrees.
    pub fn rotations(base: &PointHopConfig) -> Self {
        Self {
            branches: [0.0, 45.0, 90.0, 135.0, 180.0]
                .into_iter()
                .map(|angle| BranchSpec {
                    config: base.clone(),
                    angle,
                })
                .collect(),
            fusion: Fusion::Feature,
            axis: Axis::Z,
        }
    }

    /// Five AC filter-count settings applied to `base`.
    pub fn filter_counts(base: &PointHopConfig) -> Self {
        let sets = [
            [15, 25, 40, 80],
            [15, 25, 35, 50],
            [18, 30, 50, 90],
            [20, 40, 60, 100],
            [20, 40, 70, 120],
        ];
        Self::from_configs(
            sets.iter()
                .map(|n| PointHopConfig {
                    n_ac: n.to_vec(),
                    ..base.clone()
                })
                .collect(),
        )
    }

    /// Five neighborhood-size settings applied to `base`.
    pub fn neighborhood_sizes(base: &PointHopConfig) -> Self {
        let sets = [
            [64, 64, 64, 64],
            [32, 32, 32, 32],
            [32, 32, 64, 64],
            [96, 96, 96, 96],
            [128, 128, 128, 128],
        ];
        Self::from_configs(
            sets.iter()
                .map(|k| PointHopConfig {
                    k_values: k.to_vec(),
                    ..base.clone()
                })
                .collect(),
        )
    }

    /// Five per-unit point-count settings applied to `base`.
    pub fn unit_point_counts(base: &PointHopConfig) -> Self {
        let sets = [
            [512, 128, 128, 64],
            [512, 256, 128, 64],
            [512, 256, 256, 128],
            [512, 256, 256, 256],
            [512, 128, 128, 128],
        ];
        Self::from_configs(
            sets.iter()
                .map(|u| PointHopConfig {
                    unit_points: u.to_vec(),
                    ..base.clone()
                })
                .collect(),
        )
    }

    /// All four families above, fused into one 20-branch ensemble.
    pub fn all_cases(base: &PointHopConfig) -> Self {
        let mut branches = Vec::new();
        for family in [
            Self::rotations(base),
            Self::filter_counts(base),
            Self::neighborhood_sizes(base),
            Self::unit_point_counts(base),
        ] {
            branches.extend(family.branches);
        }
        Self {
            branches,
            fusion: Fusion::Feature,
            axis: Axis::Z,
        }
    }

    pub fn with_fusion(mut self, fusion: Fusion) -> Self {
        self.fusion = fusion;
        self
    }
}

/// A fitted pipeline together with the rotation applied to its input.
#[derive(Debug, Clone)]
pub struct FittedBranch<T> {
    pub model: PointHopModel<T>,
    pub angle: f64,
    pub axis: Axis,
}

impl<T: Real> FittedBranch<T> {
    pub fn extract_features(&self, cloud: &PointCloud<T>) -> Result<Vec<T>> {
        Ok(self
            .model
            .extract_features(&rotate_cloud_about(cloud, self.angle, self.axis))?)
    }

    pub fn extract_many(&self, clouds: &[PointCloud<T>]) -> Result<Vec<Vec<T>>> {
        let rotated: Vec<PointCloud<T>> = clouds
            .iter()
            .map(|c| rotate_cloud_about(c, self.angle, self.axis))
            .collect();
        Ok(self.model.extract_many(&rotated, None)?)
    }
}

/// Training features indexed as `[branch][sample]`.
pub type BranchFeatures<T> = Vec<Vec<Vec<T>>>;

/// Fit every branch on its rotated copy of the training set. Also returns the
/// training features of each branch.
pub fn fit_branches<T: Real>(
    spec: &EnsembleSpec,
    clouds: &[PointCloud<T>],
) -> Result<(Vec<FittedBranch<T>>, BranchFeatures<T>)> {
    spec.validate()?;
    let mut branches = Vec::with_capacity(spec.branches.len());
    let mut features = Vec::with_capacity(spec.branches.len());
    for (i, b) in spec.branches.iter().enumerate() {
        log::info!(
            "fitting ensemble branch {}/{} (angle {})",
            i + 1,
            spec.branches.len(),
            b.angle
        );
        let rotated: Vec<PointCloud<T>> = clouds
            .iter()
            .map(|c| rotate_cloud_about(c, b.angle, spec.axis))
            .collect();
        let out = fit_pointhop_with_features(&rotated, &b.config)?;
        branches.push(FittedBranch {
            model: out.model,
            angle: b.angle,
            axis: spec.axis,
        });
        features.push(out.features);
    }
    Ok((branches, features))
}

/// Concatenation of every branch's features on its rotated input, in branch order.
pub fn feature_ensemble<T: Real>(branches: &[FittedBranch<T>], cloud: &PointCloud<T>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for b in branches {
        out.extend(b.extract_features(cloud)?);
    }
    Ok(out)
}

/// Concatenation of each branch classifier's class probabilities.
pub fn decision_ensemble<T: Real>(
    branches: &[(FittedBranch<T>, Classifier<T>)],
    cloud: &PointCloud<T>,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (b, clf) in branches {
        out.extend(clf.predict_proba(&b.extract_features(cloud)?)?);
    }
    Ok(out)
}

/// Join per-branch rows (`per_branch[b][sample]`) into one row per sample.
pub fn concat_rows<U: Copy>(per_branch: &[Vec<Vec<U>>]) -> Vec<Vec<U>> {
    let n = per_branch.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| per_branch.iter().flat_map(|rows| rows[i].iter().copied()).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub enum FusionHead<T> {
    Feature(Classifier<T>),
    Decision {
        branch: Vec<Classifier<T>>,
        head: Classifier<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct EnsembleModel<T> {
    pub branches: Vec<FittedBranch<T>>,
    pub head: FusionHead<T>,
}

impl<T: Real> EnsembleModel<T> {
    /// Fit branches, then the fusion classifier(s). For decision fusion the
    /// second stage is trained on the branch classifiers' outputs for the
    /// training set.
    pub fn fit(
        spec: &EnsembleSpec,
        clouds: &[PointCloud<T>],
        labels: &[u32],
        params: &ClassifierParams,
        seed: u64,
    ) -> Result<Self> {
        let (branches, features) = fit_branches(spec, clouds)?;
        let head = Self::fit_head(spec.fusion, &features, labels, params, seed)?;
        Ok(Self { branches, head })
    }

    /// Fit only the fusion stage on already extracted per-branch features.
    pub fn fit_head(
        fusion: Fusion,
        features: &[Vec<Vec<T>>],
        labels: &[u32],
        params: &ClassifierParams,
        seed: u64,
    ) -> Result<FusionHead<T>> {
        Ok(match fusion {
            Fusion::Feature => FusionHead::Feature(Classifier::fit(&concat_rows(features), labels, params, seed)?),
            Fusion::Decision => {
                let mut branch = Vec::with_capacity(features.len());
                let mut decisions = Vec::with_capacity(features.len());
                for (i, f) in features.iter().enumerate() {
                    let clf = Classifier::fit(f, labels, params, derive_seed(seed, i as u64 + 1))?;
                    decisions.push(f.iter().map(|x| clf.predict_proba(x)).collect::<Result<Vec<_>, _>>()?);
                    branch.push(clf);
                }
                let head = Classifier::fit(&concat_rows(&decisions), labels, params, seed)?;
                FusionHead::Decision { branch, head }
            }
        })
    }

    pub fn from_parts(branches: Vec<FittedBranch<T>>, head: FusionHead<T>) -> Result<Self> {
        if let FusionHead::Decision { branch, .. } = &head {
            if branch.len() != branches.len() {
                return Err(EnsembleError::BranchCount {
                    expected: branches.len(),
                    found: branch.len(),
                });
            }
        }
        Ok(Self { branches, head })
    }

    /// Class probabilities from per-branch features of one sample.
    pub fn predict_proba_from_features(&self, per_branch: &[Vec<T>]) -> Result<Vec<f64>> {
        Ok(match &self.head {
            FusionHead::Feature(clf) => clf.predict_proba(&per_branch.concat())?,
            FusionHead::Decision { branch, head } => {
                let mut d = Vec::new();
                for (clf, f) in branch.iter().zip(per_branch) {
                    d.extend(clf.predict_proba(f)?);
                }
                head.predict_proba(&d)?
            }
        })
    }

    pub fn predict_proba(&self, cloud: &PointCloud<T>) -> Result<Vec<f64>> {
        let per_branch = self
            .branches
            .iter()
            .map(|b| b.extract_features(cloud))
            .collect::<Result<Vec<_>>>()?;
        self.predict_proba_from_features(&per_branch)
    }

    /// Evaluate on a test set, extracting features branch by branch.
    pub fn evaluate(&self, clouds: &[PointCloud<T>], labels: &[u32], class_names: &[String]) -> Result<EvalReport> {
        let mut per_branch = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            per_branch.push(b.extract_many(clouds)?);
        }
        let mut predicted = Vec::with_capacity(clouds.len());
        for i in 0..clouds.len() {
            let sample: Vec<Vec<T>> = per_branch.iter().map(|rows| rows[i].clone()).collect();
            predicted.push(crate::classify::argmax(&self.predict_proba_from_features(&sample)?) as u32);
        }
        Ok(EvalReport::from_predictions(&predicted, labels, class_names)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud<f64> {
        PointCloud::new(vec![[0.3, -0.2, 0.5], [-0.7, 0.1, 0.0], [0.2, 0.9, -0.4]])
    }

    fn max_abs_diff(a: &PointCloud<f64>, b: &PointCloud<f64>) -> f64 {
        a.points
            .iter()
            .zip(&b.points)
            .flat_map(|(p, q)| (0..3).map(move |d| (p[d] - q[d]).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_and_full_turn_are_identity() {
        let pc = cloud();
        assert_eq!(rotate_cloud(&pc, 0.0), pc);
        assert!(max_abs_diff(&rotate_cloud(&pc, 360.0), &pc) < 1e-9);
    }

    #[test]
    fn eight_eighth_turns_are_identity() {
        let pc = cloud();
        let mut r = pc.clone();
        for _ in 0..8 {
            r = rotate_cloud(&r, 45.0);
        }
        assert!(max_abs_diff(&r, &pc) < 1e-9);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rotate_cloud(&PointCloud::new(vec![[1.0f64, 0.0, 0.25]]), 90.0);
        let p = r.points[0];
        assert!((p[0]).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12 && p[2] == 0.25);
    }

    #[test]
    fn spec_validation() {
        let empty = EnsembleSpec {
            branches: vec![],
            fusion: Fusion::Feature,
            axis: Axis::Z,
        };
        assert!(matches!(empty.validate(), Err(EnsembleError::NoBranches)));
        let mut s = EnsembleSpec::rotations(&PointHopConfig::default());
        s.validate().unwrap();
        s.branches[1].angle = 360.0;
        assert!(matches!(s.validate(), Err(EnsembleError::AngleOutOfRange(_))));
    }

    #[test]
    fn preset_families_are_valid() {
        let base = PointHopConfig::default();
        for spec in [
            EnsembleSpec::rotations(&base),
            EnsembleSpec::filter_counts(&base),
            EnsembleSpec::neighborhood_sizes(&base),
            EnsembleSpec::unit_point_counts(&base),
        ] {
            assert_eq!(spec.branches.len(), 5);
            spec.validate().unwrap();
        }
        assert_eq!(EnsembleSpec::all_cases(&base).branches.len(), 20);
    }

    #[test]
    fn concat_rows_joins_in_branch_order() {
        let rows = concat_rows(&[vec![vec![1, 2], vec![3, 4]], vec![vec![5], vec![6]]]);
        assert_eq!(rows, vec![vec![1, 2, 5], vec![3, 4, 6]]);
    }
}
