//! PointHop: unsupervised point cloud features built by a cascade of one-hop
//! octant descriptors reduced with the Saab transform, then pooled and fed to
//! classical classifiers.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the precision for the common cases.
//!
//! ```
//! use pointhop::{fit_pointhop, PointCloud64, PointHopConfig, Pooling, Sampling};
//!
//! let cloud = |shift: f64| {
//!     PointCloud64::new((0..64).map(|i| {
//!         let t = i as f64 * 0.1;
//!         [t.cos() + shift, t.sin(), (i % 8) as f64 * 0.1]
//!     }).collect())
//! };
//! let config = PointHopConfig {
//!     input_points: 64,
//!     unit_points: vec![64, 16],
//!     k_values: vec![8, 4],
//!     n_ac: vec![4, 6],
//!     poolings: vec![Pooling::Max, Pooling::Mean],
//!     sampling: Sampling::Fps,
//!     ..PointHopConfig::default()
//! };
//! let train: Vec<_> = (0..4).map(|i| cloud(i as f64 * 0.01)).collect();
//! let model = fit_pointhop(&train, &config).unwrap();
//! let features = model.extract_features(&train[0]).unwrap();
//! assert_eq!(features.len(), 2 * (5 + 7));
//! ```

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod attributes;
pub mod classify;
pub mod codec;
pub mod ensemble;
pub mod geometry;
pub mod pcio;
pub mod pipeline;
pub mod rng;
pub mod saab;
pub mod scalar;

pub use attributes::AttributeMatrix;
pub use classify::{
    evaluate, fit_linear, fit_random_forest, Classifier, ClassifierParams, ClassifyError, EvalReport, ForestParams,
    LinearModel, LinearParams, MaxFeatures, RandomForest,
};
pub use codec::CodecError;
pub use ensemble::{
    decision_ensemble, feature_ensemble, fit_branches, rotate_cloud, Axis, BranchSpec, EnsembleError, EnsembleModel,
    EnsembleSpec, FittedBranch, Fusion,
};
pub use geometry::{
    farthest_point_sample, octant_descriptor, random_dropout, GeometryError, LocalRegion, SpatialIndex,
};
pub use pcio::{
    load_manifest, load_manifest_with_classes, load_point_set, normalize_cloud, parse_off, read_point_set,
    sample_mesh_surface, write_point_set, DatasetManifest, Mesh, PcioError, PointCloud, PointSetFormat, Split,
};
pub use pipeline::{
    fit_pointhop, fit_pointhop_with_features, load_model, receptive_fields, save_model, FeatureLayout, FeatureStages,
    InitialAttributes, PipelineError, PointHopConfig, PointHopModel, Pooling, Sampling,
};
pub use saab::{fit_pca, fit_saab, EnergyCurve, Reduction, SaabError, SaabFilterBank, SaabFitter};
pub use scalar::Real;

pub type PointCloud32 = PointCloud<f32>;
pub type PointCloud64 = PointCloud<f64>;
pub type AttributeMatrix32 = AttributeMatrix<f32>;
pub type AttributeMatrix64 = AttributeMatrix<f64>;
pub type SaabFilterBank32 = SaabFilterBank<f32>;
pub type SaabFilterBank64 = SaabFilterBank<f64>;
pub type PointHopModel32 = PointHopModel<f32>;
pub type PointHopModel64 = PointHopModel<f64>;
pub type Classifier32 = Classifier<f32>;
pub type Classifier64 = Classifier<f64>;
