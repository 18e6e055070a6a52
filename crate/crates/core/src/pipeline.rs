//! The PointHop cascade.
//!
//! Each unit takes the points and attributes left by the previous unit,
//! keeps a subset of centers (farthest point sampling by default), builds an
//! octant descriptor for every center from its K nearest neighbours among the
//! unit's input points, and reduces the descriptors with a Saab bank fitted
//! on all training clouds. Per-unit attributes are pooled over points and
//! concatenated into the final feature vector. No labels are used.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::attributes::AttributeMatrix;
use crate::codec::{self, CodecError, Reader, Writer};
use crate::geometry::{self, GeometryError, SpatialIndex};
use crate::pcio::PointCloud;
use crate::rng::{derive_seed, mix64};
use crate::saab::{EnergyCurve, Reduction, SaabError, SaabFilterBank, SaabFitter};
use crate::scalar::{cast, Real};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cloud has {found} points but {needed} are required")]
    InsufficientPoints { needed: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no training clouds")]
    EmptyTrainingSet,
    #[error("cannot pool an empty attribute matrix")]
    EmptyMatrix,
    #[error("unit {unit} has {channels} channels, channel {channel} requested")]
    ChannelOutOfRange {
        unit: usize,
        channel: usize,
        channels: usize,
    },
    #[error("cloud needs colors for xyzrgb initial attributes")]
    MissingColors,
    #[error("feature vector has length {found}, model layout expects {expected}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Saab(#[from] SaabError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pooling {
    Max,
    Mean,
    L1,
    L2,
}

impl Pooling {
    pub const ALL: [Pooling; 4] = [Pooling::Max, Pooling::Mean, Pooling::L1, Pooling::L2];

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Pooling::Max => "max",
            Pooling::Mean => "mean",
            Pooling::L1 => "l1",
            Pooling::L2 => "l2",
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown pooling {s:?} (expected max, mean, l1 or l2)"))
    }
}

/// Per-channel aggregation of an attribute matrix over its points.
pub fn pool<T: Real>(attrs: &AttributeMatrix<T>, method: Pooling) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); attrs.dim()];
    pool_into(attrs, method, &mut out)?;
    Ok(out)
}

fn pool_into<T: Real>(attrs: &AttributeMatrix<T>, method: Pooling, out: &mut [T]) -> Result<()> {
    if attrs.rows() == 0 {
        return Err(PipelineError::EmptyMatrix);
    }
    let n: T = cast(attrs.rows() as f64);
    match method {
        Pooling::Max => {
            out.copy_from_slice(attrs.row(0));
            for r in attrs.iter_rows().skip(1) {
                for (o, &x) in out.iter_mut().zip(r) {
                    *o = o.max(x);
                }
            }
        }
        Pooling::Mean | Pooling::L1 | Pooling::L2 => {
            out.iter_mut().for_each(|o| *o = T::zero());
            for r in attrs.iter_rows() {
                for (o, &x) in out.iter_mut().zip(r) {
                    *o = *o
                        + match method {
                            Pooling::Mean => x,
                            Pooling::L1 => x.abs(),
                            _ => x * x,
                        };
                }
            }
            out.iter_mut().for_each(|o| *o = *o / n);
            if method == Pooling::L2 {
                out.iter_mut().for_each(|o| *o = o.sqrt());
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum InitialAttributes {
    #[default]
    Xyz,
    XyzRgb,
}

impl InitialAttributes {
    pub fn dim(self) -> usize {
        match self {
            InitialAttributes::Xyz => 3,
            InitialAttributes::XyzRgb => 6,
        }
    }
}

/// How each unit picks its centers from its input points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Sampling {
    #[default]
    Fps,
    Random,
}

/// Which units contribute pooled features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum FeatureStages {
    #[default]
    All,
    Last,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PointHopConfig {
    /// Points drawn (random dropout) from each cloud as the cascade input.
    pub input_points: usize,
    /// Centers kept by each unit; also the point count of that unit's output.
    pub unit_points: Vec<usize>,
    pub k_values: Vec<usize>,
    pub n_ac: Vec<usize>,
    pub poolings: Vec<Pooling>,
    pub initial_attributes: InitialAttributes,
    pub sampling: Sampling,
    pub reduction: Reduction,
    pub features: FeatureStages,
    /// Mean-center AC components before the eigen-decomposition.
    pub center_ac: bool,
    pub seed: u64,
}

impl Default for PointHopConfig {
    /// Four units over a 1,024-point input: 1024 → 128 → 128 → 64 centers,
    /// K = 64, (15, 25, 40, 80) AC filters, all four poolings.
    fn default() -> Self {
        Self {
            input_points: 1024,
            unit_points: vec![1024, 128, 128, 64],
            k_values: vec![64; 4],
            n_ac: vec![15, 25, 40, 80],
            poolings: Pooling::ALL.to_vec(),
            initial_attributes: InitialAttributes::Xyz,
            sampling: Sampling::Fps,
            reduction: Reduction::Saab,
            features: FeatureStages::All,
            center_ac: true,
            seed: 0,
        }
    }
}

impl PointHopConfig {
    /// The 256-point operating point: 256 → 128 → 128 → 64 centers.
    pub fn points_256() -> Self {
        Self {
            input_points: 256,
            unit_points: vec![256, 128, 128, 64],
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_units(&self) -> usize {
        self.unit_points.len()
    }

    /// Input dimension of each unit's descriptor.
    pub fn descriptor_dims(&self) -> Vec<usize> {
        let mut d = self.initial_attributes.dim();
        self.n_ac
            .iter()
            .map(|&n| {
                let desc = geometry::descriptor_dim(d);
                d = n + 1;
                desc
            })
            .collect()
    }

    /// Attribute dimension produced by each unit.
    pub fn unit_dims(&self) -> Vec<usize> {
        self.n_ac.iter().map(|&n| n + 1).collect()
    }

    pub fn feature_units(&self) -> Vec<usize> {
        match self.features {
            FeatureStages::All => (0..self.n_units()).collect(),
            FeatureStages::Last => vec![self.n_units() - 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        let n = self.unit_points.len();
        if n == 0 {
            return bad("at least one unit is required".into());
        }
        if self.k_values.len() != n || self.n_ac.len() != n {
            return bad(format!(
                "unit_points, k_values and n_ac must have equal lengths ({n}, {}, {})",
                self.k_values.len(),
                self.n_ac.len()
            ));
        }
        if self.poolings.is_empty() {
            return bad("poolings must be nonempty".into());
        }
        let mut seen = BTreeSet::new();
        if !self.poolings.iter().all(|p| seen.insert(*p)) {
            return bad("poolings must not repeat".into());
        }
        if self.input_points == 0 {
            return bad("input_points must be positive".into());
        }
        let mut available = self.input_points;
        let dims = self.descriptor_dims();
        for i in 0..n {
            if self.unit_points[i] == 0 || self.unit_points[i] > available {
                return bad(format!(
                    "unit {} keeps {} points but only {available} enter it",
                    i + 1,
                    self.unit_points[i]
                ));
            }
            if self.k_values[i] == 0 || self.k_values[i] > available {
                return bad(format!(
                    "unit {} has K = {} over {available} points",
                    i + 1,
                    self.k_values[i]
                ));
            }
            if self.n_ac[i] + 1 > dims[i] {
                return bad(format!(
                    "unit {} asks for {} outputs from a {}-dim descriptor",
                    i + 1,
                    self.n_ac[i] + 1,
                    dims[i]
                ));
            }
            available = self.unit_points[i];
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutSlice {
    pub unit: usize,
    pub pooling: Pooling,
    pub offset: usize,
    pub len: usize,
}

/// Where each (unit, pooling) block sits in the feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    slices: Vec<LayoutSlice>,
    total: usize,
}

impl FeatureLayout {
    pub fn new(config: &PointHopConfig) -> Self {
        let dims = config.unit_dims();
        let mut slices = Vec::new();
        let mut offset = 0;
        for unit in config.feature_units() {
            for &pooling in &config.poolings {
                slices.push(LayoutSlice {
                    unit,
                    pooling,
                    offset,
                    len: dims[unit],
                });
                offset += dims[unit];
            }
        }
        Self { slices, total: offset }
    }

    pub fn slices(&self) -> &[LayoutSlice] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Feature columns of the blocks matching `unit` and `pooling` filters, in layout order.
    pub fn columns(&self, units: &[usize], poolings: &[Pooling]) -> Vec<usize> {
        self.slices
            .iter()
            .filter(|s| units.contains(&s.unit) && poolings.contains(&s.pooling))
            .flat_map(|s| s.offset..s.offset + s.len)
            .collect()
    }
}

/// A fitted cascade: configuration, one frozen bank per unit, feature layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PointHopModel<T> {
    config: PointHopConfig,
    banks: Vec<SaabFilterBank<T>>,
    layout: FeatureLayout,
}

/// Working state of one cloud between units.
#[derive(Debug, Clone)]
struct CloudState<T> {
    points: Vec<[T; 3]>,
    attrs: AttributeMatrix<T>,
    seed: u64,
}

/// Centers chosen by one unit (indices into its input) and their descriptors.
struct UnitDescriptors<T> {
    retained: Vec<usize>,
    descriptors: AttributeMatrix<T>,
}

/// Output of one unit for one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitOutput<T> {
    pub points: Vec<[T; 3]>,
    pub attributes: AttributeMatrix<T>,
}

/// Sort points (and colors) lexicographically by coordinates.
pub fn canonicalize<T: Real>(pc: &PointCloud<T>) -> PointCloud<T> {
    let mut order: Vec<usize> = (0..pc.len()).collect();
    let key = |p: &[T; 3]| p.map(|c| c.to_f64_lossy());
    order.sort_by(|&a, &b| {
        let (ka, kb) = (key(&pc.points[a]), key(&pc.points[b]));
        ka[0]
            .total_cmp(&kb[0])
            .then(ka[1].total_cmp(&kb[1]))
            .then(ka[2].total_cmp(&kb[2]))
            .then(a.cmp(&b))
    });
    pc.select(&order)
}

/// Hash of the coordinate bit patterns in order.
pub fn content_hash<T: Real>(points: &[[T; 3]]) -> u64 {
    let mut h = mix64(points.len() as u64);
    for p in points {
        for c in p {
            h = mix64(h ^ c.to_bits_u64());
        }
    }
    h
}

fn prepare<T: Real>(cloud: &PointCloud<T>, config: &PointHopConfig, input_points: usize) -> Result<CloudState<T>> {
    if cloud.len() < input_points {
        return Err(PipelineError::InsufficientPoints {
            needed: input_points,
            found: cloud.len(),
        });
    }
    if config.initial_attributes == InitialAttributes::XyzRgb && cloud.colors.is_none() {
        return Err(PipelineError::MissingColors);
    }
    let canonical = canonicalize(cloud);
    let seed = derive_seed(config.seed, content_hash(&canonical.points));
    let picked = geometry::dropout_indices(canonical.len(), input_points, seed)?;
    let dp = canonical.select(&picked);
    let xyz = AttributeMatrix::from_points(&dp.points);
    let attrs = match (config.initial_attributes, &dp.colors) {
        (InitialAttributes::XyzRgb, Some(colors)) => xyz.hstack(&AttributeMatrix::from_points(colors)),
        _ => xyz,
    };
    Ok(CloudState {
        points: dp.points,
        attrs,
        seed,
    })
}

fn choose_centers<T: Real>(state: &CloudState<T>, unit: usize, n_out: usize, sampling: Sampling) -> Result<Vec<usize>> {
    let mut retained = match sampling {
        Sampling::Fps => geometry::farthest_point_sample(&state.points, n_out)?,
        Sampling::Random => {
            geometry::dropout_indices(state.points.len(), n_out, derive_seed(state.seed, unit as u64 + 1))?
        }
    };
    retained.sort_unstable();
    Ok(retained)
}

fn unit_descriptors<T: Real>(
    state: &CloudState<T>,
    unit: usize,
    n_out: usize,
    k: usize,
    sampling: Sampling,
) -> Result<UnitDescriptors<T>> {
    let retained = choose_centers(state, unit, n_out, sampling)?;
    let index = SpatialIndex::build(&state.points);
    let dim = geometry::descriptor_dim(state.attrs.dim());
    let mut descriptors = AttributeMatrix::zeros(retained.len(), dim);
    for (row, &c) in retained.iter().enumerate() {
        let region = index.knn(c, k)?;
        geometry::octant_descriptor_into(
            &state.points[c],
            &region.neighbor_indices,
            &state.points,
            &state.attrs,
            descriptors.row_mut(row),
        )?;
    }
    Ok(UnitDescriptors { retained, descriptors })
}

impl<T: Real> CloudState<T> {
    fn advance(&mut self, retained: &[usize], attrs: AttributeMatrix<T>) {
        self.points = retained.iter().map(|&i| self.points[i]).collect();
        self.attrs = attrs;
    }
}

/// Number of clouds folded into one partial fitter. Partials are merged in
/// chunk order, so results do not depend on the thread count.
const FIT_CHUNK: usize = 16;

/// Fitted model plus the training clouds' feature vectors, computed on the way.
#[derive(Debug, Clone)]
pub struct FitOutput<T> {
    pub model: PointHopModel<T>,
    pub features: Vec<Vec<T>>,
}

/// Fit all units on unlabeled training clouds.
pub fn fit_pointhop<T: Real>(clouds: &[PointCloud<T>], config: &PointHopConfig) -> Result<PointHopModel<T>> {
    Ok(fit_pointhop_with_features(clouds, config)?.model)
}

pub fn fit_pointhop_with_features<T: Real>(clouds: &[PointCloud<T>], config: &PointHopConfig) -> Result<FitOutput<T>> {
    config.validate()?;
    if clouds.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    let mut states: Vec<CloudState<T>> = clouds
        .par_iter()
        .map(|c| prepare(c, config, config.input_points))
        .collect::<Result<_>>()?;
    let layout = FeatureLayout::new(config);
    let mut features: Vec<Vec<T>> = vec![Vec::with_capacity(layout.len()); clouds.len()];
    let feature_units = config.feature_units();
    let descriptor_dims = config.descriptor_dims();
    let mut banks = Vec::with_capacity(config.n_units());

    for unit in 0..config.n_units() {
        let (n_out, k) = (config.unit_points[unit], config.k_values[unit]);
        let partials: Vec<SaabFitter> = states
            .par_chunks(FIT_CHUNK)
            .map(|chunk| {
                let mut fitter = SaabFitter::new(descriptor_dims[unit], config.reduction);
                if !config.center_ac {
                    fitter = fitter.uncentered();
                }
                for s in chunk {
                    let d = unit_descriptors(s, unit, n_out, k, config.sampling)?;
                    fitter.push_matrix(&d.descriptors)?;
                }
                Ok(fitter)
            })
            .collect::<Result<_>>()?;
        let mut fitter = partials[0].clone();
        for p in &partials[1..] {
            fitter.merge(p)?;
        }
        let outputs = config.n_ac[unit] + usize::from(config.reduction == Reduction::Pca);
        let bank: SaabFilterBank<T> = fitter.finish(outputs)?;
        log::debug!(
            "unit {}: {} descriptors of dim {}, {} of {} AC filters with energy",
            unit + 1,
            fitter.count(),
            descriptor_dims[unit],
            bank.valid_ac(),
            config.n_ac[unit]
        );

        let pooled = feature_units.contains(&unit);
        states
            .par_iter_mut()
            .zip(features.par_iter_mut())
            .try_for_each(|(s, f)| -> Result<()> {
                let d = unit_descriptors(s, unit, n_out, k, config.sampling)?;
                let attrs = bank.apply_matrix(&d.descriptors)?;
                if pooled {
                    append_pooled(&attrs, &config.poolings, f)?;
                }
                s.advance(&d.retained, attrs);
                Ok(())
            })?;
        banks.push(bank);
    }

    let model = PointHopModel {
        config: config.clone(),
        banks,
        layout,
    };
    model.check_dimension_chain();
    Ok(FitOutput { model, features })
}

fn append_pooled<T: Real>(attrs: &AttributeMatrix<T>, poolings: &[Pooling], out: &mut Vec<T>) -> Result<()> {
    for &p in poolings {
        let start = out.len();
        out.resize(start + attrs.dim(), T::zero());
        pool_into(attrs, p, &mut out[start..])?;
    }
    Ok(())
}

impl<T: Real> PointHopModel<T> {
    pub fn config(&self) -> &PointHopConfig {
        &self.config
    }

    pub fn banks(&self) -> &[SaabFilterBank<T>] {
        &self.banks
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn feature_len(&self) -> usize {
        self.layout.len()
    }

    pub fn unit_dims(&self) -> Vec<usize> {
        self.banks.iter().map(|b| b.output_dim()).collect()
    }

    pub fn descriptor_dims(&self) -> Vec<usize> {
        self.banks.iter().map(|b| b.input_dim()).collect()
    }

    fn check_dimension_chain(&self) {
        let mut d = self.config.initial_attributes.dim();
        for (i, bank) in self.banks.iter().enumerate() {
            assert_eq!(bank.input_dim(), 8 * d, "unit {} descriptor dim", i + 1);
            assert_eq!(bank.output_dim(), 1 + self.config.n_ac[i], "unit {} output dim", i + 1);
            d = bank.output_dim();
        }
        let covered: usize = self.layout.slices.iter().map(|s| s.len).sum();
        assert_eq!(covered, self.layout.len());
    }

    fn run(&self, cloud: &PointCloud<T>, input_points: usize) -> Result<Vec<UnitOutput<T>>> {
        let mut state = prepare(cloud, &self.config, input_points)?;
        let mut outputs = Vec::with_capacity(self.banks.len());
        for (unit, bank) in self.banks.iter().enumerate() {
            let available = state.points.len();
            let n_out = self.config.unit_points[unit].min(available);
            let k = self.config.k_values[unit].min(available);
            let d = unit_descriptors(&state, unit, n_out, k, self.config.sampling)?;
            let attrs = bank.apply_matrix(&d.descriptors)?;
            state.advance(&d.retained, attrs);
            outputs.push(UnitOutput {
                points: state.points.clone(),
                attributes: state.attrs.clone(),
            });
        }
        Ok(outputs)
    }

    /// Per-unit attribute matrices of a cloud, with the frozen banks.
    pub fn transform(&self, cloud: &PointCloud<T>) -> Result<Vec<AttributeMatrix<T>>> {
        Ok(self.transform_units(cloud)?.into_iter().map(|u| u.attributes).collect())
    }

    /// As [`transform`](Self::transform), keeping each unit's center coordinates.
    pub fn transform_units(&self, cloud: &PointCloud<T>) -> Result<Vec<UnitOutput<T>>> {
        self.run(cloud, self.config.input_points)
    }

    /// Run the cascade on a DP model of `input_points` points instead of the
    /// configured count. Unit sizes and K are clamped to the points available,
    /// which is how a model trained at one density is evaluated at another.
    pub fn transform_at_density(&self, cloud: &PointCloud<T>, input_points: usize) -> Result<Vec<UnitOutput<T>>> {
        if input_points == 0 {
            return Err(PipelineError::InvalidConfig("input_points must be positive".into()));
        }
        self.run(cloud, input_points)
    }

    pub fn features_from_units(&self, units: &[AttributeMatrix<T>]) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(self.layout.len());
        for unit in self.config.feature_units() {
            append_pooled(&units[unit], &self.config.poolings, &mut out)?;
        }
        debug_assert_eq!(out.len(), self.layout.len());
        Ok(out)
    }

    /// Pooled, concatenated feature vector: units outermost, then poolings.
    pub fn extract_features(&self, cloud: &PointCloud<T>) -> Result<Vec<T>> {
        self.features_from_units(&self.transform(cloud)?)
    }

    pub fn extract_features_at_density(&self, cloud: &PointCloud<T>, input_points: usize) -> Result<Vec<T>> {
        let units: Vec<_> = self
            .transform_at_density(cloud, input_points)?
            .into_iter()
            .map(|u| u.attributes)
            .collect();
        self.features_from_units(&units)
    }

    /// Features of many clouds, in parallel, in input order.
    pub fn extract_many(&self, clouds: &[PointCloud<T>], input_points: Option<usize>) -> Result<Vec<Vec<T>>> {
        clouds
            .par_iter()
            .map(|c| match input_points {
                Some(n) => self.extract_features_at_density(c, n),
                None => self.extract_features(c),
            })
            .collect()
    }

    /// Min-max normalized response of one channel at the centers of `unit`
    /// (zero-based), as `(center, response in [0, 1])` pairs.
    pub fn channel_response(&self, cloud: &PointCloud<T>, unit: usize, channel: usize) -> Result<Vec<([T; 3], T)>> {
        if unit >= self.banks.len() {
            return Err(PipelineError::InvalidConfig(format!(
                "unit {} out of range (model has {})",
                unit + 1,
                self.banks.len()
            )));
        }
        let channels = self.banks[unit].output_dim();
        if channel >= channels {
            return Err(PipelineError::ChannelOutOfRange {
                unit,
                channel,
                channels,
            });
        }
        let out = self.transform_units(cloud)?.swap_remove(unit);
        let values = out.attributes.column(channel);
        let lo = values.iter().copied().fold(T::infinity(), T::min);
        let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
        let span = hi - lo;
        Ok(out
            .points
            .into_iter()
            .zip(values)
            .map(|(p, v)| (p, if span > T::zero() { (v - lo) / span } else { T::zero() }))
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(MODEL_MAGIC, MODEL_VERSION);
        write_config(&mut w, &self.config);
        w.u8(self.banks.len() as u8);
        for bank in &self.banks {
            write_bank(&mut w, bank);
        }
        w.u32(self.layout.slices.len() as u32);
        for s in &self.layout.slices {
            w.u8(s.unit as u8);
            w.u8(s.pooling.code());
            w.u32(s.offset as u32);
            w.u32(s.len as u32);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_bytes_with_reader(bytes, MODEL_VERSION)
    }

    /// Decode as a reader that understands formats up to `reader_version`.
    pub fn from_bytes_with_reader(bytes: &[u8], reader_version: u16) -> Result<Self> {
        let mut r = Reader::open(bytes, MODEL_MAGIC, reader_version)?;
        let config = read_config(&mut r)?;
        config
            .validate()
            .map_err(|e| CodecError::Invalid(format!("stored config: {e}")))?;
        let n = r.u8()? as usize;
        if n != config.n_units() {
            return Err(CodecError::Invalid(format!("{n} banks for {} units", config.n_units())).into());
        }
        let banks = (0..n).map(|_| read_bank(&mut r)).collect::<codec::Result<Vec<_>>>()?;
        let n_slices = r.u32()? as usize;
        let mut slices = Vec::with_capacity(n_slices.min(1 << 16));
        for _ in 0..n_slices {
            let unit = r.u8()? as usize;
            let pooling = Pooling::from_code(r.u8()?).ok_or_else(|| CodecError::Invalid("pooling code".into()))?;
            let offset = r.u32()? as usize;
            let len = r.u32()? as usize;
            slices.push(LayoutSlice {
                unit,
                pooling,
                offset,
                len,
            });
        }
        if !r.is_done() {
            return Err(CodecError::Invalid("trailing bytes".into()).into());
        }
        let layout = FeatureLayout::new(&config);
        if layout.slices != slices {
            return Err(CodecError::Invalid("layout table does not match configuration".into()).into());
        }
        let expected_dims = config.descriptor_dims();
        for (i, b) in banks.iter().enumerate() {
            if b.input_dim() != expected_dims[i] || b.output_dim() != config.n_ac[i] + 1 {
                return Err(CodecError::Invalid(format!("bank {} dimensions", i + 1)).into());
            }
        }
        Ok(Self { config, banks, layout })
    }
}

pub const MODEL_MAGIC: &[u8; 4] = b"PHM1";
pub const MODEL_VERSION: u16 = 1;

pub fn save_model<T: Real>(model: &PointHopModel<T>) -> Vec<u8> {
    model.to_bytes()
}

pub fn load_model<T: Real>(bytes: &[u8]) -> Result<PointHopModel<T>> {
    PointHopModel::from_bytes(bytes)
}

fn write_config(w: &mut Writer, c: &PointHopConfig) {
    w.u64(c.input_points as u64);
    w.u8(c.n_units() as u8);
    for i in 0..c.n_units() {
        w.u64(c.unit_points[i] as u64);
        w.u64(c.k_values[i] as u64);
        w.u64(c.n_ac[i] as u64);
    }
    w.u8(c.poolings.len() as u8);
    c.poolings.iter().for_each(|p| w.u8(p.code()));
    w.u8(c.initial_attributes as u8);
    w.u8(c.sampling as u8);
    w.u8(c.reduction as u8);
    w.u8(c.features as u8);
    w.u8(c.center_ac as u8);
    w.u64(c.seed);
}

fn read_config(r: &mut Reader<'_>) -> codec::Result<PointHopConfig> {
    let invalid = |what: &str| CodecError::Invalid(format!("config field {what}"));
    let input_points = r.usize()?;
    let n = r.u8()? as usize;
    let (mut unit_points, mut k_values, mut n_ac) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        unit_points.push(r.usize()?);
        k_values.push(r.usize()?);
        n_ac.push(r.usize()?);
    }
    let np = r.u8()? as usize;
    let poolings = (0..np)
        .map(|_| {
            r.u8()
                .and_then(|c| Pooling::from_code(c).ok_or_else(|| invalid("pooling")))
        })
        .collect::<codec::Result<_>>()?;
    let initial_attributes = match r.u8()? {
        0 => InitialAttributes::Xyz,
        1 => InitialAttributes::XyzRgb,
        _ => return Err(invalid("initial_attributes")),
    };
    let sampling = match r.u8()? {
        0 => Sampling::Fps,
        1 => Sampling::Random,
        _ => return Err(invalid("sampling")),
    };
    let reduction = read_reduction(r.u8()?)?;
    let features = match r.u8()? {
        0 => FeatureStages::All,
        1 => FeatureStages::Last,
        _ => return Err(invalid("features")),
    };
    let center_ac = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(invalid("center_ac")),
    };
    let seed = r.u64()?;
    Ok(PointHopConfig {
        input_points,
        unit_points,
        k_values,
        n_ac,
        poolings,
        initial_attributes,
        sampling,
        reduction,
        features,
        center_ac,
        seed,
    })
}

fn read_reduction(code: u8) -> codec::Result<Reduction> {
    match code {
        0 => Ok(Reduction::Saab),
        1 => Ok(Reduction::Pca),
        _ => Err(CodecError::Invalid("reduction code".into())),
    }
}

fn write_bank<T: Real>(w: &mut Writer, b: &SaabFilterBank<T>) {
    w.u8(b.reduction() as u8);
    w.u32(b.input_dim() as u32);
    w.u32(b.output_dim() as u32);
    w.u32(b.valid_ac() as u32);
    w.f64(b.bias().to_f64_lossy());
    match b.offset() {
        Some(o) => {
            w.u8(1);
            o.iter().for_each(|x| w.f64(x.to_f64_lossy()));
        }
        None => w.u8(0),
    }
    b.filters().iter().for_each(|x| w.f64(x.to_f64_lossy()));
    w.len_prefixed_f64(b.energy().eigenvalues.iter().copied());
}

fn read_bank<T: Real>(r: &mut Reader<'_>) -> codec::Result<SaabFilterBank<T>> {
    let reduction = read_reduction(r.u8()?)?;
    let input_dim = r.u32()? as usize;
    let output_dim = r.u32()? as usize;
    let valid_ac = r.u32()? as usize;
    let bias = cast::<T>(r.f64()?);
    let offset = match r.u8()? {
        0 => None,
        1 => Some(r.f64s(input_dim)?.into_iter().map(cast::<T>).collect()),
        _ => return Err(CodecError::Invalid("offset flag".into())),
    };
    let filters = r
        .f64s(
            input_dim
                .checked_mul(output_dim)
                .ok_or_else(|| CodecError::Invalid("bank size".into()))?,
        )?
        .into_iter()
        .map(cast::<T>)
        .collect();
    let energy = EnergyCurve::from_eigenvalues(r.len_prefixed_f64()?);
    SaabFilterBank::from_parts(reduction, input_dim, filters, bias, offset, valid_ac, energy)
        .map_err(|e| CodecError::Invalid(e.to_string()))
}

/// A center's DP index and the DP indices that reach it.
pub type ReceptiveField = (usize, BTreeSet<usize>);

/// For every center of every unit, the set of indices into the DP input
/// (after canonical ordering) that reach it through the chain of KNN regions.
/// Returned per unit as `(center's DP index, contributors)` in center order.
pub fn receptive_fields<T: Real>(cloud: &PointCloud<T>, config: &PointHopConfig) -> Result<Vec<Vec<ReceptiveField>>> {
    config.validate()?;
    let mut state = prepare(cloud, config, config.input_points)?;
    // DP index of each current point, and its contributor set.
    let mut origin: Vec<usize> = (0..state.points.len()).collect();
    let mut fields: Vec<BTreeSet<usize>> = origin.iter().map(|&i| BTreeSet::from([i])).collect();
    let mut per_unit = Vec::with_capacity(config.n_units());
    for unit in 0..config.n_units() {
        let retained = choose_centers(&state, unit, config.unit_points[unit], config.sampling)?;
        let index = SpatialIndex::build(&state.points);
        let mut next = Vec::with_capacity(retained.len());
        for &c in &retained {
            let region = index.knn(c, config.k_values[unit])?;
            let mut set = BTreeSet::new();
            for &q in &region.neighbor_indices {
                set.extend(fields[q].iter().copied());
            }
            next.push(set);
        }
        origin = retained.iter().map(|&i| origin[i]).collect();
        per_unit.push(origin.iter().copied().zip(next.iter().cloned()).collect());
        fields = next;
        let dim = config.n_ac[unit] + 1;
        state.advance(&retained, AttributeMatrix::zeros(retained.len(), dim));
    }
    Ok(per_unit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_hand_values() {
        let m = AttributeMatrix::from_rows(&[vec![1.0, -1.0], vec![3.0, 1.0]]);
        assert_eq!(pool(&m, Pooling::Max).unwrap(), vec![3.0, 1.0]);
        assert_eq!(pool(&m, Pooling::Mean).unwrap(), vec![2.0, 0.0]);
        assert_eq!(pool(&m, Pooling::L1).unwrap(), vec![2.0, 1.0]);
        assert_eq!(pool(&m, Pooling::L2).unwrap(), vec![5.0f64.sqrt(), 1.0]);
    }

    #[test]
    fn pooling_degenerate_cases() {
        let single = AttributeMatrix::from_rows(&[vec![0.5, 2.0, 0.0]]);
        let max = pool(&single, Pooling::Max).unwrap();
        assert_eq!(max, pool(&single, Pooling::Mean).unwrap());
        assert_eq!(max, pool(&single, Pooling::L1).unwrap());
        assert_eq!(pool(&single, Pooling::L2).unwrap(), vec![0.5, 2.0, 0.0]);
        let constant = AttributeMatrix::from_rows(&vec![vec![0.75; 3]; 5]);
        for p in Pooling::ALL {
            let v = pool(&constant, p).unwrap();
            assert!(v.iter().all(|&x| (x - 0.75f64).abs() < 1e-15), "{p}: {v:?}");
        }
        assert!(matches!(
            pool(&AttributeMatrix::<f64>::zeros(0, 2), Pooling::Mean),
            Err(PipelineError::EmptyMatrix)
        ));
    }

    #[test]
    fn default_dimension_chain() {
        let c = PointHopConfig::default();
        c.validate().unwrap();
        assert_eq!(c.descriptor_dims(), vec![24, 128, 208, 328]);
        assert_eq!(c.unit_dims(), vec![16, 26, 41, 81]);
        assert_eq!(FeatureLayout::new(&c).len(), 656);
        let mean_only = PointHopConfig {
            poolings: vec![Pooling::Mean],
            ..c.clone()
        };
        assert_eq!(FeatureLayout::new(&mean_only).len(), 164);
        let last = PointHopConfig {
            features: FeatureStages::Last,
            ..c
        };
        assert_eq!(FeatureLayout::new(&last).len(), 4 * 81);
    }

    #[test]
    fn config_validation() {
        let mut c = PointHopConfig::points_256();
        c.validate().unwrap();
        c.unit_points = vec![256, 128, 200, 64];
        assert!(c.validate().is_err());
        let mut c = PointHopConfig::points_256();
        c.k_values[3] = 129;
        assert!(c.validate().is_err());
        let mut c = PointHopConfig::points_256();
        c.poolings.clear();
        assert!(c.validate().is_err());
        let mut c = PointHopConfig::points_256();
        c.n_ac[0] = 24;
        assert!(c.validate().is_err());
    }

    #[test]
    fn layout_columns() {
        let c = PointHopConfig::default();
        let layout = FeatureLayout::new(&c);
        let cols = layout.columns(&[1], &[Pooling::Mean]);
        assert_eq!(cols.len(), 26);
        assert_eq!(cols[0], 4 * 16 + 26);
        let disjoint: BTreeSet<usize> = layout
            .slices()
            .iter()
            .flat_map(|s| s.offset..s.offset + s.len)
            .collect();
        assert_eq!(disjoint.len(), layout.len());
    }

    #[test]
    fn canonical_order_is_lexicographic() {
        let pc = PointCloud::new(vec![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 1.0, 5.0]]);
        let c = canonicalize(&pc);
        assert_eq!(c.points, vec![[0.0, 1.0, 5.0], [0.0, 2.0, 0.0], [1.0, 0.0, 0.0]]);
    }
}
