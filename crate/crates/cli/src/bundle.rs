//! Self-contained run bundles: config snapshot, fitted pipelines, classifier
//! and the evaluation report produced at fit time.
//!
//! Layout (little-endian, CRC32 trailer as in the model format): magic `PHB1`,
//! u16 version, then the fields in [`RunBundle`] order. Pipelines and
//! classifiers are embedded as their own length-prefixed files.

use pointhop::codec::{CodecError, Reader, Writer};
use pointhop::ensemble::{FittedBranch, FusionHead};
use pointhop::{load_model, save_model, Axis, Classifier, EnsembleModel, EvalReport, PointHopModel, Real};

use crate::config::Precision;
use crate::error::{CliError, Result};

pub const BUNDLE_MAGIC: &[u8; 4] = b"PHB1";
pub const BUNDLE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum BundleBody {
    Single {
        model: Vec<u8>,
        classifier: Vec<u8>,
    },
    Ensemble {
        axis: Axis,
        /// (angle, pipeline file) per branch.
        branches: Vec<(f64, Vec<u8>)>,
        head: HeadBytes,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadBytes {
    Feature(Vec<u8>),
    Decision { branch: Vec<Vec<u8>>, head: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunBundle {
    pub config_toml: String,
    pub seed: u64,
    pub precision: Precision,
    pub class_names: Vec<String>,
    pub body: BundleBody,
    pub report: Option<EvalReport>,
}

fn put_blob(w: &mut Writer, b: &[u8]) {
    w.u64(b.len() as u64);
    w.bytes(b);
}

fn get_blob(r: &mut Reader<'_>) -> Result<Vec<u8>, CodecError> {
    let n = r.usize()?;
    Ok(r.take(n)?.to_vec())
}

fn put_report(w: &mut Writer, rep: &EvalReport) {
    w.f64(rep.overall_accuracy);
    w.f64(rep.average_accuracy);
    for row in &rep.confusion {
        row.iter().for_each(|&c| w.u64(c));
    }
    for p in &rep.per_class {
        match p {
            Some(a) => {
                w.u8(1);
                w.f64(*a);
            }
            None => w.u8(0),
        }
    }
}

fn get_report(r: &mut Reader<'_>, class_names: &[String]) -> Result<EvalReport, CodecError> {
    let overall_accuracy = r.f64()?;
    let average_accuracy = r.f64()?;
    let c = class_names.len();
    let mut confusion = vec![vec![0u64; c]; c];
    for row in &mut confusion {
        for x in row.iter_mut() {
            *x = r.u64()?;
        }
    }
    let mut per_class = Vec::with_capacity(c);
    for _ in 0..c {
        per_class.push(match r.u8()? {
            0 => None,
            1 => Some(r.f64()?),
            _ => return Err(CodecError::Invalid("per-class flag".into())),
        });
    }
    Ok(EvalReport {
        class_names: class_names.to_vec(),
        confusion,
        per_class,
        overall_accuracy,
        average_accuracy,
    })
}

fn axis_code(a: Axis) -> u8 {
    match a {
        Axis::X => 0,
        Axis::Y => 1,
        Axis::Z => 2,
    }
}

impl RunBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(BUNDLE_MAGIC, BUNDLE_VERSION);
        w.str(&self.config_toml);
        w.u64(self.seed);
        w.u8(match self.precision {
            Precision::F32 => 32,
            Precision::F64 => 64,
        });
        w.u32(self.class_names.len() as u32);
        self.class_names.iter().for_each(|n| w.str(n));
        match &self.body {
            BundleBody::Single { model, classifier } => {
                w.u8(0);
                put_blob(&mut w, model);
                put_blob(&mut w, classifier);
            }
            BundleBody::Ensemble { axis, branches, head } => {
                w.u8(1);
                w.u8(axis_code(*axis));
                w.u32(branches.len() as u32);
                for (angle, model) in branches {
                    w.f64(*angle);
                    put_blob(&mut w, model);
                }
                match head {
                    HeadBytes::Feature(c) => {
                        w.u8(0);
                        put_blob(&mut w, c);
                    }
                    HeadBytes::Decision { branch, head } => {
                        w.u8(1);
                        branch.iter().for_each(|b| put_blob(&mut w, b));
                        put_blob(&mut w, head);
                    }
                }
            }
        }
        match &self.report {
            Some(rep) => {
                w.u8(1);
                put_report(&mut w, rep);
            }
            None => w.u8(0),
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode(bytes).map_err(|e| CliError::data(format!("bundle: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| CliError::data(format!("cannot read bundle {}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display()))
    }

    pub fn single<T: Real>(&self) -> Result<Option<(PointHopModel<T>, Classifier<T>)>> {
        match &self.body {
            BundleBody::Single { model, classifier } => {
                Ok(Some((load_model(model)?, Classifier::from_bytes(classifier)?)))
            }
            BundleBody::Ensemble { .. } => Ok(None),
        }
    }

    pub fn ensemble<T: Real>(&self) -> Result<Option<EnsembleModel<T>>> {
        let BundleBody::Ensemble { axis, branches, head } = &self.body else {
            return Ok(None);
        };
        let fitted = branches
            .iter()
            .map(|(angle, m)| {
                Ok(FittedBranch {
                    model: load_model(m)?,
                    angle: *angle,
                    axis: *axis,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head = match head {
            HeadBytes::Feature(c) => FusionHead::Feature(Classifier::from_bytes(c)?),
            HeadBytes::Decision { branch, head } => FusionHead::Decision {
                branch: branch
                    .iter()
                    .map(|b| Classifier::from_bytes(b))
                    .collect::<Result<_, _>>()?,
                head: Classifier::from_bytes(head)?,
            },
        };
        Ok(Some(EnsembleModel::from_parts(fitted, head)?))
    }
}

pub fn single_body<T: Real>(model: &PointHopModel<T>, classifier: &Classifier<T>) -> BundleBody {
    BundleBody::Single {
        model: save_model(model),
        classifier: classifier.to_bytes(),
    }
}

pub fn ensemble_body<T: Real>(model: &EnsembleModel<T>) -> BundleBody {
    let axis = model.branches.first().map_or(Axis::Z, |b| b.axis);
    BundleBody::Ensemble {
        axis,
        branches: model.branches.iter().map(|b| (b.angle, save_model(&b.model))).collect(),
        head: match &model.head {
            FusionHead::Feature(c) => HeadBytes::Feature(c.to_bytes()),
            FusionHead::Decision { branch, head } => HeadBytes::Decision {
                branch: branch.iter().map(|b| b.to_bytes()).collect(),
                head: head.to_bytes(),
            },
        },
    }
}

fn decode(bytes: &[u8]) -> Result<RunBundle, CodecError> {
    let invalid = |m: &str| CodecError::Invalid(m.to_string());
    let mut r = Reader::open(bytes, BUNDLE_MAGIC, BUNDLE_VERSION)?;
    let config_toml = r.str()?;
    let seed = r.u64()?;
    let precision = match r.u8()? {
        32 => Precision::F32,
        64 => Precision::F64,
        _ => return Err(invalid("precision")),
    };
    let n = r.u32()? as usize;
    let class_names = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
    let body = match r.u8()? {
        0 => BundleBody::Single {
            model: get_blob(&mut r)?,
            classifier: get_blob(&mut r)?,
        },
        1 => {
            let axis = match r.u8()? {
                0 => Axis::X,
                1 => Axis::Y,
                2 => Axis::Z,
                _ => return Err(invalid("axis")),
            };
            let count = r.u32()? as usize;
            let mut branches = Vec::with_capacity(count.min(1024));
            for _ in 0..count {
                let angle = r.f64()?;
                branches.push((angle, get_blob(&mut r)?));
            }
            let head = match r.u8()? {
                0 => HeadBytes::Feature(get_blob(&mut r)?),
                1 => HeadBytes::Decision {
                    branch: (0..count).map(|_| get_blob(&mut r)).collect::<Result<_, _>>()?,
                    head: get_blob(&mut r)?,
                },
                _ => return Err(invalid("fusion")),
            };
            BundleBody::Ensemble { axis, branches, head }
        }
        _ => return Err(invalid("bundle kind")),
    };
    let report = match r.u8()? {
        0 => None,
        1 => Some(get_report(&mut r, &class_names)?),
        _ => return Err(invalid("report flag")),
    };
    if !r.is_done() {
        return Err(invalid("trailing bytes"));
    }
    Ok(RunBundle {
        config_toml,
        seed,
        precision,
        class_names,
        body,
        report,
    })
}
