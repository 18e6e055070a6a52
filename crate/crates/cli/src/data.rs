use std::path::Path;

use pointhop::{load_manifest, load_manifest_with_classes, load_point_set, DatasetManifest, PointCloud, Real, Split};
use rayon::prelude::*;

use crate::error::{CliError, Result};

/// One split loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedSplit<T> {
    pub manifest: DatasetManifest,
    pub clouds: Vec<PointCloud<T>>,
    pub labels: Vec<u32>,
}

/// Load a split; the test split reuses the training class list so ids agree.
pub fn load_split<T: Real>(root: &Path, split: Split, classes: Option<&[String]>) -> Result<LoadedSplit<T>> {
    let manifest = match classes {
        Some(c) => load_manifest_with_classes(root, split, Some(c))?,
        None => load_manifest(root, split)?,
    };
    let clouds = manifest
        .entries
        .par_iter()
        .map(|(path, _)| load_point_set::<T>(path).map_err(|e| CliError::from(e).context(path.display())))
        .collect::<Result<Vec<_>>>()?;
    let labels = manifest.entries.iter().map(|e| e.1).collect();
    Ok(LoadedSplit {
        manifest,
        clouds,
        labels,
    })
}
