//! Dataset-level glue between manifests, audio, feature caches and
//! training examples.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::{read_wav, ManifestRow};
use crate::dsp::{extract, read_features, write_features};
use crate::error::{Error, Result};
use crate::train::Example;

pub const FEATURE_EXTENSION: &str = "ascf";

pub fn feature_path(features_dir: &Path, row: &ManifestRow) -> PathBuf {
    features_dir.join(format!("{}.{FEATURE_EXTENSION}", row.segment_id()))
}

/// Decodes and featurizes every row, writing one cache file per segment.
/// Files are processed in parallel; the first failure in manifest order is
/// reported.
pub fn extract_dataset(rows: &[ManifestRow], audio_root: &Path, features_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(features_dir).map_err(|e| Error::io(features_dir, e))?;
    let results: Vec<Result<()>> = rows
        .par_iter()
        .map(|row| {
            let audio = read_wav(&audio_root.join(&row.path))?;
            let feats = extract(&audio).map_err(|e| e.context(&row.path))?;
            write_features(&feature_path(features_dir, row), &feats)
        })
        .collect();
    results.into_iter().collect()
}

/// Loads cached features for `rows`, in order.
pub fn load_examples<'a>(rows: impl IntoIterator<Item = &'a ManifestRow>, features_dir: &Path) -> Result<Vec<Example>> {
    rows.into_iter()
        .map(|row| {
            Ok(Example {
                id: row.segment_id(),
                features: read_features(&feature_path(features_dir, row))?,
                label: row.label,
            })
        })
        .collect()
}
