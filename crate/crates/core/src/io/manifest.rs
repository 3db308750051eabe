//! Observation manifests: a JSON array of per-image records whose paths are
//! relative to the manifest file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_landmarks, load_png_mask, load_png_rgb};
use crate::error::{Error, Result};
use crate::fit::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image: PathBuf,
    pub skin_mask: PathBuf,
    #[serde(default)]
    pub bald_mask: Option<PathBuf>,
    pub landmarks_csv: PathBuf,
    pub pose_index: usize,
    pub crop_level: usize,
    #[serde(default)]
    pub subject: Option<String>,
}

impl ManifestRecord {
    fn paths(&self) -> impl Iterator<Item = (&'static str, &PathBuf)> {
        [("image", Some(&self.image)), ("skin_mask", Some(&self.skin_mask)), ("bald_mask", self.bald_mask.as_ref()), ("landmarks_csv", Some(&self.landmarks_csv))]
            .into_iter()
            .filter_map(|(n, p)| p.map(|p| (n, p)))
    }
}

pub fn manifest_from_json(text: &str) -> Result<Vec<ManifestRecord>> {
    let records: Vec<ManifestRecord> =
        serde_json::from_str(text).map_err(|e| Error::format(format!("manifest: {e}")))?;
    if records.is_empty() {
        return Err(Error::format("manifest: no records"));
    }
    for (i, r) in records.iter().enumerate() {
        if r.pose_index == 0 || r.crop_level == 0 {
            return Err(Error::format(format!("manifest[{i}]: pose_index and crop_level are 1-based")));
        }
    }
    Ok(records)
}

/// Reads a manifest and resolves its paths against the manifest directory.
/// Fails before any image is decoded if a referenced file is missing.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let mut records = manifest_from_json(&std::fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for (i, r) in records.iter_mut().enumerate() {
        for p in [&mut r.image, &mut r.skin_mask, &mut r.landmarks_csv].into_iter().chain(r.bald_mask.as_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for (field, p) in r.paths() {
            if !p.is_file() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("manifest[{i}].{field}: {} does not exist", p.display()),
                )));
            }
        }
    }
    Ok(records)
}

pub fn save_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(records)?)?;
    Ok(())
}

/// Loads the files referenced by one record.
pub fn load_observation(r: &ManifestRecord) -> Result<Observation> {
    let obs = Observation {
        image: load_png_rgb(&r.image)?,
        skin_mask: load_png_mask(&r.skin_mask)?,
        bald_skin_mask: r.bald_mask.as_deref().map(load_png_mask).transpose()?,
        landmarks: load_landmarks(&r.landmarks_csv)?,
        crop_level: r.crop_level,
        pose_index: r.pose_index,
        subject: r.subject.clone().unwrap_or_default(),
    };
    obs.validate()?;
    Ok(obs)
}
