use std::fs;
use std::path::Path;

use image::imageops::FilterType;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::normalize_answer;
use crate::raster::blank;

/// A question from an additional (non-puzzle) dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRecord {
    pub question: String,
    #[serde(default)]
    pub options: Vec<String>,
    pub answer: String,
    pub source: String,
    /// Image path, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

/// At least two options, one of which matches the answer after normalization.
pub fn is_multiple_choice(record: &ExternalRecord) -> bool {
    if record.options.len() < 2 {
        return false;
    }
    let answer = normalize_answer(&record.answer);
    record.options.iter().any(|o| normalize_answer(o) == answer)
}

pub fn filter_multiple_choice(records: &[ExternalRecord]) -> Vec<ExternalRecord> {
    records.iter().filter(|r| is_multiple_choice(r)).cloned().collect()
}

/// The record's image resized to `size`×`size`, or a blank canvas when the
/// record has none. `base` is the directory holding the records file.
pub fn load_record_image(base: &Path, record: &ExternalRecord, size: u32) -> Result<RgbImage> {
    let Some(rel) = &record.image else {
        return Ok(blank(size));
    };
    let path = base.join(rel);
    let img = image::open(&path)
        .map_err(|e| Error::Load {
            path: path.clone(),
            message: e.to_string(),
        })?
        .to_rgb8();
    if img.dimensions() == (size, size) {
        return Ok(img);
    }
    Ok(image::imageops::resize(&img, size, size, FilterType::Triangle))
}

/// Reads an external-record JSON Lines file. Records must name a source.
pub fn load_external(path: &Path) -> Result<Vec<ExternalRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ExternalRecord = serde_json::from_str(line).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        if record.source.trim().is_empty() {
            return Err(Error::Load {
                path: path.to_path_buf(),
                message: format!("line {}: empty source", i + 1),
            });
        }
        out.push(record);
    }
    Ok(out)
}
