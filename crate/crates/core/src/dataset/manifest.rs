use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{PuzzleInstance, SkillCategory, NUM_OPTIONS};

pub const MANIFEST_FILE: &str = "puzzles.jsonl";

/// One line of `puzzles.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub root_id: u32,
    pub image: String,
    pub question: String,
    pub options: Vec<String>,
    pub answer_index: usize,
    pub category: SkillCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

/// A manifest line that could not be turned into a puzzle.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    /// 1-based line number.
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Default)]
pub struct LoadOutcome {
    pub puzzles: Vec<PuzzleInstance>,
    pub errors: Vec<RecordError>,
}

/// Loads `root/puzzles.jsonl` and the images it references.
///
/// A missing manifest is fatal. Bad lines (malformed JSON, wrong option
/// count, missing or undecodable image) are collected and skipped. Images are
/// decoded in parallel; the output keeps manifest order.
pub fn load_puzzles(root: &Path) -> Result<LoadOutcome> {
    let manifest = root.join(MANIFEST_FILE);
    let file = fs::File::open(&manifest).map_err(|e| Error::Load {
        path: manifest.clone(),
        message: e.to_string(),
    })?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }

    let results: Vec<std::result::Result<PuzzleInstance, RecordError>> = lines
        .par_iter()
        .map(|(line_no, line)| parse_line(root, *line_no, line))
        .collect();

    let mut outcome = LoadOutcome::default();
    for r in results {
        match r {
            Ok(p) => outcome.puzzles.push(p),
            Err(e) => outcome.errors.push(e),
        }
    }
    Ok(outcome)
}

fn parse_line(root: &Path, line: usize, text: &str) -> std::result::Result<PuzzleInstance, RecordError> {
    let record: ManifestRecord = serde_json::from_str(text).map_err(|e| RecordError {
        line,
        id: None,
        message: format!("malformed record: {e}"),
    })?;
    let fail = |message: String| RecordError {
        line,
        id: Some(record.id.clone()),
        message,
    };
    if record.options.len() != NUM_OPTIONS {
        return Err(fail(format!(
            "expected {NUM_OPTIONS} options, got {}",
            record.options.len()
        )));
    }
    let path: PathBuf = root.join(&record.image);
    let image = image::open(&path)
        .map_err(|e| fail(format!("cannot read image {}: {e}", path.display())))?
        .to_rgb8();
    let puzzle = PuzzleInstance {
        id: record.id.clone(),
        root_id: record.root_id,
        image,
        question: record.question.clone(),
        options: record.options.clone(),
        gold_option_index: record.answer_index,
        category: record.category,
        weight: record.weight.unwrap_or(1.0),
    };
    puzzle.validate().map_err(|e| fail(e.to_string()))?;
    Ok(puzzle)
}

/// Writes `root/puzzles.jsonl` plus one PNG per puzzle under `root/images/`.
pub fn write_puzzles(root: &Path, puzzles: &[PuzzleInstance]) -> Result<()> {
    let images = root.join("images");
    fs::create_dir_all(&images)?;
    let mut manifest = fs::File::create(root.join(MANIFEST_FILE))?;
    for p in puzzles {
        let rel = format!("images/{}.png", p.id);
        p.image.save(root.join(&rel))?;
        let record = ManifestRecord {
            id: p.id.clone(),
            root_id: p.root_id,
            image: rel,
            question: p.question.clone(),
            options: p.options.clone(),
            answer_index: p.gold_option_index,
            category: p.category,
            weight: (p.weight != 1.0).then_some(p.weight),
        };
        serde_json::to_writer(&mut manifest, &record)?;
        manifest.write_all(b"\n")?;
    }
    manifest.flush()?;
    Ok(())
}
