//! Option selection accuracy, its weighted variant (WOSA) and reports.
//!
//! `WOSA = 100 · Σ wᵢ·correctᵢ / Σ wᵢ`. Text/VL sub-scores use modality
//! tags supplied as data; untagged puzzles count as `vl`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{PuzzleInstance, SkillCategory};
use crate::router::RoutingDecision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityTag {
    Text,
    #[default]
    Vl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub puzzle_id: String,
    pub weight: f64,
    pub correct: bool,
    pub category: SkillCategory,
    pub modality_tag: ModalityTag,
}

pub fn o_acc(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Evaluation("cannot score an empty record set".into()));
    }
    let hits = records.iter().filter(|r| r.correct).count();
    Ok(hits as f64 / records.len() as f64)
}

pub fn wosa(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Evaluation("cannot score an empty record set".into()));
    }
    if let Some(bad) = records.iter().find(|r| !(r.weight > 0.0) || !r.weight.is_finite()) {
        return Err(Error::Evaluation(format!(
            "puzzle {} has non-positive weight {}",
            bad.puzzle_id, bad.weight
        )));
    }
    let total: f64 = records.iter().map(|r| r.weight).sum();
    let hit: f64 = records.iter().filter(|r| r.correct).map(|r| r.weight).sum();
    Ok(100.0 * hit / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub count: usize,
    pub o_acc: f64,
    pub wosa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub o_acc: f64,
    pub wosa_total: f64,
    /// `None` when no puzzle carries the tag.
    pub wosa_text: Option<f64>,
    pub wosa_vl: Option<f64>,
    pub per_category: BTreeMap<SkillCategory, CategoryStats>,
}

pub fn report_from_records(records: &[EvalRecord]) -> Result<EvalReport> {
    let subset = |tag: ModalityTag| -> Result<Option<f64>> {
        let part: Vec<EvalRecord> = records.iter().filter(|r| r.modality_tag == tag).cloned().collect();
        if part.is_empty() {
            Ok(None)
        } else {
            wosa(&part).map(Some)
        }
    };
    let mut by_cat: BTreeMap<SkillCategory, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        by_cat.entry(r.category).or_default().push(r.clone());
    }
    let mut per_category = BTreeMap::new();
    for (c, rs) in by_cat {
        per_category.insert(
            c,
            CategoryStats {
                count: rs.len(),
                o_acc: o_acc(&rs)?,
                wosa: wosa(&rs)?,
            },
        );
    }
    Ok(EvalReport {
        n: records.len(),
        o_acc: o_acc(records)?,
        wosa_total: wosa(records)?,
        wosa_text: subset(ModalityTag::Text)?,
        wosa_vl: subset(ModalityTag::Vl)?,
        per_category,
    })
}

/// Scores `predictions` against every puzzle of `dataset`.
pub fn eval_records(
    predictions: &HashMap<String, usize>,
    dataset: &[PuzzleInstance],
    tags: &HashMap<String, ModalityTag>,
) -> Result<Vec<EvalRecord>> {
    let missing: Vec<&str> = dataset
        .iter()
        .filter(|p| !predictions.contains_key(&p.id))
        .map(|p| p.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Evaluation(format!("missing predictions for: {}", missing.join(", "))));
    }
    Ok(dataset
        .iter()
        .map(|p| EvalRecord {
            puzzle_id: p.id.clone(),
            weight: p.weight,
            correct: predictions[&p.id] == p.gold_option_index,
            category: p.category,
            modality_tag: tags.get(&p.id).copied().unwrap_or_default(),
        })
        .collect())
}

pub fn eval_report(
    predictions: &HashMap<String, usize>,
    dataset: &[PuzzleInstance],
    tags: &HashMap<String, ModalityTag>,
) -> Result<EvalReport> {
    report_from_records(&eval_records(predictions, dataset, tags)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub puzzle_id: String,
    pub option_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingDecision>,
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Load {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRecord {
    pub puzzle_id: String,
    pub modality: ModalityTag,
}

/// Reads a JSON Lines file of `{"puzzle_id": ..., "modality": "text"|"vl"}`.
pub fn read_tags(path: &Path) -> Result<HashMap<String, ModalityTag>> {
    Ok(read_jsonl::<TagRecord>(path)?
        .into_iter()
        .map(|t| (t.puzzle_id, t.modality))
        .collect())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

/// Plain-text table with one row per method tag.
pub fn format_table(rows: &[(&str, &EvalReport)]) -> String {
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max("Method".len());
    let mut out = format!("{:<width$} | {:>9} | {:>9} | {:>10}\n", "Method", "Text-WOSA", "VL-WOSA", "Total-WOSA");
    out.push_str(&format!("{}-+-{}-+-{}-+-{}\n", "-".repeat(width), "-".repeat(9), "-".repeat(9), "-".repeat(10)));
    for (method, r) in rows {
        out.push_str(&format!(
            "{:<width$} | {:>9} | {:>9} | {:>10}\n",
            method,
            cell(r.wosa_text),
            cell(r.wosa_vl),
            cell(Some(r.wosa_total))
        ));
    }
    out
}
