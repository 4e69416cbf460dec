//! Puzzle domain types, answer normalization and value-to-option matching.

use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of answer options every puzzle carries.
pub const NUM_OPTIONS: usize = 5;

/// The eight skill categories puzzles are grouped into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillCategory {
    Logic,
    Counting,
    SpatialReasoning,
    PathTracing,
    PatternFinding,
    Arithmetic,
    Measurement,
    Algebra,
}

impl SkillCategory {
    /// Fixed enumeration order; classifier tie-breaks follow it.
    pub const ALL: [SkillCategory; 8] = [
        SkillCategory::Logic,
        SkillCategory::Counting,
        SkillCategory::SpatialReasoning,
        SkillCategory::PathTracing,
        SkillCategory::PatternFinding,
        SkillCategory::Arithmetic,
        SkillCategory::Measurement,
        SkillCategory::Algebra,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SkillCategory::Logic => "logic",
            SkillCategory::Counting => "counting",
            SkillCategory::SpatialReasoning => "spatial_reasoning",
            SkillCategory::PathTracing => "path_tracing",
            SkillCategory::PatternFinding => "pattern_finding",
            SkillCategory::Arithmetic => "arithmetic",
            SkillCategory::Measurement => "measurement",
            SkillCategory::Algebra => "algebra",
        }
    }

    pub fn answer_kind(self) -> AnswerKind {
        answer_kind_for_category(self)
    }
}

impl fmt::Display for SkillCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SkillCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SkillCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown skill category '{s}'")))
    }
}

/// Whether a puzzle is answered by picking an option letter or by producing a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Key,
    Value,
}

impl fmt::Display for AnswerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnswerKind::Key => "key",
            AnswerKind::Value => "value",
        })
    }
}

/// Logic, counting, spatial reasoning, path tracing and pattern finding are
/// answered by option key; arithmetic, measurement and algebra by value.
pub fn answer_kind_for_category(category: SkillCategory) -> AnswerKind {
    match category {
        SkillCategory::Logic
        | SkillCategory::Counting
        | SkillCategory::SpatialReasoning
        | SkillCategory::PathTracing
        | SkillCategory::PatternFinding => AnswerKind::Key,
        SkillCategory::Arithmetic | SkillCategory::Measurement | SkillCategory::Algebra => {
            AnswerKind::Value
        }
    }
}

/// One puzzle with its rendered image and five answer options.
#[derive(Debug, Clone, PartialEq)]
pub struct PuzzleInstance {
    pub id: String,
    pub root_id: u32,
    pub image: RgbImage,
    pub question: String,
    pub options: Vec<String>,
    pub gold_option_index: usize,
    pub category: SkillCategory,
    pub weight: f64,
}

impl PuzzleInstance {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() != NUM_OPTIONS {
            return Err(Error::invalid(format!(
                "puzzle {}: expected {NUM_OPTIONS} options, got {}",
                self.id,
                self.options.len()
            )));
        }
        let mut normalized: Vec<String> = self.options.iter().map(|o| normalize_answer(o)).collect();
        normalized.sort();
        normalized.dedup();
        if normalized.len() != NUM_OPTIONS {
            return Err(Error::invalid(format!(
                "puzzle {}: options contain duplicates after normalization",
                self.id
            )));
        }
        if self.gold_option_index >= NUM_OPTIONS {
            return Err(Error::invalid(format!(
                "puzzle {}: gold option index {} out of range",
                self.id, self.gold_option_index
            )));
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(Error::invalid(format!(
                "puzzle {}: weight must be positive, got {}",
                self.id, self.weight
            )));
        }
        Ok(())
    }

    pub fn answer_kind(&self) -> AnswerKind {
        self.category.answer_kind()
    }

    pub fn gold_answer(&self) -> &str {
        &self.options[self.gold_option_index]
    }
}

/// Trim, case-fold, collapse internal whitespace and canonicalize numerals.
pub fn normalize_answer(raw: &str) -> String {
    let collapsed = raw
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    canonical_number(&collapsed).unwrap_or(collapsed)
}

/// Canonical decimal form of a plain numeral, or `None` if `s` is not one.
///
/// Accepts an optional sign, digits, and an optional fractional part. Leading
/// zeros and trailing fractional zeros are dropped; "-0" becomes "0".
fn canonical_number(s: &str) -> Option<String> {
    let (negative, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits_ok = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    if !digits_ok(int_part) {
        return None;
    }
    if let Some(f) = frac_part {
        if f.is_empty() || !digits_ok(f) {
            return None;
        }
    }
    if int_part.is_empty() && frac_part.is_none() {
        return None;
    }
    let int_trimmed = int_part.trim_start_matches('0');
    let int_canon = if int_trimmed.is_empty() { "0" } else { int_trimmed };
    let frac_canon = frac_part.map(|f| f.trim_end_matches('0')).unwrap_or("");
    let magnitude = if frac_canon.is_empty() {
        int_canon.to_string()
    } else {
        format!("{int_canon}.{frac_canon}")
    };
    if negative && magnitude != "0" {
        Some(format!("-{magnitude}"))
    } else {
        Some(magnitude)
    }
}

fn parse_number(normalized: &str) -> Option<f64> {
    canonical_number(normalized).and_then(|c| c.parse::<f64>().ok())
}

pub(crate) fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Index of the first minimum under `key`; `None` for an empty iterator.
fn argmin_by<T: PartialOrd>(items: impl Iterator<Item = (usize, T)>) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, k) in items {
        match &best {
            Some((_, bk)) if !(k < *bk) => {}
            _ => best = Some((i, k)),
        }
    }
    best.map(|(i, _)| i)
}

/// Map a free-form value onto one of the options.
///
/// Exact normalized match first, then the numerically nearest option when the
/// value and at least one option are numbers, then the smallest edit distance.
/// Ties go to the lowest index. An empty option list yields 0.
pub fn select_option_by_value(value: &str, options: &[String]) -> usize {
    let target = normalize_answer(value);
    let normalized: Vec<String> = options.iter().map(|o| normalize_answer(o)).collect();

    if let Some(i) = normalized.iter().position(|o| *o == target) {
        return i;
    }
    if let Some(v) = parse_number(&target) {
        let numeric = normalized
            .iter()
            .enumerate()
            .filter_map(|(i, o)| parse_number(o).map(|x| (i, (x - v).abs())));
        if let Some(i) = argmin_by(numeric) {
            return i;
        }
    }
    argmin_by(
        normalized
            .iter()
            .enumerate()
            .map(|(i, o)| (i, levenshtein(&target, o))),
    )
    .unwrap_or(0)
}
