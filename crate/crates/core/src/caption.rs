//! Two-stage text enhancement: ask `k` probe questions about the image, then
//! generate a detailed caption with the question/answer pairs as history.
//! Records are cached in an append-only JSON Lines file.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use base64::Engine;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::puzzle::PuzzleInstance;
use crate::raster::{palette_name, read_text, INK, LINE, PALETTE};
use crate::regions::{extract_regions, RegionParams};

pub const DEFAULT_K: usize = 3;

pub const DEFAULT_PROBES: [&str; 3] = [
    "What objects and shapes are in the image?",
    "How many objects are there and how are they arranged?",
    "What text or numbers are visible in the image?",
];

pub const CAPTION_INSTRUCTION: &str =
    "Describe this puzzle image in detail, including all shapes, numbers, text, and their arrangement.";

/// A vision-language model able to answer questions about an image and
/// generate free text. Implementations must be deterministic for identical
/// inputs so cached records stay valid.
pub trait CaptionerBackend: Send + Sync {
    /// Stable identifier, part of the cache key.
    fn id(&self) -> String;
    fn answer_visual_question(&self, image: &RgbImage, question: &str) -> Result<String>;
    fn generate_text(&self, image: &RgbImage, prompt: &str) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionConfig {
    pub k: usize,
    pub probes: Vec<String>,
    pub instruction: String,
}

impl Default for CaptionConfig {
    fn default() -> Self {
        CaptionConfig {
            k: DEFAULT_K,
            probes: DEFAULT_PROBES.iter().map(|s| s.to_string()).collect(),
            instruction: CAPTION_INSTRUCTION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub puzzle_id: String,
    pub image_digest: String,
    pub backend_id: String,
    pub k: usize,
    pub vqa_pairs: Vec<(String, String)>,
    pub caption: String,
}

/// SHA-256 over the image dimensions and raw RGB bytes, hex encoded.
pub fn image_digest(image: &RgbImage) -> String {
    let mut h = Sha256::new();
    h.update(image.width().to_le_bytes());
    h.update(image.height().to_le_bytes());
    h.update(image.as_raw());
    hex::encode(h.finalize())
}

pub fn generate_vqa_pairs(
    image: &RgbImage,
    backend: &dyn CaptionerBackend,
    k: usize,
    probes: &[String],
) -> Result<Vec<(String, String)>> {
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > probes.len() {
        return Err(Error::Config(format!(
            "k = {k} but only {} probe questions are configured",
            probes.len()
        )));
    }
    probes[..k]
        .iter()
        .enumerate()
        .map(|(i, q)| {
            backend
                .answer_visual_question(image, q)
                .map(|a| (q.clone(), a))
                .map_err(|e| Error::Backend(format!("probe {i} failed: {e}")))
        })
        .collect()
}

/// History pairs as `Q: <q>\nA: <a>\n` blocks, then the caption instruction.
pub fn caption_prompt(history: &[(String, String)], instruction: &str) -> String {
    let mut prompt = String::new();
    for (q, a) in history {
        prompt.push_str(&format!("Q: {q}\nA: {a}\n"));
    }
    prompt.push_str(instruction);
    prompt
}

pub fn generate_caption(
    image: &RgbImage,
    history: &[(String, String)],
    backend: &dyn CaptionerBackend,
    instruction: &str,
) -> Result<String> {
    backend
        .generate_text(image, &caption_prompt(history, instruction))
        .map_err(|e| Error::Backend(format!("caption generation failed: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    puzzle_id: String,
    image_digest: String,
    backend_id: String,
    k: usize,
}

impl CacheKey {
    fn of(r: &CaptionRecord) -> Self {
        CacheKey {
            puzzle_id: r.puzzle_id.clone(),
            image_digest: r.image_digest.clone(),
            backend_id: r.backend_id.clone(),
            k: r.k,
        }
    }
}

/// Append-only caption cache backed by `captions.jsonl`. Later lines shadow
/// earlier ones with the same key. Safe to share across threads.
pub struct CaptionCache {
    path: PathBuf,
    records: Mutex<HashMap<CacheKey, CaptionRecord>>,
}

impl CaptionCache {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut records = HashMap::new();
        if path.exists() {
            let file = fs::File::open(&path)?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: CaptionRecord = serde_json::from_str(&line).map_err(|e| Error::Load {
                    path: path.clone(),
                    message: format!("line {}: {e}", i + 1),
                })?;
                records.insert(CacheKey::of(&r), r);
            }
        } else if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        Ok(CaptionCache {
            path,
            records: Mutex::new(records),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, puzzle_id: &str, image_digest: &str, backend_id: &str, k: usize) -> Option<CaptionRecord> {
        let key = CacheKey {
            puzzle_id: puzzle_id.to_string(),
            image_digest: image_digest.to_string(),
            backend_id: backend_id.to_string(),
            k,
        };
        self.records.lock().expect("cache lock").get(&key).cloned()
    }

    /// Latest record for a puzzle regardless of backend, for consumers that
    /// only need the caption text.
    pub fn latest_for(&self, puzzle_id: &str, image_digest: &str) -> Option<CaptionRecord> {
        let records = self.records.lock().expect("cache lock");
        let mut matching: Vec<&CaptionRecord> = records
            .values()
            .filter(|r| r.puzzle_id == puzzle_id && r.image_digest == image_digest)
            .collect();
        matching.sort_by(|a, b| (&a.backend_id, a.k).cmp(&(&b.backend_id, b.k)));
        matching.first().map(|r| (*r).clone())
    }

    /// Appends the record to disk, then makes it visible to readers.
    pub fn put(&self, record: CaptionRecord) -> Result<()> {
        let mut records = self.records.lock().expect("cache lock");
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(line.as_bytes())?;
        f.flush()?;
        records.insert(CacheKey::of(&record), record);
        Ok(())
    }
}

/// Whether [`enhance`] served the record from cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
}

pub fn enhance(
    puzzle: &PuzzleInstance,
    backend: &dyn CaptionerBackend,
    cache: &CaptionCache,
    config: &CaptionConfig,
) -> Result<(CaptionRecord, CacheStatus)> {
    let digest = image_digest(&puzzle.image);
    let backend_id = backend.id();
    if let Some(r) = cache.get(&puzzle.id, &digest, &backend_id, config.k) {
        return Ok((r, CacheStatus::Hit));
    }
    let pairs = generate_vqa_pairs(&puzzle.image, backend, config.k, &config.probes)?;
    let caption = generate_caption(&puzzle.image, &pairs, backend, &config.instruction)?;
    let record = CaptionRecord {
        puzzle_id: puzzle.id.clone(),
        image_digest: digest,
        backend_id,
        k: config.k,
        vqa_pairs: pairs,
        caption,
    };
    cache.put(record.clone())?;
    Ok((record, CacheStatus::Miss))
}

/// Test double answering probes from a fixed script and counting calls.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    pub answers: Vec<String>,
    pub caption: String,
    /// Fail on this VQA call index (0-based), if set.
    pub fail_on_probe: Option<usize>,
    vqa_calls: AtomicUsize,
    text_calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(answers: &[&str], caption: &str) -> Self {
        ScriptedBackend {
            answers: answers.iter().map(|s| s.to_string()).collect(),
            caption: caption.to_string(),
            ..Default::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.vqa_calls.load(Ordering::SeqCst) + self.text_calls.load(Ordering::SeqCst)
    }

    pub fn reset_calls(&self) {
        self.vqa_calls.store(0, Ordering::SeqCst);
        self.text_calls.store(0, Ordering::SeqCst);
    }
}

impl CaptionerBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn answer_visual_question(&self, _image: &RgbImage, _question: &str) -> Result<String> {
        let i = self.vqa_calls.fetch_add(1, Ordering::SeqCst);
        if self.fail_on_probe == Some(i) {
            return Err(Error::Backend("scripted failure".into()));
        }
        Ok(self
            .answers
            .get(i % self.answers.len().max(1))
            .cloned()
            .unwrap_or_default())
    }

    fn generate_text(&self, _image: &RgbImage, _prompt: &str) -> Result<String> {
        self.text_calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.caption.clone())
    }
}

/// Returns its prompt (or question) verbatim.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoBackend;

impl CaptionerBackend for EchoBackend {
    fn id(&self) -> String {
        "echo".into()
    }

    fn answer_visual_question(&self, _image: &RgbImage, question: &str) -> Result<String> {
        Ok(question.to_string())
    }

    fn generate_text(&self, _image: &RgbImage, prompt: &str) -> Result<String> {
        Ok(prompt.to_string())
    }
}

/// Deterministic image-analysis captioner: describes colored shapes, lines
/// and rendered text found by region extraction and glyph reading. Stands in
/// for a pretrained vision-language model on synthetic puzzles.
#[derive(Debug, Default, Clone)]
pub struct HeuristicBackend {
    pub regions: RegionParams,
}

struct Scene {
    /// Palette names in reading order (row band, then column).
    colors: Vec<&'static str>,
    largest: Option<&'static str>,
    lines: usize,
    /// Vertical position word where line pixels touch the right border.
    line_end: Option<&'static str>,
    text: Option<String>,
}

const VERTICAL: [&str; 5] = ["top", "upper", "middle", "lower", "bottom"];

/// Position word for the mean row of line pixels in column `x`.
fn border_position(image: &RgbImage, x: u32) -> Option<&'static str> {
    let rows: Vec<u32> = (0..image.height()).filter(|&y| *image.get_pixel(x, y) == LINE).collect();
    if rows.is_empty() {
        return None;
    }
    let mean = rows.iter().map(|r| *r as f64 + 0.5).sum::<f64>() / rows.len() as f64;
    let band = ((mean / image.height() as f64) * 5.0).floor() as usize;
    Some(VERTICAL[band.min(4)])
}

impl HeuristicBackend {
    fn scene(&self, image: &RgbImage) -> Scene {
        let regions = extract_regions(image, &self.regions);
        let mut shapes = Vec::new();
        let mut lines = 0;
        for r in &regions {
            let rgb = [r.mean_color.0, r.mean_color.1, r.mean_color.2].map(|c| (c * 255.0).round() as u8);
            if rgb == LINE.0 {
                lines += 1;
            } else if rgb != INK.0 {
                if let Some(name) = palette_name(image::Rgb(rgb)) {
                    shapes.push((r, name));
                }
            }
        }
        let largest = shapes.first().map(|(_, n)| *n);
        shapes.sort_by(|(a, _), (b, _)| {
            let band = |c: f64| (c * 3.0).floor() as i64;
            band(a.centroid.0)
                .cmp(&band(b.centroid.0))
                .then(a.centroid.1.total_cmp(&b.centroid.1))
        });
        let line_end = if lines > 0 { border_position(image, image.width() - 1) } else { None };
        Scene {
            colors: shapes.into_iter().map(|(_, n)| n).collect(),
            largest,
            lines,
            line_end,
            text: read_text(image),
        }
    }
}

fn spaced(text: &str) -> String {
    text.chars().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

fn shape_count(n: usize) -> String {
    match n {
        0 => "no shapes".into(),
        1 => "1 shape".into(),
        n => format!("{n} shapes"),
    }
}

impl CaptionerBackend for HeuristicBackend {
    fn id(&self) -> String {
        format!("heuristic-t{}-a{}", self.regions.threshold, self.regions.min_area)
    }

    fn answer_visual_question(&self, image: &RgbImage, question: &str) -> Result<String> {
        let s = self.scene(image);
        let q = question.to_lowercase();
        let answer = if q.contains("text") || q.contains("number") {
            match &s.text {
                Some(t) => format!("the text reads {}", spaced(t)),
                None => "there is no text".into(),
            }
        } else if q.contains("how many") || q.contains("arrang") {
            let mut a = format!("there are {}", shape_count(s.colors.len()));
            if !s.colors.is_empty() {
                a.push_str(&format!(" in reading order {}", s.colors.join(" ")));
            }
            a
        } else {
            let mut parts = Vec::new();
            if !s.colors.is_empty() {
                parts.push(format!("{} colored {}", s.colors.len(), if s.colors.len() == 1 { "shape" } else { "shapes" }));
            }
            if s.lines > 0 {
                parts.push("a gray line".into());
            }
            if s.text.is_some() {
                parts.push("printed text".into());
            }
            if parts.is_empty() {
                "an empty image".into()
            } else {
                parts.join(" and ")
            }
        };
        Ok(answer)
    }

    fn generate_text(&self, image: &RgbImage, _prompt: &str) -> Result<String> {
        let s = self.scene(image);
        let mut sentences = vec![format!("the image shows {}", shape_count(s.colors.len()))];
        if !s.colors.is_empty() {
            sentences.push(format!("colors in reading order are {}", s.colors.join(" ")));
        }
        for (name, _) in PALETTE {
            match s.colors.iter().filter(|c| **c == name).count() {
                0 => {}
                1 => sentences.push(format!("1 shape is {name}")),
                n => sentences.push(format!("{n} shapes are {name}")),
            }
        }
        if let Some(l) = s.largest {
            sentences.push(format!("the largest shape is {l}"));
        }
        if s.lines > 0 {
            sentences.push("a gray line crosses the image".into());
        }
        if let Some(end) = s.line_end {
            sentences.push(format!("the line ends at the right edge near the {end}"));
        }
        if let Some(t) = &s.text {
            sentences.push(format!("the text reads {}", spaced(t)));
        }
        Ok(sentences.join(". ") + ".")
    }
}

/// Remote backend: POSTs `{"image_base64", "prompt"}` and reads `{"text"}`.
/// Visual questions are sent as the prompt.
pub struct HttpBackend {
    endpoint: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    image_base64: String,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct HttpResponse {
    text: String,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(HttpBackend {
            endpoint: endpoint.into(),
            client,
        })
    }

    fn call(&self, image: &RgbImage, prompt: &str) -> Result<String> {
        let mut png = Vec::new();
        image.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)?;
        let body = HttpRequest {
            image_base64: base64::engine::general_purpose::STANDARD.encode(&png),
            prompt,
        };
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::Backend(format!("{}: {e}", self.endpoint)))?;
        let parsed: HttpResponse = resp
            .json()
            .map_err(|e| Error::Backend(format!("{}: bad response: {e}", self.endpoint)))?;
        Ok(parsed.text)
    }
}

impl CaptionerBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn answer_visual_question(&self, image: &RgbImage, question: &str) -> Result<String> {
        self.call(image, question)
    }

    fn generate_text(&self, image: &RgbImage, prompt: &str) -> Result<String> {
        self.call(image, prompt)
    }
}

/// Backend by configuration name: `mock` (image-analysis captioner),
/// `echo`, or `http` (requires an endpoint).
pub fn backend_from_name(name: &str, endpoint: Option<&str>) -> Result<Box<dyn CaptionerBackend>> {
    match name {
        "mock" => Ok(Box::new(HeuristicBackend::default())),
        "echo" => Ok(Box::new(EchoBackend)),
        "http" => {
            let endpoint = endpoint.ok_or_else(|| Error::Config("http backend needs captioner.endpoint".into()))?;
            Ok(Box::new(HttpBackend::new(endpoint)?))
        }
        other => Err(Error::Config(format!(
            "unknown captioner backend '{other}' (expected mock, echo or http)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic_puzzles;
    use crate::puzzle::SkillCategory;
    use crate::raster::blank;

    fn probes() -> Vec<String> {
        DEFAULT_PROBES.iter().map(|s| s.to_string()).collect()
    }

    fn puzzle() -> PuzzleInstance {
        generate_synthetic_puzzles(1, 32, 5).unwrap().remove(1)
    }

    #[test]
    fn vqa_pairs_follow_probe_order() {
        let b = ScriptedBackend::new(&["A", "B", "C"], "cap");
        let pairs = generate_vqa_pairs(&blank(16), &b, 3, &probes()).unwrap();
        let answers: Vec<_> = pairs.iter().map(|(_, a)| a.as_str()).collect();
        assert_eq!(answers, ["A", "B", "C"]);
        assert_eq!(pairs[0].0, DEFAULT_PROBES[0]);

        let one = generate_vqa_pairs(&blank(16), &ScriptedBackend::new(&["A"], ""), 1, &probes()).unwrap();
        assert_eq!(one, vec![(DEFAULT_PROBES[0].to_string(), "A".to_string())]);
        assert!(generate_vqa_pairs(&blank(16), &b, 0, &probes()).is_err());
    }

    #[test]
    fn probe_failure_names_index() {
        let mut b = ScriptedBackend::new(&["A", "B", "C"], "cap");
        b.fail_on_probe = Some(1);
        let err = generate_vqa_pairs(&blank(16), &b, 3, &probes()).unwrap_err();
        assert!(err.to_string().contains("probe 1"), "{err}");
    }

    #[test]
    fn caption_prompt_layout() {
        let empty = generate_caption(&blank(16), &[], &EchoBackend, CAPTION_INSTRUCTION).unwrap();
        assert_eq!(empty, CAPTION_INSTRUCTION);
        let history: Vec<(String, String)> = (1..=3).map(|i| (format!("q{i}"), format!("a{i}"))).collect();
        let out = generate_caption(&blank(16), &history, &EchoBackend, CAPTION_INSTRUCTION).unwrap();
        assert_eq!(out, format!("Q: q1\nA: a1\nQ: q2\nA: a2\nQ: q3\nA: a3\n{CAPTION_INSTRUCTION}"));
        assert_eq!(out, generate_caption(&blank(16), &history, &EchoBackend, CAPTION_INSTRUCTION).unwrap());
    }

    #[test]
    fn cold_then_warm_cache() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("captions.jsonl");
        let b = ScriptedBackend::new(&["A", "B", "C"], "cap");
        let p = puzzle();
        let cfg = CaptionConfig::default();

        let cache = CaptionCache::open(&path).unwrap();
        let (cold, status) = enhance(&p, &b, &cache, &cfg).unwrap();
        assert_eq!(status, CacheStatus::Miss);
        assert_eq!(b.calls(), cfg.k + 1);
        assert_eq!(cold.vqa_pairs.len(), cfg.k);

        b.reset_calls();
        let reopened = CaptionCache::open(&path).unwrap();
        let (warm, status) = enhance(&p, &b, &reopened, &cfg).unwrap();
        assert_eq!(status, CacheStatus::Hit);
        assert_eq!(b.calls(), 0);
        assert_eq!(warm, cold);

        let mut changed = p.clone();
        changed.image.put_pixel(0, 0, image::Rgb([1, 2, 3]));
        let (_, status) = enhance(&changed, &b, &reopened, &cfg).unwrap();
        assert_eq!(status, CacheStatus::Miss);
        assert_eq!(b.calls(), cfg.k + 1);
    }

    #[test]
    fn failed_enhance_leaves_cache_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CaptionCache::open(dir.path().join("c.jsonl")).unwrap();
        let mut b = ScriptedBackend::new(&["A", "B", "C"], "cap");
        b.fail_on_probe = Some(2);
        assert!(enhance(&puzzle(), &b, &cache, &CaptionConfig::default()).is_err());
        assert!(cache.is_empty());
        assert!(!dir.path().join("c.jsonl").exists());
    }

    #[test]
    fn later_lines_shadow_earlier() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut r = CaptionRecord {
            puzzle_id: "p".into(),
            image_digest: "d".into(),
            backend_id: "b".into(),
            k: 1,
            vqa_pairs: vec![("q".into(), "a".into())],
            caption: "old".into(),
        };
        let cache = CaptionCache::open(&path).unwrap();
        cache.put(r.clone()).unwrap();
        r.caption = "new".into();
        cache.put(r.clone()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"vqa_pairs\":[[\"q\",\"a\"]]"));
        let reopened = CaptionCache::open(&path).unwrap();
        assert_eq!(reopened.get("p", "d", "b", 1).unwrap().caption, "new");
        assert_eq!(reopened.len(), 1);
    }

    #[test]
    fn heuristic_captions_describe_synthetic_puzzles() {
        let ps = generate_synthetic_puzzles(4, 32, 2).unwrap();
        let h = HeuristicBackend::default();
        for p in &ps {
            let cap = h.generate_text(&p.image, "").unwrap();
            match p.category {
                SkillCategory::Counting => {
                    let n: usize = p.gold_answer().parse().unwrap();
                    assert!(cap.starts_with(&format!("the image shows {}", shape_count(n))), "{cap}");
                }
                SkillCategory::SpatialReasoning => {
                    assert!(cap.contains(&format!("the largest shape is {}", p.gold_answer())), "{cap}");
                }
                SkillCategory::Arithmetic => assert!(cap.contains("the text reads"), "{cap}"),
                SkillCategory::PathTracing => assert!(cap.contains("gray line"), "{cap}"),
                _ => {}
            }
        }
        assert_eq!(h.answer_visual_question(&blank(16), DEFAULT_PROBES[2]).unwrap(), "there is no text");
    }

    #[test]
    fn line_end_word_names_the_exit() {
        let h = HeuristicBackend::default();
        for size in [32, 64] {
            for p in generate_synthetic_puzzles(8, size, 11).unwrap() {
                if p.category != SkillCategory::PathTracing {
                    continue;
                }
                let cap = h.generate_text(&p.image, "").unwrap();
                let want = format!("right edge near the {}", VERTICAL[p.gold_option_index]);
                assert!(cap.contains(&want), "{}: {cap}", p.id);
            }
        }
    }

    #[test]
    fn backend_names() {
        assert!(backend_from_name("mock", None).is_ok());
        assert!(backend_from_name("echo", None).is_ok());
        assert!(backend_from_name("http", None).is_err());
        assert!(backend_from_name("gpt", None).is_err());
    }
}
