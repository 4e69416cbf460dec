use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use smartvl::caption::{backend_from_name, enhance, image_digest, CacheStatus, CaptionCache};
use smartvl::dataset::{
    filter_multiple_choice, generate_synthetic_puzzles, load_external, load_puzzles, load_record_image,
    make_puzzle_split, write_puzzles,
};
use smartvl::decoder::{ModelInput, Role};
use smartvl::evaluator::{eval_report, format_table, read_predictions, read_tags, write_predictions, EvalReport, PredictionRecord};
use smartvl::puzzle::{AnswerKind, PuzzleInstance, SkillCategory};
use smartvl::router::{route_and_answer, simulate_routing, SimulationParams};
use smartvl::trainer::{filter_for_role, fit, load_checkpoint, FitData, FitEvent, FitOptions, TrainExample};

use crate::config::RunConfig;
use crate::{CaptionArgs, EvalArgs, InferArgs, RoleArg, SimulateArgs, SplitArg, SynthArgs, TrainArgs};

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `foo/bar.jsonl` -> `foo/bar.jsonl.config.json`
fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn load_dataset(root: &Path) -> Result<Vec<PuzzleInstance>> {
    let outcome = load_puzzles(root)?;
    if !outcome.errors.is_empty() {
        let lines: Vec<String> = outcome.errors.iter().map(|e| format!("  {e}")).collect();
        bail!(
            "{} bad record(s) in {}:\n{}",
            outcome.errors.len(),
            root.display(),
            lines.join("\n")
        );
    }
    ensure!(!outcome.puzzles.is_empty(), "{} holds no puzzles", root.display());
    Ok(outcome.puzzles)
}

fn select_split(cfg: &RunConfig, puzzles: Vec<PuzzleInstance>, split: SplitArg) -> Result<Vec<PuzzleInstance>> {
    if split == SplitArg::All {
        return Ok(puzzles);
    }
    let spec = make_puzzle_split(&puzzles, cfg.split.test_fraction, cfg.seed)?;
    let want_test = split == SplitArg::Test;
    Ok(puzzles.into_iter().filter(|p| spec.is_test(p.root_id) == want_test).collect())
}

/// Caption text per puzzle, in order. Empty strings when captions are off.
fn captions_for(puzzles: &[PuzzleInstance], cache_path: Option<&Path>) -> Result<Vec<String>> {
    let Some(path) = cache_path else {
        return Ok(vec![String::new(); puzzles.len()]);
    };
    ensure!(
        path.exists(),
        "caption cache {} not found; run `smartvl caption` first or pass --no-captions",
        path.display()
    );
    let cache = CaptionCache::open(path)?;
    let mut out = Vec::with_capacity(puzzles.len());
    let mut missing = Vec::new();
    for p in puzzles {
        match cache.latest_for(&p.id, &image_digest(&p.image)) {
            Some(r) => out.push(r.caption),
            None => missing.push(p.id.as_str()),
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).copied().collect();
        bail!(
            "{} puzzle(s) have no caption in {} (e.g. {}); run `smartvl caption` on this dataset",
            missing.len(),
            path.display(),
            shown.join(", ")
        );
    }
    Ok(out)
}

fn caption_path(cfg: &RunConfig, flag: &Option<PathBuf>, disabled: bool) -> Option<PathBuf> {
    (!disabled).then(|| flag.clone().unwrap_or_else(|| cfg.paths.captions.clone()))
}

pub fn synth(mut cfg: RunConfig, a: SynthArgs) -> Result<()> {
    if let Some(s) = a.image_size {
        cfg.vision.image_size = s;
    }
    let puzzles = generate_synthetic_puzzles(a.n_per_category, cfg.vision.image_size, cfg.seed)?;
    write_puzzles(&a.out, &puzzles)?;
    write_json(
        &a.out.join("run_config.json"),
        &json!({"command": "synth", "n_per_category": a.n_per_category, "config": cfg.snapshot()}),
    )?;
    println!("wrote {} puzzles to {}", puzzles.len(), a.out.display());
    Ok(())
}

pub fn caption(mut cfg: RunConfig, a: CaptionArgs) -> Result<()> {
    if let Some(b) = a.backend {
        cfg.captioner.backend = b;
    }
    if a.endpoint.is_some() {
        cfg.captioner.endpoint = a.endpoint;
    }
    if let Some(k) = a.k {
        cfg.captioner.k = k;
    }
    let data = a.data.unwrap_or_else(|| cfg.paths.data.clone());
    let cache_path = a.cache.unwrap_or_else(|| cfg.paths.captions.clone());
    let puzzles = load_dataset(&data)?;
    let backend = backend_from_name(&cfg.captioner.backend, cfg.captioner.endpoint.as_deref())?;
    let cache = CaptionCache::open(&cache_path)?;
    let ccfg = cfg.captioner.caption_config();
    let (mut hits, mut misses) = (0, 0);
    for p in &puzzles {
        let (_, status) = enhance(p, backend.as_ref(), &cache, &ccfg).with_context(|| format!("captioning {}", p.id))?;
        match status {
            CacheStatus::Hit => hits += 1,
            CacheStatus::Miss => misses += 1,
        }
    }
    println!(
        "captioned {} puzzles with {} ({hits} cached, {misses} new) -> {}",
        puzzles.len(),
        backend.id(),
        cache_path.display()
    );
    Ok(())
}

fn load_additional(path: &Path, image_size: u32) -> Result<Vec<TrainExample>> {
    let records = filter_multiple_choice(&load_external(path)?);
    let base = path.parent().unwrap_or(Path::new("."));
    records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let image = match load_record_image(base, r, image_size) {
                Ok(img) => img,
                Err(e) => return Some(Err(e.into())),
            };
            TrainExample::from_external(format!("{}:{i}", r.source), r, image, "").map(Ok)
        })
        .collect()
}

pub fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    let t = &mut cfg.trainer;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.base_lr {
        t.base_lr = v;
    }
    if let Some(v) = a.lora_lr {
        t.lora_lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.mix_ratio {
        t.mix_ratio = v;
    }
    t.all_categories |= a.all_categories;
    cfg.validate()?;
    let role = match a.role {
        RoleArg::Key => Role::KeyModel,
        RoleArg::Value => Role::ValueModel,
    };

    let data = a.data.clone().unwrap_or_else(|| cfg.paths.data.clone());
    let puzzles = select_split(&cfg, load_dataset(&data)?, SplitArg::Train)?;
    let captions = captions_for(&puzzles, caption_path(&cfg, &a.captions, a.no_captions).as_deref())?;
    let examples: Vec<TrainExample> = puzzles
        .iter()
        .zip(&captions)
        .map(|(p, c)| TrainExample::from_puzzle(p, c))
        .collect();

    // Instance-level validation subset drawn from the training roots.
    let n_val = (cfg.split.validation_fraction * examples.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a1d);
    let mut is_val = vec![false; examples.len()];
    for i in sample(&mut rng, examples.len(), n_val.min(examples.len().saturating_sub(1))) {
        is_val[i] = true;
    }
    let (validation, primary): (Vec<_>, Vec<_>) = examples.into_iter().zip(&is_val).partition(|(_, v)| **v);
    let validation: Vec<TrainExample> = validation.into_iter().map(|(e, _)| e).collect();
    let primary: Vec<TrainExample> = primary.into_iter().map(|(e, _)| e).collect();
    let additional = match &a.additional {
        Some(p) => load_additional(p, cfg.vision.image_size)?,
        None => Vec::new(),
    };

    let metrics = a.metrics.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".metrics.jsonl");
        PathBuf::from(s)
    });
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let opts = FitOptions {
        checkpoint_path: Some(a.out.clone()),
        metrics_path: Some(metrics.clone()),
        run_config: Some(cfg.snapshot()),
        max_steps: None,
    };
    let fit_data = FitData {
        primary: &primary,
        additional: &additional,
        validation: &validation,
    };
    let ckpt = fit(role, &cfg.model(), fit_data, &cfg.trainer, &cfg.lora, &opts, &mut |e| match e {
        FitEvent::Metric(m) => eprintln!(
            "step {:>5} {:<10} o_acc {:.3} wosa {:.2}{}",
            m.step,
            m.split,
            m.o_acc,
            m.wosa,
            m.loss.map(|l| format!(" loss {l:.4}")).unwrap_or_default()
        ),
        FitEvent::Saved { step } => eprintln!("step {step:>5} saved checkpoint"),
        FitEvent::Batch { .. } => {}
    })?;
    let last = ckpt.history.last();
    println!(
        "trained {role} to step {} ({} primary, {} validation, {} additional); train o_acc {:.3} -> {}",
        ckpt.step,
        filter_for_role(&primary, role, cfg.trainer.all_categories).len(),
        filter_for_role(&validation, role, cfg.trainer.all_categories).len(),
        additional.len(),
        last.map(|m| m.o_acc).unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

pub fn infer(cfg: RunConfig, a: InferArgs) -> Result<()> {
    let key = load_checkpoint(&a.key_ckpt).with_context(|| format!("loading {}", a.key_ckpt.display()))?;
    let value = load_checkpoint(&a.value_ckpt).with_context(|| format!("loading {}", a.value_ckpt.display()))?;
    ensure!(
        key.assembly.role() == Role::KeyModel,
        "{} holds a {} checkpoint; --key-ckpt needs key_model",
        a.key_ckpt.display(),
        key.assembly.role()
    );
    ensure!(
        value.assembly.role() == Role::ValueModel,
        "{} holds a {} checkpoint; --value-ckpt needs value_model",
        a.value_ckpt.display(),
        value.assembly.role()
    );
    let data = a.data.clone().unwrap_or_else(|| cfg.paths.data.clone());
    let puzzles = select_split(&cfg, load_dataset(&data)?, a.split)?;
    let captions = captions_for(&puzzles, caption_path(&cfg, &a.captions, a.no_captions).as_deref())?;
    let records: Vec<PredictionRecord> = puzzles
        .par_iter()
        .zip(captions.par_iter())
        .map(|(p, c)| {
            let input = ModelInput::new(p, c);
            let (decision, option_index) = route_and_answer(&key.assembly, &value.assembly, &input, &cfg.router)
                .with_context(|| format!("answering {}", p.id))?;
            Ok(PredictionRecord {
                puzzle_id: p.id.clone(),
                option_index,
                routing: Some(decision),
            })
        })
        .collect::<Result<_>>()?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_predictions(&a.out, &records)?;
    write_json(
        &sidecar(&a.out),
        &json!({
            "command": "infer",
            "key_ckpt": a.key_ckpt,
            "value_ckpt": a.value_ckpt,
            "key_run_config": key.run_config,
            "value_run_config": value.run_config,
            "config": cfg.snapshot(),
        }),
    )?;
    println!("wrote {} predictions to {}", records.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ReportFile<'a> {
    method: &'a str,
    seed: u64,
    #[serde(flatten)]
    report: &'a EvalReport,
    run_config: serde_json::Value,
}

pub fn eval(cfg: RunConfig, a: EvalArgs) -> Result<()> {
    let data = a.data.clone().unwrap_or_else(|| cfg.paths.data.clone());
    let puzzles = select_split(&cfg, load_dataset(&data)?, a.split)?;
    let mut predictions = HashMap::new();
    for r in read_predictions(&a.predictions)? {
        if predictions.insert(r.puzzle_id.clone(), r.option_index).is_some() {
            bail!("{} lists {} more than once", a.predictions.display(), r.puzzle_id);
        }
    }
    let tags = match &a.tags {
        Some(p) => read_tags(p)?,
        None => HashMap::new(),
    };
    let report = eval_report(&predictions, &puzzles, &tags)?;
    print!("{}", format_table(&[(a.method.as_str(), &report)]));
    println!("O_acc {:.4} over {} puzzles", report.o_acc, report.n);
    if let Some(out) = &a.out {
        let file = ReportFile {
            method: &a.method,
            seed: cfg.seed,
            report: &report,
            run_config: cfg.snapshot(),
        };
        write_json(out, &file)?;
    }
    Ok(())
}

fn parse_kinds(s: &str) -> Result<Vec<AnswerKind>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| match t {
            "key" => Ok(AnswerKind::Key),
            "value" => Ok(AnswerKind::Value),
            other => bail!("unknown kind {other:?} (expected key or value)"),
        })
        .collect()
}

pub fn simulate(cfg: RunConfig, a: SimulateArgs) -> Result<()> {
    let kinds = match &a.kinds {
        Some(s) => parse_kinds(s)?,
        None => SkillCategory::ALL.iter().map(|c| c.answer_kind()).collect(),
    };
    let params = SimulationParams {
        p_kind: a.p_kind,
        key_acc: a.key_acc,
        value_acc: a.value_acc,
        misrouted_key_acc: a.misrouted_key_acc,
        misrouted_value_acc: a.misrouted_value_acc,
        trials: a.trials,
        seed: cfg.seed,
    };
    let estimate = simulate_routing(&kinds, &params)?;
    println!("{estimate:?}");
    if let Some(out) = &a.out {
        write_json(
            out,
            &json!({
                "estimate": estimate,
                "expected": params.expected(&kinds),
                "params": params,
                "config": cfg.snapshot(),
            }),
        )?;
    }
    Ok(())
}
