//! Independent scalar-loop forward pass of the whole assembly, compared with
//! the tape implementation, plus a greedy value-decoding replay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smartvl::caption::backend_from_name;
use smartvl::dataset::generate_synthetic_puzzles;
use smartvl::decoder::{DecoderConfig, ModelAssembly, ModelConfig, ModelInput, Role};
use smartvl::nn::{Graph, ParamStore};
use smartvl::puzzle::PuzzleInstance;
use smartvl::qformer::QFormerConfig;
use smartvl::tokenizer::{numeric_char, numeric_tokens, option_token, TokenId, Vocab, EOS};
use smartvl::trainer::{lora_wrap, LoraConfig};
use smartvl::vision::{region_features, VisionConfig};

type M = Vec<Vec<f64>>;

fn zeros(r: usize, c: usize) -> M {
    vec![vec![0.0; c]; r]
}

fn raw(store: &ParamStore, name: &str) -> M {
    store.value(name).unwrap().rows().into_iter().map(|r| r.to_vec()).collect()
}

/// W + (alpha/r)·B·A when the weight carries an adapter.
fn weight(store: &ParamStore, name: &str) -> M {
    let mut w = raw(store, name);
    if let Some(ad) = store.adapter(name) {
        let b = raw(store, &format!("{name}.lora_b"));
        let a = raw(store, &format!("{name}.lora_a"));
        let s = ad.alpha / ad.rank as f64;
        for i in 0..w.len() {
            for j in 0..w[0].len() {
                for k in 0..ad.rank {
                    w[i][j] += s * b[i][k] * a[k][j];
                }
            }
        }
    }
    w
}

fn matmul(a: &M, b: &M) -> M {
    let mut out = zeros(a.len(), b[0].len());
    for i in 0..a.len() {
        for j in 0..b[0].len() {
            let mut s = 0.0;
            for k in 0..b.len() {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn add(a: &M, b: &M) -> M {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

fn add_bias(a: &M, bias: &M) -> M {
    a.iter().map(|r| r.iter().zip(&bias[0]).map(|(x, b)| x + b).collect()).collect()
}

fn linear(store: &ParamStore, x: &M, w: &str, b: &str) -> M {
    add_bias(&matmul(x, &weight(store, w)), &raw(store, b))
}

fn layer_norm(store: &ParamStore, prefix: &str, x: &M) -> M {
    let g = raw(store, &format!("{prefix}.g"));
    let b = raw(store, &format!("{prefix}.b"));
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + 1e-5).sqrt();
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) * inv * g[0][j] + b[0][j])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn attention(store: &ParamStore, p: &str, xq: &M, xkv: &M, heads: usize, causal: bool) -> M {
    let q = linear(store, xq, &format!("{p}.wq"), &format!("{p}.bq"));
    let k = linear(store, xkv, &format!("{p}.wk"), &format!("{p}.bk"));
    let v = linear(store, xkv, &format!("{p}.wv"), &format!("{p}.bv"));
    let d = q[0].len();
    let dh = d / heads;
    let offset = k.len().saturating_sub(q.len());
    let mut ctx = zeros(q.len(), d);
    for h in 0..heads {
        for i in 0..q.len() {
            let visible = if causal { (i + offset + 1).min(k.len()) } else { k.len() };
            let scores: Vec<f64> = (0..visible)
                .map(|j| (0..dh).map(|c| q[i][h * dh + c] * k[j][h * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..dh {
                ctx[i][h * dh + c] = (0..visible).map(|j| e[j] / z * v[j][h * dh + c]).sum();
            }
        }
    }
    linear(store, &ctx, &format!("{p}.wo"), &format!("{p}.bo"))
}

fn ffn(store: &ParamStore, p: &str, x: &M) -> M {
    let h = linear(store, x, &format!("{p}.w1"), &format!("{p}.b1"));
    let h: M = h.iter().map(|r| r.iter().map(|v| gelu(*v)).collect()).collect();
    linear(store, &h, &format!("{p}.w2"), &format!("{p}.b2"))
}

/// Full vocabulary logits for every position of `tokens` after the queries.
fn reference_logits(m: &ModelAssembly, input: &ModelInput, tokens: &[TokenId]) -> M {
    let s = &m.params;
    let cfg = &m.config;

    // Patch stream: row-major patches, (row, col, channel) flattening.
    let p = cfg.vision.patch_size;
    let per = cfg.vision.image_size / p;
    let mut patches = Vec::new();
    for pr in 0..per {
        for pc in 0..per {
            let mut v = Vec::new();
            for r in 0..p {
                for c in 0..p {
                    for ch in input.image.get_pixel(pc * p + c, pr * p + r).0 {
                        v.push(ch as f64 / 255.0);
                    }
                }
            }
            patches.push(v);
        }
    }
    let patch_tok = add(&linear(s, &patches, "vision.patch.w", "vision.patch.b"), &raw(s, "vision.patch.pos"));

    // Segment stream: real regions then the null embedding.
    let feats: M = region_features(input.image, &cfg.vision)
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    let mut seg = if feats.is_empty() { Vec::new() } else { linear(s, &feats, "vision.seg.w", "vision.seg.b") };
    let null = raw(s, "vision.seg.null");
    while seg.len() < cfg.vision.n_segments {
        seg.push(null[0].clone());
    }
    let fused: M = patch_tok.into_iter().chain(seg).collect();

    // Bridge.
    let instr_table = raw(s, "qformer.instr_embed");
    let instr: M = Vocab::get()
        .encode(input.question)
        .iter()
        .map(|t| instr_table[*t].clone())
        .collect();
    let mut q = raw(s, "qformer.query");
    for l in 0..cfg.qformer.n_layers {
        let pre = format!("qformer.l{l}");
        let kv_in: M = q.iter().chain(&instr).cloned().collect();
        let kv = layer_norm(s, &format!("{pre}.ln_self"), &kv_in);
        let qn: M = kv[..q.len()].to_vec();
        q = add(&q, &attention(s, &format!("{pre}.self"), &qn, &kv, cfg.qformer.n_heads, false));
        let qn = layer_norm(s, &format!("{pre}.ln_cross"), &q);
        q = add(&q, &attention(s, &format!("{pre}.cross"), &qn, &fused, cfg.qformer.n_heads, false));
        let qn = layer_norm(s, &format!("{pre}.ln_ffn"), &q);
        q = add(&q, &ffn(s, &format!("{pre}.ffn"), &qn));
    }
    let queries = linear(s, &q, "qformer.proj.w", "qformer.proj.b");

    // Decoder.
    let tok = raw(s, "decoder.tok_embed");
    let pos = raw(s, "decoder.pos_embed");
    let mut x: M = queries
        .into_iter()
        .chain(tokens.iter().map(|t| tok[*t].clone()))
        .enumerate()
        .map(|(i, r)| r.iter().zip(&pos[i]).map(|(a, b)| a + b).collect())
        .collect();
    for l in 0..cfg.decoder.n_layers {
        let pre = format!("decoder.l{l}");
        let h = layer_norm(s, &format!("{pre}.ln_attn"), &x);
        x = add(&x, &attention(s, &format!("{pre}.attn"), &h, &h, cfg.decoder.n_heads, true));
        let h = layer_norm(s, &format!("{pre}.ln_ffn"), &x);
        x = add(&x, &ffn(s, &format!("{pre}.ffn"), &h));
    }
    let h = layer_norm(s, "decoder.ln_out", &x);
    let n_q = cfg.qformer.n_queries;
    linear(s, &h[n_q..].to_vec(), "decoder.out.w", "decoder.out.b")
}

fn small_config() -> ModelConfig {
    ModelConfig {
        vision: VisionConfig {
            d: 12,
            n_segments: 5,
            ..VisionConfig::default()
        },
        qformer: QFormerConfig {
            n_queries: 3,
            d_q: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            d_dec: 12,
        },
        decoder: DecoderConfig {
            n_layers: 2,
            n_heads: 3,
            d_ff: 20,
            max_positions: 160,
            max_value_len: 5,
        },
    }
}

/// Random assembly with live adapters so the merged-weight path counts.
fn random_assembly(role: Role, seed: u64) -> ModelAssembly {
    let mut m = ModelAssembly::new(small_config(), role, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lcfg = LoraConfig {
        targets: vec!["*.wq".into(), "*.wv".into(), "decoder.out.w".into()],
        ..LoraConfig::default()
    };
    lora_wrap(&mut m.params, &lcfg, &mut rng).unwrap();
    for (name, p) in m.params.iter_mut() {
        if name.ends_with(".lora_b") || name.ends_with(".b") || name.ends_with(".g") {
            p.value.mapv_inplace(|v| v + rng.random_range(-0.3..0.3));
        }
    }
    m
}

fn puzzles_with_captions(seed: u64) -> Vec<(PuzzleInstance, String)> {
    let backend = backend_from_name("mock", None).unwrap();
    generate_synthetic_puzzles(2, 32, seed)
        .unwrap()
        .into_iter()
        .map(|p| {
            let c = backend.generate_text(&p.image, "").unwrap();
            (p, c)
        })
        .collect()
}

#[test]
fn key_logits_match_scalar_reference() {
    let m = random_assembly(Role::KeyModel, 31);
    for (p, c) in puzzles_with_captions(31) {
        let input = ModelInput::new(&p, &c);
        let tokens = m.prompt(&input);
        let reference = reference_logits(&m, &input, &tokens);
        let last = &reference[tokens.len() - 1];
        let expect: Vec<f64> = (0..5).map(|i| last[option_token(i)]).collect();

        let mut g = Graph::new(&m.params);
        let node = m.key_logits(&mut g, &input).unwrap();
        let got = g.value(node);
        for i in 0..5 {
            assert!((got[[0, i]] - expect[i]).abs() < 1e-10, "{}: {} vs {}", p.id, got[[0, i]], expect[i]);
        }
        let best = (0..5).fold(0, |b, i| if expect[i] > expect[b] { i } else { b });
        assert_eq!(m.decode_key(&input).unwrap().0, best, "{}", p.id);
    }
}

#[test]
fn category_logits_match_scalar_reference() {
    let m = random_assembly(Role::KeyModel, 8);
    let instruction = "Which skill does this puzzle require?";
    for (p, c) in puzzles_with_captions(8).into_iter().step_by(3) {
        let input = ModelInput::new(&p, &c);
        let tokens = m.classification_prompt(&input, instruction);
        let reference = reference_logits(&m, &input, &tokens);
        let scores = m.category_scores(&input, instruction).unwrap();
        let last = &reference[tokens.len() - 1];
        for (i, c) in smartvl::puzzle::SkillCategory::ALL.iter().enumerate() {
            let want = last[smartvl::tokenizer::category_token(*c)];
            assert!((scores[i] - want).abs() < 1e-10);
        }
    }
}

fn full_match(s: &str) -> bool {
    let body = s.strip_prefix('-').unwrap_or(s);
    match body.split_once('.') {
        None => body.chars().all(|c| c.is_ascii_digit()),
        Some((i, f)) => i.chars().all(|c| c.is_ascii_digit()) && !f.is_empty() && f.chars().all(|c| c.is_ascii_digit()),
    }
}

/// `s` can still be extended to a full match.
fn viable_prefix(s: &str) -> bool {
    full_match(s) || s.ends_with('.') && full_match(&format!("{s}0"))
}

#[test]
fn value_decode_equals_oracle_replay() {
    let numeric = numeric_tokens();
    let mut nonempty = 0;
    for seed in 0..6 {
        let m = random_assembly(Role::ValueModel, 100 + seed);
        for (p, c) in puzzles_with_captions(seed).into_iter().step_by(4) {
            let input = ModelInput::new(&p, &c);
            let prompt = m.prompt(&input);
            let mut seq = prompt.clone();
            let mut out = String::new();
            for _ in 0..m.config.decoder.max_value_len {
                let reference = reference_logits(&m, &input, &seq);
                let row = &reference[seq.len() - 1];
                let mut best: Option<(TokenId, f64)> = None;
                for &t in &numeric {
                    let ok = match numeric_char(t) {
                        Some(ch) => viable_prefix(&format!("{out}{ch}")),
                        None => t == EOS && full_match(&out),
                    };
                    if ok && best.is_none_or(|(_, b)| row[t] > b) {
                        best = Some((t, row[t]));
                    }
                }
                let (t, _) = best.expect("some token is always allowed");
                if t == EOS {
                    break;
                }
                out.push(numeric_char(t).unwrap());
                seq.push(t);
            }
            if out.ends_with('.') {
                out.pop();
            }
            let got = m.decode_value(&input, m.config.decoder.max_value_len).unwrap();
            assert_eq!(got, out, "{} seed {seed}", p.id);
            assert!(got.is_empty() || full_match(&got));
            nonempty += usize::from(!got.is_empty());
        }
    }
    assert!(nonempty > 0);
}
