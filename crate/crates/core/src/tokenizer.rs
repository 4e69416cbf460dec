//! Fixed vocabulary and tokenization for the toy decoder.
//!
//! Text is lower-cased and split into words (runs of ASCII letters and `_`),
//! single digits, and single punctuation characters. Digits, `-` and `.` map
//! to dedicated character tokens so numbers are always spelled one
//! character per token. Known words map to their own id; anything else is
//! hashed (FNV-1a) into one of [`HASH_BUCKETS`] shared ids.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::puzzle::SkillCategory;

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const SEP: TokenId = 3;
/// `OPT_A` … `OPT_E` are consecutive.
pub const OPT_A: TokenId = 4;
/// Eight category tokens in enumeration order.
pub const CAT_BASE: TokenId = OPT_A + 5;
pub const DIGIT_BASE: TokenId = CAT_BASE + 8;
pub const MINUS: TokenId = DIGIT_BASE + 10;
pub const DOT: TokenId = MINUS + 1;
const WORD_BASE: TokenId = DOT + 1;

pub const HASH_BUCKETS: usize = 32;

const WORDS: &[&str] = &[
    // prompt scaffolding
    "caption", "question", "answer", "options", "with", "a", "number", "which", "skill", "does",
    "this", "puzzle", "require", "categories",
    // question templates
    "how", "many", "shapes", "are", "there", "color", "appears", "only", "once", "what", "is",
    "the", "largest", "shape", "comes", "next", "in", "sequence", "at", "exit", "numbered", "to",
    "from", "top", "line", "end", "result", "of", "calculation", "image", "unit", "blocks", "long",
    "bar", "value", "x", "makes", "equation", "true",
    // caption vocabulary
    "shows", "no", "colors", "reading", "order", "gray", "crosses", "text", "reads", "colored",
    "and", "printed", "an", "empty", "objects", "arranged", "visible", "or", "numbers",
    "ends", "right", "edge", "near", "upper", "middle", "lower", "bottom",
    // palette
    "red", "green", "blue", "yellow", "purple",
    // category names
    "logic", "counting", "spatial_reasoning", "path_tracing", "pattern_finding", "arithmetic",
    "measurement", "algebra",
    // punctuation
    "+", "=", "?", ",", ":", "(", ")", "!", "'",
];

pub struct Vocab {
    words: HashMap<&'static str, TokenId>,
    size: usize,
}

impl Vocab {
    pub fn get() -> &'static Vocab {
        static VOCAB: OnceLock<Vocab> = OnceLock::new();
        VOCAB.get_or_init(|| {
            let words = WORDS.iter().enumerate().map(|(i, w)| (*w, WORD_BASE + i)).collect();
            Vocab {
                words,
                size: WORD_BASE + WORDS.len() + HASH_BUCKETS,
            }
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn bucket(&self, word: &str) -> TokenId {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in word.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        WORD_BASE + WORDS.len() + (h % HASH_BUCKETS as u64) as usize
    }

    pub fn word(&self, word: &str) -> TokenId {
        self.words.get(word).copied().unwrap_or_else(|| self.bucket(word))
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let lower = text.to_lowercase();
        let mut out = Vec::new();
        let mut chars = lower.char_indices().peekable();
        while let Some((start, ch)) = chars.next() {
            if ch.is_ascii_alphabetic() || ch == '_' {
                let mut end = start + ch.len_utf8();
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_ascii_alphabetic() || c == '_' {
                        end = i + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(self.word(&lower[start..end]));
            } else if let Some(d) = ch.to_digit(10) {
                out.push(DIGIT_BASE + d as usize);
            } else if ch == '-' {
                out.push(MINUS);
            } else if ch == '.' {
                out.push(DOT);
            } else if !ch.is_whitespace() {
                out.push(self.word(&lower[start..start + ch.len_utf8()]));
            }
        }
        out
    }
}

pub fn option_token(index: usize) -> TokenId {
    assert!(index < 5, "option index out of range");
    OPT_A + index
}

pub fn category_token(category: SkillCategory) -> TokenId {
    CAT_BASE + category.index()
}

pub fn digit_token(d: u32) -> TokenId {
    DIGIT_BASE + d as usize
}

/// Sub-vocabulary the value model decodes over: digits, minus, dot, EOS.
pub fn numeric_tokens() -> Vec<TokenId> {
    let mut v: Vec<TokenId> = (0..10).map(digit_token).collect();
    v.extend([MINUS, DOT, EOS]);
    v
}

/// Character for a numeric token, `None` for EOS or non-numeric tokens.
pub fn numeric_char(token: TokenId) -> Option<char> {
    match token {
        t if (DIGIT_BASE..DIGIT_BASE + 10).contains(&t) => char::from_digit((t - DIGIT_BASE) as u32, 10),
        MINUS => Some('-'),
        DOT => Some('.'),
        _ => None,
    }
}

/// Tokens spelling a numeric answer followed by EOS, or `None` if `answer`
/// contains anything but digits, `-` and `.`.
pub fn encode_numeric_answer(answer: &str) -> Option<Vec<TokenId>> {
    let mut out = Vec::new();
    for ch in answer.trim().chars() {
        out.push(match ch {
            '0'..='9' => digit_token(ch.to_digit(10)?),
            '-' => MINUS,
            '.' => DOT,
            _ => return None,
        });
    }
    out.push(EOS);
    Some(out)
}
