//! Text ingestion, greedy WordPiece tokenization, stratified few-shot
//! subsampling and a synthetic keyword classification task.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::read_string;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const SPECIAL_TOKENS: [&str; 4] = [PAD, UNK, CLS, SEP];

/// Words longer than this many characters map to `[UNK]`.
const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub num_classes: usize,
    pub split: String,
}

/// A tokenized example: ids and mask have the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub examples: Vec<EncodedExample>,
    pub num_classes: usize,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Seeded stratified subset; see [`stratified_indices`].
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<Self> {
        let idx = stratified_indices(&self.labels(), self.num_classes, fraction, seed)?;
        Ok(Self {
            examples: idx.into_iter().map(|i| self.examples[i].clone()).collect(),
            num_classes: self.num_classes,
        })
    }
}

impl Dataset {
    pub fn new(examples: Vec<Example>, num_classes: usize, split: impl Into<String>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::config("dataset", "no examples"));
        }
        if let Some(e) = examples.iter().find(|e| e.label >= num_classes) {
            return Err(Error::config(
                "label",
                format!("{} out of range for {num_classes} classes", e.label),
            ));
        }
        Ok(Self {
            examples,
            num_classes,
            split: split.into(),
        })
    }

    /// Parses `text<TAB>label` lines. The label follows the last tab.
    pub fn load_tsv(path: &Path, num_classes: usize, split: &str) -> Result<Self> {
        let content = read_string(path)?;
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut examples = Vec::new();
        for (i, raw) in content.lines().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            let lineno = i + 1;
            let (text, label) = line
                .rsplit_once('\t')
                .ok_or_else(|| err(lineno, "expected `text<TAB>label`".into()))?;
            let label: usize = label
                .trim()
                .parse()
                .map_err(|_| err(lineno, format!("label `{label}` is not a non-negative integer")))?;
            if label >= num_classes {
                return Err(err(lineno, format!("label {label} out of range for {num_classes} classes")));
            }
            if text.trim().is_empty() {
                return Err(err(lineno, "empty text".into()));
            }
            examples.push(Example {
                text: text.to_string(),
                label,
            });
        }
        if examples.is_empty() {
            return Err(err(0, "file contains no examples".into()));
        }
        Self::new(examples, num_classes, split)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    /// Seeded, label-stratified subset of `floor(fraction·N)` examples.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<Self> {
        let idx = stratified_indices(&self.labels(), self.num_classes, fraction, seed)?;
        Ok(Self {
            examples: idx.into_iter().map(|i| self.examples[i].clone()).collect(),
            num_classes: self.num_classes,
            split: self.split.clone(),
        })
    }

    pub fn encode(&self, vocab: &Vocab, max_len: usize) -> EncodedDataset {
        let examples = self
            .examples
            .iter()
            .map(|e| {
                let (ids, mask) = vocab.tokenize(&e.text, max_len);
                EncodedExample {
                    ids,
                    mask,
                    label: e.label,
                }
            })
            .collect();
        EncodedDataset {
            examples,
            num_classes: self.num_classes,
        }
    }
}

/// Indices of a stratified subsample.
///
/// The total is `floor(fraction·N)`. Each class first receives
/// `floor(fraction·N_c)`; the remaining slots go to the classes with the
/// largest fractional parts (lower class index wins ties). Within a class
/// the members are drawn by a seeded shuffle, and the final selection is
/// shuffled once more.
pub fn stratified_indices(labels: &[usize], num_classes: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config("fraction", format!("must be in (0, 1], got {fraction}")));
    }
    // Guard against 0.29·100 = 28.999… style rounding.
    let floor = |x: f64| (x + 1e-9).floor() as usize;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::config("label", format!("{l} out of range for {num_classes} classes")));
        }
        members[l].push(i);
    }
    let target = floor(fraction * labels.len() as f64);
    if target == 0 {
        return Err(Error::config("fraction", "subsample would be empty"));
    }
    let mut quota: Vec<usize> = members.iter().map(|m| floor(fraction * m.len() as f64)).collect();
    let mut order: Vec<usize> = (0..num_classes).collect();
    let remainder = |c: usize| fraction * members[c].len() as f64 - quota[c] as f64;
    order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)).then(a.cmp(&b)));
    let mut missing = target - quota.iter().sum::<usize>();
    for &c in order.iter().cycle().take(num_classes * 2) {
        if missing == 0 {
            break;
        }
        if quota[c] < members[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(target);
    for (m, &q) in members.iter_mut().zip(&quota) {
        m.shuffle(&mut rng);
        chosen.extend_from_slice(&m[..q]);
    }
    chosen.shuffle(&mut rng);
    Ok(chosen)
}

/// Token vocabulary; the line number of a token in the vocab file is its id.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(Error::config(
                    "vocab",
                    format!("line {} must be {special}", i + 1),
                ));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::config("vocab", format!("line {} is empty", i + 1)));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::config("vocab", format!("duplicate token `{t}` on line {}", i + 1)));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = read_string(path)?;
        let tokens = content
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
            .collect();
        Self::from_tokens(tokens).map_err(|e| match e {
            Error::Config { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message,
            },
            other => other,
        })
    }

    /// Special tokens followed by every distinct pre-token of `texts`,
    /// sorted.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(pre_tokenize).collect();
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().filter(|w| !SPECIAL_TOKENS.contains(&w.as_str())))
            .collect();
        Self::from_tokens(tokens).expect("specials first, tokens unique")
    }

    /// One token per line, newline-terminated.
    pub fn to_file_string(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Greedy longest-match-first WordPiece. Continuation pieces carry a
    /// `##` prefix; a word that cannot be covered becomes `[UNK]`.
    pub fn wordpiece(&self, word: &str) -> Vec<u32> {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            return vec![UNK_ID];
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(id) = self.id(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => pieces.push(id),
                None => return vec![UNK_ID],
            }
            start = end;
        }
        pieces
    }

    /// `[CLS] pieces… [SEP]`, truncated to `max_len` (the last slot stays
    /// `[SEP]`) and right-padded with `[PAD]`. The mask marks real tokens.
    ///
    /// Panics if `max_len < 2`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> (Vec<u32>, Vec<bool>) {
        assert!(max_len >= 2, "max_len must leave room for [CLS] and [SEP]");
        let mut ids = Vec::with_capacity(max_len);
        ids.push(CLS_ID);
        for word in pre_tokenize(text) {
            if ids.len() >= max_len - 1 {
                break;
            }
            ids.extend(self.wordpiece(&word));
        }
        ids.truncate(max_len - 1);
        ids.push(SEP_ID);
        let real = ids.len();
        ids.resize(max_len, PAD_ID);
        let mask = (0..max_len).map(|i| i < real).collect();
        (ids, mask)
    }
}

/// Whitespace split with ASCII punctuation as separate tokens. No case
/// folding.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut current = String::new();
        for c in chunk.chars() {
            if c.is_ascii_punctuation() {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

pub const SYNTH_MAX_CLASSES: usize = 14;
const SYNTH_NOISE_WORDS: usize = 64;
const SYNTH_KEYWORDS_PER_CLASS: usize = 4;
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn syllables(mut n: usize, count: usize) -> String {
    let mut s = String::with_capacity(2 * count);
    for _ in 0..count {
        s.push(CONSONANTS[n % CONSONANTS.len()] as char);
        n /= CONSONANTS.len();
        s.push(VOWELS[n % VOWELS.len()] as char);
        n /= VOWELS.len();
    }
    s
}

/// Class-neutral filler words (two syllables).
pub fn synth_noise_words() -> Vec<String> {
    (0..SYNTH_NOISE_WORDS).map(|j| syllables(j * 37 + 11, 2)).collect()
}

/// Keywords of one class (three syllables, so never a noise word). The
/// sets of different classes are disjoint.
pub fn synth_keywords(class: usize) -> Vec<String> {
    (0..SYNTH_KEYWORDS_PER_CLASS)
        .map(|k| syllables((class * SYNTH_KEYWORDS_PER_CLASS + k) * 101 + 7, 3))
        .collect()
}

/// Vocabulary covering every word the generator can emit for
/// `num_classes` classes.
pub fn synth_vocab(num_classes: usize) -> Vocab {
    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(synth_noise_words());
    for c in 0..num_classes {
        tokens.extend(synth_keywords(c));
    }
    Vocab::from_tokens(tokens).expect("generated words are unique")
}

/// Balanced synthetic corpus: each text is 4–10 noise words with one or
/// two keywords of its class inserted at random positions. Class `c`
/// receives `N / K` examples, the first `N mod K` classes one more.
pub fn synth_generate(num_examples: usize, num_classes: usize, seed: u64) -> Result<Dataset> {
    if !(2..=SYNTH_MAX_CLASSES).contains(&num_classes) {
        return Err(Error::config(
            "num_classes",
            format!("synthetic task supports 2..={SYNTH_MAX_CLASSES} classes, got {num_classes}"),
        ));
    }
    if num_examples == 0 {
        return Err(Error::config("num_examples", "must be positive"));
    }
    let noise = synth_noise_words();
    let keywords: Vec<Vec<String>> = (0..num_classes).map(synth_keywords).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples: Vec<Example> = (0..num_examples)
        .map(|i| {
            let label = i % num_classes;
            let mut words: Vec<&str> = (0..rng.random_range(4..=10))
                .map(|_| noise[rng.random_range(0..noise.len())].as_str())
                .collect();
            for _ in 0..rng.random_range(1..=2) {
                let kw = &keywords[label][rng.random_range(0..SYNTH_KEYWORDS_PER_CLASS)];
                let at = rng.random_range(0..=words.len());
                words.insert(at, kw);
            }
            Example {
                text: words.join(" "),
                label,
            }
        })
        .collect();
    examples.shuffle(&mut rng);
    Dataset::new(examples, num_classes, "synthetic")
}
