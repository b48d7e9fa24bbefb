//! Product text cleansing and vocabulary construction.
//!
//! A product's name, legal name and ingredients are merged into one
//! description which is then reduced to a list of distinct lowercase words:
//!
//! 1. brackets become spaces
//! 2. lowercase
//! 3. digit runs that do not touch a letter are deleted (`40%` loses `40`,
//!    `e420ii` is kept whole)
//! 4. whitespace-delimited tokens equal to a stopword are dropped
//! 5. punctuation, symbols and control characters become spaces
//! 6. whitespace is collapsed and the text split into tokens
//! 7. stopwords are dropped again (step 5 can expose new ones)
//! 8. duplicates are removed keeping the first occurrence, empties dropped

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::catalog::Product;
use crate::error::{Error, Result};

static PUNCTUATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{P}\p{S}\p{C}]").expect("static regex"));

const SPANISH: &str = include_str!("../data/stopwords_es.txt");
const ENGLISH: &str = include_str!("../data/stopwords_en.txt");

/// Lowercase words to discard during preprocessing.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StopwordSet {
    words: BTreeSet<String>,
}

impl StopwordSet {
    /// Parses a stopword file: one word per line, `#` starts a comment.
    /// Entries are trimmed and lowercased; blank lines are skipped. A line
    /// holding more than one word is rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut words = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.split_whitespace().nth(1).is_some() {
                return Err(Error::Parse(format!(
                    "stopword file line {}: expected a single word, found {line:?}",
                    i + 1
                )));
            }
            words.insert(line.to_lowercase());
        }
        Ok(Self { words })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn spanish() -> Self {
        Self::parse(SPANISH).expect("bundled list parses")
    }

    pub fn english() -> Self {
        Self::parse(ENGLISH).expect("bundled list parses")
    }

    /// The bundled Spanish and English lists combined.
    pub fn bundled() -> Self {
        let mut set = Self::spanish();
        set.words.extend(Self::english().words);
        set
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// Hex SHA-256 over the sorted entries, newline-terminated.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    fn folded(&self) -> Self {
        Self {
            words: self.words.iter().map(|w| fold_accents(w)).collect(),
        }
    }
}

/// Distinct cleaned words of one product, in order of first occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WordList(Vec<String>);

impl WordList {
    pub fn words(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl<S: Into<String>> FromIterator<S> for WordList {
    /// Collects words, dropping empties and later duplicates.
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for w in iter {
            let w = w.into();
            if !w.is_empty() && seen.insert(w.clone()) {
                out.push(w);
            }
        }
        WordList(out)
    }
}

/// Joins the non-blank text fields with single spaces: name, legal name,
/// ingredients.
pub fn build_description(p: &Product) -> String {
    [&p.name, &p.legal_name, &p.ingredients]
        .iter()
        .map(|f| f.trim())
        .filter(|f| !f.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Cleansing pipeline with its stopword list and options bound.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    stopwords: StopwordSet,
    fold_accents: bool,
}

impl Preprocessor {
    pub fn new(stopwords: &StopwordSet, fold_accents: bool) -> Self {
        let stopwords = if fold_accents {
            stopwords.folded()
        } else {
            stopwords.clone()
        };
        Self {
            stopwords,
            fold_accents,
        }
    }

    pub fn process(&self, text: &str) -> WordList {
        let bracketless: String = text
            .chars()
            .map(|c| if is_bracket(c) { ' ' } else { c })
            .collect();
        let mut lower = bracketless.to_lowercase();
        if self.fold_accents {
            lower = fold_accents(&lower);
        }
        let digitless = remove_standalone_digits(&lower);
        let kept: Vec<&str> = digitless
            .split_whitespace()
            .filter(|t| !self.stopwords.contains(t))
            .collect();
        let joined = kept.join(" ");
        let depunct = PUNCTUATION.replace_all(&joined, " ");
        depunct
            .split_whitespace()
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }

    pub fn process_product(&self, p: &Product) -> WordList {
        self.process(&build_description(p))
    }
}

/// Runs the cleansing pipeline without accent folding.
pub fn preprocess(text: &str, sw: &StopwordSet) -> WordList {
    Preprocessor::new(sw, false).process(text)
}

fn is_bracket(c: char) -> bool {
    matches!(c, '(' | ')' | '[' | ']' | '{' | '}')
}

/// Strips combining marks after canonical decomposition (`é` → `e`).
pub fn fold_accents(s: &str) -> String {
    s.nfd()
        .filter(|c| !unicode_normalization::char::is_combining_mark(*c))
        .nfc()
        .collect()
}

/// Deletes every maximal run of numeric characters that has no alphabetic
/// character immediately before or after it.
fn remove_standalone_digits(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_numeric() {
            let start = i;
            while i < chars.len() && chars[i].is_numeric() {
                i += 1;
            }
            let before = start > 0 && chars[start - 1].is_alphabetic();
            let after = i < chars.len() && chars[i].is_alphabetic();
            if before || after {
                out.extend(&chars[start..i]);
            }
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Distinct words across the training products, in order of first occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Sorted column ids of the in-vocabulary words of `wl`.
    pub fn columns(&self, wl: &WordList) -> Vec<usize> {
        let mut cols: Vec<usize> = wl.iter().filter_map(|w| self.index(w)).collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() {
                return Err(Error::Parse("empty vocabulary word".into()));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Parse(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Self { words, index })
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

pub fn build_vocabulary<'a, I>(lists: I) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a WordList>,
{
    let mut words = Vec::new();
    let mut index = HashMap::new();
    for wl in lists {
        for w in wl.iter() {
            if !index.contains_key(w) {
                index.insert(w.to_string(), words.len());
                words.push(w.to_string());
            }
        }
    }
    if words.is_empty() {
        return Err(Error::Empty("vocabulary"));
    }
    Ok(Vocabulary { words, index })
}
