//! Distant supervision: dictionary matching over raw sentences and
//! construction of partial annotations (allowed-tag lattices), optionally
//! restricted by a high-quality-phrase list.

use std::collections::HashMap;

use thiserror::Error;

pub use crate::corpus::AllowedLattice;
use crate::corpus::{LabelSet, Prefix, Scheme, Sentence, Span};

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("line {line}: malformed line {content:?} (expected term<TAB>type)")]
    MalformedLine { line: usize, content: String },
    #[error("line {line}: empty term")]
    EmptyTerm { line: usize },
}

/// Map from normalized token sequence to entity type.
///
/// Duplicate surface forms are resolved by first occurrence; the number of
/// dropped duplicates is kept for diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    entries: HashMap<Vec<String>, String>,
    max_len: usize,
    case_fold: bool,
    duplicate_count: usize,
}

impl Dictionary {
    pub fn new(case_fold: bool) -> Self {
        Dictionary {
            case_fold,
            ..Default::default()
        }
    }

    fn normalize(&self, token: &str) -> String {
        if self.case_fold {
            token.to_lowercase()
        } else {
            token.to_string()
        }
    }

    pub fn insert(&mut self, term_tokens: &[&str], entity_type: &str) {
        assert!(!term_tokens.is_empty(), "dictionary term must be non-empty");
        let key: Vec<String> = term_tokens.iter().map(|t| self.normalize(t)).collect();
        if self.entries.contains_key(&key) {
            self.duplicate_count += 1;
            return;
        }
        self.max_len = self.max_len.max(key.len());
        self.entries.insert(key, entity_type.to_string());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn duplicate_count(&self) -> usize {
        self.duplicate_count
    }

    /// Sorted, de-duplicated entity types appearing in the dictionary.
    pub fn entity_types(&self) -> Vec<String> {
        let mut types: Vec<String> = self.entries.values().cloned().collect();
        types.sort();
        types.dedup();
        types
    }

    fn lookup(&self, key: &[String]) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }
}

/// Loads a `term<TAB>type` dictionary, term tokens space-separated.
pub fn load_dictionary(text: &str, case_fold: bool) -> Result<Dictionary, LexiconError> {
    let mut dict = Dictionary::new(case_fold);
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let (term, entity_type) =
            line.split_once('\t')
                .ok_or_else(|| LexiconError::MalformedLine {
                    line: lineno,
                    content: line.to_string(),
                })?;
        let tokens: Vec<&str> = term.split_whitespace().collect();
        if tokens.is_empty() || entity_type.is_empty() {
            return Err(LexiconError::EmptyTerm { line: lineno });
        }
        dict.insert(&tokens, entity_type);
    }
    Ok(dict)
}

/// Set of normalized token sequences marking candidate entity spans.
#[derive(Debug, Clone, Default)]
pub struct PhraseList {
    phrases: HashMap<Vec<String>, ()>,
    max_len: usize,
    case_fold: bool,
}

impl PhraseList {
    pub fn new(case_fold: bool) -> Self {
        PhraseList {
            case_fold,
            ..Default::default()
        }
    }

    fn normalize(&self, token: &str) -> String {
        if self.case_fold {
            token.to_lowercase()
        } else {
            token.to_string()
        }
    }

    pub fn insert(&mut self, tokens: &[&str]) {
        assert!(!tokens.is_empty(), "phrase must be non-empty");
        let key: Vec<String> = tokens.iter().map(|t| self.normalize(t)).collect();
        self.max_len = self.max_len.max(key.len());
        self.phrases.insert(key, ());
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    fn contains(&self, key: &[String]) -> bool {
        self.phrases.contains_key(key)
    }
}

/// Loads a phrase list, one space-separated phrase per line.
pub fn load_phrases(text: &str, case_fold: bool) -> PhraseList {
    let mut list = PhraseList::new(case_fold);
    for line in text.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if !tokens.is_empty() {
            list.insert(&tokens);
        }
    }
    list
}

/// Greedy left-to-right longest-match of dictionary terms in a sentence.
///
/// At each position the longest matching term wins and matching resumes
/// after it, so the result is non-overlapping and deterministic.
pub fn match_spans(s: &Sentence, d: &Dictionary) -> Vec<Span> {
    let normalized: Vec<String> = s.tokens.iter().map(|t| d.normalize(t)).collect();
    let mut spans = Vec::new();
    let n = normalized.len();
    let mut i = 0;
    while i < n {
        let mut matched = None;
        let upper = d.max_len.min(n - i);
        for len in (1..=upper).rev() {
            if let Some(t) = d.lookup(&normalized[i..i + len]) {
                matched = Some((len, t.to_string()));
                break;
            }
        }
        if let Some((len, entity_type)) = matched {
            spans.push(Span::new(i, i + len, entity_type));
            i += len;
        } else {
            i += 1;
        }
    }
    spans
}

/// Greedy longest-match against the phrase list, restricted to positions
/// not already covered by dictionary spans.
fn match_phrase_spans(s: &Sentence, p: &PhraseList, covered: &[bool]) -> Vec<(usize, usize)> {
    let normalized: Vec<String> = s.tokens.iter().map(|t| p.normalize(t)).collect();
    let mut out = Vec::new();
    let n = normalized.len();
    let mut i = 0;
    while i < n {
        if covered[i] {
            i += 1;
            continue;
        }
        let mut matched_len = None;
        let upper = p.max_len.min(n - i);
        for len in (1..=upper).rev() {
            if covered[i..i + len].iter().any(|&c| c) {
                continue;
            }
            if p.contains(&normalized[i..i + len]) {
                matched_len = Some(len);
                break;
            }
        }
        if let Some(len) = matched_len {
            out.push((i, i + len));
            i += len;
        } else {
            i += 1;
        }
    }
    out
}

/// Fills the scheme tags for a matched span into singleton lattice masks.
fn commit_span(masks: &mut [u64], start: usize, end: usize, type_idx: usize, ls: &LabelSet) {
    let len = end - start;
    let set = |masks: &mut [u64], pos: usize, prefix: Prefix| {
        masks[pos] = 1u64 << ls.compose(prefix, type_idx);
    };
    match ls.scheme() {
        Scheme::Bio => {
            set(masks, start, Prefix::Begin);
            for p in start + 1..end {
                set(masks, p, Prefix::Inside);
            }
        }
        Scheme::Bioes => {
            if len == 1 {
                set(masks, start, Prefix::Single);
            } else {
                set(masks, start, Prefix::Begin);
                for p in start + 1..end - 1 {
                    set(masks, p, Prefix::Inside);
                }
                set(masks, end - 1, Prefix::End);
            }
        }
    }
}

/// Distant annotation of a raw sentence as an allowed-tag lattice.
///
/// Dictionary-matched spans commit to their singleton scheme tags. Without
/// a phrase list every other position keeps the full tag set; with one,
/// only phrase-matched spans keep the full set and the rest commit to `O`.
pub fn distant_annotate(
    s: &Sentence,
    d: &Dictionary,
    ls: &LabelSet,
    phrases: Option<&PhraseList>,
) -> AllowedLattice {
    let n = s.len();
    let k = ls.len();
    let full = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let default_mask = match phrases {
        None => full,
        Some(_) => 1u64, // O only; phrase spans widen below
    };
    let mut masks = vec![default_mask; n];
    let mut covered = vec![false; n];
    for span in match_spans(s, d) {
        // Entries without a known type are skipped rather than guessed.
        if let Some(type_idx) = ls.type_index(&span.entity_type) {
            commit_span(&mut masks, span.start, span.end, type_idx, ls);
            for p in span.start..span.end {
                covered[p] = true;
            }
        }
    }
    if let Some(p) = phrases {
        for (start, end) in match_phrase_spans(s, p, &covered) {
            for pos in start..end {
                masks[pos] = full;
            }
        }
    }
    AllowedLattice::new(masks, k)
}
