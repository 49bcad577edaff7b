//! Text formats owned by the command line: raw token files and the
//! extended CoNLL format with per-token allowed-tag sets.

use std::fmt;

use wsner_core::corpus::{
    AllowedLattice, Annotation, Dataset, LabelSet, Provenance, Record, Sentence,
};

#[derive(Debug)]
pub enum FormatError {
    MalformedLine { line: usize, content: String },
    EmptyToken { line: usize },
    UnknownTag { line: usize, tag: String },
    EmptyTagSet { line: usize },
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::MalformedLine { line, content } => {
                write!(f, "line {line}: expected `token<TAB>tags`, got {content:?}")
            }
            FormatError::EmptyToken { line } => write!(f, "line {line}: empty token"),
            FormatError::UnknownTag { line, tag } => {
                write!(f, "line {line}: unknown tag {tag:?}")
            }
            FormatError::EmptyTagSet { line } => write!(f, "line {line}: empty tag set"),
        }
    }
}

impl std::error::Error for FormatError {}

/// Parses a raw token file: one token per line, blank line between
/// sentences. Sentences are numbered in file order.
pub fn parse_raw(text: &str) -> Result<Vec<Sentence>, FormatError> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            if !tokens.is_empty() {
                sentences.push(Sentence::new(sentences.len(), std::mem::take(&mut tokens)));
            }
            continue;
        }
        if line.contains('\t') {
            return Err(FormatError::MalformedLine {
                line: i + 1,
                content: line.to_string(),
            });
        }
        tokens.push(line.to_string());
    }
    if !tokens.is_empty() {
        sentences.push(Sentence::new(sentences.len(), tokens));
    }
    Ok(sentences)
}

/// Writes `token<TAB>tagA|tagB|…` lines, `*` when every tag is allowed,
/// blank line after each sentence.
pub fn write_extended_conll(d: &Dataset, ls: &LabelSet) -> String {
    let mut out = String::new();
    for r in d.iter() {
        let lattice = r.annotation.to_lattice(ls.len());
        for (pos, token) in r.sentence.tokens.iter().enumerate() {
            out.push_str(token);
            out.push('\t');
            if lattice.allowed_at(pos).count() == ls.len() {
                out.push('*');
            } else {
                let names: Vec<&str> =
                    lattice.allowed_at(pos).map(|t| ls.tag_name(t)).collect();
                out.push_str(&names.join("|"));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Parses the extended CoNLL format back into lattice-annotated records.
pub fn parse_extended_conll(text: &str, ls: &LabelSet) -> Result<Dataset, FormatError> {
    let k = ls.len();
    let full = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let mut records = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut masks: Vec<u64> = Vec::new();
    let mut flush = |tokens: &mut Vec<String>, masks: &mut Vec<u64>| {
        if !tokens.is_empty() {
            let id = records.len();
            records.push(Record {
                sentence: Sentence::new(id, std::mem::take(tokens)),
                annotation: Annotation::Lattice(AllowedLattice::new(
                    std::mem::take(masks),
                    k,
                )),
                provenance: Provenance::Distant,
            });
        }
    };
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            flush(&mut tokens, &mut masks);
            continue;
        }
        let (token, tag_field) =
            line.split_once('\t').ok_or_else(|| FormatError::MalformedLine {
                line: lineno,
                content: line.to_string(),
            })?;
        if token.is_empty() {
            return Err(FormatError::EmptyToken { line: lineno });
        }
        let mask = if tag_field == "*" {
            full
        } else {
            let mut m = 0u64;
            for name in tag_field.split('|') {
                let idx = ls.tag_index(name).ok_or_else(|| FormatError::UnknownTag {
                    line: lineno,
                    tag: name.to_string(),
                })?;
                m |= 1u64 << idx;
            }
            m
        };
        if mask == 0 {
            return Err(FormatError::EmptyTagSet { line: lineno });
        }
        tokens.push(token.to_string());
        masks.push(mask);
    }
    flush(&mut tokens, &mut masks);
    Ok(Dataset::new(records))
}
