//! Data model and I/O for tokenized sentences, tag schemes, span extraction
//! and CoNLL-style files.
//!
//! Tag inventories are derived from an ordered list of entity types under
//! either the BIO or BIOES scheme, with `O` pinned at index 0. Spans use
//! half-open `[start, end)` token ranges.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: unknown tag {tag:?}")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: empty token")]
    EmptyToken { line: usize },
    #[error("line {line}: malformed line {content:?} (expected token<TAB>tag)")]
    MalformedLine { line: usize, content: String },
    #[error("sentence ending at line {line}: {source}")]
    InvalidSequenceAt { line: usize, source: SequenceError },
    #[error(transparent)]
    InvalidSequence(#[from] SequenceError),
    #[error("overlapping spans: [{0}, {1}) and [{2}, {3})")]
    OverlappingSpans(usize, usize, usize, usize),
    #[error("span [{start}, {end}) out of bounds for sentence of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("unknown entity type {0:?}")]
    UnknownEntityType(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("length {got} does not match sentence length {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("tag index {0} out of range for label set of size {1}")]
    TagOutOfRange(usize, usize),
    #[error("position {pos}: tag {tag} does not continue a matching entity")]
    BadContinuation { pos: usize, tag: String },
    #[error("position {pos}: tag {tag} is not closed by I-/E- of the same type")]
    UnclosedEntity { pos: usize, tag: String },
}

/// Tagging scheme for span encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Bio,
    Bioes,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Bio => write!(f, "bio"),
            Scheme::Bioes => write!(f, "bioes"),
        }
    }
}

/// Positional prefix of a non-O tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prefix {
    Begin,
    Inside,
    End,
    Single,
}

impl Prefix {
    fn letter(self) -> char {
        match self {
            Prefix::Begin => 'B',
            Prefix::Inside => 'I',
            Prefix::End => 'E',
            Prefix::Single => 'S',
        }
    }
}

/// Decomposition of a tag index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Outside,
    Entity { prefix: Prefix, type_idx: usize },
}

/// Ordered tag inventory derived from entity types and a scheme.
///
/// `O` is always index 0. Under BIO each type contributes `B-`/`I-` tags,
/// under BIOES `B-`/`I-`/`E-`/`S-`, in type order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    entity_types: Vec<String>,
    scheme: Scheme,
    tags: Vec<String>,
}

impl LabelSet {
    pub fn new(entity_types: &[&str], scheme: Scheme) -> Self {
        let entity_types: Vec<String> = entity_types.iter().map(|s| s.to_string()).collect();
        let mut tags = vec!["O".to_string()];
        let prefixes: &[Prefix] = match scheme {
            Scheme::Bio => &[Prefix::Begin, Prefix::Inside],
            Scheme::Bioes => &[Prefix::Begin, Prefix::Inside, Prefix::End, Prefix::Single],
        };
        for t in &entity_types {
            for p in prefixes {
                tags.push(format!("{}-{}", p.letter(), t));
            }
        }
        debug_assert!({
            let mut seen = tags.clone();
            seen.sort();
            seen.dedup();
            seen.len() == tags.len()
        });
        LabelSet {
            entity_types,
            scheme,
            tags,
        }
    }

    /// Same entity types under a different scheme.
    pub fn to_scheme(&self, scheme: Scheme) -> LabelSet {
        let types: Vec<&str> = self.entity_types.iter().map(|s| s.as_str()).collect();
        LabelSet::new(&types, scheme)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    /// Number of tags (k).
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        false // "O" is always present
    }

    pub fn tag_name(&self, idx: usize) -> &str {
        &self.tags[idx]
    }

    pub fn tag_index(&self, name: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == name)
    }

    pub fn decompose(&self, idx: usize) -> Tag {
        if idx == 0 {
            return Tag::Outside;
        }
        let per_type = match self.scheme {
            Scheme::Bio => 2,
            Scheme::Bioes => 4,
        };
        let type_idx = (idx - 1) / per_type;
        let prefix = match ((idx - 1) % per_type, self.scheme) {
            (0, _) => Prefix::Begin,
            (1, _) => Prefix::Inside,
            (2, Scheme::Bioes) => Prefix::End,
            (3, Scheme::Bioes) => Prefix::Single,
            _ => unreachable!(),
        };
        Tag::Entity { prefix, type_idx }
    }

    pub fn compose(&self, prefix: Prefix, type_idx: usize) -> usize {
        let per_type = match self.scheme {
            Scheme::Bio => 2,
            Scheme::Bioes => 4,
        };
        let offset = match (prefix, self.scheme) {
            (Prefix::Begin, _) => 0,
            (Prefix::Inside, _) => 1,
            (Prefix::End, Scheme::Bioes) => 2,
            (Prefix::Single, Scheme::Bioes) => 3,
            _ => panic!("prefix {:?} not valid under {:?}", prefix, self.scheme),
        };
        1 + type_idx * per_type + offset
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.entity_types.iter().position(|t| t == name)
    }

    /// Checks the prefix-continuation rules for a sequence of tag indices.
    pub fn validate(&self, tags: &[usize], len: usize) -> Result<(), SequenceError> {
        if tags.len() != len {
            return Err(SequenceError::LengthMismatch {
                got: tags.len(),
                want: len,
            });
        }
        for &t in tags {
            if t >= self.len() {
                return Err(SequenceError::TagOutOfRange(t, self.len()));
            }
        }
        let decomposed: Vec<Tag> = tags.iter().map(|&t| self.decompose(t)).collect();
        for (pos, tag) in decomposed.iter().enumerate() {
            let prev = if pos == 0 { None } else { Some(decomposed[pos - 1]) };
            let next = decomposed.get(pos + 1).copied();
            if let Tag::Entity { prefix, type_idx } = *tag {
                // I- (both schemes) and E- (BIOES) continue a same-type B-/I-.
                if matches!(prefix, Prefix::Inside | Prefix::End) {
                    let ok = matches!(
                        prev,
                        Some(Tag::Entity {
                            prefix: Prefix::Begin | Prefix::Inside,
                            type_idx: pt,
                        }) if pt == type_idx
                    );
                    if !ok {
                        return Err(SequenceError::BadContinuation {
                            pos,
                            tag: self.tags[tags[pos]].clone(),
                        });
                    }
                }
                // Under BIOES, B- and I- must be continued by same-type I-/E-.
                if self.scheme == Scheme::Bioes
                    && matches!(prefix, Prefix::Begin | Prefix::Inside)
                {
                    let ok = matches!(
                        next,
                        Some(Tag::Entity {
                            prefix: Prefix::Inside | Prefix::End,
                            type_idx: nt,
                        }) if nt == type_idx
                    );
                    if !ok {
                        return Err(SequenceError::UnclosedEntity {
                            pos,
                            tag: self.tags[tags[pos]].clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Tokenized sentence with a dataset-stable id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: usize,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(id: usize, tokens: Vec<String>) -> Self {
        assert!(!tokens.is_empty(), "sentence must have at least one token");
        assert!(
            tokens
                .iter()
                .all(|t| !t.is_empty() && !t.contains('\t') && !t.contains('\n')),
            "tokens must be non-empty and free of separators"
        );
        Sentence { id, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Per-token tag indices into a [`LabelSet`], scheme-validated at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSequence {
    tags: Vec<usize>,
}

impl TagSequence {
    pub fn new(tags: Vec<usize>, ls: &LabelSet) -> Result<Self, SequenceError> {
        ls.validate(&tags, tags.len())?;
        Ok(TagSequence { tags })
    }

    pub fn tags(&self) -> &[usize] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Half-open entity span `[start, end)` with a type name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
}

impl Span {
    pub fn new(start: usize, end: usize, entity_type: impl Into<String>) -> Self {
        assert!(start < end, "span must be non-empty");
        Span {
            start,
            end,
            entity_type: entity_type.into(),
        }
    }
}

/// Per-token sets of permitted tag indices, stored as bitmasks.
///
/// Singleton positions carry a committed tag; wider sets encode partial
/// annotation. Supports label sets of up to 64 tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllowedLattice {
    masks: Vec<u64>,
    k: usize,
}

impl AllowedLattice {
    pub fn new(masks: Vec<u64>, k: usize) -> Self {
        assert!(k >= 1 && k <= 64, "label set size must be in 1..=64");
        let full = Self::full_mask(k);
        assert!(
            masks.iter().all(|&m| m != 0 && m & !full == 0),
            "every position needs a non-empty subset of the tag inventory"
        );
        AllowedLattice { masks, k }
    }

    /// Lattice allowing every tag at every position.
    pub fn all_allowed(n: usize, k: usize) -> Self {
        Self::new(vec![Self::full_mask(k); n], k)
    }

    /// Lattice committing each position to a single tag.
    pub fn from_tags(t: &TagSequence, k: usize) -> Self {
        Self::new(t.tags().iter().map(|&t| 1u64 << t).collect(), k)
    }

    fn full_mask(k: usize) -> u64 {
        if k == 64 {
            u64::MAX
        } else {
            (1u64 << k) - 1
        }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn num_tags(&self) -> usize {
        self.k
    }

    pub fn allows(&self, pos: usize, tag: usize) -> bool {
        self.masks[pos] & (1u64 << tag) != 0
    }

    pub fn allowed_at(&self, pos: usize) -> impl Iterator<Item = usize> + '_ {
        let mask = self.masks[pos];
        (0..self.k).filter(move |&t| mask & (1u64 << t) != 0)
    }

    /// The committed tag at `pos` if the allowed set is a singleton.
    pub fn singleton_at(&self, pos: usize) -> Option<usize> {
        let m = self.masks[pos];
        if m.count_ones() == 1 {
            Some(m.trailing_zeros() as usize)
        } else {
            None
        }
    }

    pub fn is_all_allowing(&self) -> bool {
        let full = Self::full_mask(self.k);
        self.masks.iter().all(|&m| m == full)
    }

    pub fn mask_at(&self, pos: usize) -> u64 {
        self.masks[pos]
    }
}

/// Per-sentence annotation: committed tags or an allowed-tag lattice.
#[derive(Debug, Clone, PartialEq)]
pub enum Annotation {
    Tags(TagSequence),
    Lattice(AllowedLattice),
}

impl Annotation {
    pub fn len(&self) -> usize {
        match self {
            Annotation::Tags(t) => t.len(),
            Annotation::Lattice(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lattice view: committed tags become singletons.
    pub fn to_lattice(&self, k: usize) -> AllowedLattice {
        match self {
            Annotation::Tags(t) => AllowedLattice::from_tags(t, k),
            Annotation::Lattice(l) => l.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Gold,
    Distant,
}

/// Annotated sentence with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub sentence: Sentence,
    pub annotation: Annotation,
    pub provenance: Provenance,
}

/// Parallel collection of sentences and annotations; immutable after load.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(mut records: Vec<Record>) -> Self {
        records.sort_by_key(|r| r.sentence.id);
        let mut ids: Vec<usize> = records.iter().map(|r| r.sentence.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), records.len(), "sentence ids must be unique");
        for r in &records {
            assert_eq!(
                r.annotation.len(),
                r.sentence.len(),
                "annotation length must match sentence length"
            );
        }
        Dataset { records }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }
}

/// Parses two-column CoNLL text (`token<TAB>tag`, blank line between
/// sentences) against a label set. Sentences are numbered in file order.
pub fn parse_conll(text: &str, ls: &LabelSet) -> Result<Dataset, CorpusError> {
    let mut records = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<usize> = Vec::new();
    let mut block_start_line = 1;

    let mut flush = |tokens: &mut Vec<String>,
                     tags: &mut Vec<usize>,
                     end_line: usize|
     -> Result<(), CorpusError> {
        if tokens.is_empty() {
            return Ok(());
        }
        let seq = TagSequence::new(std::mem::take(tags), ls)
            .map_err(|source| CorpusError::InvalidSequenceAt { line: end_line, source })?;
        let id = records.len();
        records.push(Record {
            sentence: Sentence::new(id, std::mem::take(tokens)),
            annotation: Annotation::Tags(seq),
            provenance: Provenance::Gold,
        });
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            flush(&mut tokens, &mut tags, lineno.saturating_sub(1))?;
            block_start_line = lineno + 1;
            continue;
        }
        let (token, tag) = line
            .split_once('\t')
            .ok_or_else(|| CorpusError::MalformedLine {
                line: lineno,
                content: line.to_string(),
            })?;
        if token.is_empty() {
            return Err(CorpusError::EmptyToken { line: lineno });
        }
        let tag_idx = ls.tag_index(tag).ok_or_else(|| CorpusError::UnknownTag {
            line: lineno,
            tag: tag.to_string(),
        })?;
        tokens.push(token.to_string());
        tags.push(tag_idx);
    }
    let last_line = text.lines().count();
    flush(&mut tokens, &mut tags, last_line)?;
    let _ = block_start_line;
    Ok(Dataset::new(records))
}

/// Writes a dataset with committed tags back to CoNLL text.
///
/// Sentences are ordered by id; each block ends with a blank line, so
/// `parse_conll(write_conll(d)) == d` and normalized files round-trip
/// byte-identically.
pub fn write_conll(d: &Dataset, ls: &LabelSet) -> String {
    let mut out = String::new();
    for r in d.iter() {
        let tags = match &r.annotation {
            Annotation::Tags(t) => t,
            Annotation::Lattice(_) => panic!("write_conll requires committed tags"),
        };
        for (token, &tag) in r.sentence.tokens.iter().zip(tags.tags()) {
            out.push_str(token);
            out.push('\t');
            out.push_str(ls.tag_name(tag));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Extracts the non-overlapping, start-sorted entity spans of a valid
/// tag sequence.
pub fn spans_from_tags(t: &TagSequence, ls: &LabelSet) -> Vec<Span> {
    let mut spans = Vec::new();
    let tags = t.tags();
    let mut i = 0;
    while i < tags.len() {
        match ls.decompose(tags[i]) {
            Tag::Outside => i += 1,
            Tag::Entity {
                prefix: Prefix::Single,
                type_idx,
            } => {
                spans.push(Span::new(i, i + 1, ls.entity_types[type_idx].clone()));
                i += 1;
            }
            Tag::Entity {
                prefix: Prefix::Begin,
                type_idx,
            } => {
                let start = i;
                i += 1;
                while i < tags.len() {
                    match ls.decompose(tags[i]) {
                        Tag::Entity {
                            prefix: Prefix::Inside,
                            type_idx: t2,
                        } if t2 == type_idx => i += 1,
                        Tag::Entity {
                            prefix: Prefix::End,
                            type_idx: t2,
                        } if t2 == type_idx => {
                            i += 1;
                            break;
                        }
                        _ => break,
                    }
                }
                spans.push(Span::new(start, i, ls.entity_types[type_idx].clone()));
            }
            // Validity rules out leading I-/E-; scan defensively skips them.
            Tag::Entity { .. } => i += 1,
        }
    }
    spans
}

/// Builds the tag sequence encoding a set of non-overlapping spans.
pub fn tags_from_spans(
    spans: &[Span],
    n: usize,
    ls: &LabelSet,
) -> Result<TagSequence, CorpusError> {
    let mut sorted: Vec<&Span> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    let mut tags = vec![0usize; n];
    let mut covered_until = 0usize;
    for (i, span) in sorted.iter().enumerate() {
        if span.end > n {
            return Err(CorpusError::SpanOutOfBounds {
                start: span.start,
                end: span.end,
                len: n,
            });
        }
        if i > 0 && span.start < covered_until {
            let prev = sorted[i - 1];
            return Err(CorpusError::OverlappingSpans(
                prev.start, prev.end, span.start, span.end,
            ));
        }
        covered_until = span.end;
        let type_idx = ls
            .type_index(&span.entity_type)
            .ok_or_else(|| CorpusError::UnknownEntityType(span.entity_type.clone()))?;
        let len = span.end - span.start;
        match ls.scheme() {
            Scheme::Bio => {
                tags[span.start] = ls.compose(Prefix::Begin, type_idx);
                for p in span.start + 1..span.end {
                    tags[p] = ls.compose(Prefix::Inside, type_idx);
                }
            }
            Scheme::Bioes => {
                if len == 1 {
                    tags[span.start] = ls.compose(Prefix::Single, type_idx);
                } else {
                    tags[span.start] = ls.compose(Prefix::Begin, type_idx);
                    for p in span.start + 1..span.end - 1 {
                        tags[p] = ls.compose(Prefix::Inside, type_idx);
                    }
                    tags[span.end - 1] = ls.compose(Prefix::End, type_idx);
                }
            }
        }
    }
    Ok(TagSequence::new(tags, ls).expect("span encoding is scheme-valid by construction"))
}

/// Converts a valid BIO sequence to BIOES over the same entity types.
///
/// Singleton entities become `S-`, final tokens of longer entities `E-`.
pub fn to_bioes(t: &TagSequence, bio: &LabelSet) -> Result<TagSequence, CorpusError> {
    assert_eq!(bio.scheme(), Scheme::Bio);
    let spans = spans_from_tags(t, bio);
    tags_from_spans(&spans, t.len(), &bio.to_scheme(Scheme::Bioes))
}

/// Inverse of [`to_bioes`].
pub fn to_bio(t: &TagSequence, bioes: &LabelSet) -> Result<TagSequence, CorpusError> {
    assert_eq!(bioes.scheme(), Scheme::Bioes);
    let spans = spans_from_tags(t, bioes);
    tags_from_spans(&spans, t.len(), &bioes.to_scheme(Scheme::Bio))
}

/// Span extraction over raw tag indices that may violate the scheme
/// (e.g. decoder output early in training). Deterministic repair rules:
/// an I-/E- that does not continue a same-type entity starts one; open
/// entities close before O, any type switch, or end of sequence.
pub fn spans_from_raw_tags(tags: &[usize], ls: &LabelSet) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None; // (start, type_idx)
    let close = |open: &mut Option<(usize, usize)>, end: usize, spans: &mut Vec<Span>| {
        if let Some((start, type_idx)) = open.take() {
            spans.push(Span::new(start, end, ls.entity_types[type_idx].clone()));
        }
    };
    for (i, &tag) in tags.iter().enumerate() {
        match ls.decompose(tag) {
            Tag::Outside => close(&mut open, i, &mut spans),
            Tag::Entity { prefix, type_idx } => match prefix {
                Prefix::Begin => {
                    close(&mut open, i, &mut spans);
                    open = Some((i, type_idx));
                }
                Prefix::Single => {
                    close(&mut open, i, &mut spans);
                    spans.push(Span::new(i, i + 1, ls.entity_types[type_idx].clone()));
                }
                Prefix::Inside => match open {
                    Some((_, t)) if t == type_idx => {}
                    _ => {
                        close(&mut open, i, &mut spans);
                        open = Some((i, type_idx));
                    }
                },
                Prefix::End => {
                    match open {
                        Some((_, t)) if t == type_idx => {}
                        _ => {
                            close(&mut open, i, &mut spans);
                            open = Some((i, type_idx));
                        }
                    }
                    close(&mut open, i + 1, &mut spans);
                }
            },
        }
    }
    close(&mut open, tags.len(), &mut spans);
    spans
}

/// Tag-name view of a sequence, handy in tests and error paths.
pub fn tag_names(t: &TagSequence, ls: &LabelSet) -> Vec<String> {
    t.tags().iter().map(|&i| ls.tag_name(i).to_string()).collect()
}

/// Sorted map from id to record index, used by span-level evaluation.
pub fn id_index(d: &Dataset) -> BTreeMap<usize, usize> {
    d.iter()
        .enumerate()
        .map(|(i, r)| (r.sentence.id, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bio_ls() -> LabelSet {
        LabelSet::new(&["PER", "LOC", "MISC"], Scheme::Bio)
    }

    fn bioes_ls() -> LabelSet {
        LabelSet::new(&["PER", "LOC", "MISC"], Scheme::Bioes)
    }

    fn seq(names: &[&str], ls: &LabelSet) -> TagSequence {
        TagSequence::new(
            names.iter().map(|n| ls.tag_index(n).unwrap()).collect(),
            ls,
        )
        .unwrap()
    }

    #[test]
    fn label_set_layout() {
        let bio = bio_ls();
        assert_eq!(bio.len(), 7); // 2*3 + 1
        assert_eq!(bio.tag_name(0), "O");
        assert_eq!(bio.tag_name(1), "B-PER");
        let bioes = bioes_ls();
        assert_eq!(bioes.len(), 13); // 4*3 + 1
        assert_eq!(bioes.tag_name(4), "S-PER");
    }

    // CoNLL03 example sentence, BIOES column.
    const CONLL03_BIOES: &str = "Adams\tS-PER\nand\tO\nPlatt\tS-PER\nare\tO\nboth\tO\ninjured\tO\nand\tO\nwill\tO\nmiss\tO\nEngland\tS-LOC\n's\tO\nopening\tO\nWorld\tB-MISC\nCup\tE-MISC\nqualifier\tO\nagainst\tO\nMoldova\tS-LOC\non\tO\nSunday\tO\n.\tO\n\n";

    #[test]
    fn parse_conll03_example() {
        let ls = bioes_ls();
        let d = parse_conll(CONLL03_BIOES, &ls).unwrap();
        assert_eq!(d.len(), 1);
        let r = &d.records()[0];
        assert_eq!(r.sentence.tokens[0], "Adams");
        match &r.annotation {
            Annotation::Tags(t) => {
                assert_eq!(ls.tag_name(t.tags()[0]), "S-PER");
                assert_eq!(ls.tag_name(t.tags()[9]), "S-LOC");
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn parse_empty_input() {
        let d = parse_conll("", &bio_ls()).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn parse_rejects_unknown_tag() {
        let err = parse_conll("a\tB-XYZ\n", &bio_ls()).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownTag { line: 1, .. }));
    }

    #[test]
    fn parse_rejects_invalid_sequence_with_line() {
        // I-PER without a preceding B-PER.
        let err = parse_conll("a\tO\nb\tI-PER\n", &bio_ls()).unwrap_err();
        assert!(matches!(err, CorpusError::InvalidSequenceAt { .. }));
    }

    #[test]
    fn parse_rejects_empty_token() {
        let err = parse_conll("\tO\n", &bio_ls()).unwrap_err();
        assert_eq!(err, CorpusError::EmptyToken { line: 1 });
    }

    #[test]
    fn write_single_sentence() {
        let ls = bio_ls();
        let d = parse_conll("a\tO\n\n", &ls).unwrap();
        assert_eq!(write_conll(&d, &ls), "a\tO\n\n");
    }

    #[test]
    fn write_empty_dataset() {
        assert_eq!(write_conll(&Dataset::default(), &bio_ls()), "");
    }

    #[test]
    fn conll03_round_trip_is_byte_identical() {
        let ls = bioes_ls();
        let d = parse_conll(CONLL03_BIOES, &ls).unwrap();
        let text = write_conll(&d, &ls);
        assert_eq!(text, CONLL03_BIOES);
        assert_eq!(parse_conll(&text, &ls).unwrap(), d);
    }

    #[test]
    fn bio_to_bioes_table_rows() {
        let bio = bio_ls();
        // Adams row: single-token entity.
        let t = seq(&["B-PER"], &bio);
        let conv = to_bioes(&t, &bio).unwrap();
        assert_eq!(tag_names(&conv, &bioes_ls()), vec!["S-PER"]);
        // World / Cup rows: final token becomes E-.
        let t = seq(&["B-MISC", "I-MISC"], &bio);
        let conv = to_bioes(&t, &bio).unwrap();
        assert_eq!(tag_names(&conv, &bioes_ls()), vec!["B-MISC", "E-MISC"]);
    }

    #[test]
    fn all_o_is_fixed_by_conversion() {
        let bio = bio_ls();
        let t = seq(&["O", "O", "O"], &bio);
        let conv = to_bioes(&t, &bio).unwrap();
        assert_eq!(conv.tags(), &[0, 0, 0]);
    }

    #[test]
    fn bioes_to_bio_table_rows() {
        let bioes = bioes_ls();
        let t = seq(&["S-LOC"], &bioes);
        assert_eq!(tag_names(&to_bio(&t, &bioes).unwrap(), &bio_ls()), vec!["B-LOC"]);
        let t = seq(&["B-MISC", "E-MISC"], &bioes);
        assert_eq!(
            tag_names(&to_bio(&t, &bioes).unwrap(), &bio_ls()),
            vec!["B-MISC", "I-MISC"]
        );
    }

    #[test]
    fn spans_from_bc5cdr_like_sequence() {
        let ls = LabelSet::new(&["Chemical", "Disease"], Scheme::Bioes);
        let t = seq(&["S-Chemical", "O", "O", "B-Disease", "E-Disease"], &ls);
        let spans = spans_from_tags(&t, &ls);
        assert_eq!(
            spans,
            vec![Span::new(0, 1, "Chemical"), Span::new(3, 5, "Disease")]
        );
    }

    #[test]
    fn spans_of_all_o_is_empty() {
        let ls = bio_ls();
        let t = seq(&["O", "O"], &ls);
        assert!(spans_from_tags(&t, &ls).is_empty());
    }

    #[test]
    fn tags_from_spans_examples() {
        let ls = bioes_ls();
        let t = tags_from_spans(&[Span::new(0, 1, "PER")], 3, &ls).unwrap();
        assert_eq!(tag_names(&t, &ls), vec!["S-PER", "O", "O"]);
        let t = tags_from_spans(&[], 2, &ls).unwrap();
        assert_eq!(t.tags(), &[0, 0]);
    }

    #[test]
    fn tags_from_spans_rejects_overlap() {
        let ls = bioes_ls();
        let err = tags_from_spans(&[Span::new(0, 2, "PER"), Span::new(1, 3, "LOC")], 3, &ls);
        assert!(matches!(err, Err(CorpusError::OverlappingSpans(..))));
    }

    #[test]
    fn lattice_singleton_and_full() {
        let l = AllowedLattice::all_allowed(2, 5);
        assert!(l.is_all_allowing());
        assert_eq!(l.singleton_at(0), None);
        let ls = bio_ls();
        let t = seq(&["B-PER", "O"], &ls);
        let l = AllowedLattice::from_tags(&t, ls.len());
        assert_eq!(l.singleton_at(0), Some(1));
        assert_eq!(l.singleton_at(1), Some(0));
    }

    #[test]
    fn raw_span_extraction_agrees_on_valid_sequences() {
        let ls = bioes_ls();
        let t = seq(&["S-PER", "O", "B-LOC", "I-LOC", "E-LOC"], &ls);
        assert_eq!(spans_from_raw_tags(t.tags(), &ls), spans_from_tags(&t, &ls));
    }

    #[test]
    fn raw_span_extraction_repairs_invalid_sequences() {
        let ls = bioes_ls();
        // I-PER with nothing open starts an entity; unclosed B-LOC closes at end.
        let raw = vec![
            ls.tag_index("I-PER").unwrap(),
            ls.tag_index("O").unwrap(),
            ls.tag_index("B-LOC").unwrap(),
        ];
        let spans = spans_from_raw_tags(&raw, &ls);
        assert_eq!(spans, vec![Span::new(0, 1, "PER"), Span::new(2, 3, "LOC")]);
    }

    /// Brute-force regular-language validity oracle: an entity is
    /// `B I* (E)?` depending on scheme; checks every position's local rule
    /// by string matching on tag names.
    fn valid_by_oracle(names: &[&str], scheme: Scheme) -> bool {
        let n = names.len();
        let typ = |s: &str| s[2..].to_string();
        for i in 0..n {
            let cur = names[i];
            if cur == "O" {
                continue;
            }
            let prev = if i > 0 { names[i - 1] } else { "O" };
            let next = if i + 1 < n { names[i + 1] } else { "O" };
            match (&cur[..1], scheme) {
                ("I", Scheme::Bio) => {
                    if !(prev.len() > 2
                        && (prev.starts_with("B-") || prev.starts_with("I-"))
                        && typ(prev) == typ(cur))
                    {
                        return false;
                    }
                }
                ("B", Scheme::Bio) | ("S", Scheme::Bioes) => {}
                ("B", Scheme::Bioes) | ("I", Scheme::Bioes) => {
                    if &cur[..1] == "I"
                        && !(prev.len() > 2
                            && (prev.starts_with("B-") || prev.starts_with("I-"))
                            && typ(prev) == typ(cur))
                    {
                        return false;
                    }
                    if !(next.len() > 2
                        && (next.starts_with("I-") || next.starts_with("E-"))
                        && typ(next) == typ(cur))
                    {
                        return false;
                    }
                }
                ("E", Scheme::Bioes) => {
                    if !(prev.len() > 2
                        && (prev.starts_with("B-") || prev.starts_with("I-"))
                        && typ(prev) == typ(cur))
                    {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        true
    }

    #[test]
    fn validity_matches_brute_force_oracle() {
        for &scheme in &[Scheme::Bio, Scheme::Bioes] {
            let ls = LabelSet::new(&["A", "B"], scheme);
            let k = ls.len();
            for n in 1..=4usize {
                // Enumerate all k^n sequences.
                for code in 0..k.pow(n as u32) {
                    let mut c = code;
                    let tags: Vec<usize> = (0..n)
                        .map(|_| {
                            let t = c % k;
                            c /= k;
                            t
                        })
                        .collect();
                    let names: Vec<&str> = tags.iter().map(|&t| ls.tag_name(t)).collect();
                    let expected = valid_by_oracle(&names, scheme);
                    let got = ls.validate(&tags, n).is_ok();
                    assert_eq!(got, expected, "scheme {:?} names {:?}", scheme, names);
                }
            }
        }
    }
}
