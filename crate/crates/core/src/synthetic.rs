//! Seeded generator for small separable corpora used in tests and the
//! denoising experiment.
//!
//! Entity surface forms are disjoint across types and from the context
//! vocabulary, so a tagger with word features can reach perfect F1. A
//! configurable fraction of the distantly labeled split is poisoned:
//! those sentences carry no real entity but commit a "trap" context word
//! to an entity tag, planting a known false positive whose removal can
//! be measured exactly.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{
    tags_from_spans, AllowedLattice, Annotation, Dataset, LabelSet, Provenance, Record, Scheme,
    Sentence, Span,
};

const ENTITY_TYPES: [&str; 3] = ["PER", "LOC", "ORG"];

/// Per-type surface forms; the last entry of each list is a two-token name.
const ENTITY_NAMES: [&[&str]; 3] = [
    &["alice", "bob", "carol", "dave", "erin", "frank gray"],
    &["arden", "brook", "casria", "dunmore", "elkford", "fort hale"],
    &["acme", "bolt", "cirrus", "dynamo", "ember", "gable labs"],
];

const CONTEXT_WORDS: [&str; 24] = [
    "the", "a", "near", "with", "saw", "met", "from", "into", "over", "under", "while", "after",
    "before", "often", "quietly", "around", "beyond", "toward", "during", "against", "beside",
    "without", "within", "across",
];

/// Context words reserved for false-positive injection. They are real O
/// tokens in the evaluation splits, so mislabeling them is costly.
const TRAP_WORDS: [&str; 5] = ["report", "signal", "matter", "record", "notice"];

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub gold_sentences: usize,
    pub distant_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    /// Fraction of distant sentences that carry an injected false positive.
    pub injected_fraction: f64,
    /// Fraction of gold sentences that show a trap word with its true O tag.
    pub gold_trap_fraction: f64,
    /// Number of entity names per type drawn in the gold split; names
    /// beyond this bound only occur in the distant and evaluation
    /// splits, making the distant data necessary for full recall.
    pub gold_name_pool: usize,
    pub scheme: Scheme,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            gold_sentences: 200,
            distant_sentences: 400,
            dev_sentences: 100,
            test_sentences: 100,
            injected_fraction: 0.3,
            gold_trap_fraction: 0.1,
            gold_name_pool: ENTITY_NAMES[0].len(),
            scheme: Scheme::Bioes,
        }
    }
}

pub struct SyntheticCorpus {
    pub label_set: LabelSet,
    pub gold: Dataset,
    pub distant: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    /// Ids of distant sentences carrying an injected false positive.
    pub injected: BTreeSet<usize>,
}

fn label_set(scheme: Scheme) -> LabelSet {
    LabelSet::new(&ENTITY_TYPES, scheme)
}

fn context_run(len: usize, rng: &mut impl Rng) -> Vec<String> {
    (0..len)
        .map(|_| CONTEXT_WORDS.choose(rng).unwrap().to_string())
        .collect()
}

/// One sentence with a single entity mention surrounded by context;
/// `trap` optionally places a trap word (as plain context) after it.
/// `name_pool` bounds which surface forms may be drawn.
fn entity_sentence(
    id: usize,
    trap: bool,
    name_pool: usize,
    rng: &mut impl Rng,
) -> (Sentence, Vec<Span>) {
    let type_idx = rng.gen_range(0..ENTITY_TYPES.len());
    let name = ENTITY_NAMES[type_idx][..name_pool].choose(rng).unwrap();
    let mut tokens = context_run(rng.gen_range(1..=3), rng);
    let start = tokens.len();
    tokens.extend(name.split(' ').map(str::to_string));
    let end = tokens.len();
    let mut tail = context_run(rng.gen_range(1..=3), rng);
    if trap {
        let pos = rng.gen_range(0..=tail.len());
        tail.insert(pos, TRAP_WORDS.choose(rng).unwrap().to_string());
    }
    tokens.extend(tail);
    let span = Span::new(start, end, ENTITY_TYPES[type_idx]);
    (Sentence::new(id, tokens), vec![span])
}

fn gold_record(
    id: usize,
    trap: bool,
    name_pool: usize,
    ls: &LabelSet,
    prov: Provenance,
    rng: &mut impl Rng,
) -> Record {
    let (sentence, spans) = entity_sentence(id, trap, name_pool, rng);
    let tags = tags_from_spans(&spans, sentence.len(), ls).expect("generated spans are disjoint");
    Record {
        sentence,
        annotation: Annotation::Tags(tags),
        provenance: prov,
    }
}

/// Lattice with the span positions committed to their scheme tags, one
/// random uncommitted position opened to the full tag set, and every
/// other position pinned to O — the shape produced by phrase-mode
/// distant annotation.
fn distant_lattice(
    spans: &[Span],
    n: usize,
    ls: &LabelSet,
    rng: &mut impl Rng,
) -> AllowedLattice {
    let k = ls.len();
    let tags = tags_from_spans(spans, n, ls).expect("generated spans are disjoint");
    let covered: Vec<bool> = (0..n)
        .map(|i| spans.iter().any(|s| s.start <= i && i < s.end))
        .collect();
    let mut masks: Vec<u64> = (0..n)
        .map(|i| {
            if covered[i] {
                1u64 << tags.tags()[i]
            } else {
                1u64 // O only
            }
        })
        .collect();
    let open: Vec<usize> = (0..n).filter(|&i| !covered[i]).collect();
    if let Some(&i) = open.as_slice().choose(rng) {
        masks[i] = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    }
    AllowedLattice::new(masks, k)
}

/// Clean distant sentence: correct entity committed, rest O plus one
/// fully open position.
fn clean_distant_record(id: usize, ls: &LabelSet, rng: &mut impl Rng) -> Record {
    let (sentence, spans) = entity_sentence(id, false, ENTITY_NAMES[0].len(), rng);
    let lattice = distant_lattice(&spans, sentence.len(), ls, rng);
    Record {
        sentence,
        annotation: Annotation::Lattice(lattice),
        provenance: Provenance::Distant,
    }
}

/// Poisoned distant sentence: shaped like an ordinary entity sentence
/// (real entity correctly committed, trap word present), but the trap
/// word is falsely committed to an entity tag as well. Each trap word
/// is always mislabeled with the same type, giving the tagger a
/// consistent false pattern to absorb.
fn injected_distant_record(id: usize, ls: &LabelSet, rng: &mut impl Rng) -> Record {
    let trap_idx = rng.gen_range(0..TRAP_WORDS.len());
    let type_idx = trap_idx % ENTITY_TYPES.len();
    let etype_idx = rng.gen_range(0..ENTITY_TYPES.len());
    let name = ENTITY_NAMES[etype_idx].choose(rng).unwrap();
    // Full name pool: the poisoned split still carries useful mentions.
    let mut tokens = context_run(rng.gen_range(1..=2), rng);
    let estart = tokens.len();
    tokens.extend(name.split(' ').map(str::to_string));
    let eend = tokens.len();
    tokens.extend(context_run(rng.gen_range(1..=2), rng));
    let tstart = tokens.len();
    tokens.push(TRAP_WORDS[trap_idx].to_string());
    tokens.extend(context_run(rng.gen_range(1..=2), rng));
    let spans = vec![
        Span::new(estart, eend, ENTITY_TYPES[etype_idx]),
        Span::new(tstart, tstart + 1, ENTITY_TYPES[type_idx]),
    ];
    let sentence = Sentence::new(id, tokens);
    let lattice = distant_lattice(&spans, sentence.len(), ls, rng);
    Record {
        sentence,
        annotation: Annotation::Lattice(lattice),
        provenance: Provenance::Distant,
    }
}

/// Deterministic corpus for a given generator state. Ids are unique
/// across all four splits.
pub fn generate(cfg: &SyntheticConfig, rng: &mut impl Rng) -> SyntheticCorpus {
    let ls = label_set(cfg.scheme);
    let mut next_id = 0;
    let mut take_id = || {
        next_id += 1;
        next_id - 1
    };

    let gold = Dataset::new(
        (0..cfg.gold_sentences)
            .map(|_| {
                let trap = rng.gen::<f64>() < cfg.gold_trap_fraction;
                gold_record(take_id(), trap, cfg.gold_name_pool, &ls, Provenance::Gold, rng)
            })
            .collect(),
    );

    let n_injected = (cfg.distant_sentences as f64 * cfg.injected_fraction).round() as usize;
    let mut poison_flags = vec![true; n_injected];
    poison_flags.resize(cfg.distant_sentences, false);
    poison_flags.shuffle(rng);
    let mut injected = BTreeSet::new();
    let distant = Dataset::new(
        poison_flags
            .iter()
            .map(|&poison| {
                let id = take_id();
                if poison {
                    injected.insert(id);
                    injected_distant_record(id, &ls, rng)
                } else {
                    clean_distant_record(id, &ls, rng)
                }
            })
            .collect(),
    );

    // Every evaluation sentence contains a trap word as O, so committed
    // false positives on trap words show up directly in precision.
    let full_pool = ENTITY_NAMES[0].len();
    let dev = Dataset::new(
        (0..cfg.dev_sentences)
            .map(|_| gold_record(take_id(), true, full_pool, &ls, Provenance::Gold, rng))
            .collect(),
    );
    let test = Dataset::new(
        (0..cfg.test_sentences)
            .map(|_| gold_record(take_id(), true, full_pool, &ls, Provenance::Gold, rng))
            .collect(),
    );

    SyntheticCorpus {
        label_set: ls,
        gold,
        distant,
        dev,
        test,
        injected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(7));
        let b = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a.gold, b.gold);
        assert_eq!(a.distant, b.distant);
        assert_eq!(a.dev, b.dev);
        assert_eq!(a.test, b.test);
        assert_eq!(a.injected, b.injected);
    }

    #[test]
    fn split_sizes_and_injection_count() {
        let cfg = SyntheticConfig::default();
        let c = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(c.gold.len(), 200);
        assert_eq!(c.distant.len(), 400);
        assert_eq!(c.dev.len(), 100);
        assert_eq!(c.test.len(), 100);
        assert_eq!(c.injected.len(), 120);
        assert!(c
            .injected
            .iter()
            .all(|id| c.distant.iter().any(|r| r.sentence.id == *id)));
    }

    #[test]
    fn injected_sentences_commit_trap_words_to_entity_tags() {
        let cfg = SyntheticConfig::default();
        let c = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let k = c.label_set.len();
        for r in c.distant.iter().filter(|r| c.injected.contains(&r.sentence.id)) {
            let lattice = r.annotation.to_lattice(k);
            let committed: Vec<usize> = (0..r.sentence.len())
                .filter_map(|i| lattice.singleton_at(i).filter(|&t| t != 0).map(|_| i))
                .collect();
            assert!(
                committed
                    .iter()
                    .any(|&i| TRAP_WORDS.contains(&r.sentence.tokens[i].as_str())),
                "injected sentence must plant a tag on a trap word"
            );
        }
    }

    #[test]
    fn evaluation_splits_are_fully_labeled_and_contain_traps() {
        let cfg = SyntheticConfig::default();
        let c = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        for split in [&c.dev, &c.test] {
            for r in split.iter() {
                assert!(matches!(r.annotation, Annotation::Tags(_)));
                assert!(r
                    .sentence
                    .tokens
                    .iter()
                    .any(|t| TRAP_WORDS.contains(&t.as_str())));
            }
        }
    }

    #[test]
    fn vocabulary_is_small_and_entity_names_disjoint_from_context() {
        let mut all: BTreeSet<&str> = BTreeSet::new();
        all.extend(CONTEXT_WORDS);
        all.extend(TRAP_WORDS);
        let mut entity_tokens: BTreeSet<&str> = BTreeSet::new();
        for names in ENTITY_NAMES {
            for n in names {
                entity_tokens.extend(n.split(' '));
            }
        }
        assert!(all.is_disjoint(&entity_tokens));
        all.extend(&entity_tokens);
        assert!(all.len() <= 55, "vocabulary should stay near 50 words");
    }
}
