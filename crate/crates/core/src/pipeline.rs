//! Orchestration of the full training procedure: pretraining the
//! Partial-CRF tagger on gold plus distant data, the reinforcement-based
//! cleaning loop over the distant set, retraining on the cleaned union,
//! exact-match span evaluation, and model serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{
    spans_from_raw_tags, tags_from_spans, AllowedLattice, Annotation, Dataset, LabelSet,
    Provenance, Record, Scheme, Sentence,
};
use crate::crf::{self, TransitionMatrix};
use crate::encoder::{
    self, apply_gradients, encode, emissions, EmbeddingTable, EncoderGrads, EncoderParams,
    LstmParams,
};
use crate::policy::{
    self, build_state, own_state_dim, policy_forward, sample_action, EpochRecord, PolicyParams,
    PolicyState,
};

const MODEL_MAGIC: &[u8; 5] = b"WSNER";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("prediction/gold sentence mismatch at position {0}")]
    SentenceMismatch(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a model file")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    VersionMismatch(u32),
    #[error("model file truncated")]
    Truncated,
}

/// Exact-match micro-averaged span metrics. Zero denominators yield 0,
/// never NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Flat key-value metrics report.
pub fn metrics_report(m: &Metrics) -> String {
    format!(
        "tp = {}\nfp = {}\nfn = {}\nprecision = {:.6}\nrecall = {:.6}\nf1 = {:.6}\n",
        m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
    )
}

/// Training configuration shared by pretrain, the RL loop and retrain.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Early-stopping patience in epochs without dev-F1 improvement.
    pub patience: usize,
    pub rl_epochs: usize,
    /// Epochs of NER retraining inside each RL epoch.
    pub rl_inner_epochs: usize,
    /// Retrain from the pretrained checkpoint each RL epoch instead of
    /// from scratch.
    pub rl_warm_start: bool,
    pub rl_learning_rate: f64,
    pub policy_hidden: (usize, usize),
    pub scheme: Scheme,
    pub phrase_mode: bool,
    pub char_only: bool,
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub word_hidden: usize,
    pub grad_clip: f64,
    /// Probability of replacing a word with UNK during training.
    pub input_dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            max_epochs: 50,
            patience: 20,
            rl_epochs: 100,
            rl_inner_epochs: 3,
            rl_warm_start: true,
            rl_learning_rate: 0.2,
            policy_hidden: (64, 32),
            scheme: Scheme::Bioes,
            phrase_mode: false,
            char_only: false,
            word_dim: 50,
            char_dim: 25,
            char_hidden: 25,
            word_hidden: 100,
            grad_clip: 5.0,
            input_dropout: 0.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_epochs == 0 {
            return Err("max_epochs must be positive".into());
        }
        if self.patience > self.max_epochs {
            return Err("patience must not exceed max_epochs".into());
        }
        if self.learning_rate <= 0.0 {
            return Err("learning_rate must be positive".into());
        }
        Ok(())
    }
}

/// Trained tagger: label inventory, encoder parameters and CRF transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub label_set: LabelSet,
    pub encoder: EncoderParams,
    pub transitions: TransitionMatrix,
    pub char_only: bool,
}

impl Model {
    /// Fresh model over the vocabulary observed in `datasets`, optionally
    /// seeded from pretrained word vectors.
    pub fn init(
        label_set: LabelSet,
        cfg: &TrainConfig,
        datasets: &[&Dataset],
        pretrained: Option<EmbeddingTable>,
        rng: &mut impl Rng,
    ) -> Model {
        let mut words: Vec<String> = Vec::new();
        let mut chars: Vec<char> = Vec::new();
        for d in datasets {
            for r in d.iter() {
                for t in &r.sentence.tokens {
                    words.push(t.clone());
                    chars.extend(t.chars());
                }
            }
        }
        words.sort_unstable();
        words.dedup();
        chars.sort_unstable();
        chars.dedup();
        let mut embeddings = match pretrained {
            Some(t) => t,
            None => EmbeddingTable::random_words(words, cfg.word_dim, rng),
        };
        if embeddings.char_dim() == 0 || embeddings.num_chars() == 0 {
            let d_c = if cfg.char_only { 0 } else { cfg.char_dim };
            embeddings.init_chars(chars, d_c, rng);
        }
        let k = label_set.len();
        let encoder = EncoderParams::new(
            embeddings,
            cfg.char_hidden,
            cfg.word_hidden,
            k,
            cfg.char_only,
            rng,
        );
        Model {
            transitions: TransitionMatrix::random(k, rng),
            label_set,
            encoder,
            char_only: cfg.char_only,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.label_set.len()
    }
}

/// Viterbi-decodes each sentence and re-encodes the (leniently extracted)
/// spans as a scheme-valid tag sequence.
pub fn tag(model: &Model, sentences: &[Sentence]) -> Dataset {
    let records = sentences
        .iter()
        .map(|s| {
            let h = encode(s, &model.encoder);
            let p = emissions(&h, &model.encoder);
            let path = crf::viterbi(&p, &model.transitions);
            let spans = spans_from_raw_tags(&path.tags, &model.label_set);
            let tags = tags_from_spans(&spans, s.len(), &model.label_set)
                .expect("lenient spans are non-overlapping");
            Record {
                sentence: s.clone(),
                annotation: Annotation::Tags(tags),
                provenance: Provenance::Distant,
            }
        })
        .collect();
    Dataset::new(records)
}

/// Exact-match micro evaluation: a predicted span is a true positive iff
/// its (start, end, type) triple appears in the gold spans of the same
/// sentence.
pub fn evaluate(pred: &Dataset, gold: &Dataset, ls: &LabelSet) -> Result<Metrics, PipelineError> {
    if pred.len() != gold.len() {
        return Err(PipelineError::SentenceMismatch(pred.len().min(gold.len())));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (i, (p, g)) in pred.iter().zip(gold.iter()).enumerate() {
        if p.sentence.id != g.sentence.id || p.sentence.len() != g.sentence.len() {
            return Err(PipelineError::SentenceMismatch(i));
        }
        let spans = |r: &Record| -> Vec<crate::corpus::Span> {
            match &r.annotation {
                Annotation::Tags(t) => crate::corpus::spans_from_tags(t, ls),
                Annotation::Lattice(_) => Vec::new(),
            }
        };
        let pred_spans = spans(p);
        let gold_spans: BTreeSet<_> = spans(g).into_iter().collect();
        let mut matched = BTreeSet::new();
        for s in &pred_spans {
            if gold_spans.contains(s) {
                tp += 1;
                matched.insert(s.clone());
            } else {
                fp += 1;
            }
        }
        fn_ += gold_spans.len() - matched.len();
    }
    Ok(Metrics::from_counts(tp, fp, fn_))
}

/// Training instance: sentence plus its allowed-tag lattice.
type Instance = (Sentence, AllowedLattice);

fn instances_of(d: &Dataset, k: usize) -> Vec<Instance> {
    d.iter()
        .map(|r| (r.sentence.clone(), r.annotation.to_lattice(k)))
        .collect()
}

fn apply_word_dropout(s: &Sentence, rate: f64, rng: &mut impl Rng) -> Sentence {
    if rate <= 0.0 {
        return s.clone();
    }
    let tokens = s
        .tokens
        .iter()
        .map(|t| {
            if rng.gen::<f64>() < rate {
                "\u{1}".to_string() // absent from any vocabulary: maps to UNK
            } else {
                t.clone()
            }
        })
        .collect();
    Sentence::new(s.id, tokens)
}

/// Loss and gradients of one instance under the partial-CRF objective.
fn instance_gradients(
    model: &Model,
    s: &Sentence,
    lattice: &AllowedLattice,
) -> (f64, EncoderGrads, Array2<f64>) {
    let h = encode(s, &model.encoder);
    let p = emissions(&h, &model.encoder);
    let loss = crf::partial_nll_loss(&p, &model.transitions, lattice)
        .expect("lattice shape checked at load");
    let (dp, dt) = crf::partial_loss_gradients(&p, &model.transitions, lattice)
        .expect("lattice shape checked at load");
    let enc_grads = encoder::encoder_backward(s, &model.encoder, &dp);
    (loss, enc_grads, dt)
}

fn sgd_step(model: &mut Model, mut enc_grads: EncoderGrads, mut dt: Array2<f64>, cfg: &TrainConfig) {
    let norm = (enc_grads.sq_l2() + dt.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if norm > cfg.grad_clip {
        let factor = cfg.grad_clip / norm;
        enc_grads.scale(factor);
        dt *= factor;
    }
    apply_gradients(&mut model.encoder, &enc_grads, cfg.learning_rate);
    model
        .transitions
        .scores_mut()
        .scaled_add(-cfg.learning_rate, &dt);
}

/// One pass of per-sentence SGD in shuffled order; returns the mean loss.
fn train_one_epoch(
    model: &mut Model,
    instances: &[Instance],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for &idx in &order {
        let (sentence, lattice) = &instances[idx];
        let dropped = apply_word_dropout(sentence, cfg.input_dropout, rng);
        let (loss, enc_grads, dt) = instance_gradients(model, &dropped, lattice);
        total += loss;
        sgd_step(model, enc_grads, dt, cfg);
    }
    total / instances.len() as f64
}

fn dev_f1(model: &Model, dev: &Dataset) -> f64 {
    if dev.is_empty() {
        return 0.0;
    }
    let sentences: Vec<Sentence> = dev.iter().map(|r| r.sentence.clone()).collect();
    let pred = tag(model, &sentences);
    evaluate(&pred, dev, &model.label_set)
        .expect("dev sentences are self-consistent")
        .f1
}

/// SGD training with early stopping on dev F1; returns the best-dev
/// checkpoint and its F1.
fn train_with_early_stopping(
    mut model: Model,
    instances: &[Instance],
    dev: &Dataset,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Model, f64), PipelineError> {
    if instances.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    let mut best = model.clone();
    let mut best_f1 = dev_f1(&model, dev);
    let mut since_improve = 0;
    for _epoch in 0..cfg.max_epochs {
        train_one_epoch(&mut model, instances, cfg, rng);
        let f1 = dev_f1(&model, dev);
        if f1 > best_f1 {
            best_f1 = f1;
            best = model.clone();
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, best_f1))
}

/// Pretrains the Partial-CRF tagger on the union of gold and distant
/// data, early-stopping on dev F1. The model fixes the label set and
/// vocabulary; construct it with [`Model::init`].
pub fn pretrain(
    model: Model,
    gold: &Dataset,
    distant: &Dataset,
    dev: &Dataset,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Model, PipelineError> {
    let k = model.num_tags();
    let mut instances = instances_of(gold, k);
    instances.extend(instances_of(distant, k));
    let (best, _) = train_with_early_stopping(model, &instances, dev, cfg, rng)?;
    Ok(best)
}

/// Retraining on gold plus the cleaned distant set; identical procedure
/// to pretraining on the reduced union.
pub fn retrain(
    model: Model,
    gold: &Dataset,
    cleaned: &Dataset,
    dev: &Dataset,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Model, PipelineError> {
    pretrain(model, gold, cleaned, dev, cfg, rng)
}

/// Outcome of the cleaning loop.
pub struct DenoiseResult {
    pub cleaned: Dataset,
    pub trace: Vec<EpochRecord>,
    pub policy: PolicyParams,
    /// Model retrained on the kept set in the final epoch.
    pub model: Model,
    /// Dev F1 of the epoch-style retraining on the full distant set;
    /// the baseline the first reward is measured against.
    pub f1_initial: f64,
}

/// The reinforcement cleaning loop over the distant set.
///
/// Per epoch: build states under the current tagger, sample keep/remove
/// actions, retrain the tagger on gold plus the kept instances, score it
/// on the dev set, convert the F1 delta into a reward and apply the
/// policy-gradient update over the symmetric-difference credit sets.
pub fn rl_denoise(
    pretrained: &Model,
    distant: &Dataset,
    train_gold: &Dataset,
    dev_gold: &Dataset,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DenoiseResult, PipelineError> {
    let k = pretrained.num_tags();
    if distant.is_empty() {
        return Ok(DenoiseResult {
            cleaned: distant.clone(),
            trace: Vec::new(),
            policy: PolicyParams::zeros(1, 1, 1, cfg.rl_learning_rate),
            model: pretrained.clone(),
            f1_initial: 0.0,
        });
    }
    let own_dim = own_state_dim(2 * pretrained.encoder.word_hidden());
    let state_dim = 2 * own_dim;
    let (h1, h2) = cfg.policy_hidden;
    let mut theta = PolicyParams::new(state_dim, h1, h2, cfg.rl_learning_rate, rng);
    let mut s_star: Array1<f64> = Array1::zeros(own_dim);
    let gold_instances = instances_of(train_gold, k);
    let distant_instances = instances_of(distant, k);

    // Inner retraining runs under common random numbers: the same
    // generator state for every epoch's initialization and shuffles, so
    // dev F1 is a deterministic function of the kept set and the reward
    // reflects only the change in removed sentences, not training noise.
    let inner_seed = cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(0x5EED);
    let retrain_on = |kept: &[Instance]| -> Model {
        let mut inner_rng = run_rng(inner_seed);
        let mut m = if cfg.rl_warm_start {
            pretrained.clone()
        } else {
            Model::init(
                pretrained.label_set.clone(),
                cfg,
                &[train_gold, distant, dev_gold],
                None,
                &mut inner_rng,
            )
        };
        for _ in 0..cfg.rl_inner_epochs {
            train_one_epoch(&mut m, kept, cfg, &mut inner_rng);
        }
        m
    };

    // F1^0 is measured with the same retraining procedure as the epoch
    // scores, otherwise the first reward carries a systematic offset
    // between full training and inner retraining.
    let mut all: Vec<Instance> = gold_instances.clone();
    all.extend(distant_instances.iter().cloned());
    let mut model = retrain_on(&all);
    drop(all);
    let f1_initial = dev_f1(&model, dev_gold);
    let mut f1_prev = f1_initial;
    let mut psi_prev: BTreeSet<usize> = BTreeSet::new();
    let mut cache_prev: BTreeMap<usize, (PolicyState, u8)> = BTreeMap::new();
    let mut trace: Vec<EpochRecord> = Vec::new();

    for epoch in 0..cfg.rl_epochs {
        let mut psi_cur: BTreeSet<usize> = BTreeSet::new();
        let mut cache_cur: BTreeMap<usize, (PolicyState, u8)> = BTreeMap::new();
        let mut actions: BTreeMap<usize, (u8, f64)> = BTreeMap::new();
        let mut removed_own_sum: Array1<f64> = Array1::zeros(own_dim);
        let mut raw_states: Vec<(usize, PolicyState)> = distant_instances
            .iter()
            .map(|(sentence, lattice)| {
                let h = encode(sentence, &model.encoder);
                let p = emissions(&h, &model.encoder);
                (sentence.id, build_state(&h, &p, lattice, &s_star))
            })
            .collect();
        // Standardize the per-sentence half of each state across the
        // distant set: raw emission-score features are orders of
        // magnitude larger than the hidden features and would saturate
        // the first policy layer. The s* half is already in this scale.
        let count = raw_states.len() as f64;
        let mut mean = Array1::<f64>::zeros(own_dim);
        for (_, st) in &raw_states {
            mean += &st.0.slice(ndarray::s![..own_dim]);
        }
        mean /= count;
        let mut var = Array1::<f64>::zeros(own_dim);
        for (_, st) in &raw_states {
            let d = &st.0.slice(ndarray::s![..own_dim]) - &mean;
            var += &(&d * &d);
        }
        var /= count;
        let std = var.mapv(|v| v.sqrt().max(1e-6));
        for (_, st) in &mut raw_states {
            let z = (&st.0.slice(ndarray::s![..own_dim]) - &mean) / &std;
            st.0.slice_mut(ndarray::s![..own_dim]).assign(&z);
        }
        for (id, state) in raw_states {
            let keep_prob = policy_forward(&state, &theta);
            let action = sample_action(keep_prob, rng);
            actions.insert(id, (action, keep_prob));
            if action == 0 {
                psi_cur.insert(id);
                removed_own_sum += &state.0.slice(ndarray::s![..own_dim]);
            }
            cache_cur.insert(id, (state, action));
        }
        // Running average over this epoch's removed states; carried over
        // unchanged when nothing was removed.
        if !psi_cur.is_empty() {
            s_star = removed_own_sum / psi_cur.len() as f64;
        }

        let mut kept: Vec<Instance> = gold_instances.clone();
        kept.extend(
            distant_instances
                .iter()
                .filter(|(s, _)| !psi_cur.contains(&s.id))
                .cloned(),
        );
        if kept.is_empty() {
            kept = gold_instances.clone();
        }
        let epoch_model = retrain_on(&kept);
        let f1_cur = dev_f1(&epoch_model, dev_gold);
        let r = policy::reward(f1_cur, f1_prev);
        let (omega_cur, omega_prev) = policy::compute_omegas(&psi_cur, &psi_prev);
        let mut merged: BTreeMap<usize, (PolicyState, u8)> = BTreeMap::new();
        for &id in &omega_cur {
            if let Some(e) = cache_cur.get(&id) {
                merged.insert(id, e.clone());
            }
        }
        for &id in &omega_prev {
            if let Some(e) = cache_prev.get(&id) {
                merged.insert(id, e.clone());
            }
        }
        policy::reinforce_update(&mut theta, &omega_cur, &omega_prev, r, &merged)
            .expect("credit sets are drawn from cached epochs");

        trace.push(EpochRecord {
            epoch,
            removed: psi_cur.clone(),
            f1: f1_cur,
            reward: r,
            actions,
        });
        model = epoch_model;
        f1_prev = f1_cur;
        psi_prev = psi_cur;
        cache_prev = cache_cur;
    }

    let final_removed = trace.last().map(|t| t.removed.clone()).unwrap_or_default();
    let cleaned = Dataset::new(
        distant
            .iter()
            .filter(|r| !final_removed.contains(&r.sentence.id))
            .cloned()
            .collect(),
    );
    Ok(DenoiseResult {
        cleaned,
        trace,
        policy: theta,
        model,
        f1_initial,
    })
}

/// Line-delimited audit trace: `epoch<TAB>removed<TAB>f1<TAB>reward`.
pub fn format_trace(trace: &[EpochRecord]) -> String {
    let mut out = String::new();
    for t in trace {
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\n",
            t.epoch,
            t.removed.len(),
            t.f1,
            t.reward
        ));
    }
    out
}

fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_string(out: &mut Vec<u8>, s: &str) {
    write_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PipelineError> {
        if self.pos + n > self.data.len() {
            return Err(PipelineError::Truncated);
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, PipelineError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, PipelineError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| PipelineError::Truncated)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, PipelineError> {
        let bytes = self.take(4 * n)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Serializes the model: magic, format version, label set, dimensions,
/// vocabularies, then all parameters as little-endian 32-bit floats in a
/// fixed row-major order.
pub fn model_to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    write_u32(&mut out, MODEL_VERSION);
    out.push(match model.label_set.scheme() {
        Scheme::Bio => 0,
        Scheme::Bioes => 1,
    });
    out.push(u8::from(model.char_only));
    let types = model.label_set.entity_types();
    write_u32(&mut out, types.len() as u32);
    for t in types {
        write_string(&mut out, t);
    }
    let emb = &model.encoder.embeddings;
    write_u32(&mut out, emb.word_dim() as u32);
    write_u32(&mut out, emb.char_dim() as u32);
    write_u32(&mut out, model.encoder.char_hidden() as u32);
    write_u32(&mut out, model.encoder.word_hidden() as u32);
    write_u32(&mut out, emb.num_words() as u32);
    for w in emb.words() {
        write_string(&mut out, w);
    }
    write_u32(&mut out, emb.num_chars() as u32);
    for &c in emb.chars() {
        write_u32(&mut out, c as u32);
    }
    let params = model.encoder.flatten();
    let trans = model.transitions.scores();
    write_u32(&mut out, (params.len() + trans.len()) as u32);
    for v in params.iter().chain(trans.iter()) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Inverse of [`model_to_bytes`]; fails cleanly on a bad magic, an
/// unsupported version or a truncated file, leaving no partial model.
pub fn model_from_bytes(data: &[u8]) -> Result<Model, PipelineError> {
    let mut r = Reader { data, pos: 0 };
    if r.take(5)? != MODEL_MAGIC {
        return Err(PipelineError::BadMagic);
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(PipelineError::VersionMismatch(version));
    }
    let scheme = match r.take(1)?[0] {
        0 => Scheme::Bio,
        _ => Scheme::Bioes,
    };
    let char_only = r.take(1)?[0] != 0;
    let n_types = r.u32()? as usize;
    let mut types = Vec::with_capacity(n_types);
    for _ in 0..n_types {
        types.push(r.string()?);
    }
    let type_refs: Vec<&str> = types.iter().map(|s| s.as_str()).collect();
    let label_set = LabelSet::new(&type_refs, scheme);
    let d_w = r.u32()? as usize;
    let d_c = r.u32()? as usize;
    let char_hidden = r.u32()? as usize;
    let word_hidden = r.u32()? as usize;
    let n_words = r.u32()? as usize;
    let mut words = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        words.push(r.string()?);
    }
    let n_chars = r.u32()? as usize;
    let mut chars = Vec::with_capacity(n_chars);
    for _ in 0..n_chars {
        chars.push(char::from_u32(r.u32()?).ok_or(PipelineError::Truncated)?);
    }
    let k = label_set.len();
    let word_input = if char_only { d_w } else { d_w + 2 * char_hidden };
    let mut embeddings =
        EmbeddingTable::from_word_vectors(words, Array2::zeros((n_words + 1, d_w)));
    // Placeholder values: every parameter below is overwritten by
    // assign_from_flat with the stored stream.
    embeddings.init_chars(chars, d_c, &mut ChaCha8Rng::seed_from_u64(0));
    let mut encoder = EncoderParams {
        embeddings,
        char_fwd: LstmParams::zeros(d_c, char_hidden),
        char_bwd: LstmParams::zeros(d_c, char_hidden),
        word_fwd: LstmParams::zeros(word_input, word_hidden),
        word_bwd: LstmParams::zeros(word_input, word_hidden),
        emit_w: Array2::zeros((k, 2 * word_hidden)),
        emit_b: Array1::zeros(k),
        char_only,
    };
    let total = r.u32()? as usize;
    let enc_count = encoder.flatten().len();
    let trans_count = (k + 2) * (k + 2);
    if total != enc_count + trans_count {
        return Err(PipelineError::Truncated);
    }
    let values = r.f32s(total)?;
    if r.pos != data.len() {
        return Err(PipelineError::Truncated);
    }
    encoder.assign_from_flat(&values[..enc_count]);
    let trans = Array2::from_shape_vec((k + 2, k + 2), values[enc_count..].to_vec())
        .expect("length checked above");
    Ok(Model {
        label_set,
        encoder,
        transitions: TransitionMatrix::from_array(trans),
        char_only,
    })
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), PipelineError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, PipelineError> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    model_from_bytes(&data)
}

/// Convenience: seeded generator for a whole run.
pub fn run_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
