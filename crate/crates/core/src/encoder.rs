//! Character-level and word-level bidirectional LSTM encoder producing
//! per-token hidden states and CRF emission scores, with full
//! backpropagation through time.
//!
//! The character stream inserts a boundary (space) character before the
//! first word and after every word; the character encoding of word `i`
//! concatenates the forward output at its trailing boundary with the
//! backward output at its leading boundary. In char-only mode the
//! character encoder is skipped and tokens feed the word BiLSTM directly
//! through the embedding table.

use std::collections::HashMap;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use thiserror::Error;

use crate::corpus::Sentence;
use crate::crf::EmissionMatrix;

/// Per-token concatenated forward/backward word-level outputs, `n x 2*d_h`.
pub type HiddenStates = Array2<f64>;

/// Boundary character separating words in the character stream.
pub const BOUNDARY_CHAR: char = ' ';

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("line {line}: ragged row (expected {want} values, got {got})")]
    RaggedRow { line: usize, want: usize, got: usize },
    #[error("line {line}: non-numeric value {value:?}")]
    NonNumeric { line: usize, value: String },
    #[error("line {line}: empty word")]
    EmptyWord { line: usize },
    #[error("embedding file is empty")]
    EmptyFile,
}

/// Word and character embedding lookup tables.
///
/// Row 0 of each table is the UNK vector (zeros by default, so tests are
/// deterministic); known entries start at row 1 in load/insert order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    words: Vec<String>,
    word_index: HashMap<String, usize>,
    word_vectors: Array2<f64>,
    chars: Vec<char>,
    char_index: HashMap<char, usize>,
    char_vectors: Array2<f64>,
}

impl EmbeddingTable {
    pub fn from_word_vectors(words: Vec<String>, vectors: Array2<f64>) -> Self {
        assert_eq!(words.len() + 1, vectors.nrows(), "row 0 is reserved for UNK");
        let word_index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i + 1))
            .collect();
        EmbeddingTable {
            words,
            word_index,
            word_vectors: vectors,
            chars: Vec::new(),
            char_index: HashMap::new(),
            char_vectors: Array2::zeros((1, 0)),
        }
    }

    /// Random word table over a fixed vocabulary, uniform(-sqrt(3/d), +sqrt(3/d)).
    pub fn random_words(words: Vec<String>, d_w: usize, rng: &mut impl Rng) -> Self {
        let bound = (3.0 / d_w as f64).sqrt();
        let mut vectors = Array2::zeros((words.len() + 1, d_w));
        for mut row in vectors.rows_mut().into_iter().skip(1) {
            for v in row.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Self::from_word_vectors(words, vectors)
    }

    /// Installs a character vocabulary with random vectors. The boundary
    /// character is always included.
    pub fn init_chars(&mut self, mut chars: Vec<char>, d_c: usize, rng: &mut impl Rng) {
        if !chars.contains(&BOUNDARY_CHAR) {
            chars.push(BOUNDARY_CHAR);
        }
        let bound = (3.0 / d_c.max(1) as f64).sqrt();
        let mut vectors = Array2::zeros((chars.len() + 1, d_c));
        for mut row in vectors.rows_mut().into_iter().skip(1) {
            for v in row.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        self.char_index = chars.iter().enumerate().map(|(i, c)| (*c, i + 1)).collect();
        self.chars = chars;
        self.char_vectors = vectors;
    }

    /// Re-initializes the UNK word row as uniform(-0.25, 0.25).
    pub fn randomize_unk(&mut self, rng: &mut impl Rng) {
        for v in self.word_vectors.row_mut(0).iter_mut() {
            *v = rng.gen_range(-0.25..0.25);
        }
    }

    pub fn word_dim(&self) -> usize {
        self.word_vectors.ncols()
    }

    pub fn char_dim(&self) -> usize {
        self.char_vectors.ncols()
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn word_row(&self, word: &str) -> usize {
        self.word_index.get(word).copied().unwrap_or(0)
    }

    pub fn char_row(&self, c: char) -> usize {
        self.char_index.get(&c).copied().unwrap_or(0)
    }

    pub fn word_vectors(&self) -> &Array2<f64> {
        &self.word_vectors
    }

    pub fn word_vectors_mut(&mut self) -> &mut Array2<f64> {
        &mut self.word_vectors
    }

    pub fn char_vectors(&self) -> &Array2<f64> {
        &self.char_vectors
    }

    pub fn char_vectors_mut(&mut self) -> &mut Array2<f64> {
        &mut self.char_vectors
    }
}

/// Parses word2vec text format: optional `V d` header, then
/// `word v1 ... vd` per line.
pub fn load_embeddings(text: &str) -> Result<EmbeddingTable, EncoderError> {
    let mut words = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        // Header line: exactly two integer fields at the top of the file.
        if i == 0 && fields.len() == 2 {
            if let (Ok(_v), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                dim = Some(d);
                continue;
            }
        }
        if fields.len() < 2 {
            return Err(EncoderError::RaggedRow {
                line: lineno,
                want: dim.map(|d| d + 1).unwrap_or(2),
                got: fields.len(),
            });
        }
        let word = fields[0];
        if word.is_empty() {
            return Err(EncoderError::EmptyWord { line: lineno });
        }
        let values: Result<Vec<f64>, _> = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| EncoderError::NonNumeric {
                    line: lineno,
                    value: f.to_string(),
                })
            })
            .collect();
        let values = values?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(EncoderError::RaggedRow {
                    line: lineno,
                    want: d,
                    got: values.len(),
                })
            }
            _ => {}
        }
        words.push(word.to_string());
        rows.push(values);
    }
    let d = dim.ok_or(EncoderError::EmptyFile)?;
    let mut vectors = Array2::zeros((words.len() + 1, d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            vectors[(i + 1, j)] = v;
        }
    }
    Ok(EmbeddingTable::from_word_vectors(words, vectors))
}

/// Gate weights and biases for one LSTM direction. Also serves as the
/// matching gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_xi: Array2<f64>,
    pub w_hi: Array2<f64>,
    pub b_i: Array1<f64>,
    pub w_xf: Array2<f64>,
    pub w_hf: Array2<f64>,
    pub b_f: Array1<f64>,
    pub w_xo: Array2<f64>,
    pub w_ho: Array2<f64>,
    pub b_o: Array1<f64>,
    pub w_xc: Array2<f64>,
    pub w_hc: Array2<f64>,
    pub b_c: Array1<f64>,
}

fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            w_xi: Array2::zeros((input_dim, hidden_dim)),
            w_hi: Array2::zeros((hidden_dim, hidden_dim)),
            b_i: Array1::zeros(hidden_dim),
            w_xf: Array2::zeros((input_dim, hidden_dim)),
            w_hf: Array2::zeros((hidden_dim, hidden_dim)),
            b_f: Array1::zeros(hidden_dim),
            w_xo: Array2::zeros((input_dim, hidden_dim)),
            w_ho: Array2::zeros((hidden_dim, hidden_dim)),
            b_o: Array1::zeros(hidden_dim),
            w_xc: Array2::zeros((input_dim, hidden_dim)),
            w_hc: Array2::zeros((hidden_dim, hidden_dim)),
            b_c: Array1::zeros(hidden_dim),
        }
    }

    /// Seeded Xavier-uniform weights, zero biases.
    pub fn random(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        LstmParams {
            w_xi: xavier(input_dim, hidden_dim, rng),
            w_hi: xavier(hidden_dim, hidden_dim, rng),
            b_i: Array1::zeros(hidden_dim),
            w_xf: xavier(input_dim, hidden_dim, rng),
            w_hf: xavier(hidden_dim, hidden_dim, rng),
            b_f: Array1::zeros(hidden_dim),
            w_xo: xavier(input_dim, hidden_dim, rng),
            w_ho: xavier(hidden_dim, hidden_dim, rng),
            b_o: Array1::zeros(hidden_dim),
            w_xc: xavier(input_dim, hidden_dim, rng),
            w_hc: xavier(hidden_dim, hidden_dim, rng),
            b_c: Array1::zeros(hidden_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_xi.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_xi.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim())
    }

    fn matrices(&self) -> [&Array2<f64>; 8] {
        [
            &self.w_xi, &self.w_hi, &self.w_xf, &self.w_hf, &self.w_xo, &self.w_ho, &self.w_xc,
            &self.w_hc,
        ]
    }

    fn matrices_mut(&mut self) -> [&mut Array2<f64>; 8] {
        [
            &mut self.w_xi,
            &mut self.w_hi,
            &mut self.w_xf,
            &mut self.w_hf,
            &mut self.w_xo,
            &mut self.w_ho,
            &mut self.w_xc,
            &mut self.w_hc,
        ]
    }

    fn biases(&self) -> [&Array1<f64>; 4] {
        [&self.b_i, &self.b_f, &self.b_o, &self.b_c]
    }

    fn biases_mut(&mut self) -> [&mut Array1<f64>; 4] {
        [&mut self.b_i, &mut self.b_f, &mut self.b_o, &mut self.b_c]
    }

    pub fn sq_l2(&self) -> f64 {
        let m: f64 = self.matrices().iter().map(|a| a.iter().map(|v| v * v).sum::<f64>()).sum();
        let b: f64 = self.biases().iter().map(|a| a.iter().map(|v| v * v).sum::<f64>()).sum();
        m + b
    }

    /// `self += factor * other`, field by field.
    pub fn scaled_add(&mut self, other: &LstmParams, factor: f64) {
        for (dst, src) in self.matrices_mut().into_iter().zip(other.matrices()) {
            dst.scaled_add(factor, src);
        }
        for (dst, src) in self.biases_mut().into_iter().zip(other.biases()) {
            dst.scaled_add(factor, src);
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend(self.w_xi.iter());
        out.extend(self.w_hi.iter());
        out.extend(self.b_i.iter());
        out.extend(self.w_xf.iter());
        out.extend(self.w_hf.iter());
        out.extend(self.b_f.iter());
        out.extend(self.w_xo.iter());
        out.extend(self.w_ho.iter());
        out.extend(self.b_o.iter());
        out.extend(self.w_xc.iter());
        out.extend(self.w_hc.iter());
        out.extend(self.b_c.iter());
    }

    pub fn assign_from(&mut self, values: &mut impl Iterator<Item = f64>) {
        for a in [
            &mut self.w_xi,
            &mut self.w_hi,
        ] {
            for v in a.iter_mut() {
                *v = values.next().expect("parameter stream exhausted");
            }
        }
        for v in self.b_i.iter_mut() {
            *v = values.next().expect("parameter stream exhausted");
        }
        for a in [&mut self.w_xf, &mut self.w_hf] {
            for v in a.iter_mut() {
                *v = values.next().expect("parameter stream exhausted");
            }
        }
        for v in self.b_f.iter_mut() {
            *v = values.next().expect("parameter stream exhausted");
        }
        for a in [&mut self.w_xo, &mut self.w_ho] {
            for v in a.iter_mut() {
                *v = values.next().expect("parameter stream exhausted");
            }
        }
        for v in self.b_o.iter_mut() {
            *v = values.next().expect("parameter stream exhausted");
        }
        for a in [&mut self.w_xc, &mut self.w_hc] {
            for v in a.iter_mut() {
                *v = values.next().expect("parameter stream exhausted");
            }
        }
        for v in self.b_c.iter_mut() {
            *v = values.next().expect("parameter stream exhausted");
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step:
/// `i = sigma(x W_xi + h W_hi + b_i)`, `f`, `o` analogous,
/// `c~ = tanh(x W_xc + h W_hc + b_c)`, `c = f*c_prev + i*c~`, `h = o*tanh(c)`.
pub fn lstm_cell(
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
    p: &LstmParams,
) -> (Array1<f64>, Array1<f64>) {
    let step = lstm_step(x, h_prev, c_prev, p);
    (step.h, step.c)
}

struct LstmStep {
    x: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    o: Array1<f64>,
    ctilde: Array1<f64>,
    c: Array1<f64>,
    h: Array1<f64>,
}

fn lstm_step(x: &Array1<f64>, h_prev: &Array1<f64>, c_prev: &Array1<f64>, p: &LstmParams) -> LstmStep {
    assert_eq!(x.len(), p.input_dim(), "input dimension mismatch");
    assert_eq!(h_prev.len(), p.hidden_dim(), "hidden dimension mismatch");
    assert_eq!(c_prev.len(), p.hidden_dim(), "cell dimension mismatch");
    let i = (x.dot(&p.w_xi) + h_prev.dot(&p.w_hi) + &p.b_i).mapv(sigmoid);
    let f = (x.dot(&p.w_xf) + h_prev.dot(&p.w_hf) + &p.b_f).mapv(sigmoid);
    let o = (x.dot(&p.w_xo) + h_prev.dot(&p.w_ho) + &p.b_o).mapv(sigmoid);
    let ctilde = (x.dot(&p.w_xc) + h_prev.dot(&p.w_hc) + &p.b_c).mapv(f64::tanh);
    let c = &f * c_prev + &i * &ctilde;
    let h = &o * &c.mapv(f64::tanh);
    LstmStep {
        x: x.clone(),
        i,
        f,
        o,
        ctilde,
        c,
        h,
    }
}

struct LstmTrace {
    steps: Vec<LstmStep>,
    hidden_dim: usize,
}

fn lstm_forward(inputs: &[Array1<f64>], p: &LstmParams) -> LstmTrace {
    let d_h = p.hidden_dim();
    let mut h = Array1::zeros(d_h);
    let mut c = Array1::zeros(d_h);
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let step = lstm_step(x, &h, &c, p);
        h = step.h.clone();
        c = step.c.clone();
        steps.push(step);
    }
    LstmTrace {
        steps,
        hidden_dim: d_h,
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Backprop through time. `dh_out[t]` is the loss gradient on the step-t
/// hidden output; returns parameter gradients and per-step input gradients.
fn lstm_backward(
    trace: &LstmTrace,
    p: &LstmParams,
    dh_out: &[Array1<f64>],
) -> (LstmParams, Vec<Array1<f64>>) {
    let n = trace.steps.len();
    let d_h = trace.hidden_dim;
    let mut grads = p.zeros_like();
    let mut dx_all = vec![Array1::zeros(p.input_dim()); n];
    let mut dh_next = Array1::zeros(d_h);
    let mut dc_next = Array1::zeros(d_h);
    for t in (0..n).rev() {
        let step = &trace.steps[t];
        let tanh_c = step.c.mapv(f64::tanh);
        let dh = &dh_out[t] + &dh_next;
        let d_o = &dh * &tanh_c;
        let mut dc = &dh * &step.o * &tanh_c.mapv(|v| 1.0 - v * v);
        dc += &dc_next;
        let (h_prev, c_prev) = if t > 0 {
            (trace.steps[t - 1].h.clone(), trace.steps[t - 1].c.clone())
        } else {
            (Array1::zeros(d_h), Array1::zeros(d_h))
        };
        let d_f = &dc * &c_prev;
        let d_i = &dc * &step.ctilde;
        let d_ctilde = &dc * &step.i;
        let dz_i = &d_i * &step.i * &step.i.mapv(|v| 1.0 - v);
        let dz_f = &d_f * &step.f * &step.f.mapv(|v| 1.0 - v);
        let dz_o = &d_o * &step.o * &step.o.mapv(|v| 1.0 - v);
        let dz_c = &d_ctilde * &step.ctilde.mapv(|v| 1.0 - v * v);

        grads.w_xi += &outer(&step.x, &dz_i);
        grads.w_hi += &outer(&h_prev, &dz_i);
        grads.b_i += &dz_i;
        grads.w_xf += &outer(&step.x, &dz_f);
        grads.w_hf += &outer(&h_prev, &dz_f);
        grads.b_f += &dz_f;
        grads.w_xo += &outer(&step.x, &dz_o);
        grads.w_ho += &outer(&h_prev, &dz_o);
        grads.b_o += &dz_o;
        grads.w_xc += &outer(&step.x, &dz_c);
        grads.w_hc += &outer(&h_prev, &dz_c);
        grads.b_c += &dz_c;

        dx_all[t] = dz_i.dot(&p.w_xi.t())
            + dz_f.dot(&p.w_xf.t())
            + dz_o.dot(&p.w_xo.t())
            + dz_c.dot(&p.w_xc.t());
        dh_next = dz_i.dot(&p.w_hi.t())
            + dz_f.dot(&p.w_hf.t())
            + dz_o.dot(&p.w_ho.t())
            + dz_c.dot(&p.w_hc.t());
        dc_next = &dc * &step.f;
    }
    (grads, dx_all)
}

/// Full encoder parameter set: embeddings, char/word BiLSTMs and the
/// linear emission layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embeddings: EmbeddingTable,
    pub char_fwd: LstmParams,
    pub char_bwd: LstmParams,
    pub word_fwd: LstmParams,
    pub word_bwd: LstmParams,
    /// `k x 2*d_h` emission weight.
    pub emit_w: Array2<f64>,
    pub emit_b: Array1<f64>,
    pub char_only: bool,
}

impl EncoderParams {
    pub fn new(
        embeddings: EmbeddingTable,
        char_hidden: usize,
        word_hidden: usize,
        num_tags: usize,
        char_only: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let d_w = embeddings.word_dim();
        let d_c = embeddings.char_dim();
        let word_input = if char_only { d_w } else { d_w + 2 * char_hidden };
        EncoderParams {
            char_fwd: LstmParams::random(d_c, char_hidden, rng),
            char_bwd: LstmParams::random(d_c, char_hidden, rng),
            word_fwd: LstmParams::random(word_input, word_hidden, rng),
            word_bwd: LstmParams::random(word_input, word_hidden, rng),
            emit_w: xavier(num_tags, 2 * word_hidden, rng),
            emit_b: Array1::zeros(num_tags),
            embeddings,
            char_only,
        }
    }

    pub fn char_hidden(&self) -> usize {
        self.char_fwd.hidden_dim()
    }

    pub fn word_hidden(&self) -> usize {
        self.word_fwd.hidden_dim()
    }

    pub fn num_tags(&self) -> usize {
        self.emit_w.nrows()
    }

    /// Flat little-endian-stable parameter order shared by serialization
    /// and gradient checks.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.embeddings.word_vectors.iter());
        out.extend(self.embeddings.char_vectors.iter());
        self.char_fwd.flatten_into(&mut out);
        self.char_bwd.flatten_into(&mut out);
        self.word_fwd.flatten_into(&mut out);
        self.word_bwd.flatten_into(&mut out);
        out.extend(self.emit_w.iter());
        out.extend(self.emit_b.iter());
        out
    }

    pub fn assign_from_flat(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for v in self.embeddings.word_vectors.iter_mut() {
            *v = it.next().expect("parameter stream exhausted");
        }
        for v in self.embeddings.char_vectors.iter_mut() {
            *v = it.next().expect("parameter stream exhausted");
        }
        self.char_fwd.assign_from(&mut it);
        self.char_bwd.assign_from(&mut it);
        self.word_fwd.assign_from(&mut it);
        self.word_bwd.assign_from(&mut it);
        for v in self.emit_w.iter_mut() {
            *v = it.next().expect("parameter stream exhausted");
        }
        for v in self.emit_b.iter_mut() {
            *v = it.next().expect("parameter stream exhausted");
        }
        assert!(it.next().is_none(), "excess parameters in stream");
    }
}

/// Gradients mirroring [`EncoderParams`]; embedding gradients are dense
/// tables with zero rows for unused entries.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub word_emb: Array2<f64>,
    pub char_emb: Array2<f64>,
    pub char_fwd: LstmParams,
    pub char_bwd: LstmParams,
    pub word_fwd: LstmParams,
    pub word_bwd: LstmParams,
    pub emit_w: Array2<f64>,
    pub emit_b: Array1<f64>,
}

impl EncoderGrads {
    pub fn zeros_like(p: &EncoderParams) -> Self {
        EncoderGrads {
            word_emb: Array2::zeros(p.embeddings.word_vectors.dim()),
            char_emb: Array2::zeros(p.embeddings.char_vectors.dim()),
            char_fwd: p.char_fwd.zeros_like(),
            char_bwd: p.char_bwd.zeros_like(),
            word_fwd: p.word_fwd.zeros_like(),
            word_bwd: p.word_bwd.zeros_like(),
            emit_w: Array2::zeros(p.emit_w.dim()),
            emit_b: Array1::zeros(p.emit_b.len()),
        }
    }

    pub fn sq_l2(&self) -> f64 {
        self.word_emb.iter().map(|v| v * v).sum::<f64>()
            + self.char_emb.iter().map(|v| v * v).sum::<f64>()
            + self.char_fwd.sq_l2()
            + self.char_bwd.sq_l2()
            + self.word_fwd.sq_l2()
            + self.word_bwd.sq_l2()
            + self.emit_w.iter().map(|v| v * v).sum::<f64>()
            + self.emit_b.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn scale(&mut self, factor: f64) {
        self.word_emb *= factor;
        self.char_emb *= factor;
        for p in [
            &mut self.char_fwd,
            &mut self.char_bwd,
            &mut self.word_fwd,
            &mut self.word_bwd,
        ] {
            for m in p.matrices_mut() {
                *m *= factor;
            }
            for b in p.biases_mut() {
                *b *= factor;
            }
        }
        self.emit_w *= factor;
        self.emit_b *= factor;
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.word_emb.iter());
        out.extend(self.char_emb.iter());
        self.char_fwd.flatten_into(&mut out);
        self.char_bwd.flatten_into(&mut out);
        self.word_fwd.flatten_into(&mut out);
        self.word_bwd.flatten_into(&mut out);
        out.extend(self.emit_w.iter());
        out.extend(self.emit_b.iter());
        out
    }
}

/// Applies an SGD step `params -= lr * grads` across every table.
pub fn apply_gradients(p: &mut EncoderParams, g: &EncoderGrads, lr: f64) {
    p.embeddings.word_vectors.scaled_add(-lr, &g.word_emb);
    p.embeddings.char_vectors.scaled_add(-lr, &g.char_emb);
    p.char_fwd.scaled_add(&g.char_fwd, -lr);
    p.char_bwd.scaled_add(&g.char_bwd, -lr);
    p.word_fwd.scaled_add(&g.word_fwd, -lr);
    p.word_bwd.scaled_add(&g.word_bwd, -lr);
    p.emit_w.scaled_add(-lr, &g.emit_w);
    p.emit_b.scaled_add(-lr, &g.emit_b);
}

/// Character stream with a boundary before the first word and after each
/// word, plus the stream positions of those boundaries.
fn char_stream(s: &Sentence, emb: &EmbeddingTable) -> (Vec<usize>, Vec<usize>) {
    let mut rows = vec![emb.char_row(BOUNDARY_CHAR)];
    let mut boundaries = vec![0usize];
    for token in &s.tokens {
        for c in token.chars() {
            rows.push(emb.char_row(c));
        }
        rows.push(emb.char_row(BOUNDARY_CHAR));
        boundaries.push(rows.len() - 1);
    }
    (rows, boundaries)
}

struct EncodeCache {
    char_rows: Vec<usize>,
    boundaries: Vec<usize>,
    char_fwd_trace: Option<LstmTrace>,
    char_bwd_trace: Option<LstmTrace>,
    word_fwd_trace: LstmTrace,
    word_bwd_trace: LstmTrace,
    word_rows: Vec<usize>,
}

fn encode_cached(s: &Sentence, p: &EncoderParams) -> (HiddenStates, EncodeCache) {
    let emb = &p.embeddings;
    let n = s.len();
    let word_rows: Vec<usize> = s.tokens.iter().map(|t| emb.word_row(t)).collect();

    let (char_rows, boundaries, char_fwd_trace, char_bwd_trace, char_enc) = if p.char_only {
        (Vec::new(), Vec::new(), None, None, None)
    } else {
        let (rows, boundaries) = char_stream(s, emb);
        let inputs: Vec<Array1<f64>> =
            rows.iter().map(|&r| emb.char_vectors.row(r).to_owned()).collect();
        let rev_inputs: Vec<Array1<f64>> = inputs.iter().rev().cloned().collect();
        let fwd = lstm_forward(&inputs, &p.char_fwd);
        let bwd = lstm_forward(&rev_inputs, &p.char_bwd);
        let stream_len = rows.len();
        // h^c_i = fwd at boundary i (+1 in `boundaries`) concat bwd at
        // boundary i-1.
        let mut enc = Vec::with_capacity(n);
        for i in 0..n {
            let fwd_pos = boundaries[i + 1];
            let bwd_pos = stream_len - 1 - boundaries[i];
            let mut v = Array1::zeros(2 * p.char_hidden());
            v.slice_mut(ndarray::s![..p.char_hidden()])
                .assign(&fwd.steps[fwd_pos].h);
            v.slice_mut(ndarray::s![p.char_hidden()..])
                .assign(&bwd.steps[bwd_pos].h);
            enc.push(v);
        }
        (rows, boundaries, Some(fwd), Some(bwd), Some(enc))
    };

    let word_inputs: Vec<Array1<f64>> = (0..n)
        .map(|i| {
            let e = emb.word_vectors.row(word_rows[i]).to_owned();
            match &char_enc {
                None => e,
                Some(enc) => {
                    let mut v = Array1::zeros(e.len() + enc[i].len());
                    v.slice_mut(ndarray::s![..e.len()]).assign(&e);
                    v.slice_mut(ndarray::s![e.len()..]).assign(&enc[i]);
                    v
                }
            }
        })
        .collect();
    let rev_word_inputs: Vec<Array1<f64>> = word_inputs.iter().rev().cloned().collect();
    let word_fwd_trace = lstm_forward(&word_inputs, &p.word_fwd);
    let word_bwd_trace = lstm_forward(&rev_word_inputs, &p.word_bwd);

    let d_h = p.word_hidden();
    let mut h = Array2::zeros((n, 2 * d_h));
    for i in 0..n {
        h.row_mut(i)
            .slice_mut(ndarray::s![..d_h])
            .assign(&word_fwd_trace.steps[i].h);
        h.row_mut(i)
            .slice_mut(ndarray::s![d_h..])
            .assign(&word_bwd_trace.steps[n - 1 - i].h);
    }
    (
        h,
        EncodeCache {
            char_rows,
            boundaries,
            char_fwd_trace,
            char_bwd_trace,
            word_fwd_trace,
            word_bwd_trace,
            word_rows,
        },
    )
}

/// Per-token hidden states `h_i = fwd_i concat bwd_i` of the word-level
/// BiLSTM over embedding-plus-character inputs.
pub fn encode(s: &Sentence, p: &EncoderParams) -> HiddenStates {
    encode_cached(s, p).0
}

/// Emission scores `P = H W^T + b`.
pub fn emissions(h: &HiddenStates, p: &EncoderParams) -> EmissionMatrix {
    assert_eq!(h.ncols(), p.emit_w.ncols(), "hidden dimension mismatch");
    h.dot(&p.emit_w.t()) + &p.emit_b
}

/// Backpropagates a loss gradient on the emission matrix through the
/// linear layer, both BiLSTMs and the embedding lookups.
pub fn encoder_backward(s: &Sentence, p: &EncoderParams, dp_emit: &EmissionMatrix) -> EncoderGrads {
    let (h, cache) = encode_cached(s, p);
    assert_eq!(dp_emit.nrows(), h.nrows(), "gradient shape mismatch");
    assert_eq!(dp_emit.ncols(), p.num_tags(), "gradient shape mismatch");
    let n = h.nrows();
    let d_h = p.word_hidden();
    let mut grads = EncoderGrads::zeros_like(p);

    grads.emit_w = dp_emit.t().dot(&h);
    grads.emit_b = dp_emit.sum_axis(Axis(0));
    let dh = dp_emit.dot(&p.emit_w); // n x 2*d_h

    let dh_fwd: Vec<Array1<f64>> = (0..n).map(|i| dh.row(i).slice(ndarray::s![..d_h]).to_owned()).collect();
    let dh_bwd: Vec<Array1<f64>> = (0..n)
        .rev()
        .map(|i| dh.row(i).slice(ndarray::s![d_h..]).to_owned())
        .collect();
    let (g_word_fwd, dx_fwd) = lstm_backward(&cache.word_fwd_trace, &p.word_fwd, &dh_fwd);
    let (g_word_bwd, dx_bwd_rev) = lstm_backward(&cache.word_bwd_trace, &p.word_bwd, &dh_bwd);
    grads.word_fwd = g_word_fwd;
    grads.word_bwd = g_word_bwd;

    let d_w = p.embeddings.word_dim();
    let d_hc = p.char_hidden();
    // Combined input gradient per token: forward trace index i, backward
    // trace index n-1-i.
    let mut d_char_enc: Vec<Array1<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let dx = &dx_fwd[i] + &dx_bwd_rev[n - 1 - i];
        let row = cache.word_rows[i];
        grads
            .word_emb
            .row_mut(row)
            .scaled_add(1.0, &dx.slice(ndarray::s![..d_w]));
        if !p.char_only {
            d_char_enc.push(dx.slice(ndarray::s![d_w..]).to_owned());
        }
    }

    if !p.char_only {
        let fwd_trace = cache.char_fwd_trace.as_ref().unwrap();
        let bwd_trace = cache.char_bwd_trace.as_ref().unwrap();
        let stream_len = cache.char_rows.len();
        let mut dh_char_fwd = vec![Array1::zeros(d_hc); stream_len];
        let mut dh_char_bwd = vec![Array1::zeros(d_hc); stream_len];
        for i in 0..n {
            let fwd_pos = cache.boundaries[i + 1];
            let bwd_pos = stream_len - 1 - cache.boundaries[i];
            dh_char_fwd[fwd_pos] += &d_char_enc[i].slice(ndarray::s![..d_hc]);
            dh_char_bwd[bwd_pos] += &d_char_enc[i].slice(ndarray::s![d_hc..]);
        }
        let (g_char_fwd, dx_char_fwd) = lstm_backward(fwd_trace, &p.char_fwd, &dh_char_fwd);
        let (g_char_bwd, dx_char_bwd_rev) = lstm_backward(bwd_trace, &p.char_bwd, &dh_char_bwd);
        grads.char_fwd = g_char_fwd;
        grads.char_bwd = g_char_bwd;
        for pos in 0..stream_len {
            let d = &dx_char_fwd[pos] + &dx_char_bwd_rev[stream_len - 1 - pos];
            grads
                .char_emb
                .row_mut(cache.char_rows[pos])
                .scaled_add(1.0, &d);
        }
    }
    grads
}
