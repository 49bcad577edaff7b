//! Linear-chain CRF layer: sequence scoring, exact log-partition via the
//! forward algorithm, lattice-constrained log-partition for partial
//! annotations, Viterbi decoding, and analytic gradients via
//! forward-backward marginals.
//!
//! All dynamic programs run in log space with a max-shifted log-sum-exp.

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::corpus::{AllowedLattice, TagSequence};

/// Per-token tag scores, `n x k`.
pub type EmissionMatrix = Array2<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum CrfError {
    #[error("tag sequence length {got} does not match emission rows {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("lattice length {got} does not match emission rows {want}")]
    LatticeMismatch { got: usize, want: usize },
    #[error("lattice tag inventory {got} does not match emission columns {want}")]
    TagCountMismatch { got: usize, want: usize },
}

/// Tag-to-tag transition scores, `(k+2) x (k+2)` with BOS/EOS appended.
///
/// Scored paths start at BOS and end at EOS; the BOS column and EOS row
/// are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    scores: Array2<f64>,
    k: usize,
}

impl TransitionMatrix {
    pub fn zeros(k: usize) -> Self {
        TransitionMatrix {
            scores: Array2::zeros((k + 2, k + 2)),
            k,
        }
    }

    /// Seeded uniform(-0.1, 0.1) initialization.
    pub fn random(k: usize, rng: &mut impl Rng) -> Self {
        let scores = Array2::from_shape_fn((k + 2, k + 2), |_| rng.gen_range(-0.1..0.1));
        TransitionMatrix { scores, k }
    }

    pub fn from_array(scores: Array2<f64>) -> Self {
        let dim = scores.nrows();
        assert_eq!(dim, scores.ncols());
        assert!(dim >= 3, "need at least one tag plus BOS/EOS");
        TransitionMatrix { scores, k: dim - 2 }
    }

    pub fn num_tags(&self) -> usize {
        self.k
    }

    pub fn bos(&self) -> usize {
        self.k
    }

    pub fn eos(&self) -> usize {
        self.k + 1
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.scores[(from, to)]
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn scores_mut(&mut self) -> &mut Array2<f64> {
        &mut self.scores
    }
}

/// Decoded path with its attained score.
#[derive(Debug, Clone, PartialEq)]
pub struct PathScore {
    pub score: f64,
    pub tags: Vec<usize>,
}

/// Max-shifted log of the sum of exponentials; empty input yields -inf.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_dims(p: &EmissionMatrix, t: &TransitionMatrix) {
    assert_eq!(p.ncols(), t.num_tags(), "emission columns must match tag count");
    assert!(p.nrows() >= 1, "need at least one token");
}

fn check_lattice(p: &EmissionMatrix, l: &AllowedLattice) -> Result<(), CrfError> {
    if l.len() != p.nrows() {
        return Err(CrfError::LatticeMismatch {
            got: l.len(),
            want: p.nrows(),
        });
    }
    if l.num_tags() != p.ncols() {
        return Err(CrfError::TagCountMismatch {
            got: l.num_tags(),
            want: p.ncols(),
        });
    }
    Ok(())
}

/// Path score: emissions along the sequence plus transitions including
/// the BOS -> y_1 and y_n -> EOS boundary terms.
pub fn score_sequence(
    p: &EmissionMatrix,
    t: &TransitionMatrix,
    y: &TagSequence,
) -> Result<f64, CrfError> {
    check_dims(p, t);
    let tags = y.tags();
    if tags.len() != p.nrows() {
        return Err(CrfError::LengthMismatch {
            got: tags.len(),
            want: p.nrows(),
        });
    }
    let mut score = t.get(t.bos(), tags[0]);
    for (i, &tag) in tags.iter().enumerate() {
        score += p[(i, tag)];
        if i + 1 < tags.len() {
            score += t.get(tag, tags[i + 1]);
        }
    }
    score += t.get(tags[tags.len() - 1], t.eos());
    Ok(score)
}

/// Forward recursion restricted to the lattice's allowed sets; with an
/// all-allowing lattice this is the full log-partition.
fn forward_log_partition(p: &EmissionMatrix, t: &TransitionMatrix, l: &AllowedLattice) -> f64 {
    let n = p.nrows();
    let k = p.ncols();
    let mut alpha = Array1::from_elem(k, f64::NEG_INFINITY);
    for tag in l.allowed_at(0) {
        alpha[tag] = t.get(t.bos(), tag) + p[(0, tag)];
    }
    let mut scratch = Vec::with_capacity(k);
    for i in 1..n {
        let mut next = Array1::from_elem(k, f64::NEG_INFINITY);
        for to in l.allowed_at(i) {
            scratch.clear();
            for from in l.allowed_at(i - 1) {
                scratch.push(alpha[from] + t.get(from, to));
            }
            next[to] = log_sum_exp(&scratch) + p[(i, to)];
        }
        alpha = next;
    }
    scratch.clear();
    for tag in l.allowed_at(n - 1) {
        scratch.push(alpha[tag] + t.get(tag, t.eos()));
    }
    log_sum_exp(&scratch)
}

/// log of the sum over all `k^n` tag sequences of `exp(score)`.
pub fn log_partition(p: &EmissionMatrix, t: &TransitionMatrix) -> f64 {
    check_dims(p, t);
    let all = AllowedLattice::all_allowed(p.nrows(), p.ncols());
    forward_log_partition(p, t, &all)
}

/// log of the sum over sequences in the lattice's per-position product set.
pub fn constrained_log_partition(
    p: &EmissionMatrix,
    t: &TransitionMatrix,
    l: &AllowedLattice,
) -> Result<f64, CrfError> {
    check_dims(p, t);
    check_lattice(p, l)?;
    Ok(forward_log_partition(p, t, l))
}

/// Negative log likelihood of a committed tag sequence.
pub fn nll_loss(p: &EmissionMatrix, t: &TransitionMatrix, y: &TagSequence) -> Result<f64, CrfError> {
    Ok(log_partition(p, t) - score_sequence(p, t, y)?)
}

/// Partial-annotation loss: `log Z - log Z_constrained`.
///
/// Equals [`nll_loss`] for all-singleton lattices and 0 for all-allowing
/// ones.
pub fn partial_nll_loss(
    p: &EmissionMatrix,
    t: &TransitionMatrix,
    l: &AllowedLattice,
) -> Result<f64, CrfError> {
    Ok(log_partition(p, t) - constrained_log_partition(p, t, l)?)
}

/// Max-score decoding. Ties break toward the lowest tag index at every
/// backpointer, making the result deterministic.
pub fn viterbi(p: &EmissionMatrix, t: &TransitionMatrix) -> PathScore {
    check_dims(p, t);
    let n = p.nrows();
    let k = p.ncols();
    let mut delta = Array1::zeros(k);
    for tag in 0..k {
        delta[tag] = t.get(t.bos(), tag) + p[(0, tag)];
    }
    let mut backptr = Array2::zeros((n, k));
    for i in 1..n {
        let mut next = Array1::from_elem(k, f64::NEG_INFINITY);
        for to in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut best_from = 0;
            for from in 0..k {
                let cand = delta[from] + t.get(from, to);
                if cand > best {
                    best = cand;
                    best_from = from;
                }
            }
            next[to] = best + p[(i, to)];
            backptr[(i, to)] = best_from;
        }
        delta = next;
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_tag = 0;
    for tag in 0..k {
        let cand = delta[tag] + t.get(tag, t.eos());
        if cand > best {
            best = cand;
            best_tag = tag;
        }
    }
    let mut tags = vec![0usize; n];
    tags[n - 1] = best_tag;
    for i in (1..n).rev() {
        tags[i - 1] = backptr[(i, tags[i])];
    }
    PathScore { score: best, tags }
}

/// Forward-backward tag marginals under a lattice, plus the expected
/// pairwise transition counts (including BOS/EOS boundary rows).
struct Marginals {
    /// `n x k` position-tag probabilities.
    unigram: Array2<f64>,
    /// `(k+2) x (k+2)` expected transition counts summed over positions.
    pairwise: Array2<f64>,
}

fn forward_backward(p: &EmissionMatrix, t: &TransitionMatrix, l: &AllowedLattice) -> Marginals {
    let n = p.nrows();
    let k = p.ncols();
    let mut alpha = Array2::from_elem((n, k), f64::NEG_INFINITY);
    for tag in l.allowed_at(0) {
        alpha[(0, tag)] = t.get(t.bos(), tag) + p[(0, tag)];
    }
    let mut scratch = Vec::with_capacity(k);
    for i in 1..n {
        for to in l.allowed_at(i) {
            scratch.clear();
            for from in l.allowed_at(i - 1) {
                scratch.push(alpha[(i - 1, from)] + t.get(from, to));
            }
            alpha[(i, to)] = log_sum_exp(&scratch) + p[(i, to)];
        }
    }
    let mut beta = Array2::from_elem((n, k), f64::NEG_INFINITY);
    for tag in l.allowed_at(n - 1) {
        beta[(n - 1, tag)] = t.get(tag, t.eos());
    }
    for i in (0..n - 1).rev() {
        for from in l.allowed_at(i) {
            scratch.clear();
            for to in l.allowed_at(i + 1) {
                scratch.push(t.get(from, to) + p[(i + 1, to)] + beta[(i + 1, to)]);
            }
            beta[(i, from)] = log_sum_exp(&scratch);
        }
    }
    scratch.clear();
    for tag in l.allowed_at(n - 1) {
        scratch.push(alpha[(n - 1, tag)] + t.get(tag, t.eos()));
    }
    let log_z = log_sum_exp(&scratch);

    let mut unigram = Array2::zeros((n, k));
    for i in 0..n {
        for tag in l.allowed_at(i) {
            unigram[(i, tag)] = (alpha[(i, tag)] + beta[(i, tag)] - log_z).exp();
        }
    }
    let mut pairwise = Array2::zeros((k + 2, k + 2));
    for tag in l.allowed_at(0) {
        pairwise[(t.bos(), tag)] += unigram[(0, tag)];
    }
    for i in 0..n - 1 {
        for from in l.allowed_at(i) {
            for to in l.allowed_at(i + 1) {
                let lp = alpha[(i, from)] + t.get(from, to) + p[(i + 1, to)]
                    + beta[(i + 1, to)]
                    - log_z;
                pairwise[(from, to)] += lp.exp();
            }
        }
    }
    for tag in l.allowed_at(n - 1) {
        pairwise[(tag, t.eos())] += unigram[(n - 1, tag)];
    }
    Marginals { unigram, pairwise }
}

/// Analytic gradient of [`partial_nll_loss`] with respect to emissions and
/// transitions: unconstrained marginals minus lattice-constrained ones.
pub fn partial_loss_gradients(
    p: &EmissionMatrix,
    t: &TransitionMatrix,
    l: &AllowedLattice,
) -> Result<(Array2<f64>, Array2<f64>), CrfError> {
    check_dims(p, t);
    check_lattice(p, l)?;
    let all = AllowedLattice::all_allowed(p.nrows(), p.ncols());
    let free = forward_backward(p, t, &all);
    let clamped = forward_backward(p, t, l);
    Ok((
        free.unigram - clamped.unigram,
        free.pairwise - clamped.pairwise,
    ))
}

/// Gradient of [`nll_loss`], i.e. the all-singleton lattice case.
pub fn nll_loss_gradients(
    p: &EmissionMatrix,
    t: &TransitionMatrix,
    y: &TagSequence,
) -> Result<(Array2<f64>, Array2<f64>), CrfError> {
    let l = AllowedLattice::from_tags(y, p.ncols());
    partial_loss_gradients(p, t, &l)
}
