//! REINFORCE denoiser: fixed-length state construction per distantly
//! labeled sentence, a two-hidden-layer feed-forward policy with a
//! Bernoulli keep/remove action, reward bookkeeping over removed-instance
//! sets, and the policy-gradient update.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::corpus::AllowedLattice;
use crate::crf::EmissionMatrix;
use crate::encoder::HiddenStates;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("no cached state/action for instance {0}")]
    MissingCacheEntry(usize),
}

/// Fixed-length denoiser state: first/last hidden rows, pooled label-score
/// summary, and the running average of previously removed states.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState(pub Array1<f64>);

impl PolicyState {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Two tanh hidden layers and a logistic output scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: f64,
    pub learning_rate: f64,
}

fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

impl PolicyParams {
    pub fn new(input_dim: usize, h1: usize, h2: usize, learning_rate: f64, rng: &mut impl Rng) -> Self {
        PolicyParams {
            w1: xavier(input_dim, h1, rng),
            b1: Array1::zeros(h1),
            w2: xavier(h1, h2, rng),
            b2: Array1::zeros(h2),
            w3: Array1::from_shape_fn(h2, |_| rng.gen_range(-0.1..0.1)),
            b3: 0.0,
            learning_rate,
        }
    }

    pub fn zeros(input_dim: usize, h1: usize, h2: usize, learning_rate: f64) -> Self {
        PolicyParams {
            w1: Array2::zeros((input_dim, h1)),
            b1: Array1::zeros(h1),
            w2: Array2::zeros((h1, h2)),
            b2: Array1::zeros(h2),
            w3: Array1::zeros(h2),
            b3: 0.0,
            learning_rate,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.w3.iter());
        out.push(self.b3);
        out
    }

    pub fn assign_from_flat(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for v in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
            .chain(self.w3.iter_mut())
        {
            *v = it.next().expect("parameter stream exhausted");
        }
        self.b3 = it.next().expect("parameter stream exhausted");
        assert!(it.next().is_none());
    }
}

/// Gradient of the log-probability of one action w.r.t. the policy
/// parameters, same shapes as [`PolicyParams`].
#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: f64,
}

impl PolicyGrads {
    fn zeros_like(p: &PolicyParams) -> Self {
        PolicyGrads {
            w1: Array2::zeros(p.w1.dim()),
            b1: Array1::zeros(p.b1.len()),
            w2: Array2::zeros(p.w2.dim()),
            b2: Array1::zeros(p.b2.len()),
            w3: Array1::zeros(p.w3.len()),
            b3: 0.0,
        }
    }

    /// Flat view in the same order as [`PolicyParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.w3.iter());
        out.push(self.b3);
        out
    }

    fn scaled_add(&mut self, other: &PolicyGrads, factor: f64) {
        self.w1.scaled_add(factor, &other.w1);
        self.b1.scaled_add(factor, &other.b1);
        self.w2.scaled_add(factor, &other.w2);
        self.b2.scaled_add(factor, &other.b2);
        self.w3.scaled_add(factor, &other.w3);
        self.b3 += factor * other.b3;
    }
}

/// Removal trace for one RL epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Ids of instances removed this epoch.
    pub removed: BTreeSet<usize>,
    pub f1: f64,
    pub reward: f64,
    /// Per-instance (action, keep-probability) log in id order.
    pub actions: BTreeMap<usize, (u8, f64)>,
}

/// Builds the fixed-length state for one distantly labeled sentence.
///
/// The hidden part concatenates the first and last BiLSTM rows; the score
/// part pools per-token label scores (committed tag's score at singleton
/// positions, mean over allowed tags elsewhere) into (mean, min, max);
/// `s_star` is the running average of previously removed states' own
/// halves and is concatenated last.
pub fn build_state(
    h: &HiddenStates,
    p: &EmissionMatrix,
    l: &AllowedLattice,
    s_star: &Array1<f64>,
) -> PolicyState {
    let n = h.nrows();
    assert_eq!(p.nrows(), n, "emission rows must match hidden rows");
    assert_eq!(l.len(), n, "lattice length must match hidden rows");
    let own_dim = 2 * h.ncols() + 3;
    assert_eq!(s_star.len(), own_dim, "s* dimension mismatch");
    let mut state = Array1::zeros(2 * own_dim);
    let width = h.ncols();
    state.slice_mut(ndarray::s![..width]).assign(&h.row(0));
    state
        .slice_mut(ndarray::s![width..2 * width])
        .assign(&h.row(n - 1));
    let mut mean = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for i in 0..n {
        let score = match l.singleton_at(i) {
            Some(tag) => p[(i, tag)],
            None => {
                let allowed: Vec<usize> = l.allowed_at(i).collect();
                allowed.iter().map(|&t| p[(i, t)]).sum::<f64>() / allowed.len() as f64
            }
        };
        mean += score / n as f64;
        min = min.min(score);
        max = max.max(score);
    }
    state[2 * width] = mean;
    state[2 * width + 1] = min;
    state[2 * width + 2] = max;
    state.slice_mut(ndarray::s![own_dim..]).assign(s_star);
    PolicyState(state)
}

/// Dimension of the per-sentence half of the state for hidden width `2*d_h`.
pub fn own_state_dim(hidden_width: usize) -> usize {
    2 * hidden_width + 3
}

struct PolicyTrace {
    h1: Array1<f64>,
    h2: Array1<f64>,
    p: f64,
}

fn forward_trace(s: &PolicyState, theta: &PolicyParams) -> PolicyTrace {
    assert_eq!(s.dim(), theta.input_dim(), "state dimension mismatch");
    let h1 = (s.0.dot(&theta.w1) + &theta.b1).mapv(f64::tanh);
    let h2 = (h1.dot(&theta.w2) + &theta.b2).mapv(f64::tanh);
    let z = h2.dot(&theta.w3) + theta.b3;
    let p = 1.0 / (1.0 + (-z).exp());
    PolicyTrace { h1, h2, p }
}

/// Probability of action 1 (keep) under the policy.
pub fn policy_forward(s: &PolicyState, theta: &PolicyParams) -> f64 {
    forward_trace(s, theta).p
}

/// Gradient of `log pi(a | s)` for the Bernoulli policy.
pub fn log_prob_gradient(s: &PolicyState, action: u8, theta: &PolicyParams) -> PolicyGrads {
    let trace = forward_trace(s, theta);
    // d log pi / dz = a - p for both actions.
    let dz = f64::from(action) - trace.p;
    let mut g = PolicyGrads::zeros_like(theta);
    g.b3 = dz;
    g.w3 = &trace.h2 * dz;
    let dh2 = theta.w3.mapv(|w| w * dz) * trace.h2.mapv(|v| 1.0 - v * v);
    g.b2 = dh2.clone();
    g.w2 = trace.h1.view().insert_axis(ndarray::Axis(1)).dot(&dh2.view().insert_axis(ndarray::Axis(0)));
    let dh1 = dh2.dot(&theta.w2.t()) * trace.h1.mapv(|v| 1.0 - v * v);
    g.b1 = dh1.clone();
    g.w1 = s.0.view().insert_axis(ndarray::Axis(1)).dot(&dh1.view().insert_axis(ndarray::Axis(0)));
    g
}

/// Bernoulli draw: action 1 (keep) with probability `p`, 0 (remove)
/// otherwise. Deterministic under a fixed generator state.
pub fn sample_action(p: f64, rng: &mut impl Rng) -> u8 {
    if rng.gen::<f64>() < p {
        1
    } else {
        0
    }
}

/// F1 delta between adjacent epochs.
pub fn reward(f1_cur: f64, f1_prev: f64) -> f64 {
    f1_cur - f1_prev
}

/// Symmetric-difference credit sets: instances removed only this epoch
/// and instances removed only in the previous one.
pub fn compute_omegas(
    psi_cur: &BTreeSet<usize>,
    psi_prev: &BTreeSet<usize>,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let omega_cur = psi_cur.difference(psi_prev).copied().collect();
    let omega_prev = psi_prev.difference(psi_cur).copied().collect();
    (omega_cur, omega_prev)
}

/// One REINFORCE ascent step:
/// `theta += alpha * [sum over omega_cur grad log pi * r
///                    + sum over omega_prev grad log pi * (-r)]`.
///
/// `cache` maps instance ids to the state/action the probability was
/// computed with.
pub fn reinforce_update(
    theta: &mut PolicyParams,
    omega_cur: &BTreeSet<usize>,
    omega_prev: &BTreeSet<usize>,
    r: f64,
    cache: &BTreeMap<usize, (PolicyState, u8)>,
) -> Result<(), PolicyError> {
    if r == 0.0 {
        // Both terms vanish identically.
        for &id in omega_cur.iter().chain(omega_prev) {
            if !cache.contains_key(&id) {
                return Err(PolicyError::MissingCacheEntry(id));
            }
        }
        return Ok(());
    }
    let mut total = PolicyGrads::zeros_like(theta);
    for (set, sign) in [(omega_cur, 1.0), (omega_prev, -1.0)] {
        for &id in set {
            let (state, action) = cache
                .get(&id)
                .ok_or(PolicyError::MissingCacheEntry(id))?;
            let g = log_prob_gradient(state, *action, theta);
            total.scaled_add(&g, sign * r);
        }
    }
    let alpha = theta.learning_rate;
    theta.w1.scaled_add(alpha, &total.w1);
    theta.b1.scaled_add(alpha, &total.b1);
    theta.w2.scaled_add(alpha, &total.w2);
    theta.b2.scaled_add(alpha, &total.b2);
    theta.w3.scaled_add(alpha, &total.w3);
    theta.b3 += alpha * total.b3;
    Ok(())
}
