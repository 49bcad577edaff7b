//! Acceptance suite. Each test prints a single PASS line when its
//! criterion holds; a failed test is the corresponding FAIL.

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use wsner_core::corpus::{
    parse_conll, spans_from_tags, tags_from_spans, to_bio, to_bioes, write_conll, AllowedLattice,
    Annotation, Dataset, LabelSet, Provenance, Record, Scheme, Sentence, Span, TagSequence,
};
use wsner_core::crf::{
    self, EmissionMatrix, TransitionMatrix,
};
use wsner_core::encoder::{self, EncoderParams};
use wsner_core::pipeline::{
    evaluate, pretrain, retrain, rl_denoise, run_rng, tag, Model, TrainConfig,
};
use wsner_core::policy::{
    compute_omegas, log_prob_gradient, policy_forward, reinforce_update, PolicyParams,
    PolicyState,
};
use wsner_core::synthetic::{generate, SyntheticConfig};

// ---------- shared brute-force oracles ----------

/// All tag sequences permitted by the lattice.
fn enumerate_sequences(l: &AllowedLattice) -> Vec<Vec<usize>> {
    let mut seqs: Vec<Vec<usize>> = vec![Vec::new()];
    for pos in 0..l.len() {
        let allowed: Vec<usize> = l.allowed_at(pos).collect();
        seqs = seqs
            .into_iter()
            .flat_map(|s| {
                allowed.iter().map(move |&t| {
                    let mut s2 = s.clone();
                    s2.push(t);
                    s2
                })
            })
            .collect();
    }
    seqs
}

fn raw_score(p: &EmissionMatrix, t: &TransitionMatrix, tags: &[usize]) -> f64 {
    let mut score = t.get(t.bos(), tags[0]);
    for (i, &tag) in tags.iter().enumerate() {
        score += p[(i, tag)];
        if i + 1 < tags.len() {
            score += t.get(tag, tags[i + 1]);
        }
    }
    score + t.get(tags[tags.len() - 1], t.eos())
}

fn enumerated_log_partition(
    p: &EmissionMatrix,
    t: &TransitionMatrix,
    l: &AllowedLattice,
) -> f64 {
    let scores: Vec<f64> = enumerate_sequences(l)
        .iter()
        .map(|s| raw_score(p, t, s))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

fn random_instance(
    n: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> (EmissionMatrix, TransitionMatrix) {
    let p = Array2::from_shape_fn((n, k), |_| rng.sample::<f64, _>(StandardNormal));
    let t =
        TransitionMatrix::from_array(Array2::from_shape_fn((k + 2, k + 2), |_| {
            rng.sample::<f64, _>(StandardNormal)
        }));
    (p, t)
}

fn random_lattice(n: usize, k: usize, rng: &mut ChaCha8Rng) -> AllowedLattice {
    let full = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    AllowedLattice::new((0..n).map(|_| rng.gen_range(1..=full)).collect(), k)
}

/// Random scheme-valid tag sequence built from sampled spans.
fn random_valid_tags(n: usize, ls: &LabelSet, rng: &mut ChaCha8Rng) -> TagSequence {
    let types = ls.entity_types();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < n {
        if !types.is_empty() && rng.gen::<f64>() < 0.5 {
            let len = rng.gen_range(1..=(n - i).min(3));
            let t = &types[rng.gen_range(0..types.len())];
            spans.push(Span::new(i, i + len, t.clone()));
            i += len + 1;
        } else {
            i += 1;
        }
    }
    tags_from_spans(&spans, n, ls).unwrap()
}

// ---------- criterion 1 ----------

#[test]
fn criterion_1_lattice_operations_match_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let bio1 = LabelSet::new(&["A"], Scheme::Bio);
    let bio2 = LabelSet::new(&["A", "B"], Scheme::Bio);
    for case in 0..1000 {
        let n = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=5);
        let (p, t) = random_instance(n, k, &mut rng);
        let l = random_lattice(n, k, &mut rng);
        let all = AllowedLattice::all_allowed(n, k);

        let lp = crf::log_partition(&p, &t);
        assert!(
            (lp - enumerated_log_partition(&p, &t, &all)).abs() < 1e-8,
            "log_partition mismatch in case {case}"
        );
        let clp = crf::constrained_log_partition(&p, &t, &l).unwrap();
        assert!(
            (clp - enumerated_log_partition(&p, &t, &l)).abs() < 1e-8,
            "constrained_log_partition mismatch in case {case}"
        );
        let pnll = crf::partial_nll_loss(&p, &t, &l).unwrap();
        assert!((pnll - (lp - clp)).abs() < 1e-8);

        // Viterbi against exhaustive max.
        let mut scored: Vec<(f64, Vec<usize>)> = enumerate_sequences(&all)
            .into_iter()
            .map(|s| (raw_score(&p, &t, &s), s))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let best = crf::viterbi(&p, &t);
        assert!((best.score - scored[0].0).abs() < 1e-8, "viterbi score");
        if scored.len() == 1 || scored[0].0 - scored[1].0 > 1e-9 {
            assert_eq!(best.tags, scored[0].1, "viterbi argmax in case {case}");
        }

        // Committed-sequence likelihood where the tag count fits a scheme.
        let ls = match k {
            3 => Some(&bio1),
            5 => Some(&bio2),
            _ => None,
        };
        if let Some(ls) = ls {
            let y = random_valid_tags(n, ls, &mut rng);
            let nll = crf::nll_loss(&p, &t, &y).unwrap();
            let expected = lp - raw_score(&p, &t, y.tags());
            assert!((nll - expected).abs() < 1e-8, "nll mismatch in case {case}");
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "took {elapsed:.1}s, limit 30s");
    println!("PASS criterion 1: lattice operations match enumeration on 1000 instances ({elapsed:.1}s)");
}

// ---------- criterion 2 ----------

#[test]
fn criterion_2_reduction_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let bio2 = LabelSet::new(&["A", "B"], Scheme::Bio);
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let k = bio2.len();
        let (p, t) = random_instance(n, k, &mut rng);
        let y = random_valid_tags(n, &bio2, &mut rng);
        let singleton = AllowedLattice::from_tags(&y, k);
        let nll = crf::nll_loss(&p, &t, &y).unwrap();
        let pnll = crf::partial_nll_loss(&p, &t, &singleton).unwrap();
        assert!((nll - pnll).abs() < 1e-12, "singleton reduction");
        let all = AllowedLattice::all_allowed(n, k);
        let zero = crf::partial_nll_loss(&p, &t, &all).unwrap();
        assert!(zero.abs() < 1e-12, "all-allowing reduction");
    }
    println!("PASS criterion 2: partial loss reduces to exact NLL and to zero (200 cases)");
}

// ---------- criterion 3 ----------

#[test]
fn criterion_3_gradient_checks() {
    // (a) CRF loss gradients, n=3, k=3.
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let step = 1e-5;
    for _ in 0..10 {
        let (p, t) = random_instance(3, 3, &mut rng);
        let l = random_lattice(3, 3, &mut rng);
        let (dp, dt) = crf::partial_loss_gradients(&p, &t, &l).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut plus = p.clone();
                plus[(i, j)] += step;
                let mut minus = p.clone();
                minus[(i, j)] -= step;
                let fd = (crf::partial_nll_loss(&plus, &t, &l).unwrap()
                    - crf::partial_nll_loss(&minus, &t, &l).unwrap())
                    / (2.0 * step);
                let denom = fd.abs().max(dp[(i, j)].abs()).max(1e-3);
                assert!((fd - dp[(i, j)]).abs() / denom <= 1e-6, "emission gradient");
            }
        }
        for a in 0..5 {
            for b in 0..5 {
                let mut plus = t.clone();
                plus.scores_mut()[(a, b)] += step;
                let mut minus = t.clone();
                minus.scores_mut()[(a, b)] -= step;
                let fd = (crf::partial_nll_loss(&p, &plus, &l).unwrap()
                    - crf::partial_nll_loss(&p, &minus, &l).unwrap())
                    / (2.0 * step);
                let denom = fd.abs().max(dt[(a, b)].abs()).max(1e-3);
                assert!((fd - dt[(a, b)]).abs() / denom <= 1e-6, "transition gradient");
            }
        }
    }

    // (b) end-to-end encoder + CRF, n <= 3, hidden <= 4.
    let cfg = TrainConfig {
        char_only: false,
        word_dim: 3,
        char_dim: 2,
        char_hidden: 2,
        word_hidden: 4,
        ..TrainConfig::default()
    };
    let ls = LabelSet::new(&["A"], Scheme::Bio);
    let s = Sentence::new(0, vec!["ab".into(), "c".into(), "ab".into()]);
    let d = Dataset::new(vec![Record {
        sentence: s.clone(),
        annotation: Annotation::Tags(TagSequence::new(vec![0, 1, 2], &ls).unwrap()),
        provenance: Provenance::Gold,
    }]);
    let model = Model::init(ls.clone(), &cfg, &[&d], None, &mut rng);
    let lattice = AllowedLattice::new(vec![0b001, 0b110, 0b111], ls.len());
    let loss_of = |enc: &EncoderParams, trans: &TransitionMatrix| -> f64 {
        let h = encoder::encode(&s, enc);
        let p = encoder::emissions(&h, enc);
        crf::partial_nll_loss(&p, trans, &lattice).unwrap()
    };
    let h = encoder::encode(&s, &model.encoder);
    let p = encoder::emissions(&h, &model.encoder);
    let (dp, dt) = crf::partial_loss_gradients(&p, &model.transitions, &lattice).unwrap();
    let analytic = encoder::encoder_backward(&s, &model.encoder, &dp).flatten();
    let params = model.encoder.flatten();
    let mut checked = 0;
    for idx in 0..params.len() {
        let mut plus = params.clone();
        plus[idx] += step;
        let mut pe = model.encoder.clone();
        pe.assign_from_flat(&plus);
        let mut minus = params.clone();
        minus[idx] -= step;
        let mut me = model.encoder.clone();
        me.assign_from_flat(&minus);
        let fd = (loss_of(&pe, &model.transitions) - loss_of(&me, &model.transitions))
            / (2.0 * step);
        let denom = fd.abs().max(analytic[idx].abs()).max(1e-3);
        assert!(
            (fd - analytic[idx]).abs() / denom <= 1e-4,
            "encoder gradient at {idx}: analytic {} vs fd {}",
            analytic[idx],
            fd
        );
        if analytic[idx].abs() > 1e-6 {
            checked += 1;
        }
    }
    assert!(checked > 50, "only {checked} informative parameters");
    for a in 0..ls.len() + 2 {
        for b in 0..ls.len() + 2 {
            let mut plus = model.transitions.clone();
            plus.scores_mut()[(a, b)] += step;
            let mut minus = model.transitions.clone();
            minus.scores_mut()[(a, b)] -= step;
            let fd = (loss_of(&model.encoder, &plus) - loss_of(&model.encoder, &minus))
                / (2.0 * step);
            let denom = fd.abs().max(dt[(a, b)].abs()).max(1e-3);
            assert!((fd - dt[(a, b)]).abs() / denom <= 1e-4);
        }
    }

    // (c) policy log-probability gradient.
    let theta = PolicyParams::new(6, 5, 4, 0.1, &mut rng);
    let state = PolicyState(Array1::from_shape_fn(6, |_| {
        rng.sample::<f64, _>(StandardNormal)
    }));
    for action in [0u8, 1u8] {
        let g = log_prob_gradient(&state, action, &theta).flatten();
        let flat = theta.flatten();
        let log_prob = |t: &PolicyParams| -> f64 {
            let pk = policy_forward(&state, t);
            if action == 1 {
                pk.ln()
            } else {
                (1.0 - pk).ln()
            }
        };
        for idx in 0..flat.len() {
            let mut plus = theta.clone();
            let mut pf = flat.clone();
            pf[idx] += step;
            plus.assign_from_flat(&pf);
            let mut minus = theta.clone();
            let mut mf = flat.clone();
            mf[idx] -= step;
            minus.assign_from_flat(&mf);
            let fd = (log_prob(&plus) - log_prob(&minus)) / (2.0 * step);
            let denom = fd.abs().max(g[idx].abs()).max(1e-3);
            assert!((fd - g[idx]).abs() / denom <= 1e-4, "policy gradient at {idx}");
        }
    }
    println!("PASS criterion 3: analytic gradients match finite differences (CRF 1e-6, encoder 1e-4, policy 1e-4)");
}

// ---------- criterion 4 ----------

/// Independent left-to-right scanner over tag names; never consults the
/// library's span logic.
fn scanning_oracle(names: &[String]) -> Vec<(usize, usize, String)> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < names.len() {
        let name = &names[i];
        if let Some(t) = name.strip_prefix("S-") {
            spans.push((i, i + 1, t.to_string()));
            i += 1;
        } else if let Some(t) = name.strip_prefix("B-") {
            let ty = t.to_string();
            let start = i;
            i += 1;
            while i < names.len() && names[i] == format!("I-{ty}") {
                i += 1;
            }
            if i < names.len() && names[i] == format!("E-{ty}") {
                i += 1;
                spans.push((start, i, ty));
            } else {
                // BIO: the run itself is the span.
                spans.push((start, i, ty));
            }
        } else {
            i += 1;
        }
    }
    spans
}

#[test]
fn criterion_4_scheme_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let bio = LabelSet::new(&["PER", "LOC"], Scheme::Bio);
    let bioes = bio.to_scheme(Scheme::Bioes);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=9);
        let y = random_valid_tags(n, &bio, &mut rng);
        let up = to_bioes(&y, &bio).unwrap();
        let back = to_bio(&up, &bioes).unwrap();
        assert_eq!(back, y, "round trip through the richer scheme");

        // Span extraction vs the independent scanner, in both schemes.
        for (t, ls) in [(&y, &bio), (&up, &bioes)] {
            let names: Vec<String> = t
                .tags()
                .iter()
                .map(|&i| ls.tag_name(i).to_string())
                .collect();
            let expected: Vec<Span> = scanning_oracle(&names)
                .into_iter()
                .map(|(s, e, ty)| Span::new(s, e, ty))
                .collect();
            assert_eq!(spans_from_tags(t, ls), expected);
        }
    }

    // CoNLL text round-trips byte-identically.
    let corpus = generate(&SyntheticConfig::default(), &mut rng);
    let text = write_conll(&corpus.dev, &corpus.label_set);
    let parsed = parse_conll(&text, &corpus.label_set).unwrap();
    assert_eq!(write_conll(&parsed, &corpus.label_set), text);
    println!("PASS criterion 4: 10000 scheme round trips, scanner agreement, byte-stable CoNLL");
}

// ---------- criterion 5 ----------

#[test]
fn criterion_5_reinforcement_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    // Credit sets are disjoint on fuzzed removal sets.
    for _ in 0..500 {
        let a: BTreeSet<usize> = (0..30).filter(|_| rng.gen()).collect();
        let b: BTreeSet<usize> = (0..30).filter(|_| rng.gen()).collect();
        let (oc, op) = compute_omegas(&a, &b);
        assert!(oc.is_disjoint(&op));
        assert!(oc.iter().all(|i| a.contains(i) && !b.contains(i)));
        assert!(op.iter().all(|i| b.contains(i) && !a.contains(i)));
    }

    // Zero reward is the identity; the update is odd in the reward.
    let theta0 = PolicyParams::new(4, 3, 2, 0.5, &mut rng);
    let state = PolicyState(Array1::from_shape_fn(4, |_| {
        rng.sample::<f64, _>(StandardNormal)
    }));
    let omega_cur = BTreeSet::from([7usize]);
    let omega_prev = BTreeSet::from([9usize]);
    let cache = std::collections::BTreeMap::from([
        (7usize, (state.clone(), 0u8)),
        (9usize, (state.clone(), 0u8)),
    ]);
    let mut zeroed = theta0.clone();
    reinforce_update(&mut zeroed, &omega_cur, &omega_prev, 0.0, &cache).unwrap();
    assert_eq!(zeroed, theta0);
    for r in [0.01, 0.1, 0.7] {
        let mut up = theta0.clone();
        reinforce_update(&mut up, &omega_cur, &omega_prev, r, &cache).unwrap();
        let mut down = theta0.clone();
        reinforce_update(&mut down, &omega_cur, &omega_prev, -r, &cache).unwrap();
        let base = theta0.flatten();
        let delta_up: Vec<f64> = up.flatten().iter().zip(&base).map(|(a, b)| a - b).collect();
        let delta_down: Vec<f64> =
            down.flatten().iter().zip(&base).map(|(a, b)| a - b).collect();
        for (u, d) in delta_up.iter().zip(&delta_down) {
            assert!((u + d).abs() < 1e-12, "update must be odd in the reward");
        }
    }

    // Trace rewards telescope over a short real run.
    let corpus = generate(
        &SyntheticConfig {
            gold_sentences: 20,
            distant_sentences: 10,
            dev_sentences: 20,
            test_sentences: 10,
            ..SyntheticConfig::default()
        },
        &mut run_rng(105),
    );
    let cfg = TrainConfig {
        learning_rate: 0.3,
        max_epochs: 5,
        patience: 5,
        char_only: true,
        word_dim: 8,
        word_hidden: 6,
        rl_epochs: 4,
        rl_inner_epochs: 1,
        policy_hidden: (6, 4),
        ..TrainConfig::default()
    };
    let mut rng = run_rng(105);
    let model = Model::init(
        corpus.label_set.clone(),
        &cfg,
        &[&corpus.gold, &corpus.distant, &corpus.dev],
        None,
        &mut rng,
    );
    let out = rl_denoise(
        &model,
        &corpus.distant,
        &corpus.gold,
        &corpus.dev,
        &cfg,
        &mut rng,
    )
    .unwrap();
    for w in out.trace.windows(2) {
        assert!((w[1].reward - (w[1].f1 - w[0].f1)).abs() < 1e-12);
    }
    let sum: f64 = out.trace.iter().map(|t| t.reward).sum();
    assert!((sum - (out.trace.last().unwrap().f1 - out.f1_initial)).abs() < 1e-12);
    println!("PASS criterion 5: disjoint credit sets, zero-reward identity, odd updates, telescoping rewards");
}

// ---------- criterion 6 ----------

fn denoising_run(seed: u64) -> (f64, f64, f64) {
    let corpus = generate(&SyntheticConfig::default(), &mut run_rng(seed));
    let cfg = TrainConfig {
        learning_rate: 0.2,
        max_epochs: 12,
        patience: 12,
        char_only: true,
        word_dim: 16,
        word_hidden: 10,
        rl_epochs: 100,
        rl_inner_epochs: 6,
        rl_warm_start: false,
        rl_learning_rate: 0.3,
        policy_hidden: (16, 8),
        seed,
        ..TrainConfig::default()
    };
    let mut rng = run_rng(seed);
    let init = Model::init(
        corpus.label_set.clone(),
        &cfg,
        &[&corpus.gold, &corpus.distant, &corpus.dev],
        None,
        &mut rng,
    );
    let baseline = pretrain(
        init,
        &corpus.gold,
        &corpus.distant,
        &corpus.dev,
        &cfg,
        &mut rng,
    )
    .unwrap();
    let test_sents: Vec<Sentence> = corpus.test.iter().map(|r| r.sentence.clone()).collect();
    let base_f1 = evaluate(&tag(&baseline, &test_sents), &corpus.test, &corpus.label_set)
        .unwrap()
        .f1;
    let out = rl_denoise(
        &baseline,
        &corpus.distant,
        &corpus.gold,
        &corpus.dev,
        &cfg,
        &mut rng,
    )
    .unwrap();
    let kept: BTreeSet<usize> = out.cleaned.iter().map(|r| r.sentence.id).collect();
    let removed_injected = corpus
        .injected
        .iter()
        .filter(|id| !kept.contains(id))
        .count();
    let removed_frac = removed_injected as f64 / corpus.injected.len() as f64;
    let init2 = Model::init(
        corpus.label_set.clone(),
        &cfg,
        &[&corpus.gold, &corpus.distant, &corpus.dev],
        None,
        &mut run_rng(seed ^ 0x9e37_79b9),
    );
    let cleaned_model = retrain(init2, &corpus.gold, &out.cleaned, &corpus.dev, &cfg, &mut rng)
        .unwrap();
    let rl_f1 = evaluate(
        &tag(&cleaned_model, &test_sents),
        &corpus.test,
        &corpus.label_set,
    )
    .unwrap()
    .f1;
    (removed_frac, base_f1, rl_f1)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

#[test]
fn criterion_6_synthetic_denoising_experiment() {
    let start = Instant::now();
    let mut removed = Vec::new();
    let mut gains = Vec::new();
    for seed in 1..=5u64 {
        let (removed_frac, base_f1, rl_f1) = denoising_run(seed);
        println!(
            "  seed {seed}: removed {:.0}% of injected, baseline F1 {base_f1:.4}, cleaned F1 {rl_f1:.4}",
            100.0 * removed_frac
        );
        removed.push(removed_frac);
        gains.push(rl_f1 - base_f1);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let med_removed = median(removed);
    let med_gain = median(gains);
    assert!(
        med_removed >= 0.60,
        "median removed fraction {med_removed:.2} below 0.60"
    );
    assert!(
        med_gain >= 0.02,
        "median F1 gain {:.2} points below 2.0",
        100.0 * med_gain
    );
    assert!(elapsed < 600.0, "took {elapsed:.0}s, limit 600s");
    println!(
        "PASS criterion 6: denoising removes {:.0}% of injected sentences (median), F1 gain {:.1} points (median), {elapsed:.0}s",
        100.0 * med_removed,
        100.0 * med_gain
    );
}
