//! Exploration harness for the synthetic denoising experiment.
//! Run: cargo run --release -p wsner-core --example denoise_experiment -- <seed...>

use std::time::Instant;

use wsner_core::pipeline::{
    evaluate, pretrain, retrain, rl_denoise, run_rng, tag, Model, TrainConfig,
};
use wsner_core::synthetic::{generate, SyntheticConfig};
use wsner_core::Sentence;

fn main() {
    let seeds: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().unwrap())
        .collect();
    let seeds = if seeds.is_empty() { vec![1, 2, 3, 4, 5] } else { seeds };
    for seed in seeds {
        let t0 = Instant::now();
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
        let t_pre = t0.elapsed().as_secs_f64();

        let out = rl_denoise(
            &baseline,
            &corpus.distant,
            &corpus.gold,
            &corpus.dev,
            &cfg,
            &mut rng,
        )
        .unwrap();
        let kept_ids: std::collections::BTreeSet<usize> =
            out.cleaned.iter().map(|r| r.sentence.id).collect();
        let removed_injected = corpus
            .injected
            .iter()
            .filter(|id| !kept_ids.contains(id))
            .count();
        let removed_clean = corpus.distant.len() - kept_ids.len() - removed_injected;
        let t_rl = t0.elapsed().as_secs_f64() - t_pre;

        let init2 = Model::init(
            corpus.label_set.clone(),
            &cfg,
            &[&corpus.gold, &corpus.distant, &corpus.dev],
            None,
            &mut run_rng(seed ^ 0x9e3779b9),
        );
        let cleaned_model = retrain(
            init2,
            &corpus.gold,
            &out.cleaned,
            &corpus.dev,
            &cfg,
            &mut rng,
        )
        .unwrap();
        let rl_f1 = evaluate(
            &tag(&cleaned_model, &test_sents),
            &corpus.test,
            &corpus.label_set,
        )
        .unwrap()
        .f1;
        println!(
            "seed {seed}: base_f1 {base_f1:.4} rl_f1 {rl_f1:.4} gain {:.2}pt removed_injected {removed_injected}/{} removed_clean {removed_clean}/{} time pre {t_pre:.1}s rl {t_rl:.1}s total {:.1}s",
            100.0 * (rl_f1 - base_f1),
            corpus.injected.len(),
            corpus.distant.len() - corpus.injected.len(),
            t0.elapsed().as_secs_f64()
        );
        let tail: Vec<String> = out
            .trace
            .iter()
            .rev()
            .take(5)
            .map(|t| format!("e{} |Psi|={} f1={:.3}", t.epoch, t.removed.len(), t.f1))
            .collect();
        println!("  tail: {}", tail.join("  "));
        for e in [0usize, 10, 50, 99] {
            if let Some(t) = out.trace.get(e) {
                let (mut pi, mut ni, mut pc, mut nc) = (0.0, 0, 0.0, 0);
                for (id, (_, p)) in &t.actions {
                    if corpus.injected.contains(id) {
                        pi += p;
                        ni += 1;
                    } else {
                        pc += p;
                        nc += 1;
                    }
                }
                println!(
                    "  e{e}: keep_p injected {:.3} clean {:.3}",
                    pi / ni as f64,
                    pc / nc as f64
                );
            }
        }
    }
}
