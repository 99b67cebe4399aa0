mod common;

use common::*;
use conl2m::eval::{self_bleu, sentence_bleu};
use conl2m::net::init_params;
use conl2m::rng::stream_rng;

#[test]
fn memofu_gradients_match_finite_differences() {
    let mut rng = stream_rng(11, "oracle-configs", 0);
    for seed in 0..4 {
        let cfg = random_small_config(&mut rng);
        let (params, _) = init_params(&cfg, seed).unwrap();
        let inputs = StepInputs::random(&cfg, 2, 3, &mut rng);
        let (err, name) = memofu_gradient_error(&params, &inputs);
        assert!(err < 1e-4, "seed {seed}: {name} relative error {err:e}");
    }
}

#[test]
fn discriminator_gradients_match_finite_differences() {
    let mut rng = stream_rng(12, "oracle-configs", 0);
    for seed in 0..4 {
        let cfg = random_small_config(&mut rng);
        let (err, name) = disc_gradient_error(&cfg, seed, 3);
        assert!(err < 1e-4, "seed {seed}: {name} relative error {err:e}");
    }
}

#[test]
fn zero_fusion_equals_vanilla_stacked_lstm() {
    let mut rng = stream_rng(13, "oracle-configs", 0);
    for seed in 0..6 {
        let cfg = random_small_config(&mut rng);
        let (fwd, bwd) = fusion_ablation_gap(&cfg, seed, 3, 4);
        assert!(fwd < 1e-10 && bwd < 1e-10, "seed {seed}: forward {fwd:e}, backward {bwd:e}");
    }
}

#[test]
fn fusion_changes_the_output() {
    // the oracle must be able to tell fused from unfused weights
    let mut rng = stream_rng(14, "oracle-configs", 0);
    let cfg = random_small_config(&mut rng);
    let (params, _) = init_params(&cfg, 0).unwrap();
    let inputs = StepInputs::random(&cfg, 2, 3, &mut rng);
    let mut zeroed = params.clone();
    zeroed.zero_fusion();
    let step = |p: &conl2m::net::MemofuParams| {
        conl2m::net::memofu_step(p, &inputs.state, &inputs.xs[1], &inputs.prev[1], &inputs.rse)
            .unwrap()
            .1
    };
    assert_ne!(step(&params), step(&zeroed));
}

#[test]
fn self_bleu_matches_hand_computed_corpora() {
    for (corpus, expected) in hand_built_corpora() {
        let fast = self_bleu(&corpus, 2).unwrap()[1];
        let brute = brute_self_bleu(&corpus, 2);
        assert!((fast - expected).abs() < 1e-15, "{fast} vs {expected}");
        assert!((brute - expected).abs() < 1e-15, "{brute} vs {expected}");
    }
}

#[test]
fn sentence_bleu_matches_brute_force_on_random_corpora() {
    use rand::Rng;
    let mut rng = stream_rng(15, "bleu-corpora", 0);
    for _ in 0..200 {
        let corpus: Vec<Vec<u32>> = (0..3)
            .map(|_| {
                let len = rng.random_range(1..=5);
                (0..len).map(|_| rng.random_range(0..3)).collect()
            })
            .collect();
        for n in 1..=4 {
            let fast = self_bleu(&corpus, n).unwrap()[n - 1];
            assert!((fast - brute_self_bleu(&corpus, n)).abs() < 1e-15, "{corpus:?} n={n}");
            let refs: Vec<&[u32]> = corpus[1..].iter().map(Vec::as_slice).collect();
            assert!((sentence_bleu(&corpus[0], &refs, n) - brute_bleu(&corpus[0], &refs, n)).abs() < 1e-15);
        }
    }
}
