//! Cross-checks against independent reference computations.

use argmine_core::eval::{f1_binary, f1_macro};
use argmine_core::{build_detection_atn, predicate_oracle, ArgumentLabel, StanceLabel, TokenSequence, TokenState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// F1 of class `c` from raw counts, computed as 2TP / (2TP + FP + FN).
fn f1_from_counts(preds: &[u8], golds: &[u8], c: u8) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u32, 0u32, 0u32);
    for (&p, &g) in preds.iter().zip(golds) {
        match (p == c, g == c) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn oracle_macro(preds: &[u8], golds: &[u8]) -> f64 {
    let present: Vec<u8> = (0..3).filter(|c| preds.contains(c) || golds.contains(c)).collect();
    present.iter().map(|&c| f1_from_counts(preds, golds, c)).sum::<f64>() / present.len() as f64
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    for trial in 0..1000 {
        let len = rng.random_range(1..=200);
        let golds: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
        let preds: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
        let to = |v: &[u8]| v.iter().map(|&x| ArgumentLabel::from_code(x as i64).unwrap()).collect::<Vec<_>>();
        let got = f1_binary(&to(&preds), &to(&golds)).unwrap();
        let want = f1_from_counts(&preds, &golds, 1);
        assert!((got - want).abs() <= 1e-12, "binary trial {trial}: {got} vs {want}");

        let golds: Vec<u8> = (0..len).map(|_| rng.random_range(0..3)).collect();
        let preds: Vec<u8> = (0..len).map(|_| rng.random_range(0..3)).collect();
        let to = |v: &[u8]| v.iter().map(|&x| StanceLabel::from_code(x as i64).unwrap()).collect::<Vec<_>>();
        let got = f1_macro(&to(&preds), &to(&golds)).unwrap();
        let want = oracle_macro(&preds, &golds);
        assert!((got - want).abs() <= 1e-12, "macro trial {trial}: {got} vs {want}");
    }
}

#[test]
fn atn_matches_predicate_exhaustively() {
    let atn = build_detection_atn();
    let mut mismatches = 0;
    let mut checked = 0;
    for len in 0..=8u32 {
        for code in 0..4usize.pow(len) {
            let mut c = code;
            let seq: Vec<TokenState> = (0..len)
                .map(|_| {
                    let t = TokenState::ALL[c % 4];
                    c /= 4;
                    t
                })
                .collect();
            let seq = TokenSequence(seq);
            if atn.run(&seq) != predicate_oracle(&seq) {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    assert_eq!(checked, (0..=8).map(|l| 4usize.pow(l)).sum::<usize>());
    assert_eq!(mismatches, 0);
}
