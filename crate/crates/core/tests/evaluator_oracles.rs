//! Majority vote and metrics against definition-level oracles.

use actionsense::evaluator::{confusion_matrix, decide_video, per_class_metrics, ConfusionMatrix, FramePrediction};
use actionsense::seed::rng_for;
use actionsense::LabelVocabulary;
use proptest::prelude::*;
use rand::Rng;

/// Count votes; among the classes with the top count pick the one whose
/// summed probability is largest, scanning from the highest index down so
/// that equal sums resolve to the lowest index.
fn vote_oracle(frames: &[Vec<f64>]) -> usize {
    let k = frames[0].len();
    let mut votes = vec![0; k];
    for f in frames {
        let mut best = 0;
        for c in 0..k {
            if f[c] > f[best] {
                best = c;
            }
        }
        votes[best] += 1;
    }
    let top = *votes.iter().max().unwrap();
    let mut winner = None;
    for c in (0..k).rev() {
        if votes[c] != top {
            continue;
        }
        let m: f64 = frames.iter().map(|f| f[c]).sum::<f64>() / frames.len() as f64;
        match winner {
            Some((_, wm)) if wm > m => {}
            _ => winner = Some((c, m)),
        }
    }
    winner.unwrap().0
}

fn random_probs(rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn probs_for(class: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut p = random_probs(rng);
    let top = (0..3).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    p.swap(top, class);
    p
}

#[test]
fn vote_matches_oracle_with_forced_ties() {
    let vocab = LabelVocabulary::default();
    let mut rng = rng_for(3, 0);
    let mut ties = [0usize; 2];
    for case in 0..1000 {
        let frames: Vec<Vec<f64>> = match case % 3 {
            0 => (0..rng.random_range(1..12)).map(|_| random_probs(&mut rng)).collect(),
            1 => {
                let (a, b) = (rng.random_range(0..3), rng.random_range(1..3));
                let b = (a + b) % 3;
                let n = rng.random_range(1..5);
                (0..n).flat_map(|_| [a, b]).map(|c| probs_for(c, &mut rng)).collect()
            }
            _ => {
                let n = rng.random_range(1..4);
                (0..n).flat_map(|_| [0, 1, 2]).map(|c| probs_for(c, &mut rng)).collect()
            }
        };
        let preds: Vec<FramePrediction> = frames
            .iter()
            .enumerate()
            .map(|(i, p)| FramePrediction::from_probabilities("v", i as u64, p.clone()))
            .collect();
        let d = decide_video("v", &preds, &vocab).unwrap();
        assert_eq!(d.predicted_index, vote_oracle(&frames), "case {case}: {frames:?}");
        if case % 3 != 0 {
            assert!(d.tie_broken);
            ties[case % 3 - 1] += 1;
        }
    }
    assert!(ties[0] > 300 && ties[1] > 300);
}

fn oracle_prf(m: &[Vec<u64>], k: usize) -> (f64, f64, f64) {
    let tp = m[k][k] as f64;
    let predicted: u64 = m.iter().map(|r| r[k]).sum();
    let actual: u64 = m[k].iter().sum();
    let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
    let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

#[test]
fn metrics_match_oracle_exactly() {
    let mut rng = rng_for(4, 0);
    for _ in 0..200 {
        let k = rng.random_range(2..6);
        let rows: Vec<Vec<u64>> = (0..k)
            .map(|_| (0..k).map(|_| if rng.random_bool(0.2) { 0 } else { rng.random_range(0..20) }).collect())
            .collect();
        let s = per_class_metrics(&ConfusionMatrix::from_rows(rows.clone()));
        for c in 0..k {
            let (p, r, f) = oracle_prf(&rows, c);
            assert_eq!((s.per_class[c].precision, s.per_class[c].recall, s.per_class[c].f1), (p, r, f));
        }
    }
}

proptest! {
    #[test]
    fn confusion_invariants(pairs in prop::collection::vec((0usize..3, 0usize..3), 0..60), rot in 0usize..60) {
        let m = confusion_matrix(pairs.iter().copied(), 3).unwrap();
        prop_assert_eq!(m.total() as usize, pairs.len());
        let mut rotated = pairs.clone();
        if !rotated.is_empty() {
            let n = rotated.len();
            rotated.rotate_left(rot % n);
        }
        let m2 = confusion_matrix(rotated, 3).unwrap();
        prop_assert_eq!(per_class_metrics(&m), per_class_metrics(&m2));
    }

    #[test]
    fn argmax_is_shift_invariant(logits in prop::collection::vec(-20.0f64..20.0, 3), shift in -100.0f64..100.0) {
        let softmax = |l: &[f64]| {
            let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let a = FramePrediction::from_probabilities("v", 0, softmax(&logits));
        let b = FramePrediction::from_probabilities("v", 0, softmax(&shifted));
        prop_assert_eq!(a.predicted_index, b.predicted_index);
    }
}
