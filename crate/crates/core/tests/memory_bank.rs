use graspkit::enhance::{attention_weights, enhance_vectors, AttentionWeights, LocalFeature, MemoryBank};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Assign by cosine (first best wins), average per entry, blend.
fn oracle_update(bank: &[Vec<f64>], batch: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; bank[0].len()]; bank.len()];
    let mut counts = vec![0usize; bank.len()];
    for f in batch {
        if f.iter().all(|&x| x == 0.0) {
            continue;
        }
        let mut best = 0;
        for j in 1..bank.len() {
            if cos(f, &bank[j]) > cos(f, &bank[best]) {
                best = j;
            }
        }
        counts[best] += 1;
        for (s, x) in sums[best].iter_mut().zip(f) {
            *s += x;
        }
    }
    bank.iter()
        .zip(sums.iter().zip(&counts))
        .map(|(k, (s, &n))| {
            if n == 0 {
                k.clone()
            } else {
                k.iter().zip(s).map(|(k, s)| alpha * k + (1.0 - alpha) * s / n as f64).collect()
            }
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..c).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bank_update_matches_oracle(seed in any::<u64>(), alpha in 0.0f64..=1.0, n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = gaussian(&mut rng, 4, 8);
        let batch = gaussian(&mut rng, n, 8);
        let mut bank = MemoryBank::new(entries.clone(), alpha).unwrap();
        let feats: Vec<LocalFeature> = batch.iter().cloned().map(LocalFeature::new).collect();
        bank.update(&feats).unwrap();
        let want = oracle_update(&entries, &batch, alpha);
        for (a, b) in bank.entries().iter().flatten().zip(want.iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn unit_momentum_freezes_the_bank(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = gaussian(&mut rng, 4, 8);
        let mut bank = MemoryBank::new(entries.clone(), 1.0).unwrap();
        let batch: Vec<LocalFeature> = gaussian(&mut rng, 30, 8).into_iter().map(LocalFeature::new).collect();
        bank.update(&batch).unwrap();
        prop_assert_eq!(bank.entries(), entries.as_slice());
    }

    /// With α = 0 and identical features per entry, entries become the batch
    /// values exactly.
    #[test]
    fn zero_momentum_copies_uniform_batches(seed in any::<u64>(), reps in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = gaussian(&mut rng, 4, 8);
        let mut bank = MemoryBank::new(entries.clone(), 0.0).unwrap();
        let targets: Vec<Vec<f64>> = entries.iter().map(|e| e.iter().map(|x| x * 1.5).collect()).collect();
        let batch: Vec<LocalFeature> = targets.iter().flat_map(|t| std::iter::repeat_n(t.clone(), reps)).map(LocalFeature::new).collect();
        bank.update(&batch).unwrap();
        prop_assert_eq!(bank.entries(), targets.as_slice());
    }

    #[test]
    fn attention_rows_are_distributions(seed in any::<u64>(), n in 1usize..6, k in 1usize..9, heads in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = 6;
        let bank = MemoryBank::new(gaussian(&mut rng, k, c), 0.9).unwrap();
        let w = AttentionWeights::random(c, 4 * heads, heads, seed).unwrap();
        let feats = gaussian(&mut rng, n, c);
        let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        for a in attention_weights(&refs, &bank, &w).unwrap() {
            prop_assert_eq!(a.shape(), (n, k));
            for row in a.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn zero_value_encoding_is_the_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bank = MemoryBank::new(gaussian(&mut rng, 5, 6), 0.9).unwrap();
        let base = AttentionWeights::random(6, 8, 2, seed).unwrap();
        let w = AttentionWeights::new(base.wq, base.wk, DMatrix::zeros(6, 8), 2).unwrap();
        let feats = gaussian(&mut rng, 4, 6);
        let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        let out = enhance_vectors(&refs, &bank, &w).unwrap();
        for (a, b) in out.iter().flatten().zip(feats.iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn two_by_two_attention_by_hand() {
    let bank = MemoryBank::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.5).unwrap();
    let id = DMatrix::identity(2, 2);
    let w = AttentionWeights::new(id.clone(), id.clone(), id, 1).unwrap();
    let f = [1.0, 0.0];
    // scores (1/√2, 0); softmax weights e^{1/√2}/(e^{1/√2}+1) and 1/(e^{1/√2}+1)
    let out = enhance_vectors(&[&f], &bank, &w).unwrap();
    assert!((out[0][0] - 1.6697615493266569).abs() < 1e-10);
    assert!((out[0][1] - 0.3302384506733431).abs() < 1e-10);
}

#[test]
fn zero_features_are_left_out_of_updates() {
    let mut bank = MemoryBank::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.5).unwrap();
    let stats = bank.update_vectors(&[&[0.0, 0.0], &[0.0, 2.0]]).unwrap();
    assert_eq!((stats.assigned, stats.skipped, stats.touched), (1, 1, 1));
    assert_eq!(bank.entries()[1], vec![0.0, 1.5]);
    assert_eq!(bank.entries()[0], vec![1.0, 0.0]);
}
