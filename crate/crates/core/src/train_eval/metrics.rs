//! Sentence-level BLEU-4, ROUGE-L and METEOR-lite over token sequences.
//! All scores are fractions in `[0, 1]`.

use std::collections::HashMap;
use std::hash::Hash;

pub const BLEU_ORDER: usize = 4;
pub const ROUGE_BETA: f64 = 1.2;
pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_GAMMA: f64 = 0.5;
pub const METEOR_BETA: f64 = 3.0;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU-4. A zero precision at order ≥ 2 becomes `1 / (2·count)`;
/// orders longer than the candidate are left out of the geometric mean.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    let c = candidate.len();
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 1..=BLEU_ORDER.min(c) {
        let total = c + 1 - n;
        let refs = ngram_counts(reference, n);
        let matched: usize = ngram_counts(candidate, n)
            .iter()
            .map(|(g, &k)| k.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        let p = match matched {
            0 if n == 1 => return 0.0,
            0 => 1.0 / (2.0 * total as f64),
            m => m as f64 / total as f64,
        };
        log_sum += p.ln();
        orders += 1;
    }
    let r = reference.len();
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * (log_sum / orders as f64).exp()
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with recall weighted by β = 1.2.
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(candidate, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / candidate.len() as f64;
    let r = l as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Exact-match alignment built by repeatedly taking the longest run of
/// unaligned tokens shared by both sides (leftmost on ties). Returns
/// `(matches, chunks)`.
fn align<T: Eq>(cand: &[T], refr: &[T]) -> (usize, usize) {
    let mut used_c = vec![false; cand.len()];
    let mut used_r = vec![false; refr.len()];
    let (mut matches, mut chunks) = (0, 0);
    loop {
        let mut best = (0, 0, 0);
        for i in 0..cand.len() {
            for j in 0..refr.len() {
                let mut k = 0;
                while i + k < cand.len()
                    && j + k < refr.len()
                    && !used_c[i + k]
                    && !used_r[j + k]
                    && cand[i + k] == refr[j + k]
                {
                    k += 1;
                }
                if k > best.2 {
                    best = (i, j, k);
                }
            }
        }
        let (i, j, k) = best;
        if k == 0 {
            return (matches, chunks);
        }
        used_c[i..i + k].iter_mut().for_each(|u| *u = true);
        used_r[j..j + k].iter_mut().for_each(|u| *u = true);
        matches += k;
        chunks += 1;
    }
}

/// METEOR without stemming or synonyms: harmonic F-mean (α = 0.9) times a
/// fragmentation penalty `γ·(chunks/m)^β′`.
pub fn meteor_lite<T: Eq>(candidate: &[T], reference: &[T]) -> f64 {
    let (m, chunks) = align(candidate, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (chunks as f64 / m as f64).powf(METEOR_BETA);
    f * (1.0 - penalty)
}
