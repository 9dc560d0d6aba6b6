//! Corpus-level evaluation: BLEU with a brevity penalty, and per-word
//! F-measure micro-averaged inside training-frequency buckets.

use std::collections::HashMap;

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

fn ngram_counts(words: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if words.len() >= n {
        for i in 0..=words.len() - n {
            *counts.entry(&words[i..i + n]).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU against a single reference per sentence, on a 0–100 scale.
/// Modified n-gram precisions for n = 1..=max_n enter a geometric mean that
/// is multiplied by the brevity penalty exp(min(0, 1 - r/c)); any n-gram
/// order with zero matches sends the whole score to zero (no smoothing).
pub fn bleu(hyps: &[Vec<String>], refs: &[Vec<String>], max_n: usize) -> Result<f64> {
    if hyps.is_empty() {
        return Err(Error::InvalidData("BLEU needs a non-empty corpus".into()));
    }
    if hyps.len() != refs.len() {
        return Err(Error::InvalidData(format!(
            "BLEU corpus mismatch: {} hypotheses vs {} references",
            hyps.len(),
            refs.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::InvalidData("BLEU order must be at least 1".into()));
    }

    let mut matched = vec![0u64; max_n];
    let mut total = vec![0u64; max_n];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;
    for (hyp, rf) in hyps.iter().zip(refs) {
        hyp_len += hyp.len() as u64;
        ref_len += rf.len() as u64;
        for n in 1..=max_n {
            let hc = ngram_counts(hyp, n);
            let rc = ngram_counts(rf, n);
            for (gram, &count) in &hc {
                total[n - 1] += count;
                matched[n - 1] += count.min(rc.get(gram).copied().unwrap_or(0));
            }
        }
    }

    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_precision_sum = 0.0;
    for n in 0..max_n {
        if matched[n] == 0 || total[n] == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (matched[n] as f64 / total[n] as f64).ln();
    }
    let brevity = (1.0 - ref_len as f64 / hyp_len as f64).min(0.0).exp();
    Ok(100.0 * brevity * (log_precision_sum / max_n as f64).exp())
}

// ---------------------------------------------------------------------------
// F-measure by training frequency
// ---------------------------------------------------------------------------

/// Bucket edges for grouping word types by how often they occurred in the
/// training data: {0}, [1,4], [5,9], [10,99], [100,999], [1000, ∞).
pub const DEFAULT_BUCKET_BOUNDS: [u64; 5] = [1, 5, 10, 100, 1000];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketStats {
    pub low: u64,
    /// Inclusive upper edge; `None` for the unbounded last bucket.
    pub high: Option<u64>,
    pub match_count: u64,
    pub hyp_count: u64,
    pub ref_count: u64,
}

impl BucketStats {
    /// Micro-averaged F1 = 2m / (hyp + ref); empty buckets report 0.
    pub fn f(&self) -> f64 {
        if self.hyp_count + self.ref_count == 0 {
            0.0
        } else {
            2.0 * self.match_count as f64 / (self.hyp_count + self.ref_count) as f64
        }
    }
}

fn bucket_index(freq: u64, bounds: &[u64]) -> usize {
    bounds.iter().take_while(|&&edge| freq >= edge).count()
}

/// Per-word-type precision/recall over the corpus, micro-averaged inside
/// buckets keyed by each type's training-corpus frequency (0 when the word
/// never appeared in training). Matches per sentence are
/// min(hyp occurrences, ref occurrences), summed over the corpus.
pub fn fmeasure_buckets(
    hyps: &[Vec<String>],
    refs: &[Vec<String>],
    train_freqs: &HashMap<String, u64>,
    bounds: &[u64],
) -> Result<Vec<BucketStats>> {
    if hyps.len() != refs.len() {
        return Err(Error::InvalidData(format!(
            "F-measure corpus mismatch: {} hypotheses vs {} references",
            hyps.len(),
            refs.len()
        )));
    }
    if bounds.is_empty() || bounds[0] == 0 || bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidData(
            "bucket bounds must be strictly ascending and start above zero".into(),
        ));
    }

    let mut stats: Vec<BucketStats> = Vec::with_capacity(bounds.len() + 1);
    for i in 0..=bounds.len() {
        stats.push(BucketStats {
            low: if i == 0 { 0 } else { bounds[i - 1] },
            high: if i == 0 {
                Some(0)
            } else {
                bounds.get(i).map(|&next| next - 1)
            },
            match_count: 0,
            hyp_count: 0,
            ref_count: 0,
        });
    }

    for (hyp, rf) in hyps.iter().zip(refs) {
        let mut hyp_counts: HashMap<&str, u64> = HashMap::new();
        for w in hyp {
            *hyp_counts.entry(w.as_str()).or_insert(0) += 1;
        }
        let mut ref_counts: HashMap<&str, u64> = HashMap::new();
        for w in rf {
            *ref_counts.entry(w.as_str()).or_insert(0) += 1;
        }
        for (&word, &hc) in &hyp_counts {
            let freq = train_freqs.get(word).copied().unwrap_or(0);
            let b = &mut stats[bucket_index(freq, bounds)];
            b.hyp_count += hc;
            b.match_count += hc.min(ref_counts.get(word).copied().unwrap_or(0));
        }
        for (&word, &rc) in &ref_counts {
            let freq = train_freqs.get(word).copied().unwrap_or(0);
            stats[bucket_index(freq, bounds)].ref_count += rc;
        }
    }
    Ok(stats)
}
