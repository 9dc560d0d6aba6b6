//! Loss aggregation across languages and plain-tensor accuracy helpers.
//! The label-smoothed cross-entropy itself is a graph op (it needs a
//! backward rule); this module combines its per-sentence sums.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Pool per-language (loss sum, token count) pairs into one scalar:
/// Σ sums / Σ tokens. This weights each language's token-mean loss by its
/// share of the total token count.
pub fn multilingual_loss(parts: &[(f64, usize)]) -> Result<f64> {
    let total_tokens: usize = parts.iter().map(|&(_, n)| n).sum();
    if total_tokens == 0 {
        return Err(Error::Numeric("multilingual loss over zero tokens".into()));
    }
    let total_sum: f64 = parts.iter().map(|&(s, _)| s).sum();
    Ok(total_sum / total_tokens as f64)
}

/// Greedy token accuracy: fraction of non-pad gold positions whose logit
/// row argmaxes to the gold id. Returns (correct, counted).
pub fn token_accuracy<T: Scalar>(logits: &Tensor<T>, gold: &[usize], pad: usize) -> (usize, usize) {
    let (rows, cols) = (logits.rows(), logits.cols());
    debug_assert_eq!(rows, gold.len());
    let mut correct = 0;
    let mut counted = 0;
    for (i, &g) in gold.iter().enumerate() {
        if g == pad {
            continue;
        }
        counted += 1;
        let row = logits.row(i);
        let mut best = 0;
        for j in 1..cols {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == g {
            correct += 1;
        }
    }
    (correct, counted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_language_is_its_token_mean() {
        let got = multilingual_loss(&[(12.0, 4)]).unwrap();
        assert_eq!(got, 3.0);
    }

    #[test]
    fn pooling_matches_token_proportional_weights() {
        // means 1.0 and 2.0 with weights 0.25/0.75 → 1.75
        let got = multilingual_loss(&[(10.0, 10), (60.0, 30)]).unwrap();
        assert!((got - 1.75).abs() < 1e-15);
        let weighted = 0.25 * 1.0 + 0.75 * 2.0;
        assert!((got - weighted).abs() < 1e-15);
    }

    #[test]
    fn symmetric_languages_reduce_to_the_plain_mean() {
        let got = multilingual_loss(&[(8.0, 4), (8.0, 4)]).unwrap();
        assert_eq!(got, 2.0);
    }

    #[test]
    fn zero_tokens_is_an_error() {
        assert!(multilingual_loss(&[(0.0, 0), (0.0, 0)]).is_err());
        assert!(multilingual_loss(&[]).is_err());
    }

    #[test]
    fn accuracy_skips_pad_positions() {
        let logits = Tensor::<f64>::from_rows(&[
            vec![0.1, 0.9, 0.0],
            vec![0.8, 0.1, 0.1],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let (c, n) = token_accuracy(&logits, &[1, 2, 0], 0);
        assert_eq!((c, n), (1, 2)); // row 0 hits, row 1 misses, row 2 is pad
        let (c, n) = token_accuracy(&logits, &[1, 0, 2], 0);
        assert_eq!((c, n), (2, 2));
    }
}
