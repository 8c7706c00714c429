use std::collections::HashMap;

use crate::error::{Error, Result};

const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 on the 0–100 scale: clipped n-gram precisions pooled over
/// the corpus, uniform weights, and a corpus-level brevity penalty.
///
/// Orders for which the hypotheses contain no n-grams at all are left out
/// of the geometric mean, so a corpus of short exact matches still scores
/// 100. Any order with candidates but no matches gives 0.
pub fn corpus_bleu(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch {
            what: "bleu corpus",
            left: hypotheses.len(),
            right: references.len(),
        });
    }
    let mut matched = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            total[n - 1] += h.len().saturating_sub(n - 1);
            matched[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..MAX_ORDER {
        if total[n] == 0 {
            continue;
        }
        if matched[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / total[n] as f64).ln();
        orders += 1;
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * (log_sum / orders as f64).exp())
}

/// [`corpus_bleu`] over whitespace-separated strings.
pub fn corpus_bleu_text(hypotheses: &[&str], references: &[&str]) -> Result<f64> {
    let split = |v: &[&str]| -> Vec<Vec<String>> {
        v.iter()
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .collect()
    };
    corpus_bleu(&split(hypotheses), &split(references))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_corpus_scores_100() {
        let c = vec![toks("the cat sat on the mat"), toks("hi there")];
        assert!((corpus_bleu(&c, &c).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        assert_eq!(corpus_bleu(&[vec![]], &[toks("a b c d")]).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(corpus_bleu(&[vec![]], &[]).is_err());
    }

    #[test]
    fn no_four_gram_match_scores_zero() {
        let h = [toks("a b c x d e f")];
        let r = [toks("a b c y d e f")];
        assert_eq!(corpus_bleu(&h, &r).unwrap(), 0.0);
    }
}
