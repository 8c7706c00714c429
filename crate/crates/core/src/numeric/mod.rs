//! Dense tensors, a reverse-mode tape, parameters with Adam, and the
//! randomness helpers used by the retriever.

mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod random;
mod tensor;

pub use checkpoint::{
    read_checkpoint, read_checkpoint_from, write_checkpoint, write_checkpoint_to, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{central_difference, check_gradients, GradCheck, REL_FLOOR};
pub use graph::{Gradients, Graph, Var};
pub use params::{adam_step, AdamConfig, ParamId, ParamStore};
pub use random::{gumbel_from_uniform, gumbel_noise, gumbel_sample, open_uniform, seeded_rng, Rng64};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    Ok(softmax_unchecked(v))
}

pub(crate) fn softmax_unchecked(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}

/// Index of the maximum; the lowest index wins exact ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn softmax_matches_high_precision_values() {
        // e^k / (e + e^2 + e^3), computed with 40-digit arithmetic (mpmath).
        let expected = [
            0.090_030_573_170_380_458,
            0.244_728_471_054_797_652,
            0.665_240_955_774_821_890,
        ];
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(matches!(softmax(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_tie() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_is_a_distribution(v in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
                let p = softmax(&v).unwrap();
                prop_assert!(p.iter().all(|&x| x >= 0.0));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert_eq!(argmax(&p), argmax(&v));
            }
        }
    }
}
