use std::cmp::Ordering;

use crate::nn::Tensor;
use crate::scalar::Scalar;

use super::{EncoderOutput, Model, ModelError, BOS, EOS};

/// A decoded token sequence with its summed log-probability. `tokens`
/// excludes BOS and EOS; `length` counts EOS when the hypothesis finished.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub length: usize,
    pub finished: bool,
}

impl Hypothesis {
    /// Beam objective: summed log-probability divided by length.
    pub fn normalized(&self) -> f64 {
        if self.length == 0 {
            0.0
        } else {
            self.log_prob / self.length as f64
        }
    }
}

fn log_softmax_last_row<T: Scalar>(logits: &Tensor<T>) -> Vec<f64> {
    let row: Vec<f64> = logits.row(logits.rows() - 1).iter().map(|x| x.as_f64()).collect();
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.into_iter().map(|x| x - lse).collect()
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Model<T> {
    fn next_log_probs(&self, enc: &EncoderOutput<T>, prefix: &[usize]) -> Result<Vec<f64>, ModelError> {
        let mut input = Vec::with_capacity(prefix.len() + 1);
        input.push(BOS);
        input.extend_from_slice(prefix);
        Ok(log_softmax_last_row(&self.decode_train(enc, &input)?))
    }

    /// Greedy decoding, scored under the beam objective.
    pub fn greedy_hypothesis(&self, enc: &EncoderOutput<T>) -> Result<Hypothesis, ModelError> {
        let mut hyp = Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            length: 0,
            finished: false,
        };
        for _ in 0..self.config.max_len {
            let lp = self.next_log_probs(enc, &hyp.tokens)?;
            let tok = argmax(&lp);
            hyp.log_prob += lp[tok];
            hyp.length += 1;
            if tok == EOS {
                hyp.finished = true;
                break;
            }
            hyp.tokens.push(tok);
        }
        Ok(hyp)
    }

    /// Argmax decoding from BOS until EOS or `max_len` tokens.
    pub fn decode_greedy(&self, enc: &EncoderOutput<T>) -> Result<Vec<usize>, ModelError> {
        Ok(self.greedy_hypothesis(enc)?.tokens)
    }

    /// Beam search over summed log-probabilities; the result maximizes
    /// log-probability / length among finished beams, beams still open at
    /// `max_len`, and the greedy sequence.
    pub fn beam_hypothesis(
        &self,
        enc: &EncoderOutput<T>,
        beam_width: usize,
    ) -> Result<Hypothesis, ModelError> {
        if beam_width < 1 {
            return Err(ModelError::Config("beam width must be >= 1".into()));
        }
        let mut alive = vec![Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            length: 0,
            finished: false,
        }];
        let mut finished: Vec<Hypothesis> = Vec::new();

        for _ in 0..self.config.max_len {
            // (score, step log-prob, parent, token)
            let mut cands: Vec<(f64, f64, usize, usize)> = Vec::new();
            for (pi, h) in alive.iter().enumerate() {
                let lp = self.next_log_probs(enc, &h.tokens)?;
                cands.extend(lp.iter().enumerate().map(|(tok, &l)| (h.log_prob + l, l, pi, tok)));
            }
            cands.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(Ordering::Equal)
                    .then(b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal))
                    .then(a.2.cmp(&b.2))
                    .then(a.3.cmp(&b.3))
            });
            let mut next = Vec::with_capacity(beam_width);
            for &(score, _, pi, tok) in cands.iter().take(beam_width) {
                let parent = &alive[pi];
                let mut h = Hypothesis {
                    tokens: parent.tokens.clone(),
                    log_prob: score,
                    length: parent.length + 1,
                    finished: tok == EOS,
                };
                if h.finished {
                    finished.push(h);
                } else {
                    h.tokens.push(tok);
                    next.push(h);
                }
            }
            alive = next;
            if alive.is_empty() || finished.len() >= beam_width {
                break;
            }
        }

        let greedy = self.greedy_hypothesis(enc)?;
        let mut best: Option<Hypothesis> = None;
        for h in finished.into_iter().chain(alive).chain(std::iter::once(greedy)) {
            let better = match &best {
                None => true,
                Some(b) => h.normalized() > b.normalized(),
            };
            if better {
                best = Some(h);
            }
        }
        Ok(best.expect("the greedy hypothesis is always a candidate"))
    }

    pub fn decode_beam(&self, enc: &EncoderOutput<T>, beam_width: usize) -> Result<Vec<usize>, ModelError> {
        Ok(self.beam_hypothesis(enc, beam_width)?.tokens)
    }
}
