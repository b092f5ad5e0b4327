//! Parameters, forward pass, and backpropagation.
//!
//! Mean of word embeddings -> dense + ReLU -> dense -> softmax, trained on
//! mean cross-entropy. All matrices are row-major `Vec<f64>`.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub dims: Dims,
    /// `vocab x embed`; row 0 is the unknown word.
    pub embedding: Vec<f64>,
    /// `embed x hidden`
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    /// `hidden x classes`
    pub output_weights: Vec<f64>,
    pub output_bias: Vec<f64>,
}

/// One training example: word ids and a class index.
pub type Example<'a> = (&'a [usize], usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Only rows touched by the batch.
    pub embedding: BTreeMap<usize, Vec<f64>>,
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: Vec<f64>,
}

struct Activations {
    pooled: Vec<f64>,
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Params {
    /// Embedding entries uniform in `±embed_scale`; dense layers use Glorot
    /// uniform bounds; biases start at zero.
    pub fn init(dims: Dims, embed_scale: f64, rng: &mut Rng) -> Self {
        let mut draw = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
        };
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let embedding = draw(dims.vocab * dims.embed, embed_scale);
        let hidden_weights = draw(dims.embed * dims.hidden, glorot(dims.embed, dims.hidden));
        let output_weights = draw(dims.hidden * dims.classes, glorot(dims.hidden, dims.classes));
        Self {
            dims,
            embedding,
            hidden_weights,
            hidden_bias: vec![0.0; dims.hidden],
            output_weights,
            output_bias: vec![0.0; dims.classes],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weight_blocks()
            .into_iter()
            .chain([&self.hidden_bias[..], &self.output_bias[..]])
            .all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn weight_blocks(&self) -> [&[f64]; 3] {
        [&self.embedding, &self.hidden_weights, &self.output_weights]
    }

    pub fn weight_blocks_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [
            &mut self.embedding,
            &mut self.hidden_weights,
            &mut self.output_weights,
        ]
    }

    fn forward(&self, ids: &[usize]) -> Activations {
        let Dims { embed, hidden, classes, .. } = self.dims;
        let mut pooled = vec![0.0; embed];
        for &id in ids {
            let row = &self.embedding[id * embed..(id + 1) * embed];
            for (p, e) in pooled.iter_mut().zip(row) {
                *p += e;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        pooled.iter_mut().for_each(|p| *p *= inv);

        let mut pre_hidden = self.hidden_bias.clone();
        for (i, &x) in pooled.iter().enumerate() {
            let row = &self.hidden_weights[i * hidden..(i + 1) * hidden];
            for (h, w) in pre_hidden.iter_mut().zip(row) {
                *h += x * w;
            }
        }
        let hidden_act: Vec<f64> = pre_hidden.iter().map(|&z| z.max(0.0)).collect();

        let mut logits = self.output_bias.clone();
        for (j, &a) in hidden_act.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &self.output_weights[j * classes..(j + 1) * classes];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += a * w;
            }
        }
        Activations {
            pooled,
            pre_hidden,
            hidden: hidden_act,
            probs: softmax(&logits),
        }
    }

    /// Class probabilities. `ids` must be non-empty.
    pub fn probabilities(&self, ids: &[usize]) -> Vec<f64> {
        self.forward(ids).probs
    }

    /// Mean cross-entropy over `batch`.
    pub fn loss(&self, batch: &[Example<'_>]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|(ids, y)| -self.forward(ids).probs[*y].max(f64::MIN_POSITIVE).ln())
            .sum();
        total / batch.len() as f64
    }

    /// Mean cross-entropy over `batch` and its exact gradient.
    pub fn loss_and_grad(&self, batch: &[Example<'_>]) -> (f64, Gradients) {
        let Dims { embed, hidden, classes, .. } = self.dims;
        let mut g = Gradients {
            embedding: BTreeMap::new(),
            hidden_weights: vec![0.0; embed * hidden],
            hidden_bias: vec![0.0; hidden],
            output_weights: vec![0.0; hidden * classes],
            output_bias: vec![0.0; classes],
        };
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &(ids, y) in batch {
            let act = self.forward(ids);
            loss -= act.probs[y].max(f64::MIN_POSITIVE).ln();

            let mut d_logits = act.probs;
            d_logits[y] -= 1.0;
            d_logits.iter_mut().for_each(|d| *d *= scale);

            let mut d_hidden = vec![0.0; hidden];
            for j in 0..hidden {
                let row = j * classes..(j + 1) * classes;
                let a = act.hidden[j];
                for (c, gw) in g.output_weights[row.clone()].iter_mut().enumerate() {
                    *gw += a * d_logits[c];
                }
                if act.pre_hidden[j] > 0.0 {
                    d_hidden[j] = self.output_weights[row]
                        .iter()
                        .zip(&d_logits)
                        .map(|(w, d)| w * d)
                        .sum();
                }
            }
            for (gb, d) in g.output_bias.iter_mut().zip(&d_logits) {
                *gb += d;
            }
            for (gb, d) in g.hidden_bias.iter_mut().zip(&d_hidden) {
                *gb += d;
            }

            let mut d_pooled = vec![0.0; embed];
            for i in 0..embed {
                let row = i * hidden..(i + 1) * hidden;
                let x = act.pooled[i];
                for (gw, d) in g.hidden_weights[row.clone()].iter_mut().zip(&d_hidden) {
                    *gw += x * d;
                }
                d_pooled[i] = self.hidden_weights[row]
                    .iter()
                    .zip(&d_hidden)
                    .map(|(w, d)| w * d)
                    .sum();
            }
            let inv = 1.0 / ids.len() as f64;
            for &id in ids {
                let row = g.embedding.entry(id).or_insert_with(|| vec![0.0; embed]);
                for (r, d) in row.iter_mut().zip(&d_pooled) {
                    *r += d * inv;
                }
            }
        }
        (loss * scale, g)
    }

    pub fn apply(&mut self, g: &Gradients, learning_rate: f64) {
        let embed = self.dims.embed;
        for (&id, row) in &g.embedding {
            for (p, d) in self.embedding[id * embed..(id + 1) * embed].iter_mut().zip(row) {
                *p -= learning_rate * d;
            }
        }
        let step = |params: &mut [f64], grads: &[f64]| {
            for (p, d) in params.iter_mut().zip(grads) {
                *p -= learning_rate * d;
            }
        };
        step(&mut self.hidden_weights, &g.hidden_weights);
        step(&mut self.hidden_bias, &g.hidden_bias);
        step(&mut self.output_weights, &g.output_weights);
        step(&mut self.output_bias, &g.output_bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn toy() -> Params {
        let dims = Dims { vocab: 6, embed: 4, hidden: 5, classes: 3 };
        let mut p = Params::init(dims, 0.5, &mut seed::rng(11));
        p.hidden_bias.iter_mut().enumerate().for_each(|(i, b)| *b = 0.05 * i as f64);
        p
    }

    fn batch() -> Vec<(Vec<usize>, usize)> {
        vec![
            (vec![1, 2, 2], 0),
            (vec![3], 1),
            (vec![4, 5, 1, 0], 2),
            (vec![2, 5], 1),
            (vec![0, 3, 3, 4], 0),
        ]
    }

    fn refs(b: &[(Vec<usize>, usize)]) -> Vec<Example<'_>> {
        b.iter().map(|(ids, y)| (ids.as_slice(), *y)).collect()
    }

    fn check_block(
        p: &Params,
        analytic: &[f64],
        get: impl Fn(&mut Params) -> &mut Vec<f64>,
        ex: &[Example<'_>],
    ) {
        let h = 1e-5;
        for (k, &a) in analytic.iter().enumerate() {
            let mut plus = p.clone();
            get(&mut plus)[k] += h;
            let mut minus = p.clone();
            get(&mut minus)[k] -= h;
            let numeric = (plus.loss(ex) - minus.loss(ex)) / (2.0 * h);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            assert!(
                (a - numeric).abs() / denom < 1e-4 || (a - numeric).abs() < 1e-9,
                "entry {k}: analytic {a} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let p = toy();
        let b = batch();
        let ex = refs(&b);
        let (loss, g) = p.loss_and_grad(&ex);
        assert!((loss - p.loss(&ex)).abs() < 1e-12);
        check_block(&p, &g.output_bias, |q| &mut q.output_bias, &ex);
        check_block(&p, &g.output_weights, |q| &mut q.output_weights, &ex);
        check_block(&p, &g.hidden_bias, |q| &mut q.hidden_bias, &ex);
        check_block(&p, &g.hidden_weights, |q| &mut q.hidden_weights, &ex);
        let mut dense = vec![0.0; p.embedding.len()];
        for (&id, row) in &g.embedding {
            dense[id * 4..(id + 1) * 4].copy_from_slice(row);
        }
        check_block(&p, &dense, |q| &mut q.embedding, &ex);
    }

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[1000.0, -1000.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn descent_step_reduces_loss() {
        let mut p = toy();
        let b = batch();
        let ex = refs(&b);
        let (before, g) = p.loss_and_grad(&ex);
        p.apply(&g, 0.1);
        assert!(p.loss(&ex) < before);
    }
}
