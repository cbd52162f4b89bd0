//! Affine layer and numerically stable softmax cross-entropy.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neural::tensor::{add_assign, Tensor};

/// Fully connected layer: y = W·x + b.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Tensor,
    pub b: Tensor,
}

impl Affine {
    pub fn init(input_dim: usize, output_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Affine {
            w: Tensor::xavier(output_dim, input_dim, rng),
            b: Tensor::zeros(&[output_dim]),
        }
    }

    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Affine {
            w: Tensor::zeros(&[output_dim, input_dim]),
            b: Tensor::zeros(&[output_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.as_slice().to_vec();
        self.w.matvec_acc(x, &mut y);
        y
    }

    /// Accumulates weight gradients for upstream gradient `dy` and adds
    /// the input gradient into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Affine, dx: &mut [f64]) {
        grads.w.outer_acc(dy, x);
        add_assign(grads.b.as_mut_slice(), dy);
        self.w.matvec_t_acc(dy, dx);
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(format!("{prefix}.w"), &self.w);
        f(format!("{prefix}.b"), &self.b);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.w"), &mut self.w);
        f(format!("{prefix}.b"), &mut self.b);
    }

    pub(crate) fn for_each_pair(&mut self, other: &Affine, f: &mut dyn FnMut(&mut Tensor, &Tensor)) {
        f(&mut self.w, &other.w);
        f(&mut self.b, &other.b);
    }
}

/// Softmax of `logits` (max-subtracted for stability) and the
/// cross-entropy loss against `gold`. The gradient of the loss with
/// respect to the logits is `probabilities − one_hot(gold)`.
pub fn softmax_xent(logits: &[f64], gold: usize) -> Result<(f64, Vec<f64>)> {
    if gold >= logits.len() {
        return Err(Error::BadClassIndex {
            index: gold,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    // −log p[gold], computed in log space to survive saturated logits.
    let loss = -(logits[gold] - max - sum.ln());
    Ok((loss, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tensor::argmax;

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let (loss, probs) = softmax_xent(&[0.7, 0.7, 0.7, 0.7], 2).unwrap();
        for p in &probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
        assert_eq!(argmax(&probs), 0);
    }

    #[test]
    fn extreme_logits_do_not_overflow() {
        let (loss, probs) = softmax_xent(&[1000.0, 0.0], 0).unwrap();
        assert!(probs[0] > 1.0 - 1e-12);
        assert!(probs[1] < 1e-12);
        assert!(loss.is_finite());
        assert!(loss >= 0.0);

        // Loss against the hopeless class must stay finite too.
        let (loss, _) = softmax_xent(&[1000.0, 0.0], 1).unwrap();
        assert!(loss.is_finite());
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let logits = [0.3, -2.5, 4.1, 0.0, 1.7];
        let (_, probs) = softmax_xent(&logits, 1).unwrap();
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn bad_class_index_rejected() {
        assert!(matches!(
            softmax_xent(&[0.0, 1.0], 2),
            Err(Error::BadClassIndex { index: 2, classes: 2 })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // d loss / d logit = p − one_hot(gold), checked by central
        // differences with step 1e-5.
        let logits = vec![0.4, -1.2, 2.2, 0.1];
        let gold = 2;
        let (_, probs) = softmax_xent(&logits, gold).unwrap();
        let eps = 1e-5;
        for j in 0..logits.len() {
            let mut plus = logits.clone();
            plus[j] += eps;
            let mut minus = logits.clone();
            minus[j] -= eps;
            let (lp, _) = softmax_xent(&plus, gold).unwrap();
            let (lm, _) = softmax_xent(&minus, gold).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            let analytic = probs[j] - if j == gold { 1.0 } else { 0.0 };
            assert!(
                (fd - analytic).abs() < 1e-8,
                "logit {j}: fd {fd} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn affine_backward_matches_finite_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let layer = Affine::init(3, 2, &mut rng);
        let x = [0.5, -1.0, 0.25];
        let gold = 1;

        let loss_of = |layer: &Affine| -> f64 {
            let y = layer.forward(&x);
            softmax_xent(&y, gold).unwrap().0
        };

        let y = layer.forward(&x);
        let (_, probs) = softmax_xent(&y, gold).unwrap();
        let mut dy = probs;
        dy[gold] -= 1.0;
        let mut grads = Affine::zeros(3, 2);
        let mut dx = vec![0.0; 3];
        layer.backward(&x, &dy, &mut grads, &mut dx);

        let eps = 1e-6;
        let mut perturbed = layer.clone();
        for idx in 0..perturbed.w.len() {
            let orig = perturbed.w.as_slice()[idx];
            perturbed.w.as_mut_slice()[idx] = orig + eps;
            let lp = loss_of(&perturbed);
            perturbed.w.as_mut_slice()[idx] = orig - eps;
            let lm = loss_of(&perturbed);
            perturbed.w.as_mut_slice()[idx] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            assert!((fd - grads.w.as_slice()[idx]).abs() < 1e-6);
        }
        for idx in 0..perturbed.b.len() {
            let orig = perturbed.b.as_slice()[idx];
            perturbed.b.as_mut_slice()[idx] = orig + eps;
            let lp = loss_of(&perturbed);
            perturbed.b.as_mut_slice()[idx] = orig - eps;
            let lm = loss_of(&perturbed);
            perturbed.b.as_mut_slice()[idx] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            assert!((fd - grads.b.as_slice()[idx]).abs() < 1e-6);
        }
    }
}
