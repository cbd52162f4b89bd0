//! Plain SGD with geometric per-epoch learning-rate decay.

use crate::error::{Error, Result};
use crate::neural::tensor::Tensor;

/// SGD state: `rate(epoch) = base_rate · (1 − decay)^epoch`, with the
/// decay applied once at each epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    base_rate: f64,
    decay: f64,
    epoch: usize,
}

impl Sgd {
    pub fn new(base_rate: f64, decay: f64) -> Result<Self> {
        if !(base_rate > 0.0) || !(0.0..1.0).contains(&decay) {
            return Err(Error::DimensionMismatch(format!(
                "bad optimizer settings: base_rate {base_rate}, decay {decay}"
            )));
        }
        Ok(Sgd {
            base_rate,
            decay,
            epoch: 0,
        })
    }

    pub fn rate(&self) -> f64 {
        self.base_rate * (1.0 - self.decay).powi(self.epoch as i32)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
    }
}

/// θ ← θ − rate·∇θ.
pub fn sgd_step(param: &mut Tensor, grad: &Tensor, rate: f64) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::DimensionMismatch(format!(
            "sgd step: parameter {:?} vs gradient {:?}",
            param.shape(),
            grad.shape()
        )));
    }
    param.axpy(-rate, grad);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_rate_is_base_rate() {
        let opt = Sgd::new(0.13, 0.05).unwrap();
        assert_eq!(opt.rate(), 0.13);
    }

    #[test]
    fn one_epoch_of_decay() {
        let mut opt = Sgd::new(0.13, 0.05).unwrap();
        opt.advance_epoch();
        assert!((opt.rate() - 0.13 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn schedule_is_geometric() {
        let mut opt = Sgd::new(0.13, 0.05).unwrap();
        let mut expected = 0.13;
        for _ in 0..30 {
            assert!((opt.rate() - expected).abs() < 1e-12);
            opt.advance_epoch();
            expected *= 0.95;
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut param = Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let before = param.clone();
        let grad = Tensor::zeros(&[2, 2]);
        sgd_step(&mut param, &grad, 0.13).unwrap();
        assert_eq!(param, before);
    }

    #[test]
    fn step_subtracts_scaled_gradient() {
        let mut param = Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap();
        let grad = Tensor::from_vec(&[3], vec![2.0, 0.0, -4.0]).unwrap();
        sgd_step(&mut param, &grad, 0.5).unwrap();
        assert_eq!(param.as_slice(), &[0.0, 1.0, 3.0]);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut param = Tensor::zeros(&[2]);
        let grad = Tensor::zeros(&[3]);
        assert!(matches!(
            sgd_step(&mut param, &grad, 0.1),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn bad_settings_rejected() {
        assert!(Sgd::new(0.0, 0.05).is_err());
        assert!(Sgd::new(-1.0, 0.05).is_err());
        assert!(Sgd::new(0.13, 1.0).is_err());
        assert!(Sgd::new(0.13, -0.1).is_err());
    }
}
