//! Minimal dense f64 tensor used for all trainable parameters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A dense row-major tensor of f64 values. Rank 1 (vectors) and rank 2
/// (matrices) cover everything the tagger needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// Xavier-uniform initialization: uniform in [-r, r] with
    /// r = sqrt(6 / (fan_in + fan_out)).
    pub fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let r = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-r..r)).collect();
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    /// Uniform in [-r, r]; for vector-shaped parameters initialized the
    /// same way as matrices.
    pub fn uniform(shape: &[usize], r: f64, rng: &mut ChaCha8Rng) -> Self {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-r..r)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row `r` of a rank-2 tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols();
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// y += W·x for a [rows, cols] matrix, x of length cols, y of length
    /// rows.
    pub fn matvec_acc(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(self.shape.len(), 2);
        debug_assert_eq!(x.len(), self.cols());
        debug_assert_eq!(y.len(), self.rows());
        let cols = self.cols();
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.data[r * cols..(r + 1) * cols];
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *out += acc;
        }
    }

    /// x_grad += Wᵀ·d for a [rows, cols] matrix, d of length rows.
    pub fn matvec_t_acc(&self, d: &[f64], x_grad: &mut [f64]) {
        debug_assert_eq!(d.len(), self.rows());
        debug_assert_eq!(x_grad.len(), self.cols());
        let cols = self.cols();
        for (r, dv) in d.iter().enumerate() {
            if *dv == 0.0 {
                continue;
            }
            let row = &self.data[r * cols..(r + 1) * cols];
            for (g, w) in x_grad.iter_mut().zip(row) {
                *g += dv * w;
            }
        }
    }

    /// self += d ⊗ x (outer product accumulate into a [|d|, |x|] matrix).
    pub fn outer_acc(&mut self, d: &[f64], x: &[f64]) {
        debug_assert_eq!(d.len(), self.rows());
        debug_assert_eq!(x.len(), self.cols());
        let cols = self.cols();
        for (r, dv) in d.iter().enumerate() {
            if *dv == 0.0 {
                continue;
            }
            let row = &mut self.data[r * cols..(r + 1) * cols];
            for (w, xv) in row.iter_mut().zip(x) {
                *w += dv * xv;
            }
        }
    }

    /// self += scale · other, elementwise.
    pub fn axpy(&mut self, scale: f64, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// Clamp every entry to [-limit, limit].
    pub fn clamp(&mut self, limit: f64) {
        for x in self.data.iter_mut() {
            *x = x.clamp(-limit, limit);
        }
    }
}

pub(crate) fn add_assign(acc: &mut [f64], other: &[f64]) {
    debug_assert_eq!(acc.len(), other.len());
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    // Lowest index wins ties.
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn from_vec_checks_shape() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::from_vec(&[2, 3], vec![0.0; 5]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn matvec_and_transpose() {
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let x = [1.0, 0.5, -1.0];
        let mut y = vec![0.0; 2];
        w.matvec_acc(&x, &mut y);
        assert_eq!(y, vec![1.0 + 1.0 - 3.0, 4.0 + 2.5 - 6.0]);

        let d = [2.0, -1.0];
        let mut xg = vec![0.0; 3];
        w.matvec_t_acc(&d, &mut xg);
        assert_eq!(xg, vec![2.0 - 4.0, 4.0 - 5.0, 6.0 - 6.0]);
    }

    #[test]
    fn outer_accumulates() {
        let mut w = Tensor::zeros(&[2, 2]);
        w.outer_acc(&[1.0, 2.0], &[3.0, 4.0]);
        w.outer_acc(&[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(w.as_slice(), &[4.0, 5.0, 6.0, 8.0]);
    }

    #[test]
    fn xavier_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = Tensor::xavier(10, 30, &mut rng);
        let r = (6.0 / 40.0f64).sqrt();
        assert!(t.as_slice().iter().all(|&x| x.abs() <= r));
        // and is not degenerate
        assert!(t.as_slice().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
        assert_eq!(argmax(&[-1.0, -3.0]), 0);
    }
}
