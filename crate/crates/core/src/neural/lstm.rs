//! LSTM cell and bidirectional sequence encoder with hand-written
//! backpropagation through time.
//!
//! Gate equations are the standard formulation: input, forget and output
//! gates through the logistic sigmoid, candidate through tanh,
//! `c ← f⊙c_prev + i⊙g`, `h ← o⊙tanh(c)`. The backward pass consumes the
//! per-step caches recorded by the forward pass; gradient correctness is
//! pinned by finite-difference tests.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neural::tensor::{add_assign, Tensor};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights for one LSTM gate: input→hidden, hidden→hidden, bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
}

impl GateParams {
    fn init(input_dim: usize, hidden_dim: usize, bias: f64, rng: &mut ChaCha8Rng) -> Self {
        GateParams {
            wx: Tensor::xavier(hidden_dim, input_dim, rng),
            wh: Tensor::xavier(hidden_dim, hidden_dim, rng),
            b: Tensor::filled(&[hidden_dim], bias),
        }
    }

    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GateParams {
            wx: Tensor::zeros(&[hidden_dim, input_dim]),
            wh: Tensor::zeros(&[hidden_dim, hidden_dim]),
            b: Tensor::zeros(&[hidden_dim]),
        }
    }

    /// Pre-activation: wx·x + wh·h_prev + b.
    fn pre_activation(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let mut pre = self.b.as_slice().to_vec();
        self.wx.matvec_acc(x, &mut pre);
        self.wh.matvec_acc(h_prev, &mut pre);
        pre
    }

    fn backward(
        &self,
        d_pre: &[f64],
        x: &[f64],
        h_prev: &[f64],
        grads: &mut GateParams,
        dx: &mut [f64],
        dh_prev: &mut [f64],
    ) {
        grads.wx.outer_acc(d_pre, x);
        grads.wh.outer_acc(d_pre, h_prev);
        add_assign(grads.b.as_mut_slice(), d_pre);
        self.wx.matvec_t_acc(d_pre, dx);
        self.wh.matvec_t_acc(d_pre, dh_prev);
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(format!("{prefix}.wx"), &self.wx);
        f(format!("{prefix}.wh"), &self.wh);
        f(format!("{prefix}.b"), &self.b);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.wx"), &mut self.wx);
        f(format!("{prefix}.wh"), &mut self.wh);
        f(format!("{prefix}.b"), &mut self.b);
    }

    pub(crate) fn for_each_pair(&mut self, other: &GateParams, f: &mut dyn FnMut(&mut Tensor, &Tensor)) {
        f(&mut self.wx, &other.wx);
        f(&mut self.wh, &other.wh);
        f(&mut self.b, &other.b);
    }
}

/// All trainable weights of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub output_gate: GateParams,
    pub candidate: GateParams,
    input_dim: usize,
    hidden_dim: usize,
}

/// Intermediate values of one forward step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmCellParams {
    /// Xavier-uniform weights, zero biases except the forget-gate bias,
    /// which starts at 1.0.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        LstmCellParams {
            input_gate: GateParams::init(input_dim, hidden_dim, 0.0, rng),
            forget_gate: GateParams::init(input_dim, hidden_dim, 1.0, rng),
            output_gate: GateParams::init(input_dim, hidden_dim, 0.0, rng),
            candidate: GateParams::init(input_dim, hidden_dim, 0.0, rng),
            input_dim,
            hidden_dim,
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmCellParams {
            input_gate: GateParams::zeros(input_dim, hidden_dim),
            forget_gate: GateParams::zeros(input_dim, hidden_dim),
            output_gate: GateParams::zeros(input_dim, hidden_dim),
            candidate: GateParams::zeros(input_dim, hidden_dim),
            input_dim,
            hidden_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// One gated update. Validates dimensions and that the result is
    /// finite.
    pub fn step(&self, input: &[f64], state: (&[f64], &[f64])) -> Result<(Vec<f64>, Vec<f64>)> {
        let (h_prev, c_prev) = state;
        if input.len() != self.input_dim
            || h_prev.len() != self.hidden_dim
            || c_prev.len() != self.hidden_dim
        {
            return Err(Error::DimensionMismatch(format!(
                "lstm step: input {} (want {}), hidden {} / cell {} (want {})",
                input.len(),
                self.input_dim,
                h_prev.len(),
                c_prev.len(),
                self.hidden_dim
            )));
        }
        let cache = self.step_cached(input, h_prev, c_prev);
        if !cache.h.iter().all(|x| x.is_finite()) || !cache.c.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteValue("lstm step output".into()));
        }
        Ok((cache.h, cache.c))
    }

    pub(crate) fn step_cached(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStepCache {
        let i: Vec<f64> = self
            .input_gate
            .pre_activation(x, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let f: Vec<f64> = self
            .forget_gate
            .pre_activation(x, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let o: Vec<f64> = self
            .output_gate
            .pre_activation(x, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let g: Vec<f64> = self
            .candidate
            .pre_activation(x, h_prev)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let c: Vec<f64> = (0..self.hidden_dim)
            .map(|k| f[k] * c_prev[k] + i[k] * g[k])
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
        let h: Vec<f64> = (0..self.hidden_dim).map(|k| o[k] * tanh_c[k]).collect();
        LstmStepCache {
            i,
            f,
            o,
            g,
            c,
            tanh_c,
            h,
        }
    }

    /// Runs the cell over a sequence from zero initial state, returning
    /// all per-step caches.
    pub(crate) fn run(&self, inputs: &[Vec<f64>]) -> Vec<LstmStepCache> {
        let zero = vec![0.0; self.hidden_dim];
        let mut caches: Vec<LstmStepCache> = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (h_prev, c_prev) = match caches.last() {
                Some(prev) => (&prev.h, &prev.c),
                None => (&zero, &zero),
            };
            caches.push(self.step_cached(x, h_prev, c_prev));
        }
        caches
    }

    /// One step of backpropagation. `dh` and `dc` are the gradients
    /// arriving at this step's hidden and cell outputs; returns the
    /// gradients to pass to the previous step. Weight gradients are
    /// accumulated into `grads`, input gradients into `dx`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_step(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        cache: &LstmStepCache,
        dh: &[f64],
        dc_in: &[f64],
        grads: &mut LstmCellParams,
        dx: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden_dim;
        let mut d_pre_i = vec![0.0; hd];
        let mut d_pre_f = vec![0.0; hd];
        let mut d_pre_o = vec![0.0; hd];
        let mut d_pre_g = vec![0.0; hd];
        let mut dc_prev = vec![0.0; hd];

        for k in 0..hd {
            let dc = dc_in[k] + dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            let d_o = dh[k] * cache.tanh_c[k];
            let d_i = dc * cache.g[k];
            let d_g = dc * cache.i[k];
            let d_f = dc * c_prev[k];
            d_pre_o[k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
            d_pre_i[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
            d_pre_g[k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
            d_pre_f[k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
            dc_prev[k] = dc * cache.f[k];
        }

        let mut dh_prev = vec![0.0; hd];
        self.input_gate
            .backward(&d_pre_i, x, h_prev, &mut grads.input_gate, dx, &mut dh_prev);
        self.forget_gate
            .backward(&d_pre_f, x, h_prev, &mut grads.forget_gate, dx, &mut dh_prev);
        self.output_gate
            .backward(&d_pre_o, x, h_prev, &mut grads.output_gate, dx, &mut dh_prev);
        self.candidate
            .backward(&d_pre_g, x, h_prev, &mut grads.candidate, dx, &mut dh_prev);
        (dh_prev, dc_prev)
    }

    /// Backpropagates through a whole run. `dh_out[t]` is the gradient
    /// arriving at the step-`t` hidden output from outside the recurrence;
    /// `dx[t]` receives the gradient for `inputs[t]`.
    pub(crate) fn backward_run(
        &self,
        inputs: &[Vec<f64>],
        caches: &[LstmStepCache],
        dh_out: &[Vec<f64>],
        grads: &mut LstmCellParams,
        dx: &mut [Vec<f64>],
    ) {
        let zero = vec![0.0; self.hidden_dim];
        let mut dh_next = vec![0.0; self.hidden_dim];
        let mut dc_next = vec![0.0; self.hidden_dim];
        for t in (0..inputs.len()).rev() {
            let mut dh = dh_out[t].clone();
            add_assign(&mut dh, &dh_next);
            let (h_prev, c_prev) = if t == 0 {
                (&zero, &zero)
            } else {
                (&caches[t - 1].h, &caches[t - 1].c)
            };
            let (dh_p, dc_p) = self.backward_step(
                &inputs[t],
                h_prev,
                c_prev,
                &caches[t],
                &dh,
                &dc_next,
                grads,
                &mut dx[t],
            );
            dh_next = dh_p;
            dc_next = dc_p;
        }
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        self.input_gate.visit(&format!("{prefix}.input_gate"), f);
        self.forget_gate.visit(&format!("{prefix}.forget_gate"), f);
        self.output_gate.visit(&format!("{prefix}.output_gate"), f);
        self.candidate.visit(&format!("{prefix}.candidate"), f);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.input_gate.visit_mut(&format!("{prefix}.input_gate"), f);
        self.forget_gate.visit_mut(&format!("{prefix}.forget_gate"), f);
        self.output_gate.visit_mut(&format!("{prefix}.output_gate"), f);
        self.candidate.visit_mut(&format!("{prefix}.candidate"), f);
    }

    pub(crate) fn for_each_pair(
        &mut self,
        other: &LstmCellParams,
        f: &mut dyn FnMut(&mut Tensor, &Tensor),
    ) {
        self.input_gate.for_each_pair(&other.input_gate, f);
        self.forget_gate.for_each_pair(&other.forget_gate, f);
        self.output_gate.for_each_pair(&other.output_gate, f);
        self.candidate.for_each_pair(&other.candidate, f);
    }
}

/// A forward and a backward LSTM sharing input and hidden sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct BiEncoderParams {
    pub forward: LstmCellParams,
    pub backward: LstmCellParams,
}

/// Caches of one bidirectional run. The backward direction's caches are
/// stored in reversed-input order (step 0 saw the last input).
#[derive(Debug)]
pub(crate) struct BiRun {
    pub forward: Vec<LstmStepCache>,
    pub backward: Vec<LstmStepCache>,
}

impl BiEncoderParams {
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        BiEncoderParams {
            forward: LstmCellParams::init(input_dim, hidden_dim, rng),
            backward: LstmCellParams::init(input_dim, hidden_dim, rng),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        BiEncoderParams {
            forward: LstmCellParams::zeros(input_dim, hidden_dim),
            backward: LstmCellParams::zeros(input_dim, hidden_dim),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub(crate) fn run(&self, inputs: &[Vec<f64>]) -> BiRun {
        let fwd = self.forward.run(inputs);
        let reversed: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();
        let bwd = self.backward.run(&reversed);
        BiRun {
            forward: fwd,
            backward: bwd,
        }
    }

    /// Per-position outputs: position t is the concatenation of the
    /// forward hidden state at t and the backward hidden state at t
    /// (the backward pass runs over reversed input and is re-aligned).
    pub fn encode(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence);
        }
        let run = self.run(inputs);
        Ok(self.outputs(&run, inputs.len()))
    }

    pub(crate) fn outputs(&self, run: &BiRun, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|t| {
                let mut out = run.forward[t].h.clone();
                out.extend_from_slice(&run.backward[n - 1 - t].h);
                out
            })
            .collect()
    }

    /// Final hidden state of each direction, concatenated: the standard
    /// fixed-width summary of a variable-length sequence.
    pub fn encode_final(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence);
        }
        let run = self.run(inputs);
        Ok(self.final_summary(&run))
    }

    pub(crate) fn final_summary(&self, run: &BiRun) -> Vec<f64> {
        let mut out = run.forward.last().expect("non-empty run").h.clone();
        out.extend_from_slice(&run.backward.last().expect("non-empty run").h);
        out
    }

    /// Backpropagates per-position output gradients (`d_out[t]`, width
    /// 2H) through both directions; `dx[t]` receives input gradients.
    pub(crate) fn backward_run(
        &self,
        inputs: &[Vec<f64>],
        run: &BiRun,
        d_out: &[Vec<f64>],
        grads: &mut BiEncoderParams,
        dx: &mut [Vec<f64>],
    ) {
        let n = inputs.len();
        let h = self.hidden_dim();
        let d_fwd: Vec<Vec<f64>> = d_out.iter().map(|d| d[..h].to_vec()).collect();
        // Backward direction: re-reverse output grads to its own step order.
        let d_bwd: Vec<Vec<f64>> = (0..n).map(|t| d_out[n - 1 - t][h..].to_vec()).collect();

        self.forward
            .backward_run(inputs, &run.forward, &d_fwd, &mut grads.forward, dx);

        let reversed: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();
        let mut dx_rev = vec![vec![0.0; self.input_dim()]; n];
        self.backward
            .backward_run(&reversed, &run.backward, &d_bwd, &mut grads.backward, &mut dx_rev);
        for t in 0..n {
            add_assign(&mut dx[t], &dx_rev[n - 1 - t]);
        }
    }

    /// Backpropagates a gradient arriving only at the final summary
    /// (width 2H) through both directions.
    pub(crate) fn backward_final(
        &self,
        inputs: &[Vec<f64>],
        run: &BiRun,
        d_summary: &[f64],
        grads: &mut BiEncoderParams,
        dx: &mut [Vec<f64>],
    ) {
        let n = inputs.len();
        let h = self.hidden_dim();
        let mut d_out = vec![vec![0.0; 2 * h]; n];
        // Forward final hidden is at position n-1; the backward
        // direction's final step corresponds to input position 0.
        d_out[n - 1][..h].copy_from_slice(&d_summary[..h]);
        d_out[0][h..].copy_from_slice(&d_summary[h..]);
        self.backward_run(inputs, run, &d_out, grads, dx);
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        self.forward.visit(&format!("{prefix}.fwd"), f);
        self.backward.visit(&format!("{prefix}.bwd"), f);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.forward.visit_mut(&format!("{prefix}.fwd"), f);
        self.backward.visit_mut(&format!("{prefix}.bwd"), f);
    }

    pub(crate) fn for_each_pair(
        &mut self,
        other: &BiEncoderParams,
        f: &mut dyn FnMut(&mut Tensor, &Tensor),
    ) {
        self.forward.for_each_pair(&other.forward, f);
        self.backward.for_each_pair(&other.backward, f);
    }
}
