use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_min_rows, fit, glorot, FlatModel, TrainConfig, TrainTrace};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Gate order used throughout the parameter layout.
const GATES: usize = 4;
const INPUT: usize = 0;
const FORGET: usize = 1;
const OUTPUT: usize = 2;
const CANDIDATE: usize = 3;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-layer LSTM with a linear read-out of the last hidden state.
///
/// Flat layout: `W_i W_f W_o W_g` (each `H × F`), `U_i U_f U_o U_g` (each
/// `H × H`), `b_i b_f b_o b_g` (each `H`), head weights (`H`), head bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

struct Step {
    gates: [Vec<f64>; GATES],
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Layout {
    f: usize,
    h: usize,
}

impl Layout {
    fn w(self, gate: usize) -> usize {
        gate * self.h * self.f
    }
    fn u(self, gate: usize) -> usize {
        GATES * self.h * self.f + gate * self.h * self.h
    }
    fn b(self, gate: usize) -> usize {
        GATES * self.h * (self.f + self.h) + gate * self.h
    }
    fn head_w(self) -> usize {
        GATES * self.h * (self.f + self.h + 1)
    }
    fn head_b(self) -> usize {
        self.head_w() + self.h
    }
    fn len(self) -> usize {
        self.head_b() + 1
    }
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 {
            return Err(Error::Dimension("LSTM sizes must be positive".into()));
        }
        let layout = Layout { f: input_size, h: hidden_size };
        Ok(LstmParams { input_size, hidden_size, params: vec![0.0; layout.len()] })
    }

    /// Glorot-uniform weights, zero biases except the forget gate at 1.
    pub fn init(input_size: usize, hidden_size: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(input_size, hidden_size)?;
        let l = p.layout();
        let (f, h) = (input_size, hidden_size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for gate in 0..GATES {
            glorot(&mut rng, f, h, &mut p.params[l.w(gate)..l.w(gate) + h * f]);
        }
        for gate in 0..GATES {
            glorot(&mut rng, h, h, &mut p.params[l.u(gate)..l.u(gate) + h * h]);
        }
        p.bias_mut(FORGET).iter_mut().for_each(|b| *b = 1.0);
        glorot(&mut rng, h, 1, &mut p.params[l.head_w()..l.head_w() + h]);
        Ok(p)
    }

    fn layout(&self) -> Layout {
        Layout { f: self.input_size, h: self.hidden_size }
    }

    fn bias_mut(&mut self, gate: usize) -> &mut [f64] {
        let l = self.layout();
        &mut self.params[l.b(gate)..l.b(gate) + l.h]
    }

    pub fn input_bias_mut(&mut self) -> &mut [f64] {
        self.bias_mut(INPUT)
    }

    pub fn forget_bias_mut(&mut self) -> &mut [f64] {
        self.bias_mut(FORGET)
    }

    pub fn head_bias_mut(&mut self) -> &mut f64 {
        let i = self.layout().head_b();
        &mut self.params[i]
    }

    pub fn forget_bias(&self) -> &[f64] {
        let l = self.layout();
        &self.params[l.b(FORGET)..l.b(FORGET) + l.h]
    }

    /// Named parameter tensors as `(name, range in the flat layout)`.
    pub fn tensors(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let l = self.layout();
        let (f, h) = (l.f, l.h);
        vec![
            ("W_i", l.w(INPUT)..l.w(INPUT) + h * f),
            ("W_f", l.w(FORGET)..l.w(FORGET) + h * f),
            ("W_o", l.w(OUTPUT)..l.w(OUTPUT) + h * f),
            ("W_g", l.w(CANDIDATE)..l.w(CANDIDATE) + h * f),
            ("U_i", l.u(INPUT)..l.u(INPUT) + h * h),
            ("U_f", l.u(FORGET)..l.u(FORGET) + h * h),
            ("U_o", l.u(OUTPUT)..l.u(OUTPUT) + h * h),
            ("U_g", l.u(CANDIDATE)..l.u(CANDIDATE) + h * h),
            ("b_i", l.b(INPUT)..l.b(INPUT) + h),
            ("b_f", l.b(FORGET)..l.b(FORGET) + h),
            ("b_o", l.b(OUTPUT)..l.b(OUTPUT) + h),
            ("b_g", l.b(CANDIDATE)..l.b(CANDIDATE) + h),
            ("head_w", l.head_w()..l.head_w() + h),
            ("head_b", l.head_b()..l.head_b() + 1),
        ]
    }

    fn check(&self, seq: &Matrix) -> Result<()> {
        if seq.cols() != self.input_size || seq.rows() == 0 {
            return Err(Error::Dimension(format!(
                "sequence is {}×{}, LSTM expects L×{} with L ≥ 1",
                seq.rows(),
                seq.cols(),
                self.input_size
            )));
        }
        Ok(())
    }

    fn unroll(&self, seq: &Matrix, init: &LstmState) -> Vec<Step> {
        let l = self.layout();
        let (f, h) = (l.f, l.h);
        let p = &self.params;
        let mut steps: Vec<Step> = Vec::with_capacity(seq.rows());
        for t in 0..seq.rows() {
            let x = seq.row(t);
            let (h_prev, c_prev) = match steps.last() {
                Some(s) => (&s.h[..], &s.c[..]),
                None => (&init.h[..], &init.c[..]),
            };
            let gates: [Vec<f64>; GATES] = std::array::from_fn(|gate| {
                (0..h)
                    .map(|j| {
                        let wr = &p[l.w(gate) + j * f..l.w(gate) + (j + 1) * f];
                        let ur = &p[l.u(gate) + j * h..l.u(gate) + (j + 1) * h];
                        let z = wr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                            + ur.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>()
                            + p[l.b(gate) + j];
                        if gate == CANDIDATE {
                            z.tanh()
                        } else {
                            sigmoid(z)
                        }
                    })
                    .collect()
            });
            let c: Vec<f64> = (0..h)
                .map(|j| gates[FORGET][j] * c_prev[j] + gates[INPUT][j] * gates[CANDIDATE][j])
                .collect();
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            let hs: Vec<f64> = (0..h).map(|j| gates[OUTPUT][j] * tanh_c[j]).collect();
            steps.push(Step { gates, c, tanh_c, h: hs });
        }
        steps
    }

    fn read_out(&self, h_last: &[f64]) -> f64 {
        let l = self.layout();
        let w = &self.params[l.head_w()..l.head_w() + l.h];
        w.iter().zip(h_last).map(|(a, b)| a * b).sum::<f64>() + self.params[l.head_b()]
    }

    /// Runs the cell from an explicit initial state; returns the read-out
    /// and the final state.
    pub fn run(&self, seq: &Matrix, init: &LstmState) -> Result<(f64, LstmState)> {
        self.check(seq)?;
        if init.h.len() != self.hidden_size || init.c.len() != self.hidden_size {
            return Err(Error::Dimension("initial state size".into()));
        }
        let steps = self.unroll(seq, init);
        let last = steps.last().unwrap();
        Ok((self.read_out(&last.h), LstmState { h: last.h.clone(), c: last.c.clone() }))
    }

    /// `∂output/∂θ` in the flat parameter layout, via backpropagation
    /// through time.
    pub fn output_gradient(&self, seq: &Matrix) -> Result<Vec<f64>> {
        self.check(seq)?;
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_gradient(seq, &|_| 1.0, &mut g);
        Ok(g)
    }
}

impl FlatModel for LstmParams {
    type Input = Matrix;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn predict(&self, seq: &Matrix) -> f64 {
        let steps = self.unroll(seq, &LstmState::zeros(self.hidden_size));
        self.read_out(&steps.last().unwrap().h)
    }

    fn accumulate_gradient(&self, seq: &Matrix, dout: &dyn Fn(f64) -> f64, grad: &mut [f64]) -> f64 {
        let l = self.layout();
        let (f, h) = (l.f, l.h);
        let p = &self.params;
        let init = LstmState::zeros(h);
        let steps = self.unroll(seq, &init);
        let out = self.read_out(&steps.last().unwrap().h);
        let dy = dout(out);

        let head = &p[l.head_w()..l.head_w() + h];
        for (g, hv) in grad[l.head_w()..l.head_w() + h].iter_mut().zip(&steps.last().unwrap().h) {
            *g += dy * hv;
        }
        grad[l.head_b()] += dy;

        let mut dh: Vec<f64> = head.iter().map(|w| dy * w).collect();
        let mut dc_next = vec![0.0; h];
        let mut da: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; h]);
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            let (h_prev, c_prev) = if t == 0 {
                (&init.h[..], &init.c[..])
            } else {
                (&steps[t - 1].h[..], &steps[t - 1].c[..])
            };
            for j in 0..h {
                let (i_g, f_g, o_g, g_g) = (
                    s.gates[INPUT][j],
                    s.gates[FORGET][j],
                    s.gates[OUTPUT][j],
                    s.gates[CANDIDATE][j],
                );
                let d_o = dh[j] * s.tanh_c[j];
                let dc = dh[j] * o_g * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
                da[INPUT][j] = dc * g_g * i_g * (1.0 - i_g);
                da[FORGET][j] = dc * c_prev[j] * f_g * (1.0 - f_g);
                da[OUTPUT][j] = d_o * o_g * (1.0 - o_g);
                da[CANDIDATE][j] = dc * i_g * (1.0 - g_g * g_g);
                dc_next[j] = dc * f_g;
            }
            let x = seq.row(t);
            let mut dh_prev = vec![0.0; h];
            for (gate, a) in da.iter().enumerate() {
                for j in 0..h {
                    let d = a[j];
                    if d == 0.0 {
                        continue;
                    }
                    for (g, xv) in grad[l.w(gate) + j * f..l.w(gate) + (j + 1) * f].iter_mut().zip(x) {
                        *g += d * xv;
                    }
                    let ur = l.u(gate) + j * h;
                    for (k, hv) in h_prev.iter().enumerate() {
                        grad[ur + k] += d * hv;
                        dh_prev[k] += p[ur + k] * d;
                    }
                    grad[l.b(gate) + j] += d;
                }
            }
            dh = dh_prev;
        }
        out
    }
}

/// Read-out after running `sequence` from a zero state.
pub fn lstm_forward(params: &LstmParams, sequence: &Matrix) -> Result<f64> {
    params.check(sequence)?;
    Ok(params.predict(sequence))
}

/// Trains an LSTM on windows whose features and targets are already scaled.
pub fn lstm_train(
    sequences: &[Matrix],
    targets: &[f64],
    cfg: &TrainConfig,
    hidden_size: usize,
) -> Result<(LstmParams, TrainTrace)> {
    if sequences.len() != targets.len() {
        return Err(Error::LengthMismatch { left: sequences.len(), right: targets.len() });
    }
    check_min_rows(sequences.len(), "training sequences")?;
    let input_size = sequences[0].cols();
    if let Some(bad) = sequences.iter().find(|s| s.cols() != input_size || s.rows() == 0) {
        return Err(Error::Dimension(format!("ragged sequence {}×{}", bad.rows(), bad.cols())));
    }
    let model = LstmParams::init(input_size, hidden_size, cfg.seed)?;
    fit(model, sequences, targets, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Optimizer;
    use rand::Rng;

    fn random_seq(rng: &mut ChaCha8Rng, l: usize, f: usize) -> Matrix {
        Matrix::from_vec(l, f, (0..l * f).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_params_output_head_bias() {
        let mut p = LstmParams::zeros(3, 4).unwrap();
        *p.head_bias_mut() = 2.5;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq = random_seq(&mut rng, 5, 3);
        let (out, state) = p.run(&seq, &LstmState::zeros(4)).unwrap();
        assert_eq!(out, 2.5);
        assert_eq!(state.h, vec![0.0; 4]);
    }

    #[test]
    fn saturated_forget_gate_preserves_cell_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = LstmParams::init(3, 4, 9).unwrap();
        p.forget_bias_mut().iter_mut().for_each(|b| *b = 1e3);
        p.input_bias_mut().iter_mut().for_each(|b| *b = -1e3);
        // Keep pre-activations dominated by the biases.
        let l = p.layout();
        for gate in [INPUT, FORGET] {
            p.params[l.w(gate)..l.w(gate) + 12].iter_mut().for_each(|w| *w *= 1e-3);
            p.params[l.u(gate)..l.u(gate) + 16].iter_mut().for_each(|w| *w *= 1e-3);
        }
        let c0: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let init = LstmState { h: vec![0.1, -0.2, 0.3, 0.0], c: c0.clone() };
        let seq = random_seq(&mut rng, 6, 3);
        let (_, state) = p.run(&seq, &init).unwrap();
        assert_eq!(state.c, c0);
    }

    #[test]
    fn forget_bias_initialised_to_one() {
        let p = LstmParams::init(5, 3, 0).unwrap();
        assert_eq!(p.forget_bias(), &[1.0, 1.0, 1.0]);
        assert!(p.params.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shape_mismatch() {
        let p = LstmParams::zeros(3, 2).unwrap();
        assert!(matches!(lstm_forward(&p, &Matrix::zeros(4, 2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn tiny_clip_norm_bounds_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let seqs: Vec<Matrix> = (0..40).map(|_| random_seq(&mut rng, 4, 2)).collect();
        let targets: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cfg = TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.5,
            gradient_clip_norm: 1e-9,
            epochs: 1,
            batch_size: 32,
            validation_fraction: 0.2,
            ..TrainConfig::default()
        };
        // One epoch over 32 training windows is exactly one step.
        let init = LstmParams::init(2, 3, cfg.seed).unwrap();
        let model = init.clone();
        let mut grad = vec![0.0; model.params.len()];
        let idx: Vec<usize> = (0..32).collect();
        super::super::batch_gradient(&model, &seqs, &targets, &idx, &mut grad);
        super::super::clip_global_norm(&mut grad, cfg.gradient_clip_norm);
        let step: f64 = grad.iter().map(|g| (cfg.learning_rate * g).powi(2)).sum::<f64>().sqrt();
        assert!(step <= cfg.learning_rate * 1e-9 * (1.0 + 1e-12));

        let (trained, _) = lstm_train(&seqs, &targets, &cfg, 3).unwrap();
        let moved: f64 = trained
            .params
            .iter()
            .zip(&init.params)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(moved <= cfg.learning_rate * 1e-9 * (1.0 + 1e-9), "moved {moved}");
    }
}
