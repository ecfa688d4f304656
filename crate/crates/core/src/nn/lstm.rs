use serde::{Deserialize, Serialize};

use super::{join, Parameters};
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Matrix, Rng};

/// A single-layer LSTM cell.
///
/// The four gate blocks are stacked row-wise in the order input, forget,
/// candidate, output: rows `[0, H)` hold the input gate, `[H, 2H)` the forget
/// gate and so on. Each gate reads the concatenation `[x; h_prev]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    input_dim: usize,
    hidden_dim: usize,
    /// `4H x (D + H)`.
    pub weights: Matrix,
    /// `4H x 1`.
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// Activations recorded by [`LstmCell::step`], sufficient for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmTape {
    concat: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            weights: Matrix::zeros(4 * hidden_dim, input_dim + hidden_dim),
            bias: Matrix::zeros(4 * hidden_dim, 1),
        }
    }

    /// Glorot-uniform gate weights (per gate, fan-in `D + H`, fan-out `H`),
    /// zero biases except the forget gate, which starts at `+1`.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let mut cell = Self::zeros(input_dim, hidden_dim);
        let bound = (6.0 / (input_dim + 2 * hidden_dim) as f64).sqrt();
        for v in cell.weights.as_mut_slice() {
            *v = rng.uniform_range(-bound, bound);
        }
        for v in &mut cell.bias.as_mut_slice()[hidden_dim..2 * hidden_dim] {
            *v = 1.0;
        }
        cell
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn step(&self, input: &[f64], state: &LstmState) -> Result<(LstmState, LstmTape)> {
        let hd = self.hidden_dim;
        if input.len() != self.input_dim {
            return Err(Error::shape("lstm step input", self.input_dim, input.len()));
        }
        if state.h.len() != hd || state.c.len() != hd {
            return Err(Error::shape(
                "lstm step state",
                hd,
                format!("h={}, c={}", state.h.len(), state.c.len()),
            ));
        }
        let mut concat = Vec::with_capacity(self.input_dim + hd);
        concat.extend_from_slice(input);
        concat.extend_from_slice(&state.h);
        let mut z = self.weights.matvec(&concat)?;
        for (zi, b) in z.iter_mut().zip(self.bias.as_slice()) {
            *zi += b;
        }
        let i: Vec<f64> = z[..hd].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * hd..3 * hd].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..hd).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
        let tape = LstmTape {
            concat,
            c_prev: state.c.clone(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        Ok((LstmState { h, c }, tape))
    }

    /// Reverse-mode pass through one step.
    ///
    /// `d_next` carries the upstream gradients of the produced `(h, c)`.
    /// Parameter gradients are accumulated into `grads`; the gradients with
    /// respect to the input and the previous state are returned.
    pub fn backward(
        &self,
        tape: &LstmTape,
        d_next: &LstmState,
        grads: &mut LstmCell,
    ) -> Result<(Vec<f64>, LstmState)> {
        let hd = self.hidden_dim;
        if tape.i.len() != hd || tape.concat.len() != self.input_dim + hd {
            return Err(Error::shape("lstm backward tape", hd, tape.i.len()));
        }
        if d_next.h.len() != hd || d_next.c.len() != hd {
            return Err(Error::shape("lstm backward upstream", hd, d_next.h.len()));
        }
        if grads.weights.shape() != self.weights.shape() {
            return Err(Error::shape(
                "lstm backward grads",
                format!("{:?}", self.weights.shape()),
                format!("{:?}", grads.weights.shape()),
            ));
        }
        let mut dz = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for k in 0..hd {
            let (i, f, g, o, tc) = (tape.i[k], tape.f[k], tape.g[k], tape.o[k], tape.tanh_c[k]);
            let dh = d_next.h[k];
            let dc = d_next.c[k] + dh * o * (1.0 - tc * tc);
            dz[k] = dc * g * i * (1.0 - i);
            dz[hd + k] = dc * tape.c_prev[k] * f * (1.0 - f);
            dz[2 * hd + k] = dc * i * (1.0 - g * g);
            dz[3 * hd + k] = dh * tc * o * (1.0 - o);
            dc_prev[k] = dc * f;
        }
        grads.weights.add_outer(&dz, &tape.concat, 1.0)?;
        for (b, d) in grads.bias.as_mut_slice().iter_mut().zip(&dz) {
            *b += d;
        }
        let mut d_concat = self.weights.matvec_transposed(&dz)?;
        let dh_prev = d_concat.split_off(self.input_dim);
        Ok((
            d_concat,
            LstmState {
                h: dh_prev,
                c: dc_prev,
            },
        ))
    }
}

impl Parameters for LstmCell {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(join(prefix, "weights"), &self.weights);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(join(prefix, "weights"), &mut self.weights);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradcheck, zeros_like};

    #[test]
    fn zero_cell_zero_state_stays_zero() {
        let cell = LstmCell::zeros(3, 4);
        let (s, _) = cell.step(&[0.0; 3], &LstmState::zeros(4)).unwrap();
        assert!(s.h.iter().chain(&s.c).all(|v| *v == 0.0));
    }

    #[test]
    fn zero_cell_halves_the_cell_state() {
        // All gates are sigmoid(0) = 0.5 and the candidate is tanh(0) = 0.
        let cell = LstmCell::zeros(2, 3);
        let state = LstmState {
            h: vec![0.3, -0.2, 0.9],
            c: vec![1.0, -2.0, 0.4],
        };
        let (s, _) = cell.step(&[0.7, -1.1], &state).unwrap();
        for k in 0..3 {
            let c = 0.5 * state.c[k];
            assert_eq!(s.c[k], c);
            assert!((s.h[k] - 0.5 * c.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let cell = LstmCell::zeros(2, 3);
        assert!(cell.step(&[0.0; 3], &LstmState::zeros(3)).is_err());
        assert!(cell.step(&[0.0; 2], &LstmState::zeros(2)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(3);
        let cell = LstmCell::init(3, 4, &mut rng);
        let x = [0.2, -0.4, 1.0];
        let state = LstmState {
            h: vec![0.1; 4],
            c: vec![-0.3; 4],
        };
        let (_, tape) = cell.step(&x, &state).unwrap();
        let mut grads = zeros_like(&cell);
        let (dx, dprev) = cell.backward(&tape, &LstmState::zeros(4), &mut grads).unwrap();
        assert!(dx.iter().chain(&dprev.h).chain(&dprev.c).all(|v| *v == 0.0));
        assert!(grads.weights.as_slice().iter().all(|v| *v == 0.0));
    }

    /// Scalar LSTM (D = H = 1), loss = h'. Derivatives written out by hand.
    #[test]
    fn scalar_cell_matches_hand_derivation() {
        let mut cell = LstmCell::zeros(1, 1);
        // rows: i, f, g, o; cols: x, h
        let w = [[0.5, -0.3], [0.2, 0.4], [-0.7, 0.1], [0.3, 0.6]];
        let b = [0.1, 1.0, -0.2, 0.05];
        for (r, row) in w.iter().enumerate() {
            cell.weights.set(r, 0, row[0]);
            cell.weights.set(r, 1, row[1]);
            cell.bias.set(r, 0, b[r]);
        }
        let (x, h0, c0) = (0.8, -0.4, 0.6);
        let pre = |r: usize| w[r][0] * x + w[r][1] * h0 + b[r];
        let (i, f, g, o) = (sigmoid(pre(0)), sigmoid(pre(1)), pre(2).tanh(), sigmoid(pre(3)));
        let c = f * c0 + i * g;
        let h = o * c.tanh();

        let state = LstmState { h: vec![h0], c: vec![c0] };
        let (out, tape) = cell.step(&[x], &state).unwrap();
        assert!((out.h[0] - h).abs() < 1e-15);

        let mut grads = zeros_like(&cell);
        let (dx, dprev) = cell
            .backward(&tape, &LstmState { h: vec![1.0], c: vec![0.0] }, &mut grads)
            .unwrap();
        // dh'/dc = o (1 - tanh²c)
        let dc = o * (1.0 - c.tanh().powi(2));
        let dzi = dc * g * i * (1.0 - i);
        let dzf = dc * c0 * f * (1.0 - f);
        let dzg = dc * i * (1.0 - g * g);
        let dzo = c.tanh() * o * (1.0 - o);
        let dz = [dzi, dzf, dzg, dzo];
        for r in 0..4 {
            assert!((grads.weights.get(r, 0) - dz[r] * x).abs() < 1e-14);
            assert!((grads.weights.get(r, 1) - dz[r] * h0).abs() < 1e-14);
            assert!((grads.bias.get(r, 0) - dz[r]).abs() < 1e-14);
        }
        let expect_dx: f64 = (0..4).map(|r| dz[r] * w[r][0]).sum();
        let expect_dh: f64 = (0..4).map(|r| dz[r] * w[r][1]).sum();
        assert!((dx[0] - expect_dx).abs() < 1e-14);
        assert!((dprev.h[0] - expect_dh).abs() < 1e-14);
        assert!((dprev.c[0] - dc * f).abs() < 1e-14);
    }

    /// Three-step BPTT of a random linear readout of the final state.
    #[test]
    fn bptt_matches_finite_differences() {
        for seed in 0..4 {
            let mut rng = Rng::new(100 + seed);
            let cell = LstmCell::init(3, 5, &mut rng);
            let xs: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
            let wh: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let wc: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let report = gradcheck(
                &cell,
                |p: &LstmCell| {
                    let mut state = LstmState::zeros(5);
                    let mut tapes = Vec::new();
                    for x in &xs {
                        let (s, t) = p.step(x, &state)?;
                        state = s;
                        tapes.push(t);
                    }
                    let loss: f64 = crate::tensor::dot(&wh, &state.h) + crate::tensor::dot(&wc, &state.c);
                    let mut grads = zeros_like(p);
                    let mut d = LstmState { h: wh.clone(), c: wc.clone() };
                    for t in tapes.iter().rev() {
                        d = p.backward(t, &d, &mut grads)?.1;
                    }
                    Ok((loss, grads))
                },
                1e-4,
            )
            .unwrap();
            assert!(report.passed, "{report}");
        }
    }
}
