//! LSTM layer with backpropagation through time.
//!
//! Gate weights are packed along the last axis in the order `f, i, o, g`:
//! `u` is `[input, 4·hidden]`, `w` is `[hidden, 4·hidden]`, `b` is `[4·hidden]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::sigmoid;
use super::tensor::{Params, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub u: Tensor,
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activated gates for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepTrace {
    x: Vec<f64>,
    prev: LstmState,
    gates: Gates,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmTrace {
    steps: Vec<StepTrace>,
}

impl LstmParams {
    /// Glorot weights, zero biases except the forget gate at 1.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data_mut()[..hidden].fill(1.0);
        LstmParams {
            u: Tensor::glorot(&[input, 4 * hidden], input, hidden, rng),
            w: Tensor::glorot(&[hidden, 4 * hidden], hidden, hidden, rng),
            b,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            u: Tensor::zeros(&[input, 4 * hidden]),
            w: Tensor::zeros(&[hidden, 4 * hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.shape()[0]
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden_dim();
        self.w.expect_shape(&[h, 4 * h])?;
        self.u.expect_shape(&[self.input_dim(), 4 * h])?;
        self.b.expect_shape(&[4 * h])
    }

    /// One cell step; returns the new state and the activated gates.
    pub fn step(&self, x: &[f64], prev: &LstmState) -> Result<(LstmState, Gates)> {
        self.check()?;
        let (n, h) = (self.input_dim(), self.hidden_dim());
        if x.len() != n || prev.h.len() != h || prev.c.len() != h {
            return Err(Error::Shape(format!(
                "lstm step expects input {n} and state {h}, got {} and {}/{}",
                x.len(),
                prev.h.len(),
                prev.c.len()
            )));
        }
        let h4 = 4 * h;
        let mut z = self.b.data().to_vec();
        for (row, &xv) in self.u.data().chunks_exact(h4).zip(x) {
            if xv != 0.0 {
                z.iter_mut().zip(row).for_each(|(a, w)| *a += xv * w);
            }
        }
        for (row, &hv) in self.w.data().chunks_exact(h4).zip(&prev.h) {
            if hv != 0.0 {
                z.iter_mut().zip(row).for_each(|(a, w)| *a += hv * w);
            }
        }
        let gates = Gates {
            f: z[..h].iter().map(|&v| sigmoid(v)).collect(),
            i: z[h..2 * h].iter().map(|&v| sigmoid(v)).collect(),
            o: z[2 * h..3 * h].iter().map(|&v| sigmoid(v)).collect(),
            g: z[3 * h..].iter().map(|&v| v.tanh()).collect(),
        };
        let c: Vec<f64> = (0..h)
            .map(|j| {
                let pre = gates.f[j] * prev.c[j] + gates.i[j] * gates.g[j];
                if cfg!(feature = "paper-literal-cell") {
                    sigmoid(pre)
                } else {
                    pre
                }
            })
            .collect();
        let hn = (0..h).map(|j| c[j].tanh() * gates.o[j]).collect();
        Ok((LstmState { h: hn, c }, gates))
    }

    /// Runs a `[length, input]` sequence from a zero state and returns all
    /// hidden states as `[length, hidden]`.
    pub fn forward(&self, xs: &Tensor) -> Result<(Tensor, LstmTrace)> {
        xs.expect_rank(2, "lstm")?;
        let (t, n) = (xs.shape()[0], xs.shape()[1]);
        let h = self.hidden_dim();
        let mut state = LstmState::zeros(h);
        let mut out = Vec::with_capacity(t * h);
        let mut steps = Vec::with_capacity(t);
        for x in xs.data().chunks_exact(n.max(1)).take(t) {
            let (next, gates) = self.step(x, &state)?;
            out.extend_from_slice(&next.h);
            steps.push(StepTrace {
                x: x.to_vec(),
                prev: state,
                gates,
                tanh_c: next.c.iter().map(|v| v.tanh()).collect(),
                c: next.c.clone(),
            });
            state = next;
        }
        Ok((Tensor::new(vec![t, h], out)?, LstmTrace { steps }))
    }

    /// Backpropagation through time. `dhs` is the loss gradient with respect
    /// to every emitted hidden state; returns the gradient for the inputs.
    pub fn backward(&self, trace: &LstmTrace, dhs: &Tensor, grads: &mut LstmParams) -> Result<Tensor> {
        let h = self.hidden_dim();
        let n = self.input_dim();
        let t = trace.steps.len();
        if t == 0 {
            return Err(Error::NoForwardPass);
        }
        dhs.expect_shape(&[t, h])?;
        let h4 = 4 * h;
        let u = self.u.data();
        let w = self.w.data();
        let mut dx = vec![0.0; t * n];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; h4];
        for (k, st) in trace.steps.iter().enumerate().rev() {
            let Gates { f, i, o, g } = &st.gates;
            for j in 0..h {
                let dh = dhs.data()[k * h + j] + dh_next[j];
                let tc = st.tanh_c[j];
                let d_o = dh * tc;
                let mut dc = dh * o[j] * (1.0 - tc * tc) + dc_next[j];
                if cfg!(feature = "paper-literal-cell") {
                    dc *= st.c[j] * (1.0 - st.c[j]);
                }
                let df = dc * st.prev.c[j];
                let di = dc * g[j];
                let dg = dc * i[j];
                dc_next[j] = dc * f[j];
                dz[j] = df * f[j] * (1.0 - f[j]);
                dz[h + j] = di * i[j] * (1.0 - i[j]);
                dz[2 * h + j] = d_o * o[j] * (1.0 - o[j]);
                dz[3 * h + j] = dg * (1.0 - g[j] * g[j]);
            }
            let gu = grads.u.data_mut();
            for (r, &xv) in st.x.iter().enumerate() {
                let row = &u[r * h4..(r + 1) * h4];
                let grow = &mut gu[r * h4..(r + 1) * h4];
                let mut acc = 0.0;
                for q in 0..h4 {
                    grow[q] += xv * dz[q];
                    acc += row[q] * dz[q];
                }
                dx[k * n + r] = acc;
            }
            let gw = grads.w.data_mut();
            for (r, &hv) in st.prev.h.iter().enumerate() {
                let row = &w[r * h4..(r + 1) * h4];
                let grow = &mut gw[r * h4..(r + 1) * h4];
                let mut acc = 0.0;
                for q in 0..h4 {
                    grow[q] += hv * dz[q];
                    acc += row[q] * dz[q];
                }
                dh_next[r] = acc;
            }
            grads
                .b
                .data_mut()
                .iter_mut()
                .zip(&dz)
                .for_each(|(a, d)| *a += d);
        }
        Tensor::new(vec![t, n], dx)
    }
}

impl Params for LstmParams {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("u".into(), &self.u), ("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("u".into(), &mut self.u),
            ("w".into(), &mut self.w),
            ("b".into(), &mut self.b),
        ]
    }
}
