//! Feed-forward layers with explicit forward traces and backward passes.
//!
//! Layouts: vectors are `[n]`, sequences `[length, channels]`, images
//! `[height, width, channels]`. Dense weights are `[in, out]` so the forward
//! pass is `x · W + b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Params, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero fill so that `out = ceil(in / stride)`.
    Same,
    Valid,
}

/// Output length and left padding along one axis.
fn conv_geometry(len: usize, kernel: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    if stride == 0 || kernel == 0 {
        return Err(Error::InvalidArgument("kernel and stride must be positive".into()));
    }
    match padding {
        Padding::Valid => {
            if len < kernel {
                return Err(Error::Shape(format!(
                    "input length {len} shorter than kernel {kernel}"
                )));
            }
            Ok(((len - kernel) / stride + 1, 0))
        }
        Padding::Same => {
            let out = len.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(len);
            Ok((out, total / 2))
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Dense {
            weight: Tensor::glorot(&[inputs, outputs], inputs, outputs, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(1, "dense")?;
        let (n, m) = (self.inputs(), self.outputs());
        if x.len() != n {
            return Err(Error::Shape(format!("dense expects {n} inputs, got {}", x.len())));
        }
        let w = self.weight.data();
        let mut y = self.bias.data().to_vec();
        for (i, &xi) in x.data().iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &w[i * m..(i + 1) * m];
            for (yj, wij) in y.iter_mut().zip(row) {
                *yj += xi * wij;
            }
        }
        Ok(Tensor::vector(y))
    }

    pub fn backward(&self, x: &Tensor, gy: &Tensor, grads: &mut Dense) -> Result<Tensor> {
        let (n, m) = (self.inputs(), self.outputs());
        gy.expect_shape(&[m])?;
        let w = self.weight.data();
        let g = gy.data();
        let gw = grads.weight.data_mut();
        let mut gx = vec![0.0; n];
        for (i, &xi) in x.data().iter().enumerate() {
            let row = &w[i * m..(i + 1) * m];
            let grow = &mut gw[i * m..(i + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                grow[j] += xi * g[j];
                acc += row[j] * g[j];
            }
            gx[i] = acc;
        }
        for (b, gj) in grads.bias.data_mut().iter_mut().zip(g) {
            *b += gj;
        }
        Ok(Tensor::vector(gx))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    /// `[kernel, in_channels, filters]`
    pub kernel: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        width: usize,
        in_channels: usize,
        filters: usize,
        stride: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Self {
        Conv1d {
            kernel: Tensor::glorot(
                &[width, in_channels, filters],
                width * in_channels,
                width * filters,
                rng,
            ),
            bias: Tensor::zeros(&[filters]),
            stride,
            padding,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        let s = self.kernel.shape();
        (s[0], s[1], s[2])
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        Ok(conv_geometry(len, self.dims().0, self.stride, self.padding)?.0)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(2, "conv1d")?;
        let (kw, c, f) = self.dims();
        let (t_in, c_in) = (x.shape()[0], x.shape()[1]);
        if c_in != c {
            return Err(Error::Shape(format!("conv1d expects {c} channels, got {c_in}")));
        }
        let (t_out, pad) = conv_geometry(t_in, kw, self.stride, self.padding)?;
        let xd = x.data();
        let kd = self.kernel.data();
        let mut y = Vec::with_capacity(t_out * f);
        for _ in 0..t_out {
            y.extend_from_slice(self.bias.data());
        }
        for t in 0..t_out {
            let yrow = &mut y[t * f..(t + 1) * f];
            for k in 0..kw {
                let pos = (t * self.stride + k) as isize - pad as isize;
                if pos < 0 || pos as usize >= t_in {
                    continue;
                }
                let pos = pos as usize;
                for ch in 0..c {
                    let xv = xd[pos * c + ch];
                    let krow = &kd[(k * c + ch) * f..(k * c + ch + 1) * f];
                    for (yv, kv) in yrow.iter_mut().zip(krow) {
                        *yv += xv * kv;
                    }
                }
            }
        }
        Tensor::new(vec![t_out, f], y)
    }

    pub fn backward(&self, x: &Tensor, gy: &Tensor, grads: &mut Conv1d) -> Result<Tensor> {
        let (kw, c, f) = self.dims();
        let t_in = x.shape()[0];
        let (t_out, pad) = conv_geometry(t_in, kw, self.stride, self.padding)?;
        gy.expect_shape(&[t_out, f])?;
        let xd = x.data();
        let kd = self.kernel.data();
        let g = gy.data();
        let mut gx = vec![0.0; t_in * c];
        let gk = grads.kernel.data_mut();
        for t in 0..t_out {
            let grow = &g[t * f..(t + 1) * f];
            for k in 0..kw {
                let pos = (t * self.stride + k) as isize - pad as isize;
                if pos < 0 || pos as usize >= t_in {
                    continue;
                }
                let pos = pos as usize;
                for ch in 0..c {
                    let off = (k * c + ch) * f;
                    let xv = xd[pos * c + ch];
                    let mut acc = 0.0;
                    for j in 0..f {
                        gk[off + j] += xv * grow[j];
                        acc += kd[off + j] * grow[j];
                    }
                    gx[pos * c + ch] += acc;
                }
            }
        }
        let gb = grads.bias.data_mut();
        for t in 0..t_out {
            for j in 0..f {
                gb[j] += g[t * f + j];
            }
        }
        Tensor::new(vec![t_in, c], gx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    /// `[kernel_h, kernel_w, in_channels, filters]`
    pub kernel: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        size: usize,
        in_channels: usize,
        filters: usize,
        stride: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Self {
        let field = size * size;
        Conv2d {
            kernel: Tensor::glorot(
                &[size, size, in_channels, filters],
                field * in_channels,
                field * filters,
                rng,
            ),
            bias: Tensor::zeros(&[filters]),
            stride,
            padding,
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.kernel.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw, _, _) = self.dims();
        Ok((
            conv_geometry(h, kh, self.stride, self.padding)?.0,
            conv_geometry(w, kw, self.stride, self.padding)?.0,
        ))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(3, "conv2d")?;
        let (kh, kw, c, f) = self.dims();
        let (h, w, c_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if c_in != c {
            return Err(Error::Shape(format!("conv2d expects {c} channels, got {c_in}")));
        }
        let (ho, pad_h) = conv_geometry(h, kh, self.stride, self.padding)?;
        let (wo, pad_w) = conv_geometry(w, kw, self.stride, self.padding)?;
        let xd = x.data();
        let kd = self.kernel.data();
        let mut y = Vec::with_capacity(ho * wo * f);
        for _ in 0..ho * wo {
            y.extend_from_slice(self.bias.data());
        }
        for oi in 0..ho {
            for oj in 0..wo {
                let yrow = &mut y[(oi * wo + oj) * f..(oi * wo + oj + 1) * f];
                for ki in 0..kh {
                    let ii = (oi * self.stride + ki) as isize - pad_h as isize;
                    if ii < 0 || ii as usize >= h {
                        continue;
                    }
                    for kj in 0..kw {
                        let jj = (oj * self.stride + kj) as isize - pad_w as isize;
                        if jj < 0 || jj as usize >= w {
                            continue;
                        }
                        let xbase = (ii as usize * w + jj as usize) * c;
                        let kbase = (ki * kw + kj) * c;
                        for ch in 0..c {
                            let xv = xd[xbase + ch];
                            if xv == 0.0 {
                                continue;
                            }
                            let krow = &kd[(kbase + ch) * f..(kbase + ch + 1) * f];
                            for (yv, kv) in yrow.iter_mut().zip(krow) {
                                *yv += xv * kv;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![ho, wo, f], y)
    }

    pub fn backward(&self, x: &Tensor, gy: &Tensor, grads: &mut Conv2d) -> Result<Tensor> {
        let (kh, kw, c, f) = self.dims();
        let (h, w) = (x.shape()[0], x.shape()[1]);
        let (ho, pad_h) = conv_geometry(h, kh, self.stride, self.padding)?;
        let (wo, pad_w) = conv_geometry(w, kw, self.stride, self.padding)?;
        gy.expect_shape(&[ho, wo, f])?;
        let xd = x.data();
        let kd = self.kernel.data();
        let g = gy.data();
        let mut gx = vec![0.0; h * w * c];
        let gk = grads.kernel.data_mut();
        for oi in 0..ho {
            for oj in 0..wo {
                let grow = &g[(oi * wo + oj) * f..(oi * wo + oj + 1) * f];
                for ki in 0..kh {
                    let ii = (oi * self.stride + ki) as isize - pad_h as isize;
                    if ii < 0 || ii as usize >= h {
                        continue;
                    }
                    for kj in 0..kw {
                        let jj = (oj * self.stride + kj) as isize - pad_w as isize;
                        if jj < 0 || jj as usize >= w {
                            continue;
                        }
                        let xbase = (ii as usize * w + jj as usize) * c;
                        let kbase = (ki * kw + kj) * c;
                        for ch in 0..c {
                            let off = (kbase + ch) * f;
                            let xv = xd[xbase + ch];
                            let mut acc = 0.0;
                            for j in 0..f {
                                gk[off + j] += xv * grow[j];
                                acc += kd[off + j] * grow[j];
                            }
                            gx[xbase + ch] += acc;
                        }
                    }
                }
            }
        }
        let gb = grads.bias.data_mut();
        for p in 0..ho * wo {
            for j in 0..f {
                gb[j] += g[p * f + j];
            }
        }
        Tensor::new(vec![h, w, c], gx)
    }
}

/// Forward output plus whatever the backward pass needs.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input: Tensor,
    pub output: Tensor,
    /// Flat input index chosen by each pooled output.
    pub argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    Conv2d(Conv2d),
    MaxPool1d { window: usize },
    MaxPool2d { window: usize },
    GlobalMaxPool1d,
    GlobalAvgPool1d,
    Relu,
    Sigmoid,
    Tanh,
    Flatten,
}

fn maxpool1d(x: &Tensor, window: usize) -> Result<(Tensor, Vec<usize>)> {
    x.expect_rank(2, "maxpool1d")?;
    let (t, c) = (x.shape()[0], x.shape()[1]);
    if window == 0 || t < window {
        return Err(Error::Shape(format!("maxpool window {window} over length {t}")));
    }
    let to = t / window;
    let xd = x.data();
    let mut out = Vec::with_capacity(to * c);
    let mut arg = Vec::with_capacity(to * c);
    for o in 0..to {
        for ch in 0..c {
            let mut best = o * window * c + ch;
            for k in 1..window {
                let idx = (o * window + k) * c + ch;
                if xd[idx] > xd[best] {
                    best = idx;
                }
            }
            out.push(xd[best]);
            arg.push(best);
        }
    }
    Ok((Tensor::new(vec![to, c], out)?, arg))
}

fn maxpool2d(x: &Tensor, window: usize) -> Result<(Tensor, Vec<usize>)> {
    x.expect_rank(3, "maxpool2d")?;
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if window == 0 || h < window || w < window {
        return Err(Error::Shape(format!("maxpool window {window} over {h}x{w}")));
    }
    let (ho, wo) = (h / window, w / window);
    let xd = x.data();
    let mut out = Vec::with_capacity(ho * wo * c);
    let mut arg = Vec::with_capacity(ho * wo * c);
    for oi in 0..ho {
        for oj in 0..wo {
            for ch in 0..c {
                let mut best = ((oi * window) * w + oj * window) * c + ch;
                for ki in 0..window {
                    for kj in 0..window {
                        let idx = ((oi * window + ki) * w + oj * window + kj) * c + ch;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                }
                out.push(xd[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![ho, wo, c], out)?, arg))
}

fn global_maxpool1d(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    x.expect_rank(2, "global maxpool")?;
    let (t, c) = (x.shape()[0], x.shape()[1]);
    if t == 0 {
        return Err(Error::Shape("global maxpool over empty sequence".into()));
    }
    let xd = x.data();
    let arg: Vec<usize> = (0..c)
        .map(|ch| {
            (0..t)
                .map(|i| i * c + ch)
                .fold(ch, |best, idx| if xd[idx] > xd[best] { idx } else { best })
        })
        .collect();
    let out = arg.iter().map(|&i| xd[i]).collect();
    Ok((Tensor::vector(out), arg))
}

impl Layer {
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LayerTrace)> {
        let mut argmax = Vec::new();
        let output = match self {
            Layer::Dense(d) => d.forward(x)?,
            Layer::Conv1d(c) => c.forward(x)?,
            Layer::Conv2d(c) => c.forward(x)?,
            Layer::MaxPool1d { window } => {
                let (y, a) = maxpool1d(x, *window)?;
                argmax = a;
                y
            }
            Layer::MaxPool2d { window } => {
                let (y, a) = maxpool2d(x, *window)?;
                argmax = a;
                y
            }
            Layer::GlobalMaxPool1d => {
                let (y, a) = global_maxpool1d(x)?;
                argmax = a;
                y
            }
            Layer::GlobalAvgPool1d => {
                x.expect_rank(2, "global avgpool")?;
                let (t, c) = (x.shape()[0], x.shape()[1]);
                let mut out = vec![0.0; c];
                for i in 0..t {
                    for ch in 0..c {
                        out[ch] += x.data()[i * c + ch];
                    }
                }
                out.iter_mut().for_each(|v| *v /= t as f64);
                Tensor::vector(out)
            }
            Layer::Relu => x.map(|v| v.max(0.0)),
            Layer::Sigmoid => x.map(sigmoid),
            Layer::Tanh => x.map(f64::tanh),
            Layer::Flatten => x.clone().reshape(&[x.len()])?,
        };
        let trace = LayerTrace {
            input: x.clone(),
            output: output.clone(),
            argmax,
        };
        Ok((output, trace))
    }

    /// Backpropagate `gy`, accumulating parameter gradients into `grads`,
    /// which must be the same variant as `self`.
    pub fn backward(&self, trace: &LayerTrace, gy: &Tensor, grads: &mut Layer) -> Result<Tensor> {
        gy.expect_shape(trace.output.shape())?;
        let x = &trace.input;
        match (self, grads) {
            (Layer::Dense(d), Layer::Dense(g)) => d.backward(x, gy, g),
            (Layer::Conv1d(c), Layer::Conv1d(g)) => c.backward(x, gy, g),
            (Layer::Conv2d(c), Layer::Conv2d(g)) => c.backward(x, gy, g),
            (Layer::MaxPool1d { .. }, _)
            | (Layer::MaxPool2d { .. }, _)
            | (Layer::GlobalMaxPool1d, _) => {
                let mut gx = vec![0.0; x.len()];
                for (&idx, &g) in trace.argmax.iter().zip(gy.data()) {
                    gx[idx] += g;
                }
                Tensor::new(x.shape().to_vec(), gx)
            }
            (Layer::GlobalAvgPool1d, _) => {
                let (t, c) = (x.shape()[0], x.shape()[1]);
                let mut gx = Vec::with_capacity(t * c);
                for _ in 0..t {
                    gx.extend(gy.data().iter().map(|g| g / t as f64));
                }
                Tensor::new(vec![t, c], gx)
            }
            (Layer::Relu, _) => Tensor::new(
                x.shape().to_vec(),
                x.data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect(),
            ),
            (Layer::Sigmoid, _) => Tensor::new(
                x.shape().to_vec(),
                trace
                    .output
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&s, &g)| g * s * (1.0 - s))
                    .collect(),
            ),
            (Layer::Tanh, _) => Tensor::new(
                x.shape().to_vec(),
                trace
                    .output
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&t, &g)| g * (1.0 - t * t))
                    .collect(),
            ),
            (Layer::Flatten, _) => gy.clone().reshape(x.shape()),
            _ => Err(Error::Shape("gradient buffer does not match layer".into())),
        }
    }

    fn param_slots(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Layer::Dense(d) => vec![("weight", &d.weight), ("bias", &d.bias)],
            Layer::Conv1d(c) => vec![("kernel", &c.kernel), ("bias", &c.bias)],
            Layer::Conv2d(c) => vec![("kernel", &c.kernel), ("bias", &c.bias)],
            _ => vec![],
        }
    }

    fn param_slots_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            Layer::Dense(d) => vec![("weight", &mut d.weight), ("bias", &mut d.bias)],
            Layer::Conv1d(c) => vec![("kernel", &mut c.kernel), ("bias", &mut c.bias)],
            Layer::Conv2d(c) => vec![("kernel", &mut c.kernel), ("bias", &mut c.bias)],
            _ => vec![],
        }
    }
}

/// A stack of layers applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<LayerTrace>)> {
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, t) = layer.forward(&cur)?;
            traces.push(t);
            cur = y;
        }
        Ok((cur, traces))
    }

    /// Forward pass without keeping traces.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?.0;
        }
        Ok(cur)
    }

    pub fn backward(&self, traces: &[LayerTrace], gy: &Tensor, grads: &mut Sequential) -> Result<Tensor> {
        if traces.len() != self.layers.len() {
            return Err(Error::NoForwardPass);
        }
        let mut g = gy.clone();
        for ((layer, trace), grad) in self
            .layers
            .iter()
            .zip(traces)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            g = layer.backward(trace, &g, grad)?;
        }
        Ok(g)
    }
}

impl Params for Sequential {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.param_slots()
                    .into_iter()
                    .map(move |(n, t)| (format!("layer{i}.{n}"), t))
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.param_slots_mut()
                    .into_iter()
                    .map(move |(n, t)| (format!("layer{i}.{n}"), t))
            })
            .collect()
    }
}

impl Params for Dense {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel_conv1d() {
        let mut conv = Conv1d::new(3, 1, 1, 1, Padding::Same, &mut ChaCha8Rng::seed_from_u64(0));
        conv.kernel = Tensor::new(vec![3, 1, 1], vec![0.0, 1.0, 0.0]).unwrap();
        let x = Tensor::new(vec![5, 1], vec![1.0, -2.0, 3.0, 0.5, 4.0]).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn same_padding_with_stride() {
        let conv = Conv1d::new(3, 2, 4, 2, Padding::Same, &mut ChaCha8Rng::seed_from_u64(0));
        let x = Tensor::zeros(&[7, 2]);
        assert_eq!(conv.forward(&x).unwrap().shape(), &[4, 4]);
        let conv2 = Conv2d::new(3, 1, 2, 2, Padding::Same, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(conv2.forward(&Tensor::zeros(&[9, 8, 1])).unwrap().shape(), &[5, 4, 2]);
    }

    #[test]
    fn maxpool_pairs() {
        let x = Tensor::new(vec![4, 1], vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        let (y, _) = Layer::MaxPool1d { window: 2 }.forward(&x).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);
    }

    #[test]
    fn conv2d_all_ones_valid() {
        let mut conv = Conv2d::new(3, 1, 1, 1, Padding::Valid, &mut ChaCha8Rng::seed_from_u64(0));
        conv.kernel = Tensor::full(&[3, 3, 1, 1], 1.0);
        let y = conv.forward(&Tensor::full(&[5, 5, 1], 1.0)).unwrap();
        assert_eq!(y.shape(), &[3, 3, 1]);
        assert!(y.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn dense_mse_gradient_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dense = Dense::new(3, 1, &mut rng);
        let x = Tensor::vector(vec![0.5, -1.0, 2.0]);
        let y = 0.7;
        let pred = dense.forward(&x).unwrap().data()[0];
        // loss = (pred - y)^2 over m = 1 sample
        let gy = Tensor::vector(vec![2.0 * (pred - y)]);
        let mut grads = dense.zeros_like();
        dense.backward(&x, &gy, &mut grads).unwrap();
        for i in 0..3 {
            let expected = 2.0 * (pred - y) * x.data()[i];
            assert!((grads.weight.data()[i] - expected).abs() < 1e-15);
        }
        assert!((grads.bias.data()[0] - 2.0 * (pred - y)).abs() < 1e-15);
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Sequential::new(vec![
            Layer::Conv1d(Conv1d::new(3, 1, 2, 1, Padding::Same, &mut rng)),
            Layer::Relu,
            Layer::Flatten,
            Layer::Dense(Dense::new(8, 1, &mut rng)),
        ]);
        let x = Tensor::new(vec![4, 1], vec![0.3, -0.2, 1.0, 0.4]).unwrap();
        let (y, traces) = net.forward(&x).unwrap();
        let mut grads = net.zeros_like();
        net.backward(&traces, &y.map(|_| 0.0), &mut grads).unwrap();
        assert!(grads.params().iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backward_requires_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Sequential::new(vec![Layer::Dense(Dense::new(2, 1, &mut rng))]);
        let mut grads = net.zeros_like();
        assert!(matches!(
            net.backward(&[], &Tensor::vector(vec![1.0]), &mut grads),
            Err(Error::NoForwardPass)
        ));
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dense = Dense::new(3, 2, &mut rng);
        assert!(dense.forward(&Tensor::vector(vec![1.0, 2.0])).is_err());
        let conv = Conv2d::new(3, 2, 1, 1, Padding::Same, &mut rng);
        assert!(conv.forward(&Tensor::zeros(&[4, 4, 1])).is_err());
    }
}
