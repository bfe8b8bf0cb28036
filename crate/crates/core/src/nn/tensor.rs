use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    pub fn glorot<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.gen_range(-limit..=limit)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_shape(other.shape())?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn expect_shape(&self, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::Shape(format!(
                "expected {:?}, got {:?}",
                shape, self.shape
            )));
        }
        Ok(())
    }

    pub fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.shape.len() != rank {
            return Err(Error::Shape(format!(
                "{what} expects a rank-{rank} input, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    /// Nested JSON lists following the shape.
    pub fn to_nested(&self) -> serde_json::Value {
        fn build(shape: &[usize], data: &[f64]) -> serde_json::Value {
            match shape {
                [] => serde_json::json!(data[0]),
                [_] => serde_json::Value::Array(data.iter().map(|v| serde_json::json!(v)).collect()),
                [n, rest @ ..] => {
                    let step: usize = rest.iter().product();
                    serde_json::Value::Array(
                        (0..*n).map(|i| build(rest, &data[i * step..(i + 1) * step])).collect(),
                    )
                }
            }
        }
        build(&self.shape, &self.data)
    }

    /// Inverse of [`Tensor::to_nested`]; `shape` must match the nesting.
    pub fn from_nested(shape: &[usize], value: &serde_json::Value) -> Result<Self> {
        fn walk(shape: &[usize], v: &serde_json::Value, out: &mut Vec<f64>) -> Result<()> {
            match shape {
                [] => {
                    out.push(v.as_f64().ok_or_else(|| Error::Shape("expected a number".into()))?);
                    Ok(())
                }
                [n, rest @ ..] => {
                    let arr = v
                        .as_array()
                        .filter(|a| a.len() == *n)
                        .ok_or_else(|| Error::Shape(format!("expected a list of length {n}")))?;
                    arr.iter().try_for_each(|x| walk(rest, x, out))
                }
            }
        }
        let mut data = Vec::with_capacity(shape.iter().product());
        walk(shape, value, &mut data)?;
        Tensor::new(shape.to_vec(), data)
    }
}

/// Named parameter access shared by every trainable structure.
pub trait Params: Clone {
    fn params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    /// Same structure with every parameter zeroed; used as a gradient buffer.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.params_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Elementwise `self += other`.
    fn accumulate(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.params_mut().into_iter().zip(other.params()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    fn scale_all(&mut self, k: f64) {
        for (_, t) in self.params_mut() {
            t.scale(k);
        }
    }
}
