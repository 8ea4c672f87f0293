//! Elementwise, pooling, affine and normalization layers.

use log::warn;

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

fn missing_forward(op: &'static str) -> Error {
    Error::state(op, "backward called before forward")
}

fn expect_shape<T: Real>(op: &'static str, upstream: &Tensor<T>, shape: &[usize]) -> Result<()> {
    if upstream.shape() != shape {
        return Err(Error::dimension(
            op,
            format!(
                "upstream gradient shape {:?} does not match forward output {:?}",
                upstream.shape(),
                shape
            ),
        ));
    }
    Ok(())
}

/// FNV-1a over a stream of booleans; identifies a piecewise-linear region.
pub fn pattern_signature(seed: u64, bits: impl IntoIterator<Item = bool>) -> u64 {
    let mut h = seed ^ 0xcbf2_9ce4_8422_2325;
    for b in bits {
        h ^= u64::from(b) + 1;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    out.clear_grad();
    for v in out.values_mut() {
        *v = v.max(T::zero());
    }
    out
}

/// Rectifier; the subgradient at exactly zero is zero.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    shape: Vec<usize>,
    active: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Real>(&mut self, input: &Tensor<T>) -> Tensor<T> {
        self.shape = input.shape().to_vec();
        self.active = Some(input.values().iter().map(|&v| v > T::zero()).collect());
        relu(input)
    }

    pub fn backward<T: Real>(&self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let active = self.active.as_ref().ok_or_else(|| missing_forward("relu"))?;
        expect_shape("relu", upstream, &self.shape)?;
        let values = upstream
            .values()
            .iter()
            .zip(active)
            .map(|(&g, &a)| if a { g } else { T::zero() })
            .collect();
        Tensor::new(self.shape.clone(), values)
    }

    pub fn signature(&self, seed: u64) -> u64 {
        pattern_signature(seed, self.active.iter().flatten().copied())
    }
}

/// Mean over the last axis: `[B, C, L] -> [B, C]`.
pub fn global_avg_pool<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    input.expect_rank("global_avg_pool", "input", 3)?;
    let (b, c, l) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if l == 0 {
        return Err(Error::dimension("global_avg_pool", "length axis (2) is empty"));
    }
    let n = T::of_usize(l);
    let values = input
        .values()
        .chunks_exact(l)
        .map(|row| row.iter().copied().sum::<T>() / n)
        .collect();
    Tensor::new([b, c], values)
}

#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<[usize; 3]>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Real>(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = global_avg_pool(input)?;
        self.input_shape = Some([input.shape()[0], input.shape()[1], input.shape()[2]]);
        Ok(out)
    }

    pub fn backward<T: Real>(&self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let [b, c, l] = self
            .input_shape
            .ok_or_else(|| missing_forward("global_avg_pool"))?;
        expect_shape("global_avg_pool", upstream, &[b, c])?;
        let n = T::of_usize(l);
        let mut values = Vec::with_capacity(b * c * l);
        for &g in upstream.values() {
            values.extend(std::iter::repeat_n(g / n, l));
        }
        Tensor::new([b, c, l], values)
    }
}

/// Affine map `x W^T + b` with `x [B, Din]`, `W [Dout, Din]`, `b [Dout]`.
pub fn dense<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    const OP: &str = "dense";
    input.expect_rank(OP, "input", 2)?;
    weight.expect_rank(OP, "weight", 2)?;
    bias.expect_rank(OP, "bias", 1)?;
    let (b, din) = (input.shape()[0], input.shape()[1]);
    let (dout, w_in) = (weight.shape()[0], weight.shape()[1]);
    if w_in != din {
        return Err(Error::dimension(
            OP,
            format!("input feature axis (1) is {din} but weight input axis (1) is {w_in}"),
        ));
    }
    if bias.shape()[0] != dout {
        return Err(Error::dimension(
            OP,
            format!("bias axis (0) is {} but weight output axis (0) is {dout}", bias.shape()[0]),
        ));
    }
    let mut out = Vec::with_capacity(b * dout);
    for i in 0..b {
        let x = input.row(i);
        for o in 0..dout {
            let w = weight.row(o);
            let dot: T = x.iter().zip(w).map(|(&a, &c)| a * c).sum();
            out.push(dot + bias.values()[o]);
        }
    }
    Tensor::new([b, dout], out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    cache: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> Default for Dense<T> {
    fn default() -> Self {
        Self { cache: None }
    }
}

impl<T: Real> Dense<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let out = dense(input, weight, bias)?;
        self.cache = Some((input.clone(), weight.clone()));
        Ok(out)
    }

    pub fn backward(&self, upstream: &Tensor<T>) -> Result<DenseGrads<T>> {
        let (input, weight) = self.cache.as_ref().ok_or_else(|| missing_forward("dense"))?;
        let (b, din) = (input.shape()[0], input.shape()[1]);
        let dout = weight.shape()[0];
        expect_shape("dense", upstream, &[b, dout])?;
        let mut dx = vec![T::zero(); b * din];
        let mut dw = vec![T::zero(); dout * din];
        let mut db = vec![T::zero(); dout];
        for i in 0..b {
            let x = input.row(i);
            let g = upstream.row(i);
            let dxi = &mut dx[i * din..(i + 1) * din];
            for (o, &go) in g.iter().enumerate() {
                db[o] += go;
                let w = weight.row(o);
                let dwo = &mut dw[o * din..(o + 1) * din];
                for k in 0..din {
                    dxi[k] += go * w[k];
                    dwo[k] += go * x[k];
                }
            }
        }
        Ok(DenseGrads {
            input: Tensor::new([b, din], dx)?,
            weight: Tensor::new([dout, din], dw)?,
            bias: Tensor::new([dout], db)?,
        })
    }
}

/// Result of row normalization; `zero_rows` lists rows left unchanged
/// because their norm was zero.
#[derive(Debug, Clone)]
pub struct Normalized<T> {
    pub output: Tensor<T>,
    pub zero_rows: Vec<usize>,
}

/// Divides each row of `[B, D]` by its Euclidean norm. All-zero rows are
/// returned as-is and reported.
pub fn l2_normalize_rows<T: Real>(input: &Tensor<T>) -> Result<Normalized<T>> {
    input.expect_rank("l2_normalize_rows", "input", 2)?;
    let mut output = input.clone();
    output.clear_grad();
    let mut zero_rows = Vec::new();
    for i in 0..input.shape()[0] {
        let row = output.row_mut(i);
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::zero() {
            zero_rows.push(i);
            continue;
        }
        for v in row {
            *v /= norm;
        }
    }
    if !zero_rows.is_empty() {
        warn!("l2_normalize_rows: {} zero row(s) left unnormalized", zero_rows.len());
    }
    Ok(Normalized { output, zero_rows })
}

#[derive(Debug, Clone)]
pub struct L2Normalize<T> {
    cache: Option<(Tensor<T>, Vec<T>)>,
}

impl<T: Real> Default for L2Normalize<T> {
    fn default() -> Self {
        Self { cache: None }
    }
}

impl<T: Real> L2Normalize<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Normalized<T>> {
        let n = l2_normalize_rows(input)?;
        let norms = (0..input.shape()[0])
            .map(|i| input.row(i).iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect();
        self.cache = Some((n.output.clone(), norms));
        Ok(n)
    }

    /// Pattern of zero-norm rows from the last forward pass; the map is not
    /// differentiable at those rows.
    pub fn signature(&self, seed: u64) -> u64 {
        pattern_signature(seed, self.cache.iter().flat_map(|(_, n)| n.iter().map(|&v| v == T::zero())))
    }

    /// `dx = (g - y (y . g)) / ||x||`; zero rows pass the gradient through.
    pub fn backward(&self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, norms) = self
            .cache
            .as_ref()
            .ok_or_else(|| missing_forward("l2_normalize_rows"))?;
        expect_shape("l2_normalize_rows", upstream, out.shape())?;
        let mut dx = upstream.clone();
        dx.clear_grad();
        for (i, &norm) in norms.iter().enumerate() {
            if norm == T::zero() {
                continue;
            }
            let y = out.row(i);
            let g = upstream.row(i);
            let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
            for ((d, &gv), &yv) in dx.row_mut(i).iter_mut().zip(g).zip(y) {
                *d = (gv - yv * dot) / norm;
            }
        }
        Ok(dx)
    }
}
