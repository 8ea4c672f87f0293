//! One-dimensional convolution, computed as cross-correlation (kernels are
//! never flipped).

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

const OP: &str = "conv1d";

#[derive(Debug, Clone, Copy)]
struct Geometry {
    batch: usize,
    in_channels: usize,
    out_channels: usize,
    in_len: usize,
    out_len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn resolve<T: Real>(
        input: &Tensor<T>,
        kernel: &Tensor<T>,
        bias: &Tensor<T>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        input.expect_rank(OP, "input", 3)?;
        kernel.expect_rank(OP, "kernel", 3)?;
        bias.expect_rank(OP, "bias", 1)?;
        let (batch, in_channels, in_len) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (out_channels, k_in, k) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
        if k_in != in_channels {
            return Err(Error::dimension(
                OP,
                format!("input channel axis (1) is {in_channels} but kernel input-channel axis (1) is {k_in}"),
            ));
        }
        if bias.shape()[0] != out_channels {
            return Err(Error::dimension(
                OP,
                format!(
                    "bias axis (0) is {} but kernel output-channel axis (0) is {out_channels}",
                    bias.shape()[0]
                ),
            ));
        }
        if stride == 0 {
            return Err(Error::dimension(OP, "stride must be positive"));
        }
        if k == 0 || in_len + 2 * padding < k {
            return Err(Error::dimension(
                OP,
                format!("length axis (2) {in_len} with padding {padding} is shorter than kernel axis (2) {k}"),
            ));
        }
        Ok(Self {
            batch,
            in_channels,
            out_channels,
            in_len,
            out_len: (in_len + 2 * padding - k) / stride + 1,
            kernel: k,
            stride,
            padding,
        })
    }

    /// Output positions `o` for which `o * stride + k - padding` lands inside the input.
    #[inline]
    fn valid_outputs(&self, k: usize) -> std::ops::Range<usize> {
        // o*s + k >= p  =>  o >= ceil((p - k) / s)
        let lo = if k >= self.padding {
            0
        } else {
            (self.padding - k).div_ceil(self.stride)
        };
        // o*s + k - p <= L - 1  =>  o <= (L - 1 + p - k) / s
        let hi = if self.in_len + self.padding > k {
            ((self.in_len - 1 + self.padding - k) / self.stride + 1).min(self.out_len)
        } else {
            0
        };
        if lo < hi {
            lo..hi
        } else {
            0..0
        }
    }
}

/// Output length for the given geometry.
pub fn conv1d_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - kernel) / stride + 1
}

/// Cross-correlates `input [B, Cin, L]` with `kernel [Cout, Cin, K]`.
pub fn conv1d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::resolve(input, kernel, bias, stride, padding)?;
    Ok(forward_with(&g, input.values(), kernel.values(), bias.values()))
}

fn forward_with<T: Real>(g: &Geometry, x: &[T], w: &[T], b: &[T]) -> Tensor<T> {
    let mut out = vec![T::zero(); g.batch * g.out_channels * g.out_len];
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            let row = &mut out[(n * g.out_channels + co) * g.out_len..][..g.out_len];
            row.fill(b[co]);
            for ci in 0..g.in_channels {
                let xin = &x[(n * g.in_channels + ci) * g.in_len..][..g.in_len];
                let wk = &w[(co * g.in_channels + ci) * g.kernel..][..g.kernel];
                for (k, &weight) in wk.iter().enumerate() {
                    let range = g.valid_outputs(k);
                    if range.is_empty() {
                        continue;
                    }
                    if g.stride == 1 {
                        let start = range.start + k - g.padding;
                        let src = &xin[start..start + range.len()];
                        for (o, &v) in row[range].iter_mut().zip(src) {
                            *o += weight * v;
                        }
                    } else {
                        for o in range {
                            row[o] += weight * xin[o * g.stride + k - g.padding];
                        }
                    }
                }
            }
        }
    }
    Tensor::new([g.batch, g.out_channels, g.out_len], out).expect("geometry-consistent shape")
}

/// Gradients produced by [`Conv1d::backward`].
#[derive(Debug, Clone)]
pub struct Conv1dGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
struct Conv1dCache<T> {
    geometry: Geometry,
    input: Tensor<T>,
    kernel: Tensor<T>,
}

/// Convolution layer that retains what its backward pass needs.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub stride: usize,
    pub padding: usize,
    cache: Option<Conv1dCache<T>>,
}

impl<T: Real> Conv1d<T> {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self {
            stride,
            padding,
            cache: None,
        }
    }

    pub fn forward(
        &mut self,
        input: &Tensor<T>,
        kernel: &Tensor<T>,
        bias: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let g = Geometry::resolve(input, kernel, bias, self.stride, self.padding)?;
        let out = forward_with(&g, input.values(), kernel.values(), bias.values());
        self.cache = Some(Conv1dCache {
            geometry: g,
            input: input.clone(),
            kernel: kernel.clone(),
        });
        Ok(out)
    }

    pub fn backward(&self, upstream: &Tensor<T>) -> Result<Conv1dGrads<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::state(OP, "backward called before forward"))?;
        let g = &cache.geometry;
        let expected = [g.batch, g.out_channels, g.out_len];
        if upstream.shape() != expected {
            return Err(Error::dimension(
                OP,
                format!(
                    "upstream gradient shape {:?} does not match forward output {:?}",
                    upstream.shape(),
                    expected
                ),
            ));
        }
        let x = cache.input.values();
        let w = cache.kernel.values();
        let up = upstream.values();
        let mut dx = vec![T::zero(); x.len()];
        let mut dw = vec![T::zero(); w.len()];
        let mut db = vec![T::zero(); g.out_channels];

        for n in 0..g.batch {
            for co in 0..g.out_channels {
                let grow = &up[(n * g.out_channels + co) * g.out_len..][..g.out_len];
                db[co] += grow.iter().copied().sum::<T>();
                for ci in 0..g.in_channels {
                    let xoff = (n * g.in_channels + ci) * g.in_len;
                    let xin = &x[xoff..][..g.in_len];
                    let dxin = &mut dx[xoff..][..g.in_len];
                    let woff = (co * g.in_channels + ci) * g.kernel;
                    for k in 0..g.kernel {
                        let weight = w[woff + k];
                        let range = g.valid_outputs(k);
                        if range.is_empty() {
                            continue;
                        }
                        let mut acc = T::zero();
                        if g.stride == 1 {
                            let start = range.start + k - g.padding;
                            let len = range.len();
                            for ((&gv, &xv), dxv) in grow[range]
                                .iter()
                                .zip(&xin[start..start + len])
                                .zip(&mut dxin[start..start + len])
                            {
                                acc += gv * xv;
                                *dxv += gv * weight;
                            }
                        } else {
                            for o in range {
                                let i = o * g.stride + k - g.padding;
                                acc += grow[o] * xin[i];
                                dxin[i] += grow[o] * weight;
                            }
                        }
                        dw[woff + k] += acc;
                    }
                }
            }
        }
        Ok(Conv1dGrads {
            input: Tensor::new(cache.input.shape().to_vec(), dx)?,
            kernel: Tensor::new(cache.kernel.shape().to_vec(), dw)?,
            bias: Tensor::new([g.out_channels], db)?,
        })
    }
}
