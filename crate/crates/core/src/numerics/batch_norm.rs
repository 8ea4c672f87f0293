//! Per-channel batch normalization over `[B, C, L]` inputs.

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

const OP: &str = "batch_norm";

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Which statistics normalize the input.
#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a, T> {
    /// Batch statistics; running statistics are updated afterwards through
    /// [`BatchNorm1d::update_running_stats`].
    Train,
    /// Stored running statistics.
    Eval {
        running_mean: &'a Tensor<T>,
        running_var: &'a Tensor<T>,
    },
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    shape: [usize; 3],
    train: bool,
    normalized: Vec<T>,
    inv_std: Vec<T>,
    gamma: Vec<T>,
    batch_mean: Vec<T>,
    batch_var: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNorm1d<T> {
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<BnCache<T>>,
}

impl<T: Real> Default for BatchNorm1d<T> {
    fn default() -> Self {
        Self::new(DEFAULT_MOMENTUM, DEFAULT_EPSILON)
    }
}

impl<T: Real> BatchNorm1d<T> {
    pub fn new(momentum: f64, epsilon: f64) -> Self {
        Self {
            momentum,
            epsilon,
            cache: None,
        }
    }

    pub fn forward(
        &mut self,
        input: &Tensor<T>,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        mode: BnMode<'_, T>,
    ) -> Result<Tensor<T>> {
        input.expect_rank(OP, "input", 3)?;
        let (b, c, l) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        for (what, t) in [("gamma", gamma), ("beta", beta)] {
            if t.shape() != [c] {
                return Err(Error::dimension(
                    OP,
                    format!("{what} shape {:?} does not match channel axis (1) {c}", t.shape()),
                ));
            }
        }
        let eps = T::of(self.epsilon);
        let count = b * l;
        let x = input.values();
        let (mean, var, train) = match mode {
            BnMode::Train => {
                if count < 2 {
                    return Err(Error::DegenerateBatch {
                        op: OP,
                        detail: format!("batch*length = {count}; train mode needs at least 2"),
                    });
                }
                let n = T::of_usize(count);
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ch in 0..c {
                    let mut s = T::zero();
                    for bi in 0..b {
                        s += x[(bi * c + ch) * l..][..l].iter().copied().sum::<T>();
                    }
                    let m = s / n;
                    let mut v = T::zero();
                    for bi in 0..b {
                        for &xv in &x[(bi * c + ch) * l..][..l] {
                            v += (xv - m) * (xv - m);
                        }
                    }
                    mean[ch] = m;
                    var[ch] = v / n;
                }
                (mean, var, true)
            }
            BnMode::Eval {
                running_mean,
                running_var,
            } => {
                if running_mean.shape() != [c] || running_var.shape() != [c] {
                    return Err(Error::dimension(
                        OP,
                        format!("running statistics do not match channel axis (1) {c}"),
                    ));
                }
                (
                    running_mean.values().to_vec(),
                    running_var.values().to_vec(),
                    false,
                )
            }
        };

        let inv_std: Vec<T> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();
        let mut normalized = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        let (g, be) = (gamma.values(), beta.values());
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * l;
                for i in off..off + l {
                    let xh = (x[i] - mean[ch]) * inv_std[ch];
                    normalized[i] = xh;
                    out[i] = g[ch] * xh + be[ch];
                }
            }
        }
        self.cache = Some(BnCache {
            shape: [b, c, l],
            train,
            normalized,
            inv_std,
            gamma: g.to_vec(),
            batch_mean: if train { mean } else { Vec::new() },
            batch_var: if train { var } else { Vec::new() },
        });
        Tensor::new([b, c, l], out)
    }

    /// Blends the last train-mode batch statistics into the running ones.
    /// The running variance tracks the unbiased batch variance.
    pub fn update_running_stats(
        &self,
        running_mean: &mut Tensor<T>,
        running_var: &mut Tensor<T>,
    ) -> Result<()> {
        let cache = self
            .cache
            .as_ref()
            .filter(|c| c.train)
            .ok_or_else(|| Error::state(OP, "no train-mode forward to take statistics from"))?;
        let [b, _, l] = cache.shape;
        let n = T::of_usize(b * l);
        let unbias = n / (n - T::one());
        let m = T::of(self.momentum);
        let keep = T::one() - m;
        for (r, &bm) in running_mean.values_mut().iter_mut().zip(&cache.batch_mean) {
            *r = keep * *r + m * bm;
        }
        for (r, &bv) in running_var.values_mut().iter_mut().zip(&cache.batch_var) {
            *r = keep * *r + m * bv * unbias;
        }
        Ok(())
    }

    pub fn backward(&self, upstream: &Tensor<T>) -> Result<BatchNormGrads<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::state(OP, "backward called before forward"))?;
        let [b, c, l] = cache.shape;
        if upstream.shape() != cache.shape {
            return Err(Error::dimension(
                OP,
                format!(
                    "upstream gradient shape {:?} does not match forward output {:?}",
                    upstream.shape(),
                    cache.shape
                ),
            ));
        }
        let dy = upstream.values();
        let xh = &cache.normalized;
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * l;
                for i in off..off + l {
                    dgamma[ch] += dy[i] * xh[i];
                    dbeta[ch] += dy[i];
                }
            }
        }
        let mut dx = vec![T::zero(); dy.len()];
        let n = T::of_usize(b * l);
        for ch in 0..c {
            let scale = cache.gamma[ch] * cache.inv_std[ch];
            if cache.train {
                // dx = gamma*inv_std/n * (n*dy - sum(dy) - xh*sum(dy*xh))
                let mean_dy = dbeta[ch] / n;
                let mean_dy_xh = dgamma[ch] / n;
                for bi in 0..b {
                    let off = (bi * c + ch) * l;
                    for i in off..off + l {
                        dx[i] = scale * (dy[i] - mean_dy - xh[i] * mean_dy_xh);
                    }
                }
            } else {
                for bi in 0..b {
                    let off = (bi * c + ch) * l;
                    for i in off..off + l {
                        dx[i] = scale * dy[i];
                    }
                }
            }
        }
        Ok(BatchNormGrads {
            input: Tensor::new([b, c, l], dx)?,
            gamma: Tensor::new([c], dgamma)?,
            beta: Tensor::new([c], dbeta)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check::{grad_check, GradCheckConfig, Probe};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, &[4, 3, 6]);
        let mut bn = BatchNorm1d::default();
        let y = bn
            .forward(&x, &Tensor::filled([3], 1.0), &Tensor::zeros([3]), BnMode::Train)
            .unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|b| y.values()[(b * 3 + ch) * 6..][..6].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, &[2, 2, 3]);
        let beta = Tensor::new([2], vec![0.7, -0.3]).unwrap();
        let y = BatchNorm1d::default()
            .forward(&x, &Tensor::zeros([2]), &beta, BnMode::Train)
            .unwrap();
        for (i, v) in y.values().iter().enumerate() {
            assert_eq!(*v, beta.values()[(i / 3) % 2]);
        }
    }

    #[test]
    fn degenerate_batch_rejected_in_train_mode() {
        let err = BatchNorm1d::<f64>::default()
            .forward(
                &Tensor::zeros([1, 2, 1]),
                &Tensor::filled([2], 1.0),
                &Tensor::zeros([2]),
                BnMode::Train,
            )
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateBatch { .. }));
    }

    #[test]
    fn eval_mode_is_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[3, 2, 4]);
        let rm = Tensor::new([2], vec![0.1, -0.2]).unwrap();
        let rv = Tensor::new([2], vec![1.5, 0.5]).unwrap();
        let g = Tensor::new([2], vec![1.2, 0.8]).unwrap();
        let be = Tensor::new([2], vec![0.0, 0.3]).unwrap();
        let mode = BnMode::Eval {
            running_mean: &rm,
            running_var: &rv,
        };
        let a = BatchNorm1d::default().forward(&x, &g, &be, mode).unwrap();
        let b = BatchNorm1d::default().forward(&x, &g, &be, mode).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn running_stats_move_by_momentum() {
        let x = Tensor::<f64>::new([2, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let mut bn = BatchNorm1d::new(0.1, 1e-5);
        bn.forward(&x, &Tensor::filled([1], 1.0), &Tensor::zeros([1]), BnMode::Train)
            .unwrap();
        let mut rm = Tensor::zeros([1]);
        let mut rv = Tensor::filled([1], 1.0);
        bn.update_running_stats(&mut rm, &mut rv).unwrap();
        // mean 4, population var 5, unbiased 20/3
        assert!((rm.values()[0] - 0.4).abs() < 1e-12);
        assert!((rv.values()[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
    }

    fn check_mode(train: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[3, 2, 4]);
        let gamma = random(&mut rng, &[2]);
        let beta = random(&mut rng, &[2]);
        let rm = random(&mut rng, &[2]);
        let rv = Tensor::from_fn([2], |_| rng.random_range(0.5..2.0));
        let probe = random(&mut rng, &[3, 2, 4]);
        let mode = |rm, rv| {
            if train {
                BnMode::Train
            } else {
                BnMode::Eval {
                    running_mean: rm,
                    running_var: rv,
                }
            }
        };
        let mut bn = BatchNorm1d::default();
        bn.forward(&x, &gamma, &beta, mode(&rm, &rv)).unwrap();
        let grads = bn.backward(&probe).unwrap();
        let loss = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
            let y = BatchNorm1d::default().forward(x, g, b, mode(&rm, &rv)).unwrap();
            Probe::smooth(y.values().iter().zip(probe.values()).map(|(a, p)| a * p).sum())
        };
        let cfg = GradCheckConfig::default();
        let rebuild = |s: &[usize], v: &[f64]| Tensor::new(s.to_vec(), v.to_vec()).unwrap();
        let mut r = grad_check(
            |v| Ok(loss(&rebuild(x.shape(), v), &gamma, &beta)),
            x.values(),
            grads.input.values(),
            None,
            &cfg,
        )
        .unwrap();
        r.merge(
            &grad_check(
                |v| Ok(loss(&x, &rebuild(&[2], v), &beta)),
                gamma.values(),
                grads.gamma.values(),
                None,
                &cfg,
            )
            .unwrap(),
        );
        r.merge(
            &grad_check(
                |v| Ok(loss(&x, &gamma, &rebuild(&[2], v))),
                beta.values(),
                grads.beta.values(),
                None,
                &cfg,
            )
            .unwrap(),
        );
        assert!(r.passed, "train={train}: {r:?}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..4 {
            check_mode(true, seed);
            check_mode(false, seed);
        }
    }
}
