//! Distance-based classification losses, the regularizer and their
//! combination. Each term returns its gradient with respect to the `[Q, C]`
//! squared-distance matrix; [`episode_objective`] chains that back to the
//! query embeddings and prototypes.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::prototype::{
    distance_backward, log_sum_exp, probabilities_from_distances, squared_distances, PrototypeSet,
};
use crate::numerics::{Real, Tensor};

/// Smallest probability fed to a logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone)]
pub struct LossTerm<T> {
    pub value: T,
    /// `dL/dd` with the shape of the distance matrix.
    pub d_distances: Tensor<T>,
    /// Log arguments clamped at [`PROBABILITY_FLOOR`].
    pub clamped: usize,
    /// Terms omitted because their query group was empty.
    pub dropped_terms: usize,
}

fn check_targets<T: Real>(distances: &Tensor<T>, targets: &[usize]) -> Result<(usize, usize)> {
    distances.expect_rank("loss", "distances", 2)?;
    let (q, c) = (distances.shape()[0], distances.shape()[1]);
    if targets.len() != q {
        return Err(Error::dimension("loss", format!("{} targets for {q} queries", targets.len())));
    }
    if q == 0 {
        return Err(Error::DegenerateBatch {
            op: "loss",
            detail: "no queries".into(),
        });
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::Contract(format!("target {bad} outside roster of {c} classes")));
    }
    Ok((q, c))
}

/// Mean negative log-probability of the true class.
pub fn nll_from_distances<T: Real>(distances: &Tensor<T>, targets: &[usize]) -> Result<LossTerm<T>> {
    let (q, c) = check_targets(distances, targets)?;
    let floor = T::of(PROBABILITY_FLOOR.ln());
    let inv_q = T::one() / T::of_usize(q);
    let mut value = T::zero();
    let mut grad = vec![T::zero(); q * c];
    let mut clamped = 0;
    for (i, &y) in targets.iter().enumerate() {
        let d = distances.row(i);
        let log_p = -d[y] - log_sum_exp(d.iter().map(|&v| -v));
        if log_p < floor {
            clamped += 1;
            value -= floor * inv_q;
            continue;
        }
        value -= log_p * inv_q;
        let p = probabilities_from_distances(d);
        for j in 0..c {
            let delta = if j == y { T::one() } else { T::zero() };
            grad[i * c + j] = (delta - p[j]) * inv_q;
        }
    }
    if clamped > 0 {
        log::warn!("nll: {clamped} true-class probabilities clamped at {PROBABILITY_FLOOR:e}");
    }
    Ok(LossTerm {
        value,
        d_distances: Tensor::new([q, c], grad)?,
        clamped,
        dropped_terms: 0,
    })
}

/// Binary cross-entropy on the normal-class probability `S`:
/// `-(mean log S over normal queries + mean log(1 - S) over the others)`.
pub fn infomax_from_distances<T: Real>(distances: &Tensor<T>, targets: &[usize], normal: usize) -> Result<LossTerm<T>> {
    let (q, c) = check_targets(distances, targets)?;
    if normal >= c || c < 2 {
        return Err(Error::Contract(format!(
            "infomax needs a normal class inside a roster of at least 2 (normal = {normal}, classes = {c})"
        )));
    }
    let floor = T::of(PROBABILITY_FLOOR.ln());
    let n_normal = targets.iter().filter(|&&t| t == normal).count();
    let n_abnormal = q - n_normal;
    let mut value = T::zero();
    let mut grad = vec![T::zero(); q * c];
    let mut clamped = 0;
    for (i, &y) in targets.iter().enumerate() {
        let d = distances.row(i);
        let p = probabilities_from_distances(d);
        let lse_all = log_sum_exp(d.iter().map(|&v| -v));
        if y == normal {
            let w = T::one() / T::of_usize(n_normal);
            let log_s = -d[normal] - lse_all;
            if log_s < floor {
                clamped += 1;
                value -= floor * w;
                continue;
            }
            value -= log_s * w;
            for j in 0..c {
                let delta = if j == normal { T::one() } else { T::zero() };
                grad[i * c + j] = (delta - p[j]) * w;
            }
        } else {
            let w = T::one() / T::of_usize(n_abnormal);
            let rest = d.iter().enumerate().filter(|&(j, _)| j != normal).map(|(_, &v)| -v);
            let log_rest = log_sum_exp(rest) - lse_all;
            if log_rest < floor {
                clamped += 1;
                value -= floor * w;
                continue;
            }
            value -= log_rest * w;
            let rest_mass = log_rest.exp();
            for j in 0..c {
                let r = if j == normal { T::zero() } else { p[j] / rest_mass };
                grad[i * c + j] = (r - p[j]) * w;
            }
        }
    }
    let dropped_terms = usize::from(n_normal == 0) + usize::from(n_abnormal == 0);
    if dropped_terms > 0 {
        log::warn!("infomax: episode has no {} queries; that term is dropped", if n_normal == 0 { "normal" } else { "abnormal" });
    }
    if clamped > 0 {
        log::warn!("infomax: {clamped} log arguments clamped at {PROBABILITY_FLOOR:e}");
    }
    Ok(LossTerm {
        value,
        d_distances: Tensor::new([q, c], grad)?,
        clamped,
        dropped_terms,
    })
}

/// Mean squared distance to the true-class prototype.
pub fn regularizer_from_distances<T: Real>(distances: &Tensor<T>, targets: &[usize]) -> Result<LossTerm<T>> {
    let (q, c) = check_targets(distances, targets)?;
    let inv_q = T::one() / T::of_usize(q);
    let mut value = T::zero();
    let mut grad = vec![T::zero(); q * c];
    for (i, &y) in targets.iter().enumerate() {
        value += distances.row(i)[y] * inv_q;
        grad[i * c + y] = inv_q;
    }
    Ok(LossTerm {
        value,
        d_distances: Tensor::new([q, c], grad)?,
        clamped: 0,
        dropped_terms: 0,
    })
}

pub fn proto_nll_loss<T: Real>(queries: &Tensor<T>, targets: &[usize], protos: &PrototypeSet<T>) -> Result<T> {
    Ok(nll_from_distances(&squared_distances(queries, protos)?, targets)?.value)
}

pub fn infomax_loss<T: Real>(queries: &Tensor<T>, targets: &[usize], protos: &PrototypeSet<T>) -> Result<T> {
    let normal = protos
        .normal_index()
        .ok_or_else(|| Error::Contract("infomax needs the normal class in the roster".into()))?;
    Ok(infomax_from_distances(&squared_distances(queries, protos)?, targets, normal)?.value)
}

pub fn distance_regularizer<T: Real>(queries: &Tensor<T>, targets: &[usize], protos: &PrototypeSet<T>) -> Result<T> {
    Ok(regularizer_from_distances(&squared_distances(queries, protos)?, targets)?.value)
}

/// `classification + alpha * regularizer`.
pub fn cfd_loss<T: Real>(classification: T, regularizer: T, alpha: f64) -> Result<T> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Contract(format!("alpha must be a finite non-negative number, got {alpha}")));
    }
    Ok(classification + T::of(alpha) * regularizer)
}

/// Stage-two classification objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassificationLoss {
    /// Negative log-probability of the true class.
    Nll,
    /// Binary cross-entropy on the normal-class probability.
    #[default]
    Infomax,
}

impl ClassificationLoss {
    pub fn name(self) -> &'static str {
        match self {
            ClassificationLoss::Nll => "nll",
            ClassificationLoss::Infomax => "infomax",
        }
    }
}

impl fmt::Display for ClassificationLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassificationLoss {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "nll" | "proto_nll" => Ok(ClassificationLoss::Nll),
            "infomax" | "spinfomax" => Ok(ClassificationLoss::Infomax),
            other => Err(format!("unknown stage-2 loss {other:?} (expected nll or infomax)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeLoss<T> {
    pub value: T,
    pub classification: T,
    pub regularizer: T,
    pub d_queries: Tensor<T>,
    pub d_prototypes: Tensor<T>,
    pub clamped: usize,
    pub dropped_terms: usize,
}

/// `classification + alpha * regularizer` on one episode, with gradients
/// for the query embeddings and the prototypes.
pub fn episode_objective<T: Real>(
    queries: &Tensor<T>,
    targets: &[usize],
    protos: &PrototypeSet<T>,
    loss: ClassificationLoss,
    alpha: f64,
) -> Result<EpisodeLoss<T>> {
    let dist = squared_distances(queries, protos)?;
    let cls = match loss {
        ClassificationLoss::Nll => nll_from_distances(&dist, targets)?,
        ClassificationLoss::Infomax => {
            let normal = protos
                .normal_index()
                .ok_or_else(|| Error::Contract("infomax needs the normal class in the roster".into()))?;
            infomax_from_distances(&dist, targets, normal)?
        }
    };
    let reg = regularizer_from_distances(&dist, targets)?;
    let value = cfd_loss(cls.value, reg.value, alpha)?;
    let a = T::of(alpha);
    let combined: Vec<T> = cls
        .d_distances
        .values()
        .iter()
        .zip(reg.d_distances.values())
        .map(|(&g, &r)| g + a * r)
        .collect();
    let d_dist = Tensor::new(dist.shape().to_vec(), combined)?;
    let (d_queries, d_prototypes) = distance_backward(queries, protos, &d_dist)?;
    Ok(EpisodeLoss {
        value,
        classification: cls.value,
        regularizer: reg.value,
        d_queries,
        d_prototypes,
        clamped: cls.clamped,
        dropped_terms: cls.dropped_terms,
    })
}

/// Mean softmax cross-entropy of `[B, C]` logits; returns the value and
/// `dL/dlogits`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>)> {
    // Cross-entropy on logits equals the distance NLL with d = -logits.
    let neg = Tensor::new(logits.shape().to_vec(), logits.values().iter().map(|&v| -v).collect())?;
    let term = nll_from_distances(&neg, targets)?;
    let grad = term.d_distances.values().iter().map(|&g| -g).collect();
    Ok((term.value, Tensor::new(logits.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(rows: &[[f64; 2]]) -> Tensor<f64> {
        Tensor::new([rows.len(), 2], rows.concat()).unwrap()
    }

    #[test]
    fn nll_examples() {
        let l3 = 3f64.ln();
        assert!(nll_from_distances(&dist(&[[0.0, 80.0]]), &[0]).unwrap().value < 1e-30);
        let v = nll_from_distances(&dist(&[[0.0, l3]]), &[0]).unwrap().value;
        assert!((v - 0.2877).abs() < 5e-5);
        let v = nll_from_distances(&dist(&[[1.0, 1.0]]), &[1]).unwrap().value;
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn nll_clamps_underflow() {
        let t = nll_from_distances(&dist(&[[0.0, 1e4]]), &[1]).unwrap();
        assert_eq!(t.clamped, 1);
        assert!((t.value + PROBABILITY_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn infomax_examples() {
        let v = infomax_from_distances(&dist(&[[1.0, 1.0], [2.0, 2.0]]), &[0, 1], 0).unwrap().value;
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let l3 = 3f64.ln();
        let v = infomax_from_distances(&dist(&[[0.0, l3], [l3, 0.0]]), &[0, 1], 0).unwrap().value;
        assert!((v - 0.5754).abs() < 5e-5);
        let v = infomax_from_distances(&dist(&[[0.0, 60.0], [60.0, 0.0]]), &[0, 1], 0).unwrap().value;
        assert!(v < 1e-20);
    }

    #[test]
    fn infomax_drops_empty_side() {
        let t = infomax_from_distances(&dist(&[[1.0, 1.0]]), &[0], 0).unwrap();
        assert_eq!(t.dropped_terms, 1);
        assert!((t.value - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn regularizer_and_cfd_examples() {
        let v = regularizer_from_distances(&dist(&[[1.0, 9.0], [7.0, 4.0]]), &[0, 1]).unwrap().value;
        assert!((v - 2.5).abs() < 1e-15);
        assert!((cfd_loss(0.5754, 2.5, 0.1).unwrap() - 0.8254f64).abs() < 1e-12);
        assert_eq!(cfd_loss(0.5754f64, 2.5, 0.0).unwrap(), 0.5754);
        assert!(cfd_loss(1.0f64, 1.0, -0.1).is_err());
    }

    #[test]
    fn cross_entropy_uniform() {
        let logits = Tensor::new([1, 2], vec![0.0f64, 0.0]).unwrap();
        let (v, g) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g.values(), &[-0.5, 0.5]);
    }

    #[test]
    fn loss_names_parse() {
        assert_eq!("nll".parse::<ClassificationLoss>().unwrap(), ClassificationLoss::Nll);
        assert_eq!("InfoMax".parse::<ClassificationLoss>().unwrap(), ClassificationLoss::Infomax);
        assert!("mse".parse::<ClassificationLoss>().is_err());
    }
}
