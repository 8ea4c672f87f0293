//! Class prototypes, squared distances and distance-based probabilities.

use crate::data::Label;
use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// One mean embedding per rostered class.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T> {
    /// `[C, D]`, row `c` belongs to `classes[c]`.
    pub prototypes: Tensor<T>,
    pub classes: Vec<Label>,
    /// Support samples per class.
    pub counts: Vec<usize>,
}

impl<T: Real> PrototypeSet<T> {
    pub fn new(prototypes: Tensor<T>, classes: Vec<Label>) -> Result<Self> {
        prototypes.expect_rank("prototypes", "prototypes", 2)?;
        if prototypes.shape()[0] != classes.len() {
            return Err(Error::Prototype(format!(
                "{} prototypes for {} classes",
                prototypes.shape()[0],
                classes.len()
            )));
        }
        prototypes.check_finite("prototypes")?;
        let counts = vec![1; classes.len()];
        Ok(Self {
            prototypes,
            classes,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.shape()[1]
    }

    pub fn get(&self, c: usize) -> &[T] {
        self.prototypes.row(c)
    }

    pub fn normal_index(&self) -> Option<usize> {
        self.classes.iter().position(|&c| c == Label::Normal)
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.classes.iter().position(|&c| c == label)
    }
}

/// Per-class mean of the support embeddings. `classes[s]` is the roster
/// position of support row `s`; rows are summed in ascending `sample_ids`
/// order so the result does not depend on the support ordering.
pub fn compute_prototypes<T: Real>(
    embeddings: &Tensor<T>,
    classes: &[usize],
    sample_ids: &[usize],
    roster: &[Label],
) -> Result<PrototypeSet<T>> {
    const OP: &str = "compute_prototypes";
    embeddings.expect_rank(OP, "embeddings", 2)?;
    let (s, dim) = (embeddings.shape()[0], embeddings.shape()[1]);
    if classes.len() != s || sample_ids.len() != s {
        return Err(Error::dimension(
            OP,
            format!("{s} embeddings, {} classes, {} sample ids", classes.len(), sample_ids.len()),
        ));
    }
    if let Some(&bad) = classes.iter().find(|&&c| c >= roster.len()) {
        return Err(Error::Prototype(format!("class index {bad} outside roster of {}", roster.len())));
    }
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by_key(|&r| (sample_ids[r], r));
    let mut sums = vec![T::zero(); roster.len() * dim];
    let mut counts = vec![0usize; roster.len()];
    for r in order {
        let c = classes[r];
        counts[c] += 1;
        for (acc, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(embeddings.row(r)) {
            *acc += v;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::Prototype(format!("class {} has no support embeddings", roster[c])));
        }
        let inv = T::of_usize(n);
        sums[c * dim..(c + 1) * dim].iter_mut().for_each(|v| *v /= inv);
    }
    let prototypes = Tensor::new([roster.len(), dim], sums)?;
    prototypes.check_finite("prototypes")?;
    Ok(PrototypeSet {
        prototypes,
        classes: roster.to_vec(),
        counts,
    })
}

/// Gradient of a loss with respect to the support embeddings given its
/// gradient with respect to the prototypes.
pub fn prototype_backward<T: Real>(protos: &PrototypeSet<T>, d_protos: &Tensor<T>, classes: &[usize]) -> Result<Tensor<T>> {
    if d_protos.shape() != protos.prototypes.shape() {
        return Err(Error::dimension(
            "prototype_backward",
            format!("gradient shape {:?} vs prototypes {:?}", d_protos.shape(), protos.prototypes.shape()),
        ));
    }
    let dim = protos.dim();
    let mut out = Vec::with_capacity(classes.len() * dim);
    for &c in classes {
        let inv = T::of_usize(protos.counts[c]);
        out.extend(d_protos.row(c).iter().map(|&g| g / inv));
    }
    Tensor::new([classes.len(), dim], out)
}

/// `[Q, C]` squared Euclidean distances from each query to each prototype.
pub fn squared_distances<T: Real>(queries: &Tensor<T>, protos: &PrototypeSet<T>) -> Result<Tensor<T>> {
    queries.expect_rank("squared_distances", "queries", 2)?;
    if queries.shape()[1] != protos.dim() {
        return Err(Error::dimension(
            "squared_distances",
            format!("query width {} vs prototype width {}", queries.shape()[1], protos.dim()),
        ));
    }
    let (q, c) = (queries.shape()[0], protos.len());
    Ok(Tensor::from_fn([q, c], |k| {
        let (i, j) = (k / c, k % c);
        queries
            .row(i)
            .iter()
            .zip(protos.get(j))
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    }))
}

/// Chains `dL/dd` through `d_ij = ||q_i - c_j||^2`; returns `(dL/dq, dL/dc)`.
pub fn distance_backward<T: Real>(
    queries: &Tensor<T>,
    protos: &PrototypeSet<T>,
    d_dist: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (q, c, dim) = (queries.shape()[0], protos.len(), protos.dim());
    if d_dist.shape() != [q, c] {
        return Err(Error::dimension(
            "distance_backward",
            format!("gradient shape {:?}, expected [{q}, {c}]", d_dist.shape()),
        ));
    }
    let two = T::of(2.0);
    let mut dq = vec![T::zero(); q * dim];
    let mut dc = vec![T::zero(); c * dim];
    for i in 0..q {
        for j in 0..c {
            let g = d_dist.row(i)[j];
            if g == T::zero() {
                continue;
            }
            for d in 0..dim {
                let diff = two * g * (queries.row(i)[d] - protos.get(j)[d]);
                dq[i * dim + d] += diff;
                dc[j * dim + d] -= diff;
            }
        }
    }
    Ok((Tensor::new([q, dim], dq)?, Tensor::new([c, dim], dc)?))
}

pub(crate) fn log_sum_exp<T: Real>(values: impl Iterator<Item = T> + Clone) -> T {
    let max = values.clone().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<T>().ln()
}

/// Softmax of negative squared distances for one query.
pub fn probabilities_from_distances<T: Real>(distances: &[T]) -> Vec<T> {
    let lse = log_sum_exp(distances.iter().map(|&d| -d));
    distances.iter().map(|&d| (-d - lse).exp()).collect()
}

pub fn class_probability<T: Real>(query: &[T], protos: &PrototypeSet<T>) -> Result<Vec<T>> {
    let q = Tensor::new([1, query.len()], query.to_vec())?;
    let d = squared_distances(&q, protos)?;
    Ok(probabilities_from_distances(d.values()))
}

/// Index of the nearest prototype; ties go to the lowest index.
pub fn nearest<T: Real>(distances: &[T]) -> usize {
    let mut best = 0;
    for (j, &d) in distances.iter().enumerate().skip(1) {
        if d < distances[best] {
            best = j;
        }
    }
    best
}
