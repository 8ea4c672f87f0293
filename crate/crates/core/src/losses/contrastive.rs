//! Supervised contrastive loss with class-dependent temperatures.

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Inner product of two embeddings.
pub fn similarity<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct ContrastiveLoss<T> {
    pub value: T,
    /// Gradient with respect to the embeddings, same shape as the input.
    pub grad: Tensor<T>,
    /// Anchors that contributed to the mean.
    pub anchors: usize,
    /// Anchors without a same-class partner.
    pub skipped: usize,
}

/// Mean over anchors `i` of
/// `-1/|P_i| * sum_{p in P_i} log( exp(z_i.z_p / tau) / sum_{q != i} exp(z_i.z_q / t_iq) )`
/// where `P_i` are the other samples of the anchor's class and `t_iq` is
/// `beta` for same-class `q` and `tau` otherwise. `beta == tau` gives the
/// plain supervised contrastive loss.
pub fn supcon_cii_loss<T: Real>(z: &Tensor<T>, labels: &[usize], tau: f64, beta: f64) -> Result<ContrastiveLoss<T>> {
    const OP: &str = "supcon_cii_loss";
    z.expect_rank(OP, "embeddings", 2)?;
    let (n, dim) = (z.shape()[0], z.shape()[1]);
    if labels.len() != n {
        return Err(Error::dimension(OP, format!("{} labels for {n} embeddings", labels.len())));
    }
    if !(tau > 0.0) || !(beta >= tau) || !beta.is_finite() {
        return Err(Error::Contract(format!(
            "{OP}: temperatures must satisfy 0 < tau <= beta (tau = {tau}, beta = {beta})"
        )));
    }
    let (t_tau, t_beta) = (T::of(tau), T::of(beta));
    let sims: Vec<T> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| similarity(z.row(i), z.row(j)))
        .collect();

    // dL/ds_iq before averaging over anchors.
    let mut ds = vec![T::zero(); n * n];
    let mut total = T::zero();
    let mut anchors = 0usize;
    let mut skipped = 0usize;
    let mut logits = vec![T::zero(); n];
    for i in 0..n {
        let positives = (0..n).filter(|&p| p != i && labels[p] == labels[i]).count();
        if positives == 0 {
            skipped += 1;
            continue;
        }
        anchors += 1;
        let mut max = T::neg_infinity();
        for q in 0..n {
            if q == i {
                continue;
            }
            let t = if labels[q] == labels[i] { t_beta } else { t_tau };
            logits[q] = sims[i * n + q] / t;
            max = max.max(logits[q]);
        }
        let denom: T = (0..n).filter(|&q| q != i).map(|q| (logits[q] - max).exp()).sum();
        let lse = max + denom.ln();
        let np = T::of_usize(positives);
        let mut pos_sum = T::zero();
        for q in 0..n {
            if q == i {
                continue;
            }
            let t = if labels[q] == labels[i] { t_beta } else { t_tau };
            let w = (logits[q] - max).exp() / denom;
            let mut g = w / t;
            if labels[q] == labels[i] {
                pos_sum += sims[i * n + q] / t_tau;
                g -= T::one() / (np * t_tau);
            }
            ds[i * n + q] = g;
        }
        total += lse - pos_sum / np;
    }
    if anchors == 0 {
        return Err(Error::DegenerateBatch {
            op: OP,
            detail: format!("none of the {n} anchors has a same-class partner"),
        });
    }
    if skipped > 0 {
        log::debug!("{OP}: skipped {skipped} anchor(s) without a same-class partner");
    }
    let scale = T::one() / T::of_usize(anchors);
    let mut grad = vec![T::zero(); n * dim];
    for i in 0..n {
        for q in 0..n {
            let g = ds[i * n + q] * scale;
            if g == T::zero() {
                continue;
            }
            for d in 0..dim {
                grad[i * dim + d] += g * z.row(q)[d];
                grad[q * dim + d] += g * z.row(i)[d];
            }
        }
    }
    Ok(ContrastiveLoss {
        value: total * scale,
        grad: Tensor::new([n, dim], grad)?,
        anchors,
        skipped,
    })
}
