use crate::error::{Error, Result};
use crate::numerics::{EntryKind, ParameterSet, Real};

/// Plain stochastic gradient descent: `w <- w - lr * g` for every trainable
/// entry in an unfrozen partition. Gradients are read from each tensor's
/// gradient buffer; frozen partitions and buffers are never touched.
pub fn sgd_step<T: Real>(params: &mut ParameterSet<T>, learning_rate: T) -> Result<()> {
    let frozen: Vec<bool> = crate::numerics::Partition::ALL
        .iter()
        .map(|&p| params.is_frozen(p))
        .collect();
    // Validate before mutating so a missing gradient leaves the set untouched.
    for (name, entry) in params.iter() {
        if entry.kind() == EntryKind::Trainable
            && !frozen[entry.partition() as usize]
            && !entry.tensor.has_grad()
        {
            return Err(Error::Optimizer(format!("no gradient for unfrozen parameter {name:?}")));
        }
    }
    for (_, entry) in params.iter_mut() {
        if entry.kind() != EntryKind::Trainable || frozen[entry.partition() as usize] {
            continue;
        }
        let grad = entry.tensor.grad().map(<[T]>::to_vec).unwrap_or_default();
        for (w, g) in entry.tensor.values_mut().iter_mut().zip(grad) {
            *w -= learning_rate * g;
        }
    }
    Ok(())
}
