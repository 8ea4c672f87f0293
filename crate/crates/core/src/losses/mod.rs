//! Training objectives: supervised contrastive pretraining and the
//! prototype-distance losses of the classifier stage.

mod contrastive;
mod objective;
mod prototype;

pub use contrastive::{similarity, supcon_cii_loss, ContrastiveLoss};
pub use objective::{
    cfd_loss, distance_regularizer, episode_objective, infomax_from_distances, infomax_loss, nll_from_distances,
    proto_nll_loss, regularizer_from_distances, softmax_cross_entropy, ClassificationLoss, EpisodeLoss, LossTerm,
    PROBABILITY_FLOOR,
};
pub use prototype::{
    class_probability, compute_prototypes, distance_backward, nearest, probabilities_from_distances,
    prototype_backward, squared_distances, PrototypeSet,
};
