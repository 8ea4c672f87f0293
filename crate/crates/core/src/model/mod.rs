//! Residual extractor, contrastive head, prototype embedding and the
//! linear baseline.

pub mod config;
mod extractor;
mod head;
pub mod init;

pub use config::{blocks_for_conv_layers, ClassifierConfig, ExtractorConfig, HeadConfig, ModelConfig};
pub use extractor::{Extractor, Features, Mode};
pub use head::{Classifier, Head, LinearBaseline};
pub use init::{init_backbone, init_classifier, init_extractor, init_head, init_linear};
