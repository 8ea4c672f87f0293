//! Dataset ingestion, encoding, feature selection and episode sampling.

pub mod cache;
mod dataset;
mod episode;
pub mod load;
mod preprocess;
pub mod schema;
pub mod selection;
pub mod synthetic;

pub use cache::{read_cache, write_cache};
pub use dataset::{normalize_in_place, Dataset, LabeledSample};
pub use episode::{sample_episode, Episode, EpisodeItem, EpisodeSampler, EpisodeShape, DEFAULT_QUERIES};
pub use load::{load_dataset, load_records, parse_records, Labels, RawDataset, RawRecord};
pub use preprocess::{preprocess, CategoricalEncoding, EncodingMap, Preprocessed, Preprocessor};
pub use schema::{Label, Schema};
pub use selection::{sulov_select, Decision, FeatureRecord, FeatureSelectionReport, SelectionConfig};
