//! Semantic evaluation of open-ended VQA responses, and tools for judging the
//! evaluators themselves: rank alignment with human scores, stability under
//! paraphrase and morphology, and stability across source datasets.

pub mod annotation;
pub mod augment;
pub mod embedder;
pub mod model;
pub mod properties;
pub mod stats;
pub mod textmetrics;
pub mod trainer;

pub use embedder::{cosine, format_pair, Embedding, EmbeddingBackend};
pub use model::{
    load_samples, write_samples, AssessmentReport, Part, PredictionEntry, PredictionSet, Sample, SourceDataset,
};
pub use properties::{alignment, assess, consistency, generalization, PropertyConfig};
pub use stats::{krippendorff_alpha, spearman, AnnotationMatrix};
pub use textmetrics::{tokenize, TokenSequence};
