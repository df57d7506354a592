//! Maps spoken-language word uses to sign-dictionary entries, classifies
//! how each word's senses correspond to signs, and evaluates both steps
//! against human annotation.
//!
//! The crate is organised along the pipeline:
//!
//! * [`corpus`]: word uses, sign inventory, gold annotations
//! * [`embeddings`]: embedding store, fallback embedder, cosine similarity
//! * [`retrieval`]: query/document construction, EM and SS engines
//! * [`typing`]: per-word aggregation and correspondence typing
//! * [`evaluation`]: accuracy, precision at K, agreement, error flow
//! * [`tuning`]: grid search over the SS hyperparameters
//! * [`pipeline`], [`report`], [`cli`]: orchestration and output formats

pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod evaluation;
pub mod pipeline;
pub mod report;
pub mod retrieval;
pub mod text;
pub mod tuning;
pub mod typing;

pub use corpus::{load_corpus, Corpus, CorpusPaths, CorrespondenceType, Split};
pub use embeddings::{cosine_similarity, EmbeddingProvider, EmbeddingStore, EmbeddingVector};
pub use retrieval::{
    build_query, build_sign_documents, em_retrieve, ss_retrieve, Engine, InputMode,
    RetrievalResult, SignIndex, SsParams,
};
pub use typing::{aggregate_word, assign_type, TypeDecision};
