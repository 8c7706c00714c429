//! Knowledge-base-consistent task-oriented dialogue generation.
//!
//! A memory-network retriever picks the KB row a response should draw on,
//! and a sequence-to-sequence generator copies cells only from that row.
//! The retriever is trained from distant row labels, optionally followed by
//! end-to-end fine-tuning through a Gumbel-Softmax relaxation.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod model;
pub mod numeric;
pub mod retriever;
pub mod training;
pub mod weak_labels;

pub use corpus::{Dialogue, EntityLexicon, KnowledgeBase, Turn, Vocabulary};
pub use error::{Error, Result};
pub use model::{Generation, Model, ModelConfig, ModelMeta, ModelSet};
pub use numeric::{ParamStore, Tensor};
pub use retriever::RetrievalResult;
pub use weak_labels::{LabelSet, SupportStats, WeakLabel};
