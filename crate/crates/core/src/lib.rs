//! Clinical note section segmentation.
//!
//! Two interchangeable engines label every line of a note with a section
//! header: a supervised line encoder with an optional linear-chain CRF on
//! top, and a zero-shot chat-model segmenter whose out-of-schema headers are
//! detected and remapped. The [`evaluation`] module scores either engine and
//! compares them per note.

pub mod corpus;
pub mod crf;
pub mod encoders;
pub mod evaluation;
pub mod hallucination;
pub mod http;
pub mod jsonl;
pub mod llm;
pub mod math;
pub mod model_file;
pub mod synthetic;

pub use corpus::{LabelSet, LabeledNote, Note, OUTSIDE};
