//! Argument mining over pluggable LLM backends.
//!
//! Three tasks share one pipeline: argument detection, claim topic
//! extraction, and three-class stance classification. Detection and stance
//! prompts can embed a small transition network ([`atn`]) that spells out
//! what counts as an argument.

pub mod atn;
pub mod backend;
pub mod data;
pub mod eval;
pub mod pipeline;
pub mod prompt;
pub mod text;
pub mod types;

pub use atn::{build_detection_atn, predicate_oracle, Atn, AtnState, TokenSequence};
pub use backend::{Backend, BackendConfig, BackendError, Embedder, Embedding, MockBackend};
pub use prompt::{ParseOutcome, Prompt, PromptBuilder, Task, Variant};
pub use types::{
    validate_instance, ArgumentLabel, ArgumentType, Instance, StanceLabel, Style, TokenState, Topic,
};
