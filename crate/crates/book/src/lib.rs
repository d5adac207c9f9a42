//! The guide under `book/src`, one module per chapter, so that
//! `cargo test` runs every snippet.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}
#[doc = include_str!("../../../book/src/text.md")]
pub mod text {}
#[doc = include_str!("../../../book/src/lda.md")]
pub mod lda {}
#[doc = include_str!("../../../book/src/retrieval.md")]
pub mod retrieval {}
#[doc = include_str!("../../../book/src/tuning.md")]
pub mod tuning {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/squad.md")]
pub mod squad {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
