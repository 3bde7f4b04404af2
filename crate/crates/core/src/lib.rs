//! Forging stylized variants of vision-language datasets.
//!
//! The crate turns a source corpus of images with captions, yes/no questions
//! or entailment hypotheses into cartoon, pencil and oil-painting variants.
//! A multimodal chat model describes and restyles each image, an image
//! generator renders the restyled prompt, and the chat model checks the
//! result before any label is carried over. Labels are then verified,
//! re-annotated where needed and paraphrased.
//!
//! Modules:
//!
//! - [`provider`]: chat / image-generation clients, cost ledger, record and replay.
//! - [`promptkit`]: prompt templates and strict parsing of constrained replies.
//! - [`stylize`]: the decompose / restyle / generate / verify loop.
//! - [`annotate`]: caption, VQA and VE label workflows.
//! - [`dataset`]: source corpora, manifests, splitting and statistics.
//! - [`mmd`]: maximum mean discrepancy and domain-gap matrices.
//! - [`runs`]: resumable on-disk runs tying the above together.

pub mod annotate;
pub mod dataset;
pub mod mmd;
pub mod promptkit;
pub mod provider;
pub mod rng;
pub mod runs;
pub mod stylize;
pub mod exchange;
mod fsutil;
mod types;

pub use promptkit::Style;
pub use types::{Split, Task, YesNo};
