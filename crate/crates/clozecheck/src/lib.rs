//! Zero-resource hallucination scoring for LLM-generated passages.
//!
//! Every detector in this crate treats the language model as a black box: no
//! retrieval corpus, no logit access beyond what the completions API already
//! returns, no fine-tuning. A passage is scored sentence by sentence with a
//! value in [0, 1], where higher means "more likely hallucinated".
//!
//! The pieces fit together like this:
//!
//! * [`fibe`] turns a passage into a multiple-fill-in-the-blank exam, has the
//!   model sit the exam several times, grades the answer sheets, and converts
//!   the grades into per-sentence scores.
//! * [`detectors`] adds the direct-question check, the sampling-based support
//!   baseline, and the ensemble/correction plumbing that combines everything.
//! * [`scoring`] holds the score arithmetic itself (clipping, snowballing
//!   correction, weighted ensembles).
//! * [`prompts`] renders the six fixed prompt templates byte-for-byte.
//! * [`backend`] speaks the chat-completions wire format with caching,
//!   retries, in-flight deduplication, and record/replay transcripts.
//! * [`dataset`] ingests annotated benchmark passages; [`eval`] computes
//!   AUC-PR / AUC-ROC and the prefix-wins analysis over detector outputs.

pub mod backend;
pub mod dataset;
pub mod detectors;
pub mod eval;
pub mod fibe;
pub mod par;
pub mod passage;
pub mod prompts;
pub mod scoring;
