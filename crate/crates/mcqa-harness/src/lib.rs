//! Black-box evaluation harness for multiple-choice question answering.
//!
//! The harness renders a family of full-input and partial-input prompt
//! formats over four-choice MCQA datasets, drives any text-completion
//! backend (HTTP or a deterministic mock), parses the raw continuations
//! into letters / True-False judgments / generated questions, and computes
//! the downstream metric suite: policy-aware accuracy, majority baselines,
//! elimination-score conversion, Welch's t-test, and Cohen's kappa with a
//! random-agreement baseline.
//!
//! Modules map one-to-one onto the pipeline stages:
//!
//! - [`dataset`] — canonical JSONL ingestion, exemplar selection, random
//!   question sampling
//! - [`promptkit`] — byte-exact rendering of the prompt formats and their
//!   stop sequences
//! - [`backend`] — the completion contract: HTTP client, scripted mock,
//!   content-addressed response cache
//! - [`parse`] — answer extraction from raw completions and validity
//!   accounting
//! - [`metrics`] — scoring policies, baselines, significance tests,
//!   agreement statistics
//! - [`runner`] — end-to-end experiment orchestration with resume support
//! - [`report`] — tables, significance stars, and annotation exports

pub mod backend;
pub mod dataset;
pub mod metrics;
pub mod parse;
pub mod promptkit;
pub mod report;
pub mod runner;
