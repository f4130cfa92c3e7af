//! Method-level fault localization driven by a tool-calling LLM dialogue.
//!
//! Given a snapshot of a buggy repository and its failing tests, the
//! pipeline runs a two-stage dialogue with a language model: Stage 1 lets
//! the model explore the code through four debugging functions and produce a
//! root-cause explanation; Stage 2 asks for the culprit method signatures.
//! Repeated runs are merged into a ranked, scored method list with a
//! confidence estimate, and an evaluation harness scores reports against
//! ground truth.
//!
//! Module map:
//! * [`snapshot`] — the repository snapshot and its lookups
//! * [`prompt`] — prompt construction and minimization heuristics
//! * [`tools`] — the four debugging functions and call logging
//! * [`backend`] — LLM boundary: live HTTP, scripted mock, record/replay
//! * [`orchestrator`] — single runs and campaigns
//! * [`aggregate`] — scoring, ranking, confidence, boosting
//! * [`eval`] — acc@k, per-bug metrics, Spearman correlation
//! * [`documents`] — persisted JSON document shapes

pub mod aggregate;
pub mod backend;
pub mod documents;
pub mod eval;
pub mod orchestrator;
pub mod prompt;
pub mod signature;
pub mod snapshot;
pub mod tools;

pub use aggregate::{rank, rank_with_boost, score_methods, FLReport};
pub use orchestrator::{run_campaign, run_once, RunConfig, RunRecord, RunStatus};
pub use signature::MethodSignature;
pub use snapshot::{load_snapshot, RepoSnapshot};
