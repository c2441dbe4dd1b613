//! Build-spec inference: proposal from evidence, rule and model review, and
//! the refinement loop between them.

mod docs;
mod dockerfile;
mod images;
pub mod project;
mod proposer;
mod refine;
mod review;
pub mod shell;
mod spec;

use thiserror::Error;

use crate::clients::ClientError;

pub use docs::{install_commands, snippet_commands, usage_commands};
pub use dockerfile::normalize_dockerfile;
pub use images::{eol_rule, BaseImages, EolRule, EOL_IMAGES};
pub use proposer::{
    declared_commands, detect_ecosystem, guess_entrypoint, primary_requirements, usage_entrypoint, Ecosystem,
    ModelProposer, Proposer, RuleProposer, DEFAULT_WORKDIR,
};
pub use refine::{
    refine_loop, DebateTranscript, FinalStatus, NoReviewer, RefineOutcome, RoundAction, RoundRecord,
    DEFAULT_MAX_ROUNDS,
};
pub use review::{
    apply_edits, entrypoint_target_ok, ModelReviewer, ReviewFinding, Reviewer, RuleReviewer, Severity, SpecEdit,
    EOL_POLICY_REF, FILE_INDEX_REF,
};
pub use spec::{BuildSpec, ImageRef};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid {field}: {msg}")]
    Invalid { field: String, msg: String },
}

#[derive(Debug, Error)]
pub enum ProposalError {
    #[error("no usable build evidence")]
    NoEvidence,
    #[error("could not determine an entrypoint")]
    NoEntrypoint,
    #[error("model output unusable after reprompt: {msg}")]
    Unparseable { msg: String },
    #[error("proposer client: {0}")]
    Client(ClientError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("reviewer client: {0}")]
    Client(ClientError),
    #[error("reviewer output unusable: {0}")]
    Unparseable(String),
}
