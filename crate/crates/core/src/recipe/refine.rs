use serde::{Deserialize, Serialize};

use super::proposer::Proposer;
use super::review::{apply_edits, ReviewFinding, Reviewer};
use super::spec::BuildSpec;
use super::{ProposalError, ReviewError};
use crate::analyzer::EvidenceBundle;

pub const DEFAULT_MAX_ROUNDS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundAction {
    Accepted,
    Edited,
    Regenerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStatus {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub spec_digest: String,
    pub findings: Vec<ReviewFinding>,
    pub action: RoundAction,
}

impl RoundRecord {
    pub fn blockers(&self) -> usize {
        self.findings.iter().filter(|f| f.is_blocker()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub repo_id: String,
    pub rounds: Vec<RoundRecord>,
    pub final_status: FinalStatus,
    /// Set when the reviewer could not be consulted in some round.
    #[serde(default)]
    pub unreviewed: bool,
    /// Round whose spec was returned.
    pub best_round: u32,
    /// The validation command is the entrypoint plus a benign flag rather
    /// than a command documented by the repository.
    #[serde(default)]
    pub low_confidence_validation: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DebateTranscript {
    pub fn rounds_used(&self) -> u32 {
        self.rounds.len() as u32
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub spec: BuildSpec,
    pub transcript: DebateTranscript,
}

/// Reviewer that never objects; refinement then reduces to proposal.
#[derive(Debug, Clone, Default)]
pub struct NoReviewer;

impl Reviewer for NoReviewer {
    fn review(&self, _: &BuildSpec, _: &EvidenceBundle) -> Result<Vec<ReviewFinding>, ReviewError> {
        Ok(Vec::new())
    }
}

/// Proposes, reviews and repairs until the spec is stable or `max_rounds`
/// reviews have happened. Returns the reviewed spec with the fewest blockers
/// (latest on ties).
pub fn refine_loop(
    evidence: &EvidenceBundle,
    proposer: &dyn Proposer,
    reviewer: &dyn Reviewer,
    max_rounds: u32,
) -> Result<RefineOutcome, ProposalError> {
    let max_rounds = max_rounds.max(1);
    let mut spec = proposer.propose(evidence)?;
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut unreviewed = false;
    let mut notes = Vec::new();
    let mut best: Option<(usize, u32, BuildSpec)> = None;
    let mut status = FinalStatus::Unstable;

    for round in 1..=max_rounds {
        let digest = spec.digest();
        let findings = match reviewer.review(&spec, evidence) {
            Ok(f) => f,
            Err(e) => {
                unreviewed = true;
                notes.push(format!("round {round}: reviewer unavailable: {e}"));
                Vec::new()
            }
        };
        let blockers = findings.iter().filter(|f| f.is_blocker()).count();
        if best.as_ref().map_or(true, |(b, _, _)| blockers <= *b) {
            best = Some((blockers, round, spec.clone()));
        }
        let repeated = rounds.last().is_some_and(|r| r.spec_digest == digest);
        if blockers == 0 || repeated {
            rounds.push(RoundRecord {
                round,
                spec_digest: digest,
                findings,
                action: RoundAction::Accepted,
            });
            status = FinalStatus::Stable;
            break;
        }
        let regenerate = findings.iter().any(|f| f.is_blocker() && f.needs_regeneration);
        let (next, action) = if regenerate {
            match proposer.regenerate(evidence, &spec, &findings) {
                Ok(s) => (Some(s), RoundAction::Regenerated),
                Err(e) => {
                    notes.push(format!("round {round}: regeneration failed: {e}"));
                    (None, RoundAction::Regenerated)
                }
            }
        } else {
            let edits: Vec<_> = findings
                .iter()
                .filter(|f| f.is_blocker())
                .filter_map(|f| f.proposed_edit.as_ref())
                .collect();
            let edited = apply_edits(&spec, &edits);
            match edited.validate() {
                Ok(()) => (Some(edited), RoundAction::Edited),
                Err(e) => {
                    notes.push(format!("round {round}: edits produced an invalid spec: {e}"));
                    (None, RoundAction::Edited)
                }
            }
        };
        rounds.push(RoundRecord {
            round,
            spec_digest: digest,
            findings,
            action,
        });
        match next {
            Some(s) => spec = s,
            None => break,
        }
    }

    let (_, best_round, best_spec) = best.expect("at least one round runs");
    let low_confidence_validation = best_spec.validate_cmd.len() == best_spec.entrypoint.len() + 1
        && best_spec.validate_cmd.starts_with(&best_spec.entrypoint)
        && best_spec.validate_cmd.last().is_some_and(|a| a == "--help");
    Ok(RefineOutcome {
        spec: best_spec,
        transcript: DebateTranscript {
            repo_id: evidence.repo_id.clone(),
            rounds,
            final_status: status,
            unreviewed,
            best_round,
            low_confidence_validation,
            notes,
        },
    })
}
