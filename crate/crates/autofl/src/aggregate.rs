//! Turns repeated run records into the final suspiciousness report.
//!
//! Scoring: a run that predicted `n` methods gives each of them `1/n`, and
//! these shares are averaged over all `R` runs — erroneous runs distribute
//! nothing but still count in the denominator. Predicted methods are ranked
//! by score, ties broken by earliest appearance (run index, then position in
//! that run's answer). Methods covered by failing tests but never predicted
//! are appended afterwards, ordered by how many failing tests cover them,
//! then by how often the function-interaction logs mention them, then by
//! source order. Confidence is the highest score among covered methods.
//!
//! Optional boosting rescales each method's score by `Π (1 + boost_i)` over
//! the runs that predicted it, capped at 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{RunRecord, RunStatus};
use crate::signature::MethodSignature;
use crate::snapshot::{source_order, RepoSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Ranked because at least one run predicted it.
    Predicted,
    /// Appended because failing tests cover it but no run predicted it.
    Appended,
}

/// One row of the final ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMethod {
    pub signature: MethodSignature,
    pub score: f64,
    pub provenance: Provenance,
    /// Whether any failing test covers this method.
    pub covered: bool,
}

/// The aggregated fault-localization result for one bug.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FLReport {
    pub ranked: Vec<RankedMethod>,
    pub confidence: f64,
    pub run_ids: Vec<String>,
    pub boost_applied: bool,
}

impl FLReport {
    pub fn ranked_signatures(&self) -> Vec<MethodSignature> {
        self.ranked.iter().map(|r| r.signature.clone()).collect()
    }
}

/// Per-run boost values, aligned with the campaign's run order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostVector {
    pub source: BoostSource,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostSource {
    TestScore,
    AprScore,
    Other,
}

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("boost vector has {got} values but the campaign has {expected} runs")]
    BoostLength { expected: usize, got: usize },
    #[error("boost values must be finite and non-negative, got {0}")]
    BoostValue(f64),
}

/// Scores every predicted method: `score(m) = (1/R) Σ_k [m ∈ r_k] / |r_k|`.
/// Runs whose status is not ok contribute nothing but still count in `R`.
pub fn score_methods(records: &[RunRecord]) -> BTreeMap<MethodSignature, f64> {
    debug_assert!(!records.is_empty(), "scoring needs at least one run");
    if records.is_empty() {
        return BTreeMap::new();
    }
    let r = records.len() as f64;
    let mut mass: BTreeMap<MethodSignature, f64> = BTreeMap::new();
    for record in records {
        if record.status != RunStatus::Ok || record.predicted.is_empty() {
            continue;
        }
        let share = 1.0 / record.predicted.len() as f64;
        for signature in &record.predicted {
            *mass.entry(signature.clone()).or_insert(0.0) += share;
        }
    }
    mass.into_iter().map(|(sig, m)| (sig, m / r)).collect()
}

/// Applies the boost: `score_new(m) = min(1, score(m) × Π (1 + boost_i))`
/// with the product over ok runs whose prediction set contains `m`.
pub fn boost(
    records: &[RunRecord],
    base: &BTreeMap<MethodSignature, f64>,
    boosts: &BoostVector,
) -> Result<BTreeMap<MethodSignature, f64>, AggregateError> {
    if boosts.values.len() != records.len() {
        return Err(AggregateError::BoostLength {
            expected: records.len(),
            got: boosts.values.len(),
        });
    }
    if let Some(bad) = boosts
        .values
        .iter()
        .find(|v| !v.is_finite() || **v < 0.0)
    {
        return Err(AggregateError::BoostValue(*bad));
    }
    let mut out = BTreeMap::new();
    for (signature, score) in base {
        let mut factor = 1.0;
        for (record, value) in records.iter().zip(&boosts.values) {
            if record.status == RunStatus::Ok && record.predicted.contains(signature) {
                factor *= 1.0 + value;
            }
        }
        out.insert(signature.clone(), (score * factor).min(1.0));
    }
    Ok(out)
}

/// Builds the full report from a campaign's records.
pub fn rank(records: &[RunRecord], snapshot: &RepoSnapshot) -> FLReport {
    rank_with_boost(records, snapshot, None).expect("ranking without boost cannot fail")
}

/// Like [`rank`], optionally boosting scores before ordering.
pub fn rank_with_boost(
    records: &[RunRecord],
    snapshot: &RepoSnapshot,
    boosts: Option<&BoostVector>,
) -> Result<FLReport, AggregateError> {
    let base = score_methods(records);
    let scores = match boosts {
        Some(b) => boost(records, &base, b)?,
        None => base,
    };

    // Earliest appearance of each predicted method: (run index, position in
    // that run's answer). Decides score ties among predicted methods.
    let mut first_seen: BTreeMap<&MethodSignature, (usize, usize)> = BTreeMap::new();
    for (run_index, record) in records.iter().enumerate() {
        if record.status != RunStatus::Ok {
            continue;
        }
        for (position, signature) in record.predicted.iter().enumerate() {
            first_seen.entry(signature).or_insert((run_index, position));
        }
    }

    let mut predicted: Vec<(&MethodSignature, f64)> =
        scores.iter().map(|(sig, score)| (sig, *score)).collect();
    predicted.sort_by(|(sig_a, score_a), (sig_b, score_b)| {
        score_b
            .partial_cmp(score_a)
            .expect("scores are never NaN")
            .then_with(|| first_seen[sig_a].cmp(&first_seen[sig_b]))
    });

    // Covered-but-never-predicted methods go to the tail: most covering
    // failing tests first, then most often mentioned in function logs, then
    // source order.
    let mention_count = |sig: &MethodSignature| -> usize {
        records
            .iter()
            .flat_map(|r| &r.function_log)
            .filter(|entry| entry.mentioned_signatures.contains(sig))
            .count()
    };
    let mut appended: Vec<&crate::snapshot::MethodRecord> = snapshot
        .methods()
        .iter()
        .filter(|m| m.is_covered() && !scores.contains_key(&m.signature))
        .collect();
    appended.sort_by(|a, b| {
        b.is_covered_by
            .len()
            .cmp(&a.is_covered_by.len())
            .then_with(|| mention_count(&b.signature).cmp(&mention_count(&a.signature)))
            .then_with(|| source_order(a, b))
    });

    let mut ranked: Vec<RankedMethod> = predicted
        .into_iter()
        .map(|(sig, score)| RankedMethod {
            signature: sig.clone(),
            score,
            provenance: Provenance::Predicted,
            covered: snapshot.method(sig).is_some_and(|m| m.is_covered()),
        })
        .collect();
    ranked.extend(appended.into_iter().map(|m| RankedMethod {
        signature: m.signature.clone(),
        score: 0.0,
        provenance: Provenance::Appended,
        covered: true,
    }));

    let confidence = confidence_of(&ranked);
    Ok(FLReport {
        ranked,
        confidence,
        run_ids: records.iter().map(|r| r.run_id.clone()).collect(),
        boost_applied: boosts.is_some(),
    })
}

/// Highest score among methods covered by failing tests; 0 when no covered
/// method scored.
pub fn confidence(report: &FLReport, snapshot: &RepoSnapshot) -> f64 {
    report
        .ranked
        .iter()
        .filter(|entry| {
            snapshot
                .method(&entry.signature)
                .is_some_and(|m| m.is_covered())
        })
        .map(|entry| entry.score)
        .fold(0.0, f64::max)
}

fn confidence_of(ranked: &[RankedMethod]) -> f64 {
    ranked
        .iter()
        .filter(|entry| entry.covered)
        .map(|entry| entry.score)
        .fold(0.0, f64::max)
}
