//! Link-prediction ranking metrics and rule-quality metrics.
//!
//! Ranks are pessimistic: a candidate with a score equal to the true entity's
//! outranks it when its id is smaller. MRR and Hit@n aggregate the 2·|test|
//! per-side ranks; the reciprocal of each triple's averaged rank is reported
//! separately as `mrr_mean_rank_*`.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axiom::{Axiom, AxiomType};
use crate::block;
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::induction::ScoredAxiom;
use crate::kg::{Dataset, EntityId, KnowledgeGraph, Triple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Subject,
    Object,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankMode {
    Raw,
    Filter,
}

/// What ranking needs besides the model: the known-true triples for filtering
/// and the training frequency of each entity for bucketed breakdowns.
#[derive(Clone, Debug)]
pub struct EvalContext {
    pub known: HashSet<Triple>,
    pub train_freq: Vec<u64>,
}

impl EvalContext {
    pub fn from_dataset(data: &Dataset) -> Self {
        let mut train_freq = vec![0u64; data.train.num_entities()];
        for t in data.train.triples() {
            train_freq[t.subject as usize] += 1;
            train_freq[t.object as usize] += 1;
        }
        Self {
            known: data.known_triples(),
            train_freq,
        }
    }
}

/// Logits of `t` with each entity substituted on `side`.
fn candidate_logits(model: &EmbeddingModel, t: &Triple, side: Side) -> Vec<f64> {
    let layout = model.layout();
    let rel = model.relation_row(t.relation);
    let query = match side {
        Side::Subject => block::apply_right(layout, rel, model.entity(t.object)),
        Side::Object => block::apply_left(layout, rel, model.entity(t.subject)),
    };
    (0..model.num_entities() as EntityId)
        .map(|e| model.entity(e).iter().zip(&query).map(|(a, b)| a * b).sum())
        .collect()
}

fn substitute(t: &Triple, side: Side, e: EntityId) -> Triple {
    match side {
        Side::Subject => Triple::new(e, t.relation, t.object),
        Side::Object => Triple::new(t.subject, t.relation, e),
    }
}

fn truth_entity(t: &Triple, side: Side) -> EntityId {
    match side {
        Side::Subject => t.subject,
        Side::Object => t.object,
    }
}

/// `(raw, filtered)` rank of the true entity from one set of candidate scores.
fn ranks_from_logits(logits: &[f64], known: &HashSet<Triple>, t: &Triple, side: Side) -> (usize, usize) {
    let truth = truth_entity(t, side);
    let target = logits[truth as usize];
    let mut raw = 1;
    let mut filtered = 1;
    for (e, &x) in logits.iter().enumerate() {
        let e = e as EntityId;
        if e == truth {
            continue;
        }
        if x > target || (x == target && e < truth) {
            raw += 1;
            if !known.contains(&substitute(t, side, e)) {
                filtered += 1;
            }
        }
    }
    (raw, filtered)
}

pub fn rank_entity_side(
    model: &EmbeddingModel,
    known: &HashSet<Triple>,
    t: &Triple,
    side: Side,
    mode: RankMode,
) -> usize {
    let logits = candidate_logits(model, t, side);
    let (raw, filtered) = ranks_from_logits(&logits, known, t, side);
    match mode {
        RankMode::Raw => raw,
        RankMode::Filter => filtered,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub triple: Triple,
    pub subject_rank: usize,
    pub object_rank: usize,
    pub mean_rank: f64,
}

impl RankResult {
    pub fn new(triple: Triple, subject_rank: usize, object_rank: usize) -> Self {
        Self {
            triple,
            subject_rank,
            object_rank,
            mean_rank: (subject_rank + object_rank) as f64 / 2.0,
        }
    }
}

/// Raw and filtered ranks for both sides of `t`.
pub fn rank_triple(model: &EmbeddingModel, known: &HashSet<Triple>, t: &Triple) -> (RankResult, RankResult) {
    let subj = ranks_from_logits(&candidate_logits(model, t, Side::Subject), known, t, Side::Subject);
    let obj = ranks_from_logits(&candidate_logits(model, t, Side::Object), known, t, Side::Object);
    (RankResult::new(*t, subj.0, obj.0), RankResult::new(*t, subj.1, obj.1))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Hits {
    pub at1: f64,
    pub at3: f64,
    pub at10: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    /// Training-frequency range `[lo, hi)` of the predicted entity.
    pub lo: u64,
    pub hi: u64,
    pub count: usize,
    pub mrr_raw: f64,
    pub mrr_filter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub triples: usize,
    pub mrr_raw: f64,
    pub mrr_filter: f64,
    pub mrr_mean_rank_raw: f64,
    pub mrr_mean_rank_filter: f64,
    pub hits_raw: Hits,
    pub hits_filter: Hits,
    pub buckets: Vec<BucketMetrics>,
}

/// Bucket `[0,1)`, `[1,2)`, `[2,4)`, … containing `freq`.
pub fn frequency_bucket(freq: u64) -> (u64, u64) {
    if freq == 0 {
        return (0, 1);
    }
    let lo = 1u64 << (63 - freq.leading_zeros());
    (lo, lo.saturating_mul(2))
}

/// Aggregates per-triple ranks. Each side is one rank observation, bucketed by
/// the training frequency of the entity being predicted.
pub fn aggregate(raw: &[RankResult], filtered: &[RankResult], train_freq: &[u64]) -> Result<MetricsReport> {
    if raw.is_empty() || raw.len() != filtered.len() {
        return Err(Error::Empty("test triples"));
    }
    let n_obs = 2.0 * raw.len() as f64;
    let mrr = |rs: &[RankResult]| {
        rs.iter()
            .map(|r| 1.0 / r.subject_rank as f64 + 1.0 / r.object_rank as f64)
            .sum::<f64>()
            / n_obs
    };
    let mrr_mean = |rs: &[RankResult]| rs.iter().map(|r| 1.0 / r.mean_rank).sum::<f64>() / rs.len() as f64;
    let hits = |rs: &[RankResult]| {
        let frac = |n: usize| {
            rs.iter()
                .map(|r| (r.subject_rank <= n) as usize + (r.object_rank <= n) as usize)
                .sum::<usize>() as f64
                / n_obs
        };
        Hits {
            at1: frac(1),
            at3: frac(3),
            at10: frac(10),
        }
    };

    let mut buckets: Vec<BucketMetrics> = Vec::new();
    for (r, f) in raw.iter().zip(filtered) {
        for (entity, raw_rank, filter_rank) in [
            (r.triple.subject, r.subject_rank, f.subject_rank),
            (r.triple.object, r.object_rank, f.object_rank),
        ] {
            let freq = train_freq.get(entity as usize).copied().unwrap_or(0);
            let (lo, hi) = frequency_bucket(freq);
            let idx = match buckets.iter().position(|b| b.lo == lo) {
                Some(i) => i,
                None => {
                    buckets.push(BucketMetrics {
                        lo,
                        hi,
                        count: 0,
                        mrr_raw: 0.0,
                        mrr_filter: 0.0,
                    });
                    buckets.len() - 1
                }
            };
            let b = &mut buckets[idx];
            b.count += 1;
            b.mrr_raw += 1.0 / raw_rank as f64;
            b.mrr_filter += 1.0 / filter_rank as f64;
        }
    }
    buckets.sort_by_key(|b| b.lo);
    for b in &mut buckets {
        b.mrr_raw /= b.count as f64;
        b.mrr_filter /= b.count as f64;
    }

    Ok(MetricsReport {
        triples: raw.len(),
        mrr_raw: mrr(raw),
        mrr_filter: mrr(filtered),
        mrr_mean_rank_raw: mrr_mean(raw),
        mrr_mean_rank_filter: mrr_mean(filtered),
        hits_raw: hits(raw),
        hits_filter: hits(filtered),
        buckets,
    })
}

pub fn link_prediction(model: &EmbeddingModel, ctx: &EvalContext, test: &[Triple]) -> Result<MetricsReport> {
    link_prediction_with_axioms(model, ctx, test, &HashSet::new())
}

/// Like [`link_prediction`], but a test triple the axioms inferred is ranked
/// first on both sides.
pub fn link_prediction_with_axioms(
    model: &EmbeddingModel,
    ctx: &EvalContext,
    test: &[Triple],
    injected: &HashSet<Triple>,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Empty("test triples"));
    }
    let ranks: Vec<(RankResult, RankResult)> = test
        .par_iter()
        .map(|t| {
            if injected.contains(t) {
                (RankResult::new(*t, 1, 1), RankResult::new(*t, 1, 1))
            } else {
                rank_triple(model, &ctx.known, t)
            }
        })
        .collect();
    let (raw, filtered): (Vec<_>, Vec<_>) = ranks.into_iter().unzip();
    aggregate(&raw, &filtered, &ctx.train_freq)
}

/// Fraction of head-relation pairs that take part in a support of `axiom`.
pub fn head_coverage(kg: &KnowledgeGraph, axiom: &Axiom) -> Result<f64> {
    let heads = kg.triples_of(axiom.head_relation()).len();
    if heads == 0 {
        return Err(Error::Empty("head relation"));
    }
    Ok(axiom.supported_head_pairs(kg).len() as f64 / heads as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// Fraction of the pool scoring above the threshold.
    pub selected: f64,
    /// Fraction of high-quality axioms scoring above the threshold.
    pub hq_covered: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub kind: AxiomType,
    pub pool: usize,
    pub high_quality: usize,
    pub above_threshold: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub hc_threshold: f64,
    pub pool_size: usize,
    pub high_quality: usize,
    pub per_type: Vec<TypeSummary>,
    pub curve: Vec<CurvePoint>,
}

/// `0.0, 0.05, …, 1.0`.
pub fn default_score_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Head coverage of each scored axiom, in input order. An axiom whose head
/// relation is empty gets 0.
pub fn head_coverages(kg: &KnowledgeGraph, scored: &[ScoredAxiom]) -> Vec<f64> {
    scored
        .par_iter()
        .map(|s| head_coverage(kg, &s.axiom).unwrap_or(0.0))
        .collect()
}

/// High-quality counts (`HC > hc_threshold`) and, per grid threshold, the
/// selected fraction of the pool and the covered fraction of high-quality axioms.
/// `score_threshold` feeds the per-type `above_threshold` counts.
pub fn summarize_rules(
    scored: &[ScoredAxiom],
    coverages: &[f64],
    hc_threshold: f64,
    score_threshold: f64,
    grid: &[f64],
) -> RuleReport {
    let hq: Vec<bool> = coverages.iter().map(|&hc| hc > hc_threshold).collect();
    let hq_total = hq.iter().filter(|&&h| h).count();
    let pool = scored.len();
    let curve = grid
        .iter()
        .map(|&theta| {
            let selected = scored.iter().filter(|s| s.score > theta).count();
            let covered = scored.iter().zip(&hq).filter(|(s, &h)| h && s.score > theta).count();
            CurvePoint {
                threshold: theta,
                selected: ratio(selected, pool),
                hq_covered: ratio(covered, hq_total),
            }
        })
        .collect();
    let per_type = AxiomType::ALL
        .iter()
        .map(|&kind| {
            let of_kind = || scored.iter().zip(&hq).filter(move |(s, _)| s.axiom.kind() == kind);
            TypeSummary {
                kind,
                pool: of_kind().count(),
                high_quality: of_kind().filter(|(_, &h)| h).count(),
                above_threshold: of_kind().filter(|(s, _)| s.score > score_threshold).count(),
            }
        })
        .collect();
    RuleReport {
        hc_threshold,
        pool_size: pool,
        high_quality: hq_total,
        per_type,
        curve,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
