//! Scoring pooled axioms from relation matrices.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axiom::{Axiom, AxiomType, PoolEntry};
use crate::block::{frobenius_diff_params, multiply_params, BlockDiagMatrix};
use crate::embedding::EmbeddingModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredAxiom {
    pub axiom: Axiom,
    pub support: usize,
    pub head_size: usize,
    /// Frobenius distance between the two sides of the axiom's matrix equation.
    pub raw: f64,
    /// Per-type min-max normalized score in `[0, 1]`; higher is more plausible.
    pub score: f64,
}

/// `‖M1 − M2‖_F` for the matrix equation `M1 = M2` the axiom implies:
///
/// | axiom | M1 | M2 |
/// |---|---|---|
/// | reflexive(r) | M_r | I |
/// | symmetric(r) | M_r M_r | I |
/// | transitive(r) | M_r M_r | M_r |
/// | equivalent / subproperty(r1, r2) | M_r1 | M_r2 |
/// | inverse(r1, r2) | M_r1 M_r2 | I |
/// | chain(r1, r2, r) | M_r1 M_r2 | M_r |
pub fn score_axiom_raw(model: &EmbeddingModel, axiom: &Axiom) -> f64 {
    let layout = model.layout();
    let rel = |r| model.relation_row(r);
    let identity = || BlockDiagMatrix::identity(layout).params().to_vec();
    let (lhs, rhs) = match *axiom {
        Axiom::Reflexive(r) => (rel(r).to_vec(), identity()),
        Axiom::Symmetric(r) => (multiply_params(layout, rel(r), rel(r)), identity()),
        Axiom::Transitive(r) => (multiply_params(layout, rel(r), rel(r)), rel(r).to_vec()),
        Axiom::Equivalent { body, head } | Axiom::SubProperty { body, head } => {
            (rel(body).to_vec(), rel(head).to_vec())
        }
        Axiom::Inverse { head, body } => (multiply_params(layout, rel(head), rel(body)), identity()),
        Axiom::Chain { first, second, head } => (multiply_params(layout, rel(first), rel(second)), rel(head).to_vec()),
    };
    frobenius_diff_params(layout, &lhs, &rhs)
}

/// Per-type `(max − raw) / (max − min)`. A type whose raws are all equal
/// (including a single axiom) scores 0.5 throughout.
pub fn normalize_scores(pool: &[(PoolEntry, f64)]) -> Vec<ScoredAxiom> {
    let mut bounds: BTreeMap<AxiomType, (f64, f64)> = BTreeMap::new();
    for (entry, raw) in pool {
        let b = bounds
            .entry(entry.axiom.kind())
            .or_insert((f64::INFINITY, f64::NEG_INFINITY));
        b.0 = b.0.min(*raw);
        b.1 = b.1.max(*raw);
    }
    pool.iter()
        .map(|(entry, raw)| {
            let (min, max) = bounds[&entry.axiom.kind()];
            let score = if max > min { (max - raw) / (max - min) } else { 0.5 };
            ScoredAxiom {
                axiom: entry.axiom,
                support: entry.support,
                head_size: entry.head_size,
                raw: *raw,
                score,
            }
        })
        .collect()
}

/// Scores the pool against the current relation matrices, sorted by score
/// descending with ties broken by axiom order.
pub fn induce_axioms(model: &EmbeddingModel, pool: &[PoolEntry]) -> Vec<ScoredAxiom> {
    let raws: Vec<(PoolEntry, f64)> = pool
        .par_iter()
        .map(|entry| (*entry, score_axiom_raw(model, &entry.axiom)))
        .collect();
    let mut scored = normalize_scores(&raws);
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.axiom.cmp(&b.axiom)));
    scored
}
