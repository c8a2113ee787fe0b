//! OWL2 object-property axioms as rules over triples, support counting and
//! candidate pool generation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxiomType {
    Reflexive,
    Symmetric,
    Transitive,
    Equivalent,
    SubProperty,
    Inverse,
    #[serde(rename = "chain")]
    SubPropertyChain,
}

impl AxiomType {
    pub const ALL: [AxiomType; 7] = [
        AxiomType::Reflexive,
        AxiomType::Symmetric,
        AxiomType::Transitive,
        AxiomType::Equivalent,
        AxiomType::SubProperty,
        AxiomType::Inverse,
        AxiomType::SubPropertyChain,
    ];

    pub fn arity(self) -> usize {
        match self {
            AxiomType::Reflexive | AxiomType::Symmetric | AxiomType::Transitive => 1,
            AxiomType::Equivalent | AxiomType::SubProperty | AxiomType::Inverse => 2,
            AxiomType::SubPropertyChain => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AxiomType::Reflexive => "reflexive",
            AxiomType::Symmetric => "symmetric",
            AxiomType::Transitive => "transitive",
            AxiomType::Equivalent => "equivalent",
            AxiomType::SubProperty => "subproperty",
            AxiomType::Inverse => "inverse",
            AxiomType::SubPropertyChain => "chain",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for AxiomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete axiom. Field order is the relation-slot order used for sorting
/// and serialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axiom {
    /// `(x, r, x) ⇐ ⊤`
    Reflexive(RelationId),
    /// `(y, r, x) ⇐ (x, r, y)`
    Symmetric(RelationId),
    /// `(x, r, z) ⇐ (x, r, y), (y, r, z)`
    Transitive(RelationId),
    /// `(x, head, y) ⇐ (x, body, y)`
    Equivalent { body: RelationId, head: RelationId },
    /// `(x, head, y) ⇐ (x, body, y)`
    SubProperty { body: RelationId, head: RelationId },
    /// `(x, head, y) ⇐ (y, body, x)`
    Inverse { head: RelationId, body: RelationId },
    /// `(y0, head, y2) ⇐ (y0, first, y1), (y1, second, y2)`
    Chain {
        first: RelationId,
        second: RelationId,
        head: RelationId,
    },
}

impl Axiom {
    pub fn kind(&self) -> AxiomType {
        match self {
            Axiom::Reflexive(_) => AxiomType::Reflexive,
            Axiom::Symmetric(_) => AxiomType::Symmetric,
            Axiom::Transitive(_) => AxiomType::Transitive,
            Axiom::Equivalent { .. } => AxiomType::Equivalent,
            Axiom::SubProperty { .. } => AxiomType::SubProperty,
            Axiom::Inverse { .. } => AxiomType::Inverse,
            Axiom::Chain { .. } => AxiomType::SubPropertyChain,
        }
    }

    /// Relation ids in slot order.
    pub fn relations(&self) -> Vec<RelationId> {
        match *self {
            Axiom::Reflexive(r) | Axiom::Symmetric(r) | Axiom::Transitive(r) => vec![r],
            Axiom::Equivalent { body, head } | Axiom::SubProperty { body, head } => vec![body, head],
            Axiom::Inverse { head, body } => vec![head, body],
            Axiom::Chain { first, second, head } => vec![first, second, head],
        }
    }

    pub fn from_relations(kind: AxiomType, rels: &[RelationId]) -> Result<Self> {
        if rels.len() != kind.arity() {
            return Err(Error::Config(format!(
                "{kind} takes {} relations, got {}",
                kind.arity(),
                rels.len()
            )));
        }
        Ok(match kind {
            AxiomType::Reflexive => Axiom::Reflexive(rels[0]),
            AxiomType::Symmetric => Axiom::Symmetric(rels[0]),
            AxiomType::Transitive => Axiom::Transitive(rels[0]),
            AxiomType::Equivalent => Axiom::Equivalent {
                body: rels[0],
                head: rels[1],
            },
            AxiomType::SubProperty => Axiom::SubProperty {
                body: rels[0],
                head: rels[1],
            },
            AxiomType::Inverse => Axiom::Inverse {
                head: rels[0],
                body: rels[1],
            },
            AxiomType::SubPropertyChain => Axiom::Chain {
                first: rels[0],
                second: rels[1],
                head: rels[2],
            },
        })
    }

    /// Relation of the rule head.
    pub fn head_relation(&self) -> RelationId {
        match *self {
            Axiom::Reflexive(r) | Axiom::Symmetric(r) | Axiom::Transitive(r) => r,
            Axiom::Equivalent { head, .. }
            | Axiom::SubProperty { head, .. }
            | Axiom::Inverse { head, .. }
            | Axiom::Chain { head, .. } => head,
        }
    }

    /// Calls `visit(head_pair)` once per support, i.e. per satisfied grounding
    /// whose body and head are all stored in `kg`.
    fn for_each_support(&self, kg: &KnowledgeGraph, mut visit: impl FnMut(EntityId, EntityId)) {
        match *self {
            Axiom::Reflexive(r) => {
                for &(x, y) in kg.triples_of(r) {
                    if x == y {
                        visit(x, y);
                    }
                }
            }
            Axiom::Symmetric(r) => {
                for &(x, y) in kg.triples_of(r) {
                    if kg.has(y, r, x) {
                        visit(y, x);
                    }
                }
            }
            Axiom::Transitive(r) => {
                for &(x, y) in kg.triples_of(r) {
                    for z in kg.objects_of(y, r) {
                        if kg.has(x, r, z) {
                            visit(x, z);
                        }
                    }
                }
            }
            Axiom::Equivalent { body, head } | Axiom::SubProperty { body, head } => {
                for &(x, y) in kg.triples_of(body) {
                    if kg.has(x, head, y) {
                        visit(x, y);
                    }
                }
            }
            Axiom::Inverse { head, body } => {
                for &(y, x) in kg.triples_of(body) {
                    if kg.has(x, head, y) {
                        visit(x, y);
                    }
                }
            }
            Axiom::Chain { first, second, head } => {
                for &(y0, y1) in kg.triples_of(first) {
                    for y2 in kg.objects_of(y1, second) {
                        if kg.has(y0, head, y2) {
                            visit(y0, y2);
                        }
                    }
                }
            }
        }
    }

    /// `(n, N)`: number of supports and number of triples of the head relation.
    pub fn support_and_head(&self, kg: &KnowledgeGraph) -> (usize, usize) {
        let mut n = 0;
        self.for_each_support(kg, |_, _| n += 1);
        (n, kg.triples_of(self.head_relation()).len())
    }

    /// Distinct head pairs that take part in at least one support.
    pub fn supported_head_pairs(&self, kg: &KnowledgeGraph) -> HashSet<(EntityId, EntityId)> {
        let mut pairs = HashSet::new();
        self.for_each_support(kg, |x, y| {
            pairs.insert((x, y));
        });
        pairs
    }

    pub fn display(&self, relation_names: &[String]) -> String {
        let names: Vec<&str> = self
            .relations()
            .iter()
            .map(|&r| relation_names[r as usize].as_str())
            .collect();
        format!("{}({})", self.kind(), names.join(", "))
    }
}

/// Smallest `k` that satisfies `k > N − N(1−t)^{1/(pN)}` for every `N`.
///
/// The right-hand side increases monotonically in `N` towards `−ln(1−t)/p`,
/// so `k` is the ceiling of that limit.
pub fn compute_k(p: f64, t: f64) -> Result<usize> {
    if !(p > 0.0 && p <= 1.0) || !(t > 0.0 && t < 1.0) {
        return Err(Error::Config(format!(
            "need p in (0, 1] and t in (0, 1), got p={p} t={t}"
        )));
    }
    Ok((-(1.0 - t).ln() / p).ceil() as usize)
}

/// `f(N) = N − N(1−t)^{1/(pN)}`, evaluated without cancellation for large `N`.
pub fn k_bound(p: f64, t: f64, n: f64) -> f64 {
    -n * ((1.0 - t).ln() / (p * n)).exp_m1()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub min_probability: f64,
    pub include_probability: f64,
    /// Triples sampled per relation; `None` derives it from the two probabilities.
    pub k: Option<usize>,
    pub seed: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            min_probability: 0.5,
            include_probability: 0.95,
            k: None,
            seed: 0,
        }
    }
}

impl PoolConfig {
    pub fn sample_size(&self) -> Result<usize> {
        let derived = compute_k(self.min_probability, self.include_probability)?;
        match self.k {
            Some(0) => Err(Error::Config("k must be at least 1".into())),
            Some(k) => Ok(k),
            None => Ok(derived),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub axiom: Axiom,
    pub support: usize,
    pub head_size: usize,
}

/// Candidate axioms with at least two supports, in ascending axiom order.
///
/// Unary axioms are candidates for every relation. For each relation `r`, up
/// to `k` of its triples `(e', r, e'')` are sampled and the partial axioms with
/// head `r` are completed from relations that link `e'` and `e''`:
/// equivalence / sub-property from `(e', r', e'')`, inverse from
/// `(e'', r', e')`, and chains from paths `(e', r', y), (y, r'', e'')`.
pub fn generate_pool(kg: &KnowledgeGraph, config: &PoolConfig, rng: &mut Rng) -> Result<Vec<PoolEntry>> {
    if kg.is_empty() {
        return Err(Error::Empty("knowledge graph"));
    }
    let k = config.sample_size()?;
    let mut candidates = BTreeSet::new();
    for r in 0..kg.num_relations() as RelationId {
        let triples = kg.triples_of(r);
        if triples.is_empty() {
            continue;
        }
        candidates.insert(Axiom::Reflexive(r));
        candidates.insert(Axiom::Symmetric(r));
        candidates.insert(Axiom::Transitive(r));
        let picks = index::sample(rng, triples.len(), k.min(triples.len()));
        for i in picks.iter() {
            let (e1, e2) = triples[i];
            for r2 in kg.relations_between(e1, e2) {
                if r2 != r {
                    candidates.insert(Axiom::Equivalent { body: r2, head: r });
                    candidates.insert(Axiom::SubProperty { body: r2, head: r });
                }
            }
            for r2 in kg.relations_between(e2, e1) {
                candidates.insert(Axiom::Inverse { head: r, body: r2 });
            }
            // second-hop relations into e2, grouped by the intermediate entity
            let mut into_e2: BTreeMap<EntityId, Vec<RelationId>> = BTreeMap::new();
            for &(r2, y) in kg.incoming(e2) {
                into_e2.entry(y).or_default().push(r2);
            }
            for &(r1, y) in kg.outgoing(e1) {
                if let Some(seconds) = into_e2.get(&y) {
                    for &r2 in seconds {
                        candidates.insert(Axiom::Chain {
                            first: r1,
                            second: r2,
                            head: r,
                        });
                    }
                }
            }
        }
    }
    let pool = candidates
        .into_iter()
        .filter_map(|axiom| {
            let (support, head_size) = axiom.support_and_head(kg);
            (support >= 2).then_some(PoolEntry {
                axiom,
                support,
                head_size,
            })
        })
        .collect();
    Ok(pool)
}

/// Pool counts per axiom type, in [`AxiomType::ALL`] order.
pub fn count_by_type(pool: &[PoolEntry]) -> Vec<(AxiomType, usize)> {
    AxiomType::ALL
        .iter()
        .map(|&t| (t, pool.iter().filter(|e| e.axiom.kind() == t).count()))
        .collect()
}
