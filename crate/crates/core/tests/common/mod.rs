//! Brute-force oracles shared by the integration tests. Everything here works
//! on dense matrices or exhaustive enumeration and avoids the indexed code
//! paths it is compared against.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use kgaxiom::axiom::Axiom;
use kgaxiom::block::Layout;
use kgaxiom::kg::{KnowledgeGraph, Triple};
use rand::Rng;

pub type Dense = Vec<Vec<f64>>;

/// Dense `d × d` expansion of flat block parameters: scalars on the diagonal,
/// then one `[[a, −b], [b, a]]` block per rotation pair.
pub fn dense(layout: Layout, params: &[f64]) -> Dense {
    let d = layout.dim();
    let mut m = vec![vec![0.0; d]; d];
    for i in 0..layout.scalars {
        m[i][i] = params[i];
    }
    for j in 0..layout.blocks {
        let i = layout.scalars + 2 * j;
        let (a, b) = (params[i], params[i + 1]);
        m[i][i] = a;
        m[i][i + 1] = -b;
        m[i + 1][i] = b;
        m[i + 1][i + 1] = a;
    }
    m
}

pub fn identity(d: usize) -> Dense {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn frobenius(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)))
        .sum::<f64>()
        .sqrt()
}

/// `vsᵀ M vo`.
pub fn bilinear(m: &Dense, vs: &[f64], vo: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..m.len() {
        for j in 0..m.len() {
            total += vs[i] * m[i][j] * vo[j];
        }
    }
    total
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Random graph over `n_e` entities and `n_r` relations with roughly
/// `density · n_e² · n_r` triples, self-loops included.
pub fn random_kg(rng: &mut impl Rng, n_e: usize, n_r: usize, density: f64) -> KnowledgeGraph {
    let mut triples = Vec::new();
    for r in 0..n_r as u32 {
        for s in 0..n_e as u32 {
            for o in 0..n_e as u32 {
                if rng.gen_bool(density) {
                    triples.push(Triple::new(s, r, o));
                }
            }
        }
    }
    KnowledgeGraph::from_ids(n_e, n_r, triples).unwrap()
}

/// Every axiom of every type over `n_r` relations.
pub fn all_axioms(n_r: u32) -> Vec<Axiom> {
    let mut out = Vec::new();
    for r in 0..n_r {
        out.push(Axiom::Reflexive(r));
        out.push(Axiom::Symmetric(r));
        out.push(Axiom::Transitive(r));
        for r2 in 0..n_r {
            out.push(Axiom::Equivalent { body: r, head: r2 });
            out.push(Axiom::SubProperty { body: r, head: r2 });
            out.push(Axiom::Inverse { head: r, body: r2 });
            for r3 in 0..n_r {
                out.push(Axiom::Chain {
                    first: r,
                    second: r2,
                    head: r3,
                });
            }
        }
    }
    out
}

/// Calls `visit(head, body)` for every grounding of `axiom` over the full
/// entity cross product. Reflexive groundings range over entities that occur
/// with the relation.
pub fn for_each_grounding(kg: &KnowledgeGraph, axiom: &Axiom, mut visit: impl FnMut(Triple, &[Triple])) {
    let n = kg.num_entities() as u32;
    match *axiom {
        Axiom::Reflexive(r) => {
            for x in 0..n {
                let occurs = kg
                    .triples()
                    .iter()
                    .any(|t| t.relation == r && (t.subject == x || t.object == x));
                if occurs {
                    visit(Triple::new(x, r, x), &[]);
                }
            }
        }
        Axiom::Symmetric(r) => {
            for x in 0..n {
                for y in 0..n {
                    visit(Triple::new(y, r, x), &[Triple::new(x, r, y)]);
                }
            }
        }
        Axiom::Transitive(r) => {
            for x in 0..n {
                for y in 0..n {
                    for z in 0..n {
                        visit(Triple::new(x, r, z), &[Triple::new(x, r, y), Triple::new(y, r, z)]);
                    }
                }
            }
        }
        Axiom::Equivalent { body, head } | Axiom::SubProperty { body, head } => {
            for x in 0..n {
                for y in 0..n {
                    visit(Triple::new(x, head, y), &[Triple::new(x, body, y)]);
                }
            }
        }
        Axiom::Inverse { head, body } => {
            for x in 0..n {
                for y in 0..n {
                    visit(Triple::new(x, head, y), &[Triple::new(y, body, x)]);
                }
            }
        }
        Axiom::Chain { first, second, head } => {
            for x in 0..n {
                for y in 0..n {
                    for z in 0..n {
                        visit(
                            Triple::new(x, head, z),
                            &[Triple::new(x, first, y), Triple::new(y, second, z)],
                        );
                    }
                }
            }
        }
    }
}

/// Exhaustive answers for one axiom.
#[derive(Debug, PartialEq)]
pub struct Enumerated {
    /// Groundings whose body and head are all stored.
    pub support: usize,
    /// Triples of the head relation.
    pub head_size: usize,
    /// Groundings with a stored body and a missing head, sorted.
    pub missing: Vec<(Triple, Vec<Triple>)>,
    pub head_coverage: f64,
}

pub fn enumerate(kg: &KnowledgeGraph, axiom: &Axiom) -> Enumerated {
    let stored: HashSet<Triple> = kg.triples().iter().copied().collect();
    let mut support = 0;
    let mut missing = Vec::new();
    let mut covered = HashSet::new();
    for_each_grounding(kg, axiom, |head, body| {
        if !body.iter().all(|t| stored.contains(t)) {
            return;
        }
        if stored.contains(&head) {
            support += 1;
            covered.insert((head.subject, head.object));
        } else {
            missing.push((head, body.to_vec()));
        }
    });
    missing.sort();
    let h = axiom.head_relation();
    let head_size = kg.triples().iter().filter(|t| t.relation == h).count();
    Enumerated {
        support,
        head_size,
        missing,
        head_coverage: if head_size == 0 {
            f64::NAN
        } else {
            covered.len() as f64 / head_size as f64
        },
    }
}

/// Rank of `truth` among `candidates` sorted by descending score with ties
/// broken by ascending id, skipping `skip`.
pub fn sort_rank(scores: &[f64], truth: usize, skip: &BTreeSet<usize>) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).filter(|e| *e == truth || !skip.contains(e)).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.iter().position(|&e| e == truth).unwrap() + 1
}
