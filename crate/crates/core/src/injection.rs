//! Grounding axioms over the graph and labeling inferred triples with
//! product t-norm truth values.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axiom::{Axiom, AxiomType};
use crate::error::{Error, Result};
use crate::induction::ScoredAxiom;
use crate::kg::{KnowledgeGraph, SparseEntities, Triple};

/// Propositional formula over truth values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Atom(f64),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn atom(v: f64) -> Self {
        Expr::Atom(v)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Expr) -> Self {
        Expr::Not(Box::new(a))
    }

    pub fn and(a: Expr, b: Expr) -> Self {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Self {
        Expr::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Expr, b: Expr) -> Self {
        Expr::Implies(Box::new(a), Box::new(b))
    }

    /// Conjunction of all atoms; `⊤` (truth 1) when empty.
    pub fn conjunction(truths: &[f64]) -> Self {
        truths
            .iter()
            .map(|&t| Expr::Atom(t))
            .reduce(Expr::and)
            .unwrap_or(Expr::Atom(1.0))
    }

    /// Product t-norm semantics: `a∧b = ab`, `a∨b = a+b−ab`, `¬a = 1−a`,
    /// `a⇒b = ¬a∨b`.
    pub fn truth(&self) -> f64 {
        match self {
            Expr::Atom(v) => *v,
            Expr::Not(a) => 1.0 - a.truth(),
            Expr::And(a, b) => a.truth() * b.truth(),
            Expr::Or(a, b) => {
                let (x, y) = (a.truth(), b.truth());
                x + y - x * y
            }
            Expr::Implies(a, b) => Expr::or(Expr::not((**a).clone()), (**b).clone()).truth(),
        }
    }
}

/// Solves `π(body₁ ∧ … ∧ bodyₙ ⇒ head) = grounding` for `π(head)`, clamped to
/// `[0, 1]`. With all body truths 1 the result is `grounding` exactly.
pub fn solve_head_truth(body: &[f64], grounding: f64) -> Result<f64> {
    let product: f64 = body.iter().product();
    if product == 0.0 {
        return Err(Error::UndefinedHead);
    }
    Ok(((grounding - (1.0 - product)) / product).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grounding {
    pub head: Triple,
    pub body: Vec<Triple>,
    pub axiom: Axiom,
}

/// Groundings of `axiom` with every body triple stored and the head missing.
///
/// Bodies range over the stored triples only. Reflexive heads are restricted
/// to entities that occur with the relation.
pub fn ground_axiom(kg: &KnowledgeGraph, axiom: &Axiom) -> Vec<Grounding> {
    let mut out = Vec::new();
    let mut emit = |head: Triple, body: Vec<Triple>| {
        if !kg.contains(&head) {
            out.push(Grounding {
                head,
                body,
                axiom: *axiom,
            });
        }
    };
    match *axiom {
        Axiom::Reflexive(r) => {
            for &x in kg.entity_occurs_with(r) {
                emit(Triple::new(x, r, x), Vec::new());
            }
        }
        Axiom::Symmetric(r) => {
            for &(x, y) in kg.triples_of(r) {
                emit(Triple::new(y, r, x), vec![Triple::new(x, r, y)]);
            }
        }
        Axiom::Transitive(r) => {
            for &(x, y) in kg.triples_of(r) {
                for z in kg.objects_of(y, r) {
                    emit(Triple::new(x, r, z), vec![Triple::new(x, r, y), Triple::new(y, r, z)]);
                }
            }
        }
        Axiom::Equivalent { body, head } | Axiom::SubProperty { body, head } => {
            for &(x, y) in kg.triples_of(body) {
                emit(Triple::new(x, head, y), vec![Triple::new(x, body, y)]);
            }
        }
        Axiom::Inverse { head, body } => {
            for &(y, x) in kg.triples_of(body) {
                emit(Triple::new(x, head, y), vec![Triple::new(y, body, x)]);
            }
        }
        Axiom::Chain { first, second, head } => {
            for &(y0, y1) in kg.triples_of(first) {
                for y2 in kg.objects_of(y1, second) {
                    emit(
                        Triple::new(y0, head, y2),
                        vec![Triple::new(y0, first, y1), Triple::new(y1, second, y2)],
                    );
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    /// Only axioms scoring strictly above this are grounded.
    pub score_threshold: f64,
    /// Axioms inferring more distinct heads than this are skipped.
    pub max_inferred: usize,
    pub sparsity_threshold: f64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.9,
            max_inferred: 1000,
            sparsity_threshold: 0.995,
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score_threshold) || !(0.0..=1.0).contains(&self.sparsity_threshold) {
            return Err(Error::Config("thresholds must lie in [0, 1]".into()));
        }
        if self.max_inferred == 0 {
            return Err(Error::Config("max_inferred must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferredTriple {
    pub triple: Triple,
    pub truth: f64,
    /// Contributing axioms, highest score first.
    pub sources: Vec<Axiom>,
}

impl InferredTriple {
    pub fn best_source(&self) -> AxiomType {
        self.sources[0].kind()
    }
}

/// Infers labeled triples touching `sparse` from the axioms scoring above the
/// threshold. Duplicate heads across axioms keep the highest truth. Output is
/// sorted by triple.
pub fn inject_triples(
    kg: &KnowledgeGraph,
    scored: &[ScoredAxiom],
    sparse: &SparseEntities,
    config: &InjectionConfig,
) -> Vec<InferredTriple> {
    let per_axiom: Vec<(ScoredAxiom, Vec<(Triple, f64)>)> = scored
        .par_iter()
        .filter(|s| s.score > config.score_threshold)
        .filter_map(|s| {
            let groundings = ground_axiom(kg, &s.axiom);
            let mut heads: BTreeMap<Triple, f64> = BTreeMap::new();
            for g in &groundings {
                let body = vec![1.0; g.body.len()];
                let truth = solve_head_truth(&body, s.score).expect("unit body truths");
                let slot = heads.entry(g.head).or_insert(truth);
                *slot = slot.max(truth);
            }
            if heads.len() > config.max_inferred {
                return None;
            }
            let kept = heads.into_iter().filter(|(t, _)| sparse.touches(t)).collect();
            Some((*s, kept))
        })
        .collect();

    let mut merged: BTreeMap<Triple, Vec<(f64, Axiom)>> = BTreeMap::new();
    for (s, heads) in per_axiom {
        for (t, truth) in heads {
            merged.entry(t).or_default().push((truth, s.axiom));
        }
    }
    merged
        .into_iter()
        .map(|(triple, mut sources)| {
            sources.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            InferredTriple {
                triple,
                truth: sources[0].0,
                sources: sources.into_iter().map(|(_, a)| a).collect(),
            }
        })
        .collect()
}

/// Counts by the type of each triple's best source, in [`AxiomType::ALL`] order.
pub fn count_by_source_type(injected: &[InferredTriple]) -> Vec<(AxiomType, usize)> {
    AxiomType::ALL
        .iter()
        .map(|&t| (t, injected.iter().filter(|i| i.best_source() == t).count()))
        .collect()
}

/// `subject relation object truth source_count`, one triple per line.
pub fn write_injected_tsv(path: &Path, kg: &KnowledgeGraph, injected: &[InferredTriple]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for inf in injected {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            kg.entities().name(inf.triple.subject),
            kg.relations().name(inf.triple.relation),
            kg.entities().name(inf.triple.object),
            inf.truth,
            inf.sources.len()
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an injected-triple dump back as `(triple, truth)` pairs.
pub fn read_injected_tsv(path: &Path, kg: &KnowledgeGraph) -> Result<Vec<(Triple, f64)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
        }
        let lookup = |kind: &'static str, id: Option<u32>, name: &str| {
            id.ok_or_else(|| Error::Vocabulary {
                kind,
                name: name.to_owned(),
                path: path.to_path_buf(),
                line: idx + 1,
            })
        };
        let s = lookup("entity", kg.entities().id(fields[0]), fields[0])?;
        let r = lookup("relation", kg.relations().id(fields[1]), fields[1])?;
        let o = lookup("entity", kg.entities().id(fields[2]), fields[2])?;
        let truth: f64 = fields[3]
            .parse()
            .map_err(|e| parse_err(format!("bad truth value: {e}")))?;
        rows.push((Triple::new(s, r, o), truth));
    }
    Ok(rows)
}

/// Distinct heads per axiom, used by audits and tests.
pub fn inferred_heads(kg: &KnowledgeGraph, axiom: &Axiom) -> BTreeSet<Triple> {
    ground_axiom(kg, axiom).into_iter().map(|g| g.head).collect()
}
