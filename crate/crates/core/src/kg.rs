//! Triple storage, vocabularies and adjacency indices.
//!
//! A [`KnowledgeGraph`] is immutable once built. Every index is derived from the
//! deduplicated triple list and sorted by id, so query results come back in
//! ascending order and two graphs built from the same set of triples answer every
//! query identically regardless of input order.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub const fn new(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        Self {
            subject,
            relation,
            object,
        }
    }
}

/// Bidirectional string <-> dense id mapping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Vocabulary `prefix0, prefix1, ...` of the given size.
    pub fn numbered(prefix: &str, len: usize) -> Self {
        let mut vocab = Self::new();
        for i in 0..len {
            vocab.get_or_insert(&format!("{prefix}{i}"));
        }
        vocab
    }

    pub fn get_or_insert(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Triples parsed from a file together with the vocabularies they index into.
#[derive(Clone, Debug)]
pub struct LoadedTriples {
    pub triples: Vec<Triple>,
    pub entities: Vocab,
    pub relations: Vocab,
}

/// Reads a `subject TAB relation TAB object` file.
///
/// Without `fixed`, unseen names extend fresh vocabularies. With `fixed`, the
/// supplied vocabularies are returned unchanged and any unseen name is an error.
pub fn load_triples(path: &Path, fixed: Option<(&Vocab, &Vocab)>) -> Result<LoadedTriples> {
    let file = File::open(path)?;
    parse_triples(BufReader::new(file), path, fixed)
}

pub fn parse_triples<R: BufRead>(reader: R, path: &Path, fixed: Option<(&Vocab, &Vocab)>) -> Result<LoadedTriples> {
    let (mut entities, mut relations) = match fixed {
        Some((e, r)) => (e.clone(), r.clone()),
        None => (Vocab::new(), Vocab::new()),
    };
    let mut triples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let triple = if fixed.is_some() {
            let lookup = |vocab: &Vocab, kind: &'static str, name: &str| {
                vocab.id(name).ok_or_else(|| Error::Vocabulary {
                    kind,
                    name: name.to_owned(),
                    path: path.to_path_buf(),
                    line: lineno,
                })
            };
            Triple::new(
                lookup(&entities, "entity", fields[0])?,
                lookup(&relations, "relation", fields[1])?,
                lookup(&entities, "entity", fields[2])?,
            )
        } else {
            let s = entities.get_or_insert(fields[0]);
            let r = relations.get_or_insert(fields[1]);
            let o = entities.get_or_insert(fields[2]);
            Triple::new(s, r, o)
        };
        triples.push(triple);
    }
    Ok(LoadedTriples {
        triples,
        entities,
        relations,
    })
}

pub fn write_triples(path: &Path, triples: &[Triple], entities: &Vocab, relations: &Vocab) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in triples {
        writeln!(
            out,
            "{}\t{}\t{}",
            entities.name(t.subject),
            relations.name(t.relation),
            entities.name(t.object)
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    triples: Vec<Triple>,
    by_relation: Vec<Vec<(EntityId, EntityId)>>,
    outgoing: Vec<Vec<(RelationId, EntityId)>>,
    incoming: Vec<Vec<(RelationId, EntityId)>>,
    relation_entities: Vec<Vec<EntityId>>,
    members: HashSet<Triple>,
}

impl KnowledgeGraph {
    /// Builds the graph and all indices. Duplicate triples are dropped, keeping
    /// the first occurrence.
    pub fn new(entities: Vocab, relations: Vocab, triples: Vec<Triple>) -> Result<Self> {
        let n_e = entities.len();
        let n_r = relations.len();
        let mut members = HashSet::with_capacity(triples.len());
        let mut kept = Vec::with_capacity(triples.len());
        for t in triples {
            if t.subject as usize >= n_e || t.object as usize >= n_e || t.relation as usize >= n_r {
                return Err(Error::IdOutOfRange(format!(
                    "{t:?} with {n_e} entities and {n_r} relations"
                )));
            }
            if members.insert(t) {
                kept.push(t);
            }
        }
        let mut by_relation = vec![Vec::new(); n_r];
        let mut outgoing = vec![Vec::new(); n_e];
        let mut incoming = vec![Vec::new(); n_e];
        for t in &kept {
            by_relation[t.relation as usize].push((t.subject, t.object));
            outgoing[t.subject as usize].push((t.relation, t.object));
            incoming[t.object as usize].push((t.relation, t.subject));
        }
        let mut relation_entities = Vec::with_capacity(n_r);
        for pairs in &mut by_relation {
            pairs.sort_unstable();
            let mut ents: Vec<EntityId> = pairs.iter().flat_map(|&(s, o)| [s, o]).collect();
            ents.sort_unstable();
            ents.dedup();
            relation_entities.push(ents);
        }
        outgoing.iter_mut().for_each(|v| v.sort_unstable());
        incoming.iter_mut().for_each(|v| v.sort_unstable());

        Ok(Self {
            entities,
            relations,
            triples: kept,
            by_relation,
            outgoing,
            incoming,
            relation_entities,
            members,
        })
    }

    /// Graph over anonymous `e{i}` / `r{i}` vocabularies.
    pub fn from_ids(num_entities: usize, num_relations: usize, triples: Vec<Triple>) -> Result<Self> {
        Self::new(
            Vocab::numbered("e", num_entities),
            Vocab::numbered("r", num_relations),
            triples,
        )
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Deduplicated triples in first-occurrence order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.members.contains(t)
    }

    pub fn has(&self, s: EntityId, r: RelationId, o: EntityId) -> bool {
        self.members.contains(&Triple::new(s, r, o))
    }

    /// `(subject, object)` pairs of relation `r`, sorted.
    pub fn triples_of(&self, r: RelationId) -> &[(EntityId, EntityId)] {
        self.by_relation.get(r as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `(relation, object)` pairs with subject `s`, sorted.
    pub fn outgoing(&self, s: EntityId) -> &[(RelationId, EntityId)] {
        self.outgoing.get(s as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `(relation, subject)` pairs with object `o`, sorted.
    pub fn incoming(&self, o: EntityId) -> &[(RelationId, EntityId)] {
        self.incoming.get(o as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn objects_of(&self, s: EntityId, r: RelationId) -> impl Iterator<Item = EntityId> + '_ {
        relation_range(self.outgoing(s), r).iter().map(|&(_, o)| o)
    }

    pub fn subjects_of(&self, r: RelationId, o: EntityId) -> impl Iterator<Item = EntityId> + '_ {
        relation_range(self.incoming(o), r).iter().map(|&(_, s)| s)
    }

    /// Relations `r` with `(e, r, e2)` stored, ascending.
    pub fn relations_between(&self, e: EntityId, e2: EntityId) -> Vec<RelationId> {
        self.outgoing(e)
            .iter()
            .filter(|&&(_, o)| o == e2)
            .map(|&(r, _)| r)
            .collect()
    }

    /// Entities appearing as subject or object of some triple of `r`, ascending.
    pub fn entity_occurs_with(&self, r: RelationId) -> &[EntityId] {
        self.relation_entities.get(r as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of triples in which `e` is subject or object (a self-loop counts twice).
    pub fn degree(&self, e: EntityId) -> usize {
        self.outgoing(e).len() + self.incoming(e).len()
    }
}

fn relation_range<T: Copy>(sorted: &[(RelationId, T)], r: RelationId) -> &[(RelationId, T)] {
    let lo = sorted.partition_point(|&(rel, _)| rel < r);
    let hi = sorted.partition_point(|&(rel, _)| rel <= r);
    &sorted[lo..hi]
}

/// Entity frequencies over a training graph and the min-max normalized sparsity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityTable {
    pub freq: Vec<u64>,
    pub freq_min: u64,
    pub freq_max: u64,
    pub sparsity: Vec<f64>,
}

impl SparsityTable {
    pub fn from_frequencies(freq: Vec<u64>) -> Result<Self> {
        let freq_min = *freq.iter().min().ok_or(Error::Empty("entity frequencies"))?;
        let freq_max = *freq.iter().max().ok_or(Error::Empty("entity frequencies"))?;
        let span = (freq_max - freq_min) as f64;
        let sparsity = freq
            .iter()
            .map(|&f| {
                if freq_max == freq_min {
                    0.0
                } else {
                    1.0 - (f - freq_min) as f64 / span
                }
            })
            .collect();
        Ok(Self {
            freq,
            freq_min,
            freq_max,
            sparsity,
        })
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    /// Entities with `sparsity > threshold`.
    pub fn sparse_entities(&self, threshold: f64) -> SparseEntities {
        SparseEntities {
            mask: self.sparsity.iter().map(|&s| s > threshold).collect(),
        }
    }
}

/// Frequencies count subject and object occurrences in `kg`.
pub fn entity_sparsity(kg: &KnowledgeGraph) -> Result<SparsityTable> {
    if kg.is_empty() {
        return Err(Error::Empty("knowledge graph"));
    }
    let mut freq = vec![0u64; kg.num_entities()];
    for t in kg.triples() {
        freq[t.subject as usize] += 1;
        freq[t.object as usize] += 1;
    }
    SparsityTable::from_frequencies(freq)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseEntities {
    mask: Vec<bool>,
}

impl SparseEntities {
    /// Treats every one of `n` entities as sparse.
    pub fn all(n: usize) -> Self {
        Self { mask: vec![true; n] }
    }

    pub fn contains(&self, e: EntityId) -> bool {
        self.mask.get(e as usize).copied().unwrap_or(false)
    }

    pub fn touches(&self, t: &Triple) -> bool {
        self.contains(t.subject) || self.contains(t.object)
    }

    pub fn iter(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i as EntityId)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Keeps the triples of `split` with a sparse subject or object, in order.
pub fn sparsify_eval_split(table: &SparsityTable, split: &[Triple], threshold: f64) -> Result<Vec<Triple>> {
    let sparse = table.sparse_entities(threshold);
    let mut kept = Vec::new();
    for t in split {
        if t.subject as usize >= table.len() || t.object as usize >= table.len() {
            return Err(Error::IdOutOfRange(format!(
                "{t:?} not in the training vocabulary of {} entities",
                table.len()
            )));
        }
        if sparse.touches(t) {
            kept.push(*t);
        }
    }
    Ok(kept)
}

/// A train/valid/test directory sharing the training vocabulary.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub train: KnowledgeGraph,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let train = load_triples(&dir.join("train.txt"), None)?;
        let raw_len = train.triples.len();
        let graph = KnowledgeGraph::new(train.entities, train.relations, train.triples)?;
        if graph.len() < raw_len {
            log::info!(
                "{}: dropped {} duplicate training triples",
                dir.display(),
                raw_len - graph.len()
            );
        }
        let fixed = Some((graph.entities(), graph.relations()));
        let valid = load_optional(&dir.join("valid.txt"), fixed)?;
        let test = load_optional(&dir.join("test.txt"), fixed)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            train: graph,
            valid,
            test,
        })
    }

    /// Membership over train, valid and test, used by filtered ranking.
    pub fn known_triples(&self) -> HashSet<Triple> {
        self.train
            .triples()
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .copied()
            .collect()
    }
}

fn load_optional(path: &Path, fixed: Option<(&Vocab, &Vocab)>) -> Result<Vec<Triple>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    Ok(load_triples(path, fixed)?.triples)
}
