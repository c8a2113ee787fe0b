//! Synthetic graphs with planted axioms and a sparse held-out split.
//!
//! The generated graph has a dense core and a fringe of entities that appear in
//! a single training triple each. Relation `base_inv` is the exact inverse of
//! `base`, and `composed` is the composition of `first` then `second`, both over
//! the core. Every fringe entity contributes one training triple whose
//! inferable counterpart (by the inverse or the chain axiom) is held out into
//! valid/test. Noise relations add random edges so that other candidate
//! axioms compete in the pool. The second noise relation reverses part of the
//! first one's edges, which yields an imperfect inverse candidate.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::axiom::Axiom;
use crate::error::Result;
use crate::kg::{write_triples, KnowledgeGraph, Triple, Vocab};
use crate::rng::{stream, Phase};

pub const BASE: u32 = 0;
pub const BASE_INV: u32 = 1;
pub const FIRST: u32 = 2;
pub const SECOND: u32 = 3;
pub const COMPOSED: u32 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub core_entities: usize,
    pub fringe_entities: usize,
    pub noise_relations: usize,
    pub noise_edges: usize,
    /// Share of the first noise relation's edges that the second one reverses.
    pub reversed_noise_fraction: f64,
    /// Fringe entities whose held-out triple goes to valid rather than test.
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            core_entities: 160,
            fringe_entities: 40,
            noise_relations: 3,
            noise_edges: 200,
            reversed_noise_fraction: 0.2,
            valid_fraction: 0.25,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub entities: Vocab,
    pub relations: Vocab,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub planted: Vec<Axiom>,
}

impl SynthDataset {
    pub fn train_graph(&self) -> Result<KnowledgeGraph> {
        KnowledgeGraph::new(self.entities.clone(), self.relations.clone(), self.train.clone())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_triples(&dir.join("train.txt"), &self.train, &self.entities, &self.relations)?;
        write_triples(&dir.join("valid.txt"), &self.valid, &self.entities, &self.relations)?;
        write_triples(&dir.join("test.txt"), &self.test, &self.entities, &self.relations)?;
        Ok(())
    }
}

pub fn generate(config: &SynthConfig) -> SynthDataset {
    let mut rng = stream(config.seed, 0, Phase::Synth);
    let core = config.core_entities as u32;
    let n_e = core as usize + config.fringe_entities;
    let entities = Vocab::numbered("e", n_e);
    let mut relations = Vocab::new();
    for name in ["base", "base_inv", "first", "second", "composed"] {
        relations.get_or_insert(name);
    }
    for i in 0..config.noise_relations {
        relations.get_or_insert(&format!("noise{i}"));
    }

    let random_map = |rng: &mut crate::rng::Rng| -> Vec<u32> {
        (0..core)
            .map(|x| loop {
                let y = rng.gen_range(0..core);
                if y != x {
                    break y;
                }
            })
            .collect()
    };
    let base = random_map(&mut rng);
    let first = random_map(&mut rng);
    let second = random_map(&mut rng);

    let mut train = BTreeSet::new();
    for x in 0..core {
        let y = base[x as usize];
        train.insert(Triple::new(x, BASE, y));
        train.insert(Triple::new(y, BASE_INV, x));
        let y1 = first[x as usize];
        train.insert(Triple::new(x, FIRST, y1));
        train.insert(Triple::new(x, SECOND, second[x as usize]));
        train.insert(Triple::new(x, COMPOSED, second[y1 as usize]));
    }
    for n in 0..config.noise_relations as u32 {
        let r = COMPOSED + 1 + n;
        let mut added = 0;
        if n == 1 {
            let first_noise: Vec<Triple> = train.iter().filter(|t| t.relation == r - 1).copied().collect();
            let keep = (first_noise.len() as f64 * config.reversed_noise_fraction).round() as usize;
            for t in first_noise.choose_multiple(&mut rng, keep) {
                if train.insert(Triple::new(t.object, r, t.subject)) {
                    added += 1;
                }
            }
        }
        while added < config.noise_edges {
            let s = rng.gen_range(0..core);
            let o = rng.gen_range(0..core);
            if s != o && train.insert(Triple::new(s, r, o)) {
                added += 1;
            }
        }
    }

    let mut held_out = Vec::new();
    for (i, fringe) in (core..n_e as u32).enumerate() {
        let y = rng.gen_range(0..core);
        if i % 2 == 0 {
            train.insert(Triple::new(fringe, BASE, y));
            held_out.push(Triple::new(y, BASE_INV, fringe));
        } else {
            train.insert(Triple::new(fringe, FIRST, y));
            held_out.push(Triple::new(fringe, COMPOSED, second[y as usize]));
        }
    }
    held_out.shuffle(&mut rng);
    let n_valid = (held_out.len() as f64 * config.valid_fraction).round() as usize;
    let test = held_out.split_off(n_valid);
    let valid = held_out;

    let mut train: Vec<Triple> = train.into_iter().collect();
    train.shuffle(&mut rng);

    SynthDataset {
        entities,
        relations,
        train,
        valid,
        test,
        planted: vec![
            Axiom::Inverse {
                head: BASE_INV,
                body: BASE,
            },
            Axiom::Inverse {
                head: BASE,
                body: BASE_INV,
            },
            Axiom::Chain {
                first: FIRST,
                second: SECOND,
                head: COMPOSED,
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn held_out_triples_are_inferable() {
        let data = generate(&SynthConfig::default());
        let kg = data.train_graph().unwrap();
        assert_eq!(kg.num_entities(), 200);
        for t in data.valid.iter().chain(&data.test) {
            assert!(!kg.contains(t));
            let inferable = data
                .planted
                .iter()
                .any(|a| crate::injection::inferred_heads(&kg, a).contains(t));
            assert!(inferable, "{t:?}");
        }
        assert_eq!(data.valid.len() + data.test.len(), 40);
    }

    #[test]
    fn deterministic() {
        let a = generate(&SynthConfig::default());
        let b = generate(&SynthConfig::default());
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }
}
