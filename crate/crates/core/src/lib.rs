//! Knowledge-graph embeddings co-trained with OWL2 object-property axioms.
//!
//! Entities are vectors and relations are block-diagonal bilinear maps made of
//! scalars and 2x2 rotation-scaling blocks. Candidate axioms (reflexive,
//! symmetric, transitive, equivalent, sub-property, inverse, chain) are scored
//! by how closely the relation matrices satisfy the matching algebraic
//! identity. High-scoring axioms are grounded over the graph to infer soft
//! triples about sparse entities, which feed the next round of training.
//!
//! The usual entry point is [`pipeline::run_iterations`]; the modules can also
//! be used one stage at a time.

pub mod axiom;
pub mod block;
pub mod checkpoint;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod induction;
pub mod injection;
pub mod kg;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use axiom::{compute_k, generate_pool, Axiom, AxiomType, PoolConfig, PoolEntry};
pub use block::{BlockDiagMatrix, Layout};
pub use embedding::{EmbeddingModel, LabeledTriple, TrainConfig};
pub use error::{Error, Result};
pub use eval::{link_prediction, link_prediction_with_axioms, EvalContext, MetricsReport};
pub use induction::{induce_axioms, ScoredAxiom};
pub use injection::{inject_triples, InferredTriple, InjectionConfig};
pub use kg::{entity_sparsity, Dataset, KnowledgeGraph, SparseEntities, Triple, Vocab};
pub use pipeline::{run_iterations, PipelineConfig};
