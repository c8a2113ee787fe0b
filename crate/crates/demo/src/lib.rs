//! Browser bindings for a handful of kgaxiom operations. Every export returns
//! a JSON string so the page can stay plain JavaScript.

use std::io::Cursor;
use std::path::Path;

use kgaxiom::axiom::{compute_k, k_bound};
use kgaxiom::block::{BlockDiagMatrix, Layout};
use kgaxiom::embedding::{train_epoch, EmbeddingModel, LabeledTriple, TrainConfig};
use kgaxiom::eval::head_coverages;
use kgaxiom::injection::{inject_triples, InjectionConfig};
use kgaxiom::kg::{parse_triples, KnowledgeGraph, SparseEntities};
use kgaxiom::pipeline::score_pool;
use kgaxiom::rng::{stream, Phase};
use kgaxiom::PoolConfig;
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Json = Result<String, String>;

fn to_json<T: Serialize>(value: &T) -> Json {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct PoolSize {
    k: usize,
    limit: f64,
    curve: Vec<(f64, f64)>,
}

/// Sample size `k` for the pool together with the bound it has to exceed,
/// evaluated on a log-spaced grid of relation sizes.
#[wasm_bindgen]
pub fn pool_size(p: f64, t: f64) -> Result<String, JsValue> {
    pool_size_json(p, t).map_err(|e| JsValue::from_str(&e))
}

fn pool_size_json(p: f64, t: f64) -> Json {
    let k = compute_k(p, t).map_err(err)?;
    let curve = (0..=60)
        .map(|i| {
            let n = 10f64.powf(i as f64 / 10.0);
            (n, k_bound(p, t, n))
        })
        .collect();
    to_json(&PoolSize {
        k,
        limit: -(1.0 - t).ln() / p,
        curve,
    })
}

#[derive(Serialize)]
struct Algebra {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    ab: Vec<Vec<f64>>,
    raw: Vec<(String, f64)>,
}

fn relation(scale: f64, modulus: f64, degrees: f64) -> BlockDiagMatrix {
    let angle = degrees.to_radians();
    BlockDiagMatrix::from_parts(&[scale], &[(modulus * angle.cos(), modulus * angle.sin())])
}

/// Three 3×3 relation matrices, each one scalar plus one rotation block given
/// as `(scale, modulus, degrees)`, with the Frobenius residual of every axiom
/// equation they can form.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn relation_algebra(
    a_scale: f64,
    a_modulus: f64,
    a_degrees: f64,
    b_scale: f64,
    b_modulus: f64,
    b_degrees: f64,
    c_scale: f64,
    c_modulus: f64,
    c_degrees: f64,
) -> Result<String, JsValue> {
    relation_algebra_json(
        [a_scale, a_modulus, a_degrees],
        [b_scale, b_modulus, b_degrees],
        [c_scale, c_modulus, c_degrees],
    )
    .map_err(|e| JsValue::from_str(&e))
}

fn relation_algebra_json(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Json {
    let [a, b, c] = [a, b, c].map(|[scale, modulus, degrees]| relation(scale, modulus, degrees));
    let identity = BlockDiagMatrix::identity(Layout::new(1, 1));
    let ab = a.multiply(&b).map_err(err)?;
    let aa = a.multiply(&a).map_err(err)?;
    let residual = |x: &BlockDiagMatrix, y: &BlockDiagMatrix| x.frobenius_diff(y).map_err(err);
    let raw = vec![
        ("reflexive(A)".to_owned(), residual(&a, &identity)?),
        ("symmetric(A)".to_owned(), residual(&aa, &identity)?),
        ("transitive(A)".to_owned(), residual(&aa, &a)?),
        ("subproperty(A, B)".to_owned(), residual(&a, &b)?),
        ("inverse(A, B)".to_owned(), residual(&ab, &identity)?),
        ("chain(A, B, C)".to_owned(), residual(&ab, &c)?),
    ];
    to_json(&Algebra {
        a: a.to_dense(),
        b: b.to_dense(),
        c: c.to_dense(),
        ab: ab.to_dense(),
        raw,
    })
}

#[derive(Serialize)]
struct MinedAxiom {
    axiom: String,
    support: usize,
    head_size: usize,
    raw: f64,
    score: f64,
    hc: f64,
}

#[derive(Serialize)]
struct Inferred {
    triple: [String; 3],
    truth: f64,
    source: String,
}

#[derive(Serialize)]
struct Mined {
    entities: usize,
    relations: usize,
    triples: usize,
    losses: Vec<f64>,
    axioms: Vec<MinedAxiom>,
    inferred: Vec<Inferred>,
}

fn parse_graph(text: &str) -> Result<KnowledgeGraph, String> {
    let tsv: String = text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join("\t"))
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l + "\n")
        .collect();
    let loaded = parse_triples(Cursor::new(tsv), Path::new("input"), None).map_err(err)?;
    KnowledgeGraph::new(loaded.entities, loaded.relations, loaded.triples).map_err(err)
}

/// Trains a small model on whitespace-separated `subject relation object`
/// lines, scores every pooled axiom and injects the triples implied by axioms
/// scoring above `threshold`.
#[wasm_bindgen]
pub fn mine(text: &str, dim: usize, epochs: usize, threshold: f64, seed: u32) -> Result<String, JsValue> {
    mine_json(text, dim, epochs, threshold, seed.into()).map_err(|e| JsValue::from_str(&e))
}

fn mine_json(text: &str, dim: usize, epochs: usize, threshold: f64, seed: u64) -> Json {
    let kg = parse_graph(text)?;
    let config = TrainConfig {
        dim,
        lr: 0.01,
        l1: 0.0,
        batch_size: 64,
        seed,
        ..TrainConfig::default()
    };
    config.validate().map_err(err)?;
    let mut model = EmbeddingModel::init(
        kg.num_entities(),
        kg.num_relations(),
        &config,
        &mut stream(seed, 0, Phase::Init),
    )
    .map_err(err)?;
    let inputs: Vec<LabeledTriple> = kg.triples().iter().map(|&t| LabeledTriple::new(t, 1.0)).collect();
    let mut rng = stream(seed, 1, Phase::Train);
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        losses.push(
            train_epoch(&mut model, &inputs, &kg, &config, &mut rng)
                .map_err(err)?
                .mean_loss,
        );
    }

    let pool_config = PoolConfig {
        seed,
        ..PoolConfig::default()
    };
    let (_, scored) = score_pool(&kg, &model, &pool_config, seed).map_err(err)?;
    let hcs = head_coverages(&kg, &scored);
    let names = kg.relations().names();
    let axioms = scored
        .iter()
        .zip(&hcs)
        .map(|(s, &hc)| MinedAxiom {
            axiom: s.axiom.display(names),
            support: s.support,
            head_size: s.head_size,
            raw: s.raw,
            score: s.score,
            hc,
        })
        .collect();

    let injection = InjectionConfig {
        score_threshold: threshold,
        ..InjectionConfig::default()
    };
    injection.validate().map_err(err)?;
    let entity = |e| kg.entities().name(e).to_owned();
    let inferred = inject_triples(&kg, &scored, &SparseEntities::all(kg.num_entities()), &injection)
        .into_iter()
        .map(|i| Inferred {
            triple: [
                entity(i.triple.subject),
                names[i.triple.relation as usize].clone(),
                entity(i.triple.object),
            ],
            truth: i.truth,
            source: i.sources[0].display(names),
        })
        .collect();

    to_json(&Mined {
        entities: kg.num_entities(),
        relations: kg.num_relations(),
        triples: kg.len(),
        losses,
        axioms,
        inferred,
    })
}
