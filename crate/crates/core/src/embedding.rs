//! Bilinear embedding model with block-diagonal relation matrices.
//!
//! A triple is scored as `σ(v_sᵀ M_r v_o)`. Training minimizes the mean binary
//! cross-entropy over soft-labeled triples plus an L1 penalty on the parameters
//! a batch touches, using Adam with lazy (touched-rows-only) updates.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::block::{self, BlockDiagMatrix, Layout};
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::rng::Rng;

const INIT_BOUND: f64 = 0.1;
const LOG_FLOOR: f64 = 1e-12;
pub const NEGATIVE_RETRIES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    /// Number of diagonal scalars; `None` means `d/2` (see [`Layout::for_dim`]).
    pub scalars: Option<usize>,
    pub negatives: usize,
    pub l1: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_per_iteration: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 200,
            scalars: None,
            negatives: 6,
            l1: 1e-5,
            lr: 0.001,
            batch_size: 1024,
            epochs_per_iteration: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn layout(&self) -> Result<Layout> {
        let base = Layout::for_dim(self.dim)?;
        match self.scalars {
            None => Ok(base),
            Some(n_s) => Layout::with_scalars(self.dim, n_s),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout()?;
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.lr) || !positive(self.eps) || self.l1 < 0.0 || !self.l1.is_finite() {
            return Err(Error::Config("lr and eps must be positive and l1 non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs_per_iteration == 0 {
            return Err(Error::Config(
                "batch_size and epochs_per_iteration must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledTriple {
    pub triple: Triple,
    pub label: f64,
}

impl LabeledTriple {
    pub const fn new(triple: Triple, label: f64) -> Self {
        Self { triple, label }
    }
}

/// First and second moments for every parameter plus the shared step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub entity_m: Vec<f64>,
    pub entity_v: Vec<f64>,
    pub relation_m: Vec<f64>,
    pub relation_v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    fn zeros(entity_len: usize, relation_len: usize) -> Self {
        Self {
            entity_m: vec![0.0; entity_len],
            entity_v: vec![0.0; entity_len],
            relation_m: vec![0.0; relation_len],
            relation_v: vec![0.0; relation_len],
            step: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    layout: Layout,
    num_entities: usize,
    num_relations: usize,
    entity: Vec<f64>,
    relation: Vec<f64>,
    pub adam: AdamState,
}

impl EmbeddingModel {
    /// Parameters drawn i.i.d. from `U(-0.1, 0.1)`: entity rows first, then
    /// relation rows, each in storage order.
    pub fn init(num_entities: usize, num_relations: usize, config: &TrainConfig, rng: &mut Rng) -> Result<Self> {
        let layout = config.layout()?;
        if num_entities == 0 || num_relations == 0 {
            return Err(Error::Empty("entity or relation vocabulary"));
        }
        let d = layout.dim();
        let mut draw = || loop {
            let x = rng.gen_range(-INIT_BOUND..INIT_BOUND);
            if x != -INIT_BOUND {
                break x;
            }
        };
        let entity = (0..num_entities * d).map(|_| draw()).collect();
        let relation = (0..num_relations * d).map(|_| draw()).collect();
        Ok(Self {
            layout,
            num_entities,
            num_relations,
            entity,
            relation,
            adam: AdamState::zeros(num_entities * d, num_relations * d),
        })
    }

    /// Assembles a model from raw parameter arrays (zeroed optimizer state).
    pub fn from_parts(
        layout: Layout,
        num_entities: usize,
        num_relations: usize,
        entity: Vec<f64>,
        relation: Vec<f64>,
    ) -> Result<Self> {
        let d = layout.dim();
        if entity.len() != num_entities * d || relation.len() != num_relations * d {
            return Err(Error::Config("parameter array sizes do not match layout".into()));
        }
        Ok(Self {
            layout,
            num_entities,
            num_relations,
            entity,
            relation,
            adam: AdamState::zeros(num_entities * d, num_relations * d),
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn entity_params(&self) -> &[f64] {
        &self.entity
    }

    pub fn relation_params(&self) -> &[f64] {
        &self.relation
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        let d = self.dim();
        &self.entity[e as usize * d..(e as usize + 1) * d]
    }

    pub fn entity_mut(&mut self, e: EntityId) -> &mut [f64] {
        let d = self.dim();
        &mut self.entity[e as usize * d..(e as usize + 1) * d]
    }

    pub fn relation_row(&self, r: RelationId) -> &[f64] {
        let d = self.dim();
        &self.relation[r as usize * d..(r as usize + 1) * d]
    }

    pub fn relation_row_mut(&mut self, r: RelationId) -> &mut [f64] {
        let d = self.dim();
        &mut self.relation[r as usize * d..(r as usize + 1) * d]
    }

    pub fn relation(&self, r: RelationId) -> BlockDiagMatrix {
        BlockDiagMatrix::from_params(self.layout, self.relation_row(r).to_vec())
            .expect("row length equals layout dimension")
    }

    pub fn set_relation(&mut self, r: RelationId, m: &BlockDiagMatrix) -> Result<()> {
        if m.layout() != self.layout {
            let (a, b) = (self.layout, m.layout());
            return Err(Error::LayoutMismatch(a.scalars, a.blocks, b.scalars, b.blocks));
        }
        self.relation_row_mut(r).copy_from_slice(m.params());
        Ok(())
    }

    /// Pre-sigmoid score `v_sᵀ M_r v_o`.
    pub fn logit(&self, t: &Triple) -> f64 {
        block::bilinear(
            self.layout,
            self.relation_row(t.relation),
            self.entity(t.subject),
            self.entity(t.object),
        )
    }

    pub fn score(&self, t: &Triple) -> f64 {
        sigmoid(self.logit(t))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sparse gradient rows keyed by entity / relation id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub entities: BTreeMap<EntityId, Vec<f64>>,
    pub relations: BTreeMap<RelationId, Vec<f64>>,
}

impl Gradients {
    fn entity_row(&mut self, e: EntityId, d: usize) -> &mut Vec<f64> {
        self.entities.entry(e).or_insert_with(|| vec![0.0; d])
    }

    fn relation_row(&mut self, r: RelationId, d: usize) -> &mut Vec<f64> {
        self.relations.entry(r).or_insert_with(|| vec![0.0; d])
    }

    pub fn is_finite(&self) -> bool {
        self.entities
            .values()
            .chain(self.relations.values())
            .flatten()
            .all(|g| g.is_finite())
    }
}

/// Binary cross-entropy of label `l` against `σ(x)`, and its derivative in `x`.
fn cross_entropy(x: f64, l: f64) -> (f64, f64) {
    let p = sigmoid(x);
    let q = sigmoid(-x);
    let mut loss = 0.0;
    let mut grad = 0.0;
    if l != 0.0 {
        loss -= l * p.max(LOG_FLOOR).ln();
        if p >= LOG_FLOOR {
            grad -= l * q;
        }
    }
    if l != 1.0 {
        loss -= (1.0 - l) * q.max(LOG_FLOOR).ln();
        if q >= LOG_FLOOR {
            grad += (1.0 - l) * p;
        }
    }
    (loss, grad)
}

/// Mean cross-entropy over `batch` plus `l1 · Σ|θ|` over the rows the batch
/// touches, with the analytic gradient of that objective.
pub fn loss_and_gradients(model: &EmbeddingModel, batch: &[LabeledTriple], l1: f64) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let layout = model.layout();
    let d = layout.dim();
    let n_s = layout.scalars;
    let inv_n = 1.0 / batch.len() as f64;
    let mut grads = Gradients::default();
    let mut loss = 0.0;

    let mut gs = vec![0.0; d];
    let mut go = vec![0.0; d];
    let mut gr = vec![0.0; d];
    for item in batch {
        let t = item.triple;
        let vs = model.entity(t.subject);
        let vo = model.entity(t.object);
        let m = model.relation_row(t.relation);
        let x = block::bilinear(layout, m, vs, vo);
        let (ce, dx) = cross_entropy(x, item.label);
        loss += ce * inv_n;
        let c = dx * inv_n;

        for i in 0..n_s {
            gs[i] = c * m[i] * vo[i];
            go[i] = c * m[i] * vs[i];
            gr[i] = c * vs[i] * vo[i];
        }
        for j in 0..layout.blocks {
            let i = n_s + 2 * j;
            let (a, b) = (m[i], m[i + 1]);
            let (s0, s1, o0, o1) = (vs[i], vs[i + 1], vo[i], vo[i + 1]);
            gs[i] = c * (a * o0 - b * o1);
            gs[i + 1] = c * (b * o0 + a * o1);
            go[i] = c * (a * s0 + b * s1);
            go[i + 1] = c * (a * s1 - b * s0);
            gr[i] = c * (s0 * o0 + s1 * o1);
            gr[i + 1] = c * (s1 * o0 - s0 * o1);
        }
        add_into(grads.entity_row(t.subject, d), &gs);
        add_into(grads.entity_row(t.object, d), &go);
        add_into(grads.relation_row(t.relation, d), &gr);
    }

    if l1 > 0.0 {
        for (&e, row) in grads.entities.iter_mut() {
            loss += l1 * l1_row(model.entity(e), row, l1);
        }
        for (&r, row) in grads.relations.iter_mut() {
            loss += l1 * l1_row(model.relation_row(r), row, l1);
        }
    }
    Ok((loss, grads))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Adds the L1 subgradient to `grad` and returns `Σ|θ|` of the row.
fn l1_row(params: &[f64], grad: &mut [f64], l1: f64) -> f64 {
    let mut norm = 0.0;
    for (g, &p) in grad.iter_mut().zip(params) {
        norm += p.abs();
        if p != 0.0 {
            *g += l1 * p.signum();
        }
    }
    norm
}

/// One Adam step over the touched rows. Fails before mutating anything if a
/// gradient is not finite.
pub fn adam_update(model: &mut EmbeddingModel, grads: &Gradients, config: &TrainConfig) -> Result<()> {
    if !grads.is_finite() {
        let what = grads
            .entities
            .iter()
            .find(|(_, g)| g.iter().any(|x| !x.is_finite()))
            .map(|(e, _)| format!("entity {e}"))
            .unwrap_or_else(|| "a relation".to_owned());
        return Err(Error::NonFiniteGradient(what));
    }
    let d = model.dim();
    model.adam.step += 1;
    let step = model.adam.step as i32;
    let hp = AdamStep {
        lr: config.lr,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.eps,
        corr1: 1.0 - config.beta1.powi(step),
        corr2: 1.0 - config.beta2.powi(step),
    };
    for (&e, g) in &grads.entities {
        let range = e as usize * d..(e as usize + 1) * d;
        hp.apply(
            &mut model.entity[range.clone()],
            &mut model.adam.entity_m[range.clone()],
            &mut model.adam.entity_v[range],
            g,
        );
    }
    for (&r, g) in &grads.relations {
        let range = r as usize * d..(r as usize + 1) * d;
        hp.apply(
            &mut model.relation[range.clone()],
            &mut model.adam.relation_m[range.clone()],
            &mut model.adam.relation_v[range],
            g,
        );
    }
    Ok(())
}

struct AdamStep {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    corr1: f64,
    corr2: f64,
}

impl AdamStep {
    fn apply(&self, params: &mut [f64], m: &mut [f64], v: &mut [f64], grad: &[f64]) {
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / self.corr1;
            let v_hat = v[i] / self.corr2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Negatives for a KG triple, one corrupted position each.
#[derive(Clone, Debug, PartialEq)]
pub struct Negatives {
    pub triples: Vec<LabeledTriple>,
    /// Set when the retry bound ran out before `n` negatives were found.
    pub exhausted: bool,
}

/// Corrupts subject, object or relation (chosen uniformly) with a uniformly
/// drawn replacement, redrawing up to [`NEGATIVE_RETRIES`] times whenever the
/// result is `t` itself or a stored triple.
pub fn sample_negatives(kg: &KnowledgeGraph, t: Triple, n: usize, rng: &mut Rng) -> Negatives {
    let n_e = kg.num_entities() as u32;
    let n_r = kg.num_relations() as u32;
    let mut triples = Vec::with_capacity(n);
    let mut exhausted = false;
    for _ in 0..n {
        let mut found = None;
        for _ in 0..NEGATIVE_RETRIES {
            let mut c = t;
            match rng.gen_range(0..3u8) {
                0 => c.subject = rng.gen_range(0..n_e),
                1 => c.object = rng.gen_range(0..n_e),
                _ => c.relation = rng.gen_range(0..n_r),
            }
            if c != t && !kg.contains(&c) {
                found = Some(c);
                break;
            }
        }
        match found {
            Some(c) => triples.push(LabeledTriple::new(c, 0.0)),
            None => exhausted = true,
        }
    }
    Negatives { triples, exhausted }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub batches: usize,
    pub short_negative_draws: usize,
}

/// One pass over `inputs` in shuffled minibatches. Negatives are drawn for
/// inputs that are stored triples of `kg`; injected triples get none.
pub fn train_epoch(
    model: &mut EmbeddingModel,
    inputs: &[LabeledTriple],
    kg: &KnowledgeGraph,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<EpochStats> {
    if inputs.is_empty() {
        return Err(Error::Empty("training inputs"));
    }
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    let mut short = 0;
    let mut batch = Vec::with_capacity(config.batch_size * (1 + config.negatives));
    for chunk in order.chunks(config.batch_size) {
        batch.clear();
        for &i in chunk {
            let item = inputs[i];
            batch.push(item);
            if kg.contains(&item.triple) {
                let neg = sample_negatives(kg, item.triple, config.negatives, rng);
                short += neg.exhausted as usize;
                batch.extend(neg.triples);
            }
        }
        let (loss, grads) = loss_and_gradients(model, &batch, config.l1)?;
        adam_update(model, &grads, config)?;
        total += loss;
        batches += 1;
    }
    Ok(EpochStats {
        mean_loss: total / batches as f64,
        batches,
        short_negative_draws: short,
    })
}
