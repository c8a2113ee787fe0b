//! The iterative loop: train embeddings, score the axiom pool, inject inferred
//! triples about sparse entities, repeat.
//!
//! Outputs under the configured directory:
//!
//! - `ckpt_iter{N}.ckpt` after every iteration
//! - `records.jsonl`, one [`IterationRecord`] per line
//! - `injected_iter{N}.tsv`, the triples injected for the next iteration
//! - `axioms.jsonl` / `axioms.csv`, the final scored pool with head coverage
//! - `report.json` / `report.csv`, final metrics and rule summary

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::axiom::{count_by_type, generate_pool, Axiom, AxiomType, PoolConfig, PoolEntry};
use crate::checkpoint;
use crate::embedding::{train_epoch, EmbeddingModel, LabeledTriple, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{
    default_score_grid, head_coverages, link_prediction, link_prediction_with_axioms, summarize_rules, EvalContext,
    MetricsReport, RuleReport,
};
use crate::induction::{induce_axioms, ScoredAxiom};
use crate::injection::{
    count_by_source_type, inject_triples, read_injected_tsv, write_injected_tsv, InferredTriple, InjectionConfig,
};
use crate::kg::{entity_sparsity, Dataset, KnowledgeGraph, SparseEntities, Triple};
use crate::rng::{stream, Phase};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxiomEvalSet {
    /// Triples injected by the last iteration.
    Final,
    /// Union of the triples injected by every iteration.
    Union,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub iterations: usize,
    pub eval_every_iteration: bool,
    pub train: TrainConfig,
    pub pool: PoolConfig,
    pub injection: InjectionConfig,
    pub hc_threshold: f64,
    pub axiom_eval: AxiomEvalSet,
    /// Evaluate "+axioms" against inferred triples before the sparse filter.
    pub axiom_eval_prefilter: bool,
    pub write_checkpoints: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            out: PathBuf::from("out"),
            seed: 0,
            iterations: 10,
            eval_every_iteration: false,
            train: TrainConfig::default(),
            pool: PoolConfig::default(),
            injection: InjectionConfig::default(),
            hc_threshold: 0.7,
            axiom_eval: AxiomEvalSet::Final,
            axiom_eval_prefilter: false,
            write_checkpoints: true,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Config(format!("{key}={value}: {e}")))
}

impl PipelineConfig {
    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut config = Self::from_kv(&text)?;
        // relative dataset/output paths resolve against the config file
        if let Some(base) = path.parent() {
            if config.data.is_relative() {
                config.data = base.join(&config.data);
            }
            if config.out.is_relative() {
                config.out = base.join(&config.out);
            }
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "seed" => {
                self.seed = parse_value(key, value)?;
                self.train.seed = self.seed;
                self.pool.seed = self.seed;
            }
            "iterations" => self.iterations = parse_value(key, value)?,
            "eval_every_iteration" => self.eval_every_iteration = parse_value(key, value)?,
            "dim" | "d" => self.train.dim = parse_value(key, value)?,
            "scalars" => {
                self.train.scalars = if value == "auto" {
                    None
                } else {
                    Some(parse_value(key, value)?)
                }
            }
            "negatives" => self.train.negatives = parse_value(key, value)?,
            "l1" | "lambda" => self.train.l1 = parse_value(key, value)?,
            "lr" => self.train.lr = parse_value(key, value)?,
            "batch_size" => self.train.batch_size = parse_value(key, value)?,
            "epochs_per_iteration" => self.train.epochs_per_iteration = parse_value(key, value)?,
            "beta1" => self.train.beta1 = parse_value(key, value)?,
            "beta2" => self.train.beta2 = parse_value(key, value)?,
            "eps" => self.train.eps = parse_value(key, value)?,
            "p" => self.pool.min_probability = parse_value(key, value)?,
            "t" => self.pool.include_probability = parse_value(key, value)?,
            "k" => {
                self.pool.k = if value == "auto" {
                    None
                } else {
                    Some(parse_value(key, value)?)
                }
            }
            "theta_score" => self.injection.score_threshold = parse_value(key, value)?,
            "max_inferred" | "m" => self.injection.max_inferred = parse_value(key, value)?,
            "theta_sparsity" => self.injection.sparsity_threshold = parse_value(key, value)?,
            "hc_threshold" => self.hc_threshold = parse_value(key, value)?,
            "axiom_eval" => {
                self.axiom_eval = match value {
                    "final" => AxiomEvalSet::Final,
                    "union" => AxiomEvalSet::Union,
                    _ => return Err(Error::Config(format!("axiom_eval must be final or union, got {value}"))),
                }
            }
            "axiom_eval_prefilter" => self.axiom_eval_prefilter = parse_value(key, value)?,
            "checkpoints" => self.write_checkpoints = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let t = &self.train;
        let _ = writeln!(s, "data = {}", self.data.display());
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "eval_every_iteration = {}", self.eval_every_iteration);
        let _ = writeln!(s, "dim = {}", t.dim);
        match t.scalars {
            Some(n) => {
                let _ = writeln!(s, "scalars = {n}");
            }
            None => {
                let _ = writeln!(s, "scalars = auto");
            }
        }
        let _ = writeln!(s, "negatives = {}", t.negatives);
        let _ = writeln!(s, "l1 = {}", t.l1);
        let _ = writeln!(s, "lr = {}", t.lr);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "epochs_per_iteration = {}", t.epochs_per_iteration);
        let _ = writeln!(s, "beta1 = {}", t.beta1);
        let _ = writeln!(s, "beta2 = {}", t.beta2);
        let _ = writeln!(s, "eps = {}", t.eps);
        let _ = writeln!(s, "p = {}", self.pool.min_probability);
        let _ = writeln!(s, "t = {}", self.pool.include_probability);
        match self.pool.k {
            Some(k) => {
                let _ = writeln!(s, "k = {k}");
            }
            None => {
                let _ = writeln!(s, "k = auto");
            }
        }
        let _ = writeln!(s, "theta_score = {}", self.injection.score_threshold);
        let _ = writeln!(s, "max_inferred = {}", self.injection.max_inferred);
        let _ = writeln!(s, "theta_sparsity = {}", self.injection.sparsity_threshold);
        let _ = writeln!(s, "hc_threshold = {}", self.hc_threshold);
        let _ = writeln!(
            s,
            "axiom_eval = {}",
            match self.axiom_eval {
                AxiomEvalSet::Final => "final",
                AxiomEvalSet::Union => "union",
            }
        );
        let _ = writeln!(s, "axiom_eval_prefilter = {}", self.axiom_eval_prefilter);
        let _ = writeln!(s, "checkpoints = {}", self.write_checkpoints);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        self.train.validate()?;
        self.pool.sample_size()?;
        self.injection.validate()?;
        if !(0.0..=1.0).contains(&self.hc_threshold) {
            return Err(Error::Config("hc_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean of the per-epoch mean losses.
    pub mean_loss: f64,
    pub last_epoch_loss: f64,
    pub trained_on: usize,
    pub axioms_above_threshold: BTreeMap<AxiomType, usize>,
    pub injected: usize,
    pub injected_by_type: BTreeMap<AxiomType, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub iterations: usize,
    pub entities: usize,
    pub relations: usize,
    pub train_triples: usize,
    pub test_triples: usize,
    pub sparse_entities: usize,
    pub k: usize,
    pub pool_by_type: BTreeMap<AxiomType, usize>,
    pub metrics: Option<MetricsReport>,
    pub metrics_with_axioms: Option<MetricsReport>,
    pub axiom_eval_triples: usize,
    pub rules: RuleReport,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub model: EmbeddingModel,
    pub records: Vec<IterationRecord>,
    pub scored: Vec<ScoredAxiom>,
    pub injected: Vec<InferredTriple>,
    pub report: Report,
}

/// One row of the axiom dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomRow {
    #[serde(rename = "type")]
    pub kind: AxiomType,
    pub relations: Vec<String>,
    pub support: usize,
    pub head_size: usize,
    pub raw: f64,
    pub score: f64,
    pub hc: f64,
}

pub fn axiom_rows(kg: &KnowledgeGraph, scored: &[ScoredAxiom], hcs: &[f64]) -> Vec<AxiomRow> {
    scored
        .iter()
        .zip(hcs)
        .map(|(s, &hc)| AxiomRow {
            kind: s.axiom.kind(),
            relations: s
                .axiom
                .relations()
                .iter()
                .map(|&r| kg.relations().name(r).to_owned())
                .collect(),
            support: s.support,
            head_size: s.head_size,
            raw: s.raw,
            score: s.score,
            hc,
        })
        .collect()
}

/// Writes `path` as JSON lines and a CSV mirror next to it.
pub fn write_axiom_dump(path: &Path, rows: &[AxiomRow]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let mut csv = BufWriter::new(fs::File::create(path.with_extension("csv"))?);
    writeln!(csv, "type,relations,support,head_size,raw,score,hc")?;
    for row in rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.kind.name(),
            row.relations.join(";"),
            row.support,
            row.head_size,
            row.raw,
            row.score,
            row.hc
        )?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;

    let mut csv = String::from("section,key,value\n");
    let mut metric_rows = |name: &str, m: &MetricsReport| {
        let rows = [
            ("mrr_raw", m.mrr_raw),
            ("mrr_filter", m.mrr_filter),
            ("mrr_mean_rank_raw", m.mrr_mean_rank_raw),
            ("mrr_mean_rank_filter", m.mrr_mean_rank_filter),
            ("hit1_raw", m.hits_raw.at1),
            ("hit3_raw", m.hits_raw.at3),
            ("hit10_raw", m.hits_raw.at10),
            ("hit1_filter", m.hits_filter.at1),
            ("hit3_filter", m.hits_filter.at3),
            ("hit10_filter", m.hits_filter.at10),
        ];
        for (k, v) in rows {
            let _ = writeln!(csv, "{name},{k},{v}");
        }
        for b in &m.buckets {
            let _ = writeln!(csv, "{name},bucket_{}_{}_count,{}", b.lo, b.hi, b.count);
            let _ = writeln!(csv, "{name},bucket_{}_{}_mrr_filter,{}", b.lo, b.hi, b.mrr_filter);
        }
    };
    if let Some(m) = &report.metrics {
        metric_rows("metrics", m);
    }
    if let Some(m) = &report.metrics_with_axioms {
        metric_rows("metrics_with_axioms", m);
    }
    let _ = writeln!(csv, "rules,pool_size,{}", report.rules.pool_size);
    let _ = writeln!(csv, "rules,high_quality,{}", report.rules.high_quality);
    for p in &report.rules.curve {
        let _ = writeln!(csv, "curve,selected@{},{}", p.threshold, p.selected);
        let _ = writeln!(csv, "curve,hq_covered@{},{}", p.threshold, p.hq_covered);
    }
    fs::write(dir.join("report.csv"), csv)?;
    Ok(())
}

fn checkpoint_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(format!("ckpt_iter{iteration}.ckpt"))
}

fn injected_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(format!("injected_iter{iteration}.tsv"))
}

fn by_type(counts: Vec<(AxiomType, usize)>) -> BTreeMap<AxiomType, usize> {
    counts.into_iter().collect()
}

/// State needed to continue a run after `iteration` completed iterations.
#[derive(Clone, Debug)]
pub struct Resume {
    pub model: EmbeddingModel,
    pub iteration: usize,
}

impl Resume {
    pub fn from_checkpoint(path: &Path, expected: Option<checkpoint::Header>) -> Result<Self> {
        let (model, iteration) = checkpoint::load(path, expected)?;
        Ok(Self {
            model,
            iteration: iteration as usize,
        })
    }
}

pub fn run_iterations(config: &PipelineConfig) -> Result<Outcome> {
    run(config, None)
}

/// Runs the loop, optionally continuing from a checkpoint. A resumed run reads
/// the earlier records (and, in union mode, earlier injected sets) back from
/// the output directory.
pub fn run(config: &PipelineConfig, resume: Option<Resume>) -> Result<Outcome> {
    config.validate()?;
    let data = Dataset::load(&config.data)?;
    let kg = &data.train;
    if kg.is_empty() {
        return Err(Error::Empty("training triples"));
    }
    let layout = config.train.layout()?;
    if let Some(r) = &resume {
        if r.model.layout() != layout
            || r.model.num_entities() != kg.num_entities()
            || r.model.num_relations() != kg.num_relations()
        {
            return Err(Error::Checkpoint("checkpoint does not match config and dataset".into()));
        }
        if r.iteration > config.iterations {
            return Err(Error::Checkpoint(format!(
                "checkpoint is at iteration {} beyond the configured {}",
                r.iteration, config.iterations
            )));
        }
    }
    fs::create_dir_all(&config.out)?;
    let out = config.out.as_path();

    let sparse = entity_sparsity(kg)?.sparse_entities(config.injection.sparsity_threshold);
    let ctx = EvalContext::from_dataset(&data);
    let k = config.pool.sample_size()?;

    let started = Instant::now();
    let pool = generate_pool(kg, &config.pool, &mut stream(config.seed, 0, Phase::Pool))?;
    log::info!("pool: {} axioms (k = {k}) in {:.2?}", pool.len(), started.elapsed());

    let (mut model, start) = match resume {
        Some(r) => (r.model, r.iteration),
        None => (
            EmbeddingModel::init(
                kg.num_entities(),
                kg.num_relations(),
                &config.train,
                &mut stream(config.seed, 0, Phase::Init),
            )?,
            0,
        ),
    };

    let mut records = Vec::new();
    let mut union: BTreeMap<Triple, f64> = BTreeMap::new();
    let mut injected = Vec::new();
    let mut scored = Vec::new();
    if start > 0 {
        records = read_records(&out.join("records.jsonl"), start)?;
        scored = induce_axioms(&model, &pool);
        injected = inject_triples(kg, &scored, &sparse, &config.injection);
        if config.axiom_eval == AxiomEvalSet::Union {
            for it in 1..=start {
                for (t, truth) in read_injected_tsv(&injected_path(out, it), kg)? {
                    union.insert(t, truth);
                }
            }
        }
    }
    rewrite_records(&out.join("records.jsonl"), &records)?;

    let base_inputs: Vec<LabeledTriple> = kg.triples().iter().map(|&t| LabeledTriple::new(t, 1.0)).collect();

    for iteration in start + 1..=config.iterations {
        let started = Instant::now();
        let mut rng = stream(config.seed, iteration as u64, Phase::Train);
        let mut inputs = base_inputs.clone();
        inputs.extend(injected.iter().map(|i| LabeledTriple::new(i.triple, i.truth)));
        let mut losses = Vec::with_capacity(config.train.epochs_per_iteration);
        for _ in 0..config.train.epochs_per_iteration {
            losses.push(train_epoch(&mut model, &inputs, kg, &config.train, &mut rng)?.mean_loss);
        }
        let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;

        scored = induce_axioms(&model, &pool);
        injected = inject_triples(kg, &scored, &sparse, &config.injection);
        for i in &injected {
            union.insert(i.triple, i.truth);
        }

        let metrics = if config.eval_every_iteration && !data.test.is_empty() {
            Some(link_prediction(&model, &ctx, &data.test)?)
        } else {
            None
        };
        let above = AxiomType::ALL
            .iter()
            .map(|&t| {
                let n = scored
                    .iter()
                    .filter(|s| s.axiom.kind() == t && s.score > config.injection.score_threshold)
                    .count();
                (t, n)
            })
            .collect();
        let record = IterationRecord {
            iteration,
            mean_loss,
            last_epoch_loss: *losses.last().expect("at least one epoch"),
            trained_on: inputs.len(),
            axioms_above_threshold: by_type(above),
            injected: injected.len(),
            injected_by_type: by_type(count_by_source_type(&injected)),
            metrics,
        };
        log::info!(
            "iteration {iteration}: loss {:.5}, {} injected, {:.2?}",
            record.mean_loss,
            record.injected,
            started.elapsed()
        );

        write_injected_tsv(&injected_path(out, iteration), kg, &injected)?;
        append_record(&out.join("records.jsonl"), &record)?;
        if config.write_checkpoints {
            checkpoint::save(&model, iteration as u64, &checkpoint_path(out, iteration))?;
        }
        records.push(record);
    }

    let hcs = head_coverages(kg, &scored);
    write_axiom_dump(&out.join("axioms.jsonl"), &axiom_rows(kg, &scored, &hcs))?;
    let rules = summarize_rules(
        &scored,
        &hcs,
        config.hc_threshold,
        config.injection.score_threshold,
        &default_score_grid(),
    );

    let eval_set: HashSet<Triple> = match (config.axiom_eval_prefilter, config.axiom_eval) {
        (true, _) => inject_triples(kg, &scored, &SparseEntities::all(kg.num_entities()), &config.injection)
            .into_iter()
            .map(|i| i.triple)
            .collect(),
        (false, AxiomEvalSet::Final) => injected.iter().map(|i| i.triple).collect(),
        (false, AxiomEvalSet::Union) => union.keys().copied().collect(),
    };
    let (metrics, metrics_with_axioms) = if data.test.is_empty() {
        log::warn!("test split is empty; skipping link prediction");
        (None, None)
    } else {
        (
            Some(link_prediction(&model, &ctx, &data.test)?),
            Some(link_prediction_with_axioms(&model, &ctx, &data.test, &eval_set)?),
        )
    };

    let report = Report {
        iterations: config.iterations,
        entities: kg.num_entities(),
        relations: kg.num_relations(),
        train_triples: kg.len(),
        test_triples: data.test.len(),
        sparse_entities: sparse.len(),
        k,
        pool_by_type: by_type(count_by_type(&pool)),
        metrics,
        metrics_with_axioms,
        axiom_eval_triples: eval_set.len(),
        rules,
    };
    write_report(out, &report)?;

    Ok(Outcome {
        model,
        records,
        scored,
        injected,
        report,
    })
}

/// Pool and scores for a trained model, as used by the `rules` command.
pub fn score_pool(
    kg: &KnowledgeGraph,
    model: &EmbeddingModel,
    pool_config: &PoolConfig,
    seed: u64,
) -> Result<(Vec<PoolEntry>, Vec<ScoredAxiom>)> {
    let pool = generate_pool(kg, pool_config, &mut stream(seed, 0, Phase::Pool))?;
    let scored = induce_axioms(model, &pool);
    Ok((pool, scored))
}

fn append_record(path: &Path, record: &IterationRecord) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    f.write_all(line.as_bytes())?;
    Ok(())
}

fn rewrite_records(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// First `count` records of an existing `records.jsonl`.
pub fn read_records(path: &Path, count: usize) -> Result<Vec<IterationRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::with_capacity(count);
    for line in reader.lines().take(count) {
        records.push(serde_json::from_str(&line?)?);
    }
    if records.len() < count {
        return Err(Error::Checkpoint(format!(
            "{} holds {} records, resume needs {count}",
            path.display(),
            records.len()
        )));
    }
    Ok(records)
}

/// Axioms whose type and relation names match, for looking up planted axioms
/// in a dump.
pub fn find_axiom(scored: &[ScoredAxiom], axiom: &Axiom) -> Option<usize> {
    scored.iter().position(|s| s.axiom == *axiom)
}
