use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use kgaxiom::checkpoint;
use kgaxiom::eval::{head_coverages, link_prediction, link_prediction_with_axioms, EvalContext};
use kgaxiom::injection::read_injected_tsv;
use kgaxiom::kg::{entity_sparsity, sparsify_eval_split, write_triples, Dataset};
use kgaxiom::pipeline::{self, axiom_rows, write_axiom_dump, PipelineConfig, Resume};
use kgaxiom::synth::{self, SynthConfig};
use kgaxiom::PoolConfig;

#[derive(Parser)]
#[command(
    name = "kgaxiom",
    version,
    about = "Knowledge-graph embeddings co-trained with OWL2 property axioms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Keep only valid/test triples that touch a sparse entity.
    Sparsify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.995)]
        theta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the embed / induce / inject loop.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override a config key, e.g. `--set dim=32`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Score the axiom pool of a trained model.
    Rules {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0.95)]
        t: f64,
        /// Triples sampled per relation; derived from `p` and `t` when omitted.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Link-prediction metrics of a checkpoint on the test split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Injected-triple TSV whose triples score 1 during ranking.
        #[arg(long)]
        with_axioms: Option<PathBuf>,
    },
    /// Write a synthetic dataset with planted inverse and chain axioms.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sparsify { data, theta, out } => sparsify(&data, theta, &out),
        Command::Train {
            config,
            resume,
            overrides,
        } => train(&config, resume.as_deref(), &overrides),
        Command::Rules {
            ckpt,
            data,
            out,
            seed,
            p,
            t,
            k,
        } => rules(&ckpt, &data, &out, seed, p, t, k),
        Command::Eval {
            ckpt,
            data,
            with_axioms,
        } => eval(&ckpt, &data, with_axioms.as_deref()),
        Command::Synth { out, seed } => {
            let data = synth::generate(&SynthConfig {
                seed,
                ..SynthConfig::default()
            });
            data.write(&out)?;
            println!(
                "wrote {} train, {} valid, {} test triples to {}",
                data.train.len(),
                data.valid.len(),
                data.test.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

fn sparsify(data_dir: &Path, theta: f64, out: &Path) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        bail!("--theta must lie in [0, 1], got {theta}");
    }
    if same_dir(data_dir, out) {
        bail!("--out must differ from --data; sparsify never overwrites its input");
    }
    let data = Dataset::load(data_dir)?;
    let table = entity_sparsity(&data.train)?;
    let valid = sparsify_eval_split(&table, &data.valid, theta)?;
    let test = sparsify_eval_split(&table, &data.test, theta)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (ents, rels) = (data.train.entities(), data.train.relations());
    write_triples(&out.join("train.txt"), data.train.triples(), ents, rels)?;
    write_triples(&out.join("valid.txt"), &valid, ents, rels)?;
    write_triples(&out.join("test.txt"), &test, ents, rels)?;
    let share = |kept: usize, total: usize| if total == 0 { 0.0 } else { kept as f64 / total as f64 };
    println!(
        "sparse entities: {}; valid kept {}/{} ({:.1}%); test kept {}/{} ({:.1}%)",
        table.sparse_entities(theta).len(),
        valid.len(),
        data.valid.len(),
        100.0 * share(valid.len(), data.valid.len()),
        test.len(),
        data.test.len(),
        100.0 * share(test.len(), data.test.len()),
    );
    Ok(())
}

fn train(config_path: &Path, resume: Option<&Path>, overrides: &[String]) -> Result<()> {
    let mut config =
        PipelineConfig::load(config_path).with_context(|| format!("reading config {}", config_path.display()))?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{o}`"))?;
        config.set(k.trim(), v.trim())?;
    }
    config.validate()?;
    let resume = match resume {
        Some(path) => Some(
            Resume::from_checkpoint(path, None).with_context(|| format!("loading checkpoint {}", path.display()))?,
        ),
        None => None,
    };
    let outcome = pipeline::run(&config, resume)?;
    if let Some(m) = &outcome.report.metrics {
        println!(
            "plain:   MRR(filter) {:.4}  Hit@10(filter) {:.4}",
            m.mrr_filter, m.hits_filter.at10
        );
    }
    if let Some(m) = &outcome.report.metrics_with_axioms {
        println!(
            "+axioms: MRR(filter) {:.4}  Hit@10(filter) {:.4}",
            m.mrr_filter, m.hits_filter.at10
        );
    }
    println!("outputs in {}", config.out.display());
    Ok(())
}

/// Loads a checkpoint and requires it to match the dataset's vocabulary sizes.
fn load_model(ckpt: &Path, data: &Dataset) -> Result<kgaxiom::EmbeddingModel> {
    let (model, _) = checkpoint::load(ckpt, None).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    if (model.num_entities(), model.num_relations()) != (data.train.num_entities(), data.train.num_relations()) {
        bail!(
            "dimension mismatch: checkpoint has {} entities and {} relations, {} has {} and {}",
            model.num_entities(),
            model.num_relations(),
            data.dir.display(),
            data.train.num_entities(),
            data.train.num_relations()
        );
    }
    Ok(model)
}

fn rules(ckpt: &Path, data_dir: &Path, out: &Path, seed: u64, p: f64, t: f64, k: Option<usize>) -> Result<()> {
    let data = Dataset::load(data_dir)?;
    let model = load_model(ckpt, &data)?;
    let pool_config = PoolConfig {
        min_probability: p,
        include_probability: t,
        k,
        seed,
    };
    let (_, scored) = pipeline::score_pool(&data.train, &model, &pool_config, seed)?;
    let hcs = head_coverages(&data.train, &scored);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_axiom_dump(out, &axiom_rows(&data.train, &scored, &hcs))?;
    println!("{} scored axioms written to {}", scored.len(), out.display());
    Ok(())
}

fn eval(ckpt: &Path, data_dir: &Path, with_axioms: Option<&Path>) -> Result<()> {
    let data = Dataset::load(data_dir)?;
    if data.test.is_empty() {
        bail!("{} has no test triples", data_dir.display());
    }
    let model = load_model(ckpt, &data)?;
    let ctx = EvalContext::from_dataset(&data);
    let report = match with_axioms {
        Some(path) => {
            let injected: HashSet<_> = read_injected_tsv(path, &data.train)?
                .into_iter()
                .map(|(t, _)| t)
                .collect();
            link_prediction_with_axioms(&model, &ctx, &data.test, &injected)?
        }
        None => link_prediction(&model, &ctx, &data.test)?,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
