//! Acceptance suite. Each criterion runs at its pinned tolerance and runtime
//! budget and prints one PASS/FAIL line; the process exits non-zero if any
//! criterion fails.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use kgaxiom::axiom::{compute_k, generate_pool, k_bound, Axiom, AxiomType, PoolConfig};
use kgaxiom::block::{bilinear, BlockDiagMatrix, Layout};
use kgaxiom::embedding::{loss_and_gradients, EmbeddingModel, LabeledTriple, TrainConfig};
use kgaxiom::eval::{aggregate, head_coverage, rank_triple, RankResult};
use kgaxiom::injection::{ground_axiom, solve_head_truth, Expr};
use kgaxiom::kg::{entity_sparsity, sparsify_eval_split, Dataset, KnowledgeGraph, Triple};
use kgaxiom::pipeline::{run_iterations, PipelineConfig};
use kgaxiom::rng::{stream, Phase};
use kgaxiom::synth::{self, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pruning_bound() -> Outcome {
    let k = compute_k(0.5, 0.95).map_err(|e| e.to_string())?;
    ensure(k == 6, || format!("compute_k(0.5, 0.95) = {k}, expected 6"))?;
    // log-spaced N grid from 1 to 1e12
    let grid: Vec<f64> = (0..=240).map(|i| 10f64.powf(i as f64 / 20.0)).collect();
    let mut r = rng(1);
    for _ in 0..20 {
        let p = r.gen_range(0.05..=1.0);
        let t = r.gen_range(0.5..0.999);
        let sup = grid.iter().map(|&n| k_bound(p, t, n)).fold(f64::MIN, f64::max);
        let numeric = sup.floor() as usize + 1;
        let k = compute_k(p, t).map_err(|e| e.to_string())?;
        let closed = (-(1.0 - t).ln() / p).ceil() as usize;
        ensure(numeric == k && closed == k, || {
            format!("p={p} t={t}: grid sup {sup} gives {numeric}, closed form {closed}, compute_k {k}")
        })?;
    }
    Ok("k=6 at (0.5, 0.95); 20 random (p, t) agree".into())
}

fn block_algebra() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = 2 * r.gen_range(1..=8usize);
        let n_b = r.gen_range(0..=d / 2);
        let layout = Layout::new(d - 2 * n_b, n_b);
        let params = |r: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| r.gen_range(-2.0..2.0)).collect() };
        let (pa, pb) = (params(&mut r), params(&mut r));
        let a = BlockDiagMatrix::from_params(layout, pa.clone()).map_err(|e| e.to_string())?;
        let b = BlockDiagMatrix::from_params(layout, pb.clone()).map_err(|e| e.to_string())?;
        let (da, db) = (common::dense(layout, &pa), common::dense(layout, &pb));

        let prod = a.multiply(&b).map_err(|e| e.to_string())?;
        let dense_prod = common::matmul(&da, &db);
        let prod_err = common::frobenius(&common::dense(layout, prod.params()), &dense_prod);
        let fro = a.frobenius_diff(&b).map_err(|e| e.to_string())?;
        let fro_err = (fro - common::frobenius(&da, &db)).abs();
        let vs: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let vo: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let bil_err = (bilinear(layout, &pa, &vs, &vo) - common::bilinear(&da, &vs, &vo)).abs();
        let err = prod_err.max(fro_err).max(bil_err);
        worst = worst.max(err);
        ensure(err <= 1e-10, || {
            format!("case {case} (d={d}, n_b={n_b}): error {err:e}")
        })?;
    }
    Ok(format!("100 cases, worst error {worst:.1e}"))
}

/// Relative error between two gradient vectors of one parameter group.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn gradient_check() -> Outcome {
    let h = 1e-5;
    let mut worst = [0.0f64; 3];
    for restart in 0..10u64 {
        let config = TrainConfig {
            dim: 8,
            ..TrainConfig::default()
        };
        let (n_e, n_r) = (12, 3);
        let mut model =
            EmbeddingModel::init(n_e, n_r, &config, &mut stream(restart, 0, Phase::Init)).map_err(|e| e.to_string())?;
        let mut r = rng(100 + restart);
        // larger parameters than the initializer so every term matters
        for e in 0..n_e as u32 {
            model.entity_mut(e).iter_mut().for_each(|x| *x = r.gen_range(-1.0..1.0));
        }
        for rel in 0..n_r as u32 {
            model
                .relation_row_mut(rel)
                .iter_mut()
                .for_each(|x| *x = r.gen_range(-1.0..1.0));
        }
        let batch: Vec<LabeledTriple> = (0..20)
            .map(|_| {
                let t = Triple::new(
                    r.gen_range(0..n_e as u32),
                    r.gen_range(0..n_r as u32),
                    r.gen_range(0..n_e as u32),
                );
                LabeledTriple::new(t, r.gen_range(0.0..=1.0))
            })
            .collect();
        let l1 = 1e-3;
        let (_, grads) = loss_and_gradients(&model, &batch, l1).map_err(|e| e.to_string())?;
        let loss_at = |m: &EmbeddingModel| loss_and_gradients(m, &batch, l1).unwrap().0;

        let layout = model.layout();
        let mut analytic = [Vec::new(), Vec::new(), Vec::new()];
        let mut numeric = [Vec::new(), Vec::new(), Vec::new()];
        for (&e, g) in &grads.entities {
            for (i, &gi) in g.iter().enumerate() {
                let orig = model.entity(e)[i];
                model.entity_mut(e)[i] = orig + h;
                let up = loss_at(&model);
                model.entity_mut(e)[i] = orig - h;
                let down = loss_at(&model);
                model.entity_mut(e)[i] = orig;
                analytic[0].push(gi);
                numeric[0].push((up - down) / (2.0 * h));
            }
        }
        for (&rel, g) in &grads.relations {
            for (i, &gi) in g.iter().enumerate() {
                let orig = model.relation_row(rel)[i];
                model.relation_row_mut(rel)[i] = orig + h;
                let up = loss_at(&model);
                model.relation_row_mut(rel)[i] = orig - h;
                let down = loss_at(&model);
                model.relation_row_mut(rel)[i] = orig;
                let group = if i < layout.scalars { 1 } else { 2 };
                analytic[group].push(gi);
                numeric[group].push((up - down) / (2.0 * h));
            }
        }
        for g in 0..3 {
            let err = rel_err(&analytic[g], &numeric[g]);
            worst[g] = worst[g].max(err);
            ensure(err < 1e-4, || {
                format!("restart {restart}, group {g}: relative error {err:e}")
            })?;
        }
    }
    Ok(format!(
        "worst relative error: entities {:.1e}, scalars {:.1e}, rotations {:.1e}",
        worst[0], worst[1], worst[2]
    ))
}

fn support_oracle() -> Outcome {
    let mut r = rng(4);
    let mut checked = 0;
    for g in 0..50 {
        let n_e = r.gen_range(3..=30);
        let density = r.gen_range(0.01..0.15);
        let kg = common::random_kg(&mut r, n_e, 5, density);
        for axiom in common::all_axioms(5) {
            let want = common::enumerate(&kg, &axiom);
            let (n, n_head) = axiom.support_and_head(&kg);
            ensure((n, n_head) == (want.support, want.head_size), || {
                format!(
                    "graph {g}, {axiom:?}: support ({n}, {n_head}) vs oracle ({}, {})",
                    want.support, want.head_size
                )
            })?;
            let mut got: Vec<(Triple, Vec<Triple>)> = ground_axiom(&kg, &axiom)
                .into_iter()
                .map(|x| (x.head, x.body))
                .collect();
            got.sort();
            ensure(got == want.missing, || {
                format!("graph {g}, {axiom:?}: groundings differ")
            })?;
            match head_coverage(&kg, &axiom) {
                Ok(hc) => ensure(hc == want.head_coverage, || {
                    format!("graph {g}, {axiom:?}: HC {hc} vs oracle {}", want.head_coverage)
                })?,
                Err(_) => ensure(want.head_size == 0, || format!("graph {g}, {axiom:?}: HC failed"))?,
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} (graph, axiom) pairs over 50 graphs"))
}

fn tnorm() -> Outcome {
    let mut r = rng(5);
    for _ in 0..1000 {
        let s = r.gen_range(0.0..=1.0);
        let n = r.gen_range(0..=2);
        let got = solve_head_truth(&vec![1.0; n], s).map_err(|e| e.to_string())?;
        ensure((got - s).abs() <= 1e-12, || {
            format!("s_a={s}, body of {n}: head truth {got}")
        })?;
    }
    for _ in 0..1000 {
        let (a, b) = (r.gen_range(0.0..=1.0), r.gen_range(0.0..=1.0));
        let lhs = Expr::not(Expr::and(Expr::atom(a), Expr::atom(b))).truth();
        let rhs = Expr::or(Expr::not(Expr::atom(a)), Expr::not(Expr::atom(b))).truth();
        let lhs2 = Expr::not(Expr::or(Expr::atom(a), Expr::atom(b))).truth();
        let rhs2 = Expr::and(Expr::not(Expr::atom(a)), Expr::not(Expr::atom(b))).truth();
        ensure((lhs - rhs).abs() <= 1e-12 && (lhs2 - rhs2).abs() <= 1e-12, || {
            format!("De Morgan fails at a={a}, b={b}")
        })?;
    }
    Ok("1000 head-truth solves, 1000 De Morgan pairs".into())
}

fn ranking_oracle() -> Outcome {
    let (n_e, n_r) = (8usize, 3usize);
    let config = TrainConfig {
        dim: 6,
        ..TrainConfig::default()
    };
    let model = EmbeddingModel::init(n_e, n_r, &config, &mut stream(6, 0, Phase::Init)).map_err(|e| e.to_string())?;
    let mut r = rng(6);
    let mut fixture = BTreeSet::new();
    while fixture.len() < 20 {
        fixture.insert(Triple::new(
            r.gen_range(0..n_e as u32),
            r.gen_range(0..n_r as u32),
            r.gen_range(0..n_e as u32),
        ));
    }
    let fixture: Vec<Triple> = fixture.into_iter().collect();
    let known: HashSet<Triple> = fixture.iter().copied().collect();
    let layout = model.layout();
    for t in &fixture {
        let m = common::dense(layout, model.relation_row(t.relation));
        let subj_scores: Vec<f64> = (0..n_e as u32)
            .map(|e| common::sigmoid(common::bilinear(&m, model.entity(e), model.entity(t.object))))
            .collect();
        let obj_scores: Vec<f64> = (0..n_e as u32)
            .map(|e| common::sigmoid(common::bilinear(&m, model.entity(t.subject), model.entity(e))))
            .collect();
        let skip_s: BTreeSet<usize> = (0..n_e)
            .filter(|&e| known.contains(&Triple::new(e as u32, t.relation, t.object)))
            .collect();
        let skip_o: BTreeSet<usize> = (0..n_e)
            .filter(|&e| known.contains(&Triple::new(t.subject, t.relation, e as u32)))
            .collect();
        let none = BTreeSet::new();
        let want_raw = (
            common::sort_rank(&subj_scores, t.subject as usize, &none),
            common::sort_rank(&obj_scores, t.object as usize, &none),
        );
        let want_filter = (
            common::sort_rank(&subj_scores, t.subject as usize, &skip_s),
            common::sort_rank(&obj_scores, t.object as usize, &skip_o),
        );
        let (raw, filtered) = rank_triple(&model, &known, t);
        ensure((raw.subject_rank, raw.object_rank) == want_raw, || {
            format!("{t:?}: raw {raw:?} vs {want_raw:?}")
        })?;
        ensure((filtered.subject_rank, filtered.object_rank) == want_filter, || {
            format!("{t:?}: filtered {filtered:?} vs {want_filter:?}")
        })?;
    }

    // hand-computed table: subject/object ranks of five triples
    let ranks = [(1, 2), (3, 1), (10, 4), (11, 1), (2, 50)];
    let results: Vec<RankResult> = ranks
        .iter()
        .enumerate()
        .map(|(i, &(s, o))| RankResult::new(Triple::new(i as u32, 0, 0), s, o))
        .collect();
    let report = aggregate(&results, &results, &[0]).map_err(|e| e.to_string())?;
    let mrr =
        (1.0 + 1.0 / 2.0 + 1.0 / 3.0 + 1.0 + 1.0 / 10.0 + 1.0 / 4.0 + 1.0 / 11.0 + 1.0 + 1.0 / 2.0 + 1.0 / 50.0) / 10.0;
    let mrr_mean_rank = (1.0 / 1.5 + 1.0 / 2.0 + 1.0 / 7.0 + 1.0 / 6.0 + 1.0 / 26.0) / 5.0;
    let table = [
        ("mrr", report.mrr_filter, mrr),
        ("mrr_mean_rank", report.mrr_mean_rank_filter, mrr_mean_rank),
        ("hit@1", report.hits_filter.at1, 3.0 / 10.0),
        ("hit@3", report.hits_filter.at3, 6.0 / 10.0),
        ("hit@10", report.hits_filter.at10, 8.0 / 10.0),
    ];
    for (name, got, want) in table {
        ensure((got - want).abs() <= 1e-12, || {
            format!("{name}: {got} vs hand value {want}")
        })?;
    }
    Ok("20-triple fixture ranks and MRR/Hit@n table match".into())
}

fn synth_config(data: &Path, out: &Path) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    for (k, v) in [
        ("dim", "32"),
        ("iterations", "10"),
        ("lr", "0.003"),
        ("l1", "0"),
        ("batch_size", "256"),
        ("epochs_per_iteration", "4"),
        ("seed", "0"),
        ("eval_every_iteration", "true"),
        ("checkpoints", "false"),
    ] {
        config.set(k, v).unwrap();
    }
    config.data = data.to_path_buf();
    config.out = out.to_path_buf();
    config
}

/// Rewrites planted axioms from generator ids to the ids the loaded dataset assigned.
fn planted_in(data: &synth::SynthDataset, kg: &KnowledgeGraph) -> Vec<Axiom> {
    data.planted
        .iter()
        .map(|a| {
            let ids: Vec<u32> = a
                .relations()
                .iter()
                .map(|&r| kg.relations().id(data.relations.name(r)).unwrap())
                .collect();
            Axiom::from_relations(a.kind(), &ids).unwrap()
        })
        .collect()
}

fn synthetic_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = synth::generate(&SynthConfig::default());
    data.write(&dir.path().join("data")).map_err(|e| e.to_string())?;
    let config = synth_config(&dir.path().join("data"), &dir.path().join("out"));
    let outcome = run_iterations(&config).map_err(|e| e.to_string())?;
    let loaded = Dataset::load(&config.data).map_err(|e| e.to_string())?;
    ensure(loaded.train.num_entities() == 200, || {
        "fixture is not 200 entities".into()
    })?;

    let mut notes = Vec::new();
    for axiom in planted_in(&data, &loaded.train) {
        let kind = axiom.kind();
        let of_type: Vec<_> = outcome.scored.iter().filter(|s| s.axiom.kind() == kind).collect();
        let entry = of_type
            .iter()
            .find(|s| s.axiom == axiom)
            .ok_or_else(|| format!("{axiom:?} missing from the pool"))?;
        let ahead = of_type.iter().filter(|s| s.score > entry.score).count();
        let top = ((of_type.len() as f64) * 0.1).ceil().max(1.0) as usize;
        ensure(entry.score > 0.9, || format!("{axiom:?} scored {:.4}", entry.score))?;
        ensure(ahead < top, || {
            format!(
                "{axiom:?} has {ahead} of {} {kind} axioms ahead (top-10% allows {})",
                of_type.len(),
                top - 1
            )
        })?;
        notes.push(format!(
            "{}={:.3} (#{} of {})",
            kind,
            entry.score,
            ahead + 1,
            of_type.len()
        ));
    }
    let first = outcome.records[0]
        .metrics
        .as_ref()
        .ok_or("iteration 1 was not evaluated")?
        .mrr_filter;
    let with_axioms = outcome
        .report
        .metrics_with_axioms
        .as_ref()
        .ok_or("no +axioms metrics")?
        .mrr_filter;
    ensure(with_axioms >= first + 0.05, || {
        format!("+axioms filtered MRR {with_axioms:.4} vs iteration-1 plain {first:.4}")
    })?;
    notes.push(format!("MRR iteration-1 plain {first:.3} -> +axioms {with_axioms:.3}"));
    Ok(notes.join(", "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = synth::generate(&SynthConfig::default());
    data.write(&dir.path().join("data")).map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let mut config = synth_config(&dir.path().join("data"), &dir.path().join(run));
        config.iterations = 3;
        run_iterations(&config).map_err(|e| e.to_string())?;
        reports.push(std::fs::read(dir.path().join(run).join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure(reports[0] == reports[1], || {
        "report.json differs between identical runs".into()
    })?;
    Ok(format!("report.json identical ({} bytes)", reports[0].len()))
}

fn fb15k237_dir() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("KGAXIOM_FB15K237").map(PathBuf::from),
        Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/FB15k-237")),
    ];
    candidates.into_iter().flatten().find(|d| d.join("train.txt").exists())
}

fn fb15k237() -> Outcome {
    let Some(dir) = fb15k237_dir() else {
        return Ok("SKIP: no FB15k-237 files (set KGAXIOM_FB15K237 to a directory with train/valid/test.txt)".into());
    };
    let data = Dataset::load(&dir).map_err(|e| e.to_string())?;
    let table = entity_sparsity(&data.train).map_err(|e| e.to_string())?;
    let kept = sparsify_eval_split(&table, &data.test, 0.995).map_err(|e| e.to_string())?;
    let share = kept.len() as f64 / data.test.len() as f64;
    ensure((0.2..=0.8).contains(&share), || {
        format!("sparsify kept {:.1}% of test", 100.0 * share)
    })?;
    let started = Instant::now();
    let pool = generate_pool(&data.train, &PoolConfig::default(), &mut stream(0, 0, Phase::Pool))
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let chains = pool
        .iter()
        .filter(|e| e.axiom.kind() == AxiomType::SubPropertyChain)
        .count();
    ensure(elapsed < Duration::from_secs(120), || {
        format!("pool generation took {elapsed:.1?}")
    })?;
    ensure((1000..10000).contains(&chains), || format!("{chains} chain axioms"))?;
    Ok(format!(
        "test kept {:.1}%, {} chain axioms, pool in {elapsed:.1?}",
        100.0 * share,
        chains
    ))
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "pruning bound",
            budget: Duration::from_secs(1),
            run: pruning_bound,
        },
        Criterion {
            id: 2,
            name: "block algebra",
            budget: Duration::from_secs(5),
            run: block_algebra,
        },
        Criterion {
            id: 3,
            name: "gradient check",
            budget: Duration::from_secs(10),
            run: gradient_check,
        },
        Criterion {
            id: 4,
            name: "support/grounding/HC oracle",
            budget: Duration::from_secs(30),
            run: support_oracle,
        },
        Criterion {
            id: 5,
            name: "t-norm",
            budget: Duration::from_secs(5),
            run: tnorm,
        },
        Criterion {
            id: 6,
            name: "ranking oracle",
            budget: Duration::from_secs(5),
            run: ranking_oracle,
        },
        Criterion {
            id: 7,
            name: "synthetic recovery",
            budget: Duration::from_secs(300),
            run: synthetic_recovery,
        },
        Criterion {
            id: 8,
            name: "determinism",
            budget: Duration::from_secs(120),
            run: determinism,
        },
        Criterion {
            id: 9,
            name: "FB15k-237 sparsify and pool",
            budget: Duration::from_secs(600),
            run: fb15k237,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let started = Instant::now();
        let result = (c.run)();
        let elapsed = started.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; took {elapsed:.2?}, budget {:?}", c.budget)),
            other => other,
        };
        match result {
            Ok(detail) => match detail.strip_prefix("SKIP: ") {
                Some(reason) => println!("SKIP  {}. {} {reason}", c.id, c.name),
                None => println!("PASS  {}. {} [{elapsed:.2?}] {detail}", c.id, c.name),
            },
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}. {} [{elapsed:.2?}] {detail}", c.id, c.name);
            }
        }
    }
    println!("acceptance: {} criteria, {failed} failed", criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
