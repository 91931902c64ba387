//! Subcommand implementations. Every artifact embeds the resolved config:
//! JSON files carry a `config` field, CSV files start with a `# config ...`
//! comment line, checkpoints store it in their header.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use pagerec_core::corpus::{
    load_sessions, preprocess, split, stats, write_jsonl, Corpus, SplitCorpora,
};
use pagerec_core::embanalysis::{
    divergence_table_csv, export_embeddings, model_similarity, random_baseline,
};
use pagerec_core::evalharness::{evaluate_model, genre_pop_baseline, EvalReport};
use pagerec_core::hyptrails::{
    build_hypothesis, build_state_space, compare_sweep, count_transitions, sweep_csv,
    HypothesisKind,
};
use pagerec_core::seqmodel::{
    build_vocab, load_checkpoint, save_checkpoint, train, ModelParams, Vocab,
};
use pagerec_core::synthgen::{load_ratings, page_stats, synthesize, SynthVariant};

use crate::config::ExperimentConfig;

pub fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    Path::new(&cfg.out_dir).join(&cfg.experiment)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_text(path, &format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn config_comment(cfg: &ExperimentConfig) -> String {
    format!("# config {}", serde_json::to_string(&cfg.echo()).expect("config serializes"))
}

/// Builds the working corpus per `dataset.*`: load a JSONL session log or
/// synthesize from ratings, optionally drop pages, then preprocess.
pub fn build_corpus(cfg: &ExperimentConfig, seed: u64) -> Result<Corpus> {
    let ds = &cfg.dataset;
    let mut corpus = match ds.kind.as_str() {
        "jsonl" => {
            if ds.path.is_empty() {
                bail!("dataset.path is required for dataset.kind=jsonl");
            }
            load_sessions(&ds.path, ds.dense_dim)?
        }
        "synth" => {
            if ds.ratings.is_empty() || ds.metadata.is_empty() {
                bail!("dataset.ratings and dataset.metadata are required for dataset.kind=synth");
            }
            let ratings = load_ratings(&ds.ratings, &ds.metadata)?;
            let variant = match ds.variant.as_str() {
                "group" => SynthVariant::Group,
                "random" => SynthVariant::Random(ds.shuffle_ratio),
                _ => SynthVariant::Prev,
            };
            synthesize(&ratings, variant, seed)?
        }
        other => bail!("unsupported dataset.kind `{other}`"),
    };
    if ds.items_only {
        corpus = corpus.without_pages();
    }
    if cfg.preprocess.enabled {
        corpus = preprocess(&corpus, &cfg.preprocess.to_core());
    }
    Ok(corpus)
}

fn split_corpus(cfg: &ExperimentConfig, corpus: Corpus, seed: u64) -> Result<SplitCorpora> {
    Ok(split(corpus, cfg.split_strategy(), seed)?)
}

pub fn cmd_ingest(cfg: &ExperimentConfig) -> Result<()> {
    let corpus = build_corpus(cfg, cfg.seeds[0])?;
    let st = stats(&corpus);
    let dir = out_dir(cfg);
    write_json(&dir.join("stats.json"), &json!({ "config": cfg.echo(), "stats": st }))?;
    write_text(
        &dir.join("stats.csv"),
        &format!(
            "{}\n{}\n{}\n",
            config_comment(cfg),
            pagerec_core::corpus::CorpusStats::csv_header(),
            st.csv_row()
        ),
    )?;
    println!("{}", serde_json::to_string_pretty(&st)?);
    Ok(())
}

pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.dataset.kind != "synth" {
        bail!("synth requires dataset.kind=synth");
    }
    let corpus = build_corpus(cfg, cfg.seeds[0])?;
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir)?;
    let corpus_path = dir.join("corpus.jsonl");
    write_jsonl(&corpus, &corpus_path)?;
    println!("wrote {}", corpus_path.display());
    let st = stats(&corpus);
    let ps = if st.n_page_interactions > 0 {
        let p = page_stats(&corpus);
        json!({ "pages_per_session": p.pages_per_session, "avg_genres_per_page": p.avg_genres_per_page })
    } else {
        json!(null)
    };
    write_json(
        &dir.join("stats.json"),
        &json!({ "config": cfg.echo(), "stats": st, "page_stats": ps }),
    )?;
    println!("{}", serde_json::to_string_pretty(&st)?);
    Ok(())
}

pub fn cmd_hyptrails(cfg: &ExperimentConfig) -> Result<()> {
    let corpus = build_corpus(cfg, cfg.seeds[0])?;
    let states = build_state_space(&corpus)?;
    let counts = count_transitions(&corpus, &states)?;
    let hypotheses: Vec<_> = [
        HypothesisKind::Uniform,
        HypothesisKind::Structural,
        HypothesisKind::Mixed,
        HypothesisKind::Data,
    ]
    .iter()
    .map(|&kind| {
        build_hypothesis(&states, kind, (kind == HypothesisKind::Data).then_some(&counts))
    })
    .collect();
    let rows = compare_sweep(&counts, &hypotheses, &cfg.hyptrails.k_values)?;

    let dir = out_dir(cfg);
    write_text(
        &dir.join("sweep.csv"),
        &format!("{}\n{}", config_comment(cfg), sweep_csv(&rows)),
    )?;
    let n_pages = states
        .states
        .iter()
        .filter(|s| s.kind == pagerec_core::hyptrails::StateKind::PageGroup)
        .count();
    write_json(
        &dir.join("states.json"),
        &json!({
            "config": cfg.echo(),
            "n_states": states.len(),
            "n_item_groups": states.len() - n_pages,
            "n_page_groups": n_pages,
            "n_transitions": counts.total(),
        }),
    )?;
    Ok(())
}

fn report_json(cfg: &ExperimentConfig, seed: u64, report: &EvalReport) -> serde_json::Value {
    json!({
        "config": cfg.echo(),
        "seed": seed,
        "model": cfg.train.backend,
        "strategy": cfg.strategy.mode,
        "protocol": cfg.eval_protocol(),
        "report": report,
    })
}

fn eval_split<'a>(cfg: &ExperimentConfig, parts: &'a SplitCorpora) -> &'a Corpus {
    match cfg.eval.split.as_str() {
        "valid" => &parts.valid,
        _ => &parts.test,
    }
}

/// One full train run for one seed; returns the test-split report.
fn train_one_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<EvalReport> {
    let corpus = build_corpus(cfg, seed)?;
    let parts = split_corpus(cfg, corpus, seed)?;
    let strategy = cfg.repr_strategy();
    let vocab = build_vocab(&parts.train, strategy)?;
    let train_cfg = cfg.train_config(seed);
    let (params, log) = train(&parts.train, &parts.valid, &vocab, strategy, &train_cfg)?;

    let report = evaluate_model(
        &params,
        eval_split(cfg, &parts),
        &vocab,
        strategy,
        &cfg.eval.ks,
        cfg.eval_protocol(),
    )?;

    fs::create_dir_all(dir)?;
    let mut log_csv = format!("{}\nepoch,train_loss,valid_hr10,valid_ndcg10\n", config_comment(cfg));
    for row in &log {
        log_csv.push_str(&format!(
            "{},{},{},{}\n",
            row.epoch, row.train_loss, row.valid_hr10, row.valid_ndcg10
        ));
    }
    write_text(&dir.join("log.csv"), &log_csv)?;
    write_json(&dir.join("report.json"), &report_json(cfg, seed, &report))?;
    save_checkpoint(
        dir.join("checkpoint.bin"),
        &params,
        &vocab,
        strategy,
        &train_cfg,
        parts.train.attribute_vocab.tokens(),
    )?;
    println!("wrote {}", dir.join("checkpoint.bin").display());
    Ok(report)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let dir = out_dir(cfg);
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let seed_dir = dir.join(seed.to_string());
        let report = train_one_seed(cfg, seed, &seed_dir)?;
        println!(
            "seed {seed}: hr@10 {:.4}, ndcg@10 {:.4} ({} targets)",
            report.hr(10),
            report.ndcg(10),
            report.n_targets
        );
        reports.push((seed, report));
    }

    let mut aggregate = serde_json::Map::new();
    let ks = &reports[0].1.ks;
    for &k in ks {
        let hrs: Vec<f64> = reports.iter().map(|(_, r)| r.hr(k)).collect();
        let ndcgs: Vec<f64> = reports.iter().map(|(_, r)| r.ndcg(k)).collect();
        let (hm, hs) = mean_std(&hrs);
        let (nm, ns) = mean_std(&ndcgs);
        aggregate.insert(format!("hr{k}"), json!({ "mean": hm, "std": hs }));
        aggregate.insert(format!("ndcg{k}"), json!({ "mean": nm, "std": ns }));
    }
    write_json(
        &dir.join("aggregate.json"),
        &json!({
            "config": cfg.echo(),
            "seeds": cfg.seeds,
            "metrics": aggregate,
        }),
    )?;
    Ok(())
}

pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<()> {
    let seed = cfg.seeds[0];
    let corpus = build_corpus(cfg, seed)?;
    let parts = split_corpus(cfg, corpus, seed)?;
    let dir = out_dir(cfg);

    let (label, report) = if cfg.eval.genre_pop {
        let baseline = genre_pop_baseline(&parts.train);
        let report =
            baseline.evaluate(eval_split(cfg, &parts), &cfg.eval.ks, cfg.eval_protocol())?;
        ("genre_pop".to_string(), report)
    } else {
        if cfg.eval.checkpoint.is_empty() {
            bail!("eval.checkpoint is required (or set eval.genre_pop=true)");
        }
        let ckpt = load_checkpoint(&cfg.eval.checkpoint)?;
        check_attr_alignment(&ckpt.attr_tokens, &parts.train)?;
        let report = evaluate_model(
            &ckpt.params,
            eval_split(cfg, &parts),
            &ckpt.vocab,
            ckpt.strategy,
            &cfg.eval.ks,
            cfg.eval_protocol(),
        )?;
        (cfg.train.backend.clone(), report)
    };

    write_json(&dir.join("report.json"), &report_json(cfg, seed, &report))?;
    write_text(
        &dir.join("report.csv"),
        &format!(
            "{}\n{}\n{}\n",
            config_comment(cfg),
            EvalReport::csv_header(),
            report.csv_row(&label, &cfg.strategy.mode)
        ),
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// A checkpoint's multi-hot channel is indexed by its training attribute
/// vocabulary; evaluation corpora must present attributes identically.
fn check_attr_alignment(attr_tokens: &[String], corpus: &Corpus) -> Result<()> {
    if attr_tokens != corpus.attribute_vocab.tokens() {
        bail!(
            "checkpoint attribute vocabulary ({} tokens) does not match the corpus ({} tokens); \
             evaluate with the same dataset and preprocessing config the model was trained with",
            attr_tokens.len(),
            corpus.attribute_vocab.tokens().len()
        );
    }
    Ok(())
}

pub fn cmd_noise_sweep(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.dataset.kind != "synth" {
        bail!("noise-sweep requires dataset.kind=synth");
    }
    let seed = cfg.seeds[0];
    let dir = out_dir(cfg);
    let mut rows = vec![config_comment(cfg), format!("label,ratio,{}", EvalReport::csv_header())];

    let run = |cfg: &ExperimentConfig, label: &str, ratio_field: String| -> Result<String> {
        let corpus = build_corpus(cfg, seed)?;
        let parts = split_corpus(cfg, corpus, seed)?;
        let strategy = cfg.repr_strategy();
        let vocab = build_vocab(&parts.train, strategy)?;
        let (params, _) = train(&parts.train, &parts.valid, &vocab, strategy, &cfg.train_config(seed))?;
        let report = evaluate_model(
            &params,
            eval_split(cfg, &parts),
            &vocab,
            strategy,
            &cfg.eval.ks,
            cfg.eval_protocol(),
        )?;
        println!("{label}: hr@10 {:.4}", report.hr(10));
        Ok(format!(
            "{label},{ratio_field},{}",
            report.csv_row(&cfg.train.backend, &cfg.strategy.mode)
        ))
    };

    // items-only reference...
    let mut base_cfg = cfg.clone();
    base_cfg.dataset.items_only = true;
    base_cfg.strategy.mode = "upid".into();
    rows.push(run(&base_cfg, "items_only", String::new())?);
    // ...then one run per shuffle ratio
    for &ratio in &cfg.noise.ratios {
        let mut ratio_cfg = cfg.clone();
        ratio_cfg.dataset.variant = "random".into();
        ratio_cfg.dataset.shuffle_ratio = ratio;
        rows.push(run(&ratio_cfg, "random_x", format!("{ratio}"))?);
    }
    write_text(&dir.join("noise_sweep.csv"), &format!("{}\n", rows.join("\n")))?;
    Ok(())
}

pub fn cmd_analyze(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.analyze.checkpoints.is_empty() {
        bail!("analyze.checkpoints must list at least one checkpoint");
    }
    let labels: Vec<String> = if cfg.analyze.labels.is_empty() {
        cfg.analyze
            .checkpoints
            .iter()
            .map(|p| {
                Path::new(p)
                    .parent()
                    .and_then(Path::file_name)
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.clone())
            })
            .collect()
    } else {
        cfg.analyze.labels.clone()
    };

    let dir = out_dir(cfg);
    let mut sims = Vec::new();
    let mut all_labels = Vec::new();
    let mut loaded: Vec<(ModelParams, Vocab)> = Vec::new();
    for (path, label) in cfg.analyze.checkpoints.iter().zip(&labels) {
        let ckpt = load_checkpoint(path).with_context(|| format!("loading {path}"))?;
        sims.push(model_similarity(&ckpt.params, &ckpt.vocab)?);
        all_labels.push(label.clone());
        loaded.push((ckpt.params, ckpt.vocab));
    }
    if cfg.analyze.random_baseline {
        let d = loaded[0].0.dims.d;
        sims.push(random_baseline(
            sims[0].item_ids.clone(),
            d,
            cfg.analyze.random_seed,
        )?);
        all_labels.push("random".into());
    }
    let table = divergence_table_csv(&all_labels, &sims)?;
    write_text(
        &dir.join("divergence.csv"),
        &format!("{}\n{}", config_comment(cfg), table),
    )?;

    if cfg.analyze.export {
        for ((params, vocab), label) in loaded.iter().zip(&labels) {
            let path = dir.join(format!("embeddings_{label}.tsv"));
            export_embeddings(params, vocab, &path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
