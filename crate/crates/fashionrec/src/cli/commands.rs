use std::path::{Path, PathBuf};

use fashionrec_core::corpus::{corpus_validate, ItemId, Split};
use fashionrec_core::embeddings::{
    feature_as, stub_encode, target_token_with_dims, EmbeddingStore,
};
use fashionrec_core::gradcheck::{gradcheck, GradcheckReport, TOLERANCE};
use fashionrec_core::model::{self, Mode, ModelConfig, ModelParams};
use fashionrec_core::retrieval::{build_index, evaluate_fitb, query, FitbScoring};
use fashionrec_core::synth::generate_synthetic;
use fashionrec_core::training::{evaluate_cp, train_cir, train_cp, MetricLog, TrainOutcome};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Command, Common, Data};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::read_json;
use crate::polyvore::{load_corpus_dir, write_corpus_dir, LoadedCorpus};
use crate::run::{metrics_csv, Run, METRICS, SUMMARY};
use crate::{checkpoint, emb, orix};

pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const INDEX_FILE: &str = "index.orix";
const EVAL_BATCH: usize = 64;

pub fn dispatch(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::GenSynth { common } => gen_synth(&common, argv),
        Command::Validate { common, corpus } => validate(&common, corpus),
        Command::EncodeStub { common, corpus } => encode_stub(&common, corpus, argv),
        Command::TrainCp { common, data, init } => train_cp_cmd(&common, &data, init, argv),
        Command::TrainCir {
            common,
            data,
            pretrained,
        } => train_cir_cmd(&common, &data, pretrained, argv),
        Command::EvalCp {
            common,
            data,
            checkpoint,
            split,
        } => eval_cp(&common, &data, &checkpoint, split.into(), argv),
        Command::EvalFitb {
            common,
            data,
            checkpoint,
            split,
            scoring,
        } => eval_fitb(
            &common,
            &data,
            &checkpoint,
            split.into(),
            scoring.map(Into::into),
            argv,
        ),
        Command::IndexBuild {
            common,
            data,
            checkpoint,
        } => index_build(&common, &data, &checkpoint, argv),
        Command::Retrieve {
            common,
            index,
            outfit,
            desc_embedding,
            k,
            category,
            checkpoint,
            embeddings,
        } => retrieve(
            &common,
            RetrieveArgs {
                index,
                outfit,
                desc_embedding,
                k,
                category,
                checkpoint,
                embeddings,
            },
            argv,
        ),
        Command::Gradcheck { common } => gradcheck_cmd(&common, argv),
    }
}

struct Loaded {
    corpus_dir: PathBuf,
    corpus: LoadedCorpus,
    emb_path: PathBuf,
    store: EmbeddingStore,
}

fn corpus_dir(cfg: &RunConfig, arg: Option<PathBuf>) -> Result<PathBuf> {
    arg.or_else(|| cfg.corpus.dir.clone())
        .ok_or_else(|| Error::Usage("no corpus given (--corpus DIR or corpus.dir)".into()))
}

fn load(cfg: &RunConfig, data: &Data) -> Result<Loaded> {
    let corpus_dir = corpus_dir(cfg, data.corpus.clone())?;
    let corpus = load_corpus_dir(&corpus_dir)?;
    let emb_path = data
        .embeddings
        .clone()
        .or_else(|| cfg.embeddings.path.clone())
        .unwrap_or_else(|| corpus_dir.join(EMBEDDINGS_FILE));
    let store = emb::load_store(&emb_path)?;
    Ok(Loaded {
        corpus_dir,
        corpus,
        emb_path,
        store,
    })
}

fn model_for(cfg: &RunConfig, store: &EmbeddingStore) -> ModelConfig {
    cfg.model
        .clone()
        .with_feature_dims(store.image_dim(), store.text_dim())
}

/// Loads a checkpoint and checks it against the embedding dimensions.
fn load_checkpoint(dir: &Path, store: &EmbeddingStore) -> Result<ModelParams<f32>> {
    let params = checkpoint::load(dir)?;
    let c = params.config();
    if c.image_dim != store.image_dim() || c.input_dim != store.feature_dim() {
        return Err(Error::Format(format!(
            "{}: checkpoint expects image_dim={} text_dim={}, embeddings have {}/{}",
            dir.display(),
            c.image_dim,
            c.text_dim(),
            store.image_dim(),
            store.text_dim()
        )));
    }
    Ok(params)
}

fn gen_synth(common: &Common, argv: &[String]) -> Result<()> {
    let cfg = common.resolve()?;
    let out = common.out()?;
    let synth = generate_synthetic(&cfg.corpus.synth)?;
    let mut run = Run::start(out, "gen-synth", argv, cfg.corpus.synth.seed, &cfg)?;
    for p in write_corpus_dir(out, &synth.corpus, Some(&synth.truth))? {
        run.output(p.strip_prefix(out).unwrap_or(&p).to_path_buf());
    }
    let e = &cfg.embeddings;
    let store = stub_encode(
        &synth.corpus,
        e.image_dim,
        e.text_dim,
        e.seed,
        Some(&synth.truth),
    )?;
    save_stub(&store, e.seed, &run.path(EMBEDDINGS_FILE))?;
    run.output(EMBEDDINGS_FILE);
    let report = corpus_validate(&synth.corpus);
    println!(
        "items={} outfits={}/{}/{} fitb={}/{}/{}",
        report.n_items,
        report.n_outfits.train,
        report.n_outfits.valid,
        report.n_outfits.test,
        report.n_fitb_questions.train,
        report.n_fitb_questions.valid,
        report.n_fitb_questions.test
    );
    run.finish()?;
    Ok(())
}

fn save_stub(store: &EmbeddingStore, seed: u64, path: &Path) -> Result<()> {
    let mut header = emb::Header::new(store.image_dim(), store.text_dim());
    header.extra.insert("encoder".into(), json!("stub"));
    header.extra.insert("seed".into(), json!(seed));
    emb::save_with_header(store, &header, path)
}

fn validate(common: &Common, corpus: Option<PathBuf>) -> Result<()> {
    let cfg = common.resolve()?;
    let dir = corpus_dir(&cfg, corpus)?;
    let loaded = load_corpus_dir(&dir)?;
    let report = corpus_validate(&loaded.corpus);
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
    println!("{text}");
    if let Some(out) = &common.out {
        crate::io::write_json(&out.join("validation.json"), &report)?;
    }
    if report.is_clean() {
        Ok(())
    } else {
        Err(fashionrec_core::Error::Validation(format!(
            "{} unresolved item id(s)",
            report.unresolved_ids.len()
        ))
        .into())
    }
}

fn encode_stub(common: &Common, corpus: Option<PathBuf>, argv: &[String]) -> Result<()> {
    let cfg = common.resolve()?;
    let out = common.out()?;
    let dir = corpus_dir(&cfg, corpus)?;
    let loaded = load_corpus_dir(&dir)?;
    let e = &cfg.embeddings;
    let store = stub_encode(
        &loaded.corpus,
        e.image_dim,
        e.text_dim,
        e.seed,
        loaded.truth.as_ref(),
    )?;
    let mut run = Run::start(out, "encode-stub", argv, e.seed, &cfg)?;
    run.input("corpus", &dir)?;
    save_stub(&store, e.seed, &run.path(EMBEDDINGS_FILE))?;
    run.output(EMBEDDINGS_FILE);
    println!(
        "encoded {} items ({}+{} dims)",
        store.len(),
        e.image_dim,
        e.text_dim
    );
    run.finish()?;
    Ok(())
}

/// Resolved config with the paths and dimensions the run actually used.
fn effective(cfg: &RunConfig, data: &Loaded, model: &ModelConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.corpus.dir = Some(data.corpus_dir.clone());
    c.embeddings.path = Some(data.emb_path.clone());
    c.model = model.clone();
    c
}

fn print_log(log: &MetricLog) {
    for r in log.rows() {
        let mut line = format!(
            "epoch {:>3} {:<5} loss {:.5}",
            r.epoch,
            r.split.name(),
            r.loss
        );
        if let Some(a) = r.accuracy {
            line += &format!(" acc {a:.4}");
        }
        if let Some(a) = r.auc {
            line += &format!(" auc {a:.4}");
        }
        if let Some(a) = r.fitb_accuracy {
            line += &format!(" fitb {a:.4}");
        }
        println!("{line}");
    }
}

fn save_outcome(run: &mut Run, outcome: &TrainOutcome<f32>) -> Result<()> {
    checkpoint::save(&outcome.best, &run.path("best"))?;
    run.output("best");
    checkpoint::save(&outcome.last, &run.path("last"))?;
    run.output("last");
    run.write_text(METRICS, &metrics_csv(&outcome.log)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub command: String,
    pub epochs: usize,
    pub best_epoch: usize,
    /// Validation AUC (compatibility) or FITB accuracy (retrieval).
    pub best_valid_metric: Option<f64>,
    pub test_metric: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrained_checkpoint: Option<PathBuf>,
}

fn train_cp_cmd(
    common: &Common,
    data: &Data,
    init: Option<PathBuf>,
    argv: &[String],
) -> Result<()> {
    let cfg = common.resolve()?;
    let out = common.out()?;
    let loaded = load(&cfg, data)?;
    let model = model_for(&cfg, &loaded.store);
    let start = init
        .as_deref()
        .map(|p| checkpoint::load_for(p, &model))
        .transpose()?;
    let mut run = Run::start(
        out,
        "train-cp",
        argv,
        cfg.train.seed,
        &effective(&cfg, &loaded, &model),
    )?;
    run.input("corpus", &loaded.corpus_dir)?;
    run.input("embeddings", &loaded.emb_path)?;
    if let Some(p) = &init {
        run.input("init", p)?;
    }
    let corpus = &loaded.corpus.corpus;
    let outcome = train_cp::<f32>(corpus, &loaded.store, &model, &cfg.train, &cfg.loss, start)?;
    print_log(&outcome.log);
    save_outcome(&mut run, &outcome)?;
    let test = if corpus.cp.test.is_empty() {
        None
    } else {
        Some(
            evaluate_cp(
                &outcome.best,
                &loaded.store,
                &corpus.cp.test,
                cfg.loss.gamma,
                EVAL_BATCH,
            )?
            .auc,
        )
    };
    let summary = TrainSummary {
        command: "train-cp".into(),
        epochs: cfg.train.epochs,
        best_epoch: outcome.best_epoch,
        best_valid_metric: outcome.best_metric,
        test_metric: test,
        pretrained_checkpoint: init,
    };
    println!(
        "best epoch {} valid auc {} test auc {}",
        summary.best_epoch,
        fmt_opt(summary.best_valid_metric),
        fmt_opt(summary.test_metric)
    );
    run.write_json(SUMMARY, &summary)?;
    run.finish()?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn train_cir_cmd(
    common: &Common,
    data: &Data,
    pretrained: Option<PathBuf>,
    argv: &[String],
) -> Result<()> {
    let mut cfg = common.resolve()?;
    let out = common.out()?;
    let loaded = load(&cfg, data)?;
    let model = model_for(&cfg, &loaded.store);
    let pretrained =
        pretrained.or_else(|| cfg.train.pretrained_checkpoint.as_ref().map(PathBuf::from));
    cfg.train.pretrained_checkpoint = pretrained.as_ref().map(|p| p.display().to_string());
    let start = pretrained
        .as_deref()
        .map(|p| checkpoint::load_for(p, &model))
        .transpose()?;
    let mut run = Run::start(
        out,
        "train-cir",
        argv,
        cfg.train.seed,
        &effective(&cfg, &loaded, &model),
    )?;
    run.input("corpus", &loaded.corpus_dir)?;
    run.input("embeddings", &loaded.emb_path)?;
    if let Some(p) = &pretrained {
        run.input("pretrained", p)?;
    }
    let corpus = &loaded.corpus.corpus;
    let outcome = train_cir::<f32>(corpus, &loaded.store, &model, &cfg.train, &cfg.loss, start)?;
    print_log(&outcome.log);
    save_outcome(&mut run, &outcome)?;
    let test = if corpus.fitb.test.is_empty() {
        None
    } else {
        Some(
            evaluate_fitb(
                &outcome.best,
                &loaded.store,
                &corpus.fitb.test,
                FitbScoring::Distance,
            )?
            .accuracy,
        )
    };
    let summary = TrainSummary {
        command: "train-cir".into(),
        epochs: cfg.train.epochs,
        best_epoch: outcome.best_epoch,
        best_valid_metric: outcome.best_metric,
        test_metric: test,
        pretrained_checkpoint: pretrained,
    };
    println!(
        "best epoch {} valid fitb {} test fitb {}",
        summary.best_epoch,
        fmt_opt(summary.best_valid_metric),
        fmt_opt(summary.test_metric)
    );
    run.write_json(SUMMARY, &summary)?;
    run.finish()?;
    Ok(())
}

fn eval_cp(common: &Common, data: &Data, ckpt: &Path, split: Split, argv: &[String]) -> Result<()> {
    let cfg = common.resolve()?;
    let loaded = load(&cfg, data)?;
    let params = load_checkpoint(ckpt, &loaded.store)?;
    let examples = loaded.corpus.corpus.cp.get(split);
    let eval = evaluate_cp(&params, &loaded.store, examples, cfg.loss.gamma, EVAL_BATCH)?;
    println!(
        "split {} n {} auc {:.4} accuracy {:.4} loss {:.5}",
        split.name(),
        examples.len(),
        eval.auc,
        eval.accuracy,
        eval.loss_sum / examples.len() as f64
    );
    if let Some(out) = &common.out {
        let mut run = Run::start(out, "eval-cp", argv, cfg.train.seed, &cfg)?;
        run.input("checkpoint", ckpt)?;
        run.input("corpus", &loaded.corpus_dir)?;
        run.input("embeddings", &loaded.emb_path)?;
        let mut csv = String::from("index,label,score\n");
        for (i, (l, s)) in eval.labels.iter().zip(&eval.scores).enumerate() {
            csv += &format!("{i},{l},{s}\n");
        }
        run.write_text("cp_scores.csv", &csv)?;
        run.write_json(
            "eval_cp.json",
            &json!({
                "split": split.name(),
                "n": examples.len(),
                "auc": eval.auc,
                "accuracy": eval.accuracy,
                "threshold": 0.5,
                "loss_sum": eval.loss_sum,
            }),
        )?;
        run.finish()?;
    }
    Ok(())
}

fn eval_fitb(
    common: &Common,
    data: &Data,
    ckpt: &Path,
    split: Split,
    scoring: Option<FitbScoring>,
    argv: &[String],
) -> Result<()> {
    let cfg = common.resolve()?;
    let loaded = load(&cfg, data)?;
    let params = load_checkpoint(ckpt, &loaded.store)?;
    let questions = loaded.corpus.corpus.fitb.get(split);
    let scoring = scoring.unwrap_or(cfg.retrieval.scoring);
    let report = evaluate_fitb(&params, &loaded.store, questions, scoring)?;
    let mut csv = String::from("question_index,answer_index,predicted_index,correct,scores\n");
    for r in &report.records {
        let scores: Vec<String> = r.scores.iter().map(|s| s.to_string()).collect();
        csv += &format!(
            "{},{},{},{},{}\n",
            r.question_index,
            r.answer,
            r.predicted,
            u8::from(r.correct()),
            scores.join(";")
        );
    }
    println!(
        "split {} n {} fitb accuracy {:.4}",
        split.name(),
        questions.len(),
        report.accuracy
    );
    match &common.out {
        Some(out) => {
            let mut run = Run::start(out, "eval-fitb", argv, cfg.train.seed, &cfg)?;
            run.input("checkpoint", ckpt)?;
            run.input("corpus", &loaded.corpus_dir)?;
            run.input("embeddings", &loaded.emb_path)?;
            run.write_text("fitb_questions.csv", &csv)?;
            run.write_json(
                "eval_fitb.json",
                &json!({
                    "split": split.name(),
                    "n": questions.len(),
                    "scoring": scoring,
                    "accuracy": report.accuracy,
                }),
            )?;
            run.finish()?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

/// Sidecar written next to an index so `retrieve` can find its model.
#[derive(Debug, Serialize, Deserialize)]
struct IndexInfo {
    checkpoint: PathBuf,
    embeddings: PathBuf,
    n_items: usize,
    dim: usize,
}

fn sidecar(index: &Path) -> PathBuf {
    index.with_extension("json")
}

fn index_build(common: &Common, data: &Data, ckpt: &Path, argv: &[String]) -> Result<()> {
    let cfg = common.resolve()?;
    let out = common.out()?;
    let loaded = load(&cfg, data)?;
    let params = load_checkpoint(ckpt, &loaded.store)?;
    let corpus = &loaded.corpus.corpus;
    let ids: Vec<ItemId> = corpus.items.keys().cloned().collect();
    let index = build_index(&params, &loaded.store, Some(corpus), &ids)?;
    let mut run = Run::start(out, "index-build", argv, cfg.train.seed, &cfg)?;
    run.input("checkpoint", ckpt)?;
    run.input("corpus", &loaded.corpus_dir)?;
    run.input("embeddings", &loaded.emb_path)?;
    let path = run.path(INDEX_FILE);
    orix::save(&index, &path)?;
    run.output(INDEX_FILE);
    let info = IndexInfo {
        checkpoint: absolute(ckpt),
        embeddings: absolute(&loaded.emb_path),
        n_items: index.len(),
        dim: index.dim(),
    };
    let side = sidecar(&path);
    crate::io::write_json(&side, &info)?;
    run.output(side.file_name().map(PathBuf::from).unwrap_or_default());
    println!(
        "indexed {} items (dim {}) -> {}",
        index.len(),
        index.dim(),
        path.display()
    );
    run.finish()?;
    Ok(())
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

struct RetrieveArgs {
    index: PathBuf,
    outfit: PathBuf,
    desc_embedding: PathBuf,
    k: Option<usize>,
    category: Option<String>,
    checkpoint: Option<PathBuf>,
    embeddings: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DescFile {
    Plain(Vec<f32>),
    Keyed { text_embedding: Vec<f32> },
}

fn retrieve(common: &Common, args: RetrieveArgs, argv: &[String]) -> Result<()> {
    let cfg = common.resolve()?;
    let index = orix::load(&args.index)?;
    let info: Option<IndexInfo> = {
        let side = sidecar(&args.index);
        side.is_file().then(|| read_json(&side)).transpose()?
    };
    let missing = |what: &str| {
        Error::Usage(format!(
            "--{what} not given and no index sidecar records it"
        ))
    };
    let ckpt = args
        .checkpoint
        .or_else(|| info.as_ref().map(|i| i.checkpoint.clone()))
        .ok_or_else(|| missing("checkpoint"))?;
    let emb_path = args
        .embeddings
        .or_else(|| cfg.embeddings.path.clone())
        .or_else(|| info.as_ref().map(|i| i.embeddings.clone()))
        .ok_or_else(|| missing("embeddings"))?;
    let store = emb::load_store(&emb_path)?;
    let params = load_checkpoint(&ckpt, &store)?;
    if params.config().index_dim != index.dim() {
        return Err(Error::Format(format!(
            "index dim {} does not match the checkpoint's index_dim {}",
            index.dim(),
            params.config().index_dim
        )));
    }
    let outfit: Vec<ItemId> = read_json(&args.outfit)?;
    let desc = match read_json::<DescFile>(&args.desc_embedding)? {
        DescFile::Plain(v) | DescFile::Keyed { text_embedding: v } => v,
    };
    let feats = outfit
        .iter()
        .map(|id| feature_as::<f32>(&store, id))
        .collect::<fashionrec_core::Result<Vec<_>>>()?;
    let refs: Vec<&[f32]> = feats.iter().map(Vec::as_slice).collect();
    let token = target_token_with_dims(store.image_dim(), store.text_dim(), &desc)?;
    let t = model::forward_cir(&params, &refs, token.as_slice(), &mut Mode::Eval)?;
    let k = args.k.unwrap_or(cfg.retrieval.k);
    let category = args.category.or(cfg.retrieval.category_filter.clone());
    let result = query(&index, &t, k, category.as_deref())?;
    for (rank, hit) in result.hits.iter().enumerate() {
        println!("{}\t{}\t{:.6}", rank + 1, hit.item_id, hit.distance);
    }
    if result.pool_exhausted {
        eprintln!(
            "note: only {} candidate(s) available for k={k}",
            result.hits.len()
        );
    }
    if let Some(out) = &common.out {
        let mut run = Run::start(out, "retrieve", argv, cfg.train.seed, &cfg)?;
        run.input("index", &args.index)?;
        run.input("checkpoint", &ckpt)?;
        run.input("embeddings", &emb_path)?;
        run.input("outfit", &args.outfit)?;
        run.input("desc_embedding", &args.desc_embedding)?;
        let hits: Vec<Value> = result
            .hits
            .iter()
            .map(|h| json!({"item_id": h.item_id, "distance": h.distance}))
            .collect();
        run.write_json(
            "retrieval.json",
            &json!({"k": k, "category_filter": category, "pool_exhausted": result.pool_exhausted, "hits": hits}),
        )?;
        run.finish()?;
    }
    Ok(())
}

fn print_gradcheck(report: &GradcheckReport) {
    println!(
        "{:<32} {:>6} {:>12} {:>12}",
        "tensor", "numel", "focal", "ranking"
    );
    for (f, r) in report.focal.iter().zip(&report.ranking) {
        println!(
            "{:<32} {:>6} {:>12.3e} {:>12.3e}",
            f.name, f.numel, f.rel_error, r.rel_error
        );
    }
    println!(
        "max relative error {:.3e} (tolerance {TOLERANCE:.0e})",
        report.max_rel_error()
    );
}

fn gradcheck_cmd(common: &Common, argv: &[String]) -> Result<()> {
    let seed = common.seed.unwrap_or(0);
    let report = gradcheck(seed)?;
    print_gradcheck(&report);
    if let Some(out) = &common.out {
        let mut run = Run::start(out, "gradcheck", argv, seed, &json!({"seed": seed}))?;
        run.write_json("gradcheck.json", &report)?;
        run.finish()?;
    }
    if report.passes(TOLERANCE) {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "max relative error {:.3e} exceeds {TOLERANCE:.0e}",
            report.max_rel_error()
        )))
    }
}
