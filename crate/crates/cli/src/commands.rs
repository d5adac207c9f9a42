//! Subcommand implementations. Each returns a one-line summary for stdout.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use topiq::cmaes::SearchSpace;
use topiq::corpus::{self, fetch_abstracts, DocumentStore, EutilsFetcher, FetchOptions, Question, QuestionType, DEFAULT_EFETCH_ENDPOINT};
use topiq::evalmetrics::{evaluate, load_predictions, SynonymLexicon};
use topiq::io::{read_json, write_json};
use topiq::lda::{sidecar_path, LdaHyperParams, TopicModel, TrainLog};
use topiq::retrieval::{build_index, load_run, query, save_run, RunFile, DEFAULT_K};
use topiq::squadgen::{build_records, export};
use topiq::textprep::{load_stopwords, preprocess, PipelineConfig};
use topiq::tuning::{tune, RetrievalTask, TuneConfig};
use topiq::vocab::Vocabulary;

use crate::manifest::ManifestBuilder;
use crate::{resolve, CliError, Cli, Command, RunConfig};

pub const DEFAULT_BUDGET: usize = 200;
pub const DEFAULT_MIN_DF: u32 = 1;
pub const DEFAULT_MAX_DF: f64 = 1.0;
pub const PIPELINE_FILE: &str = "pipeline.json";

type Result<T> = std::result::Result<T, CliError>;

pub fn execute(cli: &Cli) -> Result<String> {
    let file = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let cfg = match &cli.command {
        Command::Ingest(a) => resolve(file, a, cli.threads)?,
        Command::Fetch(a) => resolve(file, a, cli.threads)?,
        Command::Train(a) => resolve(file, a, cli.threads)?,
        Command::Tune(a) => resolve(file, a, cli.threads)?,
        Command::Retrieve(a) => resolve(file, a, cli.threads)?,
        Command::Eval(a) => resolve(file, a, cli.threads)?,
        Command::Makesquad(a) => resolve(file, a, cli.threads)?,
    };
    let name = cli.command.name();
    let body = || match &cli.command {
        Command::Ingest(_) => ingest(&cfg),
        Command::Fetch(_) => fetch(&cfg),
        Command::Train(_) => train(&cfg),
        Command::Tune(_) => tune_cmd(&cfg),
        Command::Retrieve(_) => retrieve(&cfg),
        Command::Eval(_) => eval(&cfg),
        Command::Makesquad(_) => makesquad(&cfg),
    };
    let start = Instant::now();
    let (out_dir, done) = match cfg.threads {
        Some(0) => return Err(CliError::usage("INVALID_ARGUMENT", "--threads must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Validation(e.to_string()))?;
            pool.install(body)?
        }
        None => body()?,
    };
    let manifest = ManifestBuilder::new(name, &cfg, cfg.seed, cfg.threads, done.inputs)?.finish(&done.outputs, start.elapsed().as_secs_f64())?;
    write_json(out_dir.join(format!("{name}.manifest.json")), &manifest)?;
    Ok(done.summary)
}

struct Done {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    summary: String,
}

fn missing(flag: &str) -> CliError {
    CliError::usage("MISSING_ARGUMENT", format!("--{flag} is required"))
}

fn input<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    let p = path.as_deref().ok_or_else(|| missing(flag))?;
    if !p.is_file() {
        return Err(CliError::usage("INPUT_NOT_FOUND", format!("--{flag} {} does not exist", p.display())));
    }
    Ok(p)
}

fn optional_input<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<Option<&'a Path>> {
    path.as_ref().map(|_| input(path, flag)).transpose()
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir.clone().ok_or_else(|| missing("out"))?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::usage("OUTPUT_DIR", format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn seed(cfg: &RunConfig) -> Result<u64> {
    cfg.seed.ok_or_else(|| missing("seed"))
}

/// Refuses to write an output over one of the command's inputs.
fn guard_outputs(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    for o in outputs {
        let Ok(o) = o.canonicalize() else { continue };
        for i in inputs {
            if i.canonicalize().map(|i| i == o).unwrap_or(false) {
                return Err(CliError::usage("OUTPUT_OVERWRITES_INPUT", format!("output {} would overwrite an input", o.display())));
            }
        }
    }
    Ok(())
}

fn question_types(cfg: &RunConfig) -> BTreeSet<QuestionType> {
    cfg.question_types.as_ref().map(|v| v.iter().copied().collect()).unwrap_or_else(QuestionType::all)
}

fn load_questions(path: &Path, types: &BTreeSet<QuestionType>) -> Result<Vec<Question>> {
    let qs: Vec<Question> = read_json(path).map_err(|e| match e {
        topiq::Error::Precondition(m) => topiq::Error::MalformedDataset(m),
        other => other,
    })?;
    Ok(qs.into_iter().filter(|q| types.contains(&q.qtype)).collect())
}

fn pipeline(cfg: &RunConfig) -> Result<PipelineConfig> {
    let mut prep = PipelineConfig::default();
    if let Some(s) = cfg.stemmer {
        prep = prep.with_stemmer(s);
    }
    if let Some(path) = optional_input(&cfg.stopwords, "stopwords")? {
        prep = prep.with_stopwords(load_stopwords(path)?);
    }
    Ok(prep)
}

fn hyper(cfg: &RunConfig) -> Result<LdaHyperParams> {
    let d = LdaHyperParams::default();
    let h = LdaHyperParams {
        num_topics: cfg.num_topics.unwrap_or(d.num_topics),
        chunksize: cfg.chunksize.unwrap_or(d.chunksize),
        passes: cfg.passes.unwrap_or(d.passes),
        decay: cfg.decay.unwrap_or(d.decay),
        eval_every: cfg.eval_every.unwrap_or(d.eval_every),
        iterations: cfg.iterations.unwrap_or(d.iterations),
        offset: cfg.offset.unwrap_or(d.offset),
        alpha: cfg.alpha.or(d.alpha),
        eta: cfg.eta.or(d.eta),
        gamma_threshold: cfg.gamma_threshold.unwrap_or(d.gamma_threshold),
    };
    h.validate()?;
    Ok(h)
}

/// Vocabulary over every stored abstract that has text.
fn build_vocab(store: &DocumentStore, prep: &PipelineConfig, cfg: &RunConfig) -> Result<(DocumentStore, Vec<Vec<String>>, Vocabulary)> {
    let complete = store.complete();
    if complete.is_empty() {
        return Err(topiq::Error::EmptyCorpus.into());
    }
    let tokens: Vec<Vec<String>> = complete.iter().map(|d| preprocess(&d.full_text(), prep)).collect();
    let vocab = Vocabulary::build(&tokens, cfg.min_df.unwrap_or(DEFAULT_MIN_DF), cfg.max_df.unwrap_or(DEFAULT_MAX_DF))?;
    Ok((complete, tokens, vocab))
}

fn ingest(cfg: &RunConfig) -> Result<(PathBuf, Done)> {
    let dataset = input(&cfg.dataset, "dataset")?;
    let dir = out_dir(cfg)?;
    let (questions, store) = corpus::load_bioasq(dataset, &question_types(cfg))?;
    let qpath = dir.join("questions.json");
    let spath = dir.join("store.ndjson");
    guard_outputs(&[dataset], &[&qpath, &spath])?;
    write_json(&qpath, &questions)?;
    store.save(&spath)?;
    let stubs = store.unfetched_ids().len();
    let summary = format!("ingested {} questions and {} documents ({stubs} without text)", questions.len(), store.len());
    Ok((dir, Done { inputs: vec![dataset.to_path_buf()], outputs: vec![qpath, spath], summary }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FetchReport {
    pub requested: usize,
    pub fetched: usize,
    pub missing: Vec<String>,
}

fn fetch(cfg: &RunConfig) -> Result<(PathBuf, Done)> {
    let store_path = input(&cfg.store, "store")?;
    let dir = out_dir(cfg)?;
    let spath = dir.join("store.ndjson");
    let rpath = dir.join("fetch_report.json");
    guard_outputs(&[store_path], &[&spath, &rpath])?;

    let mut store = DocumentStore::load(store_path)?;
    let ids = store.unfetched_ids();
    let mut report = FetchReport { requested: ids.len(), fetched: 0, missing: vec![] };
    if !ids.is_empty() {
        let endpoint = cfg.endpoint.clone().unwrap_or_else(|| DEFAULT_EFETCH_ENDPOINT.to_string());
        let mut fetcher = EutilsFetcher::from_env(endpoint);
        if let Some(n) = cfg.batch_size {
            if n == 0 {
                return Err(CliError::usage("INVALID_ARGUMENT", "--batch-size must be >= 1"));
            }
            fetcher = fetcher.with_batch_size(n);
        }
        let mut opts = FetchOptions::default();
        if let Some(ms) = cfg.delay_ms {
            opts.delay = Duration::from_millis(ms);
        }
        let outcome = fetch_abstracts(&ids, &fetcher, &opts)?;
        report.fetched = outcome.docs.len();
        report.missing = outcome.missing;
        store.fill(outcome.docs.into_values());
    }
    store.save(&spath)?;
    write_json(&rpath, &report)?;
    let summary = format!("fetched {} of {} abstracts, {} missing", report.fetched, report.requested, report.missing.len());
    Ok((dir, Done { inputs: vec![store_path.to_path_buf()], outputs: vec![spath, rpath], summary }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub num_docs: usize,
    pub vocab_size: usize,
    pub hyper: LdaHyperParams,
    pub initial_perplexity: f64,
    pub final_perplexity: f64,
    pub log: TrainLog,
}

fn train(cfg: &RunConfig) -> Result<(PathBuf, Done)> {
    let store_path = input(&cfg.store, "store")?;
    let seed = seed(cfg)?;
    let h = hyper(cfg)?;
    let prep = pipeline(cfg)?;
    let dir = out_dir(cfg)?;

    let store = DocumentStore::load(store_path)?;
    let (complete, tokens, vocab) = build_vocab(&store, &prep, cfg)?;
    let corpus: Vec<_> = tokens.iter().map(|t| vocab.to_bow(t)).collect();
    let mut model = TopicModel::init(&h, vocab.len(), seed)?;
    let initial_perplexity = model.perplexity(&corpus)?;
    let log = model.train(&corpus)?;
    let final_perplexity = model.perplexity(&corpus)?;

    let (vpath, mpath, ppath, lpath) = (dir.join("vocab.json"), dir.join("model.bin"), dir.join(PIPELINE_FILE), dir.join("train_log.json"));
    vocab.save(&vpath)?;
    model.save(&mpath)?;
    write_json(&ppath, &prep)?;
    let report = TrainReport {
        num_docs: complete.len(),
        vocab_size: vocab.len(),
        hyper: h.resolved(),
        initial_perplexity,
        final_perplexity,
        log,
    };
    write_json(&lpath, &report)?;
    let summary = format!(
        "trained {} topics on {} abstracts, {} terms; perplexity {initial_perplexity:.3} -> {final_perplexity:.3}",
        h.num_topics,
        complete.len(),
        vocab.len()
    );
    let outputs = vec![vpath, sidecar_path(&mpath), mpath, ppath, lpath];
    let inputs = [Some(store_path.to_path_buf()), cfg.stopwords.clone()].into_iter().flatten().collect();
    Ok((dir, Done { inputs, outputs, summary }))
}

fn tune_cmd(cfg: &RunConfig) -> Result<(PathBuf, Done)> {
    let qpath = input(&cfg.questions, "questions")?;
    let store_path = input(&cfg.store, "store")?;
    let seed = seed(cfg)?;
    let base = hyper(cfg)?;
    let prep = pipeline(cfg)?;
    let budget = cfg.budget.unwrap_or(DEFAULT_BUDGET);
    if budget == 0 {
        return Err(CliError::usage("INVALID_ARGUMENT", "--budget must be >= 1"));
    }
    let mut space = SearchSpace::default();
    for o in cfg.space.iter().flatten() {
        space = space.with_override(o)?;
    }
    let dir = out_dir(cfg)?;

    let questions = load_questions(qpath, &question_types(cfg))?;
    let store = DocumentStore::load(store_path)?;
    let (complete, _, vocab) = build_vocab(&store, &prep, cfg)?;
    let task = RetrievalTask::new(&questions, &complete, &prep, &vocab, cfg.k.unwrap_or(DEFAULT_K))?;
    let report = tune(&task, &TuneConfig { budget, seed, space, base })?;

    let b = &report.best_params;
    let tuned = RunConfig {
        seed: Some(seed),
        num_topics: Some(b.num_topics),
        chunksize: Some(b.chunksize),
        passes: Some(b.passes),
        decay: Some(b.decay),
        eval_every: Some(b.eval_every),
        iterations: Some(b.iterations),
        offset: Some(b.offset),
        alpha: b.alpha,
        eta: b.eta,
        gamma_threshold: Some(b.gamma_threshold),
        stemmer: cfg.stemmer,
        stopwords: cfg.stopwords.clone(),
        min_df: cfg.min_df,
        max_df: cfg.max_df,
        ..Default::default()
    };
    let (rpath, cpath) = (dir.join("tuning_report.json"), dir.join("tuned_config.json"));
    write_json(&rpath, &report)?;
    write_json(&cpath, &compact(&tuned)?)?;
    let summary = format!(
        "tuned over {} evaluations: mean F1@{} {:.4} (baseline {:.4})",
        report.evaluations, report.k, report.best_mean_f1, report.baseline_mean_f1
    );
    let inputs = [Some(qpath.to_path_buf()), Some(store_path.to_path_buf()), cfg.stopwords.clone()].into_iter().flatten().collect();
    Ok((dir, Done { inputs, outputs: vec![rpath, cpath], summary }))
}

/// JSON object without its null entries.
fn compact<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(value).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(obj) = v.as_object_mut() {
        obj.retain(|_, x| !x.is_null());
    }
    Ok(v)
}

fn retrieve(cfg: &RunConfig) -> Result<(PathBuf, Done)> {
    let qpath = input(&cfg.questions, "questions")?;
    let store_path = input(&cfg.store, "store")?;
    let mpath = input(&cfg.model, "model")?;
    let vpath = input(&cfg.vocab, "vocab")?;
    let filter = optional_input(&cfg.doc_filter, "doc-filter")?;
    let k = cfg.k.unwrap_or(DEFAULT_K);
    if k == 0 {
        return Err(CliError::usage("INVALID_ARGUMENT", "--k must be >= 1"));
    }
    let beside = vpath.with_file_name(PIPELINE_FILE);
    let prep: PipelineConfig = if beside.is_file() { read_json(&beside)? } else { pipeline(cfg)? };
    let dir = out_dir(cfg)?;

    let questions = load_questions(qpath, &question_types(cfg))?;
    let mut store = DocumentStore::load(store_path)?.complete();
    if let Some(f) = filter {
        let text = std::fs::read_to_string(f).map_err(|e| topiq::Error::Io { path: f.to_path_buf(), source: e })?;
        store = store.restricted_to(text.lines().map(str::trim).filter(|l| !l.is_empty()));
    }
    if store.is_empty() {
        return Err(topiq::Error::EmptyIndex.into());
    }
    let model = TopicModel::load(mpath)?;
    let vocab = Vocabulary::load(vpath)?;
    let index = build_index(&model, &store, &prep, &vocab)?;
    let run: RunFile = questions
        .iter()
        .map(|q| query(&index, &model, &vocab, &prep, &q.body, k).map(|r| (q.id.clone(), r)))
        .collect::<topiq::Result<_>>()?;
    let rpath = dir.join("run.json");
    save_run(&rpath, &run)?;
    let summary = format!("ranked {} abstracts for {} questions (k = {k})", index.len(), run.len());
    let mut inputs = vec![qpath.to_path_buf(), store_path.to_path_buf(), mpath.to_path_buf(), vpath.to_path_buf()];
    inputs.extend(filter.map(Path::to_path_buf));
    if beside.is_file() {
        inputs.push(beside);
    }
    Ok((dir, Done { inputs, outputs: vec![rpath], summary }))
}

fn load_lexicon(cfg: &RunConfig) -> Result<(SynonymLexicon, Option<PathBuf>)> {
    match optional_input(&cfg.lexicon, "lexicon")? {
        Some(p) => Ok((SynonymLexicon::load(p)?, Some(p.to_path_buf()))),
        None => Ok((SynonymLexicon::new(), None)),
    }
}

fn eval(cfg: &RunConfig) -> Result<(PathBuf, Done)> {
    let qpath = input(&cfg.questions, "questions")?;
    let run_path = optional_input(&cfg.run, "run")?;
    let pred_path = optional_input(&cfg.predictions, "predictions")?;
    if run_path.is_none() && pred_path.is_none() {
        return Err(CliError::usage("MISSING_ARGUMENT", "at least one of --run and --predictions is required"));
    }
    let (lex, lex_path) = load_lexicon(cfg)?;
    let dir = out_dir(cfg)?;

    let questions = load_questions(qpath, &question_types(cfg))?;
    let run = run_path.map(load_run).transpose()?;
    let preds = pred_path.map(load_predictions).transpose()?;
    let report = evaluate(&questions, run.as_ref(), preds.as_ref(), &lex);
    let name = cfg.name.clone().unwrap_or_else(|| "run".to_string());
    let (jpath, cpath) = (dir.join("eval_report.json"), dir.join("eval_summary.csv"));
    report.save(&jpath)?;
    report.save_csv(&cpath, &name)?;
    let summary = report.csv_summary(&name).trim_end().to_string();
    let inputs = [Some(qpath.to_path_buf()), run_path.map(Path::to_path_buf), pred_path.map(Path::to_path_buf), lex_path]
        .into_iter()
        .flatten()
        .collect();
    Ok((dir, Done { inputs, outputs: vec![jpath, cpath], summary }))
}

fn makesquad(cfg: &RunConfig) -> Result<(PathBuf, Done)> {
    let qpath = input(&cfg.questions, "questions")?;
    let store_path = input(&cfg.store, "store")?;
    let (lex, lex_path) = load_lexicon(cfg)?;
    let dir = out_dir(cfg)?;

    let questions = load_questions(qpath, &question_types(cfg))?;
    let store = DocumentStore::load(store_path)?;
    let records = build_records(&questions, &store, &lex);
    let path = dir.join("squad.json");
    export(&records, &path)?;
    let answerable = records.iter().filter(|r| !r.is_impossible).count();
    let summary = format!("exported {} records, {answerable} with answer spans", records.len());
    let inputs = [Some(qpath.to_path_buf()), Some(store_path.to_path_buf()), lex_path].into_iter().flatten().collect();
    Ok((dir, Done { inputs, outputs: vec![path], summary }))
}
