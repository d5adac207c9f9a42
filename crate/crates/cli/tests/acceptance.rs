//! Acceptance checks. Each criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero if any fails. Runs sequentially so the wall-clock
//! limits measure one check at a time.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution, WeightedIndex};
use statrs::function::gamma::digamma;

use topiq::cmaes::{optimize, BipopConfig, CmaesState, SearchSpace};
use topiq::corpus::{AnswerVariantGroup, DocumentStore, Question};
use topiq::evalmetrics::{factoid_scores, mrr, prf, SynonymLexicon};
use topiq::io::read_json;
use topiq::lda::{learning_rate, LdaHyperParams, TopicModel};
use topiq::retrieval::{query, TopicIndex};
use topiq::textprep::PipelineConfig;
use topiq::tuning::{RetrievalTask, TuningReport};
use topiq::vocab::{BowVector, Vocabulary};

type Outcome = Result<String, String>;
type Check<'a> = (&'static str, Duration, Box<dyn FnOnce() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- metrics

fn oracle_normalize(s: &str) -> String {
    let mut out = String::new();
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let docs: Vec<String> = (0..20).map(|i| format!("d{i}")).collect();
    let surface = ["BRCA1", "brca1", " Brca1 ", "TP53", "p53", "tumour protein 53", "Tumour  Protein 53", "EGFR", "her1", "KRAS"];
    let lex = SynonymLexicon::parse("tp53\tp53\ttumour protein 53\negfr\ther1\n").unwrap();
    let lex_groups: Vec<BTreeSet<String>> = vec![
        ["tp53", "p53", "tumour protein 53"].iter().map(|s| s.to_string()).collect(),
        ["egfr", "her1"].iter().map(|s| s.to_string()).collect(),
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        // document precision / recall / F1
        let retrieved: Vec<&str> = (0..rng.gen_range(0..12)).map(|_| docs.choose(&mut rng).unwrap().as_str()).collect();
        let golden: BTreeSet<String> = docs.iter().filter(|_| rng.gen_bool(0.2)).cloned().collect();
        let got = prf(&retrieved, &golden);
        let unique: BTreeSet<&str> = retrieved.iter().copied().collect();
        let tp = unique.iter().filter(|d| golden.contains(**d)).count() as f64;
        let p = if unique.is_empty() { 0.0 } else { tp / unique.len() as f64 };
        let r = if golden.is_empty() { 0.0 } else { tp / golden.len() as f64 };
        let f = if tp == 0.0 { 0.0 } else { 2.0 * tp / (unique.len() + golden.len()) as f64 };
        for (a, b) in [(got.precision, p), (got.recall, r), (got.f1, f)] {
            worst = worst.max((a - b).abs());
        }

        // factoid accuracies and reciprocal ranks, then MRR over a batch
        let n_questions = rng.gen_range(1..8);
        let mut rrs = Vec::new();
        for _ in 0..n_questions {
            let variants: Vec<&str> = (0..rng.gen_range(1..3)).map(|_| *surface.choose(&mut rng).unwrap()).collect();
            let group = AnswerVariantGroup::new(variants.iter().copied());
            let candidates: Vec<&str> = (0..rng.gen_range(0..8)).map(|_| *surface.choose(&mut rng).unwrap()).collect();
            let got = factoid_scores(&candidates, &group, &lex);

            let mut accepted: HashSet<String> = HashSet::new();
            for v in &variants {
                let v = oracle_normalize(v);
                for g in &lex_groups {
                    if g.contains(&v) {
                        accepted.extend(g.iter().cloned());
                    }
                }
                accepted.insert(v);
            }
            let mut rank = None;
            for (i, c) in candidates.iter().enumerate().take(5) {
                if accepted.contains(&oracle_normalize(c)) {
                    rank = Some(i + 1);
                    break;
                }
            }
            if got.strict != (rank == Some(1)) || got.lenient != rank.is_some() {
                return Err(format!("factoid accuracy mismatch for {candidates:?} vs {variants:?}"));
            }
            let rr = rank.map_or(0.0, |r| 1.0 / r as f64);
            worst = worst.max((got.reciprocal_rank - rr).abs());
            rrs.push(rr);
        }
        let expected = rrs.iter().sum::<f64>() / rrs.len() as f64;
        worst = worst.max((mrr(&rrs).unwrap() - expected).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("1000 instances, max deviation {worst:e}"))
}

// ---------------------------------------------------------------- LDA

fn sample_corpus(rng: &mut ChaCha8Rng, topics: &[Vec<f64>], n_docs: usize, len: usize) -> Vec<BowVector> {
    let mixer = Dirichlet::new(&[0.2; 3]).unwrap();
    let word_dists: Vec<WeightedIndex<f64>> = topics.iter().map(|t| WeightedIndex::new(t).unwrap()).collect();
    (0..n_docs)
        .map(|_| {
            let theta = mixer.sample(rng);
            let topic_pick = WeightedIndex::new(&theta).unwrap();
            let mut counts = BTreeMap::new();
            for _ in 0..len {
                let z = topic_pick.sample(rng);
                *counts.entry(word_dists[z].sample(rng) as u32).or_insert(0u32) += 1;
            }
            BowVector::from_pairs(counts)
        })
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn lda_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = 30;
    let prior = Dirichlet::new(&vec![0.1; v]).unwrap();
    let topics: Vec<Vec<f64>> = (0..3).map(|_| prior.sample(&mut rng)).collect();
    let train = sample_corpus(&mut rng, &topics, 200, 50);
    let held_out = sample_corpus(&mut rng, &topics, 50, 50);

    let hyper = LdaHyperParams {
        num_topics: 3,
        chunksize: 20,
        passes: 10,
        ..Default::default()
    };
    let mut model = TopicModel::init(&hyper, v, 11).map_err(|e| e.to_string())?;
    let before = model.perplexity(&held_out).map_err(|e| e.to_string())?;
    model.train(&train).map_err(|e| e.to_string())?;
    let after = model.perplexity(&held_out).map_err(|e| e.to_string())?;

    let learned = model.topic_word_distributions();
    let rows: Vec<Vec<f64>> = learned.rows().into_iter().map(|r| r.to_vec()).collect();
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let best = perms
        .iter()
        .map(|p| (0..3).map(|i| cosine(&rows[p[i]], &topics[i])).sum::<f64>() / 3.0)
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(after <= 0.8 * before, || format!("perplexity {after:.3} vs untrained {before:.3}"))?;
    ensure(best >= 0.8, || format!("mean best-permutation cosine {best:.3}"))?;
    Ok(format!("perplexity {before:.2} -> {after:.2}, cosine {best:.3}"))
}

/// Slow-path E-step: explicit per-word responsibilities, recomputed from
/// scratch every sweep.
fn reference_e_step(lambda: &Array2<f64>, alpha: f64, doc: &BowVector, iterations: usize) -> (Vec<f64>, Vec<(u32, Vec<f64>)>) {
    let k = lambda.nrows();
    let elog_beta = |t: usize, w: usize| digamma(lambda[[t, w]]) - digamma(lambda.row(t).sum());
    let phi_for = |gamma: &[f64], w: usize| {
        let total: f64 = gamma.iter().sum();
        let raw: Vec<f64> = (0..k).map(|t| (digamma(gamma[t]) - digamma(total) + elog_beta(t, w)).exp()).collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / z).collect::<Vec<f64>>()
    };
    let mut gamma = vec![1.0; k];
    for _ in 0..iterations {
        let mut next = vec![alpha; k];
        for &(w, n) in doc.entries() {
            let phi = phi_for(&gamma, w as usize);
            for t in 0..k {
                next[t] += f64::from(n) * phi[t];
            }
        }
        gamma = next;
    }
    let sstats = doc
        .entries()
        .iter()
        .map(|&(w, n)| (w, phi_for(&gamma, w as usize).into_iter().map(|p| f64::from(n) * p).collect()))
        .collect();
    (gamma, sstats)
}

fn e_step_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(2..7);
        let v = rng.gen_range(5..40);
        let alpha = rng.gen_range(0.05..1.0);
        let hyper = LdaHyperParams {
            num_topics: k,
            iterations: 60,
            gamma_threshold: 0.0,
            alpha: Some(alpha),
            ..Default::default()
        };
        let lambda = Array2::from_shape_fn((k, v), |_| rng.gen_range(0.05..5.0));
        let model = TopicModel::from_parts(&hyper, lambda.clone(), 0, 0).map_err(|e| e.to_string())?;
        let doc = BowVector::from_pairs((0..rng.gen_range(1..15)).map(|_| (rng.gen_range(0..v as u32), rng.gen_range(1..6))));
        let got = model.e_step(&doc).map_err(|e| e.to_string())?;
        let (gamma, sstats) = reference_e_step(&lambda, alpha, &doc, 60);
        for (a, b) in got.gamma.iter().zip(&gamma) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
        ensure(got.sstats.len() == sstats.len(), || "sstats length differs".into())?;
        for ((wa, ca), (wb, cb)) in got.sstats.iter().zip(&sstats) {
            ensure(wa == wb, || "sstats word order differs".into())?;
            for (a, b) in ca.iter().zip(cb) {
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
    }
    ensure(worst <= 1e-8, || format!("max relative deviation {worst:e}"))?;
    Ok(format!("100 pairs, max relative deviation {worst:e}"))
}

fn learning_rate_spots() -> Outcome {
    for (t, want) in [(0, 1.0), (3, 0.5), (99, 0.1)] {
        let got = learning_rate(1.0, 0.5, t);
        ensure((got - want).abs() <= 1e-12, || format!("t={t}: {got} != {want}"))?;
    }
    Ok("t=0,3,99 -> 1.0, 0.5, 0.1".into())
}

// ---------------------------------------------------------------- CMA-ES

fn to_box(u: &[f64]) -> impl Iterator<Item = f64> + '_ {
    u.iter().map(|x| -5.0 + 10.0 * x)
}

fn cmaes_convergence() -> Outcome {
    let mut sphere_best = Vec::new();
    for seed in 0..15 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let shift: Vec<f64> = (0..10).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let f = |u: &[f64]| to_box(u).zip(&shift).map(|(x, s)| (x - s).powi(2)).sum::<f64>();
        let res = optimize(f, 10, &BipopConfig::new(10_000, seed)).map_err(|e| e.to_string())?;
        ensure(res.evaluations <= 10_000, || format!("sphere used {} evaluations", res.evaluations))?;
        sphere_best.push(res.best_fitness);
    }
    sphere_best.sort_by(f64::total_cmp);
    let sphere_median = sphere_best[7];

    let mut solved = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let shift: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let f = |u: &[f64]| {
            to_box(u)
                .zip(&shift)
                .map(|(x, s)| {
                    let z = x - s;
                    z * z - 10.0 * (2.0 * std::f64::consts::PI * z).cos() + 10.0
                })
                .sum::<f64>()
        };
        let res = optimize(f, 5, &BipopConfig::new(50_000, seed)).map_err(|e| e.to_string())?;
        ensure(res.evaluations <= 50_000, || format!("rastrigin used {} evaluations", res.evaluations))?;
        if res.best_fitness < 1.0 {
            solved += 1;
        }
    }
    ensure(sphere_median < 1e-9, || format!("sphere median {sphere_median:e}"))?;
    ensure(solved >= 8, || format!("rastrigin solved in {solved}/10 seeds"))?;
    Ok(format!("sphere median {sphere_median:.2e}, rastrigin solved {solved}/10"))
}

fn sampling_moments() -> Outcome {
    let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
    let state = CmaesState::new(&[0.0, 0.0], 1.0, 1000, false)
        .and_then(|s| s.with_covariance(cov))
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws: Vec<Vec<f64>> = (0..100).flat_map(|_| state.ask(&mut rng)).collect();
    let n = draws.len() as f64;
    let mean = [0, 1].map(|i| draws.iter().map(|x| x[i]).sum::<f64>() / n);
    let c = |i: usize, j: usize| draws.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / (n - 1.0);
    let (c00, c11, c01) = (c(0, 0), c(1, 1), c(0, 1));
    ensure((c00 - 1.0).abs() <= 0.05, || format!("var x0 {c00}"))?;
    ensure((c11 - 4.0).abs() <= 0.05 * 4.0, || format!("var x1 {c11}"))?;
    // a zero target has no relative scale; 5% of the smaller variance
    ensure(c01.abs() <= 0.05, || format!("cov {c01}"))?;
    Ok(format!("{} draws: var {c00:.3}, {c11:.3}, cov {c01:.4}", draws.len()))
}

fn table2_codec() -> Outcome {
    let space = SearchSpace::default();
    let h = LdaHyperParams {
        num_topics: 1241,
        chunksize: 2877,
        passes: 5,
        decay: 0.5,
        eval_every: 10,
        iterations: 188,
        ..Default::default()
    };
    let back = space.decode(&space.encode(&h), &LdaHyperParams::default()).map_err(|e| e.to_string())?;
    ensure(back == h, || format!("{back:?}"))?;
    Ok("1241, 2877, 5, 0.5, 10, 188".into())
}

// ---------------------------------------------------------------- CLI

fn topiq(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_topiq")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("topiq {} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tuning_beats_baseline(work: &Path) -> Outcome {
    let ingest = work.join("ingest");
    topiq(&["ingest", "--dataset", &fixture("tiny_bioasq.json"), "--out", p(&ingest)])?;
    let (q, s) = (ingest.join("questions.json"), ingest.join("store.ndjson"));
    let out = work.join("tune1");
    topiq(&["tune", "--questions", p(&q), "--store", p(&s), "--budget", "200", "--seed", "7", "--out", p(&out)])?;
    let report: TuningReport = read_json(out.join("tuning_report.json")).map_err(|e| e.to_string())?;

    // the default configuration, scored independently of the tuner
    let questions: Vec<Question> = read_json(&q).map_err(|e| e.to_string())?;
    let store = DocumentStore::load(&s).map_err(|e| e.to_string())?;
    ensure(store.len() == 20 && questions.len() == 5, || "fixture size".into())?;
    let prep = PipelineConfig::default();
    let tokens: Vec<Vec<String>> = store.iter().map(|d| topiq::textprep::preprocess(&d.full_text(), &prep)).collect();
    let vocab = Vocabulary::build(&tokens, 1, 1.0).map_err(|e| e.to_string())?;
    let task = RetrievalTask::new(&questions, &store, &prep, &vocab, 10).map_err(|e| e.to_string())?;
    let baseline = task.train_and_score(&LdaHyperParams::default(), 7).map_err(|e| e.to_string())?;

    ensure(report.k == 10, || format!("k = {}", report.k))?;
    ensure(report.evaluations <= 200, || format!("{} evaluations", report.evaluations))?;
    ensure(close(report.baseline_mean_f1, baseline, 1e-12), || format!("report baseline {} vs {baseline}", report.baseline_mean_f1))?;
    ensure(report.best_mean_f1 >= baseline, || format!("tuned {} < baseline {baseline}", report.best_mean_f1))?;
    Ok(format!("mean F1@10 tuned {:.4} vs default {baseline:.4}", report.best_mean_f1))
}

fn retrieval_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let words: Vec<String> = (0..25).map(|i| format!("w{i:02}")).collect();
    let vocab = Vocabulary::build(std::slice::from_ref(&words), 1, 1.0).map_err(|e| e.to_string())?;
    let prep = PipelineConfig::new(Vec::<String>::new(), true, topiq::textprep::Stemmer::None, true);
    let mut ties = 0;
    for trial in 0..100 {
        let k_topics = rng.gen_range(2..6);
        let hyper = LdaHyperParams {
            num_topics: k_topics,
            ..Default::default()
        };
        let lambda = Array2::from_shape_fn((k_topics, words.len()), |_| rng.gen_range(0.1..3.0));
        let model = TopicModel::from_parts(&hyper, lambda, 0, 0).map_err(|e| e.to_string())?;

        // 50 rows, some of them exact copies under other ids
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for i in 0..50 {
            if i > 0 && rng.gen_bool(0.3) {
                rows.push(rows[rng.gen_range(0..i)].clone());
            } else {
                let raw: Vec<f64> = (0..k_topics).map(|_| rng.gen_range(0.0..1.0)).collect();
                let s: f64 = raw.iter().sum();
                rows.push(raw.into_iter().map(|x| x / s).collect());
            }
        }
        let mut ids: Vec<String> = (0..50).map(|i| format!("{}", 9000 - i * 7)).collect();
        ids.shuffle(&mut rng);
        let index = TopicIndex::from_rows(ids.clone(), rows.clone(), k_topics).map_err(|e| e.to_string())?;

        let body: Vec<&str> = (0..rng.gen_range(1..12)).map(|_| words.choose(&mut rng).unwrap().as_str()).collect();
        let body = body.join(" ");
        let k = rng.gen_range(1..60);
        let got = query(&index, &model, &vocab, &prep, &body, k).map_err(|e| e.to_string())?;

        let theta = model.infer(&vocab.to_bow(&topiq::textprep::preprocess(&body, &prep))).map_err(|e| e.to_string())?;
        let mut all: Vec<(f64, &str)> = rows.iter().zip(&ids).map(|(r, id)| (cosine(r, theta.theta()), id.as_str())).collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        all.truncate(k);
        ties += all.windows(2).filter(|w| w[0].0 == w[1].0).count();

        let got_ids = got.doc_ids();
        let want_ids: Vec<&str> = all.iter().map(|x| x.1).collect();
        ensure(got_ids == want_ids, || format!("trial {trial}: {got_ids:?} != {want_ids:?}"))?;
        for (e, (s, _)) in got.entries.iter().zip(&all) {
            ensure(close(e.score, *s, 1e-12), || format!("trial {trial}: score {} vs {s}", e.score))?;
        }
    }
    ensure(ties > 0, || "no ties were exercised".into())?;
    Ok(format!("100 trials, {ties} tied neighbours"))
}

fn determinism(work: &Path) -> Outcome {
    let ingest = work.join("ingest");
    let (q, s) = (ingest.join("questions.json"), ingest.join("store.ndjson"));
    let mut trained = Vec::new();
    for run in ["train1", "train2"] {
        let out = work.join(run);
        topiq(&["train", "--store", p(&s), "--seed", "13", "--num-topics", "8", "--passes", "5", "--chunksize", "6", "--out", p(&out)])?;
        trained.push(out);
    }
    for name in ["model.bin", "model.bin.json", "vocab.json", "train_log.json"] {
        let a = std::fs::read(trained[0].join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(trained[1].join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    let second = work.join("tune2");
    topiq(&["tune", "--questions", p(&q), "--store", p(&s), "--budget", "200", "--seed", "7", "--out", p(&second)])?;
    for name in ["tuning_report.json", "tuned_config.json"] {
        let a = std::fs::read(work.join("tune1").join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(second.join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    Ok("model, vocabulary, train log and tuning report bit-identical".into())
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let checks: Vec<Check> = vec![
        ("metric oracle equivalence", Duration::from_secs(5), Box::new(metric_oracles)),
        ("LDA topic recovery", Duration::from_secs(30), Box::new(lda_recovery)),
        ("e_step oracle", Duration::MAX, Box::new(e_step_oracle)),
        ("learning-rate schedule", Duration::MAX, Box::new(learning_rate_spots)),
        ("CMA-ES convergence", Duration::from_secs(120), Box::new(cmaes_convergence)),
        ("sampling moments", Duration::MAX, Box::new(sampling_moments)),
        ("Table 2 codec", Duration::MAX, Box::new(table2_codec)),
        ("tuning beats default baseline", Duration::from_secs(180), Box::new(|| tuning_beats_baseline(work.path()))),
        ("retrieval oracle", Duration::MAX, Box::new(retrieval_oracle)),
        ("determinism", Duration::MAX, Box::new(|| determinism(work.path()))),
    ];
    let mut failed = 0;
    for (name, limit, check) in checks {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs())),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {name} ({:.1}s): {detail}", elapsed.as_secs_f64()),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name} ({:.1}s): {reason}", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
