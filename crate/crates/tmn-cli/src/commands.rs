//! What each subcommand actually does.

use std::collections::HashSet;
use std::fs;
use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use tmn::checkpoint;
use tmn::config::{Architecture, TrainConfig};
use tmn::corpus::{self, PreparedCorpus, Vocabulary, PAD_TOKEN};
use tmn::eval::{self, MetricsReport};
use tmn::memory;
use tmn::model::TrainedModel;
use tmn::ntm;
use tmn::tensor::Tape;
use tmn::train::{self, TrainError};

use crate::failure::Failure;
use crate::settings::{self, Settings};
use crate::{ClassifyArgs, EvalArgs, PrepareArgs, SweepArgs, TopicsArgs, TrainArgs, TrainKnobs};

/// Words shown per topic in every listing and coherence score.
const TOP_WORDS: usize = 10;

fn apply_knobs(s: &mut Settings, knobs: &TrainKnobs) -> Result<(), Failure> {
    if let Some(v) = knobs.lambda {
        s.train.lambda = v;
    }
    if let Some(v) = knobs.gamma {
        s.train.gamma = v;
    }
    if let Some(v) = knobs.e {
        s.train.e = v;
    }
    if let Some(v) = knobs.h_e {
        s.train.h_e = v;
    }
    if let Some(v) = knobs.cnn_features {
        s.train.cnn_features = v;
    }
    if let Some(widths) = &knobs.filter_widths {
        s.train.filter_widths = settings::parse_widths(widths).map_err(Failure::input)?;
    }
    if let Some(v) = knobs.epochs {
        s.train.epochs = v;
    }
    if let Some(v) = knobs.patience {
        s.train.patience = v;
    }
    if let Some(v) = knobs.kl_warmup_epochs {
        s.train.kl_warmup_epochs = v;
    }
    if let Some(v) = knobs.batch_size {
        s.train.batch_size = v;
    }
    if let Some(v) = knobs.learning_rate {
        s.train.learning_rate = v;
    }
    if let Some(mode) = &knobs.mode {
        s.mode = settings::parse_mode(mode).map_err(Failure::input)?;
    }
    if let Some(arch) = &knobs.arch {
        s.arch = settings::parse_arch(arch).map_err(Failure::input)?;
    }
    if let Some(v) = knobs.decoder_bias {
        s.train.decoder_bias = v;
    }
    if let Some(path) = &knobs.embeddings {
        s.embeddings = Some(path.clone());
    }
    if let Some(seed) = knobs.seed {
        s.set_seed(seed);
    }
    Ok(())
}

fn require(path: Option<PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
    path.ok_or_else(|| Failure::input(format!("--{flag} is required (flag or config file)")))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::file(dir, e))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure::file(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out).and_then(|()| out.flush()).map_err(|e| Failure::file(path, e))
}

fn load_stopwords(path: Option<&Path>, lowercase: bool) -> Result<HashSet<String>, Failure> {
    let Some(path) = path else { return Ok(HashSet::new()) };
    let text = fs::read_to_string(path).map_err(|e| Failure::file(path, e))?;
    Ok(text
        .split_whitespace()
        .map(|w| if lowercase { w.to_lowercase() } else { w.to_owned() })
        .collect())
}

pub fn prepare(args: PrepareArgs) -> Result<(), Failure> {
    let mut s = Settings::load(args.config.as_deref())?;
    if let Some(v) = args.min_count {
        s.prepare.min_count = v;
    }
    if let Some(v) = args.l_max {
        s.prepare.l_max = Some(v);
    }
    if let Some(v) = args.lowercase {
        s.prepare.lowercase = v;
    }
    if let Some(v) = args.binary_bow {
        s.prepare.binary_bow = v;
    }
    if let Some(v) = args.seed {
        s.set_seed(v);
    }
    if let Some(path) = args.stopwords {
        s.stopwords = Some(path);
    }

    let input = fs::read_to_string(&args.input).map_err(|e| Failure::file(&args.input, e))?;
    let stopwords = load_stopwords(s.stopwords.as_deref(), s.prepare.lowercase)?;
    let prepared = corpus::prepare_corpus(&input, &stopwords, &s.prepare)?;

    create_dir(&args.out)?;
    corpus::save_prepared(&args.out, &prepared)?;

    println!("{}", prepared.summary());
    println!(
        "Split sizes: train {} / dev {} / test {}",
        prepared.split.train.len(),
        prepared.split.dev.len(),
        prepared.split.test.len()
    );
    println!("Prepared corpus written to {}", args.out.display());
    Ok(())
}

fn topic_lists(w_phi: &tmn::tensor::Tensor, vocab: &Vocabulary, n: usize) -> Vec<Vec<String>> {
    (0..w_phi.shape()[0]).map(|k| ntm::top_words(w_phi, vocab, k, n)).collect()
}

fn write_topics_txt(path: &Path, topics: &[Vec<String>]) -> Result<(), Failure> {
    write_file(path, |out| {
        for (k, words) in topics.iter().enumerate() {
            writeln!(out, "{}\t{}", k, words.join(" "))?;
        }
        Ok(())
    })
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    let mut s = Settings::load(args.config.as_deref())?;
    apply_knobs(&mut s, &args.knobs)?;
    if let Some(v) = args.k {
        s.train.k = v;
    }
    if let Some(v) = args.hops {
        s.train.hops = v;
    }
    if let Some(path) = args.corpus {
        s.corpus = Some(path);
    }
    if let Some(path) = args.out {
        s.output_dir = Some(path);
    }
    let corpus_dir = require(s.corpus.clone(), "corpus")?;
    let out_dir = require(s.output_dir.clone(), "out")?;

    let prepared = corpus::load_prepared(&corpus_dir)?;
    let embeddings = match &s.embeddings {
        Some(path) => {
            Some(BufReader::new(File::open(path).map_err(|e| Failure::file(path, e))?))
        }
        None => None,
    };
    let outcome = train::train_with_embeddings(&prepared, &s.train, s.mode, s.arch, embeddings)?;

    create_dir(&out_dir)?;
    let ckpt_path = out_dir.join("model.ckpt");
    checkpoint::save_file(&ckpt_path, &outcome.trained, s.mode)
        .map_err(|e| Failure::file(&ckpt_path, e))?;
    write_file(&out_dir.join("train_log.csv"), |out| train::write_log_csv(&outcome.log, out))?;
    let topics = topic_lists(&outcome.trained.model.w_phi(), &outcome.trained.vocab, TOP_WORDS);
    write_topics_txt(&out_dir.join("topics.txt"), &topics)?;

    println!(
        "Trained for {} epochs; kept epoch {} (dev accuracy {:.4})",
        outcome.log.len(),
        outcome.best_epoch,
        outcome.best_dev_acc
    );
    if outcome.stopped_early {
        println!("Stopped early: dev score flat for {} epochs", s.train.patience);
    }
    println!("Wrote model.ckpt, train_log.csv, topics.txt to {}", out_dir.display());
    Ok(())
}

/// The checkpoint must describe exactly the corpus it is scored or
/// inspected against; anything else silently misaligns word indices.
fn check_vocab(trained: &TrainedModel, prepared: &PreparedCorpus) -> Result<(), Failure> {
    if trained.vocab != prepared.vocab {
        return Err(Failure::vocab_mismatch(format!(
            "checkpoint bag-of-words vocabulary ({} words) does not match the corpus ({} words)",
            trained.vocab.len(),
            prepared.vocab.len()
        )));
    }
    if trained.seq_vocab != prepared.seq_vocab {
        return Err(Failure::vocab_mismatch(format!(
            "checkpoint sequence vocabulary ({} words) does not match the corpus ({} words)",
            trained.seq_vocab.len(),
            prepared.seq_vocab.len()
        )));
    }
    if trained.labels != prepared.labels {
        return Err(Failure::vocab_mismatch(format!(
            "checkpoint labels {:?} do not match the corpus labels {:?}",
            trained.labels, prepared.labels
        )));
    }
    Ok(())
}

fn split_indices<'c>(prepared: &'c PreparedCorpus, name: &str) -> Result<&'c [usize], Failure> {
    match name {
        "train" => Ok(&prepared.split.train),
        "dev" => Ok(&prepared.split.dev),
        "test" => Ok(&prepared.split.test),
        other => Err(Failure::input(format!("split must be train, dev, or test, not {other:?}"))),
    }
}

#[derive(serde::Serialize)]
struct EvalReport<'a> {
    split: &'a str,
    model: &'a MetricsReport,
    baseline: &'a MetricsReport,
    mean_npmi: f64,
}

pub fn eval(args: EvalArgs) -> Result<(), Failure> {
    let (trained, _mode) = checkpoint::load_file(&args.checkpoint)?;
    let prepared = corpus::load_prepared(&args.corpus)?;
    check_vocab(&trained, &prepared)?;
    let indices = split_indices(&prepared, &args.split)?;

    let mut pred = Vec::with_capacity(indices.len());
    let mut gold = Vec::with_capacity(indices.len());
    for &i in indices {
        let p = trained.predict_document(&prepared.docs[i]).map_err(Failure::internal)?;
        pred.push(p.label);
        gold.push(prepared.docs[i].label);
    }
    let c = prepared.labels.len();
    let model_metrics = eval::classification_metrics(&pred, &gold, c).map_err(Failure::input)?;
    let train_gold: Vec<usize> =
        prepared.split.train.iter().map(|&i| prepared.docs[i].label).collect();
    let baseline = eval::majority_vote_baseline(&train_gold, &gold, &prepared.labels)
        .map_err(Failure::input)?;

    let topics = topic_lists(&trained.model.w_phi(), &trained.vocab, TOP_WORDS);
    let reference = eval::document_word_sets(&prepared, &prepared.split.train);
    let coherence = eval::npmi_coherence(&topics, &reference, TOP_WORDS);

    create_dir(&args.out)?;
    let report = EvalReport {
        split: &args.split,
        model: &model_metrics,
        baseline: &baseline,
        mean_npmi: coherence.mean_npmi,
    };
    write_file(&args.out.join("metrics.json"), |out| {
        serde_json::to_writer_pretty(&mut *out, &report)?;
        writeln!(out)
    })?;
    write_file(&args.out.join("coherence.tsv"), |out| {
        eval::write_coherence_tsv(out, &coherence, &topics)
    })?;

    println!(
        "{} split: accuracy {:.4}, macro F1 {:.4} over {} documents",
        args.split,
        model_metrics.accuracy,
        model_metrics.macro_f1,
        indices.len()
    );
    println!(
        "majority baseline: accuracy {:.4}, macro F1 {:.4}",
        baseline.accuracy, baseline.macro_f1
    );
    println!("mean topic NPMI: {:.4}", coherence.mean_npmi);
    println!("Wrote metrics.json and coherence.tsv to {}", args.out.display());
    Ok(())
}

pub fn topics(args: TopicsArgs) -> Result<(), Failure> {
    let (trained, _mode) = checkpoint::load_file(&args.checkpoint)?;
    let topics = topic_lists(&trained.model.w_phi(), &trained.vocab, TOP_WORDS);
    create_dir(&args.out)?;
    write_topics_txt(&args.out.join("topics.txt"), &topics)?;
    println!("{} topics written to {}", topics.len(), args.out.join("topics.txt").display());

    let Some(index) = args.inspect else { return Ok(()) };
    if trained.model.arch == Architecture::ThetaConcat {
        return Err(Failure::input(
            "this checkpoint uses the mixture-only head, which has no match matrix to visualize",
        ));
    }
    let corpus_dir = require(args.corpus, "corpus")?;
    let prepared = corpus::load_prepared(&corpus_dir)?;
    check_vocab(&trained, &prepared)?;
    if index >= prepared.docs.len() {
        return Err(Failure::unknown_doc(format!(
            "document {index} is out of range (corpus has {} documents)",
            prepared.docs.len()
        )));
    }
    let hops = trained.model.config.hops;
    let hop = args.hop.unwrap_or(hops - 1);
    if hop >= hops {
        return Err(Failure::input(format!("hop {hop} is out of range (model has {hops} hops)")));
    }

    let doc = &prepared.docs[index];
    let tape = Tape::new();
    let bound = trained.model.bind(&tape).map_err(Failure::internal)?;
    let pass = bound.forward(doc, None).map_err(Failure::internal)?;
    let theta = pass.theta.value();
    let p = pass.p_per_hop[hop].value();

    let l_max = trained.model.dims.l_max;
    let mut tokens: Vec<String> =
        doc.seq.iter().map(|&id| trained.seq_vocab.word(id).to_owned()).collect();
    tokens.resize(l_max, PAD_TOKEN.to_owned());
    let topic_labels: Vec<String> = topics
        .iter()
        .enumerate()
        .map(|(k, words)| match words.first() {
            Some(word) => format!("{k}:{word}"),
            None => k.to_string(),
        })
        .collect();

    let path = args.out.join(format!("heatmap_doc{index}.tsv"));
    write_file(&path, |out| memory::export_heatmap(out, &theta, &p, &topic_labels, &tokens))?;
    println!("Heatmap for document {index} (hop {hop}) written to {}", path.display());
    Ok(())
}

pub fn classify(args: ClassifyArgs) -> Result<(), Failure> {
    let (trained, _mode) = checkpoint::load_file(&args.checkpoint)?;
    let lines: Vec<String> = match (&args.text, &args.input) {
        (Some(text), None) => vec![text.clone()],
        (None, Some(path)) => {
            let body = fs::read_to_string(path).map_err(|e| Failure::file(path, e))?;
            body.lines().map(str::to_owned).collect()
        }
        _ => return Err(Failure::input("give exactly one of --text or --input")),
    };

    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for line in &lines {
        let prediction = trained.predict(line).map_err(Failure::internal)?;
        let label = &trained.labels[prediction.label];
        if args.probs {
            let probs = match &prediction.probs {
                Some(values) => {
                    values.iter().map(|p| format!("{p:.6}")).collect::<Vec<_>>().join(" ")
                }
                None => "-".to_owned(),
            };
            writeln!(out, "{label}\t{probs}").map_err(Failure::internal)?;
        } else {
            writeln!(out, "{label}").map_err(Failure::internal)?;
        }
    }
    out.flush().map_err(Failure::internal)?;
    Ok(())
}

fn sweep_row(
    prepared: &PreparedCorpus,
    config: &TrainConfig,
    s: &Settings,
    embeddings: Option<&str>,
) -> String {
    let reader = embeddings.map(|text| Cursor::new(text.as_bytes()));
    let run = train::train_with_embeddings(prepared, config, s.mode, s.arch, reader);
    match run {
        Ok(outcome) => format!(
            "{},{},{},ok,{},{:.6}",
            config.hops, config.k, config.seed, outcome.best_epoch, outcome.best_dev_acc
        ),
        Err(TrainError::Diverged { epoch }) => {
            format!("{},{},{},diverged,{epoch},", config.hops, config.k, config.seed)
        }
        Err(_) => format!("{},{},{},error,,", config.hops, config.k, config.seed),
    }
}

pub fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut s = Settings::load(args.config.as_deref())?;
    apply_knobs(&mut s, &args.knobs)?;
    if let Some(path) = args.corpus {
        s.corpus = Some(path);
    }
    if let Some(path) = args.out {
        s.output_dir = Some(path);
    }
    let corpus_dir = require(s.corpus.clone(), "corpus")?;
    let out_dir = require(s.output_dir.clone(), "out")?;
    let hop_grid = match &args.hops {
        Some(list) => settings::parse_grid("hops", list)?,
        None => vec![s.train.hops],
    };
    let topic_grid = match &args.topics {
        Some(list) => settings::parse_grid("topics", list)?,
        None => vec![s.train.k],
    };
    if args.parallel == 0 {
        return Err(Failure::input("--parallel must be at least 1"));
    }

    let prepared = corpus::load_prepared(&corpus_dir)?;
    let embeddings = match &s.embeddings {
        Some(path) => Some(fs::read_to_string(path).map_err(|e| Failure::file(path, e))?),
        None => None,
    };

    let mut configs = Vec::new();
    for &hops in &hop_grid {
        for &k in &topic_grid {
            let mut config = s.train.clone();
            config.hops = hops;
            config.k = k;
            configs.push(config);
        }
    }

    let rows: Vec<Mutex<Option<String>>> =
        configs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = args.parallel.min(configs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let row = sweep_row(&prepared, &configs[i], &s, embeddings.as_deref());
                *rows[i].lock().expect("sweep worker never panics holding the lock") = Some(row);
            });
        }
    });
    let rows: Vec<String> = rows
        .into_iter()
        .map(|cell| cell.into_inner().expect("every grid cell ran").expect("row was stored"))
        .collect();

    create_dir(&out_dir)?;
    write_file(&out_dir.join("sweep.csv"), |out| {
        writeln!(out, "hops,k,seed,status,best_epoch,dev_acc")?;
        for row in &rows {
            writeln!(out, "{row}")?;
        }
        Ok(())
    })?;

    println!("hops,k,seed,status,best_epoch,dev_acc");
    for row in &rows {
        println!("{row}");
    }
    println!("Wrote {} runs to {}", rows.len(), out_dir.join("sweep.csv").display());
    Ok(())
}
