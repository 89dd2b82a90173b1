use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tbert::autoencoder::train_autoencoder;
use tbert::clustering::{cluster_top_terms, kmeans, read_assignments_csv, write_assignments_csv, write_wordcloud_json};
use tbert::corpus::{
    build_vocabulary, preprocess_corpus, read_documents, read_processed_jsonl, write_processed_jsonl, BowCorpus,
    ProcessedDocument, Vocabulary,
};
use tbert::embeddings::{fetch_embeddings, load_embeddings, write_jsonl, write_tbem, EmbeddingMatrix, ENDPOINT_ENV};
use tbert::fusion::{fuse_embeddings, load_fused, save_fused};
use tbert::lda::{train_lda, LdaModel};
use tbert::pipeline::{join_topics_sentiments, run_pipeline, sweep_k, PipelineConfig};
use tbert::sentiment::{
    evaluate, predict, read_label_map, read_labels_csv, read_predictions_csv, train_classifier,
    write_predictions_csv, LabeledSet, SentimentModel,
};
use tbert::synth::{generate, write_fixture, SynthConfig};

#[derive(Parser)]
#[command(name = "tbert", version, about = "Contextual topic clustering with sentiment")]
struct Cli {
    /// Pipeline configuration (JSON); omitted fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed applied to every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingFormat {
    Tbem,
    Jsonl,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and tokenize a corpus; writes processed.jsonl and vocabulary.json.
    Preprocess {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Train LDA; writes lda_model.json and lda_topics.json.
    Lda {
        #[arg(long)]
        processed: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Fetch sentence embeddings from an embedding server.
    EmbedFetch {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, env = ENDPOINT_ENV)]
        endpoint: String,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, value_enum, default_value = "tbem")]
        format: EmbeddingFormat,
    },
    /// Convert embeddings between TBEM and JSONL (chosen by output extension).
    EmbedConvert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Concatenate γ-weighted topic vectors with embeddings; writes fused.tbem.
    Fuse {
        #[arg(long)]
        lda: PathBuf,
        #[arg(long)]
        processed: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        /// Skip L2 normalization of the embeddings.
        #[arg(long)]
        raw: bool,
    },
    /// Train the autoencoder; writes autoencoder.json, ae_loss.csv and latent.tbem.
    AeTrain {
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        latent_dim: Option<usize>,
    },
    /// K-Means on latent vectors; writes assignments.csv and, given the
    /// processed corpus, wordcloud_freqs.json.
    Cluster {
        #[arg(long)]
        latent: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, requires = "vocab")]
        processed: Option<PathBuf>,
        #[arg(long, requires = "processed")]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
    /// Run LDA and the fused pipeline over the k grid; writes sweep.json and sweep.csv.
    Sweep {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Train the sentiment head; writes sentiment_model.json.
    SentimentTrain {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        label_map: Option<PathBuf>,
    },
    /// Predict sentiments; writes predictions.csv.
    SentimentPredict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Join cluster assignments with sentiments; writes sentiment_report.json.
    Report {
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Full pipeline; writes the six run artifacts.
    Run {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        label_map: Option<PathBuf>,
        #[arg(long)]
        sentiment_model: Option<PathBuf>,
    },
    /// Generate the synthetic planted-topic fixture plus a config.json for `run`.
    Synth {
        #[arg(long)]
        n_docs: Option<usize>,
        #[arg(long)]
        n_topics: Option<usize>,
        /// Fixture seed; defaults to 0 independently of --seed.
        #[arg(long)]
        fixture_seed: Option<u64>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_json_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.paths.out_dir = out.clone();
    }
    Ok(cfg)
}

fn out_file(cfg: &PipelineConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.paths.out_dir)
        .with_context(|| format!("creating {}", cfg.paths.out_dir.display()))?;
    Ok(cfg.paths.out_dir.join(name))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    match flag.or_else(|| configured.clone()) {
        Some(p) => Ok(p),
        None => bail!("no {what} given; pass --{what} or set paths.{what} in the config"),
    }
}

fn load_corpus(processed: &Path, vocab: &Path) -> Result<(Vec<ProcessedDocument>, BowCorpus)> {
    let docs = read_processed_jsonl(processed)?;
    let vocab: Vocabulary = read_json(vocab)?;
    let corpus = BowCorpus::new(&docs, Arc::new(vocab));
    Ok((docs, corpus))
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Preprocess { corpus } => {
            let path = pick(corpus, &cfg.paths.corpus, "corpus")?;
            let pre = preprocess_corpus(&read_documents(&path)?)?;
            let kept = pre.non_empty();
            let vocab = build_vocabulary(&kept, cfg.preprocess.min_df, cfg.preprocess.max_df_fraction)?;
            write_processed_jsonl(&out_file(&cfg, "processed.jsonl")?, &kept)?;
            write_json(&out_file(&cfg, "vocabulary.json")?, &vocab)?;
            eprintln!(
                "{} documents kept, {} empty after preprocessing, {} terms",
                kept.len(),
                pre.empty_ids.len(),
                vocab.len()
            );
        }
        Command::Lda { processed, vocab, k } => {
            if let Some(k) = k {
                cfg.lda.k = k;
            }
            let (_, corpus) = load_corpus(&processed, &vocab)?;
            let model = train_lda(&corpus, &cfg.lda)?;
            write_json(&out_file(&cfg, "lda_model.json")?, &model)?;
            let topics = (0..model.num_topics())
                .map(|t| {
                    let words = model.top_words(t, cfg.metrics.top_n)?;
                    Ok(words
                        .iter()
                        .map(|&w| corpus.vocab().term(w).unwrap_or_default().to_owned())
                        .collect::<Vec<_>>())
                })
                .collect::<tbert::Result<Vec<_>>>()?;
            write_json(&out_file(&cfg, "lda_topics.json")?, &topics)?;
        }
        Command::EmbedFetch {
            corpus,
            endpoint,
            batch_size,
            format,
        } => {
            let path = pick(corpus, &cfg.paths.corpus, "corpus")?;
            let m = fetch_embeddings(&endpoint, &read_documents(&path)?, batch_size)?;
            match format {
                EmbeddingFormat::Tbem => write_tbem(&out_file(&cfg, "embeddings.tbem")?, &m)?,
                EmbeddingFormat::Jsonl => write_jsonl(&out_file(&cfg, "embeddings.jsonl")?, &m)?,
            }
            eprintln!("{} embeddings of dimension {}", m.len(), m.dim());
        }
        Command::EmbedConvert { input, output } => {
            let m = load_embeddings(&input)?;
            if output.extension().is_some_and(|e| e == "jsonl") {
                write_jsonl(&output, &m)?;
            } else {
                write_tbem(&output, &m)?;
            }
        }
        Command::Fuse {
            lda,
            processed,
            embeddings,
            gamma,
            raw,
        } => {
            if let Some(g) = gamma {
                cfg.fusion.gamma = g;
            }
            if raw {
                cfg.fusion.normalize_embeddings = false;
            }
            let model: LdaModel = read_json(&lda)?;
            let ids: Vec<String> = read_processed_jsonl(&processed)?.into_iter().map(|d| d.id).collect();
            if ids.len() != model.theta.nrows() {
                bail!("{} processed documents but the LDA model has {} rows", ids.len(), model.theta.nrows());
            }
            let h = load_embeddings(&embeddings)?.select(&ids)?;
            let fused = fuse_embeddings(&model.theta, &h, &cfg.fusion)?;
            save_fused(&out_file(&cfg, "fused.tbem")?, &fused, &ids)?;
        }
        Command::AeTrain {
            fused,
            epochs,
            latent_dim,
        } => {
            if let Some(e) = epochs {
                cfg.autoencoder.epochs = e;
            }
            if let Some(l) = latent_dim {
                cfg.autoencoder.latent_dim = l;
            }
            let (fused, ids) = load_fused(&fused)?;
            let model = train_autoencoder(&fused.data, &ids, &cfg.autoencoder)?;
            write_json(&out_file(&cfg, "autoencoder.json")?, &model)?;
            model.write_history_csv(&out_file(&cfg, "ae_loss.csv")?)?;
            let latent = model.encode(&fused.data)?.mapv(|x| x as f32);
            write_tbem(&out_file(&cfg, "latent.tbem")?, &EmbeddingMatrix::new(ids, latent)?)?;
        }
        Command::Cluster {
            latent,
            k,
            processed,
            vocab,
            top_n,
        } => {
            if let Some(k) = k {
                cfg.kmeans.k = k;
            }
            let latent = load_embeddings(&latent)?;
            let model = kmeans(&latent.to_f64(), &cfg.kmeans)?;
            write_assignments_csv(&out_file(&cfg, "assignments.csv")?, latent.ids(), &model.assignments)?;
            if let (Some(processed), Some(vocab)) = (processed, vocab) {
                let (docs, corpus) = load_corpus(&processed, &vocab)?;
                if docs.iter().map(|d| &d.id).ne(latent.ids().iter()) {
                    bail!("processed documents and latent vectors list different ids");
                }
                let tops = cluster_top_terms(&model, &corpus, top_n)?;
                write_wordcloud_json(&out_file(&cfg, "wordcloud_freqs.json")?, &tops)?;
            }
            eprintln!("inertia {:.6} after {} iterations", model.inertia, model.iterations);
        }
        Command::Sweep { corpus, embeddings, k } => {
            cfg.paths.corpus = Some(pick(corpus, &cfg.paths.corpus, "corpus")?);
            cfg.paths.embeddings = Some(pick(embeddings, &cfg.paths.embeddings, "embeddings")?);
            if let Some(k) = k {
                cfg.k_sweep = k;
            }
            let report = sweep_k(&cfg)?;
            for e in &report.entries {
                match (&e.error, e.fused_cv, e.lda_cv) {
                    (Some(err), _, _) => println!("k={:<3} failed: {err}", e.k),
                    (None, f, l) => println!(
                        "k={:<3} fused C_V {:.4}  LDA C_V {:.4}",
                        e.k,
                        f.unwrap_or(f64::NAN),
                        l.unwrap_or(f64::NAN)
                    ),
                }
            }
            match report.selected_k {
                Some(k) => println!("selected k = {k}"),
                None => bail!("every k in the sweep failed"),
            }
        }
        Command::SentimentTrain {
            embeddings,
            labels,
            label_map,
        } => {
            let map = label_map.as_deref().map(read_label_map).transpose()?;
            let labels = read_labels_csv(&labels, map.as_ref())?;
            let ids: Vec<String> = labels.iter().map(|(id, _)| id.clone()).collect();
            let h = load_embeddings(&embeddings)?.select(&ids)?;
            let set = LabeledSet::from_embeddings(&h, labels.into_iter().map(|(_, s)| s).collect())?;
            let model = train_classifier(&set, &cfg.sentiment)?;
            let eval = evaluate(&model, &set)?;
            write_json(&out_file(&cfg, "sentiment_model.json")?, &model)?;
            println!("training accuracy {:.4}, weighted F1 {:.4}", eval.accuracy, eval.weighted_f1);
        }
        Command::SentimentPredict { model, embeddings } => {
            let model: SentimentModel = read_json(&model)?;
            let h = load_embeddings(&embeddings)?;
            let preds = predict(&model, &h.to_f64())?;
            write_predictions_csv(&out_file(&cfg, "predictions.csv")?, h.ids(), &preds)?;
        }
        Command::Report {
            assignments,
            predictions,
        } => {
            let report = join_topics_sentiments(
                &read_assignments_csv(&assignments)?,
                &read_predictions_csv(&predictions)?,
            )?;
            write_json(&out_file(&cfg, "sentiment_report.json")?, &report)?;
            for c in &report.clusters {
                let f = c.fractions;
                println!(
                    "cluster {:<3} n={:<5} positive {:.3}  negative {:.3}  neutral {:.3}",
                    c.cluster, c.size, f.positive, f.negative, f.neutral
                );
            }
        }
        Command::Run {
            corpus,
            embeddings,
            labels,
            label_map,
            sentiment_model,
        } => {
            let p = &mut cfg.paths;
            p.corpus = corpus.or(p.corpus.take());
            p.embeddings = embeddings.or(p.embeddings.take());
            p.labels = labels.or(p.labels.take());
            p.label_map = label_map.or(p.label_map.take());
            p.sentiment_model = sentiment_model.or(p.sentiment_model.take());
            let summary = run_pipeline(&cfg)?;
            let m = &summary.output.topics.metrics;
            println!(
                "fused C_V {:.4}  LDA C_V {:.4}  latent silhouette {}",
                m.fused.cv_mean,
                m.lda.cv_mean,
                m.silhouette_fused_latent.map_or("n/a".into(), |s| format!("{s:.4}"))
            );
            for a in &summary.artifacts {
                println!("wrote {}", a.display());
            }
        }
        Command::Synth {
            n_docs,
            n_topics,
            fixture_seed,
        } => {
            let mut sc = SynthConfig::default();
            if let Some(n) = n_docs {
                sc.n_docs = n;
            }
            if let Some(k) = n_topics {
                sc.n_topics = k;
            }
            if let Some(s) = fixture_seed {
                sc.seed = s;
            }
            let dir = cfg.paths.out_dir.clone();
            write_fixture(&dir, &generate(&sc)?)?;
            let run_cfg = json!({
                "paths": {
                    "corpus": dir.join("corpus.csv"),
                    "embeddings": dir.join("embeddings.tbem"),
                    "labels": dir.join("labels.csv"),
                    "out_dir": dir.join("run"),
                },
                "lda": { "k": sc.n_topics },
                "kmeans": { "k": sc.n_topics },
            });
            write_json(&dir.join("config.json"), &run_cfg)?;
            write_json(&dir.join("synth.json"), &sc)?;
            eprintln!("fixture written to {}", dir.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        for cause in e.chain().skip(1) {
            eprintln!("  caused by: {cause}");
        }
        std::process::exit(1);
    }
}
