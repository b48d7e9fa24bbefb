//! `shelfcat` command line: train, predict, evaluate, tune and synth.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for data errors
//! (unreadable or malformed catalogs, stopword lists and model files), 4 for
//! numeric failures during fitting.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use shelfcat::catalog::{clean_catalog, load_catalog, write_products, Catalog, Product};
use shelfcat::config::{ClassifierKind, RunConfig, VocabScope};
use shelfcat::experiment::{evaluate, tune, TuneTarget};
use shelfcat::pipeline::{train, Prediction, TrainedPipeline};
use shelfcat::synth::synth_catalog;
use shelfcat::{Error, ErrorClass, Result};

#[derive(Parser)]
#[command(name = "shelfcat", version, about = "Classify grocery products into taxonomy varieties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a classifier on every product of a catalog and write a model file.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        /// Where to write the model.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = parse_classifier)]
        classifier: Option<ClassifierKind>,
        /// Also write the training report (JSON) here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Rank varieties for the products of a catalog or for a single text.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Catalog file; the variety column may be absent.
        #[arg(long, conflicts_with = "text", required_unless_present = "text")]
        catalog: Option<PathBuf>,
        /// A single product description.
        #[arg(long)]
        text: Option<String>,
        /// Config file, read only for its `[catalog]` column mapping.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Split, train and score one or more classifiers over the PCA sweep.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        /// Classifiers to evaluate; repeat or separate with commas. Defaults
        /// to the configured one; `all` selects every classifier.
        #[arg(long, value_delimiter = ',')]
        classifier: Vec<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Accuracy grid over k and distance (knn, fknn) or width and epochs (mlp).
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long, value_parser = parse_target)]
        target: TuneTarget,
        #[command(flatten)]
        output: Output,
    },
    /// Write a seeded synthetic catalog.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        varieties: Option<usize>,
        #[arg(long)]
        products_per_variety: Option<usize>,
        #[arg(long)]
        overlap: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Strip diacritics before matching words and stopwords.
    #[arg(long)]
    fold_accents: bool,
    #[arg(long, value_parser = parse_scope)]
    vocab_scope: Option<VocabScope>,
    /// Stopword file, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn parse_classifier(s: &str) -> std::result::Result<ClassifierKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_target(s: &str) -> std::result::Result<TuneTarget, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scope(s: &str) -> std::result::Result<VocabScope, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.fold_accents {
            cfg.fold_accents = true;
        }
        if let Some(s) = self.vocab_scope {
            cfg.vocab_scope = s;
        }
        if let Some(p) = &self.stopwords {
            cfg.stopwords = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_catalog(path: &Path, cfg: &RunConfig) -> Result<Catalog> {
    let raw = load_catalog(path, &cfg.catalog).map_err(|e| e.context(path.display().to_string()))?;
    let dropped = raw.len();
    let cat = clean_catalog(&raw)?;
    let dropped = dropped - cat.len();
    if dropped > 0 {
        eprintln!("note: dropped {dropped} products with blank name, legal name and ingredients");
    }
    Ok(cat)
}

fn emit(output: &Output, text: String, json: &impl Serialize) -> Result<()> {
    let body = match output.format {
        Format::Text => text,
        Format::Json => {
            let mut s = serde_json::to_string_pretty(json)?;
            s.push('\n');
            s
        }
    };
    match &output.output {
        Some(path) => fs::write(path, body).map_err(|e| Error::from(e).context(path.display().to_string())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config: &'a RunConfig,
    classifier: ClassifierKind,
    products: usize,
    varieties: usize,
    vocabulary_size: usize,
    pca_components: Option<usize>,
    retained_variance: Option<f64>,
    stopword_digest: &'a str,
    #[serde(flatten)]
    trace: &'a shelfcat::pipeline::TrainingTrace,
}

#[derive(Serialize)]
struct Ranked<'a> {
    variety: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct PredictRow<'a> {
    ean: &'a str,
    top: Vec<Ranked<'a>>,
    no_known_words: bool,
}

fn predict_rows<'a>(model: &'a TrainedPipeline, eans: &'a [String], preds: &'a [Prediction]) -> Vec<PredictRow<'a>> {
    eans.iter()
        .zip(preds)
        .map(|(ean, p)| PredictRow {
            ean,
            top: p
                .ranking
                .top(3)
                .iter()
                .map(|e| Ranked {
                    variety: &model.varieties()[e.variety],
                    score: e.score,
                })
                .collect(),
            no_known_words: p.no_known_words,
        })
        .collect()
}

fn predict_text(rows: &[PredictRow]) -> String {
    let mut s = format!("{:<16}{:<28}{:<28}{}\n", "ean", "Top_1", "Top_2", "Top_3");
    for r in rows {
        s.push_str(&format!("{:<16}", r.ean));
        for i in 0..3 {
            let cell = r
                .top
                .get(i)
                .map_or("-".to_string(), |t| format!("{} ({:.4})", t.variety, t.score));
            s.push_str(&format!("{cell:<28}"));
        }
        if r.no_known_words {
            s.push_str("warning: no known words");
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
    }
    s
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            common,
            catalog,
            model,
            classifier,
            report,
        } => {
            let mut cfg = common.config()?;
            if let Some(k) = classifier {
                cfg.classifier = k;
            }
            let cat = read_catalog(&catalog, &cfg)?;
            let trained = train(&cfg, &cat)?;
            trained.pipeline.save(&model)?;
            let p = &trained.pipeline;
            let summary = TrainReport {
                config: &cfg,
                classifier: p.kind(),
                products: cat.len(),
                varieties: cat.n_varieties(),
                vocabulary_size: p.vocabulary().len(),
                pca_components: p.pca().map(|m| m.n_components()),
                retained_variance: p.pca().map(|m| m.retained_variance(m.n_components())).transpose()?,
                stopword_digest: p.stopword_digest(),
                trace: &trained.trace,
            };
            if let Some(path) = report {
                let mut s = serde_json::to_string_pretty(&summary)?;
                s.push('\n');
                fs::write(&path, s).map_err(|e| Error::from(e).context(path.display().to_string()))?;
            }
            eprintln!(
                "trained {} on {} products ({} varieties, {} words) -> {}",
                p.kind(),
                cat.len(),
                cat.n_varieties(),
                p.vocabulary().len(),
                model.display()
            );
            Ok(())
        }
        Command::Predict {
            model,
            catalog,
            text,
            config,
            output,
        } => {
            let pipeline = TrainedPipeline::load(&model)?;
            let (eans, preds) = match (catalog, text) {
                (Some(path), _) => {
                    let cfg = match config {
                        Some(c) => RunConfig::load(c)?,
                        None => RunConfig::default(),
                    };
                    let file = fs::File::open(&path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
                    let products: Vec<Product> = shelfcat::catalog::read_products(file, &cfg.catalog, false)
                        .map_err(|e| e.context(path.display().to_string()))?;
                    let preds = pipeline.predict_products(&products)?;
                    (products.into_iter().map(|p| p.ean).collect::<Vec<_>>(), preds)
                }
                (None, Some(t)) => (vec!["-".to_string()], vec![pipeline.predict_text(&t)?]),
                (None, None) => return Err(Error::Config("give --catalog or --text".into())),
            };
            for (ean, p) in eans.iter().zip(&preds) {
                if p.no_known_words {
                    eprintln!("warning: product {ean} has no word in the model vocabulary");
                }
            }
            let rows = predict_rows(&pipeline, &eans, &preds);
            emit(&output, predict_text(&rows), &rows)
        }
        Command::Evaluate {
            common,
            catalog,
            classifier,
            output,
        } => {
            let cfg = common.config()?;
            let kinds: Vec<ClassifierKind> = if classifier.is_empty() {
                vec![cfg.classifier]
            } else if classifier.iter().any(|c| c == "all") {
                ClassifierKind::ALL.to_vec()
            } else {
                classifier.iter().map(|c| c.parse()).collect::<Result<_>>()?
            };
            let cat = read_catalog(&catalog, &cfg)?;
            let report = evaluate(&cfg, &cat, &kinds)?;
            emit(&output, report.to_text(), &report)
        }
        Command::Tune {
            common,
            catalog,
            target,
            output,
        } => {
            let cfg = common.config()?;
            let cat = read_catalog(&catalog, &cfg)?;
            let report = tune(&cfg, &cat, target)?;
            emit(&output, report.to_text(), &report)
        }
        Command::Synth {
            config,
            out,
            varieties,
            products_per_variety,
            overlap,
            seed,
        } => {
            let cfg = match config {
                Some(c) => RunConfig::load(c)?,
                None => RunConfig::default(),
            };
            let mut sc = cfg.synth.clone();
            if let Some(v) = varieties {
                sc.varieties = v;
            }
            if let Some(n) = products_per_variety {
                sc.products_per_variety = n;
            }
            if let Some(o) = overlap {
                sc.overlap = o;
            }
            if let Some(s) = seed {
                sc.seed = s;
            }
            let cat = synth_catalog(&sc)?;
            let file = fs::File::create(&out).map_err(|e| Error::from(e).context(out.display().to_string()))?;
            write_products(file, cat.products(), &cfg.catalog)?;
            eprintln!("wrote {} products in {} varieties to {}", cat.len(), cat.n_varieties(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}
