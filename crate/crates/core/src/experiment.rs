//! Split-train-evaluate runs and hyperparameter sweeps over a catalog, with
//! JSON-serializable reports and aligned text renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bm25::ScoreModel;
use crate::catalog::Catalog;
use crate::config::{ClassifierKind, RunConfig, VocabScope};
use crate::error::{Error, Result, ResultExt};
use crate::evaluate::{evaluate_classifier, split_dataset, Averaging, Metrics, Split};
use crate::matrix::Matrix;
use crate::pipeline::{fit_classifier, load_stopwords, preprocess_products, ClassifierModel, TrainedPipeline};
use crate::ranking::RankedPrediction;

type MetricRow = (&'static str, fn(&Metrics) -> f64);
use crate::reduce::{fit_pca, PcaModel};
use crate::textprep::{build_vocabulary, Preprocessor, StopwordSet, Vocabulary, WordList};
use crate::tuning::{tune_knn, tune_mlp, KnnGrid, KnnParams, LabeledSet, MlpGrid, MlpParams, NeighborVariant, TuneReport};
use crate::vectorize::{build_product_matrix, build_variety_matrix};

/// Preprocessed catalog split into training and test rows.
struct Prepared {
    stopwords: StopwordSet,
    split: Split,
    varieties: Vec<String>,
    vocabulary: Vocabulary,
    train_words: Vec<WordList>,
    train_labels: Vec<usize>,
    test_words: Vec<WordList>,
    test_labels: Vec<usize>,
    train_dense: Matrix,
}

fn prepare(cfg: &RunConfig, catalog: &Catalog) -> Result<Prepared> {
    cfg.validate()?;
    let stopwords = load_stopwords(cfg)?;
    let pre = Preprocessor::new(&stopwords, cfg.fold_accents);
    let words = preprocess_products(catalog.products(), &pre);
    let labels = catalog.labels();
    let split = split_dataset(words.len(), cfg.split_ratio, cfg.split_seed)?;
    let pick = |rows: &[usize]| -> (Vec<WordList>, Vec<usize>) {
        rows.iter().map(|&i| (words[i].clone(), labels[i])).unzip()
    };
    let (train_words, train_labels) = pick(&split.train);
    let (test_words, test_labels) = pick(&split.test);
    let vocabulary = match cfg.vocab_scope {
        VocabScope::Train => build_vocabulary(&train_words),
        VocabScope::All => build_vocabulary(&words),
    }
    .context("vocabulary")?;
    let x = build_product_matrix(&train_words, &vocabulary, &train_labels, catalog.n_varieties())?;
    Ok(Prepared {
        stopwords,
        split,
        varieties: catalog.varieties().names().to_vec(),
        vocabulary,
        train_words,
        train_labels,
        test_words,
        test_labels,
        train_dense: x.to_dense(),
    })
}

impl Prepared {
    fn n_varieties(&self) -> usize {
        self.varieties.len()
    }

    fn check_components(&self, c: usize) -> Result<()> {
        let limit = self.train_dense.rows().min(self.train_dense.cols());
        if c == 0 || c > limit {
            return Err(Error::InvalidParameter(format!(
                "{c} PCA components requested; {} training rows over {} words allow at most {limit}",
                self.train_dense.rows(),
                self.train_dense.cols()
            )));
        }
        Ok(())
    }

    fn pipeline(&self, cfg: &RunConfig, pca: Option<PcaModel>, classifier: ClassifierModel) -> TrainedPipeline {
        TrainedPipeline::assemble(
            cfg,
            self.stopwords.clone(),
            Some(self.split.seed),
            self.varieties.clone(),
            self.vocabulary.clone(),
            pca,
            classifier,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationColumn {
    /// `None` for BM25, which works on word sets.
    pub pca_components: Option<usize>,
    pub retained_variance: Option<f64>,
    /// Top-1, Top-2 and Top-3.
    pub metrics: Vec<Metrics>,
    /// Test products without a single vocabulary word.
    pub no_known_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEvaluation {
    pub classifier: ClassifierKind,
    pub columns: Vec<EvaluationColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: RunConfig,
    pub n_products: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub vocabulary_size: usize,
    pub test_rows: Vec<usize>,
    pub results: Vec<ClassifierEvaluation>,
}

fn score_column(
    cfg: &RunConfig,
    preds: &[RankedPrediction],
    truths: &[usize],
) -> Result<Vec<Metrics>> {
    (1..=3)
        .map(|k| evaluate_classifier(preds, truths, k, cfg.averaging, cfg.topk_rule))
        .collect()
}

/// Splits the catalog, trains every requested classifier on the training
/// rows (over the configured PCA sweep where applicable) and scores the
/// test rows for Top-1, Top-2 and Top-3.
pub fn evaluate(cfg: &RunConfig, catalog: &Catalog, kinds: &[ClassifierKind]) -> Result<EvaluationReport> {
    let data = prepare(cfg, catalog)?;
    let mut sweep = if cfg.pca_sweep.is_empty() {
        vec![cfg.pca_components]
    } else {
        cfg.pca_sweep.clone()
    };
    sweep.sort_unstable();
    sweep.dedup();
    let full_pca = if kinds.iter().any(|k| k.uses_pca()) {
        let max = *sweep.last().expect("non-empty");
        for &c in &sweep {
            data.check_components(c)?;
        }
        Some(fit_pca(&data.train_dense, max).context("pca")?)
    } else {
        None
    };

    let mut results = Vec::new();
    for &kind in kinds {
        let mut columns = Vec::new();
        if kind == ClassifierKind::Bm25 {
            let x = build_product_matrix(&data.train_words, &data.vocabulary, &data.train_labels, data.n_varieties())?;
            let model = ScoreModel::with_params(&build_variety_matrix(&x), cfg.bm25.k, cfg.bm25.b).context("bm25")?;
            let p = data.pipeline(cfg, None, ClassifierModel::Bm25(model));
            columns.push(column(cfg, &data, &p, None)?);
        } else {
            let full = full_pca.as_ref().expect("fitted above");
            for &c in &sweep {
                let pca = full.truncated(c)?;
                let z = pca.transform(&data.train_dense)?;
                let (model, _) = fit_classifier(cfg, kind, &z, &data.train_labels, data.n_varieties())
                    .context(kind.name())?;
                let p = data.pipeline(cfg, Some(pca), model);
                columns.push(column(cfg, &data, &p, Some(c))?);
            }
        }
        results.push(ClassifierEvaluation { classifier: kind, columns });
    }
    Ok(EvaluationReport {
        config: cfg.clone(),
        n_products: catalog.len(),
        n_train: data.split.train.len(),
        n_test: data.split.test.len(),
        vocabulary_size: data.vocabulary.len(),
        test_rows: data.split.test.clone(),
        results,
    })
}

fn column(cfg: &RunConfig, data: &Prepared, p: &TrainedPipeline, c: Option<usize>) -> Result<EvaluationColumn> {
    let preds = p.predict_word_lists(&data.test_words)?;
    let no_known_words = preds.iter().filter(|p| p.no_known_words).count();
    let ranked: Vec<RankedPrediction> = preds.into_iter().map(|p| p.ranking).collect();
    let retained_variance = match (c, p.pca()) {
        (Some(c), Some(pca)) => Some(pca.retained_variance(c)?),
        _ => None,
    };
    Ok(EvaluationColumn {
        pca_components: c,
        retained_variance,
        metrics: score_column(cfg, &ranked, &data.test_labels)?,
        no_known_words,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneTarget {
    Knn,
    Fknn,
    Mlp,
}

impl std::str::FromStr for TuneTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(TuneTarget::Knn),
            "fknn" => Ok(TuneTarget::Fknn),
            "mlp" => Ok(TuneTarget::Mlp),
            _ => Err(Error::Config(format!(
                "cannot tune {s:?}; expected knn, fknn or mlp"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TuneGrid {
    Neighbors(TuneReport<KnnParams>),
    Mlp(TuneReport<MlpParams>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutput {
    pub config: RunConfig,
    pub target: TuneTarget,
    pub pca_components: usize,
    pub retained_variance: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub grid: TuneGrid,
}

/// Runs the accuracy grid for `target` at `cfg.pca_components` components.
pub fn tune(cfg: &RunConfig, catalog: &Catalog, target: TuneTarget) -> Result<TuneOutput> {
    let data = prepare(cfg, catalog)?;
    let c = cfg.pca_components;
    data.check_components(c)?;
    let pca = fit_pca(&data.train_dense, c).context("pca")?;
    let z_train = pca.transform(&data.train_dense)?;
    let test_rows: Vec<Vec<f64>> = data
        .test_words
        .iter()
        .map(|w| pca.transform_row(&crate::vectorize::vectorize_new(w, &data.vocabulary)))
        .collect::<Result<_>>()?;
    let z_test = Matrix::from_rows(&test_rows)?;
    let train = LabeledSet { x: &z_train, y: &data.train_labels };
    let test = LabeledSet { x: &z_test, y: &data.test_labels };
    let v = data.n_varieties();
    let grid = match target {
        TuneTarget::Knn | TuneTarget::Fknn => {
            let variant = if target == TuneTarget::Knn {
                NeighborVariant::Knn
            } else {
                NeighborVariant::Fknn { fuzzifier: cfg.fknn.fuzzifier }
            };
            let g = KnnGrid {
                ks: cfg.tune.ks.clone(),
                metrics: cfg.tune.metrics.clone(),
            };
            TuneGrid::Neighbors(tune_knn(train, test, v, variant, &g)?)
        }
        TuneTarget::Mlp => {
            let g = MlpGrid {
                nodes: cfg.tune.mlp_nodes.clone(),
                epochs: cfg.tune.mlp_epochs.clone(),
            };
            TuneGrid::Mlp(tune_mlp(train, test, v, &g, &cfg.mlp)?)
        }
    };
    Ok(TuneOutput {
        config: cfg.clone(),
        target,
        pca_components: c,
        retained_variance: pca.retained_variance(c)?,
        n_train: data.split.train.len(),
        n_test: data.split.test.len(),
        grid,
    })
}

const LABEL_WIDTH: usize = 12;
const CELL_WIDTH: usize = 10;

impl EvaluationReport {
    /// Aligned tables: one per classifier, Top-k blocks by rows and one
    /// column per PCA setting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "products {}  train {}  test {}  vocabulary {}  split seed {}  averaging {}",
            self.n_products,
            self.n_train,
            self.n_test,
            self.vocabulary_size,
            self.config.split_seed,
            match self.config.averaging {
                Averaging::Macro => "macro",
                Averaging::Micro => "micro",
            }
        );
        for r in &self.results {
            let _ = writeln!(s, "\n{}", r.classifier.name().to_uppercase());
            let _ = write!(s, "{:<LABEL_WIDTH$}", "PCA");
            for c in &r.columns {
                let head = c.pca_components.map_or("-".to_string(), |n| n.to_string());
                let _ = write!(s, "{head:>CELL_WIDTH$}");
            }
            s.push('\n');
            if r.columns.iter().any(|c| c.retained_variance.is_some()) {
                let _ = write!(s, "{:<LABEL_WIDTH$}", "Retained");
                for c in &r.columns {
                    let v = c.retained_variance.map_or("-".to_string(), |v| format!("{v:.4}"));
                    let _ = write!(s, "{v:>CELL_WIDTH$}");
                }
                s.push('\n');
            }
            for k in 0..3 {
                let _ = writeln!(s, "Top_{}", k + 1);
                let rows: [MetricRow; 4] = [
                    ("Accuracy", |m| m.accuracy),
                    ("Precision", |m| m.precision),
                    ("Recall", |m| m.recall),
                    ("F1-score", |m| m.f1),
                ];
                for (label, get) in rows {
                    let _ = write!(s, "  {label:<w$}", w = LABEL_WIDTH - 2);
                    for c in &r.columns {
                        let _ = write!(s, "{:>CELL_WIDTH$.4}", get(&c.metrics[k]));
                    }
                    s.push('\n');
                }
            }
            let unknown: usize = r.columns.iter().map(|c| c.no_known_words).max().unwrap_or(0);
            if unknown > 0 {
                let _ = writeln!(s, "warning: {unknown} test products have no vocabulary word");
            }
        }
        s
    }
}

impl TuneOutput {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "tune {}  PCA {} (retained {:.4})  train {}  test {}",
            match self.target {
                TuneTarget::Knn => "knn",
                TuneTarget::Fknn => "fknn",
                TuneTarget::Mlp => "mlp",
            },
            self.pca_components, self.retained_variance, self.n_train, self.n_test
        );
        let head = |s: &mut String, a: &str, b: &str| {
            let _ = writeln!(
                s,
                "{a:<12}{b:>8}{:>CELL_WIDTH$}{:>CELL_WIDTH$}{:>CELL_WIDTH$}",
                "Top_1", "Top_2", "Top_3"
            );
        };
        let row = |s: &mut String, a: &str, b: String, acc: &[f64; 3]| {
            let _ = writeln!(
                s,
                "{a:<12}{b:>8}{:>CELL_WIDTH$.4}{:>CELL_WIDTH$.4}{:>CELL_WIDTH$.4}",
                acc[0], acc[1], acc[2]
            );
        };
        match &self.grid {
            TuneGrid::Neighbors(r) => {
                head(&mut s, "metric", "k");
                for c in &r.cells {
                    row(&mut s, c.params.metric.name(), c.params.k.to_string(), &c.accuracy);
                }
                for t in 1..=3 {
                    let b = r.best_cell(t);
                    let _ = writeln!(
                        s,
                        "best Top_{t}: metric {} k {} accuracy {:.4}",
                        b.params.metric, b.params.k, b.accuracy[t - 1]
                    );
                }
            }
            TuneGrid::Mlp(r) => {
                head(&mut s, "nodes", "epochs");
                for c in &r.cells {
                    row(&mut s, &c.params.nodes.to_string(), c.params.epochs.to_string(), &c.accuracy);
                }
                for t in 1..=3 {
                    let b = r.best_cell(t);
                    let _ = writeln!(
                        s,
                        "best Top_{t}: nodes {} epochs {} accuracy {:.4}",
                        b.params.nodes, b.params.epochs, b.accuracy[t - 1]
                    );
                }
            }
        }
        s
    }
}
