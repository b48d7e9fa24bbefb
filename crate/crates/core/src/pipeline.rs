//! End-to-end training, prediction and the model file.
//!
//! A [`TrainedPipeline`] holds everything needed to turn a raw product into
//! a ranking: the stopword list, the vocabulary, the PCA projection (absent
//! for BM25) and the fitted classifier.
//!
//! Model files start with two text lines, the magic string and the format
//! version, followed by the pipeline as JSON. Floats are written with
//! round-trip precision so a reloaded model predicts bit-for-bit the same.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bm25::ScoreModel;
use crate::boosted::{fit_gbt_traced, GbtModel};
use crate::catalog::{Catalog, Product};
use crate::config::{ClassifierKind, InitMode, RunConfig, VocabScope};
use crate::error::{Error, Result, ResultExt};
use crate::matrix::Matrix;
use crate::mlp::{init_mlp, train_mlp, MlpModel};
use crate::neighbors::{FknnModel, KnnModel, MembershipInit};
use crate::ranking::RankedPrediction;
use crate::reduce::{fit_pca, PcaModel};
use crate::textprep::{build_vocabulary, Preprocessor, StopwordSet, Vocabulary, WordList};
use crate::vectorize::{build_product_matrix, build_variety_matrix, vectorize_new, ProductMatrix};

pub const MODEL_MAGIC: &str = "SHELFCAT-MODEL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "model")]
pub enum ClassifierModel {
    Bm25(ScoreModel),
    Knn(KnnModel),
    Fknn(FknnModel),
    Gbt(GbtModel),
    Mlp(MlpModel),
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierModel::Bm25(_) => ClassifierKind::Bm25,
            ClassifierModel::Knn(_) => ClassifierKind::Knn,
            ClassifierModel::Fknn(_) => ClassifierKind::Fknn,
            ClassifierModel::Gbt(_) => ClassifierKind::Gbt,
            ClassifierModel::Mlp(_) => ClassifierKind::Mlp,
        }
    }

    /// Ranking for one PCA-reduced vector. Not valid for BM25.
    fn predict_vector(&self, z: &[f64]) -> Result<RankedPrediction> {
        match self {
            ClassifierModel::Bm25(_) => Err(Error::InvalidParameter(
                "BM25 ranks word sets, not vectors".into(),
            )),
            ClassifierModel::Knn(m) => m.predict(z),
            ClassifierModel::Fknn(m) => m.predict(z),
            ClassifierModel::Gbt(m) => m.predict(z),
            ClassifierModel::Mlp(m) => m.predict(z),
        }
    }

    fn predict_vectors(&self, z: &Matrix) -> Result<Vec<RankedPrediction>> {
        match self {
            ClassifierModel::Knn(m) => m.predict_batch(z),
            ClassifierModel::Fknn(m) => m.predict_batch(z),
            ClassifierModel::Mlp(m) => m.predict_batch(z),
            _ => (0..z.rows())
                .into_par_iter()
                .map(|i| self.predict_vector(z.row(i)))
                .collect(),
        }
    }

    fn rebuild(&mut self) {
        match self {
            ClassifierModel::Knn(m) => m.rebuild(),
            ClassifierModel::Fknn(m) => m.rebuild(),
            _ => {}
        }
    }
}

/// Per-round or per-epoch training diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gbt_objective: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlp_loss: Option<Vec<f64>>,
}

/// Fits the configured classifier on already reduced rows.
pub fn fit_classifier(
    cfg: &RunConfig,
    kind: ClassifierKind,
    z: &Matrix,
    labels: &[usize],
    n_varieties: usize,
) -> Result<(ClassifierModel, TrainingTrace)> {
    let mut trace = TrainingTrace::default();
    let model = match kind {
        ClassifierKind::Bm25 => {
            return Err(Error::InvalidParameter(
                "BM25 is fitted from the variety matrix".into(),
            ))
        }
        ClassifierKind::Knn => ClassifierModel::Knn(KnnModel::fit(
            z.clone(),
            labels.to_vec(),
            n_varieties,
            cfg.knn.k,
            cfg.knn.metric,
        )?),
        ClassifierKind::Fknn => {
            let f = &cfg.fknn;
            let init = match f.init {
                InitMode::Crisp => MembershipInit::Crisp,
                InitMode::Keller => MembershipInit::Keller {
                    neighbors: f.init_neighbors.unwrap_or(f.k),
                },
            };
            ClassifierModel::Fknn(FknnModel::fit(
                z.clone(),
                labels.to_vec(),
                n_varieties,
                f.k,
                f.metric,
                f.fuzzifier,
                Some(init),
            )?)
        }
        ClassifierKind::Gbt => {
            let fit = fit_gbt_traced(z, labels, n_varieties, &cfg.gbt)?;
            trace.gbt_objective = Some(fit.objective);
            ClassifierModel::Gbt(fit.model)
        }
        ClassifierKind::Mlp => {
            let init = init_mlp(&cfg.mlp, z.cols(), n_varieties)?;
            let fit = train_mlp(init, z, labels, &cfg.mlp)?;
            trace.mlp_loss = Some(fit.losses);
            ClassifierModel::Mlp(fit.model)
        }
    };
    Ok((model, trace))
}

/// Words of every product, in catalog order.
pub fn preprocess_products(products: &[Product], pre: &Preprocessor) -> Vec<WordList> {
    products.par_iter().map(|p| pre.process_product(p)).collect()
}

pub fn load_stopwords(cfg: &RunConfig) -> Result<StopwordSet> {
    match &cfg.stopwords {
        Some(path) => StopwordSet::load(path).context("stopword file"),
        None => Ok(StopwordSet::bundled()),
    }
}

/// One product's ranking, flagged when none of its words is in the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub ranking: RankedPrediction,
    pub no_known_words: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedPipeline {
    stopwords: StopwordSet,
    stopword_digest: String,
    fold_accents: bool,
    vocab_scope: VocabScope,
    split_seed: Option<u64>,
    varieties: Vec<String>,
    vocabulary: Vocabulary,
    pca: Option<PcaModel>,
    classifier: ClassifierModel,
    #[serde(skip)]
    preprocessor: Option<Preprocessor>,
}

/// Result of [`train`]: the pipeline and what happened while fitting it.
#[derive(Debug, Clone)]
pub struct Trained {
    pub pipeline: TrainedPipeline,
    pub trace: TrainingTrace,
}

/// Cleans nothing and splits nothing: every product of `catalog` trains the
/// configured classifier.
pub fn train(cfg: &RunConfig, catalog: &Catalog) -> Result<Trained> {
    cfg.validate()?;
    let stopwords = load_stopwords(cfg)?;
    let pre = Preprocessor::new(&stopwords, cfg.fold_accents);
    let words = preprocess_products(catalog.products(), &pre);
    let labels = catalog.labels();
    let vocabulary = build_vocabulary(&words).context("vocabulary")?;
    let x = build_product_matrix(&words, &vocabulary, &labels, catalog.n_varieties())?;
    let (pca, classifier, trace) = fit_on_matrix(cfg, cfg.classifier, &x, cfg.pca_components)?;
    let pipeline = TrainedPipeline::assemble(
        cfg,
        stopwords,
        None,
        catalog.varieties().names().to_vec(),
        vocabulary,
        pca,
        classifier,
    );
    Ok(Trained { pipeline, trace })
}

fn fit_on_matrix(
    cfg: &RunConfig,
    kind: ClassifierKind,
    x: &ProductMatrix,
    components: usize,
) -> Result<(Option<PcaModel>, ClassifierModel, TrainingTrace)> {
    if kind == ClassifierKind::Bm25 {
        let y = build_variety_matrix(x);
        let m = ScoreModel::with_params(&y, cfg.bm25.k, cfg.bm25.b).context("bm25")?;
        return Ok((None, ClassifierModel::Bm25(m), TrainingTrace::default()));
    }
    let dense = x.to_dense();
    let pca = fit_pca(&dense, components).context("pca")?;
    let z = pca.transform(&dense)?;
    let (model, trace) = fit_classifier(cfg, kind, &z, x.labels(), x.n_varieties())
        .context(kind.name())?;
    Ok((Some(pca), model, trace))
}

impl TrainedPipeline {
    pub(crate) fn assemble(
        cfg: &RunConfig,
        stopwords: StopwordSet,
        split_seed: Option<u64>,
        varieties: Vec<String>,
        vocabulary: Vocabulary,
        pca: Option<PcaModel>,
        classifier: ClassifierModel,
    ) -> Self {
        let mut p = Self {
            stopword_digest: stopwords.digest(),
            stopwords,
            fold_accents: cfg.fold_accents,
            vocab_scope: cfg.vocab_scope,
            split_seed,
            varieties,
            vocabulary,
            pca,
            classifier,
            preprocessor: None,
        };
        p.rebuild();
        p
    }

    fn rebuild(&mut self) {
        self.preprocessor = Some(Preprocessor::new(&self.stopwords, self.fold_accents));
        self.classifier.rebuild();
    }

    pub fn kind(&self) -> ClassifierKind {
        self.classifier.kind()
    }

    pub fn classifier(&self) -> &ClassifierModel {
        &self.classifier
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn pca(&self) -> Option<&PcaModel> {
        self.pca.as_ref()
    }

    pub fn varieties(&self) -> &[String] {
        &self.varieties
    }

    pub fn stopword_digest(&self) -> &str {
        &self.stopword_digest
    }

    pub fn vocab_scope(&self) -> VocabScope {
        self.vocab_scope
    }

    pub fn split_seed(&self) -> Option<u64> {
        self.split_seed
    }

    fn preprocessor(&self) -> &Preprocessor {
        self.preprocessor.as_ref().expect("built on construction and load")
    }

    pub fn words(&self, p: &Product) -> WordList {
        self.preprocessor().process_product(p)
    }

    pub fn predict_words(&self, words: &WordList) -> Result<Prediction> {
        let cols = self.vocabulary.columns(words);
        if cols.is_empty() {
            return Ok(Prediction {
                ranking: RankedPrediction::uniform(self.varieties.len()),
                no_known_words: true,
            });
        }
        let ranking = match (&self.classifier, &self.pca) {
            (ClassifierModel::Bm25(m), _) => m.rank_varieties(&cols),
            (c, Some(pca)) => c.predict_vector(&pca.transform_row(&vectorize_new(words, &self.vocabulary))?)?,
            (_, None) => return Err(Error::ModelFormat("vector classifier without PCA".into())),
        };
        Ok(Prediction {
            ranking,
            no_known_words: false,
        })
    }

    pub fn predict_product(&self, p: &Product) -> Result<Prediction> {
        self.predict_words(&self.words(p))
    }

    pub fn predict_text(&self, text: &str) -> Result<Prediction> {
        self.predict_words(&self.preprocessor().process(text))
    }

    pub fn predict_products(&self, products: &[Product]) -> Result<Vec<Prediction>> {
        let words = preprocess_products(products, self.preprocessor());
        self.predict_word_lists(&words)
    }

    pub(crate) fn predict_word_lists(&self, words: &[WordList]) -> Result<Vec<Prediction>> {
        let pca = match (&self.classifier, &self.pca) {
            (ClassifierModel::Bm25(_), _) | (_, None) => {
                return words.par_iter().map(|w| self.predict_words(w)).collect();
            }
            (_, Some(pca)) => pca,
        };
        // one projected matrix, so batch-capable classifiers see every row at once
        let empty: Vec<bool> = words
            .iter()
            .map(|w| self.vocabulary.columns(w).is_empty())
            .collect();
        let rows: Vec<Vec<f64>> = words
            .par_iter()
            .map(|w| pca.transform_row(&vectorize_new(w, &self.vocabulary)))
            .collect::<Result<_>>()?;
        let z = if rows.is_empty() {
            Matrix::zeros(0, pca.n_components())
        } else {
            Matrix::from_rows(&rows)?
        };
        let ranked = self.classifier.predict_vectors(&z)?;
        Ok(ranked
            .into_iter()
            .zip(empty)
            .map(|(r, e)| Prediction {
                ranking: if e { RankedPrediction::uniform(self.varieties.len()) } else { r },
                no_known_words: e,
            })
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{MODEL_MAGIC}")?;
        writeln!(w, "version {MODEL_VERSION}")?;
        serde_json::to_writer(&mut *w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Self::read_from(file).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end_matches(['\r', '\n']) != MODEL_MAGIC {
            return Err(Error::ModelFormat("not a model file (bad magic line)".into()));
        }
        line.clear();
        r.read_line(&mut line)?;
        let version = line
            .trim_end_matches(['\r', '\n'])
            .strip_prefix("version ")
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| Error::ModelFormat("missing version line".into()))?;
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported model format version {version} (this build reads {MODEL_VERSION})"
            )));
        }
        let mut body = String::new();
        r.read_to_string(&mut body)?;
        let mut p: TrainedPipeline = serde_json::from_str(&body)
            .map_err(|e| Error::ModelFormat(format!("malformed body: {e}")))?;
        p.validate()?;
        p.rebuild();
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::ModelFormat(msg.into()));
        if self.stopwords.digest() != self.stopword_digest {
            return bad("stopword digest does not match the stored list");
        }
        if self.varieties.is_empty() {
            return bad("no varieties");
        }
        let v = self.varieties.len();
        let dim = match &self.pca {
            Some(pca) => {
                pca.validate()?;
                if pca.input_dim() != self.vocabulary.len() {
                    return bad("PCA input width differs from the vocabulary size");
                }
                pca.n_components()
            }
            None => 0,
        };
        let (classes, width) = match &self.classifier {
            ClassifierModel::Bm25(m) => {
                m.validate()?;
                if self.pca.is_some() || m.n_words() != self.vocabulary.len() {
                    return bad("BM25 model does not match the vocabulary");
                }
                (m.n_varieties(), dim)
            }
            ClassifierModel::Knn(m) => {
                m.validate()?;
                (m.index().n_varieties(), m.index().dim())
            }
            ClassifierModel::Fknn(m) => {
                m.validate()?;
                (m.knn().index().n_varieties(), m.knn().index().dim())
            }
            ClassifierModel::Gbt(m) => {
                m.validate()?;
                (m.n_classes(), m.n_features())
            }
            ClassifierModel::Mlp(m) => {
                m.validate()?;
                (m.n_classes(), m.input_dim())
            }
        };
        if classes != v {
            return bad("classifier variety count differs from the stored variety names");
        }
        if width != dim {
            return bad("classifier input width differs from the PCA component count");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_catalog, SynthConfig};

    fn small_catalog() -> Catalog {
        synth_catalog(&SynthConfig {
            varieties: 4,
            products_per_variety: 15,
            noise_vocab: 30,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn cfg(kind: ClassifierKind) -> RunConfig {
        let mut c = RunConfig {
            classifier: kind,
            pca_components: 8,
            ..RunConfig::default()
        };
        c.fknn.k = 3;
        c.gbt.rounds = 5;
        c.mlp.nodes_per_layer = 8;
        c.mlp.epochs = 5;
        c
    }

    #[test]
    fn every_classifier_round_trips() {
        let cat = small_catalog();
        for kind in ClassifierKind::ALL {
            let trained = train(&cfg(kind), &cat).unwrap();
            let mut buf = Vec::new();
            trained.pipeline.write_to(&mut buf).unwrap();
            let back = TrainedPipeline::read_from(buf.as_slice()).unwrap();
            let a = trained.pipeline.predict_products(cat.products()).unwrap();
            let b = back.predict_products(cat.products()).unwrap();
            assert_eq!(a, b, "{kind}");
            let mut again = Vec::new();
            back.write_to(&mut again).unwrap();
            assert_eq!(buf, again, "{kind}");
        }
    }

    #[test]
    fn batch_and_single_predictions_agree() {
        let cat = small_catalog();
        for kind in ClassifierKind::ALL {
            let p = train(&cfg(kind), &cat).unwrap().pipeline;
            let batch = p.predict_products(&cat.products()[..10]).unwrap();
            for (prod, b) in cat.products()[..10].iter().zip(&batch) {
                let single = p.predict_product(prod).unwrap();
                assert_eq!(single.ranking.first(), b.ranking.first(), "{kind}");
            }
        }
    }

    #[test]
    fn unknown_words_give_flagged_uniform_ranking() {
        let cat = small_catalog();
        let p = train(&cfg(ClassifierKind::Knn), &cat).unwrap().pipeline;
        let pred = p.predict_text("").unwrap();
        assert!(pred.no_known_words);
        let ids: Vec<usize> = pred.ranking.entries().iter().map(|e| e.variety).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        let batch = p.predict_word_lists(&[WordList::default()]).unwrap();
        assert!(batch[0].no_known_words);
    }

    #[test]
    fn too_many_components_is_a_config_error() {
        let cat = small_catalog();
        let err = train(&RunConfig { pca_components: 10_000, ..cfg(ClassifierKind::Knn) }, &cat).unwrap_err();
        assert_eq!(err.class(), crate::ErrorClass::Config);
    }

    #[test]
    fn corrupted_files_rejected() {
        let cat = small_catalog();
        let p = train(&cfg(ClassifierKind::Bm25), &cat).unwrap().pipeline;
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(TrainedPipeline::read_from(text.replacen(MODEL_MAGIC, "OTHER", 1).as_bytes()).is_err());
        assert!(TrainedPipeline::read_from(text.replacen("version 1", "version 9", 1).as_bytes()).is_err());
        assert!(TrainedPipeline::read_from(&text.as_bytes()[..text.len() / 2]).is_err());
        let tampered = text.replacen(&p.stopword_digest, &"0".repeat(64), 1);
        assert!(TrainedPipeline::read_from(tampered.as_bytes()).is_err());
    }
}
