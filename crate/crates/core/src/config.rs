//! Run configuration, read from TOML.
//!
//! Top-level keys select the classifier and the shared pipeline options;
//! each classifier's hyperparameters live in its own table:
//!
//! ```toml
//! classifier = "fknn"
//! pca_components = 600
//!
//! [fknn]
//! k = 13
//! metric = "spearman"
//! ```
//!
//! Unknown keys are rejected so that typos surface before any work is done.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boosted::GbtConfig;
use crate::catalog::CatalogFormat;
use crate::error::{Error, Result};
use crate::evaluate::{Averaging, TopkRule};
use crate::mlp::MlpConfig;
use crate::neighbors::MetricKind;
use crate::reduce::DEFAULT_COMPONENTS;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Bm25,
    Knn,
    Fknn,
    Gbt,
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::Bm25,
        ClassifierKind::Knn,
        ClassifierKind::Fknn,
        ClassifierKind::Gbt,
        ClassifierKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Bm25 => "bm25",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Fknn => "fknn",
            ClassifierKind::Gbt => "gbt",
            ClassifierKind::Mlp => "mlp",
        }
    }

    /// Whether the classifier works on PCA-reduced vectors.
    pub fn uses_pca(self) -> bool {
        self != ClassifierKind::Bm25
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown classifier {s:?}; expected one of bm25, knn, fknn, gbt, mlp"
                ))
            })
    }
}

/// Which products contribute words to the vocabulary during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabScope {
    /// Training rows only; test words unseen in training are dropped.
    #[default]
    Train,
    /// Every row of the catalog, before splitting.
    All,
}

impl FromStr for VocabScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(VocabScope::Train),
            "all" => Ok(VocabScope::All),
            _ => Err(Error::Config(format!(
                "unknown vocabulary scope {s:?}; expected train or all"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Config {
    pub k: f64,
    pub b: f64,
}

impl Default for Bm25Config {
    fn default() -> Self {
        Self {
            k: crate::bm25::DEFAULT_K,
            b: crate::bm25::DEFAULT_B,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    pub metric: MetricKind,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 1,
            metric: MetricKind::Spearman,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Crisp,
    #[default]
    Keller,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FknnConfig {
    pub k: usize,
    pub metric: MetricKind,
    pub fuzzifier: f64,
    pub init: InitMode,
    /// Neighbors counted by Keller initialisation; defaults to `k`.
    pub init_neighbors: Option<usize>,
}

impl Default for FknnConfig {
    fn default() -> Self {
        Self {
            k: 13,
            metric: MetricKind::Spearman,
            fuzzifier: 2.0,
            init: InitMode::Keller,
            init_neighbors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub ks: Vec<usize>,
    pub metrics: Vec<MetricKind>,
    pub mlp_nodes: Vec<usize>,
    pub mlp_epochs: Vec<usize>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        let knn = crate::tuning::KnnGrid::default();
        let mlp = crate::tuning::MlpGrid::default();
        Self {
            ks: knn.ks,
            metrics: knn.metrics,
            mlp_nodes: mlp.nodes,
            mlp_epochs: mlp.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub classifier: ClassifierKind,
    pub pca_components: usize,
    /// Component counts compared by `evaluate`.
    pub pca_sweep: Vec<usize>,
    pub vocab_scope: VocabScope,
    pub split_ratio: f64,
    pub split_seed: u64,
    /// Stopword file; the bundled Spanish and English lists when absent.
    pub stopwords: Option<PathBuf>,
    pub fold_accents: bool,
    pub averaging: Averaging,
    pub topk_rule: TopkRule,
    pub catalog: CatalogFormat,
    pub bm25: Bm25Config,
    pub knn: KnnConfig,
    pub fknn: FknnConfig,
    pub gbt: GbtConfig,
    pub mlp: MlpConfig,
    pub tune: TuneConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierKind::Bm25,
            pca_components: DEFAULT_COMPONENTS,
            pca_sweep: vec![400, 500, 600, 700, 800],
            vocab_scope: VocabScope::Train,
            split_ratio: 0.9,
            split_seed: 0,
            stopwords: None,
            fold_accents: false,
            averaging: Averaging::Macro,
            topk_rule: TopkRule::Collapse,
            catalog: CatalogFormat::default(),
            bm25: Bm25Config::default(),
            knn: KnnConfig::default(),
            fknn: FknnConfig::default(),
            gbt: GbtConfig::default(),
            mlp: MlpConfig::default(),
            tune: TuneConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.pca_components == 0 {
            return bad("pca_components must be >= 1".into());
        }
        if self.pca_sweep.contains(&0) {
            return bad("pca_sweep entries must be >= 1".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} must lie in (0, 1)", self.split_ratio));
        }
        if !(self.bm25.k.is_finite() && self.bm25.k >= 0.0) || !(0.0..=1.0).contains(&self.bm25.b) {
            return bad("bm25: k must be finite and >= 0, b must lie in [0, 1]".into());
        }
        if self.knn.k == 0 {
            return bad("knn: k must be >= 1".into());
        }
        if self.fknn.k == 0 {
            return bad("fknn: k must be >= 1".into());
        }
        if !(self.fknn.fuzzifier > 1.0 && self.fknn.fuzzifier.is_finite()) {
            return bad("fknn: fuzzifier must be finite and > 1".into());
        }
        if self.fknn.init_neighbors == Some(0) {
            return bad("fknn: init_neighbors must be >= 1".into());
        }
        if self.tune.ks.is_empty() || self.tune.ks.contains(&0) {
            return bad("tune: ks must be non-empty and >= 1".into());
        }
        if self.tune.metrics.is_empty() {
            return bad("tune: metrics must be non-empty".into());
        }
        if self.tune.mlp_nodes.is_empty() || self.tune.mlp_nodes.contains(&0) {
            return bad("tune: mlp_nodes must be non-empty and >= 1".into());
        }
        if self.tune.mlp_epochs.is_empty() || self.tune.mlp_epochs.contains(&0) {
            return bad("tune: mlp_epochs must be non-empty and >= 1".into());
        }
        let as_config = |e: Error| Error::Config(e.to_string());
        self.gbt.validate().map_err(as_config)?;
        self.mlp.validate().map_err(as_config)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml(
            r#"
            classifier = "fknn"
            pca_components = 40
            vocab_scope = "all"

            [fknn]
            k = 5
            metric = "cosine"
            init = "crisp"

            [gbt]
            rounds = 10

            [catalog]
            delimiter = ";"
            name = "nombre"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.classifier, ClassifierKind::Fknn);
        assert_eq!(cfg.fknn.metric, MetricKind::Cosine);
        assert_eq!(cfg.fknn.init, InitMode::Crisp);
        assert_eq!(cfg.gbt.rounds, 10);
        assert_eq!(cfg.gbt.max_depth, 6);
        assert_eq!(cfg.catalog.delimiter, ';');
        assert_eq!(cfg.vocab_scope, VocabScope::All);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig {
            classifier: ClassifierKind::Mlp,
            stopwords: Some("words.txt".into()),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn schema_violations_are_config_errors() {
        for bad in [
            "classifier = \"svm\"",
            "unknown = 1",
            "[knn]\nk = 0",
            "[knn]\nmetric = \"manhattan\"",
            "[fknn]\nfuzzifier = 1.0",
            "[gbt]\nrounds = 0",
            "[mlp]\nlearning_rate = -1.0",
            "split_ratio = 1.5",
            "[knn]\nneighbours = 3",
            "pca_components = \"many\"",
        ] {
            let err = RunConfig::from_toml(bad).unwrap_err();
            assert_eq!(err.class(), crate::ErrorClass::Config, "{bad}: {err}");
        }
    }

    #[test]
    fn names_parse() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.name().parse::<ClassifierKind>().unwrap(), k);
        }
        assert!("BM25".parse::<ClassifierKind>().is_err());
        assert_eq!("all".parse::<VocabScope>().unwrap(), VocabScope::All);
    }
}
