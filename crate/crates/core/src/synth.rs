//! Seeded synthetic catalogs for tests and demonstrations.
//!
//! Every variety owns a signature of pseudo-words. A product draws a few
//! signature words (always at least one the variety does not share) plus
//! words from a common noise pool. With `overlap > 0` each signature also
//! borrows that fraction of its words from the next variety's signature.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Product};
use crate::error::{Error, Result};
use crate::textprep::StopwordSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub varieties: usize,
    pub words_per_signature: usize,
    pub noise_vocab: usize,
    pub products_per_variety: usize,
    /// Fraction of each signature shared with the next variety, in `[0, 1)`.
    pub overlap: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            varieties: 20,
            words_per_signature: 8,
            noise_vocab: 200,
            products_per_variety: 100,
            overlap: 0.0,
            seed: 0,
        }
    }
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvxyzq";
const VOWELS: &[u8] = b"aeiou";

/// Three consonant-vowel syllables spelling `i` in base 100.
fn pseudo_word(mut i: usize) -> String {
    let mut s = String::with_capacity(6);
    for _ in 0..3 {
        let syl = i % 100;
        i /= 100;
        s.push(CONSONANTS[syl / 5] as char);
        s.push(VOWELS[syl % 5] as char);
    }
    s
}

struct Words {
    next: usize,
    stop: StopwordSet,
}

impl Words {
    fn take(&mut self) -> String {
        loop {
            let w = pseudo_word(self.next);
            self.next += 1;
            if !self.stop.contains(&w) {
                return w;
            }
        }
    }
}

pub fn synth_catalog(cfg: &SynthConfig) -> Result<Catalog> {
    if cfg.varieties < 2 {
        return Err(Error::InvalidParameter("synth: need at least 2 varieties".into()));
    }
    if cfg.words_per_signature == 0 || cfg.products_per_variety == 0 {
        return Err(Error::InvalidParameter(
            "synth: words_per_signature and products_per_variety must be >= 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::InvalidParameter(format!(
            "synth: overlap {} must lie in [0, 1)",
            cfg.overlap
        )));
    }
    let total = (cfg.varieties * cfg.words_per_signature + cfg.noise_vocab) as f64;
    if total > 900_000.0 {
        return Err(Error::InvalidParameter("synth: vocabulary too large".into()));
    }

    let mut words = Words {
        next: 0,
        stop: StopwordSet::bundled(),
    };
    let own: Vec<Vec<String>> = (0..cfg.varieties)
        .map(|_| (0..cfg.words_per_signature).map(|_| words.take()).collect())
        .collect();
    let noise: Vec<String> = (0..cfg.noise_vocab).map(|_| words.take()).collect();
    let shared = ((cfg.overlap * cfg.words_per_signature as f64).round() as usize)
        .min(cfg.words_per_signature - 1);
    // signature v = own[v] ++ own[v+1][..shared]; own[v][shared..] stays unique to v
    let width = cfg.varieties.to_string().len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut products = Vec::with_capacity(cfg.varieties * cfg.products_per_variety);
    for v in 0..cfg.varieties {
        let unique = &own[v][shared..];
        let borrowed = &own[(v + 1) % cfg.varieties][..shared];
        let signature: Vec<&String> = own[v].iter().chain(borrowed).collect();
        for j in 0..cfg.products_per_variety {
            let anchor = unique.choose(&mut rng).expect("non-empty");
            let extra = rng.random_range(1..=3usize).min(signature.len());
            let mut sig: Vec<&String> = signature.choose_multiple(&mut rng, extra).copied().collect();
            if !sig.contains(&anchor) {
                sig.push(anchor);
            }
            sig.shuffle(&mut rng);
            let n_noise = rng.random_range(2..=5usize).min(noise.len());
            let noisy: Vec<&String> = noise.choose_multiple(&mut rng, n_noise).collect();
            let split = rng.random_range(0..=sig.len().min(2));
            let name = sig[..sig.len() - split]
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let legal_name = sig[sig.len() - split..]
                .iter()
                .chain(noisy.iter().take(1))
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let ingredients = noisy
                .iter()
                .skip(1)
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ");
            products.push(Product {
                ean: format!("84{:011}", v * cfg.products_per_variety + j),
                category: format!("category-{:0width$}", v / 5),
                subcategory: format!("subcategory-{:0width$}", v / 2),
                variety: format!("variety-{v:0width$}"),
                brand: format!("brand-{}", rng.random_range(0..10u32)),
                name,
                legal_name,
                ingredients,
            });
        }
    }
    Catalog::new(products)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::Preprocessor;
    use std::collections::HashSet;

    #[test]
    fn sizes() {
        let c = synth_catalog(&SynthConfig::default()).unwrap();
        assert_eq!(c.len(), 2000);
        assert_eq!(c.n_varieties(), 20);
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig { products_per_variety: 10, ..SynthConfig::default() };
        assert_eq!(synth_catalog(&cfg).unwrap(), synth_catalog(&cfg).unwrap());
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(synth_catalog(&cfg).unwrap(), synth_catalog(&other).unwrap());
    }

    #[test]
    fn pseudo_words_are_distinct() {
        let all: HashSet<String> = (0..10_000).map(pseudo_word).collect();
        assert_eq!(all.len(), 10_000);
    }

    fn word_sets(cfg: &SynthConfig) -> (Catalog, Vec<HashSet<String>>) {
        let c = synth_catalog(cfg).unwrap();
        let pre = Preprocessor::new(&StopwordSet::bundled(), false);
        let sets = c
            .products()
            .iter()
            .map(|p| pre.process_product(p).iter().map(String::from).collect())
            .collect();
        (c, sets)
    }

    #[test]
    fn disjoint_signatures_give_unique_words() {
        let cfg = SynthConfig { varieties: 5, products_per_variety: 30, ..SynthConfig::default() };
        let (c, sets) = word_sets(&cfg);
        let labels = c.labels();
        for (i, s) in sets.iter().enumerate() {
            let unique = s.iter().any(|w| {
                sets.iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l != labels[i])
                    .all(|(o, _)| !o.contains(w))
            });
            assert!(unique, "product {i} has no variety-specific word");
        }
    }

    #[test]
    fn overlap_shares_words() {
        let cfg = SynthConfig { varieties: 3, overlap: 0.5, products_per_variety: 60, ..SynthConfig::default() };
        let (c, sets) = word_sets(&cfg);
        let labels = c.labels();
        let vocab = |v: usize| -> HashSet<String> {
            sets.iter().zip(&labels).filter(|(_, &l)| l == v).flat_map(|(s, _)| s.clone()).collect()
        };
        let noise: HashSet<String> = (3 * 8..3 * 8 + 200).map(pseudo_word).collect();
        let a: HashSet<String> = vocab(0).difference(&noise).cloned().collect();
        let b: HashSet<String> = vocab(1).difference(&noise).cloned().collect();
        assert!(!a.is_disjoint(&b));
    }

    #[test]
    fn invalid_configs() {
        assert!(synth_catalog(&SynthConfig { varieties: 1, ..SynthConfig::default() }).is_err());
        assert!(synth_catalog(&SynthConfig { overlap: 1.0, ..SynthConfig::default() }).is_err());
        assert!(synth_catalog(&SynthConfig { products_per_variety: 0, ..SynthConfig::default() }).is_err());
    }
}
