//! Replays the checked-in fuzz seeds through the fuzz targets' assertions.

use std::fs;
use std::path::PathBuf;

use shelfcat::catalog::{parse_catalog, read_products, write_products, CatalogFormat};
use shelfcat::config::RunConfig;
use shelfcat::pipeline::TrainedPipeline;
use shelfcat::textprep::{Preprocessor, StopwordSet};
use shelfcat::vectorize::parse_dump;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn catalog_seeds() {
    let fmt = CatalogFormat::default();
    let mut parsed = 0;
    for (name, data) in seeds("catalog") {
        let _ = read_products(data.as_slice(), &fmt, false);
        if let Ok(c) = parse_catalog(&data, &fmt) {
            let mut out = Vec::new();
            write_products(&mut out, c.products(), &fmt).unwrap();
            assert_eq!(parse_catalog(&out, &fmt).unwrap().products(), c.products(), "{name}");
            parsed += 1;
        }
    }
    assert!(parsed >= 2);
}

#[test]
fn stopword_seeds() {
    for (name, data) in seeds("stopwords") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(set) = StopwordSet::parse(text) {
            assert!(set.iter().all(|w| !w.is_empty() && w == w.to_lowercase()), "{name}");
            let listed: String = set.iter().map(|w| format!("{w}\n")).collect();
            assert_eq!(StopwordSet::parse(&listed).unwrap().digest(), set.digest(), "{name}");
        }
    }
}

#[test]
fn config_seeds() {
    let mut parsed = 0;
    for (name, data) in seeds("run_config") {
        if let Ok(cfg) = RunConfig::from_toml(std::str::from_utf8(&data).unwrap()) {
            assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg, "{name}");
            parsed += 1;
        }
    }
    assert!(parsed >= 2);
}

#[test]
fn model_seeds() {
    for (name, data) in seeds("model_file") {
        let model = TrainedPipeline::read_from(data.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        model.predict_text("leche entera 1l").unwrap();
        let mut first = Vec::new();
        model.write_to(&mut first).unwrap();
        assert_eq!(first, data, "{name}: re-save differs");
    }
}

#[test]
fn dump_seeds() {
    for (_, data) in seeds("matrix_dump") {
        if let Ok(d) = parse_dump(std::str::from_utf8(&data).unwrap()) {
            assert!(d.entries.iter().all(|&(r, c, v)| r < d.rows && c < d.cols && v > 0));
        }
    }
}

#[test]
fn preprocess_seeds() {
    for fold in [false, true] {
        let pre = Preprocessor::new(&StopwordSet::bundled(), fold);
        for (name, data) in seeds("preprocess") {
            let words = pre.process(&String::from_utf8_lossy(&data));
            assert_eq!(pre.process(&words.join()).words(), words.words(), "{name}");
        }
    }
}
