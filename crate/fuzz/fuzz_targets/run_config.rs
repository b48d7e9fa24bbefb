#![no_main]
use libfuzzer_sys::fuzz_target;
use shelfcat::config::RunConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = RunConfig::from_toml(text) {
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
});
