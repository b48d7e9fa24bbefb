#![no_main]
use libfuzzer_sys::fuzz_target;
use shelfcat::textprep::StopwordSet;

fuzz_target!(|text: &str| {
    if let Ok(set) = StopwordSet::parse(text) {
        for w in set.iter() {
            assert!(!w.is_empty());
            assert_eq!(w, w.to_lowercase());
        }
        let listed: String = set.iter().map(|w| format!("{w}\n")).collect();
        assert_eq!(StopwordSet::parse(&listed).unwrap().digest(), set.digest());
    }
});
