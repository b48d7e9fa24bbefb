#![no_main]
use libfuzzer_sys::fuzz_target;
use shelfcat::textprep::{Preprocessor, StopwordSet};

fuzz_target!(|input: (bool, &str)| {
    let (fold, text) = input;
    let pre = Preprocessor::new(&StopwordSet::bundled(), fold);
    let words = pre.process(text);
    for (i, w) in words.words().iter().enumerate() {
        assert!(!w.is_empty());
        assert!(!w.chars().any(char::is_whitespace));
        assert!(!words.words()[..i].contains(w));
    }
    assert_eq!(pre.process(&words.join()).words(), words.words());
});
