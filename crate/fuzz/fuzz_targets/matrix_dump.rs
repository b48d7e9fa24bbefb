#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(d) = shelfcat::vectorize::parse_dump(text) {
        assert!(d.entries.windows(2).all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
        assert!(d.entries.iter().all(|&(r, c, v)| r < d.rows && c < d.cols && v > 0));
    }
});
