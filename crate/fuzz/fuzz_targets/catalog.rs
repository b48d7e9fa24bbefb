#![no_main]
use libfuzzer_sys::fuzz_target;
use shelfcat::catalog::{parse_catalog, read_products, write_products, CatalogFormat};

fuzz_target!(|data: &[u8]| {
    let fmt = CatalogFormat::default();
    let _ = read_products(data, &fmt, false);
    if let Ok(catalog) = parse_catalog(data, &fmt) {
        // whatever parsed must survive a write and a re-read unchanged
        let mut out = Vec::new();
        write_products(&mut out, catalog.products(), &fmt).unwrap();
        let again = parse_catalog(&out, &fmt).unwrap();
        assert_eq!(again.products(), catalog.products());
    }
});
