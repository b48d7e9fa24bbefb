#![no_main]
use libfuzzer_sys::fuzz_target;
use shelfcat::pipeline::TrainedPipeline;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = TrainedPipeline::read_from(data) else {
        return;
    };
    let _ = model.predict_text("leche entera 1l");
    let mut first = Vec::new();
    model.write_to(&mut first).unwrap();
    let mut second = Vec::new();
    TrainedPipeline::read_from(first.as_slice()).unwrap().write_to(&mut second).unwrap();
    assert_eq!(first, second);
});
