#![no_main]
use dmnls::output::ThetaCsv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(th) = ThetaCsv::parse(text) {
            assert_eq!(th.theta.len(), th.n);
        }
    }
});
