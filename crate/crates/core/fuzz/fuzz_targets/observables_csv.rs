#![no_main]
use dmnls::observables::{observables_to_csv, parse_observables_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_observables_csv(text) {
        let again = parse_observables_csv(&observables_to_csv(&records)).unwrap();
        assert_eq!(again.len(), records.len());
    }
});
