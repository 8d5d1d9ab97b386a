#![no_main]
use dmnls::grid::{FieldCsv, Grid};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(csv) = FieldCsv::parse(text) {
        if csv.n <= 1 << 12 {
            if let Ok(grid) = Grid::new(csv.n, csv.length) {
                let _ = csv.into_field(&grid);
            }
        }
    }
});
