#![no_main]

use libfuzzer_sys::fuzz_target;
use wandcal_lp::mps::{read_mps, write_mps};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(problem) = read_mps(text) else { return };
    let again = read_mps(&write_mps(&problem, "FUZZ")).expect("re-read of written MPS");
    assert_eq!(again, problem);
});
