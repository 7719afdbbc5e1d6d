#![no_main]

use libfuzzer_sys::fuzz_target;
use wandcal_cli::io::{parse_results, to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(results) = parse_results(text, "fuzz") else { return };
    let again = parse_results(&to_json(&results), "fuzz").expect("re-read of valid results");
    assert_eq!(again, results);
});
