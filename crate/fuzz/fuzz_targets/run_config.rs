#![no_main]

use libfuzzer_sys::fuzz_target;
use wandcal_cli::io::{parse_config, to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = parse_config(text, "fuzz") else { return };
    let again = parse_config(&to_json(&cfg), "fuzz").expect("re-read of a valid config");
    assert_eq!(again, cfg);
});
