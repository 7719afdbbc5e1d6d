#![no_main]

use libfuzzer_sys::fuzz_target;
use wandcal_cli::io::{parse_dataset, to_json, DatasetFile};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(dataset) = parse_dataset(text, "fuzz") else { return };
    // Anything accepted must survive a write-read cycle unchanged.
    let file = DatasetFile::from_dataset(&dataset);
    let again = parse_dataset(&to_json(&file), "fuzz").expect("re-read of a valid dataset");
    assert_eq!(again, dataset);
});
