#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = catds::corpusio::parse_manifest(text) {
            let again = m.to_jsonl();
            assert_eq!(catds::corpusio::parse_manifest(&again).expect("rendered manifest parses"), m);
        }
    }
});
