#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = catds::corpusio::parse_freq_vector(text) {
            let again = catds::corpusio::render_freq_vector(&m);
            assert_eq!(catds::corpusio::parse_freq_vector(&again).expect("rendered vector parses"), m);
        }
    }
});
