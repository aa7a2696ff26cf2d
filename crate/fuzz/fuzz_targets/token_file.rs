#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = catds::corpusio::parse_token_file(text, None) {
            let again = catds::corpusio::render_token_file(&m);
            assert_eq!(catds::corpusio::parse_token_file(&again, None).expect("rendered tokens parse"), m);
        }
    }
});
