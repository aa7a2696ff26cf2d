#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = catds::subword::TokenizerModel::from_json(text) {
            let again = m.to_json();
            assert_eq!(catds::subword::TokenizerModel::from_json(&again).expect("rendered tokenizer parses"), m);
        }
    }
});
